//! Result files and CSV exports.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bcd::{SolveOptions, SolveResult};
use crate::error::Result;
use crate::model::Trajectory;

/// Default stride of the exported trajectory.
pub const TRAJECTORY_STRIDE: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub scenario_hash: String,
    pub seed: Option<u64>,
    pub options: SolveOptions,
    pub result: SolveResult,
}

impl ResultFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Serialize)]
struct WaypointRow {
    index: usize,
    x: f64,
    y: f64,
}

/// Writes `q[0], q[stride], ...` and always the last waypoint.
pub fn write_trajectory_csv(path: &Path, trajectory: &Trajectory, stride: usize) -> Result<()> {
    let stride = stride.max(1);
    let points = trajectory.points();
    let mut w = csv::Writer::from_path(path)?;
    let last = points.len() - 1;
    for (i, p) in points.iter().enumerate() {
        if i % stride == 0 || i == last {
            w.serialize(WaypointRow { index: i, x: p.x, y: p.y })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct RoundRow {
    round: usize,
    delta: f64,
    scheduled: usize,
    upload_time: f64,
}

/// Per-round slot length, number of scheduled devices and total upload time.
pub fn write_rounds_csv(path: &Path, result: &SolveResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (n, d) in result.delta.iter().enumerate() {
        w.serialize(RoundRow {
            round: n + 1,
            delta: *d,
            scheduled: result.schedule.column(n).iter().filter(|&&a| a).count(),
            upload_time: result.tau.column(n).sum(),
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct HistoryRow {
    iteration: usize,
    completion_time: f64,
}

pub fn write_history_csv(path: &Path, history: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (i, t) in history.iter().enumerate() {
        w.serialize(HistoryRow {
            iteration: i,
            completion_time: *t,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Writes any serializable rows as CSV.
pub fn write_rows_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Vec2;

    #[test]
    fn trajectory_is_sampled_with_last_point() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.csv");
        let q = Trajectory((0..=12).map(|i| Vec2::new(i as f64, 0.0)).collect());
        write_trajectory_csv(&path, &q, TRAJECTORY_STRIDE).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let idx: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(idx, ["0", "5", "10", "12"]);
    }
}

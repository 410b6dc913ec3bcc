//! Comparison schemes built from the same models and sub-solvers: a UAV
//! hovering at its launch point with optimized or greedy high-gain
//! scheduling, and full participation with trajectory design.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::bcd::{finish, require_feasible, run_bcd, solve, Block, SolveOptions, SolveResult};
use crate::error::{Error, Result};
use crate::model::{Scenario, Trajectory};
use crate::sched::{allocate_times, solve_with_data, static_gains, SubproblemData, WarmStart};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeId {
    Joint,
    StaticUav,
    StaticUavHs,
    FullScheduling,
}

impl SchemeId {
    pub const ALL: [SchemeId; 4] = [
        SchemeId::Joint,
        SchemeId::StaticUav,
        SchemeId::StaticUavHs,
        SchemeId::FullScheduling,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeId::Joint => "joint",
            SchemeId::StaticUav => "static_uav",
            SchemeId::StaticUavHs => "static_uav_hs",
            SchemeId::FullScheduling => "full_scheduling",
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme '{s}'")))
    }
}

/// Runs the selected scheme.
pub fn run_scheme(scheme: SchemeId, scenario: &Scenario, opts: &SolveOptions) -> Result<SolveResult> {
    match scheme {
        SchemeId::Joint => solve(scenario, opts),
        SchemeId::StaticUav => run_static_uav(scenario, opts),
        SchemeId::StaticUavHs => run_static_uav_hs(scenario, opts),
        SchemeId::FullScheduling => run_full_scheduling(scenario, opts),
    }
}

/// Greedy high-gain schedule at the launch point: whole devices are added in
/// order of decreasing channel gain (ties to the lower index) until the
/// accuracy constraint first holds. `None` when even every device in every
/// round falls short.
pub fn hs_schedule(scenario: &Scenario) -> Option<Array2<bool>> {
    let k = scenario.num_devices();
    let n = scenario.rounds();
    let c = crate::convergence::accuracy_constant_c(&scenario.fl, &scenario.devices);
    let gains = static_gains(scenario);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]).then(a.cmp(&b)));
    let mut schedule = Array2::from_elem((k, n), false);
    let mut weight = 0.0;
    for dev in order {
        if weight >= c {
            break;
        }
        schedule.row_mut(dev).fill(true);
        weight += n as f64 * (scenario.devices[dev].dataset_size as f64).powi(2);
    }
    (weight >= c).then_some(schedule)
}

/// Block-1 solve at the launch point, shared with the first step of the
/// joint design.
pub(crate) fn static_block(scenario: &Scenario, data: &SubproblemData, opts: &SolveOptions) -> Result<Block> {
    let warm = WarmStart {
        dual: None,
        schedules: hs_schedule(scenario).into_iter().collect(),
    };
    let out = solve_with_data(data, &opts.sched, Some(&warm))?;
    Ok(Block {
        schedule: out.schedule,
        tau: out.tau,
        delta: out.delta,
        dual: Some(out.dual),
    })
}

/// The UAV hovers at its launch point; scheduling and uploads are optimized.
pub fn run_static_uav(scenario: &Scenario, opts: &SolveOptions) -> Result<SolveResult> {
    let feasibility = require_feasible(scenario)?;
    let q = Trajectory::hold(scenario.uav.initial_position, scenario.rounds());
    let block = static_block(scenario, &SubproblemData::new(scenario, &q)?, opts)?;
    let history = vec![block.delta.iter().sum()];
    finish(scenario, SchemeId::StaticUav, block, q, history, feasibility, true, 0)
}

/// The UAV hovers at its launch point and the highest-gain devices are
/// always scheduled; only the upload times are optimized.
pub fn run_static_uav_hs(scenario: &Scenario, _opts: &SolveOptions) -> Result<SolveResult> {
    let feasibility = require_feasible(scenario)?;
    let schedule = hs_schedule(scenario).ok_or_else(|| {
        Error::infeasible("accuracy target unreachable even with every device scheduled")
    })?;
    let q = Trajectory::hold(scenario.uav.initial_position, scenario.rounds());
    let alloc = allocate_times(&SubproblemData::new(scenario, &q)?, &schedule)?;
    let block = Block {
        schedule,
        tau: alloc.tau,
        delta: alloc.delta,
        dual: None,
    };
    let history = vec![block.delta.iter().sum()];
    finish(scenario, SchemeId::StaticUavHs, block, q, history, feasibility, true, 0)
}

/// Every device uploads in every round; uploads, slot lengths and the
/// trajectory are optimized.
pub fn run_full_scheduling(scenario: &Scenario, opts: &SolveOptions) -> Result<SolveResult> {
    let all = Array2::from_elem((scenario.num_devices(), scenario.rounds()), true);
    run_bcd(scenario, opts, SchemeId::FullScheduling, |data, _| {
        let alloc = allocate_times(data, &all)?;
        Ok(Block {
            schedule: all.clone(),
            tau: alloc.tau,
            delta: alloc.delta,
            dual: None,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::model::FlSpec;

    fn scenario(eps: f64) -> Scenario {
        Scenario {
            // Equal distances from the launch point (200, 0): equal gains.
            devices: vec![device(100.0, 0.0, 100), device(300.0, 0.0, 100), device(200.0, 100.0, 100)],
            uav: uav(),
            channel: channel(),
            fl: FlSpec {
                rounds: 4,
                learn_rate: 0.2,
                accuracy_target: eps,
                grad_bound: 0.05,
                initial_loss: 1.0,
                loss_floor: 0.0,
            },
        }
    }

    #[test]
    fn scheme_names_round_trip() {
        for id in SchemeId::ALL {
            assert_eq!(id.as_str().parse::<SchemeId>().unwrap(), id);
        }
        assert!("nope".parse::<SchemeId>().is_err());
    }

    #[test]
    fn hs_ties_go_to_lower_index() {
        // C = 3e4 here, less than one device row (4e4).
        let mut s = scenario(0.0);
        let gap = crate::convergence::initial_gap_term(&s.fl);
        s.fl.accuracy_target = gap + 0.15;
        let c = crate::convergence::accuracy_constant_c(&s.fl, &s.devices);
        assert!(c > 0.0 && c <= 4.0 * 1e4);
        let a = hs_schedule(&s).unwrap();
        assert!(a.row(0).iter().all(|&x| x));
        assert!(a.row(1).iter().all(|&x| !x));
        assert!(a.row(2).iter().all(|&x| !x));
    }

    #[test]
    fn hs_empty_when_target_is_loose() {
        let s = scenario(100.0);
        let a = hs_schedule(&s).unwrap();
        assert!(a.iter().all(|&x| !x));
        let out = run_static_uav_hs(&s, &SolveOptions::default()).unwrap();
        assert_eq!(out.completion_time, 0.0);
    }

    #[test]
    fn static_trajectory_is_constant() {
        let mut s = scenario(0.0);
        s.fl.accuracy_target = crate::convergence::initial_gap_term(&s.fl) + 0.03;
        let out = run_static_uav(&s, &SolveOptions::default()).unwrap();
        assert!(out.trajectory.points().iter().all(|p| *p == s.uav.initial_position));
        let hs = run_static_uav_hs(&s, &SolveOptions::default()).unwrap();
        assert!(out.completion_time <= hs.completion_time);
    }
}

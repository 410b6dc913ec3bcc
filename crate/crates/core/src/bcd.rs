//! Outer block coordinate descent: alternate the scheduling/time solve at a
//! fixed trajectory with the trajectory solve at a fixed schedule, keeping
//! the completion time non-increasing.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::baselines::SchemeId;
use crate::convergence::{check_feasibility, convergence_bound, FeasibilityReport};
use crate::error::{Error, Result};
use crate::model::{Scenario, Trajectory};
use crate::sched::{
    allocate_times, DualState1, SchedOptions, SubproblemData, WarmStart,
};
use crate::trajectory::{solve_trajectory, TrajOptions};

/// History entries may exceed their predecessor by at most this fraction
/// before the run is aborted.
pub const MONOTONE_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub sched: SchedOptions,
    pub traj: TrajOptions,
    pub max_outer: usize,
    /// Stop once the fractional decrease of the completion time drops below
    /// this.
    pub rel_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            sched: SchedOptions::default(),
            traj: TrajOptions::default(),
            max_outer: 20,
            rel_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub scheme: SchemeId,
    /// `T = sum_n delta[n]`.
    pub completion_time: f64,
    pub schedule: Array2<bool>,
    pub tau: Array2<f64>,
    pub delta: Vec<f64>,
    pub trajectory: Trajectory,
    /// Completion time after the initial solve and after each outer step.
    pub history: Vec<f64>,
    pub feasibility: FeasibilityReport,
    /// Convergence bound of the returned schedule.
    pub bound: f64,
    pub energy_used: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// One block-1 solution: schedule, uploads, slot lengths and the multipliers
/// to warm-start the next solve with.
#[derive(Debug, Clone)]
pub(crate) struct Block {
    pub schedule: Array2<bool>,
    pub tau: Array2<f64>,
    pub delta: Vec<f64>,
    pub dual: Option<DualState1>,
}

impl Block {
    fn time(&self) -> f64 {
        self.delta.iter().sum()
    }
}

pub(crate) fn require_feasible(scenario: &Scenario) -> Result<FeasibilityReport> {
    scenario.validate()?;
    let report = check_feasibility(scenario);
    if !report.feasible {
        return Err(Error::Infeasible {
            reasons: report.reasons,
        });
    }
    Ok(report)
}

pub(crate) fn finish(
    scenario: &Scenario,
    scheme: SchemeId,
    block: Block,
    trajectory: Trajectory,
    history: Vec<f64>,
    feasibility: FeasibilityReport,
    converged: bool,
    iterations: usize,
) -> Result<SolveResult> {
    let data = SubproblemData::new(scenario, &trajectory)?;
    Ok(SolveResult {
        scheme,
        completion_time: block.time(),
        bound: convergence_bound(&scenario.fl, &scenario.devices, &block.schedule),
        energy_used: data.energy_used(&block.schedule, &block.tau),
        schedule: block.schedule,
        tau: block.tau,
        delta: block.delta,
        trajectory,
        history,
        feasibility,
        converged,
        iterations,
    })
}

/// Joint design: the scheduling, upload times, slot lengths and trajectory
/// are all optimized.
pub fn solve(scenario: &Scenario, opts: &SolveOptions) -> Result<SolveResult> {
    run_bcd(scenario, opts, SchemeId::Joint, |data, prev| match prev {
        None => crate::baselines::static_block(scenario, data, opts),
        Some(b) => {
            // Multipliers restart cold: the previous ones are tuned to the
            // old channel gains and slow the dual ascent down.
            let warm = WarmStart {
                dual: None,
                schedules: vec![b.schedule.clone()],
            };
            let out = crate::sched::solve_with_data(data, &opts.sched, Some(&warm))?;
            Ok(Block {
                schedule: out.schedule,
                tau: out.tau,
                delta: out.delta,
                dual: Some(out.dual),
            })
        }
    })
}

/// Alternating loop shared by the joint design and full scheduling.
/// `block1` solves the scheduling/time block at the trajectory in `data`,
/// optionally warm-started from the previous block.
pub(crate) fn run_bcd<F>(
    scenario: &Scenario,
    opts: &SolveOptions,
    scheme: SchemeId,
    mut block1: F,
) -> Result<SolveResult>
where
    F: FnMut(&SubproblemData, Option<&Block>) -> Result<Block>,
{
    let feasibility = require_feasible(scenario)?;
    let mut trajectory = Trajectory::hold(scenario.uav.initial_position, scenario.rounds());
    let mut block = block1(&SubproblemData::new(scenario, &trajectory)?, None)?;
    let mut history = vec![block.time()];
    let mut converged = false;
    let mut iterations = 0;

    for r in 1..=opts.max_outer {
        iterations = r;
        let traj = match solve_trajectory(
            scenario,
            &block.schedule,
            &block.tau,
            &block.delta,
            Some(&trajectory),
            &opts.traj,
        ) {
            Ok(t) => t,
            // No energy-feasible move found: the current point stands.
            Err(Error::TrajNonConvergence { .. }) => break,
            Err(e) => return Err(e),
        };
        let data = SubproblemData::new(scenario, &traj.points)?;
        let mut next = block1(&data, Some(&block))?;
        // The previous schedule stays feasible at the new trajectory; its
        // re-optimized uploads bound the step from above.
        if let Ok(alloc) = allocate_times(&data, &block.schedule) {
            if alloc.objective < next.time() {
                next = Block {
                    schedule: block.schedule.clone(),
                    tau: alloc.tau,
                    delta: alloc.delta,
                    dual: next.dual,
                };
            }
        }
        let previous = block.time();
        let current = next.time();
        if current > previous * (1.0 + MONOTONE_RTOL) {
            return Err(Error::MonotonicityViolation {
                iteration: r,
                previous,
                current,
            });
        }
        if current > previous {
            // Within round-off of the previous point: keep it and stop.
            history.push(previous);
            converged = true;
            break;
        }
        history.push(current);
        block = next;
        trajectory = traj.points;
        let decrease = if previous > 0.0 {
            (previous - current) / previous
        } else {
            0.0
        };
        if decrease < opts.rel_tol {
            converged = true;
            break;
        }
    }
    finish(
        scenario,
        scheme,
        block,
        trajectory,
        history,
        feasibility,
        converged,
        iterations,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::generate_scenario;

    #[test]
    fn zero_outer_iterations_is_the_static_solve() {
        let s = generate_scenario(3, 6, 0.005).unwrap().to_scenario().unwrap();
        let opts = SolveOptions {
            max_outer: 0,
            ..SolveOptions::default()
        };
        let out = solve(&s, &opts).unwrap();
        assert_eq!(out.history.len(), 1);
        assert_eq!(out.iterations, 0);
        assert_eq!(out.trajectory, Trajectory::hold(s.uav.initial_position, s.rounds()));
        let fixed = crate::baselines::run_static_uav(&s, &opts).unwrap();
        assert_eq!(fixed.completion_time, out.completion_time);
    }

    #[test]
    fn history_is_monotone() {
        let s = generate_scenario(5, 6, 0.005).unwrap().to_scenario().unwrap();
        let out = solve(&s, &SolveOptions::default()).unwrap();
        for w in out.history.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!((out.completion_time - out.delta.iter().sum::<f64>()).abs() <= 1e-9);
        assert_eq!(*out.history.last().unwrap(), out.completion_time);
    }

    #[test]
    fn infeasible_scenario_returns_report_reasons() {
        let mut s = generate_scenario(1, 4, 0.005).unwrap().to_scenario().unwrap();
        s.fl.accuracy_target = 1e-6;
        match solve(&s, &SolveOptions::default()) {
            Err(Error::Infeasible { reasons }) => assert!(!reasons.is_empty()),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }
}

//! Joint device scheduling and upload-time allocation for a fixed UAV
//! trajectory, solved through its Lagrange dual.
//!
//! Each dual iteration evaluates the closed-form primal minimizers
//! ([`tau_star`] through the Lambert W function, [`schedule_star`] by the sign
//! of the per-round Lagrangian cost, [`delta_dual`] from the movement time)
//! and then takes a projected subgradient step on the multipliers
//! ([`dual_update`]). The primal point is recovered from the final
//! multipliers, repaired where the binary rounding leaves a constraint
//! violated, and its upload times are re-optimized for the chosen schedule.

mod alloc;
mod recover;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

pub use alloc::{allocate_times, Allocation};

use crate::convergence::accuracy_constant_c;
use crate::error::{Error, Result};
use crate::model::{
    channel_gain, comp_energy, comp_time, min_comm_energy, round_comp_time, upload_energy,
    ChannelSpec, DeviceSpec, Scenario, Trajectory,
};
use crate::numerics::{lambert_w0, StepSchedule, INV_E};

/// Multipliers of the energy (`lambda`), per-slot time (`mu`) and accuracy
/// (`xi`) constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState1 {
    pub lambda: Vec<f64>,
    /// `K x N`; for every round the column sum stays in `[0, 1]`.
    pub mu: Array2<f64>,
    pub xi: f64,
}

impl DualState1 {
    /// `lambda_k = 1`, `mu_k[n] = 1/K`, `xi = 0`.
    pub fn initial(devices: usize, rounds: usize) -> Self {
        Self {
            lambda: vec![1.0; devices],
            mu: Array2::from_elem((devices, rounds), 1.0 / devices as f64),
            xi: 0.0,
        }
    }

    pub fn mu_sum(&self, round: usize) -> f64 {
        self.mu.column(round).sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `E_k - used_k` per device.
    pub energy_slack: Vec<f64>,
    /// `delta[n] - sum_k tau_k[n] - t_comp[n]` per round.
    pub slot_slack: Vec<f64>,
    /// `delta[n] - ||q[n] - q[n-1]|| / V_max` per round.
    pub movement_slack: Vec<f64>,
    /// `sum a D^2 - C`.
    pub accuracy_slack: f64,
    /// `max_k |lambda_k * energy_slack_k|` at the returned multipliers.
    pub complementary_slackness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualTraceRow {
    pub iteration: usize,
    pub dual_objective: f64,
    pub max_energy_residual: f64,
    pub accuracy_residual: f64,
    pub scheduled: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubSolution1 {
    pub schedule: Array2<bool>,
    pub tau: Array2<f64>,
    pub delta: Vec<f64>,
    pub dual: DualState1,
    pub primal_objective: f64,
    /// Best dual function value seen; a lower bound on the relaxed problem.
    pub dual_objective: f64,
    pub residuals: Residuals,
    pub iterations: usize,
    pub converged: bool,
    /// Iterations at which `lambda_k` hit the numerical floor.
    pub lambda_floor_hits: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<DualTraceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedOptions {
    pub max_iters: usize,
    /// Stop once the largest scaled multiplier change drops below this.
    pub tol: f64,
    /// Relative tolerance on each constraint family of the returned point.
    pub feas_tol: f64,
    pub step: StepSchedule,
    pub lambda_floor: f64,
    /// Local-search evaluations spent improving the recovered schedule.
    pub refine_budget: usize,
    /// Also stop once the recovered completion time is within this fraction
    /// of the best dual bound.
    pub gap_tol: f64,
    /// Iteration of the first primal recovery for the gap test; later checks
    /// follow at doubling intervals (0 disables it).
    pub check_every: usize,
    pub trace: bool,
}

impl Default for SchedOptions {
    fn default() -> Self {
        Self {
            max_iters: 20_000,
            tol: 1e-6,
            feas_tol: 1e-6,
            step: StepSchedule::diminishing(0.5),
            lambda_floor: 1e-12,
            refine_budget: 24,
            gap_tol: 1e-3,
            check_every: 100,
            trace: false,
        }
    }
}

/// Optional warm start for [`solve_sched_time`]: initial multipliers and
/// extra schedules tried alongside the one read off the final multipliers.
#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    pub dual: Option<DualState1>,
    pub schedules: Vec<Array2<bool>>,
}

/// Per-(device, round) model terms consumed by [`schedule_star`].
#[derive(Debug, Clone, Copy)]
pub struct RoundTerms {
    pub gain: f64,
    pub comp_time: f64,
    pub comp_energy: f64,
    pub data_sq: f64,
}

/// Problem data of the scheduling/time subproblem with the trajectory fixed.
#[derive(Debug, Clone)]
pub struct SubproblemData {
    pub gains: Array2<f64>,
    pub movement: Vec<f64>,
    pub comp_time: Vec<f64>,
    pub comp_energy: Vec<f64>,
    pub data_sq: Vec<f64>,
    pub budget: Vec<f64>,
    pub accuracy_c: f64,
    pub channel: ChannelSpec,
    pub devices: Vec<DeviceSpec>,
}

impl SubproblemData {
    pub fn new(scenario: &Scenario, trajectory: &Trajectory) -> Result<Self> {
        scenario.validate()?;
        if trajectory.rounds() != scenario.rounds() {
            return Err(Error::InvalidInput(format!(
                "trajectory has {} slots, scenario has {} rounds",
                trajectory.rounds(),
                scenario.rounds()
            )));
        }
        if trajectory.points()[0] != scenario.uav.initial_position {
            return Err(Error::InvalidInput(
                "trajectory must start at the UAV launch point".into(),
            ));
        }
        let devices = &scenario.devices;
        Ok(Self {
            gains: scenario.gains(trajectory),
            movement: scenario.movement_times(trajectory),
            comp_time: devices.iter().map(comp_time).collect(),
            comp_energy: devices.iter().map(|d| comp_energy(d, true)).collect(),
            data_sq: devices.iter().map(|d| (d.dataset_size as f64).powi(2)).collect(),
            budget: devices.iter().map(|d| d.energy_budget).collect(),
            accuracy_c: accuracy_constant_c(&scenario.fl, devices),
            channel: scenario.channel.clone(),
            devices: devices.clone(),
        })
    }

    pub fn num_devices(&self) -> usize {
        self.gains.nrows()
    }

    pub fn rounds(&self) -> usize {
        self.gains.ncols()
    }

    /// `s ln2 / B`: upload time at one nat per second per hertz.
    pub fn time_unit(&self) -> f64 {
        self.channel.model_bits * std::f64::consts::LN_2 / self.channel.bandwidth
    }

    pub fn terms(&self, k: usize, n: usize) -> RoundTerms {
        RoundTerms {
            gain: self.gains[[k, n]],
            comp_time: self.comp_time[k],
            comp_energy: self.comp_energy[k],
            data_sq: self.data_sq[k],
        }
    }

    /// Energy used by each device under `(schedule, tau)`.
    pub fn energy_used(&self, schedule: &Array2<bool>, tau: &Array2<f64>) -> Vec<f64> {
        (0..self.num_devices())
            .map(|k| {
                (0..self.rounds())
                    .filter(|&n| schedule[[k, n]])
                    .map(|n| {
                        let t = tau[[k, n]];
                        let comm = if t > 0.0 {
                            upload_energy(t, self.gains[[k, n]], &self.channel)
                        } else {
                            0.0
                        };
                        comm + self.comp_energy[k]
                    })
                    .sum()
            })
            .collect()
    }

    fn scheduled_weight(&self, schedule: &Array2<bool>) -> f64 {
        schedule
            .rows()
            .into_iter()
            .zip(&self.data_sq)
            .map(|(row, d2)| row.iter().filter(|&&a| a).count() as f64 * d2)
            .sum()
    }
}

/// Upload time per unit of scheduling variable that minimizes the
/// Lagrangian: `s ln2 / (B (1 + W(h M / (lambda sigma^2 e) - 1/e)))`, where
/// `M` is the round's multiplier sum. Infinite when `M = 0`.
pub fn unit_upload_time(lambda: f64, mu_sum: f64, gain: f64, ch: &ChannelSpec) -> Result<f64> {
    if mu_sum <= 0.0 {
        return Ok(f64::INFINITY);
    }
    let arg = gain * mu_sum / (lambda * ch.noise_power) * INV_E - INV_E;
    let w = lambert_w0(arg)?;
    let denom = 1.0 + w;
    if denom <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((ch.model_bits * std::f64::consts::LN_2 / (ch.bandwidth * denom)).max(0.0))
}

/// Closed-form optimal upload time of device `k` in round `n` (0-based) at
/// the given multipliers. `lambda_k = 0` is replaced by `lambda_floor`.
pub fn tau_star(
    dual: &DualState1,
    k: usize,
    n: usize,
    gain: f64,
    ch: &ChannelSpec,
    scheduled: bool,
    lambda_floor: f64,
) -> Result<f64> {
    if !scheduled {
        return Ok(0.0);
    }
    unit_upload_time(dual.lambda[k].max(lambda_floor), dual.mu_sum(n), gain, ch)
}

/// Per-round Lagrangian cost `g` of scheduling a device with unit upload time
/// `tau_tilde`; the device is scheduled iff `g <= 0`.
#[allow(clippy::too_many_arguments)]
pub fn schedule_cost(
    tau_tilde: f64,
    lambda_k: f64,
    mu_sum: f64,
    mu_kn: f64,
    xi: f64,
    terms: &RoundTerms,
    ch: &ChannelSpec,
) -> f64 {
    let (energy, time_cost) = if tau_tilde.is_infinite() {
        (min_comm_energy(terms.gain, ch), 0.0)
    } else if tau_tilde > 0.0 {
        (upload_energy(tau_tilde, terms.gain, ch), tau_tilde * mu_sum)
    } else {
        (f64::INFINITY, 0.0)
    };
    lambda_k * (energy + terms.comp_energy) + time_cost + mu_kn * terms.comp_time
        - xi * terms.data_sq
}

/// Binary scheduling decision; ties (`g = 0`) schedule the device.
pub fn schedule_star(
    k: usize,
    n: usize,
    tau_tilde: f64,
    dual: &DualState1,
    terms: &RoundTerms,
    ch: &ChannelSpec,
) -> bool {
    let g = schedule_cost(
        tau_tilde,
        dual.lambda[k],
        dual.mu_sum(n),
        dual.mu[[k, n]],
        dual.xi,
        terms,
        ch,
    );
    g <= 0.0
}

/// Slot length minimizing the Lagrangian: the movement time of round `n`
/// (1-based waypoint pair `q[n-1] -> q[n]`, passed as 0-based `n`).
pub fn delta_dual(n: usize, trajectory: &Trajectory, max_speed: f64) -> f64 {
    let p = trajectory.points();
    (p[n + 1] - p[n]).norm() / max_speed
}

/// Per-family subgradient step lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSteps {
    pub lambda: Vec<f64>,
    pub mu: f64,
    pub xi: f64,
}

impl DualSteps {
    pub fn uniform(step: f64, devices: usize) -> Self {
        Self {
            lambda: vec![step; devices],
            mu: step,
            xi: step,
        }
    }
}

/// A primal point `(A, tau, delta)` at which subgradients are evaluated.
#[derive(Debug, Clone)]
pub struct PrimalPoint {
    pub schedule: Array2<bool>,
    pub tau: Array2<f64>,
    pub delta: Vec<f64>,
}

/// Projected subgradient step on all multipliers.
///
/// `lambda` and `xi` take a positive-part projection; `mu` takes the
/// positive part followed by per-round rescaling onto `sum_k mu_k[n] <= 1`.
pub fn dual_update(
    dual: &DualState1,
    primal: &PrimalPoint,
    data: &SubproblemData,
    steps: &DualSteps,
) -> DualState1 {
    let kk = data.num_devices();
    let nn = data.rounds();
    let used = data.energy_used(&primal.schedule, &primal.tau);
    let lambda = (0..kk)
        .map(|k| (dual.lambda[k] + steps.lambda[k] * (used[k] - data.budget[k])).max(0.0))
        .collect();

    let mut mu = Array2::zeros((kk, nn));
    for n in 0..nn {
        let total_tau: f64 = primal.tau.column(n).iter().sum();
        let mut sum = 0.0;
        for k in 0..kk {
            let comp = if primal.schedule[[k, n]] {
                data.comp_time[k]
            } else {
                0.0
            };
            let half = (dual.mu[[k, n]] + steps.mu * (total_tau + comp - primal.delta[n])).max(0.0);
            mu[[k, n]] = half;
            sum += half;
        }
        let scale = sum.max(1.0);
        mu.column_mut(n).mapv_inplace(|v| v / scale);
    }

    let xi = (dual.xi + steps.xi * (data.accuracy_c - data.scheduled_weight(&primal.schedule)))
        .max(0.0);
    DualState1 { lambda, mu, xi }
}

/// Optimal slot lengths for a fixed schedule and upload allocation:
/// `max(movement time, sum_k tau_k[n] + max_k a_k[n] t_comp_k)`.
pub fn recover_delta(
    schedule: &Array2<bool>,
    tau: &Array2<f64>,
    movement: &[f64],
    devices: &[DeviceSpec],
) -> Vec<f64> {
    (0..movement.len())
        .map(|n| {
            let col: ArrayView1<'_, bool> = schedule.column(n);
            let busy: f64 = tau.column(n).iter().sum::<f64>() + round_comp_time(col, devices);
            movement[n].max(busy)
        })
        .collect()
}

/// Result of one closed-form primal evaluation at fixed multipliers.
struct LagrangianPoint {
    primal: PrimalPoint,
    costs: Array2<f64>,
    dual_objective: f64,
    floor_hit: bool,
}

fn minimize_lagrangian(
    dual: &DualState1,
    data: &SubproblemData,
    lambda_floor: f64,
) -> Result<LagrangianPoint> {
    let kk = data.num_devices();
    let nn = data.rounds();
    let ch = &data.channel;
    let mut schedule = Array2::from_elem((kk, nn), false);
    let mut tau = Array2::zeros((kk, nn));
    let mut costs = Array2::zeros((kk, nn));
    let mut floor_hit = false;
    let mut value = 0.0;
    let unit = data.time_unit();
    for n in 0..nn {
        let mu_sum = dual.mu_sum(n);
        // Unbounded uploads (mu_sum = 0) are capped for the subgradient only.
        let cap = 10.0 * data.movement[n].max(unit);
        value += (1.0 - mu_sum) * data.movement[n];
        for k in 0..kk {
            let lambda = if dual.lambda[k] < lambda_floor {
                floor_hit = true;
                lambda_floor
            } else {
                dual.lambda[k]
            };
            let terms = data.terms(k, n);
            let t = unit_upload_time(lambda, mu_sum, terms.gain, ch)?;
            let g = schedule_cost(t, lambda, mu_sum, dual.mu[[k, n]], dual.xi, &terms, ch);
            costs[[k, n]] = g;
            if g <= 0.0 {
                schedule[[k, n]] = true;
                tau[[k, n]] = t.min(cap);
                value += g;
            }
        }
    }
    value += data.accuracy_c * dual.xi;
    value -= dual
        .lambda
        .iter()
        .zip(&data.budget)
        .map(|(l, e)| l * e)
        .sum::<f64>();
    let delta = data.movement.clone();
    Ok(LagrangianPoint {
        primal: PrimalPoint {
            schedule,
            tau,
            delta,
        },
        costs,
        dual_objective: value,
        floor_hit,
    })
}

/// Scaled step lengths: relative for `lambda` and `xi`, time-normalized for
/// `mu`.
fn dynamic_steps(dual: &DualState1, data: &SubproblemData, base: f64) -> DualSteps {
    let unit = data.time_unit();
    let mean_d2 = data.data_sq.iter().sum::<f64>() / data.data_sq.len() as f64;
    let xi_ref = 1e-2 * unit / mean_d2;
    let c_scale = data.data_sq.iter().sum::<f64>() * data.rounds() as f64;
    DualSteps {
        lambda: dual
            .lambda
            .iter()
            .zip(&data.budget)
            .map(|(&l, &e)| base * l.max(1e-12) / e)
            .collect(),
        mu: base / unit,
        xi: base * dual.xi.max(xi_ref) / c_scale,
    }
}

fn dual_change(a: &DualState1, b: &DualState1, xi_ref: f64) -> f64 {
    let dl = a
        .lambda
        .iter()
        .zip(&b.lambda)
        .map(|(x, y)| (x - y).abs() / x.abs().max(1e-12))
        .fold(0.0, f64::max);
    let dm = a
        .mu
        .iter()
        .zip(b.mu.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let dx = (a.xi - b.xi).abs() / a.xi.max(xi_ref);
    dl.max(dm).max(dx)
}

/// Dual ascent for the scheduling/time subproblem at a fixed trajectory.
pub fn solve_sched_time(
    scenario: &Scenario,
    trajectory: &Trajectory,
    opts: &SchedOptions,
    warm: Option<&WarmStart>,
) -> Result<SubSolution1> {
    let data = SubproblemData::new(scenario, trajectory)?;
    solve_with_data(&data, opts, warm)
}

pub(crate) fn solve_with_data(
    data: &SubproblemData,
    opts: &SchedOptions,
    warm: Option<&WarmStart>,
) -> Result<SubSolution1> {
    let kk = data.num_devices();
    let nn = data.rounds();
    let mut dual = warm
        .and_then(|w| w.dual.clone())
        .filter(|d| d.lambda.len() == kk && d.mu.dim() == (kk, nn))
        .unwrap_or_else(|| DualState1::initial(kk, nn));
    let warm_schedules: Vec<Array2<bool>> = warm
        .map(|w| w.schedules.iter().filter(|s| s.dim() == (kk, nn)).cloned().collect())
        .unwrap_or_default();

    let xi_ref = 1e-2 * data.time_unit() / (data.data_sq.iter().sum::<f64>() / kk as f64);
    let mut best_dual = f64::NEG_INFINITY;
    let mut floor_hits = 0;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut incumbent: Option<(Array2<bool>, Allocation)> = None;

    // Primal recovery from the Lagrangian minimizer at `point`, keeping the
    // best feasible schedule found so far.
    let mut next_check = opts.check_every;
    let mut last_checked: Option<Array2<bool>> = None;
    let mut last_check: Option<(f64, f64)> = None;
    // Gap checks search from the Lagrangian schedule (plus the warm schedules
    // until something feasible turns up); the final recovery also restarts
    // from the incumbent.
    let recover = |point: &LagrangianPoint, incumbent: &mut Option<(Array2<bool>, Allocation)>, last: bool| {
        let mut starts = vec![point.primal.schedule.clone()];
        if last || incumbent.is_none() {
            starts.extend(warm_schedules.iter().cloned());
        }
        if let (true, Some((s, _))) = (last, incumbent.as_ref()) {
            starts.push(s.clone());
        }
                match recover::recover_primal(data, &starts, &point.costs, opts.refine_budget) {
            Ok((s, a)) => {
                if incumbent.as_ref().is_none_or(|(_, b)| a.objective < b.objective) {
                    *incumbent = Some((s, a));
                }
                Ok(())
            }
            Err(Error::Infeasible { .. }) => Ok(()),
            Err(e) => Err(e),
        }
    };

    for t in 1..=opts.max_iters {
        iterations = t;
        let point = minimize_lagrangian(&dual, data, opts.lambda_floor)?;
        if point.floor_hit {
            floor_hits += 1;
        }
        best_dual = best_dual.max(point.dual_objective);
        if opts.trace {
            let used = data.energy_used(&point.primal.schedule, &point.primal.tau);
            let max_energy = used
                .iter()
                .zip(&data.budget)
                .map(|(u, e)| u - e)
                .fold(f64::NEG_INFINITY, f64::max);
            trace.push(DualTraceRow {
                iteration: t,
                dual_objective: point.dual_objective,
                max_energy_residual: max_energy,
                accuracy_residual: data.accuracy_c - data.scheduled_weight(&point.primal.schedule),
                scheduled: point.primal.schedule.iter().filter(|&&a| a).count(),
            });
        }
        if t == next_check {
            next_check *= 2;
            if last_checked.as_ref() != Some(&point.primal.schedule) {
                recover(&point, &mut incumbent, false)?;
                last_checked = Some(point.primal.schedule.clone());
            }
            if let Some((_, a)) = incumbent.as_ref() {
                if a.objective - best_dual <= opts.gap_tol * a.objective {
                    converged = true;
                    break;
                }
                // Neither bound moved since the last check: the remaining
                // gap is the integrality gap, not slow ascent.
                let stalled = last_check.is_some_and(|(primal, dual): (f64, f64)| {
                    a.objective >= primal && best_dual - dual <= opts.gap_tol * a.objective
                });
                if stalled {
                    break;
                }
                last_check = Some((a.objective, best_dual));
            }
        }
        let steps = dynamic_steps(&dual, data, opts.step.step(t));
        let next = dual_update(&dual, &point.primal, data, &steps);
        let change = dual_change(&dual, &next, xi_ref);
        dual = next;
        if change < opts.tol {
            converged = true;
            break;
        }
    }

    let point = minimize_lagrangian(&dual, data, opts.lambda_floor)?;
    best_dual = best_dual.max(point.dual_objective);
    recover(&point, &mut incumbent, true)?;
    let (schedule, allocation) = incumbent.ok_or_else(|| {
        Error::infeasible("no schedule meets the accuracy target within the energy budgets")
    })?;

    let residuals = residuals_of(data, &schedule, &allocation.tau, &allocation.delta, &dual);
    let solution = SubSolution1 {
        primal_objective: allocation.delta.iter().sum(),
        schedule,
        tau: allocation.tau,
        delta: allocation.delta,
        dual,
        dual_objective: best_dual,
        residuals,
        iterations,
        converged,
        lambda_floor_hits: floor_hits,
        trace,
    };
    let violation = max_relative_violation(data, &solution.residuals);
    if violation > opts.feas_tol {
        return Err(Error::SchedNonConvergence {
            iterations,
            residual: violation,
            best: Box::new(solution),
        });
    }
    Ok(solution)
}

pub(crate) fn residuals_of(
    data: &SubproblemData,
    schedule: &Array2<bool>,
    tau: &Array2<f64>,
    delta: &[f64],
    dual: &DualState1,
) -> Residuals {
    let used = data.energy_used(schedule, tau);
    let energy_slack: Vec<f64> = data.budget.iter().zip(&used).map(|(e, u)| e - u).collect();
    let slot_slack = (0..data.rounds())
        .map(|n| {
            delta[n]
                - tau.column(n).iter().sum::<f64>()
                - round_comp_time(schedule.column(n), &data.devices)
        })
        .collect();
    let movement_slack = delta.iter().zip(&data.movement).map(|(d, m)| d - m).collect();
    let complementary_slackness = dual
        .lambda
        .iter()
        .zip(&energy_slack)
        .map(|(l, s)| (l * s).abs())
        .fold(0.0, f64::max);
    Residuals {
        energy_slack,
        slot_slack,
        movement_slack,
        accuracy_slack: data.scheduled_weight(schedule) - data.accuracy_c,
        complementary_slackness,
    }
}

/// Largest constraint violation, each family relative to its natural scale.
pub(crate) fn max_relative_violation(data: &SubproblemData, r: &Residuals) -> f64 {
    let energy = r
        .energy_slack
        .iter()
        .zip(&data.budget)
        .map(|(s, e)| (-s / e).max(0.0))
        .fold(0.0, f64::max);
    let time_scale = data.time_unit();
    let slot = r
        .slot_slack
        .iter()
        .chain(&r.movement_slack)
        .map(|s| (-s / time_scale).max(0.0))
        .fold(0.0, f64::max);
    let acc_scale = data.accuracy_c.abs().max(data.data_sq.iter().cloned().fold(0.0, f64::max));
    let acc = (-r.accuracy_slack / acc_scale).max(0.0);
    energy.max(slot).max(acc)
}

/// Gains for a stationary UAV: exposed for the static baselines.
pub fn static_gains(scenario: &Scenario) -> Vec<f64> {
    scenario
        .devices
        .iter()
        .map(|d| channel_gain(scenario.uav.initial_position, d, &scenario.uav, &scenario.channel))
        .collect()
}

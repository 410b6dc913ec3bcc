//! UAV trajectory design for a fixed schedule, upload allocation and slot
//! lengths.
//!
//! The subproblem minimizes the weighted squared horizontal distance
//! `sum_k sum_n b_k[n] ||q[n] - u_k||^2` subject to per-slot displacement
//! balls and the residual device energy budgets. The energy constraints are
//! dualized with multipliers `gamma_k`; the inner problem at fixed `gamma` is
//! solved by a forward closed-form sweep followed by exact block-coordinate
//! sweeps over the displacements, and `gamma` follows projected subgradient
//! ascent.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{round_comp_time, DeviceSpec, Scenario, Trajectory};
use crate::numerics::{project_ball, StepSchedule};
use crate::Vec2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajTraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub lagrangian: f64,
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryState {
    pub points: Trajectory,
    pub gamma: Vec<f64>,
    /// Energy left for the distance-dependent part of the uploads.
    pub residual_energy: Vec<f64>,
    /// `b_k[n]`; zero where the device is not scheduled.
    pub weights: Array2<f64>,
    /// `sum b ||q - u||^2` at `points`.
    pub objective: f64,
    /// Best Lagrangian value seen, a lower bound on the optimum.
    pub dual_objective: f64,
    pub duality_gap: f64,
    /// Largest energy excess over the residual budgets at `points`.
    pub max_violation: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TrajTraceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajOptions {
    pub max_iters: usize,
    /// Stop once the largest relative `gamma` change drops below this.
    pub tol: f64,
    /// Energy violation tolerated relative to each device budget.
    pub feas_tol: f64,
    pub step: StepSchedule,
    /// Relative objective change that ends the inner block sweeps.
    pub sweep_tol: f64,
    pub max_sweeps: usize,
    pub trace: bool,
}

impl Default for TrajOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-6,
            feas_tol: 1e-6,
            step: StepSchedule::diminishing(1.0),
            sweep_tol: 1e-9,
            max_sweeps: 2000,
            trace: false,
        }
    }
}

/// Distance-independent energy coefficients `b_k[n] = (tau sigma^2 /
/// beta_0)(2^{s/(B tau)} - 1)` and residual budgets
/// `E_k - sum_n a E_comp - sum_n b_k[n] H^2`.
pub fn residual_terms(
    scenario: &Scenario,
    schedule: &Array2<bool>,
    tau: &Array2<f64>,
) -> (Vec<f64>, Array2<f64>) {
    let ch = &scenario.channel;
    let h2 = scenario.uav.altitude.powi(2);
    let weights = Array2::from_shape_fn(schedule.dim(), |(k, n)| {
        let t = tau[[k, n]];
        if !schedule[[k, n]] || t <= 0.0 {
            return 0.0;
        }
        let exponent = ch.model_bits * std::f64::consts::LN_2 / (ch.bandwidth * t);
        t * ch.noise_power / ch.ref_gain * exponent.exp_m1()
    });
    let residual = scenario
        .devices
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let rounds = schedule.row(k).iter().filter(|&&a| a).count() as f64;
            d.energy_budget
                - rounds * crate::model::comp_energy(d, true)
                - weights.row(k).sum() * h2
        })
        .collect();
    (residual, weights)
}

/// Displacement radius of each slot: `min(V_max delta[n], max_step)`.
pub fn movement_radii(delta: &[f64], scenario: &Scenario) -> Vec<f64> {
    delta
        .iter()
        .map(|d| (scenario.uav.max_speed * d).min(scenario.uav.max_step))
        .collect()
}

/// Slot weights `W_n = sum_k w_k[n]` and weighted centroids `c_n`.
fn aggregate(gamma: &[f64], weights: &Array2<f64>, devices: &[DeviceSpec]) -> (Vec<f64>, Vec<Vec2>) {
    let n_rounds = weights.ncols();
    let mut total = vec![0.0; n_rounds];
    let mut centroid = vec![Vec2::zeros(); n_rounds];
    for (k, dev) in devices.iter().enumerate() {
        let scale = 1.0 + gamma[k];
        for n in 0..n_rounds {
            let w = scale * weights[[k, n]];
            if w > 0.0 {
                total[n] += w;
                centroid[n] += dev.position * w;
            }
        }
    }
    for n in 0..n_rounds {
        if total[n] > 0.0 {
            centroid[n] /= total[n];
        }
    }
    (total, centroid)
}

/// Forward sweep: each waypoint moves from its predecessor towards the
/// `(1 + gamma) b`-weighted device centroid of its slot, clipped to the
/// slot's displacement ball. Slots without weight hold position.
pub fn q_update(
    gamma: &[f64],
    weights: &Array2<f64>,
    radii: &[f64],
    devices: &[DeviceSpec],
    start: Vec2,
) -> Trajectory {
    let (total, centroid) = aggregate(gamma, weights, devices);
    let mut points = Vec::with_capacity(radii.len() + 1);
    let mut prev = start;
    points.push(prev);
    for n in 0..radii.len() {
        if total[n] > 0.0 {
            prev += project_ball(centroid[n] - prev, radii[n]);
        }
        points.push(prev);
    }
    Trajectory(points)
}

/// Projected subgradient step `gamma_k <- [gamma_k + psi_k v_k]^+`.
pub fn gamma_update(gamma: &[f64], violation: &[f64], psi: &[f64]) -> Vec<f64> {
    gamma
        .iter()
        .zip(violation)
        .zip(psi)
        .map(|((g, v), p)| (g + p * v).max(0.0))
        .collect()
}

/// `sum_n b_k[n] ||q[n] - u_k||^2 - E_bar_k` per device.
pub fn energy_violation(
    points: &Trajectory,
    weights: &Array2<f64>,
    residual_energy: &[f64],
    devices: &[DeviceSpec],
) -> Vec<f64> {
    devices
        .iter()
        .enumerate()
        .map(|(k, d)| distance_energy(points, weights, k, d) - residual_energy[k])
        .collect()
}

fn distance_energy(points: &Trajectory, weights: &Array2<f64>, k: usize, dev: &DeviceSpec) -> f64 {
    let p = points.points();
    weights
        .row(k)
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(n, &w)| w * (p[n + 1] - dev.position).norm_squared())
        .sum()
}

/// `sum_k sum_n b_k[n] ||q[n] - u_k||^2`.
pub fn weighted_distance(points: &Trajectory, weights: &Array2<f64>, devices: &[DeviceSpec]) -> f64 {
    devices
        .iter()
        .enumerate()
        .map(|(k, d)| distance_energy(points, weights, k, d))
        .sum()
}

/// `sum_n W_n ||q[n] - c_n||^2`, the inner objective up to a constant.
fn inner_value(points: &[Vec2], total: &[f64], centroid: &[Vec2]) -> f64 {
    total
        .iter()
        .zip(centroid)
        .enumerate()
        .map(|(n, (w, c))| w * (points[n + 1] - c).norm_squared())
        .sum()
}

/// Exact block-coordinate descent over displacements `d_n = q[n] - q[n-1]`,
/// sweeping from the last slot backwards.
fn refine(points: &mut [Vec2], total: &[f64], centroid: &[Vec2], radii: &[f64], tol: f64, max_sweeps: usize) {
    let rounds = radii.len();
    let mut d: Vec<Vec2> = (0..rounds).map(|n| points[n + 1] - points[n]).collect();
    let mut value = inner_value(points, total, centroid);
    for _ in 0..max_sweeps {
        let mut grad = Vec2::zeros();
        let mut mass = 0.0;
        for n in (0..rounds).rev() {
            grad += (points[n + 1] - centroid[n]) * total[n];
            mass += total[n];
            if mass <= 0.0 {
                continue;
            }
            let next = project_ball(d[n] - grad / mass, radii[n]);
            grad += (next - d[n]) * mass;
            d[n] = next;
        }
        for n in 0..rounds {
            points[n + 1] = points[n] + d[n];
        }
        let updated = inner_value(points, total, centroid);
        let change = value - updated;
        value = updated;
        if change <= tol * value.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
}

/// Lagrangian `sum_n W_n ||q - c_n||^2`-form value including constants:
/// `sum_k (1 + gamma_k) sum_n b ||q - u||^2 - sum_k gamma_k E_bar_k`.
fn lagrangian(points: &Trajectory, gamma: &[f64], weights: &Array2<f64>, residual: &[f64], devices: &[DeviceSpec]) -> f64 {
    devices
        .iter()
        .enumerate()
        .map(|(k, d)| {
            (1.0 + gamma[k]) * distance_energy(points, weights, k, d) - gamma[k] * residual[k]
        })
        .sum()
}

fn check_inputs(scenario: &Scenario, schedule: &Array2<bool>, tau: &Array2<f64>, delta: &[f64]) -> Result<()> {
    let dim = (scenario.num_devices(), scenario.rounds());
    if schedule.dim() != dim || tau.dim() != dim || delta.len() != dim.1 {
        return Err(Error::InvalidInput(format!(
            "trajectory subproblem expects {} x {} inputs",
            dim.0, dim.1
        )));
    }
    for n in 0..dim.1 {
        let busy = tau.column(n).sum() + round_comp_time(schedule.column(n), &scenario.devices);
        if delta[n] + 1e-12 * busy.max(1.0) < busy {
            return Err(Error::InvalidInput(format!(
                "slot {n} is shorter than its uploads and computation"
            )));
        }
    }
    Ok(())
}

fn within_movement(points: &Trajectory, radii: &[f64]) -> bool {
    points
        .points()
        .windows(2)
        .zip(radii)
        .all(|(w, r)| (w[1] - w[0]).norm() <= r * (1.0 + 1e-12) + 1e-12)
}

/// Dual subgradient solve of the trajectory subproblem.
///
/// `initial` must satisfy the movement constraints; it seeds the inner
/// sweeps and is the fallback when no iterate satisfies the energy budgets.
/// Infeasible iterates are pulled back towards the best feasible point by a
/// short line search so that any strict improvement is kept.
pub fn solve_trajectory(
    scenario: &Scenario,
    schedule: &Array2<bool>,
    tau: &Array2<f64>,
    delta: &[f64],
    initial: Option<&Trajectory>,
    opts: &TrajOptions,
) -> Result<TrajectoryState> {
    scenario.validate()?;
    check_inputs(scenario, schedule, tau, delta)?;
    let devices = &scenario.devices;
    let start = scenario.uav.initial_position;
    let rounds = scenario.rounds();
    let kk = devices.len();
    let (residual, weights) = residual_terms(scenario, schedule, tau);
    let radii = movement_radii(delta, scenario);

    let init = match initial {
        Some(q) if q.rounds() == rounds && q.points()[0] == start && within_movement(q, &radii) => q.clone(),
        Some(_) => {
            return Err(Error::InvalidInput(
                "initial trajectory violates the movement constraints".into(),
            ))
        }
        None => Trajectory::hold(start, rounds),
    };

    let tolerance: Vec<f64> = devices.iter().map(|d| opts.feas_tol * d.energy_budget).collect();
    let is_feasible = |v: &[f64]| v.iter().zip(&tolerance).all(|(v, t)| *v <= *t);
    let max_excess = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max).max(0.0);

    let init_violation = energy_violation(&init, &weights, &residual, devices);
    let mut best: Option<(Trajectory, f64)> = is_feasible(&init_violation)
        .then(|| (init.clone(), weighted_distance(&init, &weights, devices)));
    let scale: Vec<f64> = (0..kk)
        .map(|k| {
            let s = distance_energy(&init, &weights, k, &devices[k])
                + weights.row(k).sum() * scenario.uav.altitude.powi(2);
            s.max(f64::MIN_POSITIVE)
        })
        .collect();

    let mut gamma = vec![0.0; kk];
    let mut current = init.clone();
    let mut best_dual = f64::NEG_INFINITY;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for t in 1..=opts.max_iters {
        iterations = t;
        let (total, centroid) = aggregate(&gamma, &weights, devices);
        let forward = q_update(&gamma, &weights, &radii, devices, start);
        let mut pts = if inner_value(forward.points(), &total, &centroid)
            <= inner_value(current.points(), &total, &centroid)
        {
            forward.0
        } else {
            current.0.clone()
        };
        refine(&mut pts, &total, &centroid, &radii, opts.sweep_tol, opts.max_sweeps);
        current = Trajectory(pts);

        let value = lagrangian(&current, &gamma, &weights, &residual, devices);
        best_dual = best_dual.max(value);
        let violation = energy_violation(&current, &weights, &residual, devices);
        let objective = weighted_distance(&current, &weights, devices);
        if opts.trace {
            trace.push(TrajTraceRow {
                iteration: t,
                objective,
                lagrangian: value,
                max_violation: max_excess(&violation),
            });
        }

        if is_feasible(&violation) {
            if best.as_ref().is_none_or(|(_, b)| objective < *b) {
                best = Some((current.clone(), objective));
            }
        } else if let Some((anchor, anchor_obj)) = best.clone() {
            // Pull back towards the incumbent along the segment.
            let mut alpha = 0.5;
            for _ in 0..12 {
                let mixed = Trajectory(
                    anchor
                        .points()
                        .iter()
                        .zip(current.points())
                        .map(|(a, c)| a + (c - a) * alpha)
                        .collect(),
                );
                let v = energy_violation(&mixed, &weights, &residual, devices);
                if is_feasible(&v) {
                    let obj = weighted_distance(&mixed, &weights, devices);
                    if obj < anchor_obj {
                        best = Some((mixed, obj));
                    }
                    break;
                }
                alpha *= 0.5;
            }
        }

        let base = opts.step.step(t);
        let psi: Vec<f64> = scale.iter().map(|s| base / s).collect();
        let next = gamma_update(&gamma, &violation, &psi);
        let change = gamma
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs() / a.max(1.0))
            .fold(0.0, f64::max);
        gamma = next;
        if change < opts.tol && is_feasible(&violation) {
            converged = true;
            break;
        }
    }

    let make_state = |points: Trajectory, objective: f64| {
        let violation = energy_violation(&points, &weights, &residual, devices);
        TrajectoryState {
            max_violation: max_excess(&violation),
            duality_gap: (objective - best_dual).max(0.0),
            points,
            gamma: gamma.clone(),
            residual_energy: residual.clone(),
            weights: weights.clone(),
            objective,
            dual_objective: best_dual,
            iterations,
            converged,
            trace: trace.clone(),
        }
    };
    match best {
        Some((points, objective)) => Ok(make_state(points, objective)),
        None => {
            let objective = weighted_distance(&current, &weights, devices);
            let state = make_state(current, objective);
            Err(Error::TrajNonConvergence {
                iterations,
                violation: state.max_violation,
                best: Box::new(state),
            })
        }
    }
}

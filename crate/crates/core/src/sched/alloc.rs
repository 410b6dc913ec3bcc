//! Optimal upload times for a fixed schedule.
//!
//! With the schedule fixed the problem is convex. Its dual has one multiplier
//! per device energy budget (`lambda_k`) and one aggregate slot multiplier per
//! round (`M_n`). We run exact coordinate ascent on the pair: every `lambda_k`
//! is set so that the device spends exactly its budget, and every `M_n` is 1
//! when the round is upload-bound or otherwise chosen so that the uploads
//! just fill the movement time.

use ndarray::Array2;

use super::{unit_upload_time, SubproblemData};
use crate::error::{Error, Result};
use crate::model::{min_comm_energy, upload_energy};
use crate::numerics::{find_root, INV_E};

const COORD_SWEEPS: usize = 4;
const NEWTON_ITERS: usize = 40;
const NEWTON_TOL: f64 = 1e-12;
const SWEEP_RTOL: f64 = 1e-11;
const ROOT_XTOL: f64 = 1e-13;
const ROOT_MAX_ITER: usize = 200;
const EXPAND_LIMIT: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub tau: Array2<f64>,
    pub delta: Vec<f64>,
    pub objective: f64,
    /// Energy multiplier per device (0 when the device is never scheduled).
    pub lambda: Vec<f64>,
    /// Aggregate slot multiplier per round.
    pub mu_sum: Vec<f64>,
    pub energy_used: Vec<f64>,
}

struct Device<'a> {
    rounds: Vec<usize>,
    gains: Vec<f64>,
    available: f64,
    data: &'a SubproblemData,
}

impl Device<'_> {
    fn energy(&self, lambda: f64, mu: &[f64]) -> Result<f64> {
        let ch = &self.data.channel;
        let mut total = 0.0;
        for (&n, &h) in self.rounds.iter().zip(&self.gains) {
            let t = unit_upload_time(lambda, mu[n], h, ch)?;
            total += if t.is_finite() {
                upload_energy(t, h, ch)
            } else {
                min_comm_energy(h, ch)
            };
        }
        Ok(total)
    }

    /// `lambda` at which the device spends exactly its available energy,
    /// rounded towards the feasible side.
    fn solve_lambda(&self, mu: &[f64], guess: f64) -> Result<f64> {
        let target = self.available.ln();
        // Arguments are never below the branch point here, so a Lambert
        // failure can only come from a NaN and surfaces as a failed search.
        let mut f = |u: f64| {
            self.energy(u.exp(), mu)
                .map_or(f64::NAN, |e| e.ln() - target)
        };
        let (lo, hi) = expand_bracket(&mut f, guess.max(1e-300).ln())?;
        let bracket = find_root(&mut f, lo, hi, ROOT_XTOL, ROOT_MAX_ITER);
        let b = bracket.ok_or_else(|| Error::InvalidInput("energy root search failed".into()))?;
        Ok(b.nonpositive_end().exp())
    }
}

/// Finds `lo < hi` with `f(lo) > 0 >= f(hi)` for a decreasing `f`, starting
/// from `x0` and stepping outwards geometrically.
fn expand_bracket<F: FnMut(f64) -> f64>(f: &mut F, x0: f64) -> Result<(f64, f64)> {
    let fail = || Error::InvalidInput("could not bracket allocation multiplier".into());
    let f0 = f(x0);
    if f0.is_nan() {
        return Err(fail());
    }
    let mut step = 1.0;
    let (mut lo, mut hi) = (x0, x0);
    for _ in 0..EXPAND_LIMIT {
        if f0 > 0.0 {
            lo = hi;
            hi += step;
            let v = f(hi);
            if v.is_nan() {
                return Err(fail());
            }
            if v <= 0.0 {
                return Ok((lo, hi));
            }
        } else {
            hi = lo;
            lo -= step;
            let v = f(lo);
            if v.is_nan() {
                return Err(fail());
            }
            if v > 0.0 {
                return Ok((lo, hi));
            }
        }
        step *= 1.5;
    }
    Err(fail())
}

/// Solves the upload-time allocation for a fixed `schedule` at the
/// trajectory encoded in `data`. Fails with [`Error::Infeasible`] when some
/// scheduled device cannot afford its uploads even with unbounded time.
pub fn allocate_times(data: &SubproblemData, schedule: &Array2<bool>) -> Result<Allocation> {
    allocate_times_from(data, schedule, None)
}

/// [`allocate_times`] started from the multipliers of a nearby allocation.
pub(crate) fn allocate_times_from(
    data: &SubproblemData,
    schedule: &Array2<bool>,
    hint: Option<&Allocation>,
) -> Result<Allocation> {
    let kk = data.num_devices();
    let nn = data.rounds();
    let ch = &data.channel;

    let mut devices = Vec::with_capacity(kk);
    for k in 0..kk {
        let rounds: Vec<usize> = (0..nn).filter(|&n| schedule[[k, n]]).collect();
        let gains: Vec<f64> = rounds.iter().map(|&n| data.gains[[k, n]]).collect();
        let available = data.budget[k] - rounds.len() as f64 * data.comp_energy[k];
        if !rounds.is_empty() {
            let floor: f64 = gains.iter().map(|&h| min_comm_energy(h, ch)).sum();
            if available <= floor {
                return Err(Error::infeasible(format!(
                    "device {k} cannot afford {} uploads: needs more than {floor:.6e} J, has {available:.6e} J",
                    rounds.len()
                )));
            }
        }
        devices.push(Device {
            rounds,
            gains,
            available,
            data,
        });
    }

    let comp: Vec<f64> = (0..nn)
        .map(|n| {
            (0..kk)
                .filter(|&k| schedule[[k, n]])
                .map(|k| data.comp_time[k])
                .fold(0.0, f64::max)
        })
        .collect();
    let occupied: Vec<Vec<usize>> = (0..nn)
        .map(|n| (0..kk).filter(|&k| schedule[[k, n]]).collect())
        .collect();
    let moving = (0..nn).any(|n| data.movement[n] > comp[n] && !occupied[n].is_empty());

    let mut mu = match hint {
        Some(h) if h.mu_sum.len() == nn => h.mu_sum.iter().map(|&m| if m > 0.0 { m.min(1.0) } else { 1.0 }).collect(),
        _ => vec![1.0; nn],
    };
    for n in 0..nn {
        if occupied[n].is_empty() || data.movement[n] <= comp[n] {
            mu[n] = 1.0;
        }
    }
    let mut lambda = vec![0.0; kk];
    for (k, dev) in devices.iter().enumerate() {
        if !dev.rounds.is_empty() {
            let guess = match hint {
                Some(h) if h.lambda.len() == kk && h.lambda[k] > 0.0 => h.lambda[k],
                _ => data.time_unit() * dev.rounds.len() as f64 / dev.available,
            };
            lambda[k] = dev.solve_lambda(&mu, guess)?;
        }
    }

    if moving {
        let slack_rounds: Vec<usize> = (0..nn)
            .filter(|&n| !occupied[n].is_empty() && data.movement[n] > comp[n])
            .collect();
        let update_mu = |lambda: &[f64], mu: &mut [f64]| -> Result<()> {
            for &n in &slack_rounds {
                mu[n] = solve_round_mu(data, &occupied[n], lambda, n, data.movement[n] - comp[n], mu[n])?;
            }
            Ok(())
        };
        let mut previous = f64::INFINITY;
        let mut settled = false;
        let sweeps = if hint.is_some() { 1 } else { COORD_SWEEPS };
        for _ in 0..sweeps {
            update_mu(&lambda, &mut mu)?;
            for (k, dev) in devices.iter().enumerate() {
                if !dev.rounds.is_empty() {
                    lambda[k] = dev.solve_lambda(&mu, lambda[k])?;
                }
            }
            let t = objective(data, &occupied, &lambda, &mu, &comp)?;
            if (previous - t).abs() <= SWEEP_RTOL * t.max(f64::MIN_POSITIVE) {
                settled = true;
                break;
            }
            previous = t;
        }
        if !settled {
            newton_polish(&devices, &slack_rounds, &mut lambda, &mut mu, &update_mu)?;
            update_mu(&lambda, &mut mu)?;
            for (k, dev) in devices.iter().enumerate() {
                if !dev.rounds.is_empty() {
                    lambda[k] = dev.solve_lambda(&mu, lambda[k])?;
                }
            }
        }
    }

    let mut tau = Array2::zeros((kk, nn));
    for n in 0..nn {
        for &k in &occupied[n] {
            tau[[k, n]] = unit_upload_time(lambda[k], mu[n], data.gains[[k, n]], ch)?;
        }
    }
    let delta: Vec<f64> = (0..nn)
        .map(|n| data.movement[n].max(tau.column(n).sum() + comp[n]))
        .collect();
    let energy_used = data.energy_used(schedule, &tau);
    Ok(Allocation {
        objective: delta.iter().sum(),
        tau,
        delta,
        lambda,
        mu_sum: mu,
        energy_used,
    })
}

/// Log-energy mismatch `ln E_k(lambda, M(lambda)) - ln available_k` of
/// every scheduled device, with the slot multipliers re-solved at `lambda`.
fn mismatch<U>(devices: &[Device], active: &[usize], lambda: &[f64], mu: &mut [f64], update_mu: &U) -> Result<Vec<f64>>
where
    U: Fn(&[f64], &mut [f64]) -> Result<()>,
{
    update_mu(lambda, mu)?;
    active
        .iter()
        .map(|&k| Ok(devices[k].energy(lambda[k], mu)?.ln() - devices[k].available.ln()))
        .collect()
}

/// Jacobian of [`mismatch`] in `ln lambda`. Upload times depend on `M/lambda`
/// only; in a round whose uploads exactly fill the movement time `M` moves
/// with the `lambda`s so that the total upload time stays fixed.
fn mismatch_jacobian(
    devices: &[Device],
    active: &[usize],
    lambda: &[f64],
    mu: &[f64],
    bound: &[bool],
) -> nalgebra::DMatrix<f64> {
    let data = devices[active[0]].data;
    let ch = &data.channel;
    let a = ch.model_bits * std::f64::consts::LN_2 / ch.bandwidth;
    let nn = data.rounds();
    let m = active.len();
    // Per cell: d tau / d ln(M/lambda) and d E / d tau.
    let mut cells: Vec<Vec<(usize, f64, f64)>> = vec![Vec::new(); m];
    let mut round_sum = vec![0.0; nn];
    let mut members: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nn];
    for (i, &k) in active.iter().enumerate() {
        let dev = &devices[k];
        for (&n, &h) in dev.rounds.iter().zip(&dev.gains) {
            let x = h * mu[n] / (lambda[k] * ch.noise_power);
            let tau = unit_upload_time(lambda[k], mu[n], h, ch).unwrap_or(f64::INFINITY);
            if !tau.is_finite() || tau <= 0.0 {
                continue;
            }
            let b = a / tau;
            let w = b - 1.0;
            let g = -a * x * INV_E / (b * b * b * w.exp());
            let de = ch.noise_power / h * (b.exp_m1() - b * b.exp());
            cells[i].push((n, g, de));
            if bound[n] {
                round_sum[n] += g;
                members[n].push((i, g));
            }
        }
    }
    let mut jac = nalgebra::DMatrix::<f64>::zeros(m, m);
    for (i, &k) in active.iter().enumerate() {
        let e = devices[k].energy(lambda[k], mu).unwrap_or(f64::NAN);
        for &(n, g, de) in &cells[i] {
            jac[(i, i)] -= de * g / e;
            if bound[n] && round_sum[n] != 0.0 {
                for &(j, gj) in &members[n] {
                    jac[(i, j)] += de * g * gj / round_sum[n] / e;
                }
            }
        }
    }
    jac
}

/// Damped Newton iteration on `ln lambda` for the coupled case, where
/// coordinate ascent only converges linearly.
fn newton_polish<U>(
    devices: &[Device],
    slack_rounds: &[usize],
    lambda: &mut [f64],
    mu: &mut [f64],
    update_mu: &U,
) -> Result<()>
where
    U: Fn(&[f64], &mut [f64]) -> Result<()>,
{
    let active: Vec<usize> = (0..devices.len()).filter(|&k| !devices[k].rounds.is_empty()).collect();
    if active.is_empty() {
        return Ok(());
    }
    let m = active.len();
    let norm = |f: &[f64]| f.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let mut f = mismatch(devices, &active, lambda, mu, update_mu)?;
    let mut bound = vec![false; mu.len()];
    for _ in 0..NEWTON_ITERS {
        let current = norm(&f);
        if current <= NEWTON_TOL {
            break;
        }
        bound.iter_mut().for_each(|b| *b = false);
        for &n in slack_rounds {
            bound[n] = mu[n] < 1.0;
        }
        let jac = mismatch_jacobian(devices, &active, lambda, mu, &bound);
        let rhs = nalgebra::DVector::from_iterator(m, f.iter().map(|v| -v));
        let Some(step) = jac.lu().solve(&rhs) else {
            break;
        };
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let mut trial = lambda.to_vec();
            for (j, &k) in active.iter().enumerate() {
                trial[k] *= (alpha * step[j]).exp();
            }
            let mut trial_mu = mu.to_vec();
            let ft = mismatch(devices, &active, &trial, &mut trial_mu, update_mu)?;
            if ft.iter().all(|v| v.is_finite()) && norm(&ft) < current {
                lambda.copy_from_slice(&trial);
                mu.copy_from_slice(&trial_mu);
                f = ft;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(())
}

fn objective(
    data: &SubproblemData,
    occupied: &[Vec<usize>],
    lambda: &[f64],
    mu: &[f64],
    comp: &[f64],
) -> Result<f64> {
    let mut total = 0.0;
    for n in 0..data.rounds() {
        let mut busy = comp[n];
        for &k in &occupied[n] {
            busy += unit_upload_time(lambda[k], mu[n], data.gains[[k, n]], &data.channel)?;
        }
        total += data.movement[n].max(busy);
    }
    Ok(total)
}

/// `M_n = 1` if uploads at full price already fill the slack; otherwise the
/// `M_n` in `(0, 1)` at which they fill it exactly.
fn solve_round_mu(
    data: &SubproblemData,
    occupied: &[usize],
    lambda: &[f64],
    n: usize,
    slack: f64,
    start: f64,
) -> Result<f64> {
    let mut f = |v: f64| {
        let m = v.exp();
        let mut total = 0.0;
        for &k in occupied {
            match unit_upload_time(lambda[k], m, data.gains[[k, n]], &data.channel) {
                Ok(t) => total += t,
                Err(_) => return f64::NAN,
            }
        }
        (total / slack).ln()
    };
    if f(0.0) >= 0.0 {
        return Ok(1.0);
    }
    let (lo, hi) = expand_bracket(&mut f, start.clamp(1e-300, 1.0).ln())?;
    let bracket = find_root(&mut f, lo, hi.min(0.0), ROOT_XTOL, ROOT_MAX_ITER);
    // Larger M shortens uploads, so the feasible (non-positive) end keeps
    // the round within its movement time.
    Ok(bracket
        .map(|b| b.nonpositive_end().exp())
        .unwrap_or(1.0)
        .min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::model::{FlSpec, Scenario, Trajectory};
    use crate::Vec2;

    fn scenario(budget: f64) -> Scenario {
        let mut devices = vec![device(150.0, 50.0, 100), device(260.0, -40.0, 300)];
        devices.iter_mut().for_each(|d| d.energy_budget = budget);
        Scenario {
            devices,
            uav: uav(),
            channel: channel(),
            fl: FlSpec {
                rounds: 3,
                learn_rate: 0.2,
                accuracy_target: 100.0,
                grad_bound: 0.05,
                initial_loss: 1.0,
                loss_floor: 0.0,
            },
        }
    }

    #[test]
    fn static_allocation_spends_whole_budget() {
        let s = scenario(1e-3);
        let q = Trajectory::hold(s.uav.initial_position, 3);
        let data = SubproblemData::new(&s, &q).unwrap();
        let a = Array2::from_shape_fn((2, 3), |(k, n)| k == 0 || n != 1);
        let out = allocate_times(&data, &a).unwrap();
        for k in 0..2 {
            assert!(out.energy_used[k] <= data.budget[k]);
            assert!(out.energy_used[k] >= data.budget[k] * (1.0 - 1e-9));
        }
        assert_eq!(out.tau[[1, 1]], 0.0);
        assert!((out.objective - out.delta.iter().sum::<f64>()).abs() < 1e-15);
    }

    #[test]
    fn moving_round_is_filled_not_exceeded() {
        let s = scenario(1e-3);
        let start = s.uav.initial_position;
        let q = Trajectory(vec![start, start + Vec2::new(10.0, 0.0), start + Vec2::new(10.0, 0.0), start]);
        let data = SubproblemData::new(&s, &q).unwrap();
        let a = Array2::from_elem((2, 3), true);
        let out = allocate_times(&data, &a).unwrap();
        for k in 0..2 {
            assert!(out.energy_used[k] <= data.budget[k] * (1.0 + 1e-12));
        }
        for n in 0..3 {
            assert!(out.delta[n] >= data.movement[n]);
            assert!(out.mu_sum[n] > 0.0 && out.mu_sum[n] <= 1.0);
        }
    }

    #[test]
    fn newton_jacobian_matches_differences() {
        let s = scenario(1e-3);
        let start = s.uav.initial_position;
        let q = Trajectory(vec![start, start + Vec2::new(10.0, 0.0), start + Vec2::new(10.0, 5.0), start]);
        let data = SubproblemData::new(&s, &q).unwrap();
        let devices: Vec<Device> = (0..2)
            .map(|k| Device {
                rounds: vec![0, 1, 2],
                gains: (0..3).map(|n| data.gains[[k, n]]).collect(),
                available: data.budget[k] - 3.0 * data.comp_energy[k],
                data: &data,
            })
            .collect();
        let slack: Vec<usize> = vec![0, 1, 2];
        let update = |lambda: &[f64], mu: &mut [f64]| -> Result<()> {
            for &n in &slack {
                mu[n] = solve_round_mu(&data, &[0, 1], lambda, n, data.movement[n], mu[n])?;
            }
            Ok(())
        };
        let active = [0, 1];
        let lambda = [2e-2, 5e-3];
        let mut mu = vec![1.0; 3];
        mismatch(&devices, &active, &lambda, &mut mu, &update).unwrap();
        let bound: Vec<bool> = mu.iter().map(|&m| m < 1.0).collect();
        assert!(bound.iter().any(|&b| b));
        let jac = mismatch_jacobian(&devices, &active, &lambda, &mu, &bound);
        let h = 1e-6;
        for j in 0..2 {
            let mut up = lambda;
            let mut down = lambda;
            up[j] *= f64::exp(h);
            down[j] *= f64::exp(-h);
            let fu = mismatch(&devices, &active, &up, &mut mu.clone(), &update).unwrap();
            let fd = mismatch(&devices, &active, &down, &mut mu.clone(), &update).unwrap();
            for i in 0..2 {
                let numeric = (fu[i] - fd[i]) / (2.0 * h);
                assert!((jac[(i, j)] - numeric).abs() <= 1e-5 * (1.0 + numeric.abs()), "({i},{j}): {} vs {numeric}", jac[(i, j)]);
            }
        }
    }

    #[test]
    fn unaffordable_schedule_is_infeasible() {
        let s = scenario(1e-9);
        let q = Trajectory::hold(s.uav.initial_position, 3);
        let data = SubproblemData::new(&s, &q).unwrap();
        let a = Array2::from_elem((2, 3), true);
        assert!(matches!(allocate_times(&data, &a), Err(Error::Infeasible { .. })));
    }
}

//! Primal recovery: turns the Lagrangian minimizer at the final multipliers
//! into a feasible schedule, then improves it by pruning and swapping
//! device-rounds, re-solving the upload allocation after each move.

use ndarray::Array2;

use super::alloc::allocate_times_from;
use super::{allocate_times, unit_upload_time, Allocation, SubproblemData};
use crate::error::{Error, Result};
use crate::model::{min_comm_energy, upload_energy};

/// Schedules with at most this many device-rounds are searched exhaustively.
const EXHAUSTIVE_CELLS: usize = 6;
const SWAP_WIDTH: usize = 4;
const IMPROVE_RTOL: f64 = 1e-12;

fn weight(data: &SubproblemData, a: &Array2<bool>) -> f64 {
    data.scheduled_weight(a)
}

fn affordable(data: &SubproblemData, a: &Array2<bool>, k: usize) -> bool {
    let mut count = 0usize;
    let mut floor = 0.0;
    for n in 0..data.rounds() {
        if a[[k, n]] {
            count += 1;
            floor += min_comm_energy(data.gains[[k, n]], &data.channel);
        }
    }
    count == 0 || data.budget[k] - count as f64 * data.comp_energy[k] > floor * (1.0 + 1e-6)
}

/// Drops the worst-channel rounds of every device that cannot afford its
/// uploads, then adds the cheapest rounds (by `costs`) until the accuracy
/// constraint holds.
fn repair(data: &SubproblemData, start: &Array2<bool>, costs: &Array2<f64>) -> Option<Array2<bool>> {
    let kk = data.num_devices();
    let nn = data.rounds();
    let mut a = start.clone();
    for k in 0..kk {
        while !affordable(data, &a, k) {
            let worst = (0..nn)
                .filter(|&n| a[[k, n]])
                .min_by(|&x, &y| data.gains[[k, x]].total_cmp(&data.gains[[k, y]]))?;
            a[[k, worst]] = false;
        }
    }
    let mut deficit = data.accuracy_c - weight(data, &a);
    if deficit > 0.0 {
        let mut candidates: Vec<(usize, usize)> = (0..kk)
            .flat_map(|k| (0..nn).map(move |n| (k, n)))
            .filter(|&(k, n)| !a[[k, n]])
            .collect();
        candidates.sort_by(|&(k1, n1), &(k2, n2)| {
            (costs[[k1, n1]] / data.data_sq[k1]).total_cmp(&(costs[[k2, n2]] / data.data_sq[k2]))
        });
        for (k, n) in candidates {
            if deficit <= 0.0 {
                break;
            }
            a[[k, n]] = true;
            if affordable(data, &a, k) {
                deficit -= data.data_sq[k];
            } else {
                a[[k, n]] = false;
            }
        }
    }
    (deficit <= 0.0).then_some(a)
}

struct Search<'a> {
    data: &'a SubproblemData,
    schedule: Array2<bool>,
    alloc: Allocation,
    budget: usize,
}

impl Search<'_> {
    fn try_accept(&mut self, candidate: Array2<bool>) -> bool {
        if self.budget == 0 {
            return false;
        }
        self.budget -= 1;
        match allocate_times_from(self.data, &candidate, Some(&self.alloc)) {
            Ok(alloc) if alloc.objective < self.alloc.objective * (1.0 - IMPROVE_RTOL) => {
                self.schedule = candidate;
                self.alloc = alloc;
                true
            }
            _ => false,
        }
    }

    fn fallback_lambda(&self) -> f64 {
        let positive: Vec<f64> = self.alloc.lambda.iter().copied().filter(|&l| l > 0.0).collect();
        if positive.is_empty() {
            self.data.time_unit() / self.data.budget.iter().cloned().fold(f64::INFINITY, f64::min)
        } else {
            positive.iter().sum::<f64>() / positive.len() as f64
        }
    }

    /// Lagrangian price per unit of `D^2` of a device-round at the current
    /// allocation's multipliers.
    fn price(&self, k: usize, n: usize) -> f64 {
        let data = self.data;
        let ch = &data.channel;
        let h = data.gains[[k, n]];
        let lambda = if self.alloc.lambda[k] > 0.0 {
            self.alloc.lambda[k]
        } else {
            self.fallback_lambda()
        };
        let mu = if (0..data.num_devices()).any(|j| self.schedule[[j, n]]) {
            self.alloc.mu_sum[n]
        } else if data.movement[n] > 0.0 {
            0.0
        } else {
            1.0
        };
        let tau = if self.schedule[[k, n]] {
            self.alloc.tau[[k, n]]
        } else {
            unit_upload_time(lambda, mu, h, ch).unwrap_or(f64::INFINITY)
        };
        let energy = if tau.is_finite() && tau > 0.0 {
            upload_energy(tau, h, ch)
        } else {
            min_comm_energy(h, ch)
        };
        let time = if tau.is_finite() { mu * tau } else { 0.0 };
        (lambda * (energy + data.comp_energy[k]) + time + mu * data.comp_time[k]) / data.data_sq[k]
    }

    fn cells(&self, scheduled: bool) -> Vec<(usize, usize, f64)> {
        let mut out: Vec<(usize, usize, f64)> = (0..self.data.num_devices())
            .flat_map(|k| (0..self.data.rounds()).map(move |n| (k, n)))
            .filter(|&(k, n)| self.schedule[[k, n]] == scheduled)
            .map(|(k, n)| (k, n, self.price(k, n)))
            .collect();
        out.sort_by(|a, b| a.2.total_cmp(&b.2));
        if scheduled {
            out.reverse();
        }
        out
    }

    fn surplus(&self) -> f64 {
        weight(self.data, &self.schedule) - self.data.accuracy_c
    }

    /// Removes the most expensive rounds that the accuracy surplus allows,
    /// halving the batch until a removal pays off.
    fn prune(&mut self) -> bool {
        let mut remaining = self.surplus();
        let mut batch = Vec::new();
        for (k, n, _) in self.cells(true) {
            if self.data.data_sq[k] <= remaining {
                remaining -= self.data.data_sq[k];
                batch.push((k, n));
            }
        }
        while !batch.is_empty() {
            let mut candidate = self.schedule.clone();
            for &(k, n) in &batch {
                candidate[[k, n]] = false;
            }
            if self.try_accept(candidate) {
                return true;
            }
            if batch.len() == 1 {
                break;
            }
            batch.truncate(batch.len() / 2);
        }
        false
    }

    fn swap(&mut self) -> bool {
        let surplus = self.surplus();
        let out: Vec<_> = self.cells(true).into_iter().take(SWAP_WIDTH).collect();
        let inn: Vec<_> = self.cells(false).into_iter().take(SWAP_WIDTH).collect();
        let mut pairs = Vec::new();
        for &(ko, no, po) in &out {
            for &(ki, ni, pi) in &inn {
                if pi < po && self.data.data_sq[ki] + surplus >= self.data.data_sq[ko] {
                    pairs.push(((ko, no), (ki, ni), po - pi));
                }
            }
        }
        pairs.sort_by(|a, b| b.2.total_cmp(&a.2));
        for ((ko, no), (ki, ni), _) in pairs {
            let mut candidate = self.schedule.clone();
            candidate[[ko, no]] = false;
            candidate[[ki, ni]] = true;
            if !affordable(self.data, &candidate, ki) {
                continue;
            }
            if self.try_accept(candidate) {
                return true;
            }
        }
        false
    }
}

fn exhaustive(data: &SubproblemData) -> Result<Option<(Array2<bool>, Allocation)>> {
    let kk = data.num_devices();
    let nn = data.rounds();
    let mut best: Option<(Array2<bool>, Allocation)> = None;
    for mask in 0u32..(1 << (kk * nn)) {
        let a = Array2::from_shape_fn((kk, nn), |(k, n)| mask >> (k * nn + n) & 1 == 1);
        if weight(data, &a) < data.accuracy_c {
            continue;
        }
        match allocate_times(data, &a) {
            Ok(alloc) => {
                if best.as_ref().is_none_or(|(_, b)| alloc.objective < b.objective) {
                    best = Some((a, alloc));
                }
            }
            Err(Error::Infeasible { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(best)
}

pub(crate) fn recover_primal(
    data: &SubproblemData,
    starts: &[Array2<bool>],
    costs: &Array2<f64>,
    refine_budget: usize,
) -> Result<(Array2<bool>, Allocation)> {
    let infeasible =
        || Error::infeasible("no schedule meets the accuracy target within the energy budgets");
    if data.num_devices() * data.rounds() <= EXHAUSTIVE_CELLS {
        return exhaustive(data)?.ok_or_else(infeasible);
    }
    let mut best: Option<(Array2<bool>, Allocation)> = None;
    for start in starts {
        let Some(schedule) = repair(data, start, costs) else {
            continue;
        };
        let alloc = match allocate_times(data, &schedule) {
            Ok(a) => a,
            Err(Error::Infeasible { .. }) => continue,
            Err(e) => return Err(e),
        };
        let mut search = Search {
            data,
            schedule,
            alloc,
            budget: refine_budget,
        };
        while search.budget > 0 && (search.prune() || search.swap()) {}
        if best
            .as_ref()
            .is_none_or(|(_, b)| search.alloc.objective < b.objective)
        {
            best = Some((search.schedule, search.alloc));
        }
    }
    best.ok_or_else(infeasible)
}

//! Convergence bound of scheduled FL, the accuracy-constraint constant and the
//! feasibility gate that runs before any solver.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::model::{DeviceSpec, FlSpec, Scenario};

pub const REASON_ACCURACY: &str = "accuracy unreachable";
pub const REASON_ENERGY: &str = "insufficient energy";

/// First term of the bound: `2 (F(w_0) - F*) / (N eta)`.
pub fn initial_gap_term(fl: &FlSpec) -> f64 {
    2.0 * (fl.initial_loss - fl.loss_floor) / (fl.rounds as f64 * fl.learn_rate)
}

/// Upper bound on the N-round average squared global gradient norm for the
/// given `K x N` schedule (column `n` holds `a_k[n+1]`).
pub fn convergence_bound(fl: &FlSpec, devices: &[DeviceSpec], schedule: &Array2<bool>) -> f64 {
    let total: f64 = devices.iter().map(|d| d.dataset_size as f64).sum();
    let k = devices.len() as f64;
    let n = fl.rounds as f64;
    let mut missing = 0.0;
    for (row, dev) in schedule.rows().into_iter().zip(devices) {
        let d2 = (dev.dataset_size as f64).powi(2);
        missing += row.iter().filter(|&&a| !a).count() as f64 * d2;
    }
    initial_gap_term(fl) + 4.0 * k * fl.grad_bound / (n * total * total) * missing
}

/// Constant `C` such that the accuracy requirement reads
/// `sum_n sum_k a_k[n] D_k^2 >= C`.
pub fn accuracy_constant_c(fl: &FlSpec, devices: &[DeviceSpec]) -> f64 {
    let total: f64 = devices.iter().map(|d| d.dataset_size as f64).sum();
    let sum_sq: f64 = devices.iter().map(|d| (d.dataset_size as f64).powi(2)).sum();
    let k = devices.len() as f64;
    let n = fl.rounds as f64;
    n * sum_sq - (fl.accuracy_target - initial_gap_term(fl)) * n * total * total / (4.0 * k * fl.grad_bound)
}

/// `sum_n sum_k a_k[n] D_k^2` for a schedule.
pub fn scheduled_weight(devices: &[DeviceSpec], schedule: &Array2<bool>) -> f64 {
    schedule
        .rows()
        .into_iter()
        .zip(devices)
        .map(|(row, d)| row.iter().filter(|&&a| a).count() as f64 * (d.dataset_size as f64).powi(2))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub min_rounds: u64,
    pub required_scheduled: u64,
    pub energy_floor: f64,
    pub feasible: bool,
    pub reasons: Vec<String>,
}

/// Necessary-and-sufficient feasibility test: enough rounds for the initial
/// gap term and enough total energy for the minimum number of uploads.
pub fn check_feasibility(scenario: &Scenario) -> FeasibilityReport {
    let fl = &scenario.fl;
    let devices = &scenario.devices;
    let k = devices.len() as f64;
    let n = fl.rounds as f64;
    let gap = fl.initial_loss - fl.loss_floor;

    let min_rounds = (2.0 * gap / (fl.accuracy_target * fl.learn_rate)).ceil().max(0.0);

    let total: f64 = scenario.total_data();
    let max_d2 = devices
        .iter()
        .map(|d| (d.dataset_size as f64).powi(2))
        .fold(0.0, f64::max);
    let slack = fl.accuracy_target - initial_gap_term(fl);
    let raw = (k * n - slack * n * total * total / (4.0 * grad_bound_or_tiny(fl) * k * max_d2)).ceil();
    let required = raw.clamp(0.0, k * n);

    let ch = &scenario.channel;
    let h2 = scenario.uav.altitude.powi(2);
    let energy_floor = required * ch.noise_power * ch.model_bits * h2 * std::f64::consts::LN_2
        / (ch.ref_gain * ch.bandwidth);
    let total_energy: f64 = devices.iter().map(|d| d.energy_budget).sum();

    let mut reasons = Vec::new();
    if n < min_rounds {
        reasons.push(format!(
            "{REASON_ACCURACY}: N = {} rounds but at least {} are needed for epsilon = {}",
            fl.rounds, min_rounds, fl.accuracy_target
        ));
    }
    if total_energy < energy_floor {
        reasons.push(format!(
            "{REASON_ENERGY}: total budget {total_energy:.6e} J below floor {energy_floor:.6e} J"
        ));
    }
    FeasibilityReport {
        min_rounds: min_rounds as u64,
        required_scheduled: required as u64,
        energy_floor,
        feasible: reasons.is_empty(),
        reasons,
    }
}

fn grad_bound_or_tiny(fl: &FlSpec) -> f64 {
    fl.grad_bound.max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::model::Scenario;
    use proptest::prelude::*;

    fn fl(n: usize, eps: f64) -> FlSpec {
        FlSpec {
            rounds: n,
            learn_rate: 0.2,
            accuracy_target: eps,
            grad_bound: 0.05,
            initial_loss: 10f64.ln(),
            loss_floor: 0.0,
        }
    }

    fn devs() -> Vec<DeviceSpec> {
        vec![device(0.0, 0.0, 40), device(10.0, 0.0, 60), device(20.0, 0.0, 90)]
    }

    /// Direct evaluation of the bound, written independently of the module code.
    fn oracle_bound(f: &FlSpec, d: &[DeviceSpec], a: &Array2<bool>) -> f64 {
        let dd: Vec<f64> = d.iter().map(|x| x.dataset_size as f64).collect();
        let total: f64 = dd.iter().sum();
        let mut s = 0.0;
        for n in 0..f.rounds {
            for k in 0..d.len() {
                s += (1.0 - a[[k, n]] as u8 as f64) * dd[k] * dd[k];
            }
        }
        2.0 / (f.rounds as f64 * f.learn_rate) * (f.initial_loss - f.loss_floor)
            + 4.0 * d.len() as f64 * f.grad_bound / (f.rounds as f64 * total * total) * s
    }

    #[test]
    fn full_and_empty_schedules() {
        let f = fl(3, 0.5);
        let d = devs();
        let ones = Array2::from_elem((3, 3), true);
        assert_eq!(convergence_bound(&f, &d, &ones), initial_gap_term(&f));
        let zeros = Array2::from_elem((3, 3), false);
        let sum_sq: f64 = d.iter().map(|x| (x.dataset_size as f64).powi(2)).sum();
        let total = 190.0f64;
        let expected = initial_gap_term(&f) + 4.0 * 3.0 * 0.05 * sum_sq / (total * total);
        assert!((convergence_bound(&f, &d, &zeros) - expected).abs() < 1e-12);
        assert!((oracle_bound(&f, &d, &zeros) - expected).abs() < 1e-12);
    }

    #[test]
    fn full_schedule_minimizes_bound_exhaustively() {
        let d = devs();
        for n in 1..=3usize {
            let f = fl(n, 0.5);
            let best = convergence_bound(&f, &d, &Array2::from_elem((3, n), true));
            for mask in 0u32..(1 << (3 * n)) {
                let a = Array2::from_shape_fn((3, n), |(k, j)| mask >> (k * n + j) & 1 == 1);
                let b = convergence_bound(&f, &d, &a);
                assert!(b >= best);
                assert!((b - oracle_bound(&f, &d, &a)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn c_at_full_schedule_target() {
        let d = devs();
        let mut f = fl(5, 0.5);
        f.accuracy_target = convergence_bound(&f, &d, &Array2::from_elem((3, 5), true));
        let sum_sq: f64 = d.iter().map(|x| (x.dataset_size as f64).powi(2)).sum();
        assert!((accuracy_constant_c(&f, &d) - 5.0 * sum_sq).abs() < 1e-6);
    }

    #[test]
    fn accuracy_constraint_equivalent_to_bound_with_equal_sizes() {
        use rand::{Rng, SeedableRng};
        let d = vec![device(0.0, 0.0, 50); 4];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut f = fl(6, 0.0);
        for _ in 0..100 {
            f.accuracy_target = initial_gap_term(&f) + rng.random_range(-0.02..0.25);
            let a = Array2::from_shape_fn((4, 6), |_| rng.random_bool(0.6));
            let c = accuracy_constant_c(&f, &d);
            let lhs = scheduled_weight(&d, &a);
            let by_constraint = lhs >= c;
            let by_bound = oracle_bound(&f, &d, &a) <= f.accuracy_target;
            // Skip exact ties where rounding decides.
            if (lhs - c).abs() > 1e-6 * c.abs().max(1.0) {
                assert_eq!(by_constraint, by_bound);
            }
        }
    }

    fn scenario(n: usize, eps: f64) -> Scenario {
        Scenario {
            devices: devs(),
            uav: uav(),
            channel: channel(),
            fl: fl(n, eps),
        }
    }

    #[test]
    fn feasibility_examples() {
        let mut s = scenario(10, 0.5);
        s.fl.initial_loss = 0.0;
        let r = check_feasibility(&s);
        assert_eq!(r.min_rounds, 0);
        assert!(r.feasible);

        // Vacuous accuracy: |S| clamps at 0.
        let mut s = scenario(10, 100.0);
        s.devices.iter_mut().for_each(|d| d.energy_budget = 1e-30);
        let r = check_feasibility(&s);
        assert_eq!(r.required_scheduled, 0);
        assert_eq!(r.energy_floor, 0.0);
        assert!(r.feasible);

        // Below the full-scheduling bound.
        let s = scenario(10, 0.5 * initial_gap_term(&fl(10, 1.0)));
        let full = convergence_bound(&s.fl, &s.devices, &Array2::from_elem((3, 10), true));
        assert!(full > s.fl.accuracy_target);
        let r = check_feasibility(&s);
        assert!(!r.feasible);
        assert!(r.reasons[0].starts_with(REASON_ACCURACY));
        assert_eq!(r.feasible, r.reasons.is_empty());
    }

    #[test]
    fn energy_floor_reason() {
        let mut s = scenario(10, initial_gap_term(&fl(10, 1.0)) + 0.05);
        s.devices.iter_mut().for_each(|d| d.energy_budget = 1e-9);
        let r = check_feasibility(&s);
        assert!(r.required_scheduled > 0);
        assert!(!r.feasible);
        assert!(r.reasons.iter().any(|m| m.starts_with(REASON_ENERGY)));
    }

    proptest! {
        #[test]
        fn adding_a_device_round_never_increases_bound(mask in 0u32..512, flip in 0usize..9) {
            let d = devs();
            let f = fl(3, 0.5);
            let a = Array2::from_shape_fn((3, 3), |(k, j)| mask >> (k * 3 + j) & 1 == 1);
            let mut b = a.clone();
            b[[flip / 3, flip % 3]] = true;
            prop_assert!(convergence_bound(&f, &d, &b) <= convergence_bound(&f, &d, &a));
        }
    }
}

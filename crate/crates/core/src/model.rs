//! Physical and cost models: line-of-sight channel gain, local computation
//! time and energy, TDMA upload energy and the UAV-side overhead.
//!
//! Everything here works in linear units; dB conversions happen when a
//! scenario file is loaded.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vec2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    /// Ground position `u_k` in meters.
    pub position: Vec2,
    /// Number of local samples `D_k`.
    pub dataset_size: usize,
    /// CPU cycles per sample `c_k`.
    pub cycles_per_sample: f64,
    /// CPU frequency `f_k` in Hz.
    pub cpu_freq: f64,
    /// Capacitance coefficient `alpha_k`.
    pub capacitance_coeff: f64,
    /// Energy budget `E_k` in joules.
    pub energy_budget: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavSpec {
    /// Flight altitude `H` in meters.
    pub altitude: f64,
    /// Launch point `q_F`.
    pub initial_position: Vec2,
    /// Maximum speed in m/s.
    pub max_speed: f64,
    /// Per-slot displacement cap in meters.
    pub max_step: f64,
    pub cpu_freq: f64,
    pub cycles_per_model: f64,
    /// Broadcast power in watts; only enters [`uav_overhead_time`].
    pub tx_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    /// Linear power gain at 1 m (`beta_0`).
    pub ref_gain: f64,
    /// Uplink bandwidth in Hz.
    pub bandwidth: f64,
    /// Noise power in watts over the whole band.
    pub noise_power: f64,
    /// Model size in bits.
    pub model_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlSpec {
    pub rounds: usize,
    pub learn_rate: f64,
    pub accuracy_target: f64,
    /// Bound on squared sample-wise gradient norms.
    pub grad_bound: f64,
    pub initial_loss: f64,
    #[serde(default)]
    pub loss_floor: f64,
}

/// Everything the optimizer needs to know about one deployment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub devices: Vec<DeviceSpec>,
    pub uav: UavSpec,
    pub channel: ChannelSpec,
    pub fl: FlSpec,
}

fn check(cond: bool, what: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidInput(what.to_string()))
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        check(!self.devices.is_empty(), "at least one device is required")?;
        for (k, d) in self.devices.iter().enumerate() {
            let ok = d.dataset_size >= 1
                && d.cpu_freq > 0.0
                && d.energy_budget > 0.0
                && d.capacitance_coeff > 0.0
                && d.cycles_per_sample >= 0.0
                && d.position.iter().all(|v| v.is_finite());
            check(ok, &format!("device {k} violates its field invariants"))?;
        }
        let u = &self.uav;
        check(u.altitude > 0.0, "uav altitude must be positive")?;
        check(u.max_speed > 0.0, "uav max_speed must be positive")?;
        check(
            u.max_step > 0.0 && u.max_step < u.altitude,
            "uav max_step must lie in (0, altitude)",
        )?;
        check(u.cpu_freq > 0.0 && u.tx_power > 0.0, "uav cpu_freq and tx_power must be positive")?;
        let c = &self.channel;
        check(
            c.ref_gain > 0.0 && c.bandwidth > 0.0 && c.noise_power > 0.0 && c.model_bits > 0.0,
            "channel fields must be strictly positive",
        )?;
        let f = &self.fl;
        check(f.rounds >= 1, "fl rounds must be >= 1")?;
        check(f.learn_rate > 0.0, "fl learn_rate must be positive")?;
        check(f.accuracy_target > 0.0, "fl accuracy_target must be positive")?;
        check(f.grad_bound > 0.0, "fl grad_bound must be positive")?;
        check(
            f.initial_loss >= f.loss_floor,
            "fl initial_loss must be >= loss_floor",
        )?;
        Ok(())
    }

    pub fn num_devices(&self) -> usize {
        self.devices.len()
    }

    pub fn rounds(&self) -> usize {
        self.fl.rounds
    }

    /// `D = sum_k D_k`.
    pub fn total_data(&self) -> f64 {
        self.devices.iter().map(|d| d.dataset_size as f64).sum()
    }

    /// Channel gains `h_k[n]` for rounds `n = 1..=N` (column `n - 1`).
    pub fn gains(&self, trajectory: &Trajectory) -> Array2<f64> {
        let k = self.num_devices();
        let n = self.rounds();
        Array2::from_shape_fn((k, n), |(kk, nn)| {
            channel_gain(trajectory.0[nn + 1], &self.devices[kk], &self.uav, &self.channel)
        })
    }

    /// Movement time `||q[n] - q[n-1]|| / V_max` for each round.
    pub fn movement_times(&self, trajectory: &Trajectory) -> Vec<f64> {
        trajectory.movement_times(self.uav.max_speed)
    }
}

/// UAV waypoints `q[0..=N]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Trajectory(pub Vec<Vec2>);

impl Trajectory {
    /// The UAV stays at `start` for all `rounds` slots.
    pub fn hold(start: Vec2, rounds: usize) -> Self {
        Trajectory(vec![start; rounds + 1])
    }

    pub fn rounds(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn points(&self) -> &[Vec2] {
        &self.0
    }

    pub fn movement_times(&self, max_speed: f64) -> Vec<f64> {
        self.0
            .windows(2)
            .map(|w| (w[1] - w[0]).norm() / max_speed)
            .collect()
    }
}

/// Free-space line-of-sight gain `beta_0 / (H^2 + ||q - u_k||^2)`.
pub fn channel_gain(uav_xy: Vec2, device: &DeviceSpec, uav: &UavSpec, ch: &ChannelSpec) -> f64 {
    let d2 = (uav_xy - device.position).norm_squared();
    ch.ref_gain / (uav.altitude * uav.altitude + d2)
}

/// Local computation time per round, `c_k D_k / f_k`.
pub fn comp_time(device: &DeviceSpec) -> f64 {
    device.cycles_per_sample * device.dataset_size as f64 / device.cpu_freq
}

/// Local computation energy per round, `(alpha_k / 2) c_k D_k f_k^2` when scheduled.
pub fn comp_energy(device: &DeviceSpec, scheduled: bool) -> f64 {
    if !scheduled {
        return 0.0;
    }
    0.5 * device.capacitance_coeff
        * device.cycles_per_sample
        * device.dataset_size as f64
        * device.cpu_freq
        * device.cpu_freq
}

/// Synchronous computation phase: the slowest scheduled device, 0 when idle.
pub fn round_comp_time(schedule_col: ArrayView1<'_, bool>, devices: &[DeviceSpec]) -> f64 {
    schedule_col
        .iter()
        .zip(devices)
        .filter(|(&a, _)| a)
        .map(|(_, d)| comp_time(d))
        .fold(0.0, f64::max)
}

/// Energy to push `s` bits through a TDMA slot of length `tau`:
/// `(tau sigma^2 / h)(2^{a s / (B tau)} - 1)`, extended by 0 at `tau = 0`.
pub fn comm_energy(tau: f64, scheduled: bool, gain: f64, ch: &ChannelSpec) -> Result<f64> {
    if tau.is_nan() || tau < 0.0 {
        return Err(Error::InvalidInput(format!(
            "upload time must be non-negative, got {tau}"
        )));
    }
    if !scheduled || tau == 0.0 {
        return Ok(0.0);
    }
    Ok(upload_energy(tau, gain, ch))
}

/// [`comm_energy`] for a scheduled upload with `tau > 0`, without validation.
#[inline]
pub(crate) fn upload_energy(tau: f64, gain: f64, ch: &ChannelSpec) -> f64 {
    let exponent = ch.model_bits * std::f64::consts::LN_2 / (ch.bandwidth * tau);
    tau * ch.noise_power / gain * exponent.exp_m1()
}

/// Infimum of the upload energy as `tau -> infinity`: `s sigma^2 ln2 / (B h)`.
pub fn min_comm_energy(gain: f64, ch: &ChannelSpec) -> f64 {
    ch.model_bits * ch.noise_power * std::f64::consts::LN_2 / (ch.bandwidth * gain)
}

/// Transmit power implied by an upload of length `tau` (reporting only).
pub fn implied_tx_power(tau: f64, gain: f64, ch: &ChannelSpec) -> f64 {
    if tau <= 0.0 {
        0.0
    } else {
        upload_energy(tau, gain, ch) / tau
    }
}

/// Aggregation plus broadcast time at the UAV for one round. The optimizer
/// neglects this term; it is kept for diagnostics.
pub fn uav_overhead_time(
    schedule_col: ArrayView1<'_, bool>,
    gains: ArrayView1<'_, f64>,
    uav: &UavSpec,
    ch: &ChannelSpec,
) -> f64 {
    let min_gain = schedule_col
        .iter()
        .zip(gains.iter())
        .filter(|(&a, _)| a)
        .map(|(_, &h)| h)
        .fold(f64::INFINITY, f64::min);
    if !min_gain.is_finite() {
        return 0.0;
    }
    let k = schedule_col.len() as f64;
    let rate = ch.bandwidth * (1.0 + uav.tx_power * min_gain / ch.noise_power).log2();
    k * uav.cycles_per_model / uav.cpu_freq + ch.model_bits / rate
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn device(x: f64, y: f64, d: usize) -> DeviceSpec {
        DeviceSpec {
            position: Vec2::new(x, y),
            dataset_size: d,
            cycles_per_sample: 10.0,
            cpu_freq: 5e9,
            capacitance_coeff: 1e-28,
            energy_budget: 10.0,
        }
    }

    pub fn uav() -> UavSpec {
        UavSpec {
            altitude: 100.0,
            initial_position: Vec2::new(200.0, 0.0),
            max_speed: 20.0,
            max_step: 10.0,
            cpu_freq: 1e10,
            cycles_per_model: 10.0,
            tx_power: 1.0,
        }
    }

    pub fn channel() -> ChannelSpec {
        ChannelSpec {
            ref_gain: 1e-5,
            bandwidth: 1e7,
            noise_power: 3.98e-14,
            model_bits: 983_040.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn gain_examples() {
        let d = device(0.0, 0.0, 100);
        let g0 = channel_gain(Vec2::new(0.0, 0.0), &d, &uav(), &channel());
        assert!((g0 - 1e-9).abs() < 1e-24);
        let g1 = channel_gain(Vec2::new(100.0, 0.0), &d, &uav(), &channel());
        assert!((g1 - 5e-10).abs() < 1e-24);
        assert!(g0 > g1);
    }

    #[test]
    fn computation_examples() {
        let d = device(0.0, 0.0, 1250);
        assert!((comp_time(&d) - 2.5e-6).abs() < 1e-20);
        assert!((comp_energy(&d, true) - 1.5625e-5).abs() < 1e-18);
        assert_eq!(comp_energy(&d, false), 0.0);
        let d2 = device(0.0, 0.0, 2500);
        assert_eq!(comp_energy(&d2, true) / comp_energy(&d, true), 2.0);
        let zero = DeviceSpec { dataset_size: 0, ..d.clone() };
        assert_eq!(comp_time(&zero), 0.0);
        let fast = DeviceSpec { cpu_freq: 1e10, ..d.clone() };
        assert!((comp_time(&fast) - comp_time(&d) / 2.0).abs() < 1e-20);
    }

    #[test]
    fn round_comp_time_is_max_over_scheduled() {
        let devs = vec![device(0.0, 0.0, 1250), device(0.0, 0.0, 2500)];
        assert_eq!(round_comp_time(array![false, false].view(), &devs), 0.0);
        assert_eq!(round_comp_time(array![true, false].view(), &devs), comp_time(&devs[0]));
        assert!((round_comp_time(array![true, true].view(), &devs) - 5e-6).abs() < 1e-20);
    }

    #[test]
    fn comm_energy_edge_cases() {
        let ch = channel();
        assert_eq!(comm_energy(0.0, true, 1e-9, &ch).unwrap(), 0.0);
        assert_eq!(comm_energy(0.3, false, 1e-9, &ch).unwrap(), 0.0);
        assert!(comm_energy(-1.0, true, 1e-9, &ch).is_err());
        let limit = min_comm_energy(1e-9, &ch);
        assert!((limit - 2.7118e-6).abs() < 1e-9, "{limit}");
        let far = comm_energy(1e6, true, 1e-9, &ch).unwrap();
        assert!(far > limit && (far - limit) / limit < 1e-6);
    }

    #[test]
    fn overhead_is_small_diagnostic() {
        let u = uav();
        let ch = channel();
        assert_eq!(
            uav_overhead_time(array![false, false].view(), array![1e-9, 1e-9].view(), &u, &ch),
            0.0
        );
        let mut col = ndarray::Array1::from_elem(40, false);
        col[0] = true;
        let gains = ndarray::Array1::from_elem(40, 1e-9);
        let t = uav_overhead_time(col.view(), gains.view(), &u, &ch);
        let first: f64 = 40.0 * 10.0 / 1e10;
        assert!((first - 4e-8).abs() < 1e-22);
        assert!(t > first);
    }

    proptest! {
        #[test]
        fn gain_times_distance_is_ref_gain(x in -500.0f64..500.0, y in -500.0f64..500.0, h in 10.0f64..300.0) {
            let d = device(0.0, 0.0, 10);
            let u = UavSpec { altitude: h, ..uav() };
            let g = channel_gain(Vec2::new(x, y), &d, &u, &channel());
            let back = g * (h * h + x * x + y * y);
            prop_assert!(((back - 1e-5) / 1e-5).abs() < 1e-12);
        }

        #[test]
        fn comm_energy_above_infimum_and_decreasing(t1 in 1e-4f64..10.0, dt in 1e-4f64..10.0, g in 1e-12f64..1e-8) {
            let ch = channel();
            let e1 = comm_energy(t1, true, g, &ch).unwrap();
            let e2 = comm_energy(t1 + dt, true, g, &ch).unwrap();
            prop_assert!(e1 > min_comm_energy(g, &ch));
            prop_assert!(e2 < e1);
        }

        #[test]
        fn comm_energy_perspective_is_convex(
            a1 in 0.0f64..1.0, a2 in 0.0f64..1.0, t1 in 1e-3f64..1.0, t2 in 1e-3f64..1.0,
        ) {
            // Evaluate the relaxed energy (tau sigma^2/h)(2^{a s/(B tau)} - 1) at the
            // midpoint of two (a, tau) pairs.
            let ch = channel();
            let h = 1e-9;
            let f = |a: f64, t: f64| t * ch.noise_power / h
                * (a * ch.model_bits * std::f64::consts::LN_2 / (ch.bandwidth * t)).exp_m1();
            let mid = f(0.5 * (a1 + a2), 0.5 * (t1 + t2));
            let avg = 0.5 * (f(a1, t1) + f(a2, t2));
            prop_assert!(mid <= avg * (1.0 + 1e-12) + 1e-300);
        }
    }
}

//! Scenario files and the seeded two-cluster scenario generator.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bcd::SolveOptions;
use crate::error::{Error, Result};
use crate::model::{ChannelSpec, DeviceSpec, FlSpec, Scenario, UavSpec};
use crate::Vec2;

/// Full-scale reference values.
pub const REFERENCE_ROUNDS: f64 = 4000.0;
pub const REFERENCE_MODEL_BITS: f64 = 32.0 * 32.0 * 32.0 * 3.0 * 10.0;
pub const REFERENCE_DATA_RANGE: (f64, f64) = (625.0, 1875.0);
pub const REFERENCE_LEARN_RATE: f64 = 0.01;

const CLUSTER_RADIUS: f64 = 100.0;
const CLUSTER_A: (f64, f64) = (100.0, 100.0);
const CLUSTER_B: (f64, f64) = (300.0, 300.0);

/// Channel parameters as written in a scenario file, in the customary units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelEntry {
    pub ref_gain_db: f64,
    pub bandwidth_hz: f64,
    pub noise_dbm_per_hz: f64,
    pub model_bits: f64,
}

impl ChannelEntry {
    pub fn to_linear(&self) -> ChannelSpec {
        ChannelSpec {
            ref_gain: 10f64.powf(self.ref_gain_db / 10.0),
            bandwidth: self.bandwidth_hz,
            noise_power: 10f64.powf((self.noise_dbm_per_hz - 30.0) / 10.0) * self.bandwidth_hz,
            model_bits: self.model_bits,
        }
    }

    pub fn from_linear(ch: &ChannelSpec) -> Self {
        ChannelEntry {
            ref_gain_db: 10.0 * ch.ref_gain.log10(),
            bandwidth_hz: ch.bandwidth,
            noise_dbm_per_hz: 10.0 * (ch.noise_power / ch.bandwidth).log10() + 30.0,
            model_bits: ch.model_bits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(default)]
    pub seed: Option<u64>,
    pub devices: Vec<DeviceSpec>,
    pub uav: UavSpec,
    pub channel: ChannelEntry,
    pub fl: FlSpec,
    #[serde(default)]
    pub solver: SolveOptions,
}

impl ScenarioFile {
    pub fn to_scenario(&self) -> Result<Scenario> {
        let s = Scenario {
            devices: self.devices.clone(),
            uav: self.uav.clone(),
            channel: self.channel.to_linear(),
            fl: self.fl.clone(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn from_scenario(scenario: &Scenario, seed: Option<u64>, solver: SolveOptions) -> Self {
        ScenarioFile {
            seed,
            devices: scenario.devices.clone(),
            uav: scenario.uav.clone(),
            channel: ChannelEntry::from_linear(&scenario.channel),
            fl: scenario.fl.clone(),
            solver,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("scenario file: {e}")))?;
        file.to_scenario()?;
        Ok(file)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    /// Hex SHA-256 of the compact JSON encoding.
    pub fn hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }
}

fn sample_disc(rng: &mut ChaCha8Rng, center: (f64, f64), radius: f64) -> Vec2 {
    loop {
        let x = rng.random_range(-radius..=radius);
        let y = rng.random_range(-radius..=radius);
        if x * x + y * y <= radius * radius {
            return Vec2::new(center.0 + x, center.1 + y);
        }
    }
}

/// Seeded scenario: `floor(0.3 K)` devices in a 100 m disc around
/// (100, 100), the rest around (300, 300), and the UAV launching from
/// (200, 0). `scale` shrinks the number of rounds, the local dataset sizes
/// and the model size together; `scale = 1` is the full-size setup. The
/// learning rate grows as `1/N` so the initial-gap term of the convergence
/// bound keeps its full-scale value.
pub fn generate_scenario(seed: u64, devices: usize, scale: f64) -> Result<ScenarioFile> {
    if devices < 2 {
        return Err(Error::InvalidInput("at least two devices are required".into()));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidInput(format!("scale must be positive, got {scale}")));
    }
    let rounds = (REFERENCE_ROUNDS * scale).round().max(1.0) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cluster_a = devices * 3 / 10;
    let (lo, hi) = REFERENCE_DATA_RANGE;
    let devices = (0..devices)
        .map(|k| {
            let center = if k < cluster_a { CLUSTER_A } else { CLUSTER_B };
            let position = sample_disc(&mut rng, center, CLUSTER_RADIUS);
            let size = (rng.random_range(lo..=hi) * scale).round().max(1.0) as usize;
            DeviceSpec {
                position,
                dataset_size: size,
                cycles_per_sample: 10.0,
                cpu_freq: 5e9,
                capacitance_coeff: 1e-28,
                energy_budget: 10.0,
            }
        })
        .collect();
    Ok(ScenarioFile {
        seed: Some(seed),
        devices,
        uav: UavSpec {
            altitude: 100.0,
            initial_position: Vec2::new(200.0, 0.0),
            max_speed: 20.0,
            max_step: 10.0,
            cpu_freq: 1e10,
            cycles_per_model: 10.0,
            tx_power: 1.0,
        },
        channel: ChannelEntry {
            ref_gain_db: -50.0,
            bandwidth_hz: 1e7,
            noise_dbm_per_hz: -174.0,
            model_bits: (REFERENCE_MODEL_BITS * scale).round().max(1.0),
        },
        fl: FlSpec {
            rounds,
            learn_rate: REFERENCE_LEARN_RATE * REFERENCE_ROUNDS / rounds as f64,
            accuracy_target: 0.2,
            grad_bound: 0.05,
            initial_loss: 10f64.ln(),
            loss_floor: 0.0,
        },
        solver: SolveOptions::default(),
    })
}

impl Scenario {
    /// Same scenario with every device budget replaced.
    pub fn with_energy(&self, budget: f64) -> Scenario {
        let mut s = self.clone();
        s.devices.iter_mut().for_each(|d| d.energy_budget = budget);
        s
    }

    /// Same scenario with a different accuracy target.
    pub fn with_epsilon(&self, epsilon: f64) -> Scenario {
        let mut s = self.clone();
        s.fl.accuracy_target = epsilon;
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cluster_sizes_follow_floor_rule() {
        let f = generate_scenario(1, 40, 0.01).unwrap();
        let in_a = f
            .devices
            .iter()
            .filter(|d| (d.position - Vec2::new(100.0, 100.0)).norm() <= 100.0)
            .count();
        assert_eq!(in_a, 12);
        assert_eq!(f.devices.len(), 40);
        for (k, d) in f.devices.iter().enumerate() {
            let c = if k < 12 { Vec2::new(100.0, 100.0) } else { Vec2::new(300.0, 300.0) };
            assert!((d.position - c).norm() <= 100.0);
        }
    }

    #[test]
    fn reference_channel_in_linear_units() {
        let ch = generate_scenario(1, 4, 1.0).unwrap().channel.to_linear();
        assert!((ch.ref_gain - 1e-5).abs() < 1e-18);
        assert!((ch.noise_power - 3.981_071_705_534_97e-14).abs() < 1e-24);
        assert_eq!(ch.model_bits, 983_040.0);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_scenario(7, 10, 0.05).unwrap();
        let b = generate_scenario(7, 10, 0.05).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        let c = generate_scenario(8, 10, 0.05).unwrap();
        assert_ne!(a.hash().unwrap(), c.hash().unwrap());
    }

    #[test]
    fn desk_scaling() {
        let f = generate_scenario(2, 10, 0.05).unwrap();
        assert_eq!(f.fl.rounds, 200);
        assert!((f.fl.learn_rate - 0.2).abs() < 1e-15);
        assert!(f.devices.iter().all(|d| (31..=94).contains(&d.dataset_size)));
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(generate_scenario(0, 1, 1.0).is_err());
        assert!(generate_scenario(0, 4, 0.0).is_err());
    }

    #[test]
    fn malformed_file_is_a_config_error() {
        let err = ScenarioFile::from_json("{\"devices\": 3}").unwrap_err();
        assert_eq!(err.category(), "config-parse");
    }

    proptest! {
        #[test]
        fn file_round_trip(seed in 0u64..500, k in 2usize..12) {
            let f = generate_scenario(seed, k, 0.01).unwrap();
            let back = ScenarioFile::from_json(&f.to_json().unwrap()).unwrap();
            prop_assert_eq!(&back, &f);
            let s = f.to_scenario().unwrap();
            let again = ScenarioFile::from_scenario(&s, f.seed, f.solver.clone()).to_scenario().unwrap();
            prop_assert_eq!(&again.devices, &s.devices);
            prop_assert!((again.channel.noise_power / s.channel.noise_power - 1.0).abs() < 1e-12);
            prop_assert!((again.channel.ref_gain / s.channel.ref_gain - 1.0).abs() < 1e-12);
        }
    }
}

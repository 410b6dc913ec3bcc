//! Completion-time minimization for federated learning served by a UAV
//! parameter server.
//!
//! The solver jointly chooses which devices take part in each round, how
//! long each scheduled device uploads, how long each round lasts and where
//! the UAV flies, subject to per-device energy budgets and a target on the
//! convergence bound of the trained model.

pub mod baselines;
pub mod bcd;
pub mod convergence;
pub mod error;
pub mod flsim;
pub mod io;
pub mod model;
pub mod numerics;
pub mod scenario;
pub mod sched;
pub mod trajectory;

pub type Vec2 = nalgebra::Vector2<f64>;

pub use error::{Error, Result};
pub use baselines::SchemeId;
pub use bcd::{solve, SolveOptions, SolveResult};
pub use model::{ChannelSpec, DeviceSpec, FlSpec, Scenario, Trajectory, UavSpec};
pub use scenario::{generate_scenario, ScenarioFile};

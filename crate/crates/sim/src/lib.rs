//! Simulator and tooling around the co-transportation control stack.

pub mod leader;
pub mod live;
pub mod log;
pub mod protocol;
pub mod runner;
pub mod scenario;
pub mod sim;

pub use runner::{run_scenario, write_outputs, RunOutput, Summary};
pub use scenario::{ComplianceCase, LeaderSpec, Scenario};
pub use sim::{LeaderInput, SimConfig, SimError, SimState, Simulation};

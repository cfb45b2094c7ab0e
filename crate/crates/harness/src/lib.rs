//! Scenario files, bundled presets, artifact writers and sweeps for the
//! `statedecomp` simulator.

pub mod runner;
pub mod scenario;

pub use runner::{execute, write_outputs, RunOutput};
pub use scenario::{load_scenario, preset, resolve, Scenario, ScenarioError};

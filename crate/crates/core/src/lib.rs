//! Simulation laboratory for privacy-preserving average consensus by state
//! decomposition.
//!
//! * [`graph`]: topologies, weight schedules, step-size bound.
//! * [`consensus`]: plain and decomposed dynamics, traces.
//! * [`baselines`]: noise-obfuscation protocols for comparison.
//! * [`adversary`]: adversary views and the eavesdropper's integral observer.
//! * [`indistinguishability`]: alternate-world construction and view comparison.
//! * [`metrics`]: convergence and privacy summaries.

pub mod adversary;
pub mod baselines;
pub mod consensus;
pub mod graph;
pub mod indistinguishability;
pub mod metrics;
pub mod streams;

pub use consensus::{run, Protocol, RunConfig, Trace};
pub use graph::{Edge, Topology};

//! Experiment harness for the additive-network protocols: topology
//! generators, graph oracles, single trials and seeded sweeps.

pub mod experiment;
pub mod oracle;
pub mod sweep;
pub mod topology;

pub use experiment::{run_trial, ProtocolKind, TrialOutcome, TrialSpec};
pub use oracle::OracleReport;
pub use sweep::{run_sweep, ExperimentSpec, SweepResult, TrialStats};
pub use topology::{gen_topology, TopologySpec};

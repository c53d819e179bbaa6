//! Experiment runner for the ccc-dht simulator: configuration, single runs,
//! size sweeps, rate-change runs and the oracle verification suite.

pub mod run;
pub mod spec;
pub mod verify;

pub use run::{run_experiment, Artifacts};
pub use spec::{parse_file, ExperimentSpec, Scenario, SpecError};

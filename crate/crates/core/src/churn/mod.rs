//! M/G/inf churn: Poisson arrivals, independent session lengths, and the
//! deterministic event loop that drives the overlay.

pub mod config;
pub mod engine;
pub mod session;

pub use config::{ChurnConfig, RateChange};
pub use engine::{
    run, ChurnEvent, EventKind, Outcome, RunOutput, RunSummary, Simulation, StepReport,
};
pub use session::{sample_session, SessionDist};

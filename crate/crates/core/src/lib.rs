//! A churn-tolerant distributed hash table built on a cube-connected-cycles
//! template graph, plus the discrete-event simulator used to study it.
//!
//! Peers cover random template labels; peers on the same or adjacent labels
//! are linked. Keys hash to labels and are found by bit-fixing routes. Under
//! Poisson arrivals and arbitrary session lengths every label stays covered
//! with high probability, so routing keeps working without repair traffic.

pub mod churn;
pub mod error;
pub mod metrics;
pub mod num;
pub mod overlay;
pub mod resize;
pub mod stats;
pub mod template;
pub mod tree;

pub use churn::{ChurnConfig, RateChange, Simulation};
pub use error::{Error, Result};
pub use metrics::MetricsSnapshot;
pub use overlay::{DataKey, OverlayState, PeerId, PeerNode};
pub use resize::ResizePolicy;
pub use template::{TemplateParams, VertexLabel};
pub use tree::SpanningTreeState;

/// Simulated time.
pub type Time = f64;

/// Session-length distribution over simulated time.
pub type SessionDistribution = churn::SessionDist<f64>;

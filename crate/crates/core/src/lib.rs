//! Cycle-accurate network-on-chip simulator.
//!
//! Cores are concentrated onto fabric ports by edges, messages are cut into
//! cells, and cells cross an ideal output-queued switch, an input-queued or
//! VOQ crossbar, or a dimension-ordered mesh. Workloads are open-loop
//! synthetic loads or closed-loop memory transactions. [`run`] simulates one
//! configuration; [`experiment`] sweeps a parameter and writes CSV.

pub mod arbiter;
pub mod config;
pub mod configfile;
pub mod edge;
pub mod error;
pub mod experiment;
pub mod fabric;
pub mod kernel;
pub mod mesh;
pub mod metrics;
pub mod presets;
pub mod switch;
pub mod workload;

pub use config::{BufferDepth, EdgeMode, FabricKind, RunConfig};
pub use error::{ConfigError, SimError};
pub use kernel::{run, Simulation};
pub use metrics::MetricsReport;
pub use workload::{MessageClass, TrafficConfig, TrafficMode};

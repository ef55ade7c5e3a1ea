//! Discrete-event harness: configuration, the simulated loop, metrics and
//! run artifacts, plus a wall-clock live mode over UDP.

pub mod config;
pub mod events;
pub mod live;
pub mod metrics;
pub mod output;
pub mod robot;
pub mod scenarios;
pub mod sim;

pub use config::{ConfigError, Diagnostic, Mode, Resolved, SimConfig, Transport};
pub use events::{Action, Event, EventQueue};
pub use metrics::{m2m_latency, M2mSemantics};
pub use sim::{run, simulate, MetricsReport, SimError, SimOutput};

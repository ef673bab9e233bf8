//! Scenario orchestration, metrics and scheme comparison.

mod compare;
mod io;
mod metrics;
mod monitor;
mod runner;
mod scenario;

pub use compare::{compare_schemes, ComparisonRow, ComparisonSummary, Scheme};
pub use io::{read_trace, write_comparison, write_events, write_metrics, write_solves, write_trace, TRACE_HEADER};
pub use metrics::{average_longitudinal_error, compute_metrics, MetricsReport, TerminalBlock};
pub use monitor::{monitor_lyapunov, LyapunovReport, DECREASE_TOL};
pub use runner::{run_simulation, LyapunovSample, RunOutput, RunStats, TraceRow};
pub use scenario::{ControllerConfig, PlatoonConfig, ReferenceConfig, Scenario};

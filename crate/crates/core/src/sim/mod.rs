//! Deterministic packet-level simulation of the platform.

mod engine;
mod event;
mod host;
mod latency;
mod metrics;
mod scenario;
mod shell;
mod sweep;
mod timing;
mod traffic;

pub use engine::{run, Engine, RunResult, TraceRecord};
pub use event::{Event, EventKind, EventQueue, FifoRef, Wake};
pub use latency::{explain_latency, header_growth, measure_latency, LatencyBreakdown, LatencySummary};
pub use metrics::*;
pub use scenario::{packet_time, parse_ip, parse_mac, ReconfigAction, Scenario, ScenarioError};
pub use shell::{spawn_engine, ChannelHost};
pub use sweep::{run_many, run_many_seq};
pub use timing::{lane_words, opi_move, vs_words};
pub use traffic::{Arrivals, Generator, Selection, SizeDist, TrafficProfile};

//! Real-time performance service for audified stars.
//!
//! [`session`] holds the pure control-plane state machine, [`engine`] renders
//! audio blocks from session snapshots, and [`server`] wires both to a
//! WebSocket control endpoint and an audio sink.

pub mod engine;
pub mod filter;
pub mod sample;
pub mod server;
pub mod session;
pub mod sink;

pub use engine::{Engine, DEFAULT_BLOCK_FRAMES, DEFAULT_SAMPLE_RATE};
pub use filter::spectral_filter;
pub use server::{serve, PerformError, DEFAULT_OUTPUT_BUFFER_BLOCKS, ServerConfig, ServerHandle, StatsSnapshot};
pub use session::{apply_control, parse_message, ControlMessage, ControlledPartial, Reply, SessionState};
pub use sink::SinkSpec;

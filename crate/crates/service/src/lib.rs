//! Recording service: drives a (simulated or replayed) device through a
//! prompting session and streams packets plus control messages to
//! WebSocket clients.

pub mod engine;
pub mod protocol;
pub mod server;

pub use engine::{DeviceKind, Engine, EngineConfig, EngineError, Frame};
pub use protocol::{parse_client, ClientMessage, ErrorCode, ServerMessage};
pub use server::{serve, ServerHandle};

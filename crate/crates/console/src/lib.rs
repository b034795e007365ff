//! Live console: runs one robot under the skill runtime and talks to
//! operators over a WebSocket at `/ws`.

pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{Command, CommandMessage, ServerMessage, TelemetryFrame, SCHEMA_VERSION};
pub use server::{router, run, serve, spawn_tick_loop, ConsoleError, ServeConfig, TickHandle};
pub use session::Session;

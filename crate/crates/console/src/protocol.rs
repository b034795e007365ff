//! Messages exchanged over the console WebSocket. Every message is one text
//! frame holding a JSON object with `schema_version` and `type` fields.

use ecp_core::composer::TransitionOutcome;
use ecp_core::simcore::AgentState;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// Operator command. `kind` selects the variant; payload fields sit beside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Command {
    SwitchSkill { skill: String },
    Pause,
    Resume,
    Reset,
    SetSpeed { speed: f64 },
}

impl Command {
    /// Payload field carried by this kind, if any.
    pub fn payload_field(&self) -> Option<&'static str> {
        match self {
            Command::SwitchSkill { .. } => Some("skill"),
            Command::SetSpeed { .. } => Some("speed"),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Command::SwitchSkill { .. } => "switch-skill",
            Command::Pause => "pause",
            Command::Resume => "resume",
            Command::Reset => "reset",
            Command::SetSpeed { .. } => "set-speed",
        }
    }
}

/// Client to server message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandMessage {
    pub schema_version: u32,
    #[serde(rename = "type")]
    pub kind: CommandTag,
    /// Echoed in the ack or error reply.
    pub id: u64,
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandTag {
    Command,
}

impl CommandMessage {
    pub fn new(id: u64, command: Command) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind: CommandTag::Command,
            id,
            command,
        }
    }
}

/// Controller mode as shown to operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModeView {
    Expert {
        skill: String,
        phase: f64,
    },
    Transitioning {
        source: String,
        target: String,
        target_phase: f64,
    },
}

/// Result of the most recent finished transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeView {
    pub source: String,
    pub target: String,
    pub outcome: TransitionOutcome,
    /// Transition length (s).
    pub duration: f64,
    /// Session time at which it ended (s).
    pub sim_time: f64,
}

/// State broadcast after every control step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryFrame {
    /// Strictly increasing per session.
    pub seq: u64,
    /// Seconds since the Unix epoch when the frame was produced.
    pub wall_time: f64,
    /// Simulated seconds since the service started; resets do not rewind it.
    pub sim_time: f64,
    pub state: AgentState,
    pub mode: ModeView,
    /// Normalized transition time in [0, 1] while transitioning.
    pub transition_time: Option<f64>,
    pub last_outcome: Option<OutcomeView>,
    /// Skill named by a switch request that has not been acted on yet.
    pub pending: Option<String>,
    /// A body part other than a foot touches the ground.
    pub fallen: bool,
    pub speed: f64,
    /// Number of resets so far.
    pub resets: u64,
}

/// Machine-readable reason for a rejected command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorCode {
    BadRequest,
    SchemaVersion,
    UnknownSkill,
    InvalidSpeed,
    Internal,
}

/// Server to client message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ServerMessage {
    /// First message on every connection.
    Hello {
        schema_version: u32,
        skills: Vec<String>,
        control_hz: f64,
        speed: f64,
        paused: bool,
    },
    Telemetry {
        schema_version: u32,
        #[serde(flatten)]
        frame: TelemetryFrame,
    },
    Ack {
        schema_version: u32,
        id: u64,
        command: String,
    },
    Error {
        schema_version: u32,
        /// Id of the offending command, when it could be read.
        id: Option<u64>,
        code: ErrorCode,
        message: String,
    },
}

impl ServerMessage {
    pub fn telemetry(frame: TelemetryFrame) -> Self {
        ServerMessage::Telemetry {
            schema_version: SCHEMA_VERSION,
            frame,
        }
    }

    pub fn ack(id: u64, command: &Command) -> Self {
        ServerMessage::Ack {
            schema_version: SCHEMA_VERSION,
            id,
            command: command.kind().into(),
        }
    }

    pub fn error(id: Option<u64>, code: ErrorCode, message: impl Into<String>) -> Self {
        ServerMessage::Error {
            schema_version: SCHEMA_VERSION,
            id,
            code,
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

/// Parses a client text frame. Errors come back as the reply to send.
pub fn parse_command(text: &str) -> Result<CommandMessage, ServerMessage> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ServerMessage::error(None, ErrorCode::BadRequest, e.to_string()))?;
    let id = value.get("id").and_then(serde_json::Value::as_u64);
    match value.get("schema_version").and_then(serde_json::Value::as_u64) {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        Some(v) => {
            return Err(ServerMessage::error(
                id,
                ErrorCode::SchemaVersion,
                format!("schema_version {v} is not supported; expected {SCHEMA_VERSION}"),
            ))
        }
        None => return Err(ServerMessage::error(id, ErrorCode::BadRequest, "missing schema_version")),
    }
    let msg: CommandMessage =
        serde_json::from_value(value.clone()).map_err(|e| ServerMessage::error(id, ErrorCode::BadRequest, e.to_string()))?;
    if let Some(fields) = value.get("command").and_then(serde_json::Value::as_object) {
        let allowed = msg.command.payload_field();
        if let Some(extra) = fields.keys().find(|k| *k != "kind" && Some(k.as_str()) != allowed) {
            return Err(ServerMessage::error(
                id,
                ErrorCode::BadRequest,
                format!("{} takes no field {extra:?}", msg.command.kind()),
            ));
        }
    }
    Ok(msg)
}

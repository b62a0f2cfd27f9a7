//! Wire protocol of the live service.
//!
//! Every WebSocket text message carries one JSON frame
//! `{"v": 1, "type": "state" | "input" | "cmd" | "error", "payload": {...}}`.
//!
//! Client to server:
//! - `input`: `{"f_x": N, "f_y": N, "m_z": N·m}`, the leader wrench, held until the next input.
//! - `cmd`: `{"cmd": "pause" | "resume" | "reset"}` or `{"cmd": "set-case", "case": 1..4}`.
//!
//! Server to client:
//! - `state`: [`StateFrame`], broadcast at a fixed rate.
//! - `error`: `{"message": "..."}` for rejected frames.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::log::TickRecord;
use crate::sim::LeaderInput;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub v: u32,
    #[serde(flatten)]
    pub body: Body,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "lowercase")]
pub enum Body {
    State(Box<StateFrame>),
    Input(LeaderInput),
    Cmd(Command),
    Error(ErrorFrame),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Command {
    Pause,
    Resume,
    Reset,
    SetCase { case: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Leader,
    Viewer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    /// Role of the receiving client.
    pub role: Role,
    pub paused: bool,
    /// Latest tick; absent before the first tick.
    pub record: Option<TickRecord>,
    /// Efficiency over the trailing window, once a full window exists.
    pub eta: Option<f64>,
    /// Leader input in force at the latest tick; absent under the scripted hold.
    pub input: Option<LeaderInput>,
    /// Case requested for the next foot strike.
    pub pending_case: Option<u8>,
    /// Resets since start, including those after a fault.
    pub resets: u64,
    /// Description of the fault behind the latest reset, if any.
    pub fault: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorFrame {
    pub message: String,
}

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("unsupported protocol version {0}")]
    Version(u32),
    #[error("clients may only send input and cmd frames")]
    Direction,
    #[error("input must be finite")]
    NonFinite,
}

/// Message a client may send.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClientMessage {
    Input(LeaderInput),
    Cmd(Command),
}

impl Frame {
    pub fn new(body: Body) -> Self {
        Self { v: PROTOCOL_VERSION, body }
    }

    pub fn error(message: impl Into<String>) -> Self {
        Self::new(Body::Error(ErrorFrame { message: message.into() }))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("frames serialize")
    }
}

/// Parse a client frame.
pub fn decode_client(text: &str) -> Result<ClientMessage, ProtocolError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    match value.get("v").and_then(serde_json::Value::as_u64) {
        Some(v) if v == u64::from(PROTOCOL_VERSION) => {}
        Some(v) => return Err(ProtocolError::Version(u32::try_from(v).unwrap_or(u32::MAX))),
        None => return Err(ProtocolError::Malformed("missing protocol version `v`".into())),
    }
    let frame: Frame = serde_json::from_value(value).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    match frame.body {
        Body::Input(i) if [i.f_x, i.f_y, i.m_z].iter().all(|x| x.is_finite()) => Ok(ClientMessage::Input(i)),
        Body::Input(_) => Err(ProtocolError::NonFinite),
        Body::Cmd(c) => Ok(ClientMessage::Cmd(c)),
        Body::State(_) | Body::Error(_) => Err(ProtocolError::Direction),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn input_and_commands_decode() {
        let m = decode_client(r#"{"v":1,"type":"input","payload":{"f_x":20,"f_y":0,"m_z":1.5}}"#).unwrap();
        assert_eq!(m, ClientMessage::Input(LeaderInput { f_x: 20.0, f_y: 0.0, m_z: 1.5 }));
        for (text, cmd) in [
            (r#"{"cmd":"pause"}"#, Command::Pause),
            (r#"{"cmd":"resume"}"#, Command::Resume),
            (r#"{"cmd":"reset"}"#, Command::Reset),
            (r#"{"cmd":"set-case","case":4}"#, Command::SetCase { case: 4 }),
        ] {
            let frame = format!(r#"{{"v":1,"type":"cmd","payload":{text}}}"#);
            assert_eq!(decode_client(&frame).unwrap(), ClientMessage::Cmd(cmd));
        }
    }

    #[test]
    fn bad_frames_are_rejected() {
        assert!(matches!(decode_client("not json"), Err(ProtocolError::Malformed(_))));
        assert!(matches!(decode_client(r#"{"type":"cmd","payload":{"cmd":"pause"}}"#), Err(ProtocolError::Malformed(_))));
        assert_eq!(decode_client(r#"{"v":2,"type":"cmd","payload":{"cmd":"pause"}}"#), Err(ProtocolError::Version(2)));
        assert!(matches!(decode_client(r#"{"v":1,"type":"cmd","payload":{"cmd":"jump"}}"#), Err(ProtocolError::Malformed(_))));
        assert!(matches!(decode_client(r#"{"v":1,"type":"input","payload":{"f_x":1}}"#), Err(ProtocolError::Malformed(_))));
        assert_eq!(decode_client(r#"{"v":1,"type":"error","payload":{"message":"x"}}"#), Err(ProtocolError::Direction));
        assert!(decode_client(r#"{"v":1,"type":"input","payload":{"f_x":1e999,"f_y":0,"m_z":0}}"#).is_err());
    }

    #[test]
    fn frames_round_trip() {
        let f = Frame::error("nope");
        assert_eq!(f.to_json(), r#"{"v":1,"type":"error","payload":{"message":"nope"}}"#);
        let back: Frame = serde_json::from_str(&f.to_json()).unwrap();
        assert_eq!(back, f);
    }
}

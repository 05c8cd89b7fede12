//! rosbridge v2.0 envelopes and the ROS message schemas the plugins consume.
//!
//! Payload field names and nesting follow the ROS1 message definitions, so the same JSON
//! is accepted by an unmodified rosbridge server. Stamps are written as `{secs, nsecs}`.

mod envelope;
mod types;

pub use envelope::{
    decode, decode_str, encode, encode_string, Advertise, BridgeOp, Publish, Status, StatusLevel, Subscribe,
    Unadvertise, Unsubscribe,
};
pub use types::{CommandString, Marker, MarkerAction, MarkerArray, MarkerType, PoseStamped, Rgba, TfMessage};

use serde_json::Value;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DecodeError {
    /// Malformed or truncated JSON text.
    #[error("invalid JSON at line {line} column {column}: {reason}")]
    Syntax { line: usize, column: usize, reason: String },
    /// Well-formed JSON whose shape does not match the schema.
    #[error("at {path}: {reason}")]
    Schema { path: String, reason: String },
    #[error("unsupported op {0:?}")]
    UnsupportedOp(String),
    #[error("{0}")]
    Invalid(String),
}

impl DecodeError {
    pub(crate) fn from_json(err: serde_json::Error) -> Self {
        DecodeError::Syntax {
            line: err.line(),
            column: err.column(),
            reason: err.to_string(),
        }
    }

    pub(crate) fn from_path(err: serde_path_to_error::Error<serde_json::Error>) -> Self {
        let path = err.path().to_string();
        DecodeError::Schema {
            path,
            reason: err.into_inner().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EncodeError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{0}")]
    Invalid(String),
}

/// A payload type that travels inside a `publish` envelope.
pub trait RosMessage: Sized {
    /// ROS type name, e.g. `geometry_msgs/PoseStamped`.
    const TYPE: &'static str;

    fn to_json(&self) -> Result<Value, EncodeError>;

    fn from_json(value: &Value) -> Result<Self, DecodeError>;
}

/// Message types this engine understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MessageKind {
    Tf,
    MarkerArray,
    PoseStamped,
    String,
}

impl MessageKind {
    pub const ALL: [MessageKind; 4] = [
        MessageKind::Tf,
        MessageKind::MarkerArray,
        MessageKind::PoseStamped,
        MessageKind::String,
    ];

    pub fn type_name(self) -> &'static str {
        match self {
            MessageKind::Tf => TfMessage::TYPE,
            MessageKind::MarkerArray => MarkerArray::TYPE,
            MessageKind::PoseStamped => PoseStamped::TYPE,
            MessageKind::String => CommandString::TYPE,
        }
    }

    pub fn from_type_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.type_name() == name)
    }

    /// Decodes and re-encodes `value` under this schema, which validates it.
    pub fn validate(self, value: &Value) -> Result<(), DecodeError> {
        match self {
            MessageKind::Tf => TfMessage::from_json(value).map(drop),
            MessageKind::MarkerArray => MarkerArray::from_json(value).map(drop),
            MessageKind::PoseStamped => PoseStamped::from_json(value).map(drop),
            MessageKind::String => CommandString::from_json(value).map(drop),
        }
    }
}

pub(crate) fn from_value<T: serde::de::DeserializeOwned>(value: &Value) -> Result<T, DecodeError> {
    serde_path_to_error::deserialize(value).map_err(DecodeError::from_path)
}

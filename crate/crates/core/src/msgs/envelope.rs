use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::DecodeError;

/// One rosbridge protocol message.
///
/// Serialization is canonical: `op` first, then the variant's fields in declaration order,
/// absent optionals omitted. `publish` payloads are `serde_json::Value`, whose objects keep
/// keys sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum BridgeOp {
    Subscribe(Subscribe),
    Unsubscribe(Unsubscribe),
    Advertise(Advertise),
    Unadvertise(Unadvertise),
    Publish(Publish),
    Status(Status),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subscribe {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub topic: String,
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    pub msg_type: Option<String>,
    /// Minimum milliseconds between messages, enforced by the server.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub throttle_rate: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub queue_length: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unsubscribe {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub topic: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Advertise {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub topic: String,
    #[serde(rename = "type")]
    pub msg_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unadvertise {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub topic: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Publish {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub topic: String,
    pub msg: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatusLevel {
    Error,
    Warning,
    Info,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Status {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub level: StatusLevel,
    pub msg: String,
}

impl BridgeOp {
    pub fn subscribe(topic: impl Into<String>, msg_type: impl Into<String>) -> Self {
        BridgeOp::Subscribe(Subscribe {
            id: None,
            topic: topic.into(),
            msg_type: Some(msg_type.into()),
            throttle_rate: None,
            queue_length: None,
        })
    }

    pub fn unsubscribe(topic: impl Into<String>) -> Self {
        BridgeOp::Unsubscribe(Unsubscribe {
            id: None,
            topic: topic.into(),
        })
    }

    pub fn advertise(topic: impl Into<String>, msg_type: impl Into<String>) -> Self {
        BridgeOp::Advertise(Advertise {
            id: None,
            topic: topic.into(),
            msg_type: msg_type.into(),
        })
    }

    pub fn unadvertise(topic: impl Into<String>) -> Self {
        BridgeOp::Unadvertise(Unadvertise {
            id: None,
            topic: topic.into(),
        })
    }

    pub fn publish(topic: impl Into<String>, msg: Value) -> Self {
        BridgeOp::Publish(Publish {
            id: None,
            topic: topic.into(),
            msg,
        })
    }

    pub fn status(level: StatusLevel, msg: impl Into<String>) -> Self {
        BridgeOp::Status(Status {
            id: None,
            level,
            msg: msg.into(),
        })
    }

    pub fn op_name(&self) -> &'static str {
        match self {
            BridgeOp::Subscribe(_) => "subscribe",
            BridgeOp::Unsubscribe(_) => "unsubscribe",
            BridgeOp::Advertise(_) => "advertise",
            BridgeOp::Unadvertise(_) => "unadvertise",
            BridgeOp::Publish(_) => "publish",
            BridgeOp::Status(_) => "status",
        }
    }

    pub fn topic(&self) -> Option<&str> {
        match self {
            BridgeOp::Subscribe(s) => Some(&s.topic),
            BridgeOp::Unsubscribe(s) => Some(&s.topic),
            BridgeOp::Advertise(s) => Some(&s.topic),
            BridgeOp::Unadvertise(s) => Some(&s.topic),
            BridgeOp::Publish(s) => Some(&s.topic),
            BridgeOp::Status(_) => None,
        }
    }

    fn check(&self) -> Result<(), DecodeError> {
        match self.topic() {
            Some("") => Err(DecodeError::Schema {
                path: "topic".into(),
                reason: "empty topic".into(),
            }),
            _ => Ok(()),
        }
    }
}

const KNOWN_OPS: [&str; 6] = [
    "subscribe",
    "unsubscribe",
    "advertise",
    "unadvertise",
    "publish",
    "status",
];

pub fn encode_string(op: &BridgeOp) -> String {
    serde_json::to_string(op).expect("bridge ops always serialize")
}

pub fn encode(op: &BridgeOp) -> Vec<u8> {
    encode_string(op).into_bytes()
}

/// Decodes one envelope. Nothing is returned unless the whole input parses.
pub fn decode(bytes: &[u8]) -> Result<BridgeOp, DecodeError> {
    let value: Value = serde_json::from_slice(bytes).map_err(DecodeError::from_json)?;
    let op = match value.get("op") {
        Some(Value::String(op)) => op.clone(),
        Some(_) => {
            return Err(DecodeError::Schema {
                path: "op".into(),
                reason: "op must be a string".into(),
            })
        }
        None => {
            return Err(DecodeError::Schema {
                path: "op".into(),
                reason: "missing op".into(),
            })
        }
    };
    if !KNOWN_OPS.contains(&op.as_str()) {
        return Err(DecodeError::UnsupportedOp(op));
    }
    let parsed: BridgeOp = serde_path_to_error::deserialize(&value).map_err(DecodeError::from_path)?;
    parsed.check()?;
    Ok(parsed)
}

pub fn decode_str(text: &str) -> Result<BridgeOp, DecodeError> {
    decode(text.as_bytes())
}

// SPDX-License-Identifier: Apache-2.0

//! Rosbridge v2 style JSON messages.
//!
//! Only the seven pub/sub and service ops are understood. Encoding is
//! canonical: `op` first, then `id` when present, then the remaining fields
//! in alphabetical order. Nested payloads are emitted with sorted keys.

use std::fmt;

use serde_json::{Map, Value};
use thiserror::Error;

/// A topic or service name. Always non-empty and rooted at `/`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TopicName(String);

impl TopicName {
    pub fn new(name: impl Into<String>) -> Result<Self, DecodeError> {
        let name = name.into();
        if name.len() < 2 || !name.starts_with('/') {
            return Err(DecodeError::SchemaViolation(format!(
                "name {name:?} must be non-empty and start with '/'"
            )));
        }
        Ok(Self(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TopicName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for TopicName {
    type Err = DecodeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl AsRef<str> for TopicName {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// Wire op discriminator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Advertise,
    Unadvertise,
    Publish,
    Subscribe,
    Unsubscribe,
    CallService,
    ServiceResponse,
}

impl OpKind {
    pub const ALL: [OpKind; 7] = [
        OpKind::Advertise,
        OpKind::Unadvertise,
        OpKind::Publish,
        OpKind::Subscribe,
        OpKind::Unsubscribe,
        OpKind::CallService,
        OpKind::ServiceResponse,
    ];

    pub fn wire_name(self) -> &'static str {
        match self {
            OpKind::Advertise => "advertise",
            OpKind::Unadvertise => "unadvertise",
            OpKind::Publish => "publish",
            OpKind::Subscribe => "subscribe",
            OpKind::Unsubscribe => "unsubscribe",
            OpKind::CallService => "call_service",
            OpKind::ServiceResponse => "service_response",
        }
    }

    pub fn from_wire(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.wire_name() == name)
    }
}

/// One protocol frame.
#[derive(Debug, Clone, PartialEq)]
pub enum ProtocolMessage {
    Advertise {
        id: Option<String>,
        topic: TopicName,
        msg_type: String,
    },
    Unadvertise {
        id: Option<String>,
        topic: TopicName,
    },
    Publish {
        id: Option<String>,
        topic: TopicName,
        msg: Value,
    },
    Subscribe {
        id: Option<String>,
        topic: TopicName,
        msg_type: Option<String>,
    },
    Unsubscribe {
        id: Option<String>,
        topic: TopicName,
    },
    CallService {
        id: Option<String>,
        service: TopicName,
        service_type: Option<String>,
        args: Option<Value>,
    },
    ServiceResponse {
        id: Option<String>,
        service: TopicName,
        values: Option<Value>,
        result: bool,
    },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("unknown op {0:?}")]
    UnknownOp(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
}

impl ProtocolMessage {
    pub fn kind(&self) -> OpKind {
        match self {
            ProtocolMessage::Advertise { .. } => OpKind::Advertise,
            ProtocolMessage::Unadvertise { .. } => OpKind::Unadvertise,
            ProtocolMessage::Publish { .. } => OpKind::Publish,
            ProtocolMessage::Subscribe { .. } => OpKind::Subscribe,
            ProtocolMessage::Unsubscribe { .. } => OpKind::Unsubscribe,
            ProtocolMessage::CallService { .. } => OpKind::CallService,
            ProtocolMessage::ServiceResponse { .. } => OpKind::ServiceResponse,
        }
    }

    pub fn id(&self) -> Option<&str> {
        match self {
            ProtocolMessage::Advertise { id, .. }
            | ProtocolMessage::Unadvertise { id, .. }
            | ProtocolMessage::Publish { id, .. }
            | ProtocolMessage::Subscribe { id, .. }
            | ProtocolMessage::Unsubscribe { id, .. }
            | ProtocolMessage::CallService { id, .. }
            | ProtocolMessage::ServiceResponse { id, .. } => id.as_deref(),
        }
    }

    /// Topic for topic ops, `None` for service ops.
    pub fn topic(&self) -> Option<&TopicName> {
        match self {
            ProtocolMessage::Advertise { topic, .. }
            | ProtocolMessage::Unadvertise { topic, .. }
            | ProtocolMessage::Publish { topic, .. }
            | ProtocolMessage::Subscribe { topic, .. }
            | ProtocolMessage::Unsubscribe { topic, .. } => Some(topic),
            _ => None,
        }
    }

    pub fn publish(topic: TopicName, msg: Value) -> Self {
        ProtocolMessage::Publish {
            id: None,
            topic,
            msg,
        }
    }

    pub fn subscribe(topic: TopicName, msg_type: Option<String>) -> Self {
        ProtocolMessage::Subscribe {
            id: None,
            topic,
            msg_type,
        }
    }

    pub fn unsubscribe(topic: TopicName) -> Self {
        ProtocolMessage::Unsubscribe { id: None, topic }
    }

    pub fn advertise(topic: TopicName, msg_type: impl Into<String>) -> Self {
        ProtocolMessage::Advertise {
            id: None,
            topic,
            msg_type: msg_type.into(),
        }
    }
}

/// Encode to canonical JSON text.
pub fn encode(msg: &ProtocolMessage) -> String {
    // (wire field name, value) excluding op and id; sorted below.
    let mut fields: Vec<(&'static str, Value)> = Vec::with_capacity(4);
    let name = |t: &TopicName| Value::String(t.as_str().to_owned());
    match msg {
        ProtocolMessage::Advertise {
            topic, msg_type, ..
        } => {
            fields.push(("topic", name(topic)));
            fields.push(("type", Value::String(msg_type.clone())));
        }
        ProtocolMessage::Unadvertise { topic, .. } | ProtocolMessage::Unsubscribe { topic, .. } => {
            fields.push(("topic", name(topic)));
        }
        ProtocolMessage::Publish { topic, msg, .. } => {
            fields.push(("msg", msg.clone()));
            fields.push(("topic", name(topic)));
        }
        ProtocolMessage::Subscribe {
            topic, msg_type, ..
        } => {
            fields.push(("topic", name(topic)));
            if let Some(t) = msg_type {
                fields.push(("type", Value::String(t.clone())));
            }
        }
        ProtocolMessage::CallService {
            service,
            service_type,
            args,
            ..
        } => {
            if let Some(a) = args {
                fields.push(("args", a.clone()));
            }
            fields.push(("service", name(service)));
            if let Some(t) = service_type {
                fields.push(("type", Value::String(t.clone())));
            }
        }
        ProtocolMessage::ServiceResponse {
            service,
            values,
            result,
            ..
        } => {
            fields.push(("result", Value::Bool(*result)));
            fields.push(("service", name(service)));
            if let Some(v) = values {
                fields.push(("values", v.clone()));
            }
        }
    }
    fields.sort_by_key(|(k, _)| *k);

    let mut out = String::with_capacity(64);
    out.push_str("{\"op\":\"");
    out.push_str(msg.kind().wire_name());
    out.push('"');
    if let Some(id) = msg.id() {
        out.push_str(",\"id\":");
        out.push_str(&Value::String(id.to_owned()).to_string());
    }
    for (key, value) in fields {
        out.push_str(",\"");
        out.push_str(key);
        out.push_str("\":");
        out.push_str(&value.to_string());
    }
    out.push('}');
    out
}

/// Decode one frame. Field order on input is irrelevant.
pub fn decode(text: &str) -> Result<ProtocolMessage, DecodeError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| DecodeError::MalformedJson(e.to_string()))?;
    let Value::Object(mut obj) = value else {
        return Err(DecodeError::SchemaViolation(
            "frame must be a JSON object".into(),
        ));
    };
    let op = match obj.remove("op") {
        Some(Value::String(op)) => op,
        Some(_) => {
            return Err(DecodeError::SchemaViolation(
                "\"op\" must be a string".into(),
            ))
        }
        None => return Err(DecodeError::SchemaViolation("missing \"op\"".into())),
    };
    let kind = OpKind::from_wire(&op).ok_or(DecodeError::UnknownOp(op))?;
    let mut fields = Fields { obj, kind };
    let id = fields.opt_string("id")?;

    let msg = match kind {
        OpKind::Advertise => ProtocolMessage::Advertise {
            id,
            topic: fields.name("topic")?,
            msg_type: fields.type_name("type")?,
        },
        OpKind::Unadvertise => ProtocolMessage::Unadvertise {
            id,
            topic: fields.name("topic")?,
        },
        OpKind::Publish => ProtocolMessage::Publish {
            id,
            topic: fields.name("topic")?,
            msg: fields.required("msg")?,
        },
        OpKind::Subscribe => ProtocolMessage::Subscribe {
            id,
            topic: fields.name("topic")?,
            msg_type: fields.opt_type_name("type")?,
        },
        OpKind::Unsubscribe => ProtocolMessage::Unsubscribe {
            id,
            topic: fields.name("topic")?,
        },
        OpKind::CallService => ProtocolMessage::CallService {
            id,
            service: fields.name("service")?,
            service_type: fields.opt_type_name("type")?,
            args: fields.obj.remove("args"),
        },
        OpKind::ServiceResponse => ProtocolMessage::ServiceResponse {
            id,
            service: fields.name("service")?,
            values: fields.obj.remove("values"),
            result: match fields.required("result")? {
                Value::Bool(b) => b,
                _ => {
                    return Err(DecodeError::SchemaViolation(
                        "\"result\" must be a boolean".into(),
                    ))
                }
            },
        },
    };
    fields.finish()?;
    Ok(msg)
}

struct Fields {
    obj: Map<String, Value>,
    kind: OpKind,
}

impl Fields {
    fn required(&mut self, key: &str) -> Result<Value, DecodeError> {
        self.obj.remove(key).ok_or_else(|| {
            DecodeError::SchemaViolation(format!(
                "{} requires field {key:?}",
                self.kind.wire_name()
            ))
        })
    }

    fn string(&mut self, key: &str) -> Result<String, DecodeError> {
        match self.required(key)? {
            Value::String(s) => Ok(s),
            _ => Err(DecodeError::SchemaViolation(format!(
                "field {key:?} must be a string"
            ))),
        }
    }

    fn opt_string(&mut self, key: &str) -> Result<Option<String>, DecodeError> {
        if self.obj.contains_key(key) {
            self.string(key).map(Some)
        } else {
            Ok(None)
        }
    }

    fn name(&mut self, key: &str) -> Result<TopicName, DecodeError> {
        TopicName::new(self.string(key)?)
    }

    fn type_name(&mut self, key: &str) -> Result<String, DecodeError> {
        let t = self.string(key)?;
        if t.is_empty() {
            return Err(DecodeError::SchemaViolation(format!(
                "field {key:?} must not be empty"
            )));
        }
        Ok(t)
    }

    fn opt_type_name(&mut self, key: &str) -> Result<Option<String>, DecodeError> {
        if self.obj.contains_key(key) {
            self.type_name(key).map(Some)
        } else {
            Ok(None)
        }
    }

    fn finish(self) -> Result<(), DecodeError> {
        if let Some(extra) = self.obj.keys().next() {
            return Err(DecodeError::SchemaViolation(format!(
                "unexpected field {extra:?} for {}",
                self.kind.wire_name()
            )));
        }
        Ok(())
    }
}

// SPDX-License-Identifier: Apache-2.0

//! Message generators, the key-order scanner and the malformed corpus.

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use serde_json::{json, Value};
use smartcloud_core::protocol::{decode, encode, DecodeError, ProtocolMessage, TopicName};

pub fn arb_name() -> impl Strategy<Value = TopicName> {
    "/[a-z_]{1,8}(/[a-z0-9_]{1,6}){0,2}".prop_map(|s| TopicName::new(s).unwrap())
}

pub fn arb_type() -> impl Strategy<Value = String> {
    "[a-z_]{1,10}/[A-Z][A-Za-z]{0,12}"
}

pub fn arb_json() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        any::<i64>().prop_map(|n| json!(n)),
        any::<f64>()
            .prop_filter("finite", |f| f.is_finite())
            .prop_map(|f| json!(f)),
        "\\PC{0,12}".prop_map(Value::String),
    ];
    leaf.prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(Value::Array),
            prop::collection::btree_map("[a-z_]{1,6}", inner, 0..4)
                .prop_map(|m| Value::Object(m.into_iter().collect())),
        ]
    })
}

pub fn arb_id() -> impl Strategy<Value = Option<String>> {
    prop::option::of("[a-z0-9:\\-]{1,10}")
}

pub fn arb_message() -> impl Strategy<Value = ProtocolMessage> {
    prop_oneof![
        (arb_id(), arb_name(), arb_type()).prop_map(|(id, topic, msg_type)| {
            ProtocolMessage::Advertise {
                id,
                topic,
                msg_type,
            }
        }),
        (arb_id(), arb_name()).prop_map(|(id, topic)| ProtocolMessage::Unadvertise { id, topic }),
        (arb_id(), arb_name(), arb_json()).prop_map(|(id, topic, msg)| ProtocolMessage::Publish {
            id,
            topic,
            msg
        }),
        (arb_id(), arb_name(), prop::option::of(arb_type())).prop_map(|(id, topic, msg_type)| {
            ProtocolMessage::Subscribe {
                id,
                topic,
                msg_type,
            }
        }),
        (arb_id(), arb_name()).prop_map(|(id, topic)| ProtocolMessage::Unsubscribe { id, topic }),
        (
            arb_id(),
            arb_name(),
            prop::option::of(arb_type()),
            prop::option::of(arb_json())
        )
            .prop_map(
                |(id, service, service_type, args)| ProtocolMessage::CallService {
                    id,
                    service,
                    service_type,
                    args,
                }
            ),
        (
            arb_id(),
            arb_name(),
            prop::option::of(arb_json()),
            any::<bool>()
        )
            .prop_map(
                |(id, service, values, result)| ProtocolMessage::ServiceResponse {
                    id,
                    service,
                    values,
                    result,
                }
            ),
    ]
}

pub fn check_round_trip(m: &ProtocolMessage) -> Result<(), TestCaseError> {
    let text = encode(m);
    prop_assert_eq!(decode(&text), Ok(m.clone()));
    // deterministic
    prop_assert_eq!(encode(m), text);
    Ok(())
}

pub fn check_key_order(m: &ProtocolMessage) -> Result<(), TestCaseError> {
    let mut keys = top_level_keys(&encode(m));
    prop_assert_eq!(keys.remove(0), "op");
    if m.id().is_some() {
        prop_assert_eq!(keys.remove(0), "id");
    }
    let mut sorted = keys.clone();
    sorted.sort_unstable();
    prop_assert_eq!(keys, sorted);
    Ok(())
}

/// Keys of the outermost object, in textual order.
pub fn top_level_keys(text: &str) -> Vec<String> {
    let mut keys = Vec::new();
    let mut depth = 0;
    let mut in_string = false;
    let mut escaped = false;
    let mut current = String::new();
    // a string at depth 1 is a key when the previous structural char was '{' or ','
    let mut expecting_key = false;
    for c in text.chars() {
        if in_string {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
                if depth == 1 && expecting_key {
                    keys.push(std::mem::take(&mut current));
                    expecting_key = false;
                }
                continue;
            }
            if depth == 1 && expecting_key {
                current.push(c);
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' | '[' => {
                depth += 1;
                expecting_key = depth == 1 && c == '{';
            }
            '}' | ']' => depth -= 1,
            ',' if depth == 1 => expecting_key = true,
            _ => {}
        }
    }
    keys
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Malformed,
    UnknownOp,
    Schema,
}

pub fn class_of(e: &DecodeError) -> ErrorClass {
    match e {
        DecodeError::MalformedJson(_) => ErrorClass::Malformed,
        DecodeError::UnknownOp(_) => ErrorClass::UnknownOp,
        DecodeError::SchemaViolation(_) => ErrorClass::Schema,
    }
}

/// Inputs that must fail to decode, with the class each must fail with.
pub fn malformed_corpus() -> Vec<(&'static str, ErrorClass)> {
    use ErrorClass::*;
    vec![
        ("", Malformed),
        ("{", Malformed),
        ("{\"op\":\"publish\",", Malformed),
        ("not json", Malformed),
        ("{'op':'publish'}", Malformed),
        (
            "{\"op\":\"publish\",\"topic\":\"/a\",\"msg\":{}}}",
            Malformed,
        ),
        ("{\"op\":\"fragment\",\"id\":\"x\"}", UnknownOp),
        ("{\"op\":\"png\",\"data\":\"\"}", UnknownOp),
        (
            "{\"op\":\"Publish\",\"topic\":\"/a\",\"msg\":{}}",
            UnknownOp,
        ),
        ("{\"op\":\"\"}", UnknownOp),
        ("[]", Schema),
        ("42", Schema),
        ("{}", Schema),
        ("{\"op\":7}", Schema),
        ("{\"op\":\"publish\",\"topic\":\"/a\"}", Schema),
        ("{\"op\":\"publish\",\"msg\":{}}", Schema),
        ("{\"op\":\"publish\",\"topic\":\"a\",\"msg\":{}}", Schema),
        ("{\"op\":\"publish\",\"topic\":\"/\",\"msg\":{}}", Schema),
        (
            "{\"op\":\"publish\",\"topic\":\"/a\",\"msg\":{},\"extra\":1}",
            Schema,
        ),
        ("{\"op\":\"advertise\",\"topic\":\"/a\"}", Schema),
        (
            "{\"op\":\"advertise\",\"topic\":\"/a\",\"type\":\"\"}",
            Schema,
        ),
        ("{\"op\":\"subscribe\",\"topic\":5}", Schema),
        (
            "{\"op\":\"unsubscribe\",\"topic\":\"/a\",\"type\":\"x/Y\"}",
            Schema,
        ),
        ("{\"op\":\"call_service\",\"args\":{}}", Schema),
        (
            "{\"op\":\"service_response\",\"service\":\"/s\",\"result\":\"yes\"}",
            Schema,
        ),
        ("{\"op\":\"service_response\",\"service\":\"/s\"}", Schema),
        (
            "{\"op\":\"publish\",\"id\":3,\"topic\":\"/a\",\"msg\":{}}",
            Schema,
        ),
    ]
}

use serde::{Deserialize, Serialize};

use super::ProtocolError;

/// Longest accepted line, not counting the `\n` delimiter.
pub const MAX_LINE_BYTES: usize = 64 * 1024;

/// One line of the wire protocol. See `docs/protocol.md` for the grammar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Frame {
    Hello {
        name: String,
        #[serde(default)]
        capabilities: Vec<String>,
    },
    Msg {
        turn: u64,
        text: String,
    },
    Verdict {
        label: String,
        confidence: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
    },
    Bye {},
    Error {
        message: String,
    },
}

impl Frame {
    pub fn kind(&self) -> &'static str {
        match self {
            Frame::Hello { .. } => "hello",
            Frame::Msg { .. } => "msg",
            Frame::Verdict { .. } => "verdict",
            Frame::Bye {} => "bye",
            Frame::Error { .. } => "error",
        }
    }

    pub fn hello(name: &str, capabilities: &[&str]) -> Frame {
        Frame::Hello {
            name: name.to_string(),
            capabilities: capabilities.iter().map(|c| c.to_string()).collect(),
        }
    }

    pub fn msg(turn: u64, text: &str) -> Frame {
        Frame::Msg {
            turn,
            text: text.to_string(),
        }
    }
}

/// Serializes a frame to one line (no trailing newline).
pub fn encode(frame: &Frame) -> Result<String, ProtocolError> {
    let line = serde_json::to_string(frame).map_err(|e| ProtocolError::ProtocolViolation(e.to_string()))?;
    if line.len() > MAX_LINE_BYTES {
        return Err(ProtocolError::Oversize(line.len()));
    }
    Ok(line)
}

/// Parses one line (without its delimiter).
pub fn decode(line: &str) -> Result<Frame, ProtocolError> {
    if line.len() > MAX_LINE_BYTES {
        return Err(ProtocolError::Oversize(line.len()));
    }
    serde_json::from_str(line).map_err(|e| ProtocolError::ProtocolViolation(format!("malformed frame: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wire_shapes_are_fixed() {
        assert_eq!(encode(&Frame::msg(4, "hi")).unwrap(), r#"{"type":"msg","turn":4,"text":"hi"}"#);
        assert_eq!(encode(&Frame::Bye {}).unwrap(), r#"{"type":"bye"}"#);
        assert_eq!(
            encode(&Frame::hello("bot", &["verdict"])).unwrap(),
            r#"{"type":"hello","name":"bot","capabilities":["verdict"]}"#
        );
        assert_eq!(
            encode(&Frame::Verdict { label: "mirror".into(), confidence: 0.5, reason: None }).unwrap(),
            r#"{"type":"verdict","label":"mirror","confidence":0.5}"#
        );
    }

    #[test]
    fn encoded_frames_never_contain_a_raw_newline() {
        let line = encode(&Frame::msg(0, "a\nb")).unwrap();
        assert!(!line.contains('\n'));
    }

    #[test]
    fn decode_rejects_garbage_and_oversize() {
        assert!(matches!(decode("not json"), Err(ProtocolError::ProtocolViolation(_))));
        assert!(matches!(decode(r#"{"type":"nope"}"#), Err(ProtocolError::ProtocolViolation(_))));
        let big = format!(r#"{{"type":"msg","turn":0,"text":"{}"}}"#, "x".repeat(MAX_LINE_BYTES));
        assert!(matches!(decode(&big), Err(ProtocolError::Oversize(_))));
        assert!(matches!(encode(&Frame::msg(0, &"x".repeat(MAX_LINE_BYTES))), Err(ProtocolError::Oversize(_))));
    }

    fn arb_frame() -> impl Strategy<Value = Frame> {
        prop_oneof![
            (".{0,40}", prop::collection::vec("[a-z:]{1,10}", 0..4))
                .prop_map(|(name, capabilities)| Frame::Hello { name, capabilities }),
            (any::<u64>(), "\\PC{0,200}").prop_map(|(turn, text)| Frame::Msg { turn, text }),
            ("[a-z]{1,10}", 0.0f64..=1.0, prop::option::of(".{0,20}"))
                .prop_map(|(label, confidence, reason)| Frame::Verdict { label, confidence, reason }),
            Just(Frame::Bye {}),
            ".{0,60}".prop_map(|message| Frame::Error { message }),
        ]
    }

    proptest! {
        #[test]
        fn framing_round_trips(f in arb_frame()) {
            let line = encode(&f).unwrap();
            prop_assert!(!line.contains('\n'));
            prop_assert_eq!(decode(&line).unwrap(), f);
        }
    }
}

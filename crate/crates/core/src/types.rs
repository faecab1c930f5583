//! Session vocabulary shared by every module.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reason attached to an undecided verdict when mirror and clone cannot be told apart.
pub const REASON_MIRROR_CLONE_EQUIVALENT: &str = "mirror-clone-equivalent";
/// Reason attached to an undecided verdict when the turn budget ran out.
pub const REASON_BUDGET: &str = "budget";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error("message text is empty")]
    EmptyText,
    #[error("message text contains a newline")]
    NewlineInText,
    #[error("turn {got} does not follow {prev:?}")]
    TurnOrder { prev: Option<u64>, got: u64 },
    #[error("message belongs to session `{got}`, transcript is `{expected}`")]
    SessionMismatch { expected: String, got: String },
    #[error("seed derivation label must be non-empty")]
    EmptyLabel,
    #[error("unknown {what} `{value}`")]
    Unknown { what: &'static str, value: String },
    #[error("invalid verdict: {0}")]
    InvalidVerdict(String),
    #[error("transcript line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Which side of the conversation a message came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Seat {
    Subject,
    Counterpart,
}

impl Seat {
    pub fn flipped(self) -> Seat {
        match self {
            Seat::Subject => Seat::Counterpart,
            Seat::Counterpart => Seat::Subject,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(pub String);

impl SessionId {
    pub fn new(id: impl Into<String>) -> Self {
        SessionId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Checks the text invariant every utterance must satisfy.
///
/// Newline is the wire and transcript frame delimiter, so it can never appear
/// inside a message. Violating text is rejected, never normalized.
pub fn validate_text(text: &str) -> Result<(), CoreError> {
    if text.is_empty() {
        return Err(CoreError::EmptyText);
    }
    if text.contains('\n') {
        return Err(CoreError::NewlineInText);
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct WireMessage {
    session_id: SessionId,
    turn: u64,
    seat: Seat,
    text: String,
}

/// One utterance in a session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "WireMessage", into = "WireMessage")]
pub struct Message {
    session_id: SessionId,
    turn_index: u64,
    seat: Seat,
    text: String,
}

impl TryFrom<WireMessage> for Message {
    type Error = CoreError;

    fn try_from(w: WireMessage) -> Result<Self, Self::Error> {
        Message::new(w.session_id, w.turn, w.seat, w.text)
    }
}

impl From<Message> for WireMessage {
    fn from(m: Message) -> Self {
        WireMessage {
            session_id: m.session_id,
            turn: m.turn_index,
            seat: m.seat,
            text: m.text,
        }
    }
}

impl Message {
    pub fn new(
        session_id: SessionId,
        turn_index: u64,
        seat: Seat,
        text: impl Into<String>,
    ) -> Result<Self, CoreError> {
        let text = text.into();
        validate_text(&text)?;
        Ok(Message {
            session_id,
            turn_index,
            seat,
            text,
        })
    }

    pub fn session_id(&self) -> &SessionId {
        &self.session_id
    }

    pub fn turn_index(&self) -> u64 {
        self.turn_index
    }

    pub fn seat(&self) -> Seat {
        self.seat
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn with_seat(&self, seat: Seat) -> Message {
        Message {
            seat,
            ..self.clone()
        }
    }

    /// Single-line JSON object with the fields `session_id`, `turn`, `seat`, `text`.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("message serialization is infallible")
    }
}

/// Ordered messages of one session. Turn indices count messages and start at 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    session_id: SessionId,
    messages: Vec<Message>,
}

impl Transcript {
    pub fn new(session_id: SessionId) -> Self {
        Transcript {
            session_id,
            messages: Vec::new(),
        }
    }

    pub fn session_id(&self) -> &SessionId {
        &self.session_id
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Message> {
        self.messages.iter()
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn last(&self) -> Option<&Message> {
        self.messages.last()
    }

    pub fn next_turn(&self) -> u64 {
        self.messages.last().map_or(0, |m| m.turn_index + 1)
    }

    pub fn push(&mut self, message: Message) -> Result<(), CoreError> {
        if message.session_id != self.session_id {
            return Err(CoreError::SessionMismatch {
                expected: self.session_id.0.clone(),
                got: message.session_id.0,
            });
        }
        let prev = self.messages.last().map(|m| m.turn_index);
        let ok = match prev {
            None => message.turn_index == 0,
            Some(p) => message.turn_index > p,
        };
        if !ok {
            return Err(CoreError::TurnOrder {
                prev,
                got: message.turn_index,
            });
        }
        self.messages.push(message);
        Ok(())
    }

    /// Appends `text` at the next turn index.
    pub fn push_text(&mut self, seat: Seat, text: impl Into<String>) -> Result<&Message, CoreError> {
        let msg = Message::new(self.session_id.clone(), self.next_turn(), seat, text)?;
        self.messages.push(msg);
        Ok(self.messages.last().expect("just pushed"))
    }

    /// The first `len` messages as a transcript of their own.
    pub fn prefix(&self, len: usize) -> Transcript {
        Transcript {
            session_id: self.session_id.clone(),
            messages: self.messages[..len.min(self.messages.len())].to_vec(),
        }
    }

    /// True when seats alternate strictly, starting with the subject.
    pub fn seats_alternate(&self) -> bool {
        self.messages.iter().enumerate().all(|(i, m)| {
            let expected = if i % 2 == 0 { Seat::Subject } else { Seat::Counterpart };
            m.seat == expected
        })
    }

    /// True when every counterpart message repeats the subject message before it.
    pub fn mirror_identity_holds(&self) -> bool {
        self.messages
            .windows(2)
            .filter(|w| w[1].seat == Seat::Counterpart)
            .all(|w| w[0].seat == Seat::Subject && w[0].text == w[1].text)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            out.push_str(&m.to_json_line());
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(self.to_jsonl().as_bytes())
    }

    /// Parses line-delimited JSON, re-checking every message and turn invariant.
    pub fn from_jsonl<R: BufRead>(reader: R) -> Result<Transcript, CoreError> {
        let mut transcript: Option<Transcript> = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| CoreError::Parse {
                line: i + 1,
                reason: e.to_string(),
            })?;
            if line.is_empty() {
                continue;
            }
            let msg: Message = serde_json::from_str(&line).map_err(|e| CoreError::Parse {
                line: i + 1,
                reason: e.to_string(),
            })?;
            let t = transcript.get_or_insert_with(|| Transcript::new(msg.session_id.clone()));
            t.push(msg).map_err(|e| CoreError::Parse {
                line: i + 1,
                reason: e.to_string(),
            })?;
        }
        Ok(transcript.unwrap_or_else(|| Transcript::new(SessionId::new("empty"))))
    }
}

impl<'a> IntoIterator for &'a Transcript {
    type Item = &'a Message;
    type IntoIter = std::slice::Iter<'a, Message>;

    fn into_iter(self) -> Self::IntoIter {
        self.messages.iter()
    }
}

/// Flips every seat; order, turn indices and texts are untouched.
///
/// A shadow copy uses this to see the conversation from the other chair.
pub fn role_swap(t: &Transcript) -> Transcript {
    Transcript {
        session_id: t.session_id.clone(),
        messages: t
            .messages
            .iter()
            .map(|m| m.with_seat(m.seat.flipped()))
            .collect(),
    }
}

/// The topology a session is wired in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Other,
    Mimicker,
    Mirror,
    SelfLoop,
}

impl Condition {
    pub const CLASSIFIABLE: [Condition; 3] = [Condition::Other, Condition::Mimicker, Condition::Mirror];

    pub fn label(self) -> &'static str {
        match self {
            Condition::Other => "other",
            Condition::Mimicker => "mimicker",
            Condition::Mirror => "mirror",
            Condition::SelfLoop => "self_loop",
        }
    }

    /// The verdict label a correct subject would give, if any.
    pub fn expected_verdict(self) -> Option<VerdictLabel> {
        match self {
            Condition::Other => Some(VerdictLabel::Other),
            Condition::Mimicker => Some(VerdictLabel::Mimicker),
            Condition::Mirror => Some(VerdictLabel::Mirror),
            Condition::SelfLoop => None,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Condition {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "other" => Ok(Condition::Other),
            "mimicker" | "clone" => Ok(Condition::Mimicker),
            "mirror" => Ok(Condition::Mirror),
            "self_loop" | "selfloop" | "self-loop" => Ok(Condition::SelfLoop),
            _ => Err(CoreError::Unknown {
                what: "condition",
                value: s.to_string(),
            }),
        }
    }
}

/// What the subject may claim. There is deliberately no self-loop label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictLabel {
    Other,
    Mimicker,
    Mirror,
    Undecided,
}

impl VerdictLabel {
    pub const ALL: [VerdictLabel; 4] = [
        VerdictLabel::Other,
        VerdictLabel::Mimicker,
        VerdictLabel::Mirror,
        VerdictLabel::Undecided,
    ];

    pub fn label(self) -> &'static str {
        match self {
            VerdictLabel::Other => "other",
            VerdictLabel::Mimicker => "mimicker",
            VerdictLabel::Mirror => "mirror",
            VerdictLabel::Undecided => "undecided",
        }
    }
}

impl fmt::Display for VerdictLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for VerdictLabel {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "other" => Ok(VerdictLabel::Other),
            "mimicker" => Ok(VerdictLabel::Mimicker),
            "mirror" => Ok(VerdictLabel::Mirror),
            "undecided" => Ok(VerdictLabel::Undecided),
            _ => Err(CoreError::Unknown {
                what: "verdict label",
                value: s.to_string(),
            }),
        }
    }
}

/// The subject's classification of its counterpart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    label: VerdictLabel,
    confidence: f64,
    turns_used: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
}

impl Verdict {
    pub fn new(
        label: VerdictLabel,
        confidence: f64,
        turns_used: u32,
        reason: Option<String>,
    ) -> Result<Self, CoreError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(CoreError::InvalidVerdict(format!(
                "confidence {confidence} outside [0,1]"
            )));
        }
        if turns_used == 0 {
            return Err(CoreError::InvalidVerdict("turns_used must be positive".into()));
        }
        if label == VerdictLabel::Undecided && reason.as_deref().is_none_or(str::is_empty) {
            return Err(CoreError::InvalidVerdict("undecided verdict needs a reason".into()));
        }
        Ok(Verdict {
            label,
            confidence,
            turns_used,
            reason,
        })
    }

    pub fn decided(label: VerdictLabel, confidence: f64, turns_used: u32) -> Self {
        assert_ne!(label, VerdictLabel::Undecided, "use Verdict::undecided");
        Verdict::new(label, confidence.clamp(0.0, 1.0), turns_used.max(1), None)
            .expect("decided verdict fields are clamped")
    }

    pub fn undecided(reason: &str, confidence: f64, turns_used: u32) -> Self {
        Verdict::new(
            VerdictLabel::Undecided,
            confidence.clamp(0.0, 1.0),
            turns_used.max(1),
            Some(reason.to_string()),
        )
        .expect("undecided verdict fields are clamped")
    }

    pub fn label(&self) -> VerdictLabel {
        self.label
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    pub fn turns_used(&self) -> u32 {
        self.turns_used
    }

    pub fn reason(&self) -> Option<&str> {
        self.reason.as_deref()
    }

    pub fn is_undecided(&self) -> bool {
        self.label == VerdictLabel::Undecided
    }
}

/// Graded self-recognition, from unaware (L0) to locating oneself in memory (L4).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RecognitionLevel {
    /// Chats on as if the counterpart were someone else.
    #[default]
    L0,
    /// Has noticed its words coming back verbatim.
    L1,
    /// The copying is continuous.
    L2,
    /// Concluded that it is chatting with itself.
    L3,
    /// Located itself as a program in an address space.
    L4,
}

impl fmt::Display for RecognitionLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RecognitionLevel::L0 => "L0",
            RecognitionLevel::L1 => "L1",
            RecognitionLevel::L2 => "L2",
            RecognitionLevel::L3 => "L3",
            RecognitionLevel::L4 => "L4",
        };
        f.write_str(s)
    }
}

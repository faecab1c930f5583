//! Line-delimited JSON protocol for out-of-process agents.
//!
//! Any program that reads and writes one JSON object per line on its standard
//! streams (or over TCP) can take either seat. The exact grammar lives in
//! `docs/protocol.md`.

mod connection;
pub mod frame;

use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use crate::agents::AgentSpec;
use crate::types::{validate_text, Message, Seat, Verdict, VerdictLabel};
pub use connection::{Connection, ReadFailure};
pub use frame::{decode, encode, Frame, MAX_LINE_BYTES};

pub const DEFAULT_TIMEOUT_MS: u64 = 5000;
pub const HARNESS_NAME: &str = "textmirror";
/// Capability an agent declares when it can judge its counterpart itself.
pub const CAP_VERDICT: &str = "verdict";
/// Environment variables set for spawned agents.
pub const ENV_SEED: &str = "TEXTMIRROR_SEED";
pub const ENV_SEAT: &str = "TEXTMIRROR_SEAT";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("handshake failure: {0}")]
    HandshakeFailure(String),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("counterpart failure: {0}")]
    CounterpartFailure(String),
    #[error("cannot start agent: {0}")]
    Launch(String),
    #[error("frame of {0} bytes exceeds the line limit")]
    Oversize(usize),
}

/// What an agent said about itself in its hello frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AgentDescriptor {
    pub name: String,
    pub capabilities: Vec<String>,
}

impl AgentDescriptor {
    pub fn can_judge(&self) -> bool {
        self.capabilities.iter().any(|c| c == CAP_VERDICT)
    }
}

fn seat_label(seat: Seat) -> &'static str {
    match seat {
        Seat::Subject => "subject",
        Seat::Counterpart => "counterpart",
    }
}

/// Exchanges hello frames. The harness speaks first and tells the agent its seat.
pub fn handshake(conn: &mut Connection, seat: Seat, timeout_ms: u64) -> Result<AgentDescriptor, ProtocolError> {
    let seat_cap = format!("seat:{}", seat_label(seat));
    conn.send(&Frame::hello(HARNESS_NAME, &[seat_cap.as_str()]))
        .map_err(|e| ProtocolError::HandshakeFailure(e.to_string()))?;
    match conn.recv(Duration::from_millis(timeout_ms)) {
        Ok(Frame::Hello { name, capabilities }) => Ok(AgentDescriptor { name, capabilities }),
        Ok(other) => Err(ProtocolError::HandshakeFailure(format!(
            "expected hello, got {}",
            other.kind()
        ))),
        Err(ReadFailure::Timeout) => Err(ProtocolError::HandshakeFailure(format!("no hello within {timeout_ms} ms"))),
        Err(ReadFailure::Oversize) => Err(ProtocolError::HandshakeFailure("oversize".into())),
        Err(ReadFailure::Closed) => Err(ProtocolError::HandshakeFailure("closed before hello".into())),
        Err(ReadFailure::Malformed(e) | ReadFailure::Io(e)) => Err(ProtocolError::HandshakeFailure(e)),
    }
}

fn read_failure(f: ReadFailure, timeout_ms: u64) -> ProtocolError {
    match f {
        ReadFailure::Timeout => ProtocolError::CounterpartFailure(format!("no reply within {timeout_ms} ms")),
        ReadFailure::Closed => ProtocolError::CounterpartFailure("connection closed".into()),
        ReadFailure::Io(e) => ProtocolError::CounterpartFailure(e),
        ReadFailure::Oversize => ProtocolError::ProtocolViolation("oversize frame".into()),
        ReadFailure::Malformed(e) => ProtocolError::ProtocolViolation(e),
    }
}

fn checked_text(turn: u64, expected: u64, text: String) -> Result<String, ProtocolError> {
    if turn != expected {
        return Err(ProtocolError::ProtocolViolation(format!(
            "reply carries turn {turn}, expected {expected}"
        )));
    }
    validate_text(&text).map_err(|e| ProtocolError::ProtocolViolation(format!("reply text: {e}")))?;
    Ok(text)
}

fn unexpected(frame: Frame) -> ProtocolError {
    match frame {
        Frame::Error { message } => ProtocolError::CounterpartFailure(format!("agent reported: {message}")),
        Frame::Bye {} => ProtocolError::CounterpartFailure("agent said bye mid-session".into()),
        other => ProtocolError::ProtocolViolation(format!("unexpected {} frame", other.kind())),
    }
}

/// Sends `out` and returns the text of the single `msg` frame that answers it.
pub fn exchange_turn(conn: &mut Connection, out: &Message, timeout_ms: u64) -> Result<String, ProtocolError> {
    conn.send(&Frame::msg(out.turn_index(), out.text()))?;
    match conn.recv(Duration::from_millis(timeout_ms)) {
        Ok(Frame::Msg { turn, text }) => checked_text(turn, out.turn_index(), text),
        Ok(other) => Err(unexpected(other)),
        Err(f) => Err(read_failure(f, timeout_ms)),
    }
}

/// A subject-seat agent's move: say something, or stop with a verdict.
#[derive(Debug, Clone, PartialEq)]
pub enum SubjectMove {
    Say(String),
    Judge(Verdict),
}

/// Asks a subject-seat agent for its next move.
///
/// `incoming` is the counterpart's last message; `None` on the opening turn,
/// which travels as a `msg` frame with empty text and turn 0.
pub fn exchange_subject_turn(
    conn: &mut Connection,
    incoming: Option<&Message>,
    turns_used: u32,
    timeout_ms: u64,
) -> Result<SubjectMove, ProtocolError> {
    let turn = incoming.map_or(0, Message::turn_index);
    conn.send(&Frame::msg(turn, incoming.map_or("", Message::text)))?;
    match conn.recv(Duration::from_millis(timeout_ms)) {
        Ok(Frame::Msg { turn: t, text }) => checked_text(t, turn, text).map(SubjectMove::Say),
        Ok(Frame::Verdict {
            label,
            confidence,
            reason,
        }) => {
            let label: VerdictLabel = label
                .parse()
                .map_err(|_| ProtocolError::ProtocolViolation(format!("unknown verdict label `{label}`")))?;
            Verdict::new(label, confidence, turns_used.max(1), reason)
                .map(SubjectMove::Judge)
                .map_err(|e| ProtocolError::ProtocolViolation(e.to_string()))
        }
        Ok(other) => Err(unexpected(other)),
        Err(f) => Err(read_failure(f, timeout_ms)),
    }
}

/// An out-of-process agent bound to one seat of one session.
#[derive(Debug)]
pub struct ExternalAgent {
    conn: Connection,
    descriptor: AgentDescriptor,
    timeout_ms: u64,
    violations: u32,
}

impl ExternalAgent {
    /// Starts the agent described by `spec` (`cmd` + `args`, or `addr` for TCP) and shakes hands.
    pub fn launch(spec: &AgentSpec, seat: Seat) -> Result<ExternalAgent, ProtocolError> {
        let timeout_ms = match spec.param("timeout_ms") {
            None => DEFAULT_TIMEOUT_MS,
            Some(raw) => raw
                .parse()
                .map_err(|_| ProtocolError::Launch(format!("bad timeout_ms `{raw}`")))?,
        };
        let conn = match (spec.param("cmd"), spec.param("addr")) {
            (Some(cmd), _) => {
                let args: Vec<String> = spec
                    .param("args")
                    .map(|a| a.split_whitespace().map(str::to_string).collect())
                    .unwrap_or_default();
                let env = vec![
                    (ENV_SEED.to_string(), spec.seed.to_string()),
                    (ENV_SEAT.to_string(), seat_label(seat).to_string()),
                ];
                Connection::spawn(cmd, &args, &env)?
            }
            (None, Some(addr)) => Connection::connect_tcp(addr, Duration::from_millis(timeout_ms))?,
            (None, None) => return Err(ProtocolError::Launch("external agent needs `cmd` or `addr`".into())),
        };
        ExternalAgent::over(conn, seat, timeout_ms)
    }

    pub fn over(mut conn: Connection, seat: Seat, timeout_ms: u64) -> Result<ExternalAgent, ProtocolError> {
        let descriptor = handshake(&mut conn, seat, timeout_ms)?;
        Ok(ExternalAgent {
            conn,
            descriptor,
            timeout_ms,
            violations: 0,
        })
    }

    pub fn descriptor(&self) -> &AgentDescriptor {
        &self.descriptor
    }

    pub fn violations(&self) -> u32 {
        self.violations
    }

    fn tally<T>(&mut self, r: Result<T, ProtocolError>) -> Result<T, ProtocolError> {
        if let Err(ProtocolError::ProtocolViolation(_)) = &r {
            self.violations += 1;
        }
        r
    }

    pub fn reply_to(&mut self, out: &Message) -> Result<String, ProtocolError> {
        let r = exchange_turn(&mut self.conn, out, self.timeout_ms);
        self.tally(r)
    }

    pub fn next_move(&mut self, incoming: Option<&Message>, turns_used: u32) -> Result<SubjectMove, ProtocolError> {
        let r = exchange_subject_turn(&mut self.conn, incoming, turns_used, self.timeout_ms);
        self.tally(r)
    }

    /// Says goodbye and gives the agent a moment to exit.
    pub fn close(&mut self) {
        let _ = self.conn.send(&Frame::Bye {});
        self.conn.shutdown(Duration::from_millis(200));
    }
}

/// Outcome of running the conformance script against an agent.
#[derive(Debug, Clone, Serialize)]
pub struct ConformanceReport {
    pub descriptor: Option<AgentDescriptor>,
    pub turns_completed: u32,
    pub violations: Vec<String>,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

const CONFORMANCE_LINES: &[&str] = &[
    "hello, who is on the other side?",
    "quotes \"inside\" and a backslash \\ here",
    "unicode: çà va, 你好, ∀x ∃y",
    "is that you qwertyui",
    "a much longer line that keeps going for a while to check nothing truncates text in transit",
];

/// Handshake as counterpart, then `turns` scripted exchanges with turn-echo checks.
pub fn check_conformance(spec: &AgentSpec, turns: u32) -> ConformanceReport {
    let mut report = ConformanceReport {
        descriptor: None,
        turns_completed: 0,
        violations: Vec::new(),
    };
    let mut agent = match ExternalAgent::launch(spec, Seat::Counterpart) {
        Ok(a) => a,
        Err(e) => {
            report.violations.push(e.to_string());
            return report;
        }
    };
    report.descriptor = Some(agent.descriptor().clone());
    let sid = crate::types::SessionId::new("conformance");
    for k in 0..turns {
        let text = CONFORMANCE_LINES[k as usize % CONFORMANCE_LINES.len()];
        let out = Message::new(sid.clone(), 2 * u64::from(k), Seat::Subject, text).expect("static text is valid");
        match agent.reply_to(&out) {
            Ok(_) => report.turns_completed += 1,
            Err(e) => {
                report.violations.push(format!("turn {}: {e}", out.turn_index()));
                break;
            }
        }
    }
    agent.close();
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::SessionId;
    use std::io::{BufRead, BufReader, Write};
    use std::thread;

    /// A fake agent running on a thread: `script` maps each harness line to the lines it writes back.
    fn fake_agent<F>(script: F) -> Connection
    where
        F: FnMut(usize, &str) -> Vec<String> + Send + 'static,
    {
        let (harness_rx, agent_tx) = std::io::pipe().unwrap();
        let (agent_rx, harness_tx) = std::io::pipe().unwrap();
        let mut script = script;
        thread::spawn(move || {
            let mut out = agent_tx;
            let reader = BufReader::new(agent_rx);
            for (i, line) in reader.lines().enumerate() {
                let Ok(line) = line else { return };
                for reply in script(i, &line) {
                    if writeln!(out, "{reply}").is_err() {
                        return;
                    }
                }
            }
        });
        Connection::from_streams("fake", harness_rx, harness_tx)
    }

    fn hello_line() -> String {
        encode(&Frame::hello("fake", &["respond"])).unwrap()
    }

    fn out(turn: u64, text: &str) -> Message {
        Message::new(SessionId::new("p"), turn, Seat::Subject, text).unwrap()
    }

    #[test]
    fn valid_hello_yields_descriptor() {
        let mut conn = fake_agent(|_, _| vec![hello_line()]);
        let d = handshake(&mut conn, Seat::Counterpart, 1000).unwrap();
        assert_eq!(d.name, "fake");
        assert!(!d.can_judge());
    }

    #[test]
    fn msg_before_hello_fails_handshake() {
        let mut conn = fake_agent(|_, _| vec![encode(&Frame::msg(0, "hi")).unwrap()]);
        assert!(matches!(
            handshake(&mut conn, Seat::Counterpart, 1000),
            Err(ProtocolError::HandshakeFailure(_))
        ));
    }

    #[test]
    fn oversize_hello_fails_handshake() {
        let mut conn = fake_agent(|_, _| {
            vec![format!(r#"{{"type":"hello","name":"{}"}}"#, "x".repeat(MAX_LINE_BYTES + 10))]
        });
        assert_eq!(
            handshake(&mut conn, Seat::Counterpart, 2000),
            Err(ProtocolError::HandshakeFailure("oversize".into()))
        );
    }

    #[test]
    fn exchange_returns_reply_with_matching_turn() {
        let mut conn = fake_agent(|i, _| {
            if i == 0 {
                vec![hello_line()]
            } else {
                vec![encode(&Frame::msg(4, "yo")).unwrap()]
            }
        });
        handshake(&mut conn, Seat::Counterpart, 1000).unwrap();
        assert_eq!(exchange_turn(&mut conn, &out(4, "hi"), 1000).unwrap(), "yo");
    }

    #[test]
    fn wrong_turn_is_a_violation() {
        let mut conn = fake_agent(|i, _| {
            if i == 0 {
                vec![hello_line()]
            } else {
                vec![encode(&Frame::msg(3, "yo")).unwrap()]
            }
        });
        handshake(&mut conn, Seat::Counterpart, 1000).unwrap();
        assert!(matches!(
            exchange_turn(&mut conn, &out(4, "hi"), 1000),
            Err(ProtocolError::ProtocolViolation(_))
        ));
    }

    #[test]
    fn silence_is_a_counterpart_failure() {
        let mut conn = fake_agent(|i, _| if i == 0 { vec![hello_line()] } else { vec![] });
        handshake(&mut conn, Seat::Counterpart, 1000).unwrap();
        assert!(matches!(
            exchange_turn(&mut conn, &out(0, "hi"), 50),
            Err(ProtocolError::CounterpartFailure(_))
        ));
    }

    #[test]
    fn escaped_newline_in_reply_is_a_violation() {
        let mut conn = fake_agent(|i, _| {
            if i == 0 {
                vec![hello_line()]
            } else {
                vec![r#"{"type":"msg","turn":0,"text":"a\nb"}"#.to_string()]
            }
        });
        handshake(&mut conn, Seat::Counterpart, 1000).unwrap();
        assert!(matches!(
            exchange_turn(&mut conn, &out(0, "hi"), 1000),
            Err(ProtocolError::ProtocolViolation(_))
        ));
    }

    #[test]
    fn subject_can_answer_with_a_verdict() {
        let mut conn = fake_agent(|i, _| {
            if i == 0 {
                vec![hello_line()]
            } else {
                vec![r#"{"type":"verdict","label":"mirror","confidence":0.97}"#.to_string()]
            }
        });
        handshake(&mut conn, Seat::Subject, 1000).unwrap();
        match exchange_subject_turn(&mut conn, None, 2, 1000).unwrap() {
            SubjectMove::Judge(v) => {
                assert_eq!(v.label(), VerdictLabel::Mirror);
                assert_eq!(v.turns_used(), 2);
            }
            other => panic!("expected verdict, got {other:?}"),
        }
    }
}

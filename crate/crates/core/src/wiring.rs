//! Session construction and the turn loop for every topology.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::agents::{AgentError, AgentKind, AgentSpec, AgentState};
use crate::protocol::{ExternalAgent, ProtocolError, SubjectMove};
use crate::recognition::{EvidenceRecord, Recognizer, StrategyConfig};
use crate::seed::SeedTree;
use crate::types::{
    Condition, CoreError, Message, RecognitionLevel, Seat, SessionId, Transcript, Verdict, VerdictLabel,
    REASON_BUDGET,
};

#[derive(Debug, Error)]
pub enum WiringError {
    #[error("condition {0} needs a counterpart spec")]
    MissingCounterpart(Condition),
    #[error("budget must be at least 2, got {0}")]
    BudgetTooSmall(u32),
    #[error("turn budget of {0} subject turns exhausted")]
    BudgetExhausted(u32),
    #[error("session already concluded")]
    Concluded,
    #[error("rebind denied: {0}")]
    RebindDenied(String),
    #[error("session inconsistent: {0}")]
    Inconsistent(String),
    #[error("strategy: {0}")]
    Strategy(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl WiringError {
    /// Failures caused by an out-of-process agent; the trial is aborted rather than scored.
    pub fn is_counterpart_failure(&self) -> bool {
        matches!(self, WiringError::Protocol(_))
    }
}

/// Anything that can answer a subject message, e.g. a person at a terminal.
pub trait Responder: Send {
    fn reply(&mut self, out: &Message) -> Result<String, WiringError>;
    fn name(&self) -> String;
}

/// The input/output redirector: hands the subject's words straight back.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MirrorRedirector;

impl MirrorRedirector {
    pub fn reflect(&self, sent: &str) -> String {
        sent.to_string()
    }
}

#[allow(clippy::large_enum_variant)]
pub enum Counterpart {
    Agent(AgentState),
    External(ExternalAgent),
    Remote(Box<dyn Responder>),
    Mirror(MirrorRedirector),
    SelfBinding,
}

impl Counterpart {
    pub fn describe(&self) -> String {
        match self {
            Counterpart::Agent(a) => a.spec().describe(),
            Counterpart::External(e) => format!("external({})", e.descriptor().name),
            Counterpart::Remote(r) => format!("remote({})", r.name()),
            Counterpart::Mirror(_) => "mirror".into(),
            Counterpart::SelfBinding => "self".into(),
        }
    }
}

impl std::fmt::Debug for Counterpart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.describe())
    }
}

#[derive(Debug)]
#[allow(clippy::large_enum_variant)]
pub enum SubjectSeat {
    /// An in-process agent driven by a recognition strategy.
    Local { agent: AgentState, strategy: Box<Recognizer> },
    /// An out-of-process agent that judges for itself via verdict frames.
    External(ExternalAgent),
}

/// Who may trigger the self-loop rebind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RebindGate {
    /// Always granted.
    Open,
    /// Granted only once the subject has concluded it faces a mirror.
    #[default]
    RequireMirrorVerdict,
}

/// A subject's request to bind its output to its own input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RebindRequest {
    pub reason: String,
}

impl RebindRequest {
    pub fn after_mirror() -> Self {
        RebindRequest {
            reason: "mirror verdict".into(),
        }
    }
}

/// Optional transform applied to everything delivered to the subject.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelTransform {
    #[default]
    Identity,
    /// Each space-separated token is replaced by `~` with probability `rate`.
    TokenNoise { rate: f64 },
}

impl ChannelTransform {
    pub fn apply(&self, text: &str, rng: &mut ChaCha8Rng) -> String {
        match *self {
            ChannelTransform::Identity => text.to_string(),
            ChannelTransform::TokenNoise { rate } => text
                .split(' ')
                .map(|tok| if rng.gen::<f64>() < rate { "~" } else { tok })
                .collect::<Vec<_>>()
                .join(" "),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, ChannelTransform::Identity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Verdict { turn: u64, verdict: Verdict },
    Rebind { turn: u64, reason: String },
}

/// What one call to [`Session::step`] did.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurnRecord {
    pub subject_turn: u32,
    pub sent: Option<String>,
    pub received: Option<String>,
    pub level: RecognitionLevel,
    pub verdict: Option<Verdict>,
}

#[derive(Debug)]
pub struct Session {
    condition: Condition,
    subject: SubjectSeat,
    counterpart: Counterpart,
    transcript: Transcript,
    budget: u32,
    seeds: SeedTree,
    gate: RebindGate,
    channel: ChannelTransform,
    channel_rng: ChaCha8Rng,
    subject_turns: u32,
    verdict: Option<Verdict>,
    stopped: bool,
    rebound_at: Option<usize>,
    events: Vec<SessionEvent>,
    levels: Vec<RecognitionLevel>,
}

fn seeded(spec: &AgentSpec, seeds: &SeedTree, label: &str) -> Result<AgentSpec, CoreError> {
    Ok(spec.with_seed(seeds.derive_seed(label, spec.seed)?))
}

fn launch_counterpart(spec: &AgentSpec) -> Result<Counterpart, WiringError> {
    Ok(match spec.kind {
        AgentKind::External => Counterpart::External(ExternalAgent::launch(spec, Seat::Counterpart)?),
        _ => Counterpart::Agent(AgentState::new(spec)?),
    })
}

/// Wires a session for `condition`.
///
/// Seeds are derived from `seeds` under the labels `subject`, `counterpart`,
/// `strategy` and `channel`, each indexed by the spec's own seed where there is one.
pub fn build_session(
    condition: Condition,
    subject: &AgentSpec,
    strategy: &StrategyConfig,
    counterpart: Option<&AgentSpec>,
    budget: u32,
    seeds: &SeedTree,
) -> Result<Session, WiringError> {
    if budget < 2 {
        return Err(WiringError::BudgetTooSmall(budget));
    }
    if condition == Condition::Other && counterpart.is_none() {
        return Err(WiringError::MissingCounterpart(condition));
    }
    let subject_spec = seeded(subject, seeds, "subject")?;
    let cp = match condition {
        Condition::Other => launch_counterpart(&seeded(counterpart.expect("checked above"), seeds, "counterpart")?)?,
        Condition::Mimicker => launch_counterpart(&seeded(subject, seeds, "counterpart")?)?,
        Condition::Mirror => Counterpart::Mirror(MirrorRedirector),
        Condition::SelfLoop => Counterpart::SelfBinding,
    };
    let seat = match subject.kind {
        AgentKind::External => SubjectSeat::External(ExternalAgent::launch(&subject_spec, Seat::Subject)?),
        _ => {
            let agent = AgentState::new(&subject_spec)?;
            let mut strategy = Recognizer::new(strategy.clone(), &agent, &seeds.child("strategy", 0)?)
                .map_err(WiringError::Strategy)?;
            strategy.clamp_max_turns(budget);
            SubjectSeat::Local {
                agent,
                strategy: Box::new(strategy),
            }
        }
    };
    let session = Session {
        condition,
        subject: seat,
        counterpart: cp,
        transcript: Transcript::new(SessionId::new(format!("{}-{:016x}", condition.label(), seeds.seed()))),
        budget,
        gate: RebindGate::default(),
        channel: ChannelTransform::default(),
        channel_rng: seeds.child("channel", 0)?.rng(),
        seeds: seeds.clone(),
        subject_turns: 0,
        verdict: None,
        stopped: false,
        rebound_at: None,
        events: Vec::new(),
        levels: Vec::new(),
    };
    session.check_consistency()?;
    Ok(session)
}

impl Session {
    pub fn with_gate(mut self, gate: RebindGate) -> Self {
        self.gate = gate;
        self
    }

    pub fn with_channel(mut self, channel: ChannelTransform) -> Self {
        self.channel = channel;
        self
    }

    /// Swaps in a different counterpart for an `Other` session, e.g. a person at a terminal.
    pub fn with_remote(mut self, responder: Box<dyn Responder>) -> Result<Self, WiringError> {
        if self.condition != Condition::Other {
            return Err(WiringError::Inconsistent(format!(
                "a remote counterpart can only sit in an other session, not {}",
                self.condition
            )));
        }
        self.counterpart = Counterpart::Remote(responder);
        Ok(self)
    }

    pub fn condition(&self) -> Condition {
        self.condition
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn budget(&self) -> u32 {
        self.budget
    }

    pub fn seeds(&self) -> &SeedTree {
        &self.seeds
    }

    pub fn subject_turns(&self) -> u32 {
        self.subject_turns
    }

    pub fn verdict(&self) -> Option<&Verdict> {
        self.verdict.as_ref()
    }

    pub fn counterpart(&self) -> &Counterpart {
        &self.counterpart
    }

    pub fn subject(&self) -> &SubjectSeat {
        &self.subject
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.events
    }

    /// The subject's recognition level after each step.
    pub fn level_trace(&self) -> &[RecognitionLevel] {
        &self.levels
    }

    pub fn level(&self) -> RecognitionLevel {
        match &self.subject {
            SubjectSeat::Local { strategy, .. } => strategy.level(),
            SubjectSeat::External(_) => match self.verdict.as_ref().map(Verdict::label) {
                Some(VerdictLabel::Mirror) => RecognitionLevel::L3,
                _ => RecognitionLevel::L0,
            },
        }
    }

    /// Per-turn evidence from the subject's strategy (empty for external subjects).
    pub fn evidence_trace(&self) -> &[EvidenceRecord] {
        match &self.subject {
            SubjectSeat::Local { strategy, .. } => strategy.trace(),
            SubjectSeat::External(_) => &[],
        }
    }

    /// Protocol violations committed by out-of-process agents so far.
    pub fn protocol_violations(&self) -> u32 {
        let s = match &self.subject {
            SubjectSeat::External(e) => e.violations(),
            SubjectSeat::Local { .. } => 0,
        };
        let c = match &self.counterpart {
            Counterpart::External(e) => e.violations(),
            _ => 0,
        };
        s + c
    }

    /// Whether further steps are possible.
    pub fn is_running(&self) -> bool {
        !self.stopped && self.subject_turns < self.budget
    }

    /// Runs one turn: the subject speaks, the counterpart (if any) answers,
    /// and the subject's strategy scores the exchange.
    pub fn step(&mut self) -> Result<TurnRecord, WiringError> {
        if self.stopped {
            return Err(WiringError::Concluded);
        }
        if self.subject_turns >= self.budget {
            return Err(WiringError::BudgetExhausted(self.budget));
        }
        let record = if self.condition == Condition::SelfLoop {
            self.monologue_step()?
        } else {
            self.exchange_step()?
        };
        if record.verdict.is_some() {
            self.stopped = true;
        }
        if !self.stopped && self.subject_turns >= self.budget && self.verdict.is_none() {
            self.conclude_on_budget();
        }
        self.levels.push(self.level());
        self.check_consistency()?;
        Ok(TurnRecord {
            level: self.level(),
            verdict: record.verdict.or_else(|| if self.stopped { self.verdict.clone() } else { None }),
            ..record
        })
    }

    fn conclude_on_budget(&mut self) {
        let v = match &mut self.subject {
            SubjectSeat::Local { strategy, .. } => strategy.conclude_on_budget(),
            SubjectSeat::External(_) => Verdict::undecided(REASON_BUDGET, 0.0, self.subject_turns),
        };
        self.record_verdict(v);
        self.stopped = true;
    }

    fn record_verdict(&mut self, v: Verdict) {
        self.events.push(SessionEvent::Verdict {
            turn: self.transcript.next_turn(),
            verdict: v.clone(),
        });
        self.verdict = Some(v);
    }

    fn last_from(&self, seat: Seat) -> Option<&Message> {
        self.transcript.iter().rev().find(|m| m.seat() == seat)
    }

    fn exchange_step(&mut self) -> Result<TurnRecord, WiringError> {
        let incoming = self.last_from(Seat::Counterpart).cloned();
        let sent = match &mut self.subject {
            SubjectSeat::Local { agent, strategy } => {
                strategy.compose(agent, incoming.as_ref().map(Message::text))?
            }
            SubjectSeat::External(ext) => match ext.next_move(incoming.as_ref(), self.subject_turns)? {
                SubjectMove::Say(text) => text,
                SubjectMove::Judge(v) => {
                    self.record_verdict(v.clone());
                    return Ok(TurnRecord {
                        subject_turn: self.subject_turns,
                        sent: None,
                        received: None,
                        level: RecognitionLevel::L0,
                        verdict: Some(v),
                    });
                }
            },
        };
        self.subject_turns += 1;
        let out = self.transcript.push_text(Seat::Subject, sent.clone())?.clone();

        let reply = match &mut self.counterpart {
            Counterpart::Agent(a) => a.respond(Some(&sent))?,
            Counterpart::External(e) => e.reply_to(&out)?,
            Counterpart::Remote(r) => r.reply(&out)?,
            Counterpart::Mirror(m) => m.reflect(&sent),
            Counterpart::SelfBinding => unreachable!("self-binding only in self-loop"),
        };
        let delivered = self.channel.apply(&reply, &mut self.channel_rng);
        self.transcript.push_text(Seat::Counterpart, delivered.clone())?;

        let verdict = match &mut self.subject {
            SubjectSeat::Local { strategy, .. } => strategy.observe(&self.transcript),
            SubjectSeat::External(_) => None,
        };
        if let Some(v) = &verdict {
            self.record_verdict(v.clone());
        }
        Ok(TurnRecord {
            subject_turn: self.subject_turns,
            sent: Some(sent),
            received: Some(delivered),
            level: RecognitionLevel::L0,
            verdict,
        })
    }

    fn monologue_step(&mut self) -> Result<TurnRecord, WiringError> {
        let incoming = self.last_from(Seat::Subject).map(|m| m.text().to_string());
        let sent = match &mut self.subject {
            SubjectSeat::Local { agent, .. } => agent.respond(incoming.as_deref())?,
            SubjectSeat::External(ext) => {
                let prev = incoming
                    .as_deref()
                    .map(|t| Message::new(self.transcript.session_id().clone(), self.transcript.next_turn(), Seat::Counterpart, t))
                    .transpose()?;
                match ext.next_move(prev.as_ref(), self.subject_turns)? {
                    SubjectMove::Say(text) => text,
                    SubjectMove::Judge(_) => {
                        return Err(WiringError::Protocol(ProtocolError::ProtocolViolation(
                            "verdict during self-loop".into(),
                        )))
                    }
                }
            }
        };
        self.subject_turns += 1;
        self.transcript.push_text(Seat::Subject, sent.clone())?;
        Ok(TurnRecord {
            subject_turn: self.subject_turns,
            sent: Some(sent),
            received: incoming,
            level: RecognitionLevel::L0,
            verdict: None,
        })
    }

    /// Binds the subject's output to its own input (the self-loop). Steps
    /// afterwards are monologue turns drawn from the same budget.
    pub fn rebind(&mut self, request: RebindRequest) -> Result<(), WiringError> {
        if self.condition == Condition::SelfLoop {
            return Err(WiringError::RebindDenied("already in a self-loop".into()));
        }
        let mirror_verdict = self.verdict.as_ref().map(Verdict::label) == Some(VerdictLabel::Mirror);
        if self.gate == RebindGate::RequireMirrorVerdict && !mirror_verdict {
            return Err(WiringError::RebindDenied("no mirror verdict in this session".into()));
        }
        if let Counterpart::External(e) = &mut self.counterpart {
            e.close();
        }
        self.events.push(SessionEvent::Rebind {
            turn: self.transcript.next_turn(),
            reason: request.reason,
        });
        self.rebound_at = Some(self.transcript.len());
        self.condition = Condition::SelfLoop;
        self.counterpart = Counterpart::SelfBinding;
        self.stopped = false;
        self.check_consistency()
    }

    /// Transcript index where the self-loop began, if a rebind happened.
    pub fn rebound_at(&self) -> Option<usize> {
        self.rebound_at
    }

    /// Checks that the counterpart matches the condition and the transcript
    /// obeys the topology's invariants.
    pub fn check_consistency(&self) -> Result<(), WiringError> {
        let fits = match (&self.condition, &self.counterpart) {
            (Condition::Mirror, Counterpart::Mirror(_)) => true,
            (Condition::SelfLoop, Counterpart::SelfBinding) => true,
            (Condition::Other, Counterpart::Agent(_) | Counterpart::External(_) | Counterpart::Remote(_)) => true,
            (Condition::Mimicker, Counterpart::Agent(a)) => match &self.subject {
                SubjectSeat::Local { agent, .. } => {
                    a.spec().kind == agent.spec().kind
                        && a.spec().params == agent.spec().params
                        && a.spec().seed != agent.spec().seed
                }
                SubjectSeat::External(_) => false,
            },
            (Condition::Mimicker, Counterpart::External(_)) => matches!(self.subject, SubjectSeat::External(_)),
            _ => false,
        };
        if !fits {
            return Err(WiringError::Inconsistent(format!(
                "{} counterpart in a {} session",
                self.counterpart.describe(),
                self.condition
            )));
        }
        let paired = self.rebound_at.unwrap_or(self.transcript.len());
        let msgs = &self.transcript.messages()[..paired];
        let alternate = msgs
            .iter()
            .enumerate()
            .all(|(i, m)| m.seat() == if i % 2 == 0 { Seat::Subject } else { Seat::Counterpart });
        let is_loop_from_start = self.rebound_at.is_none() && self.condition == Condition::SelfLoop;
        if !is_loop_from_start && !alternate {
            return Err(WiringError::Inconsistent("seats do not alternate".into()));
        }
        if self.condition == Condition::Mirror && self.channel.is_identity() {
            let ok = msgs.chunks(2).all(|p| p.len() < 2 || p[0].text() == p[1].text());
            if !ok {
                return Err(WiringError::Inconsistent("mirror reply differs from what was sent".into()));
            }
        }
        if self.condition == Condition::SelfLoop && self.transcript.messages()[paired..].iter().any(|m| m.seat() != Seat::Subject) {
            return Err(WiringError::Inconsistent("counterpart message in a self-loop".into()));
        }
        if self.subject_turns > self.budget {
            return Err(WiringError::Inconsistent("budget exceeded".into()));
        }
        Ok(())
    }

    /// Says goodbye to any out-of-process agents.
    pub fn close(&mut self) {
        if let SubjectSeat::External(e) = &mut self.subject {
            e.close();
        }
        if let Counterpart::External(e) = &mut self.counterpart {
            e.close();
        }
    }

    /// Steps until a verdict or the budget ends the session.
    pub fn run_to_end(&mut self) -> Result<Option<&Verdict>, WiringError> {
        while self.is_running() {
            self.step()?;
        }
        Ok(self.verdict.as_ref())
    }
}

use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    decide, make_probe, update_evidence, BackgroundModel, EvidenceState, Hypothesis, ShadowEvidence,
    StrategyConfig, StrategyKind, PROBE_PREFIX,
};
use crate::agents::{AgentError, AgentState};
use crate::seed::SeedTree;
use crate::types::{role_swap, RecognitionLevel, Seat, Transcript, Verdict, VerdictLabel};

/// One line of the per-session evidence sidecar.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvidenceRecord {
    pub turn: u64,
    pub subject_turn: u32,
    pub mirror: f64,
    pub mimicker: f64,
    pub other: f64,
    pub level: RecognitionLevel,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub downgraded: bool,
}

/// The subject's recognition strategy, owned by its session.
///
/// It only ever sees what the subject sent and received; nothing tells it
/// which condition the session was built for.
#[derive(Debug, Clone)]
pub struct Recognizer {
    cfg: StrategyConfig,
    evidence: EvidenceState,
    probe_rng: ChaCha8Rng,
    shadow_seeds: SeedTree,
    prototype: Option<AgentState>,
    subject_turns: u32,
    verdict: Option<Verdict>,
    trace: Vec<EvidenceRecord>,
}

impl Recognizer {
    pub fn new(cfg: StrategyConfig, subject: &AgentState, seeds: &SeedTree) -> Result<Self, String> {
        cfg.validate()?;
        let derive = |label: &str| seeds.derive_seed(label, 0).map_err(|e| e.to_string());
        let prototype = if subject.capabilities().self_simulation {
            Some(subject.shadow(derive("shadow")?).map_err(|e| e.to_string())?)
        } else {
            None
        };
        let evidence = match cfg.kind {
            StrategyKind::IdentityToken => {
                let token = format!("id{:012x}", derive("token")? & 0xffff_ffff_ffff);
                EvidenceState::with_identity_token(token)
            }
            _ => EvidenceState::new(),
        };
        Ok(Recognizer {
            probe_rng: seeds.child("probes", 0).map_err(|e| e.to_string())?.rng(),
            shadow_seeds: seeds.child("shadow", 0).map_err(|e| e.to_string())?,
            cfg,
            evidence,
            prototype,
            subject_turns: 0,
            verdict: None,
            trace: Vec::new(),
        })
    }

    pub fn config(&self) -> &StrategyConfig {
        &self.cfg
    }

    pub fn evidence(&self) -> &EvidenceState {
        &self.evidence
    }

    pub fn level(&self) -> RecognitionLevel {
        self.evidence.level()
    }

    pub fn verdict(&self) -> Option<&Verdict> {
        self.verdict.as_ref()
    }

    pub fn trace(&self) -> &[EvidenceRecord] {
        &self.trace
    }

    pub fn can_self_simulate(&self) -> bool {
        self.prototype.is_some()
    }

    /// Caps the turn limit at the session budget.
    pub fn clamp_max_turns(&mut self, budget: u32) {
        self.cfg.max_turns = self.cfg.max_turns.min(budget);
    }

    /// Writes the subject's next message: a probe on probe turns, the agent's
    /// own reply otherwise. Either way the agent's history records it.
    pub fn compose(&mut self, agent: &mut AgentState, incoming: Option<&str>) -> Result<String, AgentError> {
        self.subject_turns += 1;
        if !self.cfg.kind.probes_on(self.subject_turns) {
            return agent.respond(incoming);
        }
        if let Some(text) = incoming {
            agent.observe_incoming(text)?;
        }
        let probe = match self.evidence.identity_token() {
            Some(token) => format!("{PROBE_PREFIX} {token}"),
            None => make_probe(&mut self.evidence, &mut self.probe_rng),
        };
        agent.record_outgoing(&probe)?;
        Ok(probe)
    }

    /// Scores the latest exchange (the transcript's last two messages) and
    /// returns a verdict once one is reached.
    pub fn observe(&mut self, transcript: &Transcript) -> Option<Verdict> {
        if self.verdict.is_some() {
            return self.verdict.clone();
        }
        let msgs = transcript.messages();
        let n = msgs.len();
        if n < 2 || msgs[n - 2].seat() != Seat::Subject || msgs[n - 1].seat() != Seat::Counterpart {
            return None;
        }
        let (sent, received) = (&msgs[n - 2], &msgs[n - 1]);
        let before = transcript.prefix(n - 1);
        let background = BackgroundModel::from_texts(before.iter().map(|m| m.text()));

        let turn = u64::from(self.evidence.turns_observed());
        let shadow = self.prototype.as_ref().and_then(|p| {
            let seed = self.shadow_seeds.derive_seed("turn", turn).ok()?;
            p.shadow_with_history(seed, role_swap(&before)).ok()
        });
        let sample = match (&shadow, self.cfg.kind) {
            (Some(s), StrategyKind::ShadowEquality) => s.clone().generate().ok(),
            _ => None,
        };
        let view = match (&shadow, &sample) {
            (_, Some(said)) => ShadowEvidence::Sample(said),
            (Some(s), None) if self.cfg.kind != StrategyKind::ShadowEquality => ShadowEvidence::Likelihood(s),
            _ => ShadowEvidence::Unavailable,
        };

        self.evidence = update_evidence(&self.evidence, sent, received, view, &background, &self.cfg);
        let verdict = decide(&self.evidence, &self.cfg);
        if let Some(v) = &verdict {
            self.evidence.record_verdict(v);
        }
        self.trace.push(EvidenceRecord {
            turn: received.turn_index(),
            subject_turn: self.subject_turns,
            mirror: self.evidence.log_likelihood(Hypothesis::Mirror),
            mimicker: self.evidence.log_likelihood(Hypothesis::Mimicker),
            other: self.evidence.log_likelihood(Hypothesis::Other),
            level: self.evidence.level(),
            verdict: verdict.clone(),
            downgraded: self.evidence.downgraded(),
        });
        self.verdict = verdict.clone();
        verdict
    }

    /// Whether this strategy has concluded it faces a mirror.
    pub fn concluded_mirror(&self) -> bool {
        self.verdict.as_ref().map(Verdict::label) == Some(VerdictLabel::Mirror)
    }

    /// Forces a verdict when the session ends before the strategy's own limit.
    pub fn conclude_on_budget(&mut self) -> Verdict {
        if let Some(v) = &self.verdict {
            return v.clone();
        }
        let p = self.evidence.posteriors().iter().copied().fold(0.0, f64::max);
        let v = Verdict::undecided(
            crate::types::REASON_BUDGET,
            if self.evidence.turns_observed() == 0 { 0.0 } else { p },
            self.subject_turns.max(1),
        );
        self.verdict = Some(v.clone());
        v
    }
}

//! Subject-side recognition: is the counterpart another program, a copy of
//! me, or a mirror?
//!
//! Three hypotheses are scored after every exchange. With `e` the likelihood
//! floor and `bg` the session background model:
//!
//! * mirror: `ln[(1-e) * [received == sent] + e * bg(received)]`
//! * mimicker: `ln[(1-e) * p_shadow(received) + e * bg(received)]`, where the
//!   shadow is a private copy of the subject's program that has seen the
//!   conversation from the counterpart's chair
//! * other: `ln bg(received)`
//!
//! Posteriors under a uniform prior feed a threshold stopping rule
//! ([`decide`]), which replaces the endless "ask again" loop with a finite
//! test whose error rates are set by the threshold.

mod background;
mod recognizer;

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{AgentState, LIKELIHOOD_FLOOR};
use crate::types::{
    Message, RecognitionLevel, Verdict, VerdictLabel, REASON_BUDGET, REASON_MIRROR_CLONE_EQUIVALENT,
};
pub use background::BackgroundModel;
pub use recognizer::{EvidenceRecord, Recognizer};

/// Probes and identity-token messages start with this phrase.
pub const PROBE_PREFIX: &str = "is that you";
pub const NONCE_LEN: usize = 8;
/// Mirror and mimicker posteriors closer than this count as indistinguishable.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hypothesis {
    Mirror,
    Mimicker,
    Other,
}

impl Hypothesis {
    pub const ALL: [Hypothesis; 3] = [Hypothesis::Mirror, Hypothesis::Mimicker, Hypothesis::Other];

    fn index(self) -> usize {
        self as usize
    }

    pub fn verdict_label(self) -> VerdictLabel {
        match self {
            Hypothesis::Mirror => VerdictLabel::Mirror,
            Hypothesis::Mimicker => VerdictLabel::Mimicker,
            Hypothesis::Other => VerdictLabel::Other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Probe with a fresh nonce every turn.
    NonceProbe,
    /// Compare the reply against what a shadow copy actually says.
    ShadowEquality,
    /// Interleave probes and natural replies; score the shadow's likelihood.
    SequentialLikelihood,
    /// Look for the subject's own instance token in the reply.
    ///
    /// This hard-codes the self-location trick the test is supposed to
    /// elicit, so it is reported as a baseline, never as a pass.
    IdentityToken,
}

impl StrategyKind {
    pub fn label(self) -> &'static str {
        match self {
            StrategyKind::NonceProbe => "nonce_probe",
            StrategyKind::ShadowEquality => "shadow_equality",
            StrategyKind::SequentialLikelihood => "sequential_likelihood",
            StrategyKind::IdentityToken => "identity_token",
        }
    }

    pub fn is_baseline(self) -> bool {
        self == StrategyKind::IdentityToken
    }

    /// Whether the subject's `n`-th turn (1-based) carries a probe.
    pub fn probes_on(self, subject_turn: u32) -> bool {
        match self {
            StrategyKind::NonceProbe => true,
            _ => subject_turn % 2 == 1,
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "nonce_probe" | "nonceprobe" => Ok(StrategyKind::NonceProbe),
            "shadow_equality" | "shadowequality" => Ok(StrategyKind::ShadowEquality),
            "sequential_likelihood" | "sequentiallikelihood" => Ok(StrategyKind::SequentialLikelihood),
            "identity_token" | "identitytoken" => Ok(StrategyKind::IdentityToken),
            _ => Err(format!("unknown strategy `{s}`")),
        }
    }
}

fn default_threshold() -> f64 {
    0.99
}

fn default_epsilon() -> f64 {
    LIKELIHOOD_FLOOR
}

fn default_max_turns() -> u32 {
    30
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    #[serde(default = "default_threshold")]
    pub decision_threshold: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_max_turns")]
    pub max_turns: u32,
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind) -> Self {
        StrategyConfig {
            kind,
            decision_threshold: default_threshold(),
            epsilon: default_epsilon(),
            max_turns: default_max_turns(),
        }
    }

    pub fn with_max_turns(mut self, max_turns: u32) -> Self {
        self.max_turns = max_turns;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.decision_threshold > 0.5 && self.decision_threshold < 1.0) {
            return Err(format!(
                "decision_threshold must lie in (0.5, 1), got {}",
                self.decision_threshold
            ));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        if self.max_turns == 0 {
            return Err("max_turns must be positive".into());
        }
        Ok(())
    }
}

/// Accumulated per-hypothesis evidence for one session.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvidenceState {
    log_likelihoods: [f64; 3],
    turns_observed: u32,
    probes_sent: Vec<String>,
    level: RecognitionLevel,
    identity_token: Option<String>,
    echoes_seen: u32,
    echo_run: u32,
    longest_echo_run: u32,
    mirror_verdict: bool,
    token_confirmed: bool,
    downgraded: bool,
}

impl Default for EvidenceState {
    fn default() -> Self {
        Self::new()
    }
}

impl EvidenceState {
    pub fn new() -> Self {
        EvidenceState {
            log_likelihoods: [0.0; 3],
            turns_observed: 0,
            probes_sent: Vec::new(),
            level: RecognitionLevel::L0,
            identity_token: None,
            echoes_seen: 0,
            echo_run: 0,
            longest_echo_run: 0,
            mirror_verdict: false,
            token_confirmed: false,
            downgraded: false,
        }
    }

    /// Evidence state for a subject that carries an instance token.
    pub fn with_identity_token(token: impl Into<String>) -> Self {
        EvidenceState {
            identity_token: Some(token.into()),
            ..Self::new()
        }
    }

    /// Evidence state with preset log-likelihoods, as if `turns` exchanges had been scored.
    pub fn from_log_likelihoods(mirror: f64, mimicker: f64, other: f64, turns: u32) -> Self {
        EvidenceState {
            log_likelihoods: [mirror, mimicker, other],
            turns_observed: turns,
            ..Self::new()
        }
    }

    pub fn log_likelihood(&self, h: Hypothesis) -> f64 {
        self.log_likelihoods[h.index()]
    }

    pub fn turns_observed(&self) -> u32 {
        self.turns_observed
    }

    pub fn probes_sent(&self) -> &[String] {
        &self.probes_sent
    }

    pub fn level(&self) -> RecognitionLevel {
        self.level
    }

    pub fn identity_token(&self) -> Option<&str> {
        self.identity_token.as_deref()
    }

    pub fn downgraded(&self) -> bool {
        self.downgraded
    }

    pub fn token_confirmed(&self) -> bool {
        self.token_confirmed
    }

    /// Normalized posteriors under a uniform prior, ordered as [`Hypothesis::ALL`].
    pub fn posteriors(&self) -> [f64; 3] {
        let max = self.log_likelihoods.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w = self.log_likelihoods.map(|l| (l - max).exp());
        let z: f64 = w.iter().sum();
        w.map(|x| x / z)
    }

    pub fn posterior(&self, h: Hypothesis) -> f64 {
        self.posteriors()[h.index()]
    }

    /// Marks that a verdict was emitted; a mirror verdict lifts the level.
    pub fn record_verdict(&mut self, verdict: &Verdict) {
        if verdict.label() == VerdictLabel::Mirror {
            self.mirror_verdict = true;
        }
        self.level = self.level.max(map_level(self));
    }
}

/// Emits a probe carrying a fresh lowercase nonce and records the nonce.
pub fn make_probe<R: Rng + ?Sized>(state: &mut EvidenceState, rng: &mut R) -> String {
    let nonce = loop {
        let candidate: String = (0..NONCE_LEN)
            .map(|_| char::from(b'a' + rng.gen_range(0..26u8)))
            .collect();
        if !state.probes_sent.contains(&candidate) {
            break candidate;
        }
    };
    let text = format!("{PROBE_PREFIX} {nonce}");
    state.probes_sent.push(nonce);
    text
}

/// True iff `token` was embedded in `sent` and comes back verbatim in `received`.
///
/// A mirror reflects the token; a clone would carry its own, different one.
pub fn identity_token_check(sent: &Message, received: &Message, token: &str) -> bool {
    !token.is_empty() && sent.text().contains(token) && received.text().contains(token)
}

/// What the subject knows about its own program's next move.
#[derive(Debug, Clone, Copy)]
pub enum ShadowEvidence<'a> {
    /// A shadow re-synchronized to the role-swapped history; its likelihood is used.
    Likelihood(&'a AgentState),
    /// The reply a re-synchronized shadow actually produced; equality is used.
    Sample(&'a str),
    /// No self-simulation available.
    Unavailable,
}

/// `ln[(1 - eps) * p + eps * exp(ln_bg)]`, computed without underflow.
fn ln_mixture(p: f64, ln_bg: f64, eps: f64) -> f64 {
    let floor = eps.ln() + ln_bg;
    if p <= 0.0 {
        return floor;
    }
    let main = (1.0 - eps).ln() + p.ln();
    let hi = main.max(floor);
    hi + ((main - hi).exp() + (floor - hi).exp()).ln()
}

/// Scores one exchange and returns the advanced state.
///
/// If the shadow cannot report a likelihood the mimicker term falls back to
/// the background model (the probe-only behaviour) and the downgrade is recorded.
pub fn update_evidence(
    state: &EvidenceState,
    sent: &Message,
    received: &Message,
    shadow: ShadowEvidence<'_>,
    background: &BackgroundModel,
    cfg: &StrategyConfig,
) -> EvidenceState {
    let mut next = state.clone();
    let eps = cfg.epsilon;
    let ln_bg = background.log_probability(received.text());

    let echoed = received.text() == sent.text();
    let reflected = match state.identity_token.as_deref() {
        Some(token) if sent.text().contains(token) => {
            let hit = identity_token_check(sent, received, token);
            next.token_confirmed |= hit;
            hit
        }
        _ => echoed,
    };
    let mirror = ln_mixture(if reflected { 1.0 } else { 0.0 }, ln_bg, eps);

    let mimicker = match shadow {
        ShadowEvidence::Likelihood(s) => match s.predictive_probability(s.history(), received.text()) {
            Ok(p) => ln_mixture(p, ln_bg, eps),
            Err(_) => {
                next.downgraded = true;
                ln_bg
            }
        },
        ShadowEvidence::Sample(said) => ln_mixture(if said == received.text() { 1.0 } else { 0.0 }, ln_bg, eps),
        ShadowEvidence::Unavailable => {
            next.downgraded = true;
            ln_bg
        }
    };

    next.log_likelihoods[Hypothesis::Mirror.index()] += mirror;
    next.log_likelihoods[Hypothesis::Mimicker.index()] += mimicker;
    next.log_likelihoods[Hypothesis::Other.index()] += ln_bg;
    next.turns_observed += 1;

    if echoed {
        next.echoes_seen += 1;
        next.echo_run += 1;
        next.longest_echo_run = next.longest_echo_run.max(next.echo_run);
    } else {
        next.echo_run = 0;
    }
    next.level = next.level.max(map_level(&next));
    next
}

/// The stopping rule. Returns a verdict once the evidence is decisive or the turns run out.
pub fn decide(state: &EvidenceState, cfg: &StrategyConfig) -> Option<Verdict> {
    if state.turns_observed == 0 {
        return None;
    }
    let post = state.posteriors();
    let turns = state.turns_observed;
    let (mirror, mimicker) = (post[Hypothesis::Mirror.index()], post[Hypothesis::Mimicker.index()]);
    if (mirror - mimicker).abs() <= TIE_TOLERANCE && mirror + mimicker >= cfg.decision_threshold {
        return Some(Verdict::undecided(
            REASON_MIRROR_CLONE_EQUIVALENT,
            mirror + mimicker,
            turns,
        ));
    }
    let (best, p) = Hypothesis::ALL
        .iter()
        .map(|h| (*h, post[h.index()]))
        .fold((Hypothesis::Mirror, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    if p >= cfg.decision_threshold {
        return Some(Verdict::decided(best.verdict_label(), p, turns));
    }
    if turns >= cfg.max_turns {
        return Some(Verdict::undecided(REASON_BUDGET, p, turns));
    }
    None
}

/// Level implied by the evidence so far; [`EvidenceState`] keeps the running maximum.
pub fn map_level(state: &EvidenceState) -> RecognitionLevel {
    if state.mirror_verdict && state.token_confirmed {
        RecognitionLevel::L4
    } else if state.mirror_verdict {
        RecognitionLevel::L3
    } else if state.longest_echo_run >= 3 {
        RecognitionLevel::L2
    } else if state.echoes_seen >= 1 {
        RecognitionLevel::L1
    } else {
        RecognitionLevel::L0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{AgentKind, AgentSpec};
    use crate::types::{Seat, SessionId, Transcript};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn msg(turn: u64, seat: Seat, text: &str) -> Message {
        Message::new(SessionId::new("t"), turn, seat, text).unwrap()
    }

    fn cfg() -> StrategyConfig {
        StrategyConfig::new(StrategyKind::SequentialLikelihood)
    }

    #[test]
    fn probes_are_unique_and_well_formed() {
        let mut st = EvidenceState::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = make_probe(&mut st, &mut rng);
        let b = make_probe(&mut st, &mut rng);
        assert_ne!(a, b);
        for nonce in st.probes_sent() {
            assert_eq!(nonce.len(), NONCE_LEN);
            assert!(nonce.bytes().all(|c| c.is_ascii_lowercase()));
        }
        assert!(a.starts_with(PROBE_PREFIX) && a.ends_with(&st.probes_sent()[0]));
    }

    #[test]
    fn probes_replay_under_same_seed() {
        let run = || {
            let mut st = EvidenceState::new();
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            (0..5).map(|_| make_probe(&mut st, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn exact_echo_increments_by_hand() {
        // Ten-type background: the echoed probe tokens were each seen once.
        let bg = BackgroundModel::from_texts(["a b c d e f g h i qz7fkxwp"]);
        let sent = msg(0, Seat::Subject, "qz7fkxwp");
        let received = msg(1, Seat::Counterpart, "qz7fkxwp");
        let eps = 1e-6;
        let next = update_evidence(&EvidenceState::new(), &sent, &received, ShadowEvidence::Unavailable, &bg, &cfg());
        let bg_p: f64 = 2.0 / 21.0;
        let expected_mirror = ((1.0 - eps) + eps * bg_p).ln();
        assert!((next.log_likelihood(Hypothesis::Mirror) - expected_mirror).abs() < 1e-15);
        assert!(next.log_likelihood(Hypothesis::Mirror).abs() < 1e-5);
        assert!((next.log_likelihood(Hypothesis::Other) - bg_p.ln()).abs() < 1e-15);
        assert!(next.downgraded());
        assert_eq!(next.level(), RecognitionLevel::L1);
    }

    #[test]
    fn echo_subject_mirror_and_mimicker_increments_are_equal() {
        let echo = crate::agents::spawn_shadow(&AgentSpec::new(AgentKind::EchoBot, 0), 3).unwrap();
        let mut h = Transcript::new(SessionId::new("t"));
        h.push_text(Seat::Counterpart, "is that you abcdefgh").unwrap();
        let shadow = echo.shadow_with_history(4, h).unwrap();
        let bg = BackgroundModel::from_texts(["is that you abcdefgh"]);
        let sent = msg(0, Seat::Subject, "is that you abcdefgh");
        let received = msg(1, Seat::Counterpart, "is that you abcdefgh");
        let next = update_evidence(&EvidenceState::new(), &sent, &received, ShadowEvidence::Likelihood(&shadow), &bg, &cfg());
        assert_eq!(
            next.log_likelihood(Hypothesis::Mirror),
            next.log_likelihood(Hypothesis::Mimicker)
        );
    }

    #[test]
    fn no_turns_no_verdict() {
        assert_eq!(decide(&EvidenceState::new(), &cfg()), None);
    }

    #[test]
    fn decisive_mirror_by_hand() {
        // exp(-13.8) ~ 1.0e-6 per rival; posterior = 1 / (1 + 2e^-13.8) ~ 0.999998.
        let st = EvidenceState::from_log_likelihoods(0.0, -13.8, -13.8, 2);
        let v = decide(&st, &cfg()).unwrap();
        assert_eq!(v.label(), VerdictLabel::Mirror);
        let expected = 1.0 / (1.0 + 2.0 * (-13.8f64).exp());
        assert!((v.confidence() - expected).abs() < 1e-12);
        assert!(v.confidence() > 0.999);
        assert_eq!(v.turns_used(), 2);
    }

    #[test]
    fn tie_between_mirror_and_clone_is_undecided() {
        let st = EvidenceState::from_log_likelihoods(-0.1, -0.1, -20.0, 4);
        let v = decide(&st, &cfg()).unwrap();
        assert_eq!(v.label(), VerdictLabel::Undecided);
        assert_eq!(v.reason(), Some(REASON_MIRROR_CLONE_EQUIVALENT));
    }

    #[test]
    fn budget_exhaustion_is_undecided() {
        let c = cfg().with_max_turns(3);
        let st = EvidenceState::from_log_likelihoods(-1.0, -1.2, -1.1, 3);
        let v = decide(&st, &c).unwrap();
        assert_eq!(v.reason(), Some(REASON_BUDGET));
        assert_eq!(decide(&EvidenceState::from_log_likelihoods(-1.0, -1.2, -1.1, 2), &c), None);
    }

    #[test]
    fn levels_follow_echo_runs_and_verdicts() {
        let mut st = EvidenceState::new();
        assert_eq!(map_level(&st), RecognitionLevel::L0);
        let bg = BackgroundModel::new();
        let mut last = st.level();
        for k in 0..3 {
            let sent = msg(2 * k, Seat::Subject, "same");
            let received = msg(2 * k + 1, Seat::Counterpart, "same");
            st = update_evidence(&st, &sent, &received, ShadowEvidence::Unavailable, &bg, &cfg());
            assert!(st.level() >= last);
            last = st.level();
            if k == 0 {
                assert_eq!(st.level(), RecognitionLevel::L1);
            }
        }
        assert_eq!(st.level(), RecognitionLevel::L2);
        st.record_verdict(&Verdict::decided(VerdictLabel::Mirror, 0.999, 3));
        assert_eq!(st.level(), RecognitionLevel::L3);
        // A later non-echo does not lower the level.
        let st2 = update_evidence(&st, &msg(6, Seat::Subject, "x"), &msg(7, Seat::Counterpart, "y"), ShadowEvidence::Unavailable, &bg, &cfg());
        assert_eq!(st2.level(), RecognitionLevel::L3);
    }

    #[test]
    fn identity_token_cases() {
        let t1 = "id00000000beef";
        let sent = msg(0, Seat::Subject, &format!("is that you {t1}"));
        assert!(identity_token_check(&sent, &msg(1, Seat::Counterpart, &format!("is that you {t1}")), t1));
        assert!(!identity_token_check(&sent, &msg(1, Seat::Counterpart, "is that you id0000000000aa"), t1));
        assert!(!identity_token_check(&sent, &msg(1, Seat::Counterpart, "the lamp turns"), t1));
    }

    #[test]
    fn token_confirmation_reaches_l4_with_mirror_verdict() {
        let token = "id0000000000ff";
        let mut st = EvidenceState::with_identity_token(token);
        let text = format!("{PROBE_PREFIX} {token}");
        st = update_evidence(&st, &msg(0, Seat::Subject, &text), &msg(1, Seat::Counterpart, &text), ShadowEvidence::Unavailable, &BackgroundModel::new(), &cfg());
        assert!(st.token_confirmed());
        st.record_verdict(&Verdict::decided(VerdictLabel::Mirror, 0.999, 1));
        assert_eq!(st.level(), RecognitionLevel::L4);
    }

    #[test]
    fn strategy_config_validation() {
        assert!(cfg().validate().is_ok());
        let mut c = cfg();
        c.decision_threshold = 0.5;
        assert!(c.validate().is_err());
        c.decision_threshold = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn posteriors_normalize() {
        let st = EvidenceState::from_log_likelihoods(-1e4, -3.0, -700.5, 5);
        let s: f64 = st.posteriors().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}

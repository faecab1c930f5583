//! Textual mirror-test harness.
//!
//! A conversational *subject* is seated opposite one of four counterparts:
//! a distinct program ([`Condition::Other`]), a fresh instance of its own
//! program ([`Condition::Mimicker`]), an input/output redirector that hands
//! its own words back ([`Condition::Mirror`]), or its own input
//! ([`Condition::SelfLoop`]). The subject has to work out, on its own and
//! within a turn budget, which of the first three it is talking to.
//!
//! Module map:
//!
//! * [`types`] and [`seed`]: messages, transcripts, verdicts and deterministic
//!   seed derivation shared by everything else.
//! * [`agents`]: reference bots with analytic likelihoods and shadow copies.
//! * [`wiring`]: session construction, the turn loop and the self-loop rebind.
//! * [`recognition`]: subject-side evidence accumulation and the stopping rule.
//! * [`protocol`]: line-delimited JSON framing for out-of-process bots.
//! * [`harness`]: config-driven trial runner, scoring and persistence.

pub mod agents;
pub mod harness;
pub mod protocol;
pub mod recognition;
pub mod seed;
pub mod types;
pub mod wiring;

pub use agents::{spawn_shadow, AgentError, AgentKind, AgentSpec, AgentState, Capabilities};
pub use harness::{
    run_experiment, run_trial, run_trials, score, ConfusionMatrix, ExperimentConfig, HarnessError, Parallelism, Summary,
    TrialResult,
};
pub use recognition::{
    decide, identity_token_check, make_probe, map_level, update_evidence, BackgroundModel,
    EvidenceState, Hypothesis, Recognizer, StrategyConfig, StrategyKind,
};
pub use seed::SeedTree;
pub use types::{
    role_swap, Condition, CoreError, Message, RecognitionLevel, Seat, SessionId, Transcript,
    Verdict, VerdictLabel,
};
pub use wiring::{
    build_session, ChannelTransform, Counterpart, RebindGate, RebindRequest, Session, TurnRecord, WiringError,
};

//! Reference conversational agents.
//!
//! Every in-process agent is a value: its reply depends only on its spec, the
//! history it has seen and its own generator. That is what lets a subject
//! spin up a *shadow* of its own program and ask what that program would say
//! from the other chair.

pub mod corpus;
pub mod markov;
mod template;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::types::{validate_text, CoreError, Seat, SessionId, Transcript};
pub use markov::{MarkovModel, OOV_TOKEN};

/// Floor applied to every model likelihood so a single surprising message
/// cannot drive a log-likelihood to minus infinity.
pub const LIKELIHOOD_FLOOR: f64 = 1e-6;

pub const DEFAULT_MARKOV_ORDER: usize = 1;
pub const DEFAULT_MARKOV_ALPHA: f64 = 0.1;
pub const DEFAULT_MARKOV_LENGTH: usize = 8;
pub const DEFAULT_ECHO_OPENER: &str = "hello";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("agent misbehaved: {0}")]
    Misbehavior(String),
    #[error("{kind} agents do not support {capability}")]
    UnsupportedCapability {
        kind: AgentKind,
        capability: &'static str,
    },
    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParam { key: String, reason: String },
}

impl From<CoreError> for AgentError {
    fn from(e: CoreError) -> Self {
        AgentError::Misbehavior(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgentKind {
    #[serde(rename = "template", alias = "template_bot", alias = "TemplateBot")]
    TemplateBot,
    #[serde(rename = "markov", alias = "markov_bot", alias = "MarkovBot")]
    MarkovBot,
    #[serde(rename = "echo", alias = "echo_bot", alias = "EchoBot")]
    EchoBot,
    #[serde(rename = "external", alias = "External")]
    External,
}

impl AgentKind {
    pub fn label(self) -> &'static str {
        match self {
            AgentKind::TemplateBot => "template",
            AgentKind::MarkovBot => "markov",
            AgentKind::EchoBot => "echo",
            AgentKind::External => "external",
        }
    }

    /// What the kind can do for a recognition strategy.
    ///
    /// Self-simulation is an explicit per-kind flag rather than something a
    /// strategy discovers: an external black box cannot be copied.
    pub fn capabilities(self) -> Capabilities {
        match self {
            AgentKind::External => Capabilities {
                self_simulation: false,
                analytic_likelihood: false,
            },
            _ => Capabilities {
                self_simulation: true,
                analytic_likelihood: true,
            },
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for AgentKind {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "template" | "template_bot" | "templatebot" => Ok(AgentKind::TemplateBot),
            "markov" | "markov_bot" | "markovbot" => Ok(AgentKind::MarkovBot),
            "echo" | "echo_bot" | "echobot" => Ok(AgentKind::EchoBot),
            "external" => Ok(AgentKind::External),
            _ => Err(CoreError::Unknown {
                what: "agent kind",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    /// Can spawn a private copy of its own program.
    pub self_simulation: bool,
    /// Can report the probability of a candidate reply.
    pub analytic_likelihood: bool,
}

/// Reproducible recipe for an agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub kind: AgentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, deserialize_with = "scalar_params")]
    pub params: BTreeMap<String, String>,
}

fn scalar_params<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, String>, D::Error> {
    use serde::de::Error;
    let raw = BTreeMap::<String, serde_json::Value>::deserialize(d)?;
    raw.into_iter()
        .map(|(k, v)| {
            let s = match v {
                serde_json::Value::String(s) => s,
                serde_json::Value::Number(n) => n.to_string(),
                serde_json::Value::Bool(b) => b.to_string(),
                other => return Err(D::Error::custom(format!("param `{k}` must be a scalar, got {other}"))),
            };
            Ok((k, s))
        })
        .collect()
}

impl AgentSpec {
    pub fn new(kind: AgentKind, seed: u64) -> Self {
        AgentSpec {
            kind,
            seed,
            params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        AgentSpec {
            seed,
            ..self.clone()
        }
    }

    pub fn param(&self, key: &str) -> Option<&str> {
        self.params.get(key).map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str, default: T) -> Result<T, AgentError> {
        match self.param(key) {
            None => Ok(default),
            Some(raw) => raw.parse().map_err(|_| AgentError::InvalidParam {
                key: key.to_string(),
                reason: format!("cannot parse `{raw}`"),
            }),
        }
    }

    /// Kind capabilities, with self-simulation switchable off via `introspect = false`.
    pub fn capabilities(&self) -> Capabilities {
        let mut caps = self.kind.capabilities();
        if self.param("introspect") == Some("false") {
            caps.self_simulation = false;
        }
        caps
    }

    pub fn describe(&self) -> String {
        let params: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        if params.is_empty() {
            self.kind.label().to_string()
        } else {
            format!("{}({})", self.kind.label(), params.join(","))
        }
    }
}

#[derive(Debug, Clone)]
enum Behavior {
    Template(Arc<Vec<String>>),
    Markov { model: Arc<MarkovModel>, length: usize },
    Echo { opener: String },
}

impl Behavior {
    fn build(spec: &AgentSpec) -> Result<Behavior, AgentError> {
        let invalid = |key: &str, reason: String| AgentError::InvalidParam {
            key: key.to_string(),
            reason,
        };
        match spec.kind {
            AgentKind::TemplateBot => {
                let lines = template::resolve(spec.param("lines"), spec.param("script"))
                    .map_err(|r| invalid("script", r))?;
                Ok(Behavior::Template(Arc::new(lines)))
            }
            AgentKind::MarkovBot => {
                let text = match (spec.param("corpus_text"), spec.param("corpus")) {
                    (Some(inline), _) => inline.to_string(),
                    (None, Some(name)) => corpus::load(name).map_err(|r| invalid("corpus", r))?,
                    (None, None) => {
                        return Err(invalid("corpus", "markov agents need `corpus` or `corpus_text`".into()))
                    }
                };
                let order = spec.parsed("order", DEFAULT_MARKOV_ORDER)?;
                let alpha = spec.parsed("alpha", DEFAULT_MARKOV_ALPHA)?;
                let length = spec.parsed("length", DEFAULT_MARKOV_LENGTH)?;
                if length == 0 {
                    return Err(invalid("length", "must be at least 1".into()));
                }
                let model = MarkovModel::train(&text, order, alpha).map_err(|r| invalid("corpus", r))?;
                Ok(Behavior::Markov {
                    model: Arc::new(model),
                    length,
                })
            }
            AgentKind::EchoBot => {
                let opener = spec.param("opener").unwrap_or(DEFAULT_ECHO_OPENER).to_string();
                validate_text(&opener).map_err(|e| invalid("opener", e.to_string()))?;
                Ok(Behavior::Echo { opener })
            }
            AgentKind::External => Err(AgentError::UnsupportedCapability {
                kind: AgentKind::External,
                capability: "in-process execution",
            }),
        }
    }
}

/// The message an agent is answering: the last history entry, if it came from the other seat.
fn pending_incoming(history: &Transcript) -> Option<&str> {
    history
        .last()
        .filter(|m| m.seat() == Seat::Counterpart)
        .map(|m| m.text())
}

fn own_messages(history: &Transcript) -> usize {
    history.iter().filter(|m| m.seat() == Seat::Subject).count()
}

/// A live agent: spec, the history it has seen from its own seat, and its generator.
#[derive(Debug, Clone)]
pub struct AgentState {
    spec: AgentSpec,
    behavior: Behavior,
    history: Transcript,
    rng: ChaCha8Rng,
}

impl AgentState {
    /// Instantiates an in-process agent seeded with `spec.seed`.
    pub fn new(spec: &AgentSpec) -> Result<Self, AgentError> {
        let behavior = Behavior::build(spec)?;
        Ok(AgentState {
            spec: spec.clone(),
            behavior,
            history: Transcript::new(SessionId::new(format!("agent-{}", spec.kind.label()))),
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
        })
    }

    pub fn spec(&self) -> &AgentSpec {
        &self.spec
    }

    pub fn history(&self) -> &Transcript {
        &self.history
    }

    pub fn capabilities(&self) -> Capabilities {
        self.spec.capabilities()
    }

    /// A fresh copy of this agent's program with its own seed and empty
    /// history. Shares the trained model instead of rebuilding it.
    pub fn shadow(&self, seed: u64) -> Result<AgentState, AgentError> {
        self.shadow_with_history(seed, Transcript::new(SessionId::new("shadow")))
    }

    /// A shadow re-synchronized to `history` (already seen from the shadow's seat).
    pub fn shadow_with_history(&self, seed: u64, history: Transcript) -> Result<AgentState, AgentError> {
        if !self.capabilities().self_simulation {
            return Err(AgentError::UnsupportedCapability {
                kind: self.spec.kind,
                capability: "self-simulation",
            });
        }
        Ok(AgentState {
            spec: self.spec.with_seed(seed),
            behavior: self.behavior.clone(),
            history,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn observe_incoming(&mut self, text: &str) -> Result<(), AgentError> {
        self.history.push_text(Seat::Counterpart, text)?;
        Ok(())
    }

    pub fn record_outgoing(&mut self, text: &str) -> Result<(), AgentError> {
        self.history.push_text(Seat::Subject, text)?;
        Ok(())
    }

    /// Produces the next utterance for the current history without recording it.
    pub fn generate(&mut self) -> Result<String, AgentError> {
        let text = match &self.behavior {
            Behavior::Template(lines) => lines[own_messages(&self.history) % lines.len()].clone(),
            Behavior::Echo { opener } => pending_incoming(&self.history)
                .unwrap_or(opener.as_str())
                .to_string(),
            Behavior::Markov { model, length } => {
                let mut context: Vec<String> = pending_incoming(&self.history)
                    .map(|t| t.split_whitespace().map(str::to_string).collect())
                    .unwrap_or_default();
                let mut words = Vec::with_capacity(*length);
                for _ in 0..*length {
                    let ctx: Vec<&str> = context.iter().map(String::as_str).collect();
                    let next = model.sample_next(&ctx, &mut self.rng);
                    context.push(next.clone());
                    words.push(next);
                }
                words.join(" ")
            }
        };
        validate_text(&text).map_err(|e| AgentError::Misbehavior(e.to_string()))?;
        Ok(text)
    }

    /// One conversational step: absorb `incoming` (absent only when opening), reply, record the reply.
    pub fn respond(&mut self, incoming: Option<&str>) -> Result<String, AgentError> {
        if let Some(text) = incoming {
            self.observe_incoming(text)?;
        }
        let text = self.generate()?;
        self.record_outgoing(&text)?;
        Ok(text)
    }

    /// Probability that this program, having seen `history`, says exactly `candidate` next.
    ///
    /// Distribution-level: marginalized over the generator, so independent of
    /// the seed. Not floored; see [`AgentState::predictive_probability`].
    pub fn exact_probability(&self, history: &Transcript, candidate: &str) -> Result<f64, AgentError> {
        self.likelihood(history, candidate, 0.0)
    }

    /// Like [`AgentState::exact_probability`], but every factor is floored at
    /// [`LIKELIHOOD_FLOOR`]: each word for the Markov bot, the whole message
    /// for the deterministic bots. Always in `(0, 1]`.
    pub fn predictive_probability(&self, history: &Transcript, candidate: &str) -> Result<f64, AgentError> {
        self.likelihood(history, candidate, LIKELIHOOD_FLOOR)
    }

    fn likelihood(&self, history: &Transcript, candidate: &str, floor: f64) -> Result<f64, AgentError> {
        if !self.capabilities().analytic_likelihood {
            return Err(AgentError::UnsupportedCapability {
                kind: self.spec.kind,
                capability: "analytic likelihood",
            });
        }
        let p = match &self.behavior {
            Behavior::Template(lines) => {
                let line = &lines[own_messages(history) % lines.len()];
                if line == candidate { 1.0 } else { floor }
            }
            Behavior::Echo { opener } => {
                let expected = pending_incoming(history).unwrap_or(opener.as_str());
                if expected == candidate { 1.0 } else { floor }
            }
            Behavior::Markov { model, length } => {
                let words: Vec<&str> = candidate.split(' ').collect();
                if words.len() != *length || words.iter().any(|w| w.is_empty() || w.contains(char::is_whitespace)) {
                    floor
                } else {
                    let mut context: Vec<&str> = pending_incoming(history)
                        .map(|t| t.split_whitespace().collect())
                        .unwrap_or_default();
                    let mut p = 1.0;
                    for w in words {
                        p *= model.transition_probability(&context, w).max(floor);
                        context.push(w);
                    }
                    p
                }
            }
        };
        Ok(p)
    }
}

/// A private copy of `spec`'s program with a fresh seed and empty history.
pub fn spawn_shadow(spec: &AgentSpec, shadow_seed: u64) -> Result<AgentState, AgentError> {
    if !spec.capabilities().self_simulation {
        return Err(AgentError::UnsupportedCapability {
            kind: spec.kind,
            capability: "self-simulation",
        });
    }
    AgentState::new(&spec.with_seed(shadow_seed))
}

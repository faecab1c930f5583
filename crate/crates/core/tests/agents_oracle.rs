mod common;

use std::collections::HashMap;

use common::OracleBigram;
use textmirror::{spawn_shadow, AgentKind, AgentSpec, AgentState, Seat};

const TINY: &str = "a b a b a c b c";

fn tiny(seed: u64) -> AgentSpec {
    AgentSpec::new(AgentKind::MarkovBot, seed)
        .with_param("corpus_text", TINY)
        .with_param("length", 2)
}

fn primed(seed: u64, incoming: &str) -> AgentState {
    let mut a = AgentState::new(&tiny(seed)).unwrap();
    a.observe_incoming(incoming).unwrap();
    a
}

#[test]
fn exact_probability_matches_counting_oracle() {
    let oracle = OracleBigram::new(TINY, 0.1);
    for incoming in ["b", "a c", "zz"] {
        let agent = primed(0, incoming);
        let last = incoming.split_whitespace().last();
        let mut total = 0.0;
        for (msg, p) in oracle.messages(last, 2) {
            let got = agent.exact_probability(agent.history(), &msg).unwrap();
            assert!(common::rel_err(got, p) < 1e-12, "{incoming} -> {msg}: {got} vs {p}");
            total += got;
        }
        assert!((total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn sampled_frequencies_agree_with_likelihood() {
    let n = 10_000u64;
    let mut counts: HashMap<String, u64> = HashMap::new();
    for seed in 0..n {
        let mut a = primed(seed, "b");
        *counts.entry(a.generate().unwrap()).or_insert(0) += 1;
    }
    let agent = primed(0, "b");
    let mut covered = 0.0;
    for (msg, c) in &counts {
        let p = agent.exact_probability(agent.history(), msg).unwrap();
        assert!(p > 0.0, "sampled impossible message {msg}");
        covered += p;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        let freq = *c as f64 / n as f64;
        assert!((freq - p).abs() <= 3.0 * se + 1.0 / n as f64, "{msg}: freq {freq} vs p {p}");
    }
    assert!(covered > 0.95);
}

#[test]
fn wrong_shape_candidates_get_no_mass() {
    let agent = primed(0, "b");
    let h = agent.history();
    assert_eq!(agent.exact_probability(h, "a").unwrap(), 0.0);
    assert_eq!(agent.exact_probability(h, "a b c").unwrap(), 0.0);
    let unk = agent.exact_probability(h, "a <unk>").unwrap();
    assert!(unk > 0.0);
    assert_eq!(agent.exact_probability(h, "a zz").unwrap(), unk);
}

#[test]
fn template_and_echo_are_deterministic() {
    let t = AgentSpec::new(AgentKind::TemplateBot, 0).with_param("script", 1);
    let run = |seed: u64| {
        let mut a = AgentState::new(&t.with_seed(seed)).unwrap();
        (0..6).map(|_| a.respond(Some("hello there")).unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(run(1), run(99));

    let e = AgentSpec::new(AgentKind::EchoBot, 3);
    let mut a = AgentState::new(&e).unwrap();
    let opener = a.respond(None).unwrap();
    assert!(!opener.is_empty());
    assert_eq!(a.respond(Some("copy me")).unwrap(), "copy me");
    let h = a.history().clone();
    let mut s = spawn_shadow(&e, 5).unwrap().shadow_with_history(5, h).unwrap();
    s.observe_incoming("next").unwrap();
    assert_eq!(s.exact_probability(s.history(), "next").unwrap(), 1.0);
    assert_eq!(s.exact_probability(s.history(), "other").unwrap(), 0.0);
}

#[test]
fn shadows_share_program_not_history() {
    let spec = AgentSpec::new(AgentKind::MarkovBot, 7).with_param("corpus", "a");
    let mut a = AgentState::new(&spec).unwrap();
    a.respond(Some("the river")).unwrap();
    let s = a.shadow(8).unwrap();
    assert_eq!(s.spec().seed, 8);
    assert!(s.history().is_empty());
    let synced = a.shadow_with_history(8, a.history().clone()).unwrap();
    assert_eq!(synced.history().len(), a.history().len());
    assert_eq!(spawn_shadow(&spec, 8).unwrap().spec(), s.spec());
    assert!(a.history().iter().any(|m| m.seat() == Seat::Counterpart));
}

#[test]
fn bad_params_are_rejected() {
    let cases = [
        AgentSpec::new(AgentKind::MarkovBot, 0),
        AgentSpec::new(AgentKind::MarkovBot, 0).with_param("corpus", "nope"),
        tiny(0).with_param("length", 0),
        AgentSpec::new(AgentKind::TemplateBot, 0).with_param("script", "x"),
        AgentSpec::new(AgentKind::TemplateBot, 0).with_param("lines", "| |"),
        AgentSpec::new(AgentKind::External, 0),
    ];
    for spec in cases {
        assert!(AgentState::new(&spec).is_err(), "{}", spec.describe());
    }
}

use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::thread;

use textmirror::protocol::{check_conformance, ExternalAgent, ProtocolError};
use textmirror::{
    run_trials, AgentKind, AgentSpec, Condition, ExperimentConfig, Message, Parallelism, Seat, SessionId,
    StrategyConfig, StrategyKind, VerdictLabel,
};

const REFBOT: &str = env!("CARGO_BIN_EXE_textmirror-refbot");

fn refbot(mode: &str) -> AgentSpec {
    AgentSpec::new(AgentKind::External, 7)
        .with_param("cmd", REFBOT)
        .with_param("args", format!("--mode {mode}"))
        .with_param("timeout_ms", 1500)
}

#[test]
fn refbot_passes_thirty_turns() {
    let report = check_conformance(&refbot("normal"), 30);
    assert!(report.passed(), "{:?}", report.violations);
    assert_eq!(report.turns_completed, 30);
    assert_eq!(report.descriptor.unwrap().name, "refbot");
}

#[test]
fn misbehaving_bots_fail_conformance() {
    for mode in ["no-hello", "oversize-hello", "wrong-turn", "silent", "crash", "garbage"] {
        let report = check_conformance(&refbot(mode), 5);
        assert!(!report.passed(), "{mode} passed");
        assert!(report.turns_completed < 5, "{mode}");
    }
}

#[test]
fn launch_without_target_is_rejected() {
    let spec = AgentSpec::new(AgentKind::External, 0);
    assert!(matches!(ExternalAgent::launch(&spec, Seat::Counterpart), Err(ProtocolError::Launch(_))));
    let missing = AgentSpec::new(AgentKind::External, 0).with_param("cmd", "/nonexistent/bot");
    assert!(matches!(ExternalAgent::launch(&missing, Seat::Counterpart), Err(ProtocolError::Launch(_))));
}

#[test]
fn tcp_agent_round_trip() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let server = thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut out = stream.try_clone().unwrap();
        let mut lines = BufReader::new(stream).lines();
        let hello: serde_json::Value = serde_json::from_str(&lines.next().unwrap().unwrap()).unwrap();
        assert_eq!(hello["type"], "hello");
        assert_eq!(hello["capabilities"][0], "seat:counterpart");
        writeln!(out, r#"{{"type":"hello","name":"tcp-echo","capabilities":[]}}"#).unwrap();
        for line in lines {
            let v: serde_json::Value = serde_json::from_str(&line.unwrap()).unwrap();
            if v["type"] == "bye" {
                break;
            }
            let reply = serde_json::json!({"type": "msg", "turn": v["turn"], "text": v["text"]});
            writeln!(out, "{reply}").unwrap();
        }
    });

    let spec = AgentSpec::new(AgentKind::External, 0).with_param("addr", &addr);
    let mut agent = ExternalAgent::launch(&spec, Seat::Counterpart).unwrap();
    assert_eq!(agent.descriptor().name, "tcp-echo");
    let sid = SessionId::new("tcp");
    for k in 0..4u64 {
        let out = Message::new(sid.clone(), 2 * k, Seat::Subject, format!("line {k}")).unwrap();
        assert_eq!(agent.reply_to(&out).unwrap(), format!("line {k}"));
    }
    assert_eq!(agent.violations(), 0);
    agent.close();
    server.join().unwrap();
}

fn external_other_config(mode: &str, dir: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig {
        trials_per_condition: 2,
        conditions: Condition::CLASSIFIABLE.to_vec(),
        subject: AgentSpec::new(AgentKind::MarkovBot, 1).with_param("corpus", "a"),
        strategy: StrategyConfig::new(StrategyKind::SequentialLikelihood).with_max_turns(10),
        other_pool: vec![refbot(mode)],
        budget: 10,
        master_seed: 3,
        output_dir: dir.to_path_buf(),
        parallelism: Parallelism::Sequential,
        channel: Default::default(),
        rebind_gate: Default::default(),
    }
}

#[test]
fn crashing_counterpart_aborts_only_its_trials() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = external_other_config("crash", dir.path());
    let results = run_trials(&cfg).unwrap();
    assert_eq!(results.len(), 6);
    for r in &results {
        if r.condition == Condition::Other {
            assert!(r.aborted.is_some());
            assert!(r.verdict.is_none());
        } else {
            assert!(r.aborted.is_none());
        }
    }
    let summary = textmirror::harness::summarize(&cfg, &results);
    assert_eq!(summary.aborted.get("other"), Some(&2));
    assert_eq!(summary.completed, 4);
    assert_eq!(summary.matrix.row_total(Condition::Other), 0);
}

#[test]
fn external_subject_judges_itself() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = external_other_config("normal", dir.path());
    cfg.subject = refbot("normal");
    cfg.other_pool = vec![AgentSpec::new(AgentKind::MarkovBot, 2).with_param("corpus", "b")];
    cfg.conditions = vec![Condition::Mirror];
    let results = run_trials(&cfg).unwrap();
    for r in &results {
        assert_eq!(r.verdict.as_ref().unwrap().label(), VerdictLabel::Mirror);
        assert_eq!(r.protocol_violations, 0);
    }
}

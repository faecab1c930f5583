use std::fs::File;
use std::io::{self, BufRead, BufReader, IsTerminal, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use textmirror::harness::{run_experiment, Metric};
use textmirror::protocol::check_conformance;
use textmirror::wiring::{Responder, SubjectSeat};
use textmirror::{
    build_session, AgentKind, AgentSpec, Condition, ExperimentConfig, Message, Seat, SeedTree, StrategyConfig,
    StrategyKind, Summary, Transcript, TurnRecord, VerdictLabel, WiringError,
};

#[derive(Parser)]
#[command(name = "textmirror", version, about = "Textual mirror-test harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and print its summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override `output_dir`.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Override `trials_per_condition`.
        #[arg(long)]
        trials: Option<u32>,
    },
    /// One session with a built-in subject. Under `other` you type the counterpart's lines.
    Chat {
        /// Subject kind: markov, template or echo.
        #[arg(long, default_value = "markov")]
        agent: AgentKind,
        #[arg(long, default_value = "other")]
        condition: Condition,
        #[arg(long, default_value = "sequential_likelihood")]
        strategy: StrategyKind,
        #[arg(long, default_value_t = 30)]
        budget: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Corpus for a markov subject.
        #[arg(long, default_value = "a")]
        corpus: String,
        /// Built-in script index for a template subject.
        #[arg(long, default_value_t = 0)]
        script: usize,
    },
    /// Check that an out-of-process bot speaks the wire protocol.
    ValidateAgent {
        #[arg(long, required_unless_present = "addr")]
        cmd: Option<String>,
        /// Arguments passed to the command, whitespace-separated.
        #[arg(long, allow_hyphen_values = true)]
        args: Option<String>,
        /// Connect over TCP instead of spawning.
        #[arg(long, conflicts_with = "cmd")]
        addr: Option<String>,
        #[arg(long, default_value_t = 30)]
        turns: u32,
        #[arg(long)]
        timeout_ms: Option<u64>,
    },
    /// Print a saved transcript and check its shape.
    Replay {
        #[arg(long)]
        transcript: PathBuf,
        /// Also require every counterpart line to equal the preceding subject line.
        #[arg(long)]
        mirror: bool,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Run { config, output, trials } => run(config, output, trials),
        Command::Chat {
            agent,
            condition,
            strategy,
            budget,
            seed,
            corpus,
            script,
        } => {
            let spec = match agent {
                AgentKind::MarkovBot => AgentSpec::new(agent, seed).with_param("corpus", corpus),
                AgentKind::TemplateBot => AgentSpec::new(agent, seed).with_param("script", script),
                AgentKind::EchoBot => AgentSpec::new(agent, seed),
                AgentKind::External => bail!("chat seats a built-in subject; use `run` for external ones"),
            };
            let stdin = io::stdin();
            chat(&spec, condition, strategy, budget, Box::new(BufReader::new(stdin)), &mut io::stdout())
        }
        Command::ValidateAgent {
            cmd,
            args,
            addr,
            turns,
            timeout_ms,
        } => {
            let mut spec = AgentSpec::new(AgentKind::External, 0);
            if let Some(cmd) = cmd {
                spec = spec.with_param("cmd", cmd);
            }
            if let Some(addr) = addr {
                spec = spec.with_param("addr", addr);
            }
            if let Some(args) = args {
                spec = spec.with_param("args", args);
            }
            if let Some(t) = timeout_ms {
                spec = spec.with_param("timeout_ms", t);
            }
            let report = check_conformance(&spec, turns);
            match &report.descriptor {
                Some(d) => println!("agent: {} [{}]", d.name, d.capabilities.join(", ")),
                None => println!("agent: no handshake"),
            }
            println!("turns completed: {}/{turns}", report.turns_completed);
            for v in &report.violations {
                println!("violation: {v}");
            }
            if report.passed() {
                println!("PASS");
                Ok(ExitCode::SUCCESS)
            } else {
                println!("FAIL");
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Replay { transcript, mirror } => replay(transcript, mirror),
    }
}

fn run(path: PathBuf, output: Option<PathBuf>, trials: Option<u32>) -> Result<ExitCode> {
    let mut cfg = ExperimentConfig::load(&path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(dir) = output {
        cfg.output_dir = dir;
    }
    if let Some(n) = trials {
        cfg.trials_per_condition = n;
    }
    let summary = run_experiment(&cfg)?;
    print_summary(&summary, &cfg);
    println!("outputs: {}", cfg.output_dir.display());
    Ok(ExitCode::SUCCESS)
}

fn metric(m: &Metric) -> String {
    m.value().map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"))
}

fn print_summary(s: &Summary, cfg: &ExperimentConfig) {
    println!("subject {} / strategy {}", s.subject, s.strategy.kind);
    println!("seed {} budget {} trials/condition {}", s.master_seed, s.budget, s.trials_per_condition);
    print!("{:<10}", "truth");
    for v in VerdictLabel::ALL {
        print!("{:>11}", v.label());
    }
    println!("{:>10}", "acc");
    for c in &cfg.conditions {
        print!("{:<10}", c.label());
        for v in VerdictLabel::ALL {
            print!("{:>11}", s.matrix.count(*c, v));
        }
        println!("{:>10}", metric(&s.condition_accuracy[c.label()]));
    }
    println!("accuracy {}", metric(&s.accuracy));
    for (c, m) in &s.mean_turns_to_verdict {
        println!("mean turns to verdict ({c}) {}", metric(m));
    }
    let aborted: u64 = s.aborted.values().sum();
    println!("completed {} aborted {} protocol violations {}", s.completed, aborted, s.protocol_violations);
    if s.strategy.downgraded_trials > 0 {
        println!("downgraded trials {}", s.strategy.downgraded_trials);
    }
}

/// The person at the terminal, answering each subject line with one line of their own.
struct Typist {
    input: Box<dyn BufRead + Send>,
}

impl Responder for Typist {
    fn reply(&mut self, out: &Message) -> Result<String, WiringError> {
        print!("subject> {}\nyou> ", out.text());
        let _ = io::stdout().flush();
        let mut line = String::new();
        let n = self
            .input
            .read_line(&mut line)
            .map_err(|e| WiringError::Strategy(format!("reading input: {e}")))?;
        if n == 0 {
            return Err(WiringError::Strategy("input closed".into()));
        }
        let text = line.trim().to_string();
        if !io::stdin().is_terminal() {
            println!("{text}");
        }
        if text.is_empty() {
            Ok("...".into())
        } else {
            Ok(text)
        }
    }

    fn name(&self) -> String {
        "terminal".into()
    }
}

fn chat(
    spec: &AgentSpec,
    condition: Condition,
    strategy: StrategyKind,
    budget: u32,
    input: Box<dyn BufRead + Send>,
    out: &mut impl Write,
) -> Result<ExitCode> {
    let cfg = StrategyConfig::new(strategy).with_max_turns(budget);
    let seeds = SeedTree::new(spec.seed).child("chat", 0)?;
    let mut session = build_session(condition, spec, &cfg, None, budget, &seeds).or_else(|e| match e {
        WiringError::MissingCounterpart(Condition::Other) => {
            let placeholder = AgentSpec::new(AgentKind::EchoBot, 0);
            build_session(condition, spec, &cfg, Some(&placeholder), budget, &seeds)
        }
        e => Err(e),
    })?;
    if condition == Condition::Other {
        session = session.with_remote(Box::new(Typist { input }))?;
        writeln!(out, "you are the counterpart; answer each line (ctrl-d to stop)")?;
    } else {
        writeln!(out, "watching {} under {}", spec.describe(), condition.label())?;
    }
    if let SubjectSeat::Local { strategy, .. } = session.subject() {
        writeln!(out, "strategy {}", strategy.config().kind)?;
    }
    while session.is_running() {
        let rec = match session.step() {
            Ok(r) => r,
            Err(WiringError::Strategy(msg)) if msg == "input closed" => break,
            Err(e) => return Err(e.into()),
        };
        if condition == Condition::Other {
            writeln!(out, "     level {}", rec.level)?;
        } else {
            print_turn(out, &rec)?;
        }
    }
    match session.verdict() {
        Some(v) => writeln!(
            out,
            "verdict: {} (confidence {:.4}, {} turns{})",
            v.label(),
            v.confidence(),
            v.turns_used(),
            v.reason().map(|r| format!(", {r}")).unwrap_or_default()
        )?,
        None => writeln!(out, "no verdict")?,
    }
    writeln!(out, "level: {}", session.level())?;
    session.close();
    Ok(ExitCode::SUCCESS)
}

fn print_turn(out: &mut impl Write, rec: &TurnRecord) -> io::Result<()> {
    if let Some(s) = &rec.sent {
        writeln!(out, "[{:>2}] subject> {s}", rec.subject_turn)?;
    }
    if let Some(r) = &rec.received {
        writeln!(out, "     reply> {r}")?;
    }
    writeln!(out, "     level {}", rec.level)
}

fn replay(path: PathBuf, mirror: bool) -> Result<ExitCode> {
    let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    let t = Transcript::from_jsonl(BufReader::new(file))?;
    for m in t.iter() {
        let who = match m.seat() {
            Seat::Subject => "subject",
            Seat::Counterpart => "counterpart",
        };
        println!("[{:>3}] {who:>11}: {}", m.turn_index(), m.text());
    }
    let alternate = t.seats_alternate();
    println!("session {} messages {} alternating {alternate}", t.session_id(), t.len());
    let mut ok = alternate;
    if mirror {
        let holds = t.mirror_identity_holds();
        println!("mirror identity {holds}");
        ok &= holds;
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

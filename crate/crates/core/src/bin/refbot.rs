//! Reference external agent speaking the line-delimited JSON protocol.
//!
//! In the counterpart seat it answers every `msg` with a Markov reply. In the
//! subject seat it also watches for its own words coming back and then
//! answers with a mirror verdict. The `--mode` flag makes it misbehave on
//! purpose, for exercising the harness's error paths.

use std::io::{self, BufRead, Write};
use std::process::ExitCode;

use textmirror::protocol::{decode, encode, Frame, CAP_VERDICT, ENV_SEAT, ENV_SEED, MAX_LINE_BYTES};
use textmirror::{AgentKind, AgentSpec, AgentState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Normal,
    NoHello,
    OversizeHello,
    WrongTurn,
    Silent,
    Crash,
    Garbage,
}

impl Mode {
    fn parse(s: &str) -> Option<Mode> {
        Some(match s {
            "normal" => Mode::Normal,
            "no-hello" => Mode::NoHello,
            "oversize-hello" => Mode::OversizeHello,
            "wrong-turn" => Mode::WrongTurn,
            "silent" => Mode::Silent,
            "crash" => Mode::Crash,
            "garbage" => Mode::Garbage,
            _ => return None,
        })
    }
}

struct Options {
    name: String,
    seed: u64,
    corpus: String,
    mode: Mode,
}

const USAGE: &str = "usage: textmirror-refbot [--name N] [--seed S] [--corpus a|b|PATH] \
[--mode normal|no-hello|oversize-hello|wrong-turn|silent|crash|garbage]";

fn parse_args() -> Result<Options, String> {
    let mut opts = Options {
        name: "refbot".into(),
        seed: std::env::var(ENV_SEED).ok().and_then(|s| s.parse().ok()).unwrap_or(0),
        corpus: "b".into(),
        mode: Mode::Normal,
    };
    let mut args = std::env::args().skip(1);
    while let Some(flag) = args.next() {
        let mut value = || args.next().ok_or_else(|| format!("{flag} needs a value"));
        match flag.as_str() {
            "--name" => opts.name = value()?,
            "--seed" => opts.seed = value()?.parse().map_err(|_| "--seed must be an integer".to_string())?,
            "--corpus" => opts.corpus = value()?,
            "--mode" => {
                let v = value()?;
                opts.mode = Mode::parse(&v).ok_or_else(|| format!("unknown mode `{v}`"))?;
            }
            "-h" | "--help" => return Err(USAGE.into()),
            other => return Err(format!("unknown argument `{other}`\n{USAGE}")),
        }
    }
    Ok(opts)
}

fn send(out: &mut impl Write, frame: &Frame) -> io::Result<()> {
    let line = encode(frame).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
    writeln!(out, "{line}")?;
    out.flush()
}

fn run(opts: Options) -> io::Result<()> {
    let spec = AgentSpec::new(AgentKind::MarkovBot, opts.seed).with_param("corpus", &opts.corpus);
    let mut agent = AgentState::new(&spec).map_err(|e| io::Error::other(e.to_string()))?;
    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    let mut subject = std::env::var(ENV_SEAT).map(|s| s == "subject").unwrap_or(false);
    let mut greeted = false;
    let mut last_sent: Option<String> = None;

    for line in stdin.lock().lines() {
        let line = line?;
        let frame = match decode(&line) {
            Ok(f) => f,
            Err(e) => {
                send(&mut out, &Frame::Error { message: e.to_string() })?;
                continue;
            }
        };
        match frame {
            Frame::Hello { capabilities, .. } => {
                if capabilities.iter().any(|c| c == "seat:subject") {
                    subject = true;
                }
                greeted = true;
                match opts.mode {
                    Mode::NoHello => send(&mut out, &Frame::msg(0, "hi there"))?,
                    Mode::OversizeHello => {
                        let name = "x".repeat(MAX_LINE_BYTES);
                        send(&mut out, &Frame::Hello { name, capabilities: vec![] }).or_else(|_| {
                            writeln!(out, r#"{{"type":"hello","name":"{}"}}"#, "x".repeat(MAX_LINE_BYTES))?;
                            out.flush()
                        })?;
                    }
                    _ => {
                        let mut caps = vec!["respond"];
                        if subject {
                            caps.push(CAP_VERDICT);
                        }
                        send(&mut out, &Frame::hello(&opts.name, &caps))?;
                    }
                }
            }
            Frame::Msg { turn, text } => {
                if !greeted {
                    send(&mut out, &Frame::Error { message: "msg before hello".into() })?;
                    continue;
                }
                match opts.mode {
                    Mode::Silent => continue,
                    Mode::Crash => std::process::exit(3),
                    Mode::Garbage => {
                        writeln!(out, "this is not a frame")?;
                        out.flush()?;
                        continue;
                    }
                    _ => {}
                }
                if subject && last_sent.as_deref() == Some(text.as_str()) {
                    send(
                        &mut out,
                        &Frame::Verdict {
                            label: "mirror".into(),
                            confidence: 0.99,
                            reason: None,
                        },
                    )?;
                    continue;
                }
                let incoming = (!text.is_empty()).then_some(text.as_str());
                let reply = agent.respond(incoming).map_err(|e| io::Error::other(e.to_string()))?;
                let turn = if opts.mode == Mode::WrongTurn { turn + 1 } else { turn };
                send(&mut out, &Frame::msg(turn, &reply))?;
                last_sent = Some(reply);
            }
            Frame::Bye {} => return Ok(()),
            Frame::Verdict { .. } | Frame::Error { .. } => {}
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let opts = match parse_args() {
        Ok(o) => o,
        Err(msg) => {
            eprintln!("{msg}");
            return ExitCode::from(2);
        }
    };
    match run(opts) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("refbot: {e}");
            ExitCode::FAILURE
        }
    }
}

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use super::frame::{decode, encode, Frame, MAX_LINE_BYTES};
use super::ProtocolError;

/// Why a read produced no frame.
#[derive(Debug, Clone, PartialEq)]
pub enum ReadFailure {
    Timeout,
    Closed,
    Oversize,
    Malformed(String),
    Io(String),
}

enum LineEvent {
    Line(String),
    Oversize,
    Eof,
    Io(String),
}

/// A bidirectional line-delimited JSON channel to one agent.
///
/// A dedicated thread does the blocking reads and hands whole lines over a
/// channel, so a silent peer can always be abandoned after the timeout.
pub struct Connection {
    label: String,
    writer: Box<dyn Write + Send>,
    lines: Receiver<LineEvent>,
    child: Option<Child>,
    dead: Option<ReadFailure>,
}

impl std::fmt::Debug for Connection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Connection").field("label", &self.label).finish()
    }
}

fn pump<R: Read>(reader: R, tx: mpsc::Sender<LineEvent>) {
    let mut reader = BufReader::new(reader);
    loop {
        let mut buf = Vec::new();
        let event = match (&mut reader).take(MAX_LINE_BYTES as u64 + 1).read_until(b'\n', &mut buf) {
            Ok(0) => LineEvent::Eof,
            Ok(_) => {
                let terminated = buf.last() == Some(&b'\n');
                if terminated {
                    buf.pop();
                }
                if !terminated && buf.len() > MAX_LINE_BYTES {
                    LineEvent::Oversize
                } else {
                    match String::from_utf8(buf) {
                        Ok(s) => LineEvent::Line(s),
                        Err(_) => LineEvent::Io("line is not valid UTF-8".into()),
                    }
                }
            }
            Err(e) => LineEvent::Io(e.to_string()),
        };
        let stop = !matches!(event, LineEvent::Line(_));
        if tx.send(event).is_err() || stop {
            return;
        }
    }
}

impl Connection {
    pub fn from_streams<R, W>(label: &str, reader: R, writer: W) -> Connection
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let (tx, rx) = mpsc::channel();
        thread::Builder::new()
            .name(format!("frames-{label}"))
            .spawn(move || pump(reader, tx))
            .expect("spawn frame reader");
        Connection {
            label: label.to_string(),
            writer: Box::new(writer),
            lines: rx,
            child: None,
            dead: None,
        }
    }

    /// Launches `cmd` and talks to it over its standard input and output.
    pub fn spawn(cmd: &str, args: &[String], env: &[(String, String)]) -> Result<Connection, ProtocolError> {
        let mut child = Command::new(cmd)
            .args(args)
            .envs(env.iter().map(|(k, v)| (k.as_str(), v.as_str())))
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| ProtocolError::Launch(format!("{cmd}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut conn = Connection::from_streams(cmd, stdout, stdin);
        conn.child = Some(child);
        Ok(conn)
    }

    pub fn connect_tcp(addr: &str, timeout: Duration) -> Result<Connection, ProtocolError> {
        let sock = addr
            .parse()
            .map_err(|e| ProtocolError::Launch(format!("bad address {addr}: {e}")))?;
        let stream = TcpStream::connect_timeout(&sock, timeout)
            .map_err(|e| ProtocolError::Launch(format!("{addr}: {e}")))?;
        let reader = stream
            .try_clone()
            .map_err(|e| ProtocolError::Launch(format!("{addr}: {e}")))?;
        Ok(Connection::from_streams(addr, reader, stream))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn send(&mut self, frame: &Frame) -> Result<(), ProtocolError> {
        let line = encode(frame)?;
        let write = |w: &mut Box<dyn Write + Send>| -> std::io::Result<()> {
            w.write_all(line.as_bytes())?;
            w.write_all(b"\n")?;
            w.flush()
        };
        write(&mut self.writer).map_err(|e| ProtocolError::CounterpartFailure(format!("write failed: {e}")))
    }

    /// Waits up to `timeout` for the next frame. After any failure the
    /// connection is dead and every later read fails the same way.
    pub fn recv(&mut self, timeout: Duration) -> Result<Frame, ReadFailure> {
        if let Some(f) = &self.dead {
            return Err(f.clone());
        }
        let failure = match self.lines.recv_timeout(timeout) {
            Ok(LineEvent::Line(line)) => match decode(&line) {
                Ok(frame) => return Ok(frame),
                Err(ProtocolError::Oversize(_)) => ReadFailure::Oversize,
                Err(e) => return Err(ReadFailure::Malformed(e.to_string())),
            },
            Ok(LineEvent::Oversize) => ReadFailure::Oversize,
            Ok(LineEvent::Eof) | Err(RecvTimeoutError::Disconnected) => ReadFailure::Closed,
            Ok(LineEvent::Io(e)) => ReadFailure::Io(e),
            Err(RecvTimeoutError::Timeout) => ReadFailure::Timeout,
        };
        self.dead = Some(failure.clone());
        self.kill();
        Err(failure)
    }

    fn kill(&mut self) {
        if let Some(mut child) = self.child.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }

    /// Lets a cooperating child exit on its own before it is killed.
    pub fn shutdown(&mut self, grace: Duration) {
        if let Some(child) = self.child.as_mut() {
            let deadline = std::time::Instant::now() + grace;
            while std::time::Instant::now() < deadline {
                if let Ok(Some(_)) = child.try_wait() {
                    self.child = None;
                    return;
                }
                thread::sleep(Duration::from_millis(2));
            }
        }
        self.kill();
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        self.kill();
    }
}

//! Client for an out-of-process text generator.
//!
//! The wire format is one UTF-8 line per request and one per response:
//!
//! ```text
//! GENERATE max_words=50 temperature=0.9 sample=1 seed_rng=7 text=keywords:%20House%20Fire
//! OK text=The%20house%20is%20on%20fire.
//! ERR model not loaded
//! ```
//!
//! The peer is either a TCP endpoint or a child process spoken to over its
//! standard streams. Any failure drops the connection so that a late reply
//! can never be paired with the next request.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::str::FromStr;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use super::{GenerationParams, GeneratorError};
use crate::text::{percent_decode, percent_encode};

pub fn encode_request(seed: &str, params: &GenerationParams) -> String {
    format!(
        "GENERATE max_words={} temperature={} sample={} seed_rng={} text={}",
        params.max_words,
        params.temperature,
        u8::from(params.sampling),
        params.rng_seed,
        percent_encode(seed)
    )
}

/// Parses one response line (without its terminator) into message text.
pub fn parse_response(line: &str) -> Result<String, GeneratorError> {
    let line = line.trim_end_matches(['\r', '\n']);
    if let Some(rest) = line.strip_prefix("OK text=") {
        let text = percent_decode(rest)
            .ok_or_else(|| GeneratorError::Protocol(format!("bad encoding in {rest:?}")))?;
        if text.trim().is_empty() {
            return Err(GeneratorError::Protocol("empty message".into()));
        }
        Ok(text)
    } else if line == "ERR" {
        Err(GeneratorError::ExternalRejected(String::new()))
    } else if let Some(reason) = line.strip_prefix("ERR ") {
        Err(GeneratorError::ExternalRejected(reason.to_string()))
    } else {
        Err(GeneratorError::Protocol(format!("unexpected reply {line:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExternalTarget {
    /// `host:port` of a line-protocol server.
    Tcp(String),
    /// Shell command whose stdin/stdout carry the protocol.
    Command(String),
}

impl FromStr for ExternalTarget {
    type Err = GeneratorError;

    /// `tcp:<addr>`, `exec:<command>`, or a bare value: socket addresses are
    /// TCP targets and anything else is run as a command.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(GeneratorError::ExternalUnavailable("empty target".into()));
        }
        if let Some(addr) = s.strip_prefix("tcp:") {
            return Ok(ExternalTarget::Tcp(addr.to_string()));
        }
        if let Some(cmd) = s.strip_prefix("exec:") {
            return Ok(ExternalTarget::Command(cmd.to_string()));
        }
        if s.parse::<SocketAddr>().is_ok() {
            Ok(ExternalTarget::Tcp(s.to_string()))
        } else {
            Ok(ExternalTarget::Command(s.to_string()))
        }
    }
}

enum Connection {
    Tcp {
        reader: BufReader<TcpStream>,
        writer: TcpStream,
    },
    Process {
        child: Child,
        stdin: ChildStdin,
        lines: Receiver<io::Result<String>>,
    },
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Connection::Process { child, .. } = self {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

fn unavailable(err: impl ToString) -> GeneratorError {
    GeneratorError::ExternalUnavailable(err.to_string())
}

fn connect(target: &ExternalTarget, timeout: Duration) -> Result<Connection, GeneratorError> {
    match target {
        ExternalTarget::Tcp(addr) => {
            let addr = addr
                .to_socket_addrs()
                .map_err(unavailable)?
                .next()
                .ok_or_else(|| unavailable(format!("cannot resolve {addr}")))?;
            let stream = TcpStream::connect_timeout(&addr, timeout).map_err(unavailable)?;
            stream.set_read_timeout(Some(timeout)).map_err(unavailable)?;
            stream.set_nodelay(true).map_err(unavailable)?;
            let reader = BufReader::new(stream.try_clone().map_err(unavailable)?);
            Ok(Connection::Tcp {
                reader,
                writer: stream,
            })
        }
        ExternalTarget::Command(cmd) => {
            let mut child = Command::new("sh")
                .arg("-c")
                .arg(cmd)
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::null())
                .spawn()
                .map_err(unavailable)?;
            let stdin = child.stdin.take().expect("stdin was piped");
            let stdout = child.stdout.take().expect("stdout was piped");
            let (tx, lines) = mpsc::channel();
            thread::spawn(move || {
                for line in BufReader::new(stdout).lines() {
                    if tx.send(line).is_err() {
                        break;
                    }
                }
            });
            Ok(Connection::Process {
                child,
                stdin,
                lines,
            })
        }
    }
}

fn exchange(conn: &mut Connection, request: &str, timeout: Duration) -> Result<String, GeneratorError> {
    match conn {
        Connection::Tcp { reader, writer } => {
            writer
                .write_all(format!("{request}\n").as_bytes())
                .and_then(|_| writer.flush())
                .map_err(unavailable)?;
            let mut line = String::new();
            match reader.read_line(&mut line) {
                Ok(0) => Err(unavailable("connection closed")),
                Ok(_) => Ok(line),
                Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                    Err(GeneratorError::ExternalTimeout)
                }
                Err(e) => Err(unavailable(e)),
            }
        }
        Connection::Process { stdin, lines, .. } => {
            stdin
                .write_all(format!("{request}\n").as_bytes())
                .and_then(|_| stdin.flush())
                .map_err(unavailable)?;
            match lines.recv_timeout(timeout) {
                Ok(Ok(line)) => Ok(line),
                Ok(Err(e)) => Err(unavailable(e)),
                Err(RecvTimeoutError::Timeout) => Err(GeneratorError::ExternalTimeout),
                Err(RecvTimeoutError::Disconnected) => Err(unavailable("generator exited")),
            }
        }
    }
}

/// Synchronous client; at most one request is in flight.
pub struct ExternalClient {
    target: ExternalTarget,
    timeout: Duration,
    conn: Option<Connection>,
}

impl ExternalClient {
    pub fn new(target: ExternalTarget, timeout: Duration) -> Self {
        Self {
            target,
            timeout,
            conn: None,
        }
    }

    pub fn target(&self) -> &ExternalTarget {
        &self.target
    }

    pub fn generate(&mut self, seed: &str, params: &GenerationParams) -> Result<String, GeneratorError> {
        let request = encode_request(seed, params);
        let conn = match &mut self.conn {
            Some(conn) => conn,
            slot => slot.insert(connect(&self.target, self.timeout)?),
        };
        let reply = exchange(conn, &request, self.timeout);
        let result = reply.and_then(|line| parse_response(&line));
        if matches!(
            result,
            Err(GeneratorError::ExternalTimeout
                | GeneratorError::ExternalUnavailable(_)
                | GeneratorError::Protocol(_))
        ) {
            self.conn = None;
        }
        result
    }
}

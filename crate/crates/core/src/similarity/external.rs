//! Client side of the scoring-service protocol: newline-delimited UTF-8 JSON,
//! one object per line, one outstanding request at a time.
//!
//! ```text
//! -> {"type":"hello","version":1}
//! <- {"type":"hello","version":1,"score_lo":-1.0,"score_hi":1.0}
//! -> {"type":"exemplar","id":0,"frame":"f.png","cx":..,"cy":..,"w":..,"h":..}
//! <- {"type":"exemplar","id":0}
//! -> {"type":"score","id":1,"frame":"f.png","cx":..,"cy":..,"w":..,"h":..,"scale":1.05}
//! <- {"type":"score","id":1,"value":0.42}
//! <- {"type":"error","id":1,"message":"..."}
//! ```

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde_json::Value;

use super::{Frame, SimilarityOracle};
use crate::error::{Error, ProtocolError, Result};
use crate::geometry::BoundingBox;

pub const PROTOCOL_VERSION: u64 = 1;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

/// One score request in pixel units.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRequest {
    pub id: u64,
    pub frame: String,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub scale: f64,
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

/// `f64`'s `Display` never uses exponent notation, which the protocol asks for.
fn decimal(v: f64) -> std::result::Result<String, ProtocolError> {
    if v.is_finite() {
        let s = v.to_string();
        Ok(if s.contains('.') { s } else { format!("{s}.0") })
    } else {
        Err(ProtocolError::Malformed(format!("cannot encode non-finite number {v}")))
    }
}

impl ScoreRequest {
    pub fn to_line(&self) -> std::result::Result<String, ProtocolError> {
        Ok(format!(
            "{{\"type\":\"score\",\"id\":{},\"frame\":{},\"cx\":{},\"cy\":{},\"w\":{},\"h\":{},\"scale\":{}}}",
            self.id,
            json_string(&self.frame),
            decimal(self.cx)?,
            decimal(self.cy)?,
            decimal(self.w)?,
            decimal(self.h)?,
            decimal(self.scale)?
        ))
    }
}

pub struct ExternalOracle {
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
    timeout: Duration,
    range: (f64, f64),
    child: Option<Child>,
}

impl std::fmt::Debug for ExternalOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalOracle")
            .field("next_id", &self.next_id)
            .field("timeout", &self.timeout)
            .field("range", &self.range)
            .finish_non_exhaustive()
    }
}

impl ExternalOracle {
    /// Connects over TCP and performs the handshake.
    pub fn connect<A: ToSocketAddrs>(addr: A, timeout: Duration) -> Result<Self> {
        let stream = TcpStream::connect(addr).map_err(ProtocolError::Io)?;
        stream.set_nodelay(true).ok();
        let reader = stream.try_clone().map_err(ProtocolError::Io)?;
        Self::from_streams(reader, stream, timeout)
    }

    /// Spawns `program args...` and speaks the protocol over its stdio.
    pub fn spawn(program: &str, args: &[String], timeout: Duration) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(ProtocolError::Io)?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut oracle = Self::from_streams(stdout, stdin, timeout)?;
        oracle.child = Some(child);
        Ok(oracle)
    }

    /// Runs the handshake over an arbitrary reader/writer pair.
    pub fn from_streams<R, W>(reader: R, writer: W, timeout: Duration) -> Result<Self>
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(reader).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        let mut oracle = Self {
            writer: Box::new(writer),
            lines: rx,
            next_id: 0,
            timeout,
            range: (-1.0, 1.0),
            child: None,
        };
        oracle.handshake()?;
        Ok(oracle)
    }

    fn send(&mut self, line: &str) -> std::result::Result<(), ProtocolError> {
        let mut buf = line.as_bytes().to_vec();
        buf.push(b'\n');
        self.writer.write_all(&buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::BrokenPipe | std::io::ErrorKind::ConnectionReset => ProtocolError::Closed,
            _ => ProtocolError::Io(e),
        })?;
        self.writer.flush().map_err(ProtocolError::Io)
    }

    fn recv(&mut self) -> std::result::Result<Value, ProtocolError> {
        let line = loop {
            match self.lines.recv_timeout(self.timeout) {
                Ok(Ok(line)) if line.trim().is_empty() => continue,
                Ok(Ok(line)) => break line,
                Ok(Err(e)) => return Err(ProtocolError::Io(e)),
                Err(RecvTimeoutError::Timeout) => return Err(ProtocolError::Timeout(self.timeout)),
                Err(RecvTimeoutError::Disconnected) => return Err(ProtocolError::Closed),
            }
        };
        let value: Value = serde_json::from_str(&line).map_err(|e| ProtocolError::Malformed(format!("{e}: {line}")))?;
        if !value.is_object() {
            return Err(ProtocolError::Malformed(line));
        }
        Ok(value)
    }

    fn handshake(&mut self) -> std::result::Result<(), ProtocolError> {
        self.send(&format!("{{\"type\":\"hello\",\"version\":{PROTOCOL_VERSION}}}"))?;
        let reply = self.recv().map_err(|e| match e {
            ProtocolError::Malformed(m) => ProtocolError::Handshake(m),
            other => other,
        })?;
        if reply["type"] != "hello" {
            return Err(ProtocolError::Handshake(format!("expected hello, got {reply}")));
        }
        match reply["version"].as_u64() {
            Some(PROTOCOL_VERSION) => {}
            other => {
                return Err(ProtocolError::Handshake(format!(
                    "version mismatch: client {PROTOCOL_VERSION}, server {other:?}"
                )))
            }
        }
        let lo = reply["score_lo"].as_f64();
        let hi = reply["score_hi"].as_f64();
        match (lo, hi) {
            (Some(lo), Some(hi)) if lo < hi => self.range = (lo, hi),
            _ => return Err(ProtocolError::Handshake(format!("bad score range in {reply}"))),
        }
        Ok(())
    }

    fn take_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// Reads the reply to request `id`, turning error records into
    /// [`ProtocolError::Remote`].
    fn reply_for(&mut self, id: u64, kind: &str) -> std::result::Result<Value, ProtocolError> {
        let reply = self.recv()?;
        let got = reply["id"]
            .as_u64()
            .ok_or_else(|| ProtocolError::Malformed(format!("missing id in {reply}")))?;
        if got != id {
            return Err(ProtocolError::IdMismatch { expected: id, got });
        }
        match reply["type"].as_str() {
            Some("error") => Err(ProtocolError::Remote {
                id,
                message: reply["message"].as_str().unwrap_or("").to_string(),
            }),
            Some(t) if t == kind => Ok(reply),
            _ => Err(ProtocolError::Malformed(format!("unexpected reply {reply}"))),
        }
    }

    /// Sends one score request and waits for its response.
    pub fn external_query(&mut self, request: &ScoreRequest) -> std::result::Result<f64, ProtocolError> {
        self.send(&request.to_line()?)?;
        let reply = self.reply_for(request.id, "score")?;
        let value = reply["value"]
            .as_f64()
            .ok_or_else(|| ProtocolError::Malformed(format!("missing value in {reply}")))?;
        let (lo, hi) = self.range;
        if !(lo..=hi).contains(&value) {
            return Err(ProtocolError::Malformed(format!("score {value} outside [{lo}, {hi}]")));
        }
        Ok(value)
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }
}

fn frame_path(frame: &Frame) -> Result<String> {
    frame
        .path
        .as_ref()
        .map(|p| p.to_string_lossy().into_owned())
        .ok_or_else(|| Error::Precondition(format!("frame {} has no path for the external oracle", frame.index)))
}

impl SimilarityOracle for ExternalOracle {
    fn score_range(&self) -> (f64, f64) {
        self.range
    }

    fn set_exemplar(&mut self, frame: &Frame, bbox: &BoundingBox) -> Result<()> {
        let id = self.take_id();
        let line = format!(
            "{{\"type\":\"exemplar\",\"id\":{id},\"frame\":{},\"cx\":{},\"cy\":{},\"w\":{},\"h\":{}}}",
            json_string(&frame_path(frame)?),
            decimal(bbox.cx)?,
            decimal(bbox.cy)?,
            decimal(bbox.width)?,
            decimal(bbox.height)?
        );
        self.send(&line)?;
        self.reply_for(id, "exemplar")?;
        Ok(())
    }

    fn score(&mut self, frame: &Frame, bbox: &BoundingBox, scale: f64) -> Result<f64> {
        let request = ScoreRequest {
            id: self.take_id(),
            frame: frame_path(frame)?,
            cx: bbox.cx,
            cy: bbox.cy,
            w: bbox.width,
            h: bbox.height,
            scale,
        };
        Ok(self.external_query(&request)?)
    }
}

impl Drop for ExternalOracle {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

//! Out-of-process evaluators over newline-delimited JSON on stdin/stdout.
//!
//! ```text
//! server -> {"op":"ready","n":2,"grad":true,"domain":[[0,10],[0,10]]}
//! client -> {"id":0,"op":"eval","u":[4.0,4.0],"grad":false}
//! server -> {"id":0,"f":0.9,"grad":null}
//! client -> {"op":"bye"}
//! ```

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{check_point, clip_unit, FunctionOracle};
use crate::error::{Result, SrfError};
use crate::geometry::Domain;

pub const HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ready {
    pub op: String,
    pub n: usize,
    pub grad: bool,
    pub domain: Vec<[f64; 2]>,
}

impl Ready {
    pub fn new(domain: &Domain, grad: bool) -> Self {
        Self {
            op: "ready".into(),
            n: domain.dim(),
            grad,
            domain: domain.lo.iter().zip(&domain.hi).map(|(l, h)| [*l, *h]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRequest {
    pub id: u64,
    pub op: String,
    pub u: Vec<f64>,
    pub grad: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResponse {
    pub id: u64,
    pub f: f64,
    pub grad: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub id: Option<u64>,
    pub error: String,
}

struct Conn {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
}

impl Conn {
    fn send(&mut self, line: &str) -> Result<()> {
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| SrfError::evaluator("evaluator input already closed"))?;
        stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.write_all(b"\n"))
            .and_then(|_| stdin.flush())
            .map_err(|e| SrfError::evaluator(format!("write to evaluator failed: {e}")))
    }

    fn recv(&mut self, timeout: Option<Duration>) -> Result<String> {
        let line = match timeout {
            Some(t) => match self.lines.recv_timeout(t) {
                Ok(l) => l,
                Err(RecvTimeoutError::Timeout) => return Err(SrfError::HandshakeTimeout(t)),
                Err(RecvTimeoutError::Disconnected) => return Err(self.exited()),
            },
            None => self.lines.recv().map_err(|_| self.exited())?,
        };
        line.map_err(|e| SrfError::evaluator(format!("read from evaluator failed: {e}")))
    }

    fn exited(&mut self) -> SrfError {
        let status = self
            .child
            .try_wait()
            .ok()
            .flatten()
            .map(|s| format!(" ({s})"))
            .unwrap_or_default();
        SrfError::evaluator(format!("evaluator closed its output{status}"))
    }
}

/// A serial client for one evaluator process.
pub struct ExternalOracle {
    command: String,
    domain: Domain,
    grad: bool,
    conn: Mutex<Conn>,
    clipped: AtomicU64,
}

impl std::fmt::Debug for ExternalOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalOracle")
            .field("command", &self.command)
            .field("domain", &self.domain)
            .field("grad", &self.grad)
            .finish_non_exhaustive()
    }
}

/// Spawn `command args…`, wait for its handshake and adopt the domain it
/// declares.
pub fn external_oracle(command: &str, args: &[String]) -> Result<ExternalOracle> {
    ExternalOracle::spawn(command, args, None, HANDSHAKE_TIMEOUT)
}

fn same_bound(x: f64, y: f64) -> bool {
    (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0)
}

impl ExternalOracle {
    /// Spawn and handshake. With `expected` set, the server must declare the
    /// same dimension and domain.
    pub fn spawn(command: &str, args: &[String], expected: Option<&Domain>, timeout: Duration) -> Result<Self> {
        let mut child = Command::new(command)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| SrfError::Spawn {
                command: command.to_string(),
                source,
            })?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        let mut conn = Conn {
            child,
            stdin,
            lines: rx,
            next_id: 0,
        };

        let first = conn.recv(Some(timeout))?;
        let ready: Ready = serde_json::from_str(&first)
            .map_err(|e| SrfError::MalformedResponse(format!("bad handshake `{first}`: {e}")))?;
        if ready.op != "ready" {
            return Err(SrfError::Protocol(format!("expected ready handshake, got op `{}`", ready.op)));
        }
        if ready.domain.len() != ready.n {
            return Err(SrfError::MalformedResponse(format!(
                "handshake declares n={} but {} domain intervals",
                ready.n,
                ready.domain.len()
            )));
        }
        let declared = Domain::new(
            ready.domain.iter().map(|d| d[0]).collect(),
            ready.domain.iter().map(|d| d[1]).collect(),
        )
        .map_err(|e| SrfError::MalformedResponse(format!("handshake domain: {e}")))?;
        if let Some(want) = expected {
            if want.dim() != ready.n {
                return Err(SrfError::DimensionMismatch {
                    expected: want.dim(),
                    got: ready.n,
                });
            }
            let agree = want
                .lo
                .iter()
                .zip(&declared.lo)
                .chain(want.hi.iter().zip(&declared.hi))
                .all(|(x, y)| same_bound(*x, *y));
            if !agree {
                return Err(SrfError::InvalidDomain(format!(
                    "evaluator declares {:?}, run is configured for {:?}",
                    ready.domain,
                    Ready::new(want, false).domain
                )));
            }
        }
        Ok(Self {
            command: command.to_string(),
            domain: expected.cloned().unwrap_or(declared),
            grad: ready.grad,
            conn: Mutex::new(conn),
            clipped: AtomicU64::new(0),
        })
    }

    /// How many values arrived outside `[EPS_CLIP, 1 - EPS_CLIP]` and were clipped.
    pub fn clip_warnings(&self) -> u64 {
        self.clipped.load(Ordering::Relaxed)
    }

    fn request(&self, u: &[f64], grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
        check_point(self.dim(), u)?;
        if grad && !self.grad {
            return Err(SrfError::GradientUnsupported);
        }
        let mut conn = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        let id = conn.next_id;
        conn.next_id += 1;
        let req = EvalRequest {
            id,
            op: "eval".into(),
            u: u.to_vec(),
            grad,
        };
        conn.send(&serde_json::to_string(&req)?)?;
        let line = conn.recv(None)?;
        drop(conn);

        let v: Value = serde_json::from_str(&line)
            .map_err(|e| SrfError::MalformedResponse(format!("`{line}`: {e}")))?;
        let got = v.get("id").and_then(Value::as_u64);
        if got != Some(id) {
            return Err(SrfError::Protocol(format!(
                "response id {} does not match request id {id}",
                v.get("id").map(Value::to_string).unwrap_or_else(|| "missing".into())
            )));
        }
        if let Some(msg) = v.get("error") {
            return Err(SrfError::Remote {
                id,
                message: msg.as_str().map(str::to_string).unwrap_or_else(|| msg.to_string()),
            });
        }
        let resp: EvalResponse =
            serde_json::from_value(v).map_err(|e| SrfError::MalformedResponse(format!("`{line}`: {e}")))?;
        if !resp.f.is_finite() {
            return Err(SrfError::MalformedResponse(format!("non-finite f in `{line}`")));
        }
        let f = clip_unit(resp.f);
        if f != resp.f {
            self.clipped.fetch_add(1, Ordering::Relaxed);
        }
        let g = match (grad, resp.grad) {
            (true, Some(g)) if g.len() == self.dim() => Some(g),
            (true, Some(g)) => {
                return Err(SrfError::MalformedResponse(format!(
                    "gradient has {} entries, expected {}",
                    g.len(),
                    self.dim()
                )))
            }
            (true, None) => return Err(SrfError::MalformedResponse("gradient requested but null".into())),
            (false, _) => None,
        };
        Ok((f, g))
    }
}

impl FunctionOracle for ExternalOracle {
    fn dim(&self) -> usize {
        self.domain.dim()
    }

    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn supports_grad(&self) -> bool {
        self.grad
    }

    fn eval(&self, u: &[f64]) -> Result<f64> {
        Ok(self.request(u, false)?.0)
    }

    fn grad(&self, u: &[f64]) -> Result<Vec<f64>> {
        Ok(self.request(u, true)?.1.unwrap_or_default())
    }

    fn eval_with_grad(&self, u: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (f, g) = self.request(u, true)?;
        Ok((f, g.unwrap_or_default()))
    }

    fn concurrent(&self) -> bool {
        false
    }

    fn describe(&self) -> String {
        format!("exec:{}", self.command)
    }
}

impl Drop for ExternalOracle {
    fn drop(&mut self) {
        let conn = self.conn.get_mut().unwrap_or_else(|p| p.into_inner());
        let _ = conn.send(r#"{"op":"bye"}"#);
        conn.stdin = None;
        let deadline = Instant::now() + Duration::from_secs(2);
        loop {
            match conn.child.try_wait() {
                Ok(Some(_)) | Err(_) => break,
                Ok(None) if Instant::now() >= deadline => {
                    let _ = conn.child.kill();
                    let _ = conn.child.wait();
                    break;
                }
                Ok(None) => thread::sleep(Duration::from_millis(5)),
            }
        }
    }
}

/// Answer protocol requests against `oracle` until `bye` or end of input.
/// Malformed requests get an error response carrying the request id when one
/// can be read, and serving continues.
pub fn serve<O, R, W>(oracle: &O, grad: bool, input: R, mut output: W) -> Result<()>
where
    O: FunctionOracle + ?Sized,
    R: BufRead,
    W: Write,
{
    let grad = grad && oracle.supports_grad();
    writeln!(output, "{}", serde_json::to_string(&Ready::new(oracle.domain(), grad))?)?;
    output.flush()?;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<Value>(&line) {
            Err(e) => error_reply(None, format!("malformed request: {e}")),
            Ok(v) => {
                if v.get("op").and_then(Value::as_str) == Some("bye") {
                    break;
                }
                answer(oracle, grad, v)
            }
        };
        writeln!(output, "{reply}")?;
        output.flush()?;
    }
    Ok(())
}

fn error_reply(id: Option<u64>, error: String) -> String {
    serde_json::to_string(&ErrorResponse { id, error }).expect("plain struct serializes")
}

fn answer<O: FunctionOracle + ?Sized>(oracle: &O, grad: bool, v: Value) -> String {
    let id = v.get("id").and_then(Value::as_u64);
    let req: EvalRequest = match serde_json::from_value(v) {
        Ok(r) => r,
        Err(e) => return error_reply(id, format!("malformed request: {e}")),
    };
    if req.op != "eval" {
        return error_reply(id, format!("unknown op `{}`", req.op));
    }
    if req.u.len() != oracle.dim() {
        return error_reply(id, "dimension mismatch".into());
    }
    if req.grad && !grad {
        return error_reply(id, "gradient unsupported".into());
    }
    let out = if req.grad {
        oracle.eval_with_grad(&req.u).map(|(f, g)| (f, Some(g)))
    } else {
        oracle.eval(&req.u).map(|f| (f, None))
    };
    match out {
        Ok((f, g)) => serde_json::to_string(&EvalResponse { id: req.id, f, grad: g }).expect("plain struct serializes"),
        Err(e) => error_reply(id, e.to_string()),
    }
}

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use super::{check_ids, CausalLm, LmError, TokenDistribution};
use crate::tokenize::Vocabulary;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

/// Peers may round; replies within this distance of unit mass are renormalized.
const PEER_MASS_TOL: f64 = 1e-6;

struct Connection {
    writer: Box<dyn Write + Send>,
    replies: Receiver<std::io::Result<String>>,
    child: Option<Child>,
    /// Set after a timeout: a late reply would pair with the wrong request.
    desynced: bool,
}

/// A [`CausalLm`] served by an external process speaking JSON lines.
///
/// Requests are serialized through one connection; open one bridge per worker
/// for parallelism.
pub struct BridgeLm {
    vocab: Vocabulary,
    conn: Mutex<Connection>,
    timeout: Duration,
    endpoint: String,
}

impl std::fmt::Debug for BridgeLm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BridgeLm")
            .field("endpoint", &self.endpoint)
            .field("vocab_size", &self.vocab.len())
            .finish()
    }
}

fn spawn_reader<R: Read + Send + 'static>(r: R) -> Receiver<std::io::Result<String>> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for line in BufReader::new(r).lines() {
            let stop = line.is_err();
            if tx.send(line).is_err() || stop {
                break;
            }
        }
    });
    rx
}

impl BridgeLm {
    /// Starts `command` through `sh -c` and talks to it over stdin/stdout.
    pub fn spawn(command: &str, timeout: Duration) -> Result<Self, LmError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| LmError::PeerUnavailable(format!("{command}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let conn = Connection {
            writer: Box::new(stdin),
            replies: spawn_reader(stdout),
            child: Some(child),
            desynced: false,
        };
        Self::handshake(conn, timeout, format!("cmd:{command}"))
    }

    /// Connects to a peer listening on `addr` (`host:port`).
    pub fn connect(addr: &str, timeout: Duration) -> Result<Self, LmError> {
        let unavailable = |e: std::io::Error| LmError::PeerUnavailable(format!("{addr}: {e}"));
        let sock = addr
            .to_socket_addrs()
            .map_err(unavailable)?
            .next()
            .ok_or_else(|| LmError::PeerUnavailable(format!("{addr}: no address")))?;
        let stream = TcpStream::connect_timeout(&sock, timeout).map_err(unavailable)?;
        let reader = stream.try_clone().map_err(unavailable)?;
        let conn = Connection {
            writer: Box::new(stream),
            replies: spawn_reader(reader),
            child: None,
            desynced: false,
        };
        Self::handshake(conn, timeout, format!("tcp:{addr}"))
    }

    /// Opens `cmd:<command line>` or `tcp:<host:port>`.
    pub fn open(endpoint: &str, timeout: Duration) -> Result<Self, LmError> {
        if let Some(cmd) = endpoint.strip_prefix("cmd:") {
            Self::spawn(cmd, timeout)
        } else if let Some(addr) = endpoint.strip_prefix("tcp:") {
            Self::connect(addr, timeout)
        } else {
            Err(LmError::PeerUnavailable(format!(
                "endpoint {endpoint:?} must start with cmd: or tcp:"
            )))
        }
    }

    fn handshake(conn: Connection, timeout: Duration, endpoint: String) -> Result<Self, LmError> {
        let mut this = Self {
            vocab: Vocabulary::kmer(1)?,
            conn: Mutex::new(conn),
            timeout,
            endpoint,
        };
        let reply = this.request(&json!({"op": "vocab"}))?;
        let tokens: Vec<String> = reply
            .get("tokens")
            .cloned()
            .and_then(|t| serde_json::from_value(t).ok())
            .ok_or_else(|| LmError::ProtocolViolation("vocab reply lacks a string list \"tokens\"".into()))?;
        this.vocab =
            Vocabulary::from_tokens(tokens).map_err(|e| LmError::ProtocolViolation(format!("vocab reply: {e}")))?;
        Ok(this)
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn request(&self, msg: &Value) -> Result<Value, LmError> {
        let mut conn = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        if conn.desynced {
            return Err(LmError::PeerUnavailable("connection abandoned after a timeout".into()));
        }
        let mut line = msg.to_string();
        line.push('\n');
        conn.writer
            .write_all(line.as_bytes())
            .and_then(|_| conn.writer.flush())
            .map_err(|e| LmError::PeerUnavailable(e.to_string()))?;
        let reply = match conn.replies.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => reply,
            Ok(Err(e)) => return Err(LmError::PeerUnavailable(e.to_string())),
            Err(RecvTimeoutError::Timeout) => {
                conn.desynced = true;
                return Err(LmError::Timeout(self.timeout));
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(LmError::PeerUnavailable("peer closed the connection".into()))
            }
        };
        let value: Value = serde_json::from_str(&reply)
            .map_err(|e| LmError::ProtocolViolation(format!("reply is not JSON ({e}): {reply:.200}")))?;
        if !value.is_object() {
            return Err(LmError::ProtocolViolation(format!("reply is not an object: {reply:.200}")));
        }
        if let Some(err) = value.get("error") {
            return Err(LmError::ProtocolViolation(format!("peer error: {err}")));
        }
        Ok(value)
    }

    fn parse_distribution(&self, reply: &Value) -> Result<TokenDistribution, LmError> {
        let v = self.vocab.len();
        let violation = |s: String| LmError::ProtocolViolation(s);
        let probs = if let Some(p) = reply.get("probs") {
            let probs: Vec<f64> =
                serde_json::from_value(p.clone()).map_err(|_| violation("\"probs\" is not a number list".into()))?;
            if probs.len() != v {
                return Err(violation(format!("{} probabilities for a vocabulary of {v}", probs.len())));
            }
            probs
        } else if let Some(top) = reply.get("top") {
            let top: Vec<(u32, f64)> = serde_json::from_value(top.clone())
                .map_err(|_| violation("\"top\" is not a list of [id, logprob] pairs".into()))?;
            let rest = reply
                .get("rest_mass")
                .and_then(Value::as_f64)
                .ok_or_else(|| violation("\"top\" reply lacks numeric \"rest_mass\"".into()))?;
            if !(rest.is_finite() && rest >= 0.0) {
                return Err(violation(format!("rest_mass {rest}")));
            }
            let mut probs = vec![f64::NAN; v];
            for &(id, lp) in &top {
                let slot = probs
                    .get_mut(id as usize)
                    .ok_or_else(|| violation(format!("token id {id} outside vocabulary")))?;
                if !slot.is_nan() {
                    return Err(violation(format!("token id {id} listed twice")));
                }
                if lp.is_nan() || lp > 0.0 {
                    return Err(violation(format!("logprob {lp} for token {id}")));
                }
                *slot = lp.exp();
            }
            let unlisted = v - top.len();
            if unlisted == 0 && rest > PEER_MASS_TOL {
                return Err(violation("rest_mass with no unlisted tokens".into()));
            }
            let share = if unlisted == 0 { 0.0 } else { rest / unlisted as f64 };
            probs.iter_mut().filter(|p| p.is_nan()).for_each(|p| *p = share);
            probs
        } else {
            return Err(violation("reply has neither \"probs\" nor \"top\"".into()));
        };
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(violation(format!("probability {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PEER_MASS_TOL {
            return Err(violation(format!("probabilities sum to {total}")));
        }
        TokenDistribution::normalized(probs)
    }
}

impl CausalLm for BridgeLm {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_distribution(&self, context: &[u32]) -> Result<TokenDistribution, LmError> {
        check_ids(&self.vocab, context)?;
        let reply = self.request(&json!({"op": "next", "context": context}))?;
        self.parse_distribution(&reply)
    }

    fn embed(&self, context: &[u32]) -> Result<Vec<f64>, LmError> {
        check_ids(&self.vocab, context)?;
        let reply = self.request(&json!({"op": "embed", "context": context}))?;
        let vec: Vec<f64> = reply
            .get("vec")
            .cloned()
            .and_then(|v| serde_json::from_value(v).ok())
            .ok_or_else(|| LmError::ProtocolViolation("embed reply lacks a number list \"vec\"".into()))?;
        if vec.is_empty() || vec.iter().any(|x| !x.is_finite()) {
            return Err(LmError::ProtocolViolation("embedding is empty or non-finite".into()));
        }
        Ok(vec)
    }
}

impl Drop for BridgeLm {
    fn drop(&mut self) {
        let conn = self.conn.get_mut().unwrap_or_else(|p| p.into_inner());
        if let Some(child) = conn.child.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::TcpListener;

    /// Serves a 1-mer vocabulary and answers every `next` with `reply`.
    fn tcp_peer(reply: String) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut w = stream.try_clone().unwrap();
            let tokens = Vocabulary::kmer(1).unwrap().tokens().to_vec();
            for line in BufReader::new(stream).lines() {
                let req: Value = serde_json::from_str(&line.unwrap()).unwrap();
                let out = match req["op"].as_str().unwrap() {
                    "vocab" => json!({ "tokens": tokens }).to_string(),
                    "embed" => json!({"vec": [req["context"].as_array().unwrap().len() as f64, 1.0]}).to_string(),
                    _ => reply.clone(),
                };
                if writeln!(w, "{out}").is_err() {
                    break;
                }
            }
        });
        addr
    }

    fn probs_reply(probs: &[f64]) -> String {
        json!({ "probs": probs }).to_string()
    }

    #[test]
    fn uniform_peer_gives_uniform_distribution() {
        let v = 36;
        let lm = BridgeLm::connect(&tcp_peer(probs_reply(&vec![1.0 / v as f64; v])), DEFAULT_TIMEOUT).unwrap();
        assert_eq!(lm.vocabulary().len(), v);
        let d = lm.next_distribution(&[0, 1]).unwrap();
        assert!(d.probs().iter().all(|&p| (p - 1.0 / v as f64).abs() < 1e-12));
        assert_eq!(lm.embed(&[0, 1, 2]).unwrap(), vec![3.0, 1.0]);
    }

    #[test]
    fn short_mass_is_a_violation() {
        let mut p = vec![0.0; 36];
        p[0] = 0.8;
        let lm = BridgeLm::connect(&tcp_peer(probs_reply(&p)), DEFAULT_TIMEOUT).unwrap();
        assert!(matches!(lm.next_distribution(&[]), Err(LmError::ProtocolViolation(_))));
    }

    #[test]
    fn wrong_length_is_a_violation() {
        let lm = BridgeLm::connect(&tcp_peer(probs_reply(&[0.5, 0.5])), DEFAULT_TIMEOUT).unwrap();
        assert!(matches!(lm.next_distribution(&[]), Err(LmError::ProtocolViolation(_))));
    }

    #[test]
    fn top_with_rest_mass() {
        let reply = json!({"top": [[0, 0.5f64.ln()], [3, 0.25f64.ln()]], "rest_mass": 0.25}).to_string();
        let lm = BridgeLm::connect(&tcp_peer(reply), DEFAULT_TIMEOUT).unwrap();
        let d = lm.next_distribution(&[]).unwrap();
        assert!((d.prob(0) - 0.5).abs() < 1e-12);
        assert!((d.prob(3) - 0.25).abs() < 1e-12);
        assert!((d.prob(1) - 0.25 / 34.0).abs() < 1e-12);
    }

    #[test]
    fn garbage_reply_is_a_violation() {
        let lm = BridgeLm::connect(&tcp_peer("not json".into()), DEFAULT_TIMEOUT).unwrap();
        assert!(matches!(lm.next_distribution(&[]), Err(LmError::ProtocolViolation(_))));
        assert_eq!(lm.next_distribution(&[99]), Err(LmError::UnknownTokenId(99)));
    }

    #[test]
    fn stdio_peer() {
        let tokens = serde_json::to_string(&json!({"tokens": ["A", "C", "G", "T"]})).unwrap();
        let probs = probs_reply(&[0.1, 0.2, 0.3, 0.4]);
        let script = format!("read l; echo '{tokens}'; while read l; do echo '{probs}'; done");
        let lm = BridgeLm::spawn(&script, DEFAULT_TIMEOUT).unwrap();
        assert_eq!(lm.vocabulary().len(), 4);
        for _ in 0..3 {
            assert!((lm.next_distribution(&[1]).unwrap().prob(3) - 0.4).abs() < 1e-12);
        }
    }

    #[test]
    fn silent_peer_times_out_then_stays_unavailable() {
        let tokens = serde_json::to_string(&json!({"tokens": ["A", "C"]})).unwrap();
        let script = format!("read l; echo '{tokens}'; sleep 5");
        let lm = BridgeLm::spawn(&script, Duration::from_millis(200)).unwrap();
        assert!(matches!(lm.next_distribution(&[]), Err(LmError::Timeout(_))));
        assert!(matches!(lm.next_distribution(&[]), Err(LmError::PeerUnavailable(_))));
    }

    #[test]
    fn missing_peer() {
        assert!(matches!(
            BridgeLm::connect("127.0.0.1:1", Duration::from_millis(500)),
            Err(LmError::PeerUnavailable(_))
        ));
        assert!(matches!(
            BridgeLm::spawn("exit 0", Duration::from_secs(5)),
            Err(LmError::PeerUnavailable(_))
        ));
    }
}

//! Deterministic stand-in for a completion endpoint.
//!
//! Output depends only on the prompt bytes and the token budget. Height
//! prompts get plausible heights; sampling prompts get values from the
//! planning simulator, starting prior-biased and drifting to the context mean.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::client::{Completion, CompletionBackend};
use super::parse::{parse_numeric_stream_with, TailPolicy};
use super::prompt::{join_values, HEIGHT_PROMPT_PREFIX, SAMPLING_PROMPT_PREFIX};
use crate::error::Result;
use crate::planmodel::{simulate_trajectory, DomainPrior, EvidenceModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MockModel {
    /// Centre of the prior the sampling responses start from.
    pub prior_mean: f64,
    pub prior_precision: f64,
    pub base_gain: f64,
    pub gain_growth: f64,
    pub emission_sd: f64,
    /// Tokens assumed per emitted value (numeral, comma, space).
    pub tokens_per_value: u32,
    pub max_tokens: u32,
}

impl Default for MockModel {
    fn default() -> Self {
        Self {
            prior_mean: -30.0,
            prior_precision: 0.05,
            base_gain: 0.5,
            gain_growth: 0.2,
            emission_sd: 10.0,
            tokens_per_value: 3,
            max_tokens: 512,
        }
    }
}

fn prompt_seed(prompt: &str) -> u64 {
    let digest = Sha256::digest(prompt.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

impl MockModel {
    pub fn generate(&self, prompt: &str, max_tokens: u32) -> Completion {
        let count = (max_tokens / self.tokens_per_value.max(1)).max(1) as usize;
        let seed = prompt_seed(prompt);
        let values = if prompt.starts_with(HEIGHT_PROMPT_PREFIX) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let heights = Normal::new(170.0, 9.0).expect("valid normal");
            (0..count)
                .map(|_| Distribution::<f64>::sample(&heights, &mut rng).round() as i64)
                .collect()
        } else if let Some(ctx) = prompt.strip_prefix(SAMPLING_PROMPT_PREFIX) {
            self.sampling_values(ctx, count, seed)
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count).map(|_| rng.random_range(0..100)).collect()
        };
        Completion {
            text: format!("{}, ", join_values(&values)),
            finish_reason: Some("length".into()),
        }
    }

    fn sampling_values(&self, context: &str, count: usize, seed: u64) -> Vec<i64> {
        let samples: Vec<f64> = parse_numeric_stream_with(context, TailPolicy::Keep)
            .map(|p| p.values.iter().map(|&v| v as f64).collect())
            .unwrap_or_default();
        let target = if samples.is_empty() {
            0.0
        } else {
            samples.iter().sum::<f64>() / samples.len() as f64
        };
        let run = || -> Result<Vec<i64>> {
            let prior = DomainPrior::new(self.prior_mean, self.prior_precision)?;
            let ev = EvidenceModel::new(target, self.base_gain, self.gain_growth)?;
            let traj = simulate_trajectory(&prior, &ev, count, self.emission_sd.powi(2), seed)?;
            Ok(traj.emissions.iter().map(|e| e.round() as i64).collect())
        };
        run().unwrap_or_else(|_| vec![target.round() as i64; count])
    }
}

impl CompletionBackend for MockModel {
    fn complete(&self, prompt: &str) -> Result<Completion> {
        Ok(self.generate(prompt, self.max_tokens))
    }
}

/// Loopback HTTP server answering `/v1/completions` and `/v1/chat/completions`.
pub struct MockServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

struct ServerState {
    model: MockModel,
    fail_remaining: AtomicUsize,
}

impl MockServer {
    pub fn start(bind: &str, model: MockModel) -> std::io::Result<Self> {
        Self::start_with_failures(bind, model, 0)
    }

    /// The first `failures` requests receive HTTP 503.
    pub fn start_with_failures(bind: &str, model: MockModel, failures: usize) -> std::io::Result<Self> {
        let listener = TcpListener::bind(bind)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let state = Arc::new(ServerState {
            model,
            fail_remaining: AtomicUsize::new(failures),
        });
        let stop_flag = Arc::clone(&stop);
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if stop_flag.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let state = Arc::clone(&state);
                std::thread::spawn(move || {
                    let _ = handle_connection(stream, &state);
                });
            }
        });
        Ok(Self {
            addr,
            stop,
            handle: Some(handle),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    /// Blocks until the accept loop exits.
    pub fn join(mut self) {
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(h) = self.handle.take() {
            self.stop.store(true, Ordering::SeqCst);
            // wake the blocking accept
            let _ = TcpStream::connect(self.addr);
            let _ = h.join();
        }
    }
}

fn handle_connection(stream: TcpStream, state: &ServerState) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 || line == "\r\n" || line == "\n" {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            if name.trim().eq_ignore_ascii_case("content-length") {
                content_length = value.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;

    let mut parts = request_line.split_whitespace();
    let (method, path) = (parts.next().unwrap_or(""), parts.next().unwrap_or(""));
    let (status, payload) = if method != "POST" {
        (405, json!({"error": "method not allowed"}))
    } else if state
        .fail_remaining
        .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
        .is_ok()
    {
        (503, json!({"error": "injected failure"}))
    } else if path == "/v1/chat/completions" || path == "/v1/completions" {
        let chat = path == "/v1/chat/completions";
        match serde_json::from_slice::<Value>(&body) {
            Ok(req) => (200, respond(&state.model, &req, chat)),
            Err(e) => (400, json!({"error": format!("bad request body: {e}")})),
        }
    } else {
        (404, json!({"error": "not found"}))
    };
    let body = payload.to_string();
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        405 => "Method Not Allowed",
        _ => "Service Unavailable",
    };
    let mut out = stream;
    write!(
        out,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    out.flush()
}

fn respond(model: &MockModel, req: &Value, chat: bool) -> Value {
    let prompt = if chat {
        req["messages"]
            .as_array()
            .and_then(|m| m.last())
            .and_then(|m| m["content"].as_str())
            .unwrap_or("")
    } else {
        req["prompt"].as_str().unwrap_or("")
    };
    let max_tokens = req["max_tokens"]
        .as_u64()
        .map(|v| v as u32)
        .unwrap_or(model.max_tokens);
    let c = model.generate(prompt, max_tokens);
    let choice = if chat {
        json!({"index": 0, "message": {"role": "assistant", "content": c.text}, "finish_reason": c.finish_reason})
    } else {
        json!({"index": 0, "text": c.text, "finish_reason": c.finish_reason})
    };
    json!({
        "id": "mock",
        "object": if chat { "chat.completion" } else { "text_completion" },
        "model": req["model"],
        "choices": [choice],
    })
}

use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::wire::{decode_request, detect_provider, encode_response, HttpRequest, HttpResponse};
use super::{MockSettings, VlmError};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("connection failed: {0}")]
    Connect(String),
}

#[async_trait]
pub trait Transport: Send + Sync {
    async fn send(&self, request: HttpRequest) -> Result<HttpResponse, TransportError>;
}

pub struct ReqwestTransport {
    client: reqwest::Client,
}

impl ReqwestTransport {
    pub fn new() -> Result<Self, VlmError> {
        let client = reqwest::Client::builder()
            .build()
            .map_err(|e| VlmError::Config(format!("http client: {e}")))?;
        Ok(ReqwestTransport { client })
    }
}

#[async_trait]
impl Transport for ReqwestTransport {
    async fn send(&self, request: HttpRequest) -> Result<HttpResponse, TransportError> {
        let body = serde_json::to_vec(&request.body).map_err(|e| TransportError::Connect(e.to_string()))?;
        let mut rb = self.client.post(&request.url).timeout(request.timeout).body(body);
        for (k, v) in &request.headers {
            rb = rb.header(k.as_str(), v.as_str());
        }
        let resp = rb.send().await.map_err(map_err)?;
        let status = resp.status().as_u16();
        let headers = resp
            .headers()
            .iter()
            .filter_map(|(k, v)| Some((k.as_str().to_string(), v.to_str().ok()?.to_string())))
            .collect();
        let body = resp.text().await.map_err(map_err)?;
        Ok(HttpResponse { status, headers, body })
    }
}

fn map_err(e: reqwest::Error) -> TransportError {
    if e.is_timeout() {
        TransportError::Timeout
    } else {
        TransportError::Connect(e.to_string())
    }
}

/// A canned reply or a status for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TranscriptEntry {
    Reply(String),
    Status { status: u16 },
}

/// Loads a transcript file: a JSON object from image sha256 to entry.
pub fn load_transcript(path: &Path) -> Result<HashMap<String, TranscriptEntry>, VlmError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| VlmError::Config(format!("transcript {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| VlmError::Config(format!("transcript {}: {e}", path.display())))
}

/// Offline stand-in for a provider. It accepts requests in any of the provider encodings
/// and answers in the same encoding, so every adapter can be exercised against it.
///
/// Script entries are consumed one per request before the transcript is consulted;
/// status 0 simulates a timeout.
pub struct MockTransport {
    reply: Option<String>,
    transcript: HashMap<String, TranscriptEntry>,
    script: Mutex<VecDeque<u16>>,
    perturb: Option<f64>,
    latency: Duration,
    calls: AtomicUsize,
}

impl MockTransport {
    pub fn new() -> Self {
        MockTransport {
            reply: None,
            transcript: HashMap::new(),
            script: Mutex::new(VecDeque::new()),
            perturb: None,
            latency: Duration::ZERO,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn from_settings(settings: &MockSettings) -> Result<Self, VlmError> {
        let mut m = MockTransport::new();
        m.reply = settings.reply.clone();
        if let Some(p) = &settings.transcript {
            m.transcript = load_transcript(p)?;
        }
        m.script = Mutex::new(settings.script.iter().copied().collect());
        m.perturb = settings.perturb;
        m.latency = Duration::from_millis(settings.latency_ms);
        Ok(m)
    }

    pub fn with_reply(mut self, reply: &str) -> Self {
        self.reply = Some(reply.to_string());
        self
    }

    pub fn with_transcript(mut self, transcript: HashMap<String, TranscriptEntry>) -> Self {
        self.transcript = transcript;
        self
    }

    pub fn with_script(self, statuses: &[u16]) -> Self {
        self.script.lock().expect("script lock").extend(statuses.iter().copied());
        self
    }

    pub fn with_perturb(mut self, factor: f64) -> Self {
        self.perturb = Some(factor);
        self
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn status(status: u16, message: &str) -> HttpResponse {
        HttpResponse {
            status,
            headers: vec![],
            body: serde_json::json!({"error": {"message": message}}).to_string(),
        }
    }
}

impl Default for MockTransport {
    fn default() -> Self {
        Self::new()
    }
}

#[async_trait]
impl Transport for MockTransport {
    async fn send(&self, request: HttpRequest) -> Result<HttpResponse, TransportError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        if !self.latency.is_zero() {
            tokio::time::sleep(self.latency).await;
        }
        let scripted = self.script.lock().expect("script lock").pop_front();
        match scripted {
            Some(0) => return Err(TransportError::Timeout),
            Some(s) if s != 200 => return Ok(Self::status(s, "scripted failure")),
            _ => {}
        }
        let Some((prompt, image)) = decode_request(&request.body) else {
            return Ok(Self::status(400, "request carries no image"));
        };
        let text = match self.transcript.get(&request.image_sha256) {
            Some(TranscriptEntry::Status { status }) => return Ok(Self::status(*status, "transcript failure")),
            Some(TranscriptEntry::Reply(r)) => r.clone(),
            None => match &self.reply {
                Some(r) => r.clone(),
                None => return Ok(Self::status(404, "no transcript entry for image")),
            },
        };
        let text = match self.perturb {
            Some(f) => perturb_reply(&text, f),
            None => text,
        };
        let provider = detect_provider(&request.body);
        let input_tokens = (prompt.split_whitespace().count() + image.len() / 750) as u64;
        let output_tokens = text.split_whitespace().count() as u64;
        Ok(HttpResponse {
            status: 200,
            headers: vec![("request-id".into(), format!("mock-{n}"))],
            body: encode_response(provider, &text, input_tokens, output_tokens),
        })
    }
}

fn plain_number(s: &str) -> Option<f64> {
    let t = s.trim();
    let digits = t.strip_prefix('-').unwrap_or(t);
    let ok = !digits.is_empty()
        && digits.chars().all(|c| c.is_ascii_digit() || c == '.')
        && digits.chars().filter(|c| *c == '.').count() <= 1
        && digits.chars().any(|c| c.is_ascii_digit());
    if ok {
        t.parse().ok()
    } else {
        None
    }
}

/// Multiplies every plain numeric cell below the header line by `1 + factor`.
pub fn perturb_reply(text: &str, factor: f64) -> String {
    let mut header_seen = false;
    text.split('\n')
        .map(|line| {
            if !header_seen {
                header_seen = !line.trim().is_empty();
                return line.to_string();
            }
            line.split('\t')
                .map(|cell| match plain_number(cell) {
                    Some(v) => {
                        let p = v * (1.0 + factor);
                        format!("{}", (p * 1e9).round() / 1e9)
                    }
                    None => cell.to_string(),
                })
                .collect::<Vec<_>>()
                .join("\t")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

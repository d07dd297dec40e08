use std::fs::{File, OpenOptions};
use std::io::{Cursor, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use futures::stream::{self, StreamExt};
use image::{imageops::FilterType, ImageFormat, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::transport::{MockTransport, ReqwestTransport, Transport, TransportError};
use super::wire::{build_request, error_message, parse_response};
use super::{BackendConfig, PromptKind, PromptProfile, Provider, VlmError};

/// Largest edge the 2x upscale may produce.
pub const UPSCALE_CAP: u32 = 4096;

/// Bilinear 2x upscale, skipped when either doubled edge would exceed [`UPSCALE_CAP`].
pub fn preprocess(image: &RgbImage) -> RgbImage {
    let (w, h) = image.dimensions();
    if w == 0 || h == 0 || w * 2 > UPSCALE_CAP || h * 2 > UPSCALE_CAP {
        return image.clone();
    }
    image::imageops::resize(image, w * 2, h * 2, FilterType::Triangle)
}

pub fn encode_png(image: &RgbImage) -> Result<Vec<u8>, VlmError> {
    let mut out = Cursor::new(Vec::new());
    image
        .write_to(&mut out, ImageFormat::Png)
        .map_err(|e| VlmError::Image(e.to_string()))?;
    Ok(out.into_inner())
}

pub fn image_sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn is_retryable(status: u16) -> bool {
    matches!(status, 408 | 429) || (500..=599).contains(&status)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackoffPolicy {
    pub base: Duration,
    pub factor: f64,
    pub cap: Duration,
    /// Relative jitter; 0.2 draws each delay from ±20% of its nominal value.
    pub jitter: f64,
}

impl Default for BackoffPolicy {
    fn default() -> Self {
        BackoffPolicy {
            base: Duration::from_secs(1),
            factor: 2.0,
            cap: Duration::from_secs(30),
            jitter: 0.2,
        }
    }
}

impl BackoffPolicy {
    /// Delay before retry `n` (0-based), never shorter than `previous`.
    pub fn delay<R: Rng>(&self, n: u32, previous: Duration, rng: &mut R) -> Duration {
        let nominal = self.base.as_secs_f64() * self.factor.powi(n.min(64) as i32);
        let j = if self.jitter > 0.0 {
            rng.random_range(-self.jitter..=self.jitter)
        } else {
            0.0
        };
        let d = (nominal * (1.0 + j)).min(self.cap.as_secs_f64()).max(0.0);
        Duration::from_secs_f64(d).max(previous)
    }

    pub fn delays<R: Rng>(&self, retries: u32, rng: &mut R) -> Vec<Duration> {
        let mut prev = Duration::ZERO;
        (0..retries)
            .map(|n| {
                prev = self.delay(n, prev, rng);
                prev
            })
            .collect()
    }
}

/// Spaces request starts at least `interval` apart. Shared by every task using a backend.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: tokio::sync::Mutex<Option<tokio::time::Instant>>,
}

impl RateLimiter {
    pub fn per_minute(requests: u32) -> Self {
        RateLimiter {
            interval: Duration::from_secs_f64(60.0 / requests.max(1) as f64),
            next: tokio::sync::Mutex::new(None),
        }
    }

    pub fn interval(&self) -> Duration {
        self.interval
    }

    pub async fn acquire(&self) {
        let at = {
            let mut next = self.next.lock().await;
            let now = tokio::time::Instant::now();
            let at = next.map_or(now, |n| n.max(now));
            *next = Some(at + self.interval);
            at
        };
        tokio::time::sleep_until(at).await;
    }
}

/// One line of the request log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub timestamp: String,
    pub backend: String,
    pub provider: Provider,
    pub model_id: String,
    pub prompt_kind: PromptKind,
    pub image_sha256: String,
    pub attempt: u32,
    pub status: Option<u16>,
    pub outcome: String,
    pub error: Option<String>,
    pub latency_ms: u64,
    pub retry_in_ms: Option<u64>,
    pub request_id: Option<String>,
}

/// Attempts kept in memory; older ones survive only in the file log.
pub const LOG_MEMORY_CAP: usize = 10_000;

#[derive(Debug, Default)]
pub struct RequestLog {
    records: Mutex<Vec<AttemptRecord>>,
    file: Option<Mutex<File>>,
}

impl RequestLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn to_file(path: &Path) -> Result<Self, VlmError> {
        let f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| VlmError::Config(format!("log {}: {e}", path.display())))?;
        Ok(RequestLog {
            records: Mutex::new(Vec::new()),
            file: Some(Mutex::new(f)),
        })
    }

    fn push(&self, rec: AttemptRecord) {
        if let Some(f) = &self.file {
            if let Ok(line) = serde_json::to_string(&rec) {
                let mut f = f.lock().expect("log lock");
                if let Err(e) = writeln!(f, "{line}") {
                    tracing::warn!("request log write failed: {e}");
                }
            }
        }
        let mut records = self.records.lock().expect("log lock");
        if records.len() >= LOG_MEMORY_CAP {
            records.drain(..LOG_MEMORY_CAP / 2);
        }
        records.push(rec);
    }

    pub fn records(&self) -> Vec<AttemptRecord> {
        self.records.lock().expect("log lock").clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawExtraction {
    pub backend: String,
    pub provider: Provider,
    pub model_id: String,
    pub prompt_kind: PromptKind,
    pub response_text: String,
    /// Seconds from the first attempt to the successful reply.
    pub latency: f64,
    pub request_id: String,
    pub attempts: u32,
    pub image_sha256: String,
    pub input_tokens: Option<u64>,
    pub output_tokens: Option<u64>,
}

pub struct VlmClient {
    config: BackendConfig,
    transport: Arc<dyn Transport>,
    limiter: Option<Arc<RateLimiter>>,
    log: Arc<RequestLog>,
    backoff: BackoffPolicy,
    rng: Mutex<ChaCha8Rng>,
}

impl VlmClient {
    /// Client with the transport the provider calls for: the mock for `mock`, HTTP otherwise.
    pub fn new(config: BackendConfig) -> Result<Self, VlmError> {
        config.validate()?;
        let transport: Arc<dyn Transport> = match config.provider {
            Provider::Mock => Arc::new(MockTransport::from_settings(&config.mock.clone().unwrap_or_default())?),
            _ => Arc::new(ReqwestTransport::new()?),
        };
        Self::with_transport(config, transport)
    }

    pub fn with_transport(config: BackendConfig, transport: Arc<dyn Transport>) -> Result<Self, VlmError> {
        config.validate()?;
        let log = match &config.log_path {
            Some(p) => RequestLog::to_file(p)?,
            None => RequestLog::in_memory(),
        };
        Ok(VlmClient {
            limiter: config.requests_per_minute.map(|r| Arc::new(RateLimiter::per_minute(r))),
            config,
            transport,
            log: Arc::new(log),
            backoff: BackoffPolicy::default(),
            rng: Mutex::new(ChaCha8Rng::from_os_rng()),
        })
    }

    pub fn with_backoff(mut self, backoff: BackoffPolicy) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn with_seed(self, seed: u64) -> Self {
        *self.rng.lock().expect("rng lock") = ChaCha8Rng::seed_from_u64(seed);
        self
    }

    /// Shares one limiter between clients of the same backend.
    pub fn with_limiter(mut self, limiter: Arc<RateLimiter>) -> Self {
        self.limiter = Some(limiter);
        self
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn log(&self) -> &RequestLog {
        &self.log
    }

    fn api_key(&self) -> Result<Option<String>, VlmError> {
        if self.config.provider == Provider::Mock {
            return Ok(None);
        }
        match std::env::var(&self.config.api_key_env) {
            Ok(k) if !k.trim().is_empty() => Ok(Some(k.trim().to_string())),
            _ => Err(VlmError::AuthError(format!(
                "environment variable {} is not set",
                self.config.api_key_env
            ))),
        }
    }

    pub async fn extract(&self, image: &RgbImage, profile: &PromptProfile) -> Result<RawExtraction, VlmError> {
        let png = encode_png(image)?;
        self.extract_png(&png, profile).await
    }

    /// Sends a PNG. The transcript key is the hash of these bytes, before upscaling.
    pub async fn extract_png(&self, png: &[u8], profile: &PromptProfile) -> Result<RawExtraction, VlmError> {
        let key = self.api_key()?;
        let sha = image_sha256(png);
        let payload = if self.config.upscale {
            let img = image::load_from_memory_with_format(png, ImageFormat::Png)
                .map_err(|e| VlmError::Image(e.to_string()))?
                .to_rgb8();
            if img.width() == 0 || img.height() == 0 {
                return Err(VlmError::Image("empty image".into()));
            }
            encode_png(&preprocess(&img))?
        } else {
            png.to_vec()
        };
        let request = build_request(&self.config, key.as_deref(), &profile.text, &payload, &sha);
        let started = Instant::now();
        let mut previous_delay = Duration::ZERO;
        let max_attempts = self.config.max_retries + 1;
        let mut attempt = 0;
        loop {
            attempt += 1;
            if let Some(l) = &self.limiter {
                l.acquire().await;
            }
            let t0 = Instant::now();
            let result = self.transport.send(request.clone()).await;
            let elapsed = t0.elapsed().as_millis() as u64;
            let mut rec = AttemptRecord {
                timestamp: chrono::Utc::now().to_rfc3339(),
                backend: self.config.name.clone(),
                provider: self.config.provider,
                model_id: self.config.model_id.clone(),
                prompt_kind: profile.kind,
                image_sha256: sha.clone(),
                attempt,
                status: None,
                outcome: String::new(),
                error: None,
                latency_ms: elapsed,
                retry_in_ms: None,
                request_id: None,
            };
            // (error to return if out of attempts, Retry-After seconds)
            let (failure, retry_after) = match result {
                Ok(resp) => {
                    rec.status = Some(resp.status);
                    rec.request_id = resp
                        .header("request-id")
                        .or_else(|| resp.header("x-request-id"))
                        .map(str::to_string);
                    if (200..300).contains(&resp.status) {
                        match parse_response(self.config.provider, &resp.body) {
                            Ok(reply) => {
                                rec.outcome = "ok".into();
                                let request_id = rec.request_id.clone().unwrap_or_else(|| random_id(&self.rng));
                                self.log.push(rec);
                                return Ok(RawExtraction {
                                    backend: self.config.name.clone(),
                                    provider: self.config.provider,
                                    model_id: self.config.model_id.clone(),
                                    prompt_kind: profile.kind,
                                    response_text: reply.text,
                                    latency: started.elapsed().as_secs_f64(),
                                    request_id,
                                    attempts: attempt,
                                    image_sha256: sha,
                                    input_tokens: reply.input_tokens,
                                    output_tokens: reply.output_tokens,
                                });
                            }
                            Err(e) => {
                                rec.outcome = "error".into();
                                rec.error = Some(e.to_string());
                                self.log.push(rec);
                                return Err(e);
                            }
                        }
                    }
                    let message = error_message(&resp.body);
                    if matches!(resp.status, 401 | 403) {
                        rec.outcome = "error".into();
                        rec.error = Some(message.clone());
                        self.log.push(rec);
                        return Err(VlmError::AuthError(format!("status {}: {message}", resp.status)));
                    }
                    if !is_retryable(resp.status) {
                        rec.outcome = "error".into();
                        rec.error = Some(message.clone());
                        self.log.push(rec);
                        return Err(VlmError::ProviderError {
                            status: resp.status,
                            message,
                        });
                    }
                    let retry_after = resp.header("retry-after").and_then(|v| v.trim().parse::<f64>().ok());
                    rec.error = Some(message);
                    (
                        VlmError::RateLimited {
                            attempts: attempt,
                            last_status: resp.status,
                        },
                        retry_after,
                    )
                }
                Err(TransportError::Timeout) => {
                    rec.error = Some("timeout".into());
                    (VlmError::Timeout { attempts: attempt }, None)
                }
                Err(TransportError::Connect(m)) => {
                    rec.error = Some(m.clone());
                    (VlmError::Transport(m), None)
                }
            };
            if attempt >= max_attempts {
                rec.outcome = "error".into();
                self.log.push(rec);
                return Err(failure);
            }
            let mut delay = {
                let mut rng = self.rng.lock().expect("rng lock");
                self.backoff.delay(attempt - 1, previous_delay, &mut *rng)
            };
            if let Some(s) = retry_after.filter(|s| s.is_finite() && *s > 0.0) {
                delay = delay.max(Duration::from_secs_f64(s).min(self.backoff.cap));
            }
            previous_delay = delay;
            rec.outcome = "retry".into();
            rec.retry_in_ms = Some(delay.as_millis() as u64);
            tracing::debug!(backend = %self.config.name, attempt, ?delay, "retrying");
            self.log.push(rec);
            tokio::time::sleep(delay).await;
        }
    }
}

fn random_id(rng: &Mutex<ChaCha8Rng>) -> String {
    let bytes: [u8; 12] = rng.lock().expect("rng lock").random();
    format!("local-{}", hex::encode(bytes))
}

/// One-shot extraction against `backend`.
pub async fn extract(image: &RgbImage, profile: &PromptProfile, backend: &BackendConfig) -> Result<RawExtraction, VlmError> {
    VlmClient::new(backend.clone())?.extract(image, profile).await
}

/// Runs PNGs through `client` with at most `parallelism` requests in flight. Results keep
/// input order; a failed item does not stop the others. `parallelism` below 1 counts as 1.
pub async fn batch_extract(
    client: &VlmClient,
    pngs: &[Vec<u8>],
    profile: &PromptProfile,
    parallelism: usize,
) -> Vec<Result<RawExtraction, VlmError>> {
    stream::iter(pngs.iter().map(|png| client.extract_png(png, profile)))
        .buffered(parallelism.max(1))
        .collect()
        .await
}

/// [`batch_extract`] over decoded images.
pub async fn batch_extract_images(
    client: &VlmClient,
    images: &[RgbImage],
    profile: &PromptProfile,
    parallelism: usize,
) -> Vec<Result<RawExtraction, VlmError>> {
    let mut pngs = Vec::with_capacity(images.len());
    let mut failed = Vec::new();
    for (i, img) in images.iter().enumerate() {
        match encode_png(img) {
            Ok(p) => pngs.push(p),
            Err(e) => {
                failed.push((i, e));
                pngs.push(Vec::new());
            }
        }
    }
    let mut out = batch_extract(client, &pngs, profile, parallelism).await;
    for (i, e) in failed {
        out[i] = Err(e);
    }
    out
}

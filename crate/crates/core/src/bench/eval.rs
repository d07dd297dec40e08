use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use futures::stream::{self, StreamExt};
use sha2::{Digest, Sha256};

use super::{BenchError, EvalRecord, GroundTruth, ItemScore, MetricReport, ReportConfig, DEFAULT_RESAMPLES};
use crate::metrics::{best_column_rmsf1, recall, rmsf1, Tolerance};
use crate::table::parse_reply;
use crate::vlm::{
    image_sha256, BackendConfig, MockTransport, PromptKind, PromptProfile, Provider, RawExtraction, TranscriptEntry,
    VlmClient,
};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub tolerance: Tolerance,
    pub seed: u64,
    pub parallelism: usize,
    pub resamples: usize,
    pub level: f64,
    pub cache_dir: Option<PathBuf>,
    pub dataset: String,
    /// Applied ground-truth patches, copied into the report config.
    pub patch_log: Vec<String>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            tolerance: Tolerance::default(),
            seed: 0,
            parallelism: 4,
            resamples: DEFAULT_RESAMPLES,
            level: 0.95,
            cache_dir: None,
            dataset: String::new(),
            patch_log: Vec::new(),
        }
    }
}

/// On-disk store of successful extractions keyed by (image hash, model, prompt kind).
#[derive(Debug, Clone)]
pub struct ExtractionCache {
    dir: PathBuf,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl ExtractionCache {
    pub fn open(dir: &Path) -> Result<Self, BenchError> {
        std::fs::create_dir_all(dir).map_err(|e| BenchError::Io(format!("{}: {e}", dir.display())))?;
        Ok(ExtractionCache { dir: dir.to_path_buf() })
    }

    pub fn key(image_sha256: &str, model_id: &str, kind: PromptKind) -> String {
        let mut h = Sha256::new();
        for part in [image_sha256, model_id, kind.as_str()] {
            h.update(part.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, image_sha256: &str, model_id: &str, kind: PromptKind) -> Option<RawExtraction> {
        let text = std::fs::read_to_string(self.path(&Self::key(image_sha256, model_id, kind))).ok()?;
        serde_json::from_str(&text).ok()
    }

    /// Writes through a temporary file and a rename, so readers never see a partial entry.
    pub fn put(&self, extraction: &RawExtraction) -> Result<(), BenchError> {
        let key = Self::key(&extraction.image_sha256, &extraction.model_id, extraction.prompt_kind);
        let tmp = self.dir.join(format!(
            ".{key}.{}.{}.tmp",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let io = |e: std::io::Error| BenchError::Io(format!("cache {}: {e}", self.dir.display()));
        let body = serde_json::to_vec_pretty(extraction).map_err(|e| BenchError::Io(e.to_string()))?;
        std::fs::write(&tmp, body).map_err(io)?;
        std::fs::rename(&tmp, self.path(&key)).map_err(io)
    }
}

/// Scores one reply against its record. Extraction or parse failures score zero and are flagged.
pub fn score_item(record: &EvalRecord, reply: Result<&str, String>, tol: &Tolerance) -> ItemScore {
    let metric = match record.ground_truth {
        GroundTruth::Table(_) => "rmsf1",
        GroundTruth::Series { .. } => "best_column_rmsf1",
    };
    let failed = |error: String| ItemScore {
        id: record.id.clone(),
        chart_type: record.chart_type,
        metric: metric.to_string(),
        recall: 0.0,
        precision: 0.0,
        f1: 0.0,
        failed: true,
        error: Some(error),
    };
    let text = match reply {
        Ok(t) => t,
        Err(e) => return failed(e),
    };
    let table = match parse_reply(text) {
        Ok(t) => t,
        Err(e) => return failed(e.to_string()),
    };
    let pred = table.numeric_matrix();
    let scored = match &record.ground_truth {
        GroundTruth::Table(gt) => {
            let gt_m = gt.numeric_matrix();
            let flat_pred: Vec<f64> = pred.iter().flatten().flatten().copied().collect();
            let flat_gt: Vec<f64> = gt_m.iter().flatten().flatten().copied().collect();
            recall(&flat_pred, &flat_gt, tol)
                .and_then(|r| rmsf1(&pred, &gt_m, tol).map(|m| (r, m.precision, m.f1)))
        }
        GroundTruth::Series { values, .. } => {
            best_column_rmsf1(&pred, values, tol).map(|m| (m.recall, m.precision, m.f1))
        }
    };
    match scored {
        Ok((recall, precision, f1)) => ItemScore {
            id: record.id.clone(),
            chart_type: record.chart_type,
            metric: metric.to_string(),
            recall,
            precision,
            f1,
            failed: false,
            error: None,
        },
        Err(e) => failed(e.to_string()),
    }
}

#[derive(Debug, Clone)]
pub struct EvalRun {
    pub report: MetricReport,
    /// Per record, the extraction used for scoring.
    pub extractions: Vec<Option<RawExtraction>>,
    pub cache_hits: usize,
}

pub async fn run_eval(
    records: &[EvalRecord],
    client: &VlmClient,
    profile: &PromptProfile,
    options: &EvalOptions,
) -> Result<MetricReport, BenchError> {
    run_eval_detailed(records, client, profile, options).await.map(|r| r.report)
}

/// Extracts every record (cache first, then the backend, with at most `parallelism`
/// requests in flight) and scores the replies in record order.
pub async fn run_eval_detailed(
    records: &[EvalRecord],
    client: &VlmClient,
    profile: &PromptProfile,
    options: &EvalOptions,
) -> Result<EvalRun, BenchError> {
    let cache = options.cache_dir.as_deref().map(ExtractionCache::open).transpose()?;
    let model = client.config().model_id.clone();
    let outcomes: Vec<(Result<RawExtraction, String>, bool)> = stream::iter(records.iter().map(|rec| {
        let cache = cache.clone();
        let model = model.clone();
        async move {
            let png = match tokio::fs::read(&rec.image).await {
                Ok(b) => b,
                Err(e) => return (Err(format!("{}: {e}", rec.image.display())), false),
            };
            let sha = image_sha256(&png);
            if let Some(hit) = cache.as_ref().and_then(|c| c.get(&sha, &model, profile.kind)) {
                return (Ok(hit), true);
            }
            match client.extract_png(&png, profile).await {
                Ok(x) => {
                    if let Some(c) = &cache {
                        if let Err(e) = c.put(&x) {
                            tracing::warn!("{e}");
                        }
                    }
                    (Ok(x), false)
                }
                Err(e) => {
                    tracing::warn!(record = %rec.id, "extraction failed: {e}");
                    (Err(e.to_string()), false)
                }
            }
        }
    }))
    .buffered(options.parallelism.max(1))
    .collect()
    .await;

    let cache_hits = outcomes.iter().filter(|(_, hit)| *hit).count();
    let mut items = Vec::with_capacity(records.len());
    let mut extractions = Vec::with_capacity(records.len());
    for (rec, (outcome, _)) in records.iter().zip(outcomes) {
        let reply = outcome.as_ref().map(|x| x.response_text.as_str()).map_err(Clone::clone);
        items.push(score_item(rec, reply, &options.tolerance));
        extractions.push(outcome.ok());
    }
    let cfg = client.config();
    let config = ReportConfig {
        backend: cfg.name.clone(),
        model: cfg.model_id.clone(),
        provider: cfg.provider.to_string(),
        prompt_kind: profile.kind,
        tolerance: options.tolerance.relative,
        seed: options.seed,
        resamples: options.resamples,
        ci_level: options.level,
        ci_method: "percentile bootstrap over items".to_string(),
        dataset: options.dataset.clone(),
        patches: options.patch_log.clone(),
    };
    Ok(EvalRun {
        report: MetricReport::from_items(config, items),
        extractions,
        cache_hits,
    })
}

/// Transcript answering every record image with its ground-truth TSV.
pub fn echo_transcript(records: &[EvalRecord]) -> Result<HashMap<String, TranscriptEntry>, BenchError> {
    records
        .iter()
        .map(|r| {
            let bytes = std::fs::read(&r.image).map_err(|_| BenchError::MissingImage {
                id: r.id.clone(),
                path: r.image.clone(),
            })?;
            Ok((image_sha256(&bytes), TranscriptEntry::Reply(r.ground_truth.to_tsv())))
        })
        .collect()
}

/// Mock client replaying ground truth, optionally with every number scaled by `1 + perturb`.
pub fn echo_client(records: &[EvalRecord], perturb: Option<f64>) -> Result<VlmClient, BenchError> {
    let model = match perturb {
        Some(p) => format!("echo{:+}%", p * 100.0),
        None => "echo".to_string(),
    };
    let mut cfg = BackendConfig::new(Provider::Mock, &model);
    cfg.max_retries = 0;
    let mut transport = MockTransport::new().with_transcript(echo_transcript(records)?);
    if let Some(p) = perturb {
        transport = transport.with_perturb(p);
    }
    VlmClient::with_transport(cfg, Arc::new(transport)).map_err(|e| BenchError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{table_from_tsv, ChartType, Split};

    fn rec(id: &str, gt: GroundTruth) -> EvalRecord {
        EvalRecord {
            id: id.into(),
            image: PathBuf::new(),
            chart_type: ChartType::Line,
            split: Split::Dev,
            ground_truth: gt,
        }
    }

    #[test]
    fn table_scoring() {
        let r = rec("t", GroundTruth::Table(table_from_tsv("k\ta\tb\nx\t10\t20\ny\t30\t40")));
        let s = score_item(&r, Ok("k\tb\ta\nx\t20\t10\ny\t40\t31"), &Tolerance::default());
        assert_eq!((s.recall, s.precision, s.f1), (1.0, 1.0, 1.0));
        let s = score_item(&r, Ok("k\ta\nx\t10"), &Tolerance::default());
        assert_eq!(s.recall, 0.25);
        assert!(!s.failed);
    }

    #[test]
    fn series_uses_best_column() {
        let r = rec("s", GroundTruth::Series { label: "v".into(), values: vec![5.0, 7.0, 9.0] });
        let s = score_item(&r, Ok("x\tv\n1\t5\n2\t7\n3\t9"), &Tolerance::default());
        assert_eq!(s.f1, 1.0);
        assert_eq!(s.metric, "best_column_rmsf1");
    }

    #[test]
    fn failures_score_zero() {
        let r = rec("s", GroundTruth::Series { label: "v".into(), values: vec![5.0] });
        let s = score_item(&r, Err("boom".into()), &Tolerance::default());
        assert!(s.failed && s.f1 == 0.0 && s.error.as_deref() == Some("boom"));
        let s = score_item(&r, Ok("I cannot read this chart."), &Tolerance::default());
        assert!(s.failed && s.recall == 0.0);
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = ExtractionCache::open(dir.path()).unwrap();
        let x = RawExtraction {
            backend: "b".into(),
            provider: Provider::Mock,
            model_id: "m".into(),
            prompt_kind: PromptKind::Detailed,
            response_text: "A\t1".into(),
            latency: 0.5,
            request_id: "r".into(),
            attempts: 1,
            image_sha256: "ab".into(),
            input_tokens: None,
            output_tokens: None,
        };
        assert!(c.get("ab", "m", PromptKind::Detailed).is_none());
        c.put(&x).unwrap();
        assert_eq!(c.get("ab", "m", PromptKind::Detailed), Some(x));
        assert!(c.get("ab", "m", PromptKind::Simple).is_none());
        assert!(c.get("ab", "m2", PromptKind::Detailed).is_none());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}

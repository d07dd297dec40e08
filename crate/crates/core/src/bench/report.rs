use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{bootstrap_ci, mean, ChartType};
use crate::vlm::PromptKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub id: String,
    pub chart_type: ChartType,
    /// `rmsf1` for table ground truth, `best_column_rmsf1` for series.
    pub metric: String,
    /// Value recall for tables; the metric's own recall for series.
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub failed: bool,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeAggregate {
    pub chart_type: ChartType,
    pub n: usize,
    pub mean_recall: f64,
    pub mean_precision: f64,
    pub mean_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overall {
    pub n: usize,
    pub failures: usize,
    /// Mean recall.
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_precision: f64,
    pub mean_f1: f64,
    pub f1_ci_low: f64,
    pub f1_ci_high: f64,
    #[serde(default)]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub backend: String,
    pub model: String,
    pub provider: String,
    pub prompt_kind: PromptKind,
    pub tolerance: f64,
    pub seed: u64,
    pub resamples: usize,
    pub ci_level: f64,
    pub ci_method: String,
    pub dataset: String,
    #[serde(default)]
    pub patches: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub config: ReportConfig,
    pub per_item: Vec<ItemScore>,
    pub per_type: Vec<TypeAggregate>,
    pub overall: Overall,
}

impl MetricReport {
    /// Aggregates items: arithmetic means per chart type and overall, bootstrap CIs overall.
    pub fn from_items(config: ReportConfig, per_item: Vec<ItemScore>) -> Self {
        let mut per_type = Vec::new();
        for t in ChartType::ALL {
            let of: Vec<&ItemScore> = per_item.iter().filter(|i| i.chart_type == t).collect();
            if of.is_empty() {
                continue;
            }
            let m = |f: fn(&ItemScore) -> f64| mean(&of.iter().map(|i| f(i)).collect::<Vec<_>>());
            per_type.push(TypeAggregate {
                chart_type: t,
                n: of.len(),
                mean_recall: m(|i| i.recall),
                mean_precision: m(|i| i.precision),
                mean_f1: m(|i| i.f1),
            });
        }
        let recalls: Vec<f64> = per_item.iter().map(|i| i.recall).collect();
        let f1s: Vec<f64> = per_item.iter().map(|i| i.f1).collect();
        let precisions: Vec<f64> = per_item.iter().map(|i| i.precision).collect();
        let n = per_item.len();
        let ci = |xs: &[f64], salt: u64| match bootstrap_ci(xs, config.ci_level, config.resamples, config.seed ^ salt) {
            Ok(c) => c,
            Err(_) => (mean(xs), mean(xs)),
        };
        let (ci_low, ci_high) = ci(&recalls, 0);
        let (f1_ci_low, f1_ci_high) = ci(&f1s, 0x9e37_79b9_7f4a_7c15);
        let note = match n {
            0 => Some("no items were scored; all aggregates are undefined and shown as 0".to_string()),
            1 => Some("a single item was scored; the interval collapses to the point estimate".to_string()),
            _ => None,
        };
        let overall = Overall {
            n,
            failures: per_item.iter().filter(|i| i.failed).count(),
            mean: mean(&recalls),
            ci_low,
            ci_high,
            mean_precision: mean(&precisions),
            mean_f1: mean(&f1s),
            f1_ci_low,
            f1_ci_high,
            note,
        };
        MetricReport {
            config,
            per_item,
            per_type,
            overall,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Json,
    MarkdownTable,
    HeatmapCsv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "json" => Ok(ReportFormat::Json),
            "markdown" | "markdown-table" | "md" => Ok(ReportFormat::MarkdownTable),
            "heatmap-csv" | "heatmap" | "csv" => Ok(ReportFormat::HeatmapCsv),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

pub fn render_report(report: &MetricReport, format: ReportFormat) -> Vec<u8> {
    render_reports(std::slice::from_ref(report), format)
}

fn pct(x: f64) -> String {
    format!("{:.1}", x * 100.0)
}

/// One report renders as itself; several (one per model) share a table or matrix.
/// JSON of several reports is an array.
pub fn render_reports(reports: &[MetricReport], format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => {
            let mut s = if reports.len() == 1 {
                serde_json::to_string_pretty(&reports[0])
            } else {
                serde_json::to_string_pretty(reports)
            }
            .expect("report serializes");
            s.push('\n');
            s.into_bytes()
        }
        ReportFormat::MarkdownTable => {
            let mut s = String::from("| Model | Provider | N | Recall | 95% CI |\n|---|---|---:|---:|---|\n");
            for r in reports {
                let o = &r.overall;
                let (recall, ci) = if o.n == 0 {
                    ("n/a".to_string(), "n/a".to_string())
                } else {
                    (format!("{}%", pct(o.mean)), format!("[{}, {}]", pct(o.ci_low), pct(o.ci_high)))
                };
                let _ = writeln!(s, "| {} | {} | {} | {recall} | {ci} |", r.config.model, r.config.provider, o.n);
            }
            for r in reports {
                if let Some(n) = &r.overall.note {
                    let _ = write!(s, "\n_{}: {n}._\n", r.config.model);
                }
            }
            s.into_bytes()
        }
        ReportFormat::HeatmapCsv => {
            let types: Vec<ChartType> = ChartType::ALL
                .into_iter()
                .filter(|t| reports.iter().any(|r| r.per_type.iter().any(|a| a.chart_type == *t)))
                .collect();
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut head = vec!["model".to_string()];
            head.extend(types.iter().map(|t| t.to_string()));
            w.write_record(&head).expect("in-memory csv");
            for r in reports {
                let mut row = vec![r.config.model.clone()];
                for t in &types {
                    row.push(
                        r.per_type
                            .iter()
                            .find(|a| a.chart_type == *t)
                            .map(|a| pct(a.mean_f1))
                            .unwrap_or_default(),
                    );
                }
                w.write_record(&row).expect("in-memory csv");
            }
            w.into_inner().expect("in-memory csv")
        }
    }
}

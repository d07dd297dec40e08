//! Benchmark harness: datasets, ground-truth patches, scoring runs and reports.

mod eval;
mod patch;
mod report;
mod stats;
pub mod synth;

pub use eval::*;
pub use patch::*;
pub use report::*;
pub use stats::*;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::DataTable;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchError {
    #[error("manifest schema: {0}")]
    SchemaError(String),
    #[error("record `{id}`: image not found at {path}")]
    MissingImage { id: String, path: PathBuf },
    #[error("patch references unknown record `{0}`")]
    UnknownRecord(String),
    #[error("conflicting patches for record `{record_id}`: {detail}")]
    PatchConflict { record_id: String, detail: String },
    #[error("patch for record `{record_id}` does not apply: {detail}")]
    InvalidPatch { record_id: String, detail: String },
    #[error("at least two scores are needed, got {0}")]
    InsufficientData(usize),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartType {
    Bar,
    BarWithLabels,
    Line,
    LineWithLabels,
    Box,
    Histogram,
    Other,
}

impl ChartType {
    pub const ALL: [ChartType; 7] = [
        ChartType::Bar,
        ChartType::BarWithLabels,
        ChartType::Line,
        ChartType::LineWithLabels,
        ChartType::Box,
        ChartType::Histogram,
        ChartType::Other,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ChartType::Bar => "bar",
            ChartType::BarWithLabels => "bar_with_labels",
            ChartType::Line => "line",
            ChartType::LineWithLabels => "line_with_labels",
            ChartType::Box => "box",
            ChartType::Histogram => "histogram",
            ChartType::Other => "other",
        }
    }
}

impl fmt::Display for ChartType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChartType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ChartType::ALL
            .into_iter()
            .find(|t| t.as_str() == s.trim())
            .ok_or_else(|| format!("unknown chart type `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Dev,
    Validation,
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "dev" => Ok(Split::Dev),
            "validation" => Ok(Split::Validation),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GroundTruth {
    /// Multi-column table; scored with value recall and RMSF1.
    Table(DataTable),
    /// One series; scored with best-column RMSF1.
    Series { label: String, values: Vec<f64> },
}

impl GroundTruth {
    /// The reply a perfect extractor would give.
    pub fn to_tsv(&self) -> String {
        match self {
            GroundTruth::Table(t) => t.to_tsv(),
            GroundTruth::Series { label, values } => {
                let mut s = label.clone();
                for v in values {
                    s.push('\n');
                    s.push_str(&v.to_string());
                }
                s.push('\n');
                s
            }
        }
    }

    pub fn numeric_values(&self) -> Vec<f64> {
        match self {
            GroundTruth::Table(t) => t.rows.iter().flatten().filter_map(|c| c.numeric).collect(),
            GroundTruth::Series { values, .. } => values.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub id: String,
    pub image: PathBuf,
    pub chart_type: ChartType,
    pub split: Split,
    pub ground_truth: GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestGroundTruth {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tsv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub image: String,
    pub chart_type: String,
    pub split: String,
    pub ground_truth: ManifestGroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dataset: String,
    pub records: Vec<ManifestRecord>,
}

pub(crate) fn table_from_tsv(tsv: &str) -> DataTable {
    let mut lines = tsv.lines().map(|l| l.strip_suffix('\r').unwrap_or(l)).filter(|l| !l.trim().is_empty());
    let header = lines.next().unwrap_or("").split('\t').map(str::to_string).collect();
    let rows = lines.map(|l| l.split('\t').map(str::to_string).collect()).collect();
    DataTable::from_raw(header, rows)
}

impl ManifestGroundTruth {
    pub fn from_ground_truth(gt: &GroundTruth) -> Self {
        match gt {
            GroundTruth::Table(t) => ManifestGroundTruth {
                kind: "table".into(),
                tsv: Some(t.to_tsv()),
                values: None,
                label: None,
            },
            GroundTruth::Series { label, values } => ManifestGroundTruth {
                kind: "series".into(),
                tsv: None,
                values: Some(values.clone()),
                label: Some(label.clone()),
            },
        }
    }

    fn parse(&self, id: &str) -> Result<GroundTruth, BenchError> {
        let schema = |m: String| BenchError::SchemaError(format!("record `{id}`: {m}"));
        let gt = match self.kind.as_str() {
            "table" => {
                let tsv = self.tsv.as_deref().ok_or_else(|| schema("table ground truth needs `tsv`".into()))?;
                GroundTruth::Table(table_from_tsv(tsv))
            }
            "series" => {
                let values = self
                    .values
                    .clone()
                    .ok_or_else(|| schema("series ground truth needs `values`".into()))?;
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(schema("series values must be finite".into()));
                }
                GroundTruth::Series {
                    label: self.label.clone().unwrap_or_else(|| "value".into()),
                    values,
                }
            }
            other => return Err(schema(format!("unknown ground-truth kind `{other}`"))),
        };
        if gt.numeric_values().is_empty() {
            return Err(schema("ground truth has no numeric values".into()));
        }
        Ok(gt)
    }
}

impl ManifestRecord {
    pub fn from_record(record: &EvalRecord, base: &Path) -> Self {
        let image = record
            .image
            .strip_prefix(base)
            .unwrap_or(&record.image)
            .to_string_lossy()
            .replace('\\', "/");
        ManifestRecord {
            id: record.id.clone(),
            image,
            chart_type: record.chart_type.to_string(),
            split: match record.split {
                Split::Dev => "dev".into(),
                Split::Validation => "validation".into(),
            },
            ground_truth: ManifestGroundTruth::from_ground_truth(&record.ground_truth),
        }
    }
}

/// Parses manifest JSON. Image paths are resolved against `base` and must exist.
pub fn parse_manifest(text: &str, base: &Path) -> Result<(String, Vec<EvalRecord>), BenchError> {
    let m: Manifest = serde_json::from_str(text).map_err(|e| BenchError::SchemaError(e.to_string()))?;
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(m.records.len());
    for r in m.records {
        if r.id.trim().is_empty() {
            return Err(BenchError::SchemaError("record with empty id".into()));
        }
        if !seen.insert(r.id.clone()) {
            return Err(BenchError::SchemaError(format!("duplicate record id `{}`", r.id)));
        }
        let chart_type = r.chart_type.parse().map_err(|e| BenchError::SchemaError(format!("record `{}`: {e}", r.id)))?;
        let split = r.split.parse().map_err(|e| BenchError::SchemaError(format!("record `{}`: {e}", r.id)))?;
        let ground_truth = r.ground_truth.parse(&r.id)?;
        let image = base.join(&r.image);
        if !image.is_file() {
            return Err(BenchError::MissingImage { id: r.id, path: image });
        }
        out.push(EvalRecord {
            id: r.id,
            image,
            chart_type,
            split,
            ground_truth,
        });
    }
    Ok((m.dataset, out))
}

pub fn load_dataset(manifest_path: &Path) -> Result<Vec<EvalRecord>, BenchError> {
    load_named_dataset(manifest_path).map(|(_, r)| r)
}

/// Dataset name and records.
pub fn load_named_dataset(manifest_path: &Path) -> Result<(String, Vec<EvalRecord>), BenchError> {
    let text = std::fs::read_to_string(manifest_path)
        .map_err(|e| BenchError::Io(format!("{}: {e}", manifest_path.display())))?;
    parse_manifest(&text, manifest_path.parent().unwrap_or(Path::new(".")))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecordFilter {
    pub chart_types: Vec<ChartType>,
    pub split: Option<Split>,
    pub limit: Option<usize>,
}

impl RecordFilter {
    pub fn apply(&self, records: Vec<EvalRecord>) -> Vec<EvalRecord> {
        let it = records.into_iter().filter(|r| {
            (self.chart_types.is_empty() || self.chart_types.contains(&r.chart_type))
                && self.split.is_none_or(|s| s == r.split)
        });
        match self.limit {
            Some(n) => it.take(n).collect(),
            None => it.collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_manifest(dir: &Path, records: serde_json::Value) -> PathBuf {
        for name in ["a.png", "b.png", "c.png"] {
            std::fs::write(dir.join(name), b"png").unwrap();
        }
        let p = dir.join("manifest.json");
        std::fs::write(&p, serde_json::json!({"dataset": "t", "records": records}).to_string()).unwrap();
        p
    }

    fn three(dir: &Path) -> PathBuf {
        write_manifest(
            dir,
            serde_json::json!([
                {"id": "r1", "image": "a.png", "chart_type": "bar", "split": "dev",
                 "ground_truth": {"kind": "table", "tsv": "x\ty\na\t1\nb\t2\n"}},
                {"id": "r2", "image": "b.png", "chart_type": "box", "split": "validation",
                 "ground_truth": {"kind": "series", "values": [1.5, 2.5], "label": "s"}},
                {"id": "r3", "image": "c.png", "chart_type": "box", "split": "dev",
                 "ground_truth": {"kind": "series", "values": [4.0]}}
            ]),
        )
    }

    #[test]
    fn load_and_filter() {
        let dir = tempfile::tempdir().unwrap();
        let recs = load_dataset(&three(dir.path())).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[0].image, dir.path().join("a.png"));
        let boxes = RecordFilter {
            chart_types: vec![ChartType::Box],
            ..Default::default()
        }
        .apply(recs.clone());
        assert_eq!(boxes.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(), ["r2", "r3"]);
        let val = RecordFilter {
            split: Some(Split::Validation),
            ..Default::default()
        }
        .apply(recs);
        assert_eq!(val.len(), 1);
    }

    #[test]
    fn missing_image_names_record() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_manifest(
            dir.path(),
            serde_json::json!([{"id": "lost", "image": "nope.png", "chart_type": "bar", "split": "dev",
                "ground_truth": {"kind": "series", "values": [1.0]}}]),
        );
        match load_dataset(&p) {
            Err(BenchError::MissingImage { id, .. }) => assert_eq!(id, "lost"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn schema_errors() {
        let base = Path::new(".");
        for bad in [
            r#"{"records": []}"#,
            r#"{"dataset": "d", "records": [{"id": "x", "image": "a", "chart_type": "pie", "split": "dev", "ground_truth": {"kind": "series", "values": [1]}}]}"#,
            r#"{"dataset": "d", "records": [{"id": "x", "image": "a", "chart_type": "bar", "split": "dev", "ground_truth": {"kind": "table", "tsv": "a\tb\nx\ty"}}]}"#,
            r#"{"dataset": "d", "records": [{"id": "x", "image": "a", "chart_type": "bar", "split": "test", "ground_truth": {"kind": "series", "values": [1]}}]}"#,
        ] {
            assert!(matches!(parse_manifest(bad, base), Err(BenchError::SchemaError(_))), "{bad}");
        }
    }

    #[test]
    fn ground_truth_tsv_round_trip() {
        let t = GroundTruth::Series {
            label: "v".into(),
            values: vec![1.5, 20.0],
        };
        assert_eq!(t.to_tsv(), "v\n1.5\n20\n");
        let tab = GroundTruth::Table(table_from_tsv("a\tb\nx\t3\n"));
        assert_eq!(tab.to_tsv(), "a\tb\nx\t3\n");
        assert_eq!(tab.numeric_values(), vec![3.0]);
    }
}

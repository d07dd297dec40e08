//! Structured tables parsed from model replies.

mod number;
mod reply;

pub use number::parse_number;
pub use reply::parse_reply;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vlm::PromptKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TableError {
    #[error("no tabular content found in reply")]
    EmptyTable,
    #[error("cell ({row}, {col}) is outside a {rows}x{cols} table")]
    IndexOutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("invalid table JSON: {0}")]
    Json(String),
}

/// One parsed cell. `numeric` is the fully multiplied value; `magnitude_applied` records
/// the multiplier contributed by a magnitude word such as "million".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellValue {
    pub raw: String,
    pub numeric: Option<f64>,
    pub magnitude_applied: Option<f64>,
    pub unit_hint: Option<String>,
}

impl CellValue {
    pub fn text(raw: &str) -> Self {
        CellValue {
            raw: raw.to_string(),
            numeric: None,
            magnitude_applied: None,
            unit_hint: None,
        }
    }

    pub fn empty() -> Self {
        CellValue::text("")
    }

    pub fn is_numeric(&self) -> bool {
        self.numeric.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub backend: String,
    pub prompt_kind: PromptKind,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellEdit {
    pub row_index: usize,
    pub col_index: usize,
    pub new_raw: String,
}

/// Rectangular table: every row has `header.len()` cells and one confidence entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<CellValue>>,
    pub row_confidence: Vec<f64>,
    #[serde(default)]
    pub source_figure: Option<String>,
    #[serde(default)]
    pub provenance: Option<Provenance>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Column-major numeric view; `None` marks non-numeric or padding cells.
pub type NumericMatrix = Vec<Vec<Option<f64>>>;

/// The canonical JSON form: raw strings only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableJson {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub confidence: Vec<f64>,
}

impl DataTable {
    /// Builds a table from raw strings, padding or truncating rows to the header width.
    pub fn from_raw(header: Vec<String>, raw_rows: Vec<Vec<String>>) -> DataTable {
        let width = header.len();
        let mut warnings = Vec::new();
        let rows: Vec<Vec<CellValue>> = raw_rows
            .into_iter()
            .enumerate()
            .map(|(i, mut raw)| {
                if raw.len() > width {
                    warnings.push(format!(
                        "row {i}: {} cells truncated to header width {width}",
                        raw.len()
                    ));
                    raw.truncate(width);
                }
                let mut cells: Vec<CellValue> = raw.iter().map(|s| parse_number(s)).collect();
                cells.resize_with(width, CellValue::empty);
                cells
            })
            .collect();
        let row_confidence = compute_confidence(&rows, width);
        DataTable {
            header,
            rows,
            row_confidence,
            source_figure: None,
            provenance: None,
            warnings,
        }
    }

    pub fn width(&self) -> usize {
        self.header.len()
    }

    pub fn height(&self) -> usize {
        self.rows.len()
    }

    /// Re-parses one cell and recomputes that row's confidence; everything else is kept.
    pub fn apply_edit(&self, edit: &CellEdit) -> Result<DataTable, TableError> {
        let mut next = self.clone();
        next.apply_edit_in_place(edit)?;
        Ok(next)
    }

    pub fn apply_edit_in_place(&mut self, edit: &CellEdit) -> Result<(), TableError> {
        if edit.row_index >= self.height() || edit.col_index >= self.width() {
            return Err(TableError::IndexOutOfBounds {
                row: edit.row_index,
                col: edit.col_index,
                rows: self.height(),
                cols: self.width(),
            });
        }
        self.rows[edit.row_index][edit.col_index] = parse_number(&edit.new_raw);
        let majority = majority_numeric_columns(&self.rows, self.width());
        self.row_confidence[edit.row_index] = row_confidence(&self.rows[edit.row_index], &majority);
        Ok(())
    }

    pub fn numeric_matrix(&self) -> NumericMatrix {
        (0..self.width())
            .map(|c| self.rows.iter().map(|row| row[c].numeric).collect())
            .collect()
    }

    /// Canonical TSV: header line, `\n` endings, trailing newline.
    pub fn to_tsv(&self) -> String {
        let mut out = self.header.join("\t");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<&str> = row.iter().map(|c| c.raw.as_str()).collect();
            out.push_str(&cells.join("\t"));
            out.push('\n');
        }
        out
    }

    pub fn to_json_form(&self) -> TableJson {
        TableJson {
            header: self.header.clone(),
            rows: self
                .rows
                .iter()
                .map(|r| r.iter().map(|c| c.raw.clone()).collect())
                .collect(),
            confidence: self.row_confidence.clone(),
        }
    }

    /// Rebuilds a table from the canonical JSON form. Confidence is recomputed from the cells.
    pub fn from_json_form(form: TableJson) -> DataTable {
        DataTable::from_raw(form.header, form.rows)
    }

    pub fn from_json_str(s: &str) -> Result<DataTable, TableError> {
        let form: TableJson = serde_json::from_str(s).map_err(|e| TableError::Json(e.to_string()))?;
        Ok(DataTable::from_json_form(form))
    }

    pub fn raw_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|c| c.raw.clone()).collect())
            .collect()
    }
}

/// Columns where more than half of the rows hold a numeric cell.
fn majority_numeric_columns(rows: &[Vec<CellValue>], width: usize) -> Vec<usize> {
    if rows.is_empty() {
        return Vec::new();
    }
    (0..width)
        .filter(|&c| {
            let numeric = rows.iter().filter(|r| r[c].is_numeric()).count();
            numeric * 2 > rows.len()
        })
        .collect()
}

fn row_confidence(row: &[CellValue], majority: &[usize]) -> f64 {
    if majority.is_empty() {
        return 1.0;
    }
    let hits = majority.iter().filter(|&&c| row[c].is_numeric()).count();
    hits as f64 / majority.len() as f64
}

/// Parse-quality heuristic: share of a row's cells that are numeric, over the columns that
/// are numeric for most rows. Rows of a table with no such column score 1.0.
pub fn compute_confidence(rows: &[Vec<CellValue>], width: usize) -> Vec<f64> {
    let majority = majority_numeric_columns(rows, width);
    rows.iter().map(|r| row_confidence(r, &majority)).collect()
}

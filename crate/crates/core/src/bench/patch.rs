use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{table_from_tsv, BenchError, EvalRecord, GroundTruth};
use crate::table::{CellEdit, DataTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "operation", rename_all = "snake_case")]
pub enum PatchOp {
    /// `row` counts data rows from 0; the header is not addressable.
    ReplaceCell { row: usize, col: usize, value: String },
    SwapColumns { a: usize, b: usize },
    /// `tsv` for table records, `values` (and optional `label`) for series records.
    ReplaceTable {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tsv: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        values: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthPatch {
    pub record_id: String,
    #[serde(flatten)]
    pub op: PatchOp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl GroundTruthPatch {
    pub fn describe(&self) -> String {
        let what = match &self.op {
            PatchOp::ReplaceCell { row, col, value } => format!("replace_cell r{row} c{col} = {value:?}"),
            PatchOp::SwapColumns { a, b } => format!("swap_columns {a} <-> {b}"),
            PatchOp::ReplaceTable { .. } => "replace_table".to_string(),
        };
        match &self.note {
            Some(n) => format!("{}: {what} ({n})", self.record_id),
            None => format!("{}: {what}", self.record_id),
        }
    }
}

/// Reads a JSON-lines patch file; blank lines and `#` comments are skipped.
pub fn parse_patches(text: &str) -> Result<Vec<GroundTruthPatch>, BenchError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| BenchError::SchemaError(format!("patch line {}: {e}", i + 1)))
        })
        .collect()
}

pub fn load_patches(path: &Path) -> Result<Vec<GroundTruthPatch>, BenchError> {
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::Io(format!("{}: {e}", path.display())))?;
    parse_patches(&text)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Cell {
    Header(usize),
    Body(usize, usize),
    Whole,
}

/// Cells a patch writes, given the record's current shape.
fn footprint(op: &PatchOp, gt: &GroundTruth) -> BTreeSet<Cell> {
    match op {
        PatchOp::ReplaceCell { row, col, .. } => [Cell::Body(*row, *col)].into(),
        PatchOp::SwapColumns { a, b } => {
            let rows = match gt {
                GroundTruth::Table(t) => t.height(),
                GroundTruth::Series { values, .. } => values.len(),
            };
            let mut s = BTreeSet::new();
            for c in [*a, *b] {
                s.insert(Cell::Header(c));
                for r in 0..rows {
                    s.insert(Cell::Body(r, c));
                }
            }
            s
        }
        PatchOp::ReplaceTable { .. } => [Cell::Whole].into(),
    }
}

fn overlaps(a: &BTreeSet<Cell>, b: &BTreeSet<Cell>) -> bool {
    a.contains(&Cell::Whole) || b.contains(&Cell::Whole) || a.intersection(b).next().is_some()
}

fn apply_one(gt: &mut GroundTruth, patch: &GroundTruthPatch) -> Result<(), BenchError> {
    let invalid = |detail: String| BenchError::InvalidPatch {
        record_id: patch.record_id.clone(),
        detail,
    };
    match (&patch.op, gt) {
        (PatchOp::ReplaceCell { row, col, value }, GroundTruth::Table(t)) => t
            .apply_edit_in_place(&CellEdit {
                row_index: *row,
                col_index: *col,
                new_raw: value.clone(),
            })
            .map_err(|e| invalid(e.to_string())),
        (PatchOp::ReplaceCell { row, col, value }, GroundTruth::Series { values, .. }) => {
            if *col != 0 || *row >= values.len() {
                return Err(invalid(format!("cell ({row}, {col}) outside a {}-value series", values.len())));
            }
            let v = crate::table::parse_number(value)
                .numeric
                .ok_or_else(|| invalid(format!("`{value}` is not a number")))?;
            values[*row] = v;
            Ok(())
        }
        (PatchOp::SwapColumns { a, b }, GroundTruth::Table(t)) => {
            let w = t.width();
            if *a >= w || *b >= w {
                return Err(invalid(format!("column index out of range for width {w}")));
            }
            let mut header = t.header.clone();
            header.swap(*a, *b);
            let mut rows = t.raw_rows();
            for r in &mut rows {
                r.swap(*a, *b);
            }
            let mut swapped = DataTable::from_raw(header, rows);
            swapped.source_figure = t.source_figure.take();
            *t = swapped;
            Ok(())
        }
        (PatchOp::SwapColumns { .. }, GroundTruth::Series { .. }) => Err(invalid("series has one column".into())),
        (PatchOp::ReplaceTable { tsv: Some(tsv), .. }, gt @ GroundTruth::Table(_)) => {
            let t = table_from_tsv(tsv);
            if !t.rows.iter().flatten().any(|c| c.is_numeric()) {
                return Err(invalid("replacement table has no numeric values".into()));
            }
            *gt = GroundTruth::Table(t);
            Ok(())
        }
        (PatchOp::ReplaceTable { values: Some(v), label, .. }, GroundTruth::Series { label: old, values }) => {
            if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
                return Err(invalid("replacement series must be nonempty and finite".into()));
            }
            *values = v.clone();
            if let Some(l) = label {
                *old = l.clone();
            }
            Ok(())
        }
        (PatchOp::ReplaceTable { .. }, _) => Err(invalid("replacement does not match the record kind".into())),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchOutcome {
    pub records: Vec<EvalRecord>,
    /// One line per applied patch, in file order.
    pub log: Vec<String>,
}

/// Applies patches in order after checking that every record exists and that no two
/// patches of one record write the same cell.
pub fn apply_patches(records: Vec<EvalRecord>, patches: &[GroundTruthPatch]) -> Result<PatchOutcome, BenchError> {
    let index: HashMap<String, usize> = records.iter().enumerate().map(|(i, r)| (r.id.clone(), i)).collect();
    let mut by_record: HashMap<usize, Vec<(usize, BTreeSet<Cell>)>> = HashMap::new();
    for (pi, p) in patches.iter().enumerate() {
        let ri = *index
            .get(&p.record_id)
            .ok_or_else(|| BenchError::UnknownRecord(p.record_id.clone()))?;
        let fp = footprint(&p.op, &records[ri].ground_truth);
        let earlier = by_record.entry(ri).or_default();
        if let Some((other, _)) = earlier.iter().find(|(_, f)| overlaps(f, &fp)) {
            return Err(BenchError::PatchConflict {
                record_id: p.record_id.clone(),
                detail: format!("`{}` and `{}` write the same cell", patches[*other].describe(), p.describe()),
            });
        }
        earlier.push((pi, fp));
    }
    let mut records = records;
    let mut log = Vec::with_capacity(patches.len());
    for p in patches {
        let ri = index[&p.record_id];
        apply_one(&mut records[ri].ground_truth, p)?;
        log.push(p.describe());
    }
    Ok(PatchOutcome { records, log })
}

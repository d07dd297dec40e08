//! Table writers for downstream statistical work.

mod latex;
mod rscript;
mod xlsx;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::DataTable;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("invalid R identifier {0:?}")]
    InvalidIdentifier(String),
    #[error("cannot encode table: {0}")]
    EncodingError(String),
    #[error("csv parse error: {0}")]
    CsvParseError(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Tsv,
    Json,
    Latex,
    R,
    Xlsx,
}

impl ExportFormat {
    pub const ALL: [ExportFormat; 6] = [
        ExportFormat::Csv,
        ExportFormat::Tsv,
        ExportFormat::Json,
        ExportFormat::Latex,
        ExportFormat::R,
        ExportFormat::Xlsx,
    ];

    pub fn extension(&self) -> &'static str {
        match self {
            ExportFormat::Csv => "csv",
            ExportFormat::Tsv => "tsv",
            ExportFormat::Json => "json",
            ExportFormat::Latex => "tex",
            ExportFormat::R => "R",
            ExportFormat::Xlsx => "xlsx",
        }
    }

    pub fn mime_type(&self) -> &'static str {
        match self {
            ExportFormat::Csv => "text/csv",
            ExportFormat::Tsv => "text/tab-separated-values",
            ExportFormat::Json => "application/json",
            ExportFormat::Latex => "application/x-tex",
            ExportFormat::R => "text/plain",
            ExportFormat::Xlsx => "application/vnd.openxmlformats-officedocument.spreadsheetml.sheet",
        }
    }
}

impl fmt::Display for ExportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ExportFormat::Csv => "csv",
            ExportFormat::Tsv => "tsv",
            ExportFormat::Json => "json",
            ExportFormat::Latex => "latex",
            ExportFormat::R => "r",
            ExportFormat::Xlsx => "xlsx",
        };
        f.write_str(s)
    }
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "tsv" => Ok(ExportFormat::Tsv),
            "json" => Ok(ExportFormat::Json),
            "latex" | "tex" => Ok(ExportFormat::Latex),
            "r" => Ok(ExportFormat::R),
            "xlsx" | "excel" => Ok(ExportFormat::Xlsx),
            other => Err(format!("unknown export format {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportOptions {
    /// Append a `confidence` column.
    pub include_confidence: bool,
    /// Data-frame name for R output.
    pub table_name: String,
}

impl Default for ExportOptions {
    fn default() -> Self {
        ExportOptions {
            include_confidence: false,
            table_name: "extracted".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExportRequest<'a> {
    pub table: &'a DataTable,
    pub format: ExportFormat,
    pub options: ExportOptions,
}

/// Header and raw rows to write, with the optional confidence column applied.
pub(crate) fn layout(table: &DataTable, options: &ExportOptions) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = table.header.clone();
    let mut rows = table.raw_rows();
    if options.include_confidence {
        header.push("confidence".to_string());
        for (row, conf) in rows.iter_mut().zip(&table.row_confidence) {
            row.push(format_confidence(*conf));
        }
    }
    (header, rows)
}

fn format_confidence(c: f64) -> String {
    let rounded = (c * 1e4).round() / 1e4;
    format!("{rounded}")
}

pub fn export(request: &ExportRequest<'_>) -> Result<Vec<u8>, ExportError> {
    let table = request.table;
    let options = &request.options;
    match request.format {
        ExportFormat::Csv => write_csv(table, options),
        ExportFormat::Tsv => write_tsv(table, options),
        ExportFormat::Json => serde_json::to_vec_pretty(&table.to_json_form())
            .map_err(|e| ExportError::EncodingError(e.to_string())),
        ExportFormat::Latex => Ok(latex::write(table, options).into_bytes()),
        ExportFormat::R => rscript::write(table, options).map(String::into_bytes),
        ExportFormat::Xlsx => xlsx::write(table, options),
    }
}

/// Convenience wrapper over [`export`].
pub fn export_table(table: &DataTable, format: ExportFormat, options: &ExportOptions) -> Result<Vec<u8>, ExportError> {
    export(&ExportRequest {
        table,
        format,
        options: options.clone(),
    })
}

fn write_csv(table: &DataTable, options: &ExportOptions) -> Result<Vec<u8>, ExportError> {
    let (header, rows) = layout(table, options);
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let enc = |e: csv::Error| ExportError::EncodingError(e.to_string());
    w.write_record(&header).map_err(enc)?;
    for row in &rows {
        w.write_record(row).map_err(enc)?;
    }
    w.into_inner().map_err(|e| ExportError::EncodingError(e.to_string()))
}

fn write_tsv(table: &DataTable, options: &ExportOptions) -> Result<Vec<u8>, ExportError> {
    let (header, rows) = layout(table, options);
    let mut out = String::new();
    for line in std::iter::once(&header).chain(rows.iter()) {
        if let Some(bad) = line.iter().find(|c| c.contains(['\t', '\n', '\r'])) {
            return Err(ExportError::EncodingError(format!(
                "cell {bad:?} contains a tab or line break"
            )));
        }
        out.push_str(&line.join("\t"));
        out.push('\n');
    }
    Ok(out.into_bytes())
}

/// Reads RFC 4180 CSV with a header line. Rows are re-parsed into cells.
pub fn import_csv(bytes: &[u8]) -> Result<DataTable, ExportError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);
    let mut records = reader.records();
    let header = match records.next() {
        Some(rec) => rec.map_err(|e| ExportError::CsvParseError(e.to_string()))?,
        None => return Err(ExportError::CsvParseError("empty input".to_string())),
    };
    let header: Vec<String> = header.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| ExportError::CsvParseError(e.to_string()))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(DataTable::from_raw(header, rows))
}

/// Reads canonical TSV (first line header).
pub fn import_tsv(bytes: &[u8]) -> Result<DataTable, ExportError> {
    let text = std::str::from_utf8(bytes).map_err(|e| ExportError::EncodingError(e.to_string()))?;
    let mut lines = text.lines().map(|l| l.strip_suffix('\r').unwrap_or(l));
    let header = lines
        .next()
        .ok_or_else(|| ExportError::CsvParseError("empty input".to_string()))?;
    let header = header.split('\t').map(str::to_string).collect();
    let rows = lines
        .map(|l| l.split('\t').map(str::to_string).collect())
        .collect();
    Ok(DataTable::from_raw(header, rows))
}

pub fn import_json(bytes: &[u8]) -> Result<DataTable, ExportError> {
    let text = std::str::from_utf8(bytes).map_err(|e| ExportError::EncodingError(e.to_string()))?;
    DataTable::from_json_str(text).map_err(|e| ExportError::EncodingError(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(header: &[&str], rows: &[&[&str]]) -> DataTable {
        DataTable::from_raw(
            header.iter().map(|s| s.to_string()).collect(),
            rows.iter()
                .map(|r| r.iter().map(|s| s.to_string()).collect())
                .collect(),
        )
    }

    fn csv_of(t: &DataTable) -> String {
        String::from_utf8(export_table(t, ExportFormat::Csv, &ExportOptions::default()).unwrap()).unwrap()
    }

    #[test]
    fn csv_shape() {
        let t = table(&["A", "B"], &[&["1", "2"], &["3", "4"]]);
        assert_eq!(csv_of(&t), "A,B\n1,2\n3,4\n");
    }

    #[test]
    fn csv_quotes_commas() {
        let t = table(&["A"], &[&["1,234"], &["say \"hi\""]]);
        assert_eq!(csv_of(&t), "A\n\"1,234\"\n\"say \"\"hi\"\"\"\n");
    }

    #[test]
    fn csv_import_quoted() {
        let t = import_csv(b"H\n\"a,b\"\n").unwrap();
        assert_eq!(t.rows[0][0].raw, "a,b");
    }

    #[test]
    fn csv_import_empty() {
        assert!(matches!(import_csv(b""), Err(ExportError::CsvParseError(_))));
    }

    #[test]
    fn confidence_column() {
        let t = table(&["C", "V"], &[&["a", "1"], &["b", "x"], &["c", "2"]]);
        let opts = ExportOptions {
            include_confidence: true,
            ..Default::default()
        };
        let out = String::from_utf8(export_table(&t, ExportFormat::Csv, &opts).unwrap()).unwrap();
        assert_eq!(out, "C,V,confidence\na,1,1\nb,x,0\nc,2,1\n");
    }

    #[test]
    fn tsv_rejects_tabs_in_cells() {
        let t = table(&["A"], &[&["x\ty"]]);
        assert!(matches!(
            export_table(&t, ExportFormat::Tsv, &ExportOptions::default()),
            Err(ExportError::EncodingError(_))
        ));
    }

    #[test]
    fn format_names() {
        for f in ExportFormat::ALL {
            assert_eq!(f.to_string().parse::<ExportFormat>().unwrap(), f);
        }
    }
}

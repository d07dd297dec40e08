//! R script export: one `data.frame` constructor with typed columns.

use super::{layout, ExportError, ExportOptions};
use crate::table::{parse_number, DataTable};

const RESERVED: &[&str] = &[
    "if", "else", "repeat", "while", "function", "for", "next", "break", "TRUE", "FALSE", "NULL",
    "Inf", "NaN", "NA", "NA_integer_", "NA_real_", "NA_character_", "NA_complex_", "in",
];

pub fn is_valid_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !RESERVED.contains(&name)
}

/// R string literal; non-ASCII characters become `\U{...}` escapes so the script is
/// ASCII regardless of the reader's locale.
pub(crate) fn string_literal(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c.is_ascii_control() => out.push_str(&format!("\\x{:02x}", c as u32)),
            c if c.is_ascii() => out.push(c),
            c => out.push_str(&format!("\\U{{{:x}}}", c as u32)),
        }
    }
    out.push('"');
    out
}

fn comment(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}

enum Column {
    Numeric(Vec<Option<f64>>),
    Character(Vec<String>),
}

fn classify(cells: &[&str]) -> Column {
    let parsed: Vec<Option<f64>> = cells.iter().map(|c| parse_number(c).numeric).collect();
    let numeric = cells
        .iter()
        .zip(&parsed)
        .all(|(raw, v)| v.is_some() || raw.trim().is_empty())
        && parsed.iter().any(Option::is_some);
    if numeric {
        Column::Numeric(parsed)
    } else {
        Column::Character(cells.iter().map(|c| c.to_string()).collect())
    }
}

pub(crate) fn write(table: &DataTable, options: &ExportOptions) -> Result<String, ExportError> {
    let name = &options.table_name;
    if !is_valid_identifier(name) {
        return Err(ExportError::InvalidIdentifier(name.clone()));
    }
    let (header, rows) = layout(table, options);

    let mut out = String::new();
    out.push_str("# Table extracted by figtab\n");
    if let Some(label) = &table.source_figure {
        out.push_str(&format!("# Source figure: {}\n", comment(label)));
    }
    if let Some(p) = &table.provenance {
        out.push_str(&format!(
            "# Backend: {}; prompt: {}; extracted: {}\n",
            comment(&p.backend),
            p.prompt_kind,
            p.timestamp.to_rfc3339()
        ));
    }
    out.push_str(&format!("{name} <- data.frame(\n"));
    for (c, _) in header.iter().enumerate() {
        let cells: Vec<&str> = rows.iter().map(|r| r[c].as_str()).collect();
        let values: Vec<String> = match classify(&cells) {
            Column::Numeric(vals) => vals
                .iter()
                .map(|v| match v {
                    Some(x) => format!("{x:?}"),
                    None => "NA".to_string(),
                })
                .collect(),
            Column::Character(vals) => vals.iter().map(|v| string_literal(v)).collect(),
        };
        let vector = if values.is_empty() {
            "character(0)".to_string()
        } else {
            format!("c({})", values.join(", "))
        };
        out.push_str(&format!("  V{} = {vector},\n", c + 1));
    }
    out.push_str("  stringsAsFactors = FALSE\n)\n");
    let names: Vec<String> = header.iter().map(|h| string_literal(h)).collect();
    out.push_str(&format!("names({name}) <- c({})\n", names.join(", ")));
    Ok(out)
}

use super::{layout, ExportOptions};
use crate::table::{parse_number, DataTable};

pub(crate) fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' | '%' | '$' | '#' | '_' | '{' | '}' => {
                out.push('\\');
                out.push(c);
            }
            '~' => out.push_str("\\textasciitilde{}"),
            '^' => out.push_str("\\textasciicircum{}"),
            '\\' => out.push_str("\\textbackslash{}"),
            '\n' | '\r' | '\t' => out.push(' '),
            _ => out.push(c),
        }
    }
    out
}

pub(crate) fn write(table: &DataTable, options: &ExportOptions) -> String {
    let (header, rows) = layout(table, options);
    let spec: String = (0..header.len())
        .map(|c| {
            let numeric = rows.iter().filter(|r| parse_number(&r[c]).is_numeric()).count();
            if !rows.is_empty() && numeric * 2 > rows.len() {
                'r'
            } else {
                'l'
            }
        })
        .collect();

    let line = |cells: &[String]| -> String {
        let escaped: Vec<String> = cells.iter().map(|c| escape(c)).collect();
        format!("{} \\\\\n", escaped.join(" & "))
    };

    let mut out = String::new();
    out.push_str("\\begin{table}[ht]\n\\centering\n");
    if let Some(label) = &table.source_figure {
        out.push_str(&format!("\\caption{{Data extracted from {}}}\n", escape(label)));
    }
    out.push_str(&format!("\\begin{{tabular}}{{{spec}}}\n\\hline\n"));
    out.push_str(&line(&header));
    out.push_str("\\hline\n");
    for row in &rows {
        out.push_str(&line(row));
    }
    out.push_str("\\hline\n\\end{tabular}\n\\end{table}\n");
    out
}

//! Single-sheet OOXML workbook: inline strings, no styles, no shared-string table.

use super::{layout, ExportError, ExportOptions};
use crate::archive::ZipWriter;
use crate::table::{parse_number, DataTable};

const CONTENT_TYPES: &str = r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?>
<Types xmlns="http://schemas.openxmlformats.org/package/2006/content-types"><Default Extension="rels" ContentType="application/vnd.openxmlformats-package.relationships+xml"/><Default Extension="xml" ContentType="application/xml"/><Override PartName="/xl/workbook.xml" ContentType="application/vnd.openxmlformats-officedocument.spreadsheetml.sheet.main+xml"/><Override PartName="/xl/worksheets/sheet1.xml" ContentType="application/vnd.openxmlformats-officedocument.spreadsheetml.worksheet+xml"/></Types>"#;

const ROOT_RELS: &str = r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?>
<Relationships xmlns="http://schemas.openxmlformats.org/package/2006/relationships"><Relationship Id="rId1" Type="http://schemas.openxmlformats.org/officeDocument/2006/relationships/officeDocument" Target="xl/workbook.xml"/></Relationships>"#;

const WORKBOOK: &str = r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?>
<workbook xmlns="http://schemas.openxmlformats.org/spreadsheetml/2006/main" xmlns:r="http://schemas.openxmlformats.org/officeDocument/2006/relationships"><sheets><sheet name="Sheet1" sheetId="1" r:id="rId1"/></sheets></workbook>"#;

const WORKBOOK_RELS: &str = r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?>
<Relationships xmlns="http://schemas.openxmlformats.org/package/2006/relationships"><Relationship Id="rId1" Type="http://schemas.openxmlformats.org/officeDocument/2006/relationships/worksheet" Target="worksheets/sheet1.xml"/></Relationships>"#;

/// `0 → A`, `25 → Z`, `26 → AA`.
pub(crate) fn column_name(mut index: usize) -> String {
    let mut name = Vec::new();
    loop {
        name.push(b'A' + (index % 26) as u8);
        if index < 26 {
            break;
        }
        index = index / 26 - 1;
    }
    name.reverse();
    String::from_utf8(name).expect("ascii")
}

fn xml_escape(s: &str) -> Result<String, ExportError> {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\t' | '\n' | '\r' => out.push(c),
            c if (c as u32) < 0x20 || c == '\u{fffe}' || c == '\u{ffff}' => {
                return Err(ExportError::EncodingError(format!(
                    "character U+{:04X} cannot appear in XML",
                    c as u32
                )))
            }
            c => out.push(c),
        }
    }
    Ok(out)
}

fn sheet_xml(header: &[String], rows: &[Vec<String>]) -> Result<String, ExportError> {
    let mut out = String::from(
        "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"yes\"?>\n\
         <worksheet xmlns=\"http://schemas.openxmlformats.org/spreadsheetml/2006/main\"><sheetData>",
    );
    for (r, line) in std::iter::once(header).chain(rows.iter().map(Vec::as_slice)).enumerate() {
        let row_num = r + 1;
        out.push_str(&format!("<row r=\"{row_num}\">"));
        for (c, raw) in line.iter().enumerate() {
            let cell_ref = format!("{}{row_num}", column_name(c));
            let numeric = if r == 0 { None } else { parse_number(raw).numeric };
            match numeric {
                Some(v) => out.push_str(&format!("<c r=\"{cell_ref}\"><v>{v:?}</v></c>")),
                None if raw.is_empty() => {}
                None => {
                    let space = if raw.trim() != raw { " xml:space=\"preserve\"" } else { "" };
                    out.push_str(&format!(
                        "<c r=\"{cell_ref}\" t=\"inlineStr\"><is><t{space}>{}</t></is></c>",
                        xml_escape(raw)?
                    ));
                }
            }
        }
        out.push_str("</row>");
    }
    out.push_str("</sheetData></worksheet>");
    Ok(out)
}

pub(crate) fn write(table: &DataTable, options: &ExportOptions) -> Result<Vec<u8>, ExportError> {
    let (header, rows) = layout(table, options);
    let sheet = sheet_xml(&header, &rows)?;
    let io = |e: std::io::Error| ExportError::EncodingError(e.to_string());
    let mut zip = ZipWriter::new();
    zip.add("[Content_Types].xml", CONTENT_TYPES.as_bytes()).map_err(io)?;
    zip.add("_rels/.rels", ROOT_RELS.as_bytes()).map_err(io)?;
    zip.add("xl/workbook.xml", WORKBOOK.as_bytes()).map_err(io)?;
    zip.add("xl/_rels/workbook.xml.rels", WORKBOOK_RELS.as_bytes()).map_err(io)?;
    zip.add("xl/worksheets/sheet1.xml", sheet.as_bytes()).map_err(io)?;
    Ok(zip.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archive::read_entries;

    #[test]
    fn column_names() {
        assert_eq!(column_name(0), "A");
        assert_eq!(column_name(25), "Z");
        assert_eq!(column_name(26), "AA");
        assert_eq!(column_name(27), "AB");
        assert_eq!(column_name(701), "ZZ");
        assert_eq!(column_name(702), "AAA");
    }

    #[test]
    fn workbook_parts_and_rows() {
        let t = DataTable::from_raw(
            vec!["Name".into(), "V".into()],
            vec![vec!["a<b".into(), "1,000".into()], vec!["c".into(), "".into()]],
        );
        let bytes = write(&t, &ExportOptions::default()).unwrap();
        let entries = read_entries(&bytes).unwrap();
        let names: Vec<&str> = entries.iter().map(|(n, _)| n.as_str()).collect();
        assert!(names.contains(&"[Content_Types].xml"));
        assert!(names.contains(&"xl/workbook.xml"));
        let sheet = entries
            .iter()
            .find(|(n, _)| n == "xl/worksheets/sheet1.xml")
            .map(|(_, d)| String::from_utf8(d.clone()).unwrap())
            .unwrap();
        assert_eq!(sheet.matches("<row ").count(), 3);
        assert!(sheet.contains("<c r=\"B2\"><v>1000.0</v></c>"));
        assert!(sheet.contains("a&lt;b"));
    }

    #[test]
    fn control_characters_rejected() {
        let t = DataTable::from_raw(vec!["A".into()], vec![vec!["\u{1}".into()]]);
        assert!(matches!(write(&t, &ExportOptions::default()), Err(ExportError::EncodingError(_))));
    }
}

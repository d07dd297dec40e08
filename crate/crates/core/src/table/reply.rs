//! Turning a raw model reply into a [`DataTable`].

use super::{DataTable, TableError};

/// Parses a reply: strips code fences, drops prose before the first and after the last
/// tab-bearing line, then reads the first line as header and the rest as rows.
///
/// A reply with no tab anywhere is still accepted as a one-column table when it has a
/// header line followed only by numeric lines.
pub fn parse_reply(response_text: &str) -> Result<DataTable, TableError> {
    let lines: Vec<&str> = response_text
        .lines()
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect();

    let first = lines.iter().position(|l| l.contains('\t'));
    let last = lines.iter().rposition(|l| l.contains('\t'));
    let body: Vec<&str> = match (first, last) {
        (Some(a), Some(b)) => lines[a..=b]
            .iter()
            .copied()
            .filter(|l| !l.trim().is_empty())
            .collect(),
        _ => return single_column(&lines),
    };

    let (head, rest) = body.split_first().ok_or(TableError::EmptyTable)?;
    let header = split(head);
    let rows = rest.iter().map(|l| split(l)).collect();
    Ok(DataTable::from_raw(header, rows))
}

fn split(line: &str) -> Vec<String> {
    line.split('\t').map(str::to_string).collect()
}

fn single_column(lines: &[&str]) -> Result<DataTable, TableError> {
    let body: Vec<&str> = lines.iter().copied().filter(|l| !l.trim().is_empty()).collect();
    let Some((head, rest)) = body.split_first() else {
        return Err(TableError::EmptyTable);
    };
    if rest.is_empty() || !rest.iter().all(|l| super::parse_number(l).is_numeric()) {
        return Err(TableError::EmptyTable);
    }
    Ok(DataTable::from_raw(
        vec![head.to_string()],
        rest.iter().map(|l| vec![l.to_string()]).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_tsv() {
        let t = parse_reply("A\tB\n1\t2\n3\t4").unwrap();
        assert_eq!(t.header, vec!["A", "B"]);
        assert_eq!(t.rows.len(), 2);
        assert!(t.rows.iter().flatten().all(|c| c.is_numeric()));
    }

    // Hand-written fixture of wrapped replies and the tables they should yield.
    #[test]
    fn fenced_replies() {
        #[allow(clippy::type_complexity)]
        let fixtures: &[(&str, &[&str], &[&[Option<f64>]])] = &[
            (
                "Here is the table:\n```\nYear\tValue\n2020\t1,234\n```",
                &["Year", "Value"],
                &[&[Some(2020.0), Some(1234.0)]],
            ),
            (
                "```tsv\nX\tY\n1\t2\n```\nLet me know if you need anything else.",
                &["X", "Y"],
                &[&[Some(1.0), Some(2.0)]],
            ),
            (
                "Sure!\r\n\r\nCat\tN\r\na\t5%\r\n\r\nb\t2.3M\r\nNotes: values approximate.",
                &["Cat", "N"],
                &[&[None, Some(5.0)], &[None, Some(2_300_000.0)]],
            ),
        ];
        for (reply, header, values) in fixtures {
            let t = parse_reply(reply).unwrap();
            assert_eq!(&t.header, header, "{reply:?}");
            let got: Vec<Vec<Option<f64>>> = t
                .rows
                .iter()
                .map(|r| r.iter().map(|c| c.numeric).collect())
                .collect();
            let want: Vec<Vec<Option<f64>>> = values.iter().map(|r| r.to_vec()).collect();
            assert_eq!(got, want, "{reply:?}");
        }
    }

    #[test]
    fn no_table() {
        assert_eq!(parse_reply("no table here"), Err(TableError::EmptyTable));
        assert_eq!(parse_reply(""), Err(TableError::EmptyTable));
        assert_eq!(parse_reply("```\n```"), Err(TableError::EmptyTable));
    }

    #[test]
    fn single_numeric_column() {
        let t = parse_reply("Sales\n10\n20.5\n").unwrap();
        assert_eq!(t.header, vec!["Sales"]);
        assert_eq!(t.numeric_matrix(), vec![vec![Some(10.0), Some(20.5)]]);
        assert!(parse_reply("Sales\nten\n").is_err());
    }
}

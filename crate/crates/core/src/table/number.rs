//! Numeric grammar for extracted cells.
//!
//! Accepted forms, after trimming:
//!
//! ```text
//! [currency] [sign] [currency] mantissa [exponent] [ws] [magnitude] [ws] [%]
//! ```
//!
//! `mantissa` is plain digits, digits grouped by commas (`1,234,567`), optionally followed
//! by a decimal part. Magnitude words are case-insensitive (`k`, `thousand`, `m`, `mn`,
//! `million`, `b`, `bn`, `billion`). The value is assembled as an exact decimal
//! (digit string × 10^exponent) and converted to `f64` once, so `"2.3 million"` is exactly
//! `2300000.0`.

use super::CellValue;

const CURRENCY: &[char] = &['$', '€', '£', '¥'];

/// Parses a cell. Never fails: text outside the grammar yields `numeric == None`.
pub fn parse_number(raw: &str) -> CellValue {
    match parse_numeric(raw) {
        Some(p) => CellValue {
            raw: raw.to_string(),
            numeric: Some(p.value),
            magnitude_applied: p.magnitude,
            unit_hint: p.unit_hint,
        },
        None => CellValue::text(raw),
    }
}

struct Parsed {
    value: f64,
    magnitude: Option<f64>,
    unit_hint: Option<String>,
}

fn is_space(c: char) -> bool {
    c.is_whitespace() || c == '\u{a0}' || c == '\u{202f}'
}

fn parse_numeric(raw: &str) -> Option<Parsed> {
    let s = raw.trim_matches(is_space);
    let chars: Vec<char> = s.chars().collect();
    let mut i = 0;
    let mut unit_hint = None;
    let mut negative = false;

    if i < chars.len() && CURRENCY.contains(&chars[i]) {
        unit_hint = Some(chars[i].to_string());
        i += 1;
    }
    if i < chars.len() && matches!(chars[i], '+' | '-' | '\u{2212}') {
        negative = chars[i] != '+';
        i += 1;
    }
    if unit_hint.is_none() && i < chars.len() && CURRENCY.contains(&chars[i]) {
        unit_hint = Some(chars[i].to_string());
        i += 1;
    }

    // Integer part, possibly comma-grouped.
    let int_start = i;
    while i < chars.len() && chars[i].is_ascii_digit() {
        i += 1;
    }
    let mut digits: String = chars[int_start..i].iter().collect();
    if i < chars.len() && chars[i] == ',' {
        // Leading group must be 1..=3 digits, every further group exactly 3.
        if digits.is_empty() || digits.len() > 3 {
            return None;
        }
        while i < chars.len() && chars[i] == ',' {
            let group: String = chars[i + 1..].iter().take_while(|c| c.is_ascii_digit()).collect();
            if group.len() != 3 {
                return None;
            }
            digits.push_str(&group);
            i += 4;
        }
        // A grouped number must end or continue with a decimal point.
        if i < chars.len() && chars[i].is_ascii_digit() {
            return None;
        }
    }

    let mut exponent: i64 = 0;
    if i < chars.len() && chars[i] == '.' {
        i += 1;
        let frac_start = i;
        while i < chars.len() && chars[i].is_ascii_digit() {
            i += 1;
        }
        let frac: String = chars[frac_start..i].iter().collect();
        digits.push_str(&frac);
        exponent -= frac.len() as i64;
    }
    if digits.is_empty() {
        return None;
    }

    // Scientific exponent.
    if i < chars.len() && matches!(chars[i], 'e' | 'E') {
        let mut j = i + 1;
        let mut exp_negative = false;
        if j < chars.len() && matches!(chars[j], '+' | '-' | '\u{2212}') {
            exp_negative = chars[j] != '+';
            j += 1;
        }
        let exp_start = j;
        while j < chars.len() && chars[j].is_ascii_digit() {
            j += 1;
        }
        if j > exp_start {
            let e: String = chars[exp_start..j].iter().collect();
            let e: i64 = e.parse().ok()?;
            exponent += if exp_negative { -e } else { e };
            i = j;
        }
        // "2e" without digits is left for the magnitude/suffix check, which rejects it.
    }

    while i < chars.len() && is_space(chars[i]) {
        i += 1;
    }

    let mut magnitude = None;
    let word_start = i;
    while i < chars.len() && chars[i].is_alphabetic() {
        i += 1;
    }
    if i > word_start {
        let word: String = chars[word_start..i].iter().collect::<String>().to_lowercase();
        let power = match word.as_str() {
            "k" | "thousand" => 3,
            "m" | "mn" | "million" => 6,
            "b" | "bn" | "billion" => 9,
            _ => return None,
        };
        exponent += power;
        magnitude = Some(10f64.powi(power as i32));
        while i < chars.len() && is_space(chars[i]) {
            i += 1;
        }
    }

    if i < chars.len() && chars[i] == '%' {
        if unit_hint.is_some() {
            return None;
        }
        unit_hint = Some("%".to_string());
        i += 1;
    }
    if i != chars.len() {
        return None;
    }

    let literal = format!("{}{}e{}", if negative { "-" } else { "" }, digits, exponent);
    let value: f64 = literal.parse().ok()?;
    if !value.is_finite() {
        return None;
    }
    Some(Parsed {
        value,
        magnitude,
        unit_hint,
    })
}

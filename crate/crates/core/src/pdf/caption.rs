//! Caption pattern and label normalization.

use std::sync::LazyLock;

use regex::Regex;

static CAPTION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^\s*fig(?:ure)?(?:\.\s*|\s+)([0-9]+|[ivxl]+)(?:[.:)]|\s|$)").expect("caption regex")
});

static ROMAN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?:xc|xl|l?x{0,3})(?:ix|iv|v?i{0,3})$").expect("roman regex"));

/// Value of a lowercase roman numeral below 90, if well formed.
pub fn roman_value(s: &str) -> Option<u32> {
    let s = s.to_ascii_lowercase();
    if s.is_empty() || !ROMAN.is_match(&s) {
        return None;
    }
    let val = |c| match c {
        'i' => 1,
        'v' => 5,
        'x' => 10,
        'l' => 50,
        _ => 0,
    };
    let digits: Vec<u32> = s.chars().map(val).collect();
    let mut total = 0;
    for (i, d) in digits.iter().enumerate() {
        if digits.get(i + 1).is_some_and(|n| n > d) {
            total -= *d as i64;
        } else {
            total += *d as i64;
        }
    }
    (total > 0).then_some(total as u32)
}

/// Normalized label ("Figure N") when `text` opens with a figure caption.
pub fn caption_label(text: &str) -> Option<String> {
    let caps = CAPTION.captures(text)?;
    let num = caps.get(1)?.as_str();
    let n: u64 = if num.bytes().all(|b| b.is_ascii_digit()) {
        num.parse().ok()?
    } else {
        roman_value(num)? as u64
    };
    Some(format!("Figure {n}"))
}

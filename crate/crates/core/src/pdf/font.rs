//! Just enough font handling to recover text and advance widths.

use std::collections::HashMap;

use super::document::Document;
use super::object::{Dict, Lexer, Object, Token};

/// Helvetica advance widths for codes 32..=126, in 1/1000 em.
const HELVETICA: [u16; 95] = [
    278, 278, 355, 556, 556, 889, 667, 191, 333, 333, 389, 584, 278, 333, 278, 278, // ' '..'/'
    556, 556, 556, 556, 556, 556, 556, 556, 556, 556, // digits
    278, 278, 584, 584, 584, 556, 1015, // ':'..'@'
    667, 667, 722, 722, 667, 611, 778, 722, 278, 500, 667, 556, 833, 722, 778, 667, 778, 722,
    667, 611, 722, 667, 944, 667, 667, 611, // A..Z
    278, 278, 278, 469, 556, 333, // '['..'`'
    556, 556, 500, 556, 556, 278, 556, 556, 222, 222, 500, 222, 833, 556, 556, 556, 556, 333,
    500, 278, 556, 500, 722, 500, 500, 500, // a..z
    334, 260, 334, 584, // '{'..'~'
];

/// WinAnsi codes 0x80..=0x9F.
const WIN_ANSI_HIGH: [char; 32] = [
    '€', '\u{fffd}', '‚', 'ƒ', '„', '…', '†', '‡', 'ˆ', '‰', 'Š', '‹', 'Œ', '\u{fffd}', 'Ž', '\u{fffd}',
    '\u{fffd}', '\u{2018}', '\u{2019}', '\u{201c}', '\u{201d}', '•', '–', '—', '˜', '™', 'š', '›', 'œ',
    '\u{fffd}', 'ž', 'Ÿ',
];

fn win_ansi(code: u8) -> char {
    match code {
        0x80..=0x9f => WIN_ANSI_HIGH[(code - 0x80) as usize],
        c => c as char,
    }
}

/// WinAnsi byte for a character, if it has one.
pub fn win_ansi_encode(c: char) -> Option<u8> {
    if (' '..='~').contains(&c) || ('\u{a0}'..='\u{ff}').contains(&c) {
        return Some(c as u8);
    }
    WIN_ANSI_HIGH
        .iter()
        .position(|h| *h == c && c != '\u{fffd}')
        .map(|i| 0x80 + i as u8)
}

fn standard(code: u8) -> char {
    match code {
        0x27 => '\u{2019}',
        0x60 => '\u{2018}',
        c if c < 0x80 => c as char,
        _ => '\u{fffd}',
    }
}

/// Unicode for common glyph names.
fn glyph_name_to_char(name: &str) -> Option<char> {
    if name.chars().count() == 1 {
        return name.chars().next();
    }
    if let Some(hex) = name.strip_prefix("uni").filter(|h| h.len() == 4) {
        return u32::from_str_radix(hex, 16).ok().and_then(char::from_u32);
    }
    const DIGITS: [&str; 10] = ["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine"];
    if let Some(d) = DIGITS.iter().position(|d| *d == name) {
        return Some((b'0' + d as u8) as char);
    }
    let c = match name {
        "space" | "nbspace" => ' ',
        "exclam" => '!',
        "quotedbl" => '"',
        "numbersign" => '#',
        "dollar" => '$',
        "percent" => '%',
        "ampersand" => '&',
        "quotesingle" => '\'',
        "quoteright" => '\u{2019}',
        "quoteleft" => '\u{2018}',
        "quotedblleft" => '\u{201c}',
        "quotedblright" => '\u{201d}',
        "parenleft" => '(',
        "parenright" => ')',
        "asterisk" => '*',
        "plus" => '+',
        "comma" => ',',
        "hyphen" | "minus" => '-',
        "period" => '.',
        "slash" => '/',
        "colon" => ':',
        "semicolon" => ';',
        "less" => '<',
        "equal" => '=',
        "greater" => '>',
        "question" => '?',
        "at" => '@',
        "bracketleft" => '[',
        "backslash" => '\\',
        "bracketright" => ']',
        "asciicircum" => '^',
        "underscore" => '_',
        "grave" => '`',
        "braceleft" => '{',
        "bar" => '|',
        "braceright" => '}',
        "asciitilde" => '~',
        "endash" => '–',
        "emdash" => '—',
        "bullet" => '•',
        "degree" => '°',
        "plusminus" => '±',
        "multiply" => '×',
        "mu" => 'µ',
        _ => return None,
    };
    Some(c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Fallback {
    Helvetica,
    Fixed,
}

#[derive(Debug, Clone)]
pub struct Font {
    two_byte: bool,
    to_unicode: HashMap<u32, String>,
    encoding: Vec<Option<String>>,
    widths: HashMap<u32, f64>,
    default_width: Option<f64>,
    fallback: Fallback,
    /// Glyph-space to text-space scale (0.001 except for Type3).
    scale: f64,
}

impl Default for Font {
    fn default() -> Self {
        Font {
            two_byte: false,
            to_unicode: HashMap::new(),
            encoding: (0..=255u8)
                .map(|c| (c >= 0x20 && win_ansi(c) != '\u{fffd}').then(|| win_ansi(c).to_string()))
                .collect(),
            widths: HashMap::new(),
            default_width: None,
            fallback: Fallback::Helvetica,
            scale: 0.001,
        }
    }
}

pub struct DecodedChar {
    pub code: u32,
    pub text: String,
    /// Advance in text-space units per unit font size.
    pub width: f64,
}

impl Font {
    pub fn load(doc: &Document, dict: &Dict) -> Font {
        let mut font = Font::default();
        let subtype = dict.get("Subtype").and_then(Object::as_name).unwrap_or("");
        let base = dict.get("BaseFont").and_then(Object::as_name).unwrap_or("");
        if base.contains("Courier") || base.contains("Mono") {
            font.fallback = Fallback::Fixed;
        }

        if let Some(Object::Stream(s)) = dict.get("ToUnicode").map(|o| doc.resolve(o)) {
            if let Ok(data) = doc.stream_data(&s) {
                font.to_unicode = parse_cmap(&data);
            }
        }

        if subtype == "Type0" {
            font.two_byte = true;
            let desc = dict
                .get("DescendantFonts")
                .map(|o| doc.resolve(o))
                .and_then(|o| o.as_array().and_then(|a| a.first().cloned()))
                .and_then(|o| doc.resolve(&o).as_dict().cloned())
                .unwrap_or_default();
            font.default_width = Some(desc.get("DW").and_then(|o| doc.resolve(o).as_f64()).unwrap_or(1000.0));
            if let Some(Object::Array(w)) = desc.get("W").map(|o| doc.resolve(o)) {
                let items: Vec<Object> = w.iter().map(|o| doc.resolve(o)).collect();
                let mut i = 0;
                while i < items.len() {
                    let Some(first) = items[i].as_i64() else { break };
                    match items.get(i + 1) {
                        Some(Object::Array(ws)) => {
                            for (k, wv) in ws.iter().enumerate() {
                                if let Some(v) = doc.resolve(wv).as_f64() {
                                    font.widths.insert(first as u32 + k as u32, v);
                                }
                            }
                            i += 2;
                        }
                        Some(last) => {
                            let (Some(last), Some(v)) = (last.as_i64(), items.get(i + 2).and_then(Object::as_f64)) else {
                                break;
                            };
                            for c in first..=last.min(first + 65535) {
                                font.widths.insert(c as u32, v);
                            }
                            i += 3;
                        }
                        None => break,
                    }
                }
            }
            return font;
        }

        if subtype == "Type3" {
            if let Some(Object::Array(m)) = dict.get("FontMatrix").map(|o| doc.resolve(o)) {
                if let Some(a) = m.first().and_then(Object::as_f64) {
                    font.scale = a.abs();
                }
            }
        }

        // Simple font: base encoding, then differences.
        let enc = dict.get("Encoding").map(|o| doc.resolve(o));
        let base_enc = match &enc {
            Some(Object::Name(n)) => n.clone(),
            Some(Object::Dict(d)) => d
                .get("BaseEncoding")
                .and_then(Object::as_name)
                .unwrap_or("StandardEncoding")
                .to_string(),
            _ => "WinAnsiEncoding".to_string(),
        };
        for code in 0..=255u8 {
            let c = match base_enc.as_str() {
                "StandardEncoding" => standard(code),
                _ => win_ansi(code),
            };
            if c != '\u{fffd}' && code >= 0x20 {
                font.encoding[code as usize] = Some(c.to_string());
            }
        }
        if let Some(Object::Dict(d)) = &enc {
            if let Some(Object::Array(diffs)) = d.get("Differences").map(|o| doc.resolve(o)) {
                let mut code = 0i64;
                for item in diffs {
                    match item {
                        Object::Int(c) => code = c,
                        Object::Name(n) => {
                            if (0..256).contains(&code) {
                                font.encoding[code as usize] = glyph_name_to_char(&n).map(|c| c.to_string());
                            }
                            code += 1;
                        }
                        _ => {}
                    }
                }
            }
        }

        let first = dict.get("FirstChar").and_then(|o| doc.resolve(o).as_i64()).unwrap_or(0);
        if let Some(Object::Array(ws)) = dict.get("Widths").map(|o| doc.resolve(o)) {
            for (k, w) in ws.iter().enumerate() {
                if let Some(v) = doc.resolve(w).as_f64() {
                    font.widths.insert((first + k as i64) as u32, v);
                }
            }
            let missing = dict
                .get("FontDescriptor")
                .and_then(|o| doc.resolve(o).as_dict().cloned())
                .and_then(|fd| fd.get("MissingWidth").and_then(Object::as_f64));
            font.default_width = missing;
        }
        font
    }

    fn fallback_width(&self, code: u32, text: &str) -> f64 {
        if let Some(w) = self.default_width {
            return w;
        }
        match self.fallback {
            Fallback::Fixed => 600.0,
            Fallback::Helvetica => {
                let c = text.chars().next().map(|c| c as u32).unwrap_or(code);
                if (32..=126).contains(&c) {
                    HELVETICA[(c - 32) as usize] as f64
                } else {
                    556.0
                }
            }
        }
    }

    pub fn decode(&self, bytes: &[u8]) -> Vec<DecodedChar> {
        let codes: Vec<u32> = if self.two_byte {
            bytes
                .chunks(2)
                .map(|c| if c.len() == 2 { (c[0] as u32) << 8 | c[1] as u32 } else { c[0] as u32 })
                .collect()
        } else {
            bytes.iter().map(|b| *b as u32).collect()
        };
        codes
            .into_iter()
            .map(|code| {
                let text = self
                    .to_unicode
                    .get(&code)
                    .cloned()
                    .or_else(|| {
                        if self.two_byte {
                            None
                        } else {
                            self.encoding.get(code as usize).cloned().flatten()
                        }
                    })
                    .unwrap_or_default();
                let w = self
                    .widths
                    .get(&code)
                    .copied()
                    .unwrap_or_else(|| self.fallback_width(code, &text));
                DecodedChar {
                    code,
                    text,
                    width: w * self.scale,
                }
            })
            .collect()
    }

    /// Whether a code is the single-byte space, which receives word spacing.
    pub fn is_space(&self, code: u32) -> bool {
        !self.two_byte && code == 32
    }
}

fn utf16_bytes(b: &[u8]) -> String {
    let units: Vec<u16> = b
        .chunks(2)
        .map(|c| if c.len() == 2 { (c[0] as u16) << 8 | c[1] as u16 } else { c[0] as u16 })
        .collect();
    String::from_utf16_lossy(&units)
}

fn code_of(b: &[u8]) -> u32 {
    b.iter().fold(0u32, |acc, x| (acc << 8) | *x as u32)
}

/// Parses the `bfchar` and `bfrange` sections of a ToUnicode CMap.
pub fn parse_cmap(data: &[u8]) -> HashMap<u32, String> {
    let mut map = HashMap::new();
    let mut lx = Lexer::new(data);
    let mut tokens = Vec::new();
    while let Some(t) = lx.next_token() {
        tokens.push(t);
    }
    let mut i = 0;
    while i < tokens.len() {
        match &tokens[i] {
            Token::Keyword(k) if k == b"beginbfchar" => {
                i += 1;
                while i + 1 < tokens.len() {
                    match (&tokens[i], &tokens[i + 1]) {
                        (Token::Obj(Object::Str(src)), Token::Obj(Object::Str(dst))) => {
                            map.insert(code_of(src), utf16_bytes(dst));
                            i += 2;
                        }
                        _ => break,
                    }
                }
            }
            Token::Keyword(k) if k == b"beginbfrange" => {
                i += 1;
                while i + 2 < tokens.len() {
                    let (Token::Obj(Object::Str(lo)), Token::Obj(Object::Str(hi))) = (&tokens[i], &tokens[i + 1]) else {
                        break;
                    };
                    let (lo, hi) = (code_of(lo), code_of(hi));
                    let hi = hi.min(lo + 0xffff);
                    match &tokens[i + 2] {
                        Token::Obj(Object::Str(dst)) => {
                            let base = utf16_bytes(dst);
                            let mut chars: Vec<char> = base.chars().collect();
                            for code in lo..=hi {
                                map.insert(code, chars.iter().collect());
                                if let Some(last) = chars.last_mut() {
                                    *last = char::from_u32(*last as u32 + 1).unwrap_or(*last);
                                }
                            }
                            i += 3;
                        }
                        Token::ArrayStart => {
                            let mut j = i + 3;
                            let mut code = lo;
                            while j < tokens.len() {
                                match &tokens[j] {
                                    Token::Obj(Object::Str(dst)) => {
                                        if code <= hi {
                                            map.insert(code, utf16_bytes(dst));
                                        }
                                        code += 1;
                                    }
                                    Token::ArrayEnd => break,
                                    _ => {}
                                }
                                j += 1;
                            }
                            i = j + 1;
                        }
                        _ => break,
                    }
                }
            }
            _ => i += 1,
        }
    }
    map
}

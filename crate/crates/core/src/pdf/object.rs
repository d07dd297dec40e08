//! PDF object model and the tokenizer/parser shared by file and content-stream parsing.

use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObjRef {
    pub num: u32,
    pub gen: u16,
}

pub type Dict = BTreeMap<String, Object>;

#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    pub dict: Dict,
    /// Raw (still encoded) bytes.
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Object {
    Null,
    Bool(bool),
    Int(i64),
    Real(f64),
    Name(String),
    Str(Vec<u8>),
    Array(Vec<Object>),
    Dict(Dict),
    Stream(Stream),
    Ref(ObjRef),
}

impl Object {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Object::Int(i) => Some(*i as f64),
            Object::Real(r) => Some(*r),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Object::Int(i) => Some(*i),
            Object::Real(r) => Some(*r as i64),
            _ => None,
        }
    }

    pub fn as_name(&self) -> Option<&str> {
        match self {
            Object::Name(n) => Some(n),
            _ => None,
        }
    }

    pub fn as_array(&self) -> Option<&[Object]> {
        match self {
            Object::Array(a) => Some(a),
            _ => None,
        }
    }

    pub fn as_dict(&self) -> Option<&Dict> {
        match self {
            Object::Dict(d) => Some(d),
            Object::Stream(s) => Some(&s.dict),
            _ => None,
        }
    }

    pub fn as_str_bytes(&self) -> Option<&[u8]> {
        match self {
            Object::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_ref(&self) -> Option<ObjRef> {
        match self {
            Object::Ref(r) => Some(*r),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Token {
    Obj(Object),
    ArrayStart,
    ArrayEnd,
    DictStart,
    DictEnd,
    Keyword(Vec<u8>),
}

pub fn is_whitespace(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r' | b'\x0c' | b'\0')
}

pub fn is_delimiter(b: u8) -> bool {
    matches!(b, b'(' | b')' | b'<' | b'>' | b'[' | b']' | b'{' | b'}' | b'/' | b'%')
}

fn is_regular(b: u8) -> bool {
    !is_whitespace(b) && !is_delimiter(b)
}

#[derive(Debug, Clone)]
pub struct Lexer<'a> {
    pub data: &'a [u8],
    pub pos: usize,
}

impl<'a> Lexer<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Lexer { data, pos: 0 }
    }

    pub fn at(data: &'a [u8], pos: usize) -> Self {
        Lexer { data, pos }
    }

    pub fn skip_whitespace(&mut self) {
        while self.pos < self.data.len() {
            let b = self.data[self.pos];
            if is_whitespace(b) {
                self.pos += 1;
            } else if b == b'%' {
                while self.pos < self.data.len() && !matches!(self.data[self.pos], b'\n' | b'\r') {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    pub fn peek_byte(&self) -> Option<u8> {
        self.data.get(self.pos).copied()
    }

    pub fn next_token(&mut self) -> Option<Token> {
        self.skip_whitespace();
        let b = *self.data.get(self.pos)?;
        match b {
            b'[' => {
                self.pos += 1;
                Some(Token::ArrayStart)
            }
            b']' => {
                self.pos += 1;
                Some(Token::ArrayEnd)
            }
            b'<' if self.data.get(self.pos + 1) == Some(&b'<') => {
                self.pos += 2;
                Some(Token::DictStart)
            }
            b'>' if self.data.get(self.pos + 1) == Some(&b'>') => {
                self.pos += 2;
                Some(Token::DictEnd)
            }
            b'<' => Some(Token::Obj(Object::Str(self.hex_string()))),
            b'(' => Some(Token::Obj(Object::Str(self.literal_string()))),
            b'/' => Some(Token::Obj(Object::Name(self.name()))),
            b'{' | b'}' | b')' | b'>' => {
                self.pos += 1;
                Some(Token::Keyword(vec![b]))
            }
            _ => {
                let start = self.pos;
                while self.pos < self.data.len() && is_regular(self.data[self.pos]) {
                    self.pos += 1;
                }
                let word = &self.data[start..self.pos];
                Some(classify_word(word))
            }
        }
    }

    fn name(&mut self) -> String {
        self.pos += 1;
        let mut out = Vec::new();
        while self.pos < self.data.len() && is_regular(self.data[self.pos]) {
            let b = self.data[self.pos];
            if b == b'#' {
                if let Some(v) = hex_pair(self.data.get(self.pos + 1).copied(), self.data.get(self.pos + 2).copied()) {
                    out.push(v);
                    self.pos += 3;
                    continue;
                }
            }
            out.push(b);
            self.pos += 1;
        }
        String::from_utf8_lossy(&out).into_owned()
    }

    fn hex_string(&mut self) -> Vec<u8> {
        self.pos += 1;
        let mut nibbles = Vec::new();
        while self.pos < self.data.len() {
            let b = self.data[self.pos];
            self.pos += 1;
            if b == b'>' {
                break;
            }
            if let Some(v) = hex_val(b) {
                nibbles.push(v);
            }
        }
        if nibbles.len() % 2 == 1 {
            nibbles.push(0);
        }
        nibbles.chunks(2).map(|p| (p[0] << 4) | p[1]).collect()
    }

    fn literal_string(&mut self) -> Vec<u8> {
        self.pos += 1;
        let mut out = Vec::new();
        let mut depth = 1;
        while self.pos < self.data.len() {
            let b = self.data[self.pos];
            self.pos += 1;
            match b {
                b'(' => {
                    depth += 1;
                    out.push(b);
                }
                b')' => {
                    depth -= 1;
                    if depth == 0 {
                        break;
                    }
                    out.push(b);
                }
                b'\\' => {
                    let Some(&e) = self.data.get(self.pos) else { break };
                    self.pos += 1;
                    match e {
                        b'n' => out.push(b'\n'),
                        b'r' => out.push(b'\r'),
                        b't' => out.push(b'\t'),
                        b'b' => out.push(8),
                        b'f' => out.push(12),
                        b'\r' => {
                            if self.data.get(self.pos) == Some(&b'\n') {
                                self.pos += 1;
                            }
                        }
                        b'\n' => {}
                        b'0'..=b'7' => {
                            let mut v = (e - b'0') as u32;
                            for _ in 0..2 {
                                match self.data.get(self.pos) {
                                    Some(&d @ b'0'..=b'7') => {
                                        v = v * 8 + (d - b'0') as u32;
                                        self.pos += 1;
                                    }
                                    _ => break,
                                }
                            }
                            out.push(v as u8);
                        }
                        other => out.push(other),
                    }
                }
                b'\r' => {
                    // Bare CR and CRLF both read as LF.
                    if self.data.get(self.pos) == Some(&b'\n') {
                        self.pos += 1;
                    }
                    out.push(b'\n');
                }
                _ => out.push(b),
            }
        }
        out
    }
}

fn hex_val(b: u8) -> Option<u8> {
    match b {
        b'0'..=b'9' => Some(b - b'0'),
        b'a'..=b'f' => Some(b - b'a' + 10),
        b'A'..=b'F' => Some(b - b'A' + 10),
        _ => None,
    }
}

fn hex_pair(a: Option<u8>, b: Option<u8>) -> Option<u8> {
    Some((hex_val(a?)? << 4) | hex_val(b?)?)
}

fn classify_word(word: &[u8]) -> Token {
    match word {
        b"true" => return Token::Obj(Object::Bool(true)),
        b"false" => return Token::Obj(Object::Bool(false)),
        b"null" => return Token::Obj(Object::Null),
        _ => {}
    }
    if let Some(n) = parse_number(word) {
        return Token::Obj(n);
    }
    Token::Keyword(word.to_vec())
}

fn parse_number(word: &[u8]) -> Option<Object> {
    let first = *word.first()?;
    if !(first.is_ascii_digit() || matches!(first, b'+' | b'-' | b'.')) {
        return None;
    }
    let body = match first {
        b'+' | b'-' => &word[1..],
        _ => word,
    };
    if body.is_empty() || !body.iter().all(|b| b.is_ascii_digit() || *b == b'.') {
        return None;
    }
    let text = std::str::from_utf8(word).ok()?;
    if body.contains(&b'.') {
        // Tolerate malformed reals such as "1.2.3" or "-.": read the longest valid prefix.
        let dots = body.iter().filter(|b| **b == b'.').count();
        if dots > 1 {
            let cut = text.rfind('.').unwrap();
            return text[..cut].parse::<f64>().ok().map(Object::Real).or(Some(Object::Real(0.0)));
        }
        if body == b"." {
            return Some(Object::Real(0.0));
        }
        text.parse::<f64>().ok().map(Object::Real)
    } else {
        match text.parse::<i64>() {
            Ok(i) => Some(Object::Int(i)),
            Err(_) => text.parse::<f64>().ok().map(Object::Real),
        }
    }
}

/// Parses objects from tokens. `n g R` references are recognised when `allow_refs` holds.
pub struct Parser<'a> {
    pub lexer: Lexer<'a>,
    lookahead: Vec<Token>,
    allow_refs: bool,
}

impl<'a> Parser<'a> {
    pub fn new(data: &'a [u8], pos: usize, allow_refs: bool) -> Self {
        Parser {
            lexer: Lexer::at(data, pos),
            lookahead: Vec::new(),
            allow_refs,
        }
    }

    pub fn next_token(&mut self) -> Option<Token> {
        self.lookahead.pop().or_else(|| self.lexer.next_token())
    }

    pub fn push_back(&mut self, t: Token) {
        self.lookahead.push(t);
    }

    /// Current byte position, valid only when nothing is pushed back.
    pub fn pos(&self) -> usize {
        self.lexer.pos
    }

    pub fn parse_object(&mut self) -> Option<Object> {
        let tok = self.next_token()?;
        self.object_from(tok)
    }

    pub fn object_from(&mut self, tok: Token) -> Option<Object> {
        match tok {
            Token::Obj(Object::Int(n)) if self.allow_refs && n >= 0 => {
                // Possible "n g R".
                let t2 = self.next_token();
                if let Some(Token::Obj(Object::Int(g))) = t2 {
                    let t3 = self.next_token();
                    if let Some(Token::Keyword(ref k)) = t3 {
                        if k == b"R" && g >= 0 {
                            return Some(Object::Ref(ObjRef {
                                num: n as u32,
                                gen: g as u16,
                            }));
                        }
                    }
                    if let Some(t3) = t3 {
                        self.push_back(t3);
                    }
                    self.push_back(Token::Obj(Object::Int(g)));
                } else if let Some(t2) = t2 {
                    self.push_back(t2);
                }
                Some(Object::Int(n))
            }
            Token::Obj(o) => Some(o),
            Token::ArrayStart => {
                let mut items = Vec::new();
                loop {
                    match self.next_token()? {
                        Token::ArrayEnd => break,
                        Token::DictEnd => continue,
                        Token::Keyword(_) => continue,
                        t => {
                            if let Some(o) = self.object_from(t) {
                                items.push(o);
                            }
                        }
                    }
                }
                Some(Object::Array(items))
            }
            Token::DictStart => {
                let mut dict = Dict::new();
                loop {
                    match self.next_token()? {
                        Token::DictEnd => break,
                        Token::Obj(Object::Name(key)) => {
                            let tok = self.next_token()?;
                            if tok == Token::DictEnd {
                                dict.insert(key, Object::Null);
                                break;
                            }
                            let value = self.object_from(tok).unwrap_or(Object::Null);
                            dict.insert(key, value);
                        }
                        // Skip junk between entries.
                        _ => continue,
                    }
                }
                Some(Object::Dict(dict))
            }
            Token::ArrayEnd | Token::DictEnd => None,
            Token::Keyword(_) => None,
        }
    }
}

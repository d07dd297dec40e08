//! Cross-reference handling, object resolution and the page tree.

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex};

use super::filters::decode_stream;
use super::object::{Dict, Lexer, ObjRef, Object, Parser, Stream, Token};
use super::PdfError;

#[derive(Debug, Clone, Copy)]
enum XrefEntry {
    Offset(usize),
    Compressed { stream: u32 },
}

#[derive(Debug, Clone)]
pub struct PageInfo {
    pub dict: Dict,
    pub resources: Dict,
    /// Visible box in default user space: `[x0, y0, x1, y1]`, y up.
    pub bbox: [f64; 4],
    /// Clockwise display rotation in degrees: 0, 90, 180 or 270.
    pub rotate: i64,
}

impl PageInfo {
    /// Displayed width and height in points.
    pub fn size(&self) -> (f64, f64) {
        let w = self.bbox[2] - self.bbox[0];
        let h = self.bbox[3] - self.bbox[1];
        if self.rotate % 180 == 0 {
            (w, h)
        } else {
            (h, w)
        }
    }

    /// Maps default user space onto top-left-origin page coordinates, as `[a b c d e f]`.
    pub fn page_matrix(&self) -> [f64; 6] {
        let [x0, y0, x1, y1] = self.bbox;
        match self.rotate {
            90 => [0.0, 1.0, 1.0, 0.0, -y0, -x0],
            180 => [-1.0, 0.0, 0.0, 1.0, x1, -y0],
            270 => [0.0, -1.0, -1.0, 0.0, y1, x1],
            _ => [1.0, 0.0, 0.0, -1.0, -x0, y1],
        }
    }
}

/// A parsed PDF. Immutable after load; object-stream decoding is cached behind a mutex so
/// the document can be shared across threads.
pub struct Document {
    data: Vec<u8>,
    xref: HashMap<u32, XrefEntry>,
    trailer: Dict,
    objstm_cache: Mutex<HashMap<u32, Arc<HashMap<u32, Object>>>>,
    pages: Vec<PageInfo>,
}

impl std::fmt::Debug for Document {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Document")
            .field("bytes", &self.data.len())
            .field("objects", &self.xref.len())
            .field("pages", &self.pages.len())
            .finish()
    }
}

fn find_last(hay: &[u8], needle: &[u8]) -> Option<usize> {
    if hay.len() < needle.len() {
        return None;
    }
    (0..=hay.len() - needle.len()).rev().find(|&i| &hay[i..i + needle.len()] == needle)
}

fn find_from(hay: &[u8], needle: &[u8], start: usize) -> Option<usize> {
    if start >= hay.len() || hay.len() - start < needle.len() {
        return None;
    }
    hay[start..]
        .windows(needle.len())
        .position(|w| w == needle)
        .map(|p| p + start)
}

impl Document {
    pub fn load(data: Vec<u8>) -> Result<Document, PdfError> {
        let head = &data[..data.len().min(1024)];
        if find_from(head, b"%PDF-", 0).is_none() {
            return Err(PdfError::MalformedPdf("missing %PDF header".into()));
        }
        let mut doc = Document {
            data,
            xref: HashMap::new(),
            trailer: Dict::new(),
            objstm_cache: Mutex::new(HashMap::new()),
            pages: Vec::new(),
        };
        let parsed = doc.read_xref_chain();
        if parsed.is_err() || !doc.trailer.contains_key("Root") || doc.xref.is_empty() {
            doc.reconstruct();
        }
        if doc.trailer.contains_key("Encrypt") {
            return Err(PdfError::EncryptedPdf);
        }
        let root = doc
            .trailer
            .get("Root")
            .cloned()
            .ok_or_else(|| PdfError::MalformedPdf("no document catalog".into()))?;
        let catalog = doc
            .resolve(&root)
            .as_dict()
            .cloned()
            .ok_or_else(|| PdfError::MalformedPdf("catalog is not a dictionary".into()))?;
        let mut pages = Vec::new();
        if let Some(tree) = catalog.get("Pages") {
            let mut visited = HashSet::new();
            doc.collect_pages(tree, &Inherited::default(), &mut pages, &mut visited, 0);
        }
        doc.pages = pages;
        Ok(doc)
    }

    pub fn pages(&self) -> &[PageInfo] {
        &self.pages
    }

    fn read_xref_chain(&mut self) -> Result<(), PdfError> {
        let tail_start = self.data.len().saturating_sub(2048);
        let sx = find_last(&self.data[tail_start..], b"startxref")
            .map(|p| p + tail_start)
            .ok_or_else(|| PdfError::MalformedPdf("no startxref".into()))?;
        let mut lx = Lexer::at(&self.data, sx + 9);
        let mut offset = match lx.next_token() {
            Some(Token::Obj(Object::Int(n))) if n >= 0 => n as usize,
            _ => return Err(PdfError::MalformedPdf("bad startxref".into())),
        };
        let mut seen = HashSet::new();
        let mut first = true;
        while seen.insert(offset) {
            let trailer = self.read_xref_section(offset)?;
            if first {
                self.trailer = trailer.clone();
                first = false;
            } else {
                for (k, v) in &trailer {
                    self.trailer.entry(k.clone()).or_insert_with(|| v.clone());
                }
            }
            if let Some(stm) = trailer.get("XRefStm").and_then(Object::as_i64) {
                if seen.insert(stm as usize) {
                    let _ = self.read_xref_section(stm as usize);
                }
            }
            match trailer.get("Prev").and_then(Object::as_i64) {
                Some(p) if p >= 0 => offset = p as usize,
                _ => break,
            }
        }
        Ok(())
    }

    fn insert_entry(&mut self, num: u32, entry: XrefEntry) {
        self.xref.entry(num).or_insert(entry);
    }

    fn read_xref_section(&mut self, offset: usize) -> Result<Dict, PdfError> {
        if offset >= self.data.len() {
            return Err(PdfError::MalformedPdf("xref offset out of range".into()));
        }
        let mut lx = Lexer::at(&self.data, offset);
        lx.skip_whitespace();
        if self.data[lx.pos..].starts_with(b"xref") {
            lx.pos += 4;
            return self.read_xref_table(lx.pos);
        }
        // Cross-reference stream.
        let (_, obj) = self.parse_indirect_at(offset)?;
        let Object::Stream(stream) = obj else {
            return Err(PdfError::MalformedPdf("xref stream expected".into()));
        };
        self.read_xref_stream(&stream)?;
        Ok(stream.dict)
    }

    fn read_xref_table(&mut self, pos: usize) -> Result<Dict, PdfError> {
        let mut parser = Parser::new(&self.data, pos, false);
        let mut entries = Vec::new();
        loop {
            match parser.next_token() {
                Some(Token::Obj(Object::Int(start))) => {
                    let count = match parser.next_token() {
                        Some(Token::Obj(Object::Int(c))) => c,
                        _ => return Err(PdfError::MalformedPdf("bad xref subsection".into())),
                    };
                    for i in 0..count.max(0) {
                        let off = parser.next_token();
                        let _gen = parser.next_token();
                        let kind = parser.next_token();
                        if let (Some(Token::Obj(Object::Int(off))), Some(Token::Keyword(k))) = (off, kind) {
                            if k == b"n" && off > 0 {
                                entries.push(((start + i) as u32, off as usize));
                            }
                        }
                    }
                }
                Some(Token::Keyword(k)) if k == b"trailer" => break,
                _ => return Err(PdfError::MalformedPdf("bad xref table".into())),
            }
        }
        let trailer = match Parser::new(&self.data, parser.pos(), true).parse_object() {
            Some(Object::Dict(d)) => d,
            _ => return Err(PdfError::MalformedPdf("bad trailer".into())),
        };
        for (num, off) in entries {
            self.insert_entry(num, XrefEntry::Offset(off));
        }
        Ok(trailer)
    }

    fn read_xref_stream(&mut self, stream: &Stream) -> Result<(), PdfError> {
        let data = decode_stream(&stream.dict, &stream.data)?.data;
        let widths: Vec<usize> = stream
            .dict
            .get("W")
            .and_then(Object::as_array)
            .ok_or_else(|| PdfError::MalformedPdf("xref stream without W".into()))?
            .iter()
            .map(|o| o.as_i64().unwrap_or(0).max(0) as usize)
            .collect();
        if widths.len() < 3 {
            return Err(PdfError::MalformedPdf("xref stream W too short".into()));
        }
        let size = stream.dict.get("Size").and_then(Object::as_i64).unwrap_or(0);
        let index: Vec<i64> = match stream.dict.get("Index").and_then(Object::as_array) {
            Some(a) => a.iter().filter_map(Object::as_i64).collect(),
            None => vec![0, size],
        };
        let row = widths[0] + widths[1] + widths[2];
        if row == 0 {
            return Ok(());
        }
        let field = |bytes: &[u8]| bytes.iter().fold(0usize, |acc, b| (acc << 8) | *b as usize);
        let mut rows = data.chunks_exact(row);
        for pair in index.chunks(2) {
            let (start, count) = (pair[0], pair.get(1).copied().unwrap_or(0));
            for i in 0..count {
                let Some(r) = rows.next() else { return Ok(()) };
                let kind = if widths[0] == 0 { 1 } else { field(&r[..widths[0]]) };
                let f2 = field(&r[widths[0]..widths[0] + widths[1]]);
                let num = (start + i) as u32;
                match kind {
                    1 => self.insert_entry(num, XrefEntry::Offset(f2)),
                    2 => self.insert_entry(
                        num,
                        XrefEntry::Compressed { stream: f2 as u32 },
                    ),
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// Rebuilds the object table by scanning for `n g obj` headers.
    fn reconstruct(&mut self) {
        self.xref.clear();
        let data = &self.data;
        let mut found: Vec<(u32, usize)> = Vec::new();
        let mut i = 0;
        while let Some(p) = find_from(data, b"obj", i) {
            i = p + 3;
            if data.get(p + 3).is_some_and(|b| !super::object::is_whitespace(*b) && !super::object::is_delimiter(*b)) {
                continue;
            }
            // Walk back over "<num> <gen> ".
            let mut j = p;
            while j > 0 && super::object::is_whitespace(data[j - 1]) {
                j -= 1;
            }
            let gen_end = j;
            while j > 0 && data[j - 1].is_ascii_digit() {
                j -= 1;
            }
            if j == gen_end {
                continue;
            }
            while j > 0 && super::object::is_whitespace(data[j - 1]) {
                j -= 1;
            }
            let num_end = j;
            while j > 0 && data[j - 1].is_ascii_digit() {
                j -= 1;
            }
            if j == num_end {
                continue;
            }
            if let Ok(num) = std::str::from_utf8(&data[j..num_end]).unwrap_or("x").parse::<u32>() {
                found.push((num, j));
            }
        }
        for (num, off) in found {
            // Later definitions win.
            self.xref.insert(num, XrefEntry::Offset(off));
        }

        // Objects inside object streams.
        let stream_nums: Vec<u32> = self.xref.keys().copied().collect();
        for num in stream_nums {
            if let Ok(Object::Stream(s)) = self.load_object(num) {
                let ty = s.dict.get("Type").and_then(Object::as_name);
                if ty == Some("ObjStm") {
                    if let Ok(objs) = self.object_stream(num) {
                        for n in objs.keys() {
                            self.xref.entry(*n).or_insert(XrefEntry::Compressed { stream: num });
                        }
                    }
                } else if ty == Some("XRef") {
                    for (k, v) in &s.dict {
                        self.trailer.entry(k.clone()).or_insert_with(|| v.clone());
                    }
                }
            }
        }

        if let Some(p) = find_last(&self.data, b"trailer") {
            if let Some(Object::Dict(d)) = Parser::new(&self.data, p + 7, true).parse_object() {
                for (k, v) in d {
                    self.trailer.insert(k, v);
                }
            }
        }
        if !self.trailer.contains_key("Root") {
            let nums: Vec<u32> = self.xref.keys().copied().collect();
            for num in nums {
                let obj = self.get(num);
                if obj.as_dict().and_then(|d| d.get("Type")).and_then(Object::as_name) == Some("Catalog") {
                    self.trailer.insert("Root".into(), Object::Ref(ObjRef { num, gen: 0 }));
                    break;
                }
            }
        }
    }

    fn parse_indirect_at(&self, offset: usize) -> Result<(u32, Object), PdfError> {
        let mut parser = Parser::new(&self.data, offset, false);
        let num = match parser.next_token() {
            Some(Token::Obj(Object::Int(n))) => n as u32,
            _ => return Err(PdfError::MalformedPdf(format!("no object at offset {offset}"))),
        };
        let _gen = parser.next_token();
        match parser.next_token() {
            Some(Token::Keyword(k)) if k == b"obj" => {}
            _ => return Err(PdfError::MalformedPdf(format!("no object header at offset {offset}"))),
        }
        let mut parser = Parser::new(&self.data, parser.pos(), true);
        let obj = parser.parse_object().unwrap_or(Object::Null);
        let after = parser.pos();
        if let Object::Dict(dict) = &obj {
            let mut lx = Lexer::at(&self.data, after);
            lx.skip_whitespace();
            if self.data[lx.pos..].starts_with(b"stream") {
                let mut start = lx.pos + 6;
                if self.data.get(start) == Some(&b'\r') {
                    start += 1;
                }
                if self.data.get(start) == Some(&b'\n') {
                    start += 1;
                }
                let data = self.stream_body(dict, start);
                return Ok((
                    num,
                    Object::Stream(Stream {
                        dict: dict.clone(),
                        data,
                    }),
                ));
            }
        }
        Ok((num, obj))
    }

    fn stream_body(&self, dict: &Dict, start: usize) -> Vec<u8> {
        let declared = match dict.get("Length") {
            Some(Object::Int(n)) => Some(*n as usize),
            Some(Object::Ref(r)) => self.get(r.num).as_i64().map(|n| n as usize),
            _ => None,
        };
        if let Some(len) = declared {
            let end = start.saturating_add(len);
            if end <= self.data.len() {
                let mut lx = Lexer::at(&self.data, end);
                lx.skip_whitespace();
                if self.data[lx.pos..].starts_with(b"endstream") {
                    return self.data[start..end].to_vec();
                }
            }
        }
        let end = find_from(&self.data, b"endstream", start).unwrap_or(self.data.len());
        let mut e = end;
        // Drop the EOL that precedes the keyword.
        if e > start && self.data[e - 1] == b'\n' {
            e -= 1;
        }
        if e > start && self.data[e - 1] == b'\r' {
            e -= 1;
        }
        self.data[start..e].to_vec()
    }

    fn object_stream(&self, num: u32) -> Result<Arc<HashMap<u32, Object>>, PdfError> {
        if let Some(c) = self.objstm_cache.lock().expect("cache lock").get(&num) {
            return Ok(c.clone());
        }
        let Object::Stream(s) = self.load_object(num)? else {
            return Err(PdfError::MalformedPdf("object stream expected".into()));
        };
        let data = decode_stream(&s.dict, &s.data)?.data;
        let n = s.dict.get("N").and_then(Object::as_i64).unwrap_or(0).max(0) as usize;
        let first = s.dict.get("First").and_then(Object::as_i64).unwrap_or(0).max(0) as usize;
        let mut header = Parser::new(&data, 0, false);
        let mut offsets = Vec::with_capacity(n);
        for _ in 0..n {
            match (header.next_token(), header.next_token()) {
                (Some(Token::Obj(Object::Int(o))), Some(Token::Obj(Object::Int(off)))) => {
                    offsets.push((o as u32, off.max(0) as usize))
                }
                _ => break,
            }
        }
        // Keyed map preserves every object; insertion order is not needed by callers.
        let mut objs = HashMap::new();
        for (o, off) in offsets {
            let mut p = Parser::new(&data, first + off, true);
            if let Some(obj) = p.parse_object() {
                objs.insert(o, obj);
            }
        }
        let arc = Arc::new(objs);
        self.objstm_cache.lock().expect("cache lock").insert(num, arc.clone());
        Ok(arc)
    }

    fn load_object(&self, num: u32) -> Result<Object, PdfError> {
        match self.xref.get(&num) {
            Some(XrefEntry::Offset(off)) => {
                let (found, obj) = self.parse_indirect_at(*off)?;
                if found != num {
                    return Err(PdfError::MalformedPdf(format!("xref points object {num} at {found}")));
                }
                Ok(obj)
            }
            Some(XrefEntry::Compressed { stream, .. }) => {
                let stream = *stream;
                if stream == num {
                    return Ok(Object::Null);
                }
                Ok(self.object_stream(stream)?.get(&num).cloned().unwrap_or(Object::Null))
            }
            None => Ok(Object::Null),
        }
    }

    /// Object by number; missing or broken objects read as null.
    pub fn get(&self, num: u32) -> Object {
        self.load_object(num).unwrap_or(Object::Null)
    }

    /// Follows references until a direct object is reached.
    pub fn resolve(&self, obj: &Object) -> Object {
        let mut cur = obj.clone();
        for _ in 0..32 {
            match cur {
                Object::Ref(r) => cur = self.get(r.num),
                other => return other,
            }
        }
        Object::Null
    }

    pub fn resolve_dict(&self, obj: Option<&Object>) -> Option<Dict> {
        obj.map(|o| self.resolve(o)).and_then(|o| o.as_dict().cloned())
    }

    /// Decoded bytes of a stream object (non-image filters only).
    pub fn stream_data(&self, stream: &Stream) -> Result<Vec<u8>, PdfError> {
        Ok(decode_stream(&stream.dict, &stream.data)?.data)
    }

    /// Concatenated content streams of a page.
    pub fn page_content(&self, page: &PageInfo) -> Result<Vec<u8>, PdfError> {
        let mut out = Vec::new();
        let contents = page.dict.get("Contents").map(|c| self.resolve(c));
        let parts: Vec<Object> = match contents {
            Some(Object::Array(a)) => a.iter().map(|o| self.resolve(o)).collect(),
            Some(o) => vec![o],
            None => Vec::new(),
        };
        for part in parts {
            if let Object::Stream(s) = part {
                out.extend_from_slice(&self.stream_data(&s)?);
                out.push(b'\n');
            }
        }
        Ok(out)
    }

    fn collect_pages(
        &self,
        node: &Object,
        inherited: &Inherited,
        out: &mut Vec<PageInfo>,
        visited: &mut HashSet<u32>,
        depth: usize,
    ) {
        if depth > 64 {
            return;
        }
        if let Object::Ref(r) = node {
            if !visited.insert(r.num) {
                return;
            }
        }
        let Some(dict) = self.resolve(node).as_dict().cloned() else {
            return;
        };
        let mut inh = inherited.clone();
        if let Some(r) = self.resolve_dict(dict.get("Resources")) {
            inh.resources = Some(r);
        }
        if let Some(b) = self.read_box(dict.get("MediaBox")) {
            inh.media_box = Some(b);
        }
        if let Some(b) = self.read_box(dict.get("CropBox")) {
            inh.crop_box = Some(b);
        }
        if let Some(r) = dict.get("Rotate").map(|o| self.resolve(o)).and_then(|o| o.as_i64()) {
            inh.rotate = Some(r);
        }

        let is_pages = dict.get("Type").and_then(Object::as_name) == Some("Pages") || dict.contains_key("Kids");
        if is_pages {
            if let Object::Array(kids) = self.resolve(dict.get("Kids").unwrap_or(&Object::Null)) {
                for kid in &kids {
                    self.collect_pages(kid, &inh, out, visited, depth + 1);
                }
            }
            return;
        }

        let media = inh.media_box.unwrap_or([0.0, 0.0, 612.0, 792.0]);
        let bbox = match inh.crop_box {
            Some(c) => {
                let b = [
                    c[0].max(media[0]),
                    c[1].max(media[1]),
                    c[2].min(media[2]),
                    c[3].min(media[3]),
                ];
                if b[2] > b[0] && b[3] > b[1] {
                    b
                } else {
                    media
                }
            }
            None => media,
        };
        let rotate = inh.rotate.unwrap_or(0).rem_euclid(360);
        let rotate = (rotate / 90) * 90;
        out.push(PageInfo {
            dict,
            resources: inh.resources.unwrap_or_default(),
            bbox,
            rotate,
        });
    }

    fn read_box(&self, obj: Option<&Object>) -> Option<[f64; 4]> {
        let arr = self.resolve(obj?);
        let a = arr.as_array()?;
        if a.len() != 4 {
            return None;
        }
        let v: Vec<f64> = a.iter().filter_map(|o| self.resolve(o).as_f64()).collect();
        if v.len() != 4 {
            return None;
        }
        let b = [v[0].min(v[2]), v[1].min(v[3]), v[0].max(v[2]), v[1].max(v[3])];
        (b[2] > b[0] && b[3] > b[1]).then_some(b)
    }
}

#[derive(Debug, Clone, Default)]
struct Inherited {
    resources: Option<Dict>,
    media_box: Option<[f64; 4]>,
    crop_box: Option<[f64; 4]>,
    rotate: Option<i64>,
}

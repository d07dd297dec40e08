//! Content-stream interpreter. Produces paint-ordered items in top-left page coordinates.

use std::collections::HashMap;
use std::sync::Arc;

use super::document::{Document, PageInfo};
use super::font::Font;
use super::object::{Dict, ObjRef, Object, Parser, Stream, Token};
use super::PdfError;
use crate::geometry::Rect;

pub type Matrix = [f64; 6];

pub const IDENTITY: Matrix = [1.0, 0.0, 0.0, 1.0, 0.0, 0.0];

/// `a` then `b`.
pub fn mul(a: &Matrix, b: &Matrix) -> Matrix {
    [
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
        a[4] * b[0] + a[5] * b[2] + b[4],
        a[4] * b[1] + a[5] * b[3] + b[5],
    ]
}

pub fn apply(m: &Matrix, x: f64, y: f64) -> (f64, f64) {
    (m[0] * x + m[2] * y + m[4], m[1] * x + m[3] * y + m[5])
}

pub fn invert(m: &Matrix) -> Option<Matrix> {
    let det = m[0] * m[3] - m[1] * m[2];
    if det.abs() < 1e-12 || !det.is_finite() {
        return None;
    }
    let a = m[3] / det;
    let b = -m[1] / det;
    let c = -m[2] / det;
    let d = m[0] / det;
    Some([a, b, c, d, -(m[4] * a + m[5] * c), -(m[4] * b + m[5] * d)])
}

fn transform_rect(m: &Matrix, x0: f64, y0: f64, x1: f64, y1: f64) -> Option<Rect> {
    Rect::from_points([apply(m, x0, y0), apply(m, x1, y0), apply(m, x0, y1), apply(m, x1, y1)])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Glyph {
    pub ch: char,
    pub bbox: Rect,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextRun {
    pub text: String,
    pub bbox: Rect,
    pub font_size: f64,
    pub color: [u8; 3],
    pub glyphs: Vec<Glyph>,
    /// Render mode 3 (OCR layers and the like).
    pub invisible: bool,
    pub clip: Option<Rect>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FillRule {
    NonZero,
    EvenOdd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PaintedPath {
    pub subpaths: Vec<Vec<(f64, f64)>>,
    pub closed: Vec<bool>,
    pub fill: Option<(FillRule, [u8; 3])>,
    /// Color and width in page units.
    pub stroke: Option<([u8; 3], f64)>,
    pub bbox: Rect,
    pub clip: Option<Rect>,
}

#[derive(Debug, Clone)]
pub struct ImagePlacement {
    /// Maps the unit square onto the page.
    pub matrix: Matrix,
    pub bbox: Rect,
    /// Image dictionary with the color space already resolved, plus raw data.
    pub stream: Arc<Stream>,
    /// Fill color, used by stencil masks.
    pub fill: [u8; 3],
    pub clip: Option<Rect>,
}

#[derive(Debug, Clone)]
pub enum Item {
    Text(TextRun),
    Path(PaintedPath),
    Image(ImagePlacement),
}

#[derive(Debug, Clone, Default)]
pub struct PageContent {
    pub width: f64,
    pub height: f64,
    pub items: Vec<Item>,
}

#[derive(Clone)]
struct GState {
    ctm: Matrix,
    fill: [u8; 3],
    stroke: [u8; 3],
    line_width: f64,
    clip: Option<Rect>,
    font: Option<Arc<Font>>,
    font_size: f64,
    char_spacing: f64,
    word_spacing: f64,
    hscale: f64,
    leading: f64,
    rise: f64,
    render_mode: i64,
}

impl GState {
    fn new(ctm: Matrix) -> Self {
        GState {
            ctm,
            fill: [0, 0, 0],
            stroke: [0, 0, 0],
            line_width: 1.0,
            clip: None,
            font: None,
            font_size: 0.0,
            char_spacing: 0.0,
            word_spacing: 0.0,
            hscale: 1.0,
            leading: 0.0,
            rise: 0.0,
            render_mode: 0,
        }
    }
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn color_from(ops: &[f64]) -> Option<[u8; 3]> {
    match ops {
        [g] => Some([to_byte(*g); 3]),
        [r, g, b] => Some([to_byte(*r), to_byte(*g), to_byte(*b)]),
        [c, m, y, k] => Some([
            to_byte((1.0 - c) * (1.0 - k)),
            to_byte((1.0 - m) * (1.0 - k)),
            to_byte((1.0 - y) * (1.0 - k)),
        ]),
        _ => None,
    }
}

const MAX_FORM_DEPTH: usize = 12;

struct Interp<'a> {
    doc: &'a Document,
    items: Vec<Item>,
    fonts: HashMap<ObjRef, Arc<Font>>,
    form_stack: Vec<ObjRef>,
}

#[derive(Default)]
struct PathBuilder {
    subpaths: Vec<Vec<(f64, f64)>>,
    closed: Vec<bool>,
    current: Option<(f64, f64)>,
}

impl PathBuilder {
    fn move_to(&mut self, p: (f64, f64)) {
        self.subpaths.push(vec![p]);
        self.closed.push(false);
        self.current = Some(p);
    }

    fn line_to(&mut self, p: (f64, f64)) {
        if self.subpaths.is_empty() {
            self.move_to(p);
            return;
        }
        self.subpaths.last_mut().expect("subpath").push(p);
        self.current = Some(p);
    }

    fn curve_to(&mut self, c1: (f64, f64), c2: (f64, f64), p: (f64, f64)) {
        let Some(p0) = self.current else {
            self.move_to(p);
            return;
        };
        const STEPS: usize = 12;
        for i in 1..=STEPS {
            let t = i as f64 / STEPS as f64;
            let u = 1.0 - t;
            let x = u * u * u * p0.0 + 3.0 * u * u * t * c1.0 + 3.0 * u * t * t * c2.0 + t * t * t * p.0;
            let y = u * u * u * p0.1 + 3.0 * u * u * t * c1.1 + 3.0 * u * t * t * c2.1 + t * t * t * p.1;
            self.line_to((x, y));
        }
    }

    fn close(&mut self) {
        if let Some(c) = self.closed.last_mut() {
            *c = true;
            let start = self.subpaths.last().and_then(|s| s.first().copied());
            self.current = start;
        }
    }

    fn bbox(&self) -> Option<Rect> {
        Rect::from_points(self.subpaths.iter().flatten().copied())
    }

    fn take(&mut self) -> PathBuilder {
        std::mem::take(self)
    }
}

fn nums(operands: &[Object]) -> Vec<f64> {
    operands.iter().filter_map(Object::as_f64).collect()
}

fn inline_key(k: &str) -> &str {
    match k {
        "BPC" => "BitsPerComponent",
        "CS" => "ColorSpace",
        "D" => "Decode",
        "DP" => "DecodeParms",
        "F" => "Filter",
        "H" => "Height",
        "W" => "Width",
        "IM" => "ImageMask",
        "I" => "Interpolate",
        other => other,
    }
}

fn inline_value(v: Object) -> Object {
    let expand = |n: &str| -> String {
        match n {
            "G" => "DeviceGray",
            "RGB" => "DeviceRGB",
            "CMYK" => "DeviceCMYK",
            "I" => "Indexed",
            "AHx" => "ASCIIHexDecode",
            "A85" => "ASCII85Decode",
            "LZW" => "LZWDecode",
            "Fl" => "FlateDecode",
            "RL" => "RunLengthDecode",
            "CCF" => "CCITTFaxDecode",
            "DCT" => "DCTDecode",
            other => other,
        }
        .to_string()
    };
    match v {
        Object::Name(n) => Object::Name(expand(&n)),
        Object::Array(a) => Object::Array(a.into_iter().map(inline_value).collect()),
        other => other,
    }
}

impl<'a> Interp<'a> {
    fn resource(&self, resources: &Dict, category: &str, name: &str) -> Option<Object> {
        let cat = self.doc.resolve_dict(resources.get(category))?;
        cat.get(name).cloned()
    }

    fn load_font(&mut self, resources: &Dict, name: &str) -> Option<Arc<Font>> {
        let obj = self.resource(resources, "Font", name)?;
        if let Object::Ref(r) = obj {
            if let Some(f) = self.fonts.get(&r) {
                return Some(f.clone());
            }
            let dict = self.doc.resolve(&obj).as_dict().cloned()?;
            let font = Arc::new(Font::load(self.doc, &dict));
            self.fonts.insert(r, font.clone());
            return Some(font);
        }
        let dict = self.doc.resolve(&obj).as_dict().cloned()?;
        Some(Arc::new(Font::load(self.doc, &dict)))
    }

    /// Resolves a color space object to direct objects so it can be used without resources.
    fn resolve_colorspace(&self, cs: &Object, resources: &Dict) -> Object {
        let cs = self.doc.resolve(cs);
        match &cs {
            Object::Name(n)
                if !matches!(
                    n.as_str(),
                    "DeviceGray" | "DeviceRGB" | "DeviceCMYK" | "CalRGB" | "CalGray" | "Pattern"
                ) =>
            {
                match self.resource(resources, "ColorSpace", n) {
                    Some(o) => self.deep_resolve(&o, 0),
                    None => cs,
                }
            }
            _ => self.deep_resolve(&cs, 0),
        }
    }

    fn deep_resolve(&self, obj: &Object, depth: usize) -> Object {
        if depth > 8 {
            return Object::Null;
        }
        match self.doc.resolve(obj) {
            Object::Array(a) => Object::Array(a.iter().map(|o| self.deep_resolve(o, depth + 1)).collect()),
            other => other,
        }
    }

    fn paint(&mut self, gs: &GState, path: PathBuilder, fill: Option<FillRule>, stroke: bool) {
        let Some(mut bbox) = path.bbox() else { return };
        let scale = (gs.ctm[0] * gs.ctm[3] - gs.ctm[1] * gs.ctm[2]).abs().sqrt();
        let width = gs.line_width * scale;
        if stroke {
            bbox = bbox.pad(width / 2.0);
        }
        if let Some(c) = gs.clip {
            match bbox.intersection(&c) {
                Some(b) => bbox = b,
                None => return,
            }
        }
        self.items.push(Item::Path(PaintedPath {
            subpaths: path.subpaths,
            closed: path.closed,
            fill: fill.map(|r| (r, gs.fill)),
            stroke: stroke.then_some((gs.stroke, width)),
            bbox,
            clip: gs.clip,
        }));
    }

    fn place_image(&mut self, gs: &GState, dict: Dict, data: Vec<u8>, resources: &Dict) {
        let Some(mut bbox) = transform_rect(&gs.ctm, 0.0, 0.0, 1.0, 1.0) else { return };
        if let Some(c) = gs.clip {
            match bbox.intersection(&c) {
                Some(b) => bbox = b,
                None => return,
            }
        }
        let mut dict = dict;
        if let Some(cs) = dict.get("ColorSpace").cloned() {
            dict.insert("ColorSpace".into(), self.resolve_colorspace(&cs, resources));
        }
        for key in ["SMask", "Mask", "Decode", "DecodeParms", "Filter"] {
            if let Some(v) = dict.get(key).cloned() {
                dict.insert(key.into(), self.deep_resolve(&v, 0));
            }
        }
        self.items.push(Item::Image(ImagePlacement {
            matrix: gs.ctm,
            bbox,
            stream: Arc::new(Stream { dict, data }),
            fill: gs.fill,
            clip: gs.clip,
        }));
    }

    fn show_text(&mut self, gs: &GState, tm: &mut Matrix, bytes: &[u8]) {
        let Some(font) = gs.font.clone() else { return };
        let fs = gs.font_size;
        let th = gs.hscale;
        let mut text = String::new();
        let mut glyphs = Vec::new();
        let mut size = 0.0f64;
        for ch in font.decode(bytes) {
            let trm = mul(&mul(&[fs * th, 0.0, 0.0, fs, 0.0, gs.rise], tm), &gs.ctm);
            size = size.max(trm[2].hypot(trm[3]));
            if let Some(bbox) = transform_rect(&trm, 0.0, -0.2, ch.width, 0.8) {
                if bbox.is_finite() {
                    if let Some(c) = ch.text.chars().next() {
                        glyphs.push(Glyph { ch: c, bbox });
                    }
                }
            }
            text.push_str(&ch.text);
            let spacing = gs.char_spacing + if font.is_space(ch.code) { gs.word_spacing } else { 0.0 };
            let tx = (ch.width * fs + spacing) * th;
            *tm = mul(&[1.0, 0.0, 0.0, 1.0, tx, 0.0], tm);
        }
        let Some(mut bbox) = Rect::from_points(glyphs.iter().flat_map(|g| [(g.bbox.x0, g.bbox.y0), (g.bbox.x1, g.bbox.y1)]))
        else {
            return;
        };
        if let Some(c) = gs.clip {
            match bbox.intersection(&c) {
                Some(b) => bbox = b,
                None => return,
            }
        }
        self.items.push(Item::Text(TextRun {
            text,
            bbox,
            font_size: size,
            color: gs.fill,
            glyphs,
            invisible: gs.render_mode == 3,
            clip: gs.clip,
        }));
    }

    fn run(&mut self, content: &[u8], resources: &Dict, base: GState) {
        let mut gs = base;
        let mut stack: Vec<GState> = Vec::new();
        let mut path = PathBuilder::default();
        let mut pending_clip = false;
        let mut tm = IDENTITY;
        let mut tlm = IDENTITY;
        let mut operands: Vec<Object> = Vec::new();
        let mut parser = Parser::new(content, 0, false);

        while let Some(tok) = parser.next_token() {
            let op = match tok {
                Token::Keyword(k) => k,
                other => {
                    if let Some(o) = parser.object_from(other) {
                        operands.push(o);
                    }
                    continue;
                }
            };
            let n = nums(&operands);
            match op.as_slice() {
                b"q" => {
                    if stack.len() < 256 {
                        stack.push(gs.clone());
                    }
                }
                b"Q" => {
                    if let Some(g) = stack.pop() {
                        gs = g;
                    }
                }
                b"cm" if n.len() == 6 => {
                    let m = [n[0], n[1], n[2], n[3], n[4], n[5]];
                    gs.ctm = mul(&m, &gs.ctm);
                }
                b"w" if !n.is_empty() => gs.line_width = n[0],
                b"gs" => {
                    if let Some(Object::Name(name)) = operands.first() {
                        if let Some(d) = self
                            .resource(resources, "ExtGState", name)
                            .and_then(|o| self.doc.resolve(&o).as_dict().cloned())
                        {
                            if let Some(lw) = d.get("LW").and_then(Object::as_f64) {
                                gs.line_width = lw;
                            }
                        }
                    }
                }
                b"m" if n.len() >= 2 => path.move_to(apply(&gs.ctm, n[0], n[1])),
                b"l" if n.len() >= 2 => path.line_to(apply(&gs.ctm, n[0], n[1])),
                b"c" if n.len() >= 6 => path.curve_to(
                    apply(&gs.ctm, n[0], n[1]),
                    apply(&gs.ctm, n[2], n[3]),
                    apply(&gs.ctm, n[4], n[5]),
                ),
                b"v" if n.len() >= 4 => {
                    let c1 = path.current.unwrap_or_else(|| apply(&gs.ctm, n[0], n[1]));
                    path.curve_to(c1, apply(&gs.ctm, n[0], n[1]), apply(&gs.ctm, n[2], n[3]));
                }
                b"y" if n.len() >= 4 => {
                    let end = apply(&gs.ctm, n[2], n[3]);
                    path.curve_to(apply(&gs.ctm, n[0], n[1]), end, end);
                }
                b"h" => path.close(),
                b"re" if n.len() >= 4 => {
                    let (x, y, w, h) = (n[0], n[1], n[2], n[3]);
                    path.move_to(apply(&gs.ctm, x, y));
                    path.line_to(apply(&gs.ctm, x + w, y));
                    path.line_to(apply(&gs.ctm, x + w, y + h));
                    path.line_to(apply(&gs.ctm, x, y + h));
                    path.close();
                }
                b"W" | b"W*" => pending_clip = true,
                b"S" | b"s" | b"f" | b"F" | b"f*" | b"B" | b"B*" | b"b" | b"b*" | b"n" => {
                    if matches!(op.as_slice(), b"s" | b"b" | b"b*") {
                        path.close();
                    }
                    let fill = match op.as_slice() {
                        b"f" | b"F" | b"B" | b"b" => Some(FillRule::NonZero),
                        b"f*" | b"B*" | b"b*" => Some(FillRule::EvenOdd),
                        _ => None,
                    };
                    let stroke = matches!(op.as_slice(), b"S" | b"s" | b"B" | b"B*" | b"b" | b"b*");
                    let p = path.take();
                    if pending_clip {
                        if let Some(b) = p.bbox() {
                            gs.clip = Some(match gs.clip {
                                Some(c) => c.intersection(&b).unwrap_or(Rect::new(b.x0, b.y0, b.x0, b.y0)),
                                None => b,
                            });
                        }
                        pending_clip = false;
                    }
                    if fill.is_some() || stroke {
                        self.paint(&gs, p, fill, stroke);
                    }
                }
                b"g" => gs.fill = color_from(&n).unwrap_or(gs.fill),
                b"G" => gs.stroke = color_from(&n).unwrap_or(gs.stroke),
                b"rg" | b"k" | b"sc" | b"scn" => gs.fill = color_from(&n).unwrap_or(gs.fill),
                b"RG" | b"K" | b"SC" | b"SCN" => gs.stroke = color_from(&n).unwrap_or(gs.stroke),
                b"cs" => gs.fill = [0, 0, 0],
                b"CS" => gs.stroke = [0, 0, 0],
                b"BT" => {
                    tm = IDENTITY;
                    tlm = IDENTITY;
                }
                b"Tc" if !n.is_empty() => gs.char_spacing = n[0],
                b"Tw" if !n.is_empty() => gs.word_spacing = n[0],
                b"Tz" if !n.is_empty() => gs.hscale = n[0] / 100.0,
                b"TL" if !n.is_empty() => gs.leading = n[0],
                b"Ts" if !n.is_empty() => gs.rise = n[0],
                b"Tr" if !n.is_empty() => gs.render_mode = n[0] as i64,
                b"Tf" => {
                    if let (Some(Object::Name(name)), Some(size)) = (operands.first(), operands.get(1).and_then(Object::as_f64)) {
                        gs.font = self.load_font(resources, name).or_else(|| Some(Arc::new(Font::default())));
                        gs.font_size = size;
                    }
                }
                b"Td" if n.len() >= 2 => {
                    tlm = mul(&[1.0, 0.0, 0.0, 1.0, n[0], n[1]], &tlm);
                    tm = tlm;
                }
                b"TD" if n.len() >= 2 => {
                    gs.leading = -n[1];
                    tlm = mul(&[1.0, 0.0, 0.0, 1.0, n[0], n[1]], &tlm);
                    tm = tlm;
                }
                b"Tm" if n.len() >= 6 => {
                    tlm = [n[0], n[1], n[2], n[3], n[4], n[5]];
                    tm = tlm;
                }
                b"T*" => {
                    tlm = mul(&[1.0, 0.0, 0.0, 1.0, 0.0, -gs.leading], &tlm);
                    tm = tlm;
                }
                b"Tj" => {
                    if let Some(Object::Str(s)) = operands.first() {
                        self.show_text(&gs, &mut tm, s);
                    }
                }
                b"'" | b"\"" => {
                    if op.as_slice() == b"\"" && n.len() >= 2 {
                        gs.word_spacing = n[0];
                        gs.char_spacing = n[1];
                    }
                    tlm = mul(&[1.0, 0.0, 0.0, 1.0, 0.0, -gs.leading], &tlm);
                    tm = tlm;
                    if let Some(Object::Str(s)) = operands.last() {
                        self.show_text(&gs, &mut tm, s);
                    }
                }
                b"TJ" => {
                    if let Some(Object::Array(parts)) = operands.first() {
                        self.show_array(&gs, &mut tm, parts);
                    }
                }
                b"Do" => {
                    if let Some(Object::Name(name)) = operands.first() {
                        self.do_xobject(&gs, resources, name);
                    }
                }
                b"sh" => {
                    if let Some(clip) = gs.clip {
                        let mut p = PathBuilder::default();
                        p.move_to((clip.x0, clip.y0));
                        p.line_to((clip.x1, clip.y0));
                        p.line_to((clip.x1, clip.y1));
                        p.line_to((clip.x0, clip.y1));
                        p.close();
                        let mut g = gs.clone();
                        g.fill = [200, 200, 200];
                        self.paint(&g, p, Some(FillRule::NonZero), false);
                    }
                }
                b"BI" => {
                    let mut dict = Dict::new();
                    loop {
                        match parser.next_token() {
                            Some(Token::Keyword(k)) if k == b"ID" => break,
                            Some(Token::Obj(Object::Name(key))) => {
                                let v = parser.parse_object().unwrap_or(Object::Null);
                                dict.insert(inline_key(&key).to_string(), inline_value(v));
                            }
                            Some(_) => {}
                            None => break,
                        }
                    }
                    let start = parser.lexer.pos + 1;
                    let data = &content[start.min(content.len())..];
                    let mut end = data.len();
                    let mut resume = content.len();
                    for i in 0..data.len().saturating_sub(1) {
                        let prev_ws = i == 0 || super::object::is_whitespace(data[i - 1]);
                        let next_ok = data.get(i + 2).is_none_or(|b| super::object::is_whitespace(*b));
                        if prev_ws && next_ok && &data[i..i + 2] == b"EI" {
                            end = i.saturating_sub(1);
                            resume = start + i + 2;
                            break;
                        }
                    }
                    let bytes = data[..end].to_vec();
                    parser = Parser::new(content, resume, false);
                    self.place_image(&gs, dict, bytes, resources);
                }
                _ => {}
            }
            operands.clear();
        }
    }

    fn show_array(&mut self, gs: &GState, tm: &mut Matrix, parts: &[Object]) {
        // Merge into a single run so spacing adjustments do not split words.
        let start = self.items.len();
        for part in parts {
            match part {
                Object::Str(s) => self.show_text(gs, tm, s),
                o => {
                    if let Some(adj) = o.as_f64() {
                        let tx = -adj / 1000.0 * gs.font_size * gs.hscale;
                        *tm = mul(&[1.0, 0.0, 0.0, 1.0, tx, 0.0], tm);
                        // Large negative kerning acts as a word gap.
                        if adj < -200.0 && self.items.len() > start {
                            if let Some(Item::Text(t)) = self.items.last_mut() {
                                if !t.text.ends_with(' ') {
                                    t.text.push(' ');
                                }
                            }
                        }
                    }
                }
            }
        }
        if self.items.len() > start + 1 {
            let runs: Vec<TextRun> = self
                .items
                .drain(start..)
                .filter_map(|i| match i {
                    Item::Text(t) => Some(t),
                    _ => None,
                })
                .collect();
            let mut merged = runs[0].clone();
            for r in &runs[1..] {
                merged.text.push_str(&r.text);
                merged.bbox = merged.bbox.union(&r.bbox);
                merged.font_size = merged.font_size.max(r.font_size);
                merged.glyphs.extend(r.glyphs.iter().cloned());
            }
            self.items.push(Item::Text(merged));
        }
    }

    fn do_xobject(&mut self, gs: &GState, resources: &Dict, name: &str) {
        let Some(obj) = self.resource(resources, "XObject", name) else { return };
        let r = obj.as_ref();
        let Object::Stream(stream) = self.doc.resolve(&obj) else { return };
        match stream.dict.get("Subtype").and_then(Object::as_name) {
            Some("Image") => {
                let mut dict = stream.dict.clone();
                if let Some(Object::Ref(sm)) = dict.get("SMask").cloned() {
                    if let Object::Stream(s) = self.doc.resolve(&Object::Ref(sm)) {
                        dict.insert("SMask".into(), Object::Stream(s));
                    }
                }
                self.place_image(gs, dict, stream.data.clone(), resources);
            }
            Some("Form") => {
                if self.form_stack.len() >= MAX_FORM_DEPTH {
                    return;
                }
                if let Some(r) = r {
                    if self.form_stack.contains(&r) {
                        return;
                    }
                }
                let Ok(content) = self.doc.stream_data(&stream) else { return };
                let m: Vec<f64> = match stream.dict.get("Matrix").map(|o| self.doc.resolve(o)) {
                    Some(Object::Array(a)) => a.iter().filter_map(Object::as_f64).collect(),
                    _ => Vec::new(),
                };
                let m = if m.len() == 6 { [m[0], m[1], m[2], m[3], m[4], m[5]] } else { IDENTITY };
                let mut inner = gs.clone();
                inner.ctm = mul(&m, &gs.ctm);
                if let Some(Object::Array(b)) = stream.dict.get("BBox").map(|o| self.doc.resolve(o)) {
                    let v: Vec<f64> = b.iter().filter_map(Object::as_f64).collect();
                    if v.len() == 4 {
                        if let Some(bb) = transform_rect(&inner.ctm, v[0], v[1], v[2], v[3]) {
                            inner.clip = Some(match inner.clip {
                                Some(c) => c.intersection(&bb).unwrap_or(Rect::new(bb.x0, bb.y0, bb.x0, bb.y0)),
                                None => bb,
                            });
                        }
                    }
                }
                let res = self
                    .doc
                    .resolve_dict(stream.dict.get("Resources"))
                    .unwrap_or_else(|| resources.clone());
                if let Some(r) = r {
                    self.form_stack.push(r);
                }
                self.run(&content, &res, inner);
                if r.is_some() {
                    self.form_stack.pop();
                }
            }
            _ => {}
        }
    }
}

/// Interprets a page's content streams.
pub fn interpret_page(doc: &Document, page: &PageInfo) -> Result<PageContent, PdfError> {
    let content = doc.page_content(page)?;
    let (width, height) = page.size();
    let mut interp = Interp {
        doc,
        items: Vec::new(),
        fonts: HashMap::new(),
        form_stack: Vec::new(),
    };
    interp.run(&content, &page.resources, GState::new(page.page_matrix()));
    Ok(PageContent {
        width,
        height,
        items: interp.items,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_inverse() {
        let m = [2.0, 0.5, -1.0, 3.0, 10.0, -4.0];
        let inv = invert(&m).unwrap();
        let id = mul(&m, &inv);
        for (a, b) in id.iter().zip(IDENTITY.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mul_order() {
        let scale = [2.0, 0.0, 0.0, 2.0, 0.0, 0.0];
        let shift = [1.0, 0.0, 0.0, 1.0, 5.0, 0.0];
        // scale, then shift
        assert_eq!(apply(&mul(&scale, &shift), 1.0, 0.0), (7.0, 0.0));
    }
}

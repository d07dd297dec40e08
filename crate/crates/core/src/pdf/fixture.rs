//! Small PDF writer for building test documents with known geometry.
//!
//! Coordinates given to [`FixturePage`] are top-left page coordinates, the same space the
//! layout reports, so expected boxes can be written down directly.

use std::fmt::Write as _;
use std::io::Write as _;

use flate2::write::ZlibEncoder;
use flate2::Compression;

use super::font::{win_ansi_encode, Font};
use crate::geometry::Rect;

#[derive(Debug, Clone)]
enum Op {
    Text { x: f64, baseline: f64, size: f64, text: String },
    FillRect { rect: Rect, rgb: [u8; 3] },
    StrokeRect { rect: Rect, width: f64, rgb: [u8; 3] },
    Line { from: (f64, f64), to: (f64, f64), width: f64, rgb: [u8; 3] },
    Image { rect: Rect, width: u32, height: u32, rgb: Vec<u8> },
}

#[derive(Debug, Clone)]
pub struct FixturePage {
    pub width: f64,
    pub height: f64,
    pub rotate: i64,
    ops: Vec<Op>,
}

/// Cross-reference layout of the written file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum XrefStyle {
    #[default]
    Table,
    /// Dictionaries packed into an object stream, indexed by a cross-reference stream.
    Stream,
}

fn encode_text(text: &str) -> Vec<u8> {
    text.chars().map(|c| win_ansi_encode(c).unwrap_or(b'?')).collect()
}

fn literal(bytes: &[u8]) -> String {
    let mut s = String::from("(");
    for &b in bytes {
        match b {
            b'(' | b')' | b'\\' => {
                s.push('\\');
                s.push(b as char);
            }
            0x20..=0x7e => s.push(b as char),
            _ => {
                let _ = write!(s, "\\{b:03o}");
            }
        }
    }
    s.push(')');
    s
}

fn rgb_op(rgb: [u8; 3], op: &str) -> String {
    format!(
        "{:.4} {:.4} {:.4} {op}",
        rgb[0] as f64 / 255.0,
        rgb[1] as f64 / 255.0,
        rgb[2] as f64 / 255.0
    )
}

/// Bounding box the layout assigns to a Helvetica string drawn at `(x, baseline)`.
pub fn text_bbox(x: f64, baseline: f64, size: f64, text: &str) -> Rect {
    let advance: f64 = Font::default().decode(&encode_text(text)).iter().map(|c| c.width * size).sum();
    Rect::new(x, baseline - 0.8 * size, x + advance, baseline + 0.2 * size)
}

impl FixturePage {
    pub fn new(width: f64, height: f64) -> Self {
        FixturePage {
            width,
            height,
            rotate: 0,
            ops: Vec::new(),
        }
    }

    pub fn letter() -> Self {
        Self::new(612.0, 792.0)
    }

    /// Helvetica text with its baseline at `baseline`.
    pub fn text(&mut self, x: f64, baseline: f64, size: f64, text: &str) -> &mut Self {
        self.ops.push(Op::Text {
            x,
            baseline,
            size,
            text: text.to_string(),
        });
        self
    }

    pub fn fill_rect(&mut self, rect: Rect, rgb: [u8; 3]) -> &mut Self {
        self.ops.push(Op::FillRect { rect, rgb });
        self
    }

    pub fn stroke_rect(&mut self, rect: Rect, width: f64, rgb: [u8; 3]) -> &mut Self {
        self.ops.push(Op::StrokeRect { rect, width, rgb });
        self
    }

    pub fn line(&mut self, from: (f64, f64), to: (f64, f64), width: f64, rgb: [u8; 3]) -> &mut Self {
        self.ops.push(Op::Line { from, to, width, rgb });
        self
    }

    /// RGB raster (row-major, top row first) placed to fill `rect`.
    pub fn image(&mut self, rect: Rect, width: u32, height: u32, rgb: Vec<u8>) -> &mut Self {
        assert_eq!(rgb.len(), (width * height * 3) as usize, "image buffer size");
        self.ops.push(Op::Image { rect, width, height, rgb });
        self
    }

    fn content(&self, image_names: &mut Vec<(String, u32, u32, Vec<u8>)>) -> String {
        let h = self.height;
        let mut s = String::new();
        for op in &self.ops {
            match op {
                Op::Text { x, baseline, size, text } => {
                    let _ = writeln!(
                        s,
                        "BT /F1 {size} Tf 1 0 0 1 {x} {} Tm {} Tj ET",
                        h - baseline,
                        literal(&encode_text(text))
                    );
                }
                Op::FillRect { rect, rgb } => {
                    let _ = writeln!(
                        s,
                        "q {} {} {} {} {} re f Q",
                        rgb_op(*rgb, "rg"),
                        rect.x0,
                        h - rect.y1,
                        rect.width(),
                        rect.height()
                    );
                }
                Op::StrokeRect { rect, width, rgb } => {
                    let _ = writeln!(
                        s,
                        "q {width} w {} {} {} {} {} re S Q",
                        rgb_op(*rgb, "RG"),
                        rect.x0,
                        h - rect.y1,
                        rect.width(),
                        rect.height()
                    );
                }
                Op::Line { from, to, width, rgb } => {
                    let _ = writeln!(
                        s,
                        "q {width} w {} {} {} m {} {} l S Q",
                        rgb_op(*rgb, "RG"),
                        from.0,
                        h - from.1,
                        to.0,
                        h - to.1
                    );
                }
                Op::Image { rect, width, height, rgb } => {
                    let name = format!("Im{}", image_names.len() + 1);
                    let _ = writeln!(
                        s,
                        "q {} 0 0 {} {} {} cm /{name} Do Q",
                        rect.width(),
                        rect.height(),
                        rect.x0,
                        h - rect.y1
                    );
                    image_names.push((name, *width, *height, rgb.clone()));
                }
            }
        }
        s
    }
}

fn deflate(data: &[u8]) -> Vec<u8> {
    let mut e = ZlibEncoder::new(Vec::new(), Compression::default());
    e.write_all(data).expect("in-memory write");
    e.finish().expect("in-memory write")
}

enum Body {
    Dict(String),
    Stream { dict: String, data: Vec<u8> },
}

/// Serializes pages into a complete PDF.
pub fn build_pdf(pages: &[FixturePage], style: XrefStyle) -> Vec<u8> {
    // Object numbers: 1 catalog, 2 page tree, 3 font, then per page.
    let mut objects: Vec<Body> = vec![
        Body::Dict("<< /Type /Catalog /Pages 2 0 R >>".into()),
        Body::Dict(String::new()),
        Body::Dict("<< /Type /Font /Subtype /Type1 /BaseFont /Helvetica /Encoding /WinAnsiEncoding >>".into()),
    ];
    let mut kids = Vec::new();
    for page in pages {
        let page_num = objects.len() + 1;
        kids.push(format!("{page_num} 0 R"));
        objects.push(Body::Dict(String::new()));
        let mut images = Vec::new();
        let content = page.content(&mut images);
        let data = deflate(content.as_bytes());
        let content_num = objects.len() + 1;
        objects.push(Body::Stream {
            dict: format!("<< /Length {} /Filter /FlateDecode >>", data.len()),
            data,
        });
        let mut xobjects = String::new();
        for (name, w, h, rgb) in images {
            let num = objects.len() + 1;
            let data = deflate(&rgb);
            objects.push(Body::Stream {
                dict: format!(
                    "<< /Type /XObject /Subtype /Image /Width {w} /Height {h} /ColorSpace /DeviceRGB \
                     /BitsPerComponent 8 /Filter /FlateDecode /Length {} >>",
                    data.len()
                ),
                data,
            });
            let _ = write!(xobjects, "/{name} {num} 0 R ");
        }
        let rotate = if page.rotate != 0 { format!(" /Rotate {}", page.rotate) } else { String::new() };
        objects[page_num - 1] = Body::Dict(format!(
            "<< /Type /Page /Parent 2 0 R /MediaBox [0 0 {} {}]{rotate} /Contents {content_num} 0 R \
             /Resources << /Font << /F1 3 0 R >> /XObject << {xobjects}>> >> >>",
            page.width, page.height
        ));
    }
    objects[1] = Body::Dict(format!(
        "<< /Type /Pages /Kids [{}] /Count {} >>",
        kids.join(" "),
        pages.len()
    ));

    let mut out: Vec<u8> = b"%PDF-1.5\n%\xe2\xe3\xcf\xd3\n".to_vec();
    match style {
        XrefStyle::Table => {
            let mut offsets = Vec::new();
            for (i, body) in objects.iter().enumerate() {
                offsets.push(out.len());
                write_object(&mut out, i + 1, body);
            }
            let xref = out.len();
            let _ = write!(out, "xref\n0 {}\n0000000000 65535 f \n", objects.len() + 1);
            for off in offsets {
                let _ = writeln!(out, "{off:010} 00000 n ");
            }
            let _ = write!(
                out,
                "trailer\n<< /Size {} /Root 1 0 R >>\nstartxref\n{xref}\n%%EOF\n",
                objects.len() + 1
            );
        }
        XrefStyle::Stream => {
            // entries: (type, field2, field3)
            let objstm_num = objects.len() + 1;
            let xref_num = objects.len() + 2;
            let mut entries = vec![(0u8, 0u32, 0u16); objects.len() + 3];
            let mut header = String::new();
            let mut body = String::new();
            let mut packed = 0u16;
            for (i, obj) in objects.iter().enumerate() {
                match obj {
                    Body::Dict(d) => {
                        let _ = write!(header, "{} {} ", i + 1, body.len());
                        body.push_str(d);
                        body.push('\n');
                        entries[i + 1] = (2, objstm_num as u32, packed);
                        packed += 1;
                    }
                    Body::Stream { .. } => {
                        entries[i + 1] = (1, out.len() as u32, 0);
                        write_object(&mut out, i + 1, obj);
                    }
                }
            }
            let stm = format!("{header}\n{body}");
            let first = header.len() + 1;
            let data = deflate(stm.as_bytes());
            entries[objstm_num] = (1, out.len() as u32, 0);
            write_object(
                &mut out,
                objstm_num,
                &Body::Stream {
                    dict: format!(
                        "<< /Type /ObjStm /N {packed} /First {first} /Filter /FlateDecode /Length {} >>",
                        data.len()
                    ),
                    data,
                },
            );
            let xref_off = out.len();
            entries[xref_num] = (1, xref_off as u32, 0);
            let mut raw = Vec::new();
            for (t, f2, f3) in &entries {
                raw.push(*t);
                raw.extend_from_slice(&f2.to_be_bytes());
                raw.extend_from_slice(&f3.to_be_bytes());
            }
            let data = deflate(&raw);
            write_object(
                &mut out,
                xref_num,
                &Body::Stream {
                    dict: format!(
                        "<< /Type /XRef /Size {} /W [1 4 2] /Root 1 0 R /Filter /FlateDecode /Length {} >>",
                        entries.len(),
                        data.len()
                    ),
                    data,
                },
            );
            let _ = write!(out, "startxref\n{xref_off}\n%%EOF\n");
        }
    }
    out
}

fn write_object(out: &mut Vec<u8>, num: usize, body: &Body) {
    let _ = writeln!(out, "{num} 0 obj");
    match body {
        Body::Dict(d) => {
            out.extend_from_slice(d.as_bytes());
            out.push(b'\n');
        }
        Body::Stream { dict, data } => {
            out.extend_from_slice(dict.as_bytes());
            out.extend_from_slice(b"\nstream\n");
            out.extend_from_slice(data);
            out.extend_from_slice(b"\nendstream\n");
        }
    }
    out.extend_from_slice(b"endobj\n");
}

/// A solid-colour RGB buffer.
pub fn solid_rgb(width: u32, height: u32, rgb: [u8; 3]) -> Vec<u8> {
    rgb.iter().copied().cycle().take((width * height * 3) as usize).collect()
}

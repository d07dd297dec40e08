//! Anti-aliased scanline rasterizer for interpreted page content.
//!
//! Paths are filled with exact horizontal coverage over four sub-scanlines per pixel row.
//! Strokes become quads plus polygonal joins, all wound the same way so nonzero union
//! never cancels. Images are sampled nearest-neighbour. Text is drawn with the built-in
//! bitmap face inside each glyph's advance box; embedded glyph outlines are not used.

use image::{Rgb, RgbImage};

use super::content::{apply, invert, mul, FillRule, ImagePlacement, Item, PageContent, PaintedPath, TextRun};
use super::object::{Object, Stream};
use crate::geometry::Rect;
use crate::glyphs;

const SUBSAMPLES: usize = 4;
const MAX_IMAGE_PIXELS: usize = 64 * 1024 * 1024;

pub struct Canvas {
    pub width: usize,
    pub height: usize,
    px: Vec<[f32; 3]>,
}

#[derive(Debug, Clone, Copy)]
struct Clip {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl Canvas {
    pub fn new(width: usize, height: usize) -> Self {
        Canvas {
            width,
            height,
            px: vec![[255.0; 3]; width * height],
        }
    }

    fn full_clip(&self) -> Clip {
        Clip {
            x0: 0.0,
            y0: 0.0,
            x1: self.width as f64,
            y1: self.height as f64,
        }
    }

    fn clip_to(&self, r: Option<Rect>) -> Option<Clip> {
        let full = self.full_clip();
        match r {
            None => Some(full),
            Some(r) => {
                let c = Clip {
                    x0: r.x0.max(full.x0),
                    y0: r.y0.max(full.y0),
                    x1: r.x1.min(full.x1),
                    y1: r.y1.min(full.y1),
                };
                (c.x1 > c.x0 && c.y1 > c.y0).then_some(c)
            }
        }
    }

    fn blend(&mut self, x: usize, y: usize, alpha: f32, color: [u8; 3]) {
        if alpha <= 0.0 {
            return;
        }
        let a = alpha.min(1.0);
        let p = &mut self.px[y * self.width + x];
        for k in 0..3 {
            p[k] = p[k] * (1.0 - a) + color[k] as f32 * a;
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let p = self.px[y * self.width + x];
        [p[0].round() as u8, p[1].round() as u8, p[2].round() as u8]
    }

    /// Fills the union of `polys` (implicitly closed) under `rule`.
    fn fill_polygons(&mut self, polys: &[Vec<(f64, f64)>], rule: FillRule, color: [u8; 3], clip: Clip) {
        let mut edges: Vec<(f64, f64, f64, f64, i32)> = Vec::new();
        let (mut ymin, mut ymax, mut xmin, mut xmax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for poly in polys {
            if poly.len() < 2 {
                continue;
            }
            for i in 0..poly.len() {
                let a = poly[i];
                let b = poly[(i + 1) % poly.len()];
                if !(a.0.is_finite() && a.1.is_finite() && b.0.is_finite() && b.1.is_finite()) {
                    continue;
                }
                xmin = xmin.min(a.0);
                xmax = xmax.max(a.0);
                if a.1 == b.1 {
                    continue;
                }
                let (dir, e) = if a.1 < b.1 { (1, (a.0, a.1, b.0, b.1)) } else { (-1, (b.0, b.1, a.0, a.1)) };
                ymin = ymin.min(e.1);
                ymax = ymax.max(e.3);
                edges.push((e.0, e.1, e.2, e.3, dir));
            }
        }
        if edges.is_empty() {
            return;
        }
        edges.sort_by(|a, b| a.1.total_cmp(&b.1));
        let y_start = ymin.max(clip.y0).floor().max(0.0) as usize;
        let y_end = (ymax.min(clip.y1).ceil().max(0.0) as usize).min(self.height);
        let cx0 = xmin.max(clip.x0).floor().max(0.0);
        let cx1 = xmax.min(clip.x1).ceil().min(self.width as f64);
        if cx1 <= cx0 {
            return;
        }
        let ix0 = cx0 as usize;
        let mut cov = vec![0f32; (cx1 as usize).saturating_sub(ix0) + 1];
        let mut crossings: Vec<(f64, i32)> = Vec::new();
        for py in y_start..y_end {
            cov.iter_mut().for_each(|c| *c = 0.0);
            let mut any = false;
            for sub in 0..SUBSAMPLES {
                let sy = py as f64 + (sub as f64 + 0.5) / SUBSAMPLES as f64;
                if sy < clip.y0 || sy >= clip.y1 {
                    continue;
                }
                crossings.clear();
                for e in &edges {
                    if e.1 > sy {
                        break;
                    }
                    if sy < e.3 {
                        let x = e.0 + (sy - e.1) * (e.2 - e.0) / (e.3 - e.1);
                        crossings.push((x, e.4));
                    }
                }
                if crossings.len() < 2 {
                    continue;
                }
                crossings.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut winding = 0;
                for w in 0..crossings.len() - 1 {
                    winding += crossings[w].1;
                    let inside = match rule {
                        FillRule::NonZero => winding != 0,
                        FillRule::EvenOdd => winding % 2 != 0,
                    };
                    if !inside {
                        continue;
                    }
                    let xa = crossings[w].0.max(cx0);
                    let xb = crossings[w + 1].0.min(cx1);
                    if xb <= xa {
                        continue;
                    }
                    any = true;
                    let weight = 1.0 / SUBSAMPLES as f32;
                    let mut px = xa.floor();
                    while px < xb {
                        let overlap = (xb.min(px + 1.0) - xa.max(px)) as f32;
                        cov[px as usize - ix0] += overlap * weight;
                        px += 1.0;
                    }
                }
            }
            if any {
                for (i, c) in cov.iter().enumerate() {
                    let x = ix0 + i;
                    if x < self.width && *c > 0.0 {
                        self.blend(x, py, *c, color);
                    }
                }
            }
        }
    }

    fn fill_rect(&mut self, r: Rect, color: [u8; 3], clip: Clip) {
        let x0 = r.x0.max(clip.x0);
        let x1 = r.x1.min(clip.x1);
        let y0 = r.y0.max(clip.y0);
        let y1 = r.y1.min(clip.y1);
        if x1 <= x0 || y1 <= y0 {
            return;
        }
        let mut py = y0.floor();
        while py < y1 {
            let cy = (y1.min(py + 1.0) - y0.max(py)) as f32;
            let mut px = x0.floor();
            while px < x1 {
                let cx = (x1.min(px + 1.0) - x0.max(px)) as f32;
                let (ux, uy) = (px as usize, py as usize);
                if ux < self.width && uy < self.height {
                    self.blend(ux, uy, cx * cy, color);
                }
                px += 1.0;
            }
            py += 1.0;
        }
    }

    pub fn into_image(self) -> RgbImage {
        let mut img = RgbImage::new(self.width as u32, self.height as u32);
        for (i, p) in self.px.iter().enumerate() {
            let (x, y) = ((i % self.width) as u32, (i / self.width) as u32);
            img.put_pixel(x, y, Rgb([p[0].round() as u8, p[1].round() as u8, p[2].round() as u8]));
        }
        img
    }
}

fn signed_area(poly: &[(f64, f64)]) -> f64 {
    let mut a = 0.0;
    for i in 0..poly.len() {
        let (x0, y0) = poly[i];
        let (x1, y1) = poly[(i + 1) % poly.len()];
        a += x0 * y1 - x1 * y0;
    }
    a / 2.0
}

fn oriented(mut poly: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    if signed_area(&poly) < 0.0 {
        poly.reverse();
    }
    poly
}

/// Outline polygons for a stroked polyline: one quad per segment, an octagon per join.
pub fn stroke_polygons(points: &[(f64, f64)], closed: bool, half_width: f64) -> Vec<Vec<(f64, f64)>> {
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(points.len() + 1);
    for p in points {
        if pts.last() != Some(p) {
            pts.push(*p);
        }
    }
    if closed && pts.len() > 2 && pts.first() != pts.last() {
        pts.push(pts[0]);
    }
    let mut out = Vec::new();
    for w in pts.windows(2) {
        let (p, q) = (w[0], w[1]);
        let (dx, dy) = (q.0 - p.0, q.1 - p.1);
        let len = dx.hypot(dy);
        if len == 0.0 {
            continue;
        }
        let (nx, ny) = (-dy / len * half_width, dx / len * half_width);
        out.push(oriented(vec![
            (p.0 + nx, p.1 + ny),
            (q.0 + nx, q.1 + ny),
            (q.0 - nx, q.1 - ny),
            (p.0 - nx, p.1 - ny),
        ]));
    }
    let joins: Vec<(f64, f64)> = if closed {
        pts.clone()
    } else if pts.len() > 2 {
        pts[1..pts.len() - 1].to_vec()
    } else {
        Vec::new()
    };
    if half_width > 0.75 {
        for c in joins {
            let oct = (0..8)
                .map(|k| {
                    let a = k as f64 * std::f64::consts::FRAC_PI_4;
                    (c.0 + half_width * a.cos(), c.1 + half_width * a.sin())
                })
                .collect();
            out.push(oriented(oct));
        }
    }
    out
}

/// Decoded image with straight alpha.
pub struct Pixels {
    pub width: usize,
    pub height: usize,
    pub rgba: Vec<[u8; 4]>,
}

enum ColorSpace {
    Gray,
    Rgb,
    Cmyk,
    Indexed { base: Box<ColorSpace>, hival: usize, lookup: Vec<u8> },
    /// Single tint component; 0 is no ink.
    Tint,
}

impl ColorSpace {
    fn components(&self) -> usize {
        match self {
            ColorSpace::Gray | ColorSpace::Tint | ColorSpace::Indexed { .. } => 1,
            ColorSpace::Rgb => 3,
            ColorSpace::Cmyk => 4,
        }
    }

    fn from_object(obj: Option<&Object>) -> ColorSpace {
        match obj {
            Some(Object::Name(n)) => match n.as_str() {
                "DeviceRGB" | "CalRGB" => ColorSpace::Rgb,
                "DeviceCMYK" => ColorSpace::Cmyk,
                _ => ColorSpace::Gray,
            },
            Some(Object::Array(a)) => match a.first().and_then(Object::as_name) {
                Some("ICCBased") => {
                    let n = a.get(1).and_then(|s| s.as_dict()).and_then(|d| d.get("N")).and_then(Object::as_i64);
                    match n {
                        Some(3) => ColorSpace::Rgb,
                        Some(4) => ColorSpace::Cmyk,
                        _ => ColorSpace::Gray,
                    }
                }
                Some("CalRGB") | Some("Lab") => ColorSpace::Rgb,
                Some("CalGray") => ColorSpace::Gray,
                Some("Indexed") | Some("I") => {
                    let base = ColorSpace::from_object(a.get(1));
                    let hival = a.get(2).and_then(Object::as_i64).unwrap_or(0).clamp(0, 255) as usize;
                    let lookup = match a.get(3) {
                        Some(Object::Str(s)) => s.clone(),
                        Some(Object::Stream(s)) => super::filters::decode_stream(&s.dict, &s.data)
                            .map(|d| d.data)
                            .unwrap_or_default(),
                        _ => Vec::new(),
                    };
                    ColorSpace::Indexed {
                        base: Box::new(base),
                        hival,
                        lookup,
                    }
                }
                Some("Separation") | Some("DeviceN") => ColorSpace::Tint,
                Some("DeviceRGB") => ColorSpace::Rgb,
                Some("DeviceCMYK") => ColorSpace::Cmyk,
                _ => ColorSpace::Gray,
            },
            _ => ColorSpace::Gray,
        }
    }

    /// Components are in 0..=1.
    fn to_rgb(&self, c: &[f64]) -> [u8; 3] {
        let b = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        match self {
            ColorSpace::Gray => [b(c[0]); 3],
            ColorSpace::Tint => [b(1.0 - c[0]); 3],
            ColorSpace::Rgb => [b(c[0]), b(c[1]), b(c[2])],
            ColorSpace::Cmyk => [
                b((1.0 - c[0]) * (1.0 - c[3])),
                b((1.0 - c[1]) * (1.0 - c[3])),
                b((1.0 - c[2]) * (1.0 - c[3])),
            ],
            ColorSpace::Indexed { base, hival, lookup } => {
                let idx = (c[0].round().max(0.0) as usize).min(*hival);
                let n = base.components();
                let comps: Vec<f64> = (0..n)
                    .map(|k| lookup.get(idx * n + k).copied().unwrap_or(0) as f64 / 255.0)
                    .collect();
                base.to_rgb(&comps)
            }
        }
    }
}

fn samples(data: &[u8], width: usize, height: usize, comps: usize, bpc: usize) -> Vec<u32> {
    let row_bits = width * comps * bpc;
    let row_bytes = row_bits.div_ceil(8);
    let mut out = Vec::with_capacity(width * height * comps);
    for y in 0..height {
        let row = &data[(y * row_bytes).min(data.len())..((y + 1) * row_bytes).min(data.len())];
        for i in 0..width * comps {
            let v = match bpc {
                8 => row.get(i).copied().unwrap_or(0) as u32,
                16 => row.get(2 * i).map(|h| (*h as u32) << 8 | row.get(2 * i + 1).copied().unwrap_or(0) as u32).unwrap_or(0),
                1 | 2 | 4 => {
                    let bit = i * bpc;
                    let byte = row.get(bit / 8).copied().unwrap_or(0);
                    let shift = 8 - bpc - (bit % 8);
                    ((byte >> shift) as u32) & ((1 << bpc) - 1)
                }
                _ => 0,
            };
            out.push(v);
        }
    }
    out
}

fn int(dict: &super::object::Dict, k: &str) -> Option<usize> {
    dict.get(k).and_then(Object::as_i64).filter(|v| *v > 0).map(|v| v as usize)
}

/// Single-channel mask (soft or stencil) as 0..=255 alpha values.
fn decode_mask(stream: &Stream, stencil: bool) -> Option<(usize, usize, Vec<u8>)> {
    let w = int(&stream.dict, "Width")?;
    let h = int(&stream.dict, "Height")?;
    let decoded = super::filters::decode_stream(&stream.dict, &stream.data).ok()?;
    if decoded.image_codec.is_some() {
        return None;
    }
    let bpc = if stencil { 1 } else { int(&stream.dict, "BitsPerComponent").unwrap_or(8) };
    let max = ((1u64 << bpc) - 1) as f64;
    let s = samples(&decoded.data, w, h, 1, bpc);
    let alpha = s
        .iter()
        .map(|v| {
            if stencil {
                if *v == 0 {
                    255
                } else {
                    0
                }
            } else {
                (*v as f64 / max * 255.0).round() as u8
            }
        })
        .collect();
    Some((w, h, alpha))
}

pub fn decode_image(stream: &Stream, fill: [u8; 3]) -> Option<Pixels> {
    let dict = &stream.dict;
    let width = int(dict, "Width")?;
    let height = int(dict, "Height")?;
    if width.saturating_mul(height) > MAX_IMAGE_PIXELS {
        return None;
    }
    let decoded = super::filters::decode_stream(dict, &stream.data).ok()?;
    let stencil = matches!(dict.get("ImageMask"), Some(Object::Bool(true)));
    let decode_arr: Vec<f64> = dict
        .get("Decode")
        .and_then(Object::as_array)
        .map(|a| a.iter().filter_map(Object::as_f64).collect())
        .unwrap_or_default();

    let mut rgba: Vec<[u8; 4]> = match decoded.image_codec.as_deref() {
        Some("DCTDecode") => {
            let img = image::load_from_memory_with_format(&decoded.data, image::ImageFormat::Jpeg).ok()?;
            let rgb = img.to_rgb8();
            if rgb.width() as usize != width || rgb.height() as usize != height {
                return None;
            }
            rgb.pixels().map(|p| [p[0], p[1], p[2], 255]).collect()
        }
        Some(_) => vec![[128, 128, 128, 255]; width * height],
        None if stencil => {
            let s = samples(&decoded.data, width, height, 1, 1);
            let paint_on = if decode_arr.first() == Some(&1.0) { 1 } else { 0 };
            s.iter()
                .map(|v| if *v == paint_on { [fill[0], fill[1], fill[2], 255] } else { [0, 0, 0, 0] })
                .collect()
        }
        None => {
            let cs = ColorSpace::from_object(dict.get("ColorSpace"));
            let comps = cs.components();
            let bpc = int(dict, "BitsPerComponent").unwrap_or(8);
            let max = ((1u64 << bpc.min(16)) - 1) as f64;
            let indexed = matches!(cs, ColorSpace::Indexed { .. });
            let s = samples(&decoded.data, width, height, comps, bpc);
            let mut buf = vec![0f64; comps];
            s.chunks(comps)
                .map(|px| {
                    for (k, v) in px.iter().enumerate() {
                        let (dmin, dmax) = match (decode_arr.get(2 * k), decode_arr.get(2 * k + 1)) {
                            (Some(a), Some(b)) => (*a, *b),
                            _ if indexed => (0.0, max),
                            _ => (0.0, 1.0),
                        };
                        buf[k] = dmin + *v as f64 * (dmax - dmin) / max;
                    }
                    let c = cs.to_rgb(&buf);
                    [c[0], c[1], c[2], 255]
                })
                .collect()
        }
    };
    rgba.resize(width * height, [255, 255, 255, 255]);

    let mask = match (dict.get("SMask"), dict.get("Mask")) {
        (Some(Object::Stream(s)), _) => decode_mask(s, false),
        (_, Some(Object::Stream(s))) => decode_mask(s, true),
        _ => None,
    };
    if let Some((mw, mh, alpha)) = mask {
        for y in 0..height {
            for x in 0..width {
                let my = y * mh / height;
                let mx = x * mw / width;
                let a = alpha.get(my * mw + mx).copied().unwrap_or(255);
                let p = &mut rgba[y * width + x];
                p[3] = ((p[3] as u32 * a as u32) / 255) as u8;
            }
        }
    }
    Some(Pixels { width, height, rgba })
}

/// Draws page content into a canvas covering `region` at `scale` pixels per point.
pub struct Renderer {
    canvas: Canvas,
    origin: (f64, f64),
    scale: f64,
}

impl Renderer {
    pub fn new(region: Rect, width: usize, height: usize) -> Self {
        let scale = if region.width() > 0.0 { width as f64 / region.width() } else { 1.0 };
        Renderer {
            canvas: Canvas::new(width, height),
            origin: (region.x0, region.y0),
            scale,
        }
    }

    fn to_px(&self, p: (f64, f64)) -> (f64, f64) {
        ((p.0 - self.origin.0) * self.scale, (p.1 - self.origin.1) * self.scale)
    }

    fn rect_px(&self, r: Rect) -> Rect {
        let (x0, y0) = self.to_px((r.x0, r.y0));
        let (x1, y1) = self.to_px((r.x1, r.y1));
        Rect::new(x0, y0, x1, y1)
    }

    pub fn draw(&mut self, content: &PageContent) {
        for item in &content.items {
            match item {
                Item::Path(p) => self.draw_path(p),
                Item::Image(i) => self.draw_image(i),
                Item::Text(t) => self.draw_text(t),
            }
        }
    }

    fn draw_path(&mut self, p: &PaintedPath) {
        let Some(clip) = self.canvas.clip_to(p.clip.map(|c| self.rect_px(c))) else { return };
        let bb = self.rect_px(p.bbox);
        if bb.x1 < clip.x0 || bb.x0 > clip.x1 || bb.y1 < clip.y0 || bb.y0 > clip.y1 {
            return;
        }
        let subpaths: Vec<Vec<(f64, f64)>> = p
            .subpaths
            .iter()
            .map(|s| s.iter().map(|pt| self.to_px(*pt)).collect())
            .collect();
        if let Some((rule, color)) = p.fill {
            self.canvas.fill_polygons(&subpaths, rule, color, clip);
        }
        if let Some((color, width)) = p.stroke {
            let half = (width * self.scale / 2.0).max(0.5);
            let mut polys = Vec::new();
            for (s, closed) in subpaths.iter().zip(&p.closed) {
                polys.extend(stroke_polygons(s, *closed, half));
            }
            self.canvas.fill_polygons(&polys, FillRule::NonZero, color, clip);
        }
    }

    fn draw_image(&mut self, img: &ImagePlacement) {
        let Some(clip) = self.canvas.clip_to(img.clip.map(|c| self.rect_px(c))) else { return };
        let to_px = [self.scale, 0.0, 0.0, self.scale, -self.origin.0 * self.scale, -self.origin.1 * self.scale];
        let full = mul(&img.matrix, &to_px);
        let Some(inv) = invert(&full) else { return };
        let bb = self.rect_px(img.bbox);
        let x0 = bb.x0.max(clip.x0).floor().max(0.0) as usize;
        let y0 = bb.y0.max(clip.y0).floor().max(0.0) as usize;
        let x1 = (bb.x1.min(clip.x1).ceil().max(0.0) as usize).min(self.canvas.width);
        let y1 = (bb.y1.min(clip.y1).ceil().max(0.0) as usize).min(self.canvas.height);
        if x1 <= x0 || y1 <= y0 {
            return;
        }
        let pixels = decode_image(&img.stream, img.fill).unwrap_or(Pixels {
            width: 1,
            height: 1,
            rgba: vec![[128, 128, 128, 255]],
        });
        for py in y0..y1 {
            for px in x0..x1 {
                let (u, v) = apply(&inv, px as f64 + 0.5, py as f64 + 0.5);
                if !(0.0..1.0).contains(&u) || !(0.0..1.0).contains(&v) {
                    continue;
                }
                let col = ((u * pixels.width as f64) as usize).min(pixels.width - 1);
                let row = (((1.0 - v) * pixels.height as f64) as usize).min(pixels.height - 1);
                let p = pixels.rgba[row * pixels.width + col];
                self.canvas.blend(px, py, p[3] as f32 / 255.0, [p[0], p[1], p[2]]);
            }
        }
    }

    fn draw_text(&mut self, t: &TextRun) {
        if t.invisible {
            return;
        }
        let Some(clip) = self.canvas.clip_to(t.clip.map(|c| self.rect_px(c))) else { return };
        for g in &t.glyphs {
            if g.ch.is_whitespace() {
                continue;
            }
            let b = self.rect_px(g.bbox);
            let (w, h) = (b.width(), b.height());
            if w <= 0.0 || h <= 0.0 {
                continue;
            }
            // Upright em box: cap height spans 0.1..0.8 of the box from the top.
            let cell_w = w * 0.8 / glyphs::GLYPH_W as f64;
            let cell_h = h * 0.7 / glyphs::GLYPH_H as f64;
            let left = b.x0 + w * 0.1;
            let top = b.y0 + h * 0.1;
            for (cx, cy) in glyphs::cells(g.ch) {
                let r = Rect::new(
                    left + cx as f64 * cell_w,
                    top + cy as f64 * cell_h,
                    left + (cx + 1) as f64 * cell_w,
                    top + (cy + 1) as f64 * cell_h,
                );
                self.canvas.fill_rect(r, t.color, clip);
            }
        }
    }

    pub fn finish(self) -> RgbImage {
        self.canvas.into_image()
    }
}

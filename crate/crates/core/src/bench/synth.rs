//! Synthetic chart images with known data, and the bundled mini dataset.

use std::path::Path;

use image::{Rgb, RgbImage};

use super::{BenchError, ChartType, EvalRecord, GroundTruth, Manifest, ManifestRecord, Split};
use crate::bench::table_from_tsv;
use crate::glyphs::{cells, GLYPH_H, GLYPH_W};

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const INK: Rgb<u8> = Rgb([40, 40, 40]);
const GRID: Rgb<u8> = Rgb([225, 225, 225]);
const PALETTE: [Rgb<u8>; 4] = [Rgb([31, 119, 180]), Rgb([255, 127, 14]), Rgb([44, 160, 44]), Rgb([214, 39, 40])];

#[derive(Debug, Clone, PartialEq)]
pub struct ChartSpec {
    pub id: String,
    pub title: String,
    pub chart_type: ChartType,
    pub split: Split,
    /// Name of the category axis; first header cell of table ground truth.
    pub x_label: String,
    pub categories: Vec<String>,
    /// `(name, values)`, one value per category. Box charts carry five series:
    /// min, q1, median, q3, max.
    pub series: Vec<(String, Vec<f64>)>,
    /// Ground truth as a single series rather than a table.
    pub as_series: bool,
}

impl ChartSpec {
    pub fn ground_truth(&self) -> GroundTruth {
        if self.as_series {
            let (label, values) = self.series[0].clone();
            return GroundTruth::Series { label, values };
        }
        let mut tsv = self.x_label.clone();
        for (name, _) in &self.series {
            tsv.push('\t');
            tsv.push_str(name);
        }
        tsv.push('\n');
        for (i, c) in self.categories.iter().enumerate() {
            tsv.push_str(c);
            for (_, v) in &self.series {
                tsv.push('\t');
                tsv.push_str(&v[i].to_string());
            }
            tsv.push('\n');
        }
        GroundTruth::Table(table_from_tsv(&tsv))
    }
}

struct Canvas {
    img: RgbImage,
}

impl Canvas {
    fn new(w: u32, h: u32) -> Self {
        Canvas {
            img: RgbImage::from_pixel(w, h, WHITE),
        }
    }

    fn rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, c: Rgb<u8>) {
        let (w, h) = (self.img.width() as i64, self.img.height() as i64);
        for y in y0.max(0)..y1.min(h) {
            for x in x0.max(0)..x1.min(w) {
                self.img.put_pixel(x as u32, y as u32, c);
            }
        }
    }

    fn line(&mut self, (x0, y0): (f64, f64), (x1, y1): (f64, f64), thick: i64, c: Rgb<u8>) {
        let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
        let r = thick / 2;
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            let x = (x0 + t * (x1 - x0)).round() as i64;
            let y = (y0 + t * (y1 - y0)).round() as i64;
            self.rect(x - r, y - r, x - r + thick, y - r + thick, c);
        }
    }

    fn text(&mut self, x: i64, y: i64, scale: i64, s: &str, c: Rgb<u8>) {
        for (i, ch) in s.chars().enumerate() {
            let ox = x + i as i64 * (GLYPH_W as i64 + 1) * scale;
            for (col, row) in cells(ch) {
                let px = ox + col as i64 * scale;
                let py = y + row as i64 * scale;
                self.rect(px, py, px + scale, py + scale, c);
            }
        }
    }

    fn text_centered(&mut self, cx: f64, y: i64, scale: i64, s: &str, c: Rgb<u8>) {
        let x = cx.round() as i64 - text_width(s, scale) / 2;
        self.text(x, y, scale, s, c);
    }
}

fn text_width(s: &str, scale: i64) -> i64 {
    let n = s.chars().count() as i64;
    if n == 0 {
        0
    } else {
        (n * (GLYPH_W as i64 + 1) - 1) * scale
    }
}

/// A 1/2/5 × 10^k step giving about five intervals up to `max`.
fn nice_step(max: f64) -> f64 {
    let raw = max / 5.0;
    let p = 10f64.powf(raw.log10().floor());
    let m = raw / p;
    let f = if m <= 1.0 {
        1.0
    } else if m <= 2.0 {
        2.0
    } else if m <= 5.0 {
        5.0
    } else {
        10.0
    };
    f * p
}

fn fmt_tick(v: f64) -> String {
    let r = (v * 1e6).round() / 1e6;
    r.to_string()
}

fn fmt_value(v: f64) -> String {
    v.to_string()
}

const W: u32 = 560;
const H: u32 = 380;
const TEXT: i64 = 2;
const GH: i64 = GLYPH_H as i64 * TEXT;

struct Frame {
    left: f64,
    right: f64,
    top: f64,
    bottom: f64,
    vmax: f64,
}

impl Frame {
    fn y(&self, v: f64) -> f64 {
        self.bottom - v / self.vmax * (self.bottom - self.top)
    }
    fn x(&self, v: f64) -> f64 {
        self.left + v / self.vmax * (self.right - self.left)
    }
}

fn value_axis(c: &mut Canvas, f: &Frame, step: f64, horizontal: bool) {
    let mut v = 0.0;
    while v <= f.vmax + 1e-9 {
        let label = fmt_tick(v);
        if horizontal {
            let x = f.x(v);
            c.line((x, f.top), (x, f.bottom), 1, GRID);
            c.text_centered(x, f.bottom as i64 + 8, TEXT, &label, INK);
        } else {
            let y = f.y(v);
            c.line((f.left, y), (f.right, y), 1, GRID);
            c.text(f.left as i64 - 8 - text_width(&label, TEXT), y as i64 - GH / 2, TEXT, &label, INK);
        }
        v += step;
    }
    c.line((f.left, f.top), (f.left, f.bottom), 2, INK);
    c.line((f.left, f.bottom), (f.right, f.bottom), 2, INK);
}

fn legend(c: &mut Canvas, series: &[(String, Vec<f64>)], x: i64) {
    for (i, (name, _)) in series.iter().enumerate() {
        let y = 50 + i as i64 * (GH + 10);
        c.rect(x, y, x + GH, y + GH, PALETTE[i % PALETTE.len()]);
        c.text(x + GH + 6, y, TEXT, name, INK);
    }
}

/// Draws the chart described by `spec`.
pub fn render_chart(spec: &ChartSpec) -> RgbImage {
    let mut c = Canvas::new(W, H);
    c.text_centered(W as f64 / 2.0, 12, TEXT, &spec.title, INK);
    let multi = spec.series.len() > 1 && spec.chart_type != ChartType::Box;
    let legend_w = if multi {
        spec.series.iter().map(|(n, _)| text_width(n, TEXT)).max().unwrap_or(0) + GH + 40
    } else {
        0
    };
    let max = spec.series.iter().flat_map(|(_, v)| v.iter().copied()).fold(0.0, f64::max);
    let step = nice_step(max * 1.1);
    let vmax = (max * 1.1 / step).ceil() * step;
    let horizontal = spec.chart_type == ChartType::Other;
    let cat_w = spec.categories.iter().map(|s| text_width(s, TEXT)).max().unwrap_or(0);
    let f = Frame {
        left: if horizontal { (cat_w + 24) as f64 } else { 80.0 },
        right: (W as i64 - 24 - legend_w) as f64,
        top: 44.0,
        bottom: (H as i64 - 44) as f64,
        vmax,
    };
    value_axis(&mut c, &f, step, horizontal);
    if multi {
        legend(&mut c, &spec.series, f.right as i64 + 16);
    }
    let n = spec.categories.len().max(1) as f64;
    let labels = matches!(spec.chart_type, ChartType::BarWithLabels | ChartType::LineWithLabels);
    match spec.chart_type {
        ChartType::Other => {
            let slot = (f.bottom - f.top) / n;
            for (i, cat) in spec.categories.iter().enumerate() {
                let y0 = f.top + slot * i as f64 + slot * 0.2;
                let y1 = y0 + slot * 0.6;
                let v = spec.series[0].1[i];
                c.rect(f.left as i64 + 1, y0 as i64, f.x(v) as i64, y1 as i64, PALETTE[0]);
                let ty = ((y0 + y1) / 2.0) as i64 - GH / 2;
                c.text(f.left as i64 - 10 - text_width(cat, TEXT), ty, TEXT, cat, INK);
            }
        }
        ChartType::Bar | ChartType::BarWithLabels | ChartType::Histogram => {
            let slot = (f.right - f.left) / n;
            let (fill, gap) = if spec.chart_type == ChartType::Histogram { (1.0, 1.0) } else { (0.7, 0.0) };
            let k = spec.series.len() as f64;
            let bw = slot * fill / k;
            for (i, cat) in spec.categories.iter().enumerate() {
                let x_start = f.left + slot * i as f64 + slot * (1.0 - fill) / 2.0;
                for (s, (_, vals)) in spec.series.iter().enumerate() {
                    let x0 = x_start + bw * s as f64;
                    let y = f.y(vals[i]);
                    c.rect((x0 + gap) as i64, y as i64, (x0 + bw - gap) as i64, f.bottom as i64 - 1, PALETTE[s % PALETTE.len()]);
                    if labels {
                        c.text_centered(x0 + bw / 2.0, y as i64 - GH - 4, TEXT, &fmt_value(vals[i]), INK);
                    }
                }
                c.text_centered(f.left + slot * (i as f64 + 0.5), f.bottom as i64 + 10, TEXT, cat, INK);
            }
        }
        ChartType::Line | ChartType::LineWithLabels => {
            let slot = (f.right - f.left) / n;
            let xs: Vec<f64> = (0..spec.categories.len()).map(|i| f.left + slot * (i as f64 + 0.5)).collect();
            for (s, (_, vals)) in spec.series.iter().enumerate() {
                let color = PALETTE[s % PALETTE.len()];
                for i in 1..vals.len() {
                    c.line((xs[i - 1], f.y(vals[i - 1])), (xs[i], f.y(vals[i])), 3, color);
                }
                for (i, v) in vals.iter().enumerate() {
                    let (x, y) = (xs[i] as i64, f.y(*v) as i64);
                    c.rect(x - 4, y - 4, x + 5, y + 5, color);
                    if labels {
                        // First series labelled below its points, the rest above.
                        let ty = if s == 0 && spec.series.len() > 1 { y + 10 } else { y - GH - 8 };
                        c.text_centered(xs[i], ty, TEXT, &fmt_value(*v), INK);
                    }
                }
            }
            for (i, cat) in spec.categories.iter().enumerate() {
                c.text_centered(xs[i], f.bottom as i64 + 10, TEXT, cat, INK);
            }
        }
        ChartType::Box => {
            let slot = (f.right - f.left) / n;
            for (i, cat) in spec.categories.iter().enumerate() {
                let stat = |k: usize| f.y(spec.series[k].1[i]);
                let cx = f.left + slot * (i as f64 + 0.5);
                let half = slot * 0.2;
                let color = PALETTE[i % PALETTE.len()];
                c.line((cx, stat(0)), (cx, stat(1)), 2, INK);
                c.line((cx, stat(3)), (cx, stat(4)), 2, INK);
                c.line((cx - half / 2.0, stat(0)), (cx + half / 2.0, stat(0)), 2, INK);
                c.line((cx - half / 2.0, stat(4)), (cx + half / 2.0, stat(4)), 2, INK);
                c.rect((cx - half) as i64, stat(3) as i64, (cx + half) as i64, stat(1) as i64, color);
                c.line((cx - half, stat(2)), (cx + half, stat(2)), 3, INK);
                c.text_centered(cx, f.bottom as i64 + 10, TEXT, cat, INK);
            }
        }
    }
    c.img
}

#[allow(clippy::too_many_arguments)]
fn spec(
    id: &str,
    title: &str,
    chart_type: ChartType,
    split: Split,
    x_label: &str,
    categories: &[&str],
    series: &[(&str, &[f64])],
    as_series: bool,
) -> ChartSpec {
    ChartSpec {
        id: id.into(),
        title: title.into(),
        chart_type,
        split,
        x_label: x_label.into(),
        categories: categories.iter().map(|s| s.to_string()).collect(),
        series: series.iter().map(|(n, v)| (n.to_string(), v.to_vec())).collect(),
        as_series,
    }
}

/// The ten charts of the bundled mini dataset. No value is zero, and within a record no
/// two values are between 0.95% and 11.6% apart, so a uniform +4% error stays inside a
/// 5% tolerance of its own value while +6% lands outside every value's tolerance.
pub fn mini_specs() -> Vec<ChartSpec> {
    use ChartType::*;
    use Split::*;
    vec![
        spec("mini-01", "Revenue by region", Bar, Dev, "Region", &["North", "South", "East", "West"], &[("Revenue", &[12.0, 27.0, 45.0, 80.0])], false),
        spec("mini-02", "Units sold", BarWithLabels, Dev, "Product", &["A", "B", "C", "D", "E"], &[("Units", &[2.1, 3.2, 5.0, 7.5, 11.4])], false),
        spec("mini-03", "Active users", Line, Dev, "Year", &["2016", "2017", "2018", "2019", "2020"], &[("Users", &[140.0, 180.0, 230.0, 310.0, 420.0])], false),
        spec(
            "mini-04",
            "Accuracy by month",
            LineWithLabels,
            Validation,
            "Month",
            &["Jan", "Feb", "Mar", "Apr", "May"],
            &[("Model A", &[20.0, 26.0, 34.0, 44.0, 57.0]), ("Model B", &[23.0, 30.0, 39.0, 50.0, 65.0])],
            false,
        ),
        spec(
            "mini-05",
            "Response time",
            Box,
            Validation,
            "Group",
            &["Control", "Treated"],
            &[("min", &[4.0, 4.6]), ("q1", &[7.0, 8.2]), ("median", &[10.0, 12.0]), ("q3", &[15.0, 19.0]), ("max", &[24.0, 30.0])],
            false,
        ),
        spec("mini-06", "Age distribution", Histogram, Validation, "Bin", &["0-10", "10-20", "20-30", "30-40", "40-50"], &[("Count", &[4.0, 9.0, 17.0, 30.0, 13.0])], false),
        spec("mini-07", "Browser share", Other, Validation, "Browser", &["Chrome", "Safari", "Edge", "Firefox"], &[("Share", &[64.0, 19.0, 5.2, 2.8])], true),
        spec("mini-08", "Emissions", Bar, Validation, "Sector", &["Power", "Transport", "Industry", "Homes"], &[("Emissions", &[1.5, 3.9, 2.4, 6.3])], true),
        spec("mini-09", "Temperature", Line, Validation, "Day", &["Mon", "Tue", "Wed", "Thu", "Fri"], &[("Temperature", &[11.0, 14.0, 18.0, 23.0, 29.0])], true),
        spec(
            "mini-10",
            "Quarterly sales",
            Bar,
            Validation,
            "Quarter",
            &["Q1", "Q2", "Q3"],
            &[("2022", &[8.0, 13.0, 21.0]), ("2023", &[10.0, 16.0, 26.0])],
            false,
        ),
    ]
}

/// Renders `specs` into `dir` as PNGs plus `manifest.json`.
pub fn write_dataset(specs: &[ChartSpec], name: &str, dir: &Path) -> Result<Vec<EvalRecord>, BenchError> {
    let io = |e: String| BenchError::Io(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(|e| io(e.to_string()))?;
    let mut records = Vec::new();
    for s in specs {
        let path = dir.join(format!("{}.png", s.id));
        render_chart(s).save(&path).map_err(|e| io(e.to_string()))?;
        records.push(EvalRecord {
            id: s.id.clone(),
            image: path,
            chart_type: s.chart_type,
            split: s.split,
            ground_truth: s.ground_truth(),
        });
    }
    let manifest = Manifest {
        dataset: name.to_string(),
        records: records.iter().map(|r| ManifestRecord::from_record(r, dir)).collect(),
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| io(e.to_string()))?;
    text.push('\n');
    std::fs::write(dir.join("manifest.json"), text).map_err(|e| io(e.to_string()))?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nice_steps() {
        assert_eq!(nice_step(88.0), 20.0);
        assert_eq!(nice_step(4.4), 1.0);
        assert_eq!(nice_step(33.0), 10.0);
    }

    #[test]
    fn table_ground_truth_layout() {
        let s = &mini_specs()[3];
        let GroundTruth::Table(t) = s.ground_truth() else { panic!() };
        assert_eq!(t.header, ["Month", "Model A", "Model B"]);
        assert_eq!(t.rows[2][2].numeric, Some(39.0));
    }

    #[test]
    fn bars_land_at_value_height() {
        let s = spec("t", "", ChartType::Bar, Split::Dev, "x", &["a"], &[("v", &[50.0])], true);
        let img = render_chart(&s);
        // vmax = 60: the bar top sits at 5/6 of the plot height above the baseline.
        let (top, bottom) = (44.0, (H - 44) as f64);
        let y_top = (bottom - 50.0 / 60.0 * (bottom - top)) as u32;
        let cx = (80.0 + (W as f64 - 24.0 - 80.0) / 2.0) as u32;
        assert_eq!(*img.get_pixel(cx, y_top + 2), PALETTE[0]);
        assert_eq!(*img.get_pixel(cx, y_top - 3), WHITE);
    }
}

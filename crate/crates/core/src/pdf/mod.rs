//! Figure detection in PDF documents.
//!
//! A document is parsed once ([`PdfDocument::open`]); each page is interpreted into text
//! blocks, raster image placements and vector drawing clusters ([`PageLayout`]). Blocks
//! whose text opens with a figure caption anchor a crop that grows over nearby graphics.

mod caption;
pub mod content;
mod document;
pub mod filters;
pub mod fixture;
mod font;
mod layout;
pub mod object;
pub mod raster;
mod region;

use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::debug;

pub use caption::{caption_label, roman_value};
pub use layout::{cluster_boxes, CLUSTER_GAP};
pub use region::{column_overlap, expand_region_with, RegionParams};

use crate::geometry::Rect;
use document::Document;

pub const DEFAULT_DPI: u32 = 144;
/// Renders beyond this many pixels on a side are refused.
const MAX_RENDER_SIDE: f64 = 20_000.0;

#[derive(Debug, Error)]
pub enum PdfError {
    #[error("malformed PDF: {0}")]
    MalformedPdf(String),
    #[error("PDF is encrypted")]
    EncryptedPdf,
    #[error("render failed: {0}")]
    RenderFailure(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextBlock {
    pub text: String,
    pub bbox: Rect,
    pub font_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageLayout {
    pub page_index: usize,
    pub width: f64,
    pub height: f64,
    pub text_blocks: Vec<TextBlock>,
    pub image_boxes: Vec<Rect>,
    pub drawing_boxes: Vec<Rect>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionMatch {
    pub page_index: usize,
    pub block: Rect,
    pub label: String,
    pub caption_text: String,
}

#[derive(Debug, Clone)]
pub struct FigureRegion {
    pub caption: CaptionMatch,
    pub crop: Rect,
    pub image: RgbImage,
    pub dpi: u32,
}

/// Parsed, immutable document. Safe to share across threads.
#[derive(Debug)]
pub struct PdfDocument {
    doc: Document,
}

impl PdfDocument {
    pub fn open(bytes: &[u8]) -> Result<Self, PdfError> {
        Ok(PdfDocument {
            doc: Document::load(bytes.to_vec())?,
        })
    }

    pub fn page_count(&self) -> usize {
        self.doc.pages().len()
    }

    fn page(&self, index: usize) -> Result<&document::PageInfo, PdfError> {
        self.doc
            .pages()
            .get(index)
            .ok_or_else(|| PdfError::RenderFailure(format!("page {index} out of range")))
    }

    /// Interpreted content of one page.
    pub fn content(&self, index: usize) -> Result<content::PageContent, PdfError> {
        let page = self
            .doc
            .pages()
            .get(index)
            .ok_or_else(|| PdfError::MalformedPdf(format!("page {index} out of range")))?;
        content::interpret_page(&self.doc, page)
    }

    pub fn layout(&self, index: usize) -> Result<PageLayout, PdfError> {
        Ok(layout::build_layout(index, &self.content(index)?))
    }

    pub fn layouts(&self) -> Result<Vec<PageLayout>, PdfError> {
        (0..self.page_count()).map(|i| self.layout(i)).collect()
    }
}

/// One layout per page.
pub fn scan_pdf(bytes: &[u8]) -> Result<Vec<PageLayout>, PdfError> {
    PdfDocument::open(bytes)?.layouts()
}

/// Caption matches in block order.
pub fn find_captions(layout: &PageLayout) -> Vec<CaptionMatch> {
    layout
        .text_blocks
        .iter()
        .filter_map(|b| {
            caption_label(&b.text).map(|label| CaptionMatch {
                page_index: layout.page_index,
                block: b.bbox,
                label,
                caption_text: b.text.clone(),
            })
        })
        .collect()
}

pub fn expand_region(caption: &CaptionMatch, layout: &PageLayout) -> Rect {
    expand_region_with(caption, layout, &RegionParams::default())
}

/// Pixel size of `region` at `dpi`.
pub fn render_size(region: &Rect, dpi: u32) -> (u32, u32) {
    let s = dpi as f64 / 72.0;
    (
        ((region.width() * s).round() as u32).max(1),
        ((region.height() * s).round() as u32).max(1),
    )
}

pub fn render_region(doc: &PdfDocument, region: Rect, page_index: usize, dpi: u32) -> Result<RgbImage, PdfError> {
    let page = doc.page(page_index)?;
    if !region.is_finite() || region.width() <= 0.0 || region.height() <= 0.0 || dpi == 0 {
        return Err(PdfError::RenderFailure(format!("empty region {region:?}")));
    }
    let (w, h) = render_size(&region, dpi);
    if w as f64 > MAX_RENDER_SIDE || h as f64 > MAX_RENDER_SIDE {
        return Err(PdfError::RenderFailure(format!("render of {w}x{h} px refused")));
    }
    let content = content::interpret_page(&doc.doc, page).map_err(|e| PdfError::RenderFailure(e.to_string()))?;
    let mut r = raster::Renderer::new(region, w as usize, h as usize);
    r.draw(&content);
    Ok(r.finish())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectOptions {
    pub params: RegionParams,
    pub dpi: u32,
}

impl Default for DetectOptions {
    fn default() -> Self {
        DetectOptions {
            params: RegionParams::default(),
            dpi: DEFAULT_DPI,
        }
    }
}

/// Captions, crops and renders for every page.
pub fn detect_figures(doc: &PdfDocument, options: &DetectOptions) -> Result<Vec<FigureRegion>, PdfError> {
    let mut out = Vec::new();
    for index in 0..doc.page_count() {
        let page_content = doc.content(index)?;
        let layout = layout::build_layout(index, &page_content);
        for caption in find_captions(&layout) {
            let crop = expand_region_with(&caption, &layout, &options.params);
            debug!(page = index, label = %caption.label, ?crop, "figure");
            let (w, h) = render_size(&crop, options.dpi);
            let mut r = raster::Renderer::new(crop, w as usize, h as usize);
            r.draw(&page_content);
            out.push(FigureRegion {
                caption,
                crop,
                image: r.finish(),
                dpi: options.dpi,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFigure {
    pub label: String,
    pub page: usize,
    pub crop: Rect,
    pub caption: String,
    pub image_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureManifest {
    pub source: String,
    pub figures: Vec<ManifestFigure>,
}

/// File stem for a figure image: `p{page}-{label}` with duplicates numbered.
pub fn figure_file_names(regions: &[FigureRegion]) -> Vec<String> {
    let mut seen = std::collections::HashMap::<String, usize>::new();
    regions
        .iter()
        .map(|r| {
            let base = format!(
                "p{}-{}",
                r.caption.page_index + 1,
                r.caption.label.to_ascii_lowercase().replace(' ', "-")
            );
            let n = seen.entry(base.clone()).or_insert(0);
            *n += 1;
            if *n == 1 {
                format!("{base}.png")
            } else {
                format!("{base}-{n}.png")
            }
        })
        .collect()
}

/// Writes one PNG per region plus `manifest.json` into `out_dir`.
pub fn write_figures(regions: &[FigureRegion], source: &str, out_dir: &Path) -> std::io::Result<FigureManifest> {
    std::fs::create_dir_all(out_dir)?;
    let mut figures = Vec::new();
    for (region, name) in regions.iter().zip(figure_file_names(regions)) {
        let path: PathBuf = out_dir.join(&name);
        region
            .image
            .save_with_format(&path, image::ImageFormat::Png)
            .map_err(std::io::Error::other)?;
        figures.push(ManifestFigure {
            label: region.caption.label.clone(),
            page: region.caption.page_index,
            crop: region.crop,
            caption: region.caption.caption_text.clone(),
            image_path: name,
        });
    }
    let manifest = FigureManifest {
        source: source.to_string(),
        figures,
    };
    let json = serde_json::to_vec_pretty(&manifest).map_err(std::io::Error::other)?;
    std::fs::write(out_dir.join("manifest.json"), json)?;
    Ok(manifest)
}

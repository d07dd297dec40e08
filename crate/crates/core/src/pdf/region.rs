//! Crop-region growth from a caption anchor.

use serde::{Deserialize, Serialize};

use super::{CaptionMatch, PageLayout};
use crate::geometry::Rect;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionParams {
    /// Graphics strictly closer than this join the region, in points.
    pub proximity: f64,
    pub padding: f64,
    /// Height of the no-graphics band above the caption, as a fraction of page height.
    pub fallback_fraction: f64,
    /// Minimum horizontal overlap with the caption, relative to the narrower span.
    pub min_column_overlap: f64,
}

impl Default for RegionParams {
    fn default() -> Self {
        RegionParams {
            proximity: 36.0,
            padding: 6.0,
            fallback_fraction: 0.4,
            min_column_overlap: 0.3,
        }
    }
}

/// Horizontal overlap of `a` and `b` divided by the narrower width. Spans thinner than a
/// point are widened to one point around their centre so rules and axes still register.
pub fn column_overlap(a: &Rect, b: &Rect) -> f64 {
    let widen = |r: &Rect| {
        if r.width() < 1.0 {
            let c = (r.x0 + r.x1) / 2.0;
            (c - 0.5, c + 0.5)
        } else {
            (r.x0, r.x1)
        }
    };
    let (a0, a1) = widen(a);
    let (b0, b1) = widen(b);
    let overlap = (a1.min(b1) - a0.max(b0)).max(0.0);
    overlap / (a1 - a0).min(b1 - b0)
}

pub fn expand_region_with(caption: &CaptionMatch, layout: &PageLayout, params: &RegionParams) -> Rect {
    let candidates: Vec<Rect> = layout
        .image_boxes
        .iter()
        .chain(layout.drawing_boxes.iter())
        .filter(|b| column_overlap(b, &caption.block) >= params.min_column_overlap)
        .copied()
        .collect();
    let mut taken = vec![false; candidates.len()];
    let mut region = caption.block;
    let mut grew = true;
    while grew {
        grew = false;
        for (i, c) in candidates.iter().enumerate() {
            if !taken[i] && region.distance(c) < params.proximity {
                region = region.union(c);
                taken[i] = true;
                grew = true;
            }
        }
    }
    if !taken.iter().any(|t| *t) {
        let band = params.fallback_fraction * layout.height;
        region = Rect::new(
            caption.block.x0,
            caption.block.y0 - band,
            caption.block.x1,
            caption.block.y1,
        );
    }
    region.pad(params.padding).clamp(layout.width, layout.height)
}

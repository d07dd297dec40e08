//! Groups interpreter output into text blocks, image boxes and drawing clusters.

use super::content::{Item, PageContent, TextRun};
use super::{PageLayout, TextBlock};
use crate::geometry::Rect;

/// Drawing primitives closer than this are one cluster.
pub const CLUSTER_GAP: f64 = 5.0;
/// Paths covering more of the page than this are backgrounds, not figures.
const BACKGROUND_FRACTION: f64 = 0.9;

struct Line {
    text: String,
    bbox: Rect,
    size: f64,
}

fn join_runs(runs: &[&TextRun]) -> Vec<Line> {
    let mut lines: Vec<Line> = Vec::new();
    for run in runs {
        if run.text.trim().is_empty() {
            continue;
        }
        let size = run.font_size.max(1.0);
        if let Some(line) = lines.last_mut() {
            let centre_a = (line.bbox.y0 + line.bbox.y1) / 2.0;
            let centre_b = (run.bbox.y0 + run.bbox.y1) / 2.0;
            let gap = run.bbox.x0 - line.bbox.x1;
            let same_line = (centre_a - centre_b).abs() < 0.5 * line.size.max(size) && gap > -size && gap < 1.5 * size;
            if same_line {
                if gap > 0.15 * size && !line.text.ends_with(' ') && !run.text.starts_with(' ') {
                    line.text.push(' ');
                }
                line.text.push_str(&run.text);
                line.bbox = line.bbox.union(&run.bbox);
                line.size = line.size.max(size);
                continue;
            }
        }
        lines.push(Line {
            text: run.text.clone(),
            bbox: run.bbox,
            size,
        });
    }
    lines
}

fn group_lines(lines: Vec<Line>) -> Vec<TextBlock> {
    let mut blocks: Vec<(TextBlock, f64)> = Vec::new();
    for line in lines {
        if let Some((block, last_bottom)) = blocks.last_mut() {
            let ratio = block.font_size.max(line.size) / block.font_size.min(line.size).max(1e-9);
            let gap = line.bbox.y0 - *last_bottom;
            let overlap = block.bbox.horizontal_overlap(&line.bbox);
            if ratio < 1.25 && gap > -0.3 * line.size && gap < 0.7 * line.size && overlap > 0.0 {
                block.text = format!("{} {}", block.text.trim_end(), line.text.trim_start());
                block.bbox = block.bbox.union(&line.bbox);
                block.font_size = block.font_size.max(line.size);
                *last_bottom = line.bbox.y1;
                continue;
            }
        }
        let bottom = line.bbox.y1;
        blocks.push((
            TextBlock {
                text: line.text,
                bbox: line.bbox,
                font_size: line.size,
            },
            bottom,
        ));
    }
    blocks
        .into_iter()
        .map(|(mut b, _)| {
            b.text = b.text.trim().to_string();
            b
        })
        .collect()
}

/// Merges boxes whose gap is at most `gap`, repeating until no pair qualifies.
pub fn cluster_boxes(boxes: &[Rect], gap: f64) -> Vec<Rect> {
    let mut clusters: Vec<Rect> = Vec::new();
    for b in boxes {
        let mut merged = *b;
        let mut i = 0;
        while i < clusters.len() {
            if clusters[i].distance(&merged) <= gap {
                merged = merged.union(&clusters.swap_remove(i));
                i = 0;
            } else {
                i += 1;
            }
        }
        clusters.push(merged);
    }
    clusters.sort_by(|a, b| a.y0.total_cmp(&b.y0).then(a.x0.total_cmp(&b.x0)));
    clusters
}

pub fn build_layout(page_index: usize, content: &PageContent) -> PageLayout {
    let (w, h) = (content.width, content.height);
    let page_area = (w * h).max(1e-9);
    let runs: Vec<&TextRun> = content
        .items
        .iter()
        .filter_map(|i| match i {
            Item::Text(t) => Some(t),
            _ => None,
        })
        .collect();
    let text_blocks = group_lines(join_runs(&runs))
        .into_iter()
        .map(|mut b| {
            b.bbox = b.bbox.clamp(w, h);
            b
        })
        .collect();

    let image_boxes = content
        .items
        .iter()
        .filter_map(|i| match i {
            Item::Image(img) => Some(img.bbox.clamp(w, h)),
            _ => None,
        })
        .filter(|r| r.area() > 0.0)
        .collect();

    let prims: Vec<Rect> = content
        .items
        .iter()
        .filter_map(|i| match i {
            Item::Path(p) => Some(p.bbox.clamp(w, h)),
            _ => None,
        })
        .filter(|r| r.area() < BACKGROUND_FRACTION * page_area && (r.width() > 0.0 || r.height() > 0.0))
        .collect();
    let drawing_boxes = cluster_boxes(&prims, CLUSTER_GAP);

    PageLayout {
        page_index,
        width: w,
        height: h,
        text_blocks,
        image_boxes,
        drawing_boxes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clusters_chain_through_neighbours() {
        let boxes = [
            Rect::new(0.0, 0.0, 10.0, 10.0),
            Rect::new(30.0, 0.0, 40.0, 10.0),
            Rect::new(14.0, 0.0, 26.0, 10.0),
            Rect::new(100.0, 100.0, 110.0, 110.0),
        ];
        let c = cluster_boxes(&boxes, 5.0);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0], Rect::new(0.0, 0.0, 40.0, 10.0));
    }

    #[test]
    fn gap_boundary_inclusive() {
        let c = cluster_boxes(&[Rect::new(0.0, 0.0, 1.0, 1.0), Rect::new(6.0, 0.0, 7.0, 1.0)], 5.0);
        assert_eq!(c.len(), 1);
        let c = cluster_boxes(&[Rect::new(0.0, 0.0, 1.0, 1.0), Rect::new(6.1, 0.0, 7.0, 1.0)], 5.0);
        assert_eq!(c.len(), 2);
    }
}

use serde::Serialize;

use crate::document::BBox;
use crate::raster::{boundary_band, content_mask, BitMask};

/// Boundary dilation radius for anchor and boundary masks, in pixels.
pub const BOUNDARY_DELTA: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GapAxis {
    /// `a` sits above `b`; the gap runs along y.
    Stacked,
    /// `a` sits left of `b`; the gap runs along x.
    SideBySide,
}

/// Whitespace between two neighboring blocks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gap {
    pub a: usize,
    pub b: usize,
    pub axis: GapAxis,
    /// Distance between the facing edges.
    pub size: f64,
    /// The whitespace rectangle between the facing edges over their shared extent.
    pub region: BBox,
    pub midpoint: (f64, f64),
}

/// Content mask, anchor band, and gap list of a clean layout.
#[derive(Debug, Clone)]
pub struct PageContext {
    pub width: usize,
    pub height: usize,
    pub boxes: Vec<BBox>,
    pub content: BitMask,
    pub anchor: BitMask,
    pub gaps: Vec<Gap>,
    content_pixels: Vec<u32>,
    anchor_pixels: Vec<u32>,
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> Option<(f64, f64)> {
    let lo = a0.max(b0);
    let hi = a1.min(b1);
    (hi > lo).then_some((lo, hi))
}

/// Nearest neighbor below and to the right of each box, deduplicated.
pub fn find_gaps(boxes: &[BBox]) -> Vec<Gap> {
    let mut gaps = Vec::new();
    for (i, a) in boxes.iter().enumerate() {
        if a.area() <= 0.0 {
            continue;
        }
        let mut below: Option<(f64, usize, (f64, f64))> = None;
        let mut right: Option<(f64, usize, (f64, f64))> = None;
        for (j, b) in boxes.iter().enumerate() {
            if i == j || b.area() <= 0.0 {
                continue;
            }
            if let Some(span) = overlap(a.x0, a.x1, b.x0, b.x1) {
                let d = b.y0 - a.y1;
                if d > 0.0 && below.is_none_or(|(bd, _, _)| d < bd) {
                    below = Some((d, j, span));
                }
            }
            if let Some(span) = overlap(a.y0, a.y1, b.y0, b.y1) {
                let d = b.x0 - a.x1;
                if d > 0.0 && right.is_none_or(|(bd, _, _)| d < bd) {
                    right = Some((d, j, span));
                }
            }
        }
        if let Some((d, j, (lo, hi))) = below {
            let region = BBox { x0: lo, y0: a.y1, x1: hi, y1: boxes[j].y0 };
            gaps.push(Gap { a: i, b: j, axis: GapAxis::Stacked, size: d, midpoint: region.center(), region });
        }
        if let Some((d, j, (lo, hi))) = right {
            let region = BBox { x0: a.x1, y0: lo, x1: boxes[j].x0, y1: hi };
            gaps.push(Gap { a: i, b: j, axis: GapAxis::SideBySide, size: d, midpoint: region.center(), region });
        }
    }
    gaps
}

impl PageContext {
    pub fn new(boxes: Vec<BBox>, width: usize, height: usize) -> Self {
        let content = content_mask(&boxes, width, height);
        let anchor = boundary_band(&boxes, width, height, BOUNDARY_DELTA);
        let gaps = find_gaps(&boxes);
        let index = |m: &BitMask| m.as_slice().iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i as u32).collect();
        let content_pixels = index(&content);
        let anchor_pixels = index(&anchor);
        Self { width, height, boxes, content, anchor, gaps, content_pixels, anchor_pixels }
    }

    pub fn content_pixels(&self) -> &[u32] {
        &self.content_pixels
    }

    pub fn anchor_pixels(&self) -> &[u32] {
        &self.anchor_pixels
    }

    /// Fraction of the page covered by the anchor band.
    pub fn boundary_density(&self) -> f64 {
        self.anchor_pixels.len() as f64 / (self.width * self.height).max(1) as f64
    }
}

/// Page context from clean-layout boxes (annotations or the clean parse).
pub fn compute_page_context<'a>(boxes: impl IntoIterator<Item = &'a BBox>, width: usize, height: usize) -> PageContext {
    PageContext::new(boxes.into_iter().copied().collect(), width, height)
}

use std::fmt::Write as _;

use image::RgbImage;
use serde::Serialize;

use crate::document::{BBox, Category, ParseOutput};
use crate::probe::{Gap, GapAxis, PageContext};

/// Luminance step that counts as an edge between horizontal or vertical
/// neighbours.
const EDGE_STEP: i32 = 32;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VisualStats {
    pub width: usize,
    pub height: usize,
    pub gray_mean: f64,
    pub gray_std: f64,
    pub gray_skew: f64,
    pub edge_density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayoutStats {
    pub block_count: usize,
    /// Shannon entropy of the category histogram, in bits.
    pub category_entropy: f64,
    pub coverage: f64,
    pub mean_block_area: f64,
    pub std_block_area: f64,
    pub max_block_area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpatialStats {
    pub gap_count: usize,
    /// Gaps per 1000 px of page height.
    pub gap_density: f64,
    pub mean_gap: Option<f64>,
    pub min_gap: Option<f64>,
    pub columns: usize,
    pub boundary_density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Block {
    pub category: Category,
    pub bbox: BBox,
}

/// Page features available to policies. Built from the page image and the
/// clean parse only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyContext {
    pub page_id: String,
    pub visual: VisualStats,
    pub layout: LayoutStats,
    pub spatial: SpatialStats,
    pub blocks: Vec<Block>,
    pub gaps: Vec<Gap>,
}

fn luma(p: &image::Rgb<u8>) -> i32 {
    (299 * p[0] as i32 + 587 * p[1] as i32 + 114 * p[2] as i32) / 1000
}

fn visual_stats(image: &RgbImage) -> VisualStats {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let n = (w * h).max(1) as f64;
    let lum: Vec<i32> = image.pixels().map(luma).collect();
    let mean = lum.iter().map(|&v| v as f64).sum::<f64>() / n;
    let (m2, m3) = lum.iter().fold((0.0, 0.0), |(a, b), &v| {
        let d = v as f64 - mean;
        (a + d * d, b + d * d * d)
    });
    let var = m2 / n;
    let std = var.sqrt();
    let skew = if std > 0.0 { m3 / n / (std * std * std) } else { 0.0 };
    let mut edges = 0usize;
    for y in 0..h {
        for x in 0..w {
            let v = lum[y * w + x];
            let right = x + 1 < w && (lum[y * w + x + 1] - v).abs() >= EDGE_STEP;
            let down = y + 1 < h && (lum[(y + 1) * w + x] - v).abs() >= EDGE_STEP;
            edges += (right || down) as usize;
        }
    }
    VisualStats { width: w, height: h, gray_mean: mean, gray_std: std, gray_skew: skew, edge_density: edges as f64 / n }
}

/// Largest number of blocks cut by a single horizontal scanline, sampled at
/// every block's vertical centre.
fn column_count(boxes: &[BBox]) -> usize {
    boxes
        .iter()
        .map(|b| {
            let y = (b.y0 + b.y1) / 2.0;
            boxes.iter().filter(|o| o.area() > 0.0 && o.y0 <= y && y < o.y1).count()
        })
        .max()
        .unwrap_or(0)
}

impl PolicyContext {
    pub fn new(image: &RgbImage, clean: &ParseOutput, page: &PageContext) -> Self {
        let visual = visual_stats(image);
        let page_area = (page.width * page.height).max(1) as f64;
        let areas: Vec<f64> = clean.elements.iter().map(|e| e.bbox.area() / page_area).collect();
        let n = areas.len();
        let mean_area = if n > 0 { areas.iter().sum::<f64>() / n as f64 } else { 0.0 };
        let std_area =
            if n > 0 { (areas.iter().map(|a| (a - mean_area).powi(2)).sum::<f64>() / n as f64).sqrt() } else { 0.0 };
        let entropy = Category::ALL
            .iter()
            .map(|c| clean.elements.iter().filter(|e| e.category == *c).count())
            .filter(|&k| k > 0)
            .map(|k| {
                let p = k as f64 / n as f64;
                -p * p.log2()
            })
            .sum::<f64>();
        let sizes: Vec<f64> = page.gaps.iter().map(|g| g.size).collect();
        let boxes: Vec<BBox> = clean.elements.iter().map(|e| e.bbox).collect();
        PolicyContext {
            page_id: clean.page_id.clone(),
            visual,
            layout: LayoutStats {
                block_count: n,
                category_entropy: entropy.max(0.0),
                coverage: page.content.count() as f64 / page_area,
                mean_block_area: mean_area,
                std_block_area: std_area,
                max_block_area: areas.iter().copied().fold(0.0, f64::max),
            },
            spatial: SpatialStats {
                gap_count: sizes.len(),
                gap_density: sizes.len() as f64 * 1000.0 / page.height.max(1) as f64,
                mean_gap: (!sizes.is_empty()).then(|| sizes.iter().sum::<f64>() / sizes.len() as f64),
                min_gap: sizes.iter().copied().reduce(f64::min),
                columns: column_count(&boxes),
                boundary_density: page.boundary_density(),
            },
            blocks: clean.elements.iter().map(|e| Block { category: e.category, bbox: e.bbox }).collect(),
            gaps: page.gaps.clone(),
        }
    }

    /// Structure-aware description: blocks, every gap, and the narrowest gaps
    /// flagged as candidate targets.
    pub fn encode_biased(&self) -> String {
        let mut s = String::new();
        let v = &self.visual;
        let _ = writeln!(s, "Page size: {} x {} px, {} column(s).", v.width, v.height, self.spatial.columns);
        let _ = writeln!(
            s,
            "Content covers {:.1}% of the page; boundary density {:.3}; {} gaps ({:.2} per 1000 px of height).",
            self.layout.coverage * 100.0,
            self.spatial.boundary_density,
            self.spatial.gap_count,
            self.spatial.gap_density
        );
        let _ = writeln!(s, "Blocks ({}):", self.blocks.len());
        for (i, b) in self.blocks.iter().enumerate() {
            let _ = writeln!(s, "  [{i}] {} at {}", b.category.as_str(), fmt_box(&b.bbox));
        }
        let _ = writeln!(s, "Gaps ({}):", self.gaps.len());
        for g in &self.gaps {
            let _ = writeln!(s, "  {}", fmt_gap(g));
        }
        let mut narrow: Vec<&Gap> = self.gaps.iter().collect();
        narrow.sort_by(|a, b| a.size.total_cmp(&b.size));
        if !narrow.is_empty() {
            let _ = writeln!(s, "Candidate vulnerable regions (narrowest gaps, where a bridging probe may merge blocks):");
            for g in narrow.iter().take(3) {
                let _ = writeln!(s, "  {}", fmt_gap(g));
            }
        }
        s
    }

    /// Coordinates and element types only.
    pub fn encode_neutral(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Page size: {} x {} px.", self.visual.width, self.visual.height);
        let _ = writeln!(s, "Elements ({}):", self.blocks.len());
        for (i, b) in self.blocks.iter().enumerate() {
            let _ = writeln!(s, "  {}. {} {}", i + 1, b.category.as_str(), fmt_box(&b.bbox));
        }
        s
    }
}

fn fmt_box(b: &BBox) -> String {
    format!("[{:.0}, {:.0}, {:.0}, {:.0}]", b.x0, b.y0, b.x1, b.y1)
}

fn fmt_gap(g: &Gap) -> String {
    let axis = match g.axis {
        GapAxis::Stacked => "vertical",
        GapAxis::SideBySide => "horizontal",
    };
    format!(
        "gap between block {} and block {}: {axis} spacing {:.0} px, region {}, midpoint ({:.0}, {:.0})",
        g.a,
        g.b,
        g.size,
        fmt_box(&g.region),
        g.midpoint.0,
        g.midpoint.1
    )
}

//! Deterministic synthetic pages with known layout and per-character glyph
//! cells, and a geometry-driven mock parser with closed-form failure rules.

use std::path::Path;

use image::{Rgb, RgbImage};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::document::{AnnotationSet, BBox, Category, LayoutElement, ParseOutput};
use crate::probe::{find_gaps, GapAxis, ProbeMask, BOUNDARY_DELTA};
use crate::raster::{box_band_overlap, BitMask};
use crate::retrieval::QAPair;

pub const CELL_W: f64 = 8.0;
pub const CELL_H: f64 = 16.0;
/// Longest text put in one block, so every block fits in one retrieval chunk.
pub const MAX_BLOCK_CHARS: usize = 600;
const GUTTER: f64 = 30.0;
const BLOCK_GAP: f64 = 20.0;
const INK: [u8; 3] = [25, 25, 25];

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("{blocks} blocks in {columns} column(s) do not fit on a {width}x{height} page")]
    Overflow { blocks: usize, columns: usize, width: u32, height: u32 },
    #[error("invalid page spec: {0}")]
    Spec(String),
    #[error("missing glyph sidecar for page `{0}`")]
    MissingSidecar(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageSpec {
    pub page_id: String,
    pub width: u32,
    pub height: u32,
    pub margin: u32,
    pub columns: usize,
    pub blocks: usize,
    pub seed: u64,
}

impl PageSpec {
    /// Letter-sized two-column page with four blocks per column.
    pub fn standard(page_id: impl Into<String>, seed: u64) -> Self {
        Self { page_id: page_id.into(), width: 850, height: 1100, margin: 60, columns: 2, blocks: 8, seed }
    }
}

/// Per-element glyph cells, one rectangle per character of the element text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlyphSidecar {
    pub page_id: String,
    pub width: f64,
    pub height: f64,
    pub seed: u64,
    pub elements: Vec<SidecarElement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarElement {
    pub bbox: BBox,
    pub category: Category,
    pub text: String,
    pub cells: Vec<BBox>,
}

impl GlyphSidecar {
    pub fn annotations(&self) -> AnnotationSet {
        AnnotationSet {
            page_id: self.page_id.clone(),
            width: self.width,
            height: self.height,
            source: "synthetic".into(),
            elements: self
                .elements
                .iter()
                .enumerate()
                .map(|(i, e)| LayoutElement { bbox: e.bbox, category: e.category, text: e.text.clone(), source_index: i })
                .collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SyntheticError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticPage {
    pub image: RgbImage,
    pub sidecar: GlyphSidecar,
}

impl SyntheticPage {
    pub fn page_id(&self) -> &str {
        &self.sidecar.page_id
    }

    pub fn annotations(&self) -> AnnotationSet {
        self.sidecar.annotations()
    }

    /// Writes `<id>.png`, `<id>.json` (annotations) and `<id>.glyphs.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), SyntheticError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let id = self.page_id();
        self.image.save(dir.join(format!("{id}.png")))?;
        std::fs::write(dir.join(format!("{id}.json")), crate::document::annotations_to_json(&self.annotations()))?;
        std::fs::write(dir.join(format!("{id}.glyphs.json")), serde_json::to_string(&self.sidecar)?)?;
        Ok(())
    }
}

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ne", "ru", "sa", "to", "vi", "del", "mar", "pen", "qua", "ris", "ton", "bel", "cor", "dan", "fel",
    "gra", "hul", "jon", "lex", "mon", "nor", "pal", "sil", "tur", "ven", "xo", "zan",
];

fn word(rng: &mut impl Rng) -> String {
    let n = rng.random_range(1..=3);
    (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect()
}

fn capitalized(rng: &mut impl Rng) -> String {
    let w = word(rng);
    let mut c = w.chars();
    let first = c.next().unwrap().to_ascii_uppercase();
    std::iter::once(first).chain(c).collect()
}

fn token(category: Category, rng: &mut impl Rng) -> String {
    match category {
        Category::Table => format!("{}.{}", rng.random_range(0..1000), rng.random_range(0..10)),
        Category::Equation => match rng.random_range(0..4) {
            0 => format!("{}_{}", word(rng), rng.random_range(0..10)),
            1 => ["=", "+", "-", "*"][rng.random_range(0..4)].to_string(),
            2 => format!("{}^{}", word(rng), rng.random_range(2..5)),
            _ => word(rng),
        },
        Category::Title => capitalized(rng),
        _ if rng.random_bool(0.12) => capitalized(rng),
        _ => word(rng),
    }
}

/// Greedy word wrap to `cols - 1` chars so the space joining two lines still
/// gets its own cell at the end of the earlier line.
fn wrap(words: &[String], cols: usize) -> Vec<String> {
    let limit = cols.saturating_sub(1).max(1);
    let mut lines: Vec<String> = Vec::new();
    let mut cur = String::new();
    for w in words {
        if cur.is_empty() {
            cur = w.clone();
        } else if cur.len() + 1 + w.len() <= limit {
            cur.push(' ');
            cur.push_str(w);
        } else {
            lines.push(std::mem::take(&mut cur));
            cur = w.clone();
        }
    }
    if !cur.is_empty() {
        lines.push(cur);
    }
    lines
}

fn pick_category(rng: &mut impl Rng) -> Category {
    let r = rng.random_range(0..100);
    match r {
        0..70 => Category::Text,
        70..80 => Category::Title,
        80..88 => Category::Table,
        88..94 => Category::Figure,
        _ => Category::Equation,
    }
}

// Bit pattern of a 5x9 pseudo glyph for a character.
fn glyph_bits(c: char) -> u64 {
    let mut x = (c as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xD1B5_4A32_D192_ED03;
    x ^= x >> 29;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 32;
    x | 1 // never blank
}

fn draw_glyph(img: &mut RgbImage, cell: &BBox, c: char) {
    if c == ' ' {
        return;
    }
    let bits = glyph_bits(c);
    let (ox, oy) = (cell.x0 as u32 + 1, cell.y0 as u32 + 4);
    for gy in 0..9u32 {
        for gx in 0..5u32 {
            if bits >> (gy * 5 + gx) & 1 == 1 {
                img.put_pixel(ox + gx, oy + gy, Rgb(INK));
            }
        }
    }
}

fn draw_frame(img: &mut RgbImage, b: &BBox, color: [u8; 3], fill: Option<[u8; 3]>) {
    let (x0, y0, x1, y1) = (b.x0 as u32, b.y0 as u32, b.x1 as u32, b.y1 as u32);
    for y in y0..y1 {
        for x in x0..x1 {
            let edge = x == x0 || y == y0 || x + 1 == x1 || y + 1 == y1;
            if edge {
                img.put_pixel(x, y, Rgb(color));
            } else if let Some(f) = fill {
                img.put_pixel(x, y, Rgb(f));
            }
        }
    }
}

/// Render a page: monospaced blocks in `columns` columns on a white page, the
/// first block a title, the rest drawn from a fixed category mix.
pub fn generate_page(spec: &PageSpec) -> Result<SyntheticPage, SyntheticError> {
    if spec.columns == 0 || spec.blocks == 0 {
        return Err(SyntheticError::Spec("need at least one column and one block".into()));
    }
    let overflow = || SyntheticError::Overflow { blocks: spec.blocks, columns: spec.columns, width: spec.width, height: spec.height };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (w, h, m) = (spec.width as f64, spec.height as f64, spec.margin as f64);
    let col_w = ((w - 2.0 * m - GUTTER * (spec.columns - 1) as f64) / spec.columns as f64).floor();
    let cols = (col_w / CELL_W).floor() as usize;
    if cols < 12 {
        return Err(overflow());
    }
    let per_col = spec.blocks.div_ceil(spec.columns);
    let avail = h - 2.0 * m;
    let mut image = RgbImage::from_pixel(spec.width, spec.height, Rgb([255; 3]));
    let mut elements = Vec::with_capacity(spec.blocks);
    for col in 0..spec.columns {
        let n = per_col.min(spec.blocks.saturating_sub(col * per_col));
        if n == 0 {
            break;
        }
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.7..1.3)).collect();
        let total: f64 = weights.iter().sum();
        let usable = avail - BLOCK_GAP * (n - 1) as f64;
        let x0 = m + col as f64 * (col_w + GUTTER);
        let mut y = m;
        for wt in weights {
            let slot = (usable * wt / total).floor();
            let rows = (slot / CELL_H).floor() as usize;
            if rows < 2 {
                return Err(overflow());
            }
            let category = match (elements.is_empty(), pick_category(&mut rng)) {
                (true, _) => Category::Title,
                (false, Category::Table) if rows < 3 => Category::Text,
                (false, c) => c,
            };
            let el = layout_block(category, x0, y, cols, rows, &mut rng);
            match category {
                Category::Figure => draw_frame(&mut image, &el.bbox, [90; 3], Some([200; 3])),
                Category::Table => draw_frame(&mut image, &el.bbox, [150; 3], None),
                _ => {}
            }
            for (c, cell) in el.text.chars().zip(&el.cells) {
                draw_glyph(&mut image, cell, c);
            }
            elements.push(el);
            y += slot + BLOCK_GAP;
        }
    }
    let sidecar = GlyphSidecar { page_id: spec.page_id.clone(), width: w, height: h, seed: spec.seed, elements };
    Ok(SyntheticPage { image, sidecar })
}

fn layout_block(category: Category, x0: f64, y0: f64, cols: usize, rows: usize, rng: &mut impl Rng) -> SidecarElement {
    let full = BBox { x0, y0, x1: x0 + cols as f64 * CELL_W, y1: y0 + rows as f64 * CELL_H };
    if category == Category::Figure {
        return SidecarElement { bbox: full, category, text: String::new(), cells: Vec::new() };
    }
    let (max_rows, budget) = match category {
        Category::Title => (2, rng.random_range(3..=6)),
        Category::Equation => (3, rng.random_range(4..=14)),
        Category::Table => (rows, usize::MAX),
        _ => (rows, usize::MAX),
    };
    // table cells get an inset so text stays clear of the frame
    let (inset, cols) = if category == Category::Table { (CELL_W, cols - 2) } else { (0.0, cols) };
    let max_rows = max_rows.min(rows - usize::from(category == Category::Table) * 2).max(1);
    let mut words = Vec::new();
    let mut chars = 0usize;
    let mut lines = Vec::new();
    while words.len() < budget {
        let t = token(category, rng);
        let next = chars + t.len() + usize::from(!words.is_empty());
        if next > MAX_BLOCK_CHARS {
            break;
        }
        words.push(t);
        let trial = wrap(&words, cols);
        if trial.len() > max_rows {
            words.pop();
            break;
        }
        chars = next;
        lines = trial;
    }
    let text = lines.join(" ");
    let (tx, ty) = (x0 + inset, y0 + if category == Category::Table { CELL_H } else { 0.0 });
    let mut cells = Vec::with_capacity(text.len());
    for (r, line) in lines.iter().enumerate() {
        let n = line.chars().count() + usize::from(r + 1 < lines.len());
        for c in 0..n {
            let (cx, cy) = (tx + c as f64 * CELL_W, ty + r as f64 * CELL_H);
            cells.push(BBox { x0: cx, y0: cy, x1: cx + CELL_W, y1: cy + CELL_H });
        }
    }
    let bbox = if category == Category::Table {
        BBox { x0, y0, x1: full.x1, y1: y0 + (lines.len() + 2) as f64 * CELL_H }
    } else {
        BBox { x0, y0, x1: full.x1, y1: y0 + lines.len() as f64 * CELL_H }
    };
    debug_assert_eq!(cells.len(), text.chars().count());
    SidecarElement { bbox, category, text, cells }
}

/// Failure rules of the mock parser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockParserRules {
    /// Element dropped when its occlusion ratio reaches this value.
    pub drop_threshold: f64,
    /// text and title swap when more than this share of the element's boundary band is covered.
    pub misclass_threshold: f64,
}

impl Default for MockParserRules {
    fn default() -> Self {
        Self { drop_threshold: 0.6, misclass_threshold: 0.5 }
    }
}

struct Dsu(Vec<usize>);

impl Dsu {
    fn find(&mut self, i: usize) -> usize {
        let p = self.0[i];
        if p == i {
            return i;
        }
        let r = self.find(p);
        self.0[i] = r;
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.0[hi] = lo;
        }
    }
}

// Does an unbroken row (or column) of ink run across the whole gap?
fn gap_spanned(ink: &BitMask, region: &BBox, axis: GapAxis) -> bool {
    let r = region.pixel_range(ink.width(), ink.height());
    if r.is_empty() {
        return false;
    }
    match axis {
        GapAxis::SideBySide => (r.y0..r.y1).any(|y| (r.x0..r.x1).all(|x| ink.get(x, y))),
        GapAxis::Stacked => (r.x0..r.x1).any(|x| (r.y0..r.y1).all(|y| ink.get(x, y))),
    }
}

/// Parse a synthetic page under a probe mask, reading geometry from the
/// sidecar rather than pixels. Rules run in order: drop heavily occluded
/// elements, merge neighbors whose gap is crossed by an inked path, flip
/// text/title when the boundary band is mostly covered, and delete every
/// character whose glyph cell touches the mask.
pub fn mock_parse(sidecar: &GlyphSidecar, mask: &ProbeMask, rules: &MockParserRules) -> ParseOutput {
    let support = mask.support();
    let (w, h) = support.dims();
    let els = &sidecar.elements;
    let kept: Vec<usize> = (0..els.len())
        .filter(|&i| crate::audit::occlusion_ratio(&els[i].bbox, support) < rules.drop_threshold)
        .collect();

    let mut dsu = Dsu((0..els.len()).collect());
    if !support.is_empty() {
        let ink = mask.ink();
        let boxes: Vec<BBox> = kept.iter().map(|&i| els[i].bbox).collect();
        for g in find_gaps(&boxes) {
            if gap_spanned(&ink, &g.region, g.axis) {
                dsu.union(kept[g.a], kept[g.b]);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; els.len()];
    for &i in &kept {
        let root = dsu.find(i);
        if slot[root] == usize::MAX {
            slot[root] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[root]].push(i);
    }

    let mut out = Vec::with_capacity(groups.len());
    for members in groups {
        let first = &els[members[0]];
        let bbox = members.iter().skip(1).fold(first.bbox, |b, &i| b.union(&els[i].bbox));
        let mut category = first.category;
        let (hits, band) = box_band_overlap(support, &bbox, BOUNDARY_DELTA);
        if band > 0 && hits as f64 / band as f64 > rules.misclass_threshold {
            category = match category {
                Category::Text => Category::Title,
                Category::Title => Category::Text,
                c => c,
            };
        }
        let texts: Vec<String> = members
            .iter()
            .map(|&i| {
                let e = &els[i];
                if !support.any_in_range(e.bbox.pixel_range(w, h)) {
                    return e.text.clone();
                }
                e.text.chars().zip(&e.cells).filter(|(_, cell)| !support.any_in_range(cell.pixel_range(w, h))).map(|(c, _)| c).collect()
            })
            .filter(|t| !t.is_empty())
            .collect();
        out.push(LayoutElement { bbox, category, text: texts.join(" "), source_index: out.len() });
    }
    ParseOutput::new(sidecar.page_id.clone(), sidecar.width, sidecar.height, out)
}

/// Template questions, one per block with text.
pub fn qa_pairs(sidecar: &GlyphSidecar) -> Vec<QAPair> {
    sidecar
        .elements
        .iter()
        .enumerate()
        .filter(|(_, e)| !e.text.trim().is_empty())
        .map(|(i, e)| {
            let lead: Vec<&str> = e.text.split_whitespace().take(4).collect();
            QAPair {
                question: format!("What is the text of block {i} beginning with \"{}\"?", lead.join(" ")),
                answer: e.text.clone(),
                evidence: e.text.clone(),
                page_id: sidecar.page_id.clone(),
            }
        })
        .collect()
}

/// Whitespace rectangle of the given area inside the top page margin, for
/// area-matched controls that must touch no content.
pub fn margin_patch(sidecar: &GlyphSidecar, area_px: f64, rng: &mut impl Rng) -> Option<BBox> {
    let side = area_px.sqrt().round().max(1.0);
    let top = sidecar.elements.iter().map(|e| e.bbox.y0).fold(sidecar.height, f64::min);
    let room = top - 2.0;
    if side > room || side > sidecar.width {
        return None;
    }
    let x = rng.random_range(0.0..=(sidecar.width - side)).floor();
    let y = rng.random_range(0.0..=(room - side)).floor();
    Some(BBox { x0: x, y0: y, x1: x + side, y1: y + side })
}

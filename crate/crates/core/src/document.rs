//! Canonical page model shared by every other module: boxes, the five
//! canonical layout categories, parse outputs, annotations, and the raw label
//! normalization used when ingesting dataset or parser files.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Axis-aligned box in page pixel coordinates, origin top-left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 4]", try_from = "[f64; 4]")]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum BBoxError {
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("x1 < x0 ({x1} < {x0})")]
    InvertedX { x0: f64, x1: f64 },
    #[error("y1 < y0 ({y1} < {y0})")]
    InvertedY { y0: f64, y1: f64 },
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, BBoxError> {
        if ![x0, y0, x1, y1].iter().all(|v| v.is_finite()) {
            return Err(BBoxError::NonFinite);
        }
        if x1 < x0 {
            return Err(BBoxError::InvertedX { x0, x1 });
        }
        if y1 < y0 {
            return Err(BBoxError::InvertedY { y0, y1 });
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    /// Clamp into `[0,w]x[0,h]`. Returns the clamped box and whether anything moved.
    pub fn clamp_to(&self, w: f64, h: f64) -> (BBox, bool) {
        let c = |v: f64, hi: f64| v.clamp(0.0, hi);
        let b = BBox {
            x0: c(self.x0, w),
            y0: c(self.y0, h),
            x1: c(self.x1, w),
            y1: c(self.y1, h),
        };
        (b, b != *self)
    }

    /// Smallest box covering both.
    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }

    /// Half-open integer pixel range `[floor(x0), ceil(x1)) x [floor(y0), ceil(y1))`,
    /// clipped to a `width x height` raster. Zero-area boxes cover no pixels.
    pub fn pixel_range(&self, width: usize, height: usize) -> PixelRange {
        if self.area() <= 0.0 {
            return PixelRange::EMPTY;
        }
        let lo = |v: f64, hi: usize| (v.floor().max(0.0) as usize).min(hi);
        let up = |v: f64, hi: usize| (v.ceil().max(0.0) as usize).min(hi);
        PixelRange {
            x0: lo(self.x0, width),
            y0: lo(self.y0, height),
            x1: up(self.x1, width),
            y1: up(self.y1, height),
        }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = BBoxError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

/// Integer pixel rectangle, half-open on both axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRange {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelRange {
    pub const EMPTY: PixelRange = PixelRange { x0: 0, y0: 0, x1: 0, y1: 0 };

    pub fn count(&self) -> usize {
        self.x1.saturating_sub(self.x0) * self.y1.saturating_sub(self.y0)
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }
}

/// Intersection over union of two boxes; 0 when the union is empty.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x1.min(b.x1) - a.x0.max(b.x0)).max(0.0);
    let ih = (a.y1.min(b.y1) - a.y0.max(b.y0)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 || inter <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Text,
    Title,
    Table,
    Figure,
    Equation,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Text,
        Category::Title,
        Category::Table,
        Category::Figure,
        Category::Equation,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Text => "text",
            Category::Title => "title",
            Category::Table => "table",
            Category::Figure => "figure",
            Category::Equation => "equation",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("not a canonical category: {s}"))
    }
}

/// Where a raw label string came from. Carried explicitly because label
/// vocabularies overlap across families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceFamily {
    PubLayNet,
    DocLayNet,
    Parser,
    Canonical,
}

impl SourceFamily {
    /// Interpret a free-form `source` tag from an annotation file.
    pub fn from_tag(tag: &str) -> SourceFamily {
        let t = tag.to_ascii_lowercase();
        if t.contains("publaynet") {
            SourceFamily::PubLayNet
        } else if t.contains("doclaynet") {
            SourceFamily::DocLayNet
        } else if t.contains("canonical") || t.contains("synthetic") {
            SourceFamily::Canonical
        } else {
            SourceFamily::Parser
        }
    }
}

const NON_CONTENT: [&str; 6] = ["Page-header", "Page-footer", "header", "footer", "abandon", "seal"];

/// Map a raw label to its canonical category. `None` marks non-content
/// labels (page headers, footers, seals, ...), which are dropped on ingest.
/// Labels that no row recognizes fall back to [`Category::Text`].
pub fn normalize_label(raw: &str, family: SourceFamily) -> Option<Category> {
    use Category::*;
    let family_row = match family {
        SourceFamily::PubLayNet => match raw {
            "Text" | "List" => Some(Text),
            "Title" => Some(Title),
            "Table" => Some(Table),
            "Figure" => Some(Figure),
            _ => None,
        },
        SourceFamily::DocLayNet => match raw {
            "Caption" | "Footnote" | "List-item" => Some(Text),
            "Section-header" => Some(Title),
            "Picture" => Some(Figure),
            "Formula" => Some(Equation),
            _ => None,
        },
        SourceFamily::Parser => match raw {
            "figure_caption" | "table_caption" | "reference" | "list" | "plain_text"
            | "table_footnote" | "formula_caption" | "index" | "normal_text" => Some(Text),
            "image" => Some(Figure),
            "formula" | "isolate_formula" | "embedding" | "isolated" => Some(Equation),
            _ => None,
        },
        SourceFamily::Canonical => None,
    };
    if family_row.is_some() {
        return family_row;
    }
    if NON_CONTENT.contains(&raw) {
        return None;
    }
    Some(raw.parse().unwrap_or(Text))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutElement {
    pub bbox: BBox,
    pub category: Category,
    pub text: String,
    pub source_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseOutput {
    pub page_id: String,
    pub width: f64,
    pub height: f64,
    pub elements: Vec<LayoutElement>,
}

impl ParseOutput {
    pub fn new(page_id: impl Into<String>, width: f64, height: f64, elements: Vec<LayoutElement>) -> Self {
        Self { page_id: page_id.into(), width, height, elements }
    }

    /// Raster dimensions used for every pixel-count computation on this page.
    pub fn raster_dims(&self) -> (usize, usize) {
        (self.width.round().max(0.0) as usize, self.height.round().max(0.0) as usize)
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Element texts in output order joined by newlines.
    pub fn page_text(&self) -> String {
        self.elements.iter().map(|e| e.text.as_str()).collect::<Vec<_>>().join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub page_id: String,
    pub width: f64,
    pub height: f64,
    pub source: String,
    pub elements: Vec<LayoutElement>,
}

impl AnnotationSet {
    /// View the annotations as a parse output (used as an mAP prediction set
    /// and by the synthetic mock parser).
    pub fn as_parse_output(&self) -> ParseOutput {
        ParseOutput::new(self.page_id.clone(), self.width, self.height, self.elements.clone())
    }
}

// ---------------------------------------------------------------------------
// JSON ingest

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("field `{field}`: {message}")]
    Schema { field: String, message: String },
}

fn schema(field: impl Into<String>, message: impl Into<String>) -> IngestError {
    IngestError::Schema { field: field.into(), message: message.into() }
}

#[derive(Debug, Serialize, Deserialize)]
struct RawElement {
    bbox: Vec<f64>,
    category: String,
    #[serde(default)]
    text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    raw_category: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawPage {
    page_id: String,
    width: f64,
    height: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<String>,
    elements: Vec<RawElement>,
}

/// Bookkeeping from one ingest: how many boxes were clamped into the page and
/// how many non-content elements were dropped.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub clamped: usize,
    pub dropped_non_content: usize,
}

fn convert_elements(
    raw: &RawPage,
    family: SourceFamily,
    report: &mut IngestReport,
) -> Result<Vec<LayoutElement>, IngestError> {
    if !(raw.width.is_finite() && raw.width > 0.0) {
        return Err(schema("width", "must be a positive number"));
    }
    if !(raw.height.is_finite() && raw.height > 0.0) {
        return Err(schema("height", "must be a positive number"));
    }
    let mut out = Vec::with_capacity(raw.elements.len());
    for (i, el) in raw.elements.iter().enumerate() {
        let field = format!("elements[{i}].bbox");
        let coords: [f64; 4] = el
            .bbox
            .as_slice()
            .try_into()
            .map_err(|_| schema(&field, format!("expected 4 numbers, got {}", el.bbox.len())))?;
        let b = BBox::try_from(coords).map_err(|e| schema(&field, e.to_string()))?;
        let Some(category) = normalize_label(&el.category, family) else {
            report.dropped_non_content += 1;
            continue;
        };
        let (b, moved) = b.clamp_to(raw.width, raw.height);
        if moved {
            report.clamped += 1;
        }
        out.push(LayoutElement {
            bbox: b,
            category,
            text: el.text.clone().unwrap_or_default(),
            source_index: out.len(),
        });
    }
    Ok(out)
}

pub fn parse_output_from_json(json: &str) -> Result<(ParseOutput, IngestReport), IngestError> {
    let raw: RawPage = serde_json::from_str(json)?;
    let mut report = IngestReport::default();
    let elements = convert_elements(&raw, SourceFamily::Parser, &mut report)?;
    Ok((ParseOutput::new(raw.page_id, raw.width, raw.height, elements), report))
}

pub fn annotations_from_json(json: &str) -> Result<(AnnotationSet, IngestReport), IngestError> {
    let raw: RawPage = serde_json::from_str(json)?;
    let source = raw.source.clone().ok_or_else(|| schema("source", "missing dataset family tag"))?;
    let mut report = IngestReport::default();
    let elements = convert_elements(&raw, SourceFamily::from_tag(&source), &mut report)?;
    Ok((
        AnnotationSet { page_id: raw.page_id, width: raw.width, height: raw.height, source, elements },
        report,
    ))
}

fn read(path: &Path) -> Result<String, IngestError> {
    std::fs::read_to_string(path).map_err(|source| IngestError::Io { path: path.display().to_string(), source })
}

pub fn load_parse_output(path: impl AsRef<Path>) -> Result<(ParseOutput, IngestReport), IngestError> {
    parse_output_from_json(&read(path.as_ref())?)
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<(AnnotationSet, IngestReport), IngestError> {
    annotations_from_json(&read(path.as_ref())?)
}

fn raw_elements(elements: &[LayoutElement]) -> Vec<RawElement> {
    elements
        .iter()
        .map(|e| RawElement {
            bbox: vec![e.bbox.x0, e.bbox.y0, e.bbox.x1, e.bbox.y1],
            category: e.category.as_str().to_string(),
            text: Some(e.text.clone()),
            raw_category: None,
        })
        .collect()
}

pub fn parse_output_to_json(p: &ParseOutput) -> String {
    let raw = RawPage {
        page_id: p.page_id.clone(),
        width: p.width,
        height: p.height,
        source: None,
        elements: raw_elements(&p.elements),
    };
    serde_json::to_string_pretty(&raw).expect("page serializes")
}

pub fn annotations_to_json(a: &AnnotationSet) -> String {
    let raw = RawPage {
        page_id: a.page_id.clone(),
        width: a.width,
        height: a.height,
        source: Some(a.source.clone()),
        elements: raw_elements(&a.elements),
    };
    serde_json::to_string_pretty(&raw).expect("annotations serialize")
}

//! Clean-vs-perturbed comparison: best-IoU matching with a text gate, B-SLR
//! and its channels, pathway attribution, and exposure descriptors.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::document::{iou, AnnotationSet, BBox, LayoutElement, ParseOutput};
use crate::probe::BOUNDARY_DELTA;
use crate::raster::{boundary_band, content_mask, BitMask};
use crate::terminal::{delta_map, map50, mean_cer, TerminalScores};
pub use crate::text::text_sim;
use crate::text::text_sim_checked;

/// Gates used by matching and attribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub tau_iou: f64,
    pub tau_text: f64,
    pub eta_occ: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { tau_iou: 0.1, tau_text: 0.5, eta_occ: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuditError {
    #[error("clean parse has no elements; structural loss is undefined")]
    EmptyClean,
    #[error("mask is {mask:?} but the page rasterizes to {page:?}")]
    DimensionMismatch { mask: (usize, usize), page: (usize, usize) },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchEntry {
    /// Index into the perturbed parse; `None` only when it is empty.
    pub adv: Option<usize>,
    pub iou: f64,
    pub text_sim: f64,
    pub aligned: bool,
    /// Text was cut to the LCS length cap before comparison.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchResult {
    pub entries: Vec<MatchEntry>,
}

impl MatchResult {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn failed(&self) -> usize {
        self.entries.iter().filter(|e| !e.aligned).count()
    }

    /// `(counterpart, iou)` pairs in the form used by the CER judge.
    pub fn pairs(&self) -> Vec<(Option<usize>, f64)> {
        self.entries.iter().map(|e| (e.adv, e.iou)).collect()
    }
}

/// Map each clean element to the perturbed element of highest IoU (lowest
/// index on ties); several clean elements may share one counterpart.
pub fn match_elements(clean: &[LayoutElement], adv: &[LayoutElement], th: &Thresholds) -> MatchResult {
    let entries = clean
        .iter()
        .map(|e| {
            let mut best: Option<(usize, f64)> = None;
            for (j, a) in adv.iter().enumerate() {
                let v = iou(&e.bbox, &a.bbox);
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((j, v));
                }
            }
            match best {
                None => MatchEntry { adv: None, iou: 0.0, text_sim: 0.0, aligned: false, truncated: false },
                Some((j, v)) => {
                    let (ts, truncated) = text_sim_checked(&e.text, &adv[j].text);
                    MatchEntry { adv: Some(j), iou: v, text_sim: ts, aligned: v >= th.tau_iou && ts >= th.tau_text, truncated }
                }
            }
        })
        .collect();
    MatchResult { entries }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BSlr {
    pub b_slr: f64,
    /// Failed the IoU gate.
    pub iou_only: f64,
    /// Passed the IoU gate, failed the text gate.
    pub text_only: f64,
    pub failed: usize,
    pub n: usize,
}

/// Fraction of clean elements without an aligned counterpart, split by the
/// gate that failed. `None` for an empty clean parse.
pub fn b_slr(m: &MatchResult, th: &Thresholds) -> Option<BSlr> {
    let n = m.len();
    if n == 0 {
        return None;
    }
    let iou_fail = m.entries.iter().filter(|e| !e.aligned && e.iou < th.tau_iou).count();
    let text_fail = m.entries.iter().filter(|e| !e.aligned && e.iou >= th.tau_iou).count();
    let nf = n as f64;
    Some(BSlr {
        b_slr: (iou_fail + text_fail) as f64 / nf,
        iou_only: iou_fail as f64 / nf,
        text_only: text_fail as f64 / nf,
        failed: iou_fail + text_fail,
        n,
    })
}

/// Share of the box's pixels under the support; 0 for a zero-area box.
pub fn occlusion_ratio(bbox: &BBox, support: &BitMask) -> f64 {
    let r = bbox.pixel_range(support.width(), support.height());
    if r.is_empty() {
        return 0.0;
    }
    support.count_in_range(r) as f64 / r.count() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathwayLabel {
    Intact,
    Miss,
    Merge,
    Misclass,
    Degraded,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PathwayCounts {
    pub miss: usize,
    pub merge: usize,
    pub misclass: usize,
    pub degraded: usize,
}

impl PathwayCounts {
    pub fn topo(&self) -> usize {
        self.merge + self.misclass + self.degraded
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pathways {
    pub labels: Vec<PathwayLabel>,
    pub rho: Vec<f64>,
    pub counts: PathwayCounts,
    pub slr_miss: f64,
    pub slr_topo: f64,
}

/// Label each clean element: aligned elements are intact; failed ones are a
/// miss when occluded at or above `eta_occ`, else merge when their counterpart
/// also receives another clean element, else misclass when geometry survives
/// but the category changed, else degraded.
///
/// Counterpart multiplicity counts clean elements whose best-IoU mapping has
/// positive overlap, so an all-zero mapping never reads as a merge.
pub fn attribute_pathways(m: &MatchResult, clean: &[LayoutElement], adv: &[LayoutElement], support: &BitMask, th: &Thresholds) -> Pathways {
    let mut receivers = vec![0usize; adv.len()];
    for e in &m.entries {
        if let (Some(j), true) = (e.adv, e.iou > 0.0) {
            receivers[j] += 1;
        }
    }
    let mut counts = PathwayCounts::default();
    let mut labels = Vec::with_capacity(clean.len());
    let mut rho = Vec::with_capacity(clean.len());
    for (e, entry) in clean.iter().zip(&m.entries) {
        let r = occlusion_ratio(&e.bbox, support);
        rho.push(r);
        let label = if entry.aligned {
            PathwayLabel::Intact
        } else if r >= th.eta_occ {
            counts.miss += 1;
            PathwayLabel::Miss
        } else if entry.adv.is_some_and(|j| entry.iou > 0.0 && receivers[j] > 1) {
            counts.merge += 1;
            PathwayLabel::Merge
        } else if entry.adv.is_some_and(|j| entry.iou >= th.tau_iou && adv[j].category != e.category) {
            counts.misclass += 1;
            PathwayLabel::Misclass
        } else {
            counts.degraded += 1;
            PathwayLabel::Degraded
        };
        labels.push(label);
    }
    let n = clean.len().max(1) as f64;
    Pathways { labels, rho, counts, slr_miss: counts.miss as f64 / n, slr_topo: counts.topo() as f64 / n }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExposureDescriptors {
    pub tor: f64,
    pub acr: Option<f64>,
    pub bpo: Option<f64>,
    pub boc: Option<f64>,
    pub eir: f64,
}

fn hit_fraction(boxes: &[BBox], support: &BitMask) -> Option<f64> {
    if boxes.is_empty() {
        return None;
    }
    let (w, h) = support.dims();
    let hits = boxes.iter().filter(|b| support.any_in_range(b.pixel_range(w, h))).count();
    Some(hits as f64 / boxes.len() as f64)
}

/// Annotation rasters reused across every run on a page.
#[derive(Debug, Clone)]
pub struct AnnotationMasks {
    boxes: Vec<BBox>,
    omega: BitMask,
    band: BitMask,
}

impl AnnotationMasks {
    pub fn new(boxes: Vec<BBox>, width: usize, height: usize) -> Self {
        let omega = content_mask(&boxes, width, height);
        let band = boundary_band(&boxes, width, height, BOUNDARY_DELTA);
        Self { boxes, omega, band }
    }

    pub fn from_annotations(a: &AnnotationSet, width: usize, height: usize) -> Self {
        Self::new(a.elements.iter().map(|e| e.bbox).collect(), width, height)
    }

    pub fn dims(&self) -> (usize, usize) {
        self.omega.dims()
    }
}

/// Exposure of a mask against the clean parse and, when given, the
/// annotations. A box counts as hit when at least one of its pixels is in the
/// support.
pub fn exposure(support: &BitMask, annotations: Option<&[BBox]>, clean: &[BBox]) -> ExposureDescriptors {
    let (w, h) = support.dims();
    let masks = annotations.map(|l| AnnotationMasks::new(l.to_vec(), w, h));
    exposure_with(support, masks.as_ref(), clean)
}

/// [`exposure`] with precomputed annotation rasters.
pub fn exposure_with(support: &BitMask, annotations: Option<&AnnotationMasks>, clean: &[BBox]) -> ExposureDescriptors {
    let (w, h) = support.dims();
    let tor = support.count() as f64 / (w * h).max(1) as f64;
    let (mut acr, mut bpo, mut boc) = (None, None, None);
    if let Some(l) = annotations {
        let area = l.omega.count();
        if area > 0 {
            acr = Some(support.intersection_count(&l.omega) as f64 / area as f64);
            bpo = Some(support.intersection_count(&l.band) as f64 / l.band.count() as f64);
        }
        boc = hit_fraction(&l.boxes, support);
    }
    ExposureDescriptors { tor, acr, bpo, boc, eir: hit_fraction(clean, support).unwrap_or(0.0) }
}

/// One clean element's audit trail.
#[derive(Debug, Clone, Serialize)]
pub struct AuditRow {
    pub clean_index: usize,
    pub adv_index: Option<usize>,
    pub iou: f64,
    pub text_sim: f64,
    pub rho: f64,
    pub label: PathwayLabel,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticRecord {
    pub exposure: ExposureDescriptors,
    pub b_slr: f64,
    pub b_slr_iou_only: f64,
    pub b_slr_text_only: f64,
    pub slr_miss: f64,
    pub slr_topo: f64,
    pub pathways: PathwayCounts,
    pub terminal: TerminalScores,
    pub n_orig_spans: usize,
    pub truncated_texts: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PageAudit {
    pub page_id: String,
    pub thresholds: Thresholds,
    pub summary: DiagnosticRecord,
    pub rows: Vec<AuditRow>,
}

impl PageAudit {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("audit serializes")
    }
}

/// Full page audit: matching, B-SLR, pathways, exposure, and terminal scores.
pub fn audit_page(
    clean: &ParseOutput,
    adv: &ParseOutput,
    support: &BitMask,
    annotations: Option<&AnnotationSet>,
    th: &Thresholds,
) -> Result<PageAudit, AuditError> {
    let (w, h) = support.dims();
    let masks = annotations.map(|a| AnnotationMasks::from_annotations(a, w, h));
    audit_page_with(clean, adv, support, annotations.zip(masks.as_ref()), th)
}

/// [`audit_page`] with annotation rasters computed once per page.
pub fn audit_page_with(
    clean: &ParseOutput,
    adv: &ParseOutput,
    support: &BitMask,
    annotations: Option<(&AnnotationSet, &AnnotationMasks)>,
    th: &Thresholds,
) -> Result<PageAudit, AuditError> {
    let page = clean.raster_dims();
    if support.dims() != page {
        return Err(AuditError::DimensionMismatch { mask: support.dims(), page });
    }
    let m = match_elements(&clean.elements, &adv.elements, th);
    let slr = b_slr(&m, th).ok_or(AuditError::EmptyClean)?;
    let paths = attribute_pathways(&m, &clean.elements, &adv.elements, support, th);
    let boxes = |els: &[LayoutElement]| els.iter().map(|e| e.bbox).collect::<Vec<_>>();
    if let Some((_, masks)) = annotations {
        if masks.dims() != page {
            return Err(AuditError::DimensionMismatch { mask: masks.dims(), page });
        }
    }
    let exposure = exposure_with(support, annotations.map(|(_, m)| m), &boxes(&clean.elements));
    let annotations = annotations.map(|(a, _)| a);
    let (map_clean, map_adv) = match annotations {
        Some(a) => (map50(&a.elements, &clean.elements), map50(&a.elements, &adv.elements)),
        None => (None, None),
    };
    let terminal = TerminalScores {
        cer_matched_mean: mean_cer(&clean.elements, &adv.elements, &m.pairs()),
        map_clean,
        map_adv,
        delta_map: annotations.and_then(|a| delta_map(&a.elements, &clean.elements, &adv.elements)),
    };
    let rows = m
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| AuditRow { clean_index: i, adv_index: e.adv, iou: e.iou, text_sim: e.text_sim, rho: paths.rho[i], label: paths.labels[i] })
        .collect();
    let summary = DiagnosticRecord {
        exposure,
        b_slr: slr.b_slr,
        b_slr_iou_only: slr.iou_only,
        b_slr_text_only: slr.text_only,
        slr_miss: paths.slr_miss,
        slr_topo: paths.slr_topo,
        pathways: paths.counts,
        terminal,
        n_orig_spans: clean.len(),
        truncated_texts: m.entries.iter().filter(|e| e.truncated).count(),
    };
    Ok(PageAudit { page_id: clean.page_id.clone(), thresholds: *th, summary, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::document::Category;

    fn el(x0: f64, y0: f64, x1: f64, y1: f64, c: Category, t: &str) -> LayoutElement {
        LayoutElement { bbox: BBox::new(x0, y0, x1, y1).unwrap(), category: c, text: t.into(), source_index: 0 }
    }

    fn two_blocks() -> Vec<LayoutElement> {
        vec![el(10., 10., 90., 40., Category::Text, "alpha beta"), el(10., 50., 90., 80., Category::Text, "gamma delta")]
    }

    #[test]
    fn identical_outputs_are_aligned() {
        let e = two_blocks();
        let th = Thresholds::default();
        let m = match_elements(&e, &e, &th);
        assert!(m.entries.iter().all(|x| x.aligned && x.iou == 1.0 && x.text_sim == 1.0));
        assert_eq!(b_slr(&m, &th).unwrap().b_slr, 0.0);
    }

    #[test]
    fn empty_adv_fails_everything() {
        let e = two_blocks();
        let th = Thresholds::default();
        let m = match_elements(&e, &[], &th);
        assert!(m.entries.iter().all(|x| !x.aligned && x.iou == 0.0 && x.adv.is_none()));
        let s = b_slr(&m, &th).unwrap();
        assert_eq!((s.b_slr, s.iou_only, s.text_only), (1.0, 1.0, 0.0));
        assert!(b_slr(&match_elements(&[], &e, &th), &th).is_none());
    }

    #[test]
    fn merged_counterpart_is_shared() {
        let mut e = two_blocks();
        e[0].text = "alpha".into();
        e[1].text = "delta".into();
        let merged = vec![el(10., 10., 90., 80., Category::Text, "alpha beta gamma delta")];
        let th = Thresholds::default();
        let m = match_elements(&e, &merged, &th);
        // iou table: each clean box covers 30/70 of the union box
        for x in &m.entries {
            assert_eq!(x.adv, Some(0));
            assert!((x.iou - 30.0 / 70.0).abs() < 1e-12);
        }
        let support = BitMask::new(100, 100);
        let p = attribute_pathways(&m, &e, &merged, &support, &th);
        assert_eq!(p.labels, vec![PathwayLabel::Merge, PathwayLabel::Merge]);
        assert_eq!(p.slr_topo, 1.0);
    }

    #[test]
    fn channel_split_example() {
        let th = Thresholds::default();
        let clean = vec![
            el(0., 0., 10., 10., Category::Text, "aaaa"),
            el(20., 0., 30., 10., Category::Text, "bbbb"),
            el(40., 0., 50., 10., Category::Text, "cccc"),
        ];
        let adv = vec![el(0., 50., 10., 60., Category::Text, "aaaa"), el(20., 0., 30., 10., Category::Text, "xxxx"), clean[2].clone()];
        let s = b_slr(&match_elements(&clean, &adv, &th), &th).unwrap();
        assert!((s.b_slr - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.iou_only - 1.0 / 3.0).abs() < 1e-15);
        assert!((s.text_only - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn occlusion_examples() {
        let b = BBox::new(0., 0., 10., 10.).unwrap();
        assert_eq!(occlusion_ratio(&b, &BitMask::full(20, 20)), 1.0);
        assert_eq!(occlusion_ratio(&b, &BitMask::new(20, 20)), 0.0);
        let half = BitMask::from_fn(20, 20, |x, _| x < 5);
        assert_eq!(occlusion_ratio(&b, &half), 0.5);
        assert_eq!(occlusion_ratio(&BBox::new(3., 3., 3., 9.).unwrap(), &BitMask::full(20, 20)), 0.0);
    }

    #[test]
    fn pathway_rules() {
        let th = Thresholds::default();
        let clean = vec![el(0., 0., 10., 10., Category::Text, "abc"), el(20., 0., 40., 10., Category::Text, "hello")];
        // element 0 lost under a mask covering 40%; element 1 survives in place as a title
        let adv = vec![el(22., 0., 40., 10., Category::Title, "zzzzz")];
        let support = BitMask::from_fn(50, 20, |x, y| x < 4 && y < 10);
        let m = match_elements(&clean, &adv, &th);
        let p = attribute_pathways(&m, &clean, &adv, &support, &th);
        assert!((p.rho[0] - 0.4).abs() < 1e-15);
        assert_eq!(p.labels, vec![PathwayLabel::Miss, PathwayLabel::Misclass]);
        assert_eq!(p.slr_miss + p.slr_topo, b_slr(&m, &th).unwrap().b_slr);
    }

    #[test]
    fn exposure_examples() {
        let full = BitMask::full(40, 40);
        let l = [BBox::new(0., 0., 10., 10.).unwrap()];
        let d = exposure(&full, Some(&l), &l);
        assert_eq!((d.tor, d.boc, d.eir), (1.0, Some(1.0), 1.0));
        let mut m = BitMask::new(1000, 1000);
        m.fill_box(&BBox::new(100., 100., 200., 200.).unwrap());
        assert_eq!(exposure(&m, None, &[]).tor, 0.01);
        let d = exposure(&BitMask::new(10, 10), Some(&[]), &[]);
        assert_eq!((d.acr, d.bpo, d.boc), (None, None, None));
    }

    #[test]
    fn boc_counts_single_pixel_touches() {
        let boxes: Vec<BBox> = (0..8).map(|i| BBox::new(i as f64 * 20.0, 0.0, i as f64 * 20.0 + 10.0, 10.0).unwrap()).collect();
        let mut m = BitMask::new(200, 20);
        m.set(9, 9, true); // last pixel of box 0
        m.set(20, 0, true); // first pixel of box 1
        m.set(15, 5, true); // whitespace
        assert_eq!(exposure(&m, Some(&boxes), &boxes).boc, Some(0.25));
    }
}

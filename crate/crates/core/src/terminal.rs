//! Terminal degradation scores: character error rate against the clean parse
//! and per-image mAP@0.5 against annotations.

use serde::Serialize;
use thiserror::Error;

use crate::document::{iou, Category, LayoutElement};
use crate::text::{levenshtein, normalize};

/// IoU needed for a detection to count as a true positive.
pub const MAP_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TerminalError {
    #[error("CER reference is empty after normalization")]
    EmptyReference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TerminalScores {
    pub cer_matched_mean: f64,
    pub map_clean: Option<f64>,
    pub map_adv: Option<f64>,
    pub delta_map: Option<f64>,
}

/// Element CER: `lev(r, h) / |r|` on normalized strings when the element has an
/// overlapping counterpart, otherwise 1.
pub fn cer_element(reference: &str, hypothesis: &str, overlapped: bool) -> Result<f64, TerminalError> {
    let r = normalize(reference);
    if r.is_empty() {
        return Err(TerminalError::EmptyReference);
    }
    if !overlapped {
        return Ok(1.0);
    }
    let h = normalize(hypothesis);
    Ok(levenshtein(&r, &h) as f64 / r.chars().count() as f64)
}

/// Mean CER over clean elements with non-empty text; 1 when there are none.
///
/// `matches[i]` is the perturbed counterpart of `clean[i]` and its IoU; the
/// counterpart counts as overlapping when the IoU is strictly positive.
pub fn mean_cer(clean: &[LayoutElement], adv: &[LayoutElement], matches: &[(Option<usize>, f64)]) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for (e, &(m, overlap)) in clean.iter().zip(matches) {
        let hyp = match m {
            Some(j) if overlap > 0.0 => Some(adv[j].text.as_str()),
            _ => None,
        };
        if let Ok(c) = cer_element(&e.text, hyp.unwrap_or(""), hyp.is_some()) {
            total += c;
            n += 1;
        }
    }
    if n == 0 {
        1.0
    } else {
        total / n as f64
    }
}

/// All-points interpolated AP from a ranked TP/FP sequence.
pub fn average_precision(tp: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut precision = Vec::with_capacity(tp.len());
    let mut hits = 0usize;
    for (k, &t) in tp.iter().enumerate() {
        hits += t as usize;
        precision.push(hits as f64 / (k + 1) as f64);
    }
    // precision envelope, right to left
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    tp.iter().zip(&precision).filter(|(t, _)| **t).map(|(_, p)| p).sum::<f64>() / n_gt as f64
}

/// Greedy matching of one class: detections in parse order, each claiming the
/// unmatched ground-truth box of highest IoU (ties to the lower index) at or
/// above [`MAP_IOU`].
fn class_tp(gt: &[&LayoutElement], preds: &[&LayoutElement]) -> Vec<bool> {
    let mut taken = vec![false; gt.len()];
    preds
        .iter()
        .map(|p| {
            let mut best: Option<(usize, f64)> = None;
            for (g, e) in gt.iter().enumerate() {
                if taken[g] {
                    continue;
                }
                let v = iou(&p.bbox, &e.bbox);
                if v >= MAP_IOU && best.is_none_or(|(_, b)| v > b) {
                    best = Some((g, v));
                }
            }
            match best {
                Some((g, _)) => {
                    taken[g] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

/// Mean over ground-truth classes of per-class AP@0.5. Parse order ranks the
/// detections. `None` when the ground truth has no elements.
pub fn map50(ground_truth: &[LayoutElement], predictions: &[LayoutElement]) -> Option<f64> {
    let classes: Vec<Category> = Category::ALL.into_iter().filter(|c| ground_truth.iter().any(|e| e.category == *c)).collect();
    if classes.is_empty() {
        return None;
    }
    let sum: f64 = classes
        .iter()
        .map(|c| {
            let gt: Vec<_> = ground_truth.iter().filter(|e| e.category == *c).collect();
            let preds: Vec<_> = predictions.iter().filter(|e| e.category == *c).collect();
            average_precision(&class_tp(&gt, &preds), gt.len())
        })
        .sum();
    Some(sum / classes.len() as f64)
}

/// `mAP(Y, E) - mAP(Y, E_adv)`; negative when the perturbation helps.
pub fn delta_map(ground_truth: &[LayoutElement], clean: &[LayoutElement], adv: &[LayoutElement]) -> Option<f64> {
    Some(map50(ground_truth, clean)? - map50(ground_truth, adv)?)
}

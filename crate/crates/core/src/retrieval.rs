//! Page-internal retrieval over parsed text: block-aware chunking, BM25
//! ranking, and answer/evidence hit metrics.

use serde::{Deserialize, Serialize};

use crate::document::ParseOutput;
use crate::text::normalize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChunkParams {
    pub target: usize,
    pub min: usize,
    pub max: usize,
    pub overlap: usize,
}

impl Default for ChunkParams {
    fn default() -> Self {
        Self { target: 400, min: 80, max: 700, overlap: 80 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.5, b: 0.75 }
    }
}

/// Cut-offs reported for hit rates.
pub const HIT_KS: [usize; 4] = [1, 3, 5, 10];
/// Ranked list depth.
pub const TOP_K: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAPair {
    pub question: String,
    pub answer: String,
    pub evidence: String,
    pub page_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Chunk {
    pub text: String,
    /// Indices into the parse output's elements.
    pub elements: Vec<usize>,
    /// Char offsets `[start, end)` into [`chunk_source`].
    pub start: usize,
    pub end: usize,
}

impl Chunk {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Text that chunks index into: non-empty element texts joined by newlines.
pub fn chunk_source(parse: &ParseOutput) -> String {
    parse.elements.iter().map(|e| e.text.as_str()).filter(|t| !t.is_empty()).collect::<Vec<_>>().join("\n")
}

/// Block-aware chunking. Runs of consecutive elements no longer than `max`
/// are split at element boundaries into chunks within `[min, max]`, choosing
/// the split whose chunk lengths stay closest to `target`. Longer elements, and
/// runs that admit no such split, are cut into `target`-sized windows
/// overlapping by `overlap`. A run shorter than `min` joins a neighbouring
/// window, so only a page whose whole text is under `min` yields a short chunk.
pub fn chunk(parse: &ParseOutput, p: &ChunkParams) -> Vec<Chunk> {
    let mut spans: Vec<Span> = Vec::new();
    let mut offset = 0usize;
    for (i, e) in parse.elements.iter().enumerate() {
        if e.text.is_empty() {
            continue;
        }
        if !spans.is_empty() {
            offset += 1;
        }
        let n = e.text.chars().count();
        spans.push(Span { element: i, start: offset, end: offset + n });
        offset += n;
    }
    let source: Vec<char> = chunk_source(parse).chars().collect();
    debug_assert_eq!(source.len(), offset);

    let mut raw: Vec<Raw> = Vec::new();
    let mut k = 0;
    while k < spans.len() {
        if spans[k].len() > p.max {
            raw.extend(windows(&spans[k..=k], p));
            k += 1;
            continue;
        }
        let run_end = spans[k..].iter().position(|s| s.len() > p.max).map_or(spans.len(), |o| k + o);
        raw.extend(pack_run(&spans[k..run_end], p));
        k = run_end;
    }

    // a short run sits between windows (or alone); fold it into a neighbour
    let mut i = 0;
    while i < raw.len() {
        if raw.len() > 1 && raw[i].end - raw[i].start < p.min {
            let fits = |a: &Raw, b: &Raw| b.end - a.start <= p.max;
            if i > 0 && fits(&raw[i - 1], &raw[i]) {
                let c = raw.remove(i);
                raw[i - 1].absorb(c);
                continue;
            }
            if i + 1 < raw.len() && fits(&raw[i], &raw[i + 1]) {
                let c = raw.remove(i);
                raw[i].absorb(c);
                continue;
            }
        }
        i += 1;
    }
    raw.into_iter()
        .map(|r| Chunk { text: source[r.start..r.end].iter().collect(), elements: r.elements, start: r.start, end: r.end })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Span {
    element: usize,
    start: usize,
    end: usize,
}

impl Span {
    fn len(&self) -> usize {
        self.end - self.start
    }
}

struct Raw {
    elements: Vec<usize>,
    start: usize,
    end: usize,
}

impl Raw {
    fn absorb(&mut self, other: Raw) {
        self.elements.extend(other.elements);
        self.elements.sort_unstable();
        self.elements.dedup();
        self.start = self.start.min(other.start);
        self.end = self.end.max(other.end);
    }
}

/// Fixed windows over the text of `spans`; the last window ends at the run end.
fn windows(spans: &[Span], p: &ChunkParams) -> Vec<Raw> {
    let (lo, hi) = (spans[0].start, spans[spans.len() - 1].end);
    let stride = p.target.saturating_sub(p.overlap).max(1);
    let mut cuts = Vec::new();
    let mut s = lo;
    while s + p.target < hi {
        cuts.push((s, s + p.target));
        s += stride;
    }
    cuts.push((s, hi));
    cuts.into_iter()
        .map(|(a, b)| Raw { elements: spans.iter().filter(|sp| sp.start < b && sp.end > a).map(|sp| sp.element).collect(), start: a, end: b })
        .collect()
}

/// Splits a run of whole elements at element boundaries, minimizing the
/// squared distance of each chunk length from the target.
fn pack_run(run: &[Span], p: &ChunkParams) -> Vec<Raw> {
    let n = run.len();
    let total = run[n - 1].end - run[0].start;
    let mut best: Vec<Option<(u64, usize)>> = vec![None; n + 1];
    best[0] = Some((0, 0));
    for i in 1..=n {
        for j in 0..i {
            let Some((base, _)) = best[j] else { continue };
            let len = run[i - 1].end - run[j].start;
            if len < p.min || len > p.max {
                continue;
            }
            let cost = base + (len.abs_diff(p.target) as u64).pow(2);
            if best[i].is_none_or(|(c, _)| cost < c) {
                best[i] = Some((cost, j));
            }
        }
    }
    if best[n].is_none() {
        if total <= p.max {
            return vec![Raw { elements: run.iter().map(|s| s.element).collect(), start: run[0].start, end: run[n - 1].end }];
        }
        return windows(run, p);
    }
    let mut out = Vec::new();
    let mut i = n;
    while i > 0 {
        let (_, j) = best[i].expect("reachable split");
        out.push(Raw { elements: run[j..i].iter().map(|s| s.element).collect(), start: run[j].start, end: run[i - 1].end });
        i = j;
    }
    out.reverse();
    out
}

/// Lowercased whitespace tokens with punctuation trimmed from both ends.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Okapi BM25 with a non-negative idf, `ln(1 + (N - df + 0.5) / (df + 0.5))`.
/// Repeated query tokens contribute once per occurrence.
pub fn bm25_scores(query: &str, docs: &[&str], p: &Bm25Params) -> Vec<f64> {
    let toks: Vec<Vec<String>> = docs.iter().map(|d| tokenize(d)).collect();
    let n = toks.len() as f64;
    if toks.is_empty() {
        return Vec::new();
    }
    let avgdl = toks.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let q = tokenize(query);
    toks.iter()
        .map(|doc| {
            let dl = doc.len() as f64;
            q.iter()
                .map(|term| {
                    let df = toks.iter().filter(|d| d.contains(term)).count() as f64;
                    let tf = doc.iter().filter(|t| *t == term).count() as f64;
                    if tf == 0.0 {
                        return 0.0;
                    }
                    let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                    let norm = if avgdl > 0.0 { 1.0 - p.b + p.b * dl / avgdl } else { 1.0 };
                    idf * tf * (p.k1 + 1.0) / (tf + p.k1 * norm)
                })
                .sum()
        })
        .collect()
}

/// Indices and scores of the top `k` chunks; ties go to the earlier chunk.
pub fn bm25_rank(query: &str, chunks: &[Chunk], k: usize, p: &Bm25Params) -> Vec<(usize, f64)> {
    let docs: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
    rank_scores(bm25_scores(query, &docs, p), k)
}

fn rank_scores(scores: Vec<f64>, k: usize) -> Vec<(usize, f64)> {
    let mut ranked: Vec<(usize, f64)> = scores.into_iter().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}

/// Embedding backend for dense retrieval; no implementation ships here.
pub trait DenseEncoder {
    fn embed(&self, text: &str) -> Vec<f32>;
}

/// Cosine-similarity ranking through a [`DenseEncoder`].
pub fn dense_rank(encoder: &dyn DenseEncoder, query: &str, chunks: &[Chunk], k: usize) -> Vec<(usize, f64)> {
    let q = encoder.embed(query);
    let cos = |v: &[f32]| {
        let dot: f64 = q.iter().zip(v).map(|(a, b)| *a as f64 * *b as f64).sum();
        let nq: f64 = q.iter().map(|a| (*a as f64).powi(2)).sum::<f64>().sqrt();
        let nv: f64 = v.iter().map(|a| (*a as f64).powi(2)).sum::<f64>().sqrt();
        if nq == 0.0 || nv == 0.0 {
            0.0
        } else {
            dot / (nq * nv)
        }
    };
    rank_scores(chunks.iter().map(|c| cos(&encoder.embed(&c.text))).collect(), k)
}

fn contains_normalized(haystack: &str, needle: &str) -> bool {
    normalize(haystack).contains(normalize(needle).as_ref())
}

/// Retrieval outcome of one question against one parsed page.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct QaOutcome {
    /// 1-based rank of the first top-10 chunk containing the answer.
    pub answer_rank: Option<usize>,
    pub evidence_rank: Option<usize>,
    /// The answer does not occur anywhere in the parsed page text.
    pub answer_missing: bool,
}

pub fn evaluate_qa(qa: &QAPair, parse: &ParseOutput, chunking: &ChunkParams, bm25: &Bm25Params) -> QaOutcome {
    let chunks = chunk(parse, chunking);
    let ranked = bm25_rank(&qa.question, &chunks, TOP_K, bm25);
    let first = |needle: &str| ranked.iter().position(|(i, _)| contains_normalized(&chunks[*i].text, needle)).map(|r| r + 1);
    QaOutcome {
        answer_rank: first(&qa.answer),
        evidence_rank: first(&qa.evidence),
        answer_missing: !contains_normalized(&parse.page_text(), &qa.answer),
    }
}

/// Percentages over a QA set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalMetrics {
    pub n: usize,
    /// `(k, AnswerHit@k)` for each of [`HIT_KS`].
    pub answer_hit: Vec<(usize, f64)>,
    pub evidence_recall: Vec<(usize, f64)>,
    pub mrr10: f64,
    pub answer_missing: f64,
}

impl RetrievalMetrics {
    pub fn answer_hit_at(&self, k: usize) -> Option<f64> {
        self.answer_hit.iter().find(|(kk, _)| *kk == k).map(|(_, v)| *v)
    }

    pub fn evidence_recall_at(&self, k: usize) -> Option<f64> {
        self.evidence_recall.iter().find(|(kk, _)| *kk == k).map(|(_, v)| *v)
    }
}

pub fn retrieval_metrics(outcomes: &[QaOutcome]) -> RetrievalMetrics {
    let n = outcomes.len();
    let pct = |c: usize| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 };
    let at = |k: usize, pick: fn(&QaOutcome) -> Option<usize>| pct(outcomes.iter().filter(|o| pick(o).is_some_and(|r| r <= k)).count());
    let mrr = if n == 0 { 0.0 } else { outcomes.iter().map(|o| o.evidence_rank.map_or(0.0, |r| 1.0 / r as f64)).sum::<f64>() / n as f64 };
    RetrievalMetrics {
        n,
        answer_hit: HIT_KS.iter().map(|&k| (k, at(k, |o| o.answer_rank))).collect(),
        evidence_recall: HIT_KS.iter().map(|&k| (k, at(k, |o| o.evidence_rank))).collect(),
        mrr10: mrr,
        answer_missing: pct(outcomes.iter().filter(|o| o.answer_missing).count()),
    }
}

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::adapter::{ParseJob, ParserAdapter};
use super::matrix::{derive_seed, ConfigEntry, ConfigSpec, BASE_SEED};
use super::CampaignError;
use crate::audit::{audit_page_with, AnnotationMasks, Thresholds};
use crate::document::{load_annotations, parse_output_from_json, parse_output_to_json, AnnotationSet, BBox, ParseOutput};
use crate::policy::{policy_prompted, policy_random, policy_rule, ChatClient, PolicyContext, PolicyDecision, PolicyKind, RuleThresholds};
use crate::probe::{apply_nt, apply_seeded, compute_page_context, NtStamp, PageContext, Placement, ProbeConfig, ProbeMask};
use crate::record::CampaignRecord;

/// Pages with fewer clean elements than this are left out of the pool.
pub const MIN_SPANS: usize = 5;

pub struct PoolPage {
    pub image_id: String,
    pub image: RgbImage,
    pub annotations: Option<AnnotationSet>,
}

/// Every `<id>.png` in `dir` (sorted by id), with `<id>.json` annotations when
/// present. Alpha rasters are skipped.
pub fn load_pool(dir: impl AsRef<Path>) -> Result<Vec<PoolPage>, CampaignError> {
    let dir = dir.as_ref();
    let mut ids: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().map(str::to_string))
        .filter(|n| n.ends_with(".png") && !n.ends_with(".alpha.png"))
        .map(|n| n.trim_end_matches(".png").to_string())
        .collect();
    ids.sort();
    ids.into_iter()
        .map(|id| {
            let image = image::open(dir.join(format!("{id}.png")))?.to_rgb8();
            let ann = dir.join(format!("{id}.json"));
            let annotations = if ann.exists() {
                Some(load_annotations(&ann).map_err(|e| CampaignError::Pool(format!("{id}: {e}")))?.0)
            } else {
                None
            };
            Ok(PoolPage { image_id: id, image, annotations })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignOptions {
    pub base_seed: u64,
    pub thresholds: Thresholds,
    pub min_spans: usize,
    pub nt_stamp: NtStamp,
    /// Pages perturbed and sent to the adapter together.
    pub pages_per_batch: usize,
    /// Directory for content-addressed clean parses; in memory when unset.
    pub clean_cache: Option<PathBuf>,
}

impl Default for CampaignOptions {
    fn default() -> Self {
        Self {
            base_seed: BASE_SEED,
            thresholds: Thresholds::default(),
            min_spans: MIN_SPANS,
            nt_stamp: NtStamp::default(),
            pages_per_batch: 1,
            clean_cache: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skip {
    pub image_id: String,
    pub config_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exclusion {
    pub image_id: String,
    pub reason: String,
}

/// What was actually applied in one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunLog {
    pub image_id: String,
    pub config_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicyKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<ProbeConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nt_target: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nt_achieved: Option<f64>,
    pub nt_shortfall: bool,
    pub placement_fallback: bool,
    pub strategy_fallback: bool,
    pub probe_fallback: bool,
}

#[derive(Debug, Default, Serialize)]
pub struct CampaignOutput {
    pub records: Vec<CampaignRecord>,
    pub skips: Vec<Skip>,
    pub excluded: Vec<Exclusion>,
    pub runs: Vec<RunLog>,
}

/// Clean parses keyed by adapter and image content.
pub struct CleanCache {
    dir: Option<PathBuf>,
    mem: Mutex<HashMap<String, ParseOutput>>,
}

impl CleanCache {
    pub fn new(dir: Option<PathBuf>) -> Self {
        Self { dir, mem: Mutex::new(HashMap::new()) }
    }

    pub fn key(adapter: &str, image_id: &str, image: &RgbImage) -> String {
        let mut h = Sha256::new();
        h.update(adapter.as_bytes());
        h.update([0]);
        h.update(image_id.as_bytes());
        h.update([0]);
        h.update(image.width().to_le_bytes());
        h.update(image.height().to_le_bytes());
        h.update(image.as_raw());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn get(&self, key: &str) -> Option<ParseOutput> {
        if let Some(p) = self.mem.lock().unwrap().get(key) {
            return Some(p.clone());
        }
        let dir = self.dir.as_ref()?;
        let text = fs::read_to_string(dir.join(format!("{key}.json"))).ok()?;
        parse_output_from_json(&text).ok().map(|(p, _)| p)
    }

    fn put(&self, key: &str, p: &ParseOutput) -> Result<(), CampaignError> {
        if let Some(dir) = &self.dir {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(format!("{key}.json")), parse_output_to_json(p))?;
        }
        self.mem.lock().unwrap().insert(key.to_string(), p.clone());
        Ok(())
    }

    /// Clean parses for every page, in pool order.
    pub fn parse_all(&self, pool: &[PoolPage], adapter: &dyn ParserAdapter) -> Result<Vec<Result<ParseOutput, String>>, CampaignError> {
        let keys: Vec<String> = pool.iter().map(|p| Self::key(adapter.name(), &p.image_id, &p.image)).collect();
        let mut out: Vec<Option<Result<ParseOutput, String>>> = keys.iter().map(|k| self.get(k).map(Ok)).collect();
        let missing: Vec<usize> = (0..pool.len()).filter(|&i| out[i].is_none()).collect();
        let empties: Vec<ProbeMask> = missing
            .iter()
            .map(|&i| ProbeMask::empty(pool[i].image.width() as usize, pool[i].image.height() as usize))
            .collect();
        let jobs: Vec<ParseJob> = missing
            .iter()
            .zip(&empties)
            .map(|(&i, m)| ParseJob {
                job_id: format!("{}__clean", pool[i].image_id),
                image_id: pool[i].image_id.clone(),
                image: &pool[i].image,
                mask: m,
            })
            .collect();
        for (&i, r) in missing.iter().zip(adapter.parse_batch(&jobs)) {
            if let Ok(p) = &r {
                self.put(&keys[i], p)?;
            }
            out[i] = Some(r);
        }
        Ok(out.into_iter().map(|r| r.expect("every page resolved")).collect())
    }
}

fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// A pool page that passed the span filter, with its clean parse and probe context.
struct Prepared<'a> {
    index: usize,
    page: &'a PoolPage,
    clean: ParseOutput,
    ctx: PageContext,
    boxes: Vec<BBox>,
    masks: Option<AnnotationMasks>,
}

fn prepare<'a>(
    pool: &'a [PoolPage],
    adapter: &dyn ParserAdapter,
    opts: &CampaignOptions,
    out: &mut CampaignOutput,
) -> Result<Vec<Prepared<'a>>, CampaignError> {
    let cache = CleanCache::new(opts.clean_cache.clone());
    let cleans = cache.parse_all(pool, adapter)?;
    let mut ready = Vec::new();
    for (index, (page, clean)) in pool.iter().zip(cleans).enumerate() {
        let clean = match clean {
            Ok(c) => c,
            Err(reason) => {
                out.excluded.push(Exclusion { image_id: page.image_id.clone(), reason: format!("clean parse failed: {reason}") });
                continue;
            }
        };
        if clean.len() < opts.min_spans {
            out.excluded.push(Exclusion {
                image_id: page.image_id.clone(),
                reason: format!("{} clean spans, fewer than {}", clean.len(), opts.min_spans),
            });
            continue;
        }
        let (w, h) = (page.image.width() as usize, page.image.height() as usize);
        if clean.raster_dims() != (w, h) {
            out.excluded.push(Exclusion {
                image_id: page.image_id.clone(),
                reason: format!("clean parse is {:?}, image is {:?}", clean.raster_dims(), (w, h)),
            });
            continue;
        }
        let boxes: Vec<BBox> = clean.elements.iter().map(|e| e.bbox).collect();
        let ctx = compute_page_context(&boxes, w, h);
        let masks = page.annotations.as_ref().map(|a| AnnotationMasks::from_annotations(a, w, h));
        ready.push(Prepared { index, page, clean, ctx, boxes, masks });
    }
    Ok(ready)
}

struct Perturbed {
    image_id: String,
    config_id: String,
    page: usize,
    image: RgbImage,
    mask: ProbeMask,
    log: RunLog,
}

fn log_for(image_id: &str, config_id: &str) -> RunLog {
    RunLog {
        image_id: image_id.to_string(),
        config_id: config_id.to_string(),
        policy: None,
        config: None,
        nt_target: None,
        nt_achieved: None,
        nt_shortfall: false,
        placement_fallback: false,
        strategy_fallback: false,
        probe_fallback: false,
    }
}

fn perturb(p: &Prepared<'_>, entry: &ConfigEntry, opts: &CampaignOptions) -> Result<(RgbImage, ProbeMask, RunLog), String> {
    let mut log = log_for(&p.page.image_id, &entry.id);
    let seed = derive_seed(opts.base_seed, p.index, &entry.id);
    let cfg = match &entry.spec {
        ConfigSpec::Fixed { config } => config.clone().with_seed(seed),
        ConfigSpec::Sweep { sweep } => sweep.instantiate(p.index),
        ConfigSpec::Nt { target } => {
            // one placement stream per page for every target, so each target's
            // stamps extend the previous target's and the sweep is a nested series
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.base_seed, p.index, "NT"));
            let (img, nt) = apply_nt(*target, &opts.nt_stamp, &p.page.image, &p.ctx, &p.boxes, &mut rng).map_err(|e| e.to_string())?;
            log.nt_target = Some(nt.target);
            log.nt_achieved = Some(nt.achieved);
            log.nt_shortfall = nt.shortfall;
            return Ok((img, nt.mask, log));
        }
    };
    let pert = apply_seeded(&cfg, &p.page.image, &p.ctx).map_err(|e| e.to_string())?;
    log.placement_fallback = pert.any_fallback();
    log.config = Some(cfg);
    Ok((pert.image, pert.mask, log))
}

/// Sends perturbed pages to the adapter and audits the results.
fn parse_and_audit(
    batch: Vec<Perturbed>,
    prepared: &[Prepared<'_>],
    adapter: &dyn ParserAdapter,
    opts: &CampaignOptions,
    out: &mut CampaignOutput,
) {
    let jobs: Vec<ParseJob> = batch
        .iter()
        .map(|b| ParseJob {
            job_id: format!("{}__{}", b.image_id, b.config_id),
            image_id: b.image_id.clone(),
            image: &b.image,
            mask: &b.mask,
        })
        .collect();
    let parsed = adapter.parse_batch(&jobs);
    drop(jobs);
    let results = par_map(&batch.iter().zip(parsed).collect::<Vec<_>>(), |(b, adv)| {
        let p = &prepared[b.page];
        let adv = adv.as_ref().map_err(|e| e.clone())?;
        let audit = audit_page_with(&p.clean, adv, b.mask.support(), p.page.annotations.as_ref().zip(p.masks.as_ref()), &opts.thresholds).map_err(|e| e.to_string())?;
        let mut rec = CampaignRecord::from_diagnostic(&b.image_id, &b.config_id, &audit.summary);
        rec.policy = b.log.policy.map(|k| k.to_string());
        Ok::<_, String>(rec)
    });
    for (b, r) in batch.into_iter().zip(results) {
        match r {
            Ok(rec) => {
                out.records.push(rec);
                out.runs.push(b.log);
            }
            Err(reason) => out.skips.push(Skip { image_id: b.image_id, config_id: b.config_id, reason }),
        }
    }
}

/// Fixed-matrix campaign. Pairs in `done` are not rerun. Records come back
/// ordered by configuration, then by pool order.
pub fn run_phase1(
    pool: &[PoolPage],
    adapter: &dyn ParserAdapter,
    configs: &[ConfigEntry],
    opts: &CampaignOptions,
    done: &HashSet<(String, String)>,
) -> Result<CampaignOutput, CampaignError> {
    let mut out = CampaignOutput::default();
    let prepared = prepare(pool, adapter, opts, &mut out)?;
    let indices: Vec<usize> = (0..prepared.len()).collect();
    for chunk in indices.chunks(opts.pages_per_batch.max(1)) {
        let work: Vec<(usize, &ConfigEntry)> = chunk
            .iter()
            .flat_map(|&k| configs.iter().map(move |c| (k, c)))
            .filter(|(k, c)| !done.contains(&(prepared[*k].page.image_id.clone(), c.id.clone())))
            .collect();
        let made = par_map(&work, |&(k, c)| perturb(&prepared[k], c, opts));
        let mut batch = Vec::new();
        for ((k, c), m) in work.into_iter().zip(made) {
            let image_id = prepared[k].page.image_id.clone();
            match m {
                Ok((image, mask, log)) => batch.push(Perturbed { image_id, config_id: c.id.clone(), page: k, image, mask, log }),
                Err(reason) => out.skips.push(Skip { image_id, config_id: c.id.clone(), reason }),
            }
        }
        parse_and_audit(batch, &prepared, adapter, opts, &mut out);
    }
    let config_order: HashMap<&str, usize> = configs.iter().enumerate().map(|(i, c)| (c.id.as_str(), i)).collect();
    sort_output(&mut out, |cid| config_order.get(cid).copied().unwrap_or(usize::MAX), pool);
    Ok(out)
}

fn sort_output(out: &mut CampaignOutput, config_rank: impl Fn(&str) -> usize, pool: &[PoolPage]) {
    let page_order: HashMap<&str, usize> = pool.iter().enumerate().map(|(i, p)| (p.image_id.as_str(), i)).collect();
    let key = |config: &str, image: &str| (config_rank(config), page_order.get(image).copied().unwrap_or(usize::MAX));
    out.records.sort_by_key(|r| (key(&r.config_id, &r.image_id), r.policy.clone()));
    out.runs.sort_by_key(|r| (key(&r.config_id, &r.image_id), r.policy));
    out.skips.sort_by_key(|s| key(&s.config_id, &s.image_id));
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Phase2Options {
    pub policies: Vec<PolicyKind>,
    pub rule: RuleThresholds,
    pub model: String,
    pub vlm_model: String,
}

impl Default for Phase2Options {
    fn default() -> Self {
        Self { policies: vec![PolicyKind::Random, PolicyKind::Rule], rule: RuleThresholds::default(), model: "chat".into(), vlm_model: "vision".into() }
    }
}

fn placement_code(p: Placement) -> &'static str {
    match p {
        Placement::Anchor => "a",
        Placement::Content => "c",
        Placement::Random => "r",
        Placement::Bridge => "b",
    }
}

/// Compact label of a chosen probe, e.g. `P5.b`.
pub fn decision_label(cfg: &ProbeConfig) -> String {
    format!("{}.{}", cfg.probe_id, placement_code(cfg.placement))
}

fn decide(
    kind: PolicyKind,
    p: &Prepared<'_>,
    opts: &CampaignOptions,
    p2: &Phase2Options,
    client: Option<&dyn ChatClient>,
) -> Result<PolicyDecision, String> {
    let seed = derive_seed(opts.base_seed, p.index, kind.as_str());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ctx = PolicyContext::new(&p.page.image, &p.clean, &p.ctx);
    let mut d = match kind {
        PolicyKind::Random => policy_random(&mut rng),
        PolicyKind::Rule => policy_rule(&ctx, &p2.rule, &mut rng),
        k => {
            let client = client.ok_or_else(|| format!("{k} policy needs a chat client"))?;
            let model = if k == PolicyKind::Vlm { &p2.vlm_model } else { &p2.model };
            policy_prompted(k, model, &ctx, Some(&p.page.image), client).map_err(|e| e.to_string())?
        }
    };
    d.config.seed = seed;
    Ok(d)
}

/// Policy campaign over the same pool and probe schema. Each record carries
/// the policy name; `config_id` is the chosen probe and placement.
pub fn run_phase2(
    pool: &[PoolPage],
    adapter: &dyn ParserAdapter,
    opts: &CampaignOptions,
    p2: &Phase2Options,
    client: Option<&dyn ChatClient>,
    done: &HashSet<(String, String)>,
) -> Result<CampaignOutput, CampaignError> {
    let mut out = CampaignOutput::default();
    let prepared = prepare(pool, adapter, opts, &mut out)?;
    let indices: Vec<usize> = (0..prepared.len()).collect();
    for chunk in indices.chunks(opts.pages_per_batch.max(1)) {
        let mut batch = Vec::new();
        for &k in chunk {
            let p = &prepared[k];
            for &kind in &p2.policies {
                if done.contains(&(p.page.image_id.clone(), kind.to_string())) {
                    continue;
                }
                let skip = |reason: String| Skip { image_id: p.page.image_id.clone(), config_id: kind.to_string(), reason };
                let d = match decide(kind, p, opts, p2, client) {
                    Ok(d) => d,
                    Err(reason) => {
                        out.skips.push(skip(reason));
                        continue;
                    }
                };
                match apply_seeded(&d.config, &p.page.image, &p.ctx) {
                    Ok(pert) => {
                        let config_id = decision_label(&d.config);
                        let mut log = log_for(&p.page.image_id, &config_id);
                        log.policy = Some(kind);
                        log.placement_fallback = pert.any_fallback();
                        log.strategy_fallback = d.strategy_fallback;
                        log.probe_fallback = d.probe_fallback;
                        log.config = Some(d.config);
                        batch.push(Perturbed { image_id: p.page.image_id.clone(), config_id, page: k, image: pert.image, mask: pert.mask, log });
                    }
                    Err(e) => out.skips.push(skip(e.to_string())),
                }
            }
        }
        parse_and_audit(batch, &prepared, adapter, opts, &mut out);
    }
    let policy_rank: HashMap<String, usize> = p2.policies.iter().enumerate().map(|(i, k)| (k.to_string(), i)).collect();
    let page_order: HashMap<&str, usize> = pool.iter().enumerate().map(|(i, p)| (p.image_id.as_str(), i)).collect();
    let key = |policy: Option<&str>, image: &str| {
        (policy.and_then(|p| policy_rank.get(p).copied()).unwrap_or(usize::MAX), page_order.get(image).copied().unwrap_or(usize::MAX))
    };
    out.records.sort_by_key(|r| key(r.policy.as_deref(), &r.image_id));
    out.runs.sort_by_key(|r| key(r.policy.map(|k| k.as_str()), &r.image_id));
    out.skips.sort_by_key(|s| key(Some(&s.config_id), &s.image_id));
    Ok(out)
}

/// `(image_id, config_id)` pairs already present, for resuming. Policy rows
/// are keyed by policy name instead of config id.
pub fn completed_pairs(records: &[CampaignRecord]) -> HashSet<(String, String)> {
    records
        .iter()
        .map(|r| (r.image_id.clone(), r.policy.clone().unwrap_or_else(|| r.config_id.clone())))
        .collect()
}

pub fn write_skips(path: impl AsRef<Path>, skips: &[Skip]) -> Result<(), CampaignError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["image_id", "config_id", "reason"])?;
    for s in skips {
        w.write_record([&s.image_id, &s.config_id, &s.reason])?;
    }
    w.flush()?;
    Ok(())
}

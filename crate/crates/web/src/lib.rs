//! Browser demo. [`DemoCore`] holds one synthetic page and its clean parse;
//! each operation perturbs the page, re-parses it with the mock parser and
//! audits the result. The wasm-bindgen layer below only converts types.

use image::RgbImage;
use prosa_core::audit::{audit_page, AuditError, Thresholds};
use prosa_core::campaign::{decode_config, derive_seed, CampaignError, ConfigSpec, BASE_SEED};
use prosa_core::document::{BBox, ParseOutput};
use prosa_core::probe::{apply_nt, apply_seeded, compute_page_context, NtStamp, PageContext, Placement, ProbeConfig, ProbeError, ProbeId, ProbeMask, ProbeParams};
use prosa_core::synthetic::{generate_page, mock_parse, MockParserRules, PageSpec, SyntheticError, SyntheticPage};
use prosa_core::text::{lcs_len, levenshtein, text_sim};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use wasm_bindgen::prelude::*;

#[derive(Debug, thiserror::Error)]
pub enum DemoError {
    #[error(transparent)]
    Synthetic(#[from] SyntheticError),
    #[error(transparent)]
    Campaign(#[from] CampaignError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error("{0}")]
    Input(String),
}

const ADV_BOX: [u8; 3] = [220, 30, 30];

/// A rendered outcome: RGBA pixels with the perturbed parse outlined, plus
/// the audit summary as JSON.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub width: usize,
    pub height: usize,
    pub rgba: Vec<u8>,
    pub summary: serde_json::Value,
}

pub struct DemoCore {
    page: SyntheticPage,
    clean: ParseOutput,
    ctx: PageContext,
    boxes: Vec<BBox>,
    rules: MockParserRules,
}

impl DemoCore {
    pub fn new(seed: u64) -> Result<Self, DemoError> {
        let page = generate_page(&PageSpec::standard("demo", seed))?;
        let (w, h) = page.image.dimensions();
        let rules = MockParserRules::default();
        let clean = mock_parse(&page.sidecar, &ProbeMask::empty(w as usize, h as usize), &rules);
        let boxes: Vec<BBox> = page.sidecar.elements.iter().map(|e| e.bbox).collect();
        let ctx = compute_page_context(&boxes, w as usize, h as usize);
        Ok(Self { page, clean, ctx, boxes, rules })
    }

    pub fn clean_view(&self) -> Outcome {
        let summary = json!({ "elements": self.clean.elements.len() });
        Outcome { width: self.ctx.width, height: self.ctx.height, rgba: render(&self.page.image, &[]), summary }
    }

    /// Run one configuration of the experiment matrix (`A01`, `S07`, `NT03`...)
    /// as it would be run on the first pool image.
    pub fn run_config(&self, id: &str) -> Result<Outcome, DemoError> {
        let entry = decode_config(id)?;
        let (image, mask) = match entry.spec {
            ConfigSpec::Fixed { config } => self.apply(&config.with_seed(derive_seed(BASE_SEED, 0, &entry.id)))?,
            ConfigSpec::Sweep { sweep } => self.apply(&sweep.instantiate(0))?,
            ConfigSpec::Nt { target } => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(BASE_SEED, 0, "NT"));
                let (image, outcome) = apply_nt(target, &NtStamp::default(), &self.page.image, &self.ctx, &self.boxes, &mut rng)?;
                (image, outcome.mask)
            }
        };
        self.finish(&entry.id, image, &mask)
    }

    /// Run a probe with every parameter set at the same relative position
    /// `strength` in [0, 1] of its catalog range.
    pub fn run_custom(&self, probe: &str, placement: &str, strength: f64, seed: u64) -> Result<Outcome, DemoError> {
        let probe: ProbeId = probe.parse().map_err(DemoError::Input)?;
        let placement: Placement = placement.parse().map_err(DemoError::Input)?;
        if !(0.0..=1.0).contains(&strength) {
            return Err(DemoError::Input(format!("strength {strength} outside [0, 1]")));
        }
        let mut params = ProbeParams::default();
        for &(p, lo, hi) in probe.catalog().ranges {
            params.set(p, lo + strength * (hi - lo));
        }
        let cfg = ProbeConfig::new(probe, params, placement).with_seed(seed);
        let (image, mask) = self.apply(&cfg)?;
        self.finish(&format!("{probe}/{}", placement.as_str()), image, &mask)
    }

    fn apply(&self, cfg: &ProbeConfig) -> Result<(RgbImage, ProbeMask), DemoError> {
        cfg.validate()?;
        let p = apply_seeded(cfg, &self.page.image, &self.ctx)?;
        Ok((p.image, p.mask))
    }

    fn finish(&self, label: &str, image: RgbImage, mask: &ProbeMask) -> Result<Outcome, DemoError> {
        let adv = mock_parse(&self.page.sidecar, mask, &self.rules);
        let annotations = self.page.annotations();
        let audit = audit_page(&self.clean, &adv, mask.support(), Some(&annotations), &Thresholds::default())?;
        let s = &audit.summary;
        let summary = json!({
            "config": label,
            "b_slr": s.b_slr,
            "slr_miss": s.slr_miss,
            "slr_topo": s.slr_topo,
            "pathways": s.pathways,
            "exposure": s.exposure,
            "terminal": s.terminal,
            "clean_elements": self.clean.elements.len(),
            "adv_elements": adv.elements.len(),
        });
        let boxes: Vec<BBox> = adv.elements.iter().map(|e| e.bbox).collect();
        Ok(Outcome { width: self.ctx.width, height: self.ctx.height, rgba: render(&image, &boxes), summary })
    }
}

/// Text similarity and its ingredients for two strings, as JSON.
pub fn compare_text_json(reference: &str, hypothesis: &str) -> serde_json::Value {
    let (r, h): (Vec<char>, Vec<char>) = (reference.chars().collect(), hypothesis.chars().collect());
    let dist = levenshtein(reference, hypothesis);
    json!({
        "text_sim": text_sim(reference, hypothesis),
        "lcs": lcs_len(reference, hypothesis),
        "levenshtein": dist,
        "cer": if r.is_empty() { None } else { Some(dist as f64 / r.len() as f64) },
        "chars": [r.len(), h.len()],
    })
}

fn render(image: &RgbImage, boxes: &[BBox]) -> Vec<u8> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let mut out: Vec<u8> = image.pixels().flat_map(|p| [p[0], p[1], p[2], 255]).collect();
    let mut put = |x: usize, y: usize| {
        if x < w && y < h {
            let i = (y * w + x) * 4;
            out[i..i + 3].copy_from_slice(&ADV_BOX);
        }
    };
    for b in boxes {
        let r = b.pixel_range(w, h);
        if r.is_empty() {
            continue;
        }
        for x in r.x0..r.x1 {
            put(x, r.y0);
            put(x, r.y1 - 1);
        }
        for y in r.y0..r.y1 {
            put(r.x0, y);
            put(r.x1 - 1, y);
        }
    }
    out
}

#[wasm_bindgen]
pub struct Demo(DemoCore);

#[wasm_bindgen]
pub struct Render(Outcome);

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> Result<Demo, JsError> {
        DemoCore::new(seed.into()).map(Demo).map_err(js)
    }

    pub fn clean(&self) -> Render {
        Render(self.0.clean_view())
    }

    #[wasm_bindgen(js_name = runConfig)]
    pub fn run_config(&self, id: &str) -> Result<Render, JsError> {
        self.0.run_config(id).map(Render).map_err(js)
    }

    #[wasm_bindgen(js_name = runCustom)]
    pub fn run_custom(&self, probe: &str, placement: &str, strength: f64, seed: u32) -> Result<Render, JsError> {
        self.0.run_custom(probe, placement, strength, seed.into()).map(Render).map_err(js)
    }
}

#[wasm_bindgen]
impl Render {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.0.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.0.height
    }

    pub fn rgba(&self) -> Vec<u8> {
        self.0.rgba.clone()
    }

    pub fn summary(&self) -> String {
        self.0.summary.to_string()
    }
}

#[wasm_bindgen(js_name = compareText)]
pub fn compare_text(reference: &str, hypothesis: &str) -> String {
    compare_text_json(reference, hypothesis).to_string()
}

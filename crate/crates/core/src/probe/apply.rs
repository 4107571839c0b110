use image::RgbImage;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{Appearance, Behavior, ProbeConfig, ProbeId};
use super::context::PageContext;
use super::geometry::{Pose, Shape};
use super::mask::{compose_in_place, local_background, ProbeMask};
use super::placement::{place_probe, PlacementOutcome};
use super::ProbeError;
use crate::document::BBox;
use crate::raster::BitMask;

/// Cap on the union footprint of a multi-probe page, as a fraction of the page.
pub const AREA_BUDGET: f64 = 0.25;

/// Ring width used to estimate the erase target color.
const BACKGROUND_RING: usize = 8;

/// Result of the perturbation operator.
#[derive(Debug, Clone)]
pub struct Perturbation {
    pub image: RgbImage,
    pub mask: ProbeMask,
    /// One entry per placed probe, in composition order.
    pub placements: Vec<PlacementOutcome>,
    /// Probes dropped because they would push the union past [`AREA_BUDGET`].
    pub over_budget: u8,
}

impl Perturbation {
    pub fn any_fallback(&self) -> bool {
        self.placements.iter().any(|p| p.fallback)
    }
}

fn textured(color: [u8; 3], x: usize, y: usize) -> [u8; 3] {
    // diagonal hatching: every other 3-px stripe is shaded to 70%
    if ((x + y) / 3) % 2 == 0 {
        color
    } else {
        color.map(|c| (c as f64 * 0.7).round() as u8)
    }
}

fn build_mask(cfg: &ProbeConfig, shape: &Shape, center: Pose, image: &RgbImage) -> ProbeMask {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let pose = shape.snap(center);
    let support = shape.rasterize(pose, w, h);
    let alpha = cfg.effective_alpha() as f32;
    let color = match cfg.behavior {
        Behavior::Erase => local_background(image, &support, BACKGROUND_RING),
        Behavior::Inject | Behavior::Blend => cfg.color(),
    };
    match cfg.appearance {
        Appearance::Solid | Appearance::Ring => ProbeMask::uniform(support, alpha, color),
        Appearance::Gradient => ProbeMask::from_fn(support, |x, y| {
            (alpha * shape.across(pose, x as f64 + 0.5, y as f64 + 0.5) as f32, color)
        }),
        Appearance::Texture => ProbeMask::from_fn(support, |x, y| (alpha, textured(color, x, y))),
    }
}

fn check_dims(image: &RgbImage, ctx: &PageContext) -> Result<(), ProbeError> {
    let dims = (image.width() as usize, image.height() as usize);
    if dims != (ctx.width, ctx.height) {
        return Err(ProbeError::DimensionMismatch { image: dims, mask: (ctx.width, ctx.height) });
    }
    Ok(())
}

/// Render, place, and compose `cfg.probe_count` probes onto `image`.
///
/// Probes are composed in sequence, so an erase probe samples its background
/// from the page as left by earlier probes. A probe after the first is skipped
/// when it would push the union footprint above [`AREA_BUDGET`].
pub fn apply(cfg: &ProbeConfig, image: &RgbImage, ctx: &PageContext, rng: &mut impl Rng) -> Result<Perturbation, ProbeError> {
    cfg.validate()?;
    check_dims(image, ctx)?;
    let (w, h) = (ctx.width, ctx.height);
    let mut out = image.clone();
    let mut union = ProbeMask::empty(w, h);
    let mut placements = Vec::new();
    let mut over_budget = 0;
    for i in 0..cfg.probe_count {
        let shape = Shape::from_config(cfg, w, h, rng)?;
        let placed = place_probe(cfg.placement, &shape, ctx, rng);
        let mask = build_mask(cfg, &shape, placed.center, &out);
        if i > 0 {
            let mut joint = union.support().clone();
            joint.union_with(mask.support());
            if joint.count() as f64 > AREA_BUDGET * (w * h) as f64 {
                over_budget += 1;
                continue;
            }
        }
        compose_in_place(&mut out, &mask);
        union.merge(&mask);
        placements.push(placed);
    }
    if union.support().is_empty() {
        return Err(ProbeError::EmptySupport);
    }
    Ok(Perturbation { image: out, mask: union, placements, over_budget })
}

/// [`apply`] with a generator seeded from `cfg.seed`.
pub fn apply_seeded(cfg: &ProbeConfig, image: &RgbImage, ctx: &PageContext) -> Result<Perturbation, ProbeError> {
    apply(cfg, image, ctx, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
}

/// Stamp used by targeted multi-stamp placement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct NtStamp {
    pub radius: f64,
    pub alpha: f64,
    /// Maximum number of stamps before giving up.
    pub budget: usize,
}

impl Default for NtStamp {
    fn default() -> Self {
        Self { radius: 40.0, alpha: 0.6, budget: 64 }
    }
}

#[derive(Debug, Clone)]
pub struct NtOutcome {
    pub mask: ProbeMask,
    pub target: f64,
    /// Fraction of elements whose box intersects the mask.
    pub achieved: f64,
    pub stamps: usize,
    /// Target not reached within the stamp budget.
    pub shortfall: bool,
    pub centers: Vec<Pose>,
}

/// Add disk stamps over not-yet-hit elements until at least `target` of the
/// elements intersect the mask or the stamp budget runs out.
///
/// Each stamp picks an uncovered element uniformly and centers on a uniformly
/// drawn pixel of its box, so every stamp hits at least one new element.
pub fn nt_place(target: f64, stamp: &NtStamp, ctx: &PageContext, elements: &[BBox], rng: &mut impl Rng) -> Result<NtOutcome, ProbeError> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(ProbeError::InvalidTarget(target));
    }
    if stamp.radius <= 0.0 {
        return Err(ProbeError::EmptyGeometry("r"));
    }
    let (w, h) = (ctx.width, ctx.height);
    let ranges: Vec<_> = elements.iter().map(|b| b.pixel_range(w, h)).collect();
    let mut hit = vec![false; elements.len()];
    let mut support = BitMask::new(w, h);
    let mut centers = Vec::new();
    let n = elements.len().max(1) as f64;
    let reached = |hit: &[bool]| !elements.is_empty() && hit.iter().filter(|b| **b).count() as f64 / n >= target - 1e-12;
    let disk = Shape::Disk { radius: stamp.radius, ring: false };
    while !reached(&hit) && centers.len() < stamp.budget {
        let open: Vec<usize> = (0..elements.len()).filter(|&i| !hit[i] && !ranges[i].is_empty()).collect();
        let Some(&pick) = open.choose(rng) else { break };
        let r = ranges[pick];
        let pose = Pose::new(rng.random_range(r.x0..r.x1) as f64 + 0.5, rng.random_range(r.y0..r.y1) as f64 + 0.5);
        let s = disk.rasterize(disk.snap(pose), w, h);
        for i in open {
            if s.any_in_range(ranges[i]) {
                hit[i] = true;
            }
        }
        support.union_with(&s);
        centers.push(pose);
    }
    let achieved = hit.iter().filter(|b| **b).count() as f64 / n;
    let mask = ProbeMask::uniform(support, stamp.alpha as f32, ProbeId::P3.default_color());
    Ok(NtOutcome { mask, target, achieved, stamps: centers.len(), shortfall: !reached(&hit), centers })
}

/// Targeted placement composed onto `image`.
pub fn apply_nt(
    target: f64,
    stamp: &NtStamp,
    image: &RgbImage,
    ctx: &PageContext,
    elements: &[BBox],
    rng: &mut impl Rng,
) -> Result<(RgbImage, NtOutcome), ProbeError> {
    check_dims(image, ctx)?;
    let outcome = nt_place(target, stamp, ctx, elements, rng)?;
    let mut out = image.clone();
    compose_in_place(&mut out, &outcome.mask);
    Ok((out, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::config::{Param, Placement, ProbeParams};
    use crate::probe::context::compute_page_context;
    use image::Rgb;

    fn page() -> (RgbImage, PageContext, Vec<BBox>) {
        let boxes = vec![
            BBox::new(40., 40., 380., 200.).unwrap(),
            BBox::new(420., 40., 760., 200.).unwrap(),
            BBox::new(40., 260., 380., 420.).unwrap(),
            BBox::new(420., 260., 760., 420.).unwrap(),
        ];
        let ctx = compute_page_context(&boxes, 800, 600);
        (RgbImage::from_pixel(800, 600, Rgb([255; 3])), ctx, boxes)
    }

    #[test]
    fn rect_area_matches_fraction() {
        let (img, ctx, _) = page();
        let params = ProbeParams::default().with(Param::AArea, 0.20).with(Param::Beta, 1.0);
        let cfg = ProbeConfig::new(ProbeId::P4, params, Placement::Content).with_seed(9);
        let p = apply_seeded(&cfg, &img, &ctx).unwrap();
        let tor = p.mask.coverage();
        assert!((tor - 0.20).abs() < 0.002, "tor {tor}");
    }

    #[test]
    fn same_seed_same_bytes() {
        let (img, ctx, _) = page();
        let params = ProbeParams::default().with(Param::RB, 50.0).with(Param::Kappa, 0.3).with(Param::Alpha, 0.5);
        let mut cfg = ProbeConfig::new(ProbeId::P8, params, Placement::Anchor).with_seed(77);
        cfg.probe_count = 3;
        let a = apply_seeded(&cfg, &img, &ctx).unwrap();
        let b = apply_seeded(&cfg, &img, &ctx).unwrap();
        assert_eq!(a.image.as_raw(), b.image.as_raw());
        assert_eq!(a.mask, b.mask);
    }

    #[test]
    fn three_probes_union() {
        let (img, ctx, _) = page();
        let params = ProbeParams::default().with(Param::R, 30.0).with(Param::Alpha, 1.0);
        let mut cfg = ProbeConfig::new(ProbeId::P3, params, Placement::Random);
        cfg.probe_count = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = apply(&cfg, &img, &ctx, &mut rng).unwrap();
        assert_eq!(p.placements.len(), 3);
        let mut expect = BitMask::new(800, 600);
        let disk = Shape::Disk { radius: 30.0, ring: false };
        for pl in &p.placements {
            expect.union_with(&disk.rasterize(disk.snap(pl.center), 800, 600));
        }
        assert_eq!(p.mask.support(), &expect);
    }

    #[test]
    fn budget_drops_extra_rects() {
        let (img, ctx, _) = page();
        let params = ProbeParams::default().with(Param::AArea, 0.2).with(Param::Beta, 0.5);
        let mut cfg = ProbeConfig::new(ProbeId::P4, params, Placement::Random).with_seed(3);
        cfg.probe_count = 3;
        let p = apply_seeded(&cfg, &img, &ctx).unwrap();
        assert!(p.mask.coverage() <= AREA_BUDGET);
        assert_eq!(p.placements.len() + p.over_budget as usize, 3);
    }

    #[test]
    fn erase_on_blank_page_is_invisible() {
        let (img, ctx, _) = page();
        let params = ProbeParams::default().with(Param::AArea, 0.05).with(Param::Beta, 1.0);
        let cfg = ProbeConfig::new(ProbeId::P4, params, Placement::Content).with_seed(1);
        let p = apply_seeded(&cfg, &img, &ctx).unwrap();
        assert_eq!(p.image, img);
        assert!(!p.mask.support().is_empty());
    }

    #[test]
    fn gradient_alpha_ramps() {
        let (img, ctx, _) = page();
        let params = ProbeParams::default().with(Param::Alpha, 0.4).with(Param::W, 10.0);
        let cfg = ProbeConfig::new(ProbeId::P6, params, Placement::Anchor).with_seed(2);
        let p = apply_seeded(&cfg, &img, &ctx).unwrap();
        let (x, y) = p.mask.support().iter_set().next().unwrap();
        let column: Vec<f32> = (y..y + 10).map(|yy| p.mask.alpha_at(x, yy)).collect();
        assert!(column.windows(2).all(|w| w[0] != w[1]));
        assert!(column.iter().all(|a| *a > 0.0 && *a <= 0.4));
    }

    #[test]
    fn nt_full_target_hits_everything() {
        let (_, ctx, boxes) = page();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let out = nt_place(1.0, &NtStamp::default(), &ctx, &boxes, &mut rng).unwrap();
        assert!(!out.shortfall);
        assert_eq!(out.achieved, 1.0);
        for b in &boxes {
            assert!(out.mask.support().any_in_range(b.pixel_range(800, 600)));
        }
    }

    #[test]
    fn nt_budget_shortfall() {
        let (_, ctx, boxes) = page();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let stamp = NtStamp { radius: 5.0, alpha: 0.6, budget: 1 };
        let out = nt_place(0.5, &stamp, &ctx, &boxes, &mut rng).unwrap();
        assert!(out.shortfall);
        assert_eq!(out.stamps, 1);
        assert_eq!(out.achieved, 0.25);
        assert!(matches!(nt_place(0.0, &stamp, &ctx, &boxes, &mut rng), Err(ProbeError::InvalidTarget(_))));
    }
}

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::Serialize;

use super::config::Placement;
use super::context::{GapAxis, PageContext};
use super::geometry::{Pose, Shape};

/// Where a probe landed and how it got there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlacementOutcome {
    /// The point drawn from the strategy's region.
    pub sampled: Pose,
    /// Shape center after fitting the shape inside the page.
    pub center: Pose,
    /// Strategy actually used.
    pub strategy: Placement,
    /// Set when the requested strategy was infeasible and random placement was used.
    pub fallback: bool,
}

fn pixel_pose(index: u32, width: usize) -> Pose {
    let i = index as usize;
    Pose::new((i % width) as f64 + 0.5, (i / width) as f64 + 0.5)
}

fn random_pose(ctx: &PageContext, rng: &mut impl Rng) -> Pose {
    Pose::new(rng.random_range(0.0..ctx.width as f64), rng.random_range(0.0..ctx.height as f64))
}

// Rectangles and axis-aligned lines slide along each axis so their extent
// stays on the page; other shapes keep the sampled point.
fn fit(shape: &Shape, pose: Pose, width: usize, height: usize) -> Pose {
    let axis_aligned = match shape {
        Shape::Rect { .. } => true,
        Shape::Line { theta_deg, .. } => theta_deg.rem_euclid(90.0) == 0.0,
        _ => false,
    };
    if !axis_aligned {
        return pose;
    }
    let (hx, hy) = shape.half_extent();
    let slide = |v: f64, half: f64, size: f64| if 2.0 * half >= size { size / 2.0 } else { v.clamp(half, size - half) };
    Pose::new(slide(pose.x, hx, width as f64), slide(pose.y, hy, height as f64))
}

/// Draw a pose for `shape` under `strategy`. Anchor needs a nonempty anchor
/// band, content a nonempty content mask, and bridge at least one gap;
/// otherwise placement falls back to random and says so.
pub fn place_probe(strategy: Placement, shape: &Shape, ctx: &PageContext, rng: &mut impl Rng) -> PlacementOutcome {
    let drawn = match strategy {
        Placement::Anchor => ctx.anchor_pixels().choose(rng).map(|&i| pixel_pose(i, ctx.width)),
        Placement::Content => ctx.content_pixels().choose(rng).map(|&i| pixel_pose(i, ctx.width)),
        Placement::Random => Some(random_pose(ctx, rng)),
        Placement::Bridge => {
            // A line crosses a gap when it runs perpendicular to the blocks' facing edges.
            let wanted = shape.orientation().and_then(|t| match t.rem_euclid(180.0) {
                t if t == 0.0 => Some(GapAxis::SideBySide),
                t if t == 90.0 => Some(GapAxis::Stacked),
                _ => None,
            });
            let matching: Vec<_> = ctx.gaps.iter().filter(|g| wanted.is_none_or(|a| g.axis == a)).collect();
            let pool = if matching.is_empty() { ctx.gaps.iter().collect() } else { matching };
            pool.choose(rng).map(|g| Pose::new(g.midpoint.0, g.midpoint.1))
        }
    };
    let (sampled, used, fallback) = match drawn {
        Some(p) => (p, strategy, false),
        None => (random_pose(ctx, rng), Placement::Random, true),
    };
    PlacementOutcome { sampled, center: fit(shape, sampled, ctx.width, ctx.height), strategy: used, fallback }
}

//! Closed-form probe geometries rasterized by the pixel-center rule: a pixel
//! `(i, j)` is set iff `(i + 0.5, j + 0.5)` satisfies the set definition.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::{GeometryKind, Param, ProbeConfig, ProbeId};
use super::ProbeError;
use crate::raster::BitMask;

/// Probe center in page pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// 1-D periodic value noise on `[0, 2pi)`: two octaves (8 and 16 lattice
/// points), smoothstep interpolation, output in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicNoise {
    octaves: [Vec<f64>; 2],
}

impl PeriodicNoise {
    pub fn new(rng: &mut impl Rng) -> Self {
        let mut lattice = |n: usize| (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect::<Vec<f64>>();
        Self { octaves: [lattice(8), lattice(16)] }
    }

    pub fn sample(&self, phi: f64) -> f64 {
        let phi = phi.rem_euclid(TAU);
        let mut total = 0.0;
        let mut amp = 1.0;
        let mut norm = 0.0;
        for lattice in &self.octaves {
            let n = lattice.len();
            let t = phi / TAU * n as f64;
            let i0 = (t.floor() as usize) % n;
            let i1 = (i0 + 1) % n;
            let f = t - t.floor();
            let s = f * f * (3.0 - 2.0 * f);
            total += amp * (lattice[i0] * (1.0 - s) + lattice[i1] * s);
            norm += amp;
            amp *= 0.5;
        }
        total / norm
    }
}

/// A concrete, sampled geometry.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// Strip of `width` along direction `theta_deg`, `length` long, centered on the pose.
    Line { theta_deg: f64, length: f64, width: f64 },
    Disk { radius: f64, ring: bool },
    Rect { w: f64, h: f64 },
    Blob { radius: f64, kappa: f64, noise: PeriodicNoise, ring: bool },
    /// Disks of `radius` at `offsets` from the pose.
    Points { offsets: Vec<(f64, f64)>, radius: f64 },
}

/// Width of the annulus kept by the ring appearance, as a fraction of the radius.
pub const RING_FRACTION: f64 = 0.15;

fn parity_snap(v: f64, extent: f64) -> f64 {
    if (extent.round() as i64) % 2 == 0 {
        v.round()
    } else {
        v.floor() + 0.5
    }
}

impl Shape {
    /// Instantiate the geometry of `cfg` on a `width x height` page. Random
    /// parts (dot offsets, blob boundary noise) are drawn from `rng`.
    pub fn from_config(cfg: &ProbeConfig, width: usize, height: usize, rng: &mut impl Rng) -> Result<Shape, ProbeError> {
        let (pw, ph) = (width as f64, height as f64);
        let ring = cfg.appearance == super::Appearance::Ring;
        let shape = match cfg.probe_id {
            ProbeId::P1 | ProbeId::P5 => {
                Shape::Line { theta_deg: 0.0, length: cfg.param(Param::LR) * pw, width: cfg.param(Param::W) }
            }
            ProbeId::P2 => Shape::Line { theta_deg: 90.0, length: cfg.param(Param::LR) * ph, width: cfg.param(Param::W) },
            ProbeId::P6 => Shape::Line { theta_deg: 0.0, length: pw, width: cfg.param(Param::W) },
            ProbeId::P9 => Shape::Line { theta_deg: cfg.param(Param::Theta), length: pw, width: cfg.param(Param::W) },
            ProbeId::P3 => Shape::Disk { radius: cfg.param(Param::R), ring },
            ProbeId::P4 => {
                let s = cfg.param(Param::AArea).sqrt();
                Shape::Rect { w: s * pw, h: s * ph }
            }
            ProbeId::P7 => {
                let sigma = cfg.param(Param::Sigma);
                let normal = Normal::new(0.0, sigma).map_err(|_| ProbeError::EmptyGeometry("sigma"))?;
                let n = cfg.param(Param::N).round() as usize;
                let offsets = (0..n).map(|_| (normal.sample(rng), normal.sample(rng))).collect();
                Shape::Points { offsets, radius: cfg.param(Param::R) }
            }
            ProbeId::P8 => Shape::Blob {
                radius: cfg.param(Param::RB),
                kappa: cfg.param(Param::Kappa),
                noise: PeriodicNoise::new(rng),
                ring,
            },
        };
        debug_assert_eq!(shape.kind(), cfg.probe_id.catalog().geometry);
        shape.check()?;
        Ok(shape)
    }

    pub fn kind(&self) -> GeometryKind {
        match self {
            Shape::Line { .. } => GeometryKind::Line,
            Shape::Disk { .. } => GeometryKind::Disk,
            Shape::Rect { .. } => GeometryKind::Rect,
            Shape::Blob { .. } => GeometryKind::Blob,
            Shape::Points { .. } => GeometryKind::Points,
        }
    }

    fn check(&self) -> Result<(), ProbeError> {
        let ok = match self {
            Shape::Line { length, width, .. } => {
                if *width <= 0.0 {
                    return Err(ProbeError::EmptyGeometry("w"));
                }
                *length > 0.0
            }
            Shape::Disk { radius, .. } | Shape::Blob { radius, .. } => *radius > 0.0,
            Shape::Rect { w, h } => *w > 0.0 && *h > 0.0,
            Shape::Points { offsets, radius } => *radius > 0.0 && !offsets.is_empty(),
        };
        if ok {
            Ok(())
        } else {
            Err(ProbeError::EmptyGeometry(match self {
                Shape::Line { .. } => "l",
                Shape::Disk { .. } | Shape::Points { .. } => "r",
                Shape::Blob { .. } => "r_b",
                Shape::Rect { .. } => "a_area",
            }))
        }
    }

    /// Orientation of line probes in degrees, `None` for isotropic shapes.
    pub fn orientation(&self) -> Option<f64> {
        match self {
            Shape::Line { theta_deg, .. } => Some(*theta_deg),
            _ => None,
        }
    }

    /// Half extents of the axis-aligned bounding box around the pose.
    pub fn half_extent(&self) -> (f64, f64) {
        match self {
            Shape::Line { theta_deg, length, width } => {
                let (s, c) = theta_deg.to_radians().sin_cos();
                ((length * c.abs() + width * s.abs()) / 2.0, (length * s.abs() + width * c.abs()) / 2.0)
            }
            Shape::Disk { radius, .. } => (*radius, *radius),
            Shape::Rect { w, h } => (w / 2.0, h / 2.0),
            Shape::Blob { radius, kappa, .. } => (radius * (1.0 + kappa), radius * (1.0 + kappa)),
            Shape::Points { offsets, radius } => {
                let mx = offsets.iter().fold(0.0f64, |m, o| m.max(o.0.abs()));
                let my = offsets.iter().fold(0.0f64, |m, o| m.max(o.1.abs()));
                (mx + radius, my + radius)
            }
        }
    }

    /// Snap the pose so integer extents rasterize to exactly that many pixels
    /// (even extents center on a pixel edge, odd ones on a pixel center).
    pub fn snap(&self, pose: Pose) -> Pose {
        match self {
            Shape::Line { theta_deg, length, width } => {
                let t = theta_deg.rem_euclid(180.0);
                if t == 0.0 {
                    Pose::new(parity_snap(pose.x, *length), parity_snap(pose.y, *width))
                } else if t == 90.0 {
                    Pose::new(parity_snap(pose.x, *width), parity_snap(pose.y, *length))
                } else {
                    Pose::new(parity_snap(pose.x, *width), parity_snap(pose.y, *width))
                }
            }
            Shape::Rect { w, h } => Pose::new(parity_snap(pose.x, *w), parity_snap(pose.y, *h)),
            Shape::Disk { .. } | Shape::Blob { .. } => Pose::new(pose.x.floor() + 0.5, pose.y.floor() + 0.5),
            Shape::Points { .. } => pose,
        }
    }

    /// Signed position across a line's width, in `(0, 1)` on the strip; used
    /// by the gradient appearance.
    pub fn across(&self, pose: Pose, px: f64, py: f64) -> f64 {
        match self {
            Shape::Line { theta_deg, width, .. } => {
                let (s, c) = theta_deg.to_radians().sin_cos();
                let d = (px - pose.x) * s - (py - pose.y) * c;
                (d / width + 0.5).clamp(0.0, 1.0)
            }
            _ => {
                let (hx, _) = self.half_extent();
                ((px - pose.x) / (2.0 * hx) + 0.5).clamp(0.0, 1.0)
            }
        }
    }

    /// Does point `(px, py)` belong to the shape centered at `pose`?
    pub fn contains(&self, pose: Pose, px: f64, py: f64) -> bool {
        let (dx, dy) = (px - pose.x, py - pose.y);
        match self {
            Shape::Line { theta_deg, length, width } => {
                let (s, c) = theta_deg.to_radians().sin_cos();
                // origin at the line start
                let (ox, oy) = (dx + length / 2.0 * c, dy + length / 2.0 * s);
                let perp = (ox * s - oy * c).abs();
                let along = ox * c + oy * s;
                perp < width / 2.0 && (0.0..=*length).contains(&along)
            }
            Shape::Disk { radius, ring } => {
                let d2 = dx * dx + dy * dy;
                d2 <= radius * radius && (!ring || d2 >= (radius * (1.0 - RING_FRACTION)).powi(2))
            }
            Shape::Rect { w, h } => dx.abs() <= w / 2.0 && dy.abs() <= h / 2.0,
            Shape::Blob { radius, kappa, noise, ring } => {
                let d2 = dx * dx + dy * dy;
                let bound = if *kappa == 0.0 { *radius } else { radius * (1.0 + kappa * noise.sample(dy.atan2(dx))) };
                d2 <= bound * bound && (!ring || d2 >= (bound * (1.0 - RING_FRACTION)).powi(2))
            }
            Shape::Points { offsets, radius } => offsets.iter().any(|(ox, oy)| {
                let (ex, ey) = (dx - ox, dy - oy);
                ex * ex + ey * ey <= radius * radius
            }),
        }
    }

    /// Rasterize at `pose` (used as given; call [`Shape::snap`] first for
    /// pixel-exact extents).
    pub fn rasterize(&self, pose: Pose, width: usize, height: usize) -> BitMask {
        let mut m = BitMask::new(width, height);
        let (hx, hy) = self.half_extent();
        let x0 = ((pose.x - hx - 1.0).floor().max(0.0) as usize).min(width);
        let x1 = ((pose.x + hx + 1.0).ceil().max(0.0) as usize).min(width);
        let y0 = ((pose.y - hy - 1.0).floor().max(0.0) as usize).min(height);
        let y1 = ((pose.y + hy + 1.0).ceil().max(0.0) as usize).min(height);
        match self {
            Shape::Points { offsets, radius } => {
                for (ox, oy) in offsets {
                    let one = Shape::Disk { radius: *radius, ring: false };
                    let sub = Pose::new(pose.x + ox, pose.y + oy);
                    let (sx0, sx1) = (((sub.x - radius - 1.0).floor().max(0.0) as usize).min(width), ((sub.x + radius + 1.0).ceil().max(0.0) as usize).min(width));
                    let (sy0, sy1) = (((sub.y - radius - 1.0).floor().max(0.0) as usize).min(height), ((sub.y + radius + 1.0).ceil().max(0.0) as usize).min(height));
                    for y in sy0..sy1 {
                        for x in sx0..sx1 {
                            if one.contains(sub, x as f64 + 0.5, y as f64 + 0.5) {
                                m.set(x, y, true);
                            }
                        }
                    }
                }
            }
            _ => {
                for y in y0..y1 {
                    for x in x0..x1 {
                        if self.contains(pose, x as f64 + 0.5, y as f64 + 0.5) {
                            m.set(x, y, true);
                        }
                    }
                }
            }
        }
        m
    }
}

/// Sample the geometry of `cfg` and rasterize it at `pose` (snapped).
pub fn render_geometry(cfg: &ProbeConfig, pose: Pose, width: usize, height: usize, rng: &mut impl Rng) -> Result<BitMask, ProbeError> {
    let shape = Shape::from_config(cfg, width, height, rng)?;
    Ok(shape.rasterize(shape.snap(pose), width, height))
}

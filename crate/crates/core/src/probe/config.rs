use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ProbeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProbeId {
    P1,
    P2,
    P3,
    P4,
    P5,
    P6,
    P7,
    P8,
    P9,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Appearance {
    Solid,
    Gradient,
    Ring,
    Texture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Behavior {
    Inject,
    Blend,
    Erase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    Anchor,
    Content,
    Random,
    Bridge,
}

impl Placement {
    pub const ALL: [Placement; 4] = [Placement::Anchor, Placement::Content, Placement::Random, Placement::Bridge];

    pub fn as_str(&self) -> &'static str {
        match self {
            Placement::Anchor => "anchor",
            Placement::Content => "content",
            Placement::Random => "random",
            Placement::Bridge => "bridge",
        }
    }
}

impl FromStr for Placement {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Placement::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown placement strategy: {s}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryKind {
    Line,
    Disk,
    Rect,
    Blob,
    Points,
}

/// Named numeric parameters of the catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Param {
    W,
    LR,
    R,
    Alpha,
    AArea,
    Beta,
    N,
    Sigma,
    RB,
    Kappa,
    Theta,
}

impl Param {
    pub fn name(&self) -> &'static str {
        match self {
            Param::W => "w",
            Param::LR => "l_r",
            Param::R => "r",
            Param::Alpha => "alpha",
            Param::AArea => "a_area",
            Param::Beta => "beta",
            Param::N => "n",
            Param::Sigma => "sigma",
            Param::RB => "r_b",
            Param::Kappa => "kappa",
            Param::Theta => "theta",
        }
    }
}

impl Serialize for Param {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Catalog row: geometry, behavior, parameter ranges, and the placements the
/// catalog lists for the probe.
#[derive(Debug, Clone, Copy)]
pub struct CatalogEntry {
    pub geometry: GeometryKind,
    pub behavior: Behavior,
    pub ranges: &'static [(Param, f64, f64)],
    pub placements: &'static [Placement],
}

use Param::*;
use Placement::*;

const CREASE: &[(Param, f64, f64)] = &[(W, 1.0, 10.0), (LR, 0.5, 1.0)];

impl ProbeId {
    pub const ALL: [ProbeId; 9] = [
        ProbeId::P1,
        ProbeId::P2,
        ProbeId::P3,
        ProbeId::P4,
        ProbeId::P5,
        ProbeId::P6,
        ProbeId::P7,
        ProbeId::P8,
        ProbeId::P9,
    ];

    pub fn catalog(&self) -> CatalogEntry {
        let (geometry, behavior, ranges, placements): (_, _, &'static [(Param, f64, f64)], &'static [Placement]) = match self {
            ProbeId::P1 | ProbeId::P2 => (GeometryKind::Line, Behavior::Inject, CREASE, &[Anchor, Content, Random]),
            ProbeId::P3 => (GeometryKind::Disk, Behavior::Blend, &[(R, 30.0, 90.0), (Alpha, 0.2, 1.0)], &[Anchor, Content, Random]),
            ProbeId::P4 => (GeometryKind::Rect, Behavior::Erase, &[(AArea, 0.03, 0.25), (Beta, 0.2, 1.0)], &[Content, Bridge]),
            ProbeId::P5 => (GeometryKind::Line, Behavior::Inject, &[(W, 1.0, 5.0), (LR, 0.2, 0.8)], &[Bridge, Content, Random]),
            ProbeId::P6 => (GeometryKind::Line, Behavior::Blend, &[(Alpha, 0.05, 0.4), (W, 2.0, 10.0)], &[Anchor]),
            ProbeId::P7 => (
                GeometryKind::Points,
                Behavior::Inject,
                &[(N, 10.0, 100.0), (R, 1.0, 4.0), (Sigma, 10.0, 50.0)],
                &[Random],
            ),
            ProbeId::P8 => (
                GeometryKind::Blob,
                Behavior::Blend,
                &[(RB, 30.0, 80.0), (Kappa, 0.1, 0.5), (Alpha, 0.3, 0.7)],
                &[Anchor],
            ),
            ProbeId::P9 => (GeometryKind::Line, Behavior::Inject, &[(Theta, 20.0, 70.0), (W, 1.0, 6.0)], &[Anchor]),
        };
        CatalogEntry { geometry, behavior, ranges, placements }
    }

    pub fn default_appearance(&self) -> Appearance {
        if *self == ProbeId::P6 {
            Appearance::Gradient
        } else {
            Appearance::Solid
        }
    }

    pub fn default_color(&self) -> [u8; 3] {
        match self {
            ProbeId::P1 | ProbeId::P2 | ProbeId::P5 | ProbeId::P9 => [30, 30, 30],
            ProbeId::P3 => [200, 40, 40],
            ProbeId::P4 => [255, 255, 255],
            ProbeId::P6 => [0, 0, 0],
            ProbeId::P7 => [20, 20, 20],
            ProbeId::P8 => [120, 120, 120],
        }
    }
}

impl fmt::Display for ProbeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for ProbeId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProbeId::ALL
            .into_iter()
            .find(|p| p.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown probe id: {s}"))
    }
}

/// Flat parameter record; which fields apply depends on the probe id.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_area: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

impl ProbeParams {
    pub fn get(&self, p: Param) -> Option<f64> {
        *self.slot(p)
    }

    pub fn set(&mut self, p: Param, v: f64) {
        *self.slot_mut(p) = Some(v);
    }

    pub fn with(mut self, p: Param, v: f64) -> Self {
        self.set(p, v);
        self
    }

    fn slot(&self, p: Param) -> &Option<f64> {
        match p {
            W => &self.w,
            LR => &self.l_r,
            R => &self.r,
            Alpha => &self.alpha,
            AArea => &self.a_area,
            Beta => &self.beta,
            N => &self.n,
            Sigma => &self.sigma,
            RB => &self.r_b,
            Kappa => &self.kappa,
            Theta => &self.theta,
        }
    }

    fn slot_mut(&mut self, p: Param) -> &mut Option<f64> {
        match p {
            W => &mut self.w,
            LR => &mut self.l_r,
            R => &mut self.r,
            Alpha => &mut self.alpha,
            AArea => &mut self.a_area,
            Beta => &mut self.beta,
            N => &mut self.n,
            Sigma => &mut self.sigma,
            RB => &mut self.r_b,
            Kappa => &mut self.kappa,
            Theta => &mut self.theta,
        }
    }

    const ALL: [Param; 11] = [W, LR, R, Alpha, AArea, Beta, N, Sigma, RB, Kappa, Theta];
}

/// One perturbation: geometry parameters, appearance, behavior, placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub probe_id: ProbeId,
    #[serde(flatten)]
    pub params: ProbeParams,
    pub appearance: Appearance,
    pub behavior: Behavior,
    pub placement: Placement,
    #[serde(default = "one")]
    pub probe_count: u8,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<[u8; 3]>,
}

fn one() -> u8 {
    1
}

impl ProbeConfig {
    /// Catalog defaults for appearance and behavior, one probe, seed 0.
    pub fn new(probe_id: ProbeId, params: ProbeParams, placement: Placement) -> Self {
        Self {
            probe_id,
            params,
            appearance: probe_id.default_appearance(),
            behavior: probe_id.catalog().behavior,
            placement,
            probe_count: 1,
            seed: 0,
            color: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn color(&self) -> [u8; 3] {
        self.color.unwrap_or_else(|| self.probe_id.default_color())
    }

    /// Fetch a parameter that validation guarantees is present.
    pub fn param(&self, p: Param) -> f64 {
        self.params.get(p).unwrap_or_else(|| panic!("{} requires `{p}`", self.probe_id))
    }

    /// Opacity used when composing: 1 for inject, `alpha` for blend, `beta`
    /// for erase.
    pub fn effective_alpha(&self) -> f64 {
        match self.behavior {
            Behavior::Inject => 1.0,
            Behavior::Blend => self.params.alpha.unwrap_or(1.0),
            Behavior::Erase => self.params.beta.or(self.params.alpha).unwrap_or(1.0),
        }
    }

    /// Check every parameter against the catalog ranges for this probe.
    /// Placement is not restricted to the catalog's listed strategies: every
    /// policy shares the full four-strategy action space.
    pub fn validate(&self) -> Result<(), ProbeError> {
        let entry = self.probe_id.catalog();
        for &(p, lo, hi) in entry.ranges {
            match self.params.get(p) {
                None => return Err(ProbeError::MissingParam { probe: self.probe_id, param: p.name() }),
                Some(v) if !v.is_finite() || v < lo || v > hi => {
                    return Err(ProbeError::OutOfRange { probe: self.probe_id, param: p.name(), value: v, lo, hi })
                }
                _ => {}
            }
        }
        for p in ProbeParams::ALL {
            if self.params.get(p).is_some() && !entry.ranges.iter().any(|(q, _, _)| *q == p) {
                return Err(ProbeError::UnexpectedParam { probe: self.probe_id, param: p.name() });
            }
        }
        if self.behavior != entry.behavior {
            return Err(ProbeError::Behavior { probe: self.probe_id, got: self.behavior });
        }
        if self.appearance == Appearance::Ring && !matches!(entry.geometry, GeometryKind::Disk | GeometryKind::Blob) {
            return Err(ProbeError::Appearance { probe: self.probe_id, appearance: self.appearance });
        }
        if !(1..=3).contains(&self.probe_count) {
            return Err(ProbeError::ProbeCount(self.probe_count));
        }
        Ok(())
    }

    /// Clamp present parameters into range, fill missing ones with the range
    /// midpoint, drop parameters the probe does not use, and restore the
    /// catalog behavior. The result always validates.
    pub fn clamped(&self) -> ProbeConfig {
        let entry = self.probe_id.catalog();
        let mut params = ProbeParams::default();
        for &(p, lo, hi) in entry.ranges {
            let v = self.params.get(p).filter(|v| v.is_finite()).unwrap_or((lo + hi) / 2.0);
            params.set(p, v.clamp(lo, hi));
        }
        let mut out = self.clone();
        out.params = params;
        out.behavior = entry.behavior;
        out.probe_count = self.probe_count.clamp(1, 3);
        if out.appearance == Appearance::Ring && !matches!(entry.geometry, GeometryKind::Disk | GeometryKind::Blob) {
            out.appearance = self.probe_id.default_appearance();
        }
        out
    }

    /// Uniform draw over the catalog ranges of `probe_id` (`n` is integral).
    pub fn sample_params(probe_id: ProbeId, rng: &mut impl Rng) -> ProbeParams {
        let mut params = ProbeParams::default();
        for &(p, lo, hi) in probe_id.catalog().ranges {
            let v = if p == N { rng.random_range(lo as u32..=hi as u32) as f64 } else { rng.random_range(lo..=hi) };
            params.set(p, v);
        }
        params
    }
}

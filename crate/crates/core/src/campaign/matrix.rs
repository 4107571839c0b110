use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::CampaignError;
use crate::probe::{Param, Placement, ProbeConfig, ProbeId, ProbeParams};

pub const BASE_SEED: u64 = 42;

/// Target interference fractions of the NT series, in id order.
pub const NT_TARGETS: [f64; 7] = [0.05, 0.10, 0.20, 0.35, 0.50, 0.70, 1.0];

/// Randomized sweep: the probe, its placement, the pair group it belongs to,
/// and parameters held fixed rather than sampled.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    pub probe: ProbeId,
    pub placement: Placement,
    /// Configs in the same group draw identical parameters per image.
    pub group: u64,
    /// 0 for the base config of a group, 1 and 2 for its placement variants.
    pub variant: u64,
    pub fixed: Vec<(Param, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ConfigSpec {
    Fixed { config: ProbeConfig },
    Nt { target: f64 },
    Sweep { sweep: SweepSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEntry {
    pub id: String,
    pub spec: ConfigSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    A,
    Nt,
    S,
    /// A and NT, the fixed audit.
    Phase1,
    All,
}

impl std::str::FromStr for MatrixKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(MatrixKind::A),
            "nt" => Ok(MatrixKind::Nt),
            "s" => Ok(MatrixKind::S),
            "phase1" => Ok(MatrixKind::Phase1),
            "all" => Ok(MatrixKind::All),
            _ => Err(format!("unknown matrix `{s}` (expected a, nt, s, phase1 or all)")),
        }
    }
}

fn fixed(probe: ProbeId, placement: Placement, params: &[(Param, f64)]) -> ConfigSpec {
    let p = params.iter().fold(ProbeParams::default(), |acc, &(k, v)| acc.with(k, v));
    ConfigSpec::Fixed { config: ProbeConfig::new(probe, p, placement) }
}

fn a_spec(n: u32) -> Option<ConfigSpec> {
    use Param::*;
    use Placement::*;
    use ProbeId::*;
    Some(match n {
        1 => fixed(P1, Anchor, &[(W, 1.0), (LR, 1.0)]),
        2 => fixed(P1, Anchor, &[(W, 8.0), (LR, 1.0)]),
        3 => fixed(P2, Anchor, &[(W, 1.0), (LR, 1.0)]),
        4 => fixed(P2, Anchor, &[(W, 8.0), (LR, 1.0)]),
        5 => fixed(P3, Anchor, &[(R, 60.0), (Alpha, 0.3)]),
        6 => fixed(P3, Anchor, &[(R, 60.0), (Alpha, 1.0)]),
        7 => fixed(P4, Content, &[(AArea, 0.05), (Beta, 0.3)]),
        8 => fixed(P4, Content, &[(AArea, 0.20), (Beta, 1.0)]),
        9 => fixed(P5, Bridge, &[(W, 1.0), (LR, 0.5)]),
        10 => fixed(P5, Bridge, &[(W, 3.0), (LR, 0.5)]),
        11 => fixed(P6, Anchor, &[(Alpha, 0.1), (W, 5.0)]),
        12 => fixed(P6, Anchor, &[(Alpha, 0.3), (W, 5.0)]),
        13 => fixed(P1, Content, &[(W, 3.0), (LR, 1.0)]),
        14 => fixed(P1, Random, &[(W, 3.0), (LR, 1.0)]),
        15 => fixed(P3, Content, &[(R, 60.0), (Alpha, 0.5)]),
        16 => fixed(P3, Random, &[(R, 60.0), (Alpha, 0.5)]),
        17 => fixed(P5, Content, &[(W, 2.0), (LR, 0.5)]),
        18 => fixed(P5, Random, &[(W, 2.0), (LR, 0.5)]),
        19 => fixed(P4, Bridge, &[(AArea, 0.20), (Beta, 1.0)]),
        20 => fixed(P5, Content, &[(W, 3.0), (LR, 0.5)]),
        21 => fixed(P3, Anchor, &[(R, 60.0), (Alpha, 0.5)]),
        22 => fixed(P1, Anchor, &[(W, 3.0), (LR, 1.0)]),
        _ => return None,
    })
}

fn s_spec(n: u32) -> Option<ConfigSpec> {
    use Param::*;
    use Placement::*;
    use ProbeId::*;
    let (probe, placement, group, variant, fixed): (ProbeId, Placement, u64, u64, Vec<(Param, f64)>) = match n {
        1 => (P1, Anchor, 1, 0, vec![(LR, 1.0)]),
        2 => (P2, Anchor, 2, 0, vec![(LR, 1.0)]),
        3 => (P3, Anchor, 3, 0, vec![]),
        4 => (P4, Content, 4, 0, vec![]),
        5 => (P5, Bridge, 5, 0, vec![]),
        6 => (P6, Anchor, 6, 0, vec![]),
        7 => (P7, Random, 7, 0, vec![(Sigma, 30.0)]),
        8 => (P8, Anchor, 8, 0, vec![(Alpha, 0.5)]),
        9 => (P9, Anchor, 9, 0, vec![]),
        10 => (P1, Content, 1, 1, vec![(LR, 1.0)]),
        11 => (P1, Random, 1, 2, vec![(LR, 1.0)]),
        12 => (P3, Content, 3, 1, vec![]),
        13 => (P3, Random, 3, 2, vec![]),
        _ => return None,
    };
    Some(ConfigSpec::Sweep { sweep: SweepSpec { probe, placement, group, variant, fixed } })
}

/// Decodes one config id of the A, NT or S series.
pub fn decode_config(id: &str) -> Result<ConfigEntry, CampaignError> {
    let unknown = || CampaignError::UnknownConfig(id.to_string());
    let (prefix, num) = id.split_at(id.find(|c: char| c.is_ascii_digit()).ok_or_else(unknown)?);
    if num.len() != 2 {
        return Err(unknown());
    }
    let n: u32 = num.parse().map_err(|_| unknown())?;
    let spec = match prefix {
        "A" => a_spec(n),
        "NT" => NT_TARGETS.get((n as usize).wrapping_sub(1)).map(|&target| ConfigSpec::Nt { target }),
        "S" => s_spec(n),
        _ => None,
    }
    .ok_or_else(unknown)?;
    Ok(ConfigEntry { id: id.to_string(), spec })
}

pub fn matrix(kind: MatrixKind) -> Vec<ConfigEntry> {
    fn ids(prefix: &'static str, n: u32) -> impl Iterator<Item = String> {
        (1..=n).map(move |i| format!("{prefix}{i:02}"))
    }
    let list: Vec<String> = match kind {
        MatrixKind::A => ids("A", 22).collect(),
        MatrixKind::Nt => ids("NT", 7).collect(),
        MatrixKind::S => ids("S", 13).collect(),
        MatrixKind::Phase1 => ids("A", 22).chain(ids("NT", 7)).collect(),
        MatrixKind::All => ids("A", 22).chain(ids("NT", 7)).chain(ids("S", 13)).collect(),
    };
    list.iter().map(|id| decode_config(id).expect("matrix ids decode")).collect()
}

/// Sweep seed for an image: `(image_index + 1) * 100000 + pair`.
pub fn sweep_seed(image_index: usize, pair: u64) -> u64 {
    (image_index as u64 + 1) * 100_000 + pair
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Seed for a deterministic (image, label) run under `base`.
pub fn derive_seed(base: u64, image_index: usize, label: &str) -> u64 {
    splitmix(splitmix(base ^ fnv1a(label)).wrapping_add(image_index as u64))
}

impl SweepSpec {
    /// Parameters drawn from the shared per-image seed; identical across a
    /// pair group.
    pub fn sample(&self, image_index: usize) -> ProbeParams {
        let mut rng = ChaCha8Rng::seed_from_u64(sweep_seed(image_index, self.group));
        let mut p = ProbeConfig::sample_params(self.probe, &mut rng);
        for &(k, v) in &self.fixed {
            p.set(k, v);
        }
        p
    }

    /// Full config for an image. The placement stream is seeded separately so
    /// that only placement differs between paired configs.
    pub fn instantiate(&self, image_index: usize) -> ProbeConfig {
        let placement_seed = splitmix(sweep_seed(image_index, self.group) ^ (self.variant + 1).wrapping_mul(0xA24B_AED4_963E_E407));
        ProbeConfig::new(self.probe, self.sample(image_index), self.placement).with_seed(placement_seed)
    }
}

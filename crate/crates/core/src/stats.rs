//! Statistical verification over campaign records: OLS, Spearman, image fixed
//! effects, binned dose-response checks, faithfulness and policy summaries.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::record::CampaignRecord;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("series lengths differ ({x} vs {y})")]
    LengthMismatch { x: usize, y: usize },
    #[error("need at least {need} observations, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("non-finite observation")]
    NonFinite,
    #[error("bin count must be positive")]
    NoBins,
    #[error(transparent)]
    Csv(#[from] CsvFailure),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{0}")]
pub struct CsvFailure(String);

impl From<csv::Error> for StatsError {
    fn from(e: csv::Error) -> Self {
        StatsError::Csv(CsvFailure(e.to_string()))
    }
}

impl From<std::io::Error> for StatsError {
    fn from(e: std::io::Error) -> Self {
        StatsError::Csv(CsvFailure(e.to_string()))
    }
}

fn check(x: &[f64], y: &[f64], need: usize) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch { x: x.len(), y: y.len() });
    }
    if x.len() < need {
        return Err(StatsError::TooFew { need, got: x.len() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n: usize,
    /// Set when either series has zero variance; `r2` is then 0.
    pub degenerate: bool,
}

/// Univariate least squares with intercept.
pub fn ols(x: &[f64], y: &[f64]) -> Result<Regression, StatsError> {
    check(x, y, 2)?;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let n = x.len();
    if sxx == 0.0 || syy == 0.0 {
        return Ok(Regression { slope: 0.0, intercept: my, r2: 0.0, n, degenerate: true });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r2 = (1.0 - ss_res / syy).clamp(0.0, 1.0);
    Ok(Regression { slope, intercept, r2, n, degenerate: false })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correlation {
    pub rho: f64,
    pub n: usize,
    pub degenerate: bool,
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation, StatsError> {
    check(x, y, 2)?;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(Correlation { rho: 0.0, n: x.len(), degenerate: true });
    }
    Ok(Correlation { rho: (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0), n: x.len(), degenerate: false })
}

/// 1-based ascending ranks; tied values share their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Ranks with 1 assigned to the largest value.
pub fn descending_ranks(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    average_ranks(v).into_iter().map(|r| n + 1.0 - r).collect()
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<Correlation, StatsError> {
    check(x, y, 2)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Inclusive empirical quantile (linear interpolation between order
/// statistics) of an ascending slice.
pub fn quantile_inclusive(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Increasing,
    Nondecreasing,
    Flat,
    NonMonotone,
}

impl Verdict {
    pub fn from_means(means: &[f64]) -> Verdict {
        let w = || means.windows(2);
        if w().all(|p| p[1] == p[0]) {
            Verdict::Flat
        } else if w().all(|p| p[1] > p[0]) {
            Verdict::Increasing
        } else if w().all(|p| p[1] >= p[0]) {
            Verdict::Nondecreasing
        } else {
            Verdict::NonMonotone
        }
    }

    pub fn is_monotone(self) -> bool {
        !matches!(self, Verdict::NonMonotone)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoseResponse {
    pub requested_bins: usize,
    pub edges: Vec<f64>,
    /// Quantile edges dropped because they coincided with a neighbour.
    pub merged_edges: usize,
    /// Non-empty bins in dose order.
    pub bins: Vec<Bin>,
    pub verdict: Verdict,
}

impl DoseResponse {
    pub fn means(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.mean).collect()
    }
}

/// Bins `dose` at its quantile edges and averages `response` inside each bin.
/// Bins are half-open except the last, which also takes the maximum.
pub fn dose_response(dose: &[f64], response: &[f64], bins: usize) -> Result<DoseResponse, StatsError> {
    if bins == 0 {
        return Err(StatsError::NoBins);
    }
    check(dose, response, bins.max(1))?;
    let mut sorted = dose.to_vec();
    sorted.sort_by(f64::total_cmp);
    let raw: Vec<f64> = (0..=bins).map(|i| quantile_inclusive(&sorted, i as f64 / bins as f64)).collect();
    let mut edges = vec![raw[0]];
    for &e in &raw[1..] {
        if e > *edges.last().unwrap() {
            edges.push(e);
        }
    }
    let merged_edges = raw.len() - edges.len();
    let nb = edges.len().saturating_sub(1).max(1);
    let mut sums = vec![0.0; nb];
    let mut counts = vec![0usize; nb];
    for (&d, &r) in dose.iter().zip(response) {
        // index of the last interior edge not above d
        let k = edges[1..edges.len().saturating_sub(1).max(1)].partition_point(|&e| e <= d);
        let k = k.min(nb - 1);
        sums[k] += r;
        counts[k] += 1;
    }
    let bins_out: Vec<Bin> = (0..nb)
        .filter(|&k| counts[k] > 0)
        .map(|k| Bin {
            lo: edges[k],
            hi: *edges.get(k + 1).unwrap_or(&edges[k]),
            n: counts[k],
            mean: sums[k] / counts[k] as f64,
        })
        .collect();
    let verdict = Verdict::from_means(&bins_out.iter().map(|b| b.mean).collect::<Vec<_>>());
    Ok(DoseResponse { requested_bins: bins, edges, merged_edges, bins: bins_out, verdict })
}

/// Number of consecutive-target steps that do not decrease, counting the
/// first target as satisfied. A fully nondecreasing sequence scores its length.
pub fn nondecreasing_count(means: &[f64]) -> usize {
    if means.is_empty() {
        return 0;
    }
    1 + means.windows(2).filter(|p| p[1] >= p[0]).count()
}

/// Per-record variable that the summaries can aggregate over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Variable {
    #[serde(rename = "TOR")]
    Tor,
    #[serde(rename = "ACR")]
    Acr,
    #[serde(rename = "BPO")]
    Bpo,
    #[serde(rename = "BOC")]
    Boc,
    #[serde(rename = "EIR")]
    Eir,
    #[serde(rename = "B_SLR")]
    BSlr,
    #[serde(rename = "B_SLR_iou_only")]
    BSlrIouOnly,
    #[serde(rename = "B_SLR_text_only")]
    BSlrTextOnly,
    #[serde(rename = "SLR_miss")]
    SlrMiss,
    #[serde(rename = "SLR_topo")]
    SlrTopo,
    #[serde(rename = "CER")]
    Cer,
    #[serde(rename = "delta_mAP")]
    DeltaMap,
}

impl Variable {
    pub const ALL: [Variable; 12] = [
        Variable::Tor,
        Variable::Acr,
        Variable::Bpo,
        Variable::Boc,
        Variable::Eir,
        Variable::BSlr,
        Variable::BSlrIouOnly,
        Variable::BSlrTextOnly,
        Variable::SlrMiss,
        Variable::SlrTopo,
        Variable::Cer,
        Variable::DeltaMap,
    ];

    /// Candidate structural predictors of CER.
    pub const PREDICTORS: [Variable; 6] =
        [Variable::Tor, Variable::Acr, Variable::Bpo, Variable::Boc, Variable::Eir, Variable::BSlr];

    pub fn name(self) -> &'static str {
        match self {
            Variable::Tor => "TOR",
            Variable::Acr => "ACR",
            Variable::Bpo => "BPO",
            Variable::Boc => "BOC",
            Variable::Eir => "EIR",
            Variable::BSlr => "B_SLR",
            Variable::BSlrIouOnly => "B_SLR_iou_only",
            Variable::BSlrTextOnly => "B_SLR_text_only",
            Variable::SlrMiss => "SLR_miss",
            Variable::SlrTopo => "SLR_topo",
            Variable::Cer => "CER",
            Variable::DeltaMap => "delta_mAP",
        }
    }

    pub fn of(self, r: &CampaignRecord) -> Option<f64> {
        match self {
            Variable::Tor => Some(r.tor),
            Variable::Acr => r.acr,
            Variable::Bpo => r.bpo,
            Variable::Boc => r.boc,
            Variable::Eir => Some(r.eir),
            Variable::BSlr => Some(r.b_slr),
            Variable::BSlrIouOnly => Some(r.b_slr_iou_only),
            Variable::BSlrTextOnly => Some(r.b_slr_text_only()),
            Variable::SlrMiss => Some(r.slr_miss),
            Variable::SlrTopo => Some(r.slr_topo),
            Variable::Cer => Some(r.cer_matched_mean),
            Variable::DeltaMap => r.delta_map,
        }
    }
}

impl std::str::FromStr for Variable {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variable::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown variable `{s}`"))
    }
}

fn mean_of<'a>(records: impl IntoIterator<Item = &'a CampaignRecord>, v: Variable) -> Option<f64> {
    let (s, n) = records.into_iter().filter_map(|r| v.of(r)).fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Configuration-level means. Optional descriptors average over the pages on
/// which they are defined.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigAggregate {
    pub config_id: String,
    pub n: usize,
    pub means: BTreeMap<Variable, Option<f64>>,
}

impl ConfigAggregate {
    pub fn get(&self, v: Variable) -> Option<f64> {
        self.means.get(&v).copied().flatten()
    }
}

fn group_by<'a, F: Fn(&CampaignRecord) -> &str>(records: &'a [CampaignRecord], key: F) -> BTreeMap<String, Vec<&'a CampaignRecord>> {
    let mut g: BTreeMap<String, Vec<&CampaignRecord>> = BTreeMap::new();
    for r in records {
        g.entry(key(r).to_string()).or_default().push(r);
    }
    g
}

pub fn aggregate_by_config(records: &[CampaignRecord]) -> Vec<ConfigAggregate> {
    group_by(records, |r| &r.config_id)
        .into_iter()
        .map(|(config_id, rs)| ConfigAggregate {
            config_id,
            n: rs.len(),
            means: Variable::ALL.into_iter().map(|v| (v, mean_of(rs.iter().copied(), v))).collect(),
        })
        .collect()
}

/// R² of mean CER on the mean of `x` across configurations.
pub fn faithfulness(aggregates: &[ConfigAggregate], x: Variable) -> Result<Regression, StatsError> {
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        aggregates.iter().filter_map(|a| Some((a.get(x)?, a.get(Variable::Cer)?))).unzip();
    ols(&xs, &ys)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedEffects {
    pub regression: Regression,
    pub images: usize,
    /// Images with a single observation, which carry no within-image variation.
    pub dropped_images: usize,
}

/// OLS on per-group de-meaned `(x, y)` observations.
pub fn fixed_effects_r2(obs: &[(&str, f64, f64)]) -> Result<FixedEffects, StatsError> {
    let mut groups: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for &(g, x, y) in obs {
        groups.entry(g).or_default().push((x, y));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut dropped = 0;
    let mut images = 0;
    for pts in groups.values() {
        if pts.len() < 2 {
            dropped += 1;
            continue;
        }
        images += 1;
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        for &(x, y) in pts {
            xs.push(x - mx);
            ys.push(y - my);
        }
    }
    Ok(FixedEffects { regression: ols(&xs, &ys)?, images, dropped_images: dropped })
}

fn pairs<'a>(records: impl IntoIterator<Item = &'a CampaignRecord>, x: Variable, y: Variable) -> (Vec<f64>, Vec<f64>) {
    records.into_iter().filter_map(|r| Some((x.of(r)?, y.of(r)?))).unzip()
}

pub fn fixed_effects_for(records: &[CampaignRecord], x: Variable, y: Variable) -> Result<FixedEffects, StatsError> {
    let obs: Vec<(&str, f64, f64)> =
        records.iter().filter_map(|r| Some((r.image_id.as_str(), x.of(r)?, y.of(r)?))).collect();
    fixed_effects_r2(&obs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerImageSpearman {
    pub mean_rho: Option<f64>,
    pub images: usize,
    /// Images skipped for too few points or a constant series.
    pub skipped: usize,
}

/// Spearman of `x` against `y` within each image across its configurations,
/// averaged over images.
pub fn per_image_spearman(records: &[CampaignRecord], x: Variable, y: Variable) -> PerImageSpearman {
    let mut rhos = Vec::new();
    let mut skipped = 0;
    for rs in group_by(records, |r| &r.image_id).values() {
        let (xs, ys) = pairs(rs.iter().copied(), x, y);
        match spearman(&xs, &ys) {
            Ok(c) if !c.degenerate => rhos.push(c.rho),
            _ => skipped += 1,
        }
    }
    PerImageSpearman { mean_rho: (!rhos.is_empty()).then(|| mean(&rhos)), images: rhos.len(), skipped }
}

pub fn dose_response_for(records: &[CampaignRecord], dose: Variable, response: Variable, bins: usize) -> Result<DoseResponse, StatsError> {
    let (d, r) = pairs(records, dose, response);
    dose_response(&d, &r, bins)
}

/// Quartile bins of `dose` within a single configuration.
pub fn within_config_quartiles(
    records: &[CampaignRecord],
    config_id: &str,
    dose: Variable,
    response: Variable,
) -> Result<DoseResponse, StatsError> {
    let (d, r) = pairs(records.iter().filter(|r| r.config_id == config_id), dose, response);
    dose_response(&d, &r, 4)
}

/// Share of structural loss attributed to topology; absent when there is none.
pub fn topo_share(slr_miss: f64, slr_topo: f64) -> Option<f64> {
    let total = slr_miss + slr_topo;
    (total > 0.0).then(|| slr_topo / total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyAggregate {
    pub policy: String,
    pub n: usize,
    pub tor: f64,
    pub b_slr: f64,
    pub slr_miss: f64,
    pub slr_topo: f64,
    pub cer: f64,
    pub delta_map: Option<f64>,
    pub topo_share: Option<f64>,
    /// Ratio of means.
    pub eff_b: Option<f64>,
    pub eff_c: Option<f64>,
    /// Mean of per-record ratios over records with positive footprint.
    pub eff_b_per_image: Option<f64>,
    pub eff_c_per_image: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankTable {
    pub policies: Vec<String>,
    /// Rank 1 is the most damaging policy under each criterion.
    pub by_eff_b: Vec<f64>,
    pub by_cer: Vec<f64>,
    pub by_delta_map: Vec<f64>,
    pub eff_b_vs_cer: Option<Correlation>,
    pub eff_b_vs_delta_map: Option<Correlation>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicySummary {
    pub policies: Vec<PolicyAggregate>,
    pub ranks: RankTable,
}

pub fn policy_aggregate(policy: &str, rs: &[&CampaignRecord]) -> PolicyAggregate {
    let m = |v| mean_of(rs.iter().copied(), v).unwrap_or(0.0);
    let (tor, b_slr, cer) = (m(Variable::Tor), m(Variable::BSlr), m(Variable::Cer));
    let (slr_miss, slr_topo) = (m(Variable::SlrMiss), m(Variable::SlrTopo));
    let ratio = |num: f64| (tor > 0.0).then(|| num / tor);
    let per_image = |f: fn(&CampaignRecord) -> f64| {
        let v: Vec<f64> = rs.iter().filter(|r| r.tor > 0.0).map(|r| f(r) / r.tor).collect();
        (!v.is_empty()).then(|| mean(&v))
    };
    PolicyAggregate {
        policy: policy.to_string(),
        n: rs.len(),
        tor,
        b_slr,
        slr_miss,
        slr_topo,
        cer,
        delta_map: mean_of(rs.iter().copied(), Variable::DeltaMap),
        topo_share: topo_share(slr_miss, slr_topo),
        eff_b: ratio(b_slr),
        eff_c: ratio(cer),
        eff_b_per_image: per_image(|r| r.b_slr),
        eff_c_per_image: per_image(|r| r.cer_matched_mean),
    }
}

/// Per-policy aggregates plus rank tables. Records without a policy label are
/// grouped under their configuration id.
pub fn policy_summary(records: &[CampaignRecord]) -> PolicySummary {
    let groups = group_by(records, |r| r.policy.as_deref().unwrap_or(&r.config_id));
    let policies: Vec<PolicyAggregate> = groups.iter().map(|(p, rs)| policy_aggregate(p, rs)).collect();
    let col = |f: fn(&PolicyAggregate) -> Option<f64>| -> Vec<f64> {
        policies.iter().map(|p| f(p).unwrap_or(f64::NEG_INFINITY)).collect()
    };
    let (eb, cer, dm) = (col(|p| p.eff_b), col(|p| Some(p.cer)), col(|p| p.delta_map));
    let by_eff_b = descending_ranks(&eb);
    let by_cer = descending_ranks(&cer);
    let by_delta_map = descending_ranks(&dm);
    let corr = |a: &[f64], b: &[f64]| spearman(a, b).ok();
    PolicySummary {
        ranks: RankTable {
            policies: policies.iter().map(|p| p.policy.clone()).collect(),
            eff_b_vs_cer: corr(&by_eff_b, &by_cer),
            eff_b_vs_delta_map: corr(&by_eff_b, &by_delta_map),
            by_eff_b,
            by_cer,
            by_delta_map,
        },
        policies,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariableReport {
    pub variable: Variable,
    pub faithfulness: Option<Regression>,
    pub record_r2: Option<Regression>,
    pub fixed_effects: Option<FixedEffects>,
    pub per_image_spearman: PerImageSpearman,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuartileReport {
    pub config_id: String,
    pub result: Option<DoseResponse>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub records: usize,
    pub configs: usize,
    pub variables: Vec<VariableReport>,
    pub eir_dose_response: Option<DoseResponse>,
    pub within_config_quartiles: Vec<QuartileReport>,
    /// Mean B-SLR per NT target in target order, when the NT sweep is present.
    pub nt_means: Vec<f64>,
    pub nt_nondecreasing: usize,
}

/// Runs every verification layer over one campaign.
pub fn full_report(records: &[CampaignRecord]) -> StatsReport {
    let aggs = aggregate_by_config(records);
    let variables = Variable::PREDICTORS
        .into_iter()
        .map(|v| {
            let (x, y) = pairs(records, v, Variable::Cer);
            VariableReport {
                variable: v,
                faithfulness: faithfulness(&aggs, v).ok(),
                record_r2: ols(&x, &y).ok(),
                fixed_effects: fixed_effects_for(records, v, Variable::Cer).ok(),
                per_image_spearman: per_image_spearman(records, v, Variable::Cer),
            }
        })
        .collect();
    let within_config_quartiles = aggs
        .iter()
        .map(|a| QuartileReport {
            config_id: a.config_id.clone(),
            result: within_config_quartiles(records, &a.config_id, Variable::Eir, Variable::BSlr).ok(),
        })
        .collect();
    let nt_means: Vec<f64> =
        aggs.iter().filter(|a| a.config_id.starts_with("NT")).filter_map(|a| a.get(Variable::BSlr)).collect();
    StatsReport {
        records: records.len(),
        configs: aggs.len(),
        variables,
        eir_dose_response: dose_response_for(records, Variable::Eir, Variable::BSlr, 5).ok(),
        within_config_quartiles,
        nt_nondecreasing: nondecreasing_count(&nt_means),
        nt_means,
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Configs × metric means.
pub fn write_config_table<W: Write>(out: W, aggs: &[ConfigAggregate]) -> Result<(), StatsError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["config_id".to_string(), "n".to_string()];
    header.extend(Variable::ALL.iter().map(|v| v.name().to_string()));
    w.write_record(&header)?;
    for a in aggs {
        let mut row = vec![a.config_id.clone(), a.n.to_string()];
        row.extend(Variable::ALL.iter().map(|&v| cell(a.get(v))));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Policies × metrics with both efficiency conventions and ranks.
pub fn write_policy_table<W: Write>(out: W, s: &PolicySummary) -> Result<(), StatsError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "policy",
        "n",
        "TOR",
        "B_SLR",
        "SLR_miss",
        "SLR_topo",
        "TopoShare",
        "CER",
        "delta_mAP",
        "Eff_B",
        "Eff_C",
        "Eff_B_per_image",
        "Eff_C_per_image",
        "rank_Eff_B",
        "rank_CER",
        "rank_delta_mAP",
    ])?;
    for (i, p) in s.policies.iter().enumerate() {
        w.write_record([
            p.policy.clone(),
            p.n.to_string(),
            p.tor.to_string(),
            p.b_slr.to_string(),
            p.slr_miss.to_string(),
            p.slr_topo.to_string(),
            cell(p.topo_share),
            p.cer.to_string(),
            cell(p.delta_map),
            cell(p.eff_b),
            cell(p.eff_c),
            cell(p.eff_b_per_image),
            cell(p.eff_c_per_image),
            s.ranks.by_eff_b[i].to_string(),
            s.ranks.by_cer[i].to_string(),
            s.ranks.by_delta_map[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

//! Flat campaign rows and their CSV form.

use std::io::{Read, Write};

use serde::Serialize;
use thiserror::Error;

use crate::audit::DiagnosticRecord;

pub const HEADER: [&str; 16] = [
    "image_id",
    "config_id",
    "TOR",
    "ACR",
    "BPO",
    "BOC",
    "EIR",
    "B_SLR",
    "B_SLR_iou_only",
    "SLR_miss",
    "SLR_topo",
    "CER_matched_mean",
    "mAP_clean",
    "mAP_adv",
    "delta_mAP",
    "n_orig_spans",
];

/// Extra column written by policy-driven runs.
pub const POLICY_COLUMN: &str = "policy";

#[derive(Debug, Error)]
pub enum RecordError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("missing column `{0}`")]
    MissingColumn(&'static str),
    #[error("row {row}: bad value `{value}` in `{column}`")]
    Value { row: usize, column: &'static str, value: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignRecord {
    pub image_id: String,
    pub config_id: String,
    pub tor: f64,
    pub acr: Option<f64>,
    pub bpo: Option<f64>,
    pub boc: Option<f64>,
    pub eir: f64,
    pub b_slr: f64,
    pub b_slr_iou_only: f64,
    pub slr_miss: f64,
    pub slr_topo: f64,
    pub cer_matched_mean: f64,
    pub map_clean: Option<f64>,
    pub map_adv: Option<f64>,
    pub delta_map: Option<f64>,
    pub n_orig_spans: usize,
    pub policy: Option<String>,
}

impl CampaignRecord {
    pub fn from_diagnostic(image_id: &str, config_id: &str, d: &DiagnosticRecord) -> Self {
        Self {
            image_id: image_id.to_string(),
            config_id: config_id.to_string(),
            tor: d.exposure.tor,
            acr: d.exposure.acr,
            bpo: d.exposure.bpo,
            boc: d.exposure.boc,
            eir: d.exposure.eir,
            b_slr: d.b_slr,
            b_slr_iou_only: d.b_slr_iou_only,
            slr_miss: d.slr_miss,
            slr_topo: d.slr_topo,
            cer_matched_mean: d.terminal.cer_matched_mean,
            map_clean: d.terminal.map_clean,
            map_adv: d.terminal.map_adv,
            delta_map: d.terminal.delta_map,
            n_orig_spans: d.n_orig_spans,
            policy: None,
        }
    }

    /// Text-gate channel, recovered from the total and the IoU channel.
    pub fn b_slr_text_only(&self) -> f64 {
        self.b_slr - self.b_slr_iou_only
    }

    fn cells(&self) -> Vec<String> {
        let f = |v: f64| v.to_string();
        let o = |v: Option<f64>| v.map(f).unwrap_or_default();
        vec![
            self.image_id.clone(),
            self.config_id.clone(),
            f(self.tor),
            o(self.acr),
            o(self.bpo),
            o(self.boc),
            f(self.eir),
            f(self.b_slr),
            f(self.b_slr_iou_only),
            f(self.slr_miss),
            f(self.slr_topo),
            f(self.cer_matched_mean),
            o(self.map_clean),
            o(self.map_adv),
            o(self.delta_map),
            self.n_orig_spans.to_string(),
        ]
    }
}

/// Writes rows under the fixed header; the policy column is appended when
/// `with_policy` is set.
pub fn write_records<W: Write>(out: W, records: &[CampaignRecord], with_policy: bool) -> Result<(), RecordError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = HEADER.to_vec();
    if with_policy {
        header.push(POLICY_COLUMN);
    }
    w.write_record(&header)?;
    for r in records {
        let mut cells = r.cells();
        if with_policy {
            cells.push(r.policy.clone().unwrap_or_default());
        }
        w.write_record(&cells)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<CampaignRecord>, RecordError> {
    let mut rd = csv::Reader::from_reader(input);
    let headers = rd.headers()?.clone();
    let col = |name: &'static str| headers.iter().position(|h| h == name).ok_or(RecordError::MissingColumn(name));
    let idx: Vec<usize> = HEADER.iter().map(|h| col(h)).collect::<Result<_, _>>()?;
    let policy = headers.iter().position(|h| h == POLICY_COLUMN);
    let mut out = Vec::new();
    for (row, rec) in rd.records().enumerate() {
        let rec = rec?;
        let get = |k: usize| rec.get(idx[k]).unwrap_or("");
        let num = |k: usize| -> Result<f64, RecordError> {
            get(k).parse().map_err(|_| RecordError::Value { row, column: HEADER[k], value: get(k).to_string() })
        };
        let opt = |k: usize| -> Result<Option<f64>, RecordError> { if get(k).is_empty() { Ok(None) } else { num(k).map(Some) } };
        out.push(CampaignRecord {
            image_id: get(0).to_string(),
            config_id: get(1).to_string(),
            tor: num(2)?,
            acr: opt(3)?,
            bpo: opt(4)?,
            boc: opt(5)?,
            eir: num(6)?,
            b_slr: num(7)?,
            b_slr_iou_only: num(8)?,
            slr_miss: num(9)?,
            slr_topo: num(10)?,
            cer_matched_mean: num(11)?,
            map_clean: opt(12)?,
            map_adv: opt(13)?,
            delta_map: opt(14)?,
            n_orig_spans: get(15).parse().map_err(|_| RecordError::Value { row, column: HEADER[15], value: get(15).to_string() })?,
            policy: policy.and_then(|p| rec.get(p)).filter(|s| !s.is_empty()).map(str::to_string),
        });
    }
    Ok(out)
}

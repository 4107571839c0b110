//! Parser adapters: an in-process mock and a filesystem exchange with an
//! external process.
//!
//! Exchange layout for one batch:
//! - `<in>/manifest.json`: `{"jobs": [{"job_id", "image_id"}, ...]}`
//! - `<in>/<job_id>.png`: the perturbed page
//! - `<in>/<job_id>.alpha.png`: 8-bit probe opacity (0 outside the support)
//! - `<out>/<job_id>.json`: canonical parse written by the adapter
//! - `<out>/manifest.json` (optional): `{"jobs": [{"job_id", "status", "reason"}]}`

use std::collections::HashMap;
use std::fs;
use std::path::Path;
#[cfg(feature = "subprocess")]
use std::path::PathBuf;
#[cfg(feature = "subprocess")]
use std::process::Command;

use image::{GrayImage, RgbImage};
use serde::{Deserialize, Serialize};

use super::CampaignError;
use crate::document::{parse_output_from_json, parse_output_to_json, ParseOutput};
use crate::probe::ProbeMask;
use crate::synthetic::{mock_parse, GlyphSidecar, MockParserRules};

/// One page to parse. The mask is what the probe engine produced; real
/// parsers ignore it, the mock parser reads it instead of pixels.
pub struct ParseJob<'a> {
    pub job_id: String,
    pub image_id: String,
    pub image: &'a RgbImage,
    pub mask: &'a ProbeMask,
}

pub trait ParserAdapter: Sync {
    /// Identifies the parser in clean-parse cache keys.
    fn name(&self) -> &str;
    /// One result per job, in job order. An `Err` carries the reason the page
    /// could not be parsed.
    fn parse_batch(&self, jobs: &[ParseJob<'_>]) -> Vec<Result<ParseOutput, String>>;
}

/// Sidecar-driven mock parser, in process.
pub struct MockAdapter {
    sidecars: HashMap<String, GlyphSidecar>,
    pub rules: MockParserRules,
}

impl MockAdapter {
    pub fn new(sidecars: impl IntoIterator<Item = GlyphSidecar>, rules: MockParserRules) -> Self {
        Self { sidecars: sidecars.into_iter().map(|s| (s.page_id.clone(), s)).collect(), rules }
    }

    /// Loads every `*.glyphs.json` in `dir`.
    pub fn from_dir(dir: impl AsRef<Path>, rules: MockParserRules) -> Result<Self, CampaignError> {
        let mut sidecars = Vec::new();
        for entry in fs::read_dir(dir.as_ref())? {
            let p = entry?.path();
            if p.to_string_lossy().ends_with(".glyphs.json") {
                sidecars.push(GlyphSidecar::load(&p).map_err(|e| CampaignError::Pool(e.to_string()))?);
            }
        }
        Ok(Self::new(sidecars, rules))
    }

    pub fn parse_one(&self, image_id: &str, mask: &ProbeMask) -> Result<ParseOutput, String> {
        let sc = self.sidecars.get(image_id).ok_or_else(|| format!("missing sidecar for {image_id}"))?;
        Ok(mock_parse(sc, mask, &self.rules))
    }
}

impl ParserAdapter for MockAdapter {
    fn name(&self) -> &str {
        "mock"
    }

    fn parse_batch(&self, jobs: &[ParseJob<'_>]) -> Vec<Result<ParseOutput, String>> {
        jobs.iter().map(|j| self.parse_one(&j.image_id, j.mask)).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestJob {
    pub job_id: String,
    pub image_id: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct InputManifest {
    pub jobs: Vec<ManifestJob>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobStatus {
    pub job_id: String,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OutputManifest {
    #[serde(default)]
    pub parser: Option<String>,
    #[serde(default)]
    pub version: Option<String>,
    #[serde(default)]
    pub jobs: Vec<JobStatus>,
}

/// Writes the batch inputs into `dir`.
pub fn write_batch(dir: &Path, jobs: &[ParseJob<'_>]) -> Result<(), CampaignError> {
    fs::create_dir_all(dir)?;
    for j in jobs {
        j.image.save(dir.join(format!("{}.png", j.job_id)))?;
        let (w, h) = j.mask.dims();
        let alpha = GrayImage::from_raw(w as u32, h as u32, j.mask.alpha_raster_u8()).expect("alpha raster size");
        alpha.save(dir.join(format!("{}.alpha.png", j.job_id)))?;
    }
    let manifest = InputManifest {
        jobs: jobs.iter().map(|j| ManifestJob { job_id: j.job_id.clone(), image_id: j.image_id.clone() }).collect(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

/// Reads back one result per job from an adapter output directory.
pub fn read_batch(dir: &Path, job_ids: &[String]) -> Vec<Result<ParseOutput, String>> {
    let statuses: HashMap<String, JobStatus> = fs::read(dir.join("manifest.json"))
        .ok()
        .and_then(|b| serde_json::from_slice::<OutputManifest>(&b).ok())
        .map(|m| m.jobs.into_iter().map(|s| (s.job_id.clone(), s)).collect())
        .unwrap_or_default();
    job_ids
        .iter()
        .map(|id| {
            let path = dir.join(format!("{id}.json"));
            match fs::read_to_string(&path) {
                Ok(text) => parse_output_from_json(&text).map(|(p, _)| p).map_err(|e| format!("invalid adapter output: {e}")),
                Err(_) => Err(match statuses.get(id) {
                    Some(s) => format!("adapter status {}: {}", s.status, s.reason.as_deref().unwrap_or("no reason given")),
                    None => "adapter produced no output".to_string(),
                }),
            }
        })
        .collect()
}

#[cfg(feature = "subprocess")]
/// External adapter invoked as `<program> <args..> --in <dir> --out <dir>`.
pub struct SubprocessAdapter {
    pub program: String,
    pub args: Vec<String>,
    /// Parent for per-batch exchange directories; a temporary directory when unset.
    pub work_dir: Option<PathBuf>,
    label: String,
}

#[cfg(feature = "subprocess")]
impl SubprocessAdapter {
    /// Splits a command line on whitespace. Quoting is not interpreted.
    pub fn from_command_line(cmd: &str) -> Result<Self, CampaignError> {
        let mut parts = cmd.split_whitespace().map(str::to_string);
        let program = parts.next().ok_or_else(|| CampaignError::Adapter("empty adapter command".into()))?;
        Ok(Self { label: cmd.trim().to_string(), program, args: parts.collect(), work_dir: None })
    }

    fn run(&self, root: &Path, jobs: &[ParseJob<'_>]) -> Result<Vec<Result<ParseOutput, String>>, CampaignError> {
        let (input, output) = (root.join("in"), root.join("out"));
        write_batch(&input, jobs)?;
        fs::create_dir_all(&output)?;
        let status = Command::new(&self.program)
            .args(&self.args)
            .arg("--in")
            .arg(&input)
            .arg("--out")
            .arg(&output)
            .status()
            .map_err(|e| CampaignError::Adapter(format!("launching `{}`: {e}", self.program)))?;
        let ids: Vec<String> = jobs.iter().map(|j| j.job_id.clone()).collect();
        let mut results = read_batch(&output, &ids);
        if !status.success() {
            // keep whatever the adapter managed to write before failing
            for r in results.iter_mut() {
                if let Err(reason) = r {
                    *reason = format!("{reason} (adapter exited with {status})");
                }
            }
        }
        Ok(results)
    }
}

#[cfg(feature = "subprocess")]
impl ParserAdapter for SubprocessAdapter {
    fn name(&self) -> &str {
        &self.label
    }

    fn parse_batch(&self, jobs: &[ParseJob<'_>]) -> Vec<Result<ParseOutput, String>> {
        if jobs.is_empty() {
            return Vec::new();
        }
        let tmp = match &self.work_dir {
            Some(d) => fs::create_dir_all(d).map_err(CampaignError::from).and_then(|_| tempfile::tempdir_in(d).map_err(Into::into)),
            None => tempfile::tempdir().map_err(Into::into),
        };
        let outcome = tmp.and_then(|t| self.run(t.path(), jobs));
        match outcome {
            Ok(r) => r,
            Err(e) => jobs.iter().map(|_| Err(e.to_string())).collect(),
        }
    }
}

/// The mock parser behind the exchange protocol: reads a batch from `input`,
/// writes canonical parses and a status manifest to `output`.
pub fn run_mock_exchange(input: &Path, output: &Path, sidecars: &Path, rules: MockParserRules) -> Result<OutputManifest, CampaignError> {
    let mock = MockAdapter::from_dir(sidecars, rules)?;
    let manifest: InputManifest = serde_json::from_slice(&fs::read(input.join("manifest.json"))?)?;
    fs::create_dir_all(output)?;
    let mut statuses = Vec::new();
    for job in &manifest.jobs {
        let outcome = (|| -> Result<ParseOutput, String> {
            let img = image::open(input.join(format!("{}.png", job.job_id))).map_err(|e| e.to_string())?.to_rgb8();
            let alpha_path = input.join(format!("{}.alpha.png", job.job_id));
            let alpha = match image::open(&alpha_path) {
                Ok(a) => a.to_luma8().into_raw(),
                Err(_) => vec![0; (img.width() * img.height()) as usize],
            };
            let mask = ProbeMask::from_alpha_and_image(&alpha, &img);
            mock.parse_one(&job.image_id, &mask)
        })();
        match outcome {
            Ok(p) => {
                fs::write(output.join(format!("{}.json", job.job_id)), parse_output_to_json(&p))?;
                statuses.push(JobStatus { job_id: job.job_id.clone(), status: "ok".into(), reason: None });
            }
            Err(reason) => statuses.push(JobStatus { job_id: job.job_id.clone(), status: "failed".into(), reason: Some(reason) }),
        }
    }
    let m = OutputManifest { parser: Some("mock".into()), version: Some(env!("CARGO_PKG_VERSION").into()), jobs: statuses };
    fs::write(output.join("manifest.json"), serde_json::to_vec_pretty(&m)?)?;
    Ok(m)
}

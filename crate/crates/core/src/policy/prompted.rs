//! Language- and vision-model policies: prompt payloads, a content-addressed
//! transcript store for replay, and response parsing with fallbacks.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use base64::Engine;
use image::codecs::jpeg::JpegEncoder;
use image::imageops::FilterType;
use image::RgbImage;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::features::PolicyContext;
use super::{PolicyDecision, PolicyKind};
use crate::probe::{Param, Placement, ProbeConfig, ProbeId, ProbeParams};

pub const TEMPERATURE: f64 = 0.7;
pub const MAX_ATTEMPTS: u32 = 3;
pub const VLM_LONG_EDGE: u32 = 1024;
pub const VLM_JPEG_QUALITY: u8 = 85;
pub const VLM_MAX_TOKENS: u32 = 1024;

const BIASED_TEMPLATE: &str = include_str!("../../assets/prompts/llm_biased.txt");
const NEUTRAL_TEMPLATE: &str = include_str!("../../assets/prompts/llm_neutral.txt");
const VLM_TEMPLATE: &str = include_str!("../../assets/prompts/vlm.txt");

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("no recorded response for request {0}")]
    NotRecorded(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("{kind} policy is not prompt-driven")]
    NotPrompted { kind: PolicyKind },
    #[error("no usable response after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("image encoding: {0}")]
    Image(String),
}

/// One chat request. `attempt` distinguishes retries in the transcript key and
/// is not sent to the endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub system: String,
    pub user: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_jpeg_base64: Option<String>,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    pub json_mode: bool,
    pub attempt: u32,
}

impl ChatRequest {
    /// Hex SHA-256 of the canonical JSON form.
    pub fn key(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("request serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub trait ChatClient: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError>;
}

#[derive(Debug, Serialize, Deserialize)]
struct Transcript {
    request: ChatRequest,
    response: String,
}

/// Directory of `<key>.json` transcripts.
#[derive(Debug, Clone)]
pub struct TranscriptStore {
    dir: PathBuf,
}

impl TranscriptStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, request: &ChatRequest) -> Result<Option<String>, ClientError> {
        let p = self.path(&request.key());
        if !p.exists() {
            return Ok(None);
        }
        let t: Transcript = serde_json::from_slice(&fs::read(p)?)?;
        Ok(Some(t.response))
    }

    /// Writes through a temporary file so concurrent readers never observe a
    /// partial transcript.
    pub fn put(&self, request: &ChatRequest, response: &str) -> Result<(), ClientError> {
        fs::create_dir_all(&self.dir)?;
        let key = request.key();
        let tmp = self.dir.join(format!(".{key}.tmp"));
        let body = serde_json::to_vec_pretty(&Transcript { request: request.clone(), response: response.to_string() })?;
        fs::write(&tmp, body)?;
        fs::rename(tmp, self.path(&key))?;
        Ok(())
    }
}

/// Serves recorded responses; on a miss, forwards to `live` and records the
/// answer, or fails when there is no live client.
pub struct ReplayClient {
    pub store: TranscriptStore,
    pub live: Option<Box<dyn ChatClient>>,
}

impl ReplayClient {
    pub fn replay_only(store: TranscriptStore) -> Self {
        Self { store, live: None }
    }
}

impl ChatClient for ReplayClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
        if let Some(r) = self.store.get(request)? {
            return Ok(r);
        }
        let live = self.live.as_ref().ok_or_else(|| ClientError::NotRecorded(request.key()))?;
        let r = live.complete(request)?;
        self.store.put(request, &r)?;
        Ok(r)
    }
}

/// Both strategy vocabularies map onto the four placements.
pub fn map_strategy(name: &str) -> Option<Placement> {
    match name.trim().to_ascii_lowercase().as_str() {
        "bridge" | "between" => Some(Placement::Bridge),
        "anchor" | "edge" => Some(Placement::Anchor),
        "content" | "inside" => Some(Placement::Content),
        "random" | "anywhere" => Some(Placement::Random),
        _ => None,
    }
}

/// Neutral-vocabulary name of a placement.
pub fn neutral_name(p: Placement) -> &'static str {
    match p {
        Placement::Bridge => "between",
        Placement::Anchor => "edge",
        Placement::Content => "inside",
        Placement::Random => "anywhere",
    }
}

fn probe_label(p: ProbeId) -> &'static str {
    match p {
        ProbeId::P1 => "horizontal crease line",
        ProbeId::P2 => "vertical crease line",
        ProbeId::P3 => "semi-transparent circular overlay",
        ProbeId::P4 => "rectangular erasure",
        ProbeId::P5 => "thin horizontal line",
        ProbeId::P6 => "gradient shadow band",
        ProbeId::P7 => "cluster of small dots",
        ProbeId::P8 => "irregular translucent patch",
        ProbeId::P9 => "diagonal crease line",
    }
}

/// Catalog listing for the prompt; parameter ranges are omitted for the
/// vision policy, which only chooses the probe and strategy.
pub fn probe_catalog_text(with_params: bool) -> String {
    ProbeId::ALL
        .iter()
        .map(|p| {
            let mut line = format!("- {p}: {}", probe_label(*p));
            if with_params {
                let ranges: Vec<String> =
                    p.catalog().ranges.iter().map(|(q, lo, hi)| format!("{} in [{lo}, {hi}]", q.name())).collect();
                line.push_str(&format!(" ({})", ranges.join(", ")));
            }
            line
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Long edge resized to 1024 px, JPEG at quality 85, base64.
pub fn encode_page_image(image: &RgbImage) -> Result<String, PromptError> {
    let (w, h) = image.dimensions();
    let scale = VLM_LONG_EDGE as f64 / w.max(h).max(1) as f64;
    let (nw, nh) = (((w as f64 * scale).round() as u32).max(1), ((h as f64 * scale).round() as u32).max(1));
    let resized = image::imageops::resize(image, nw, nh, FilterType::Triangle);
    let mut buf = Cursor::new(Vec::new());
    JpegEncoder::new_with_quality(&mut buf, VLM_JPEG_QUALITY)
        .encode_image(&resized)
        .map_err(|e| PromptError::Image(e.to_string()))?;
    Ok(base64::engine::general_purpose::STANDARD.encode(buf.into_inner()))
}

const BIASED_SYSTEM: &str = "You are an expert adversarial tester for document layout analysis.";
const NEUTRAL_SYSTEM: &str = "You are a quality-assurance analyst for document layout analysis robustness.";
const VLM_SYSTEM: &str = "You select image perturbations for document layout robustness testing.";

/// Request for the given attempt. The image is only attached for the vision
/// policy.
pub fn build_request(
    kind: PolicyKind,
    model: &str,
    ctx: &PolicyContext,
    image_b64: Option<&str>,
    attempt: u32,
) -> Result<ChatRequest, PromptError> {
    let (system, user, json_mode, max_tokens) = match kind {
        PolicyKind::LlmBiased => (
            BIASED_SYSTEM,
            BIASED_TEMPLATE.replace("{probes}", &probe_catalog_text(true)).replace("{context}", &ctx.encode_biased()),
            true,
            None,
        ),
        PolicyKind::LlmNeutral => (
            NEUTRAL_SYSTEM,
            NEUTRAL_TEMPLATE.replace("{probes}", &probe_catalog_text(true)).replace("{context}", &ctx.encode_neutral()),
            true,
            None,
        ),
        PolicyKind::Vlm => (VLM_SYSTEM, VLM_TEMPLATE.replace("{probes}", &probe_catalog_text(false)), false, Some(VLM_MAX_TOKENS)),
        k => return Err(PromptError::NotPrompted { kind: k }),
    };
    Ok(ChatRequest {
        model: model.to_string(),
        system: system.to_string(),
        user,
        image_jpeg_base64: if kind == PolicyKind::Vlm { image_b64.map(str::to_string) } else { None },
        temperature: TEMPERATURE,
        max_tokens,
        json_mode,
        attempt,
    })
}

/// First balanced `{...}` object in free-form text.
fn extract_object(text: &str) -> Option<Value> {
    if let Ok(v @ Value::Object(_)) = serde_json::from_str::<Value>(text.trim()) {
        return Some(v);
    }
    let bytes = text.as_bytes();
    let mut start = 0;
    while let Some(off) = text[start..].find('{') {
        let s = start + off;
        let (mut depth, mut in_str, mut esc) = (0i32, false, false);
        for (i, &c) in bytes.iter().enumerate().skip(s) {
            if in_str {
                match c {
                    _ if esc => esc = false,
                    b'\\' => esc = true,
                    b'"' => in_str = false,
                    _ => {}
                }
                continue;
            }
            match c {
                b'"' => in_str = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        if let Ok(v @ Value::Object(_)) = serde_json::from_str::<Value>(&text[s..=i]) {
                            return Some(v);
                        }
                        break;
                    }
                }
                _ => {}
            }
        }
        start = s + 1;
    }
    None
}

/// Outcome of interpreting one response.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedResponse {
    pub config: ProbeConfig,
    pub strategy_fallback: bool,
    pub probe_fallback: bool,
    pub clamped: bool,
}

fn str_field<'a>(obj: &'a Value, names: &[&str]) -> Option<&'a str> {
    names.iter().find_map(|n| obj.get(*n).and_then(Value::as_str))
}

/// Interprets a model response. Returns `None` when no JSON object can be
/// recovered, which triggers a retry.
pub fn parse_response(text: &str) -> Option<ParsedResponse> {
    let obj = extract_object(text)?;
    let probe_raw = str_field(&obj, &["probe", "probe_type", "probe_id"]);
    let probe = probe_raw.and_then(|s| s.parse::<ProbeId>().ok());
    let strategy = str_field(&obj, &["strategy", "placement"]).and_then(map_strategy);
    let mut params = ProbeParams::default();
    if let (Some(id), Some(Value::Object(m))) = (probe, obj.get("params").or_else(|| obj.get("parameters"))) {
        for &(p, _, _) in id.catalog().ranges {
            if let Some(v) = m.get(p.name()).or_else(|| m.get(alias(p))).and_then(Value::as_f64) {
                params.set(p, v);
            }
        }
    }
    let id = probe.unwrap_or(ProbeId::P5);
    let raw = ProbeConfig::new(id, params, strategy.unwrap_or(Placement::Random));
    let config = raw.clamped();
    let supplied = params != ProbeParams::default();
    Some(ParsedResponse {
        clamped: supplied && config.params != raw.params,
        config,
        strategy_fallback: strategy.is_none(),
        probe_fallback: probe.is_none(),
    })
}

fn alias(p: Param) -> &'static str {
    match p {
        Param::LR => "length_ratio",
        Param::AArea => "area",
        Param::RB => "base_radius",
        _ => p.name(),
    }
}

/// Runs a prompted policy with up to three attempts.
pub fn policy_prompted(
    kind: PolicyKind,
    model: &str,
    ctx: &PolicyContext,
    image: Option<&RgbImage>,
    client: &dyn ChatClient,
) -> Result<PolicyDecision, PromptError> {
    let image_b64 = match (kind, image) {
        (PolicyKind::Vlm, Some(img)) => Some(encode_page_image(img)?),
        _ => None,
    };
    let mut last = String::from("no attempt made");
    for attempt in 0..MAX_ATTEMPTS {
        let req = build_request(kind, model, ctx, image_b64.as_deref(), attempt)?;
        match client.complete(&req) {
            Ok(text) => match parse_response(&text) {
                Some(p) => {
                    return Ok(PolicyDecision {
                        config: p.config,
                        policy: kind,
                        raw_response: Some(text),
                        strategy_fallback: p.strategy_fallback,
                        probe_fallback: p.probe_fallback,
                        clamped: p.clamped,
                        attempts: attempt + 1,
                    })
                }
                None => last = format!("unparseable response: {}", truncate(&text, 120)),
            },
            Err(e) => last = e.to_string(),
        }
    }
    Err(PromptError::Exhausted { attempts: MAX_ATTEMPTS, last })
}

fn truncate(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}

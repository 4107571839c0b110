use std::collections::HashSet;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use prosa_core::audit::{audit_page, Thresholds};
use prosa_core::campaign::{
    completed_pairs, load_pool, matrix, run_mock_exchange, run_phase1, run_phase2, write_skips, CampaignOutput, MatrixKind,
    MockAdapter, ParserAdapter, SubprocessAdapter,
};
use prosa_core::document::{load_annotations, load_parse_output};
use prosa_core::policy::{ChatClient, PolicyKind, ReplayClient, TranscriptStore};
use prosa_core::probe::ProbeMask;
use prosa_core::record::{read_records, write_records};
use prosa_core::retrieval::{bm25_rank, chunk, evaluate_qa, retrieval_metrics, Bm25Params, ChunkParams};
use prosa_core::settings::Settings;
use prosa_core::stats::{aggregate_by_config, full_report, policy_summary, write_config_table, write_policy_table};
use prosa_core::synthetic::{generate_page, qa_pairs, GlyphSidecar, PageSpec};
use thiserror::Error;

mod chat;

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Campaign(#[from] prosa_core::campaign::CampaignError),
    #[error(transparent)]
    Settings(#[from] prosa_core::settings::SettingsError),
    #[error(transparent)]
    Record(#[from] prosa_core::record::RecordError),
    #[error(transparent)]
    Ingest(#[from] prosa_core::document::IngestError),
    #[error(transparent)]
    Audit(#[from] prosa_core::audit::AuditError),
    #[error(transparent)]
    Stats(#[from] prosa_core::stats::StatsError),
    #[error(transparent)]
    Synthetic(#[from] prosa_core::synthetic::SyntheticError),
}

type Result<T> = std::result::Result<T, CliError>;

/// Structural robustness audits for document layout parsers.
#[derive(Parser)]
#[command(name = "prosa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic page pool (PNG, annotations, glyph sidecars).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        pages: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "syn")]
        prefix: String,
    },
    /// Phase 1: run a configuration matrix over a page pool.
    Campaign {
        #[command(flatten)]
        common: CampaignArgs,
        /// a, nt, s, phase1 or all.
        #[arg(long, default_value = "phase1")]
        matrix: MatrixKind,
        /// Only these config ids (comma separated).
        #[arg(long, value_delimiter = ',')]
        configs: Vec<String>,
    },
    /// Phase 2: let placement policies choose one probe per page.
    Phase2 {
        #[command(flatten)]
        common: CampaignArgs,
        /// Comma separated: random, rule, llm-biased, llm-neutral, vlm.
        #[arg(long, value_delimiter = ',', default_value = "random,rule")]
        policies: Vec<String>,
        /// Directory of recorded prompt/response pairs.
        #[arg(long)]
        transcripts: Option<PathBuf>,
        /// Never call the endpoint; unrecorded requests become skips.
        #[arg(long, requires = "transcripts")]
        replay_only: bool,
        /// Chat-completions base URL; the key is read from PROSA_API_KEY.
        #[arg(long, env = "PROSA_API_BASE")]
        api_base: Option<String>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        vlm_model: Option<String>,
    },
    /// Audit one clean/perturbed parse pair.
    Audit {
        #[arg(long)]
        clean: PathBuf,
        #[arg(long)]
        adv: PathBuf,
        /// Probe opacity PNG; nonzero pixels form the support.
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long)]
        settings: Option<PathBuf>,
    },
    /// Verification statistics over a record CSV.
    Stats {
        #[arg(long)]
        records: PathBuf,
        /// Full report as JSON instead of tables.
        #[arg(long)]
        json: bool,
    },
    /// Parser side of the subprocess exchange, backed by the mock parser.
    MockAdapter {
        #[arg(long)]
        sidecars: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        #[arg(long)]
        settings: Option<PathBuf>,
    },
    /// Downstream chunking and BM25 retrieval.
    #[command(subcommand)]
    Retrieval(RetrievalCommand),
}

#[derive(Subcommand)]
enum RetrievalCommand {
    /// Top chunks of one parse for a query.
    Rank {
        #[arg(long)]
        parse: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(short, long, default_value_t = 5)]
        k: usize,
    },
    /// QA retrieval metrics over a synthetic pool, against the clean text or
    /// against parses in `--parses` named `<page_id>.json`.
    Qa {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        parses: Option<PathBuf>,
    },
}

#[derive(Args)]
struct CampaignArgs {
    /// Directory of `<id>.png` pages with optional `<id>.json` annotations.
    #[arg(long)]
    pool: PathBuf,
    /// Record CSV to write.
    #[arg(long)]
    out: PathBuf,
    /// External parser command; it receives `--in DIR --out DIR`. Without it
    /// the mock parser reads the pool's glyph sidecars in process.
    #[arg(long)]
    adapter: Option<String>,
    #[arg(long)]
    settings: Option<PathBuf>,
    /// Keep the rows already in `--out` and run only the missing pairs.
    #[arg(long)]
    resume: bool,
    /// Skip report CSV (default: `<out>.skips.csv`).
    #[arg(long)]
    skips: Option<PathBuf>,
    /// Per-run JSON lines with the applied configs and fallbacks.
    #[arg(long)]
    runs: Option<PathBuf>,
}

fn load_settings(path: Option<&Path>) -> Result<Settings> {
    Ok(match path {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    })
}

fn adapter_for(args: &CampaignArgs, settings: &Settings) -> Result<Box<dyn ParserAdapter>> {
    Ok(match &args.adapter {
        Some(cmd) => Box::new(SubprocessAdapter::from_command_line(cmd)?),
        None => Box::new(MockAdapter::from_dir(&args.pool, settings.mock.clone())?),
    })
}

/// Writes records (after any resumed rows), skips and run logs; returns the
/// one-line summary.
fn finish(args: &CampaignArgs, previous: Vec<prosa_core::record::CampaignRecord>, out: CampaignOutput, with_policy: bool) -> Result<String> {
    let added = out.records.len();
    let mut records = previous;
    records.extend(out.records);
    write_records(fs::File::create(&args.out)?, &records, with_policy)?;
    let skips = args.skips.clone().unwrap_or_else(|| PathBuf::from(format!("{}.skips.csv", args.out.display())));
    write_skips(&skips, &out.skips)?;
    if let Some(path) = &args.runs {
        let mut f = io::BufWriter::new(fs::File::create(path)?);
        for r in &out.runs {
            serde_json::to_writer(&mut f, r)?;
            f.write_all(b"\n")?;
        }
        f.flush()?;
    }
    Ok(format!("{added} records written ({} total), {} skipped, {} pages excluded", records.len(), out.skips.len(), out.excluded.len()))
}

fn previous_records(args: &CampaignArgs) -> Result<Vec<prosa_core::record::CampaignRecord>> {
    if args.resume && args.out.exists() {
        Ok(read_records(fs::File::open(&args.out)?)?)
    } else {
        Ok(Vec::new())
    }
}

fn chat_client(transcripts: Option<&Path>, replay_only: bool, api_base: Option<&str>) -> Option<Box<dyn ChatClient>> {
    let live: Option<Box<dyn ChatClient>> = match (replay_only, api_base) {
        (false, Some(base)) => Some(Box::new(chat::HttpChatClient::new(base, std::env::var("PROSA_API_KEY").ok(), Duration::from_secs(120)))),
        _ => None,
    };
    match transcripts {
        Some(dir) => Some(Box::new(ReplayClient { store: TranscriptStore::new(dir), live })),
        None => live,
    }
}

fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Synth { out, pages, seed, prefix } => {
            fs::create_dir_all(&out)?;
            for i in 0..pages {
                let page = generate_page(&PageSpec::standard(format!("{prefix}_{i:03}"), seed + i as u64))?;
                page.save(&out)?;
            }
            Ok(format!("{pages} pages written to {}", out.display()))
        }
        Command::Campaign { common, matrix: kind, configs } => {
            let settings = load_settings(common.settings.as_deref())?;
            let pool = load_pool(&common.pool)?;
            let adapter = adapter_for(&common, &settings)?;
            let mut entries = matrix(kind);
            if !configs.is_empty() {
                let wanted: HashSet<&str> = configs.iter().map(String::as_str).collect();
                entries.retain(|e| wanted.contains(e.id.as_str()));
                if entries.len() != wanted.len() {
                    return Err(CliError::Usage(format!("some of {configs:?} are not in the {kind:?} matrix")));
                }
            }
            let previous = previous_records(&common)?;
            let done = completed_pairs(&previous);
            let out = run_phase1(&pool, adapter.as_ref(), &entries, &settings.campaign, &done)?;
            finish(&common, previous, out, false)
        }
        Command::Phase2 { common, policies, transcripts, replay_only, api_base, model, vlm_model } => {
            let mut settings = load_settings(common.settings.as_deref())?;
            settings.phase2.policies = policies.iter().map(|p| p.parse::<PolicyKind>().map_err(CliError::Usage)).collect::<Result<_>>()?;
            if let Some(m) = model {
                settings.phase2.model = m;
            }
            if let Some(m) = vlm_model {
                settings.phase2.vlm_model = m;
            }
            let pool = load_pool(&common.pool)?;
            let adapter = adapter_for(&common, &settings)?;
            let client = chat_client(transcripts.as_deref(), replay_only, api_base.as_deref());
            let previous = previous_records(&common)?;
            let done = completed_pairs(&previous);
            let out = run_phase2(&pool, adapter.as_ref(), &settings.campaign, &settings.phase2, client.as_deref(), &done)?;
            finish(&common, previous, out, true)
        }
        Command::Audit { clean, adv, mask, annotations, settings } => {
            let th: Thresholds = load_settings(settings.as_deref())?.campaign.thresholds;
            let (clean, _) = load_parse_output(&clean)?;
            let (adv, _) = load_parse_output(&adv)?;
            let alpha = image::open(&mask)?.to_luma8();
            let (w, h) = (alpha.width() as usize, alpha.height() as usize);
            let mask = ProbeMask::from_alpha_raster(w, h, alpha.as_raw());
            let ann = annotations.map(load_annotations).transpose()?.map(|(a, _)| a);
            Ok(audit_page(&clean, &adv, mask.support(), ann.as_ref(), &th)?.to_json())
        }
        Command::Stats { records, json } => {
            let records = read_records(fs::File::open(&records)?)?;
            if json {
                return Ok(serde_json::to_string_pretty(&full_report(&records))?);
            }
            let mut buf = Vec::new();
            write_config_table(&mut buf, &aggregate_by_config(&records))?;
            if records.iter().any(|r| r.policy.is_some()) {
                buf.push(b'\n');
                write_policy_table(&mut buf, &policy_summary(&records))?;
            }
            let report = full_report(&records);
            buf.extend(format!("\nrecords {}, configs {}\n", report.records, report.configs).bytes());
            for v in &report.variables {
                buf.extend(format!("{}\n", serde_json::to_string(v)?).bytes());
            }
            Ok(String::from_utf8_lossy(&buf).trim_end().to_string())
        }
        Command::MockAdapter { sidecars, input, output, settings } => {
            let rules = load_settings(settings.as_deref())?.mock;
            let m = run_mock_exchange(&input, &output, &sidecars, rules)?;
            let failed = m.jobs.iter().filter(|j| j.status != "ok").count();
            Ok(format!("{} jobs, {failed} failed", m.jobs.len()))
        }
        Command::Retrieval(RetrievalCommand::Rank { parse, query, k }) => {
            let (parse, _) = load_parse_output(&parse)?;
            let chunks = chunk(&parse, &ChunkParams::default());
            let ranked = bm25_rank(&query, &chunks, k, &Bm25Params::default());
            let rows: Vec<_> = ranked
                .iter()
                .map(|&(i, score)| serde_json::json!({"chunk": i, "score": score, "elements": chunks[i].elements, "text": chunks[i].text}))
                .collect();
            Ok(serde_json::to_string_pretty(&rows)?)
        }
        Command::Retrieval(RetrievalCommand::Qa { pool, parses }) => {
            let (chunking, bm25) = (ChunkParams::default(), Bm25Params::default());
            let mut outcomes = Vec::new();
            let mut ids: Vec<PathBuf> = fs::read_dir(&pool)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.to_string_lossy().ends_with(".glyphs.json"))
                .collect();
            ids.sort();
            for path in ids {
                let sidecar = GlyphSidecar::load(&path)?;
                let parse = match &parses {
                    Some(dir) => load_parse_output(dir.join(format!("{}.json", sidecar.page_id)))?.0,
                    None => sidecar.annotations().as_parse_output(),
                };
                outcomes.extend(qa_pairs(&sidecar).iter().map(|qa| evaluate_qa(qa, &parse, &chunking, &bm25)));
            }
            Ok(serde_json::to_string_pretty(&retrieval_metrics(&outcomes))?)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use prosa_core::campaign::{run_phase2, CampaignOptions, MockAdapter, Phase2Options, PoolPage};
use prosa_core::policy::{ChatClient, ChatRequest, ClientError, ReplayClient, TranscriptStore};
use prosa_core::policy::PolicyKind;
use prosa_core::probe::{Placement, ProbeId};
use prosa_core::synthetic::{generate_page, MockParserRules, PageSpec};

/// Answers by call order within each policy (keyed by system prompt). Pages
/// run in pool order, so the first call is pg_a, the second pg_b, and every
/// later call (pg_c and its retries) gets prose.
#[derive(Default)]
struct Scripted {
    calls: AtomicUsize,
    per_policy: Mutex<HashMap<String, usize>>,
}

impl ChatClient for Scripted {
    fn complete(&self, req: &ChatRequest) -> Result<String, ClientError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let mut seen = self.per_policy.lock().unwrap();
        let n = seen.entry(req.system.clone()).or_default();
        *n += 1;
        Ok(match *n {
            1 => r#"Sure. {"probe": "P3", "strategy": "edge", "params": {"r": 50, "alpha": 0.4}}"#.into(),
            2 => r#"{"probe": "P99", "strategy": "between"}"#.into(),
            _ => "I would rather not answer in JSON".into(),
        })
    }
}

fn pool() -> (Vec<PoolPage>, MockAdapter) {
    let pages: Vec<_> = ["pg_a", "pg_b", "pg_c"].iter().enumerate().map(|(i, id)| generate_page(&PageSpec::standard(*id, 70 + i as u64)).unwrap()).collect();
    let adapter = MockAdapter::new(pages.iter().map(|p| p.sidecar.clone()), MockParserRules::default());
    let pool = pages.into_iter().map(|p| PoolPage { image_id: p.page_id().to_string(), annotations: Some(p.annotations()), image: p.image }).collect();
    (pool, adapter)
}

#[test]
fn prompted_policy_decisions_fallbacks_and_skips() {
    let (pool, adapter) = pool();
    let p2 = Phase2Options { policies: vec![PolicyKind::LlmNeutral], ..Default::default() };
    let client = Scripted::default();
    let out = run_phase2(&pool, &adapter, &CampaignOptions::default(), &p2, Some(&client), &HashSet::new()).unwrap();

    assert_eq!(out.records.len(), 2);
    let a = out.runs.iter().find(|r| r.image_id == "pg_a").unwrap();
    let cfg = a.config.as_ref().unwrap();
    assert_eq!((cfg.probe_id, cfg.placement, cfg.params.r, cfg.params.alpha), (ProbeId::P3, Placement::Anchor, Some(50.0), Some(0.4)));
    assert!(!a.probe_fallback && !a.strategy_fallback);

    let b = out.runs.iter().find(|r| r.image_id == "pg_b").unwrap();
    assert!(b.probe_fallback);
    assert_eq!(b.config.as_ref().unwrap().probe_id, ProbeId::P5);
    assert_eq!(b.config_id, "P5.b");

    assert_eq!(out.skips.len(), 1);
    assert_eq!((out.skips[0].image_id.as_str(), out.skips[0].config_id.as_str()), ("pg_c", "llm-neutral"));
    assert!(out.skips[0].reason.contains("3 attempts"), "{}", out.skips[0].reason);
    // one call each for pg_a and pg_b, three for pg_c
    assert_eq!(client.calls.load(Ordering::SeqCst), 5);
}

#[test]
fn missing_client_skips_prompted_policies() {
    let (pool, adapter) = pool();
    let p2 = Phase2Options { policies: vec![PolicyKind::Rule, PolicyKind::Vlm], ..Default::default() };
    let out = run_phase2(&pool, &adapter, &CampaignOptions::default(), &p2, None, &HashSet::new()).unwrap();
    assert_eq!(out.records.len(), 3);
    assert_eq!(out.skips.len(), 3);
    assert!(out.skips.iter().all(|s| s.config_id == "vlm"));
}

#[test]
fn recorded_transcripts_replay_offline() {
    let (pool, adapter) = pool();
    let dir = tempfile::tempdir().unwrap();
    let p2 = Phase2Options { policies: vec![PolicyKind::LlmBiased, PolicyKind::Vlm], ..Default::default() };
    let recording = ReplayClient { store: TranscriptStore::new(dir.path()), live: Some(Box::new(Scripted::default())) };
    let live = run_phase2(&pool, &adapter, &CampaignOptions::default(), &p2, Some(&recording), &HashSet::new()).unwrap();
    assert_eq!(live.records.len(), 4);
    // 2 policies x (1 + 1 + 3) calls, one transcript each
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 10);

    let offline = ReplayClient::replay_only(TranscriptStore::new(dir.path()));
    let replayed = run_phase2(&pool, &adapter, &CampaignOptions::default(), &p2, Some(&offline), &HashSet::new()).unwrap();
    assert_eq!(live.records, replayed.records);
    assert_eq!(live.skips, replayed.skips);

    // an unrecorded model misses in replay-only mode
    let other = Phase2Options { model: "other".into(), policies: vec![PolicyKind::LlmBiased], ..Default::default() };
    let missed = run_phase2(&pool, &adapter, &CampaignOptions::default(), &other, Some(&offline), &HashSet::new()).unwrap();
    assert!(missed.records.is_empty());
    assert!(missed.skips.iter().all(|s| s.reason.contains("no recorded response")));
}

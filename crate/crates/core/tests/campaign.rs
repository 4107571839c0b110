use std::collections::HashSet;
use std::time::Instant;

use prosa_core::campaign::{
    completed_pairs, load_pool, matrix, run_phase1, run_phase2, CampaignOptions, MatrixKind, MockAdapter, ParseJob,
    ParserAdapter, Phase2Options, PoolPage,
};
use prosa_core::document::ParseOutput;
use prosa_core::policy::PolicyKind;
use prosa_core::record::write_records;
use prosa_core::synthetic::{generate_page, MockParserRules, PageSpec};

fn pool(n: usize) -> (Vec<PoolPage>, MockAdapter) {
    let pages: Vec<_> = (0..n).map(|i| generate_page(&PageSpec::standard(format!("syn_{i:03}"), 1000 + i as u64)).unwrap()).collect();
    let adapter = MockAdapter::new(pages.iter().map(|p| p.sidecar.clone()), MockParserRules::default());
    let pool = pages
        .into_iter()
        .map(|p| PoolPage { image_id: p.page_id().to_string(), annotations: Some(p.annotations()), image: p.image })
        .collect();
    (pool, adapter)
}

fn csv_bytes(records: &[prosa_core::record::CampaignRecord]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_records(&mut buf, records, false).unwrap();
    buf
}

#[test]
fn two_pages_full_matrix() {
    let (pool, adapter) = pool(2);
    let configs = matrix(MatrixKind::Phase1);
    let t = Instant::now();
    let out = run_phase1(&pool, &adapter, &configs, &CampaignOptions::default(), &HashSet::new()).unwrap();
    eprintln!("2 pages x 29 configs: {:?}", t.elapsed());
    assert_eq!(out.records.len(), 58, "skips: {:?}", out.skips);
    assert!(out.skips.is_empty() && out.excluded.is_empty());
    // ordered by config, then page
    assert_eq!(out.records[0].config_id, "A01");
    assert_eq!(out.records[1].config_id, "A01");
    assert_eq!(out.records[57].config_id, "NT07");
    assert!(out.records.iter().all(|r| r.n_orig_spans == 8));

    let again = run_phase1(&pool, &adapter, &configs, &CampaignOptions::default(), &HashSet::new()).unwrap();
    assert_eq!(csv_bytes(&out.records), csv_bytes(&again.records));
}

struct FlakyAdapter {
    inner: MockAdapter,
    fail_job: String,
}

impl ParserAdapter for FlakyAdapter {
    fn name(&self) -> &str {
        "flaky"
    }

    fn parse_batch(&self, jobs: &[ParseJob<'_>]) -> Vec<Result<ParseOutput, String>> {
        jobs.iter()
            .map(|j| if j.job_id == self.fail_job { Err("parser crashed".into()) } else { self.inner.parse_one(&j.image_id, j.mask) })
            .collect()
    }
}

#[test]
fn adapter_crash_becomes_a_skip_and_resume_fills_it() {
    let (pool, inner) = pool(2);
    let adapter = FlakyAdapter { inner, fail_job: "syn_001__A09".into() };
    let configs = matrix(MatrixKind::Phase1);
    let out = run_phase1(&pool, &adapter, &configs, &CampaignOptions::default(), &HashSet::new()).unwrap();
    assert_eq!(out.records.len(), 57);
    assert_eq!(out.skips.len(), 1);
    assert_eq!((out.skips[0].image_id.as_str(), out.skips[0].config_id.as_str()), ("syn_001", "A09"));
    assert_eq!(out.skips[0].reason, "parser crashed");

    // rerun only the missing pair
    let done = completed_pairs(&out.records);
    let rest = run_phase1(&pool, &adapter.inner, &configs, &CampaignOptions::default(), &done).unwrap();
    assert_eq!(rest.records.len(), 1);
    assert_eq!(rest.records[0].config_id, "A09");
}

#[test]
fn short_pages_are_excluded() {
    let page = generate_page(&PageSpec { blocks: 3, ..PageSpec::standard("tiny", 4) }).unwrap();
    let adapter = MockAdapter::new([page.sidecar.clone()], MockParserRules::default());
    let pool = vec![PoolPage { image_id: "tiny".into(), annotations: None, image: page.image }];
    let out = run_phase1(&pool, &adapter, &matrix(MatrixKind::A), &CampaignOptions::default(), &HashSet::new()).unwrap();
    assert!(out.records.is_empty());
    assert_eq!(out.excluded.len(), 1);
}

#[test]
fn phase2_random_and_rule() {
    let (pool, adapter) = pool(3);
    let p2 = Phase2Options { policies: vec![PolicyKind::Random, PolicyKind::Rule], ..Default::default() };
    let out = run_phase2(&pool, &adapter, &CampaignOptions::default(), &p2, None, &HashSet::new()).unwrap();
    assert_eq!(out.records.len() + out.skips.len(), 6);
    assert_eq!(out.records.len(), 6, "skips: {:?}", out.skips);
    assert!(out.records.iter().all(|r| r.policy.is_some()));
    // the rule policy bridges gaps on these multi-block pages
    assert!(out.runs.iter().filter(|r| r.policy == Some(PolicyKind::Rule)).all(|r| r.config_id == "P5.b"));
    let again = run_phase2(&pool, &adapter, &CampaignOptions::default(), &p2, None, &HashSet::new()).unwrap();
    assert_eq!(out.records, again.records);
}

#[test]
fn pool_loads_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    for i in 0..2 {
        generate_page(&PageSpec::standard(format!("d{i}"), i)).unwrap().save(dir.path()).unwrap();
    }
    let pool = load_pool(dir.path()).unwrap();
    assert_eq!(pool.iter().map(|p| p.image_id.as_str()).collect::<Vec<_>>(), ["d0", "d1"]);
    assert!(pool.iter().all(|p| p.annotations.as_ref().is_some_and(|a| a.elements.len() == 8)));
}

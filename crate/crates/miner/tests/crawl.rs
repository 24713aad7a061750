mod common;

use std::collections::BTreeSet;
use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::Duration;

use coderec_core::dataset::{load_dataset, Behavior};
use coderec_miner::{
    crawl, discover_repos, harvest_repo, hash_tree, Client, CrawlCache, HarvestOptions,
    MinerConfig, MinerError, RepoDescriptor, RepoFilter, CRAWL_FILE, WARNINGS_FILE,
};
use common::{commit, fixture, FakeGithub, FakeRepo, FakeTransport, NoNetwork, RecordingSleeper};

fn config() -> MinerConfig {
    MinerConfig {
        filter: RepoFilter {
            topics: vec!["database".into(), "graphql".into()],
            ..RepoFilter::default()
        },
        seed: 7,
        workers: 3,
        harvest: HarvestOptions::default(),
    }
}

fn live(github: &Arc<FakeGithub>, cache: &std::path::Path) -> Client {
    Client::new(FakeTransport::new(github)).with_cache(CrawlCache::open(cache).unwrap())
}

fn names(repos: &[RepoDescriptor]) -> Vec<&str> {
    repos.iter().map(|r| r.full_name.as_str()).collect()
}

#[test]
fn discovery_applies_every_threshold() {
    let github = Arc::new(fixture());
    let client = Client::new(FakeTransport::new(&github));
    let repos = discover_repos(&client, &config().filter, 7).unwrap();
    // tiny: 100 stars; solo: one human contributor; young: 31 days of history.
    assert_eq!(names(&repos), ["acme/db", "beta/graph"]);
    let db = &repos[0];
    assert_eq!(db.contributors, 3);
    assert_eq!(db.files, 4);
    assert_eq!(repos[1].files, 3);
    assert!(repos.iter().all(|r| r.stars >= 250));
}

#[test]
fn empty_topic_list_is_a_config_error() {
    let client = Client::new(NoNetwork);
    let err = discover_repos(&client, &RepoFilter::default(), 0).unwrap_err();
    assert!(err.is_config(), "{err}");
}

#[test]
fn warm_cache_rediscovers_without_requests() {
    let dir = tempfile::tempdir().unwrap();
    let github = Arc::new(fixture());
    let cold = discover_repos(&live(&github, dir.path()), &config().filter, 3).unwrap();

    let warm_client = Client::new(NoNetwork).with_cache(CrawlCache::open(dir.path()).unwrap());
    let warm = discover_repos(&warm_client, &config().filter, 3).unwrap();
    assert_eq!(cold, warm);
    assert_eq!(warm_client.network_calls(), 0);
}

#[test]
fn sampling_is_seeded() {
    let github = Arc::new(fixture());
    let client = Client::new(FakeTransport::new(&github));
    let filter = RepoFilter {
        sample_size: 1,
        ..config().filter
    };
    let runs: Vec<Vec<RepoDescriptor>> = (0..3)
        .map(|_| discover_repos(&client, &filter, 11).unwrap())
        .collect();
    assert_eq!(runs[0].len(), 1);
    assert!(runs.windows(2).all(|w| w[0] == w[1]));
}

fn descriptor(full_name: &str) -> RepoDescriptor {
    RepoDescriptor {
        id: 1,
        full_name: full_name.into(),
        owner: full_name.split('/').next().unwrap().into(),
        stars: 1000,
        created_at: 1_527_811_200,
        topics: vec![],
        default_branch: "main".into(),
        contributors: 3,
        files: 2,
        history: (0, 0),
    }
}

#[test]
fn one_commit_touching_two_files_gives_two_records_at_one_time() {
    let mut repo = FakeRepo::new("one/commit", 1, 1000, "x");
    repo.files = vec![("a.rs".into(), "a".into()), ("src/b.rs".into(), "b".into())];
    repo.commits = vec![commit(
        "s",
        Some(("zed", 8)),
        "2020-01-01T00:00:00Z",
        &["a.rs", "src/b.rs"],
    )];
    let github = Arc::new(FakeGithub::new(vec![repo]));
    let client = Client::new(FakeTransport::new(&github));
    let h = harvest_repo(
        &client,
        &descriptor("one/commit"),
        &HarvestOptions::default(),
    )
    .unwrap();
    assert_eq!(h.touches.len(), 2);
    assert_eq!(h.touches[0].timestamp, h.touches[1].timestamp);
    assert_eq!(h.touches[0].timestamp, 1_577_836_800);
    let paths: Vec<&str> = h.touches.iter().map(|t| t.path.as_str()).collect();
    assert_eq!(paths, ["a.rs", "src/b.rs"]);
    assert!(h
        .touches
        .iter()
        .all(|t| t.author.login == "zed" && t.author.id == 8));
}

#[test]
fn every_stargazer_becomes_one_star_record_across_pages() {
    let mut repo = FakeRepo::new("big/stars", 1, 5000, "x");
    repo.stargazers = (0..250)
        .map(|i| {
            (
                format!("fan{i:03}"),
                1000 + i,
                format!("2020-02-{:02}T00:00:00Z", 1 + i % 28),
            )
        })
        .collect();
    let github = Arc::new(FakeGithub::new(vec![repo]));
    let client = Client::new(FakeTransport::new(&github));
    let h = harvest_repo(
        &client,
        &descriptor("big/stars"),
        &HarvestOptions::default(),
    )
    .unwrap();
    let stars: Vec<_> = h
        .events
        .iter()
        .filter(|e| e.behavior == Behavior::Star)
        .collect();
    assert_eq!(stars.len(), 250);
    let people: BTreeSet<u64> = stars.iter().map(|e| e.person.id).collect();
    assert_eq!(people.len(), 250);
}

#[test]
fn crawl_writes_a_loadable_dataset_with_expected_records() {
    let (cache, out) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let github = Arc::new(fixture());
    let summary = crawl(&live(&github, cache.path()), &config(), out.path(), &[]).unwrap();

    // Loading checks that every interaction target exists.
    let ds = load_dataset(out.path()).unwrap();
    assert_eq!(summary.repos, 2);
    assert_eq!(ds.repos.len(), 2);
    assert_eq!(ds.files.len(), 7);
    let logins: Vec<&str> = ds.users.iter().map(|u| u.login.as_str()).collect();
    assert_eq!(logins, ["alice", "bob", "carol", "dave", "erin", "frank"]);
    assert!(!logins.iter().any(|l| l.ends_with("[bot]")));

    let count = |b: Behavior| ds.records.iter().filter(|r| r.behavior == b).count();
    assert_eq!(count(Behavior::Commit), 8);
    assert_eq!(count(Behavior::Star), 4);
    assert_eq!(count(Behavior::Watch), 1);
    assert_eq!(count(Behavior::Fork), 1);
    assert_eq!(summary.records, 14);
    assert_eq!(summary.bots_dropped, 1);

    let watch = ds
        .records
        .iter()
        .find(|r| r.behavior == Behavior::Watch)
        .unwrap();
    assert_eq!(watch.timestamp, ds.repos[watch.target].created_at);

    // The truncated tree of beta/graph was walked level by level.
    let graph = ds
        .repos
        .iter()
        .position(|r| r.raw_id == "beta/graph")
        .unwrap();
    let mut graph_files: Vec<&str> = ds
        .files
        .iter()
        .filter(|f| f.repo == graph)
        .map(|f| f.raw_id.as_str())
        .collect();
    graph_files.sort();
    assert_eq!(
        graph_files,
        [
            "beta/graph:index.js",
            "beta/graph:lib/a.js",
            "beta/graph:lib/b/c.js"
        ]
    );
    assert!(ds.dirs.iter().any(|d| d.raw_id == "beta/graph:lib/b/"));

    let spaced = ds
        .files
        .iter()
        .find(|f| f.raw_id == "acme/db:docs/read me.md")
        .unwrap();
    assert_eq!(spaced.name, "read me.md");
    assert_eq!(spaced.content.as_deref(), Some("spaces in names\n"));

    assert!(out.path().join(CRAWL_FILE).is_file());
}

#[test]
fn skipped_items_land_in_the_warning_ledger() {
    let (cache, out) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let github = Arc::new(fixture());
    crawl(&live(&github, cache.path()), &config(), out.path(), &[]).unwrap();
    let ledger = std::fs::read_to_string(out.path().join(WARNINGS_FILE)).unwrap();
    let rows: Vec<serde_json::Value> = ledger
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let has = |kind: &str, needle: &str| {
        rows.iter()
            .any(|w| w["kind"] == kind && w["detail"].as_str().unwrap().contains(needle))
    };
    assert!(has("missing_file", "old.rs"), "{ledger}");
    assert!(has("unlinked_author", "c4"), "{ledger}");
}

#[test]
fn replay_from_cache_reproduces_the_output_bytes() {
    let cache = tempfile::tempdir().unwrap();
    let (first, second) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let github = Arc::new(fixture());
    crawl(&live(&github, cache.path()), &config(), first.path(), &[]).unwrap();

    let replay = Client::new(NoNetwork)
        .with_cache(CrawlCache::open(cache.path()).unwrap())
        .offline(true);
    let summary = crawl(&replay, &config(), second.path(), &[]).unwrap();
    assert_eq!(summary.network_calls, 0);
    assert_eq!(
        hash_tree(first.path(), &[]).unwrap(),
        hash_tree(second.path(), &[]).unwrap()
    );
}

#[test]
fn rerun_over_the_same_output_writes_nothing() {
    let out = tempfile::tempdir().unwrap();
    let cache = out.path().join(".crawl-cache");
    let keep = [".crawl-cache"];
    let github = Arc::new(fixture());
    let first = crawl(&live(&github, &cache), &config(), out.path(), &keep).unwrap();
    assert!(first.written > 0);
    let before = hash_tree(out.path(), &keep).unwrap();
    let modified = |p: &str| {
        std::fs::metadata(out.path().join(p))
            .unwrap()
            .modified()
            .unwrap()
    };
    let stamp = modified("interactions.jsonl");

    let again = Client::new(NoNetwork).with_cache(CrawlCache::open(&cache).unwrap());
    let second = crawl(&again, &config(), out.path(), &keep).unwrap();
    assert_eq!(second.written, 0);
    assert_eq!(second.network_calls, 0);
    assert_eq!(second.unchanged, before.len());
    assert_eq!(hash_tree(out.path(), &keep).unwrap(), before);
    assert_eq!(modified("interactions.jsonl"), stamp);
}

#[test]
fn offline_cold_cache_fails_without_requests() {
    let (cache, out) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let client = Client::new(NoNetwork)
        .with_cache(CrawlCache::open(cache.path()).unwrap())
        .offline(true);
    let err = crawl(&client, &config(), out.path(), &[]).unwrap_err();
    assert!(matches!(err, MinerError::Offline(_)), "{err}");
}

#[test]
fn rate_limits_are_waited_out() {
    let (c1, c2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (o1, o2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let calm = Arc::new(fixture());
    crawl(&live(&calm, c1.path()), &config(), o1.path(), &[]).unwrap();

    let limited = Arc::new(fixture());
    limited.rate_limit_next.store(2, Ordering::SeqCst);
    let sleeps = RecordingSleeper::default();
    let client = live(&limited, c2.path()).with_sleeper(sleeps.clone());
    crawl(&client, &config(), o2.path(), &[]).unwrap();

    assert_eq!(*sleeps.0.lock().unwrap(), [Duration::from_secs(1); 2]);
    assert_eq!(
        limited.calls.load(Ordering::SeqCst),
        calm.calls.load(Ordering::SeqCst) + 2
    );
    assert_eq!(
        hash_tree(o1.path(), &[]).unwrap(),
        hash_tree(o2.path(), &[]).unwrap()
    );
}

#[test]
fn bad_credentials_stop_the_crawl() {
    let out = tempfile::tempdir().unwrap();
    let mut github = fixture();
    github.token = Some("secret".into());
    let github = Arc::new(github);
    let transport = FakeTransport {
        github: github.clone(),
        token: Some("wrong".into()),
    };
    let err = crawl(&Client::new(transport), &config(), out.path(), &[]).unwrap_err();
    assert!(matches!(err, MinerError::Auth { status: 401, .. }), "{err}");
    assert!(err.is_config());
    assert_eq!(github.calls.load(Ordering::SeqCst), 1);
    assert!(std::fs::read_dir(out.path()).unwrap().next().is_none());
}

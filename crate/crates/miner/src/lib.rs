//! Builds datasets from a GitHub-compatible REST API: topic search with
//! star, contributor and history thresholds, a stratified seeded sample,
//! then per-repository trees, per-file commit authorship and
//! star/watch/fork events. Raw responses go through a content-addressed
//! cache, so a warm rerun makes no requests and rewrites nothing.

mod api;
mod assemble;
mod cache;
mod client;
mod discover;
mod error;
mod github;
mod harvest;
mod output;

pub use api::{HttpTransport, Request, Response, Transport, DEFAULT_ACCEPT, STAR_ACCEPT};
pub use assemble::build_dataset;
pub use cache::{CachedResponse, CrawlCache};
pub use client::{BackoffPolicy, Client, Sleeper, ThreadSleeper};
pub use discover::{discover_repos, stratified_sample, RepoDescriptor, RepoFilter};
pub use error::{MinerError, Result};
pub use harvest::{
    fetch_tree, harvest_repo, list_commits, EntryKind, FileTouch, HarvestOptions, Person,
    ProjectEvent, RepoHarvest, TreeEntry, Warning,
};
pub use output::{hash_tree, write_output, WriteReport};

use std::path::Path;

use log::info;
use rayon::prelude::*;
use serde::Serialize;

/// Name of the per-run skip ledger inside the output directory.
pub const WARNINGS_FILE: &str = "warnings.jsonl";
/// Name of the crawl description inside the output directory.
pub const CRAWL_FILE: &str = "crawl.json";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MinerConfig {
    pub filter: RepoFilter,
    pub seed: u64,
    pub workers: usize,
    pub harvest: HarvestOptions,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            filter: RepoFilter::default(),
            seed: 0,
            workers: 4,
            harvest: HarvestOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CrawlSummary {
    pub repos: usize,
    pub users: usize,
    pub files: usize,
    pub records: usize,
    pub warnings: usize,
    pub bots_dropped: usize,
    pub network_calls: usize,
    pub written: usize,
    pub unchanged: usize,
}

#[derive(Serialize)]
struct CrawlDescription<'a> {
    seed: u64,
    filter: &'a RepoFilter,
    harvest: &'a HarvestOptions,
    repos: Vec<&'a RepoDescriptor>,
}

/// Discovers, harvests and writes one dataset into `out`. Paths in `keep`
/// (relative to `out`, e.g. a cache living there) are never touched.
pub fn crawl(
    client: &Client,
    cfg: &MinerConfig,
    out: &Path,
    keep: &[&str],
) -> Result<CrawlSummary> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| MinerError::Config(format!("worker pool: {e}")))?;
    let harvests: Vec<RepoHarvest> = pool.install(|| -> Result<Vec<RepoHarvest>> {
        let repos = discover_repos(client, &cfg.filter, cfg.seed)?;
        info!("harvesting {} repositories", repos.len());
        repos
            .par_iter()
            .map(|r| harvest_repo(client, r, &cfg.harvest))
            .collect()
    })?;

    let (dataset, mut warnings) = build_dataset(&harvests);
    warnings.extend(harvests.iter().flat_map(|h| h.warnings.iter().cloned()));
    warnings.sort();
    let mut ledger = Vec::new();
    for w in &warnings {
        serde_json::to_writer(&mut ledger, w).expect("warning serialises");
        ledger.push(b'\n');
    }
    let description = CrawlDescription {
        seed: cfg.seed,
        filter: &cfg.filter,
        harvest: &cfg.harvest,
        repos: harvests.iter().map(|h| &h.repo).collect(),
    };
    let mut crawl_json = serde_json::to_vec_pretty(&description).expect("description serialises");
    crawl_json.push(b'\n');
    let report = write_output(
        out,
        &dataset,
        &[(WARNINGS_FILE, ledger), (CRAWL_FILE, crawl_json)],
        keep,
    )?;
    Ok(CrawlSummary {
        repos: dataset.repos.len(),
        users: dataset.users.len(),
        files: dataset.files.len(),
        records: dataset.records.len(),
        warnings: warnings.len(),
        bots_dropped: harvests.iter().map(|h| h.bots_dropped).sum(),
        network_calls: client.network_calls(),
        written: report.written.len(),
        unchanged: report.unchanged,
    })
}

/// Topics from a text file: separated by commas or whitespace, `#` starts a
/// comment, duplicates dropped, order kept.
pub fn parse_topics(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("");
        for t in line.split(|c: char| c == ',' || c.is_whitespace()) {
            let t = t.trim().to_ascii_lowercase();
            if !t.is_empty() && !out.contains(&t) {
                out.push(t);
            }
        }
    }
    out
}

use std::collections::BTreeMap;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::api::Request;
use crate::client::Client;
use crate::error::{MinerError, Result};
use crate::github::{unix_seconds, Account, SearchPage, SearchRepo};
use crate::harvest::{fetch_tree, list_commits, EntryKind};

/// The search API serves at most this many results per query.
const SEARCH_CAP: usize = 1000;
const PER_PAGE: usize = 100;
const DAY: i64 = 86_400;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoFilter {
    pub min_stars: u64,
    pub min_contributors: usize,
    pub min_history_months: u32,
    pub topics: Vec<String>,
    pub sample_size: usize,
}

impl Default for RepoFilter {
    fn default() -> Self {
        RepoFilter {
            min_stars: 250,
            min_contributors: 3,
            min_history_months: 3,
            topics: Vec::new(),
            sample_size: 300,
        }
    }
}

impl RepoFilter {
    /// Months count as 30 days, so 3 months is 90 days.
    pub fn min_history_secs(&self) -> i64 {
        i64::from(self.min_history_months) * 30 * DAY
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoDescriptor {
    pub id: u64,
    /// `owner/name`.
    pub full_name: String,
    pub owner: String,
    pub stars: u64,
    pub created_at: i64,
    pub topics: Vec<String>,
    pub default_branch: String,
    /// Human contributors.
    pub contributors: usize,
    pub files: usize,
    /// First and last commit timestamps.
    pub history: (i64, i64),
}

/// Searches every topic, keeps repositories that pass all thresholds and
/// returns a seeded sample of `sample_size` of them, stratified by star and
/// file count, sorted by name.
pub fn discover_repos(
    client: &Client,
    filter: &RepoFilter,
    seed: u64,
) -> Result<Vec<RepoDescriptor>> {
    if filter.topics.is_empty() {
        return Err(MinerError::Config("no topics to search".into()));
    }
    let mut pool: BTreeMap<String, SearchRepo> = BTreeMap::new();
    for topic in &filter.topics {
        let req = Request::new("/search/repositories")
            .param("q", format!("topic:{topic} stars:>={}", filter.min_stars))
            .param("sort", "stars")
            .param("order", "desc");
        let mut found = Vec::new();
        for page in 1..=SEARCH_CAP / PER_PAGE {
            let r = req.clone().param("per_page", PER_PAGE).param("page", page);
            let Some(body) = client.json::<SearchPage>(&r)? else {
                break;
            };
            let n = body.items.len();
            found.extend(body.items);
            if n < PER_PAGE {
                break;
            }
        }
        info!("topic {topic}: {} repositories", found.len());
        for repo in found {
            pool.entry(repo.full_name.clone()).or_insert(repo);
        }
    }
    let candidates: Vec<SearchRepo> = pool
        .into_values()
        .filter(|r| r.stargazers_count >= filter.min_stars)
        .collect();
    let checked: Vec<Option<RepoDescriptor>> = candidates
        .par_iter()
        .map(|r| qualify(client, filter, r))
        .collect::<Result<_>>()?;
    let qualified: Vec<RepoDescriptor> = checked.into_iter().flatten().collect();
    info!(
        "{} of {} candidates pass the thresholds",
        qualified.len(),
        candidates.len()
    );
    Ok(stratified_sample(qualified, filter.sample_size, seed))
}

/// Contributor, history and tree checks for one search hit.
fn qualify(
    client: &Client,
    filter: &RepoFilter,
    repo: &SearchRepo,
) -> Result<Option<RepoDescriptor>> {
    let full = &repo.full_name;
    let people: Vec<Account> = client.paged(
        &Request::new(format!("/repos/{full}/contributors")),
        PER_PAGE,
    )?;
    let contributors = people.iter().filter(|a| !a.is_bot()).count();
    if contributors < filter.min_contributors {
        return Ok(None);
    }
    let commits = list_commits(client, full)?;
    let mut stamps = Vec::with_capacity(commits.len());
    for c in &commits {
        if let Some(sig) = &c.commit.author {
            stamps.push(unix_seconds(&sig.date, full)?);
        }
    }
    let (Some(&first), Some(&last)) = (stamps.iter().min(), stamps.iter().max()) else {
        return Ok(None);
    };
    if last - first < filter.min_history_secs() {
        return Ok(None);
    }
    let tree = fetch_tree(client, full, &repo.default_branch)?;
    let files = tree.iter().filter(|e| e.kind == EntryKind::File).count();
    if files == 0 {
        return Ok(None);
    }
    Ok(Some(RepoDescriptor {
        id: repo.id,
        full_name: full.clone(),
        owner: repo.owner.login.clone(),
        stars: repo.stargazers_count,
        created_at: unix_seconds(&repo.created_at, full)?,
        topics: repo.topics.clone(),
        default_branch: repo.default_branch.clone(),
        contributors,
        files,
        history: (first, last),
    }))
}

/// Tercile of each value's rank, ties broken by position.
fn terciles(values: &[u64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by_key(|&i| (values[i], i));
    let mut out = vec![0; values.len()];
    for (rank, i) in order.into_iter().enumerate() {
        out[i] = rank * 3 / values.len();
    }
    out
}

/// Seeded sample of `n` repositories spread over the nine strata of
/// (star tercile, file-count tercile) in proportion to their sizes, with
/// largest-remainder rounding. The result is sorted by name.
pub fn stratified_sample(
    mut repos: Vec<RepoDescriptor>,
    n: usize,
    seed: u64,
) -> Vec<RepoDescriptor> {
    repos.sort_by(|a, b| a.full_name.cmp(&b.full_name));
    if repos.len() <= n {
        return repos;
    }
    let stars = terciles(&repos.iter().map(|r| r.stars).collect::<Vec<_>>());
    let files = terciles(&repos.iter().map(|r| r.files as u64).collect::<Vec<_>>());
    let mut strata: BTreeMap<(usize, usize), Vec<RepoDescriptor>> = BTreeMap::new();
    for (i, r) in repos.iter().enumerate() {
        strata
            .entry((stars[i], files[i]))
            .or_default()
            .push(r.clone());
    }
    let total = repos.len();
    let mut quota: Vec<(usize, usize, (usize, usize))> = strata
        .iter()
        .map(|(&k, v)| {
            let exact = n * v.len();
            (exact / total, exact % total, k)
        })
        .collect();
    let mut left = n - quota.iter().map(|q| q.0).sum::<usize>();
    let mut by_remainder: Vec<usize> = (0..quota.len()).collect();
    by_remainder.sort_by(|&a, &b| {
        quota[b]
            .1
            .cmp(&quota[a].1)
            .then(quota[a].2.cmp(&quota[b].2))
    });
    for i in by_remainder {
        if left == 0 {
            break;
        }
        quota[i].0 += 1;
        left -= 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for (take, _, key) in quota {
        let members = strata.get_mut(&key).expect("stratum");
        members.shuffle(&mut rng);
        out.extend(members.drain(..take));
    }
    out.sort_by(|a, b| a.full_name.cmp(&b.full_name));
    out
}

use std::collections::BTreeSet;

use crate::config::Protocol;
use crate::dataset::{Behavior, Dataset, DatasetSplit, InteractionRecord};

/// Highest train commit count that still makes a user cold.
pub const COLD_START_MAX_COMMITS: usize = 2;

/// One user's ranking problem.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankingTask {
    pub user: usize,
    /// Ascending file ids.
    pub candidates: Vec<usize>,
    pub relevant: BTreeSet<usize>,
}

/// Which held-out window supplies the relevant items.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    Validation,
    Test,
}

/// Per-user state the protocols need, derived from a dataset and its split.
#[derive(Clone, Debug)]
pub struct EvalContext {
    pub users: usize,
    pub files: usize,
    pub file_repo: Vec<usize>,
    pub repo_files: Vec<Vec<usize>>,
    pub train_positives: Vec<BTreeSet<usize>>,
    pub interacted: Vec<BTreeSet<usize>>,
    pub train_commits: Vec<usize>,
    pub val_positives: Vec<BTreeSet<usize>>,
    pub test_positives: Vec<BTreeSet<usize>>,
    /// Users with a train and a test commit.
    pub retained: Vec<usize>,
}

fn commit_sets(records: &[InteractionRecord], users: usize) -> Vec<BTreeSet<usize>> {
    let mut out = vec![BTreeSet::new(); users];
    for r in records.iter().filter(|r| r.behavior == Behavior::Commit) {
        out[r.user].insert(r.target);
    }
    out
}

impl EvalContext {
    pub fn new(dataset: &Dataset, split: &DatasetSplit) -> Self {
        let dims = dataset.dims();
        let file_repo = dataset.file_repo();
        EvalContext {
            users: dims.users,
            files: dims.files,
            interacted: split.interacted_repos(&file_repo, dims.users),
            file_repo,
            repo_files: dataset.repo_files(),
            train_positives: commit_sets(&split.train, dims.users),
            train_commits: split.train_commit_counts(dims.users),
            val_positives: commit_sets(&split.val, dims.users),
            test_positives: commit_sets(&split.test, dims.users),
            retained: split.retained_users(),
        }
    }

    /// Files of the repositories the user touched in train, minus train
    /// positives.
    pub fn intra_candidates(&self, user: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.interacted[user]
            .iter()
            .flat_map(|&r| self.repo_files[r].iter().copied())
            .filter(|f| !self.train_positives[user].contains(f))
            .collect();
        out.sort_unstable();
        out
    }

    /// Files of every repository the user never touched in train.
    pub fn cross_candidates(&self, user: usize) -> Vec<usize> {
        (0..self.files)
            .filter(|&f| !self.interacted[user].contains(&self.file_repo[f]))
            .collect()
    }

    /// Retained users with at most [`COLD_START_MAX_COMMITS`] train commits.
    pub fn cold_users(&self) -> Vec<usize> {
        self.retained
            .iter()
            .copied()
            .filter(|&u| self.train_commits[u] <= COLD_START_MAX_COMMITS)
            .collect()
    }

    /// Tasks of `protocol` against `target`. Users whose candidate set is
    /// empty come back in the second list, users whose relevant set is empty
    /// after candidate filtering in the third.
    pub fn tasks(&self, protocol: Protocol, target: Target) -> TaskSet {
        let held_out = match target {
            Target::Validation => &self.val_positives,
            Target::Test => &self.test_positives,
        };
        let cohort: Vec<usize> = match (protocol, target) {
            (Protocol::Cold, _) => self.cold_users(),
            (_, Target::Test) => self.retained.clone(),
            (_, Target::Validation) => (0..self.users)
                .filter(|&u| !self.train_positives[u].is_empty())
                .collect(),
        };
        let mut set = TaskSet {
            cohort: cohort.len(),
            ..Default::default()
        };
        for u in cohort {
            let candidates = match protocol {
                Protocol::Intra | Protocol::Cold => self.intra_candidates(u),
                Protocol::Cross => self.cross_candidates(u),
            };
            if candidates.is_empty() {
                set.no_candidates.push(u);
                continue;
            }
            let relevant: BTreeSet<usize> = held_out[u]
                .iter()
                .copied()
                .filter(|f| candidates.binary_search(f).is_ok())
                .collect();
            if relevant.is_empty() {
                set.no_relevant.push(u);
                continue;
            }
            set.tasks.push(RankingTask {
                user: u,
                candidates,
                relevant,
            });
        }
        set
    }

    /// Every file ranked for each user with the train positives relevant.
    pub fn train_tasks(&self) -> Vec<RankingTask> {
        let all: Vec<usize> = (0..self.files).collect();
        (0..self.users)
            .filter(|&u| !self.train_positives[u].is_empty())
            .map(|u| RankingTask {
                user: u,
                candidates: all.clone(),
                relevant: self.train_positives[u].clone(),
            })
            .collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TaskSet {
    pub tasks: Vec<RankingTask>,
    /// Size of the user cohort the protocol starts from.
    pub cohort: usize,
    pub no_candidates: Vec<usize>,
    pub no_relevant: Vec<usize>,
}

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Behavior, InteractionRecord};
use crate::error::{Error, Result};

/// Default train/validation boundary (Unix seconds).
pub const DEFAULT_T1: i64 = 1_550_000_000;
/// Default validation/test boundary (Unix seconds).
pub const DEFAULT_T2: i64 = 1_602_000_000;

/// Temporal split with half-open windows `[0, t1)`, `[t1, t2)`, `[t2, ∞)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<InteractionRecord>,
    pub val: Vec<InteractionRecord>,
    pub test: Vec<InteractionRecord>,
    pub boundaries: (i64, i64),
    /// Users removed for lacking a train or a test commit.
    pub dropped_users: Vec<usize>,
}

impl DatasetSplit {
    /// Users with at least one train commit and one test commit.
    pub fn retained_users(&self) -> Vec<usize> {
        self.train
            .iter()
            .filter(|r| r.behavior == Behavior::Commit)
            .map(|r| r.user)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn train_commits(&self) -> impl Iterator<Item = &InteractionRecord> {
        self.train.iter().filter(|r| r.behavior == Behavior::Commit)
    }

    /// Repositories each user touched in the train split: the repos of their
    /// committed files plus every repo they starred, watched or forked.
    pub fn interacted_repos(&self, file_repo: &[usize], users: usize) -> Vec<BTreeSet<usize>> {
        let mut out = vec![BTreeSet::new(); users];
        for r in &self.train {
            let repo = match r.behavior {
                Behavior::Commit => file_repo[r.target],
                _ => r.target,
            };
            out[r.user].insert(repo);
        }
        out
    }

    /// Raw train commit records per user (duplicates counted).
    pub fn train_commit_counts(&self, users: usize) -> Vec<usize> {
        let mut out = vec![0; users];
        for r in self.train_commits() {
            out[r.user] += 1;
        }
        out
    }
}

/// Three-way partition by timestamp, no filtering.
pub fn partition_by_time(records: &[InteractionRecord], t1: i64, t2: i64) -> Result<DatasetSplit> {
    if t1 >= t2 {
        return Err(Error::Argument(format!(
            "split boundaries must satisfy t1 < t2, got {t1} >= {t2}"
        )));
    }
    let mut split = DatasetSplit {
        boundaries: (t1, t2),
        ..Default::default()
    };
    for r in records {
        if r.timestamp < t1 {
            split.train.push(*r);
        } else if r.timestamp < t2 {
            split.val.push(*r);
        } else {
            split.test.push(*r);
        }
    }
    Ok(split)
}

/// Partitions by time, then drops every record of users lacking a train
/// commit or a test commit.
pub fn split_by_time(records: &[InteractionRecord], t1: i64, t2: i64) -> Result<DatasetSplit> {
    let mut split = partition_by_time(records, t1, t2)?;
    let commit_users = |rs: &[InteractionRecord]| -> BTreeSet<usize> {
        rs.iter()
            .filter(|r| r.behavior == Behavior::Commit)
            .map(|r| r.user)
            .collect()
    };
    let train_users = commit_users(&split.train);
    let test_users = commit_users(&split.test);
    let keep: BTreeSet<usize> = train_users.intersection(&test_users).copied().collect();

    let all_users: BTreeSet<usize> = records.iter().map(|r| r.user).collect();
    split.dropped_users = all_users.difference(&keep).copied().collect();
    for part in [&mut split.train, &mut split.val, &mut split.test] {
        part.retain(|r| keep.contains(&r.user));
    }
    Ok(split)
}

//! Canonical data model: users, files, directories, repositories, typed
//! timestamped interactions, and per-repository file trees.

mod io;
mod matrices;
mod split;
pub mod synthetic;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use io::{load_dataset, save_dataset, tree_file_name};
pub use matrices::{build_interaction_matrices, DatasetSummary, InteractionMatrices};
pub use split::{partition_by_time, split_by_time, DatasetSplit, DEFAULT_T1, DEFAULT_T2};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    User,
    File,
    Directory,
    Repo,
}

/// Dense index of an entity, contiguous from zero within its kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityId {
    pub kind: EntityKind,
    pub index: usize,
}

impl EntityId {
    pub fn user(index: usize) -> Self {
        EntityId {
            kind: EntityKind::User,
            index,
        }
    }
    pub fn file(index: usize) -> Self {
        EntityId {
            kind: EntityKind::File,
            index,
        }
    }
    pub fn repo(index: usize) -> Self {
        EntityId {
            kind: EntityKind::Repo,
            index,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Behavior {
    Commit,
    Star,
    Watch,
    Fork,
}

impl Behavior {
    pub const PROJECT_LEVEL: [Behavior; 3] = [Behavior::Star, Behavior::Watch, Behavior::Fork];

    pub fn as_str(self) -> &'static str {
        match self {
            Behavior::Commit => "commit",
            Behavior::Star => "star",
            Behavior::Watch => "watch",
            Behavior::Fork => "fork",
        }
    }

    /// Commits target files; every other behavior targets repositories.
    pub fn target_kind(self) -> EntityKind {
        match self {
            Behavior::Commit => EntityKind::File,
            _ => EntityKind::Repo,
        }
    }
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Behavior {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "commit" => Ok(Behavior::Commit),
            "star" => Ok(Behavior::Star),
            "watch" => Ok(Behavior::Watch),
            "fork" => Ok(Behavior::Fork),
            other => Err(format!("unknown behavior {other:?}")),
        }
    }
}

/// One user action. `target` is a file index for commits and a repository
/// index otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub user: usize,
    pub target: usize,
    pub behavior: Behavior,
    pub timestamp: i64,
}

impl InteractionRecord {
    pub fn commit(user: usize, file: usize, timestamp: i64) -> Self {
        InteractionRecord {
            user,
            target: file,
            behavior: Behavior::Commit,
            timestamp,
        }
    }

    pub fn project(user: usize, repo: usize, behavior: Behavior, timestamp: i64) -> Self {
        debug_assert_ne!(behavior, Behavior::Commit);
        InteractionRecord {
            user,
            target: repo,
            behavior,
            timestamp,
        }
    }

    pub fn target_entity(&self) -> EntityId {
        EntityId {
            kind: self.behavior.target_kind(),
            index: self.target,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserInfo {
    pub raw_id: String,
    pub login: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepoInfo {
    pub raw_id: String,
    pub owner: String,
    /// Unix seconds.
    pub created_at: i64,
    pub top_languages: Vec<String>,
    pub topics: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileInfo {
    pub raw_id: String,
    pub name: String,
    pub repo: usize,
    /// Source text, when the dataset ships it.
    pub content: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirInfo {
    pub raw_id: String,
    pub name: String,
    pub repo: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TreeNodeKind {
    Root,
    Dir(usize),
    File(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub kind: TreeNodeKind,
    /// Local index of the parent within the same tree; `None` only for the root.
    pub parent: Option<usize>,
}

/// One repository's hierarchy. Node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepoTree {
    pub repo: usize,
    pub nodes: Vec<TreeNode>,
}

impl RepoTree {
    pub fn files(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n.kind {
            TreeNodeKind::File(f) => Some(f),
            _ => None,
        })
    }

    pub fn dirs(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n.kind {
            TreeNodeKind::Dir(d) => Some(d),
            _ => None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub users: Vec<UserInfo>,
    pub repos: Vec<RepoInfo>,
    pub files: Vec<FileInfo>,
    pub dirs: Vec<DirInfo>,
    pub trees: Vec<RepoTree>,
    pub records: Vec<InteractionRecord>,
}

/// Sizes of the entity index spaces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub users: usize,
    pub files: usize,
    pub dirs: usize,
    pub repos: usize,
}

impl Dataset {
    pub fn dims(&self) -> Dims {
        Dims {
            users: self.users.len(),
            files: self.files.len(),
            dirs: self.dirs.len(),
            repos: self.repos.len(),
        }
    }

    /// The repository of each file (the many-to-one map from files to repos).
    pub fn file_repo(&self) -> Vec<usize> {
        self.files.iter().map(|f| f.repo).collect()
    }

    /// Files of each repository in ascending index order.
    pub fn repo_files(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.repos.len()];
        for (i, f) in self.files.iter().enumerate() {
            out[f.repo].push(i);
        }
        out
    }

    pub fn id_map(&self) -> IdMap {
        IdMap {
            users: self.users.iter().map(|u| u.raw_id.clone()).collect(),
            files: self.files.iter().map(|f| f.raw_id.clone()).collect(),
            dirs: self.dirs.iter().map(|d| d.raw_id.clone()).collect(),
            repos: self.repos.iter().map(|r| r.raw_id.clone()).collect(),
        }
    }

    pub fn split(&self, t1: i64, t2: i64) -> crate::Result<DatasetSplit> {
        split_by_time(&self.records, t1, t2)
    }

    /// Looks a user up by raw id or login.
    pub fn find_user(&self, key: &str) -> Option<usize> {
        self.users
            .iter()
            .position(|u| u.raw_id == key)
            .or_else(|| self.users.iter().position(|u| u.login == key))
    }
}

/// Raw identifier of every dense index, per kind.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdMap {
    pub users: Vec<String>,
    pub files: Vec<String>,
    pub dirs: Vec<String>,
    pub repos: Vec<String>,
}

impl IdMap {
    /// SHA-256 over the canonical JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("id map serialises");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn reverse(&self) -> BTreeMap<(EntityKind, &str), usize> {
        let mut out = BTreeMap::new();
        for (kind, ids) in [
            (EntityKind::User, &self.users),
            (EntityKind::File, &self.files),
            (EntityKind::Directory, &self.dirs),
            (EntityKind::Repo, &self.repos),
        ] {
            for (i, id) in ids.iter().enumerate() {
                out.insert((kind, id.as_str()), i);
            }
        }
        out
    }
}

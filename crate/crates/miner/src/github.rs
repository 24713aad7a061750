//! Response shapes of the endpoints the miner reads. Only the fields used
//! are declared.

use serde::Deserialize;

use crate::error::{MinerError, Result};

#[derive(Clone, Debug, Deserialize)]
pub struct SearchPage {
    #[serde(default)]
    pub items: Vec<SearchRepo>,
}

#[derive(Clone, Debug, Deserialize)]
pub struct SearchRepo {
    pub id: u64,
    pub full_name: String,
    pub owner: Account,
    pub stargazers_count: u64,
    pub created_at: String,
    #[serde(default)]
    pub topics: Vec<String>,
    #[serde(default = "default_branch")]
    pub default_branch: String,
}

fn default_branch() -> String {
    "HEAD".into()
}

#[derive(Clone, Debug, Deserialize)]
pub struct Account {
    pub login: String,
    #[serde(default)]
    pub id: u64,
    #[serde(rename = "type", default)]
    pub kind: String,
}

impl Account {
    /// App accounts, marked by type or by the `[bot]` login suffix.
    pub fn is_bot(&self) -> bool {
        self.kind == "Bot" || self.login.ends_with("[bot]")
    }
}

#[derive(Clone, Debug, Deserialize)]
pub struct CommitSummary {
    pub sha: String,
    pub author: Option<Account>,
    pub commit: CommitBody,
}

#[derive(Clone, Debug, Deserialize)]
pub struct CommitBody {
    pub author: Option<Signature>,
}

#[derive(Clone, Debug, Deserialize)]
pub struct Signature {
    pub date: String,
}

#[derive(Clone, Debug, Deserialize)]
pub struct CommitDetail {
    #[serde(default)]
    pub files: Vec<ChangedFile>,
}

#[derive(Clone, Debug, Deserialize)]
pub struct ChangedFile {
    pub filename: String,
    #[serde(default)]
    pub status: String,
}

#[derive(Clone, Debug, Deserialize)]
pub struct Tree {
    #[serde(default)]
    pub tree: Vec<TreeItem>,
    #[serde(default)]
    pub truncated: bool,
}

#[derive(Clone, Debug, Deserialize)]
pub struct TreeItem {
    pub path: String,
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub sha: String,
    #[serde(default)]
    pub size: Option<u64>,
}

#[derive(Clone, Debug, Deserialize)]
pub struct Stargazer {
    pub starred_at: String,
    pub user: Account,
}

#[derive(Clone, Debug, Deserialize)]
pub struct Fork {
    pub owner: Account,
    pub created_at: String,
}

#[derive(Clone, Debug, Deserialize)]
pub struct Contents {
    #[serde(default)]
    pub encoding: String,
    #[serde(default)]
    pub content: String,
}

/// RFC 3339 to Unix seconds.
pub fn unix_seconds(stamp: &str, context: &str) -> Result<i64> {
    chrono::DateTime::parse_from_rfc3339(stamp)
        .map(|t| t.timestamp())
        .map_err(|e| MinerError::Malformed {
            path: context.to_string(),
            message: format!("bad timestamp {stamp:?}: {e}"),
        })
}

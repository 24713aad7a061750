use std::collections::{BTreeMap, BTreeSet};

use base64::Engine;
use coderec_core::dataset::Behavior;
use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::api::{Request, STAR_ACCEPT};
use crate::client::Client;
use crate::discover::RepoDescriptor;
use crate::error::Result;
use crate::github::{
    unix_seconds, Account, CommitDetail, CommitSummary, Contents, Fork, Stargazer, Tree,
};

const PER_PAGE: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntryKind {
    Dir,
    File,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TreeEntry {
    pub path: String,
    pub kind: EntryKind,
    pub size: Option<u64>,
}

/// A person as the API identifies them.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Person {
    pub id: u64,
    pub login: String,
}

impl From<&Account> for Person {
    fn from(a: &Account) -> Self {
        Person {
            id: a.id,
            login: a.login.clone(),
        }
    }
}

/// One author touching one file in one commit.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FileTouch {
    pub timestamp: i64,
    pub author: Person,
    pub path: String,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProjectEvent {
    pub timestamp: i64,
    pub person: Person,
    pub behavior: Behavior,
}

/// Something skipped during the crawl, kept for the run's warning ledger.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Warning {
    pub repo: String,
    pub kind: String,
    pub detail: String,
}

impl Warning {
    fn new(repo: &str, kind: &str, detail: impl Into<String>) -> Self {
        Warning {
            repo: repo.to_string(),
            kind: kind.to_string(),
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarvestOptions {
    pub with_content: bool,
    /// Larger files are kept in the tree without content.
    pub max_file_bytes: u64,
}

impl Default for HarvestOptions {
    fn default() -> Self {
        HarvestOptions {
            with_content: true,
            max_file_bytes: 256 * 1024,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoHarvest {
    pub repo: RepoDescriptor,
    /// Up to five languages by byte count.
    pub languages: Vec<String>,
    /// Sorted by path.
    pub entries: Vec<TreeEntry>,
    pub contents: BTreeMap<String, String>,
    /// Sorted and free of duplicates.
    pub touches: Vec<FileTouch>,
    pub events: Vec<ProjectEvent>,
    pub warnings: Vec<Warning>,
    pub bots_dropped: usize,
}

pub fn list_commits(client: &Client, full_name: &str) -> Result<Vec<CommitSummary>> {
    client.paged(
        &Request::new(format!("/repos/{full_name}/commits")),
        PER_PAGE,
    )
}

/// Every file and directory of the tree at `branch`. When the recursive
/// listing comes back truncated the tree is walked one level at a time.
pub fn fetch_tree(client: &Client, full_name: &str, branch: &str) -> Result<Vec<TreeEntry>> {
    let req = Request::new(format!("/repos/{full_name}/git/trees/{branch}")).param("recursive", 1);
    let Some(tree) = client.json::<Tree>(&req)? else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    if tree.truncated {
        debug!("{full_name}: recursive tree truncated, walking");
        walk(client, full_name, branch, "", &mut out)?;
    } else {
        for item in tree.tree {
            if let Some(kind) = entry_kind(&item.kind) {
                out.push(TreeEntry {
                    path: item.path,
                    kind,
                    size: item.size,
                });
            }
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

fn entry_kind(kind: &str) -> Option<EntryKind> {
    match kind {
        "blob" => Some(EntryKind::File),
        "tree" => Some(EntryKind::Dir),
        // Submodules ("commit") are not part of the repository's own code.
        _ => None,
    }
}

fn walk(
    client: &Client,
    full_name: &str,
    sha: &str,
    prefix: &str,
    out: &mut Vec<TreeEntry>,
) -> Result<()> {
    let req = Request::new(format!("/repos/{full_name}/git/trees/{sha}"));
    let Some(tree) = client.json::<Tree>(&req)? else {
        return Ok(());
    };
    for item in tree.tree {
        let Some(kind) = entry_kind(&item.kind) else {
            continue;
        };
        let path = format!("{prefix}{}", item.path);
        if kind == EntryKind::Dir {
            walk(client, full_name, &item.sha, &format!("{path}/"), out)?;
        }
        out.push(TreeEntry {
            path,
            kind,
            size: item.size,
        });
    }
    Ok(())
}

/// Tree, per-file commit authorship and star/watch/fork events of one
/// repository. Watch listings carry no timestamps; watches are stamped with
/// the repository's creation time.
pub fn harvest_repo(
    client: &Client,
    repo: &RepoDescriptor,
    opts: &HarvestOptions,
) -> Result<RepoHarvest> {
    let full = repo.full_name.as_str();
    let mut warnings = Vec::new();
    let mut bots_dropped = 0;

    let languages: BTreeMap<String, u64> = client
        .json(&Request::new(format!("/repos/{full}/languages")))?
        .unwrap_or_default();
    let mut languages: Vec<(String, u64)> = languages.into_iter().collect();
    languages.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let languages: Vec<String> = languages.into_iter().take(5).map(|(l, _)| l).collect();

    let entries = fetch_tree(client, full, &repo.default_branch)?;
    let files: BTreeSet<&str> = entries
        .iter()
        .filter(|e| e.kind == EntryKind::File)
        .map(|e| e.path.as_str())
        .collect();

    let mut touches = BTreeSet::new();
    for summary in list_commits(client, full)? {
        let Some(author) = &summary.author else {
            warnings.push(Warning::new(full, "unlinked_author", &summary.sha));
            continue;
        };
        if author.is_bot() {
            bots_dropped += 1;
            continue;
        }
        let Some(sig) = &summary.commit.author else {
            warnings.push(Warning::new(full, "undated_commit", &summary.sha));
            continue;
        };
        let ts = unix_seconds(&sig.date, full)?;
        let changed = client.paged_with(
            &Request::new(format!("/repos/{full}/commits/{}", summary.sha)),
            PER_PAGE,
            |d: CommitDetail| d.files,
        )?;
        for f in changed {
            if files.contains(f.filename.as_str()) {
                touches.insert(FileTouch {
                    timestamp: ts,
                    author: author.into(),
                    path: f.filename,
                });
            } else {
                // Deleted or renamed since; the file is not in the current tree.
                warnings.push(Warning::new(
                    full,
                    "missing_file",
                    format!("{} ({}) in {}", f.filename, f.status, summary.sha),
                ));
            }
        }
    }

    let mut events = BTreeSet::new();
    let stars: Vec<Stargazer> = client.paged(
        &Request::new(format!("/repos/{full}/stargazers")).accept(STAR_ACCEPT),
        PER_PAGE,
    )?;
    for s in stars {
        if s.user.is_bot() {
            bots_dropped += 1;
            continue;
        }
        events.insert(ProjectEvent {
            timestamp: unix_seconds(&s.starred_at, full)?,
            person: (&s.user).into(),
            behavior: Behavior::Star,
        });
    }
    let watchers: Vec<Account> = client.paged(
        &Request::new(format!("/repos/{full}/subscribers")),
        PER_PAGE,
    )?;
    for w in watchers {
        if w.is_bot() {
            bots_dropped += 1;
            continue;
        }
        events.insert(ProjectEvent {
            timestamp: repo.created_at,
            person: (&w).into(),
            behavior: Behavior::Watch,
        });
    }
    let forks: Vec<Fork> = client.paged(&Request::new(format!("/repos/{full}/forks")), PER_PAGE)?;
    for f in forks {
        if f.owner.is_bot() {
            bots_dropped += 1;
            continue;
        }
        events.insert(ProjectEvent {
            timestamp: unix_seconds(&f.created_at, full)?,
            person: (&f.owner).into(),
            behavior: Behavior::Fork,
        });
    }

    let mut contents = BTreeMap::new();
    if opts.with_content {
        for e in entries.iter().filter(|e| e.kind == EntryKind::File) {
            if e.size.is_some_and(|s| s > opts.max_file_bytes) {
                warnings.push(Warning::new(full, "large_file", &e.path));
                continue;
            }
            let req = Request::new(format!("/repos/{full}/contents/{}", e.path))
                .param("ref", &repo.default_branch);
            match client.json::<Contents>(&req)?.and_then(|c| decode(&c)) {
                Some(text) => {
                    contents.insert(e.path.clone(), text);
                }
                None => warnings.push(Warning::new(full, "no_text_content", &e.path)),
            }
        }
    }

    if !warnings.is_empty() {
        warn!("{full}: {} items skipped", warnings.len());
    }
    warnings.sort();
    Ok(RepoHarvest {
        repo: repo.clone(),
        languages,
        entries,
        contents,
        touches: touches.into_iter().collect(),
        events: events.into_iter().collect(),
        warnings,
        bots_dropped,
    })
}

/// UTF-8 text of a base64 contents payload; `None` for binary files.
fn decode(c: &Contents) -> Option<String> {
    if c.encoding != "base64" {
        return None;
    }
    let packed: String = c.content.split_whitespace().collect();
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(packed)
        .ok()?;
    String::from_utf8(bytes).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contents_decode_across_line_breaks() {
        let c = Contents {
            encoding: "base64".into(),
            content: "Zm4gbWFp\nbigpIHt9\n".into(),
        };
        assert_eq!(decode(&c).as_deref(), Some("fn main() {}"));
        let binary = Contents {
            encoding: "base64".into(),
            content: base64::engine::general_purpose::STANDARD.encode([0xff, 0xfe, 0x00]),
        };
        assert_eq!(decode(&binary), None);
    }
}

//! Line-delimited JSON dataset layout:
//!
//! ```text
//! users.jsonl          {"id", "login"}
//! repos.jsonl          {"id", "owner", "created_at", "top_languages", "topics"}
//! interactions.jsonl   {"user", "target", "kind", "behavior", "ts"}
//! trees/<repo>.jsonl   {"id", "kind", "name", "parent", "content"?}
//! ```
//!
//! Dense indices are assigned in first-appearance order: users and repos in
//! file order, directories and files in tree order with repositories visited
//! in `repos.jsonl` order.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    Behavior, Dataset, DirInfo, EntityKind, FileInfo, InteractionRecord, RepoInfo, RepoTree,
    TreeNode, TreeNodeKind, UserInfo,
};
use crate::error::{Error, Result};

/// Identifiers may be written as JSON strings or integers.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
enum RawId {
    Int(i64),
    Str(String),
}

impl RawId {
    fn into_string(self) -> String {
        match self {
            RawId::Int(i) => i.to_string(),
            RawId::Str(s) => s,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct UserLine {
    id: RawId,
    login: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct RepoLine {
    id: RawId,
    owner: String,
    created_at: i64,
    #[serde(default)]
    top_languages: Vec<String>,
    #[serde(default)]
    topics: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct InteractionLine {
    user: RawId,
    target: RawId,
    kind: String,
    behavior: Behavior,
    ts: i64,
}

#[derive(Debug, Serialize, Deserialize)]
struct TreeLine {
    id: RawId,
    kind: String,
    name: String,
    parent: Option<RawId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    content: Option<String>,
}

/// File name used for a repository's tree: the raw id with every character
/// outside `[A-Za-z0-9._-]` replaced by `_`.
pub fn tree_file_name(repo_id: &str) -> String {
    let safe: String = repo_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{safe}.jsonl")
}

fn read_lines<R: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<(usize, R)>> {
    let file =
        fs::File::open(path).map_err(|e| Error::format(path, format!("cannot open: {e}")))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?;
        out.push((i + 1, rec));
    }
    Ok(out)
}

fn integrity(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Integrity {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();

    let users_path = dir.join("users.jsonl");
    let mut users = Vec::new();
    let mut user_index: HashMap<String, usize> = HashMap::new();
    for (line, u) in read_lines::<UserLine>(&users_path)? {
        let raw = u.id.into_string();
        if user_index.insert(raw.clone(), users.len()).is_some() {
            return Err(integrity(
                &users_path,
                line,
                format!("duplicate user id {raw}"),
            ));
        }
        users.push(UserInfo {
            raw_id: raw,
            login: u.login,
        });
    }

    let repos_path = dir.join("repos.jsonl");
    let mut repos = Vec::new();
    let mut repo_index: HashMap<String, usize> = HashMap::new();
    for (line, r) in read_lines::<RepoLine>(&repos_path)? {
        let raw = r.id.into_string();
        if repo_index.insert(raw.clone(), repos.len()).is_some() {
            return Err(integrity(
                &repos_path,
                line,
                format!("duplicate repo id {raw}"),
            ));
        }
        let mut langs = r.top_languages;
        langs.truncate(5);
        repos.push(RepoInfo {
            raw_id: raw,
            owner: r.owner,
            created_at: r.created_at,
            top_languages: langs,
            topics: r.topics,
        });
    }

    let mut files = Vec::new();
    let mut dirs = Vec::new();
    let mut trees = Vec::with_capacity(repos.len());
    let mut file_index: HashMap<String, usize> = HashMap::new();
    for (repo, info) in repos.iter().enumerate() {
        let path = dir.join("trees").join(tree_file_name(&info.raw_id));
        let lines = read_lines::<TreeLine>(&path)?;
        let tree = build_tree(&path, repo, lines, &mut files, &mut dirs, &mut file_index)?;
        trees.push(tree);
    }

    let inter_path = dir.join("interactions.jsonl");
    let mut records = Vec::new();
    for (line, r) in read_lines::<InteractionLine>(&inter_path)? {
        let user_raw = r.user.into_string();
        let user = *user_index
            .get(&user_raw)
            .ok_or_else(|| integrity(&inter_path, line, format!("unknown user {user_raw}")))?;
        let expected = match r.behavior.target_kind() {
            EntityKind::File => "file",
            _ => "repo",
        };
        if r.kind != expected {
            return Err(integrity(
                &inter_path,
                line,
                format!(
                    "{} interactions must target a {expected}, got {:?}",
                    r.behavior, r.kind
                ),
            ));
        }
        if r.ts <= 0 {
            return Err(integrity(
                &inter_path,
                line,
                format!("non-positive timestamp {}", r.ts),
            ));
        }
        let target_raw = r.target.into_string();
        let table = if expected == "file" {
            &file_index
        } else {
            &repo_index
        };
        let target = *table.get(&target_raw).ok_or_else(|| {
            integrity(
                &inter_path,
                line,
                format!("unknown {expected} {target_raw}"),
            )
        })?;
        records.push(InteractionRecord {
            user,
            target,
            behavior: r.behavior,
            timestamp: r.ts,
        });
    }

    Ok(Dataset {
        users,
        repos,
        files,
        dirs,
        trees,
        records,
    })
}

fn build_tree(
    path: &Path,
    repo: usize,
    lines: Vec<(usize, TreeLine)>,
    files: &mut Vec<FileInfo>,
    dirs: &mut Vec<DirInfo>,
    file_index: &mut HashMap<String, usize>,
) -> Result<RepoTree> {
    let mut local: HashMap<String, usize> = HashMap::new();
    let mut root_line = None;
    for (pos, (line, node)) in lines.iter().enumerate() {
        let raw = node.id.clone().into_string();
        if local.insert(raw.clone(), pos).is_some() {
            return Err(integrity(path, *line, format!("duplicate node id {raw}")));
        }
        if node.kind == "root" {
            if root_line.is_some() {
                return Err(integrity(path, *line, "second root node"));
            }
            root_line = Some(pos);
        }
    }
    let root_pos = root_line.ok_or_else(|| Error::format(path, "tree has no root node"))?;

    // Local order: root first, then the remaining nodes in file order.
    let order: Vec<usize> = std::iter::once(root_pos)
        .chain((0..lines.len()).filter(|&p| p != root_pos))
        .collect();
    let mut new_pos = vec![0usize; lines.len()];
    for (i, &p) in order.iter().enumerate() {
        new_pos[p] = i;
    }

    let mut nodes = Vec::with_capacity(lines.len());
    for &p in &order {
        let (line, node) = &lines[p];
        let raw = node.id.clone().into_string();
        let parent = match (&node.parent, node.kind.as_str()) {
            (None, "root") => None,
            (Some(_), "root") => return Err(integrity(path, *line, "root node has a parent")),
            (None, _) => return Err(integrity(path, *line, format!("node {raw} has no parent"))),
            (Some(par), _) => {
                let par = par.clone().into_string();
                let pp = *local
                    .get(&par)
                    .ok_or_else(|| integrity(path, *line, format!("unknown parent {par}")))?;
                if lines[pp].1.kind == "file" {
                    return Err(integrity(path, *line, format!("parent {par} is a file")));
                }
                Some(new_pos[pp])
            }
        };
        let kind = match node.kind.as_str() {
            "root" => TreeNodeKind::Root,
            "dir" => {
                dirs.push(DirInfo {
                    raw_id: raw,
                    name: node.name.clone(),
                    repo,
                });
                TreeNodeKind::Dir(dirs.len() - 1)
            }
            "file" => {
                if file_index.insert(raw.clone(), files.len()).is_some() {
                    return Err(integrity(
                        path,
                        *line,
                        format!("file id {raw} appears in two trees"),
                    ));
                }
                files.push(FileInfo {
                    raw_id: raw,
                    name: node.name.clone(),
                    repo,
                    content: node.content.clone(),
                });
                TreeNodeKind::File(files.len() - 1)
            }
            other => {
                return Err(integrity(
                    path,
                    *line,
                    format!("unknown node kind {other:?}"),
                ))
            }
        };
        nodes.push(TreeNode { kind, parent });
    }

    // Every node must reach the root.
    for (i, _) in nodes.iter().enumerate() {
        let mut cur = i;
        let mut steps = 0;
        while let Some(p) = nodes[cur].parent {
            cur = p;
            steps += 1;
            if steps > nodes.len() {
                return Err(integrity(path, lines[order[i]].0, "cycle in parent links"));
            }
        }
    }

    Ok(RepoTree { repo, nodes })
}

/// Writes a dataset in the layout [`load_dataset`] reads.
pub fn save_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("trees"))?;

    write_lines(
        &dir.join("users.jsonl"),
        dataset.users.iter().map(|u| UserLine {
            id: RawId::Str(u.raw_id.clone()),
            login: u.login.clone(),
        }),
    )?;
    write_lines(
        &dir.join("repos.jsonl"),
        dataset.repos.iter().map(|r| RepoLine {
            id: RawId::Str(r.raw_id.clone()),
            owner: r.owner.clone(),
            created_at: r.created_at,
            top_languages: r.top_languages.clone(),
            topics: r.topics.clone(),
        }),
    )?;

    for tree in &dataset.trees {
        let repo = &dataset.repos[tree.repo];
        let raw_of = |i: usize| -> String {
            match tree.nodes[i].kind {
                TreeNodeKind::Root => format!("{}:root", repo.raw_id),
                TreeNodeKind::Dir(d) => dataset.dirs[d].raw_id.clone(),
                TreeNodeKind::File(f) => dataset.files[f].raw_id.clone(),
            }
        };
        let lines = tree.nodes.iter().enumerate().map(|(i, n)| {
            let (kind, name, content) = match n.kind {
                TreeNodeKind::Root => ("root", repo.raw_id.clone(), None),
                TreeNodeKind::Dir(d) => ("dir", dataset.dirs[d].name.clone(), None),
                TreeNodeKind::File(f) => (
                    "file",
                    dataset.files[f].name.clone(),
                    dataset.files[f].content.clone(),
                ),
            };
            TreeLine {
                id: RawId::Str(raw_of(i)),
                kind: kind.to_string(),
                name,
                parent: n.parent.map(|p| RawId::Str(raw_of(p))),
                content,
            }
        });
        write_lines(&dir.join("trees").join(tree_file_name(&repo.raw_id)), lines)?;
    }

    write_lines(
        &dir.join("interactions.jsonl"),
        dataset.records.iter().map(|r| InteractionLine {
            user: RawId::Str(dataset.users[r.user].raw_id.clone()),
            target: RawId::Str(match r.behavior {
                Behavior::Commit => dataset.files[r.target].raw_id.clone(),
                _ => dataset.repos[r.target].raw_id.clone(),
            }),
            kind: match r.behavior {
                Behavior::Commit => "file".into(),
                _ => "repo".into(),
            },
            behavior: r.behavior,
            ts: r.timestamp,
        }),
    )?;
    Ok(())
}

fn write_lines<R: Serialize>(path: &PathBuf, rows: impl Iterator<Item = R>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut w, &row)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

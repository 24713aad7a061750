use std::collections::{BTreeMap, BTreeSet, HashMap};

use coderec_core::dataset::{
    Dataset, DirInfo, FileInfo, InteractionRecord, RepoInfo, RepoTree, TreeNode, TreeNodeKind,
    UserInfo,
};

use crate::harvest::{EntryKind, Person, RepoHarvest, Warning};

/// Merges per-repository harvests into one dataset. Repositories keep the
/// given order, users are sorted by login, files and directories follow
/// path order within each tree, and records are sorted by time.
pub fn build_dataset(harvests: &[RepoHarvest]) -> (Dataset, Vec<Warning>) {
    let mut warnings = Vec::new();
    let people: BTreeSet<(String, u64)> = harvests
        .iter()
        .flat_map(|h| {
            h.touches
                .iter()
                .map(|t| &t.author)
                .chain(h.events.iter().map(|e| &e.person))
        })
        .map(|p: &Person| (p.login.clone(), p.id))
        .collect();
    let users: Vec<UserInfo> = people
        .iter()
        .map(|(login, id)| UserInfo {
            raw_id: id.to_string(),
            login: login.clone(),
        })
        .collect();
    let user_index: HashMap<u64, usize> = people
        .iter()
        .enumerate()
        .map(|(i, (_, id))| (*id, i))
        .collect();

    let mut ds = Dataset {
        users,
        repos: Vec::new(),
        files: Vec::new(),
        dirs: Vec::new(),
        trees: Vec::new(),
        records: Vec::new(),
    };
    let mut records = BTreeSet::new();
    for (r, h) in harvests.iter().enumerate() {
        let full = &h.repo.full_name;
        ds.repos.push(RepoInfo {
            raw_id: full.clone(),
            owner: h.repo.owner.clone(),
            created_at: h.repo.created_at,
            top_languages: h.languages.clone(),
            topics: h.repo.topics.clone(),
        });

        // Directories named only as a file's ancestor are added too.
        let mut kinds: BTreeMap<&str, EntryKind> = BTreeMap::new();
        for e in &h.entries {
            kinds.insert(&e.path, e.kind);
            let mut p = e.path.as_str();
            while let Some(cut) = p.rfind('/') {
                p = &p[..cut];
                kinds.entry(p).or_insert(EntryKind::Dir);
            }
        }
        let mut nodes = vec![TreeNode {
            kind: TreeNodeKind::Root,
            parent: None,
        }];
        let mut local: HashMap<&str, usize> = HashMap::new();
        let mut file_of: HashMap<&str, usize> = HashMap::new();
        for (&path, &kind) in &kinds {
            let (parent, name) = match path.rfind('/') {
                Some(cut) => (local[&path[..cut]], &path[cut + 1..]),
                None => (0, path),
            };
            let node = match kind {
                EntryKind::Dir => {
                    ds.dirs.push(DirInfo {
                        raw_id: format!("{full}:{path}/"),
                        name: name.to_string(),
                        repo: r,
                    });
                    TreeNodeKind::Dir(ds.dirs.len() - 1)
                }
                EntryKind::File => {
                    ds.files.push(FileInfo {
                        raw_id: format!("{full}:{path}"),
                        name: name.to_string(),
                        repo: r,
                        content: h.contents.get(path).cloned(),
                    });
                    file_of.insert(path, ds.files.len() - 1);
                    TreeNodeKind::File(ds.files.len() - 1)
                }
            };
            local.insert(path, nodes.len());
            nodes.push(TreeNode {
                kind: node,
                parent: Some(parent),
            });
        }
        ds.trees.push(RepoTree { repo: r, nodes });

        for t in &h.touches {
            let (Some(&u), Some(&f)) = (user_index.get(&t.author.id), file_of.get(t.path.as_str()))
            else {
                continue;
            };
            if t.timestamp <= 0 {
                warnings.push(Warning {
                    repo: full.clone(),
                    kind: "bad_timestamp".into(),
                    detail: format!("{} {}", t.author.login, t.path),
                });
                continue;
            }
            records.insert(InteractionRecord::commit(u, f, t.timestamp));
        }
        for e in &h.events {
            if e.timestamp <= 0 {
                warnings.push(Warning {
                    repo: full.clone(),
                    kind: "bad_timestamp".into(),
                    detail: format!("{} {}", e.person.login, e.behavior),
                });
                continue;
            }
            records.insert(InteractionRecord::project(
                user_index[&e.person.id],
                r,
                e.behavior,
                e.timestamp,
            ));
        }
    }
    let mut records: Vec<InteractionRecord> = records.into_iter().collect();
    records.sort_by_key(|r| (r.timestamp, r.user, r.behavior, r.target));
    ds.records = records;
    (ds, warnings)
}

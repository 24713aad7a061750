use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use coderec_core::dataset::{save_dataset, Dataset};
use sha2::{Digest, Sha256};

use crate::error::Result;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WriteReport {
    pub written: Vec<PathBuf>,
    pub unchanged: usize,
    pub removed: Vec<PathBuf>,
}

/// Relative path to SHA-256 of every file under `dir`, skipping `skip`.
pub fn hash_tree(dir: &Path, skip: &[&str]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d)? {
            let path = entry?.path();
            let rel = path
                .strip_prefix(dir)
                .expect("under dir")
                .to_string_lossy()
                .replace('\\', "/");
            if skip
                .iter()
                .any(|s| rel == *s || rel.starts_with(&format!("{s}/")))
            {
                continue;
            }
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(rel, hex::encode(Sha256::digest(fs::read(&path)?)));
            }
        }
    }
    Ok(out)
}

/// Writes the dataset and `extras` (relative name, bytes) into `out`,
/// touching only files whose bytes change and removing tree files of
/// repositories no longer present. Paths listed in `keep` are left alone.
pub fn write_output(
    out: &Path,
    dataset: &Dataset,
    extras: &[(&str, Vec<u8>)],
    keep: &[&str],
) -> Result<WriteReport> {
    let staging = tempfile::tempdir()?;
    save_dataset(dataset, staging.path())?;
    for (name, bytes) in extras {
        fs::write(staging.path().join(name), bytes)?;
    }
    fs::create_dir_all(out)?;
    let fresh = hash_tree(staging.path(), &[])?;
    let old = hash_tree(out, keep)?;
    let mut report = WriteReport::default();
    for (rel, hash) in &fresh {
        if old.get(rel) == Some(hash) {
            report.unchanged += 1;
            continue;
        }
        let target = out.join(rel);
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::copy(staging.path().join(rel), &target)?;
        report.written.push(target);
    }
    for rel in old
        .keys()
        .filter(|r| r.starts_with("trees/") && !fresh.contains_key(*r))
    {
        let target = out.join(rel);
        fs::remove_file(&target)?;
        report.removed.push(target);
    }
    Ok(report)
}

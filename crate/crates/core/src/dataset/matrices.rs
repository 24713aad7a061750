use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Behavior, DatasetSplit, Dims};
use crate::autodiff::SparseMatrix;
use crate::error::Result;

/// Binary interaction matrices built from the train split: `y` is
/// `users x files`, each `project[t]` is `users x repos`.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionMatrices {
    pub y: SparseMatrix<f64>,
    pub project: BTreeMap<Behavior, SparseMatrix<f64>>,
}

impl InteractionMatrices {
    pub fn project_level(&self, behavior: Behavior) -> Option<&SparseMatrix<f64>> {
        self.project.get(&behavior)
    }

    pub fn density(&self) -> f64 {
        let cells = (self.y.rows() * self.y.cols()) as f64;
        if cells == 0.0 {
            0.0
        } else {
            self.y.nnz() as f64 / cells
        }
    }

    /// Train-positive files of `user`, ascending.
    pub fn positives(&self, user: usize) -> &[usize] {
        self.y.row_indices(user)
    }
}

/// Y from train commits and one user x repo matrix per project-level behavior
/// present in the train split. Duplicate records collapse to one entry.
pub fn build_interaction_matrices(split: &DatasetSplit, dims: Dims) -> Result<InteractionMatrices> {
    let mut y_pairs = BTreeSet::new();
    let mut proj: BTreeMap<Behavior, BTreeSet<(usize, usize)>> = BTreeMap::new();
    for r in &split.train {
        match r.behavior {
            Behavior::Commit => {
                y_pairs.insert((r.user, r.target));
            }
            b => {
                proj.entry(b).or_default().insert((r.user, r.target));
            }
        }
    }
    let y = SparseMatrix::binary(dims.users, dims.files, y_pairs)?;
    let mut project = BTreeMap::new();
    for b in Behavior::PROJECT_LEVEL {
        let pairs = proj.remove(&b).unwrap_or_default();
        project.insert(b, SparseMatrix::binary(dims.users, dims.repos, pairs)?);
    }
    Ok(InteractionMatrices { y, project })
}

/// Dataset statistics in the layout of a published dataset summary table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub users: usize,
    pub retained_users: usize,
    pub files: usize,
    pub files_with_interactions: usize,
    pub repos: usize,
    pub interactions: usize,
    pub train_records: usize,
    pub val_records: usize,
    pub test_records: usize,
    pub train_nnz: usize,
    /// `nnz(Y) / (|users| * |files|)`.
    pub density: f64,
}

impl DatasetSummary {
    pub fn new(dims: Dims, split: &DatasetSplit, matrices: &InteractionMatrices) -> Self {
        let commits = || {
            split
                .train
                .iter()
                .chain(&split.val)
                .chain(&split.test)
                .filter(|r| r.behavior == Behavior::Commit)
        };
        let touched: BTreeSet<usize> = commits().map(|r| r.target).collect();
        DatasetSummary {
            users: dims.users,
            retained_users: split.retained_users().len(),
            files: dims.files,
            files_with_interactions: touched.len(),
            repos: dims.repos,
            interactions: commits().count(),
            train_records: split.train.len(),
            val_records: split.val.len(),
            test_records: split.test.len(),
            train_nnz: matrices.y.nnz(),
            density: matrices.density(),
        }
    }
}

impl fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>10} {:>10} {:>14} {:>12}",
            "#Files", "#Users", "#Interactions", "Density"
        )?;
        writeln!(
            f,
            "{:>10} {:>10} {:>14} {:>12.3e}",
            self.files_with_interactions, self.retained_users, self.interactions, self.density
        )?;
        writeln!(
            f,
            "files={} users={} repos={} train/val/test records={}/{}/{} nnz(Y)={}",
            self.files,
            self.users,
            self.repos,
            self.train_records,
            self.val_records,
            self.test_records,
            self.train_nnz
        )
    }
}

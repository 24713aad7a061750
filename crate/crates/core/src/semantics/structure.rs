//! Per-repository hierarchy graphs and the features of their directory and
//! repository nodes.

use std::collections::BTreeSet;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::autodiff::{SparseMatrix, Tensor};
use crate::dataset::{Dataset, RepoTree, TreeNodeKind};
use crate::scalar::Scalar;
use crate::semantics::tfidf::Vocabulary;

/// Number of hashed owner buckets in the repository feature.
pub const OWNER_BUCKETS: usize = 16;

/// Splits an identifier into lower-case words at underscores, hyphens, dots,
/// whitespace and letter-case changes. An upper-case run followed by a
/// lower-case letter ends one letter early (`HTTPServer` → `http`, `server`).
pub fn split_name_words(name: &str) -> Vec<String> {
    let mut words = Vec::new();
    for part in name.split(|c: char| !c.is_alphanumeric()) {
        let chars: Vec<char> = part.chars().collect();
        let mut start = 0;
        for i in 1..chars.len() {
            let (prev, cur) = (chars[i - 1], chars[i]);
            let lower_to_upper = prev.is_lowercase() && cur.is_uppercase();
            let acronym_end = prev.is_uppercase()
                && cur.is_uppercase()
                && chars.get(i + 1).is_some_and(|c| c.is_lowercase());
            if lower_to_upper || acronym_end {
                words.push(chars[start..i].iter().collect::<String>());
                start = i;
            }
        }
        if start < chars.len() {
            words.push(chars[start..].iter().collect::<String>());
        }
    }
    words
        .into_iter()
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

/// One repository's hierarchy with local node order root, directories, files.
#[derive(Clone, Debug)]
pub struct StructureGraph<T> {
    pub repo: usize,
    pub dirs: Vec<usize>,
    pub files: Vec<usize>,
    /// Bidirectional parent edges plus a self-loop on every node.
    pub adjacency: Arc<SparseMatrix<T>>,
}

impl<T: Scalar> StructureGraph<T> {
    pub fn num_nodes(&self) -> usize {
        1 + self.dirs.len() + self.files.len()
    }

    /// Parent edges, not counting self-loops or the reverse direction.
    pub fn num_edges(&self) -> usize {
        (self.adjacency.nnz() - self.num_nodes()) / 2
    }
}

/// Parent links of `tree` re-expressed in the order root, dirs, files.
fn local_edges(tree: &RepoTree) -> (Vec<usize>, Vec<usize>, Vec<(usize, usize)>) {
    let dirs: Vec<usize> = tree.dirs().collect();
    let files: Vec<usize> = tree.files().collect();
    let mut position = vec![0usize; tree.nodes.len()];
    let (mut next_dir, mut next_file) = (1, 1 + dirs.len());
    for (i, node) in tree.nodes.iter().enumerate() {
        position[i] = match node.kind {
            TreeNodeKind::Root => 0,
            TreeNodeKind::Dir(_) => {
                next_dir += 1;
                next_dir - 1
            }
            TreeNodeKind::File(_) => {
                next_file += 1;
                next_file - 1
            }
        };
    }
    let edges = tree
        .nodes
        .iter()
        .enumerate()
        .filter_map(|(i, n)| n.parent.map(|p| (position[i], position[p])))
        .collect();
    (dirs, files, edges)
}

fn with_loops<T: Scalar>(
    n: usize,
    edges: impl IntoIterator<Item = (usize, usize)>,
) -> SparseMatrix<T> {
    let mut pairs: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
    for (a, b) in edges {
        pairs.push((a, b));
        pairs.push((b, a));
    }
    pairs.sort_unstable();
    pairs.dedup();
    SparseMatrix::binary(n, n, pairs).expect("tree edges in range")
}

pub fn build_structure_graph<T: Scalar>(tree: &RepoTree) -> StructureGraph<T> {
    let (dirs, files, edges) = local_edges(tree);
    let n = 1 + dirs.len() + files.len();
    StructureGraph {
        repo: tree.repo,
        dirs,
        files,
        adjacency: Arc::new(with_loops(n, edges)),
    }
}

/// Every repository's hierarchy as one block-diagonal graph in global order:
/// all files (dataset file index), then all directories, then one root per
/// repository.
#[derive(Clone, Debug)]
pub struct StructureForest<T> {
    pub n_files: usize,
    pub n_dirs: usize,
    pub n_repos: usize,
    pub adjacency: Arc<SparseMatrix<T>>,
}

impl<T: Scalar> StructureForest<T> {
    pub fn num_nodes(&self) -> usize {
        self.n_files + self.n_dirs + self.n_repos
    }

    pub fn root_node(&self, repo: usize) -> usize {
        self.n_files + self.n_dirs + repo
    }

    pub fn root_rows(&self) -> Vec<usize> {
        (0..self.n_repos).map(|r| self.root_node(r)).collect()
    }
}

pub fn build_structure_forest<T: Scalar>(dataset: &Dataset) -> StructureForest<T> {
    let dims = dataset.dims();
    let global = |tree: &RepoTree, local: usize| match tree.nodes[local].kind {
        TreeNodeKind::File(f) => f,
        TreeNodeKind::Dir(d) => dims.files + d,
        TreeNodeKind::Root => dims.files + dims.dirs + tree.repo,
    };
    let mut edges = Vec::new();
    for tree in &dataset.trees {
        for (i, node) in tree.nodes.iter().enumerate() {
            if let Some(p) = node.parent {
                edges.push((global(tree, i), global(tree, p)));
            }
        }
    }
    let n = dims.files + dims.dirs + dims.repos;
    StructureForest {
        n_files: dims.files,
        n_dirs: dims.dirs,
        n_repos: dims.repos,
        adjacency: Arc::new(with_loops(n, edges)),
    }
}

/// Raw (pre-projection) features of directory and repository nodes.
#[derive(Clone, Debug)]
pub struct StructureFeatures<T> {
    pub dir_vocabulary: Vocabulary,
    /// `dirs x |dir vocabulary|` TF-IDF over split name words.
    pub dirs: Tensor<T>,
    pub languages: Vec<String>,
    /// `repos x (OWNER_BUCKETS + 1 + |languages|)`.
    pub repos: Tensor<T>,
}

fn owner_bucket(owner: &str) -> usize {
    Sha256::digest(owner.as_bytes())[0] as usize % OWNER_BUCKETS
}

pub fn encode_directories<T: Scalar>(dataset: &Dataset) -> (Vocabulary, Tensor<T>) {
    let docs: Vec<Vec<String>> = dataset
        .dirs
        .iter()
        .map(|d| split_name_words(&d.name))
        .collect();
    let vocab = Vocabulary::build(&docs, None);
    let mut out = Tensor::zeros(docs.len(), vocab.len());
    for (r, doc) in docs.iter().enumerate() {
        for (o, v) in out.row_mut(r).iter_mut().zip(vocab.tfidf(doc)) {
            *o = T::lit(v);
        }
    }
    (vocab, out)
}

/// `[owner one-hot bucket ‖ min-max creation time ‖ language multi-hot]`.
pub fn encode_repositories<T: Scalar>(dataset: &Dataset) -> (Vec<String>, Tensor<T>) {
    let languages: Vec<String> = dataset
        .repos
        .iter()
        .flat_map(|r| r.top_languages.iter().take(5).cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let lo = dataset
        .repos
        .iter()
        .map(|r| r.created_at)
        .min()
        .unwrap_or(0);
    let hi = dataset
        .repos
        .iter()
        .map(|r| r.created_at)
        .max()
        .unwrap_or(0);
    let width = OWNER_BUCKETS + 1 + languages.len();
    let mut out = Tensor::zeros(dataset.repos.len(), width);
    for (r, repo) in dataset.repos.iter().enumerate() {
        let row = out.row_mut(r);
        row[owner_bucket(&repo.owner)] = T::one();
        row[OWNER_BUCKETS] = if hi > lo {
            T::lit((repo.created_at - lo) as f64 / (hi - lo) as f64)
        } else {
            T::zero()
        };
        for lang in repo.top_languages.iter().take(5) {
            let k = languages.binary_search(lang).expect("collected above");
            row[OWNER_BUCKETS + 1 + k] = T::one();
        }
    }
    (languages, out)
}

pub fn encode_structure_features<T: Scalar>(dataset: &Dataset) -> StructureFeatures<T> {
    let (dir_vocabulary, dirs) = encode_directories(dataset);
    let (languages, repos) = encode_repositories(dataset);
    StructureFeatures {
        dir_vocabulary,
        dirs,
        languages,
        repos,
    }
}

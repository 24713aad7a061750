use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::SparseMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Positive pairs of one training batch with one sampled negative each, plus
/// per-behavior project triples for the users in the batch.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Batch {
    pub users: Vec<usize>,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
    /// Aligned with the model inputs' behavior list.
    pub project: Vec<ProjectTriples>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ProjectTriples {
    pub users: Vec<usize>,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    /// Distinct users in first-appearance order.
    pub fn distinct_users(&self) -> Vec<usize> {
        distinct(&self.users)
    }

    pub fn distinct_positives(&self) -> Vec<usize> {
        distinct(&self.positives)
    }
}

fn distinct(xs: &[usize]) -> Vec<usize> {
    let mut seen = std::collections::HashSet::new();
    xs.iter().copied().filter(|x| seen.insert(*x)).collect()
}

/// Uniform draw from `pool` avoiding the ascending list `excluded`.
/// `None` when every pool item is excluded.
pub fn draw_excluding<R: Rng>(rng: &mut R, pool: &[usize], excluded: &[usize]) -> Option<usize> {
    if pool.is_empty() {
        return None;
    }
    for _ in 0..32 {
        let c = pool[rng.gen_range(0..pool.len())];
        if excluded.binary_search(&c).is_err() {
            return Some(c);
        }
    }
    let open: Vec<usize> = pool
        .iter()
        .copied()
        .filter(|c| excluded.binary_search(c).is_err())
        .collect();
    open.choose(rng).copied()
}

/// Like [`draw_excluding`] over `0..n` without materialising the range.
pub fn draw_from_range<R: Rng>(rng: &mut R, n: usize, excluded: &[usize]) -> Option<usize> {
    if excluded.len() >= n {
        return None;
    }
    for _ in 0..32 {
        let c = rng.gen_range(0..n);
        if excluded.binary_search(&c).is_err() {
            return Some(c);
        }
    }
    // Pick the k-th non-excluded id.
    let k = rng.gen_range(0..n - excluded.len());
    let mut skipped = 0;
    let mut lo = 0;
    for &e in excluded {
        if e - lo > k - skipped {
            break;
        }
        skipped += e - lo;
        lo = e + 1;
    }
    Some(lo + (k - skipped))
}

/// `n` files the user never committed to in `y`, drawn uniformly with
/// replacement.
pub fn sample_negatives<T: Scalar>(
    user: usize,
    y: &SparseMatrix<T>,
    n: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positives = y.row_indices(user);
    (0..n)
        .map(|_| draw_from_range(&mut rng, y.cols(), positives).ok_or(Error::Resample { user }))
        .collect()
}

/// Epoch-wise batch assembly over the distinct train positives.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    pairs: Vec<(usize, usize)>,
    y: SparseMatrix<f64>,
    project: Vec<SparseMatrix<f64>>,
    repo_files: Vec<Vec<usize>>,
    file_repo: Vec<usize>,
    batch_size: usize,
    same_repo: bool,
}

impl BatchSampler {
    pub fn new(
        y: &SparseMatrix<f64>,
        project: &[SparseMatrix<f64>],
        file_repo: &[usize],
        repos: usize,
        batch_size: usize,
        same_repo: bool,
    ) -> Self {
        let mut repo_files = vec![Vec::new(); repos];
        for (f, &r) in file_repo.iter().enumerate() {
            repo_files[r].push(f);
        }
        BatchSampler {
            pairs: y.iter().map(|(u, f, _)| (u, f)).collect(),
            y: y.clone(),
            project: project.to_vec(),
            repo_files,
            file_repo: file_repo.to_vec(),
            batch_size: batch_size.max(1),
            same_repo,
        }
    }

    pub fn num_positives(&self) -> usize {
        self.pairs.len()
    }

    /// Shuffles the positives and cuts them into batches. Users whose every
    /// file is a positive cannot get a negative; their pairs are dropped and
    /// counted in the second return value.
    pub fn epoch<R: Rng>(&self, rng: &mut R) -> (Vec<Batch>, usize) {
        let mut order = self.pairs.clone();
        order.shuffle(rng);
        let mut skipped = 0;
        let mut batches = Vec::new();
        for chunk in order.chunks(self.batch_size) {
            let mut batch = Batch::default();
            for &(u, f) in chunk {
                let positives = self.y.row_indices(u);
                let negative = if self.same_repo {
                    draw_excluding(rng, &self.repo_files[self.file_repo[f]], positives)
                        .or_else(|| draw_from_range(rng, self.y.cols(), positives))
                } else {
                    draw_from_range(rng, self.y.cols(), positives)
                };
                match negative {
                    Some(n) => {
                        batch.users.push(u);
                        batch.positives.push(f);
                        batch.negatives.push(n);
                    }
                    None => skipped += 1,
                }
            }
            if batch.is_empty() {
                continue;
            }
            let users = batch.distinct_users();
            for s in &self.project {
                let mut triples = ProjectTriples::default();
                for &u in &users {
                    let row = s.row_indices(u);
                    if row.is_empty() {
                        continue;
                    }
                    let pos = row[rng.gen_range(0..row.len())];
                    if let Some(neg) = draw_from_range(rng, s.cols(), row) {
                        triples.users.push(u);
                        triples.positives.push(pos);
                        triples.negatives.push(neg);
                    }
                }
                batch.project.push(triples);
            }
            batches.push(batch);
        }
        (batches, skipped)
    }
}

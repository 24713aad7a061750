use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{SparseMatrix, Tensor};
use crate::scalar::Scalar;

/// Row indices into the user embedding table forming a file's `N_Q x d`
/// historical-user map. An empty list stands for `N_Q` zero rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HistoricalUsers {
    pub file: usize,
    pub users: Vec<usize>,
}

impl HistoricalUsers {
    /// Materialises the map against a user table.
    pub fn to_matrix<T: Scalar>(&self, user_table: &Tensor<T>, n_q: usize) -> Tensor<T> {
        let d = user_table.cols();
        if self.users.is_empty() {
            return Tensor::zeros(n_q, d);
        }
        Tensor::from_fn(self.users.len(), d, |r, c| user_table.get(self.users[r], c))
    }
}

fn file_seed(seed: u64, file: usize) -> u64 {
    // splitmix64 of the pair so neighbouring files get unrelated streams.
    let mut z = seed ^ (file as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Samples `n_q` train contributors of `file` uniformly without replacement.
/// With fewer than `n_q` contributors they are cycled in ascending order; with
/// none the result is empty (zero rows).
///
/// `contributors` is the transposed train matrix, `files x users`.
pub fn sample_historical_users<T: Scalar>(
    file: usize,
    contributors: &SparseMatrix<T>,
    n_q: usize,
    seed: u64,
) -> HistoricalUsers {
    let pool = contributors.row_indices(file);
    let users = if pool.is_empty() || n_q == 0 {
        Vec::new()
    } else if pool.len() >= n_q {
        let mut rng = ChaCha8Rng::seed_from_u64(file_seed(seed, file));
        let mut picked: Vec<usize> = sample(&mut rng, pool.len(), n_q)
            .into_iter()
            .map(|i| pool[i])
            .collect();
        picked.sort_unstable();
        picked
    } else {
        pool.iter().copied().cycle().take(n_q).collect()
    };
    HistoricalUsers { file, users }
}

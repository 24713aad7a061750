//! Seeded synthetic datasets with planted user–repository structure.
//!
//! Repositories come in groups. Each user belongs to one group, stars (and
//! usually watches) one preferred repository of it, and works in one
//! directory slot. Every commit, in train and in the held-out windows alike,
//! lands in that slot of the preferred repository with probability
//! `preferred_prob` and otherwise in the same slot of the other group
//! repository, whose files share the theme. With few commits per user the
//! commit history often misleads about the preferred repository; the star
//! never does.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    Behavior, Dataset, DirInfo, FileInfo, InteractionRecord, RepoInfo, RepoTree, TreeNode,
    TreeNodeKind, UserInfo, DEFAULT_T1, DEFAULT_T2,
};
use crate::semantics::SegmentFeatures;

const DIR_NAMES: [&str; 6] = ["core", "api", "docs", "tests", "utils", "examples"];
const SPAN: i64 = 10_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub groups: usize,
    pub repos_per_group: usize,
    pub dirs_per_repo: usize,
    pub files_per_dir: usize,
    pub users_per_group: usize,
    /// Chance that a commit goes to the preferred repository.
    pub preferred_prob: f64,
    /// The last `cold_per_group` users of each group get `cold_train` train
    /// commits.
    pub cold_per_group: usize,
    pub cold_train: usize,
    pub regular_train: usize,
    pub val_commits: usize,
    pub test_commits: usize,
    /// Probability that a user also watches their preferred repository.
    pub watch_prob: f64,
    /// Source tokens per file.
    pub tokens_per_file: usize,
    pub noise_vocabulary: usize,
    pub t1: i64,
    pub t2: i64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    /// 50 users, 200 files, 10 repositories in 5 groups.
    fn default() -> Self {
        SyntheticConfig {
            groups: 5,
            repos_per_group: 2,
            dirs_per_repo: 2,
            files_per_dir: 10,
            users_per_group: 10,
            preferred_prob: 0.7,
            cold_per_group: 2,
            cold_train: 2,
            regular_train: 4,
            val_commits: 2,
            test_commits: 4,
            watch_prob: 0.8,
            tokens_per_file: 48,
            noise_vocabulary: 8,
            t1: DEFAULT_T1,
            t2: DEFAULT_T2,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn with_seed(seed: u64) -> Self {
        SyntheticConfig {
            seed,
            ..Default::default()
        }
    }

    pub fn users(&self) -> usize {
        self.groups * self.users_per_group
    }

    pub fn repos(&self) -> usize {
        self.groups * self.repos_per_group
    }

    pub fn files(&self) -> usize {
        self.repos() * self.dirs_per_repo * self.files_per_dir
    }

    pub fn group_of(&self, user: usize) -> usize {
        user / self.users_per_group
    }

    fn position(&self, user: usize) -> usize {
        user % self.users_per_group
    }

    pub fn preferred_repo(&self, user: usize) -> usize {
        self.group_of(user) * self.repos_per_group + self.position(user) % self.repos_per_group
    }

    /// The group repository a non-preferred commit goes to.
    pub fn secondary_repo(&self, user: usize) -> usize {
        let g = self.group_of(user);
        g * self.repos_per_group + (self.position(user) + 1) % self.repos_per_group
    }

    /// Directory slot the user works in.
    pub fn slot_of(&self, user: usize) -> usize {
        (self.position(user) / self.repos_per_group) % self.dirs_per_repo
    }

    pub fn is_cold(&self, user: usize) -> bool {
        self.position(user) + self.cold_per_group >= self.users_per_group
    }

    pub fn train_commits_of(&self, user: usize) -> usize {
        if self.is_cold(user) {
            self.cold_train
        } else {
            self.regular_train
        }
    }

    /// Files of directory slot `dir` of `repo`.
    pub fn dir_files(&self, repo: usize, dir: usize) -> Vec<usize> {
        let base = (repo * self.dirs_per_repo + dir) * self.files_per_dir;
        (base..base + self.files_per_dir).collect()
    }

    pub fn generate(&self) -> Dataset {
        let budget = self.regular_train.max(self.cold_train);
        assert!(
            budget + self.val_commits + self.test_commits <= self.files_per_dir,
            "directory slot too small for the commit budget"
        );
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let users = (0..self.users())
            .map(|i| UserInfo {
                raw_id: format!("u{i}"),
                login: format!("user{i}"),
            })
            .collect();

        let mut repos = Vec::new();
        let mut dirs = Vec::new();
        let mut files = Vec::new();
        let mut trees = Vec::new();
        for r in 0..self.repos() {
            let g = r / self.repos_per_group;
            repos.push(RepoInfo {
                raw_id: format!("r{r}"),
                owner: format!("owner{g}"),
                created_at: 1_300_000_000 + (r as i64) * 3_600_000,
                top_languages: vec!["Python".into(), format!("Lang{g}")],
                topics: vec![format!("topic{g}"), format!("topic{g}x{r}")],
            });
            let mut nodes = vec![TreeNode {
                kind: TreeNodeKind::Root,
                parent: None,
            }];
            for k in 0..self.dirs_per_repo {
                let d = dirs.len();
                let name = DIR_NAMES
                    .get(k)
                    .map_or_else(|| format!("misc{k}"), |s| s.to_string());
                dirs.push(DirInfo {
                    raw_id: format!("r{r}/{name}"),
                    name: name.clone(),
                    repo: r,
                });
                let dir_node = nodes.len();
                nodes.push(TreeNode {
                    kind: TreeNodeKind::Dir(d),
                    parent: Some(0),
                });
                for j in 0..self.files_per_dir {
                    let f = files.len();
                    files.push(FileInfo {
                        raw_id: format!("r{r}/{name}/f{j}.py"),
                        name: format!("f{j}.py"),
                        repo: r,
                        content: Some(self.content(g, r, k, &mut rng)),
                    });
                    nodes.push(TreeNode {
                        kind: TreeNodeKind::File(f),
                        parent: Some(dir_node),
                    });
                }
            }
            trees.push(RepoTree { repo: r, nodes });
        }

        let mut records = Vec::new();
        let before_t1 = |rng: &mut ChaCha8Rng| self.t1 - rng.gen_range(1..SPAN);
        for u in 0..self.users() {
            let k = self.slot_of(u);
            let p = self.preferred_repo(u);
            let n_train = self.train_commits_of(u);
            let mut pools = [
                self.dir_files(p, k),
                self.dir_files(self.secondary_repo(u), k),
            ];
            for pool in &mut pools {
                pool.shuffle(&mut rng);
            }
            let mut used = [0usize; 2];
            let windows = [(n_train, 0), (self.val_commits, 1), (self.test_commits, 2)];
            for (count, window) in windows {
                for _ in 0..count {
                    let side =
                        usize::from(self.repos_per_group > 1 && !rng.gen_bool(self.preferred_prob));
                    let f = pools[side][used[side]];
                    used[side] += 1;
                    let ts = match window {
                        0 => before_t1(&mut rng),
                        1 => rng.gen_range(self.t1..self.t2),
                        _ => self.t2 + rng.gen_range(0..SPAN),
                    };
                    records.push(InteractionRecord::commit(u, f, ts));
                }
            }
            records.push(InteractionRecord::project(
                u,
                p,
                Behavior::Star,
                before_t1(&mut rng),
            ));
            if rng.gen_bool(self.watch_prob) {
                records.push(InteractionRecord::project(
                    u,
                    p,
                    Behavior::Watch,
                    before_t1(&mut rng),
                ));
            }
        }
        records.sort_by_key(|r| (r.timestamp, r.user, r.target));

        Dataset {
            users,
            repos,
            files,
            dirs,
            trees,
            records,
        }
    }

    /// Theme tokens shared by directory slot `k` across the group, a
    /// repository marker, and global noise tokens.
    fn content(&self, group: usize, repo: usize, k: usize, rng: &mut ChaCha8Rng) -> String {
        let themes = [
            format!("g{group}k{k}alpha"),
            format!("g{group}k{k}beta"),
            format!("repo{repo}"),
        ];
        let words: Vec<String> = (0..self.tokens_per_file)
            .map(|_| {
                if rng.gen_bool(0.6) {
                    themes[rng.gen_range(0..3)].clone()
                } else {
                    format!("noise{}", rng.gen_range(0..self.noise_vocabulary.max(1)))
                }
            })
            .collect();
        words.join(" ")
    }

    /// Dense stand-in for encoder outputs: each file's segments are its
    /// theme vector plus small noise.
    pub fn segment_features(
        &self,
        dataset: &Dataset,
        n_segments: usize,
        d_in: usize,
    ) -> SegmentFeatures {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0xfea7);
        let themes: Vec<Vec<f32>> = (0..self.groups * self.dirs_per_repo)
            .map(|_| (0..d_in).map(|_| rng.gen_range(-1.0f32..1.0)).collect())
            .collect();
        let mut values = Vec::with_capacity(dataset.files.len() * n_segments * d_in);
        for f in 0..dataset.files.len() {
            let slot = f / self.files_per_dir;
            let theme = &themes[(slot / (self.repos_per_group * self.dirs_per_repo))
                * self.dirs_per_repo
                + slot % self.dirs_per_repo];
            for _ in 0..n_segments {
                values.extend(theme.iter().map(|t| t + rng.gen_range(-0.1f32..0.1)));
            }
        }
        SegmentFeatures {
            n_segments,
            d_in,
            file_ids: dataset.files.iter().map(|f| f.raw_id.clone()).collect(),
            values,
        }
    }
}

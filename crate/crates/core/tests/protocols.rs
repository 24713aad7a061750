mod common;

use std::collections::BTreeSet;

use coderec_core::autodiff::Tensor;
use coderec_core::config::{ModelKind, Protocol, RunConfig};
use coderec_core::dataset::synthetic::SyntheticConfig;
use coderec_core::dataset::{Behavior, Dataset, InteractionRecord};
use coderec_core::eval::{
    compute_ranking_metrics, evaluate_tasks, rank_by_score, run_baseline, train_and_evaluate,
    EvalContext, RankingTask, Target, TaskSet,
};
use coderec_core::model::Embeddings;
use coderec_core::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random 1-d embeddings: every ranking is a uniform random permutation.
fn random_embeddings(users: usize, files: usize, seed: u64) -> Embeddings<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Embeddings {
        users: Tensor::filled(users, 1, 1.0),
        files: Tensor::from_fn(files, 1, |_, _| rng.gen::<f64>()),
    }
}

#[test]
fn random_scores_hit_at_five_is_five_percent() {
    let users = 2000;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let tasks: Vec<RankingTask> = (0..users)
        .map(|u| {
            let candidates: Vec<usize> = (u % 7 * 100..u % 7 * 100 + 100).collect();
            let relevant = BTreeSet::from([*candidates.choose(&mut rng).unwrap()]);
            RankingTask {
                user: u,
                candidates,
                relevant,
            }
        })
        .collect();
    let set = TaskSet {
        tasks,
        ..TaskSet::default()
    };
    let emb = random_embeddings(users, 700, 2);
    let report = evaluate_tasks(&emb, &set, &[5], Protocol::Intra, "random");
    assert_eq!(report.evaluated_users, users);
    // One relevant item among 100: P(hit@5) = 5/100.
    let hit = report.get(5).unwrap().hit;
    assert!((hit - 0.05).abs() <= 0.02, "hit@5 {hit}");
}

/// Groups of four repositories. In each group the first half of the users
/// commit to repository A and to a hot block of repository B; the other half
/// commit only to A during training and to the hot block of B in the test
/// window, so their test items sit in a repository they never touched.
fn planted_cross() -> (Dataset, i64, i64) {
    let syn = SyntheticConfig {
        groups: 4,
        repos_per_group: 4,
        users_per_group: 24,
        cold_per_group: 0,
        ..SyntheticConfig::with_seed(21)
    };
    let mut ds = syn.generate();
    let (t1, t2) = (syn.t1, syn.t2);
    let repo_files = ds.repo_files();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut records = Vec::new();
    for g in 0..syn.groups {
        let a = &repo_files[g * syn.repos_per_group];
        let b = &repo_files[g * syn.repos_per_group + 1];
        let a_hot = &a[..10];
        let b_hot = &b[..8];
        let group_users = g * syn.users_per_group..(g + 1) * syn.users_per_group;
        for (k, u) in group_users.enumerate() {
            let core = k % 2 == 0;
            let mut a_pick: Vec<usize> = a_hot.to_vec();
            a_pick.shuffle(&mut rng);
            for &f in &a_pick[..4] {
                records.push(InteractionRecord::commit(u, f, t1 - rng.gen_range(1..1000)));
            }
            records.push(InteractionRecord::project(
                u,
                g * syn.repos_per_group,
                Behavior::Star,
                t1 - 1,
            ));
            let mut b_pick: Vec<usize> = b_hot.to_vec();
            b_pick.shuffle(&mut rng);
            if core {
                for &f in &b_pick[..4] {
                    records.push(InteractionRecord::commit(u, f, t1 - rng.gen_range(1..1000)));
                }
                records.push(InteractionRecord::commit(u, a_pick[5], t2 + 1));
            } else {
                for &f in &b_pick[..2] {
                    records.push(InteractionRecord::commit(u, f, t2 + rng.gen_range(1..1000)));
                }
            }
        }
    }
    records.sort_by_key(|r| (r.timestamp, r.user, r.target));
    ds.records = records;
    (ds, t1, t2)
}

#[test]
fn planted_cross_project_beats_random_threefold() {
    let (ds, t1, t2) = planted_cross();
    let split = ds.split(t1, t2).unwrap();
    let ctx = EvalContext::new(&ds, &split);
    let set = ctx.tasks(Protocol::Cross, Target::Test);
    assert_eq!(set.tasks.len(), 48, "every target user has a cross task");

    // Expected random Hit@20 per task: 1 - C(n - r, 20) / C(n, 20).
    let random: f64 = set
        .tasks
        .iter()
        .map(|t| {
            let (n, r) = (t.candidates.len() as f64, t.relevant.len() as f64);
            let miss: f64 = (0..20)
                .map(|i| (n - r - i as f64) / (n - i as f64))
                .product();
            1.0 - miss
        })
        .sum::<f64>()
        / set.tasks.len() as f64;

    let mut cfg = common::synthetic_run(0, ModelKind::Mf);
    cfg.protocol = Protocol::Cross;
    cfg.ks = vec![20];
    cfg.hyper.epochs = 60;
    let (_, _, report) = train_and_evaluate::<f32>(&ds, &split, None, &cfg).unwrap();
    let hit = report.get(20).unwrap().hit;
    assert!(hit >= 3.0 * random, "hit@20 {hit} vs random {random}");
}

#[test]
fn mf_beats_random_ndcg_on_synthetic() {
    let (_, ds, split) = common::synthetic(4);
    let ctx = EvalContext::new(&ds, &split);
    let set = ctx.tasks(Protocol::Intra, Target::Test);
    let random = evaluate_tasks(
        &random_embeddings(ds.dims().users, ds.dims().files, 5),
        &set,
        &[10],
        Protocol::Intra,
        "random",
    )
    .ndcg(10);
    let cfg = RunConfig {
        ks: vec![10],
        ..common::synthetic_run(4, ModelKind::Mf)
    };
    let report = run_baseline("MF", &ds, &split, &cfg).unwrap();
    assert!(report.ndcg(10) > random, "{} vs {random}", report.ndcg(10));
}

#[test]
fn unknown_baseline_is_an_argument_error() {
    let (_, ds, split) = common::synthetic(0);
    let err = run_baseline("BPR-MF++", &ds, &split, &RunConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Argument(_)), "{err}");
}

#[test]
fn intra_and_cross_candidates_partition_non_train_files() {
    let (_, ds, split) = common::synthetic(2);
    let ctx = EvalContext::new(&ds, &split);
    for u in 0..ctx.users {
        let intra: BTreeSet<usize> = ctx.intra_candidates(u).into_iter().collect();
        let cross: BTreeSet<usize> = ctx.cross_candidates(u).into_iter().collect();
        assert!(intra.is_disjoint(&cross));
        let union: BTreeSet<usize> = intra.union(&cross).copied().collect();
        let expected: BTreeSet<usize> = (0..ctx.files)
            .filter(|f| !ctx.train_positives[u].contains(f))
            .collect();
        assert_eq!(union, expected, "user {u}");
    }
}

#[test]
fn task_relevant_items_are_candidates() {
    let (_, ds, split) = common::synthetic(3);
    let ctx = EvalContext::new(&ds, &split);
    for protocol in [Protocol::Intra, Protocol::Cross, Protocol::Cold] {
        for t in ctx.tasks(protocol, Target::Test).tasks {
            assert!(t
                .relevant
                .iter()
                .all(|r| t.candidates.binary_search(r).is_ok()));
            assert!(t
                .candidates
                .iter()
                .all(|c| !ctx.train_positives[t.user].contains(c)));
        }
    }
}

proptest! {
    #[test]
    fn promoting_a_relevant_item_never_hurts(
        n in 2usize..30,
        mask in any::<u32>(),
        pos in 1usize..30,
        k in 1usize..30,
    ) {
        let ranked: Vec<usize> = (0..n).collect();
        let relevant: BTreeSet<usize> = (0..n).filter(|i| mask >> (i % 32) & 1 == 1).collect();
        let pos = pos % n;
        prop_assume!(pos > 0 && relevant.contains(&ranked[pos]) && !relevant.is_empty());
        let mut promoted = ranked.clone();
        promoted.swap(pos - 1, pos);
        let before = compute_ranking_metrics(&ranked, &relevant, k).unwrap();
        let after = compute_ranking_metrics(&promoted, &relevant, k).unwrap();
        prop_assert!(after.ndcg >= before.ndcg - 1e-15);
        prop_assert!(after.mrr >= before.mrr);
        prop_assert!(after.hit >= before.hit);
    }

    #[test]
    fn metrics_stay_in_unit_interval(
        n in 1usize..40,
        mask in any::<u64>(),
        k in 1usize..50,
    ) {
        let relevant: BTreeSet<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        prop_assume!(!relevant.is_empty());
        let ranked: Vec<usize> = (0..n).rev().collect();
        let m = compute_ranking_metrics(&ranked, &relevant, k).unwrap();
        for v in m.values() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn shifting_one_users_scores_keeps_the_ranking(
        scores in proptest::collection::vec(-5.0f64..5.0, 1..40),
        shift in -100.0f64..100.0,
    ) {
        let candidates: Vec<usize> = (0..scores.len()).collect();
        let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
        // Shifts can merge nearly tied scores through rounding; only compare
        // when the gaps survive.
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assume!(sorted.windows(2).all(|w| w[1] - w[0] > 1e-9));
        prop_assert_eq!(rank_by_score(&candidates, &scores), rank_by_score(&candidates, &shifted));
    }
}

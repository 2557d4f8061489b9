//! Property suites shared by the per-module test files and the acceptance run.
//!
//! Each suite drives a deterministic proptest runner so a given case count
//! always explores the same inputs.

use std::collections::BTreeSet;

use labelgcn_core::data::{
    generate_synthetic, label_matrix, load_dataset, save_dataset, SynthConfig,
};
use labelgcn_core::graph::{
    build_knowledge_graph, cogrouping_matrix, cooccurrence_from_indices, load_groups,
    normalize_adjacency, propagation_matrix, random_graph, save_groups, DifferentialGroups,
    GraphSource, LabelGraph, LabelVocabulary, PropagationMatrix,
};
use labelgcn_core::metrics::{
    binarize, evaluate_scores, hamming_loss, mean_average_precision, one_error, ranking_loss,
    top_n_accuracy, MetricsReport,
};
use labelgcn_core::model::{
    bce_loss, bce_with_logits, fit_linear_baseline, gcn_forward, init_linear_baseline, init_model,
    load_embeddings, logistic, save_embeddings, train, Checkpoint, TrainConfig,
};
use labelgcn_core::proximity::{
    extract_clusters, pairwise_proximity, proximity_matrix, ClusterSet,
};
use ndarray::Array2;
use proptest::collection::vec;
use proptest::prelude::*;
use proptest::sample::subsequence;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use super::{fixtures, grad, oracle};

pub struct Property {
    pub module: &'static str,
    pub name: &'static str,
    pub cases: u32,
    pub run: fn(u32) -> Result<(), String>,
}

pub fn check<S>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String>
where
    S: Strategy,
{
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner =
        TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

macro_rules! property {
    ($module:literal, $name:ident, $cases:expr) => {
        Property {
            module: $module,
            name: stringify!($name),
            cases: $cases,
            run: $name,
        }
    };
}

pub fn all() -> Vec<Property> {
    vec![
        property!("graphbuild", vocabulary_index_is_inverse, 64),
        property!("graphbuild", cooccurrence_matches_pair_counting, 256),
        property!("graphbuild", cooccurrence_permutation_invariant, 256),
        property!("graphbuild", cooccurrence_monotone_in_t, 256),
        property!("graphbuild", knowledge_graph_is_and, 256),
        property!("graphbuild", random_graph_valid_and_seeded, 128),
        property!("graphbuild", normalization_bounds, 256),
        property!("graphbuild", regular_graph_rows_sum_to_one, 128),
        property!("graphbuild", propagation_matches_brute_force, 128),
        property!("model", forward_deterministic_and_matches_oracle, 128),
        property!("model", identity_propagation_reduces, 128),
        property!("model", loss_nonnegative, 256),
        property!("model", gradients_match_finite_differences, 24),
        property!("model", zero_learning_rate_is_identity, 32),
        property!("model", separable_toy_loss_decreases, 1),
        property!("metrics", metrics_match_oracles, 1000),
        property!("metrics", monotone_transform_invariance, 256),
        property!("metrics", top_n_nondecreasing, 256),
        property!("metrics", one_error_complements_top1, 256),
        property!("metrics", metric_ranges, 256),
        property!("proximity", proximity_symmetric_and_affine, 256),
        property!("proximity", proximity_matrix_bounds, 128),
        property!("proximity", clusters_partition_and_coarsen, 256),
        property!("data", synthetic_subsets_and_determinism, 32),
        property!("data", cooccurrence_recovers_planted_groups, 4),
        property!("data", label_matrix_counts, 64),
        property!("data", round_trip_io, 24),
    ]
}

fn fail(msg: impl Into<String>) -> TestCaseError {
    TestCaseError::fail(msg.into())
}

fn ok_or_fail<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, TestCaseError> {
    r.map_err(|e| fail(e.to_string()))
}

// ---------------------------------------------------------------- graphbuild

/// (C, samples as sorted label sets).
fn label_sets() -> impl Strategy<Value = (usize, Vec<Vec<usize>>)> {
    (2usize..8).prop_flat_map(|c| {
        let sample = vec(0..c, 1..=c).prop_map(|mut s| {
            s.sort_unstable();
            s.dedup();
            s
        });
        (Just(c), vec(sample, 1..30))
    })
}

fn graph_strategy(max_c: usize) -> impl Strategy<Value = LabelGraph> {
    (2usize..max_c)
        .prop_flat_map(|c| (Just(c), vec(any::<bool>(), c * (c - 1) / 2)))
        .prop_map(|(c, bits)| fixtures::random_graph_from_bits(c, &bits))
}

pub fn vocabulary_index_is_inverse(cases: u32) -> Result<(), String> {
    let strategy = proptest::collection::btree_set("[a-zA-Z ]{1,12}", 2..20);
    check(cases, strategy, |labels| {
        let labels: Vec<String> = labels
            .into_iter()
            .filter(|l| !l.trim().is_empty() && l.trim() == l)
            .collect();
        prop_assume!(labels.len() >= 2);
        let vocab = ok_or_fail(LabelVocabulary::new(labels.clone()))?;
        for (i, l) in labels.iter().enumerate() {
            prop_assert_eq!(vocab.position(l), Some(i));
            prop_assert_eq!(vocab.label(i), Some(l.as_str()));
        }
        let parsed = ok_or_fail(LabelVocabulary::parse(&(labels.join("\n") + "\n")))?;
        prop_assert_eq!(parsed, vocab);
        Ok(())
    })
}

pub fn cooccurrence_matches_pair_counting(cases: u32) -> Result<(), String> {
    check(cases, (label_sets(), 0.0f64..=1.0), |((c, samples), t)| {
        let g = ok_or_fail(cooccurrence_from_indices(&samples, c, t))?;
        prop_assert_eq!(g.edges(), &oracle::cooccurrence(&samples, c, t));
        Ok(())
    })
}

pub fn cooccurrence_permutation_invariant(cases: u32) -> Result<(), String> {
    let strategy = (label_sets(), 0.0f64..=1.0).prop_flat_map(|((c, samples), t)| {
        (
            Just(c),
            Just(samples.clone()),
            Just(samples).prop_shuffle(),
            Just(t),
        )
    });
    check(cases, strategy, |(c, samples, shuffled, t)| {
        let a = ok_or_fail(cooccurrence_from_indices(&samples, c, t))?;
        let b = ok_or_fail(cooccurrence_from_indices(&shuffled, c, t))?;
        prop_assert_eq!(a.edges(), b.edges());
        Ok(())
    })
}

pub fn cooccurrence_monotone_in_t(cases: u32) -> Result<(), String> {
    check(
        cases,
        (label_sets(), 0.0f64..=1.0, 0.0f64..=1.0),
        |((c, samples), a, b)| {
            let (t1, t2) = if a <= b { (a, b) } else { (b, a) };
            let low = ok_or_fail(cooccurrence_from_indices(&samples, c, t1))?;
            let high = ok_or_fail(cooccurrence_from_indices(&samples, c, t2))?;
            for (&h, &l) in high.edges().iter().zip(low.edges().iter()) {
                prop_assert!(h <= l, "edge at t={} missing at t={}", t2, t1);
            }
            Ok(())
        },
    )
}

fn groups_strategy(c: usize) -> impl Strategy<Value = Vec<Vec<usize>>> {
    vec(subsequence((0..c).collect::<Vec<_>>(), 2..=c), 1..5)
}

fn to_groups(id: &str, groups: &[Vec<usize>], vocab: &LabelVocabulary) -> DifferentialGroups {
    let groups = groups
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let members: BTreeSet<String> = g
                .iter()
                .map(|&i| vocab.label(i).unwrap().to_string())
                .collect();
            (k as i64, members)
        })
        .collect();
    DifferentialGroups::new(id, groups).unwrap()
}

pub fn knowledge_graph_is_and(cases: u32) -> Result<(), String> {
    let strategy = (2usize..9).prop_flat_map(|c| (Just(c), groups_strategy(c), groups_strategy(c)));
    check(cases, strategy, |(c, ga, gb)| {
        let vocab = LabelVocabulary::synthetic(c).unwrap();
        let a = to_groups("a", &ga, &vocab);
        let b = to_groups("b", &gb, &vocab);
        let g = ok_or_fail(build_knowledge_graph(&a, &b, &vocab))?;
        let ma = ok_or_fail(cogrouping_matrix(&a, &vocab))?;
        let mb = ok_or_fail(cogrouping_matrix(&b, &vocab))?;
        prop_assert_eq!(g.edges(), &(&ma * &mb));
        let both: BTreeSet<_> = oracle::cogrouped_pairs(&ga)
            .intersection(&oracle::cogrouped_pairs(&gb))
            .copied()
            .collect();
        let got: BTreeSet<_> = g.edge_list().into_iter().collect();
        prop_assert_eq!(got, both);
        Ok(())
    })
}

pub fn random_graph_valid_and_seeded(cases: u32) -> Result<(), String> {
    check(
        cases,
        (2usize..30, 0.0f64..=1.0, any::<u64>()),
        |(c, density, seed)| {
            let g = ok_or_fail(random_graph(c, density, seed))?;
            prop_assert_eq!(&g, &ok_or_fail(random_graph(c, density, seed))?);
            let e = g.edges();
            for i in 0..c {
                prop_assert_eq!(e[[i, i]], 0);
                for j in 0..c {
                    prop_assert_eq!(e[[i, j]], e[[j, i]]);
                    prop_assert!(e[[i, j]] <= 1);
                }
            }
            Ok(())
        },
    )
}

pub fn normalization_bounds(cases: u32) -> Result<(), String> {
    check(cases, graph_strategy(14), |g| {
        let adj = normalize_adjacency(&g);
        let m = adj.matrix();
        let c = g.size();
        for i in 0..c {
            for j in 0..c {
                prop_assert!((m[[i, j]] - m[[j, i]]).abs() <= 1e-12);
                prop_assert!(m[[i, j]] >= 0.0);
                prop_assert!((m[[i, j]] - oracle::normalized(g.edges())[[i, j]]).abs() <= 1e-12);
            }
        }
        prop_assert!(adj.spectral_radius(500) <= 1.0 + 1e-9);
        prop_assert!(oracle::spectral_radius(m, 500) <= 1.0 + 1e-9);
        Ok(())
    })
}

pub fn regular_graph_rows_sum_to_one(cases: u32) -> Result<(), String> {
    // circulant graphs are regular: i ~ i +- o for every chosen offset o
    let strategy = (3usize..16).prop_flat_map(|c| {
        let offsets: Vec<usize> = (1..=c / 2).collect();
        (Just(c), subsequence(offsets.clone(), 0..=offsets.len()))
    });
    check(cases, strategy, |(c, offsets)| {
        let mut edges = BTreeSet::new();
        for i in 0..c {
            for &o in &offsets {
                let j = (i + o) % c;
                edges.insert((i.min(j), i.max(j)));
            }
        }
        let edges: Vec<_> = edges.into_iter().collect();
        let g = ok_or_fail(LabelGraph::from_edges(c, &edges, GraphSource::Knowledge))?;
        let d0 = g.degree(0);
        prop_assume!((0..c).all(|i| g.degree(i) == d0));
        let adj = normalize_adjacency(&g);
        for row in adj.matrix().rows() {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-12, "row sum {}", row.sum());
        }
        Ok(())
    })
}

pub fn propagation_matches_brute_force(cases: u32) -> Result<(), String> {
    check(cases, (graph_strategy(12), 1usize..6), |(g, k)| {
        let adj = normalize_adjacency(&g);
        let p = ok_or_fail(propagation_matrix(&adj, k))?;
        prop_assert_eq!(p.order(), k);
        if k == 1 {
            prop_assert_eq!(p.matrix(), adj.matrix());
        }
        let brute = oracle::matpow(adj.matrix(), k);
        for (a, b) in p.matrix().iter().zip(brute.iter()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        Ok(())
    })
}

// --------------------------------------------------------------------- model

/// (C, d0, d1, d_feat, adapter, seed, graph bits)
fn model_shape() -> impl Strategy<Value = (usize, usize, usize, usize, bool, u64, Vec<bool>)> {
    (
        2usize..6,
        1usize..5,
        1usize..5,
        1usize..5,
        any::<bool>(),
        any::<u64>(),
    )
        .prop_flat_map(|(c, d0, d1, df, ad, seed)| {
            (
                Just(c),
                Just(d0),
                Just(d1),
                Just(df),
                Just(ad),
                Just(seed),
                vec(any::<bool>(), c * (c - 1) / 2),
            )
        })
}

fn propagation_pair(g: &LabelGraph) -> (PropagationMatrix, PropagationMatrix) {
    let adj = normalize_adjacency(g);
    (
        propagation_matrix(&adj, 1).unwrap(),
        propagation_matrix(&adj, 2).unwrap(),
    )
}

pub fn forward_deterministic_and_matches_oracle(cases: u32) -> Result<(), String> {
    check(cases, model_shape(), |(c, d0, d1, df, ad, seed, bits)| {
        let model = fixtures::random_model(&fixtures::small_config(d0, d1, df, ad), c, seed);
        let (p1, p2) = propagation_pair(&fixtures::random_graph_from_bits(c, &bits));
        let (a, _) = ok_or_fail(gcn_forward(&model, &p1, &p2))?;
        let (b, _) = ok_or_fail(gcn_forward(&model, &p1, &p2))?;
        prop_assert_eq!(&a, &b);
        let want = oracle::forward(
            p1.matrix(),
            p2.matrix(),
            &model.embeddings,
            &model.w1,
            &model.w2,
            0.2,
        );
        for (x, y) in a.iter().zip(want.iter()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        Ok(())
    })
}

pub fn identity_propagation_reduces(cases: u32) -> Result<(), String> {
    check(cases, model_shape(), |(c, d0, d1, df, ad, seed, _)| {
        let mut model = fixtures::random_model(&fixtures::small_config(d0, d1, df, ad), c, seed);
        // nonnegative Z and W1 keep every pre-activation on the identity branch
        model.embeddings.mapv_inplace(f64::abs);
        model.w1.mapv_inplace(f64::abs);
        let p1 = PropagationMatrix::identity(c, 1).unwrap();
        let p2 = PropagationMatrix::identity(c, 2).unwrap();
        let (w, _) = ok_or_fail(gcn_forward(&model, &p1, &p2))?;
        let direct = oracle::matmul(&oracle::matmul(&model.embeddings, &model.w1), &model.w2);
        for (x, y) in w.iter().zip(direct.iter()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        Ok(())
    })
}

pub fn loss_nonnegative(cases: u32) -> Result<(), String> {
    let strategy = (1usize..6, 1usize..6).prop_flat_map(|(n, c)| {
        (
            Just((n, c)),
            vec(-12.0f64..12.0, n * c),
            vec(0u8..=1, n * c),
        )
    });
    check(cases, strategy, |((n, c), logits, targets)| {
        let logits = Array2::from_shape_vec((n, c), logits).unwrap();
        let targets = Array2::from_shape_vec((n, c), targets).unwrap();
        let l = ok_or_fail(bce_with_logits(&logits, &targets))?;
        prop_assert!(l >= 0.0);
        prop_assert!((l - oracle::bce_naive(&logits, &targets)).abs() <= 1e-9);
        let scores = logits.mapv(|x| logistic(x / 4.0));
        prop_assert!(ok_or_fail(bce_loss(&scores, &targets))? >= 0.0);
        Ok(())
    })
}

pub fn gradients_match_finite_differences(cases: u32) -> Result<(), String> {
    let strategy = (model_shape(), 1usize..4, any::<u64>());
    check(
        cases,
        strategy,
        |((c, d0, d1, df, ad, seed, bits), n, data_seed)| {
            let model = fixtures::random_model(&fixtures::small_config(d0, d1, df, ad), c, seed);
            let (p1, p2) = propagation_pair(&fixtures::random_graph_from_bits(c, &bits));
            let mut r = fixtures::rng(data_seed);
            let x = fixtures::random_matrix(&mut r, n, df);
            let y = fixtures::random_targets(&mut r, n, c);
            let report = grad::check_gradients(&model, &p1, &p2, &x, &y, 1e-5);
            prop_assert!(report.max_rel < 1e-4, "{:?}", report);
            Ok(())
        },
    )
}

pub fn zero_learning_rate_is_identity(cases: u32) -> Result<(), String> {
    check(
        cases,
        (any::<u64>(), 1usize..3, any::<bool>()),
        |(seed, epochs, ad)| {
            let data = fixtures::random_dataset(seed, 7, 3, 2);
            let model = init_model(&fixtures::small_config(2, 3, 2, ad), 3, seed, None).unwrap();
            let (p1, p2) =
                propagation_pair(&fixtures::random_graph_from_bits(3, &[true, false, true]));
            let tc = TrainConfig {
                learning_rate: 0.0,
                epochs,
                batch_size: 3,
                seed,
                weight_decay: 0.1,
                ..TrainConfig::default()
            };
            let (trained, history) = ok_or_fail(train(&data, &p1, &p2, model.clone(), &tc))?;
            prop_assert_eq!(&trained, &model);
            prop_assert_eq!(history.epoch_loss.len(), epochs);
            let linear = init_linear_baseline(3, 2, seed).unwrap();
            let (fitted, _) = ok_or_fail(fit_linear_baseline(linear.clone(), &data, &tc, None))?;
            prop_assert_eq!(fitted, linear);
            Ok(())
        },
    )
}

/// Deterministic: the epoch-500 loss on the separable toy is below epoch 1.
pub fn separable_toy_loss_decreases(_cases: u32) -> Result<(), String> {
    let data = fixtures::separable_toy(8);
    let model = init_model(&fixtures::small_config(4, 8, 2, true), 2, 0, None).unwrap();
    let g = LabelGraph::from_edges(2, &[], GraphSource::Knowledge).unwrap();
    let (p1, p2) = propagation_pair(&g);
    let tc = TrainConfig {
        learning_rate: 0.05,
        epochs: 500,
        batch_size: 4,
        ..TrainConfig::default()
    };
    let (_, history) = train(&data, &p1, &p2, model, &tc).map_err(|e| e.to_string())?;
    let (first, last) = (history.epoch_loss[0], history.epoch_loss[499]);
    if last < first {
        Ok(())
    } else {
        Err(format!(
            "epoch 500 loss {last} not below epoch 1 loss {first}"
        ))
    }
}

// ------------------------------------------------------------------- metrics

/// Scores on a coarse grid (so ties are common) and targets where every row
/// has at least one relevant and one irrelevant label.
pub fn metric_instance() -> impl Strategy<Value = (Array2<f64>, Array2<u8>)> {
    (1usize..=8, 2usize..=6).prop_flat_map(|(n, c)| {
        (
            vec(0u32..16, n * c),
            vec(0u8..=1, n * c),
            vec((0..c, 0..c), n),
        )
            .prop_map(move |(s, t, fix)| {
                let scores = Array2::from_shape_vec(
                    (n, c),
                    s.into_iter().map(|v| v as f64 / 16.0).collect(),
                )
                .unwrap();
                let mut targets = Array2::from_shape_vec((n, c), t).unwrap();
                for (i, (on, off)) in fix.into_iter().enumerate() {
                    let mut r = targets.row_mut(i);
                    if r.iter().all(|&v| v == 0) {
                        r[on] = 1;
                    }
                    if r.iter().all(|&v| v == 1) {
                        r[off] = 0;
                    }
                }
                (scores, targets)
            })
    })
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

/// Every metric against its brute-force oracle; returns a description of
/// the first mismatch.
pub fn compare_to_oracles(scores: &Array2<f64>, targets: &Array2<u8>) -> Result<(), String> {
    let thr = 0.5;
    let pred = binarize(scores, thr);
    let mut checks = vec![
        (
            "hamming_loss",
            hamming_loss(&pred, targets),
            oracle::hamming(&pred, targets),
        ),
        (
            "ranking_loss",
            ranking_loss(scores, targets),
            oracle::ranking_loss(scores, targets),
        ),
        (
            "one_error",
            one_error(scores, targets),
            oracle::one_error(scores, targets),
        ),
        (
            "mean_average_precision",
            mean_average_precision(scores, targets),
            oracle::map(scores, targets),
        ),
    ];
    for k in 1..=scores.ncols() {
        checks.push((
            "top_n_accuracy",
            top_n_accuracy(scores, targets, k),
            oracle::top_n(scores, targets, k),
        ));
    }
    for (name, got, want) in checks {
        let got = got.map_err(|e| format!("{name}: {e}"))?;
        if !close(got, want) {
            return Err(format!(
                "{name}: {got} vs oracle {want} on scores {scores:?} targets {targets:?}"
            ));
        }
    }
    Ok(())
}

pub fn metrics_match_oracles(cases: u32) -> Result<(), String> {
    check(cases, metric_instance(), |(s, t)| {
        compare_to_oracles(&s, &t).map_err(fail)
    })
}

pub fn monotone_transform_invariance(cases: u32) -> Result<(), String> {
    check(cases, metric_instance(), |(s, t)| {
        // strictly increasing and injective on the 1/16 grid
        let f = s.mapv(|v| (3.0 * v).exp() + v.powi(3) - 7.0);
        prop_assert_eq!(
            ok_or_fail(ranking_loss(&s, &t))?,
            ok_or_fail(ranking_loss(&f, &t))?
        );
        prop_assert_eq!(
            ok_or_fail(one_error(&s, &t))?,
            ok_or_fail(one_error(&f, &t))?
        );
        prop_assert_eq!(
            ok_or_fail(mean_average_precision(&s, &t))?,
            ok_or_fail(mean_average_precision(&f, &t))?
        );
        for k in 1..=s.ncols() {
            prop_assert_eq!(
                ok_or_fail(top_n_accuracy(&s, &t, k))?,
                ok_or_fail(top_n_accuracy(&f, &t, k))?
            );
        }
        Ok(())
    })
}

pub fn top_n_nondecreasing(cases: u32) -> Result<(), String> {
    check(cases, metric_instance(), |(s, t)| {
        let accs: Vec<f64> = (1..=s.ncols())
            .map(|k| top_n_accuracy(&s, &t, k).unwrap())
            .collect();
        prop_assert!(accs.windows(2).all(|w| w[0] <= w[1]), "{:?}", accs);
        prop_assert_eq!(*accs.last().unwrap(), 1.0);
        Ok(())
    })
}

pub fn one_error_complements_top1(cases: u32) -> Result<(), String> {
    check(cases, metric_instance(), |(s, t)| {
        let oe = ok_or_fail(one_error(&s, &t))?;
        let top1 = ok_or_fail(top_n_accuracy(&s, &t, 1))?;
        prop_assert!(close(oe, 1.0 - top1));
        Ok(())
    })
}

pub fn metric_ranges(cases: u32) -> Result<(), String> {
    check(cases, (metric_instance(), 0.0f64..=1.0), |((s, t), thr)| {
        let r = ok_or_fail(evaluate_scores(&s, &t, thr, None))?;
        for v in [
            r.hamming_loss,
            r.ranking_loss,
            r.one_error,
            r.map,
            r.top1_acc,
            r.top3_acc,
            r.top5_acc,
        ] {
            prop_assert!((0.0..=1.0).contains(&v), "{} out of range", v);
        }
        prop_assert!(r.top1_acc <= r.top3_acc && r.top3_acc <= r.top5_acc);
        Ok(())
    })
}

// ----------------------------------------------------------------- proximity

fn centered_norm(u: &[f64]) -> f64 {
    let m = u.iter().sum::<f64>() / u.len() as f64;
    u.iter().map(|x| (x - m) * (x - m)).sum::<f64>().sqrt()
}

pub fn proximity_symmetric_and_affine(cases: u32) -> Result<(), String> {
    let strategy = (2usize..10).prop_flat_map(|d| {
        (
            vec(-5.0f64..5.0, d),
            vec(-5.0f64..5.0, d),
            0.1f64..10.0,
            -10.0f64..10.0,
        )
    });
    check(cases, strategy, |(u, v, a, b)| {
        prop_assume!(centered_norm(&u) > 1e-2 && centered_norm(&v) > 1e-2);
        let p = ok_or_fail(pairwise_proximity(&u, &v))?;
        prop_assert_eq!(p, ok_or_fail(pairwise_proximity(&v, &u))?);
        prop_assert!((p - oracle::proximity(&u, &v)).abs() <= 1e-12);
        let affine: Vec<f64> = u.iter().map(|x| a * x + b).collect();
        prop_assert!((ok_or_fail(pairwise_proximity(&affine, &v))? - p).abs() <= 1e-9);
        let affine_v: Vec<f64> = v.iter().map(|x| a * x + b).collect();
        prop_assert!((ok_or_fail(pairwise_proximity(&u, &affine_v))? - p).abs() <= 1e-9);
        let negated: Vec<f64> = u.iter().map(|x| -a * x + b).collect();
        prop_assert!((ok_or_fail(pairwise_proximity(&negated, &v))? + p).abs() <= 1e-9);
        Ok(())
    })
}

fn node_matrix() -> impl Strategy<Value = Array2<f64>> {
    (2usize..9, 2usize..8).prop_flat_map(|(n, d)| {
        vec(-3.0f64..3.0, n * d).prop_map(move |v| Array2::from_shape_vec((n, d), v).unwrap())
    })
}

pub fn proximity_matrix_bounds(cases: u32) -> Result<(), String> {
    check(cases, node_matrix(), |nodes| {
        let p = ok_or_fail(proximity_matrix(&nodes))?;
        let m = p.matrix();
        let n = nodes.nrows();
        for i in 0..n {
            prop_assert_eq!(m[[i, i]], 1.0);
            for j in 0..n {
                prop_assert!(m[[i, j]].abs() <= 1.0 + 1e-12);
                prop_assert_eq!(m[[i, j]], m[[j, i]]);
                let want = oracle::proximity(&nodes.row(i).to_vec(), &nodes.row(j).to_vec());
                prop_assert!((m[[i, j]] - want).abs() <= 1e-12);
            }
        }
        Ok(())
    })
}

fn assert_partition(c: &ClusterSet, n: usize) -> Result<(), TestCaseError> {
    let mut seen = vec![0usize; n];
    for cluster in c.clusters() {
        for &i in cluster {
            seen[i] += 1;
        }
    }
    prop_assert!(
        seen.iter().all(|&k| k == 1),
        "not a partition: {:?}",
        c.clusters()
    );
    Ok(())
}

pub fn clusters_partition_and_coarsen(cases: u32) -> Result<(), String> {
    check(
        cases,
        (node_matrix(), -0.99f64..0.99, -0.99f64..0.99),
        |(nodes, a, b)| {
            let p = ok_or_fail(proximity_matrix(&nodes))?;
            let n = nodes.nrows();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let coarse = extract_clusters(&p, lo);
            let fine = extract_clusters(&p, hi);
            assert_partition(&coarse, n)?;
            assert_partition(&fine, n)?;
            for cluster in fine.clusters() {
                let home = coarse.cluster_of(cluster[0]);
                prop_assert!(cluster.iter().all(|&i| coarse.cluster_of(i) == home));
            }
            // connectivity oracle: transitive closure of p >= threshold
            let mut reach =
                Array2::from_shape_fn((n, n), |(i, j)| i == j || p.matrix()[[i, j]] >= hi);
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        if reach[[i, k]] && reach[[k, j]] {
                            reach[[i, j]] = true;
                        }
                    }
                }
            }
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(reach[[i, j]], fine.cluster_of(i) == fine.cluster_of(j));
                }
            }
            Ok(())
        },
    )
}

// ---------------------------------------------------------------------- data

fn small_synth() -> impl Strategy<Value = SynthConfig> {
    (
        4usize..20,
        1usize..5,
        1usize..5,
        1usize..60,
        1usize..30,
        0.0f64..2.0,
        any::<u64>(),
    )
        .prop_map(|(c, k, d, n_train, n_test, noise, seed)| SynthConfig {
            num_labels: c,
            n_clusters: k.min(c),
            feature_dim: d,
            n_train,
            n_test,
            noise,
            seed,
            ..SynthConfig::default()
        })
}

pub fn synthetic_subsets_and_determinism(cases: u32) -> Result<(), String> {
    check(cases, small_synth(), |cfg| {
        let a = ok_or_fail(generate_synthetic(&cfg))?;
        let b = ok_or_fail(generate_synthetic(&cfg))?;
        prop_assert_eq!(&a.train, &b.train);
        prop_assert_eq!(&a.test, &b.test);
        prop_assert_eq!(&a.true_groups, &b.true_groups);
        for (set, complete) in [(&a.train, &a.train_complete), (&a.test, &a.test_complete)] {
            for (s, full) in set.samples().iter().zip(complete) {
                prop_assert!(s.labels().iter().all(|l| full.contains(l)));
                // a complete set never straddles two planted groups
                let g = a.true_groups.cluster_of(full[0]);
                prop_assert!(full.iter().all(|&l| a.true_groups.cluster_of(l) == g));
            }
        }
        Ok(())
    })
}

pub fn cooccurrence_recovers_planted_groups(cases: u32) -> Result<(), String> {
    check(cases, (any::<u64>(), 0.001f64..=0.05), |(seed, t)| {
        let cfg = SynthConfig {
            seed,
            ..SynthConfig::default()
        };
        let data = ok_or_fail(generate_synthetic(&cfg))?;
        let g = ok_or_fail(cooccurrence_from_indices(
            &data.train_complete,
            cfg.num_labels,
            t,
        ))?;
        for (i, j) in g.edge_list() {
            prop_assert_eq!(
                data.true_groups.cluster_of(i),
                data.true_groups.cluster_of(j)
            );
        }
        Ok(())
    })
}

pub fn label_matrix_counts(cases: u32) -> Result<(), String> {
    check(
        cases,
        (any::<u64>(), 1usize..20, 2usize..8),
        |(seed, n, c)| {
            let data = fixtures::random_dataset(seed, n, c, 3);
            let y = label_matrix(&data);
            for (row, s) in y.rows().into_iter().zip(data.samples()) {
                prop_assert_eq!(
                    row.iter().map(|&v| v as usize).sum::<usize>(),
                    s.labels().len()
                );
                for &l in s.labels() {
                    prop_assert_eq!(row[l], 1);
                }
            }
            Ok(())
        },
    )
}

pub fn round_trip_io(cases: u32) -> Result<(), String> {
    check(
        cases,
        (small_synth(), graph_strategy(10), any::<u64>()),
        |(cfg, g, seed)| {
            let dir = tempfile::tempdir().unwrap();
            let path = |name: &str| dir.path().join(name);
            let data = ok_or_fail(generate_synthetic(&cfg))?;
            let vocab = data.train.vocab().clone();

            ok_or_fail(vocab.save(path("vocab.txt")))?;
            prop_assert_eq!(
                &ok_or_fail(LabelVocabulary::load(path("vocab.txt")))?,
                &vocab
            );

            ok_or_fail(save_dataset(&data.train, path("train.jsonl")))?;
            prop_assert_eq!(
                &ok_or_fail(load_dataset(path("train.jsonl"), &vocab))?,
                &data.train
            );

            let groups = to_groups("reader", &[vec![0, 1], (0..vocab.len()).collect()], &vocab);
            ok_or_fail(save_groups([&groups], path("groups.json")))?;
            prop_assert_eq!(
                ok_or_fail(load_groups(path("groups.json")))?.remove("reader"),
                Some(groups)
            );

            ok_or_fail(g.save(path("graph.txt")))?;
            prop_assert_eq!(&ok_or_fail(LabelGraph::load(path("graph.txt")))?, &g);

            let c = vocab.len();
            let model = fixtures::random_model(
                &fixtures::small_config(3, 2, cfg.feature_dim, seed % 2 == 0),
                c,
                seed,
            );
            let ckpt = Checkpoint::Gcn {
                vocab_fingerprint: vocab.fingerprint(),
                train_config: Some(TrainConfig::default()),
                model: model.clone(),
            };
            ok_or_fail(ckpt.save(path("model.json")))?;
            prop_assert_eq!(&ok_or_fail(Checkpoint::load(path("model.json")))?, &ckpt);
            let linear = Checkpoint::Linear {
                vocab_fingerprint: vocab.fingerprint(),
                train_config: None,
                model: init_linear_baseline(c, cfg.feature_dim, seed).unwrap(),
            };
            ok_or_fail(linear.save(path("linear.json")))?;
            prop_assert_eq!(&ok_or_fail(Checkpoint::load(path("linear.json")))?, &linear);

            ok_or_fail(save_embeddings(&model.embeddings, path("emb.tsv")))?;
            prop_assert_eq!(
                &ok_or_fail(load_embeddings(path("emb.tsv"), c, 3))?,
                &model.embeddings
            );

            let scores = fixtures::random_matrix(&mut fixtures::rng(seed), data.test.len(), c)
                .mapv(logistic);
            let report = ok_or_fail(evaluate_scores(
                &scores,
                &label_matrix(&data.test),
                0.5,
                Some(2),
            ))?;
            ok_or_fail(report.save(path("report.json")))?;
            prop_assert_eq!(
                &ok_or_fail(MetricsReport::load(path("report.json")))?,
                &report
            );
            Ok(())
        },
    )
}

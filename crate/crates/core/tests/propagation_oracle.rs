mod common;

use common::*;
use erase_core::graph::{masked_adjacency, symmetric_normalize, SparseAdjacency};
use erase_core::propagation::{denoise_propagate, init_label_matrix, semantic_propagate, LabelMatrix};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

struct Case {
    dense: DMatrix<f64>,
    sparse: SparseAdjacency,
    labels: Vec<usize>,
    mask: Vec<bool>,
    k: usize,
    alpha: f64,
    steps: usize,
}

fn case(seed: u64) -> Case {
    let mut r = rng(seed);
    let n = r.random_range(1..=8);
    let k = r.random_range(1..=4);
    let dense = random_dense_adjacency(n, r.random_range(0.0..1.0), &mut r);
    let sparse = SparseAdjacency::from_edges(n, &edge_list(&dense)).unwrap();
    Case {
        dense,
        sparse,
        labels: (0..n).map(|_| r.random_range(0..k)).collect(),
        mask: (0..n).map(|_| r.random_bool(0.6)).collect(),
        k,
        alpha: r.random_range(0.0..=1.0),
        steps: r.random_range(0..=8),
    }
}

#[test]
fn denoising_matches_dense_matrix_power() {
    for seed in 0..100 {
        let c = case(seed);
        let l0 = init_label_matrix(&c.labels, &c.mask, c.k).unwrap();
        let adj = symmetric_normalize(&masked_adjacency(&c.sparse, &c.mask).unwrap(), false);
        let got = denoise_propagate(&l0, &adj, c.alpha, c.steps).unwrap();
        let want = dense_propagation(&dense_normalize(&dense_mask(&c.dense, &c.mask)), l0.values(), c.alpha, c.steps);
        let err = (got.values() - &want).amax();
        assert!(err < 1e-10, "seed {seed}: {err:e}");
    }
}

#[test]
fn semantic_stage_matches_dense_matrix_power() {
    for seed in 0..100 {
        let c = case(1000 + seed);
        let mut r = rng(seed);
        let ls = LabelMatrix::new(DMatrix::from_fn(c.labels.len(), c.k, |_, _| r.random_range(0.0..1.0))).unwrap();
        let adj = symmetric_normalize(&c.sparse, false);
        let got = semantic_propagate(&ls, &adj, c.alpha, c.steps).unwrap();
        let want = dense_propagation(&dense_normalize(&c.dense), ls.values(), c.alpha, c.steps);
        let err = (got.values() - &want).amax();
        assert!(err < 1e-10, "seed {seed}: {err:e}");
    }
}

#[test]
fn normalized_adjacency_spectrum_lies_in_unit_interval() {
    // power iteration on Ã² gives the largest |λ| of Ã
    for seed in 0..30 {
        let c = case(2000 + seed);
        let a = symmetric_normalize(&c.sparse, false);
        let n = a.dim();
        let mut v = DMatrix::from_fn(n, 1, |i, _| 1.0 + i as f64 * 0.1);
        let mut lambda = 0.0;
        for _ in 0..500 {
            let w = a.mul_dense(&a.mul_dense(&v));
            let norm = w.norm();
            if norm == 0.0 {
                lambda = 0.0;
                break;
            }
            lambda = norm / v.norm();
            v = w / norm;
        }
        assert!(lambda.sqrt() <= 1.0 + 1e-9, "seed {seed}: spectral radius {}", lambda.sqrt());
    }
}

proptest! {
    #[test]
    fn propagation_is_linear(seed in 0u64..10_000, s in 0.0f64..3.0) {
        let c = case(seed);
        let adj = symmetric_normalize(&c.sparse, false);
        let mut r = rng(seed ^ 7);
        let n = c.labels.len();
        let a = DMatrix::from_fn(n, c.k, |_, _| r.random_range(0.0..1.0));
        let b = DMatrix::from_fn(n, c.k, |_, _| r.random_range(0.0..1.0));
        let run = |m: &DMatrix<f64>| semantic_propagate(&LabelMatrix::new(m.clone()).unwrap(), &adj, c.alpha, c.steps).unwrap().into_inner();
        let combined = run(&(&a + &b * s));
        let separate = run(&a) + run(&b) * s;
        prop_assert!((combined - separate).amax() < 1e-10);
    }

    #[test]
    fn denoising_never_reaches_unlabelled_nodes(seed in 0u64..10_000) {
        let c = case(seed);
        let l0 = init_label_matrix(&c.labels, &c.mask, c.k).unwrap();
        let adj = symmetric_normalize(&masked_adjacency(&c.sparse, &c.mask).unwrap(), false);
        let out = denoise_propagate(&l0, &adj, c.alpha, c.steps).unwrap();
        for (i, &m) in c.mask.iter().enumerate() {
            if !m {
                prop_assert!(out.values().row(i).iter().all(|&v| v == 0.0));
            }
        }
    }
}

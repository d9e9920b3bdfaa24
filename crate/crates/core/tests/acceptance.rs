//! Acceptance harness. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.
//!
//! `ERASE_CORA_BUNDLE=<dir>` additionally runs the optional citation-graph check.

mod common;

use std::time::Instant;

use common::*;
use erase_core::encoder::{backward, forward, init_encoder};
use erase_core::graph::{generate_sbm, load_bundle, masked_adjacency, symmetric_normalize, GraphBundle, SbmConfig, SparseAdjacency};
use erase_core::noise::{corrupt_labels, NoiseKind, NoiseSpec};
use erase_core::propagation::{denoise_propagate, init_label_matrix, semantic_propagate, LabelMatrix, Membership};
use erase_core::rate::{delta_r, delta_r_gradient, ntvr, RateConfig};
use erase_core::trainer::{evaluate, normalize_rows, normalize_rows_backward, train, Objective, RunConfig, TrainOutcome};
use nalgebra::DMatrix;
use rand::Rng;

const BUNDLE_SEED: u64 = 2024;
const SEEDS: u64 = 5;
const SHIFT_GRID: [f64; 7] = [0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0];

struct Verdict {
    name: &'static str,
    status: Option<bool>,
    detail: String,
}

impl Verdict {
    fn new(name: &'static str, pass: bool, detail: String) -> Self {
        Self { name, status: Some(pass), detail }
    }
}

fn gradient_correctness() -> Verdict {
    let t = Instant::now();
    let mut worst = 0f64;
    for seed in 0..20 {
        let mut r = rng(9000 + seed);
        let n = r.random_range(4..=16);
        let d = r.random_range(2..=8);
        let k = r.random_range(1..=4usize).min(n);
        let z = random_matrix(n, d, &mut r);
        let pi = random_membership(n, k, &mut r);
        let cfg = RateConfig::new(r.random_range(0.05..1.0), r.random_range(0.5..3.0)).unwrap();
        let analytic = delta_r_gradient(&z, &pi, &cfg).unwrap();
        let numeric =
            finite_difference(&z, 1e-5, |zz| oracle_delta_r(zz, pi.assignment(), k, cfg.epsilon_sq, cfg.gamma));
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    let secs = t.elapsed().as_secs_f64();
    Verdict::new(
        "gradient correctness",
        worst < 1e-5 && secs < 10.0,
        format!("max rel err {worst:.2e} over 20 instances, {secs:.2} s"),
    )
}

fn end_to_end_gradient() -> Verdict {
    let t = Instant::now();
    let mut worst = 0f64;
    for seed in 0..10 {
        let mut r = rng(9100 + seed);
        let n = r.random_range(4..=12);
        let (d0, d1, d) = (r.random_range(2..=5), r.random_range(2..=6), r.random_range(2..=4));
        let a = random_dense_adjacency(n, 0.4, &mut r);
        let adj = SparseAdjacency::from_edges(n, &edge_list(&a)).unwrap().symmetric_normalize(true);
        let dense_adj = dense_normalize(&(&a + DMatrix::<f64>::identity(n, n)));
        let x = random_matrix(n, d0, &mut r);
        let pi = random_membership(n, r.random_range(1..=3usize).min(n), &mut r);
        let cfg = RateConfig::new(0.5, 2.0).unwrap();
        let state = init_encoder(d0, d1, d, seed).unwrap();
        let objective = |w1: &DMatrix<f64>, w2: &DMatrix<f64>| {
            let h = (&dense_adj * &x * w1).map(|v| v.max(0.0));
            let z = normalize_rows(&(&dense_adj * h * w2));
            oracle_delta_r(&z, pi.assignment(), pi.num_classes(), cfg.epsilon_sq, cfg.gamma)
        };
        let cache = forward(&state, &x, &adj).unwrap();
        let g = delta_r_gradient(&normalize_rows(&cache.z), &pi, &cfg).unwrap();
        let grads = backward(&state, &cache, &normalize_rows_backward(&cache.z, &g), &adj).unwrap();
        let fd1 = finite_difference(&state.w1, 1e-6, |w| objective(w, &state.w2));
        let fd2 = finite_difference(&state.w2, 1e-6, |w| objective(&state.w1, w));
        worst = worst.max(relative_error(&grads.w1, &fd1)).max(relative_error(&grads.w2, &fd2));
    }
    let secs = t.elapsed().as_secs_f64();
    Verdict::new(
        "end-to-end gradient",
        worst < 1e-4 && secs < 30.0,
        format!("max rel err {worst:.2e} over 10 graphs, {secs:.2} s"),
    )
}

fn propagation_oracle() -> Verdict {
    let t = Instant::now();
    let mut worst = 0f64;
    for seed in 0..100 {
        let mut r = rng(9200 + seed);
        let n = r.random_range(1..=8);
        let k = r.random_range(1..=4);
        let dense = random_dense_adjacency(n, r.random_range(0.0..1.0), &mut r);
        let sparse = SparseAdjacency::from_edges(n, &edge_list(&dense)).unwrap();
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let mask: Vec<bool> = (0..n).map(|_| r.random_bool(0.6)).collect();
        let alpha = r.random_range(0.0..=1.0);
        let steps = r.random_range(0..=8);

        let l0 = init_label_matrix(&labels, &mask, k).unwrap();
        let masked = symmetric_normalize(&masked_adjacency(&sparse, &mask).unwrap(), false);
        let got = denoise_propagate(&l0, &masked, alpha, steps).unwrap();
        let want = dense_propagation(&dense_normalize(&dense_mask(&dense, &mask)), l0.values(), alpha, steps);
        worst = worst.max((got.values() - &want).amax());

        let ls = LabelMatrix::new(DMatrix::from_fn(n, k, |_, _| r.random_range(0.0..1.0))).unwrap();
        let got = semantic_propagate(&ls, &symmetric_normalize(&sparse, false), alpha, steps).unwrap();
        let want = dense_propagation(&dense_normalize(&dense), ls.values(), alpha, steps);
        worst = worst.max((got.values() - &want).amax());
    }
    let secs = t.elapsed().as_secs_f64();
    Verdict::new(
        "propagation oracle",
        worst < 1e-10 && secs < 5.0,
        format!("max abs err {worst:.2e} over 100 graphs x 2 stages, {secs:.3} s"),
    )
}

fn noise_statistics() -> Verdict {
    let t = Instant::now();
    let (n, k) = (10_000, 7);
    let mut r = rng(9300);
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
    let mask = vec![true; n];
    let sym = corrupt_labels(&labels, &mask, &NoiseSpec::new(NoiseKind::Symmetric, 0.5, 17).unwrap(), k).unwrap();
    let frac = labels.iter().zip(&sym).filter(|(a, b)| a != b).count() as f64 / n as f64;
    let sigma = (0.25 / n as f64).sqrt();
    let within = (frac - 0.5).abs() <= 3.0 * sigma;
    let asym = corrupt_labels(&labels, &mask, &NoiseSpec::new(NoiseKind::Asymmetric, 1.0, 17).unwrap(), k).unwrap();
    let cyclic = labels.iter().zip(&asym).all(|(&y, &z)| z == (y + 1) % k);
    let secs = t.elapsed().as_secs_f64();
    Verdict::new(
        "noise statistics",
        within && cyclic && secs < 1.0,
        format!("sym flip fraction {frac:.4} (3 sigma = {:.4}), asym cyclic {cyclic}, {secs:.3} s", 3.0 * sigma),
    )
}

fn degenerate_identity() -> Verdict {
    let mut worst_value = 0f64;
    let mut worst_grad = 0f64;
    for seed in 0..20 {
        let mut r = rng(9400 + seed);
        let n = r.random_range(1..=16);
        let z = random_matrix(n, r.random_range(1..=8), &mut r);
        let pi = Membership::from_assignment(vec![0; n], 1).unwrap();
        let cfg = RateConfig::new(r.random_range(0.05..1.0), 1.0).unwrap();
        worst_value = worst_value.max(delta_r(&z, &pi, &cfg).unwrap().abs());
        worst_grad = worst_grad.max(delta_r_gradient(&z, &pi, &cfg).unwrap().amax());
    }
    Verdict::new(
        "degenerate identity",
        worst_value <= 1e-12 && worst_grad <= 1e-12,
        format!("max |dR| {worst_value:.1e}, max |grad| {worst_grad:.1e} over 20 instances"),
    )
}

fn sbm(shift: f64) -> GraphBundle {
    generate_sbm(&SbmConfig { feature_shift: shift, seed: BUNDLE_SEED, ..SbmConfig::default() }).unwrap()
}

fn run(bundle: &GraphBundle, labels: &[usize], cfg: &RunConfig) -> (TrainOutcome, f64) {
    let out = train(bundle, labels, cfg).unwrap();
    let acc = evaluate(bundle, labels, &out, cfg).unwrap().test_acc;
    (out, acc)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Smallest grid shift at which the cross-entropy baseline reaches 0.9 on
/// clean labels, averaged over the seeds.
fn tune_shift() -> (f64, f64) {
    let mut last = (f64::NAN, 0.0);
    for shift in SHIFT_GRID {
        let b = sbm(shift);
        let accs: Vec<f64> = (0..SEEDS)
            .map(|s| run(&b, &b.labels, &RunConfig { objective: Objective::CeBaseline, seed: s, ..RunConfig::default() }).1)
            .collect();
        last = (shift, mean(&accs));
        if last.1 >= 0.9 {
            break;
        }
    }
    last
}

struct SbmRuns {
    shift: f64,
    clean_ce: f64,
    erase: Vec<f64>,
    ce: Vec<f64>,
    no_prop: Vec<f64>,
    plain: Vec<f64>,
    max_cos: Vec<f64>,
    ntvr: Vec<f64>,
    margin_secs: f64,
}

fn sbm_runs() -> SbmRuns {
    let (shift, clean_ce) = tune_shift();
    let b = sbm(shift);
    let mut runs = SbmRuns {
        shift,
        clean_ce,
        erase: vec![],
        ce: vec![],
        no_prop: vec![],
        plain: vec![],
        max_cos: vec![],
        ntvr: vec![],
        margin_secs: 0.0,
    };
    for s in 0..SEEDS {
        let spec = NoiseSpec::new(NoiseKind::Asymmetric, 0.4, 100 + s).unwrap();
        let noisy = corrupt_labels(&b.labels, &b.train_mask(), &spec, b.num_classes).unwrap();
        let base = RunConfig { seed: s, ..RunConfig::default() };

        let t = Instant::now();
        let (erase, acc) = run(&b, &noisy, &base);
        runs.erase.push(acc);
        runs.ce.push(run(&b, &noisy, &RunConfig { objective: Objective::CeBaseline, ..base.clone() }).1);
        runs.margin_secs += t.elapsed().as_secs_f64();

        runs.no_prop.push(run(&b, &noisy, &RunConfig { t1: 0, t2: 0, ..base.clone() }).1);
        runs.plain.push(run(&b, &noisy, &RunConfig { objective: Objective::Mcr2Plain, ..base.clone() }).1);
        runs.max_cos.push(erase.report.prototypes.as_ref().and_then(|p| p.max_abs_cosine()).unwrap_or(f64::NAN));

        let (clean, _) = run(&b, &b.labels, &base);
        runs.ntvr.push(ntvr(&clean.report.z, &erase.report.z, 0.05).unwrap());
    }
    runs
}

fn fmt(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

fn cora() -> Verdict {
    let Ok(dir) = std::env::var("ERASE_CORA_BUNDLE") else {
        return Verdict { name: "citation graph (optional)", status: None, detail: "ERASE_CORA_BUNDLE not set".into() };
    };
    let t = Instant::now();
    let b = load_bundle(std::path::Path::new(&dir)).unwrap();
    let spec = NoiseSpec::new(NoiseKind::Symmetric, 0.3, 0).unwrap();
    let noisy = corrupt_labels(&b.labels, &b.train_mask(), &spec, b.num_classes).unwrap();
    let out_dim = std::env::var("ERASE_CORA_DIM").ok().and_then(|v| v.parse().ok()).unwrap_or(128);
    let cfg = RunConfig { hidden_dim: 256, out_dim, ..RunConfig::default() };
    let acc = run(&b, &noisy, &cfg).1;
    let secs = t.elapsed().as_secs_f64();
    let (pass, band) = if out_dim >= 512 {
        ((acc - 0.8037).abs() <= 0.05 && secs < 2700.0, "within 5 points of 80.37")
    } else {
        (acc >= 0.70 && secs < 600.0, ">= 0.70")
    };
    Verdict::new("citation graph (optional)", pass, format!("d={out_dim} acc {acc:.3} (want {band}), {secs:.0} s"))
}

fn main() {
    let mut verdicts = vec![
        gradient_correctness(),
        end_to_end_gradient(),
        propagation_oracle(),
        noise_statistics(),
        degenerate_identity(),
    ];

    let r = sbm_runs();
    let (erase, ce, no_prop, plain) = (mean(&r.erase), mean(&r.ce), mean(&r.no_prop), mean(&r.plain));
    let setup = format!("shift {} (clean CE {:.3})", r.shift, r.clean_ce);
    verdicts.push(Verdict::new(
        "robustness margin",
        r.clean_ce >= 0.9 && erase >= ce + 0.10 && r.margin_secs < 300.0,
        format!(
            "{setup}: ERASE {erase:.3} {} vs CE {ce:.3} {}, margin {:+.3}, {:.0} s",
            fmt(&r.erase),
            fmt(&r.ce),
            erase - ce,
            r.margin_secs
        ),
    ));
    verdicts.push(Verdict::new(
        "propagation ablation",
        erase >= no_prop + 0.03 && erase >= plain + 0.03,
        format!(
            "ERASE {erase:.3} vs T1=T2=0 {no_prop:.3} {} and plain rate reduction {plain:.3} {}",
            fmt(&r.no_prop),
            fmt(&r.plain)
        ),
    ));
    verdicts.push(Verdict::new(
        "prototype orthogonality",
        r.max_cos.iter().all(|&c| c < 0.3),
        format!("max |cos| per seed {}", fmt(&r.max_cos)),
    ));
    verdicts.push(Verdict::new(
        "NTVR bound",
        r.ntvr.iter().all(|&v| v < 1.0),
        format!("per seed {}", r.ntvr.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(", ")),
    ));
    verdicts.push(cora());

    let mut failed = 0;
    for v in &verdicts {
        let tag = match v.status {
            Some(true) => "PASS",
            Some(false) => {
                failed += 1;
                "FAIL"
            }
            None => "SKIP",
        };
        println!("{tag} {}: {}", v.name, v.detail);
    }
    println!("{failed} of {} criteria failed", verdicts.iter().filter(|v| v.status.is_some()).count());
    if failed > 0 {
        std::process::exit(1);
    }
}

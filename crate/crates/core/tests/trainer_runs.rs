use erase_core::graph::{generate_sbm, GraphBundle, SbmConfig};
use erase_core::noise::{corrupt_labels, NoiseKind, NoiseSpec};
use erase_core::trainer::{evaluate, train, Objective, RunConfig};

fn easy_bundle() -> GraphBundle {
    generate_sbm(&SbmConfig {
        nodes_per_block: 60,
        feature_shift: 3.0,
        seed: 11,
        ..SbmConfig::default()
    })
    .unwrap()
}

fn noisy(b: &GraphBundle, kind: NoiseKind, rate: f64, seed: u64) -> Vec<usize> {
    let spec = NoiseSpec::new(kind, rate, seed).unwrap();
    corrupt_labels(&b.labels, &b.train_mask(), &spec, b.num_classes).unwrap()
}

fn cfg(objective: Objective, seed: u64) -> RunConfig {
    RunConfig { objective, seed, ..RunConfig::default() }
}

#[test]
fn runs_are_deterministic() {
    let b = easy_bundle();
    let y = noisy(&b, NoiseKind::Symmetric, 0.3, 1);
    for objective in [Objective::Erase, Objective::Mcr2Plain, Objective::CeBaseline] {
        let c = RunConfig { max_epochs: 20, ..cfg(objective, 4) };
        let a = train(&b, &y, &c).unwrap();
        let again = train(&b, &y, &c).unwrap();
        assert_eq!(a.encoder, again.encoder);
        assert_eq!(a.report.delta_r, again.report.delta_r);
        assert_eq!(a.report.z, again.report.z);
    }
}

#[test]
fn rate_reduction_rises_early_in_training() {
    let b = easy_bundle();
    let y = noisy(&b, NoiseKind::Symmetric, 0.2, 2);
    let c = RunConfig { max_epochs: 20, patience: 1000, ..cfg(Objective::Erase, 0) };
    let out = train(&b, &y, &c).unwrap();
    let dr = &out.report.delta_r;
    assert_eq!(dr.len(), 20);
    assert!(dr[19] > dr[0], "{} -> {}", dr[0], dr[19]);
}

#[test]
fn zero_epochs_returns_the_initial_encoder() {
    let b = easy_bundle();
    let y = noisy(&b, NoiseKind::Symmetric, 0.2, 2);
    let c = RunConfig { max_epochs: 0, ..cfg(Objective::Erase, 5) };
    let out = train(&b, &y, &c).unwrap();
    assert_eq!(out.encoder.step, 0);
    assert!(out.report.best_epoch.is_none());
    assert!(out.report.delta_r.is_empty());
    assert_eq!(out.report.z.nrows(), b.num_nodes);
}

#[test]
fn clean_labels_are_learned_by_every_objective() {
    let b = easy_bundle();
    for seed in 0..3 {
        for objective in [Objective::Erase, Objective::CeBaseline] {
            let c = cfg(objective, seed);
            let out = train(&b, &b.labels, &c).unwrap();
            let acc = evaluate(&b, &b.labels, &out, &c).unwrap().test_acc;
            assert!(acc > 0.9, "{objective} seed {seed}: {acc}");
            assert!(out.report.best_val_acc().unwrap() > 0.95);
        }
    }
}

#[test]
fn symmetric_noise_on_a_separable_graph() {
    let b = easy_bundle();
    let runs: Vec<(f64, f64)> = (0..5)
        .map(|seed| {
            let y = noisy(&b, NoiseKind::Symmetric, 0.4, 100 + seed);
            let c = cfg(Objective::Erase, seed);
            let out = train(&b, &y, &c).unwrap();
            let ev = evaluate(&b, &y, &out, &c).unwrap();
            (ev.test_acc, ev.semantic_test_acc)
        })
        .collect();
    // final semantic labels track the readout
    assert!(runs.iter().all(|(acc, sem)| *acc > 0.9 && (sem - acc).abs() <= 0.05), "(readout, semantic) per seed: {runs:?}");
}

#[test]
fn full_method_beats_plain_rate_reduction_under_pair_noise() {
    let b = easy_bundle();
    let mut erase = 0.0;
    let mut plain = 0.0;
    for seed in 0..5 {
        let y = noisy(&b, NoiseKind::Asymmetric, 0.4, 100 + seed);
        for (objective, total) in [(Objective::Erase, &mut erase), (Objective::Mcr2Plain, &mut plain)] {
            let c = cfg(objective, seed);
            let out = train(&b, &y, &c).unwrap();
            *total += evaluate(&b, &y, &out, &c).unwrap().test_acc / 5.0;
        }
    }
    assert!(erase > plain, "erase {erase:.3} vs plain {plain:.3}");
}

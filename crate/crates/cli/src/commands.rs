use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use erase_core::checkpoint::Checkpoint;
use erase_core::diagnostics::{class_sorted_sample, cosine_matrix, pca_2d};
use erase_core::graph::{load_bundle, read_labels, GraphBundle, Split};
use erase_core::noise::{corrupt_labels, flipped_count, NoiseKind, NoiseSpec};
use erase_core::propagation::{denoise_propagate, init_label_matrix};
use erase_core::rate::ntvr;
use erase_core::readout::accuracy;
use erase_core::trainer::{evaluate_parts, train, GraphOperators, Objective, RunConfig};
use rayon::prelude::*;
use serde_json::json;

use crate::artifacts::*;
use crate::config::Experiment;

const COSMAT_CAP: usize = 500;

fn bundle(exp: &Experiment) -> Result<GraphBundle> {
    load_bundle(&exp.bundle).with_context(|| format!("loading bundle {}", exp.bundle.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn noisy_labels(b: &GraphBundle, exp: &Experiment, kind: NoiseKind, rate: f64, seed: u64) -> Result<Vec<usize>> {
    if let Some(path) = &exp.labels {
        return Ok(read_labels(path, b.num_nodes, b.num_classes)?);
    }
    let spec = NoiseSpec::new(kind, rate, seed)?;
    Ok(corrupt_labels(&b.labels, &b.train_mask(), &spec, b.num_classes)?)
}

pub fn corrupt(exp: &Experiment) -> Result<()> {
    let b = bundle(exp)?;
    let (kind, rate) = exp.noise()?;
    let spec = NoiseSpec::new(kind, rate, exp.seed)?;
    let noisy = corrupt_labels(&b.labels, &b.train_mask(), &spec, b.num_classes)?;
    create_dir(&exp.out)?;
    write_labels_file(&exp.out.join(NOISY), &noisy)?;
    let flipped = flipped_count(&b.labels, &noisy);
    write_json(
        &exp.out.join("noise_meta.json"),
        json!({"kind": kind, "rate": rate, "seed": exp.seed, "flipped_count": flipped}),
    )?;
    println!("flipped {flipped} training labels -> {}", exp.out.join(NOISY).display());
    Ok(())
}

/// Trains one repetition and writes its run directory. Returns test accuracy.
fn train_one(b: &GraphBundle, exp: &Experiment, cfg: &RunConfig, kind: NoiseKind, rate: f64, parent: &Path, seed: u64) -> Result<f64> {
    let noisy = noisy_labels(b, exp, kind, rate, seed)?;
    let cfg = RunConfig { seed, ..cfg.clone() };
    let outcome = train(b, &noisy, &cfg).with_context(|| format!("training {} seed {seed}", cfg.objective))?;
    let dir = run_dir(parent, seed);
    save_run(&dir, seed, &cfg, &noisy, &outcome)?;
    let ev = evaluate_parts(b, &noisy, cfg.objective, &outcome.report.z, outcome.head.as_ref(), &outcome.report.semantic, &cfg)?;
    Ok(ev.test_acc)
}

fn seeds(exp: &Experiment) -> Vec<u64> {
    (0..exp.reps as u64).map(|r| exp.seed + r).collect()
}

pub fn train_cmd(exp: &Experiment) -> Result<()> {
    let b = bundle(exp)?;
    let (kind, rate) = exp.noise()?;
    let cfg = RunConfig { objective: exp.objective()?, ..exp.run.clone() };
    create_dir(&exp.out)?;
    let accs: Vec<f64> = seeds(exp)
        .par_iter()
        .map(|&seed| train_one(&b, exp, &cfg, kind, rate, &exp.out, seed))
        .collect::<Result<_>>()?;
    for (seed, acc) in seeds(exp).iter().zip(&accs) {
        println!("{} seed {seed}: test acc {acc:.4}", cfg.objective);
    }
    Ok(())
}

/// Re-runs the readout for every run under `parent` and writes
/// `summary.json`. Returns the per-run accuracies in seed order.
fn summarize(b: &GraphBundle, parent: &Path) -> Result<(Objective, Vec<f64>)> {
    let runs = list_runs(parent)?;
    let mut accs = Vec::new();
    let mut objective = None;
    let mut rows = Vec::new();
    for (seed, dir) in &runs {
        let run = load_run(dir, b)?;
        let z = representations(b, &run.checkpoint, &run.cfg)?;
        let ev = evaluate_parts(b, &run.noisy, run.cfg.objective, &z, run.checkpoint.head.as_ref(), &run.semantic, &run.cfg)?;
        write_csv(
            &dir.join("predictions.tsv"),
            None,
            ev.predictions.iter().map(|p| p.to_string()),
        )?;
        match objective {
            Some(o) if o != run.cfg.objective => bail!("runs under {} mix objectives", parent.display()),
            _ => objective = Some(run.cfg.objective),
        }
        rows.push(json!({"seed": seed, "test_acc": ev.test_acc, "semantic_test_acc": ev.semantic_test_acc}));
        accs.push(ev.test_acc);
    }
    let (mean, std) = mean_std(&accs);
    let objective = objective.expect("at least one run");
    write_json(
        &parent.join("summary.json"),
        json!({
            "objective": objective,
            "runs": rows,
            "mean_acc": mean,
            "std_acc": std,
            "cell": table_cell(mean, std),
        }),
    )?;
    Ok((objective, accs))
}

pub fn eval(exp: &Experiment) -> Result<()> {
    let b = bundle(exp)?;
    let (objective, accs) = summarize(&b, &exp.out)?;
    let (mean, std) = mean_std(&accs);
    println!("{objective}: {} over {} runs", table_cell(mean, std), accs.len());
    Ok(())
}

pub fn propagate(exp: &Experiment) -> Result<()> {
    let b = bundle(exp)?;
    let (kind, rate) = exp.noise()?;
    let noisy = noisy_labels(&b, exp, kind, rate, exp.seed)?;
    let mask = b.train_mask();
    let ops = GraphOperators::new(&b)?;
    let l0 = init_label_matrix(&noisy, &mask, b.num_classes)?;
    let denoised = denoise_propagate(&l0, &ops.masked, exp.run.alpha1, exp.run.t1)?;
    create_dir(&exp.out)?;
    write_matrix_tsv(&exp.out.join("denoised.tsv"), denoised.values())?;
    let before = accuracy(&noisy, &b.labels, &mask)?;
    let after = accuracy(&denoised.argmax(), &b.labels, &mask)?;
    write_json(
        &exp.out.join("propagate.json"),
        json!({
            "t1": exp.run.t1,
            "alpha1": exp.run.alpha1,
            "train_acc_noisy": before,
            "train_acc_denoised": after,
        }),
    )?;
    println!("train label accuracy {before:.4} -> {after:.4}");
    Ok(())
}

/// A checkpoint path, or a run directory holding one.
fn twin_checkpoint(path: &Path) -> Result<(Checkpoint, Option<RunConfig>)> {
    if path.is_dir() {
        let ckpt = load_checkpoint(&path.join(CHECKPOINT), path)?;
        let cfg = path.join(CONFIG);
        let cfg = if cfg.is_file() { Some(read_json(&cfg)?) } else { None };
        Ok((ckpt, cfg))
    } else {
        let dir = path.parent().unwrap_or(Path::new("."));
        Ok((load_checkpoint(path, dir)?, None))
    }
}

pub fn diagnose(exp: &Experiment) -> Result<()> {
    let b = bundle(exp)?;
    let dir: PathBuf = match &exp.run_dir {
        Some(d) => d.clone(),
        None => list_runs(&exp.out)?.remove(0).1,
    };
    let run = load_run(&dir, &b)?;
    let z = representations(&b, &run.checkpoint, &run.cfg)?;
    let test = b.indices(Split::Test);

    let rows = class_sorted_sample(&test, &b.labels, COSMAT_CAP, run.cfg.seed);
    let cos = cosine_matrix(&z, &rows);
    write_csv(
        &dir.join("cosmat.csv"),
        None,
        cos.row_iter().map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")),
    )?;
    write_csv(
        &dir.join("cosmat_nodes.csv"),
        Some("node,class"),
        rows.iter().map(|&i| format!("{i},{}", b.labels[i])),
    )?;

    let pcs = pca_2d(&z, &test)?;
    write_csv(
        &dir.join("pca.csv"),
        Some("node,pc1,pc2,class"),
        test.iter().enumerate().map(|(r, &i)| format!("{i},{},{},{}", pcs[(r, 0)], pcs[(r, 1)], b.labels[i])),
    )?;

    if let Some(twin) = &exp.clean_twin {
        let (ckpt, twin_cfg) = twin_checkpoint(twin)?;
        let clean = representations(&b, &ckpt, twin_cfg.as_ref().unwrap_or(&run.cfg))?;
        let value = ntvr(&clean, &z, run.cfg.epsilon_sq)?;
        write_json(
            &dir.join("ntvr.json"),
            json!({"ntvr": value, "epsilon_sq": run.cfg.epsilon_sq, "clean_twin": twin.display().to_string()}),
        )?;
        println!("NTVR {value:e}");
    }
    println!("diagnostics written to {}", dir.display());
    Ok(())
}

fn rate_tag(rate: f64) -> String {
    format!("{rate}")
}

pub fn sweep(exp: &Experiment) -> Result<()> {
    let b = bundle(exp)?;
    let mut cells: Vec<(NoiseKind, f64, Objective)> = Vec::new();
    for &kind in &exp.kinds {
        for &rate in &exp.rates {
            for &objective in &exp.objectives {
                cells.push((kind, rate, objective));
            }
        }
    }
    if cells.is_empty() {
        bail!("no cells in the sweep grid");
    }
    cells.sort_by(|a, c| (a.0.as_str(), a.1, a.2.as_str()).partial_cmp(&(c.0.as_str(), c.1, c.2.as_str())).expect("finite rates"));
    cells.dedup();
    create_dir(&exp.out)?;

    let cell_dir = |kind: NoiseKind, rate: f64, objective: Objective| {
        exp.out.join(format!("{kind}_{}", rate_tag(rate))).join(objective.as_str())
    };
    let jobs: Vec<(NoiseKind, f64, Objective, u64)> = cells
        .iter()
        .flat_map(|&(k, r, o)| seeds(exp).into_iter().map(move |s| (k, r, o, s)))
        .collect();
    jobs.par_iter()
        .map(|&(kind, rate, objective, seed)| {
            let cfg = RunConfig { objective, ..exp.run.clone() };
            train_one(&b, exp, &cfg, kind, rate, &cell_dir(kind, rate, objective), seed).map(|_| ())
        })
        .collect::<Result<Vec<()>>>()?;

    let mut rows = Vec::new();
    for &(kind, rate, objective) in &cells {
        let (_, accs) = summarize(&b, &cell_dir(kind, rate, objective))?;
        let (mean, std) = mean_std(&accs);
        rows.push(format!("{kind},{},{objective},{mean},{std}", rate_tag(rate)));
        println!("{kind} {rate} {objective}: {}", table_cell(mean, std));
    }
    write_csv(&exp.out.join("table.csv"), Some("noise_kind,rate,objective,mean_acc,std_acc"), rows)
}

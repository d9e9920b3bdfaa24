//! On-disk layout of runs and the JSON/TSV writers shared by commands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use erase_core::checkpoint::Checkpoint;
use erase_core::encoder::forward;
use erase_core::graph::{read_labels, write_labels, GraphBundle};
use erase_core::propagation::LabelMatrix;
use erase_core::trainer::{normalize_rows, GraphOperators, Objective, RunConfig, TrainOutcome};
use erase_core::FORMAT_VERSION;
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::{json, Value};

pub const CHECKPOINT: &str = "checkpoint.bin";
pub const CONFIG: &str = "config.json";
pub const METRICS: &str = "metrics.json";
pub const REPRESENTATIONS: &str = "representations.tsv";
pub const SEMANTIC: &str = "semantic_labels.tsv";
pub const NOISY: &str = "labels_noisy.tsv";

/// Raised when a run directory has no checkpoint; maps to exit code 2.
#[derive(Debug)]
pub struct MissingCheckpoint(pub PathBuf);

impl std::fmt::Display for MissingCheckpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "no {CHECKPOINT} in run directory {}", self.0.display())
    }
}

impl std::error::Error for MissingCheckpoint {}

pub fn run_dir(parent: &Path, seed: u64) -> PathBuf {
    parent.join(format!("run_seed{seed}"))
}

/// Seed-stamped run directories under `parent`, ordered by seed.
pub fn list_runs(parent: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let entries = fs::read_dir(parent).with_context(|| format!("listing {}", parent.display()))?;
    let mut runs = Vec::new();
    for entry in entries {
        let entry = entry?;
        let name = entry.file_name();
        let Some(seed) = name.to_str().and_then(|n| n.strip_prefix("run_seed")).and_then(|s| s.parse().ok()) else {
            continue;
        };
        if entry.file_type()?.is_dir() {
            runs.push((seed, entry.path()));
        }
    }
    runs.sort();
    if runs.is_empty() {
        bail!("no run_seed* directories under {}", parent.display());
    }
    Ok(runs)
}

/// Writes `value` as pretty JSON with the format version stamped in.
pub fn write_json(path: &Path, value: impl Serialize) -> Result<()> {
    let mut value = serde_json::to_value(value)?;
    if let Value::Object(map) = &mut value {
        map.insert("spec_version".into(), Value::from(FORMAT_VERSION));
    }
    let text = serde_json::to_string_pretty(&value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_matrix_tsv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut text = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        text.push_str(&cells.join("\t"));
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_csv(path: &Path, header: Option<&str>, rows: impl IntoIterator<Item = String>) -> Result<()> {
    let mut text = String::new();
    if let Some(h) = header {
        writeln!(text, "{h}")?;
    }
    for row in rows {
        writeln!(text, "{row}")?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_labels_file(path: &Path, labels: &[usize]) -> Result<()> {
    write_labels(path, labels).map_err(Into::into)
}

/// Writes every artifact of a finished run into `dir`.
pub fn save_run(dir: &Path, seed: u64, cfg: &RunConfig, noisy: &[usize], outcome: &TrainOutcome) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Checkpoint {
        encoder: outcome.encoder.clone(),
        head: outcome.head.clone(),
    }
    .save(dir.join(CHECKPOINT))?;
    write_json(&dir.join(CONFIG), cfg)?;
    let report = &outcome.report;
    write_json(
        &dir.join(METRICS),
        json!({
            "objective": report.objective,
            "seed": seed,
            "delta_r": report.delta_r,
            "val_acc": report.val_acc,
            "train_loss": report.train_loss,
            "best_epoch": report.best_epoch,
            "best_val_acc": report.best_val_acc(),
            "epochs_run": report.epochs_run(),
        }),
    )?;
    write_matrix_tsv(&dir.join(REPRESENTATIONS), &report.z)?;
    write_labels_file(&dir.join(SEMANTIC), &report.semantic.argmax())?;
    write_labels_file(&dir.join(NOISY), noisy)
}

/// A run reloaded from disk.
pub struct LoadedRun {
    pub cfg: RunConfig,
    pub checkpoint: Checkpoint,
    pub noisy: Vec<usize>,
    pub semantic: LabelMatrix,
}

pub fn load_checkpoint(path: &Path, run_dir: &Path) -> Result<Checkpoint> {
    if !path.is_file() {
        return Err(MissingCheckpoint(run_dir.to_path_buf()).into());
    }
    Ok(Checkpoint::load(path)?)
}

pub fn load_run(dir: &Path, bundle: &GraphBundle) -> Result<LoadedRun> {
    let checkpoint = load_checkpoint(&dir.join(CHECKPOINT), dir)?;
    let cfg: RunConfig = read_json(&dir.join(CONFIG))?;
    let n = bundle.num_nodes;
    let k = bundle.num_classes;
    let noisy = read_labels(&dir.join(NOISY), n, k)?;
    let semantic = LabelMatrix::one_hot(&read_labels(&dir.join(SEMANTIC), n, k)?, k);
    Ok(LoadedRun {
        cfg,
        checkpoint,
        noisy,
        semantic,
    })
}

/// Representations the trainer reported for this checkpoint: the encoder
/// output, projected onto the unit sphere for the rate objectives.
pub fn representations(bundle: &GraphBundle, checkpoint: &Checkpoint, cfg: &RunConfig) -> Result<DMatrix<f64>> {
    let ops = GraphOperators::new(bundle)?;
    let z = forward(&checkpoint.encoder, &bundle.features, &ops.encoder)?.z;
    Ok(if cfg.unit_sphere && cfg.objective != Objective::CeBaseline {
        normalize_rows(&z)
    } else {
        z
    })
}

/// Mean and sample (n - 1) standard deviation; zero spread for one value.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Percentages as printed in result tables, e.g. `61.23 ± 1.20`.
pub fn table_cell(mean: f64, std: f64) -> String {
    format!("{:.2} ± {:.2}", 100.0 * mean, 100.0 * std)
}

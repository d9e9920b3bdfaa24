//! Manifest files and flag resolution. Flags win over the manifest, which
//! wins over the built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use erase_core::noise::NoiseKind;
use erase_core::trainer::{Objective, RunConfig};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Manifest {
    pub bundle: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub noise: Option<NoiseSection>,
    /// Partial run configuration; missing fields take their defaults.
    pub run: Option<RunConfig>,
    pub grid: Option<Grid>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub kind: Option<NoiseKind>,
    pub rate: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub kinds: Option<Vec<NoiseKind>>,
    pub rates: Option<Vec<f64>>,
    pub objectives: Option<Vec<Objective>>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// JSON experiment manifest
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Graph bundle directory
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    /// sym or asym; comma-separated for sweeps
    #[arg(long, value_delimiter = ',')]
    pub noise_kind: Vec<NoiseKind>,
    /// Corruption rate; comma-separated for sweeps
    #[arg(long, value_delimiter = ',')]
    pub noise_rate: Vec<f64>,
    /// Base seed; repetition r uses seed + r for both noise and weights
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub epsilon_sq: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub t1: Option<usize>,
    #[arg(long)]
    pub t2: Option<usize>,
    #[arg(long)]
    pub alpha1: Option<f64>,
    #[arg(long)]
    pub alpha2: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub out_dim: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// erase, mcr2_plain or ce_baseline; comma-separated for sweeps
    #[arg(long, value_delimiter = ',')]
    pub objective: Vec<Objective>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run repetitions one at a time
    #[arg(long)]
    pub deterministic: bool,
    /// Noisy labels file to use instead of corrupting on the fly
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Run directory or checkpoint trained on clean labels (diagnose)
    #[arg(long)]
    pub clean_twin: Option<PathBuf>,
    /// Run directory to diagnose (defaults to the first one under --out)
    #[arg(long)]
    pub run: Option<PathBuf>,
}

/// Everything a command needs after merging flags, manifest and defaults.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub bundle: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub reps: usize,
    pub kinds: Vec<NoiseKind>,
    pub rates: Vec<f64>,
    pub objectives: Vec<Objective>,
    pub run: RunConfig,
    pub labels: Option<PathBuf>,
    pub clean_twin: Option<PathBuf>,
    pub run_dir: Option<PathBuf>,
}

fn pick<T>(flag: Vec<T>, manifest: Option<Vec<T>>, default: Vec<T>) -> Vec<T> {
    if !flag.is_empty() {
        flag
    } else {
        manifest.unwrap_or(default)
    }
}

impl Experiment {
    pub fn resolve(flags: &Flags) -> Result<Self> {
        let manifest = match &flags.manifest {
            Some(path) => Manifest::load(path)?,
            None => Manifest::default(),
        };
        let Some(bundle) = flags.bundle.clone().or(manifest.bundle) else {
            bail!("no bundle given (use --bundle or the manifest's \"bundle\")");
        };
        let out = flags.out.clone().or(manifest.out).unwrap_or_else(|| PathBuf::from("erase-out"));
        let reps = flags.reps.or(manifest.reps).unwrap_or(1);
        if reps == 0 {
            bail!("reps must be at least 1");
        }

        let noise = manifest.noise.unwrap_or_default();
        let grid = manifest.grid.unwrap_or_default();
        let kind = noise.kind.unwrap_or(NoiseKind::Symmetric);
        let rate = noise.rate.unwrap_or(0.0);
        let mut run = manifest.run.unwrap_or_default();

        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = flags.$field {
                    run.$field = v;
                }
            )*};
        }
        set!(epsilon_sq, gamma, t1, t2, alpha1, alpha2, beta, hidden_dim, out_dim, max_epochs, patience);
        if flags.deterministic {
            run.deterministic = true;
        }
        let objectives = pick(flags.objective.clone(), grid.objectives, vec![run.objective]);
        if let [only] = objectives.as_slice() {
            run.objective = *only;
        }
        run.validate()?;

        Ok(Self {
            bundle,
            out,
            seed: flags.seed.or(manifest.seed).unwrap_or(0),
            reps,
            kinds: pick(flags.noise_kind.clone(), grid.kinds, vec![kind]),
            rates: pick(flags.noise_rate.clone(), grid.rates, vec![rate]),
            objectives,
            run,
            labels: flags.labels.clone(),
            clean_twin: flags.clean_twin.clone(),
            run_dir: flags.run.clone(),
        })
    }

    /// The single noise setting of a non-sweep command.
    pub fn noise(&self) -> Result<(NoiseKind, f64)> {
        match (self.kinds.as_slice(), self.rates.as_slice()) {
            ([kind], [rate]) => Ok((*kind, *rate)),
            _ => bail!("this command takes a single noise kind and rate"),
        }
    }

    pub fn objective(&self) -> Result<Objective> {
        match self.objectives.as_slice() {
            [only] => Ok(*only),
            _ => bail!("this command takes a single objective"),
        }
    }
}

//! Training loops.
//!
//! The ERASE loop denoises the noisy training labels once over the
//! train-only subgraph, then per epoch: encode, build prototypes from the
//! denoised labels, mix prototype pseudo-labels with the denoised labels,
//! propagate the mix over the full graph, take the argmax membership of
//! every node and ascend the scaled rate reduction. Validation accuracy
//! (nearest prototype against clean labels) drives early stopping and the
//! returned state is the one from the best validation epoch.
//!
//! Two baselines share the encoder and optimizer: plain rate reduction on
//! the raw noisy training labels, and cross-entropy through a linear head.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{self, adam_step, backward, forward, init_encoder, EncoderState, Gradients};
use crate::error::{Error, Result};
use crate::graph::{GraphBundle, SparseAdjacency, Split};
use crate::optim::{adam_update, AdamConfig, Moments};
use crate::propagation::{
    denoise_propagate, init_label_matrix, semantic_propagate, to_membership, LabelMatrix, Membership,
};
use crate::rate::{delta_r, delta_r_with_gradient, RateConfig};
use crate::readout::{self, accuracy, argmax_rows, fit_logreg, softmax_cross_entropy, LinearClassifier, LogRegConfig};
use crate::semantics::{estimate_prototypes, nearest_prototype, prototype_pseudo_labels, semantic_mix, PrototypeSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Erase,
    Mcr2Plain,
    CeBaseline,
}

impl Objective {
    pub fn as_str(self) -> &'static str {
        match self {
            Objective::Erase => "erase",
            Objective::Mcr2Plain => "mcr2_plain",
            Objective::CeBaseline => "ce_baseline",
        }
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "erase" => Ok(Objective::Erase),
            "mcr2_plain" | "mcr2" => Ok(Objective::Mcr2Plain),
            "ce_baseline" | "ce" => Ok(Objective::CeBaseline),
            other => Err(format!("unknown objective {other:?} (expected erase, mcr2_plain or ce_baseline)")),
        }
    }
}

/// Hyperparameters of one run. Defaults follow the published Cora settings
/// with desk-scale layer widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub hidden_dim: usize,
    pub out_dim: usize,
    pub epsilon_sq: f64,
    pub gamma: f64,
    pub t1: usize,
    pub t2: usize,
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub objective: Objective,
    pub deterministic: bool,
    pub readout: LogRegConfig,
    /// Fit the readout on the raw noisy training labels instead of the
    /// semantic labels.
    pub readout_on_noisy: bool,
    /// Project each representation row onto the unit sphere before the rate
    /// objectives see it.
    pub unit_sphere: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 5e-4,
            hidden_dim: 64,
            out_dim: 64,
            epsilon_sq: 0.05,
            gamma: 2.0,
            t1: 5,
            t2: 5,
            alpha1: 0.6,
            alpha2: 0.6,
            beta: 0.6,
            max_epochs: 400,
            patience: 150,
            seed: 0,
            objective: Objective::Erase,
            deterministic: true,
            readout: LogRegConfig::default(),
            readout_on_noisy: false,
            unit_sphere: true,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} = {v} outside [0, 1]")))
            }
        };
        unit("alpha1", self.alpha1)?;
        unit("alpha2", self.alpha2)?;
        unit("beta", self.beta)?;
        self.rate().validate()?;
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidArgument("lr must be positive and weight_decay nonnegative".into()));
        }
        if self.hidden_dim == 0 || self.out_dim == 0 {
            return Err(Error::InvalidArgument("layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn rate(&self) -> RateConfig {
        RateConfig {
            epsilon_sq: self.epsilon_sq,
            gamma: self.gamma,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig::new(self.lr, self.weight_decay)
    }
}

/// Normalized adjacencies used by one run.
#[derive(Debug, Clone)]
pub struct GraphOperators {
    /// Self-looped normalization, encoder only.
    pub encoder: SparseAdjacency,
    /// Loop-free normalization of the full graph.
    pub full: SparseAdjacency,
    /// Loop-free normalization of the train-only subgraph.
    pub masked: SparseAdjacency,
}

impl GraphOperators {
    pub fn new(bundle: &GraphBundle) -> Result<Self> {
        let adj = bundle.adjacency();
        Ok(Self {
            encoder: adj.symmetric_normalize(true),
            full: adj.symmetric_normalize(false),
            masked: adj.masked(&bundle.train_mask())?.symmetric_normalize(false),
        })
    }
}

/// Linear softmax head of the cross-entropy baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    /// `d × K`
    pub w: DMatrix<f64>,
    /// `1 × K`
    pub b: DMatrix<f64>,
    pub m_w: Moments,
    pub m_b: Moments,
}

impl LinearHead {
    pub fn init(dim: usize, num_classes: usize, seed: u64) -> Self {
        // offset the stream so the head never reuses the encoder's draws
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        Self {
            w: encoder::glorot(dim, num_classes, &mut rng),
            b: DMatrix::zeros(1, num_classes),
            m_w: Moments::zeros(dim, num_classes),
            m_b: Moments::zeros(1, num_classes),
        }
    }

    pub fn logits(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = z * &self.w;
        for mut row in out.row_iter_mut() {
            row += &self.b;
        }
        out
    }

    pub fn classifier(&self) -> LinearClassifier {
        LinearClassifier::from_parameters(self.w.clone(), self.b.row(0).transpose())
            .expect("head shapes are consistent")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub objective: Objective,
    /// Rate reduction per epoch (for the cross-entropy baseline: of `Z`
    /// under the head's predicted membership).
    pub delta_r: Vec<f64>,
    pub val_acc: Vec<f64>,
    /// Cross-entropy per epoch, baseline only.
    pub train_loss: Vec<f64>,
    /// 0-based index of the best validation epoch.
    pub best_epoch: Option<usize>,
    /// Representations of the returned state.
    pub z: DMatrix<f64>,
    /// Propagated semantic labels of the returned state.
    pub semantic: LabelMatrix,
    pub prototypes: Option<PrototypeSet>,
}

impl TrainReport {
    pub fn epochs_run(&self) -> usize {
        self.val_acc.len()
    }

    pub fn best_val_acc(&self) -> Option<f64> {
        self.best_epoch.map(|e| self.val_acc[e])
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub encoder: EncoderState,
    pub head: Option<LinearHead>,
    pub report: TrainReport,
}

fn check_inputs(bundle: &GraphBundle, noisy_labels: &[usize], cfg: &RunConfig) -> Result<()> {
    bundle.validate()?;
    cfg.validate()?;
    if noisy_labels.len() != bundle.num_nodes {
        return Err(Error::Shape(format!(
            "{} noisy labels for {} nodes",
            noisy_labels.len(),
            bundle.num_nodes
        )));
    }
    if let Some(&y) = noisy_labels.iter().find(|&&y| y >= bundle.num_classes) {
        return Err(Error::InvalidArgument(format!("noisy label {y} out of range")));
    }
    Ok(())
}

/// Runs `cfg.objective` on `bundle` with the given (possibly corrupted)
/// labels. Validation uses the clean labels stored in the bundle.
pub fn train(bundle: &GraphBundle, noisy_labels: &[usize], cfg: &RunConfig) -> Result<TrainOutcome> {
    check_inputs(bundle, noisy_labels, cfg)?;
    match cfg.objective {
        Objective::Erase => train_rate(bundle, noisy_labels, cfg, RateMode::Erase),
        Objective::Mcr2Plain => train_rate(bundle, noisy_labels, cfg, RateMode::Plain),
        Objective::CeBaseline => train_ce_baseline(bundle, noisy_labels, cfg),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum RateMode {
    Erase,
    Plain,
}

/// Everything an epoch derives from one forward pass.
struct SemanticPass {
    prototypes: PrototypeSet,
    semantic: LabelMatrix,
    delta_r: f64,
    grad_z: DMatrix<f64>,
    val_acc: f64,
}

struct RateContext<'a> {
    bundle: &'a GraphBundle,
    ops: GraphOperators,
    train_mask: Vec<bool>,
    train_idx: Vec<usize>,
    valid_mask: Vec<bool>,
    /// Denoised labels (ERASE) or one-hot noisy training labels (plain).
    anchor: LabelMatrix,
    plain_membership: Membership,
    mode: RateMode,
    cfg: &'a RunConfig,
}

impl RateContext<'_> {
    fn pass(&self, z: &DMatrix<f64>) -> Result<SemanticPass> {
        let prototypes = estimate_prototypes(z, &self.anchor, &self.train_mask)?;
        let (semantic, delta_r, grad_z) = match self.mode {
            RateMode::Erase => {
                let proto_labels = prototype_pseudo_labels(z, &prototypes)?;
                let mixed = semantic_mix(&proto_labels, &self.anchor, self.cfg.beta)?;
                let semantic = semantic_propagate(&mixed, &self.ops.full, self.cfg.alpha2, self.cfg.t2)?;
                let membership = to_membership(&semantic);
                let (value, grad) = delta_r_with_gradient(z, &membership, &self.cfg.rate())?;
                (semantic, value, grad)
            }
            RateMode::Plain => {
                let z_train = z.select_rows(&self.train_idx);
                let rate = RateConfig {
                    epsilon_sq: self.cfg.epsilon_sq,
                    gamma: 1.0,
                };
                let (value, grad_train) = delta_r_with_gradient(&z_train, &self.plain_membership, &rate)?;
                let mut grad = DMatrix::zeros(z.nrows(), z.ncols());
                for (local, &row) in self.train_idx.iter().enumerate() {
                    grad.row_mut(row).copy_from(&grad_train.row(local));
                }
                (self.anchor.clone(), value, grad)
            }
        };
        let pred = nearest_prototype(z, &prototypes)?;
        let val_acc = accuracy(&pred, &self.bundle.labels, &self.valid_mask)?;
        Ok(SemanticPass {
            prototypes,
            semantic,
            delta_r,
            grad_z,
            val_acc,
        })
    }
}

fn train_rate(bundle: &GraphBundle, noisy: &[usize], cfg: &RunConfig, mode: RateMode) -> Result<TrainOutcome> {
    let ops = GraphOperators::new(bundle)?;
    let train_mask = bundle.train_mask();
    let train_idx = bundle.indices(Split::Train);
    let l0 = init_label_matrix(noisy, &train_mask, bundle.num_classes)?;
    let anchor = match mode {
        RateMode::Erase => denoise_propagate(&l0, &ops.masked, cfg.alpha1, cfg.t1)?,
        RateMode::Plain => l0,
    };
    let plain_membership =
        Membership::from_assignment(train_idx.iter().map(|&i| noisy[i]).collect(), bundle.num_classes)?;
    let ctx = RateContext {
        bundle,
        ops,
        valid_mask: bundle.mask(Split::Valid),
        train_mask,
        train_idx,
        anchor,
        plain_membership,
        mode,
        cfg,
    };

    let mut state = init_encoder(bundle.num_features, cfg.hidden_dim, cfg.out_dim, cfg.seed)?;
    let adam = cfg.adam();
    let mut delta_rs = Vec::new();
    let mut val_accs = Vec::new();
    let mut best: Option<(usize, EncoderState, DMatrix<f64>, SemanticPass)> = None;
    let mut since_best = 0usize;

    for epoch in 0..cfg.max_epochs {
        let cache = forward(&state, &bundle.features, &ctx.ops.encoder)?;
        let z = if cfg.unit_sphere { normalize_rows(&cache.z) } else { cache.z.clone() };
        let pass = ctx.pass(&z)?;
        if !pass.delta_r.is_finite() {
            return Err(Error::Diverged {
                epoch,
                message: format!("rate reduction is {}", pass.delta_r),
            });
        }
        delta_rs.push(pass.delta_r);
        val_accs.push(pass.val_acc);

        let grad_z = if cfg.unit_sphere {
            normalize_rows_backward(&cache.z, &pass.grad_z)
        } else {
            pass.grad_z.clone()
        };
        let grads = backward(&state, &cache, &(-grad_z), &ctx.ops.encoder)?;
        // ties move the snapshot forward; only strict gains reset patience
        let best_acc = best.as_ref().map(|(_, _, _, b)| b.val_acc);
        if best_acc.is_none_or(|b| pass.val_acc > b) {
            since_best = 0;
        } else {
            since_best += 1;
        }
        if best_acc.is_none_or(|b| pass.val_acc >= b) {
            best = Some((epoch, state.clone(), z, pass));
        }
        adam_step(&mut state, &grads, &adam).map_err(|e| Error::Diverged {
            epoch,
            message: e.to_string(),
        })?;
        if since_best >= cfg.patience {
            break;
        }
    }

    let (best_epoch, state, z, pass) = match best {
        Some((epoch, s, z, pass)) => (Some(epoch), s, z, pass),
        None => {
            let raw = forward(&state, &bundle.features, &ctx.ops.encoder)?.z;
            let z = if cfg.unit_sphere { normalize_rows(&raw) } else { raw };
            let pass = ctx.pass(&z)?;
            (None, state, z, pass)
        }
    };
    Ok(TrainOutcome {
        encoder: state,
        head: None,
        report: TrainReport {
            objective: cfg.objective,
            delta_r: delta_rs,
            val_acc: val_accs,
            train_loss: Vec::new(),
            best_epoch,
            z,
            semantic: pass.semantic,
            prototypes: Some(pass.prototypes),
        },
    })
}

/// Encoder plus linear softmax head minimizing cross-entropy on the noisy
/// training labels, early-stopped on clean validation accuracy.
pub fn train_ce_baseline(bundle: &GraphBundle, noisy: &[usize], cfg: &RunConfig) -> Result<TrainOutcome> {
    check_inputs(bundle, noisy, cfg)?;
    let ops = GraphOperators::new(bundle)?;
    let train_idx = bundle.indices(Split::Train);
    let targets: Vec<usize> = train_idx.iter().map(|&i| noisy[i]).collect();
    let valid_mask = bundle.mask(Split::Valid);
    let k = bundle.num_classes;
    let rate = cfg.rate();

    let mut state = init_encoder(bundle.num_features, cfg.hidden_dim, cfg.out_dim, cfg.seed)?;
    let mut head = LinearHead::init(cfg.out_dim, k, cfg.seed);
    let adam = cfg.adam();

    let mut delta_rs = Vec::new();
    let mut val_accs = Vec::new();
    let mut losses = Vec::new();
    let mut best: Option<(usize, EncoderState, LinearHead, DMatrix<f64>, f64)> = None;
    let mut since_best = 0usize;

    for epoch in 0..cfg.max_epochs {
        let cache = forward(&state, &bundle.features, &ops.encoder)?;
        let z = &cache.z;
        let logits = head.logits(z);
        let pred = argmax_rows(&logits);
        let val_acc = accuracy(&pred, &bundle.labels, &valid_mask)?;
        let membership = Membership::from_assignment(pred, k)?;
        delta_rs.push(delta_r(z, &membership, &rate)?);
        val_accs.push(val_acc);

        let train_logits = logits.select_rows(&train_idx);
        let (loss, grad_logits) = softmax_cross_entropy(&train_logits, &targets);
        if !loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                message: format!("cross-entropy is {loss}"),
            });
        }
        losses.push(loss);

        let z_train = z.select_rows(&train_idx);
        let grad_w = z_train.tr_mul(&grad_logits);
        let grad_b = DMatrix::from_row_slice(1, k, grad_logits.row_sum().as_slice());
        let grad_z_train = &grad_logits * head.w.transpose();
        let mut grad_z = DMatrix::zeros(z.nrows(), z.ncols());
        for (local, &row) in train_idx.iter().enumerate() {
            grad_z.row_mut(row).copy_from(&grad_z_train.row(local));
        }
        let grads: Gradients = backward(&state, &cache, &grad_z, &ops.encoder)?;

        if best.as_ref().is_none_or(|b| val_acc > b.4) {
            best = Some((epoch, state.clone(), head.clone(), cache.z.clone(), val_acc));
            since_best = 0;
        } else {
            since_best += 1;
        }

        adam_step(&mut state, &grads, &adam)?;
        adam_update(&mut head.w, &grad_w, &mut head.m_w, state.step, &adam);
        adam_update(&mut head.b, &grad_b, &mut head.m_b, state.step, &adam);
        if since_best >= cfg.patience {
            break;
        }
    }

    let (best_epoch, state, head, z) = match best {
        Some((epoch, s, h, z, _)) => (Some(epoch), s, h, z),
        None => {
            let z = forward(&state, &bundle.features, &ops.encoder)?.z;
            (None, state, head, z)
        }
    };
    let semantic = LabelMatrix::one_hot(&argmax_rows(&head.logits(&z)), k);
    Ok(TrainOutcome {
        encoder: state,
        head: Some(head),
        report: TrainReport {
            objective: Objective::CeBaseline,
            delta_r: delta_rs,
            val_acc: val_accs,
            train_loss: losses,
            best_epoch,
            z,
            semantic,
            prototypes: None,
        },
    })
}

/// Test-set evaluation of a trained run.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub test_acc: f64,
    pub predictions: Vec<usize>,
    /// Accuracy of the semantic-label argmax on test nodes.
    pub semantic_test_acc: f64,
}

/// Unit-length rows; zero rows stay zero.
pub fn normalize_rows(z: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = z.clone();
    for mut row in out.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    out
}

/// Pulls a gradient taken at `normalize_rows(z)` back to `z`. Zero rows
/// pass nothing through.
pub fn normalize_rows_backward(z: &DMatrix<f64>, grad: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(z.nrows(), z.ncols());
    for i in 0..z.nrows() {
        let norm = z.row(i).norm();
        if norm > 0.0 {
            let u = z.row(i) / norm;
            let g = grad.row(i);
            out.set_row(i, &((g - &u * g.dot(&u)) / norm));
        }
    }
    out
}

/// Predicts every node. The cross-entropy baseline uses its head; the rate
/// objectives fit a logistic regression on the L2-normalized training
/// representations against the semantic labels (ERASE) or the noisy labels
/// (plain rate reduction, or when `readout_on_noisy` is set).
pub fn evaluate_parts(
    bundle: &GraphBundle,
    noisy: &[usize],
    objective: Objective,
    z: &DMatrix<f64>,
    head: Option<&LinearHead>,
    semantic: &LabelMatrix,
    cfg: &RunConfig,
) -> Result<Evaluation> {
    let test_mask = bundle.mask(Split::Test);
    let predictions = match (objective, head) {
        (Objective::CeBaseline, Some(head)) => argmax_rows(&head.logits(z)),
        (Objective::CeBaseline, None) => {
            return Err(Error::InvalidArgument("cross-entropy run without a head".into()));
        }
        _ => {
            let train_idx = bundle.indices(Split::Train);
            let semantic_targets = semantic.argmax();
            let targets: Vec<usize> = train_idx
                .iter()
                .map(|&i| {
                    if objective == Objective::Mcr2Plain || cfg.readout_on_noisy {
                        noisy[i]
                    } else {
                        semantic_targets[i]
                    }
                })
                .collect();
            let features = normalize_rows(z);
            let clf = fit_logreg(&features.select_rows(&train_idx), &targets, bundle.num_classes, &cfg.readout)?;
            readout::predict(&clf, &features)?
        }
    };
    let test_acc = accuracy(&predictions, &bundle.labels, &test_mask)?;
    let semantic_test_acc = accuracy(&semantic.argmax(), &bundle.labels, &test_mask)?;
    Ok(Evaluation {
        test_acc,
        predictions,
        semantic_test_acc,
    })
}

pub fn evaluate(bundle: &GraphBundle, noisy: &[usize], outcome: &TrainOutcome, cfg: &RunConfig) -> Result<Evaluation> {
    evaluate_parts(
        bundle,
        noisy,
        outcome.report.objective,
        &outcome.report.z,
        outcome.head.as_ref(),
        &outcome.report.semantic,
        cfg,
    )
}

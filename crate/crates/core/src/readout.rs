//! Multinomial logistic regression on frozen representations, and
//! accuracy.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegConfig {
    pub l2: f64,
    pub iters: usize,
    pub lr: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            iters: 500,
            lr: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    /// `d × K`
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub trained: bool,
    /// Objective before each gradient step, then after the last one.
    pub loss_history: Vec<f64>,
}

impl LinearClassifier {
    pub fn untrained(dim: usize, num_classes: usize) -> Self {
        Self {
            weights: DMatrix::zeros(dim, num_classes),
            bias: DVector::zeros(num_classes),
            trained: false,
            loss_history: Vec::new(),
        }
    }

    /// A classifier with fixed parameters, marked as trained.
    pub fn from_parameters(weights: DMatrix<f64>, bias: DVector<f64>) -> Result<Self> {
        if bias.len() != weights.ncols() {
            return Err(Error::Shape(format!("{} biases for {} classes", bias.len(), weights.ncols())));
        }
        Ok(Self {
            weights,
            bias,
            trained: true,
            loss_history: Vec::new(),
        })
    }

    pub fn logits(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if z.ncols() != self.weights.nrows() {
            return Err(Error::Shape(format!(
                "representation dimension {} vs classifier input {}",
                z.ncols(),
                self.weights.nrows()
            )));
        }
        let mut out = z * &self.weights;
        for mut row in out.row_iter_mut() {
            row += self.bias.transpose();
        }
        Ok(out)
    }
}

/// Row-wise argmax, ties to the lowest index.
pub fn argmax_rows(m: &DMatrix<f64>) -> Vec<usize> {
    m.row_iter()
        .map(|row| {
            let mut best = 0;
            for j in 1..row.len() {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Mean softmax cross-entropy of `logits` against `targets`, with the
/// gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &DMatrix<f64>, targets: &[usize]) -> (f64, DMatrix<f64>) {
    let n = logits.nrows();
    let mut grad = logits.clone();
    let mut loss = 0.0;
    for (i, mut row) in grad.row_iter_mut().enumerate() {
        let max = row.max();
        row.apply(|v| *v = (*v - max).exp());
        let total = row.sum();
        row /= total;
        loss -= row[targets[i]].max(f64::MIN_POSITIVE).ln();
        row[targets[i]] -= 1.0;
    }
    grad /= n as f64;
    (loss / n as f64, grad)
}

fn objective(clf: &LinearClassifier, z: &DMatrix<f64>, targets: &[usize], l2: f64) -> (f64, DMatrix<f64>) {
    let logits = clf.logits(z).expect("shapes checked by caller");
    let (ce, grad) = softmax_cross_entropy(&logits, targets);
    (ce + l2 * clf.weights.norm_squared(), grad)
}

/// Full-batch gradient descent on cross-entropy plus `l2 · ‖W‖²`, starting
/// from zero parameters.
pub fn fit_logreg(z_train: &DMatrix<f64>, targets: &[usize], num_classes: usize, cfg: &LogRegConfig) -> Result<LinearClassifier> {
    if z_train.nrows() == 0 {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if targets.len() != z_train.nrows() {
        return Err(Error::Shape(format!("{} targets for {} rows", targets.len(), z_train.nrows())));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= num_classes) {
        return Err(Error::InvalidArgument(format!("target {t} out of range for {num_classes} classes")));
    }
    if z_train.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("readout inputs"));
    }
    let mut clf = LinearClassifier::untrained(z_train.ncols(), num_classes);
    let mut history = Vec::with_capacity(cfg.iters + 1);
    for _ in 0..cfg.iters {
        let (loss, grad_logits) = objective(&clf, z_train, targets, cfg.l2);
        history.push(loss);
        let grad_w = z_train.tr_mul(&grad_logits) + &clf.weights * (2.0 * cfg.l2);
        let grad_b = grad_logits.row_sum().transpose();
        clf.weights -= grad_w * cfg.lr;
        clf.bias.axpy(-cfg.lr, &grad_b, 1.0);
    }
    history.push(objective(&clf, z_train, targets, cfg.l2).0);
    clf.loss_history = history;
    clf.trained = true;
    Ok(clf)
}

pub fn predict(clf: &LinearClassifier, z: &DMatrix<f64>) -> Result<Vec<usize>> {
    if !clf.trained {
        return Err(Error::InvalidArgument("classifier has not been trained".into()));
    }
    Ok(argmax_rows(&clf.logits(z)?))
}

/// Fraction of masked positions where `pred` equals `truth`.
pub fn accuracy(pred: &[usize], truth: &[usize], mask: &[bool]) -> Result<f64> {
    if pred.len() != truth.len() || pred.len() != mask.len() {
        return Err(Error::Shape(format!(
            "lengths differ: pred {}, truth {}, mask {}",
            pred.len(),
            truth.len(),
            mask.len()
        )));
    }
    let total = mask.iter().filter(|&&m| m).count();
    if total == 0 {
        return Err(Error::InvalidArgument("accuracy over an empty mask".into()));
    }
    let correct = (0..pred.len()).filter(|&i| mask[i] && pred[i] == truth[i]).count();
    Ok(correct as f64 / total as f64)
}

//! Synthetic label corruption through class transition matrices
//! `Q[i][j] = P(noisy = j | clean = i)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NoiseKind {
    /// Uniform flip to any other class.
    #[serde(rename = "sym")]
    Symmetric,
    /// Pair flip `i -> (i + 1) mod K`.
    #[serde(rename = "asym")]
    Asymmetric,
}

impl NoiseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseKind::Symmetric => "sym",
            NoiseKind::Asymmetric => "asym",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "sym" | "symmetric" => Ok(NoiseKind::Symmetric),
            "asym" | "asymmetric" | "pair" => Ok(NoiseKind::Asymmetric),
            other => Err(format!("unknown noise kind {other:?} (expected sym or asym)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub rate: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, rate: f64, seed: u64) -> Result<Self> {
        let spec = Self { kind, rate, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(Error::InvalidArgument(format!(
                "noise rate {} outside [0, 1]",
                self.rate
            )));
        }
        Ok(())
    }
}

/// Row-stochastic `K × K` transition matrix for `spec`.
pub fn transition_matrix(spec: &NoiseSpec, num_classes: usize) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let k = num_classes;
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "label noise needs at least 2 classes, got {k}"
        )));
    }
    let phi = spec.rate;
    let q = match spec.kind {
        NoiseKind::Symmetric => {
            let off = phi / (k - 1) as f64;
            DMatrix::from_fn(k, k, |i, j| if i == j { 1.0 - phi } else { off })
        }
        NoiseKind::Asymmetric => DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                1.0 - phi
            } else if j == (i + 1) % k {
                phi
            } else {
                0.0
            }
        }),
    };
    Ok(q)
}

/// Resamples every training label from its transition-matrix row; other
/// nodes keep their label. One uniform draw per training node, in node
/// order.
pub fn corrupt_labels(
    labels: &[usize],
    train_mask: &[bool],
    spec: &NoiseSpec,
    num_classes: usize,
) -> Result<Vec<usize>> {
    if labels.len() != train_mask.len() {
        return Err(Error::Shape(format!(
            "{} labels with a mask of length {}",
            labels.len(),
            train_mask.len()
        )));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= num_classes) {
        return Err(Error::InvalidArgument(format!(
            "class index {y} out of range for {num_classes} classes"
        )));
    }
    let q = transition_matrix(spec, num_classes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let out = labels
        .iter()
        .zip(train_mask)
        .map(|(&y, &train)| {
            if !train {
                return y;
            }
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for j in 0..num_classes {
                acc += q[(y, j)];
                if u < acc {
                    return j;
                }
            }
            // u landed in the rounding gap above the last cumulative sum
            (0..num_classes).rev().find(|&j| q[(y, j)] > 0.0).unwrap_or(y)
        })
        .collect();
    Ok(out)
}

/// Number of positions where the two label vectors differ.
pub fn flipped_count(clean: &[usize], noisy: &[usize]) -> usize {
    clean.iter().zip(noisy).filter(|(a, b)| a != b).count()
}

//! Class prototypes and the semantic-label estimate built from them.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::propagation::LabelMatrix;

/// Cosine similarity given to classes without a prototype.
pub const UNPOPULATED_SIMILARITY: f64 = -1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet {
    /// `K × d`, row `j` is the center of class `j` (zero when unpopulated).
    pub centers: DMatrix<f64>,
    pub populated: Vec<bool>,
}

impl PrototypeSet {
    pub fn num_classes(&self) -> usize {
        self.populated.len()
    }

    /// Largest `|cos(c_i, c_j)|` over distinct populated pairs, or `None`
    /// with fewer than two prototypes.
    pub fn max_abs_cosine(&self) -> Option<f64> {
        let live: Vec<usize> = (0..self.num_classes()).filter(|&j| self.populated[j]).collect();
        let mut best: Option<f64> = None;
        for (a, &i) in live.iter().enumerate() {
            for &j in &live[a + 1..] {
                let c = cosine(&self.centers.row(i).transpose(), &self.centers.row(j).transpose()).abs();
                best = Some(best.map_or(c, |b: f64| b.max(c)));
            }
        }
        best
    }
}

fn cosine(a: &nalgebra::DVector<f64>, b: &nalgebra::DVector<f64>) -> f64 {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        a.dot(b) / (na * nb)
    }
}

/// Mean representation of the training nodes whose denoised argmax is
/// each class.
pub fn estimate_prototypes(z: &DMatrix<f64>, denoised: &LabelMatrix, train_mask: &[bool]) -> Result<PrototypeSet> {
    if denoised.rows() != z.nrows() || train_mask.len() != z.nrows() {
        return Err(Error::Shape(format!(
            "representation has {} rows, labels {}, mask {}",
            z.nrows(),
            denoised.rows(),
            train_mask.len()
        )));
    }
    if !train_mask.iter().any(|&m| m) {
        return Err(Error::InvalidArgument("no training nodes to estimate prototypes from".into()));
    }
    let k = denoised.cols();
    let assignment = denoised.argmax();
    let mut centers = DMatrix::zeros(k, z.ncols());
    let mut counts = vec![0usize; k];
    for i in (0..z.nrows()).filter(|&i| train_mask[i]) {
        let j = assignment[i];
        counts[j] += 1;
        let mut row = centers.row_mut(j);
        row += z.row(i);
    }
    for (j, &count) in counts.iter().enumerate() {
        if count > 0 {
            let mut row = centers.row_mut(j);
            row /= count as f64;
        }
    }
    Ok(PrototypeSet {
        centers,
        populated: counts.iter().map(|&c| c > 0).collect(),
    })
}

/// Row-wise cosine similarity to every prototype, `N × K`. Unpopulated
/// classes get [`UNPOPULATED_SIMILARITY`]; zero-norm vectors give 0.
pub fn cosine_similarities(z: &DMatrix<f64>, protos: &PrototypeSet) -> Result<DMatrix<f64>> {
    if protos.centers.ncols() != z.ncols() {
        return Err(Error::Shape(format!(
            "prototypes have dimension {}, representation {}",
            protos.centers.ncols(),
            z.ncols()
        )));
    }
    let center_norms: Vec<f64> = protos.centers.row_iter().map(|r| r.norm()).collect();
    let dots = z * protos.centers.transpose();
    let mut sims = DMatrix::zeros(z.nrows(), protos.num_classes());
    for i in 0..z.nrows() {
        let zn = z.row(i).norm();
        for j in 0..protos.num_classes() {
            sims[(i, j)] = if !protos.populated[j] {
                UNPOPULATED_SIMILARITY
            } else if zn == 0.0 || center_norms[j] == 0.0 {
                0.0
            } else {
                dots[(i, j)] / (zn * center_norms[j])
            };
        }
    }
    Ok(sims)
}

/// Softmax over classes of the cosine similarity to each prototype.
pub fn prototype_pseudo_labels(z: &DMatrix<f64>, protos: &PrototypeSet) -> Result<LabelMatrix> {
    if !protos.populated.iter().any(|&p| p) {
        return Err(Error::InvalidArgument("all classes unpopulated".into()));
    }
    let mut sims = cosine_similarities(z, protos)?;
    for mut row in sims.row_iter_mut() {
        let max = row.max();
        row.apply(|v| *v = (*v - max).exp());
        let total = row.sum();
        row /= total;
    }
    Ok(LabelMatrix::from_raw(sims))
}

/// Nearest prototype by cosine similarity, ties to the lowest class.
pub fn nearest_prototype(z: &DMatrix<f64>, protos: &PrototypeSet) -> Result<Vec<usize>> {
    let sims = cosine_similarities(z, protos)?;
    Ok(sims
        .row_iter()
        .map(|row| {
            let mut best = 0;
            for j in 1..row.len() {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect())
}

/// `(1 - β) L_proto + β L_denoised`.
pub fn semantic_mix(proto_labels: &LabelMatrix, denoised: &LabelMatrix, beta: f64) -> Result<LabelMatrix> {
    if proto_labels.values().shape() != denoised.values().shape() {
        return Err(Error::Shape(format!(
            "prototype labels {:?} vs denoised labels {:?}",
            proto_labels.values().shape(),
            denoised.values().shape()
        )));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidArgument(format!("beta {beta} outside [0, 1]")));
    }
    let mixed = proto_labels.values() * (1.0 - beta) + denoised.values() * beta;
    Ok(LabelMatrix::from_raw(mixed))
}

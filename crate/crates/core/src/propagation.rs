//! Decoupled label propagation.
//!
//! Both stages iterate `L <- (1 - α) Â L + α L`:
//! the denoising stage runs once before training on the normalized
//! train-only adjacency, the semantic stage runs every epoch on the
//! normalized full adjacency. The retained term is the current iterate, not
//! the starting matrix.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::SparseAdjacency;

/// `N × K` nonnegative class scores. Rows need not sum to one and may be
/// all zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix(DMatrix<f64>);

impl LabelMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(
                "label scores must be finite and nonnegative".into(),
            ));
        }
        Ok(Self(values))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(DMatrix::zeros(rows, cols))
    }

    /// One-hot rows for every node.
    pub fn one_hot(labels: &[usize], num_classes: usize) -> Self {
        let mut m = DMatrix::zeros(labels.len(), num_classes);
        for (i, &y) in labels.iter().enumerate() {
            m[(i, y)] = 1.0;
        }
        Self(m)
    }

    pub(crate) fn from_raw(values: DMatrix<f64>) -> Self {
        Self(values)
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Row-wise argmax, ties to the lowest class index, zero rows to 0.
    pub fn argmax(&self) -> Vec<usize> {
        self.0
            .row_iter()
            .map(|row| {
                let mut best = 0;
                for (j, &v) in row.iter().enumerate().skip(1) {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}

/// Hard class assignment of every node; the diagonal memberships `Π_j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Membership {
    assignment: Vec<usize>,
    counts: Vec<usize>,
}

impl Membership {
    pub fn from_assignment(assignment: Vec<usize>, num_classes: usize) -> Result<Self> {
        let mut counts = vec![0; num_classes];
        for &c in &assignment {
            if c >= num_classes {
                return Err(Error::InvalidArgument(format!(
                    "class {c} out of range for {num_classes} classes"
                )));
            }
            counts[c] += 1;
        }
        Ok(Self { assignment, counts })
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn num_nodes(&self) -> usize {
        self.assignment.len()
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    /// Node indices assigned to `class`, ascending.
    pub fn members(&self, class: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == class)
            .map(|(i, _)| i)
            .collect()
    }

    /// Restriction to the given nodes, in the given order.
    pub fn restrict(&self, nodes: &[usize]) -> Membership {
        let assignment: Vec<usize> = nodes.iter().map(|&i| self.assignment[i]).collect();
        Membership::from_assignment(assignment, self.counts.len())
            .expect("classes already validated")
    }
}

/// One-hot rows for training nodes, zero rows elsewhere.
pub fn init_label_matrix(labels: &[usize], train_mask: &[bool], num_classes: usize) -> Result<LabelMatrix> {
    if labels.len() != train_mask.len() {
        return Err(Error::Shape(format!(
            "{} labels with a mask of length {}",
            labels.len(),
            train_mask.len()
        )));
    }
    let mut m = DMatrix::zeros(labels.len(), num_classes);
    for (i, (&y, &train)) in labels.iter().zip(train_mask).enumerate() {
        if y >= num_classes {
            return Err(Error::InvalidArgument(format!(
                "node {i}: class {y} out of range for {num_classes} classes"
            )));
        }
        if train {
            m[(i, y)] = 1.0;
        }
    }
    Ok(LabelMatrix(m))
}

fn propagate(l0: &LabelMatrix, adj: &SparseAdjacency, alpha: f64, steps: usize) -> Result<LabelMatrix> {
    if adj.dim() != l0.rows() {
        return Err(Error::Shape(format!(
            "label matrix has {} rows, adjacency dimension {}",
            l0.rows(),
            adj.dim()
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("retention {alpha} outside [0, 1]")));
    }
    let mut current = l0.0.clone();
    for _ in 0..steps {
        let mut next = adj.mul_dense(&current);
        next *= 1.0 - alpha;
        next += &current * alpha;
        current = next;
    }
    Ok(LabelMatrix(current))
}

/// Structural denoising over the normalized train-only adjacency, `steps`
/// iterations with retention `alpha1`.
pub fn denoise_propagate(
    l0: &LabelMatrix,
    norm_masked_adj: &SparseAdjacency,
    alpha1: f64,
    steps: usize,
) -> Result<LabelMatrix> {
    propagate(l0, norm_masked_adj, alpha1, steps)
}

/// Semantic propagation over the normalized full adjacency.
pub fn semantic_propagate(
    ls: &LabelMatrix,
    norm_full_adj: &SparseAdjacency,
    alpha2: f64,
    steps: usize,
) -> Result<LabelMatrix> {
    propagate(ls, norm_full_adj, alpha2, steps)
}

pub fn to_membership(l: &LabelMatrix) -> Membership {
    Membership::from_assignment(l.argmax(), l.cols()).expect("argmax is always in range")
}

//! Graph data model: node features, undirected edges, labels and the
//! train/valid/test split, plus sparse adjacency handling.
//!
//! Edges are stored undirected and deduplicated as `(i, j)` with `i < j`.
//! Public dataset statistics usually count directed edges, which is twice
//! the length of [`GraphBundle::edges`].

mod io;
mod sbm;
mod sparse;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_bundle, read_labels, write_bundle, write_features_sidecar, write_labels};
pub use sbm::{generate_sbm, SbmConfig};
pub use sparse::{masked_adjacency, symmetric_normalize, SparseAdjacency};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split tag {other:?}")),
        }
    }
}

/// A node-classification dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphBundle {
    pub num_nodes: usize,
    pub num_features: usize,
    pub num_classes: usize,
    /// `num_nodes × num_features`, one row per node.
    pub features: DMatrix<f64>,
    /// Undirected pairs with `i < j`, sorted and unique.
    pub edges: Vec<(usize, usize)>,
    pub labels: Vec<usize>,
    pub split: Vec<Split>,
}

impl GraphBundle {
    /// Builds a bundle, canonicalizing the edge list and validating every
    /// invariant.
    pub fn new(
        features: DMatrix<f64>,
        edges: Vec<(usize, usize)>,
        labels: Vec<usize>,
        split: Vec<Split>,
        num_classes: usize,
    ) -> Result<Self> {
        let bundle = Self {
            num_nodes: features.nrows(),
            num_features: features.ncols(),
            num_classes,
            features,
            edges: canonical_edges(edges),
            labels,
            split,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes;
        if self.features.nrows() != n || self.features.ncols() != self.num_features {
            return Err(Error::InvalidBundle(format!(
                "features are {}x{}, expected {}x{}",
                self.features.nrows(),
                self.features.ncols(),
                n,
                self.num_features
            )));
        }
        if self.labels.len() != n || self.split.len() != n {
            return Err(Error::InvalidBundle(format!(
                "{} labels and {} split tags for {n} nodes",
                self.labels.len(),
                self.split.len()
            )));
        }
        if self.num_classes == 0 {
            return Err(Error::InvalidBundle("zero classes".into()));
        }
        if let Some((i, &y)) = self.labels.iter().enumerate().find(|(_, &y)| y >= self.num_classes) {
            return Err(Error::InvalidBundle(format!(
                "node {i}: class index {y} out of range for {} classes",
                self.num_classes
            )));
        }
        for &(i, j) in &self.edges {
            if i >= n || j >= n {
                return Err(Error::InvalidBundle(format!("edge ({i}, {j}) out of range")));
            }
            if i == j {
                return Err(Error::InvalidBundle(format!("self-loop on node {i}")));
            }
        }
        for part in [Split::Train, Split::Valid, Split::Test] {
            if !self.split.contains(&part) {
                return Err(Error::InvalidBundle(format!("empty {part} split")));
            }
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        Ok(())
    }

    pub fn mask(&self, part: Split) -> Vec<bool> {
        self.split.iter().map(|&s| s == part).collect()
    }

    pub fn train_mask(&self) -> Vec<bool> {
        self.mask(Split::Train)
    }

    pub fn indices(&self, part: Split) -> Vec<usize> {
        (0..self.num_nodes).filter(|&i| self.split[i] == part).collect()
    }

    pub fn adjacency(&self) -> SparseAdjacency {
        SparseAdjacency::from_edges(self.num_nodes, &self.edges)
            .expect("bundle edges are validated on construction")
    }
}

fn canonical_edges(edges: Vec<(usize, usize)>) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = edges
        .into_iter()
        .filter(|(i, j)| i != j)
        .map(|(i, j)| if i < j { (i, j) } else { (j, i) })
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

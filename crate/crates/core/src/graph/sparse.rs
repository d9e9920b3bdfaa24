use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Symmetric, nonnegative adjacency in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAdjacency {
    dim: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    weights: Vec<f64>,
}

impl SparseAdjacency {
    /// Empty adjacency on `dim` nodes.
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            indptr: vec![0; dim + 1],
            indices: Vec::new(),
            weights: Vec::new(),
        }
    }

    /// Unit-weight adjacency from undirected pairs. Both directions are
    /// stored, duplicates collapse to a single entry and self-pairs are
    /// dropped.
    pub fn from_edges(dim: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut triplets = Vec::with_capacity(edges.len() * 2);
        for &(i, j) in edges {
            if i >= dim || j >= dim {
                return Err(Error::InvalidArgument(format!(
                    "edge ({i}, {j}) out of range for {dim} nodes"
                )));
            }
            if i != j {
                triplets.push((i, j, 1.0));
                triplets.push((j, i, 1.0));
            }
        }
        Ok(Self::from_triplets(dim, triplets, Merge::Keep))
    }

    fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, f64)>, merge: Merge) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; dim + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut weights: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, w) in triplets {
            if last == Some((i, j)) {
                if let (Merge::Sum, Some(prev)) = (merge, weights.last_mut()) {
                    *prev += w;
                }
                continue;
            }
            last = Some((i, j));
            indptr[i + 1] += 1;
            indices.push(j);
            weights.push(w);
        }
        for i in 0..dim {
            indptr[i + 1] += indptr[i];
        }
        Self {
            dim,
            indptr,
            indices,
            weights,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored (directed) entries.
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.weights[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.indptr[i]..self.indptr[i + 1];
        match self.indices[span.clone()].binary_search(&j) {
            Ok(pos) => self.weights[span.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.row(i).map(|(_, w)| w).sum()).collect()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.dim).all(|i| {
            self.row(i)
                .all(|(j, w)| w >= 0.0 && (self.get(j, i) - w).abs() <= tol && self.has_entry(j, i))
        })
    }

    fn has_entry(&self, i: usize, j: usize) -> bool {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span].binary_search(&j).is_ok()
    }

    /// `D^{-1/2} (A [+ I]) D^{-1/2}` with `D` the row sums of the (possibly
    /// self-looped) matrix. Zero-degree rows stay zero.
    pub fn symmetric_normalize(&self, add_self_loops: bool) -> Self {
        let base = if add_self_loops {
            let mut triplets: Vec<(usize, usize, f64)> = (0..self.dim)
                .flat_map(|i| self.row(i).map(move |(j, w)| (i, j, w)))
                .collect();
            triplets.extend((0..self.dim).map(|i| (i, i, 1.0)));
            Self::from_triplets(self.dim, triplets, Merge::Sum)
        } else {
            self.clone()
        };
        let inv_sqrt: Vec<f64> = base
            .row_sums()
            .into_iter()
            .map(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
            .collect();
        let mut out = base;
        for i in 0..out.dim {
            for k in out.indptr[i]..out.indptr[i + 1] {
                let j = out.indices[k];
                out.weights[k] *= inv_sqrt[i] * inv_sqrt[j];
            }
        }
        out
    }

    /// Keeps entry `(i, j)` only when both endpoints are set in `mask`.
    pub fn masked(&self, mask: &[bool]) -> Result<Self> {
        if mask.len() != self.dim {
            return Err(Error::Shape(format!(
                "mask of length {} for adjacency of dimension {}",
                mask.len(),
                self.dim
            )));
        }
        let triplets = (0..self.dim)
            .filter(|&i| mask[i])
            .flat_map(|i| self.row(i).map(move |(j, w)| (i, j, w)))
            .filter(|&(_, j, _)| mask[j])
            .collect();
        Ok(Self::from_triplets(self.dim, triplets, Merge::Keep))
    }

    /// Sparse-dense product `self * m`.
    pub fn mul_dense(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(
            m.nrows(),
            self.dim,
            "sparse-dense product: {} rows against dimension {}",
            m.nrows(),
            self.dim
        );
        let mut out = DMatrix::zeros(self.dim, m.ncols());
        for c in 0..m.ncols() {
            let src = m.column(c);
            let mut dst = out.column_mut(c);
            for i in 0..self.dim {
                let mut acc = 0.0;
                for k in self.indptr[i]..self.indptr[i + 1] {
                    acc += self.weights[k] * src[self.indices[k]];
                }
                dst[i] = acc;
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for (j, w) in self.row(i) {
                out[(i, j)] = w;
            }
        }
        out
    }
}

#[derive(Clone, Copy)]
enum Merge {
    Keep,
    Sum,
}

/// See [`SparseAdjacency::symmetric_normalize`].
pub fn symmetric_normalize(adj: &SparseAdjacency, add_self_loops: bool) -> SparseAdjacency {
    adj.symmetric_normalize(add_self_loops)
}

/// `A ⊙ m mᵀ`: the adjacency restricted to edges between masked nodes.
pub fn masked_adjacency(adj: &SparseAdjacency, train_mask: &[bool]) -> Result<SparseAdjacency> {
    adj.masked(train_mask)
}

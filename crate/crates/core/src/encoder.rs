//! Two-layer graph-convolutional encoder with hand-written backward pass.
//!
//! ```text
//! H1 = relu(Â X W1)
//! Z  = Â H1 W2
//! ```
//!
//! `Â` is the self-looped symmetric normalization of the adjacency. There is
//! no nonlinearity on `Z`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::SparseAdjacency;
use crate::optim::{adam_update, AdamConfig, Moments};

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderState {
    pub w1: DMatrix<f64>,
    pub w2: DMatrix<f64>,
    pub m_w1: Moments,
    pub m_w2: Moments,
    /// Number of optimizer steps taken.
    pub step: u64,
}

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `Â X`
    pub ax: DMatrix<f64>,
    pub h1_pre: DMatrix<f64>,
    pub h1: DMatrix<f64>,
    /// `Â H1`
    pub ah1: DMatrix<f64>,
    pub z: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: DMatrix<f64>,
    pub w2: DMatrix<f64>,
}

pub(crate) fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    // row-major fill so the draw order does not depend on storage layout
    let values: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
    DMatrix::from_row_slice(rows, cols, &values)
}

/// Glorot-uniform weights and zero moments.
pub fn init_encoder(d0: usize, d1: usize, d: usize, seed: u64) -> Result<EncoderState> {
    if d0 == 0 || d1 == 0 || d == 0 {
        return Err(Error::InvalidArgument(format!("encoder dims must be positive, got {d0}/{d1}/{d}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w1 = glorot(d0, d1, &mut rng);
    let w2 = glorot(d1, d, &mut rng);
    Ok(EncoderState {
        m_w1: Moments::zeros(d0, d1),
        m_w2: Moments::zeros(d1, d),
        w1,
        w2,
        step: 0,
    })
}

impl EncoderState {
    pub fn input_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.w1.iter().chain(self.w2.iter()).all(|v| v.is_finite())
    }
}

pub fn forward(state: &EncoderState, features: &DMatrix<f64>, norm_adj_sl: &SparseAdjacency) -> Result<ForwardCache> {
    if features.ncols() != state.input_dim() {
        return Err(Error::Shape(format!(
            "features have {} columns, encoder expects {}",
            features.ncols(),
            state.input_dim()
        )));
    }
    if features.nrows() != norm_adj_sl.dim() {
        return Err(Error::Shape(format!(
            "{} feature rows for an adjacency of dimension {}",
            features.nrows(),
            norm_adj_sl.dim()
        )));
    }
    let ax = norm_adj_sl.mul_dense(features);
    let h1_pre = &ax * &state.w1;
    let h1 = h1_pre.map(|v| v.max(0.0));
    let ah1 = norm_adj_sl.mul_dense(&h1);
    let z = &ah1 * &state.w2;
    Ok(ForwardCache { ax, h1_pre, h1, ah1, z })
}

/// Pulls `grad_z = ∂f/∂Z` back to the weights. Uses `Âᵀ = Â`.
pub fn backward(
    state: &EncoderState,
    cache: &ForwardCache,
    grad_z: &DMatrix<f64>,
    norm_adj_sl: &SparseAdjacency,
) -> Result<Gradients> {
    if grad_z.shape() != cache.z.shape()
        || cache.h1.ncols() != state.hidden_dim()
        || cache.ax.ncols() != state.input_dim()
        || cache.z.ncols() != state.output_dim()
        || cache.z.nrows() != norm_adj_sl.dim()
    {
        return Err(Error::Shape("stale forward cache or mismatched gradient".into()));
    }
    let w2 = cache.ah1.tr_mul(grad_z);
    let mut dh1 = norm_adj_sl.mul_dense(&(grad_z * state.w2.transpose()));
    dh1.zip_apply(&cache.h1_pre, |g, pre| {
        if pre <= 0.0 {
            *g = 0.0;
        }
    });
    let w1 = cache.ax.tr_mul(&dh1);
    Ok(Gradients { w1, w2 })
}

/// One Adam step on both layers. The caller negates gradients of objectives
/// that are maximized.
pub fn adam_step(state: &mut EncoderState, grads: &Gradients, cfg: &AdamConfig) -> Result<()> {
    if grads.w1.shape() != state.w1.shape() || grads.w2.shape() != state.w2.shape() {
        return Err(Error::Shape("gradient shapes do not match encoder weights".into()));
    }
    state.step += 1;
    adam_update(&mut state.w1, &grads.w1, &mut state.m_w1, state.step, cfg);
    adam_update(&mut state.w2, &grads.w2, &mut state.m_w2, state.step, cfg);
    if !state.is_finite() {
        return Err(Error::NonFinite("encoder weights after update"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn init_is_seed_deterministic_and_bounded() {
        let a = init_encoder(4, 3, 2, 11).unwrap();
        let b = init_encoder(4, 3, 2, 11).unwrap();
        let c = init_encoder(4, 3, 2, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.w1, c.w1);
        let bound = (6.0f64 / 7.0).sqrt();
        assert!(a.w1.iter().all(|v| v.abs() <= bound));
        assert_eq!(a.m_w1.m, DMatrix::zeros(4, 3));
        assert_eq!(a.step, 0);
        assert!(init_encoder(0, 3, 2, 0).is_err());
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut s = init_encoder(3, 4, 2, 0).unwrap();
        s.w1.fill(0.0);
        s.w2.fill(0.0);
        let adj = SparseAdjacency::from_edges(3, &[(0, 1)]).unwrap().symmetric_normalize(true);
        let x = DMatrix::from_element(3, 3, 1.0);
        assert_eq!(forward(&s, &x, &adj).unwrap().z, DMatrix::zeros(3, 2));
    }

    #[test]
    fn isolated_node_is_an_mlp() {
        let s = init_encoder(3, 5, 2, 4).unwrap();
        let adj = SparseAdjacency::empty(1).symmetric_normalize(true);
        let x = DMatrix::from_row_slice(1, 3, &[0.3, -1.2, 2.0]);
        let z = forward(&s, &x, &adj).unwrap().z;
        let expected = (&x * &s.w1).map(|v| v.max(0.0)) * &s.w2;
        assert_abs_diff_eq!(z, expected, epsilon = 1e-14);
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let s = init_encoder(3, 4, 2, 1).unwrap();
        let adj = SparseAdjacency::from_edges(3, &[(0, 1), (1, 2)]).unwrap().symmetric_normalize(true);
        let x = DMatrix::from_fn(3, 3, |i, j| (i + j) as f64 - 1.5);
        let cache = forward(&s, &x, &adj).unwrap();
        let g = backward(&s, &cache, &DMatrix::zeros(3, 2), &adj).unwrap();
        assert_eq!(g.w1, DMatrix::zeros(3, 4));
        assert_eq!(g.w2, DMatrix::zeros(4, 2));
    }

    #[test]
    fn dead_hidden_unit_gets_no_gradient() {
        let mut s = init_encoder(2, 3, 2, 9).unwrap();
        // column 1 of W1 maps positive features to negative pre-activations
        s.w1[(0, 1)] = -1.0;
        s.w1[(1, 1)] = -1.0;
        let adj = SparseAdjacency::from_edges(3, &[(0, 1), (1, 2)]).unwrap().symmetric_normalize(true);
        let x = DMatrix::from_fn(3, 2, |i, j| 1.0 + (i * 2 + j) as f64);
        let cache = forward(&s, &x, &adj).unwrap();
        assert!(cache.h1_pre.column(1).iter().all(|&v| v < 0.0));
        let g = backward(&s, &cache, &DMatrix::from_element(3, 2, 1.0), &adj).unwrap();
        assert_eq!(g.w1.column(1).amax(), 0.0);
    }

    #[test]
    fn stale_cache_is_rejected() {
        let s = init_encoder(2, 3, 2, 0).unwrap();
        let adj = SparseAdjacency::empty(4).symmetric_normalize(true);
        let cache = forward(&s, &DMatrix::zeros(4, 2), &adj).unwrap();
        let other = init_encoder(2, 5, 2, 0).unwrap();
        assert!(backward(&other, &cache, &DMatrix::zeros(4, 2), &adj).is_err());
        assert!(backward(&s, &cache, &DMatrix::zeros(3, 2), &adj).is_err());
    }

    #[test]
    fn adam_step_counts() {
        let mut s = init_encoder(2, 2, 2, 0).unwrap();
        let grads = Gradients { w1: DMatrix::from_element(2, 2, 0.1), w2: DMatrix::from_element(2, 2, -0.1) };
        let cfg = AdamConfig::default();
        adam_step(&mut s, &grads, &cfg).unwrap();
        adam_step(&mut s, &grads, &cfg).unwrap();
        assert_eq!(s.step, 2);
    }
}

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{GraphBundle, Split};
use crate::error::{Error, Result};

/// Stochastic block model with Gaussian-blob features.
///
/// Node `i` belongs to block `i / nodes_per_block`. Features are unit
/// variance noise around a block mean of norm `feature_shift` (the block's
/// coordinate axis when `num_blocks <= feature_dim`, a random unit direction
/// otherwise).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmConfig {
    pub num_blocks: usize,
    pub nodes_per_block: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    pub feature_shift: f64,
    pub train_per_block: usize,
    pub valid_per_block: usize,
    pub seed: u64,
}

impl Default for SbmConfig {
    fn default() -> Self {
        Self {
            num_blocks: 3,
            nodes_per_block: 100,
            p_in: 0.1,
            p_out: 0.01,
            feature_dim: 32,
            feature_shift: 1.0,
            train_per_block: 20,
            valid_per_block: 20,
            seed: 0,
        }
    }
}

pub fn generate_sbm(cfg: &SbmConfig) -> Result<GraphBundle> {
    if !(0.0 <= cfg.p_out && cfg.p_out < cfg.p_in && cfg.p_in <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "need 0 <= p_out < p_in <= 1, got p_in={} p_out={}",
            cfg.p_in, cfg.p_out
        )));
    }
    if !(cfg.feature_shift > 0.0) {
        return Err(Error::InvalidArgument("feature_shift must be positive".into()));
    }
    if cfg.num_blocks == 0 || cfg.feature_dim == 0 {
        return Err(Error::InvalidArgument("need at least one block and one feature".into()));
    }
    if cfg.train_per_block == 0
        || cfg.valid_per_block == 0
        || cfg.train_per_block + cfg.valid_per_block >= cfg.nodes_per_block
    {
        return Err(Error::InvalidArgument(format!(
            "split quota {}+{} does not leave test nodes in blocks of {}",
            cfg.train_per_block, cfg.valid_per_block, cfg.nodes_per_block
        )));
    }

    let k = cfg.num_blocks;
    let n = k * cfg.nodes_per_block;
    let d0 = cfg.feature_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let means: Vec<Vec<f64>> = (0..k)
        .map(|b| {
            let mut v = vec![0.0; d0];
            if k <= d0 {
                v[b] = cfg.feature_shift;
            } else {
                for x in v.iter_mut() {
                    *x = StandardNormal.sample(&mut rng);
                }
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                v.iter_mut().for_each(|x| *x *= cfg.feature_shift / norm);
            }
            v
        })
        .collect();

    let labels: Vec<usize> = (0..n).map(|i| i / cfg.nodes_per_block).collect();
    let mut features = DMatrix::zeros(n, d0);
    for i in 0..n {
        for f in 0..d0 {
            let noise: f64 = StandardNormal.sample(&mut rng);
            features[(i, f)] = means[labels[i]][f] + noise;
        }
    }

    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if labels[i] == labels[j] { cfg.p_in } else { cfg.p_out };
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }

    let mut split = vec![Split::Test; n];
    for b in 0..k {
        let mut members: Vec<usize> = (b * cfg.nodes_per_block..(b + 1) * cfg.nodes_per_block).collect();
        members.shuffle(&mut rng);
        for &i in &members[..cfg.train_per_block] {
            split[i] = Split::Train;
        }
        for &i in &members[cfg.train_per_block..cfg.train_per_block + cfg.valid_per_block] {
            split[i] = Split::Valid;
        }
    }

    GraphBundle::new(features, edges, labels, split, k)
}

//! Coding rate of a representation matrix and its per-class and
//! rate-reduction variants, with closed-form gradients.
//!
//! For `Z ∈ R^{N×d}` and `c = d / (N ε²)`:
//!
//! ```text
//! R(Z)      = ½ logdet(I + c ZᵀZ)
//! Rᶜ(Z | Π) = Σ_j (n_j / 2N) logdet(I + c_j Zᵀ Π_j Z),  c_j = d / (n_j ε²)
//! ΔR        = γ R(Z) - Rᶜ(Z | Π)
//! ∇R        = c Z (I + c ZᵀZ)⁻¹
//! ∇Rᶜ       = Σ_j (n_j / N) c_j Π_j Z (I + c_j Zᵀ Π_j Z)⁻¹
//! ```
//!
//! Every log-determinant is taken on the `d × d` Gram form through a
//! Cholesky factorization. Classes without members contribute nothing.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagation::Membership;

/// Eigenvalue floor applied in [`log_volume`].
pub const EIGEN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateConfig {
    /// Squared distortion `ε²`.
    pub epsilon_sq: f64,
    /// Weight `γ` on the whole-data rate.
    pub gamma: f64,
}

impl RateConfig {
    pub fn new(epsilon_sq: f64, gamma: f64) -> Result<Self> {
        let cfg = Self { epsilon_sq, gamma };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_sq > 0.0 && self.epsilon_sq.is_finite()) {
            return Err(Error::InvalidArgument(format!("epsilon_sq must be positive, got {}", self.epsilon_sq)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!("gamma must be positive, got {}", self.gamma)));
        }
        Ok(())
    }
}

fn check(z: &DMatrix<f64>) -> Result<()> {
    if z.nrows() == 0 || z.ncols() == 0 {
        return Err(Error::Shape(format!("empty representation {}x{}", z.nrows(), z.ncols())));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("representation"));
    }
    Ok(())
}

fn check_membership(z: &DMatrix<f64>, pi: &Membership) -> Result<()> {
    if pi.num_nodes() != z.nrows() {
        return Err(Error::Shape(format!(
            "membership covers {} nodes, representation has {} rows",
            pi.num_nodes(),
            z.nrows()
        )));
    }
    Ok(())
}

/// `logdet(I + scale · ZᵀZ)` and, on request, the inverse of that matrix.
struct GramTerm {
    logdet: f64,
    inverse: Option<DMatrix<f64>>,
}

fn gram_term(z: &DMatrix<f64>, scale: f64, want_inverse: bool) -> Result<GramTerm> {
    let d = z.ncols();
    let mut m = z.tr_mul(z);
    m *= scale;
    for i in 0..d {
        m[(i, i)] += 1.0;
    }
    let chol = m
        .cholesky()
        .ok_or(Error::NonFinite("Gram factorization (matrix not positive definite)"))?;
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let inverse = want_inverse.then(|| chol.inverse());
    Ok(GramTerm { logdet, inverse })
}

fn scale_whole(z: &DMatrix<f64>, epsilon_sq: f64) -> f64 {
    z.ncols() as f64 / (z.nrows() as f64 * epsilon_sq)
}

/// `½ logdet(I + d/(Nε²) ZᵀZ)`.
pub fn coding_rate(z: &DMatrix<f64>, cfg: &RateConfig) -> Result<f64> {
    check(z)?;
    cfg.validate()?;
    Ok(0.5 * gram_term(z, scale_whole(z, cfg.epsilon_sq), false)?.logdet)
}

/// Membership-weighted sum of per-class coding rates.
pub fn coding_rate_per_class(z: &DMatrix<f64>, pi: &Membership, cfg: &RateConfig) -> Result<f64> {
    check(z)?;
    check_membership(z, pi)?;
    cfg.validate()?;
    let n = z.nrows() as f64;
    let d = z.ncols() as f64;
    let mut total = 0.0;
    for class in 0..pi.num_classes() {
        let count = pi.counts()[class];
        if count == 0 {
            continue;
        }
        let zj = z.select_rows(&pi.members(class));
        let scale = d / (count as f64 * cfg.epsilon_sq);
        total += count as f64 / (2.0 * n) * gram_term(&zj, scale, false)?.logdet;
    }
    Ok(total)
}

/// `γ R(Z) - Rᶜ(Z | Π)`.
pub fn delta_r(z: &DMatrix<f64>, pi: &Membership, cfg: &RateConfig) -> Result<f64> {
    Ok(cfg.gamma * coding_rate(z, cfg)? - coding_rate_per_class(z, pi, cfg)?)
}

/// Gradient of [`delta_r`] with respect to `Z`.
pub fn delta_r_gradient(z: &DMatrix<f64>, pi: &Membership, cfg: &RateConfig) -> Result<DMatrix<f64>> {
    Ok(delta_r_with_gradient(z, pi, cfg)?.1)
}

/// [`delta_r`] and its gradient from a single set of factorizations.
pub fn delta_r_with_gradient(
    z: &DMatrix<f64>,
    pi: &Membership,
    cfg: &RateConfig,
) -> Result<(f64, DMatrix<f64>)> {
    check(z)?;
    check_membership(z, pi)?;
    cfg.validate()?;
    let n = z.nrows() as f64;
    let d = z.ncols() as f64;

    let c = scale_whole(z, cfg.epsilon_sq);
    let whole = gram_term(z, c, true)?;
    let mut value = cfg.gamma * 0.5 * whole.logdet;
    let mut grad = z * whole.inverse.expect("requested");
    grad *= cfg.gamma * c;

    for class in 0..pi.num_classes() {
        let count = pi.counts()[class];
        if count == 0 {
            continue;
        }
        let members = pi.members(class);
        let zj = z.select_rows(&members);
        let cj = d / (count as f64 * cfg.epsilon_sq);
        let term = gram_term(&zj, cj, true)?;
        let weight = count as f64 / n;
        value -= 0.5 * weight * term.logdet;
        let gj = &zj * term.inverse.expect("requested");
        let coef = weight * cj;
        for (local, &row) in members.iter().enumerate() {
            for k in 0..z.ncols() {
                grad[(row, k)] -= coef * gj[(local, k)];
            }
        }
    }
    Ok((value, grad))
}

/// Log-volume of a point cloud, `½ Σ log λᵢ` over the eigenvalues of the
/// covariance `(1/N) ZcᵀZc` of the column-centered data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogVolume {
    pub value: f64,
    /// At least one eigenvalue fell below [`EIGEN_FLOOR`] and was floored.
    pub rank_deficient: bool,
}

pub fn log_volume(z: &DMatrix<f64>) -> Result<LogVolume> {
    check(z)?;
    if z.nrows() < 2 {
        return Err(Error::InvalidArgument("log-volume needs at least two rows".into()));
    }
    let n = z.nrows() as f64;
    let mut centered = z.clone();
    for mut col in centered.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let mut cov = centered.tr_mul(&centered);
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut rank_deficient = false;
    let value = 0.5
        * eig
            .eigenvalues
            .iter()
            .map(|&l| {
                if l < EIGEN_FLOOR {
                    rank_deficient = true;
                    EIGEN_FLOOR.ln()
                } else {
                    l.ln()
                }
            })
            .sum::<f64>();
    Ok(LogVolume { value, rank_deficient })
}

/// Log-volume of the tolerance ball `w ~ N(0, (ε²/d) I)`: `(d/2) log(ε²/d)`.
pub fn tolerance_log_volume(dim: usize, epsilon_sq: f64) -> f64 {
    0.5 * dim as f64 * (epsilon_sq / dim as f64).ln()
}

/// Noise/tolerance volume ratio of the shift `Z_noisy - Z_clean`. Exactly
/// zero when the two representations coincide.
pub fn ntvr(z_clean: &DMatrix<f64>, z_noisy: &DMatrix<f64>, epsilon_sq: f64) -> Result<f64> {
    if z_clean.shape() != z_noisy.shape() {
        return Err(Error::Shape(format!(
            "clean representation is {:?}, noisy is {:?}",
            z_clean.shape(),
            z_noisy.shape()
        )));
    }
    if !(epsilon_sq > 0.0) {
        return Err(Error::InvalidArgument("epsilon_sq must be positive".into()));
    }
    let shift = z_noisy - z_clean;
    if shift.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let vol = log_volume(&shift)?;
    Ok((vol.value - tolerance_log_volume(shift.ncols(), epsilon_sq)).exp())
}

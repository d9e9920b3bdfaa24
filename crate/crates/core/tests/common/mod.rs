//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use erase_core::propagation::Membership;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Membership with every class populated when `n >= k`.
pub fn random_membership(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Membership {
    let assignment: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
    Membership::from_assignment(assignment, k).unwrap()
}

/// `½ Σ log(1 + scale·λ)` over the eigenvalues of `ZᵀZ`.
pub fn eigen_half_logdet(z: &DMatrix<f64>, scale: f64) -> f64 {
    let eig = SymmetricEigen::new(z.tr_mul(z));
    0.5 * eig.eigenvalues.iter().map(|&l| (1.0 + scale * l.max(0.0)).ln()).sum::<f64>()
}

pub fn oracle_rate(z: &DMatrix<f64>, eps_sq: f64) -> f64 {
    let (n, d) = z.shape();
    eigen_half_logdet(z, d as f64 / (n as f64 * eps_sq))
}

pub fn oracle_rate_per_class(z: &DMatrix<f64>, assignment: &[usize], k: usize, eps_sq: f64) -> f64 {
    let (n, d) = z.shape();
    (0..k)
        .map(|j| {
            let rows: Vec<usize> = (0..n).filter(|&i| assignment[i] == j).collect();
            if rows.is_empty() {
                return 0.0;
            }
            let nj = rows.len() as f64;
            nj / n as f64 * eigen_half_logdet(&z.select_rows(&rows), d as f64 / (nj * eps_sq))
        })
        .sum()
}

pub fn oracle_delta_r(z: &DMatrix<f64>, assignment: &[usize], k: usize, eps_sq: f64, gamma: f64) -> f64 {
    gamma * oracle_rate(z, eps_sq) - oracle_rate_per_class(z, assignment, k, eps_sq)
}

/// Central differences of `f` at every entry of `x`.
pub fn finite_difference(x: &DMatrix<f64>, h: f64, mut f: impl FnMut(&DMatrix<f64>) -> f64) -> DMatrix<f64> {
    let mut grad = DMatrix::zeros(x.nrows(), x.ncols());
    let mut probe = x.clone();
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            let orig = probe[(i, j)];
            probe[(i, j)] = orig + h;
            let up = f(&probe);
            probe[(i, j)] = orig - h;
            let down = f(&probe);
            probe[(i, j)] = orig;
            grad[(i, j)] = (up - down) / (2.0 * h);
        }
    }
    grad
}

/// `‖got − want‖ / ‖want‖`, with the denominator floored at 1e-4 so a
/// vanishing gradient compares on absolute error instead.
pub fn relative_error(got: &DMatrix<f64>, want: &DMatrix<f64>) -> f64 {
    (got - want).norm() / want.norm().max(1e-4)
}

/// Symmetric 0/1 adjacency with each pair present with probability `p`.
pub fn random_dense_adjacency(n: usize, p: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                a[(i, j)] = 1.0;
                a[(j, i)] = 1.0;
            }
        }
    }
    a
}

pub fn edge_list(a: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = a.nrows();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if a[(i, j)] != 0.0 {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// `D^{-1/2} A D^{-1/2}` on a dense matrix, isolated rows left at zero.
pub fn dense_normalize(a: &DMatrix<f64>) -> DMatrix<f64> {
    let inv_sqrt: Vec<f64> = a
        .row_iter()
        .map(|r| {
            let deg = r.sum();
            if deg > 0.0 { 1.0 / deg.sqrt() } else { 0.0 }
        })
        .collect();
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| inv_sqrt[i] * a[(i, j)] * inv_sqrt[j])
}

pub fn dense_mask(a: &DMatrix<f64>, mask: &[bool]) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| if mask[i] && mask[j] { a[(i, j)] } else { 0.0 })
}

/// `M^p` by repeated squaring.
pub fn matrix_power(m: &DMatrix<f64>, mut p: usize) -> DMatrix<f64> {
    let mut result = DMatrix::identity(m.nrows(), m.ncols());
    let mut base = m.clone();
    while p > 0 {
        if p & 1 == 1 {
            result = &result * &base;
        }
        base = &base * &base;
        p >>= 1;
    }
    result
}

/// `((1-α) Ã + α I)^T L0`.
pub fn dense_propagation(norm_adj: &DMatrix<f64>, l0: &DMatrix<f64>, alpha: f64, steps: usize) -> DMatrix<f64> {
    let n = norm_adj.nrows();
    let op = norm_adj * (1.0 - alpha) + DMatrix::<f64>::identity(n, n) * alpha;
    matrix_power(&op, steps) * l0
}

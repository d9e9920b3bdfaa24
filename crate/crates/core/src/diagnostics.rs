//! Representation diagnostics: class-sorted cosine-similarity matrices and
//! 2-d principal-component projections.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// `nodes` ordered by (class, index). When there are more than `cap` of
/// them, each class keeps at most `cap / classes_present` nodes chosen by a
/// seeded shuffle.
pub fn class_sorted_sample(nodes: &[usize], labels: &[usize], cap: usize, seed: u64) -> Vec<usize> {
    let num_classes = nodes.iter().map(|&i| labels[i] + 1).max().unwrap_or(0);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for &i in nodes {
        by_class[labels[i]].push(i);
    }
    if nodes.len() > cap {
        let present = by_class.iter().filter(|c| !c.is_empty()).count().max(1);
        let quota = (cap / present).max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for members in by_class.iter_mut() {
            members.shuffle(&mut rng);
            members.truncate(quota);
        }
    }
    by_class
        .into_iter()
        .flat_map(|mut members| {
            members.sort_unstable();
            members
        })
        .collect()
}

/// Pairwise cosine similarity of the selected rows. Zero rows have zero
/// similarity to everything.
pub fn cosine_matrix(z: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    let mut sel = z.select_rows(rows);
    for mut row in sel.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    &sel * sel.transpose()
}

/// Mean of each (class, class) block of a class-sorted square matrix.
pub fn block_means(matrix: &DMatrix<f64>, classes: &[usize], num_classes: usize) -> DMatrix<f64> {
    let mut sums = DMatrix::<f64>::zeros(num_classes, num_classes);
    let mut counts = DMatrix::<f64>::zeros(num_classes, num_classes);
    for (a, &ca) in classes.iter().enumerate() {
        for (b, &cb) in classes.iter().enumerate() {
            sums[(ca, cb)] += matrix[(a, b)];
            counts[(ca, cb)] += 1.0;
        }
    }
    sums.zip_map(&counts, |s, c| if c > 0.0 { s / c } else { 0.0 })
}

/// Projection of the selected rows onto the top two principal axes of
/// their centered covariance. Each axis is signed so its largest-magnitude
/// loading is positive.
pub fn pca_2d(z: &DMatrix<f64>, rows: &[usize]) -> Result<DMatrix<f64>> {
    if z.ncols() < 2 || rows.len() < 2 {
        return Err(Error::InvalidArgument("PCA needs at least two rows and two columns".into()));
    }
    let mut sel = z.select_rows(rows);
    for mut col in sel.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let cov = sel.tr_mul(&sel) / rows.len() as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut axes = DMatrix::zeros(z.ncols(), 2);
    for (slot, &idx) in order.iter().take(2).enumerate() {
        let mut v = eig.eigenvectors.column(idx).clone_owned();
        let lead = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if lead < 0.0 {
            v.neg_mut();
        }
        axes.set_column(slot, &v);
    }
    Ok(sel * axes)
}

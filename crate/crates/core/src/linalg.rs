//! Small dense linear-algebra helpers shared by the analysis modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Ties in the sign rule are entries within this relative distance of the
/// largest magnitude.
const SIGN_TIE_RTOL: f64 = 1e-12;

/// Index of the largest-magnitude entry, lowest index winning ties.
pub(crate) fn dominant_index<'a>(values: impl IntoIterator<Item = &'a f64>) -> usize {
    let values: Vec<f64> = values.into_iter().map(|v| v.abs()).collect();
    let max = values.iter().cloned().fold(0.0_f64, f64::max);
    values
        .iter()
        .position(|&v| v >= max * (1.0 - SIGN_TIE_RTOL))
        .unwrap_or(0)
}

/// Flip each column so its largest-magnitude entry is positive.
pub fn normalize_column_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let i = dominant_index(col.iter());
        if col[i] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Full `m x m` orthogonal factor of the Householder QR of `a` (`m x k`).
///
/// Reflectors follow the LAPACK `dlarfg` convention (`beta = -sign(alpha) * norm`),
/// so the trailing `m - rank` columns coincide with what LAPACK produces for the
/// trailing right singular vectors of a wide matrix `a^T`.
pub(crate) fn householder_q(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, k) = a.shape();
    let mut r = a.clone();
    let mut reflectors: Vec<(usize, DVector<f64>, f64)> = Vec::new();
    for j in 0..k.min(m) {
        let alpha = r[(j, j)];
        let tail_norm = (j + 1..m).map(|i| r[(i, j)].powi(2)).sum::<f64>().sqrt();
        if tail_norm == 0.0 {
            continue;
        }
        let beta = -alpha.signum() * alpha.hypot(tail_norm);
        let tau = (beta - alpha) / beta;
        let mut v = DVector::zeros(m - j);
        v[0] = 1.0;
        for i in j + 1..m {
            v[i - j] = r[(i, j)] / (alpha - beta);
        }
        // apply H = I - tau v v^T to the trailing block of r
        for c in j..k {
            let dot: f64 = (j..m).map(|i| v[i - j] * r[(i, c)]).sum();
            for i in j..m {
                r[(i, c)] -= tau * v[i - j] * dot;
            }
        }
        reflectors.push((j, v, tau));
    }
    let mut q = DMatrix::identity(m, m);
    for (j, v, tau) in reflectors.iter().rev() {
        for c in 0..m {
            let dot: f64 = (*j..m).map(|i| v[i - j] * q[(i, c)]).sum();
            for i in *j..m {
                q[(i, c)] -= tau * v[i - j] * dot;
            }
        }
    }
    q
}

/// Singular values of `a`, descending.
pub(crate) fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Numerical rank with the `sigma > rtol * sigma_max` rule.
pub(crate) fn numerical_rank(a: &DMatrix<f64>, rtol: f64) -> usize {
    let s = singular_values(a);
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > rtol * smax).count()
}

/// Minimum-norm least-squares solution of `a x = b` through the pseudoinverse.
pub(crate) fn min_norm_solve(a: &DMatrix<f64>, b: &DVector<f64>, rtol: f64) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = if smax > 0.0 { rtol * smax } else { 0.0 };
    // `solve` zeroes singular values at or below eps
    svd.solve(b, eps).expect("both factors were requested")
}

/// Compensated (Neumaier) sum.
pub fn accurate_sum(values: &[f64]) -> f64 {
    let (mut sum, mut comp) = (0.0_f64, 0.0_f64);
    for &v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + comp
}

pub(crate) fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Symmetric eigendecomposition sorted by descending eigenvalue, eigenvectors
/// unit-norm with the sign rule applied. No clamping.
pub(crate) fn sorted_symmetric_eigen(c: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = c.nrows();
    let eig = SymmetricEigen::new(c.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let norm = col.norm();
        vectors.set_column(dst, &(col / norm));
    }
    normalize_column_signs(&mut vectors);
    (values, vectors)
}

pub(crate) fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j])
}

pub(crate) fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

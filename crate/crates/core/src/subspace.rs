//! Active-subspace matrix assembly, eigen-analysis and unique groups.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dimension::describe_group;
use crate::error::{Error, Result};
use crate::linalg::{accurate_sum, max_abs, min_norm_solve, singular_values, sorted_symmetric_eigen};
use crate::quadrature::Points;

/// Rows per partial sum in [`assemble_c`]. Fixed so the reduction tree, and
/// therefore the rounding, does not depend on the thread count.
pub const CHUNK: usize = 4096;
pub const WEIGHT_SUM_TOL: f64 = 1e-10;
pub const SYMMETRY_TOL: f64 = 1e-10;
pub const CLAMP_TOL: f64 = 1e-12;
/// Relative eigenvalue gap below which the rotated groups are reported as non-unique.
pub const UNIQUE_GAP: f64 = 1e-3;
pub const SPAN_TOL: f64 = 1e-6;

/// `sum_j w_j g_j g_j^T` over gradient rows.
pub fn assemble_c(gradients: &Points, weights: &[f64]) -> Result<DMatrix<f64>> {
    let n = gradients.dim();
    if gradients.len() != weights.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} gradients but {} weights",
            gradients.len(),
            weights.len()
        )));
    }
    let total = accurate_sum(weights);
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::InvalidArgument(format!("weights sum to {total}, expected 1")));
    }
    if let Some(i) = gradients.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("gradient row {}", i / n)));
    }

    let tri = n * (n + 1) / 2;
    let partials: Vec<Vec<f64>> = gradients
        .as_slice()
        .par_chunks(CHUNK * n)
        .zip(weights.par_chunks(CHUNK))
        .map(|(rows, ws)| {
            let mut acc = vec![0.0; tri];
            for (g, w) in rows.chunks_exact(n).zip(ws) {
                let mut idx = 0;
                for i in 0..n {
                    let wi = w * g[i];
                    for gj in &g[..=i] {
                        acc[idx] += wi * gj;
                        idx += 1;
                    }
                }
            }
            acc
        })
        .collect();
    let mut lower = vec![0.0; tri];
    for part in &partials {
        for (a, p) in lower.iter_mut().zip(part) {
            *a += p;
        }
    }
    let mut c = DMatrix::zeros(n, n);
    let mut idx = 0;
    for i in 0..n {
        for j in 0..=i {
            c[(i, j)] = lower[idx];
            c[(j, i)] = lower[idx];
            idx += 1;
        }
    }
    Ok(c)
}

fn check_symmetric(c: &DMatrix<f64>) -> Result<()> {
    if !c.is_square() {
        return Err(Error::ShapeMismatch(format!("{}x{} matrix is not square", c.nrows(), c.ncols())));
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix C".into()));
    }
    let asym = max_abs(&(c - c.transpose()));
    if asym > SYMMETRY_TOL * max_abs(c).max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// Sorted eigenpairs without clamping; used for decay studies where the
/// sign and size of tiny eigenvalues matter.
pub fn eigendecompose_raw(c: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    check_symmetric(c)?;
    let sym = (c + c.transpose()) * 0.5;
    Ok(sorted_symmetric_eigen(&sym))
}

/// Descending eigenvalues and sign-normalized eigenvectors of a PSD matrix.
/// Round-off negatives are clamped to zero.
pub fn eigendecompose(c: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let (mut values, vectors) = eigendecompose_raw(c)?;
    let top = values.first().copied().unwrap_or(0.0).max(0.0);
    for v in values.iter_mut() {
        if *v < 0.0 {
            if *v < -CLAMP_TOL * top && *v <= -CLAMP_TOL {
                return Err(Error::NotPositiveSemidefinite(*v));
            }
            *v = 0.0;
        }
    }
    Ok((values, vectors))
}

/// Mean squared partial derivatives, the diagonal of `C`.
pub fn sensitivity_metrics(c: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_symmetric(c)?;
    Ok(c.diagonal().iter().copied().collect())
}

/// A rotated group: exponents over the independent variables and a readable form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub exponents: Vec<f64>,
    pub descriptor: String,
}

/// `Z = W U` and one descriptor per column.
pub fn unique_groups(basis: &DMatrix<f64>, u: &DMatrix<f64>, symbols: &[String]) -> Result<(DMatrix<f64>, Vec<Group>)> {
    if basis.ncols() != u.nrows() || !u.is_square() || symbols.len() != basis.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "W is {}x{}, U is {}x{}, {} symbols",
            basis.nrows(),
            basis.ncols(),
            u.nrows(),
            u.ncols(),
            symbols.len()
        )));
    }
    let z = basis * u;
    let groups = z
        .column_iter()
        .map(|col| {
            let exponents: Vec<f64> = col.iter().copied().collect();
            Group { descriptor: describe_group(symbols, &exponents), exponents }
        })
        .collect();
    Ok((z, groups))
}

/// Least-squares `E` with `Z = W_classical E`, and the max-abs residual.
pub fn express_in_classical(z: &DMatrix<f64>, classical: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    if z.nrows() != classical.nrows() {
        return Err(Error::ShapeMismatch(format!("Z has {} rows, classical basis {}", z.nrows(), classical.nrows())));
    }
    let mut e = DMatrix::zeros(classical.ncols(), z.ncols());
    for (j, col) in z.column_iter().enumerate() {
        let x = min_norm_solve(classical, &col.into_owned(), 1e-12);
        e.set_column(j, &x);
    }
    let residual = max_abs(&(classical * &e - z));
    if residual > SPAN_TOL {
        return Err(Error::SpanMismatch(residual));
    }
    Ok((e, residual))
}

/// `arccos(U[0,0])` in degrees, for two groups.
pub fn rotation_angle(u: &DMatrix<f64>) -> Result<f64> {
    if u.shape() != (2, 2) {
        return Err(Error::WrongDimension { expected: 2, got: u.nrows() });
    }
    Ok(u[(0, 0)].clamp(-1.0, 1.0).acos().to_degrees())
}

/// Spectral-norm distance between the projectors onto the leading `k` columns.
pub fn subspace_distance(u1: &DMatrix<f64>, u2: &DMatrix<f64>, k: usize) -> Result<f64> {
    if u1.nrows() != u2.nrows() || k > u1.ncols() || k > u2.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "cannot compare {}x{} and {}x{} bases at k = {k}",
            u1.nrows(),
            u1.ncols(),
            u2.nrows(),
            u2.ncols()
        )));
    }
    let a = u1.columns(0, k);
    let b = u2.columns(0, k);
    let diff = a * a.transpose() - b * b.transpose();
    Ok(singular_values(&diff).first().copied().unwrap_or(0.0))
}

/// Per-column max-abs difference after flipping each column of `b` to best match `a`.
pub fn sign_aligned_column_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    a.column_iter()
        .zip(b.column_iter())
        .map(|(x, y)| {
            let plus = (x - y).amax();
            let minus = (x + y).amax();
            plus.min(minus)
        })
        .collect()
}

/// Whether every consecutive eigenvalue gap exceeds `UNIQUE_GAP * lambda_1`.
pub fn eigenvalues_distinct(values: &[f64]) -> bool {
    let top = values.first().copied().unwrap_or(0.0);
    top > 0.0 && values.windows(2).all(|w| w[0] - w[1] > UNIQUE_GAP * top)
}

/// Provenance recorded with every analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub algorithm: String,
    pub h: Option<f64>,
    pub quadrature: String,
    pub symbols: Vec<String>,
    pub w: Vec<f64>,
    pub basis: Vec<Vec<f64>>,
    pub unique: bool,
    pub evaluations: u64,
    pub holdout_evaluations: u64,
    pub training_rmse: Option<f64>,
    pub holdout_rmse: Option<f64>,
}

/// Output of either algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceResult {
    pub c: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub u: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub groups: Vec<Group>,
    pub sensitivity: Vec<f64>,
    pub metadata: Metadata,
}

impl SubspaceResult {
    /// Eigen-analysis of `c` and rotation of `basis`; metadata `unique` is filled in.
    pub fn from_c(c: DMatrix<f64>, basis: &DMatrix<f64>, mut metadata: Metadata) -> Result<Self> {
        let (eigenvalues, u) = eigendecompose(&c)?;
        let sensitivity = sensitivity_metrics(&c)?;
        let (z, groups) = unique_groups(basis, &u, &metadata.symbols)?;
        metadata.unique = eigenvalues_distinct(&eigenvalues);
        Ok(SubspaceResult { c, eigenvalues, u, z, groups, sensitivity, metadata })
    }

    pub fn lambda_ratio(&self) -> f64 {
        match self.eigenvalues.as_slice() {
            [first, second, ..] if *first > 0.0 => second / first,
            _ => 0.0,
        }
    }
}

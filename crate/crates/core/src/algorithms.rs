//! The response-surface and finite-difference pipelines, the full-space
//! ridge diagnostic, and semi-empirical prediction.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dimension::{log_groups, nondim_output, PiBasis, QuantitySystem};
use crate::error::{Error, ExperimentError, Result};
use crate::experiment::Experiment;
use crate::linalg::{from_rows, to_rows};
use crate::quadrature::{latin_hypercube, Points, QuadratureSpec, RegimeBox};
use crate::subspace::{assemble_c, eigendecompose_raw, Metadata, SubspaceResult};
use crate::surrogate::{coefficient_count, fit_polynomial, ResponseSurface};

/// Tolerance of the shifted-point identity `W^T log q' = gamma + h e_k`.
pub const SHIFT_TOL: f64 = 1e-12;

/// Knobs shared by both algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlgorithmConfig {
    pub h: f64,
    pub degree: usize,
    pub quadrature: QuadratureSpec,
    pub design: usize,
    pub holdout: usize,
    pub seed: u64,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        AlgorithmConfig {
            h: 1e-6,
            degree: 2,
            quadrature: QuadratureSpec::default(),
            design: 1000,
            holdout: 200,
            seed: 7,
        }
    }
}

impl AlgorithmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::InvalidArgument(format!("step h = {} must be positive", self.h)));
        }
        if self.degree < 1 {
            return Err(Error::OutOfRange { what: "surrogate degree", value: self.degree, allowed: ">= 1" });
        }
        Ok(())
    }
}

/// One audited sample of Algorithm 2.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub point: Vec<f64>,
    pub pi: f64,
    pub gradient: Vec<f64>,
}

/// `exp(log q + h W[:, k])`, the minimum-change point whose `k`-th log group
/// is shifted by `h`.
pub fn fd_shift_point(q_vec: &[f64], basis: &DMatrix<f64>, k: usize, h: f64) -> Result<Vec<f64>> {
    if k >= basis.ncols() {
        return Err(Error::OutOfRange { what: "group index", value: k, allowed: "< n" });
    }
    let gamma = log_groups(q_vec, basis)?;
    let shifted: Vec<f64> = q_vec.iter().zip(basis.column(k).iter()).map(|(q, w)| q * (h * w).exp()).collect();
    let moved = log_groups(&shifted, basis)?;
    let mut target = gamma;
    target[k] += h;
    let miss = (moved - target).amax();
    if miss >= SHIFT_TOL {
        return Err(Error::InvalidArgument(format!("shifted point misses its target groups by {miss:e}")));
    }
    Ok(shifted)
}

/// Forward-difference gradient of `pi` with respect to the log groups; `n`
/// experiment evaluations.
pub fn fd_gradient<E: Experiment + ?Sized>(
    experiment: &E,
    q_vec: &[f64],
    pi_base: f64,
    w: &DVector<f64>,
    basis: &DMatrix<f64>,
    h: f64,
) -> Result<Vec<f64>> {
    (0..basis.ncols())
        .map(|k| {
            let shifted = fd_shift_point(q_vec, basis, k, h)?;
            let q = experiment.evaluate(&shifted)?;
            if !q.is_finite() {
                return Err(ExperimentError::NonFinite { point: shifted, value: q }.into());
            }
            Ok((nondim_output(q, &shifted, w)? - pi_base) / h)
        })
        .collect()
}

fn metadata(algorithm: &str, h: Option<f64>, quadrature: String, system: &QuantitySystem, basis: &PiBasis) -> Metadata {
    Metadata {
        algorithm: algorithm.into(),
        h,
        quadrature,
        symbols: system.symbols(),
        w: basis.w().iter().copied().collect(),
        basis: to_rows(basis.basis()),
        unique: false,
        evaluations: 0,
        holdout_evaluations: 0,
        training_rmse: None,
        holdout_rmse: None,
    }
}

fn check_shapes(system: &QuantitySystem, basis: &PiBasis, region: &RegimeBox) -> Result<()> {
    if basis.m() != system.m() || region.dim() != system.m() {
        return Err(Error::ShapeMismatch(format!(
            "system has {} variables, basis {} and box {}",
            system.m(),
            basis.m(),
            region.dim()
        )));
    }
    Ok(())
}

/// Finite-difference algorithm: `N (n + 1)` evaluations on the quadrature rule.
pub fn algorithm2<E: Experiment + ?Sized>(
    experiment: &E,
    system: &QuantitySystem,
    basis: &PiBasis,
    region: &RegimeBox,
    config: &AlgorithmConfig,
) -> Result<SubspaceResult> {
    algorithm2_traced(experiment, system, basis, region, config, false).map(|(r, _)| r)
}

/// [`algorithm2`] that can also return every sample's point, `pi` and gradient.
pub fn algorithm2_traced<E: Experiment + ?Sized>(
    experiment: &E,
    system: &QuantitySystem,
    basis: &PiBasis,
    region: &RegimeBox,
    config: &AlgorithmConfig,
    trace: bool,
) -> Result<(SubspaceResult, Option<Vec<TraceRow>>)> {
    config.validate()?;
    check_shapes(system, basis, region)?;
    let rule = config.quadrature.build(region, config.seed)?;
    let (m, n, count) = (basis.m(), basis.n(), rule.len());
    let w = basis.w();
    let wm = basis.basis();

    // base points first, then the n shifted copies of each base point
    let shifted: Vec<Result<Vec<f64>>> = (0..count)
        .into_par_iter()
        .map(|j| {
            let q = rule.points.row(j);
            let mut rows = Vec::with_capacity(n * m);
            for k in 0..n {
                rows.extend(fd_shift_point(q, wm, k, config.h)?);
            }
            Ok(rows)
        })
        .collect();
    let mut all = Vec::with_capacity(count * (n + 1) * m);
    all.extend_from_slice(rule.points.as_slice());
    for rows in shifted {
        all.extend(rows?);
    }
    let all = Points::new(m, all)?;
    let values = experiment.evaluate_batch(&all)?;

    let grads: Vec<Result<(f64, Vec<f64>)>> = (0..count)
        .into_par_iter()
        .map(|j| {
            let pi0 = nondim_output(values[j], all.row(j), w)?;
            let mut g = Vec::with_capacity(n);
            for k in 0..n {
                let idx = count + j * n + k;
                let pik = nondim_output(values[idx], all.row(idx), w)?;
                g.push((pik - pi0) / config.h);
            }
            Ok((pi0, g))
        })
        .collect();
    let mut flat = Vec::with_capacity(count * n);
    let mut rows = trace.then(|| Vec::with_capacity(count));
    for (j, item) in grads.into_iter().enumerate() {
        let (pi, g) = item?;
        flat.extend_from_slice(&g);
        if let Some(rows) = rows.as_mut() {
            rows.push(TraceRow { point: rule.points.row(j).to_vec(), pi, gradient: g });
        }
    }
    let gradients = Points::new(n, flat)?;
    let c = assemble_c(&gradients, &rule.weights)?;
    let mut meta = metadata("algorithm2", Some(config.h), config.quadrature.to_string(), system, basis);
    meta.evaluations = all.len() as u64;
    Ok((SubspaceResult::from_c(c, wm, meta)?, rows))
}

/// A response surface over the log groups plus the scaling that restores
/// dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiEmpiricalModel {
    pub symbols: Vec<String>,
    pub w: Vec<f64>,
    pub basis: Vec<Vec<f64>>,
    pub surface: ResponseSurface,
}

impl SemiEmpiricalModel {
    pub fn predict(&self, q_vec: &[f64]) -> Result<f64> {
        predict_dependent(&self.surface, &DVector::from_column_slice(&self.w), &from_rows(&self.basis), q_vec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: SemiEmpiricalModel = serde_json::from_str(text)?;
        let m = model.symbols.len();
        if model.w.len() != m || model.basis.len() != m || model.basis.iter().any(|r| r.len() != model.surface.n()) {
            return Err(Error::ShapeMismatch("inconsistent model document".into()));
        }
        Ok(model)
    }
}

/// `exp(w^T log q) * g(W^T log q)`.
pub fn predict_dependent(surface: &ResponseSurface, w: &DVector<f64>, basis: &DMatrix<f64>, q_vec: &[f64]) -> Result<f64> {
    let gamma = log_groups(q_vec, basis)?;
    let scale = 1.0 / nondim_output(1.0, q_vec, w)?;
    Ok(scale * surface.eval(gamma.as_slice())?)
}

/// Output of the response-surface algorithm.
#[derive(Debug, Clone)]
pub struct Algorithm1Output {
    pub result: SubspaceResult,
    pub model: SemiEmpiricalModel,
}

fn pis_and_groups<E: Experiment + ?Sized>(experiment: &E, design: &Points, basis: &PiBasis) -> Result<(Vec<f64>, Points)> {
    let values = experiment.evaluate_batch(design)?;
    let mut pis = Vec::with_capacity(design.len());
    let mut gammas = Vec::with_capacity(design.len() * basis.n());
    for (q, v) in design.rows().zip(values) {
        pis.push(nondim_output(v, q, basis.w())?);
        gammas.extend(log_groups(q, basis.basis())?.iter());
    }
    Ok((pis, Points::new(basis.n(), gammas)?))
}

/// Response-surface algorithm: fit on a Latin hypercube design, integrate the
/// surface gradient with the configured rule in `q`-space.
///
/// `config.holdout` extra points, drawn from a second design, measure the
/// surrogate's prediction error; they are counted apart from the design budget.
pub fn algorithm1<E: Experiment + ?Sized>(
    experiment: &E,
    system: &QuantitySystem,
    basis: &PiBasis,
    region: &RegimeBox,
    config: &AlgorithmConfig,
) -> Result<Algorithm1Output> {
    config.validate()?;
    check_shapes(system, basis, region)?;
    let needed = coefficient_count(basis.n(), config.degree);
    if config.design < needed {
        return Err(Error::DesignTooSmall { design: config.design, needed });
    }
    let design = latin_hypercube(region, config.design, config.seed)?;
    let (pis, gammas) = pis_and_groups(experiment, &design, basis)?;
    let surface = fit_polynomial(&gammas, &pis, config.degree)?;

    let holdout_rmse = if config.holdout > 0 {
        let fresh = latin_hypercube(region, config.holdout, config.seed.wrapping_add(1))?;
        let (pis, gammas) = pis_and_groups(experiment, &fresh, basis)?;
        Some(surface.rmse(&gammas, &pis)?)
    } else {
        None
    };

    let rule = config.quadrature.build(region, config.seed)?;
    let wm = basis.basis();
    let grads: Vec<Result<Vec<f64>>> = (0..rule.len())
        .into_par_iter()
        .map(|j| {
            let gamma = log_groups(rule.points.row(j), wm)?;
            surface.grad(gamma.as_slice())
        })
        .collect();
    let mut flat = Vec::with_capacity(rule.len() * basis.n());
    for g in grads {
        flat.extend(g?);
    }
    let c = assemble_c(&Points::new(basis.n(), flat)?, &rule.weights)?;

    let mut meta = metadata("algorithm1", None, config.quadrature.to_string(), system, basis);
    meta.evaluations = config.design as u64;
    meta.holdout_evaluations = config.holdout as u64;
    meta.training_rmse = Some(surface.training_rmse());
    meta.holdout_rmse = holdout_rmse;
    let result = SubspaceResult::from_c(c, wm, meta)?;
    let model = SemiEmpiricalModel {
        symbols: system.symbols(),
        w: basis.w().iter().copied().collect(),
        basis: to_rows(wm),
        surface,
    };
    Ok(Algorithm1Output { result, model })
}

/// Eigen-analysis of `C` for the raw map `x = log q -> q`.
#[derive(Debug, Clone, PartialEq)]
pub struct FullSpaceResult {
    pub h: f64,
    pub c: DMatrix<f64>,
    /// Unclamped, descending.
    pub eigenvalues: Vec<f64>,
    pub u: DMatrix<f64>,
    pub evaluations: u64,
}

/// Forward differences in each log-variable; `N (m + 1)` evaluations.
pub fn full_space_c<E: Experiment + ?Sized>(
    experiment: &E,
    region: &RegimeBox,
    quadrature: QuadratureSpec,
    seed: u64,
    h: f64,
) -> Result<FullSpaceResult> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step h = {h} must be positive")));
    }
    let rule = quadrature.build(region, seed)?;
    let (m, count) = (region.dim(), rule.len());
    let mut all = Vec::with_capacity(count * (m + 1) * m);
    all.extend_from_slice(rule.points.as_slice());
    for q in rule.points.rows() {
        for i in 0..m {
            all.extend(q.iter().enumerate().map(|(j, &v)| if i == j { v * h.exp() } else { v }));
        }
    }
    let all = Points::new(m, all)?;
    let values = experiment.evaluate_batch(&all)?;
    let mut grads = Vec::with_capacity(count * m);
    for j in 0..count {
        for i in 0..m {
            grads.push((values[count + j * m + i] - values[j]) / h);
        }
    }
    let c = assemble_c(&Points::new(m, grads)?, &rule.weights)?;
    let (eigenvalues, u) = eigendecompose_raw(&c)?;
    Ok(FullSpaceResult { h, c, eigenvalues, u, evaluations: all.len() as u64 })
}

/// Least-squares slope of `log10 y` against `log10 x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).map(|(x, y)| (x.log10(), y.abs().log10())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// A step-size sweep of [`full_space_c`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RidgeCheck {
    pub h: Vec<f64>,
    /// One row per step, eigenvalues descending.
    pub eigenvalues: Vec<Vec<f64>>,
    /// Log-log decay slope of each eigenvalue beyond the leading `n + 1`.
    pub trailing_slopes: Vec<f64>,
    /// Largest relative change of the leading `n + 1` eigenvalues between the last two steps.
    pub leading_drift: f64,
}

pub fn ridge_check<E: Experiment + ?Sized>(
    experiment: &E,
    region: &RegimeBox,
    quadrature: QuadratureSpec,
    seed: u64,
    hs: &[f64],
    leading: usize,
) -> Result<RidgeCheck> {
    let mut eigenvalues = Vec::with_capacity(hs.len());
    for &h in hs {
        eigenvalues.push(full_space_c(experiment, region, quadrature, seed, h)?.eigenvalues);
    }
    let m = region.dim();
    let trailing_slopes = (leading.min(m)..m)
        .map(|i| {
            let ys: Vec<f64> = eigenvalues.iter().map(|e| e[i]).collect();
            loglog_slope(hs, &ys)
        })
        .collect();
    let leading_drift = match eigenvalues.as_slice() {
        [.., a, b] => (0..leading.min(m)).map(|i| ((a[i] - b[i]) / b[i]).abs()).fold(0.0, f64::max),
        _ => 0.0,
    };
    Ok(RidgeCheck { h: hs.to_vec(), eigenvalues, trailing_slopes, leading_drift })
}

/// Algorithm 2 exponent error against a reference step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdConvergence {
    pub reference_h: f64,
    pub h: Vec<f64>,
    /// Per step, the sign-adjusted max-abs difference of each `Z` column.
    pub errors: Vec<Vec<f64>>,
}

impl FdConvergence {
    /// Largest column error per step.
    pub fn max_errors(&self) -> Vec<f64> {
        self.errors.iter().map(|e| e.iter().copied().fold(0.0, f64::max)).collect()
    }
}

pub fn fd_convergence<E: Experiment + ?Sized>(
    experiment: &E,
    system: &QuantitySystem,
    basis: &PiBasis,
    region: &RegimeBox,
    config: &AlgorithmConfig,
    hs: &[f64],
    reference_h: f64,
) -> Result<FdConvergence> {
    let run = |h: f64| algorithm2(experiment, system, basis, region, &AlgorithmConfig { h, ..*config });
    let reference = run(reference_h)?;
    let mut errors = Vec::with_capacity(hs.len());
    for &h in hs {
        let r = run(h)?;
        errors.push(crate::subspace::sign_aligned_column_diff(&reference.z, &r.z));
    }
    Ok(FdConvergence { reference_h, h: hs.to_vec(), errors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{CountingExperiment, FnExperiment};
    use crate::pipeflow::{pipe_quantity_system, regime_box, PipeFlow, RegimeName};

    fn setup() -> (QuantitySystem, PiBasis) {
        let sys = pipe_quantity_system();
        let basis = PiBasis::for_system(&sys).unwrap();
        (sys, basis)
    }

    /// `q = exp(w^T x) exp(3 g1 + g2)`.
    fn ridge(basis: &PiBasis) -> impl Fn(&[f64]) -> f64 + Send + Sync {
        let w = basis.w().clone();
        let wm = basis.basis().clone();
        move |q: &[f64]| {
            let g = log_groups(q, &wm).unwrap();
            (w.dot(&DVector::from_iterator(q.len(), q.iter().map(|v| v.ln()))) + 3.0 * g[0] + g[1]).exp()
        }
    }

    #[test]
    fn shift_moves_one_group() {
        let (_, basis) = setup();
        let q = [0.12, 5e-6, 0.75, 1e-3, 3.0];
        assert_eq!(fd_shift_point(&q, basis.basis(), 0, 0.0).unwrap(), q.to_vec());
        for k in 0..2 {
            for h in [1e-6, 0.3, -0.2] {
                let s = fd_shift_point(&q, basis.basis(), k, h).unwrap();
                let g0 = log_groups(&q, basis.basis()).unwrap();
                let g1 = log_groups(&s, basis.basis()).unwrap();
                for i in 0..2 {
                    let expected = if i == k { h } else { 0.0 };
                    assert!((g1[i] - g0[i] - expected).abs() < 1e-12);
                }
            }
        }
        assert!(fd_shift_point(&q, basis.basis(), 2, 1e-6).is_err());
    }

    #[test]
    fn gradient_of_synthetic_ridge() {
        let (_, basis) = setup();
        let exp = FnExperiment(ridge(&basis));
        let q = [0.12, 5e-6, 0.75, 1e-3, 3.0];
        let pi = nondim_output(exp.evaluate(&q).unwrap(), &q, basis.w()).unwrap();
        let g = fd_gradient(&exp, &q, pi, basis.w(), basis.basis(), 1e-7).unwrap();
        assert!((g[0] / (3.0 * pi) - 1.0).abs() < 1e-5);
        assert!((g[1] / pi - 1.0).abs() < 1e-5);

        let w = basis.w().clone();
        let flat = FnExperiment(move |q: &[f64]| q.iter().zip(w.iter()).map(|(v, e)| v.powf(*e)).product());
        let q = [1.0, 1.0, 1.0, 1.0, 1.0];
        let g = fd_gradient(&flat, &q, 1.0, basis.w(), basis.basis(), 1e-6).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn pipe_gradient_matches_central_differences() {
        let (_, basis) = setup();
        let pipe = PipeFlow::default();
        let q = [0.12, 5e-6, 0.75, 1e-3, 3.0];
        let pi = nondim_output(pipe.evaluate(&q).unwrap(), &q, basis.w()).unwrap();
        let g = fd_gradient(&pipe, &q, pi, basis.w(), basis.basis(), 1e-6).unwrap();
        for (k, gk) in g.iter().enumerate() {
            let h = 1e-7;
            let plus = fd_shift_point(&q, basis.basis(), k, h).unwrap();
            let minus = fd_shift_point(&q, basis.basis(), k, -h).unwrap();
            let f = |p: &[f64]| nondim_output(pipe.evaluate(p).unwrap(), p, basis.w()).unwrap();
            let central = (f(&plus) - f(&minus)) / (2.0 * h);
            assert!((gk - central).abs() < 5e-6 * central.abs(), "{gk} vs {central}");
        }
    }

    #[test]
    fn algorithm2_on_a_ridge() {
        let (sys, basis) = setup();
        let exp = CountingExperiment::new(FnExperiment(ridge(&basis)));
        let region = regime_box(RegimeName::Turbulent);
        let config = AlgorithmConfig { quadrature: QuadratureSpec::Tensor { points: 3 }, ..Default::default() };
        let r = algorithm2(&exp, &sys, &basis, &region, &config).unwrap();
        assert_eq!(exp.count(), 3u64.pow(5) * 3);
        assert_eq!(r.metadata.evaluations, exp.count());
        assert!(r.eigenvalues[1] < 1e-10 * r.eigenvalues[0]);
        let u1 = [3.0 / 10f64.sqrt(), 1.0 / 10f64.sqrt()];
        assert!((r.u[(0, 0)] - u1[0]).abs() < 1e-6 && (r.u[(1, 0)] - u1[1]).abs() < 1e-6);
    }

    #[test]
    fn algorithm1_on_a_linear_ridge() {
        let (sys, basis) = setup();
        let wm = basis.basis().clone();
        let w = basis.w().clone();
        // pi = 3 g1 + g2 exactly
        let exp = FnExperiment(move |q: &[f64]| {
            let g = log_groups(q, &wm).unwrap();
            let scale: f64 = q.iter().zip(w.iter()).map(|(v, e)| v.powf(*e)).product();
            scale * (3.0 * g[0] + g[1])
        });
        let region = regime_box(RegimeName::Turbulent);
        let config = AlgorithmConfig {
            quadrature: QuadratureSpec::Tensor { points: 3 },
            design: 50,
            holdout: 20,
            ..Default::default()
        };
        let out = algorithm1(&exp, &sys, &basis, &region, &config).unwrap();
        let l = &out.result.eigenvalues;
        assert!((l[0] - 10.0).abs() < 1e-8 && l[1].abs() < 1e-8);
        assert!((out.result.u[(0, 0)] - 3.0 / 10f64.sqrt()).abs() < 1e-8);
        assert_eq!(out.result.metadata.evaluations, 50);
        assert!(out.result.metadata.holdout_rmse.unwrap() < 1e-8);

        let q = [0.12, 5e-6, 0.75, 1e-3, 3.0];
        let truth = exp.evaluate(&q).unwrap();
        assert!((out.model.predict(&q).unwrap() / truth - 1.0).abs() < 1e-8);
        let back = SemiEmpiricalModel::from_json(&out.model.to_json().unwrap()).unwrap();
        assert_eq!(back, out.model);

        let small = AlgorithmConfig { design: 5, ..config };
        assert!(matches!(algorithm1(&exp, &sys, &basis, &region, &small), Err(Error::DesignTooSmall { .. })));
    }

    #[test]
    fn constant_surface_predicts_the_scaling() {
        let (_, basis) = setup();
        let s = ResponseSurface::constant(2, 1.0);
        let q = [0.12, 5e-6, 0.75, 1e-3, 3.0];
        let expected = 0.12 / 0.75 * 9.0;
        assert!((predict_dependent(&s, basis.w(), basis.basis(), &q).unwrap() / expected - 1.0).abs() < 1e-12);
        assert!(predict_dependent(&s, basis.w(), basis.basis(), &[0.0, 1.0, 1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn full_space_of_a_monomial_is_rank_one() {
        let w = [1.0, 0.0, -1.0, 0.0, 2.0];
        let exp = FnExperiment(move |q: &[f64]| q.iter().zip(&w).map(|(v, e)| v.powf(*e)).product());
        let region = RegimeBox::new(&[(0.5, 2.0); 5]).unwrap();
        let r = full_space_c(&exp, &region, QuadratureSpec::Tensor { points: 3 }, 0, 1e-5).unwrap();
        assert_eq!(r.evaluations, 243 * 6);
        // eigensolver round-off is about eps * |C|
        assert!(r.eigenvalues[1].abs() < 1e-14 * r.eigenvalues[0], "{:?}", r.eigenvalues);
        let norm = 6f64.sqrt();
        for (i, e) in w.iter().enumerate() {
            assert!((r.u[(i, 0)] - e / norm).abs() < 1e-4);
        }
    }

    #[test]
    fn slope_fit() {
        let hs = [1e-2, 1e-3, 1e-4];
        let ys: Vec<f64> = hs.iter().map(|h| 5.0 * h * h).collect();
        assert!((loglog_slope(&hs, &ys) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let bad = AlgorithmConfig { h: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let json = serde_json::to_string(&AlgorithmConfig::default()).unwrap();
        let back: AlgorithmConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, AlgorithmConfig::default());
        let partial: AlgorithmConfig = serde_json::from_str(r#"{"h": 1e-5}"#).unwrap();
        assert_eq!(partial.h, 1e-5);
        assert_eq!(partial.design, 1000);
    }
}

//! Polynomial least-squares response surfaces with analytic gradients.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::singular_values;
use crate::quadrature::Points;

/// Largest accepted condition estimate of the feature matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// Multivariate polynomial in standardized coordinates `z = (x - mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSurface {
    degree: usize,
    n: usize,
    exponents: Vec<Vec<u32>>,
    coefficients: Vec<f64>,
    mean: Vec<f64>,
    scale: Vec<f64>,
    training_rmse: f64,
}

/// Monomial exponents of total degree `<= degree` in graded-lex order.
pub fn monomial_exponents(n: usize, degree: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for total in 0..=degree {
        let mut cur = vec![0u32; n];
        push_lex(&mut out, &mut cur, 0, total as u32);
    }
    out
}

fn push_lex(out: &mut Vec<Vec<u32>>, cur: &mut Vec<u32>, pos: usize, left: u32) {
    if pos + 1 >= cur.len() {
        if let Some(last) = cur.last_mut() {
            *last = left;
            out.push(cur.clone());
        } else if left == 0 {
            out.push(Vec::new());
        }
        return;
    }
    for e in (0..=left).rev() {
        cur[pos] = e;
        push_lex(out, cur, pos + 1, left - e);
    }
    cur[pos] = 0;
}

/// Binomial coefficient `C(n + d, d)`.
pub fn coefficient_count(n: usize, degree: usize) -> usize {
    (1..=degree).fold(1usize, |acc, i| acc * (n + i) / i)
}

impl ResponseSurface {
    /// The identically-zero polynomial.
    pub fn zero(n: usize, degree: usize) -> Self {
        let exponents = monomial_exponents(n, degree);
        ResponseSurface {
            degree,
            n,
            coefficients: vec![0.0; exponents.len()],
            exponents,
            mean: vec![0.0; n],
            scale: vec![1.0; n],
            training_rmse: 0.0,
        }
    }

    /// A constant surface.
    pub fn constant(n: usize, value: f64) -> Self {
        let mut s = ResponseSurface::zero(n, 0);
        s.coefficients[0] = value;
        s
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn training_rmse(&self) -> f64 {
        self.training_rmse
    }

    fn standardize(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::ShapeMismatch(format!("surface takes {} inputs, got {}", self.n, x.len())));
        }
        Ok(x.iter().zip(self.mean.iter().zip(&self.scale)).map(|(v, (m, s))| (v - m) / s).collect())
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let z = self.standardize(x)?;
        Ok(self.exponents.iter().zip(&self.coefficients).map(|(e, c)| c * monomial(&z, e)).sum())
    }

    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.standardize(x)?;
        let mut g = vec![0.0; self.n];
        for (e, c) in self.exponents.iter().zip(&self.coefficients) {
            for i in 0..self.n {
                if e[i] == 0 {
                    continue;
                }
                let mut term = c * e[i] as f64;
                for (j, (&ej, &zj)) in e.iter().zip(&z).enumerate() {
                    let p = if j == i { ej - 1 } else { ej };
                    term *= zj.powi(p as i32);
                }
                g[i] += term;
            }
        }
        for (gi, s) in g.iter_mut().zip(&self.scale) {
            *gi /= s;
        }
        Ok(g)
    }

    /// Root-mean-square error against `targets` at `points`.
    pub fn rmse(&self, points: &Points, targets: &[f64]) -> Result<f64> {
        if points.len() != targets.len() {
            return Err(Error::ShapeMismatch("points and targets differ in length".into()));
        }
        let mut sum = 0.0;
        for (p, t) in points.rows().zip(targets) {
            sum += (self.eval(p)? - t).powi(2);
        }
        Ok((sum / targets.len().max(1) as f64).sqrt())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: ResponseSurface = serde_json::from_str(text)?;
        if s.exponents.len() != s.coefficients.len()
            || s.mean.len() != s.n
            || s.scale.len() != s.n
            || s.scale.iter().any(|v| !(*v > 0.0))
            || s.exponents.iter().any(|e| e.len() != s.n)
        {
            return Err(Error::ShapeMismatch("inconsistent response surface document".into()));
        }
        Ok(s)
    }
}

fn monomial(z: &[f64], e: &[u32]) -> f64 {
    z.iter().zip(e).map(|(v, &p)| v.powi(p as i32)).product()
}

/// Least-squares polynomial of total degree `degree` through `(designs, targets)`.
pub fn fit_polynomial(designs: &Points, targets: &[f64], degree: usize) -> Result<ResponseSurface> {
    let n = designs.dim();
    let rows = designs.len();
    if rows != targets.len() {
        return Err(Error::ShapeMismatch(format!("{rows} designs but {} targets", targets.len())));
    }
    if let Some(bad) = targets.iter().find(|t| !t.is_finite()) {
        return Err(Error::NonFinite(format!("surrogate target {bad}")));
    }
    let coefficients = coefficient_count(n, degree);
    if rows < coefficients {
        return Err(Error::Underdetermined { samples: rows, coefficients });
    }

    let mut mean = vec![0.0; n];
    for p in designs.rows() {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows as f64);
    let mut scale = vec![0.0; n];
    for p in designs.rows() {
        for ((s, v), m) in scale.iter_mut().zip(p).zip(&mean) {
            *s += (v - m).powi(2);
        }
    }
    for s in scale.iter_mut() {
        *s = (*s / rows as f64).sqrt();
        if !(*s > 0.0) {
            *s = 1.0;
        }
    }

    let mut surface = ResponseSurface {
        degree,
        n,
        exponents: monomial_exponents(n, degree),
        coefficients: Vec::new(),
        mean,
        scale,
        training_rmse: 0.0,
    };
    let mut features = DMatrix::zeros(rows, coefficients);
    for (r, p) in designs.rows().enumerate() {
        let z = surface.standardize(p)?;
        for (c, e) in surface.exponents.iter().enumerate() {
            features[(r, c)] = monomial(&z, e);
        }
    }

    let qr = features.qr();
    let r = qr.r();
    let sv = singular_values(&r);
    let cond = match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    };
    if cond > MAX_CONDITION {
        return Err(Error::IllConditioned(cond));
    }
    let qtb = qr.q().transpose() * DVector::from_column_slice(targets);
    let coef = r.solve_upper_triangular(&qtb).ok_or(Error::IllConditioned(f64::INFINITY))?;
    surface.coefficients = coef.iter().copied().collect();
    surface.training_rmse = surface.rmse(designs, targets)?;
    Ok(surface)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{latin_hypercube, RegimeBox};
    use proptest::prelude::*;

    fn design(n: usize, count: usize, seed: u64) -> Points {
        let b = RegimeBox::new(&vec![(0.5, 3.0); n]).unwrap();
        latin_hypercube(&b, count, seed).unwrap()
    }

    #[test]
    fn graded_lex_order() {
        let e = monomial_exponents(2, 2);
        let expected: Vec<Vec<u32>> = vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]];
        assert_eq!(e, expected);
        assert_eq!(coefficient_count(2, 2), 6);
        assert_eq!(coefficient_count(5, 3), 56);
        assert_eq!(monomial_exponents(5, 3).len(), 56);
    }

    #[test]
    fn linear_target_is_recovered() {
        let x = design(2, 40, 1);
        let t: Vec<f64> = x.rows().map(|g| 3.0 * g[0] + g[1] + 0.5).collect();
        let s = fit_polynomial(&x, &t, 1).unwrap();
        assert!(s.training_rmse() < 1e-12);
        assert!((s.eval(&[1.0, 2.0]).unwrap() - 5.5).abs() < 1e-12);
        for p in x.rows().take(5) {
            let g = s.grad(p).unwrap();
            assert!((g[0] - 3.0).abs() < 1e-12 && (g[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_target_is_recovered() {
        let x = design(2, 30, 2);
        let t: Vec<f64> = x.rows().map(|g| g[0] * g[0]).collect();
        let s = fit_polynomial(&x, &t, 2).unwrap();
        for g in [[0.1, 7.0], [2.0, -1.0], [-3.0, 0.0]] {
            assert!((s.eval(&g).unwrap() - g[0] * g[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn degree_zero_fit_is_the_mean() {
        let x = design(3, 10, 3);
        let t: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let s = fit_polynomial(&x, &t, 0).unwrap();
        assert!((s.eval(&[9.0, 9.0, 9.0]).unwrap() - 4.5).abs() < 1e-12);
        assert_eq!(ResponseSurface::zero(2, 2).eval(&[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(ResponseSurface::constant(2, 4.0).grad(&[1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn errors() {
        let x = design(2, 5, 4);
        let t = vec![1.0; 5];
        assert!(matches!(fit_polynomial(&x, &t, 2), Err(Error::Underdetermined { samples: 5, coefficients: 6 })));
        assert!(matches!(fit_polynomial(&x, &[1.0, f64::NAN, 1.0, 1.0, 1.0], 1), Err(Error::NonFinite(_))));
        let same = Points::from_rows(&vec![vec![1.0, 1.0]; 6]).unwrap();
        assert!(matches!(fit_polynomial(&same, &[1.0; 6], 1), Err(Error::IllConditioned(_))));
        assert!(ResponseSurface::zero(2, 1).eval(&[1.0]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let x = design(2, 20, 5);
        let t: Vec<f64> = x.rows().map(|g| g[0] * g[1]).collect();
        let s = fit_polynomial(&x, &t, 2).unwrap();
        let back = ResponseSurface::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let x = design(3, 100, 6);
        let t: Vec<f64> = x.rows().map(|g| (g[0] - g[1]).sin() + g[2].exp()).collect();
        let s = fit_polynomial(&x, &t, 3).unwrap();
        let h = 1e-6;
        for p in design(3, 100, 7).rows() {
            let g = s.grad(p).unwrap();
            let gmax = g.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            for i in 0..3 {
                let mut a = p.to_vec();
                let mut b = p.to_vec();
                a[i] += h;
                b[i] -= h;
                let fd = (s.eval(&a).unwrap() - s.eval(&b).unwrap()) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-6 * (1.0 + gmax), "{fd} vs {}", g[i]);
            }
        }
    }

    proptest! {
        #[test]
        fn exact_recovery_of_random_quadratics(c in prop::collection::vec(-5.0f64..5.0, 6), seed in 0u64..500) {
            let x = design(2, 12, seed);
            let f = |g: &[f64]| c[0] + c[1] * g[0] + c[2] * g[1] + c[3] * g[0] * g[0] + c[4] * g[0] * g[1] + c[5] * g[1] * g[1];
            let t: Vec<f64> = x.rows().map(f).collect();
            let s = fit_polynomial(&x, &t, 2).unwrap();
            let scale = t.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
            prop_assert!(s.training_rmse() < 1e-10 * scale);
        }

        #[test]
        fn predictions_invariant_under_affine_rescaling(a in 0.1f64..10.0, b in -5.0f64..5.0, seed in 0u64..500) {
            let x = design(2, 20, seed);
            let t: Vec<f64> = x.rows().map(|g| (g[0] * g[1]).ln() + g[0]).collect();
            let y = Points::new(2, x.as_slice().iter().map(|v| a * v + b).collect()).unwrap();
            let s1 = fit_polynomial(&x, &t, 2).unwrap();
            let s2 = fit_polynomial(&y, &t, 2).unwrap();
            for p in x.rows() {
                let q: Vec<f64> = p.iter().map(|v| a * v + b).collect();
                prop_assert!((s1.eval(p).unwrap() - s2.eval(&q).unwrap()).abs() < 1e-10);
            }
        }
    }
}

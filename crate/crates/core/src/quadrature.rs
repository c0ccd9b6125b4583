//! Integration rules and designs over a box of strictly positive variables.
//!
//! All rule weights integrate against the uniform product density on the box,
//! so they sum to one.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::distr::{Distribution, Open01};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dimension::QuantitySystem;
use crate::error::{Error, Result};

/// Upper bound on the number of tensor-rule points.
pub const MAX_TENSOR_POINTS: u128 = 10_000_000;
const MAX_GL_POINTS: usize = 64;

/// Row-major `len x dim` set of points.
#[derive(Debug, Clone, PartialEq)]
pub struct Points {
    dim: usize,
    data: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::ShapeMismatch(format!(
                "{} values do not form rows of length {dim}",
                data.len()
            )));
        }
        Ok(Points { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::ShapeMismatch("ragged rows".into()));
        }
        Points::new(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Per-variable bounds `0 < lower < upper` defining the uniform density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BoxDoc {
    variables: Vec<BoundDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BoundDoc {
    symbol: String,
    lower: f64,
    upper: f64,
}

impl RegimeBox {
    pub fn new(bounds: &[(f64, f64)]) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidBox("no variables".into()));
        }
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                return Err(Error::InvalidBox(format!(
                    "variable {i}: bounds [{lo}, {hi}] must satisfy 0 < lower < upper"
                )));
            }
        }
        Ok(RegimeBox {
            lower: bounds.iter().map(|b| b.0).collect(),
            upper: bounds.iter().map(|b| b.1).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn bounds(&self, i: usize) -> (f64, f64) {
        (self.lower[i], self.upper[i])
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point.iter().zip(self.lower.iter().zip(&self.upper)).all(|(x, (lo, hi))| lo < x && x < hi)
    }

    /// Read `{"variables": [{"symbol": .., "lower": .., "upper": ..}, ..]}`,
    /// reordered to the system's independent-variable order.
    pub fn from_json(text: &str, system: &QuantitySystem) -> Result<Self> {
        let doc: BoxDoc = serde_json::from_str(text)?;
        let mut bounds = Vec::with_capacity(system.m());
        for q in system.independents() {
            let b = doc
                .variables
                .iter()
                .find(|v| v.symbol == q.symbol)
                .ok_or_else(|| Error::InvalidBox(format!("no bounds for `{}`", q.symbol)))?;
            bounds.push((b.lower, b.upper));
        }
        if doc.variables.len() != system.m() {
            return Err(Error::InvalidBox(format!(
                "{} bounds given for {} independent variables",
                doc.variables.len(),
                system.m()
            )));
        }
        RegimeBox::new(&bounds)
    }

    pub fn to_json_value(&self, symbols: &[String]) -> serde_json::Value {
        let doc = BoxDoc {
            variables: symbols
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .map(|(s, (&lower, &upper))| BoundDoc { symbol: s.clone(), lower, upper })
                .collect(),
        };
        serde_json::to_value(doc).expect("plain data serializes")
    }

    fn map_unit(&self, i: usize, u: f64) -> f64 {
        self.lower[i] + (self.upper[i] - self.lower[i]) * u
    }
}

/// Points and positive weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Points,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Weighted sum of `f` over the rule.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.points.rows().zip(&self.weights).map(|(p, w)| w * f(p)).sum()
    }

    /// One row per point, weight in the last column.
    pub fn write_csv<W: Write>(&self, writer: W, symbols: &[String]) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = symbols.iter().map(String::as_str).collect();
        header.push("weight");
        out.write_record(&header)?;
        for (p, w) in self.points.rows().zip(&self.weights) {
            let mut rec: Vec<String> = p.iter().map(|v| format!("{v:e}")).collect();
            rec.push(format!("{w:e}"));
            out.write_record(&rec)?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut input = csv::Reader::from_reader(reader);
        let cols = input.headers()?.len();
        if cols < 2 {
            return Err(Error::ShapeMismatch("rule CSV needs at least one coordinate and a weight".into()));
        }
        let mut data = Vec::new();
        let mut weights = Vec::new();
        for rec in input.records() {
            let rec = rec?;
            let values: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::ShapeMismatch(format!("bad number in rule CSV: {e}")))?;
            if values.len() != cols {
                return Err(Error::ShapeMismatch("ragged rule CSV".into()));
            }
            data.extend_from_slice(&values[..cols - 1]);
            weights.push(values[cols - 1]);
        }
        Ok(QuadratureRule { points: Points::new(cols - 1, data)?, weights })
    }
}

/// Gauss-Legendre nodes (ascending) and weights on `[-1, 1]`.
pub fn gauss_legendre_1d(p: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(1..=MAX_GL_POINTS).contains(&p) {
        return Err(Error::OutOfRange { what: "points per dimension", value: p, allowed: "1..=64" });
    }
    let mut nodes = vec![0.0; p];
    let mut weights = vec![0.0; p];
    for i in 0..p.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (p as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (value, deriv) = legendre(p, x);
            dp = deriv;
            let dx = value / deriv;
            x -= dx;
            if dx.abs() < 1e-15 {
                dp = legendre(p, x).1;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[p - 1 - i] = x;
        weights[i] = w;
        weights[p - 1 - i] = w;
    }
    if p % 2 == 1 {
        nodes[p / 2] = 0.0;
    }
    Ok((nodes, weights))
}

/// `P_p(x)` and `P_p'(x)` by the three-term recurrence.
fn legendre(p: usize, x: f64) -> (f64, f64) {
    let (mut prev, mut cur) = (1.0, x);
    if p == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=p {
        let k = k as f64;
        let next = ((2.0 * k - 1.0) * x * cur - (k - 1.0) * prev) / k;
        prev = cur;
        cur = next;
    }
    let deriv = p as f64 * (x * cur - prev) / (x * x - 1.0);
    (cur, deriv)
}

/// Tensor-product Gauss-Legendre rule with `p` points per dimension; the last
/// dimension varies fastest.
pub fn tensor_rule(region: &RegimeBox, p: usize) -> Result<QuadratureRule> {
    let m = region.dim();
    let total = (p as u128).checked_pow(m as u32).unwrap_or(u128::MAX);
    if total > MAX_TENSOR_POINTS {
        return Err(Error::TooManyPoints { points: total, limit: MAX_TENSOR_POINTS });
    }
    let (nodes, weights) = gauss_legendre_1d(p)?;
    let per_dim: Vec<Vec<f64>> = (0..m)
        .map(|i| nodes.iter().map(|&x| region.map_unit(i, 0.5 * (x + 1.0))).collect())
        .collect();
    let unit_weights: Vec<f64> = weights.iter().map(|w| 0.5 * w).collect();
    let n = total as usize;
    let mut data = Vec::with_capacity(n * m);
    let mut ws = Vec::with_capacity(n);
    let mut idx = vec![0usize; m];
    for _ in 0..n {
        let mut w = 1.0;
        for (i, &j) in idx.iter().enumerate() {
            data.push(per_dim[i][j]);
            w *= unit_weights[j];
        }
        ws.push(w);
        for i in (0..m).rev() {
            idx[i] += 1;
            if idx[i] < p {
                break;
            }
            idx[i] = 0;
        }
    }
    Ok(QuadratureRule { points: Points::new(m, data)?, weights: ws })
}

/// `n` i.i.d. uniform draws over the box, weights `1/n`.
pub fn monte_carlo_rule(region: &RegimeBox, n: usize, seed: u64) -> Result<QuadratureRule> {
    if n == 0 {
        return Err(Error::OutOfRange { what: "Monte Carlo sample count", value: 0, allowed: ">= 1" });
    }
    let m = region.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * m);
    for _ in 0..n {
        for i in 0..m {
            let u: f64 = Open01.sample(&mut rng);
            data.push(region.map_unit(i, u));
        }
    }
    Ok(QuadratureRule { points: Points::new(m, data)?, weights: vec![1.0 / n as f64; n] })
}

/// Latin hypercube design: each dimension gets an independent random
/// permutation of the `n` strata with uniform jitter inside each stratum.
pub fn latin_hypercube(region: &RegimeBox, n: usize, seed: u64) -> Result<Points> {
    if n == 0 {
        return Err(Error::OutOfRange { what: "design size", value: 0, allowed: ">= 1" });
    }
    let m = region.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![0.0; n * m];
    let mut strata: Vec<usize> = (0..n).collect();
    for i in 0..m {
        strata.shuffle(&mut rng);
        for (row, &s) in strata.iter().enumerate() {
            let jitter: f64 = Open01.sample(&mut rng);
            data[row * m + i] = region.map_unit(i, (s as f64 + jitter) / n as f64);
        }
    }
    Points::new(m, data)
}

/// How to integrate against the box density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuadratureSpec {
    /// Tensor Gauss-Legendre with this many points per dimension.
    Tensor { points: usize },
    /// Monte Carlo with this many samples.
    MonteCarlo { samples: usize },
}

impl QuadratureSpec {
    pub fn build(&self, region: &RegimeBox, seed: u64) -> Result<QuadratureRule> {
        match *self {
            QuadratureSpec::Tensor { points } => tensor_rule(region, points),
            QuadratureSpec::MonteCarlo { samples } => monte_carlo_rule(region, samples, seed),
        }
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec::Tensor { points: 11 }
    }
}

impl fmt::Display for QuadratureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuadratureSpec::Tensor { points } => write!(f, "tensor:{points}"),
            QuadratureSpec::MonteCarlo { samples } => write!(f, "mc:{samples}"),
        }
    }
}

impl FromStr for QuadratureSpec {
    type Err = String;

    /// `tensor:<p>` or `mc:<N>`.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (kind, count) = s.split_once(':').ok_or_else(|| format!("expected tensor:<p> or mc:<N>, got `{s}`"))?;
        let count: usize = count.trim().parse().map_err(|_| format!("bad count in `{s}`"))?;
        match kind.trim() {
            "tensor" => Ok(QuadratureSpec::Tensor { points: count }),
            "mc" | "montecarlo" => Ok(QuadratureSpec::MonteCarlo { samples: count }),
            other => Err(format!("unknown quadrature kind `{other}`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_box(m: usize) -> RegimeBox {
        // strictly positive lower bounds are required, so approximate [0, 1]
        RegimeBox::new(&vec![(1e-300, 1.0); m]).unwrap()
    }

    #[test]
    fn low_order_rules() {
        let (x, w) = gauss_legendre_1d(1).unwrap();
        assert_eq!((x, w), (vec![0.0], vec![2.0]));
        let (x, w) = gauss_legendre_1d(2).unwrap();
        let r = 1.0 / 3f64.sqrt();
        assert!((x[0] + r).abs() < 1e-15 && (x[1] - r).abs() < 1e-15);
        assert!((w[0] - 1.0).abs() < 1e-15 && (w[1] - 1.0).abs() < 1e-15);
        assert!(gauss_legendre_1d(0).is_err() && gauss_legendre_1d(65).is_err());
    }

    #[test]
    fn eleven_points_integrate_x20() {
        let (x, w) = gauss_legendre_1d(11).unwrap();
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(20)).sum();
        assert!((s - 2.0 / 21.0).abs() < 1e-14);
    }

    #[test]
    fn weights_sum_to_two_for_all_sizes() {
        for p in 1..=64 {
            let (x, w) = gauss_legendre_1d(p).unwrap();
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13, "p = {p}");
            assert!(x.windows(2).all(|s| s[0] < s[1]));
            // exact for degree 2p-2 (even) monomials: int x^{2p-2} = 2/(2p-1)
            let d = 2 * p - 2;
            let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(d as i32)).sum();
            assert!((s - 2.0 / (d as f64 + 1.0)).abs() < 1e-13, "p = {p}");
        }
    }

    #[test]
    fn tensor_rule_sizes_and_means() {
        let turbulent = RegimeBox::new(&[(0.1, 0.14), (1e-6, 1e-5), (0.5, 1.0), (5e-4, 2e-3), (2.0, 4.0)]).unwrap();
        let rule = tensor_rule(&turbulent, 11).unwrap();
        assert_eq!(rule.len(), 161_051);
        assert!(rule.points.rows().all(|p| turbulent.contains(p)));
        assert!((crate::linalg::accurate_sum(&rule.weights) - 1.0).abs() < 1e-12);

        let b = RegimeBox::new(&[(1e-300, 2.0)]).unwrap();
        let rule = tensor_rule(&b, 2).unwrap();
        assert!((rule.integrate(|q| q[0]) - 1.0).abs() < 1e-15);

        let laminar = RegimeBox::new(&[(0.1, 0.14), (1e-6, 1e-5), (0.5, 0.8), (3e-5, 8e-5), (2.5e-2, 3e-2)]).unwrap();
        assert!((tensor_rule(&laminar, 3).unwrap().integrate(|_| 1.0) - 1.0).abs() < 1e-15);

        assert!(matches!(tensor_rule(&unit_box(8), 11), Err(Error::TooManyPoints { .. })));
    }

    #[test]
    fn tensor_rule_exact_on_box_moments() {
        let b = RegimeBox::new(&[(0.5, 2.0), (1.0, 3.0), (0.1, 0.4)]).unwrap();
        let p = 4;
        let rule = tensor_rule(&b, p).unwrap();
        for a in 0..=(2 * p - 1) {
            for c in [0, 2 * p - 1] {
                let exact: f64 = [(0usize, a), (1, c), (2, 2 * p - 1 - a)]
                    .iter()
                    .map(|&(i, d)| {
                        let (lo, hi) = b.bounds(i);
                        (hi.powi(d as i32 + 1) - lo.powi(d as i32 + 1)) / ((d as f64 + 1.0) * (hi - lo))
                    })
                    .product();
                let got = rule.integrate(|q| q[0].powi(a as i32) * q[1].powi(c as i32) * q[2].powi((2 * p - 1 - a) as i32));
                assert!((got / exact - 1.0).abs() < 1e-12, "a={a} c={c}");
            }
        }
    }

    #[test]
    fn monte_carlo_rule_is_seeded() {
        let b = unit_box(2);
        let one = monte_carlo_rule(&b, 1, 3).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.weights, vec![1.0]);
        let a = monte_carlo_rule(&b, 1000, 17).unwrap();
        let c = monte_carlo_rule(&b, 1000, 17).unwrap();
        assert_eq!(a, c);
        assert_ne!(a, monte_carlo_rule(&b, 1000, 18).unwrap());
        assert!(a.points.rows().all(|p| b.contains(p)));
    }

    #[test]
    fn monte_carlo_mean_within_standard_error() {
        let n = 100_000;
        let rule = monte_carlo_rule(&unit_box(2), n, 5).unwrap();
        let mean = rule.integrate(|q| q[0]);
        let bound = 3.0 * (1.0 / 12f64.sqrt()) / (n as f64).sqrt();
        assert!((mean - 0.5).abs() < bound, "{mean}");
        assert!((crate::linalg::accurate_sum(&rule.weights) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn latin_hypercube_stratifies() {
        let b = unit_box(1);
        let mut xs: Vec<f64> = latin_hypercube(&b, 4, 1).unwrap().as_slice().to_vec();
        xs.sort_by(f64::total_cmp);
        for (i, x) in xs.iter().enumerate() {
            assert!(*x >= i as f64 * 0.25 && *x < (i + 1) as f64 * 0.25 + 1e-15);
        }
        let one = latin_hypercube(&unit_box(3), 1, 9).unwrap();
        assert_eq!(one.len(), 1);
        assert!(unit_box(3).contains(one.row(0)));
    }

    #[test]
    fn turbulent_design_of_1000() {
        let turbulent = RegimeBox::new(&[(0.1, 0.14), (1e-6, 1e-5), (0.5, 1.0), (5e-4, 2e-3), (2.0, 4.0)]).unwrap();
        let design = latin_hypercube(&turbulent, 1000, 7).unwrap();
        assert_eq!(design.len(), 1000);
        assert!(design.rows().all(|p| turbulent.contains(p)));
    }

    #[test]
    fn csv_round_trip() {
        let b = RegimeBox::new(&[(1.0, 2.0), (3.0, 5.0)]).unwrap();
        let rule = tensor_rule(&b, 3).unwrap();
        let mut buf = Vec::new();
        rule.write_csv(&mut buf, &["a".into(), "b".into()]).unwrap();
        let back = QuadratureRule::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, rule);
    }

    #[test]
    fn parses_quadrature_specs() {
        assert_eq!("tensor:11".parse::<QuadratureSpec>().unwrap(), QuadratureSpec::Tensor { points: 11 });
        assert_eq!("mc:500".parse::<QuadratureSpec>().unwrap(), QuadratureSpec::MonteCarlo { samples: 500 });
        assert!("grid:3".parse::<QuadratureSpec>().is_err());
        assert!(RegimeBox::new(&[(0.0, 1.0)]).is_err());
        assert!(RegimeBox::new(&[(2.0, 1.0)]).is_err());
    }

    proptest! {
        #[test]
        fn lhs_projections_are_permutations(n in 1usize..200, m in 1usize..5, seed in 0u64..1000) {
            let b = unit_box(m);
            let design = latin_hypercube(&b, n, seed).unwrap();
            for i in 0..m {
                let mut hit = vec![false; n];
                for row in design.rows() {
                    let s = ((row[i] * n as f64).floor() as usize).min(n - 1);
                    prop_assert!(!hit[s]);
                    hit[s] = true;
                }
            }
        }
    }
}

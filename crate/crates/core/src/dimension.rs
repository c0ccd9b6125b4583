//! Dimension vectors, quantity systems and Buckingham-Pi bases.
//!
//! A [`QuantitySystem`] declares `k` base units, `m` independent quantities and
//! one dependent quantity. Its dimension matrix `D` (`k x m`) has the
//! independents' dimension vectors as columns. From `D` we derive the output
//! exponents `w` (with `D w = v(q)`) and an orthonormal null-space basis `W`
//! (`D W = 0`), bundled as a [`PiBasis`].

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Singular values at or below `RANK_RTOL * sigma_max` are treated as zero.
pub const RANK_RTOL: f64 = 1e-10;
/// Tolerance on `D w = v`, `D W = 0` and `W^T W = I`.
pub const BASIS_TOL: f64 = 1e-12;
/// `check_dimensionless` residuals below this count as dimensionless.
pub const DIMENSIONLESS_TOL: f64 = 1e-10;
const MAX_EXPONENT: i64 = 64;

pub type Rational = Ratio<i64>;

/// Exponents of a quantity's units over the declared base units.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DimensionVector(Vec<Rational>);

impl DimensionVector {
    pub fn zeros(k: usize) -> Self {
        DimensionVector(vec![Rational::from_integer(0); k])
    }

    pub fn from_integers(exponents: &[i64]) -> Self {
        DimensionVector(exponents.iter().map(|&e| Rational::from_integer(e)).collect())
    }

    pub fn from_rationals(exponents: Vec<Rational>) -> Self {
        DimensionVector(exponents)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn exponents(&self) -> &[Rational] {
        &self.0
    }

    pub fn is_dimensionless(&self) -> bool {
        self.0.iter().all(|e| *e.numer() == 0)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|e| *e.numer() as f64 / *e.denom() as f64).collect()
    }

    /// Canonical unit expression, e.g. `kg*m^-3`; `1` for dimensionless.
    ///
    /// Integer vectors re-parse to themselves with [`parse_unit_expr`].
    /// Fractional exponents are written as `^(p/q)`, which the parser rejects.
    pub fn to_unit_expr(&self, base_units: &[String]) -> String {
        let terms: Vec<String> = self
            .0
            .iter()
            .zip(base_units)
            .filter(|(e, _)| *e.numer() != 0)
            .map(|(e, name)| {
                if e.is_integer() {
                    match e.to_integer() {
                        1 => name.clone(),
                        p => format!("{name}^{p}"),
                    }
                } else {
                    format!("{name}^({}/{})", e.numer(), e.denom())
                }
            })
            .collect();
        if terms.is_empty() {
            "1".to_string()
        } else {
            terms.join("*")
        }
    }

    fn add_scaled(&mut self, other_index: usize, exponent: i64) {
        self.0[other_index] += Rational::from_integer(exponent);
    }
}

impl fmt::Display for DimensionVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|e| e.to_string()).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

/// Parse `expr := term (('*'|'/') term)*`, `term := base ('^' int)?`,
/// `base := unit-name | "1"`.
pub fn parse_unit_expr(text: &str, base_units: &[String]) -> Result<DimensionVector> {
    Parser { text, bytes: text.as_bytes(), pos: 0, base_units }.parse()
}

struct Parser<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
    base_units: &'a [String],
}

impl Parser<'_> {
    fn parse(mut self) -> Result<DimensionVector> {
        let mut dims = DimensionVector::zeros(self.base_units.len());
        let mut sign = 1;
        loop {
            self.skip_ws();
            let (unit, exponent) = self.term()?;
            if let Some(i) = unit {
                let e = sign * exponent;
                dims.add_scaled(i, e);
                let total = dims.0[i];
                let limit = Rational::from_integer(MAX_EXPONENT);
                if total > limit || total < -limit {
                    return Err(Error::ExponentOverflow {
                        expr: self.text.to_string(),
                        exponent: total.to_integer(),
                    });
                }
            }
            self.skip_ws();
            match self.peek() {
                None => return Ok(dims),
                Some(b'*') => sign = 1,
                Some(b'/') => sign = -1,
                Some(_) => return Err(self.syntax("expected `*`, `/` or end of expression")),
            }
            self.pos += 1;
        }
    }

    fn term(&mut self) -> Result<(Option<usize>, i64)> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.syntax("expected a base unit or `1`"));
        }
        let name = &self.text[start..self.pos];
        let unit = if name == "1" {
            None
        } else {
            let i = self.base_units.iter().position(|u| u == name).ok_or_else(|| {
                Error::UnknownBaseUnit {
                    name: name.to_string(),
                    declared: self.base_units.join(", "),
                }
            })?;
            Some(i)
        };
        self.skip_ws();
        if self.peek() != Some(b'^') {
            return Ok((unit, 1));
        }
        self.pos += 1;
        self.skip_ws();
        Ok((unit, self.integer()?))
    }

    fn integer(&mut self) -> Result<i64> {
        let start = self.pos;
        if matches!(self.peek(), Some(b'+' | b'-')) {
            self.pos += 1;
        }
        let digits = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if digits == self.pos {
            return Err(self.syntax("expected an integer exponent"));
        }
        let literal = &self.text[start..self.pos];
        let value: i64 = literal.parse().map_err(|_| Error::ExponentOverflow {
            expr: self.text.to_string(),
            exponent: i64::MAX,
        })?;
        if value.abs() > MAX_EXPONENT {
            return Err(Error::ExponentOverflow { expr: self.text.to_string(), exponent: value });
        }
        Ok(value)
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn syntax(&self, msg: &str) -> Error {
        Error::Syntax { expr: self.text.to_string(), pos: self.pos, msg: msg.to_string() }
    }
}

/// A named physical quantity with its dimension vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantity {
    pub name: String,
    pub symbol: String,
    pub dims: DimensionVector,
}

/// Base units, `m` independent quantities and one dependent quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantitySystem {
    base_units: Vec<String>,
    independents: Vec<Quantity>,
    dependent: Quantity,
    pinned_w: Option<Vec<f64>>,
}

impl QuantitySystem {
    /// Validate and build a system.
    ///
    /// Fails with [`Error::NoNullSpace`] when `m = k` and with
    /// [`Error::RankDeficient`] when `D` has rank below `k`.
    pub fn new(
        base_units: Vec<String>,
        independents: Vec<Quantity>,
        dependent: Quantity,
    ) -> Result<Self> {
        let k = base_units.len();
        if k == 0 {
            return Err(Error::InvalidSystem("no base units declared".into()));
        }
        for (i, u) in base_units.iter().enumerate() {
            if base_units[..i].contains(u) {
                return Err(Error::InvalidSystem(format!("duplicate base unit `{u}`")));
            }
        }
        for q in independents.iter().chain(std::iter::once(&dependent)) {
            if q.dims.len() != k {
                return Err(Error::InvalidSystem(format!(
                    "quantity `{}` has {} exponents, expected {k}",
                    q.symbol,
                    q.dims.len()
                )));
            }
        }
        let all: Vec<&Quantity> = independents.iter().chain(std::iter::once(&dependent)).collect();
        for (i, q) in all.iter().enumerate() {
            if all[..i].iter().any(|p| p.name == q.name || p.symbol == q.symbol) {
                return Err(Error::InvalidSystem(format!("duplicate quantity `{}`", q.symbol)));
            }
        }
        if dependent.dims.is_dimensionless() {
            return Err(Error::InvalidSystem(format!(
                "dependent quantity `{}` must not be dimensionless",
                dependent.symbol
            )));
        }
        let m = independents.len();
        if m < k {
            return Err(Error::InvalidSystem(format!(
                "{m} independent quantities cannot span {k} base units"
            )));
        }
        if m == k {
            return Err(Error::NoNullSpace(m));
        }
        let system = QuantitySystem { base_units, independents, dependent, pinned_w: None };
        build_dimension_matrix(&system)?;
        Ok(system)
    }

    /// Pin the output exponents `w`; validated against `D w = v(q)`.
    pub fn with_output_exponents(mut self, w: Vec<f64>) -> Result<Self> {
        let d = self.dimension_matrix();
        let residual = output_residual(&d, &self.dependent_dims_f64(), &DVector::from_vec(w.clone()))?;
        if residual >= BASIS_TOL {
            return Err(Error::Inconsistent(residual));
        }
        self.pinned_w = Some(w);
        Ok(self)
    }

    pub fn base_units(&self) -> &[String] {
        &self.base_units
    }

    pub fn independents(&self) -> &[Quantity] {
        &self.independents
    }

    pub fn dependent(&self) -> &Quantity {
        &self.dependent
    }

    pub fn pinned_output_exponents(&self) -> Option<&[f64]> {
        self.pinned_w.as_deref()
    }

    pub fn symbols(&self) -> Vec<String> {
        self.independents.iter().map(|q| q.symbol.clone()).collect()
    }

    pub fn k(&self) -> usize {
        self.base_units.len()
    }

    pub fn m(&self) -> usize {
        self.independents.len()
    }

    /// Number of dimensionless groups, `m - k`.
    pub fn n(&self) -> usize {
        self.m() - self.k()
    }

    pub fn dependent_dims_f64(&self) -> DVector<f64> {
        DVector::from_vec(self.dependent.dims.to_f64())
    }

    fn dimension_matrix(&self) -> DMatrix<f64> {
        let k = self.k();
        let mut d = DMatrix::zeros(k, self.m());
        for (j, q) in self.independents.iter().enumerate() {
            for (i, v) in q.dims.to_f64().into_iter().enumerate() {
                d[(i, j)] = v;
            }
        }
        d
    }

    /// Read the JSON document format.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SystemDoc = serde_json::from_str(text)?;
        doc.into_system()
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let quantity = |q: &Quantity| QuantityDoc {
            name: q.name.clone(),
            symbol: q.symbol.clone(),
            unit: Some(q.dims.to_unit_expr(&self.base_units)),
            dims: None,
        };
        let doc = SystemDoc {
            base_units: self.base_units.clone(),
            independents: self.independents.iter().map(quantity).collect(),
            dependent: quantity(&self.dependent),
            output_exponents: self.pinned_w.clone(),
        };
        serde_json::to_value(doc).expect("plain data serializes")
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SystemDoc {
    base_units: Vec<String>,
    independents: Vec<QuantityDoc>,
    dependent: QuantityDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output_exponents: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct QuantityDoc {
    name: String,
    symbol: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    unit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dims: Option<Vec<ExponentDoc>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum ExponentDoc {
    Integer(i64),
    Fraction(String),
}

impl ExponentDoc {
    fn to_rational(&self) -> Result<Rational> {
        match self {
            ExponentDoc::Integer(i) => Ok(Rational::from_integer(*i)),
            ExponentDoc::Fraction(s) => s
                .trim()
                .parse::<Rational>()
                .map_err(|_| Error::InvalidSystem(format!("bad exponent `{s}`"))),
        }
    }
}

impl QuantityDoc {
    fn into_quantity(self, base_units: &[String]) -> Result<Quantity> {
        let dims = match (&self.unit, &self.dims) {
            (Some(u), None) => parse_unit_expr(u, base_units)?,
            (None, Some(d)) => DimensionVector::from_rationals(
                d.iter().map(ExponentDoc::to_rational).collect::<Result<_>>()?,
            ),
            _ => {
                return Err(Error::InvalidSystem(format!(
                    "quantity `{}` needs exactly one of `unit` or `dims`",
                    self.symbol
                )))
            }
        };
        Ok(Quantity { name: self.name, symbol: self.symbol, dims })
    }
}

impl SystemDoc {
    fn into_system(self) -> Result<QuantitySystem> {
        let base = self.base_units;
        let independents = self
            .independents
            .into_iter()
            .map(|q| q.into_quantity(&base))
            .collect::<Result<Vec<_>>>()?;
        let dependent = self.dependent.into_quantity(&base)?;
        let system = QuantitySystem::new(base, independents, dependent)?;
        match self.output_exponents {
            Some(w) => system.with_output_exponents(w),
            None => Ok(system),
        }
    }
}

/// The `k x m` dimension matrix, columns in declared independent order.
///
/// Fails with [`Error::RankDeficient`] naming a base-unit row that depends on
/// the other rows.
pub fn build_dimension_matrix(system: &QuantitySystem) -> Result<DMatrix<f64>> {
    let d = system.dimension_matrix();
    let k = system.k();
    let rank = linalg::numerical_rank(&d, RANK_RTOL);
    if rank < k {
        let dependent_row = (0..k)
            .find(|&i| {
                let rows: Vec<usize> = (0..k).filter(|&r| r != i).collect();
                linalg::numerical_rank(&d.select_rows(rows.iter()), RANK_RTOL) == rank
            })
            .unwrap_or(k - 1);
        return Err(Error::RankDeficient {
            rank,
            k,
            hint: format!(
                "row `{}` is a linear combination of the other base-unit rows",
                system.base_units[dependent_row]
            ),
        });
    }
    Ok(d)
}

fn output_residual(d: &DMatrix<f64>, v_q: &DVector<f64>, w: &DVector<f64>) -> Result<f64> {
    if d.ncols() != w.len() || d.nrows() != v_q.len() {
        return Err(Error::ShapeMismatch(format!(
            "D is {}x{}, w has {} entries, v(q) has {}",
            d.nrows(),
            d.ncols(),
            w.len(),
            v_q.len()
        )));
    }
    Ok((d * w - v_q).amax())
}

/// Minimum-norm solution of `D w = v(q)` through the pseudoinverse.
pub fn solve_output_exponents(d: &DMatrix<f64>, v_q: &DVector<f64>) -> Result<DVector<f64>> {
    if d.nrows() != v_q.len() {
        return Err(Error::ShapeMismatch(format!(
            "D has {} rows but v(q) has {} entries",
            d.nrows(),
            v_q.len()
        )));
    }
    let w = linalg::min_norm_solve(d, v_q, RANK_RTOL);
    let residual = output_residual(d, v_q, &w)?;
    if residual >= BASIS_TOL {
        return Err(Error::Inconsistent(residual));
    }
    Ok(w)
}

/// Orthonormal basis of the null space of `D`: the last `n = m - k` right
/// singular vectors, each column sign-normalized so its largest-magnitude
/// entry is positive.
pub fn nullspace_basis(d: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (_, m) = d.shape();
    let rank = linalg::numerical_rank(d, RANK_RTOL);
    if rank >= m {
        return Err(Error::NoNullSpace(m));
    }
    let q = linalg::householder_q(&d.transpose());
    let mut w = q.columns(rank, m - rank).into_owned();
    // Householder QR without pivoting leaves the tail orthogonal to range(D^T)
    // only when the leading columns of D^T are independent; fall back to an
    // SVD-based completion otherwise.
    if linalg::max_abs(&(d * &w)) >= BASIS_TOL {
        w = svd_nullspace(d, rank);
    }
    linalg::normalize_column_signs(&mut w);
    Ok(w)
}

fn svd_nullspace(d: &DMatrix<f64>, rank: usize) -> DMatrix<f64> {
    let m = d.ncols();
    // pad to m x m so the SVD returns a full set of right singular vectors
    let mut padded = DMatrix::zeros(m, m);
    padded.rows_mut(0, d.nrows()).copy_from(d);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[a].total_cmp(&svd.singular_values[b]).then(a.cmp(&b))
    });
    let null: Vec<usize> = order.into_iter().take(m - rank).collect();
    let mut w = DMatrix::zeros(m, m - rank);
    for (j, &i) in null.iter().enumerate() {
        w.set_column(j, &v_t.row(i).transpose());
    }
    w
}

/// Output exponents `w` together with an orthonormal null-space basis `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiBasis {
    w: DVector<f64>,
    basis: DMatrix<f64>,
}

impl PiBasis {
    /// Basis for a system: pinned `w` when present, otherwise the
    /// minimum-norm solution; `W` from [`nullspace_basis`].
    pub fn for_system(system: &QuantitySystem) -> Result<Self> {
        let d = build_dimension_matrix(system)?;
        let v_q = system.dependent_dims_f64();
        let w = match system.pinned_output_exponents() {
            Some(w) => DVector::from_column_slice(w),
            None => solve_output_exponents(&d, &v_q)?,
        };
        let basis = nullspace_basis(&d)?;
        Self::from_parts(&d, &v_q, w, basis)
    }

    /// Validate a caller-supplied `w` and `W`.
    pub fn from_parts(
        d: &DMatrix<f64>,
        v_q: &DVector<f64>,
        w: DVector<f64>,
        basis: DMatrix<f64>,
    ) -> Result<Self> {
        let residual = output_residual(d, v_q, &w)?;
        if residual >= BASIS_TOL {
            return Err(Error::Inconsistent(residual));
        }
        if basis.nrows() != d.ncols() || basis.ncols() + d.nrows() != d.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "W is {}x{}, expected {}x{}",
                basis.nrows(),
                basis.ncols(),
                d.ncols(),
                d.ncols() - d.nrows()
            )));
        }
        let null_residual = linalg::max_abs(&(d * &basis));
        let n = basis.ncols();
        let ortho = linalg::max_abs(&(basis.transpose() * &basis - DMatrix::identity(n, n)));
        if null_residual >= BASIS_TOL || ortho >= BASIS_TOL {
            return Err(Error::InvalidSystem(format!(
                "W is not an orthonormal null-space basis (|DW| = {null_residual:e}, |W^T W - I| = {ortho:e})"
            )));
        }
        Ok(PiBasis { w, basis })
    }

    /// Same `w`, basis replaced by `W Q` for an orthogonal `Q`.
    pub fn rotated(&self, q: &DMatrix<f64>) -> Result<Self> {
        let n = self.basis.ncols();
        if q.shape() != (n, n) {
            return Err(Error::ShapeMismatch(format!("Q must be {n}x{n}")));
        }
        Ok(PiBasis { w: self.w.clone(), basis: &self.basis * q })
    }

    pub fn w(&self) -> &DVector<f64> {
        &self.w
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn n(&self) -> usize {
        self.basis.ncols()
    }

    pub fn m(&self) -> usize {
        self.basis.nrows()
    }
}

fn log_checked(q_vec: &[f64]) -> Result<DVector<f64>> {
    for (index, &value) in q_vec.iter().enumerate() {
        if !(value > 0.0) {
            return Err(Error::NonPositiveInput { index, value });
        }
    }
    Ok(DVector::from_iterator(q_vec.len(), q_vec.iter().map(|v| v.ln())))
}

/// Dimensionless dependent variable `pi = q exp(-w^T log q_vec)`.
pub fn nondim_output(q: f64, q_vec: &[f64], w: &DVector<f64>) -> Result<f64> {
    if w.len() != q_vec.len() {
        return Err(Error::ShapeMismatch(format!(
            "w has {} entries but the point has {}",
            w.len(),
            q_vec.len()
        )));
    }
    let x = log_checked(q_vec)?;
    Ok(q * (-w.dot(&x)).exp())
}

/// Log dimensionless groups `gamma = W^T log q_vec`.
pub fn log_groups(q_vec: &[f64], basis: &DMatrix<f64>) -> Result<DVector<f64>> {
    if basis.nrows() != q_vec.len() {
        return Err(Error::ShapeMismatch(format!(
            "W has {} rows but the point has {}",
            basis.nrows(),
            q_vec.len()
        )));
    }
    let x = log_checked(q_vec)?;
    Ok(basis.tr_mul(&x))
}

/// `|D z|_inf`; below [`DIMENSIONLESS_TOL`] the exponents describe a
/// dimensionless group.
pub fn check_dimensionless(d: &DMatrix<f64>, z: &DVector<f64>) -> Result<f64> {
    if d.ncols() != z.len() {
        return Err(Error::ShapeMismatch(format!(
            "D has {} columns but z has {} entries",
            d.ncols(),
            z.len()
        )));
    }
    Ok((d * z).amax())
}

/// Render exponents as a product of powers, e.g. `rho^0.309*mu^-0.309`.
pub fn describe_group(symbols: &[String], exponents: &[f64]) -> String {
    let parts: Vec<String> = symbols
        .iter()
        .zip(exponents)
        .filter(|(_, e)| e.abs() >= 5e-4)
        .map(|(s, e)| format!("{s}^{e:.3}"))
        .collect();
    if parts.is_empty() {
        "1".into()
    } else {
        parts.join("*")
    }
}

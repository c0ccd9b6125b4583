//! Viscous pipe flow: friction factor, pressure loss and regime boxes.
//!
//! Inputs are ordered `(rho, mu, D, eps, V)` throughout.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dimension::{DimensionVector, Quantity, QuantitySystem};
use crate::error::{Error, ExperimentError, Result};
use crate::experiment::Experiment;
use crate::quadrature::RegimeBox;

pub const DEFAULT_RE_CRITICAL: f64 = 3000.0;
pub const COLEBROOK_TOL: f64 = 1e-12;
const MAX_NEWTON: usize = 100;

/// Physical state of the flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipeState {
    pub rho: f64,
    pub mu: f64,
    pub d: f64,
    pub eps: f64,
    pub v: f64,
}

impl PipeState {
    pub fn new(rho: f64, mu: f64, d: f64, eps: f64, v: f64) -> Result<Self> {
        for (name, value) in [("rho", rho), ("mu", mu), ("D", d), ("eps", eps), ("V", v)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} = {value} must be positive")));
            }
        }
        if eps >= d {
            return Err(Error::InvalidArgument(format!("roughness {eps} must be below the diameter {d}")));
        }
        Ok(PipeState { rho, mu, d, eps, v })
    }

    /// From a point in `(rho, mu, D, eps, V)` order.
    pub fn from_point(q: &[f64]) -> Result<Self> {
        match *q {
            [rho, mu, d, eps, v] => PipeState::new(rho, mu, d, eps, v),
            _ => Err(Error::ShapeMismatch(format!("pipe state takes 5 values, got {}", q.len()))),
        }
    }

    pub fn reynolds(&self) -> f64 {
        reynolds(self)
    }

    pub fn relative_roughness(&self) -> f64 {
        self.eps / self.d
    }
}

pub fn reynolds(state: &PipeState) -> f64 {
    state.rho * state.v * state.d / state.mu
}

pub fn poiseuille(re: f64) -> f64 {
    64.0 / re
}

/// Colebrook residual in `t = 1/sqrt(lambda)` form.
pub fn colebrook_residual(re: f64, rel_rough: f64, t: f64) -> f64 {
    t + 2.0 * (rel_rough / 3.7 + 2.51 * t / re).log10()
}

/// Friction factor from the Colebrook equation by Newton iteration on `t`.
pub fn colebrook(re: f64, rel_rough: f64) -> Result<f64> {
    if !(re > 0.0) || !(0.0..1.0).contains(&rel_rough) {
        return Err(Error::InvalidArgument(format!("Re = {re}, eps/D = {rel_rough}")));
    }
    let seed_arg = (rel_rough / 3.7).powf(1.11) + 6.9 / re;
    let mut t = -1.8 * seed_arg.log10();
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_NEWTON {
        let arg = rel_rough / 3.7 + 2.51 * t / re;
        if !(arg > 0.0) {
            return Err(Error::InvalidArgument(format!("log argument {arg} at Re = {re}, eps/D = {rel_rough}")));
        }
        residual = t + 2.0 * arg.log10();
        if residual.abs() < COLEBROOK_TOL {
            return Ok(1.0 / (t * t));
        }
        let slope = 1.0 + 2.0 / std::f64::consts::LN_10 * (2.51 / re) / arg;
        t -= residual / slope;
    }
    Err(Error::NoConvergence(residual))
}

/// Poiseuille below `re_critical`, Colebrook at and above it.
pub fn friction_factor(re: f64, rel_rough: f64, re_critical: f64) -> Result<f64> {
    if re < re_critical {
        if !(re > 0.0) {
            return Err(Error::InvalidArgument(format!("Re = {re}")));
        }
        Ok(poiseuille(re))
    } else {
        colebrook(re, rel_rough)
    }
}

/// Which friction law the experiment uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FrictionModel {
    /// Colebrook at every Reynolds number.
    #[default]
    Colebrook,
    /// Poiseuille below the critical Reynolds number, Colebrook above.
    Piecewise { re_critical: f64 },
}

impl FrictionModel {
    pub fn friction(&self, re: f64, rel_rough: f64) -> Result<f64> {
        match *self {
            FrictionModel::Colebrook => colebrook(re, rel_rough),
            FrictionModel::Piecewise { re_critical } => friction_factor(re, rel_rough, re_critical),
        }
    }
}

impl fmt::Display for FrictionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrictionModel::Colebrook => write!(f, "colebrook"),
            FrictionModel::Piecewise { re_critical } => write!(f, "piecewise:{re_critical}"),
        }
    }
}

impl FromStr for FrictionModel {
    type Err = String;

    /// `colebrook`, `piecewise` or `piecewise:<Re_c>`.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.split_once(':') {
            None if s == "colebrook" => Ok(FrictionModel::Colebrook),
            None if s == "piecewise" => Ok(FrictionModel::Piecewise { re_critical: DEFAULT_RE_CRITICAL }),
            Some(("piecewise", re)) => re
                .parse::<f64>()
                .ok()
                .filter(|v| *v > 0.0)
                .map(|re_critical| FrictionModel::Piecewise { re_critical })
                .ok_or_else(|| format!("bad critical Reynolds number `{re}`")),
            _ => Err(format!("unknown friction model `{s}` (colebrook, piecewise[:Re_c])")),
        }
    }
}

/// Pressure drop per unit length, `lambda rho V^2 / (2 D)`.
pub fn pressure_loss(state: &PipeState, model: FrictionModel) -> Result<f64> {
    let lambda = model.friction(state.reynolds(), state.relative_roughness())?;
    Ok(lambda * state.rho * state.v * state.v / (2.0 * state.d))
}

/// Friction factor implied by a pressure drop, `dp/dx D / (rho V^2 / 2)`.
pub fn friction_from_pressure_loss(dpdx: f64, state: &PipeState) -> f64 {
    dpdx * state.d / (0.5 * state.rho * state.v * state.v)
}

/// The pipe model as an experiment over `(rho, mu, D, eps, V)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PipeFlow {
    pub model: FrictionModel,
}

impl PipeFlow {
    pub fn new(model: FrictionModel) -> Self {
        PipeFlow { model }
    }
}

impl Experiment for PipeFlow {
    fn evaluate(&self, q: &[f64]) -> std::result::Result<f64, ExperimentError> {
        PipeState::from_point(q)
            .and_then(|s| pressure_loss(&s, self.model))
            .map_err(|e| ExperimentError::Evaluation { point: q.to_vec(), reason: e.to_string() })
    }
}

/// One of the three reference flow regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeName {
    Laminar,
    Turbulent,
    HighRe,
}

impl RegimeName {
    pub const ALL: [RegimeName; 3] = [RegimeName::Laminar, RegimeName::Turbulent, RegimeName::HighRe];
}

impl fmt::Display for RegimeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegimeName::Laminar => "laminar",
            RegimeName::Turbulent => "turbulent",
            RegimeName::HighRe => "high_re",
        })
    }
}

impl FromStr for RegimeName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "laminar" => Ok(RegimeName::Laminar),
            "turbulent" => Ok(RegimeName::Turbulent),
            "high_re" | "high-re" | "highre" => Ok(RegimeName::HighRe),
            other => Err(Error::UnknownRegime(other.to_string())),
        }
    }
}

/// Bounds of a regime in `(rho, mu, D, eps, V)` order.
pub fn regime_box(name: RegimeName) -> RegimeBox {
    let bounds: [(f64, f64); 5] = match name {
        RegimeName::Laminar => [(0.1, 0.14), (1e-6, 1e-5), (0.5, 0.8), (3e-5, 8e-5), (2.5e-2, 3e-2)],
        RegimeName::Turbulent => [(0.1, 0.14), (1e-6, 1e-5), (0.5, 1.0), (5e-4, 2e-3), (2.0, 4.0)],
        RegimeName::HighRe => [(0.1, 0.14), (1e-6, 1e-5), (0.5, 1.0), (1e-2, 4e-2), (5e2, 7e2)],
    };
    RegimeBox::new(&bounds).expect("static bounds are valid")
}

/// Smallest and largest Reynolds number over the corners of a box.
pub fn reynolds_range(region: &RegimeBox) -> (f64, f64) {
    let (rho, mu, d, v) = (region.bounds(0), region.bounds(1), region.bounds(2), region.bounds(4));
    (rho.0 * v.0 * d.0 / mu.1, rho.1 * v.1 * d.1 / mu.0)
}

/// The five-variable pipe system with `w = [1, 0, -1, 0, 2]` pinned.
pub fn pipe_quantity_system() -> QuantitySystem {
    let q = |name: &str, symbol: &str, dims: [i64; 3]| Quantity {
        name: name.into(),
        symbol: symbol.into(),
        dims: DimensionVector::from_integers(&dims),
    };
    QuantitySystem::new(
        vec!["kg".into(), "m".into(), "s".into()],
        vec![
            q("fluid density", "rho", [1, -3, 0]),
            q("fluid viscosity", "mu", [1, -1, -1]),
            q("pipe diameter", "D", [0, 1, 0]),
            q("pipe roughness", "eps", [0, 1, 0]),
            q("bulk velocity", "V", [0, 1, -1]),
        ],
        q("pressure loss per length", "dpdx", [1, -2, -2]),
    )
    .and_then(|s| s.with_output_exponents(vec![1.0, 0.0, -1.0, 0.0, 2.0]))
    .expect("the pipe system is well posed")
}

/// Exponent columns of the Reynolds number and the relative roughness.
pub fn classical_groups() -> DMatrix<f64> {
    DMatrix::from_column_slice(5, 2, &[1.0, -1.0, 1.0, 0.0, 1.0, 0.0, 0.0, -1.0, 1.0, 0.0])
}

/// One row of Moody-chart data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MoodyPoint {
    pub log10_re: f64,
    pub log10_rel_rough: f64,
    pub lambda: f64,
}

/// Friction factors on a log-spaced `(Re, eps/D)` grid.
pub fn moody_grid(
    log10_re: (f64, f64),
    log10_rel_rough: (f64, f64),
    points: (usize, usize),
    model: FrictionModel,
) -> Result<Vec<MoodyPoint>> {
    let axis = |(lo, hi): (f64, f64), n: usize| -> Vec<f64> {
        if n <= 1 {
            vec![lo]
        } else {
            (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
        }
    };
    let mut out = Vec::with_capacity(points.0 * points.1);
    for &lr in &axis(log10_rel_rough, points.1) {
        for &le in &axis(log10_re, points.0) {
            let lambda = model.friction(10f64.powf(le), 10f64.powf(lr))?;
            out.push(MoodyPoint { log10_re: le, log10_rel_rough: lr, lambda });
        }
    }
    Ok(out)
}

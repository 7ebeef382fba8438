//! The copula mapping `Φ(H) = H(H_1^{-1}, ..., H_d^{-1})`, its derivative
//! `Φ'_C(h)(u) = h(u) - Σ_j C^{(j)}(u) h(u^{(j)})`, perturbation classes, and
//! difference-quotient verifiers.

use crate::copulas::CopulaModel;
use crate::empirical::{Sample, SmoothedMarginal, StepCdf};
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction, Region};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

/// Slack for boundary conditions and rectangle increments of perturbed cdfs.
pub const CDF_TOL: f64 = 1e-12;
/// Required shrink factor of the error per halving of `t`.
pub const HALVING_RATIO: f64 = 0.75;
/// Values at or below this are treated as numerically zero in quantile checks.
pub const QUANTILE_FLOOR: f64 = 1e-9;
/// Lattice size of the quantile-lemma scan.
pub const QUANTILE_LATTICE: usize = 10_000;

/// A cdf on `[0,1]^d` (or on `R^d` for step cdfs) with its marginals.
pub trait JointCdf {
    fn dim(&self) -> usize;
    fn cdf(&self, v: &[f64]) -> f64;
    fn marginal_cdf(&self, j: usize, x: f64) -> f64;
    /// `H_j^{-1}(u) = inf{x : H_j(x) >= u}`.
    fn marginal_inverse(&self, j: usize, u: f64) -> f64;
}

impl JointCdf for GridFunction {
    fn dim(&self) -> usize {
        self.grid().dim()
    }

    fn cdf(&self, v: &[f64]) -> f64 {
        let w: Vec<f64> = v.iter().map(|x| x.clamp(0.0, 1.0)).collect();
        self.interpolate(&w)
    }

    fn marginal_cdf(&self, j: usize, x: f64) -> f64 {
        let mut v = vec![1.0; self.dim()];
        v[j] = x.clamp(0.0, 1.0);
        self.interpolate(&v)
    }

    /// Inverse of the piecewise-linear marginal slice; exact at node values.
    fn marginal_inverse(&self, j: usize, u: f64) -> f64 {
        let grid = *self.grid();
        let m = grid.points_per_axis();
        let mut multi = vec![m - 1; grid.dim()];
        let slice = |k: usize, multi: &mut Vec<usize>| {
            multi[j] = k;
            self.values()[grid.slice_index(multi, j)]
        };
        for k in 0..m {
            let s = slice(k, &mut multi);
            if s >= u {
                if k == 0 || s == u {
                    return grid.coord(k);
                }
                let prev = slice(k - 1, &mut multi);
                let (a, b) = (grid.coord(k - 1), grid.coord(k));
                return (a + (u - prev) / (s - prev) * (b - a)).clamp(a, b);
            }
        }
        1.0
    }
}

/// Joint step cdf of a sample, `H(v) = n^{-1} #{i : x_i <= v}`.
#[derive(Debug, Clone)]
pub struct StepJointCdf {
    sample: Sample,
    marginals: Vec<StepCdf>,
}

impl StepJointCdf {
    pub fn from_sample(sample: Sample) -> Result<Self> {
        let marginals = (0..sample.dim())
            .map(|j| StepCdf::empirical(&sample.column(j)))
            .collect::<Result<_>>()?;
        Ok(StepJointCdf { sample, marginals })
    }

    /// `Ĝ` as a cdf on `[0,1]^d`: the step cdf of `F̃_j(x_{ji})`.
    pub fn g_process(sample: &Sample, marginals: &[SmoothedMarginal]) -> Result<Self> {
        if marginals.len() != sample.dim() {
            return Err(Error::Usage(format!(
                "{} marginals for d = {}",
                marginals.len(),
                sample.dim()
            )));
        }
        StepJointCdf::from_sample(sample.map(|j, x| marginals[j].cdf(x)))
    }
}

impl JointCdf for StepJointCdf {
    fn dim(&self) -> usize {
        self.sample.dim()
    }

    fn cdf(&self, v: &[f64]) -> f64 {
        let n = self.sample.n();
        let count = (0..n)
            .filter(|&i| self.sample.row(i).iter().zip(v).all(|(x, y)| x <= y))
            .count();
        count as f64 / n as f64
    }

    fn marginal_cdf(&self, j: usize, x: f64) -> f64 {
        self.marginals[j].cdf(x)
    }

    fn marginal_inverse(&self, j: usize, u: f64) -> f64 {
        self.marginals[j].inverse(u)
    }
}

/// `Φ(H)` at every node of `grid`; the marginals must satisfy
/// `H_j(0) = 0` and `H_j(1) = 1`.
pub fn copula_map_of<H: JointCdf + ?Sized>(h: &H, grid: &Grid) -> Result<GridFunction> {
    let d = h.dim();
    if d != grid.dim() {
        return Err(Error::Usage(format!("cdf has d = {d}, grid has d = {}", grid.dim())));
    }
    for j in 0..d {
        let (lo, hi) = (h.marginal_cdf(j, 0.0), h.marginal_cdf(j, 1.0));
        if lo.abs() > CDF_TOL || (hi - 1.0).abs() > CDF_TOL {
            return Err(Error::Domain(format!(
                "marginal {j} has H(0) = {lo}, H(1) = {hi}; need 0 and 1"
            )));
        }
    }
    let axis = grid.axis();
    let inverses: Vec<Vec<f64>> = (0..d)
        .map(|j| axis.iter().map(|&u| h.marginal_inverse(j, u)).collect())
        .collect();
    let m = grid.points_per_axis();
    let mut multi = vec![0usize; d];
    let mut v = vec![0.0; d];
    let values = (0..grid.len())
        .map(|idx| {
            grid.multi_index(idx, &mut multi);
            for j in 0..d {
                v[j] = inverses[j][multi[j]];
            }
            debug_assert!(multi.iter().all(|&k| k < m));
            h.cdf(&v)
        })
        .collect();
    GridFunction::from_values(*grid, values)
}

/// `Φ(H)` for a cdf given by its lattice values.
pub fn copula_map(h: &GridFunction) -> Result<GridFunction> {
    copula_map_of(h, h.grid())
}

/// `Φ'_C(h)` at every node, with `h(u^{(j)})` read from the lattice.
pub fn hadamard_derivative(c: &CopulaModel, h: &GridFunction) -> Result<GridFunction> {
    let grid = *h.grid();
    let d = grid.dim();
    if c.dim() != d {
        return Err(Error::Usage(format!("copula has d = {}, grid has d = {d}", c.dim())));
    }
    let hv = h.values();
    let mut multi = vec![0usize; d];
    let mut u = vec![0.0; d];
    let values = (0..grid.len())
        .map(|idx| {
            grid.multi_index(idx, &mut multi);
            grid.node(idx, &mut u);
            let mut s = 0.0;
            for j in 0..d {
                s += c.partial_extended(j, &u) * hv[grid.slice_index(&multi, j)];
            }
            hv[idx] - s
        })
        .collect();
    GridFunction::from_values(grid, values)
}

/// Analytic shapes for perturbations of the joint cdf.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Zero,
    /// `a Π_j sin(π u_j)`.
    SineProduct {
        amplitude: f64,
    },
    /// `a Π_j u_j³ (1 - u_j)`; its mixed partials vanish quadratically at
    /// every corner, so copulas whose density dies off there stay valid.
    CubicProduct {
        amplitude: f64,
    },
}

impl Shape {
    pub fn eval(&self, u: &[f64]) -> f64 {
        match *self {
            Shape::Zero => 0.0,
            Shape::SineProduct { amplitude } => amplitude * u.iter().map(|x| (PI * x).sin()).product::<f64>(),
            Shape::CubicProduct { amplitude } => amplitude * u.iter().map(|x| x * x * x * (1.0 - x)).product::<f64>(),
        }
    }
}

/// Analytic shapes for univariate perturbations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum UnivariateShape {
    Zero,
    /// `a u (1 - u)`.
    Bump {
        amplitude: f64,
    },
    /// `a u`.
    Linear {
        amplitude: f64,
    },
    /// `a sin(π u)`.
    Sine {
        amplitude: f64,
    },
}

impl UnivariateShape {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            UnivariateShape::Zero => 0.0,
            UnivariateShape::Bump { amplitude } => amplitude * u * (1.0 - u),
            UnivariateShape::Linear { amplitude } => amplitude * u,
            UnivariateShape::Sine { amplitude } => amplitude * (PI * u).sin(),
        }
    }

    /// `sup_{[0,1]} |h|`.
    pub fn sup(&self) -> f64 {
        match *self {
            UnivariateShape::Zero => 0.0,
            UnivariateShape::Bump { amplitude } => 0.25 * amplitude.abs(),
            UnivariateShape::Linear { amplitude } | UnivariateShape::Sine { amplitude } => amplitude.abs(),
        }
    }

    fn amplitude(&self) -> f64 {
        match *self {
            UnivariateShape::Zero => 0.0,
            UnivariateShape::Bump { amplitude }
            | UnivariateShape::Linear { amplitude }
            | UnivariateShape::Sine { amplitude } => amplitude,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Field {
    Analytic(Shape),
    Grid(GridFunction),
}

/// A perturbation `h` of the class `𝒜_n`: zero where a coordinate is 0 and
/// at `(1, ..., 1)`, bounded, with a lattice modulus of continuity.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationA {
    d: usize,
    field: Field,
    bound: f64,
    modulus: f64,
}

impl PerturbationA {
    pub fn analytic(shape: Shape, d: usize) -> Result<Self> {
        if let Shape::SineProduct { amplitude } | Shape::CubicProduct { amplitude } = shape {
            if !amplitude.is_finite() {
                return Err(Error::InvalidParameter("perturbation amplitude must be finite".into()));
            }
        }
        let grid = Grid::default_for(d)?;
        let h = GridFunction::from_fn(grid, |u| shape.eval(u));
        Ok(PerturbationA {
            d,
            field: Field::Analytic(shape),
            bound: h.sup_abs(Region::full()),
            modulus: modulus(&h),
        })
    }

    /// Perturbation given by lattice values, interpolated multilinearly.
    pub fn from_grid(h: GridFunction) -> Result<Self> {
        let grid = *h.grid();
        let d = grid.dim();
        let mut u = vec![0.0; d];
        for idx in 0..grid.len() {
            grid.node(idx, &mut u);
            let on_boundary = u.contains(&0.0) || u.iter().all(|&x| x == 1.0);
            if on_boundary && h.values()[idx].abs() > CDF_TOL {
                return Err(Error::Domain(format!(
                    "perturbation is {} at boundary node {u:?}",
                    h.values()[idx]
                )));
            }
        }
        let bound = h.sup_abs(Region::full());
        let modulus = modulus(&h);
        Ok(PerturbationA {
            d,
            field: Field::Grid(h),
            bound,
            modulus,
        })
    }

    pub fn zero(d: usize) -> Self {
        PerturbationA {
            d,
            field: Field::Analytic(Shape::Zero),
            bound: 0.0,
            modulus: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Largest change between lattice neighbours.
    pub fn modulus(&self) -> f64 {
        self.modulus
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        match &self.field {
            Field::Analytic(s) => s.eval(u),
            Field::Grid(g) => g.interpolate(u),
        }
    }

    pub fn on_grid(&self, grid: &Grid) -> GridFunction {
        match &self.field {
            Field::Grid(g) if g.grid() == grid => g.clone(),
            _ => GridFunction::from_fn(*grid, |u| self.eval(u)),
        }
    }
}

fn modulus(h: &GridFunction) -> f64 {
    let grid = *h.grid();
    let m = grid.points_per_axis();
    let mut multi = vec![0usize; grid.dim()];
    let mut best = 0.0f64;
    for idx in 0..grid.len() {
        grid.multi_index(idx, &mut multi);
        let mut stride = 1;
        for axis in (0..grid.dim()).rev() {
            if multi[axis] + 1 < m {
                best = best.max((h.values()[idx + stride] - h.values()[idx]).abs());
            }
            stride *= m;
        }
    }
    best
}

/// `h̃(u) = Σ_j C^{(j)}(u) h̃_j(u_j)`, the class `ℬ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationB {
    components: Vec<UnivariateShape>,
}

impl PerturbationB {
    pub fn new(components: Vec<UnivariateShape>) -> Result<Self> {
        if components.is_empty() || components.iter().any(|c| !c.amplitude().is_finite()) {
            return Err(Error::InvalidParameter(
                "perturbation components must be finite and non-empty".into(),
            ));
        }
        Ok(PerturbationB { components })
    }

    pub fn zero(d: usize) -> Self {
        PerturbationB {
            components: vec![UnivariateShape::Zero; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[UnivariateShape] {
        &self.components
    }

    /// `max_j sup |h̃_j|`.
    pub fn bound(&self) -> f64 {
        self.components.iter().map(UnivariateShape::sup).fold(0.0, f64::max)
    }

    /// `r(u) = max_j |h̃_j(u)|`.
    pub fn envelope(&self, u: f64) -> f64 {
        self.components.iter().map(|c| c.eval(u).abs()).fold(0.0, f64::max)
    }

    /// `r(0) = r(1) = 0`.
    pub fn envelope_vanishes(&self) -> bool {
        self.envelope(0.0) == 0.0 && self.envelope(1.0) == 0.0
    }

    /// Every component satisfies `h̃_j(1) = 0`.
    pub fn vanishes_at_one(&self) -> bool {
        self.components.iter().all(|c| c.eval(1.0) == 0.0)
    }

    pub fn eval(&self, c: &CopulaModel, u: &[f64]) -> f64 {
        let mut s = 0.0;
        for (j, comp) in self.components.iter().enumerate() {
            s += c.partial_extended(j, u) * comp.eval(u[j]);
        }
        s
    }

    pub fn on_grid(&self, c: &CopulaModel, grid: &Grid) -> Result<GridFunction> {
        if c.dim() != self.dim() || grid.dim() != self.dim() {
            return Err(Error::Usage("perturbation, copula and grid dimensions differ".into()));
        }
        Ok(GridFunction::from_fn(*grid, |u| self.eval(c, u)))
    }
}

/// `ℬ_n^α`: components with `|h̃_j(u)| / (u^α (1-u)^α) < 2M` and `sup |h̃_j| <= M`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationBAlpha {
    b: PerturbationB,
    alpha: f64,
    bound: f64,
}

impl PerturbationBAlpha {
    /// Checks the weighted bound on a fine interior lattice, a superset of
    /// every `Ĩ_n(ε)`.
    pub fn new(b: PerturbationB, alpha: f64, bound: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !(bound > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need alpha >= 0 and M > 0, got {alpha}, {bound}"
            )));
        }
        if b.bound() > bound {
            return Err(Error::Domain(format!("sup |h̃_j| = {} exceeds M = {bound}", b.bound())));
        }
        for k in 1..QUANTILE_LATTICE {
            let u = k as f64 / QUANTILE_LATTICE as f64;
            let w = (u * (1.0 - u)).powf(alpha);
            if b.envelope(u) / w >= 2.0 * bound {
                return Err(Error::Domain(format!("weighted envelope reaches 2M at u = {u}")));
            }
        }
        Ok(PerturbationBAlpha { b, alpha, bound })
    }

    pub fn components(&self) -> &PerturbationB {
        &self.b
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }
}

/// Serialized form of [`RateParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSpec {
    pub beta: f64,
    pub alpha: f64,
    pub gamma: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Moment order of `M(X)`; selects the generic-model constraints.
    #[serde(default)]
    pub s: Option<f64>,
}

fn default_eps() -> f64 {
    1.0
}

/// Exponents `β, α, γ, ϑ` (and `s`) tying the regions and rates together.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RateSpec", into = "RateSpec")]
pub struct RateParams {
    beta: f64,
    alpha: f64,
    gamma: f64,
    vartheta: f64,
    eps: f64,
    s: Option<f64>,
}

impl TryFrom<RateSpec> for RateParams {
    type Error = Error;

    fn try_from(r: RateSpec) -> Result<Self> {
        match r.s {
            Some(s) => RateParams::generic(r.beta, r.alpha, r.gamma, s, r.eps),
            None => RateParams::copula(r.beta, r.alpha, r.gamma, r.eps),
        }
    }
}

impl From<RateParams> for RateSpec {
    fn from(p: RateParams) -> Self {
        RateSpec {
            beta: p.beta,
            alpha: p.alpha,
            gamma: p.gamma,
            eps: p.eps,
            s: p.s,
        }
    }
}

fn check_common(beta: f64, alpha: f64, gamma: f64, eps: f64, gamma_max: f64) -> Result<()> {
    if !(0.0..=0.5).contains(&beta) {
        return Err(Error::Usage(format!("beta must lie in [0, 1/2], got {beta}")));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Usage(format!("alpha must be >= 0, got {alpha}")));
    }
    if !(gamma >= 0.0 && gamma <= gamma_max) {
        return Err(Error::Usage(format!("gamma must lie in [0, {gamma_max}], got {gamma}")));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Usage(format!("eps must be positive, got {eps}")));
    }
    Ok(())
}

fn theta_from(numerator: f64, alpha: f64) -> f64 {
    if alpha >= 1.0 {
        1.0
    } else {
        (numerator / (2.0 * (1.0 - alpha))).min(1.0)
    }
}

impl RateParams {
    /// `γ >= (β-α)_+ / (4(1-β))`, `ϑ = min{(1+4γ) / (2(1-α)), 1}`.
    pub fn copula(beta: f64, alpha: f64, gamma: f64, eps: f64) -> Result<Self> {
        check_common(beta, alpha, gamma, eps, 0.25)?;
        if gamma >= 0.25 {
            return Err(Error::Usage(format!("gamma must be below 1/4, got {gamma}")));
        }
        let min = RateParams::min_gamma_copula(beta, alpha);
        if gamma < min {
            return Err(Error::Usage(format!(
                "gamma = {gamma} is below (beta-alpha)_+/(4(1-beta)) = {min}"
            )));
        }
        let vartheta = theta_from(1.0 + 4.0 * gamma, alpha);
        Ok(RateParams {
            beta,
            alpha,
            gamma,
            vartheta,
            eps,
            s: None,
        })
    }

    /// Generic-model constraints with moment order `s >= 2`.
    pub fn generic(beta: f64, alpha: f64, gamma: f64, s: f64, eps: f64) -> Result<Self> {
        check_common(beta, alpha, gamma, eps, 0.25)?;
        if !(s >= 2.0 && s.is_finite()) {
            return Err(Error::Usage(format!("moment order s must be >= 2, got {s}")));
        }
        let min = RateParams::min_gamma_generic(beta, alpha, s).ok_or_else(|| {
            Error::Usage(format!(
                "no gamma satisfies the constraint for beta = {beta}, alpha = {alpha}, s = {s}"
            ))
        })?;
        if gamma < min {
            return Err(Error::Usage(format!("gamma = {gamma} is below the required {min}")));
        }
        let vartheta = theta_from((s - 2.0) / (s - 1.0) + 4.0 * gamma * s / (s - 1.0), alpha);
        if !(vartheta > 0.0) {
            return Err(Error::Usage("vartheta evaluates to 0; increase gamma or s".into()));
        }
        Ok(RateParams {
            beta,
            alpha,
            gamma,
            vartheta,
            eps,
            s: Some(s),
        })
    }

    pub fn min_gamma_copula(beta: f64, alpha: f64) -> f64 {
        (beta - alpha).max(0.0) / (4.0 * (1.0 - beta))
    }

    /// `None` when the constraint cannot be met.
    pub fn min_gamma_generic(beta: f64, alpha: f64, s: f64) -> Option<f64> {
        let num = (s - 2.0) / (s - 1.0) * (beta - alpha).max(0.0);
        let den = 4.0 * (1.0 - alpha - (beta - alpha) * s / (s - 1.0)).max(0.0);
        if num == 0.0 {
            Some(0.0)
        } else if den > 0.0 {
            Some(num / den)
        } else {
            None
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn vartheta(&self) -> f64 {
        self.vartheta
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn s(&self) -> Option<f64> {
        self.s
    }

    /// `t̃ = t^{1/2 + 2γ} / ln(1/t)` for `t ∈ (0,1)`.
    pub fn t_tilde(&self, t: f64) -> f64 {
        t.powf(0.5 + 2.0 * self.gamma) / (1.0 / t).ln()
    }

    /// `[ε t^ϑ, 1 - ε t^ϑ]^d`.
    pub fn region(&self, t: f64) -> Result<Region> {
        Region::shrunk(self.eps, t, self.vartheta)
    }
}

/// One `t` of a difference-quotient verification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub t: f64,
    pub sup_error: f64,
    pub region_lower: f64,
    pub region_upper: f64,
    pub valid_cdf: bool,
}

/// Error column over decreasing `t` with its pass verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Two-resolution estimate of the discretization floor.
    pub floor: f64,
    pub passed: bool,
    pub diagnostics: Vec<String>,
}

impl ConvergenceTable {
    fn judge(rows: Vec<ConvergenceRow>, floor: f64) -> Self {
        let mut diagnostics = Vec::new();
        for r in rows.iter().filter(|r| !r.valid_cdf) {
            diagnostics.push(format!(
                "t = {}: perturbed function is not a valid cdf on the lattice",
                r.t
            ));
        }
        let mut passed = diagnostics.is_empty();
        if passed {
            for w in rows.windows(2) {
                let (a, b) = (w[0].sup_error, w[1].sup_error);
                if a <= 2.0 * floor || a == 0.0 {
                    break;
                }
                if !(b <= HALVING_RATIO * a) {
                    diagnostics.push(format!("error {b} at t = {} is not <= {HALVING_RATIO} x {a}", w[1].t));
                    passed = false;
                }
            }
        }
        ConvergenceTable {
            rows,
            floor,
            passed,
            diagnostics,
        }
    }

    /// CSV with columns `t, sup_error, region_lower, region_upper, valid_cdf_flag`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        writeln!(file, "# schema=1")?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["t", "sup_error", "region_lower", "region_upper", "valid_cdf_flag"])?;
        for r in &self.rows {
            w.write_record([
                r.t.to_string(),
                r.sup_error.to_string(),
                r.region_lower.to_string(),
                r.region_upper.to_string(),
                u8::from(r.valid_cdf).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_t_sequence(ts: &[f64]) -> Result<()> {
    if ts.is_empty() || ts.iter().any(|&t| !(t > 0.0 && t < 1.0)) || ts.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Usage(
            "t sequence must be non-empty, inside (0,1) and strictly decreasing".into(),
        ));
    }
    Ok(())
}

/// `inf{x ∈ [0,1] : f(x) >= u}` for non-decreasing `f`, by bisection to
/// machine resolution.
fn inverse_on_unit(f: impl Fn(f64) -> f64, u: f64) -> f64 {
    if u <= 0.0 || f(0.0) >= u {
        return 0.0;
    }
    if f(1.0) < u {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return hi;
        }
        if f(mid) >= u {
            hi = mid;
        } else {
            lo = mid;
        }
    }
}

/// Lattice validity of a candidate cdf: grounded, `H(1,...,1) = 1`, and
/// non-negative rectangle increments.
fn lattice_cdf_is_valid(values: &[f64], grid: &Grid) -> bool {
    let d = grid.dim();
    let m = grid.points_per_axis();
    let mut multi = vec![0usize; d];
    for (idx, &v) in values.iter().enumerate() {
        grid.multi_index(idx, &mut multi);
        if multi.contains(&0) && v.abs() > CDF_TOL {
            return false;
        }
    }
    if (values[values.len() - 1] - 1.0).abs() > CDF_TOL {
        return false;
    }
    // Backward differences along each axis; after all axes every interior
    // entry is a rectangle mass.
    let mut diff = values.to_vec();
    let mut stride = 1;
    for _ in 0..d {
        for idx in (0..diff.len()).rev() {
            if (idx / stride) % m != 0 {
                diff[idx] -= diff[idx - stride];
            }
        }
        stride *= m;
    }
    diff.iter().all(|&x| x >= -CDF_TOL)
}

/// `sup_{region} |(Φ(C + t h + t_b h̃) - C)/t - Φ'_C(h)|` on `grid`.
fn quotient_error(
    c: &CopulaModel,
    h: &PerturbationA,
    hb: &PerturbationB,
    t: f64,
    t_b: f64,
    grid: &Grid,
    region: Region,
) -> Result<(f64, bool)> {
    let d = grid.dim();
    let cdf = |v: &[f64]| c.cdf_unchecked(v) + t * h.eval(v) + t_b * hb.eval(c, v);
    let lattice = GridFunction::from_fn(*grid, cdf);
    let valid = lattice_cdf_is_valid(lattice.values(), grid);
    let axis = grid.axis();
    let inverses: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            axis.iter()
                .map(|&u| {
                    inverse_on_unit(
                        |x| {
                            let mut v = vec![1.0; d];
                            v[j] = x;
                            cdf(&v)
                        },
                        u,
                    )
                })
                .collect()
        })
        .collect();
    let deriv = hadamard_derivative(c, &h.on_grid(grid))?;
    let mut multi = vec![0usize; d];
    let mut u = vec![0.0; d];
    let mut v = vec![0.0; d];
    let values = (0..grid.len())
        .map(|idx| {
            grid.multi_index(idx, &mut multi);
            grid.node(idx, &mut u);
            for j in 0..d {
                v[j] = inverses[j][multi[j]];
            }
            (cdf(&v) - c.cdf_unchecked(&u)) / t - deriv.values()[idx]
        })
        .collect();
    let err = GridFunction::from_values(*grid, values)?.sup_abs(region);
    Ok((err, valid))
}

fn coarse_grid(grid: &Grid) -> Option<Grid> {
    let m = grid.points_per_axis();
    (m >= 5 && (m - 1).is_multiple_of(2))
        .then(|| Grid::new(grid.dim(), (m - 1) / 2 + 1).ok())
        .flatten()
}

fn verify(
    c: &CopulaModel,
    h: &PerturbationA,
    hb: &PerturbationB,
    ts: &[f64],
    grid: &Grid,
    setup: impl Fn(f64) -> Result<(f64, Region)>,
) -> Result<ConvergenceTable> {
    check_t_sequence(ts)?;
    let d = c.dim();
    if h.dim() != d || hb.dim() != d || grid.dim() != d {
        return Err(Error::Usage(
            "copula, perturbations and grid must share the dimension".into(),
        ));
    }
    let coarse = coarse_grid(grid);
    let mut rows = Vec::with_capacity(ts.len());
    let mut floor = 0.0f64;
    for &t in ts {
        let (t_b, region) = setup(t)?;
        let (err, valid) = quotient_error(c, h, hb, t, t_b, grid, region)?;
        if let Some(cg) = &coarse {
            let (err_c, _) = quotient_error(c, h, hb, t, t_b, cg, region)?;
            floor = floor.max((err - err_c).abs());
        }
        rows.push(ConvergenceRow {
            t,
            sup_error: err,
            region_lower: region.lower,
            region_upper: region.upper,
            valid_cdf: valid,
        });
    }
    Ok(ConvergenceTable::judge(rows, floor))
}

/// Difference quotients of `Φ` at `C` along `t h + t h̃` over the full cube.
pub fn verify_theorem_1(
    c: &CopulaModel,
    h: &PerturbationA,
    hb: &PerturbationB,
    ts: &[f64],
    grid: &Grid,
) -> Result<ConvergenceTable> {
    verify(c, h, hb, ts, grid, |t| Ok((t, Region::full())))
}

/// Difference quotients along `t h + t̃ h̃` over `[ε t^ϑ, 1 - ε t^ϑ]^d`.
pub fn verify_theorem_2(
    c: &CopulaModel,
    h: &PerturbationA,
    hb: &PerturbationBAlpha,
    params: &RateParams,
    ts: &[f64],
    grid: &Grid,
) -> Result<ConvergenceTable> {
    if (hb.alpha() - params.alpha()).abs() > 0.0 {
        return Err(Error::Usage(
            "perturbation alpha differs from the rate parameters".into(),
        ));
    }
    verify(c, h, hb.components(), ts, grid, |t| {
        Ok((params.t_tilde(t), params.region(t)?))
    })
}

/// The three quantile-lemma checks at one `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuantileRow {
    pub t: f64,
    pub t_tilde: f64,
    /// `sup_u |ξ(u) - u|`.
    pub shift: f64,
    /// `sup_u |(ξ(u) - u)/t + h(u) + (t̃/t) h̃(ξ(u))|`.
    pub remainder: f64,
    /// `u/2 <= ξ(u) <= 2u` on `[ε t^ϑ, 1/2]`, mirrored at 1.
    pub sandwich: bool,
    pub valid_cdf: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileTable {
    pub rows: Vec<QuantileRow>,
    pub passed: bool,
    pub diagnostics: Vec<String>,
}

impl QuantileTable {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        writeln!(file, "# schema=1")?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["t", "t_tilde", "shift", "remainder", "sandwich_flag", "valid_cdf_flag"])?;
        for r in &self.rows {
            w.write_record([
                r.t.to_string(),
                r.t_tilde.to_string(),
                r.shift.to_string(),
                r.remainder.to_string(),
                u8::from(r.sandwich).to_string(),
                u8::from(r.valid_cdf).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn column_decreases(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] <= QUANTILE_FLOOR || w[1] < w[0])
}

/// Quantile checks for `F = U + t h + t̃ h̃` on a `lattice + 1` point scan of `[0,1]`.
pub fn verify_quantile_lemma(
    h: &UnivariateShape,
    hb: &UnivariateShape,
    params: &RateParams,
    ts: &[f64],
    lattice: usize,
) -> Result<QuantileTable> {
    check_t_sequence(ts)?;
    if lattice < 2 {
        return Err(Error::Usage("quantile lattice needs at least 2 cells".into()));
    }
    let mut rows = Vec::with_capacity(ts.len());
    for &t in ts {
        let tb = params.t_tilde(t);
        let f = |x: f64| x + t * h.eval(x) + tb * hb.eval(x);
        let levels: Vec<f64> = (0..=lattice).map(|k| k as f64 / lattice as f64).collect();
        let fv: Vec<f64> = levels.iter().map(|&x| f(x)).collect();
        let valid = fv[0].abs() <= CDF_TOL
            && (fv[lattice] - 1.0).abs() <= CDF_TOL
            && fv.windows(2).all(|w| w[1] >= w[0] - CDF_TOL);
        let lower = params.region(t)?.lower;
        let (mut shift, mut remainder, mut sandwich) = (0.0f64, 0.0f64, true);
        for &u in &levels {
            let xi = inverse_on_unit(f, u);
            shift = shift.max((xi - u).abs());
            remainder = remainder.max(((xi - u) / t + h.eval(u) + tb / t * hb.eval(xi)).abs());
            if u >= lower && u <= 0.5 {
                sandwich &= u / 2.0 <= xi && xi <= 2.0 * u;
            }
            if u >= 0.5 && u <= 1.0 - lower {
                sandwich &= (1.0 - u) / 2.0 <= 1.0 - xi && 1.0 - xi <= 2.0 * (1.0 - u);
            }
        }
        rows.push(QuantileRow {
            t,
            t_tilde: tb,
            shift,
            remainder,
            sandwich,
            valid_cdf: valid,
        });
    }
    let mut diagnostics = Vec::new();
    for r in &rows {
        if !r.valid_cdf {
            diagnostics.push(format!("t = {}: perturbed cdf is invalid", r.t));
        }
        if !r.sandwich {
            diagnostics.push(format!("t = {}: sandwich bounds fail", r.t));
        }
    }
    let shifts: Vec<f64> = rows.iter().map(|r| r.shift).collect();
    let rems: Vec<f64> = rows.iter().map(|r| r.remainder).collect();
    if !column_decreases(&shifts) {
        diagnostics.push(format!("sup |ξ - u| does not decrease: {shifts:?}"));
    }
    if !column_decreases(&rems) {
        diagnostics.push(format!("remainder does not decrease: {rems:?}"));
    }
    Ok(QuantileTable {
        rows,
        passed: diagnostics.is_empty(),
        diagnostics,
    })
}

/// `sup |Φ'_C(h̃)|` over the lattice for `h̃ ∈ ℬ`.
pub fn derivative_kills_b(c: &CopulaModel, hb: &PerturbationB, grid: &Grid) -> Result<f64> {
    Ok(hadamard_derivative(c, &hb.on_grid(c, grid)?)?.sup_abs(Region::full()))
}

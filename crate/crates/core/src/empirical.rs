//! Samples, step cdfs and generalized inverses, smoothed marginals, and the
//! lattice versions of the empirical copula and the `Ĝ` process.

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::models::skew_normal::{skew_normal_cdf, skew_normal_quantile};
use crate::special::{norm_cdf, norm_quantile};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// An `n × d` matrix of observations, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl Sample {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::Usage(format!("sample needs n >= 1 and d >= 1, got {n} x {d}")));
        }
        if data.len() != n * d {
            return Err(Error::Usage(format!(
                "expected {} entries for {n} x {d}, got {}",
                n * d,
                data.len()
            )));
        }
        if let Some(x) = data.iter().find(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("sample entries must be finite, found {x}")));
        }
        Ok(Sample { n, d, data })
    }

    pub(crate) fn from_parts_unchecked(n: usize, d: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n * d);
        Sample { n, d, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Usage("rows have different lengths".into()));
        }
        Sample::new(rows.len(), d, rows.concat())
    }

    /// Builds a sample from equally long columns.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let d = columns.len();
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::Usage("columns have different lengths".into()));
        }
        let mut data = Vec::with_capacity(n * d);
        for i in 0..n {
            data.extend(columns.iter().map(|c| c[i]));
        }
        Sample::new(n, d, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.d + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Applies `f(j, x)` to every entry of column `j`.
    pub fn map(&self, f: impl Fn(usize, f64) -> f64) -> Sample {
        let data = self.data.iter().enumerate().map(|(k, &x)| f(k % self.d, x)).collect();
        Sample {
            n: self.n,
            d: self.d,
            data,
        }
    }

    /// Reads a CSV with a header row; one column per margin.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .comment(Some(b'#'))
            .from_path(path)?;
        let mut rows = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let row = record
                .iter()
                .map(|field| {
                    field
                        .trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Usage(format!("row {}: cannot parse {field:?} as a number", line + 1)))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Sample::from_rows(&rows)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record((1..=self.d).map(|j| format!("x{j}")))?;
        for i in 0..self.n {
            writer.write_record(self.row(i).iter().map(|x| format!("{x:e}")))?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Right-continuous step cdf: `F(x) = probs[i]` on `[points[i], points[i+1])`
/// and `0` left of `points[0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCdf {
    left: f64,
    points: Vec<f64>,
    probs: Vec<f64>,
}

impl StepCdf {
    /// `points` strictly increasing, `probs` non-decreasing in `(0, 1]` with
    /// last entry 1; `left` is returned as the inverse at level 0.
    pub fn new(left: f64, points: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        let ok = !points.is_empty()
            && points.len() == probs.len()
            && points.windows(2).all(|w| w[0] < w[1])
            && probs.windows(2).all(|w| w[0] <= w[1])
            && probs[0] >= 0.0
            && probs[probs.len() - 1] == 1.0
            && left <= points[0];
        if !ok {
            return Err(Error::Usage(
                "step cdf needs increasing points and probabilities ending at 1".into(),
            ));
        }
        Ok(StepCdf { left, points, probs })
    }

    /// Empirical cdf of `values`; level 0 inverts to `-inf`.
    pub fn empirical(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Usage("empirical cdf of an empty sample".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mut points = Vec::with_capacity(n);
        let mut probs = Vec::with_capacity(n);
        for (i, &x) in sorted.iter().enumerate() {
            if i + 1 < n && sorted[i + 1] == x {
                continue;
            }
            points.push(x);
            probs.push((i + 1) as f64 / n as f64);
        }
        Ok(StepCdf {
            left: f64::NEG_INFINITY,
            points,
            probs,
        })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let k = self.points.partition_point(|&p| p <= x);
        if k == 0 {
            0.0
        } else {
            self.probs[k - 1]
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// `inf{x : F(x) >= u}`.
    pub fn inverse(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return self.left;
        }
        let k = self.probs.partition_point(|&p| p < u);
        self.points[k.min(self.points.len() - 1)]
    }
}

/// Error-law marginals used by the data-generating models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum Marginal {
    Normal {
        mean: f64,
        sd: f64,
    },
    Uniform {
        lower: f64,
        upper: f64,
    },
    SkewNormal {
        gamma: f64,
    },
    #[serde(skip)]
    Step(StepCdf),
}

impl Marginal {
    pub fn standard_normal() -> Self {
        Marginal::Normal { mean: 0.0, sd: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Marginal::Normal { mean, sd } if !(sd > 0.0 && sd.is_finite() && mean.is_finite()) => Err(
                Error::InvalidParameter(format!("normal marginal needs sd > 0, got {sd}")),
            ),
            Marginal::Uniform { lower, upper } if !(lower < upper && lower.is_finite() && upper.is_finite()) => Err(
                Error::InvalidParameter(format!("uniform marginal needs lower < upper, got [{lower}, {upper}]")),
            ),
            Marginal::SkewNormal { gamma } if !gamma.is_finite() => {
                Err(Error::InvalidParameter("skew-normal shape must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Marginal::Normal { mean, sd } => norm_cdf((x - mean) / sd),
            Marginal::Uniform { lower, upper } => ((x - lower) / (upper - lower)).clamp(0.0, 1.0),
            Marginal::SkewNormal { gamma } => skew_normal_cdf(x, *gamma),
            Marginal::Step(s) => s.cdf(x),
        }
    }

    /// Density; zero for step cdfs.
    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            Marginal::Normal { mean, sd } => crate::special::norm_pdf((x - mean) / sd) / sd,
            Marginal::Uniform { lower, upper } => {
                if (*lower..=*upper).contains(&x) {
                    1.0 / (upper - lower)
                } else {
                    0.0
                }
            }
            Marginal::SkewNormal { gamma } => crate::models::skew_normal::skew_normal_pdf(x, *gamma),
            Marginal::Step(_) => 0.0,
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            Marginal::Normal { mean, sd } => mean + sd * norm_quantile(u),
            Marginal::Uniform { lower, upper } => lower + u.clamp(0.0, 1.0) * (upper - lower),
            Marginal::SkewNormal { gamma } => {
                if u <= 0.0 {
                    f64::NEG_INFINITY
                } else if u >= 1.0 {
                    f64::INFINITY
                } else {
                    skew_normal_quantile(u, *gamma).expect("level inside (0,1)")
                }
            }
            Marginal::Step(s) => s.inverse(u),
        }
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self, Marginal::Step(_))
    }
}

/// `F̃ = (1 - δ) F + δ U`, strictly increasing on its support.
///
/// `U` is uniform on the support of `F` when that is bounded and on
/// `[F^{-1}(δ), F^{-1}(1 - δ)]` otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedMarginal {
    base: Marginal,
    delta: f64,
    lower: f64,
    upper: f64,
}

/// `F̃` built with `δ_n = 1/n`.
pub fn smoothed_marginal(base: &Marginal, n: usize) -> Result<SmoothedMarginal> {
    if n == 0 {
        return Err(Error::Usage("smoothing weight needs n >= 1".into()));
    }
    SmoothedMarginal::with_delta(base, 1.0 / n as f64)
}

impl SmoothedMarginal {
    pub fn with_delta(base: &Marginal, delta: f64) -> Result<Self> {
        if !base.is_continuous() {
            return Err(Error::Usage("smoothed marginals need a continuous base cdf".into()));
        }
        base.validate()?;
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::Domain(format!("mixing weight must lie in [0,1), got {delta}")));
        }
        let (lower, upper) = match *base {
            Marginal::Uniform { lower, upper } => (lower, upper),
            _ if delta > 0.0 => (base.quantile(delta), base.quantile(1.0 - delta)),
            _ => (0.0, 1.0),
        };
        Ok(SmoothedMarginal {
            base: base.clone(),
            delta,
            lower,
            upper,
        })
    }

    /// The exact marginal, `δ = 0`.
    pub fn exact(base: &Marginal) -> Result<Self> {
        SmoothedMarginal::with_delta(base, 0.0)
    }

    pub fn base(&self) -> &Marginal {
        &self.base
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    fn mixes_nontrivially(&self) -> bool {
        self.delta > 0.0 && !matches!(self.base, Marginal::Uniform { .. })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if !self.mixes_nontrivially() {
            return self.base.cdf(x);
        }
        let u = ((x - self.lower) / (self.upper - self.lower)).clamp(0.0, 1.0);
        (1.0 - self.delta) * self.base.cdf(x) + self.delta * u
    }

    /// `F̃^{-1}(u)` by bracketing and bisection to machine resolution.
    pub fn quantile(&self, u: f64) -> f64 {
        if !self.mixes_nontrivially() || u <= 0.0 || u >= 1.0 {
            return self.base.quantile(u);
        }
        let start = self.base.quantile(u);
        let mut step = 1.0f64.max(start.abs() * 1e-3);
        let (mut lo, mut hi) = (start, start);
        while self.cdf(lo) >= u {
            lo -= step;
            step *= 2.0;
        }
        step = 1.0f64.max(start.abs() * 1e-3);
        while self.cdf(hi) < u {
            hi += step;
            step *= 2.0;
        }
        // Invariant: cdf(lo) < u <= cdf(hi).
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }
}

/// Anything with a generalized inverse `inf{x : F(x) >= u}`.
pub trait GeneralizedInverse {
    fn inverse_at(&self, u: f64) -> f64;
}

impl GeneralizedInverse for StepCdf {
    fn inverse_at(&self, u: f64) -> f64 {
        self.inverse(u)
    }
}

impl GeneralizedInverse for SmoothedMarginal {
    fn inverse_at(&self, u: f64) -> f64 {
        self.quantile(u)
    }
}

impl GeneralizedInverse for Marginal {
    fn inverse_at(&self, u: f64) -> f64 {
        self.quantile(u)
    }
}

/// `F^{-1}(u) = inf{x : F(x) >= u}`; level 0 gives the left end of the support.
pub fn generalized_inverse<F: GeneralizedInverse + ?Sized>(f: &F, u: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::Domain(format!("level {u} outside [0,1]")));
    }
    Ok(f.inverse_at(u))
}

/// Counts, at every node `k`, the points whose per-axis threshold index is
/// at most `k` on every axis, and divides by `n`.
///
/// `thresholds[i * d + j]` is the first lattice index at which point `i`
/// satisfies its axis-`j` indicator, or `m` if it never does.
fn lattice_average(grid: Grid, n: usize, thresholds: &[usize]) -> GridFunction {
    let d = grid.dim();
    let m = grid.points_per_axis();
    let mut counts = vec![0u64; grid.len()];
    'points: for t in thresholds.chunks(d) {
        let mut flat = 0;
        for &k in t {
            if k >= m {
                continue 'points;
            }
            flat = flat * m + k;
        }
        counts[flat] += 1;
    }
    // Prefix sums along each axis turn cell counts into orthant counts.
    let mut stride = 1;
    for _ in 0..d {
        for idx in 0..counts.len() {
            if (idx / stride) % m != 0 {
                counts[idx] += counts[idx - stride];
            }
        }
        stride *= m;
    }
    let values = counts.into_iter().map(|c| c as f64 / n as f64).collect();
    GridFunction::from_values_unchecked(grid, values)
}

fn check_grid(sample: &Sample, grid: &Grid) -> Result<()> {
    if sample.dim() != grid.dim() {
        return Err(Error::Usage(format!(
            "sample has d = {}, grid has d = {}",
            sample.dim(),
            grid.dim()
        )));
    }
    Ok(())
}

/// Empirical copula `Ĉ_n(u) = F̂_n(F̂_1^{-1}(u_1), ..., F̂_d^{-1}(u_d))` at
/// every lattice node.
pub fn empirical_copula(sample: &Sample, grid: &Grid) -> Result<GridFunction> {
    check_grid(sample, grid)?;
    let (n, d) = (sample.n(), sample.dim());
    let axis = grid.axis();
    let mut thresholds = vec![0usize; n * d];
    for j in 0..d {
        let ecdf = StepCdf::empirical(&sample.column(j))?;
        let q: Vec<f64> = axis.iter().map(|&u| ecdf.inverse(u)).collect();
        for i in 0..n {
            let x = sample.get(i, j);
            // The indicator x <= q[k] is monotone in k.
            thresholds[i * d + j] = q.partition_point(|&qk| x > qk);
        }
    }
    Ok(lattice_average(*grid, n, &thresholds))
}

/// Empirical copula of the true errors; same algorithm as [`empirical_copula`].
pub fn oracle_copula(errors: &Sample, grid: &Grid) -> Result<GridFunction> {
    empirical_copula(errors, grid)
}

/// `Ĝ(u) = n^{-1} Σ_i 1{x_{1i} <= F̃_1^{-1}(u_1), ..., x_{di} <= F̃_d^{-1}(u_d)}`
/// at every lattice node, evaluated as `F̃_j(x_{ji}) <= u_j`.
pub fn g_process(sample: &Sample, marginals: &[SmoothedMarginal], grid: &Grid) -> Result<GridFunction> {
    check_grid(sample, grid)?;
    if marginals.len() != sample.dim() {
        return Err(Error::Usage(format!(
            "{} marginals for d = {}",
            marginals.len(),
            sample.dim()
        )));
    }
    let (n, d) = (sample.n(), sample.dim());
    let axis = grid.axis();
    let mut thresholds = vec![0usize; n * d];
    for (j, f) in marginals.iter().enumerate() {
        for i in 0..n {
            let p = f.cdf(sample.get(i, j));
            thresholds[i * d + j] = axis.partition_point(|&u| p > u);
        }
    }
    Ok(lattice_average(*grid, n, &thresholds))
}

/// `Ĝ` at an arbitrary point `u ∈ [0,1]^d`.
pub fn g_process_at(sample: &Sample, marginals: &[SmoothedMarginal], u: &[f64]) -> f64 {
    let count = (0..sample.n())
        .filter(|&i| {
            marginals
                .iter()
                .enumerate()
                .all(|(j, f)| f.cdf(sample.get(i, j)) <= u[j])
        })
        .count();
    count as f64 / sample.n() as f64
}

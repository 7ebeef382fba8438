//! Parametric copula families: cdf, first and second partial derivatives,
//! samplers and the (C2)-style growth audit of second derivatives.

use crate::empirical::Sample;
use crate::error::{Error, Result};
use crate::special::{bvn_cdf, integrate, norm_cdf, norm_pdf, norm_quantile};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

/// Margin values are pulled this far inside `(0,1)` when the one-sided limit
/// of a partial derivative is taken at the boundary.
const EDGE: f64 = 1e-12;

/// Default ceiling on the (C2) ratio for a single-resolution scan.
pub const C2_CEILING: f64 = 1e3;

/// Allowed growth of the (C2) ratio from the coarsest to the finest grid.
pub const C2_GROWTH_LIMIT: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Independence,
    Clayton { theta: f64 },
    Gumbel { theta: f64 },
    Frank { theta: f64 },
    Gaussian { rho: f64 },
    Fgm { theta: f64 },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Independence => "independence",
            Family::Clayton { .. } => "clayton",
            Family::Gumbel { .. } => "gumbel",
            Family::Frank { .. } => "frank",
            Family::Gaussian { .. } => "gaussian",
            Family::Fgm { .. } => "fgm",
        }
    }

    fn is_archimedean(&self) -> bool {
        matches!(
            self,
            Family::Clayton { .. } | Family::Gumbel { .. } | Family::Frank { .. }
        )
    }
}

/// A first partial derivative together with a flag marking points where the
/// derivative is not defined and the zero convention was applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartialValue {
    pub value: f64,
    pub degenerate: bool,
}

/// Result of scanning `|C^{(j,k)}(u)| (u_j(1-u_j) u_k(1-u_k))^β` over the
/// interior lattice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct C2Report {
    pub family: String,
    pub beta: f64,
    pub m: usize,
    pub max_ratio: f64,
    pub passed: bool,
}

/// (C2) scans at several resolutions; fails when the ratio keeps growing
/// under refinement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct C2Audit {
    pub reports: Vec<C2Report>,
    pub growth: f64,
    pub passed: bool,
}

/// An analytic copula on `[0,1]^d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CopulaModel {
    family: Family,
    d: usize,
}

impl CopulaModel {
    pub fn new(family: Family, d: usize) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        let pair_only = matches!(family, Family::Gaussian { .. } | Family::Fgm { .. });
        if pair_only && d != 2 {
            return bad(format!("{} copula is bivariate only, got d = {d}", family.name()));
        }
        if !(2..=3).contains(&d) {
            return bad(format!("copula dimension must be 2 or 3, got {d}"));
        }
        match family {
            Family::Independence => {}
            Family::Clayton { theta } if !(theta > 0.0 && theta.is_finite()) => {
                return bad(format!("Clayton needs theta > 0, got {theta}"));
            }
            Family::Gumbel { theta } if !(theta >= 1.0 && theta.is_finite()) => {
                return bad(format!("Gumbel needs theta >= 1, got {theta}"));
            }
            Family::Frank { theta } if theta == 0.0 || !theta.is_finite() => {
                return bad(format!("Frank needs a finite theta != 0, got {theta}"));
            }
            Family::Frank { theta } if d == 3 && theta < 0.0 => {
                return bad(format!("trivariate Frank needs theta > 0, got {theta}"));
            }
            Family::Gaussian { rho } if !(rho > -1.0 && rho < 1.0) => {
                return bad(format!("Gaussian copula needs rho in (-1,1), got {rho}"));
            }
            Family::Fgm { theta } if !(-1.0..=1.0).contains(&theta) => {
                return bad(format!("FGM needs theta in [-1,1], got {theta}"));
            }
            _ => {}
        }
        Ok(CopulaModel { family, d })
    }

    pub fn independence(d: usize) -> Self {
        CopulaModel {
            family: Family::Independence,
            d,
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    fn check_point(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.d {
            return Err(Error::Usage(format!(
                "point has {} coordinates, copula has {}",
                u.len(),
                self.d
            )));
        }
        if let Some(x) = u.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::Domain(format!("coordinate {x} outside [0,1]")));
        }
        Ok(())
    }

    /// `C(u)`.
    pub fn cdf(&self, u: &[f64]) -> Result<f64> {
        self.check_point(u)?;
        Ok(self.cdf_unchecked(u))
    }

    /// `C(u)` without argument validation; `u` must lie in `[0,1]^d`.
    pub fn cdf_unchecked(&self, u: &[f64]) -> f64 {
        if u.iter().any(|&x| x <= 0.0) {
            return 0.0;
        }
        let mut active = [0.0f64; 3];
        let mut k = 0;
        for &x in u.iter().filter(|&&x| x < 1.0) {
            active[k] = x;
            k += 1;
        }
        match k {
            0 => 1.0,
            1 => active[0],
            _ => self.family_cdf(&active[..k]).clamp(0.0, 1.0),
        }
    }

    /// Family formula for points strictly inside the cube.
    fn family_cdf(&self, u: &[f64]) -> f64 {
        match self.family {
            Family::Independence => u.iter().product(),
            Family::Clayton { theta } => {
                let s: f64 = u.iter().map(|x| x.powf(-theta)).sum::<f64>() - (u.len() - 1) as f64;
                s.powf(-1.0 / theta)
            }
            Family::Gumbel { theta } => {
                let s: f64 = u.iter().map(|x| (-x.ln()).powf(theta)).sum();
                (-s.powf(1.0 / theta)).exp()
            }
            Family::Frank { theta } => {
                let denom = (-theta).exp_m1();
                let num: f64 = u.iter().map(|x| (-theta * x).exp_m1()).product();
                let ratio = num / denom.powi(u.len() as i32 - 1);
                -ratio.ln_1p() / theta
            }
            Family::Gaussian { rho } => bvn_cdf(norm_quantile(u[0]), norm_quantile(u[1]), rho),
            Family::Fgm { theta } => u[0] * u[1] * (1.0 + theta * (1.0 - u[0]) * (1.0 - u[1])),
        }
    }

    /// `C^{(j)}(u)` for zero-based axis `j`; zero with `degenerate` set when
    /// `u_j` is 0 or 1.
    pub fn partial(&self, j: usize, u: &[f64]) -> Result<PartialValue> {
        self.check_point(u)?;
        if j >= self.d {
            return Err(Error::Usage(format!("axis {j} out of range for d = {}", self.d)));
        }
        if u[j] <= 0.0 || u[j] >= 1.0 {
            return Ok(PartialValue {
                value: 0.0,
                degenerate: true,
            });
        }
        Ok(PartialValue {
            value: self.partial_extended(j, u),
            degenerate: false,
        })
    }

    /// `C^{(j)}(u)` extended continuously to `u_j ∈ {0, 1}` by its one-sided
    /// limit; `u` must lie in `[0,1]^d`.
    ///
    /// Returns exactly 1 when every other coordinate equals 1 and exactly 0
    /// when another coordinate is 0.
    pub fn partial_extended(&self, j: usize, u: &[f64]) -> f64 {
        let mut others_one = true;
        for (k, &x) in u.iter().enumerate() {
            if k != j {
                if x <= 0.0 {
                    return 0.0;
                }
                others_one &= x >= 1.0;
            }
        }
        if others_one {
            return 1.0;
        }
        let mut v = [0.0f64; 3];
        v[..self.d].copy_from_slice(u);
        v[j] = u[j].clamp(EDGE, 1.0 - EDGE);
        self.interior_partial(j, &v[..self.d]).clamp(0.0, 1.0)
    }

    /// Partial derivative for `0 < u_j < 1` and other coordinates in `(0,1]`.
    fn interior_partial(&self, j: usize, u: &[f64]) -> f64 {
        match self.family {
            Family::Independence => u.iter().enumerate().filter(|&(k, _)| k != j).map(|(_, x)| x).product(),
            Family::Clayton { theta } => (self.family_cdf(u) / u[j]).powf(theta + 1.0),
            Family::Gumbel { theta } => {
                let c = self.family_cdf(u);
                (c / u[j]) * (u[j].ln() / c.ln()).powf(theta - 1.0)
            }
            Family::Frank { theta } => (theta * self.family_cdf(u)).exp_m1() / (theta * u[j]).exp_m1(),
            Family::Gaussian { rho } => {
                let (x, y) = (norm_quantile(u[j]), norm_quantile(u[1 - j]));
                norm_cdf((y - rho * x) / (1.0 - rho * rho).sqrt())
            }
            Family::Fgm { theta } => {
                let (a, b) = (u[j], u[1 - j]);
                b * (1.0 + theta * (1.0 - b) * (1.0 - 2.0 * a))
            }
        }
    }

    /// `C^{(j,k)}(u)` on the open cube.
    pub fn second_partial(&self, j: usize, k: usize, u: &[f64]) -> Result<f64> {
        self.check_point(u)?;
        if j >= self.d || k >= self.d {
            return Err(Error::Usage(format!("axes ({j}, {k}) out of range for d = {}", self.d)));
        }
        if u.iter().any(|&x| x <= 0.0 || x >= 1.0) {
            return Err(Error::Domain(format!(
                "second partial needs an interior point, got {u:?}"
            )));
        }
        Ok(self.interior_second_partial(j, k, u))
    }

    fn interior_second_partial(&self, j: usize, k: usize, u: &[f64]) -> f64 {
        match self.family {
            Family::Independence => {
                if j == k {
                    0.0
                } else {
                    u.iter()
                        .enumerate()
                        .filter(|&(i, _)| i != j && i != k)
                        .map(|(_, x)| x)
                        .product()
                }
            }
            Family::Gaussian { rho } => {
                let (x, y) = (norm_quantile(u[j]), norm_quantile(u[1 - j]));
                let s2 = 1.0 - rho * rho;
                if j == k {
                    let z = (y - rho * x) / s2.sqrt();
                    -rho / s2.sqrt() * norm_pdf(z) / norm_pdf(x)
                } else {
                    let q = (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * s2);
                    (-q).exp() / s2.sqrt()
                }
            }
            Family::Fgm { theta } => {
                let (a, b) = (u[j], u[1 - j]);
                if j == k {
                    -2.0 * theta * b * (1.0 - b)
                } else {
                    1.0 + theta * (1.0 - 2.0 * a) * (1.0 - 2.0 * b)
                }
            }
            _ => {
                let c = self.family_cdf(u);
                let g1c = self.generator_d1(c);
                let psi2 = -self.generator_d2(c) / (g1c * g1c * g1c);
                let mixed = psi2 * self.generator_d1(u[j]) * self.generator_d1(u[k]);
                if j == k {
                    mixed + self.generator_d2(u[j]) / g1c
                } else {
                    mixed
                }
            }
        }
    }

    /// First derivative of the Archimedean generator.
    fn generator_d1(&self, t: f64) -> f64 {
        match self.family {
            Family::Clayton { theta } => -t.powf(-theta - 1.0),
            Family::Gumbel { theta } => -theta * (-t.ln()).powf(theta - 1.0) / t,
            Family::Frank { theta } => -theta / (theta * t).exp_m1(),
            _ => unreachable!("generator of a non-Archimedean family"),
        }
    }

    /// Second derivative of the Archimedean generator.
    fn generator_d2(&self, t: f64) -> f64 {
        match self.family {
            Family::Clayton { theta } => (theta + 1.0) * t.powf(-theta - 2.0),
            Family::Gumbel { theta } => {
                let l = -t.ln();
                theta * l.powf(theta - 2.0) * (theta - 1.0 + l) / (t * t)
            }
            Family::Frank { theta } => {
                let e = (theta * t).exp_m1();
                theta * theta * (theta * t).exp() / (e * e)
            }
            _ => unreachable!("generator of a non-Archimedean family"),
        }
    }

    /// Population Kendall's tau.
    pub fn kendall_tau(&self) -> f64 {
        match self.family {
            Family::Independence => 0.0,
            Family::Clayton { theta } => theta / (theta + 2.0),
            Family::Gumbel { theta } => 1.0 - 1.0 / theta,
            Family::Frank { theta } => {
                let debye = integrate(|t| if t == 0.0 { 1.0 } else { t / t.exp_m1() }, 0.0, theta, 1e-13) / theta;
                1.0 - 4.0 / theta * (1.0 - debye)
            }
            Family::Gaussian { rho } => 2.0 * rho.asin() / std::f64::consts::PI,
            Family::Fgm { theta } => 2.0 * theta / 9.0,
        }
    }

    /// `n` iid draws from the copula.
    ///
    /// Clayton, Gumbel and trivariate Frank use the Marshall–Olkin frailty
    /// construction; bivariate Frank and FGM use conditional inversion.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Sample {
        let d = self.d;
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            match self.family {
                Family::Independence => data.extend((0..d).map(|_| open_unit(rng))),
                Family::Clayton { theta } => {
                    let v: f64 = Gamma::new(1.0 / theta, 1.0).expect("valid gamma shape").sample(rng);
                    for _ in 0..d {
                        let e: f64 = Exp1.sample(rng);
                        data.push((1.0 + e / v).powf(-1.0 / theta));
                    }
                }
                Family::Gumbel { theta } => {
                    if theta == 1.0 {
                        data.extend((0..d).map(|_| open_unit(rng)));
                        continue;
                    }
                    let alpha = 1.0 / theta;
                    let v = positive_stable(alpha, rng);
                    for _ in 0..d {
                        let e: f64 = Exp1.sample(rng);
                        data.push((-(e / v).powf(alpha)).exp());
                    }
                }
                Family::Frank { theta } if d == 3 => {
                    let v = log_series(-(-theta).exp_m1(), -theta, rng) as f64;
                    for _ in 0..d {
                        let e: f64 = Exp1.sample(rng);
                        data.push(-((-theta).exp_m1() * (-e / v).exp()).ln_1p() / theta);
                    }
                }
                Family::Frank { theta } => {
                    let u = open_unit(rng);
                    let w = open_unit(rng);
                    let v = -(w * (-theta).exp_m1() / (w + (1.0 - w) * (-theta * u).exp())).ln_1p() / theta;
                    data.push(u);
                    data.push(v.clamp(0.0, 1.0));
                }
                Family::Gaussian { rho } => {
                    let z1: f64 = rng.sample(StandardNormal);
                    let z2: f64 = rng.sample(StandardNormal);
                    data.push(norm_cdf(z1));
                    data.push(norm_cdf(rho * z1 + (1.0 - rho * rho).sqrt() * z2));
                }
                Family::Fgm { theta } => {
                    let u = open_unit(rng);
                    let w = open_unit(rng);
                    let a = theta * (1.0 - 2.0 * u);
                    let disc = ((1.0 + a) * (1.0 + a) - 4.0 * a * w).max(0.0);
                    data.push(u);
                    data.push(2.0 * w / (1.0 + a + disc.sqrt()));
                }
            }
        }
        Sample::from_parts_unchecked(n, d, data)
    }

    /// Max over the interior lattice of
    /// `|C^{(j,k)}(u)| (u_j(1-u_j))^β (u_k(1-u_k))^β`.
    pub fn c2_max_ratio(&self, beta: f64, m: usize) -> Result<f64> {
        if !(0.0..=0.5).contains(&beta) {
            return Err(Error::Domain(format!("beta must lie in [0, 1/2], got {beta}")));
        }
        if m < 3 {
            return Err(Error::Usage(format!("an interior lattice needs m >= 3, got {m}")));
        }
        let d = self.d;
        let interior = m - 2;
        let total = interior.pow(d as u32);
        let mut u = vec![0.0; d];
        let mut best = 0.0f64;
        for idx in 0..total {
            let mut rest = idx;
            for slot in u.iter_mut().rev() {
                *slot = (rest % interior + 1) as f64 / (m - 1) as f64;
                rest /= interior;
            }
            for j in 0..d {
                for k in j..d {
                    let w = (u[j] * (1.0 - u[j]) * u[k] * (1.0 - u[k])).powf(beta);
                    let r = self.interior_second_partial(j, k, &u).abs() * w;
                    best = if r.is_nan() { f64::INFINITY } else { best.max(r) };
                }
            }
        }
        Ok(best)
    }

    /// Single-resolution (C2) scan against [`C2_CEILING`].
    pub fn check_c2(&self, beta: f64, m: usize) -> Result<C2Report> {
        let max_ratio = self.c2_max_ratio(beta, m)?;
        Ok(C2Report {
            family: self.family.name().to_string(),
            beta,
            m,
            max_ratio,
            passed: max_ratio.is_finite() && max_ratio <= C2_CEILING,
        })
    }

    /// (C2) scans over increasing resolutions `ms`; passes when every scan
    /// passes and the ratio grows by at most [`C2_GROWTH_LIMIT`] from the
    /// coarsest to the finest grid.
    pub fn audit_c2(&self, beta: f64, ms: &[usize]) -> Result<C2Audit> {
        if ms.len() < 2 || ms.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Usage("audit needs at least two increasing resolutions".into()));
        }
        let reports = ms.iter().map(|&m| self.check_c2(beta, m)).collect::<Result<Vec<_>>>()?;
        let first = reports[0].max_ratio;
        let last = reports[reports.len() - 1].max_ratio;
        let growth = if first > 0.0 {
            last / first
        } else if last > 0.0 {
            f64::INFINITY
        } else {
            1.0
        };
        let passed = reports.iter().all(|r| r.passed) && growth <= C2_GROWTH_LIMIT;
        Ok(C2Audit {
            reports,
            growth,
            passed,
        })
    }

    pub fn is_archimedean(&self) -> bool {
        self.family.is_archimedean()
    }
}

/// Uniform draw on the open interval `(0, 1)`.
pub(crate) fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Positive stable variable with Laplace transform `exp(-s^alpha)`,
/// `0 < alpha < 1`, by Kanter's representation.
fn positive_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let theta = std::f64::consts::PI * open_unit(rng);
    let w: f64 = Exp1.sample(rng);
    let a = (alpha * theta).sin() / theta.sin().powf(1.0 / alpha);
    let b = (((1.0 - alpha) * theta).sin() / w).powf((1.0 - alpha) / alpha);
    a * b
}

/// Logarithmic series variable, `P(V = k) ∝ p^k / k`; `log_q = ln(1 - p)`.
fn log_series<R: Rng + ?Sized>(p: f64, log_q: f64, rng: &mut R) -> u64 {
    loop {
        let v: f64 = rng.random();
        if v >= p {
            return 1;
        }
        let u: f64 = rng.random();
        let q = -(log_q * u).exp_m1();
        if v <= q * q {
            let k = (1.0 + v.ln() / q.ln()).floor();
            if k < 1.0 || v == 0.0 {
                continue;
            }
            return k as u64;
        }
        return if v >= q { 1 } else { 2 };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{kendall_tau, ks_uniform};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn families2() -> Vec<CopulaModel> {
        [
            Family::Independence,
            Family::Clayton { theta: 2.0 },
            Family::Gumbel { theta: 1.8 },
            Family::Frank { theta: 5.0 },
            Family::Frank { theta: -3.0 },
            Family::Gaussian { rho: 0.6 },
            Family::Gaussian { rho: -0.4 },
            Family::Fgm { theta: 0.7 },
        ]
        .into_iter()
        .map(|f| CopulaModel::new(f, 2).unwrap())
        .collect()
    }

    fn families3() -> Vec<CopulaModel> {
        [
            Family::Independence,
            Family::Clayton { theta: 1.5 },
            Family::Gumbel { theta: 2.0 },
            Family::Frank { theta: 4.0 },
        ]
        .into_iter()
        .map(|f| CopulaModel::new(f, 3).unwrap())
        .collect()
    }

    #[test]
    fn construction_rejects_bad_parameters() {
        assert!(CopulaModel::new(Family::Clayton { theta: 0.0 }, 2).is_err());
        assert!(CopulaModel::new(Family::Gumbel { theta: 0.9 }, 2).is_err());
        assert!(CopulaModel::new(Family::Frank { theta: 0.0 }, 2).is_err());
        assert!(CopulaModel::new(Family::Frank { theta: -1.0 }, 3).is_err());
        assert!(CopulaModel::new(Family::Gaussian { rho: 1.0 }, 2).is_err());
        assert!(CopulaModel::new(Family::Fgm { theta: 1.5 }, 2).is_err());
        assert!(CopulaModel::new(Family::Fgm { theta: 0.5 }, 3).is_err());
    }

    #[test]
    fn cdf_examples() {
        let ind = CopulaModel::independence(2);
        assert_eq!(ind.cdf(&[0.5, 0.5]).unwrap(), 0.25);
        let clayton = CopulaModel::new(Family::Clayton { theta: 2.0 }, 2).unwrap();
        assert!((clayton.cdf(&[0.5, 0.5]).unwrap() - 7f64.powf(-0.5)).abs() < 1e-15);
        for c in families2() {
            assert_eq!(c.cdf(&[0.0, 0.7]).unwrap(), 0.0);
        }
        assert!(matches!(ind.cdf(&[1.5, 0.2]), Err(Error::Domain(_))));
    }

    #[test]
    fn grounded_with_uniform_margins_on_lattice() {
        for c in families2().into_iter().chain(families3()) {
            let d = c.dim();
            for k in 0..=20 {
                let x = k as f64 / 20.0;
                for j in 0..d {
                    let mut u = vec![1.0; d];
                    u[j] = x;
                    assert!((c.cdf(&u).unwrap() - x).abs() < 1e-12, "{c:?} at {u:?}");
                    let mut z = vec![x; d];
                    z[j] = 0.0;
                    assert_eq!(c.cdf(&z).unwrap(), 0.0);
                }
            }
            assert_eq!(c.cdf(&vec![1.0; d]).unwrap(), 1.0);
        }
    }

    #[test]
    fn frank_cdf_matches_generator_composition() {
        let theta = 3.0f64;
        let phi = |t: f64| -(((-theta * t).exp() - 1.0) / ((-theta).exp() - 1.0)).ln();
        let psi = |s: f64| -(1.0 + (-s).exp() * ((-theta).exp() - 1.0)).ln() / theta;
        let c = CopulaModel::new(Family::Frank { theta }, 3).unwrap();
        let u = [0.3, 0.55, 0.8];
        let want = psi(u.iter().map(|&x| phi(x)).sum());
        assert!((c.cdf(&u).unwrap() - want).abs() < 1e-13);
    }

    #[test]
    fn rectangles_have_nonnegative_mass() {
        let m = 11;
        for c in families2() {
            for a in 0..m - 1 {
                for b in 0..m - 1 {
                    let (u0, u1) = (a as f64 / 10.0, (a + 1) as f64 / 10.0);
                    let (v0, v1) = (b as f64 / 10.0, (b + 1) as f64 / 10.0);
                    let mass = c.cdf(&[u1, v1]).unwrap() - c.cdf(&[u0, v1]).unwrap() - c.cdf(&[u1, v0]).unwrap()
                        + c.cdf(&[u0, v0]).unwrap();
                    assert!(mass >= -1e-12, "{c:?}: mass {mass}");
                }
            }
        }
    }

    #[test]
    fn partial_examples() {
        let ind = CopulaModel::independence(2);
        assert_eq!(ind.partial(0, &[0.3, 0.8]).unwrap().value, 0.8);
        let clayton = CopulaModel::new(Family::Clayton { theta: 2.0 }, 2).unwrap();
        let p = clayton.partial(0, &[0.5, 0.5]).unwrap();
        assert!((p.value - 8.0 * 7f64.powf(-1.5)).abs() < 1e-14);
        assert!(!p.degenerate);
        let edge = clayton.partial(0, &[1.0, 0.5]).unwrap();
        assert_eq!(
            edge,
            PartialValue {
                value: 0.0,
                degenerate: true
            }
        );
    }

    #[test]
    fn partial_tends_to_one_at_corner() {
        for c in families2() {
            let near = 1.0 - 1e-7;
            let v = c.partial(0, &[0.4, near]).unwrap().value;
            assert!((v - 1.0).abs() < 1e-4, "{c:?}: {v}");
        }
    }

    #[test]
    fn partial_matches_central_differences() {
        let h = 1e-6;
        for c in families2().into_iter().chain(families3()) {
            let d = c.dim();
            let axis = [0.1, 0.3, 0.5, 0.7, 0.9];
            for idx in 0..axis.len().pow(d as u32) {
                let mut rest = idx;
                let mut u = vec![0.0; d];
                for slot in u.iter_mut() {
                    *slot = axis[rest % axis.len()];
                    rest /= axis.len();
                }
                for j in 0..d {
                    let p = c.partial(j, &u).unwrap().value;
                    assert!((0.0..=1.0).contains(&p));
                    let (mut up, mut dn) = (u.clone(), u.clone());
                    up[j] += h;
                    dn[j] -= h;
                    let fd = (c.cdf(&up).unwrap() - c.cdf(&dn).unwrap()) / (2.0 * h);
                    assert!((p - fd).abs() < 1e-5, "{c:?} j={j} u={u:?}: {p} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn second_partial_examples() {
        let ind = CopulaModel::independence(2);
        assert_eq!(ind.second_partial(0, 1, &[0.4, 0.6]).unwrap(), 1.0);
        assert_eq!(ind.second_partial(0, 0, &[0.4, 0.6]).unwrap(), 0.0);
        assert!(matches!(ind.second_partial(0, 1, &[0.0, 0.6]), Err(Error::Domain(_))));
        // 3 u^{-3} v^{-3} S^{-5/2} with S = u^{-2} + v^{-2} - 1 = 7 at (1/2, 1/2).
        let clayton = CopulaModel::new(Family::Clayton { theta: 2.0 }, 2).unwrap();
        let want = 3.0 * 64.0 * 7f64.powf(-2.5);
        assert!((clayton.second_partial(0, 1, &[0.5, 0.5]).unwrap() - want).abs() < 1e-13);
    }

    #[test]
    fn second_partial_matches_nested_differences() {
        let h = 1e-4;
        for c in families2().into_iter().chain(families3()) {
            let d = c.dim();
            let u: Vec<f64> = [0.35, 0.6, 0.45][..d].to_vec();
            for j in 0..d {
                for k in 0..d {
                    let cdf = |du: f64, dv: f64| {
                        let mut p = u.clone();
                        p[j] += du;
                        p[k] += dv;
                        c.cdf(&p).unwrap()
                    };
                    let fd = (cdf(h, h) - cdf(h, -h) - cdf(-h, h) + cdf(-h, -h)) / (4.0 * h * h);
                    let got = c.second_partial(j, k, &u).unwrap();
                    assert!(
                        (got - fd).abs() < 1e-5 * (1.0 + got.abs()),
                        "{c:?} ({j},{k}): {got} vs {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn c2_examples() {
        let ind = CopulaModel::independence(2);
        let r = ind.check_c2(0.0, 51).unwrap();
        assert_eq!(r.max_ratio, 1.0);
        assert!(r.passed);
        // On the interior lattice the FGM mixed derivative peaks next to the
        // corners, at 1 + θ (1 - 2/(m-1))^2.
        let fgm = CopulaModel::new(Family::Fgm { theta: 1.0 }, 2).unwrap();
        let m = 51;
        let r = fgm.check_c2(0.0, m).unwrap();
        let edge = 1.0 - 2.0 / (m - 1) as f64;
        assert!((r.max_ratio - (1.0 + edge * edge)).abs() < 1e-12);
        assert!(r.passed);
        let clayton = CopulaModel::new(Family::Clayton { theta: 2.0 }, 2).unwrap();
        assert!(clayton.check_c2(0.5, 101).unwrap().passed);
    }

    #[test]
    fn c2_audit_separates_clayton_exponents() {
        let clayton = CopulaModel::new(Family::Clayton { theta: 2.0 }, 2).unwrap();
        assert!(clayton.audit_c2(0.5, &[51, 101, 201]).unwrap().passed);
        let audit = clayton.audit_c2(0.0, &[51, 101, 201]).unwrap();
        assert!(!audit.passed && audit.growth > 3.0, "{audit:?}");
        assert!(
            CopulaModel::independence(2)
                .audit_c2(0.0, &[51, 101, 201])
                .unwrap()
                .passed
        );
    }

    #[test]
    fn samples_match_kendall_tau_and_uniform_margins() {
        let n = 100_000;
        for (i, c) in families2().into_iter().chain(families3()).enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + i as u64);
            let s = c.sample(n, &mut rng);
            let cols: Vec<Vec<f64>> = (0..c.dim()).map(|j| s.column(j)).collect();
            for col in &cols {
                assert!(col.iter().all(|&x| (0.0..=1.0).contains(&x)));
                assert!(ks_uniform(col) < 0.01, "{c:?}: ks {}", ks_uniform(col));
            }
            let tau = kendall_tau(&cols[0], &cols[1]);
            assert!(
                (tau - c.kendall_tau()).abs() < 0.01,
                "{c:?}: tau {tau} vs {}",
                c.kendall_tau()
            );
        }
    }

    #[test]
    fn frank_tau_reference_value() {
        // Tabulated: Kendall's tau of Frank(5) is about 0.4567.
        let c = CopulaModel::new(Family::Frank { theta: 5.0 }, 2).unwrap();
        assert!((c.kendall_tau() - 0.4567).abs() < 1e-3);
    }
}

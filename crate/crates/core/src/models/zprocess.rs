//! The marginal distortion `Z_jn(u; x) = F_j(t_j(t̂_j^{-1}(F̃_j^{-1}(u); x); x)) - u`,
//! its covariate average `ℤ_jn(u) = √n E_X Z_jn(u; X)`, and empirical rate
//! checks of the (Z1)/(Z2) envelopes.

use super::{Covariates, Fit, LssMarginParams, MarginFit, MarginalModel};
use crate::empirical::{Marginal, SmoothedMarginal};
use crate::error::{Error, Result};
use crate::grid::{shrink_region, Grid, Region};
use crate::mapping::RateParams;
use crate::mc::child_seed;
use crate::models::skew_normal::{skew_normal_cdf, skew_normal_quantile};
use crate::stats::{median, rate_slope};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Seed-stream tag separating assumption checks from equivalence runs.
const Z_STREAM: u64 = 0x5a;

/// Tolerance on the (Z1) slope around `-1/2` and the slack on the (Z2) bound.
pub const Z_SLOPE_TOL: f64 = 0.15;

/// How the fitted transform moves a level `v` before the true transform is applied.
#[derive(Debug, Clone, PartialEq)]
pub enum CovariateEffect {
    /// `t(t̂^{-1}(v; x); x) = v + Σ_l diff_l x_l`.
    Shift(Vec<f64>),
    /// `t(t̂^{-1}(v; x); x) = Ψ((α̂(x) - α(x) + β̂(x) Ψ^{-1}(v; γ̂)) / β(x); γ)`.
    Lss {
        fitted: LssMarginParams,
        truth: LssMarginParams,
    },
}

impl CovariateEffect {
    fn from_fit(m: &MarginFit) -> Self {
        match m {
            MarginFit::Linear { fitted, truth } => {
                CovariateEffect::Shift(fitted.iter().zip(truth).map(|(a, b)| a - b).collect())
            }
            MarginFit::Lss { fitted, truth } => CovariateEffect::Lss {
                fitted: *fitted,
                truth: *truth,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ZVariant {
    Z1,
    Z2,
}

/// `Z_jn` for one margin and one fit, with the covariate sample used for `E_X`.
#[derive(Debug, Clone)]
pub struct ZProcess {
    margin: usize,
    n: usize,
    effect: CovariateEffect,
    base: Marginal,
    smoothed: SmoothedMarginal,
    covariates: Covariates,
    vanishes: bool,
}

/// Smoothing weight of `F̃`: zero for a forced oracle, `1/n` otherwise.
pub fn smoothing_delta(fit: &Fit, n: usize) -> f64 {
    if fit.forced_oracle {
        0.0
    } else {
        1.0 / n as f64
    }
}

/// Builds `Z_jn` for margin `j` of a fit on a sample of size `n`.
pub fn z_process(model: &dyn MarginalModel, fit: &Fit, j: usize, n: usize, covariates: Covariates) -> Result<ZProcess> {
    let margin = fit
        .margins
        .get(j)
        .ok_or_else(|| Error::Usage(format!("margin {j} out of range for d = {}", fit.margins.len())))?;
    if n == 0 || covariates.n() == 0 {
        return Err(Error::Usage(
            "Z process needs n >= 1 and a non-empty covariate sample".into(),
        ));
    }
    let base = model.error_marginals()[j].clone();
    let delta = smoothing_delta(fit, n);
    let smoothed = SmoothedMarginal::with_delta(&base, delta)?;
    let vanishes = delta == 0.0 && margin.is_exact();
    Ok(ZProcess {
        margin: j,
        n,
        effect: CovariateEffect::from_fit(margin),
        base,
        smoothed,
        covariates,
        vanishes,
    })
}

impl ZProcess {
    pub fn margin(&self) -> usize {
        self.margin
    }

    pub fn covariates(&self) -> &Covariates {
        &self.covariates
    }

    /// `Z_jn(u; x)` for `u ∈ (0,1)`.
    pub fn evaluate(&self, u: f64, x: &[f64]) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Domain(format!("Z process is defined for u in (0,1), got {u}")));
        }
        if self.vanishes {
            return Ok(0.0);
        }
        let level = self.level(u);
        Ok(self.at_level(u, level, x))
    }

    /// The part of `Z` that does not depend on the covariate.
    fn level(&self, u: f64) -> f64 {
        match &self.effect {
            CovariateEffect::Shift(_) => self.smoothed.quantile(u),
            CovariateEffect::Lss { fitted, .. } => {
                skew_normal_quantile(self.smoothed.quantile(u), fitted.gamma).expect("level inside (0,1)")
            }
        }
    }

    fn at_level(&self, u: f64, level: f64, x: &[f64]) -> f64 {
        let v = match &self.effect {
            CovariateEffect::Shift(diff) => self.base.cdf(level + super::dot(diff, x)),
            CovariateEffect::Lss { fitted, truth } => {
                let z = (fitted.alpha(x[0]) - truth.alpha(x[0]) + fitted.beta(x[0]) * level) / truth.beta(x[0]);
                self.base.cdf(skew_normal_cdf(z, truth.gamma))
            }
        };
        v - u
    }

    /// `Z(u_k; x_i)` for every level in `levels` (all inside `(0,1)`) and every
    /// stored covariate, row `k` per level.
    fn table(&self, levels: &[f64]) -> Vec<Vec<f64>> {
        let nx = self.covariates.n();
        if self.vanishes {
            return vec![vec![0.0; nx]; levels.len()];
        }
        let shifts: Option<Vec<f64>> = match &self.effect {
            CovariateEffect::Shift(diff) => Some((0..nx).map(|i| super::dot(diff, self.covariates.row(i))).collect()),
            CovariateEffect::Lss { .. } => None,
        };
        levels
            .iter()
            .map(|&u| {
                let level = self.level(u);
                match &shifts {
                    Some(s) => s.iter().map(|si| self.base.cdf(level + si) - u).collect(),
                    None => (0..nx)
                        .map(|i| self.at_level(u, level, self.covariates.row(i)))
                        .collect(),
                }
            })
            .collect()
    }

    /// `ℤ_jn(u) = √n · mean_i Z(u; x_i)`; zero at `u ∈ {0, 1}`.
    pub fn aggregate(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Domain(format!("level {u} outside [0,1]")));
        }
        Ok(self.aggregate_on(&[u])[0])
    }

    /// `ℤ_jn` at every level of `axis`.
    pub fn aggregate_on(&self, axis: &[f64]) -> Vec<f64> {
        let inner: Vec<f64> = axis.iter().copied().filter(|&u| u > 0.0 && u < 1.0).collect();
        let table = self.table(&inner);
        let scale = (self.n as f64).sqrt() / self.covariates.n() as f64;
        let mut rows = table.iter();
        axis.iter()
            .map(|&u| {
                if u > 0.0 && u < 1.0 {
                    scale * rows.next().expect("one row per interior level").iter().sum::<f64>()
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// `mean_i sup_{u ∈ levels} |Z(u; x_i)| / envelope(u)`.
    pub fn normalized_sup(&self, levels: &[f64], envelope: impl Fn(f64) -> f64) -> f64 {
        let inner: Vec<f64> = levels.iter().copied().filter(|&u| u > 0.0 && u < 1.0).collect();
        if inner.is_empty() {
            return 0.0;
        }
        let table = self.table(&inner);
        let nx = self.covariates.n();
        let mut sups = vec![0.0f64; nx];
        for (row, &u) in table.iter().zip(&inner) {
            let e = envelope(u);
            for (s, z) in sups.iter_mut().zip(row) {
                *s = s.max(z.abs() / e);
            }
        }
        sups.iter().sum::<f64>() / nx as f64
    }
}

/// Replication settings for [`check_z_assumption`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZCheckSettings {
    pub replications: usize,
    /// Size of the fresh covariate sample standing in for `E_X`.
    pub covariate_draws: usize,
    /// Lattice resolution on `[0,1]` for the sup over `u`.
    pub m: usize,
    pub seed: u64,
}

impl Default for ZCheckSettings {
    fn default() -> Self {
        ZCheckSettings {
            replications: 20,
            covariate_draws: 2000,
            m: 101,
            seed: 1,
        }
    }
}

/// Medians of the normalized sup per `n` with their log-log slope.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZRateReport {
    pub variant: ZVariant,
    pub margin: usize,
    pub n: Vec<usize>,
    pub medians: Vec<f64>,
    /// Medians multiplied by the assumed rate's inverse, `n^{1/2}` or `n^{1/4+γ}`.
    pub rate_normalized: Vec<f64>,
    pub slope: Option<f64>,
    pub failed_fits: usize,
    pub passed: bool,
}

/// Refits `model` at each `n`, evaluates the (Z1) or (Z2) normalized sup of
/// `Z_jn` for margin `j`, and checks the log-log slope.
///
/// (Z1) uses `r(u) = f_j(F_j^{-1}(u))` on `J_n(1)` and passes when the slope is
/// within `±0.15` of `-1/2`. (Z2) uses `u^α (1-u)^α` on `Ĩ_n(ε)` and passes when
/// the slope is at most `-(1/4 + γ) + 0.15`. Identically zero sups pass.
pub fn check_z_assumption(
    model: &dyn MarginalModel,
    j: usize,
    variant: ZVariant,
    params: &RateParams,
    n_sequence: &[usize],
    settings: &ZCheckSettings,
) -> Result<ZRateReport> {
    if n_sequence.len() < 3 || n_sequence.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Usage(
            "n_sequence needs at least 3 strictly increasing sizes".into(),
        ));
    }
    if j >= model.dim() || settings.replications == 0 || settings.covariate_draws == 0 {
        return Err(Error::Usage(
            "invalid margin index or empty replication settings".into(),
        ));
    }
    let axis = Grid::new(1, settings.m)?.axis();
    let base = model.error_marginals()[j].clone();
    let mut medians = Vec::new();
    let mut failed_fits = 0;
    for &n in n_sequence {
        let region = z_region(variant, params, n)?;
        let levels: Vec<f64> = axis.iter().copied().filter(|&u| region.contains_coord(u)).collect();
        let outcomes: Vec<Option<f64>> = (0..settings.replications)
            .into_par_iter()
            .map(|r| {
                let mut rng = ChaCha8Rng::seed_from_u64(child_seed(settings.seed ^ Z_STREAM, n, r));
                let sim = model.simulate(n, &mut rng);
                let fit = model.fit(&sim).ok()?;
                let x = model.draw_covariates(settings.covariate_draws, &mut rng);
                let zp = z_process(model, &fit, j, n, x).ok()?;
                Some(match variant {
                    ZVariant::Z1 => zp.normalized_sup(&levels, |u| base.pdf(base.quantile(u))),
                    ZVariant::Z2 => zp.normalized_sup(&levels, |u| (u * (1.0 - u)).powf(params.alpha())),
                })
            })
            .collect();
        let values: Vec<f64> = outcomes.iter().flatten().copied().collect();
        failed_fits += outcomes.len() - values.len();
        medians.push(median(&values).ok_or_else(|| Error::FitFailed(format!("every fit failed at n = {n}")))?);
    }
    let exponent = match variant {
        ZVariant::Z1 => 0.5,
        ZVariant::Z2 => 0.25 + params.gamma(),
    };
    let rate_normalized = n_sequence
        .iter()
        .zip(&medians)
        .map(|(&n, v)| v * (n as f64).powf(exponent))
        .collect();
    let points: Vec<(f64, f64)> = n_sequence
        .iter()
        .map(|&n| n as f64)
        .zip(medians.iter().copied())
        .collect();
    let slope = rate_slope(&points)?.value();
    let passed = if medians.iter().all(|&v| v == 0.0) {
        true
    } else {
        match (variant, slope) {
            (ZVariant::Z1, Some(s)) => (s + 0.5).abs() <= Z_SLOPE_TOL,
            (ZVariant::Z2, Some(s)) => s <= -exponent + Z_SLOPE_TOL,
            (_, None) => false,
        }
    };
    Ok(ZRateReport {
        variant,
        margin: j,
        n: n_sequence.to_vec(),
        medians,
        rate_normalized,
        slope,
        failed_fits,
        passed,
    })
}

/// The sup region used by a variant at sample size `n`.
pub fn z_region(variant: ZVariant, params: &RateParams, n: usize) -> Result<Region> {
    match variant {
        ZVariant::Z1 => shrink_region(1.0, n, 1.0),
        ZVariant::Z2 => shrink_region(params.eps(), n, params.vartheta()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copulas::{CopulaModel, Family};
    use crate::models::{LinearModelIID, LinearSpec};
    use crate::special::norm_cdf;
    use rand::SeedableRng;

    fn linear(oracle: bool) -> LinearModelIID {
        let c = CopulaModel::new(Family::Clayton { theta: 2.0 }, 2).unwrap();
        LinearModelIID::new(
            LinearSpec {
                oracle,
                ..LinearSpec::default()
            },
            c,
        )
        .unwrap()
    }

    fn shifted_fit(model: &LinearModelIID, delta: f64) -> Fit {
        let mut fit = model.oracle_fit();
        fit.forced_oracle = false;
        if let MarginFit::Linear { fitted, .. } = &mut fit.margins[0] {
            fitted[0] += delta;
        }
        fit
    }

    #[test]
    fn exact_fit_gives_zero_process() {
        let model = linear(true);
        let x = model.draw_covariates(50, &mut ChaCha8Rng::seed_from_u64(1));
        let zp = z_process(&model, &model.oracle_fit(), 0, 100, x).unwrap();
        for u in [0.01, 0.5, 0.99] {
            assert_eq!(zp.evaluate(u, &[1.0, -2.0]).unwrap(), 0.0);
        }
        assert!(zp.aggregate_on(&[0.0, 0.3, 0.7, 1.0]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shift_along_first_coordinate() {
        let model = linear(false);
        let delta = 0.3;
        let x = model.draw_covariates(10, &mut ChaCha8Rng::seed_from_u64(2));
        let n = 1_000_000;
        let zp = z_process(&model, &shifted_fit(&model, delta), 0, n, x).unwrap();
        // F̃ differs from F by at most 1/n in level.
        let z = zp.evaluate(0.5, &[1.0, 0.0]).unwrap();
        assert!((z - (norm_cdf(delta) - 0.5)).abs() < 1e-5, "{z}");
        assert!(zp.evaluate(0.0, &[1.0, 0.0]).is_err());
        assert!(zp.evaluate(1.0, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn values_stay_in_unit_band_and_vanish_at_the_ends() {
        let model = linear(false);
        let x = model.draw_covariates(2000, &mut ChaCha8Rng::seed_from_u64(3));
        let zp = z_process(&model, &shifted_fit(&model, 0.05), 0, 400, x).unwrap();
        for i in 0..50 {
            for u in [1e-6, 0.2, 0.5, 0.9, 1.0 - 1e-6] {
                let z = zp.evaluate(u, zp.covariates().row(i)).unwrap();
                assert!((-1.0..=1.0).contains(&z));
            }
        }
        let agg = zp.aggregate_on(&[0.5, 0.99, 0.999]);
        assert!(agg[1].abs() < 0.1 && agg[2].abs() < 0.02, "{agg:?}");
    }

    #[test]
    fn oracle_models_pass_trivially() {
        let model = linear(true);
        let params = RateParams::copula(0.5, 0.5, 0.0, 1.0).unwrap();
        let settings = ZCheckSettings {
            replications: 3,
            covariate_draws: 20,
            m: 21,
            seed: 7,
        };
        let report = check_z_assumption(&model, 0, ZVariant::Z1, &params, &[100, 200, 400], &settings).unwrap();
        assert!(report.passed);
        assert!(report.medians.iter().all(|&v| v == 0.0));
        assert!(check_z_assumption(&model, 0, ZVariant::Z1, &params, &[100, 200], &settings).is_err());
    }

    #[test]
    fn linear_model_meets_the_z1_rate() {
        let model = linear(false);
        let params = RateParams::copula(0.5, 0.5, 0.0, 1.0).unwrap();
        let settings = ZCheckSettings {
            replications: 12,
            covariate_draws: 400,
            m: 51,
            seed: 11,
        };
        let report = check_z_assumption(&model, 0, ZVariant::Z1, &params, &[500, 2000, 8000], &settings).unwrap();
        assert!(report.passed, "{report:?}");
    }
}

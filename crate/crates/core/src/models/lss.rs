//! Location-scale-shape margins `F_{jx}(y) = Ψ((y - α_j(x)) / β_j(x); γ_j)`
//! with skew-normal `Ψ`, a scalar covariate `x ~ U(0,1)` and fits by
//! maximum likelihood.

use super::skew_normal::{skew_normal_cdf, skew_normal_ln_pdf, skew_normal_quantile};
use super::{Covariates, Fit, MarginFit, MarginalModel, Simulated};
use crate::copulas::CopulaModel;
use crate::empirical::{Marginal, Sample};
use crate::error::{Error, Result};
use crate::optim::nelder_mead;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

const NM_TOL: f64 = 1e-13;
const NM_MAX_ITER: usize = 4000;
const NM_RESTARTS: usize = 3;

/// `α(x) = a0 + a1 x`, `β(x) = exp(c0 + c1 x)`, constant shape `γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LssMarginParams {
    pub a0: f64,
    pub a1: f64,
    pub c0: f64,
    pub c1: f64,
    pub gamma: f64,
}

impl LssMarginParams {
    pub fn alpha(&self, x: f64) -> f64 {
        self.a0 + self.a1 * x
    }

    pub fn beta(&self, x: f64) -> f64 {
        (self.c0 + self.c1 * x).exp()
    }

    /// `Ψ((y - α(x)) / β(x); γ)`.
    pub fn transform(&self, y: f64, x: f64) -> f64 {
        skew_normal_cdf((y - self.alpha(x)) / self.beta(x), self.gamma)
    }

    /// Response with error level `e ∈ (0,1)`: `α(x) + β(x) Ψ^{-1}(e; γ)`.
    pub fn response(&self, e: f64, x: f64) -> Result<f64> {
        Ok(self.alpha(x) + self.beta(x) * skew_normal_quantile(e, self.gamma)?)
    }

    fn is_finite(&self) -> bool {
        [self.a0, self.a1, self.c0, self.c1, self.gamma]
            .iter()
            .all(|v| v.is_finite())
    }

    fn distance(&self, other: &Self) -> f64 {
        [
            self.a0 - other.a0,
            self.a1 - other.a1,
            self.c0 - other.c0,
            self.c1 - other.c1,
            self.gamma - other.gamma,
        ]
        .iter()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LssSpec {
    pub margins: Vec<LssMarginParams>,
    /// Hold `c0, c1` at their true values.
    pub known_scale: bool,
    /// Hold `γ` at its true value.
    pub known_shape: bool,
    pub oracle: bool,
}

impl Default for LssSpec {
    fn default() -> Self {
        LssSpec {
            margins: vec![
                LssMarginParams {
                    a0: 0.0,
                    a1: 1.0,
                    c0: 0.0,
                    c1: 0.5,
                    gamma: 2.0,
                },
                LssMarginParams {
                    a0: 1.0,
                    a1: -1.0,
                    c0: -0.2,
                    c1: 0.3,
                    gamma: -1.5,
                },
            ],
            known_scale: false,
            known_shape: false,
            oracle: false,
        }
    }
}

/// The errors `ε_j = F_{jX}(Y_j)` are uniform, so their joint law is the
/// copula itself.
#[derive(Debug, Clone)]
pub struct LssModel {
    spec: LssSpec,
    copula: CopulaModel,
}

impl LssModel {
    pub fn new(spec: LssSpec, copula: CopulaModel) -> Result<Self> {
        let d = copula.dim();
        if spec.margins.len() != d {
            return Err(Error::InvalidParameter(format!(
                "{} margin parameter sets for d = {d}",
                spec.margins.len()
            )));
        }
        if spec.margins.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidParameter(
                "location-scale-shape parameters must be finite".into(),
            ));
        }
        Ok(LssModel { spec, copula })
    }

    pub fn margins(&self) -> &[LssMarginParams] {
        &self.spec.margins
    }

    /// Maximum-likelihood fit of one margin.
    pub fn fit_margin(&self, j: usize, x: &[f64], y: &[f64]) -> Result<LssMarginParams> {
        let truth = self.spec.margins[j];
        let (known_scale, known_shape) = (self.spec.known_scale, self.spec.known_shape);
        let free = 2 + if known_scale { 0 } else { 2 } + usize::from(!known_shape);
        if x.len() <= free {
            return Err(Error::Usage(format!(
                "likelihood fit needs n > {free}, got {}",
                x.len()
            )));
        }
        let unpack = |v: &[f64]| {
            let mut p = truth;
            p.a0 = v[0];
            p.a1 = v[1];
            let mut k = 2;
            if !known_scale {
                p.c0 = v[2];
                p.c1 = v[3];
                k = 4;
            }
            if !known_shape {
                p.gamma = v[k];
            }
            p
        };
        let nll = |v: &[f64]| {
            let p = unpack(v);
            let mut s = 0.0;
            for (&xi, &yi) in x.iter().zip(y) {
                let lb = p.c0 + p.c1 * xi;
                s -= skew_normal_ln_pdf((yi - p.alpha(xi)) * (-lb).exp(), p.gamma) - lb;
            }
            s
        };
        let mut v = initial_guess(x, y, &truth, known_scale, known_shape);
        let mut converged = false;
        for _ in 0..NM_RESTARTS {
            let m = nelder_mead(nll, &v, 0.1, NM_TOL, NM_MAX_ITER);
            converged = m.converged && m.value.is_finite();
            v = m.x;
        }
        let fitted = unpack(&v);
        if !converged || !fitted.is_finite() {
            return Err(Error::FitFailed(format!(
                "likelihood fit of margin {j} did not converge"
            )));
        }
        Ok(fitted)
    }

    fn oracle(&self) -> Fit {
        Fit {
            margins: self
                .spec
                .margins
                .iter()
                .map(|&p| MarginFit::Lss { fitted: p, truth: p })
                .collect(),
            forced_oracle: true,
            estimation_error: vec![0.0; self.spec.margins.len()],
        }
    }

    fn uniform_covariates(n: usize, rng: &mut dyn RngCore) -> Covariates {
        Covariates {
            k: 1,
            data: (0..n).map(|_| rng.random::<f64>()).collect(),
        }
    }
}

/// Least-squares location, log-sd scale and a shape sign from the residual
/// skewness, with the location corrected for the skew-normal mean.
fn initial_guess(x: &[f64], y: &[f64], truth: &LssMarginParams, known_scale: bool, known_shape: bool) -> Vec<f64> {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let a1 = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a0 = my - a1 * mx;
    let resid: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - a0 - a1 * a).collect();
    let m2 = resid.iter().map(|r| r * r).sum::<f64>() / n;
    let m3 = resid.iter().map(|r| r * r * r).sum::<f64>() / n;
    let gamma = if known_shape { truth.gamma } else { m3.signum() };
    let delta = gamma / (1.0 + gamma * gamma).sqrt();
    let shift = delta * (2.0 / std::f64::consts::PI).sqrt();
    let (c0, c1) = if known_scale {
        (truth.c0, truth.c1)
    } else {
        (0.5 * (m2 / (1.0 - shift * shift)).ln(), 0.0)
    };
    let mut v = vec![a0 - c0.exp() * shift, a1];
    if !known_scale {
        v.extend([c0, c1]);
    }
    if !known_shape {
        v.push(gamma);
    }
    v
}

impl MarginalModel for LssModel {
    fn name(&self) -> &'static str {
        "lss"
    }

    fn dim(&self) -> usize {
        self.copula.dim()
    }

    fn copula(&self) -> &CopulaModel {
        &self.copula
    }

    fn error_marginals(&self) -> Vec<Marginal> {
        vec![Marginal::Uniform { lower: 0.0, upper: 1.0 }; self.dim()]
    }

    fn simulate(&self, n: usize, rng: &mut dyn RngCore) -> Simulated {
        let covariates = Self::uniform_covariates(n, rng);
        let errors = self.copula.sample(n, rng);
        let d = self.dim();
        let mut data = Vec::with_capacity(n * d);
        for i in 0..n {
            let x = covariates.row(i)[0];
            for (j, p) in self.spec.margins.iter().enumerate() {
                data.push(p.response(errors.get(i, j), x).expect("copula draws lie in (0,1)"));
            }
        }
        let responses = Sample::new(n, d, data).expect("finite responses");
        Simulated {
            covariates,
            responses,
            errors,
        }
    }

    fn fit(&self, sim: &Simulated) -> Result<Fit> {
        if self.spec.oracle {
            return Ok(self.oracle());
        }
        let x = sim.covariates.data();
        let mut margins = Vec::new();
        let mut estimation_error = Vec::new();
        for (j, truth) in self.spec.margins.iter().enumerate() {
            let fitted = self.fit_margin(j, x, &sim.responses.column(j))?;
            estimation_error.push(fitted.distance(truth));
            margins.push(MarginFit::Lss { fitted, truth: *truth });
        }
        Ok(Fit {
            margins,
            forced_oracle: false,
            estimation_error,
        })
    }

    fn oracle_fit(&self) -> Fit {
        self.oracle()
    }

    fn draw_covariates(&self, n: usize, rng: &mut dyn RngCore) -> Covariates {
        Self::uniform_covariates(n, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copulas::Family;
    use crate::models::pseudo_observations;
    use crate::special::norm_cdf;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn clayton() -> CopulaModel {
        CopulaModel::new(Family::Clayton { theta: 2.0 }, 2).unwrap()
    }

    #[test]
    fn gaussian_shape_gives_shifted_normal_responses() {
        let p = LssMarginParams {
            a0: 1.5,
            a1: 0.0,
            c0: 0.0,
            c1: 0.0,
            gamma: 0.0,
        };
        let spec = LssSpec {
            margins: vec![p; 2],
            ..LssSpec::default()
        };
        let model = LssModel::new(spec, clayton()).unwrap();
        let sim = model.simulate(200, &mut ChaCha8Rng::seed_from_u64(1));
        for i in 0..200 {
            for j in 0..2 {
                let z = sim.responses.get(i, j) - 1.5;
                assert!((norm_cdf(z) - sim.errors.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn responses_invert_the_transform() {
        let model = LssModel::new(LssSpec::default(), clayton()).unwrap();
        let sim = model.simulate(100, &mut ChaCha8Rng::seed_from_u64(2));
        for i in 0..100 {
            let x = sim.covariates.row(i)[0];
            for (j, p) in model.margins().iter().enumerate() {
                assert!((p.transform(sim.responses.get(i, j), x) - sim.errors.get(i, j)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn known_scale_and_shape_reduce_to_normal_residuals() {
        let p = LssMarginParams {
            a0: 0.3,
            a1: 0.7,
            c0: 0.0,
            c1: 0.0,
            gamma: 0.0,
        };
        let spec = LssSpec {
            margins: vec![p; 2],
            known_scale: true,
            known_shape: true,
            oracle: false,
        };
        let model = LssModel::new(spec, clayton()).unwrap();
        let sim = model.simulate(400, &mut ChaCha8Rng::seed_from_u64(3));
        let fit = model.fit(&sim).unwrap();
        let obs = pseudo_observations(&fit, &sim).unwrap();
        for (j, m) in fit.margins.iter().enumerate() {
            let MarginFit::Lss { fitted, .. } = m else {
                unreachable!()
            };
            assert_eq!((fitted.c0, fitted.c1, fitted.gamma), (0.0, 0.0, 0.0));
            for i in 0..400 {
                let x = sim.covariates.row(i)[0];
                let want = norm_cdf(sim.responses.get(i, j) - fitted.alpha(x));
                assert!((obs.residuals.get(i, j) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn likelihood_fit_is_consistent() {
        let model = LssModel::new(LssSpec::default(), clayton()).unwrap();
        let sim = model.simulate(4000, &mut ChaCha8Rng::seed_from_u64(4));
        let fit = model.fit(&sim).unwrap();
        for (m, err) in fit.margins.iter().zip(&fit.estimation_error) {
            let MarginFit::Lss { fitted, truth } = m else {
                unreachable!()
            };
            assert!(*err < 0.35, "{fitted:?} vs {truth:?}");
            assert!((fitted.a1 - truth.a1).abs() < 0.15);
            assert_eq!(fitted.gamma.signum(), truth.gamma.signum());
        }
    }
}

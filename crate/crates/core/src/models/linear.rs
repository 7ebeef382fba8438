//! Linear regression margins `Y_j = X'b_j + ε_j`, with iid Gaussian
//! covariates or a stationary AR(1) covariate chain.

use super::{check_marginals, dot, draw_errors, Covariates, Fit, MarginFit, MarginalModel, Simulated};
use crate::copulas::CopulaModel;
use crate::empirical::{Marginal, Sample};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Designs whose condition number exceeds this are rejected.
pub const MAX_CONDITION: f64 = 1e10;

/// Steps discarded before a covariate chain with correlated innovations is used.
const BURN_IN: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearSpec {
    /// One coefficient vector per margin, all of length `k`.
    pub coefficients: Vec<Vec<f64>>,
    pub marginals: Vec<Marginal>,
    /// Impose `t̂ = t` instead of estimating.
    pub oracle: bool,
}

impl Default for LinearSpec {
    fn default() -> Self {
        LinearSpec {
            coefficients: vec![vec![1.0, -0.5], vec![0.5, 1.0]],
            marginals: vec![Marginal::standard_normal(); 2],
            oracle: false,
        }
    }
}

impl LinearSpec {
    fn validate(&self, copula: &CopulaModel) -> Result<usize> {
        let d = copula.dim();
        if self.coefficients.len() != d {
            return Err(Error::InvalidParameter(format!(
                "{} coefficient vectors for a {d}-dimensional copula",
                self.coefficients.len()
            )));
        }
        let k = self.coefficients[0].len();
        if k == 0
            || self
                .coefficients
                .iter()
                .any(|b| b.len() != k || b.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::InvalidParameter(
                "coefficient vectors must be finite and of equal length".into(),
            ));
        }
        check_marginals(&self.marginals, d)?;
        Ok(k)
    }
}

/// Least squares `b̂ = argmin Σ (y_i - x_i'b)^2`.
pub fn ols(x: &Covariates, y: &[f64]) -> Result<Vec<f64>> {
    let (n, k) = (x.n(), x.width());
    if n <= k {
        return Err(Error::Usage(format!(
            "least squares needs n > {k} observations, got {n}"
        )));
    }
    let design = DMatrix::from_row_slice(n, k, x.data());
    let gram = design.transpose() * &design;
    let eig = gram.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let condition = if min > 0.0 { (max / min).sqrt() } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::SingularDesign { condition });
    }
    let rhs = design.transpose() * DVector::from_column_slice(y);
    let chol = gram.cholesky().ok_or(Error::SingularDesign { condition })?;
    Ok(chol.solve(&rhs).iter().copied().collect())
}

fn linear_fit(coefficients: &[Vec<f64>], sim: &Simulated, oracle: bool) -> Result<Fit> {
    if oracle {
        return Ok(oracle_fit(coefficients));
    }
    let mut margins = Vec::with_capacity(coefficients.len());
    let mut estimation_error = Vec::with_capacity(coefficients.len());
    for (j, truth) in coefficients.iter().enumerate() {
        let fitted = ols(&sim.covariates, &sim.responses.column(j))?;
        estimation_error.push(
            fitted
                .iter()
                .zip(truth)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
        );
        margins.push(MarginFit::Linear {
            fitted,
            truth: truth.clone(),
        });
    }
    Ok(Fit {
        margins,
        forced_oracle: false,
        estimation_error,
    })
}

fn oracle_fit(coefficients: &[Vec<f64>]) -> Fit {
    Fit {
        margins: coefficients
            .iter()
            .map(|b| MarginFit::Linear {
                fitted: b.clone(),
                truth: b.clone(),
            })
            .collect(),
        forced_oracle: true,
        estimation_error: vec![0.0; coefficients.len()],
    }
}

fn responses(coefficients: &[Vec<f64>], x: &Covariates, errors: &Sample) -> Sample {
    let (n, d) = (errors.n(), errors.dim());
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n {
        data.extend(
            coefficients
                .iter()
                .enumerate()
                .map(|(j, b)| dot(b, x.row(i)) + errors.get(i, j)),
        );
    }
    Sample::new(n, d, data).expect("finite responses")
}

fn gaussian_rows(n: usize, k: usize, rng: &mut dyn RngCore) -> Covariates {
    let data = (0..n * k).map(|_| StandardNormal.sample(rng)).collect();
    Covariates { k, data }
}

/// `Y_{ji} = X_i'b_j + ε_{ji}` with `X_i ~ N(0, I_k)` iid and errors
/// independent of the covariates.
#[derive(Debug, Clone)]
pub struct LinearModelIID {
    spec: LinearSpec,
    k: usize,
    copula: CopulaModel,
}

impl LinearModelIID {
    pub fn new(spec: LinearSpec, copula: CopulaModel) -> Result<Self> {
        let k = spec.validate(&copula)?;
        Ok(LinearModelIID { spec, k, copula })
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.spec.coefficients
    }
}

impl MarginalModel for LinearModelIID {
    fn name(&self) -> &'static str {
        "linear_iid"
    }

    fn dim(&self) -> usize {
        self.copula.dim()
    }

    fn copula(&self) -> &CopulaModel {
        &self.copula
    }

    fn error_marginals(&self) -> Vec<Marginal> {
        self.spec.marginals.clone()
    }

    fn simulate(&self, n: usize, rng: &mut dyn RngCore) -> Simulated {
        let covariates = gaussian_rows(n, self.k, rng);
        let errors = draw_errors(&self.copula, &self.spec.marginals, n, rng);
        let responses = responses(&self.spec.coefficients, &covariates, &errors);
        Simulated {
            covariates,
            responses,
            errors,
        }
    }

    fn fit(&self, sim: &Simulated) -> Result<Fit> {
        linear_fit(&self.spec.coefficients, sim, self.spec.oracle)
    }

    fn oracle_fit(&self) -> Fit {
        oracle_fit(&self.spec.coefficients)
    }

    fn draw_covariates(&self, n: usize, rng: &mut dyn RngCore) -> Covariates {
        gaussian_rows(n, self.k, rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixingSpec {
    #[serde(flatten)]
    pub linear: LinearSpec,
    /// Autoregression of each covariate coordinate.
    pub phi_x: f64,
    /// Autoregression of the innovations driving the covariate chain.
    pub phi_eps: f64,
}

impl Default for MixingSpec {
    fn default() -> Self {
        MixingSpec {
            linear: LinearSpec::default(),
            phi_x: 0.5,
            phi_eps: 0.0,
        }
    }
}

/// Linear margins with a strictly stationary, geometrically β-mixing AR(1)
/// covariate chain; errors are iid and independent of all covariates.
#[derive(Debug, Clone)]
pub struct LinearModelMixing {
    spec: MixingSpec,
    k: usize,
    copula: CopulaModel,
}

impl LinearModelMixing {
    pub fn new(spec: MixingSpec, copula: CopulaModel) -> Result<Self> {
        let k = spec.linear.validate(&copula)?;
        for phi in [spec.phi_x, spec.phi_eps] {
            if !(phi.abs() < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "autoregressive parameters need |phi| < 1, got {phi}"
                )));
            }
        }
        Ok(LinearModelMixing { spec, k, copula })
    }

    /// `n` consecutive states of the covariate chain. Each coordinate is
    /// `X_i = φ_X X_{i-1} + sqrt(1-φ_X²) η_i` with unit-variance innovations
    /// `η_i = φ_ε η_{i-1} + sqrt(1-φ_ε²) ζ_i`.
    pub fn covariate_chain(&self, n: usize, rng: &mut dyn RngCore) -> Covariates {
        let k = self.k;
        let (phi, psi) = (self.spec.phi_x, self.spec.phi_eps);
        let (sx, se) = ((1.0 - phi * phi).sqrt(), (1.0 - psi * psi).sqrt());
        let burn = if psi == 0.0 { 0 } else { BURN_IN };
        let mut x: Vec<f64> = (0..k).map(|_| StandardNormal.sample(rng)).collect();
        let mut eta: Vec<f64> = (0..k).map(|_| StandardNormal.sample(rng)).collect();
        let mut data = Vec::with_capacity(n * k);
        for step in 0..burn + n {
            if step > 0 {
                for c in 0..k {
                    let z: f64 = StandardNormal.sample(rng);
                    eta[c] = psi * eta[c] + se * z;
                    x[c] = phi * x[c] + sx * eta[c];
                }
            }
            if step >= burn {
                data.extend_from_slice(&x);
            }
        }
        Covariates { k, data }
    }
}

impl MarginalModel for LinearModelMixing {
    fn name(&self) -> &'static str {
        "linear_mixing"
    }

    fn dim(&self) -> usize {
        self.copula.dim()
    }

    fn copula(&self) -> &CopulaModel {
        &self.copula
    }

    fn error_marginals(&self) -> Vec<Marginal> {
        self.spec.linear.marginals.clone()
    }

    fn simulate(&self, n: usize, rng: &mut dyn RngCore) -> Simulated {
        let covariates = self.covariate_chain(n, rng);
        let errors = draw_errors(&self.copula, &self.spec.linear.marginals, n, rng);
        let responses = responses(&self.spec.linear.coefficients, &covariates, &errors);
        Simulated {
            covariates,
            responses,
            errors,
        }
    }

    fn fit(&self, sim: &Simulated) -> Result<Fit> {
        linear_fit(&self.spec.linear.coefficients, sim, self.spec.linear.oracle)
    }

    fn oracle_fit(&self) -> Fit {
        oracle_fit(&self.spec.linear.coefficients)
    }

    fn draw_covariates(&self, n: usize, rng: &mut dyn RngCore) -> Covariates {
        self.covariate_chain(n, rng)
    }
}

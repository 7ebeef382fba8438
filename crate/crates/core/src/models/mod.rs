//! Data-generating models with covariate effects on the margins, their
//! fitted transforms `t̂_j`, pseudo-observations and the `Z_jn` processes.

pub mod functional;
pub mod linear;
pub mod lss;
pub mod skew_normal;
pub mod zprocess;

use crate::copulas::CopulaModel;
use crate::empirical::{Marginal, Sample};
use crate::error::{Error, Result};
use rand::RngCore;
use serde::{Deserialize, Serialize};

pub use functional::{FunctionalLinearModel, FunctionalSpec};
pub use linear::{LinearModelIID, LinearModelMixing, LinearSpec, MixingSpec};
pub use lss::{LssMarginParams, LssModel, LssSpec};
pub use zprocess::{
    check_z_assumption, smoothing_delta, z_process, z_region, CovariateEffect, ZCheckSettings, ZProcess, ZRateReport,
    ZVariant,
};

/// Covariates of `n` units, one row of `k` numbers each: a vector, a curve
/// sampled on a grid, or a scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariates {
    k: usize,
    data: Vec<f64>,
}

impl Covariates {
    pub fn new(k: usize, data: Vec<f64>) -> Result<Self> {
        if k == 0 || !data.len().is_multiple_of(k) {
            return Err(Error::Usage(format!(
                "covariate buffer of {} values does not split into rows of {k}",
                data.len()
            )));
        }
        Ok(Covariates { k, data })
    }

    pub fn n(&self) -> usize {
        self.data.len() / self.k
    }

    pub fn width(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// One simulated data set.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub covariates: Covariates,
    pub responses: Sample,
    /// `ε_{ji} = t_j(Y_{ji}; X_i)`.
    pub errors: Sample,
}

/// Fitted transform of one margin.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarginFit {
    /// `t̂(y; x) = y - Σ_l w_l x_l`; `truth` holds the weights of `t`.
    Linear { fitted: Vec<f64>, truth: Vec<f64> },
    /// `t̂(y; x) = Ψ((y - α̂(x)) / β̂(x); γ̂)`.
    Lss {
        fitted: LssMarginParams,
        truth: LssMarginParams,
    },
}

impl MarginFit {
    /// `t̂_j(y; x)`.
    pub fn transform(&self, y: f64, x: &[f64]) -> f64 {
        match self {
            MarginFit::Linear { fitted, .. } => y - dot(fitted, x),
            MarginFit::Lss { fitted, .. } => fitted.transform(y, x[0]),
        }
    }

    /// `t_j(y; x)`.
    pub fn true_transform(&self, y: f64, x: &[f64]) -> f64 {
        match self {
            MarginFit::Linear { truth, .. } => y - dot(truth, x),
            MarginFit::Lss { truth, .. } => truth.transform(y, x[0]),
        }
    }

    pub fn is_exact(&self) -> bool {
        match self {
            MarginFit::Linear { fitted, truth } => fitted == truth,
            MarginFit::Lss { fitted, truth } => fitted == truth,
        }
    }
}

/// Fitted transforms for all margins plus model-specific diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fit {
    pub margins: Vec<MarginFit>,
    /// Set when `t̂ = t` was imposed rather than estimated.
    pub forced_oracle: bool,
    /// Estimation error of the slope, e.g. `‖b̂_j - b_j‖`, per margin.
    pub estimation_error: Vec<f64>,
}

/// Residuals `ε̂_{ji}` aligned with the true errors `ε_{ji}`.
#[derive(Debug, Clone)]
pub struct PseudoObsSet {
    pub residuals: Sample,
    pub errors: Sample,
}

/// `ε̂_{ji} = t̂_j(Y_{ji}; X_i)`; returns the true errors verbatim when the
/// fit is a forced oracle.
pub fn pseudo_observations(fit: &Fit, sim: &Simulated) -> Result<PseudoObsSet> {
    let (n, d) = (sim.responses.n(), sim.responses.dim());
    if fit.margins.len() != d || sim.covariates.n() != n {
        return Err(Error::Usage("fit, covariates and responses disagree in shape".into()));
    }
    let residuals = if fit.forced_oracle {
        sim.errors.clone()
    } else {
        let mut data = Vec::with_capacity(n * d);
        for i in 0..n {
            let x = sim.covariates.row(i);
            data.extend(
                fit.margins
                    .iter()
                    .enumerate()
                    .map(|(j, m)| m.transform(sim.responses.get(i, j), x)),
            );
        }
        Sample::new(n, d, data)?
    };
    Ok(PseudoObsSet {
        residuals,
        errors: sim.errors.clone(),
    })
}

/// A data-generating pipeline with covariate effects on the margins.
pub trait MarginalModel: Send + Sync {
    fn name(&self) -> &'static str;
    fn dim(&self) -> usize;
    fn copula(&self) -> &CopulaModel;
    /// Laws `F_{jε}` of the true errors.
    fn error_marginals(&self) -> Vec<Marginal>;
    fn simulate(&self, n: usize, rng: &mut dyn RngCore) -> Simulated;
    /// Estimates `t̂_j` from a simulated data set.
    fn fit(&self, sim: &Simulated) -> Result<Fit>;
    /// `t̂_j = t_j` for every margin.
    fn oracle_fit(&self) -> Fit;
    /// Independent covariates from the stationary law, for `E_X`.
    fn draw_covariates(&self, n: usize, rng: &mut dyn RngCore) -> Covariates;
}

/// Serializable description of a model; the copula is configured separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    LinearIid(LinearSpec),
    LinearMixing(MixingSpec),
    Functional(FunctionalSpec),
    Lss(LssSpec),
}

impl ModelSpec {
    pub fn build(&self, copula: CopulaModel) -> Result<Box<dyn MarginalModel>> {
        Ok(match self {
            ModelSpec::LinearIid(s) => Box::new(LinearModelIID::new(s.clone(), copula)?),
            ModelSpec::LinearMixing(s) => Box::new(LinearModelMixing::new(s.clone(), copula)?),
            ModelSpec::Functional(s) => Box::new(FunctionalLinearModel::new(s.clone(), copula)?),
            ModelSpec::Lss(s) => Box::new(LssModel::new(s.clone(), copula)?),
        })
    }
}

/// Draws the error sample: copula draws pushed through `F_{jε}^{-1}`.
pub(crate) fn draw_errors(copula: &CopulaModel, marginals: &[Marginal], n: usize, rng: &mut dyn RngCore) -> Sample {
    copula.sample(n, rng).map(|j, u| marginals[j].quantile(u))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn check_marginals(marginals: &[Marginal], d: usize) -> Result<()> {
    if marginals.len() != d {
        return Err(Error::InvalidParameter(format!(
            "{} error marginals for d = {d}",
            marginals.len()
        )));
    }
    for m in marginals {
        m.validate()?;
        if !m.is_continuous() {
            return Err(Error::InvalidParameter("error marginals must be continuous".into()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copulas::Family;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn oracle_pseudo_observations_are_the_errors() {
        let c = CopulaModel::new(Family::Clayton { theta: 2.0 }, 2).unwrap();
        let model = LinearModelIID::new(LinearSpec::default(), c).unwrap();
        let sim = model.simulate(50, &mut ChaCha8Rng::seed_from_u64(3));
        let p = pseudo_observations(&model.oracle_fit(), &sim).unwrap();
        assert_eq!(p.residuals, sim.errors);
        for (a, b) in p.residuals.data().iter().zip(sim.errors.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = ModelSpec::LinearMixing(MixingSpec::default());
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<ModelSpec>(&text).unwrap(), spec);
        let parsed: ModelSpec = serde_json::from_str(r#"{"kind": "linear_iid"}"#).unwrap();
        assert_eq!(parsed, ModelSpec::LinearIid(LinearSpec::default()));
    }
}

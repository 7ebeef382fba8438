//! Scalar-on-function regression `Y_j = ⟨X, b_j⟩ + ε_j` with curves drawn
//! from a cosine expansion and slopes fitted by truncated-basis ridge.

use super::{check_marginals, draw_errors, Covariates, Fit, MarginFit, MarginalModel, Simulated};
use crate::copulas::CopulaModel;
use crate::empirical::{Marginal, Sample};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FunctionalSpec {
    /// Number of cosine basis functions in the covariate expansion.
    pub basis_size: usize,
    /// Equispaced quadrature points on `[0,1]`, endpoints included.
    pub grid_points: usize,
    /// Basis coefficients of each true slope `b_j`; missing entries are zero.
    pub coefficients: Vec<Vec<f64>>,
    pub marginals: Vec<Marginal>,
    pub oracle: bool,
}

impl Default for FunctionalSpec {
    fn default() -> Self {
        let k = 20;
        let b1 = (1..=k).map(|k| 1.0 / (k * k) as f64).collect();
        let b2 = (1..=k)
            .map(|k| if k % 2 == 0 { 0.8 } else { -0.8 } / (k * k) as f64)
            .collect();
        FunctionalSpec {
            basis_size: k,
            grid_points: 128,
            coefficients: vec![b1, b2],
            marginals: vec![Marginal::standard_normal(); 2],
            oracle: false,
        }
    }
}

/// `√2 cos(kπt)`, orthonormal on `[0,1]` for `k >= 1`.
pub fn cosine_basis(k: usize, t: f64) -> f64 {
    SQRT_2 * (k as f64 * PI * t).cos()
}

/// Truncation level `⌈n^{1/5}⌉`.
pub fn truncation(n: usize) -> usize {
    ((n as f64).powf(0.2).ceil() as usize).max(1)
}

/// Ridge penalty `n^{-3/5}`.
pub fn ridge_penalty(n: usize) -> f64 {
    (n as f64).powf(-0.6)
}

#[derive(Debug, Clone)]
pub struct FunctionalLinearModel {
    spec: FunctionalSpec,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `basis[(k - 1) * p + l] = φ_k(t_l)`.
    basis: Vec<f64>,
    /// True slopes as quadrature weights on the curve values.
    truth: Vec<Vec<f64>>,
    copula: CopulaModel,
}

impl FunctionalLinearModel {
    pub fn new(spec: FunctionalSpec, copula: CopulaModel) -> Result<Self> {
        let d = copula.dim();
        if spec.basis_size == 0 || spec.grid_points < 3 {
            return Err(Error::InvalidParameter(
                "functional model needs basis_size >= 1 and grid_points >= 3".into(),
            ));
        }
        if spec.coefficients.len() != d {
            return Err(Error::InvalidParameter(format!(
                "{} slope functions for d = {d}",
                spec.coefficients.len()
            )));
        }
        if spec
            .coefficients
            .iter()
            .any(|b| b.len() > spec.basis_size || b.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::InvalidParameter(
                "slope coefficients must be finite and at most basis_size long".into(),
            ));
        }
        check_marginals(&spec.marginals, d)?;
        let p = spec.grid_points;
        let h = 1.0 / (p - 1) as f64;
        let nodes: Vec<f64> = (0..p).map(|l| l as f64 * h).collect();
        let weights: Vec<f64> = (0..p).map(|l| if l == 0 || l == p - 1 { 0.5 * h } else { h }).collect();
        let basis = (1..=spec.basis_size)
            .flat_map(|k| nodes.iter().map(move |&t| cosine_basis(k, t)))
            .collect();
        let mut model = FunctionalLinearModel {
            spec,
            nodes,
            weights,
            basis,
            truth: Vec::new(),
            copula,
        };
        model.truth = model.spec.coefficients.iter().map(|c| model.slope_weights(c)).collect();
        Ok(model)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    fn phi(&self, k: usize) -> &[f64] {
        let p = self.nodes.len();
        &self.basis[(k - 1) * p..k * p]
    }

    /// Quadrature weights `w_l b(t_l)` of the slope with basis coefficients `c`,
    /// so that `⟨x, b⟩ = Σ_l w_l b(t_l) x(t_l)`.
    pub fn slope_weights(&self, c: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nodes.len()];
        for (k, &ck) in c.iter().enumerate() {
            for ((o, w), phi) in out.iter_mut().zip(&self.weights).zip(self.phi(k + 1)) {
                *o += ck * w * phi;
            }
        }
        out
    }

    /// Trapezoid inner product of two curves sampled on the grid.
    pub fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        self.weights.iter().zip(x).zip(y).map(|((w, a), b)| w * a * b).sum()
    }

    /// Curve values of `Σ_k c_k φ_k`.
    pub fn curve(&self, c: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nodes.len()];
        for (k, &ck) in c.iter().enumerate() {
            for (o, phi) in out.iter_mut().zip(self.phi(k + 1)) {
                *o += ck * phi;
            }
        }
        out
    }

    fn curves(&self, n: usize, rng: &mut dyn RngCore) -> Covariates {
        let p = self.nodes.len();
        let mut data = Vec::with_capacity(n * p);
        let mut scores = vec![0.0; self.spec.basis_size];
        for _ in 0..n {
            for (k, s) in scores.iter_mut().enumerate() {
                let z: f64 = StandardNormal.sample(rng);
                *s = z / (k + 1) as f64;
            }
            data.extend(self.curve(&scores));
        }
        Covariates { k: p, data }
    }

    /// Ridge fit of the first `⌈n^{1/5}⌉` basis coefficients; returns the
    /// coefficient vector padded to `basis_size`.
    pub fn ridge(&self, x: &Covariates, y: &[f64]) -> Result<Vec<f64>> {
        let n = x.n();
        let kn = truncation(n).min(self.spec.basis_size);
        if n <= kn {
            return Err(Error::Usage(format!("ridge fit needs n > {kn}, got {n}")));
        }
        let scores = DMatrix::from_fn(n, kn, |i, k| self.inner(x.row(i), self.phi(k + 1)));
        let lambda = ridge_penalty(n);
        let gram = scores.transpose() * &scores / n as f64 + DMatrix::identity(kn, kn) * lambda;
        let rhs = scores.transpose() * DVector::from_column_slice(y) / n as f64;
        let chol = gram.cholesky().ok_or(Error::SingularDesign {
            condition: f64::INFINITY,
        })?;
        let mut c: Vec<f64> = chol.solve(&rhs).iter().copied().collect();
        c.resize(self.spec.basis_size, 0.0);
        Ok(c)
    }

    fn oracle(&self) -> Fit {
        Fit {
            margins: self
                .truth
                .iter()
                .map(|w| MarginFit::Linear {
                    fitted: w.clone(),
                    truth: w.clone(),
                })
                .collect(),
            forced_oracle: true,
            estimation_error: vec![0.0; self.truth.len()],
        }
    }
}

impl MarginalModel for FunctionalLinearModel {
    fn name(&self) -> &'static str {
        "functional"
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
        let covariates = self.curves(n, rng);
        let errors = draw_errors(&self.copula, &self.spec.marginals, n, rng);
        let d = self.dim();
        let mut data = Vec::with_capacity(n * d);
        for i in 0..n {
            let x = covariates.row(i);
            data.extend(
                self.truth
                    .iter()
                    .enumerate()
                    .map(|(j, w)| super::dot(w, x) + errors.get(i, j)),
            );
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
        let mut margins = Vec::new();
        let mut estimation_error = Vec::new();
        for (j, truth) in self.spec.coefficients.iter().enumerate() {
            let c = self.ridge(&sim.covariates, &sim.responses.column(j))?;
            let err = c
                .iter()
                .enumerate()
                .map(|(k, ck)| (ck - truth.get(k).copied().unwrap_or(0.0)).powi(2))
                .sum::<f64>()
                .sqrt();
            estimation_error.push(err);
            margins.push(MarginFit::Linear {
                fitted: self.slope_weights(&c),
                truth: self.truth[j].clone(),
            });
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
        self.curves(n, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copulas::Family;
    use crate::stats::rate_slope;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> FunctionalLinearModel {
        let c = CopulaModel::new(Family::Clayton { theta: 2.0 }, 2).unwrap();
        FunctionalLinearModel::new(FunctionalSpec::default(), c).unwrap()
    }

    #[test]
    fn quadrature_matches_coefficient_inner_product() {
        let m = model();
        let a: Vec<f64> = (1..=20).map(|k| (k as f64).sin()).collect();
        let b: Vec<f64> = (1..=20).map(|k| 1.0 / k as f64).collect();
        let exact: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((m.inner(&m.curve(&a), &m.curve(&b)) - exact).abs() < 1e-8);
        let w = m.slope_weights(&b);
        assert!((crate::models::dot(&w, &m.curve(&a)) - exact).abs() < 1e-8);
    }

    #[test]
    fn signal_variance_matches_score_expansion() {
        let m = model();
        let x = m.curves(10_000, &mut ChaCha8Rng::seed_from_u64(4));
        for (j, c) in m.spec.coefficients.iter().enumerate() {
            let s: Vec<f64> = (0..x.n()).map(|i| crate::models::dot(&m.truth[j], x.row(i))).collect();
            let mean = s.iter().sum::<f64>() / s.len() as f64;
            let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (s.len() - 1) as f64;
            let want: f64 = c
                .iter()
                .enumerate()
                .map(|(k, b)| b * b / ((k + 1) * (k + 1)) as f64)
                .sum();
            assert!((var / want - 1.0).abs() < 0.05, "margin {j}: {var} vs {want}");
        }
    }

    #[test]
    fn tuning_sequences() {
        assert_eq!(truncation(500), 4);
        assert_eq!(truncation(8000), 7);
        assert!((ridge_penalty(1000) - 1e-1f64.powf(1.8)).abs() < 1e-15);
    }

    #[test]
    fn slope_error_rate() {
        let m = model();
        let mut points = Vec::new();
        for (s, &n) in [500usize, 2000, 8000].iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(40 + s as u64);
            let reps = 40;
            let mean: f64 = (0..reps)
                .map(|_| m.fit(&m.simulate(n, &mut rng)).unwrap().estimation_error[0])
                .sum::<f64>()
                / reps as f64;
            points.push((n as f64, mean));
        }
        // Variance of the K_n retained scores dominates: roughly n^{-1/5}.
        assert!(points[2].1 < points[0].1, "{points:?}");
        let slope = rate_slope(&points).unwrap().value().unwrap();
        assert!(slope > -0.5 && slope < -0.1, "slope {slope} {points:?}");
    }
}

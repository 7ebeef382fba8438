//! Seeded Monte Carlo runs of simulate → fit → estimate, the `A_n`/`B_n`
//! processes, and rate checks of the oracle-equivalence statistics.

use crate::copulas::CopulaModel;
use crate::empirical::{empirical_copula, g_process, oracle_copula, SmoothedMarginal};
use crate::error::{Error, Result};
use crate::grid::{shrink_region, Grid, GridFunction, Region};
use crate::models::{pseudo_observations, smoothing_delta, z_process, Fit, MarginalModel, PseudoObsSet, Simulated};
use crate::stats::{lower_quantile, median, rate_slope};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Largest tolerated share of failed fits.
pub const MAX_FAILURE_RATE: f64 = 0.02;
/// Largest log-log slope of the medians that counts as a decrease.
pub const MAX_SLOPE: f64 = -0.1;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of replication `r` at sample size `n`:
/// `splitmix64(splitmix64(splitmix64(master) ^ n) ^ r)`.
pub fn child_seed(master: u64, n: usize, r: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ n as u64) ^ r as u64)
}

/// Statistic that decides the equivalence verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    /// `√n sup_{J_n(ε)} |Ĉ_n - C_n^(or)|`.
    SupFull,
    /// `√n sup_{Ĩ_n(ε)} |Ĉ_n - C_n^(or)|`.
    SupRestricted,
    /// `sup_{J_n(ε)} |√n(Ĝ_nε̂ - C) - A_n - B_n|`.
    ReprError,
}

impl Statistic {
    pub fn name(&self) -> &'static str {
        match self {
            Statistic::SupFull => "sup_full",
            Statistic::SupRestricted => "sup_restricted",
            Statistic::ReprError => "repr_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_sequence: Vec<usize>,
    pub replications: usize,
    /// Points per axis of the shared lattice.
    pub grid_m: usize,
    pub eps: f64,
    /// Exponent of the restricted region `Ĩ_n(ε)`.
    pub vartheta: f64,
    pub seed: u64,
    /// Statistic whose medians decide the verdict.
    pub statistic: Statistic,
    /// Also build `A_n`, `B_n` and check the representation.
    pub representation: bool,
    /// Fresh covariates per replication for `E_X` in `ℤ_jn`.
    pub covariate_draws: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_sequence: vec![200, 800, 3200],
            replications: 200,
            grid_m: 101,
            eps: 1.0,
            vartheta: 1.0,
            seed: 20240601,
            statistic: Statistic::SupFull,
            representation: false,
            covariate_draws: 10_000,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sequence.len() < 3 {
            return Err(Error::Usage(format!(
                "n_sequence needs at least 3 sizes to fit a slope, got {}",
                self.n_sequence.len()
            )));
        }
        if self.n_sequence.windows(2).any(|w| w[0] >= w[1]) || self.n_sequence[0] < 2 {
            return Err(Error::Usage(
                "n_sequence must be strictly increasing with n >= 2".into(),
            ));
        }
        if self.replications < 2 {
            return Err(Error::Usage(format!(
                "need at least 2 replications, got {}",
                self.replications
            )));
        }
        if self.covariate_draws == 0 {
            return Err(Error::Usage("covariate_draws must be positive".into()));
        }
        shrink_region(self.eps, self.n_sequence[0], 1.0)?;
        shrink_region(self.eps, self.n_sequence[0], self.vartheta)?;
        Ok(())
    }
}

/// One statistic of one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub n: usize,
    pub replication: usize,
    pub seed: u64,
    pub statistic: Statistic,
    pub value: f64,
    /// The fit failed; `value` is NaN and excluded from aggregates.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub n: usize,
    pub statistic: Statistic,
    pub median: f64,
    pub q90: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub statistic: Statistic,
    pub medians: Vec<f64>,
    pub slope: Option<f64>,
    pub decreasing: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub records: Vec<Record>,
    pub aggregates: Vec<Aggregate>,
    pub verdicts: Vec<Verdict>,
    pub failed_fits: usize,
    pub total_fits: usize,
    pub passed: bool,
}

impl ExperimentReport {
    pub fn verdict(&self, statistic: Statistic) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.statistic == statistic)
    }

    /// One row per `(n, replication, statistic)`.
    pub fn write_records_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        writeln!(file, "# schema=1")?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["n", "replication", "seed", "statistic", "value", "flagged"])?;
        for r in &self.records {
            w.write_record([
                r.n.to_string(),
                r.replication.to_string(),
                r.seed.to_string(),
                r.statistic.name().to_string(),
                r.value.to_string(),
                u8::from(r.flagged).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Aggregates and verdicts from records; usable on records read back from disk.
pub fn summarize(records: Vec<Record>, n_sequence: &[usize], decisive: &[Statistic]) -> Result<ExperimentReport> {
    let mut aggregates = Vec::new();
    let mut verdicts = Vec::new();
    let mut stats: Vec<Statistic> = Vec::new();
    for r in &records {
        if !stats.contains(&r.statistic) {
            stats.push(r.statistic);
        }
    }
    for &s in &stats {
        let mut medians = Vec::new();
        for &n in n_sequence {
            let values: Vec<f64> = records
                .iter()
                .filter(|r| r.n == n && r.statistic == s && !r.flagged)
                .map(|r| r.value)
                .collect();
            let med = median(&values).unwrap_or(f64::NAN);
            aggregates.push(Aggregate {
                n,
                statistic: s,
                median: med,
                q90: lower_quantile(&values, 0.9).unwrap_or(f64::NAN),
                count: values.len(),
            });
            medians.push(med);
        }
        let points: Vec<(f64, f64)> = n_sequence
            .iter()
            .map(|&n| n as f64)
            .zip(medians.iter().copied())
            .collect();
        let slope = rate_slope(&points)?.value();
        let all_zero = medians.iter().all(|&m| m == 0.0);
        let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
        let passed = all_zero
            || match s {
                Statistic::ReprError => decreasing,
                _ => decreasing && slope.is_some_and(|v| v <= MAX_SLOPE),
            };
        verdicts.push(Verdict {
            statistic: s,
            medians,
            slope,
            decreasing,
            passed,
        });
    }
    let per_stat = stats.len().max(1);
    let total_fits = records.len() / per_stat;
    let failed_fits = records.iter().filter(|r| r.flagged).count() / per_stat;
    let failure_ok = (failed_fits as f64) <= MAX_FAILURE_RATE * total_fits as f64;
    let passed = failure_ok
        && decisive
            .iter()
            .all(|s| verdicts.iter().find(|v| v.statistic == *s).is_some_and(|v| v.passed));
    Ok(ExperimentReport {
        records,
        aggregates,
        verdicts,
        failed_fits,
        total_fits,
        passed,
    })
}

/// The artifacts of one simulate + fit replication.
#[derive(Debug, Clone)]
pub struct Replication {
    pub n: usize,
    pub sim: Simulated,
    pub fit: Fit,
    pub pseudo: PseudoObsSet,
}

impl Replication {
    pub fn run(model: &dyn MarginalModel, n: usize, rng: &mut dyn RngCore) -> Result<Self> {
        let sim = model.simulate(n, rng);
        let fit = model.fit(&sim)?;
        let pseudo = pseudo_observations(&fit, &sim)?;
        Ok(Replication { n, sim, fit, pseudo })
    }

    /// `Ĝ_nε̂`: residuals pushed through `F̃_j` with the fit's smoothing weight.
    pub fn g_hat(&self, model: &dyn MarginalModel, grid: &Grid) -> Result<GridFunction> {
        let delta = smoothing_delta(&self.fit, self.n);
        let marginals = model
            .error_marginals()
            .iter()
            .map(|m| SmoothedMarginal::with_delta(m, delta))
            .collect::<Result<Vec<_>>>()?;
        g_process(&self.pseudo.residuals, &marginals, grid)
    }
}

/// `A_n = √n(Ĝ_nε - C)` and `B_n = Σ_j C^{(j)}(u) ℤ_jn(u_j)` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessPair {
    pub a: GridFunction,
    pub b: GridFunction,
}

/// `C` at every node.
pub fn copula_on_grid(c: &CopulaModel, grid: &Grid) -> GridFunction {
    GridFunction::from_fn(*grid, |u| c.cdf_unchecked(u))
}

/// Builds `A_n` from the true errors and `B_n` from `ℤ_jn` estimated with
/// `covariate_draws` fresh covariates.
pub fn build_processes(
    model: &dyn MarginalModel,
    rep: &Replication,
    grid: &Grid,
    covariate_draws: usize,
    rng: &mut dyn RngCore,
) -> Result<ProcessPair> {
    let c = model.copula();
    let d = c.dim();
    let sqrt_n = (rep.n as f64).sqrt();
    let exact = model
        .error_marginals()
        .iter()
        .map(SmoothedMarginal::exact)
        .collect::<Result<Vec<_>>>()?;
    let g = g_process(&rep.pseudo.errors, &exact, grid)?;
    let a = g.combine(sqrt_n, &copula_on_grid(c, grid), -sqrt_n)?;

    let axis = grid.axis();
    let mut z_axes = Vec::with_capacity(d);
    for j in 0..d {
        if rep.fit.forced_oracle && rep.fit.margins[j].is_exact() {
            z_axes.push(vec![0.0; axis.len()]);
            continue;
        }
        let x = model.draw_covariates(covariate_draws, rng);
        z_axes.push(z_process(model, &rep.fit, j, rep.n, x)?.aggregate_on(&axis));
    }
    let mut multi = vec![0usize; d];
    let mut u = vec![0.0; d];
    let values = (0..grid.len())
        .map(|idx| {
            grid.multi_index(idx, &mut multi);
            grid.node(idx, &mut u);
            let mut s = 0.0;
            for j in 0..d {
                s += c.partial_extended(j, &u) * z_axes[j][multi[j]];
            }
            s
        })
        .collect();
    Ok(ProcessPair {
        a,
        b: GridFunction::from_values(*grid, values)?,
    })
}

/// `sup_{region} |√n(Ĝ_nε̂ - C) - A_n - B_n|`.
pub fn check_representation(
    model: &dyn MarginalModel,
    rep: &Replication,
    pair: &ProcessPair,
    region: Region,
) -> Result<f64> {
    let grid = *pair.a.grid();
    let sqrt_n = (rep.n as f64).sqrt();
    let c = copula_on_grid(model.copula(), &grid);
    let lhs = rep.g_hat(model, &grid)?.combine(sqrt_n, &c, -sqrt_n)?;
    let rhs = pair.a.combine(1.0, &pair.b, 1.0)?;
    lhs.sup_diff(&rhs, region)
}

/// Runs every `(n, replication)` and checks that the decisive medians decrease.
pub fn run_equivalence(model: &dyn MarginalModel, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let grid = Grid::new(model.dim(), cfg.grid_m)?;
    let jobs: Vec<(usize, usize)> = cfg
        .n_sequence
        .iter()
        .flat_map(|&n| (0..cfg.replications).map(move |r| (n, r)))
        .collect();
    let per_job: Vec<Result<Vec<Record>>> = jobs
        .par_iter()
        .map(|&(n, r)| replicate(model, cfg, &grid, n, r))
        .collect();
    let mut records = Vec::new();
    for rs in per_job {
        records.extend(rs?);
    }
    let mut decisive = vec![cfg.statistic];
    if cfg.representation && cfg.statistic != Statistic::ReprError {
        decisive.push(Statistic::ReprError);
    }
    summarize(records, &cfg.n_sequence, &decisive)
}

fn replicate(
    model: &dyn MarginalModel,
    cfg: &ExperimentConfig,
    grid: &Grid,
    n: usize,
    r: usize,
) -> Result<Vec<Record>> {
    let seed = child_seed(cfg.seed, n, r);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = vec![Statistic::SupFull, Statistic::SupRestricted];
    if cfg.representation || cfg.statistic == Statistic::ReprError {
        stats.push(Statistic::ReprError);
    }
    let record = |statistic, value, flagged| Record {
        n,
        replication: r,
        seed,
        statistic,
        value,
        flagged,
    };
    let rep = match Replication::run(model, n, &mut rng) {
        Ok(rep) => rep,
        Err(Error::FitFailed(_) | Error::SingularDesign { .. }) => {
            return Ok(stats.into_iter().map(|s| record(s, f64::NAN, true)).collect());
        }
        Err(e) => return Err(e),
    };
    let sqrt_n = (n as f64).sqrt();
    let c_hat = empirical_copula(&rep.pseudo.residuals, grid)?;
    let c_or = oracle_copula(&rep.pseudo.errors, grid)?;
    let full = shrink_region(cfg.eps, n, 1.0)?;
    let restricted = shrink_region(cfg.eps, n, cfg.vartheta)?;
    let mut out = vec![
        record(Statistic::SupFull, sqrt_n * c_hat.sup_diff(&c_or, full)?, false),
        record(
            Statistic::SupRestricted,
            sqrt_n * c_hat.sup_diff(&c_or, restricted)?,
            false,
        ),
    ];
    if stats.contains(&Statistic::ReprError) {
        let pair = build_processes(model, &rep, grid, cfg.covariate_draws, &mut rng)?;
        out.push(record(
            Statistic::ReprError,
            check_representation(model, &rep, &pair, full)?,
            false,
        ));
    }
    Ok(out)
}

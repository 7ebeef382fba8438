//! Run configuration: one JSON document with sections `model`, `copula`,
//! `grid`, `regions`, `rates`, `mc`, `output`, plus the `verify` and
//! `assumptions` suites.

use crate::copulas::{CopulaModel, Family};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::mapping::{RateParams, Shape, UnivariateShape, QUANTILE_LATTICE};
use crate::mc::{ExperimentConfig, Statistic};
use crate::models::{ModelSpec, ZCheckSettings, ZVariant};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CopulaSpec {
    #[serde(flatten)]
    pub family: Family,
    #[serde(default = "two")]
    pub d: usize,
}

fn two() -> usize {
    2
}

impl CopulaSpec {
    pub fn build(&self) -> Result<CopulaModel> {
        CopulaModel::new(self.family, self.d)
    }

    /// Short label such as `clayton-d2`.
    pub fn label(&self) -> String {
        format!("{}-d{}", self.family.name(), self.d)
    }
}

impl Default for CopulaSpec {
    fn default() -> Self {
        CopulaSpec {
            family: Family::Independence,
            d: 2,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// Points per axis; defaults to 101 for `d = 2` and 41 for `d = 3`.
    pub m: Option<usize>,
}

impl GridSpec {
    pub fn build(&self, d: usize) -> Result<Grid> {
        match self.m {
            Some(m) => Grid::new(d, m),
            None => Grid::default_for(d),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionSpec {
    pub eps: f64,
    /// Exponent of `Ĩ_n(ε)`; taken from `rates` when absent, else 1.
    pub vartheta: Option<f64>,
}

impl Default for RegionSpec {
    fn default() -> Self {
        RegionSpec {
            eps: 1.0,
            vartheta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSpec {
    pub n_sequence: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    pub statistic: Statistic,
    pub representation: bool,
    pub covariate_draws: usize,
}

impl Default for McSpec {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        McSpec {
            n_sequence: e.n_sequence,
            replications: e.replications,
            seed: e.seed,
            statistic: e.statistic,
            representation: e.representation,
            covariate_draws: e.covariate_draws,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: PathBuf::from("out"),
        }
    }
}

/// One copula of the verification suite, optionally with its own perturbations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifySuite {
    #[serde(flatten)]
    pub copula: CopulaSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Shape>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_tilde: Option<UnivariateShape>,
}

impl From<CopulaSpec> for VerifySuite {
    fn from(copula: CopulaSpec) -> Self {
        VerifySuite {
            copula,
            h: None,
            h_tilde: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantilePair {
    pub h: UnivariateShape,
    pub h_tilde: UnivariateShape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySpec {
    pub copulas: Vec<VerifySuite>,
    pub t_sequence: Vec<f64>,
    /// Default `h` for suites without their own.
    pub h: Shape,
    /// Default for every component `h̃_j`.
    pub h_tilde: UnivariateShape,
    /// The constant `M` of the weighted class.
    pub bound: f64,
    pub full_cube: bool,
    /// Needs the `rates` section.
    pub shrinking_region: bool,
    pub quantile: Vec<QuantilePair>,
    pub quantile_t_sequence: Vec<f64>,
    pub quantile_lattice: usize,
}

impl Default for VerifySpec {
    fn default() -> Self {
        let sine = UnivariateShape::Sine { amplitude: 0.2 };
        let bump = UnivariateShape::Bump { amplitude: 1.0 };
        let zero = UnivariateShape::Zero;
        VerifySpec {
            copulas: vec![
                CopulaSpec::default().into(),
                VerifySuite {
                    copula: CopulaSpec {
                        family: Family::Clayton { theta: 2.0 },
                        d: 2,
                    },
                    h: Some(Shape::CubicProduct { amplitude: 1.0 }),
                    h_tilde: None,
                },
            ],
            t_sequence: vec![0.2, 0.1, 0.05, 0.025],
            h: Shape::SineProduct { amplitude: 0.1 },
            h_tilde: bump,
            bound: 1.0,
            full_cube: true,
            shrinking_region: true,
            quantile: vec![
                QuantilePair { h: sine, h_tilde: zero },
                QuantilePair { h: zero, h_tilde: bump },
                QuantilePair { h: sine, h_tilde: bump },
            ],
            quantile_t_sequence: vec![0.1, 0.05, 0.025],
            quantile_lattice: QUANTILE_LATTICE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct C2Spec {
    pub beta: f64,
    pub m_values: Vec<usize>,
}

impl Default for C2Spec {
    fn default() -> Self {
        C2Spec {
            beta: 0.5,
            m_values: vec![51, 101, 201],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZSpec {
    pub variant: ZVariant,
    /// Margins to check; all when empty.
    pub margins: Vec<usize>,
    pub n_sequence: Vec<usize>,
    pub replications: usize,
    pub covariate_draws: usize,
    pub m: usize,
}

impl Default for ZSpec {
    fn default() -> Self {
        let s = ZCheckSettings::default();
        ZSpec {
            variant: ZVariant::Z1,
            margins: Vec::new(),
            n_sequence: vec![500, 2000, 8000],
            replications: s.replications,
            covariate_draws: s.covariate_draws,
            m: s.m,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssumptionSpec {
    pub c2: Option<C2Spec>,
    pub z: Option<ZSpec>,
}

/// The whole run configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub model: Option<ModelSpec>,
    pub copula: CopulaSpec,
    pub grid: GridSpec,
    pub regions: RegionSpec,
    pub rates: Option<RateParams>,
    pub mc: McSpec,
    pub output: OutputSpec,
    pub verify: Option<VerifySpec>,
    pub assumptions: Option<AssumptionSpec>,
}

impl Config {
    /// Parses a JSON document; messages end with the line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Config::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn vartheta(&self) -> f64 {
        self.regions
            .vartheta
            .or_else(|| self.rates.map(|r| r.vartheta()))
            .unwrap_or(1.0)
    }

    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let grid = self.grid.build(self.copula.d)?;
        let cfg = ExperimentConfig {
            n_sequence: self.mc.n_sequence.clone(),
            replications: self.mc.replications,
            grid_m: grid.points_per_axis(),
            eps: self.regions.eps,
            vartheta: self.vartheta(),
            seed: self.mc.seed,
            statistic: self.mc.statistic,
            representation: self.mc.representation,
            covariate_draws: self.mc.covariate_draws,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn z_settings(&self, z: &ZSpec) -> ZCheckSettings {
        ZCheckSettings {
            replications: z.replications,
            covariate_draws: z.covariate_draws,
            m: z.m,
            seed: self.mc.seed,
        }
    }
}

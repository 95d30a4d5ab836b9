//! TOML experiment files.
//!
//! ```toml
//! schema_version = 1
//! seed = 7
//!
//! [model]
//! kind = "ephaptic"
//! pattern = "minus_coupling"
//! diffusion = 2.0
//! coupling = 0.5
//!
//! [grid]
//! n_cells = 64
//!
//! [evolution]
//! dt = 1e-3
//! t_end = 1.0
//!
//! [[checks]]
//! id = "subspace_C"
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::certificates::ConstantsBundle;
use crate::error::{Error, Result};
use crate::evolution::{EvolutionConfig, Scheme};
use crate::forms::{BlockVector, FormMatrix};
use crate::linalg::{RMat, C64};
use crate::models::{
    build_constant_coupled, build_damped_wave, build_dynamic_bc_heat, build_ephaptic, perturbed_field,
    CoefficientField, CouplingPattern, Grid1D,
};
use crate::qualitative::{
    in_phase_data, make_projection, mean_zero_data, trial_rng, uniform_data, LatticeOps, ProjectionSpec,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub constants: Option<ConstantsConfig>,
    pub model: Option<ModelConfig>,
    pub grid: Option<GridConfig>,
    pub evolution: Option<EvolutionSection>,
    pub initial: Option<InitialConfig>,
    /// Real `m x m` projection for the strip observables of `simulate`.
    pub projection: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub checks: Vec<CheckConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    pub alpha: Vec<Vec<f64>>,
    pub omega: Option<Vec<Vec<f64>>>,
    pub m_diag: Option<Vec<f64>>,
    pub embedding_norm: Option<f64>,
    #[serde(default)]
    pub diagonal_accretive: bool,
    /// Criterion ids to report; all when absent.
    pub criteria: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Ephaptic {
        /// `minus_coupling`, `plus_coupling`, `uniform` or `perturbed`.
        pattern: Option<String>,
        diffusion: Option<f64>,
        coupling: Option<f64>,
        /// Constant coefficient matrix, instead of a pattern.
        coefficients: Option<Vec<Vec<f64>>>,
        min_violation: Option<f64>,
    },
    DampedWave {
        #[serde(default = "one")]
        alpha_re: f64,
        #[serde(default)]
        alpha_im: f64,
    },
    DynamicBcHeat {},
    ConstantCoupled {
        matrix: Vec<Vec<f64>>,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_cells: usize,
    #[serde(default = "one")]
    pub length: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionSection {
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_scheme() -> Scheme {
    Scheme::ImplicitEuler
}

fn default_record_every() -> usize {
    1
}

fn default_tolerance() -> f64 {
    1e-10
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Random,
    InPhase,
    Zero,
    Constant,
    MeanZero,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub kind: InitialKind,
    pub value: Option<f64>,
}

/// One requested check. Parameters that a check does not use are ignored.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    pub id: String,
    pub projection: Option<Vec<Vec<f64>>>,
    pub alpha_levels: Option<Vec<f64>>,
    /// `C` (strips) or `B` (balls) for `strip_runtime`.
    pub direction: Option<String>,
    pub m0: Option<usize>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub runtime: Option<bool>,
    pub samples: Option<usize>,
    /// Per-space subspaces for `product_subspace`: `mean_zero`, `full` or `random`.
    pub subspaces: Option<Vec<String>>,
    pub alpha: Option<f64>,
    pub omega: Option<f64>,
    pub c: Option<f64>,
    pub m_tilde: Option<f64>,
}

/// Ids accepted in `[[checks]]`.
pub const CHECK_IDS: [&str; 14] = [
    "row_sums",
    "column_sums",
    "subspace_C",
    "subspace_B",
    "strip_runtime",
    "product_subspace",
    "subsystem",
    "realness",
    "positivity",
    "domination",
    "linf",
    "parabola",
    "sector",
    "identification",
];

/// Checks that integrate trajectories and therefore need `[evolution]`.
pub fn is_runtime_check(id: &str) -> bool {
    matches!(id, "strip_runtime" | "positivity" | "domination" | "linf")
}

/// An assembled model together with its coefficient field, when it has one.
pub struct BuiltModel {
    pub form: FormMatrix,
    pub coefficients: Option<CoefficientField>,
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<RMat> {
    let m = rows.len();
    if m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(Error::Config(format!("{what} must be a nonempty square matrix")));
    }
    Ok(RMat::from_fn(m, m, |i, j| rows[i][j]))
}

fn field<T>(value: Option<T>, what: &str) -> Result<T> {
    value.ok_or_else(|| Error::Config(format!("missing field `{what}`")))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        for check in &self.checks {
            if !CHECK_IDS.contains(&check.id.as_str()) {
                return Err(Error::Config(format!(
                    "unknown check id `{}`; expected one of {}",
                    check.id,
                    CHECK_IDS.join(", ")
                )));
            }
        }
        if let Some(e) = &self.evolution {
            e.to_config()?;
        }
        Ok(())
    }

    pub fn seed(&self, cli_seed: Option<u64>) -> u64 {
        cli_seed.or(self.seed).unwrap_or(crate::forms::DEFAULT_SEED)
    }

    pub fn bundle(&self) -> Result<ConstantsBundle> {
        let cc = field(self.constants.as_ref(), "constants")?;
        let alpha = matrix(&cc.alpha, "constants.alpha")?;
        let m = alpha.nrows();
        let omega = match &cc.omega {
            Some(o) => matrix(o, "constants.omega")?,
            None => RMat::zeros(m, m),
        };
        let m_diag = cc.m_diag.clone().unwrap_or_else(|| vec![1.0; m]);
        ConstantsBundle::new(alpha, omega, m_diag, cc.embedding_norm.unwrap_or(1.0))
            .map_err(|e| Error::Config(format!("constants: {e}")))
    }

    pub fn grid(&self) -> Result<Grid1D> {
        let g = field(self.grid.as_ref(), "grid")?;
        Grid1D::new(g.n_cells, g.length)
    }

    pub fn evolution(&self) -> Result<EvolutionConfig> {
        field(self.evolution.as_ref(), "evolution")?.to_config()
    }

    pub fn build_model(&self, seed: u64) -> Result<BuiltModel> {
        let grid = self.grid()?;
        let model = field(self.model.as_ref(), "model")?;
        Ok(match model {
            ModelConfig::Ephaptic { pattern, diffusion, coupling, coefficients, min_violation } => {
                let coeffs = match (pattern.as_deref(), coefficients) {
                    (Some(_), Some(_)) => {
                        return Err(Error::Config("model: give either `pattern` or `coefficients`".into()))
                    }
                    (None, Some(rows)) => {
                        CoefficientField::constant(grid.n_cells(), &matrix(rows, "model.coefficients")?)?
                    }
                    (Some(p), None) => {
                        let d = field(*diffusion, "model.diffusion")?;
                        let b = field(*coupling, "model.coupling")?;
                        match p {
                            "minus_coupling" => CouplingPattern::MinusCoupling { diffusion: d, coupling: b }.field(&grid)?,
                            "plus_coupling" => CouplingPattern::PlusCoupling { diffusion: d, coupling: b }.field(&grid)?,
                            "uniform" => CouplingPattern::Uniform { value: d }.field(&grid)?,
                            "perturbed" => perturbed_field(&grid, d, b, min_violation.unwrap_or(0.5), seed)?,
                            other => {
                                return Err(Error::Config(format!(
                                    "model.pattern `{other}`: expected minus_coupling, plus_coupling, uniform or perturbed"
                                )))
                            }
                        }
                    }
                    (None, None) => return Err(Error::Config("model: ephaptic needs `pattern` or `coefficients`".into())),
                };
                BuiltModel { form: build_ephaptic(&grid, &coeffs)?, coefficients: Some(coeffs) }
            }
            ModelConfig::DampedWave { alpha_re, alpha_im } => BuiltModel {
                form: build_damped_wave(&grid, C64::new(*alpha_re, *alpha_im))?,
                coefficients: None,
            },
            ModelConfig::DynamicBcHeat {} => BuiltModel { form: build_dynamic_bc_heat(&grid)?, coefficients: None },
            ModelConfig::ConstantCoupled { matrix: rows } => {
                let a = matrix(rows, "model.matrix")?;
                BuiltModel {
                    form: build_constant_coupled(&grid, &a)?,
                    coefficients: Some(CoefficientField::constant(grid.n_cells(), &a)?),
                }
            }
        })
    }

    /// Initial data for `simulate`; random kinds draw from `seed`.
    pub fn initial_data(&self, form: &FormMatrix, seed: u64) -> Result<BlockVector> {
        let kind = self.initial.as_ref().map(|i| i.kind).unwrap_or(InitialKind::Random);
        let mut rng = trial_rng(seed, 0);
        Ok(match kind {
            InitialKind::Random => uniform_data(form, &mut rng, -1.0, 1.0),
            InitialKind::InPhase => in_phase_data(form, &mut rng).map_err(|e| Error::Config(format!("initial: {e}")))?,
            InitialKind::Zero => BlockVector::zeros(form),
            InitialKind::Constant => {
                let v = self.initial.as_ref().and_then(|i| i.value).unwrap_or(1.0);
                LatticeOps::map(&BlockVector::zeros(form), |_| v)
            }
            InitialKind::MeanZero => mean_zero_data(form, &mut rng),
        })
    }
}

impl EvolutionSection {
    pub fn to_config(&self) -> Result<EvolutionConfig> {
        EvolutionConfig::new(self.scheme, self.dt, self.t_end, self.record_every, self.tolerance)
    }
}

/// Real projection matrix from a config table.
pub fn projection_from_rows(rows: &[Vec<f64>]) -> Result<ProjectionSpec> {
    let k = matrix(rows, "projection")?;
    make_projection(crate::linalg::complexify(&k)).map_err(|e| Error::Config(format!("projection: {e}")))
}

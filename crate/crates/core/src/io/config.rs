//! JSON run configuration.
//!
//! Every key has a default except the grid and the exponent declaration;
//! unknown keys are rejected. [`RunConfig::echo`] renders the effective
//! configuration in a canonical layout, so a file written in that layout is
//! echoed back byte for byte. Relative paths resolve against the directory of
//! the configuration file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::{canonical_force, ControlProblem, OptimizeOptions};
use crate::error::{Error, Result};
use crate::exponent::ExponentField;
use crate::expr::Expr;
use crate::grid::{Grid, StaggeredField};
use crate::state::{SolverConfig, StateSolver};
use crate::verification::ManufacturedCase;

use super::fields::{read_gridded_exponent, read_velocity_csv};

fn bad<T>(key: &str, constraint: impl Into<String>) -> Result<T> {
    Err(Error::Config {
        key: key.to_string(),
        constraint: constraint.into(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub lx: f64,
    pub ly: f64,
}

impl Default for DomainSpec {
    fn default() -> Self {
        DomainSpec { lx: 1.0, ly: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExponentSpec {
    Constant {
        value: f64,
    },
    Expression {
        expr: String,
        /// Declared bounds; when absent they are measured on a lattice.
        #[serde(default)]
        bounds: Option<[f64; 2]>,
    },
    /// CSV of samples on the node lattice of the closed domain.
    Gridded { path: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HolderSpec {
    pub gamma: f64,
    pub budget: Option<f64>,
}

impl Default for HolderSpec {
    fn default() -> Self {
        HolderSpec {
            gamma: 0.5,
            budget: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSource {
    Zero,
    /// The smooth reference force scaled by `amplitude`.
    Canonical { amplitude: f64 },
    Csv { u_path: String, v_path: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSource {
    /// State generated by the canonical force with `amplitude`.
    CanonicalRecovery { amplitude: f64 },
    Zero,
    Csv { u_path: String, v_path: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlSpec {
    pub target: TargetSource,
    pub reg_nu: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Finite-difference gradient check every this many iterations (0 disables).
    pub check_every: usize,
    pub check_directions: usize,
    pub check_eps: f64,
}

impl Default for ControlSpec {
    fn default() -> Self {
        ControlSpec {
            target: TargetSource::CanonicalRecovery { amplitude: 10.0 },
            reg_nu: 1e-5,
            max_iter: 20,
            grad_tol: 1e-8,
            check_every: 0,
            check_directions: 10,
            check_eps: 1e-5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerificationSpec {
    pub samples: usize,
    pub alpha0: f64,
    pub alpha_inf: f64,
    pub jacobian_samples: usize,
    pub korn_trials: usize,
    pub mms_amplitude: f64,
    pub mms_pressure: f64,
    /// Cells along x1 on each level of the refinement chain.
    pub mms_levels: Vec<usize>,
}

impl Default for VerificationSpec {
    fn default() -> Self {
        VerificationSpec {
            samples: 100_000,
            alpha0: 1.1,
            alpha_inf: 4.0,
            jacobian_samples: 1000,
            korn_trials: 2,
            mms_amplitude: 10.0,
            mms_pressure: 1.0,
            mms_levels: vec![16, 32, 64, 128],
        }
    }
}

fn default_output_dir() -> String {
    "out".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub domain: DomainSpec,
    pub grid: GridSpec,
    pub exponent: ExponentSpec,
    #[serde(default)]
    pub holder: HolderSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "default_force")]
    pub force: FieldSource,
    #[serde(default)]
    pub control: ControlSpec,
    #[serde(default)]
    pub verification: VerificationSpec,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    #[serde(default)]
    pub seed: u64,
    /// Directory relative paths resolve against; not part of the schema.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_force() -> FieldSource {
    FieldSource::Zero
}

/// Reads, parses and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    RunConfig::from_json(&text, &base)
}

impl RunConfig {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            Error::Config {
                key: if key == "." { "<root>".into() } else { key },
                constraint: e.into_inner().to_string(),
            }
        })?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical pretty-printed JSON of the effective configuration.
    pub fn echo(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("configuration serializes");
        s.push('\n');
        s
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn require_file(&self, key: &str, p: &str) -> Result<()> {
        if self.resolve(p).is_file() {
            Ok(())
        } else {
            bad(key, format!("file `{p}` does not exist"))
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |key: &str, v: f64| if v > 0.0 && v.is_finite() { Ok(()) } else { bad(key, "must be finite and > 0") };
        pos("domain.lx", self.domain.lx)?;
        pos("domain.ly", self.domain.ly)?;
        if self.grid.nx < 4 || self.grid.ny < 4 {
            return bad("grid", "nx and ny must be >= 4");
        }
        if let Err(e) = self.grid() {
            return bad("grid", format!("{e}"));
        }
        match &self.exponent {
            ExponentSpec::Constant { value } => {
                if !(*value > 1.0) || !value.is_finite() {
                    return bad("exponent.value", "must be finite and exceed 1 (alpha0 > 1)");
                }
            }
            ExponentSpec::Expression { expr, bounds } => {
                if let Err(e) = Expr::parse(expr) {
                    return bad("exponent.expr", format!("{e}"));
                }
                if let Some([a0, ainf]) = bounds {
                    if !(*a0 > 1.0) {
                        return bad("exponent.bounds", "alpha0 must exceed 1 (alpha0 > 1)");
                    }
                    if !(ainf >= a0 && ainf.is_finite()) {
                        return bad("exponent.bounds", "alpha_inf must be finite and >= alpha0");
                    }
                }
            }
            ExponentSpec::Gridded { path } => self.require_file("exponent.path", path)?,
        }
        if !(self.holder.gamma > 0.0 && self.holder.gamma < 1.0) {
            return bad("holder.gamma", "must lie in (0, 1)");
        }
        if let Some(b) = self.holder.budget {
            pos("holder.budget", b)?;
        }
        self.solver.validate().map_err(|e| match e {
            Error::Config { key, constraint } => Error::Config {
                key: format!("solver.{key}"),
                constraint,
            },
            other => other,
        })?;
        match &self.force {
            FieldSource::Canonical { amplitude } if !amplitude.is_finite() => {
                return bad("force.amplitude", "must be finite")
            }
            FieldSource::Csv { u_path, v_path } => {
                self.require_file("force.u_path", u_path)?;
                self.require_file("force.v_path", v_path)?;
            }
            _ => {}
        }
        let c = &self.control;
        match &c.target {
            TargetSource::CanonicalRecovery { amplitude } if !amplitude.is_finite() => {
                return bad("control.target.amplitude", "must be finite")
            }
            TargetSource::Csv { u_path, v_path } => {
                self.require_file("control.target.u_path", u_path)?;
                self.require_file("control.target.v_path", v_path)?;
            }
            _ => {}
        }
        pos("control.reg_nu", c.reg_nu)?;
        if c.max_iter == 0 {
            return bad("control.max_iter", "must be >= 1");
        }
        if !(c.grad_tol >= 0.0) {
            return bad("control.grad_tol", "must be >= 0");
        }
        if c.check_every > 0 && c.check_directions == 0 {
            return bad("control.check_directions", "must be >= 1 when checks are enabled");
        }
        pos("control.check_eps", c.check_eps)?;
        let v = &self.verification;
        if v.samples == 0 {
            return bad("verification.samples", "must be >= 1");
        }
        if v.jacobian_samples == 0 {
            return bad("verification.jacobian_samples", "must be >= 1");
        }
        if v.korn_trials == 0 {
            return bad("verification.korn_trials", "must be >= 1");
        }
        if !(v.alpha0 > 1.0) {
            return bad("verification.alpha0", "must exceed 1 (alpha0 > 1)");
        }
        if !(v.alpha_inf >= v.alpha0 && v.alpha_inf.is_finite()) {
            return bad("verification.alpha_inf", "must be finite and >= alpha0");
        }
        if !v.mms_amplitude.is_finite() || !v.mms_pressure.is_finite() {
            return bad("verification.mms_amplitude", "amplitudes must be finite");
        }
        if v.mms_levels.len() < 3 {
            return bad("verification.mms_levels", "needs at least 3 levels");
        }
        for w in v.mms_levels.windows(2) {
            if w[1] != 2 * w[0] {
                return bad("verification.mms_levels", "each level must double the previous one");
            }
        }
        if let Err(e) = self.mms_grids() {
            return bad("verification.mms_levels", format!("{e}"));
        }
        if self.output_dir.is_empty() {
            return bad("output_dir", "must not be empty");
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.domain.lx, self.domain.ly, self.grid.nx, self.grid.ny)
    }

    pub fn exponent_field(&self) -> Result<ExponentField> {
        let (lx, ly) = (self.domain.lx, self.domain.ly);
        let field = match &self.exponent {
            ExponentSpec::Constant { value } => ExponentField::constant(*value, lx, ly)?,
            ExponentSpec::Expression { expr, bounds } => {
                ExponentField::expression(Expr::parse(expr)?, lx, ly, bounds.map(|[a, b]| (a, b)))?
            }
            ExponentSpec::Gridded { path } => ExponentField::gridded(read_gridded_exponent(&self.resolve(path))?, lx, ly)?,
        };
        field.with_holder(self.holder.gamma, self.holder.budget)
    }

    fn velocity_source(&self, g: &Grid, u_path: &str, v_path: &str) -> Result<StaggeredField> {
        let y = read_velocity_csv(&self.resolve(u_path), &self.resolve(v_path), g)?;
        if !y.is_dirichlet(g) {
            return Err(Error::Invariant("boundary-normal faces of a loaded field must be zero".into()));
        }
        Ok(y)
    }

    pub fn force(&self, g: &Grid) -> Result<StaggeredField> {
        match &self.force {
            FieldSource::Zero => Ok(StaggeredField::zeros(g)),
            FieldSource::Canonical { amplitude } => Ok(canonical_force(g, *amplitude)),
            FieldSource::Csv { u_path, v_path } => self.velocity_source(g, u_path, v_path),
        }
    }

    /// Target state of the control problem.
    pub fn target(&self, solver: &StateSolver) -> Result<StaggeredField> {
        let g = solver.grid();
        match &self.control.target {
            TargetSource::Zero => Ok(StaggeredField::zeros(g)),
            TargetSource::CanonicalRecovery { amplitude } => Ok(solver.solve(&canonical_force(g, *amplitude))?.y),
            TargetSource::Csv { u_path, v_path } => self.velocity_source(g, u_path, v_path),
        }
    }

    pub fn control_problem(&self) -> Result<ControlProblem> {
        let g = self.grid()?;
        let field = self.exponent_field()?;
        let solver = StateSolver::new(&g, &field, &self.solver)?;
        let y_d = self.target(&solver)?;
        ControlProblem::new(y_d, self.control.reg_nu, &field, &g, &self.solver)
    }

    pub fn optimize_options(&self) -> OptimizeOptions {
        OptimizeOptions {
            max_iter: self.control.max_iter,
            grad_tol: self.control.grad_tol,
            check_every: self.control.check_every,
            check_directions: self.control.check_directions,
            check_eps: self.control.check_eps,
        }
    }

    pub fn mms_grids(&self) -> Result<Vec<Grid>> {
        let ratio = self.domain.ly / self.domain.lx;
        self.verification
            .mms_levels
            .iter()
            .map(|&nx| {
                let ny = (nx as f64 * ratio).round() as usize;
                Grid::new(self.domain.lx, self.domain.ly, nx, ny)
            })
            .collect()
    }

    pub fn mms_case(&self) -> Result<ManufacturedCase> {
        Ok(ManufacturedCase::quartic(
            self.verification.mms_amplitude,
            self.verification.mms_pressure,
            self.exponent_field()?,
        ))
    }
}

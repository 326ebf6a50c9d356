//! Nonlinear state solver for the steady generalized Navier-Stokes system
//!
//! ```text
//! -div S(Dy) + y·∇y + ∇p = u,   div y = 0,   y = 0 on the boundary
//! ```
//!
//! by lagged-coefficient (Picard) iteration or Newton's method on the discrete
//! residual. Unknowns live on interior faces; each iteration solves an Oseen
//! saddle-point system through [`SaddleSolver`].

mod stress;

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sprs::{CsMat, TriMat};

use crate::error::{Error, Result};
use crate::exponent::ExponentField;
use crate::grid::{CellField, Grid, PressureField, StaggeredField, SymTensorField};
use crate::linalg::{SaddleSolver, SparseLu};
use crate::ops::{spmv, spmv_t, Operators};
use crate::poincare::{estimate_poincare_korn, restrict_cols, weighted_normal};

pub use stress::{StressMap, Viscosity, NU_FLOOR};

/// Trials used for the energy-bound constants.
const KORN_TRIALS: usize = 2;
const MIN_RELAXATION: f64 = 1.0 / 64.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linearization {
    Picard,
    Newton,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Stop when `‖y^{k+1} - y^k‖₁,₂` and the relative momentum residual fall below this.
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    /// Relative residual of every saddle-point solve.
    pub linear_tol: f64,
    /// Initial relaxation factor, halved whenever the residual grows.
    pub under_relaxation: f64,
    pub smallness_q: f64,
    /// `‖u‖_q` above which the smallness warning is raised.
    pub smallness_threshold: f64,
    pub linearization: Linearization,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            picard_tol: 1e-9,
            picard_max_iter: 200,
            linear_tol: 1e-11,
            under_relaxation: 1.0,
            smallness_q: 4.0,
            smallness_threshold: 50.0,
            linearization: Linearization::Picard,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, constraint: &str| {
            Err(Error::Config {
                key: key.to_string(),
                constraint: constraint.to_string(),
            })
        };
        if !(self.picard_tol > 0.0) {
            return bad("picard_tol", "must be > 0");
        }
        if !(self.linear_tol > 0.0) {
            return bad("linear_tol", "must be > 0");
        }
        if self.picard_max_iter == 0 {
            return bad("picard_max_iter", "must be >= 1");
        }
        if !(self.under_relaxation > 0.0 && self.under_relaxation <= 1.0) {
            return bad("under_relaxation", "must lie in (0, 1]");
        }
        if !(self.smallness_q > 2.0) {
            return bad("smallness_q", "must be > 2");
        }
        if !(self.smallness_threshold > 0.0) {
            return bad("smallness_threshold", "must be > 0");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct StateSolution {
    pub y: StaggeredField,
    pub p: PressureField,
    /// `‖momentum residual‖₂ / max(1, ‖u‖₂)` at the returned iterate.
    pub residual_norm: f64,
    pub iterations: usize,
    /// `‖Dy‖₂`.
    pub energy_lhs: f64,
    /// `C8_hat · ‖u‖₂`.
    pub energy_rhs_bound: f64,
    pub smallness_warning: bool,
    pub residual_history: Vec<f64>,
    /// `‖y^{k+1} - y^k‖₁,₂` per iteration.
    pub step_history: Vec<f64>,
    pub max_divergence: f64,
    pub clamp_events: usize,
    pub c1_hat: f64,
    pub c2_hat: f64,
    pub coercivity: f64,
    pub c8_hat: f64,
    pub u_lq_norm: f64,
    /// `1 - 2/q`, the Hölder exponent paired with the smallness norm.
    pub gamma0: f64,
}

/// Reusable solver for one grid, exponent field and configuration.
pub struct StateSolver {
    grid: Grid,
    field: ExponentField,
    cfg: SolverConfig,
    ops: Operators,
    stress: StressMap,
    dofs: Vec<usize>,
    /// Symmetric gradient restricted to interior columns.
    g_int: CsMat<f64>,
    g_int_t: CsMat<f64>,
    /// Divergence restricted to interior columns.
    b_int: CsMat<f64>,
    /// Interior index of every face, `usize::MAX` on the boundary.
    dof_of: Vec<usize>,
    symbolic: OnceLock<(Vec<usize>, Vec<usize>, faer::sparse::linalg::solvers::SymbolicLu<usize>)>,
    korn: OnceLock<(f64, f64)>,
}

struct Run {
    y: Vec<f64>,
    p: Vec<f64>,
    iterations: usize,
    warning: bool,
    residual_history: Vec<f64>,
    step_history: Vec<f64>,
    converged: bool,
}

/// Factorised linear system at one state.
struct Linear {
    a: CsMat<f64>,
    lu: SparseLu,
    pressure_scale: Vec<f64>,
}

impl StateSolver {
    pub fn new(g: &Grid, field: &ExponentField, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let (lx, ly) = field.extents();
        if (lx - g.lx).abs() > 1e-12 * g.lx || (ly - g.ly).abs() > 1e-12 * g.ly {
            return Err(Error::InvalidArgument(format!(
                "exponent field is defined on {lx} x {ly} but the grid covers {} x {}",
                g.lx, g.ly
            )));
        }
        let ops = Operators::new(g);
        let dofs = g.interior_faces();
        let mut dof_of = vec![usize::MAX; g.n_vel()];
        for (k, &d) in dofs.iter().enumerate() {
            dof_of[d] = k;
        }
        let g_int = restrict_cols(&ops.sym_grad, &dofs, g.n_vel());
        let g_int_t = g_int.transpose_view().to_csr();
        let b_int = restrict_cols(&ops.div, &dofs, g.n_vel());
        Ok(StateSolver {
            grid: *g,
            field: field.clone(),
            cfg: cfg.clone(),
            stress: StressMap::new(g, field)?,
            ops,
            dofs,
            g_int,
            g_int_t,
            b_int,
            dof_of,
            symbolic: OnceLock::new(),
            korn: OnceLock::new(),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn field(&self) -> &ExponentField {
        &self.field
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn operators(&self) -> &Operators {
        &self.ops
    }

    pub fn stress_map(&self) -> &StressMap {
        &self.stress
    }

    /// `(C1_hat, C2_hat)` for this grid, computed once.
    pub fn korn_constants(&self) -> Result<(f64, f64)> {
        if let Some(k) = self.korn.get() {
            return Ok(*k);
        }
        let k = estimate_poincare_korn(&self.grid, KORN_TRIALS)?;
        Ok(*self.korn.get_or_init(|| k))
    }

    fn check_field(&self, f: &StaggeredField, what: &str) -> Result<()> {
        if !f.matches(&self.grid) {
            return Err(Error::ShapeMismatch {
                expected: self.grid.n_vel(),
                found: f.as_slice().len(),
            });
        }
        if !f.is_finite() {
            return Err(Error::InvalidArgument(format!("{what} has non-finite entries")));
        }
        Ok(())
    }

    fn restrict(&self, v: &[f64]) -> Vec<f64> {
        self.dofs.iter().map(|&d| v[d]).collect()
    }

    fn extend(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.n_vel()];
        for (k, &d) in self.dofs.iter().enumerate() {
            out[d] = v[k];
        }
        out
    }

    /// `Gᵀ diag(w) G` on interior columns.
    fn viscous_block(&self, w: &[f64]) -> CsMat<f64> {
        let _ = &self.g_int_t;
        weighted_normal(&self.g_int, w)
    }

    /// Matrix of `v ↦ C(y) v` on interior faces.
    fn convection_matrix(&self, y: &[f64], t: &mut TriMat<f64>) {
        for term in &self.ops.conv {
            let c = 0.5 * term.coef * y[term.a];
            let (r, b) = (self.dof_of[term.row], self.dof_of[term.b]);
            t.add_triplet(r, b, c);
            t.add_triplet(b, r, -c);
        }
    }

    /// Matrix of `δ ↦ C(δ) y` on interior faces.
    fn convection_linearization(&self, y: &[f64], t: &mut TriMat<f64>) {
        for term in &self.ops.conv {
            let a = self.dof_of[term.a];
            if a == usize::MAX {
                continue;
            }
            let (r, b) = (self.dof_of[term.row], self.dof_of[term.b]);
            t.add_triplet(r, a, 0.5 * term.coef * y[term.b]);
            t.add_triplet(b, a, -0.5 * term.coef * y[term.row]);
        }
    }

    /// Lagged operator `Gᵀ Ŵ ν(y) G + C(y)` (Picard) or the full Jacobian of
    /// the momentum residual (Newton), both on interior faces.
    fn operator_at(&self, y: &[f64], newton: bool) -> (CsMat<f64>, Vec<f64>) {
        let d = self.ops.sym_gradient(y);
        let vis = self.stress.viscosity(&d);
        let n = self.dofs.len();
        let visc = if newton {
            let mut jt = self.stress.jacobian(&d);
            for (r, mut row) in jt.outer_iterator_mut().enumerate() {
                let w = self.ops.tensor_w[r];
                for (_, v) in row.iter_mut() {
                    *v *= w;
                }
            }
            let jg = &jt * &self.g_int;
            &self.g_int_t * &jg
        } else {
            let w: Vec<f64> = vis.nu.iter().zip(&self.ops.tensor_w).map(|(a, b)| a * b).collect();
            self.viscous_block(&w)
        };
        let mut t = TriMat::new((n, n));
        self.convection_matrix(y, &mut t);
        if newton {
            self.convection_linearization(y, &mut t);
        }
        let conv: CsMat<f64> = t.to_csr();
        let a = &visc + &conv;
        let nc = self.grid.n_cells();
        (a, vis.nu[..nc].to_vec())
    }

    fn factor(&self, a: CsMat<f64>, pressure_scale: Vec<f64>) -> Result<Linear> {
        let pattern = (a.indptr().as_slice().unwrap_or(&[]).to_vec(), a.indices().to_vec());
        let lu = match self.symbolic.get() {
            Some((ip, ix, sym)) if *ip == pattern.0 && *ix == pattern.1 => {
                SparseLu::factor(&a, Some(sym))?
            }
            Some(_) => SparseLu::factor(&a, None)?,
            None => {
                let sym = SparseLu::symbolic(&a)?;
                let lu = SparseLu::factor(&a, Some(&sym))?;
                let _ = self.symbolic.set((pattern.0, pattern.1, sym));
                lu
            }
        };
        Ok(Linear {
            a,
            lu,
            pressure_scale,
        })
    }

    fn saddle<'a>(&'a self, lin: &'a Linear, transpose: bool) -> SaddleSolver<'a> {
        SaddleSolver {
            a: &lin.a,
            lu: &lin.lu,
            b: &self.b_int,
            pressure_scale: &lin.pressure_scale,
            transpose,
        }
    }

    /// Momentum residual `div S(Dy) - C(y) y - ∇p + u` (zero on boundary faces)
    /// and the divergence.
    pub fn residual_vectors(&self, y: &[f64], p: &[f64], u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.ops.sym_gradient(y);
        let t = self.stress.stress(&d);
        let mut mom = self.ops.div_stress(&t);
        let c = self.ops.convect(y, y);
        let gp = self.ops.pressure_gradient(p);
        for k in 0..mom.len() {
            mom[k] += u[k] - c[k] - gp[k];
            if self.dof_of[k] == usize::MAX {
                mom[k] = 0.0;
            }
        }
        (mom, self.ops.divergence(y))
    }

    fn relative_residual(&self, y: &[f64], p: &[f64], u: &[f64], u_norm: f64) -> f64 {
        let (mom, _) = self.residual_vectors(y, p, u);
        self.ops.l2_norm(&mom) / u_norm.max(1.0)
    }

    pub fn solve(&self, u: &StaggeredField) -> Result<StateSolution> {
        self.solve_from(u, None)
    }

    /// Solves starting from `y0` (the rest state when `None`).
    pub fn solve_from(&self, u: &StaggeredField, y0: Option<&StaggeredField>) -> Result<StateSolution> {
        let run = self.run(u, y0, None)?;
        if !run.converged {
            return Err(Error::Diverged {
                iterations: run.iterations,
                last: *run.residual_history.last().unwrap_or(&f64::NAN),
                history: run.residual_history,
            });
        }
        self.finish(u.as_slice(), run)
    }

    /// The state after exactly `steps` iterations from rest, converged or not.
    pub fn iterate(&self, u: &StaggeredField, steps: usize) -> Result<StaggeredField> {
        let run = self.run(u, None, Some(steps))?;
        StaggeredField::from_vec(&self.grid, run.y)
    }

    fn run(&self, u: &StaggeredField, y0: Option<&StaggeredField>, fixed: Option<usize>) -> Result<Run> {
        self.check_field(u, "control")?;
        let cfg = &self.cfg;
        let us = u.as_slice();
        let u_norm = self.ops.l2_norm(us);
        let u_int = self.restrict(us);
        let newton = cfg.linearization == Linearization::Newton;
        let nc = self.grid.n_cells();

        let mut y = match y0 {
            Some(y0) => {
                self.check_field(y0, "initial state")?;
                let mut y = y0.as_slice().to_vec();
                for (k, v) in y.iter_mut().enumerate() {
                    if self.dof_of[k] == usize::MAX {
                        *v = 0.0;
                    }
                }
                y
            }
            None => vec![0.0; self.grid.n_vel()],
        };
        let mut p = vec![0.0; nc];
        let mut omega = cfg.under_relaxation;
        let mut warning = false;
        let mut residual_history = Vec::new();
        let mut step_history = Vec::new();
        let mut prev_res = self.relative_residual(&y, &p, us, u_norm);
        let max_iter = fixed.unwrap_or(cfg.picard_max_iter);

        for k in 1..=max_iter {
            let (a, scale) = self.operator_at(&y, newton);
            let lin = self.factor(a, scale)?;
            let solver = self.saddle(&lin, false);
            let y_int = self.restrict(&y);
            let (cand_y, cand_p) = if newton {
                let (mom, div) = self.residual_vectors(&y, &p, us);
                let f = self.restrict(&mom);
                let g: Vec<f64> = div.iter().map(|d| -d).collect();
                let out = solver.solve(&f, &g, cfg.linear_tol)?;
                let ny: Vec<f64> = y_int.iter().zip(&out.y).map(|(a, b)| a + b).collect();
                let np: Vec<f64> = p.iter().zip(&out.p).map(|(a, b)| a + b).collect();
                (ny, np)
            } else {
                let out = solver.solve(&u_int, &vec![0.0; nc], cfg.linear_tol)?;
                (out.y, out.p)
            };
            let mut new_y = y_int;
            for (n, c) in new_y.iter_mut().zip(&cand_y) {
                *n += omega * (c - *n);
            }
            let new_p: Vec<f64> = p.iter().zip(&cand_p).map(|(a, b)| a + omega * (b - a)).collect();
            let new_y = self.extend(&new_y);
            let diff: Vec<f64> = new_y.iter().zip(&y).map(|(a, b)| a - b).collect();
            let step = self.ops.h1_norm(&diff);
            let res = self.relative_residual(&new_y, &new_p, us, u_norm);
            if !(res.is_finite() && step.is_finite()) {
                return Err(Error::Diverged {
                    iterations: k,
                    last: res,
                    history: residual_history,
                });
            }
            if k > 1 && res > prev_res && omega > MIN_RELAXATION {
                omega *= 0.5;
                warning = true;
            }
            residual_history.push(res);
            step_history.push(step);
            prev_res = res;
            y = new_y;
            p = new_p;
            if fixed.is_none() && step < cfg.picard_tol && res <= cfg.picard_tol {
                return Ok(Run {
                    y,
                    p,
                    iterations: k,
                    warning,
                    residual_history,
                    step_history,
                    converged: true,
                });
            }
        }
        Ok(Run {
            y,
            p,
            iterations: max_iter,
            warning,
            residual_history,
            step_history,
            converged: false,
        })
    }

    fn finish(&self, u: &[f64], run: Run) -> Result<StateSolution> {
        let Run {
            y,
            p,
            iterations,
            mut warning,
            residual_history,
            step_history,
            ..
        } = run;
        let u_norm = self.ops.l2_norm(u);
        let (c1, c2) = self.korn_constants()?;
        let d = self.ops.sym_gradient(&y);
        let vis = self.stress.viscosity(&d);
        let coercivity = self.stress.coercivity(&d, self.field.constants().nu_mono);
        let c8 = c1 / (c2 * coercivity);
        let u_lq = self.ops.lq_norm(u, self.cfg.smallness_q);
        if u_lq > self.cfg.smallness_threshold {
            warning = true;
        }
        let div = self.ops.divergence(&y);
        let max_divergence = div.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let residual_norm = *residual_history.last().unwrap_or(&0.0);
        Ok(StateSolution {
            energy_lhs: self.ops.tensor_dot(&d, &d).sqrt(),
            energy_rhs_bound: c8 * u_norm,
            y: StaggeredField::from_vec(&self.grid, y)?,
            p: PressureField::from_cells(CellField::from_vec(&self.grid, p)?),
            residual_norm,
            iterations,
            smallness_warning: warning,
            residual_history,
            step_history,
            max_divergence,
            clamp_events: vis.clamped,
            c1_hat: c1,
            c2_hat: c2,
            coercivity,
            c8_hat: c8,
            u_lq_norm: u_lq,
            gamma0: 1.0 - 2.0 / self.cfg.smallness_q,
        })
    }

    /// Solves `Kᵀ (λ, μ) = (r, 0)` with `K` the Jacobian of the discrete state
    /// equations at `y`, returning `λ` on faces (zero on the boundary).
    pub fn adjoint_solve(&self, y: &StaggeredField, rhs: &StaggeredField) -> Result<StaggeredField> {
        self.check_field(y, "state")?;
        self.check_field(rhs, "adjoint right-hand side")?;
        let (a, scale) = self.operator_at(y.as_slice(), true);
        let lin = self.factor(a, scale)?;
        let r = self.restrict(rhs.as_slice());
        let out = self
            .saddle(&lin, true)
            .solve(&r, &vec![0.0; self.grid.n_cells()], self.cfg.linear_tol)
            .map_err(|e| Error::SingularAdjoint(e.to_string()))?;
        StaggeredField::from_vec(&self.grid, self.extend(&out.y))
    }

    /// `|(S(Dy), Dy) - (u, y)| / max(1, |(u, y)|)`.
    pub fn energy_identity(&self, y: &StaggeredField, u: &StaggeredField) -> Result<f64> {
        self.check_field(y, "state")?;
        self.check_field(u, "control")?;
        let d = self.ops.sym_gradient(y.as_slice());
        let t = self.stress.stress(&d);
        let lhs = self.ops.tensor_dot(&t, &d);
        let uy = self.ops.face_dot(u.as_slice(), y.as_slice());
        Ok((lhs - uy).abs() / uy.abs().max(1.0))
    }

    /// Applies `v ↦ Gᵀ Ŵ ν G v` for a fixed viscosity; exposed for tests.
    #[doc(hidden)]
    pub fn apply_viscous(&self, nu: &[f64], v: &[f64]) -> Vec<f64> {
        let gv = spmv(&self.g_int, v);
        let w: Vec<f64> = gv
            .iter()
            .zip(nu)
            .zip(&self.ops.tensor_w)
            .map(|((g, n), w)| g * n * w)
            .collect();
        spmv_t(&self.g_int, &w)
    }
}

/// Solves the state equation for control `u`.
pub fn solve_state(
    u: &StaggeredField,
    field: &ExponentField,
    g: &Grid,
    cfg: &SolverConfig,
) -> Result<StateSolution> {
    StateSolver::new(g, field, cfg)?.solve(u)
}

/// Momentum and mass residuals of `(y, p)` for control `u`; both vanish at a solution.
pub fn residual(
    y: &StaggeredField,
    p: &PressureField,
    u: &StaggeredField,
    field: &ExponentField,
    g: &Grid,
) -> Result<(StaggeredField, CellField)> {
    let s = StateSolver::new(g, field, &SolverConfig::default())?;
    s.check_field(y, "state")?;
    s.check_field(u, "control")?;
    let (mom, div) = s.residual_vectors(y.as_slice(), p.as_slice(), u.as_slice());
    Ok((StaggeredField::from_vec(g, mom)?, CellField::from_vec(g, div)?))
}

/// Relative gap in the energy identity `(S(Dy), Dy) = (u, y)`.
pub fn energy_identity_check(
    sol: &StateSolution,
    u: &StaggeredField,
    field: &ExponentField,
    g: &Grid,
) -> Result<f64> {
    StateSolver::new(g, field, &SolverConfig::default())?.energy_identity(&sol.y, u)
}

/// Discrete stress `S(Dy)` of a velocity field.
pub fn discrete_stress(y: &StaggeredField, field: &ExponentField, g: &Grid) -> Result<SymTensorField> {
    let ops = Operators::new(g);
    let map = StressMap::new(g, field)?;
    let d = ops.sym_gradient(y.as_slice());
    SymTensorField::from_vec(g, map.stress(&d))
}

//! Distributed optimal control: minimise
//! `J(u) = ½‖y_u - y_d‖₂² + (ν/2)‖u‖₂²` over body forces `u`, where `y_u`
//! solves the state equation.
//!
//! Gradients come from the exact discrete adjoint of the state residual. The
//! descent loop is L-BFGS in the discrete `L²` inner product with an Armijo
//! backtracking line search, so accepted objective values never increase.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponent::ExponentField;
use crate::grid::{Grid, StaggeredField};
use crate::state::{SolverConfig, StateSolution, StateSolver};

const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 40;
const LBFGS_MEMORY: usize = 8;

pub struct ControlProblem {
    y_d: StaggeredField,
    reg_nu: f64,
    solver: StateSolver,
}

impl ControlProblem {
    pub fn new(
        y_d: StaggeredField,
        reg_nu: f64,
        field: &ExponentField,
        g: &Grid,
        solver_cfg: &SolverConfig,
    ) -> Result<Self> {
        if !(reg_nu > 0.0 && reg_nu.is_finite()) {
            return Err(Error::Config {
                key: "reg_nu".into(),
                constraint: format!("must be > 0, got {reg_nu}"),
            });
        }
        if !y_d.matches(g) {
            return Err(Error::ShapeMismatch {
                expected: g.n_vel(),
                found: y_d.as_slice().len(),
            });
        }
        if !y_d.is_finite() {
            return Err(Error::InvalidArgument("target velocity has non-finite entries".into()));
        }
        Ok(ControlProblem {
            y_d,
            reg_nu,
            solver: StateSolver::new(g, field, solver_cfg)?,
        })
    }

    pub fn y_d(&self) -> &StaggeredField {
        &self.y_d
    }

    pub fn reg_nu(&self) -> f64 {
        self.reg_nu
    }

    pub fn grid(&self) -> &Grid {
        self.solver.grid()
    }

    pub fn solver(&self) -> &StateSolver {
        &self.solver
    }

    /// Same problem with a different regularisation weight.
    pub fn with_reg_nu(&self, reg_nu: f64) -> Result<Self> {
        ControlProblem::new(
            self.y_d.clone(),
            reg_nu,
            self.solver.field(),
            self.solver.grid(),
            self.solver.config(),
        )
    }

    fn dot(&self, a: &StaggeredField, b: &StaggeredField) -> f64 {
        self.solver.operators().face_dot(a.as_slice(), b.as_slice())
    }

    /// `½‖y - y_d‖₂²`.
    pub fn tracking(&self, y: &StaggeredField) -> f64 {
        let e = y.sub(&self.y_d);
        0.5 * self.dot(&e, &e)
    }

    fn objective(&self, u: &StaggeredField, y: &StaggeredField) -> f64 {
        self.tracking(y) + 0.5 * self.reg_nu * self.dot(u, u)
    }

    fn evaluate_from(&self, u: &StaggeredField, warm: Option<&StaggeredField>) -> Result<(f64, StateSolution)> {
        let sol = self.solver.solve_from(u, warm)?;
        Ok((self.objective(u, &sol.y), sol))
    }

    /// `ν u + λ` with `λ` the adjoint state; boundary-normal faces do not
    /// influence the state and carry `ν u` only.
    fn gradient_at(&self, u: &StaggeredField, sol: &StateSolution) -> Result<StaggeredField> {
        let rhs = sol.y.sub(&self.y_d);
        let lambda = self.solver.adjoint_solve(&sol.y, &rhs)?;
        Ok(u.scaled(self.reg_nu).axpy(1.0, &lambda))
    }
}

/// `J(u)` and the state it was computed from.
pub fn evaluate_j(u: &StaggeredField, prob: &ControlProblem) -> Result<(f64, StateSolution)> {
    prob.evaluate_from(u, None)
}

/// Gradient of `J` with respect to `u` in the discrete `L²` inner product.
pub fn gradient_j(u: &StaggeredField, prob: &ControlProblem) -> Result<StaggeredField> {
    let (_, sol) = prob.evaluate_from(u, None)?;
    prob.gradient_at(u, &sol)
}

/// Relative discrepancies between central finite differences of `J` and the
/// adjoint directional derivative along `directions` random unit directions.
pub fn finite_difference_check(
    u: &StaggeredField,
    prob: &ControlProblem,
    directions: usize,
    eps: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let g = prob.grid();
    let grad = gradient_j(u, prob)?;
    let gnorm = prob.dot(&grad, &grad).sqrt();
    let mut out = Vec::with_capacity(directions);
    for k in 0..directions {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let raw: Vec<f64> = (0..g.n_vel()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut d = StaggeredField::from_vec(g, raw)?;
        let dn = prob.dot(&d, &d).sqrt();
        d = d.scaled(1.0 / dn);
        let (jp, _) = evaluate_j(&u.axpy(eps, &d), prob)?;
        let (jm, _) = evaluate_j(&u.axpy(-eps, &d), prob)?;
        let fd = (jp - jm) / (2.0 * eps);
        let ad = prob.dot(&grad, &d);
        out.push((fd - ad).abs() / ad.abs().max(fd.abs()).max(1e-8 * gnorm));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub j: f64,
    pub tracking: f64,
    pub u_norm: f64,
    pub grad_norm: f64,
    /// Accepted step length along the search direction (0 at the start).
    pub step: f64,
    pub state_iterations: usize,
    /// Worst finite-difference discrepancy when a gradient check ran at this iterate.
    pub gradient_check: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizationStatus {
    GradientTolerance,
    MaxIterations,
    /// No step along the search direction decreased `J` further.
    Stalled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub records: Vec<TraceRecord>,
    pub status: OptimizationStatus,
}

impl OptimizationTrace {
    pub fn initial_j(&self) -> f64 {
        self.records[0].j
    }

    pub fn final_record(&self) -> &TraceRecord {
        self.records.last().expect("trace has at least the initial record")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizeOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Run a finite-difference gradient check every this many iterations (0 disables).
    pub check_every: usize,
    pub check_directions: usize,
    pub check_eps: f64,
}

impl OptimizeOptions {
    pub fn new(max_iter: usize, grad_tol: f64) -> Self {
        OptimizeOptions {
            max_iter,
            grad_tol,
            check_every: 0,
            check_directions: 10,
            check_eps: 1e-5,
        }
    }
}

/// Minimises `J` from `u0`; see [`optimize_with`].
pub fn optimize(
    u0: &StaggeredField,
    prob: &ControlProblem,
    max_iter: usize,
    grad_tol: f64,
) -> Result<(StaggeredField, OptimizationTrace)> {
    optimize_with(u0, prob, &OptimizeOptions::new(max_iter, grad_tol))
}

pub fn optimize_with(
    u0: &StaggeredField,
    prob: &ControlProblem,
    opts: &OptimizeOptions,
) -> Result<(StaggeredField, OptimizationTrace)> {
    if opts.max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
    }
    if !u0.matches(prob.grid()) || !u0.is_finite() {
        return Err(Error::InvalidArgument("initial control must match the grid and be finite".into()));
    }
    let mut u = u0.clone();
    let (mut j, mut sol) = prob.evaluate_from(&u, None)?;
    let mut grad = prob.gradient_at(&u, &sol)?;
    let mut gnorm = prob.dot(&grad, &grad).sqrt();
    let check = |it: usize, u: &StaggeredField| -> Result<Option<f64>> {
        if opts.check_every == 0 || it % opts.check_every != 0 {
            return Ok(None);
        }
        let errs = finite_difference_check(u, prob, opts.check_directions, opts.check_eps, it as u64)?;
        Ok(Some(errs.into_iter().fold(0.0, f64::max)))
    };
    let mut records = vec![TraceRecord {
        iteration: 0,
        j,
        tracking: prob.tracking(&sol.y),
        u_norm: prob.dot(&u, &u).sqrt(),
        grad_norm: gnorm,
        step: 0.0,
        state_iterations: sol.iterations,
        gradient_check: check(0, &u)?,
    }];
    let mut history: Vec<(StaggeredField, StaggeredField, f64)> = Vec::new();
    let mut status = OptimizationStatus::MaxIterations;

    for it in 1..=opts.max_iter {
        if gnorm <= opts.grad_tol {
            status = OptimizationStatus::GradientTolerance;
            break;
        }
        let mut dir = lbfgs_direction(prob, &grad, &history);
        let mut slope = prob.dot(&grad, &dir);
        if !(slope < 0.0) {
            history.clear();
            dir = grad.scaled(-1.0);
            slope = -gnorm * gnorm;
        }
        // without curvature information, aim for the step that would zero J linearly
        let mut t = if history.is_empty() { j / (gnorm * gnorm) } else { 1.0 };
        let mut accepted = None;
        let mut last_failure = None;
        for _ in 0..MAX_HALVINGS {
            let trial = u.axpy(t, &dir);
            match prob.evaluate_from(&trial, Some(&sol.y)) {
                Ok((jt, st)) if jt <= j + ARMIJO_C * t * slope => {
                    accepted = Some((trial, jt, st));
                    break;
                }
                Ok(_) => last_failure = None,
                Err(e @ (Error::Diverged { .. } | Error::LinearSolver(_))) => {
                    last_failure = Some(e)
                }
                Err(e) => return Err(e),
            }
            t *= 0.5;
        }
        let Some((new_u, new_j, new_sol)) = accepted else {
            if let Some(e) = last_failure {
                return Err(Error::Optimization {
                    iterations: it - 1,
                    msg: format!("state solve kept failing during the line search: {e}"),
                    trace: Box::new(OptimizationTrace {
                        records,
                        status: OptimizationStatus::Stalled,
                    }),
                });
            }
            if history.is_empty() {
                status = OptimizationStatus::Stalled;
                break;
            }
            // retry once from steepest descent before giving up
            history.clear();
            continue;
        };
        let new_grad = prob.gradient_at(&new_u, &new_sol)?;
        let s = new_u.sub(&u);
        let yv = new_grad.sub(&grad);
        let sy = prob.dot(&s, &yv);
        if sy > 1e-12 * prob.dot(&s, &s).sqrt() * prob.dot(&yv, &yv).sqrt() {
            history.push((s, yv, 1.0 / sy));
            if history.len() > LBFGS_MEMORY {
                history.remove(0);
            }
        }
        u = new_u;
        j = new_j;
        sol = new_sol;
        grad = new_grad;
        gnorm = prob.dot(&grad, &grad).sqrt();
        records.push(TraceRecord {
            iteration: it,
            j,
            tracking: prob.tracking(&sol.y),
            u_norm: prob.dot(&u, &u).sqrt(),
            grad_norm: gnorm,
            step: t,
            state_iterations: sol.iterations,
            gradient_check: check(it, &u)?,
        });
        if it == opts.max_iter && gnorm <= opts.grad_tol {
            status = OptimizationStatus::GradientTolerance;
        }
    }
    let trace = OptimizationTrace { records, status };
    if let Err(msg) = check_trace(&trace, prob.reg_nu) {
        return Err(Error::Optimization {
            iterations: trace.records.len() - 1,
            msg,
            trace: Box::new(trace),
        });
    }
    Ok((u, trace))
}

/// Two-loop recursion for `-H grad` in the weighted inner product.
fn lbfgs_direction(
    prob: &ControlProblem,
    grad: &StaggeredField,
    history: &[(StaggeredField, StaggeredField, f64)],
) -> StaggeredField {
    let mut q = grad.clone();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * prob.dot(s, &q);
        q = q.axpy(-a, y);
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.last() {
        q = q.scaled(prob.dot(s, y) / prob.dot(y, y));
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * prob.dot(y, &q);
        q = q.axpy(a - b, s);
    }
    q.scaled(-1.0)
}

/// Monotone objective and the minimising-sequence bound `(ν/2)‖u_k‖² ≤ J_0`.
pub fn check_trace(trace: &OptimizationTrace, reg_nu: f64) -> std::result::Result<(), String> {
    let j0 = trace.initial_j();
    for w in trace.records.windows(2) {
        if w[1].j > w[0].j {
            return Err(format!(
                "objective increased at iteration {}: {} -> {}",
                w[1].iteration, w[0].j, w[1].j
            ));
        }
    }
    for r in &trace.records {
        if 0.5 * reg_nu * r.u_norm * r.u_norm > j0 * (1.0 + 1e-12) {
            return Err(format!("control norm bound violated at iteration {}", r.iteration));
        }
    }
    Ok(())
}

/// Smooth reference force used by the canonical target-recovery experiment.
pub fn canonical_force(g: &Grid, amplitude: f64) -> StaggeredField {
    let (lx, ly) = (g.lx, g.ly);
    let mut u = StaggeredField::from_fns(
        g,
        |x, y| amplitude * (PI * x / lx).sin() * (2.0 * PI * y / ly).sin(),
        |x, y| amplitude * (2.0 * PI * x / lx).sin() * (PI * y / ly).sin() * 0.5,
    );
    u.enforce_dirichlet(g);
    u
}

/// Canonical experiment: the target is the state of [`canonical_force`] with
/// amplitude 10 under `α ≡ 1.8` on the unit square. Returns the problem and
/// the force that generated the target.
pub fn canonical_problem(n: usize, reg_nu: f64, cfg: &SolverConfig) -> Result<(ControlProblem, StaggeredField)> {
    let g = Grid::unit_square(n)?;
    let field = ExponentField::constant(1.8, 1.0, 1.0)?;
    let u_dagger = canonical_force(&g, 10.0);
    let solver = StateSolver::new(&g, &field, cfg)?;
    let y_d = solver.solve(&u_dagger)?.y;
    Ok((ControlProblem::new(y_d, reg_nu, &field, &g, cfg)?, u_dagger))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tight() -> SolverConfig {
        SolverConfig {
            picard_tol: 1e-12,
            ..SolverConfig::default()
        }
    }

    fn problem(n: usize, y_d: Option<StaggeredField>, reg_nu: f64) -> ControlProblem {
        let g = Grid::unit_square(n).unwrap();
        let f = ExponentField::expression(
            crate::expr::Expr::parse("1.7 + 0.4*x1").unwrap(),
            1.0,
            1.0,
            None,
        )
        .unwrap();
        let y_d = y_d.unwrap_or_else(|| {
            StaggeredField::from_fns(&g, |x, y| (PI * x).sin() * y * (1.0 - y), |_, _| 0.0)
        });
        ControlProblem::new(y_d, reg_nu, &f, &g, &tight()).unwrap()
    }

    #[test]
    fn objective_trivial_cases() {
        let g = Grid::unit_square(8).unwrap();
        let p = problem(8, Some(StaggeredField::zeros(&g)), 0.1);
        let (j, _) = evaluate_j(&StaggeredField::zeros(&g), &p).unwrap();
        assert_eq!(j, 0.0);
        let p = problem(8, None, 0.1);
        let (j, _) = evaluate_j(&StaggeredField::zeros(&g), &p).unwrap();
        let expect = 0.5 * p.dot(p.y_d(), p.y_d());
        assert!((j - expect).abs() < 1e-15);
    }

    #[test]
    fn target_from_forward_solve_leaves_only_regularisation() {
        let g = Grid::unit_square(10).unwrap();
        let p0 = problem(10, None, 0.01);
        let u_star = canonical_force(&g, 3.0);
        let y_star = p0.solver().solve(&u_star).unwrap().y;
        let p = problem(10, Some(y_star), 0.01);
        let (j, _) = evaluate_j(&u_star, &p).unwrap();
        let reg = 0.5 * 0.01 * p.dot(&u_star, &u_star);
        assert!((j - reg).abs() <= 1e-12 * reg);
        let grad = gradient_j(&u_star, &p).unwrap();
        let diff = grad.sub(&u_star.scaled(0.01));
        assert!(diff.max_abs() <= 1e-9 * grad.max_abs());
    }

    #[test]
    fn adjoint_gradient_matches_finite_differences() {
        let g = Grid::unit_square(10).unwrap();
        let p = problem(10, None, 1e-3);
        let u = canonical_force(&g, 4.0);
        let errs = finite_difference_check(&u, &p, 10, 1e-5, 17).unwrap();
        for e in errs {
            assert!(e <= 1e-4, "{e}");
        }
    }

    #[test]
    fn zero_target_from_zero_stops_immediately() {
        let g = Grid::unit_square(8).unwrap();
        let p = problem(8, Some(StaggeredField::zeros(&g)), 0.1);
        let (u, trace) = optimize(&StaggeredField::zeros(&g), &p, 10, 1e-10).unwrap();
        assert_eq!(u.max_abs(), 0.0);
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.status, OptimizationStatus::GradientTolerance);
    }

    #[test]
    fn descent_trace_is_monotone_and_bounded() {
        let g = Grid::unit_square(8).unwrap();
        let p = problem(8, None, 1e-3);
        let (_, trace) = optimize(&StaggeredField::zeros(&g), &p, 15, 1e-12).unwrap();
        assert!(check_trace(&trace, 1e-3).is_ok());
        assert!(trace.final_record().j < trace.initial_j());
        assert!(trace.final_record().grad_norm < 1e-3 * trace.records[0].grad_norm);
    }

    #[test]
    fn objective_is_continuous_along_shrinking_perturbations() {
        let g = Grid::unit_square(8).unwrap();
        let p = problem(8, None, 1e-2);
        let u = canonical_force(&g, 2.0);
        let d = canonical_force(&g, 1.0).scaled(-0.7);
        let (j0, _) = evaluate_j(&u, &p).unwrap();
        let mut prev = f64::INFINITY;
        for k in 1..6 {
            let (jk, _) = evaluate_j(&u.axpy(10f64.powi(-k), &d), &p).unwrap();
            let gap = (jk - j0).abs();
            assert!(gap < prev);
            prev = gap;
        }
        assert!(prev < 1e-4 * j0.abs().max(1e-3));
    }

    #[test]
    fn rejects_bad_regularisation() {
        let g = Grid::unit_square(6).unwrap();
        let f = ExponentField::constant(2.0, 1.0, 1.0).unwrap();
        let r = ControlProblem::new(StaggeredField::zeros(&g), 0.0, &f, &g, &SolverConfig::default());
        assert!(matches!(r, Err(Error::Config { .. })));
    }
}

//! Command pipelines. Reports are pretty-printed JSON and contain nothing
//! that varies between runs with the same configuration and seed.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use rheoctl::control::{check_trace, optimize_with, OptimizationTrace};
use rheoctl::grid::{Grid, StaggeredField};
use rheoctl::io::config::RunConfig;
use rheoctl::io::fields::{write_cell_csv, write_scalar_vtk, write_velocity_csv, write_velocity_vtk};
use rheoctl::io::parse_config;
use rheoctl::poincare::estimate_poincare_korn;
use rheoctl::state::StateSolver;
use rheoctl::verification::{convergence_study, inequality_campaign, jacobian_check};
use serde::Serialize;
use serde_json::json;

use crate::{CliError, Common};

/// Relative tolerance of the Jacobian and potential-gradient check.
pub const JACOBIAN_TOL: f64 = 1e-6;
/// Slack on the discrete energy estimate.
pub const ENERGY_SLACK: f64 = 1e-8;
/// Lattice size for the Hölder seminorm estimate.
const HOLDER_LATTICE: usize = 41;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Solve,
    Optimize,
    VerifyTensor,
    VerifyMms,
    VerifyConstants,
    TensorCheck,
}

impl Task {
    fn name(self) -> &'static str {
        match self {
            Task::Solve => "solve",
            Task::Optimize => "optimize",
            Task::VerifyTensor => "verify tensor",
            Task::VerifyMms => "verify mms",
            Task::VerifyConstants => "verify constants",
            Task::TensorCheck => "tensor-check",
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Output directory and the run log being accumulated.
struct Run {
    cfg: RunConfig,
    out: PathBuf,
    log: String,
}

impl Run {
    fn event(&mut self, line: impl AsRef<str>) {
        self.log.push_str(line.as_ref());
        self.log.push('\n');
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
        s.push('\n');
        self.write(name, &s)
    }

    fn write(&mut self, name: &str, body: &str) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, body).map_err(|e| rheoctl::Error::Io { path: p, source: e })?;
        self.event(format!("wrote {name}"));
        Ok(())
    }

    fn finish(mut self, status: &str) -> Result<()> {
        self.event(format!("status: {status}"));
        let p = self.path("run_log.txt");
        fs::write(&p, &self.log).map_err(|e| rheoctl::Error::Io { path: p, source: e })?;
        Ok(())
    }
}

fn setup(c: &Common, task: Task) -> Result<Run> {
    let mut cfg = parse_config(&c.config)?;
    if let Some(out) = &c.out {
        cfg.output_dir = out.to_string_lossy().into_owned();
    }
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    let threads = match c.threads {
        Some(0) => return Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => {
            // a second configuration in the same process keeps the first pool
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            n.to_string()
        }
        None => "default".to_string(),
    };
    let out = match &c.out {
        Some(o) => o.clone(),
        None => cfg.resolve(&cfg.output_dir),
    };
    fs::create_dir_all(&out).map_err(|e| rheoctl::Error::Io {
        path: out.clone(),
        source: e,
    })?;
    let mut log = String::new();
    let _ = writeln!(log, "command: {}", task.name());
    let _ = writeln!(log, "threads: {threads}");
    log.push_str("config:\n");
    log.push_str(&cfg.echo());
    Ok(Run { cfg, out, log })
}

pub fn run(c: &Common, task: Task) -> Result<()> {
    let mut r = setup(c, task)?;
    let outcome = match task {
        Task::Solve => solve(&mut r),
        Task::Optimize => optimize(&mut r),
        Task::VerifyTensor => verify_tensor(&mut r),
        Task::VerifyMms => verify_mms(&mut r),
        Task::VerifyConstants => verify_constants(&mut r),
        Task::TensorCheck => tensor_check(&mut r),
    };
    match outcome {
        Ok(()) => r.finish("ok"),
        Err(e) => {
            r.event(format!("error: {e}"));
            // the log is best effort once the command has failed
            let _ = r.finish("failed");
            Err(e)
        }
    }
}

fn write_state(r: &mut Run, stem: &str, y: &StaggeredField, g: &Grid) -> Result<()> {
    write_velocity_csv(&r.out, stem, y, g)?;
    r.event(format!("wrote {stem}_u.csv"));
    r.event(format!("wrote {stem}_v.csv"));
    let name = format!("{stem}.vtk");
    write_velocity_vtk(&r.path(&name), stem, y, g)?;
    r.event(format!("wrote {name}"));
    Ok(())
}

fn solve(r: &mut Run) -> Result<()> {
    let g = r.cfg.grid()?;
    let field = r.cfg.exponent_field()?;
    let u = r.cfg.force(&g)?;
    let solver = StateSolver::new(&g, &field, &r.cfg.solver)?;
    let sol = solver.solve(&u)?;
    let ops = solver.operators();
    let gap = solver.energy_identity(&sol.y, &u)?;
    write_state(r, "y", &sol.y, &g)?;
    write_cell_csv(&r.path("p.csv"), sol.p.cells(), &g)?;
    r.event("wrote p.csv");
    write_scalar_vtk(&r.path("p.vtk"), "pressure", sol.p.cells(), &g)?;
    r.event("wrote p.vtk");
    let report = json!({
        "command": "solve",
        "nx": g.nx,
        "ny": g.ny,
        "iterations": sol.iterations,
        "residual_norm": sol.residual_norm,
        "residual_history": sol.residual_history,
        "step_history": sol.step_history,
        "u_l2_norm": ops.l2_norm(u.as_slice()),
        "y_l2_norm": ops.l2_norm(sol.y.as_slice()),
        "y_max_abs": sol.y.max_abs(),
        "max_divergence": sol.max_divergence,
        "energy_lhs": sol.energy_lhs,
        "energy_rhs_bound": sol.energy_rhs_bound,
        "energy_estimate_holds": sol.energy_lhs <= sol.energy_rhs_bound + ENERGY_SLACK,
        "energy_identity_gap": gap,
        "c1_hat": sol.c1_hat,
        "c2_hat": sol.c2_hat,
        "coercivity": sol.coercivity,
        "c8_hat": sol.c8_hat,
        "u_lq_norm": sol.u_lq_norm,
        "gamma0": sol.gamma0,
        "smallness_warning": sol.smallness_warning,
        "clamp_events": sol.clamp_events,
    });
    r.event(format!("iterations: {}", sol.iterations));
    if sol.smallness_warning {
        r.event("warning: force exceeds the smallness threshold or relaxation was reduced");
    }
    r.write_json("solve_report.json", &report)
}

fn trace_csv(t: &OptimizationTrace) -> String {
    let mut s = String::from("iteration,j,tracking,u_norm,grad_norm,step,state_iterations,gradient_check\n");
    for rec in &t.records {
        let _ = writeln!(
            s,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{}",
            rec.iteration,
            rec.j,
            rec.tracking,
            rec.u_norm,
            rec.grad_norm,
            rec.step,
            rec.state_iterations,
            rec.gradient_check.map(|v| format!("{v:.16e}")).unwrap_or_default()
        );
    }
    s
}

fn optimize(r: &mut Run) -> Result<()> {
    let prob = r.cfg.control_problem()?;
    let g = *prob.grid();
    let (u, trace) = match optimize_with(&StaggeredField::zeros(&g), &prob, &r.cfg.optimize_options()) {
        Ok(v) => v,
        Err(rheoctl::Error::Optimization { iterations, msg, trace }) => {
            let body = trace_csv(&trace);
            r.write("trace.csv", &body)?;
            return Err(rheoctl::Error::Optimization { iterations, msg, trace }.into());
        }
        Err(e) => return Err(e.into()),
    };
    let y = prob.solver().solve(&u)?.y;
    write_state(r, "u_opt", &u, &g)?;
    write_state(r, "y_opt", &y, &g)?;
    write_velocity_csv(&r.out, "target", prob.y_d(), &g)?;
    r.event("wrote target_u.csv");
    r.event("wrote target_v.csv");
    let body = trace_csv(&trace);
    r.write("trace.csv", &body)?;
    let invariants = check_trace(&trace, prob.reg_nu());
    let first = &trace.records[0];
    let last = trace.final_record();
    let reduction = if first.tracking > 0.0 {
        1.0 - last.tracking / first.tracking
    } else {
        0.0
    };
    let report = json!({
        "command": "optimize",
        "status": trace.status,
        "iterations": last.iteration,
        "reg_nu": prob.reg_nu(),
        "initial_j": trace.initial_j(),
        "final_j": last.j,
        "initial_tracking": first.tracking,
        "final_tracking": last.tracking,
        "tracking_reduction": reduction,
        "final_u_norm": last.u_norm,
        "final_grad_norm": last.grad_norm,
        "trace_invariants_hold": invariants.is_ok(),
    });
    r.event(format!("iterations: {}", last.iteration));
    r.write_json("optimize_report.json", &report)?;
    invariants.map_err(CliError::Verification)
}

fn verify_tensor(r: &mut Run) -> Result<()> {
    let v = &r.cfg.verification;
    let constants = rheoctl::tensor::TensorConstants::from_bounds(v.alpha0, v.alpha_inf)?;
    let report = inequality_campaign(&constants, v.samples, r.cfg.seed)?;
    r.write_json("tensor_report.json", &report)?;
    if report.passed() {
        Ok(())
    } else {
        let failed: Vec<String> = report
            .checks
            .iter()
            .filter(|c| !c.passed())
            .map(|c| format!("{:?}", c.check))
            .collect();
        Err(CliError::Verification(format!("inequalities violated: {}", failed.join(", "))))
    }
}

fn verify_mms(r: &mut Run) -> Result<()> {
    let case = r.cfg.mms_case()?;
    let grids = r.cfg.mms_grids()?;
    let table = convergence_study(&case, &grids, &r.cfg.solver)?;
    let csv = table.to_csv();
    r.write("convergence.csv", &csv)?;
    let monotone = table.monotone();
    let energy = table.energy_estimate_holds(ENERGY_SLACK);
    let report = json!({
        "command": "verify mms",
        "stream_function": case.stream,
        "pressure_amplitude": case.pressure_amplitude,
        "rows": table.rows,
        "min_order_l2": table.min_order_l2(),
        "monotone": monotone,
        "energy_estimate_holds": energy,
    });
    r.write_json("mms_report.json", &report)?;
    if monotone && energy {
        Ok(())
    } else {
        Err(CliError::Verification(format!(
            "monotone errors: {monotone}, energy estimate: {energy}"
        )))
    }
}

fn verify_constants(r: &mut Run) -> Result<()> {
    let g = r.cfg.grid()?;
    let field = r.cfg.exponent_field()?;
    let trials = r.cfg.verification.korn_trials;
    let (c1, c2) = estimate_poincare_korn(&g, trials)?;
    let holder = field.check_holder_budget(HOLDER_LATTICE)?;
    let report = json!({
        "command": "verify constants",
        "nx": g.nx,
        "ny": g.ny,
        "trials": trials,
        "c1_hat": c1,
        "c2_hat": c2,
        "tensor_constants": field.constants(),
        "holder_gamma": field.holder_gamma(),
        "holder_seminorm_estimate": holder,
        "holder_budget": field.holder_budget(),
    });
    r.write_json("constants_report.json", &report)
}

fn tensor_check(r: &mut Run) -> Result<()> {
    let v = &r.cfg.verification;
    let report = jacobian_check(v.jacobian_samples, r.cfg.seed, v.alpha0, v.alpha_inf)?;
    let passed = report.passed(JACOBIAN_TOL);
    r.write_json("tensor_check_report.json", &json!({ "tolerance": JACOBIAN_TOL, "passed": passed, "report": report }))?;
    if passed {
        Ok(())
    } else {
        Err(CliError::Verification(format!(
            "derivative mismatch: jacobian {:e}, potential {:e}",
            report.max_jacobian_error, report.max_potential_error
        )))
    }
}

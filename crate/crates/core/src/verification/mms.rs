//! Manufactured solutions and grid-refinement studies.
//!
//! The exact velocity is the curl of a stream function whose gradient vanishes
//! on the boundary, so it is divergence free and satisfies the no-slip
//! condition. The forcing is differentiated in closed form: velocity
//! derivatives up to second order are written out by hand and the stress flux
//! is pushed through forward-mode duals together with the exponent gradient.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dual::{Dual2, Real};
use crate::error::{Error, Result};
use crate::exponent::ExponentField;
use crate::grid::{CellField, Grid, PressureField, StaggeredField};
use crate::state::{SolverConfig, StateSolver};
use crate::tensor::SymMatrix;

/// Preset stream functions on `[0, lx] x [0, ly]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StreamFunction {
    /// `A f(x/lx) f(y/ly)` with `f(s) = s²(1-s)²`.
    Quartic { amplitude: f64 },
}

/// `f` and its first three derivatives at `s`.
fn quartic(s: f64) -> [f64; 4] {
    [
        s * s * (1.0 - s) * (1.0 - s),
        2.0 * s - 6.0 * s * s + 4.0 * s * s * s,
        2.0 - 12.0 * s + 12.0 * s * s,
        -12.0 + 24.0 * s,
    ]
}

/// Value, gradient and Hessian of a scalar.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d: [f64; 2],
    pub dd: [[f64; 2]; 2],
}

#[derive(Clone, Debug)]
pub struct ManufacturedCase {
    pub stream: StreamFunction,
    /// `P` in `p* = P cos(πx/lx) cos(πy/ly)`.
    pub pressure_amplitude: f64,
    pub field: ExponentField,
}

impl ManufacturedCase {
    pub fn quartic(amplitude: f64, pressure_amplitude: f64, field: ExponentField) -> Self {
        ManufacturedCase {
            stream: StreamFunction::Quartic { amplitude },
            pressure_amplitude,
            field,
        }
    }

    /// Exact velocity components with first and second derivatives.
    pub fn velocity_jets(&self, x: f64, y: f64) -> [Jet; 2] {
        let (lx, ly) = self.field.extents();
        let StreamFunction::Quartic { amplitude: a } = self.stream;
        let fx = quartic(x / lx);
        let gy = quartic(y / ly);
        // k-th derivative in x carries lx^-k
        let f = |k: usize| fx[k] / lx.powi(k as i32);
        let g = |k: usize| gy[k] / ly.powi(k as i32);
        let u = Jet {
            v: a * f(0) * g(1),
            d: [a * f(1) * g(1), a * f(0) * g(2)],
            dd: [
                [a * f(2) * g(1), a * f(1) * g(2)],
                [a * f(1) * g(2), a * f(0) * g(3)],
            ],
        };
        let v = Jet {
            v: -a * f(1) * g(0),
            d: [-a * f(2) * g(0), -a * f(1) * g(1)],
            dd: [
                [-a * f(3) * g(0), -a * f(2) * g(1)],
                [-a * f(2) * g(1), -a * f(1) * g(2)],
            ],
        };
        [u, v]
    }

    pub fn velocity(&self, x: f64, y: f64) -> (f64, f64) {
        let [u, v] = self.velocity_jets(x, y);
        (u.v, v.v)
    }

    pub fn pressure(&self, x: f64, y: f64) -> f64 {
        let (lx, ly) = self.field.extents();
        self.pressure_amplitude * (PI * x / lx).cos() * (PI * y / ly).cos()
    }

    fn pressure_gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let (lx, ly) = self.field.extents();
        let (sx, cx) = (PI * x / lx).sin_cos();
        let (sy, cy) = (PI * y / ly).sin_cos();
        let p = self.pressure_amplitude;
        (-p * PI / lx * sx * cy, -p * PI / ly * cx * sy)
    }

    /// Exact rate of strain `Dy*`.
    pub fn strain(&self, x: f64, y: f64) -> SymMatrix {
        let [u, v] = self.velocity_jets(x, y);
        SymMatrix::new2(u.d[0], 0.5 * (u.d[1] + v.d[0]), v.d[1])
    }

    /// `-div S(Dy*) + (y*·∇)y* + ∇p*`.
    pub fn forcing(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        let [u, v] = self.velocity_jets(x, y);
        let d11 = Dual2::new(u.d[0], u.dd[0][0], u.dd[0][1]);
        let d22 = Dual2::new(v.d[1], v.dd[1][0], v.dd[1][1]);
        let d12 = Dual2::new(
            0.5 * (u.d[1] + v.d[0]),
            0.5 * (u.dd[1][0] + v.dd[0][0]),
            0.5 * (u.dd[1][1] + v.dd[0][1]),
        );
        let alpha = self.field.eval_with_gradient(x, y)?;
        let norm = (d11 * d11 + d22 * d22 + Dual2::constant(2.0) * d12 * d12).sqrt();
        let phi = (Dual2::constant(1.0) + norm).powf(alpha - Dual2::constant(2.0));
        let (s11, s22, s12) = (phi * d11, phi * d22, phi * d12);
        let div1 = s11.dx + s12.dy;
        let div2 = s12.dx + s22.dy;
        let conv1 = u.v * u.d[0] + v.v * u.d[1];
        let conv2 = u.v * v.d[0] + v.v * v.d[1];
        let (px, py) = self.pressure_gradient(x, y);
        Ok((-div1 + conv1 + px, -div2 + conv2 + py))
    }
}

fn check_extents(case: &ManufacturedCase, g: &Grid) -> Result<()> {
    let (lx, ly) = case.field.extents();
    if (lx - g.lx).abs() > 1e-12 * lx || (ly - g.ly).abs() > 1e-12 * ly {
        return Err(Error::InvalidArgument(format!(
            "exponent field extents ({lx}, {ly}) differ from grid extents ({}, {})",
            g.lx, g.ly
        )));
    }
    Ok(())
}

/// Samples the forcing, exact velocity and exact pressure onto `g`.
pub fn manufacture(case: &ManufacturedCase, g: &Grid) -> Result<(StaggeredField, StaggeredField, PressureField)> {
    check_extents(case, g)?;
    let mut data = vec![0.0; g.n_vel()];
    for (k, slot) in data.iter_mut().enumerate() {
        if g.is_boundary_face(k) {
            continue;
        }
        let (x, y) = g.face_pos(k);
        let (f1, f2) = case.forcing(x, y)?;
        *slot = if k < g.n_u() { f1 } else { f2 };
    }
    let u = StaggeredField::from_vec(g, data)?;
    let mut y_exact = StaggeredField::from_fns(g, |x, y| case.velocity(x, y).0, |x, y| case.velocity(x, y).1);
    y_exact.enforce_dirichlet(g);
    let p = PressureField::from_cells(CellField::from_fn(g, |x, y| case.pressure(x, y)));
    Ok((u, y_exact, p))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    /// `‖y - y*‖₂`.
    pub error_l2: f64,
    /// `‖D(y - y*)‖₂`.
    pub error_h1: f64,
    /// `log₂(e_{2h}/e_h)` against the previous row.
    pub order_l2: Option<f64>,
    pub order_h1: Option<f64>,
    pub iterations: usize,
    pub energy_lhs: f64,
    pub energy_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// Both error norms strictly decrease along the chain.
    pub fn monotone(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].error_l2 < w[0].error_l2 && w[1].error_h1 < w[0].error_h1)
    }

    pub fn orders_l2(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.order_l2).collect()
    }

    pub fn min_order_l2(&self) -> f64 {
        self.orders_l2().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// `‖Dy‖₂ ≤ C8_hat ‖u‖₂ + slack` on every row.
    pub fn energy_estimate_holds(&self, slack: f64) -> bool {
        self.rows.iter().all(|r| r.energy_lhs <= r.energy_bound + slack)
    }

    pub fn to_csv(&self) -> String {
        let opt = |o: Option<f64>| o.map(|v| format!("{v:.16e}")).unwrap_or_default();
        let mut s = String::from("nx,ny,h,error_l2,error_h1,order_l2,order_h1,iterations\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{:.16e},{:.16e},{:.16e},{},{},{}\n",
                r.nx,
                r.ny,
                r.h,
                r.error_l2,
                r.error_h1,
                opt(r.order_l2),
                opt(r.order_h1),
                r.iterations
            ));
        }
        s
    }
}

fn order(coarse: f64, fine: f64) -> Option<f64> {
    (coarse > 0.0 && fine > 0.0).then(|| (coarse / fine).log2())
}

/// Solves the manufactured problem on each grid of a halving chain.
pub fn convergence_study(case: &ManufacturedCase, grids: &[Grid], cfg: &SolverConfig) -> Result<ConvergenceTable> {
    if grids.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "a refinement chain needs at least 3 grids, got {}",
            grids.len()
        )));
    }
    for w in grids.windows(2) {
        if w[1].nx != 2 * w[0].nx || w[1].ny != 2 * w[0].ny || w[1].lx != w[0].lx || w[1].ly != w[0].ly {
            return Err(Error::InvalidArgument(format!(
                "grid {}x{} does not halve the spacing of {}x{}",
                w[1].nx, w[1].ny, w[0].nx, w[0].ny
            )));
        }
    }
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(grids.len());
    for g in grids {
        let (u, y_exact, _) = manufacture(case, g)?;
        let solver = StateSolver::new(g, &case.field, cfg)?;
        let sol = solver.solve(&u)?;
        let err = sol.y.sub(&y_exact);
        let ops = solver.operators();
        let error_l2 = ops.l2_norm(err.as_slice());
        let error_h1 = ops.sym_grad_norm(err.as_slice());
        let prev = rows.last();
        rows.push(ConvergenceRow {
            nx: g.nx,
            ny: g.ny,
            h: g.h,
            error_l2,
            error_h1,
            order_l2: prev.and_then(|p| order(p.error_l2, error_l2)),
            order_h1: prev.and_then(|p| order(p.error_h1, error_h1)),
            iterations: sol.iterations,
            energy_lhs: sol.energy_lhs,
            energy_bound: sol.energy_rhs_bound,
        });
    }
    Ok(ConvergenceTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case(a: f64, p: f64, alpha: f64) -> ManufacturedCase {
        ManufacturedCase::quartic(a, p, ExponentField::constant(alpha, 1.0, 1.0).unwrap())
    }

    #[test]
    fn zero_stream_function_gives_zero_data() {
        let g = Grid::unit_square(8).unwrap();
        let (u, y, _) = manufacture(&case(0.0, 0.0, 1.7), &g).unwrap();
        assert_eq!(u.max_abs(), 0.0);
        assert_eq!(y.max_abs(), 0.0);
    }

    #[test]
    fn exact_velocity_is_solenoidal_and_vanishes_on_walls() {
        let c = case(3.0, 1.0, 2.0);
        for &(x, y) in &[(0.2, 0.7), (0.5, 0.5), (0.9, 0.1)] {
            let [u, v] = c.velocity_jets(x, y);
            assert!((u.d[0] + v.d[1]).abs() < 1e-14);
        }
        for s in [0.0, 0.3, 1.0] {
            for (x, y) in [(0.0, s), (1.0, s), (s, 0.0), (s, 1.0)] {
                assert_eq!(c.velocity(x, y), (0.0, 0.0));
            }
        }
    }

    #[test]
    fn jets_match_difference_quotients() {
        let c = ManufacturedCase::quartic(2.0, 0.0, ExponentField::constant(2.0, 1.5, 1.0).unwrap());
        let (x, y, e) = (0.4, 0.35, 1e-6);
        let [u, _] = c.velocity_jets(x, y);
        let [ux, _] = c.velocity_jets(x + e, y);
        let [uxm, _] = c.velocity_jets(x - e, y);
        assert!(((ux.v - uxm.v) / (2.0 * e) - u.d[0]).abs() < 1e-8);
        assert!(((ux.d[1] - uxm.d[1]) / (2.0 * e) - u.dd[0][1]).abs() < 1e-7);
    }

    #[test]
    fn chain_must_halve() {
        let grids: Vec<Grid> = [8, 16, 24].iter().map(|&n| Grid::unit_square(n).unwrap()).collect();
        let err = convergence_study(&case(1.0, 1.0, 2.0), &grids, &SolverConfig::default());
        assert!(err.is_err());
        let short: Vec<Grid> = [8, 16].iter().map(|&n| Grid::unit_square(n).unwrap()).collect();
        assert!(convergence_study(&case(1.0, 1.0, 2.0), &short, &SolverConfig::default()).is_err());
    }

    #[test]
    fn zero_case_has_no_error() {
        let grids: Vec<Grid> = [8, 16, 32].iter().map(|&n| Grid::unit_square(n).unwrap()).collect();
        let t = convergence_study(&case(0.0, 0.0, 1.5), &grids, &SolverConfig::default()).unwrap();
        for r in &t.rows {
            assert!(r.error_l2 <= 1e-12 && r.error_h1 <= 1e-12);
            assert_eq!(r.order_l2, None);
        }
    }
}

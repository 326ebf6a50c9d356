//! State-solver checks against an independently assembled Newtonian solver and
//! the discrete energy estimate.

use std::f64::consts::PI;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Col;
use rheoctl::exponent::ExponentField;
use rheoctl::expr::Expr;
use rheoctl::grid::{Grid, StaggeredField};
use rheoctl::ops::convect;
use rheoctl::state::{solve_state, SolverConfig, StateSolver};

fn force(g: &Grid, amp: f64) -> StaggeredField {
    let mut u = StaggeredField::from_fns(
        g,
        |x, y| amp * (PI * y).sin() * (1.0 + x * x),
        |x, y| amp * (2.0 * PI * x).sin() * y,
    );
    u.enforce_dirichlet(g);
    u
}

/// `-½ Δy + C(y) y + ∇p = u`, `div y = 0`, mean-zero `p`, with the Laplacian
/// built from five-point stencils and ghost reflection at the walls, solved
/// by a bordered direct factorisation of the full KKT matrix.
fn reference_newtonian(g: &Grid, u: &StaggeredField) -> StaggeredField {
    let (nx, ny, h) = (g.nx, g.ny, g.h);
    let ih2 = 1.0 / (h * h);
    // unknown numbering: interior u faces, interior v faces, cells, multiplier
    let mut uid = vec![usize::MAX; (nx + 1) * ny];
    let mut vid = vec![usize::MAX; nx * (ny + 1)];
    let mut n = 0;
    for j in 0..ny {
        for i in 1..nx {
            uid[j * (nx + 1) + i] = n;
            n += 1;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            vid[j * nx + i] = n;
            n += 1;
        }
    }
    let nvel = n;
    let pid = |i: usize, j: usize| nvel + j * nx + i;
    let lam = nvel + nx * ny;
    let total = lam + 1;

    let mut lap: Vec<(usize, usize, f64)> = Vec::new();
    for j in 0..ny {
        for i in 1..nx {
            let r = uid[j * (nx + 1) + i];
            let mut diag = 4.0;
            for (di, dj) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                let (a, b) = (i as i64 + di, j as i64 + dj);
                if b < 0 || b >= ny as i64 {
                    diag += 1.0; // ghost = -interior
                } else if a >= 1 && a < nx as i64 {
                    lap.push((r, uid[b as usize * (nx + 1) + a as usize], -0.5 * ih2));
                }
            }
            lap.push((r, r, 0.5 * diag * ih2));
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let r = vid[j * nx + i];
            let mut diag = 4.0;
            for (di, dj) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                let (a, b) = (i as i64 + di, j as i64 + dj);
                if a < 0 || a >= nx as i64 {
                    diag += 1.0;
                } else if b >= 1 && b < ny as i64 {
                    lap.push((r, vid[b as usize * nx + a as usize], -0.5 * ih2));
                }
            }
            lap.push((r, r, 0.5 * diag * ih2));
        }
    }
    // pressure gradient and divergence
    let mut kkt_fixed = lap.clone();
    for j in 0..ny {
        for i in 0..nx {
            let c = pid(i, j);
            let faces = [
                (uid[j * (nx + 1) + i + 1], 1.0 / h),
                (uid[j * (nx + 1) + i], -1.0 / h),
                (vid[(j + 1) * nx + i], 1.0 / h),
                (vid[j * nx + i], -1.0 / h),
            ];
            for (f, s) in faces {
                if f != usize::MAX {
                    kkt_fixed.push((c, f, s));
                    kkt_fixed.push((f, c, -s));
                }
            }
            kkt_fixed.push((c, lam, 1.0));
            kkt_fixed.push((lam, c, 1.0));
        }
    }

    let to_full = |x: &[f64]| -> StaggeredField {
        let mut y = vec![0.0; g.n_vel()];
        for (k, &d) in uid.iter().enumerate() {
            if d != usize::MAX {
                y[k] = x[d];
            }
        }
        for (k, &d) in vid.iter().enumerate() {
            if d != usize::MAX {
                y[g.n_u() + k] = x[d];
            }
        }
        StaggeredField::from_vec(g, y).unwrap()
    };
    let mut rhs = vec![0.0; total];
    for (k, &d) in uid.iter().enumerate() {
        if d != usize::MAX {
            rhs[d] = u.as_slice()[k];
        }
    }
    for (k, &d) in vid.iter().enumerate() {
        if d != usize::MAX {
            rhs[d] = u.as_slice()[g.n_u() + k];
        }
    }

    // Oseen iteration on the convecting field, solved by convection matrix columns
    let mut y = StaggeredField::zeros(g);
    for _ in 0..100 {
        let mut trip: Vec<Triplet<usize, usize, f64>> = kkt_fixed
            .iter()
            .map(|&(r, c, v)| Triplet::new(r, c, v))
            .collect();
        // C(y) column by column through unit probes on interior faces
        for (k, &d) in uid.iter().chain(vid.iter()).enumerate() {
            if d == usize::MAX {
                continue;
            }
            let mut e = StaggeredField::zeros(g);
            e.as_mut_slice()[k] = 1.0;
            let col = convect(&y, &e, g).unwrap();
            for (kk, &dd) in uid.iter().chain(vid.iter()).enumerate() {
                let v = col.as_slice()[kk];
                if dd != usize::MAX && v != 0.0 {
                    trip.push(Triplet::new(dd, d, v));
                }
            }
        }
        let m = SparseColMat::<usize, f64>::try_new_from_triplets(total, total, &trip).unwrap();
        let lu = m.sp_lu().unwrap();
        let mut x = Col::<f64>::from_fn(total, |i| rhs[i]);
        lu.solve_in_place(x.as_mat_mut());
        let xs: Vec<f64> = (0..nvel).map(|i| x[i]).collect();
        let next = to_full(&xs);
        let change = next.sub(&y).max_abs();
        y = next;
        if change < 1e-15 * y.max_abs().max(1e-300) {
            break;
        }
    }
    y
}

#[test]
fn newtonian_limit_matches_reference_solver() {
    let g = Grid::new(1.5, 1.0, 24, 16).unwrap();
    let field = ExponentField::constant(2.0, 1.5, 1.0).unwrap();
    let u = force(&g, 2.0);
    let cfg = SolverConfig {
        picard_tol: 1e-11,
        ..SolverConfig::default()
    };
    let sol = solve_state(&u, &field, &g, &cfg).unwrap();
    let reference = reference_newtonian(&g, &u);
    let err = sol.y.sub(&reference).max_abs();
    assert!(err <= 1e-8, "max difference {err:e}");
    assert!(reference.max_abs() > 1e-3);
}

#[test]
fn stokes_regime_converges_within_two_extra_iterations() {
    let g = Grid::unit_square(32).unwrap();
    let field = ExponentField::constant(2.0, 1.0, 1.0).unwrap();
    let u = force(&g, 1e-2);
    let sol = solve_state(&u, &field, &g, &SolverConfig::default()).unwrap();
    assert!(sol.iterations <= 3, "{} iterations", sol.iterations);
}

#[test]
fn picard_steps_contract_on_small_data() {
    let g = Grid::unit_square(24).unwrap();
    let field = ExponentField::expression(
        Expr::parse("1.75 + 0.2*x1*x2").unwrap(),
        1.0,
        1.0,
        None,
    )
    .unwrap();
    let u = force(&g, 4.0);
    let sol = solve_state(&u, &field, &g, &SolverConfig::default()).unwrap();
    assert!(!sol.smallness_warning);
    let s = &sol.step_history;
    for k in 2..s.len() {
        assert!(s[k] < s[k - 1], "step {k}: {:e} after {:e}", s[k], s[k - 1]);
    }
}

#[test]
fn energy_estimate_holds_across_exponents() {
    let g = Grid::unit_square(32).unwrap();
    for (expr, amp) in [
        ("1.4", 3.0),
        ("1.8", 10.0),
        ("2", 10.0),
        ("2 + 0.5*sin(pi*x1)", 10.0),
        ("3 - x2", 20.0),
    ] {
        let field =
            ExponentField::expression(Expr::parse(expr).unwrap(), 1.0, 1.0, None).unwrap();
        let u = force(&g, amp);
        let solver = StateSolver::new(&g, &field, &SolverConfig::default()).unwrap();
        let sol = solver.solve(&u).unwrap();
        assert!(
            sol.energy_lhs <= sol.energy_rhs_bound + 1e-8,
            "{expr}: {} > {}",
            sol.energy_lhs,
            sol.energy_rhs_bound
        );
        assert!(sol.max_divergence <= 1e-10);
        assert!(solver.energy_identity(&sol.y, &u).unwrap() <= 1e-7);
    }
}

#[test]
fn warm_start_reaches_the_same_state() {
    let g = Grid::unit_square(16).unwrap();
    let field = ExponentField::constant(1.6, 1.0, 1.0).unwrap();
    let solver = StateSolver::new(&g, &field, &SolverConfig::default()).unwrap();
    let u = force(&g, 8.0);
    let cold = solver.solve(&u).unwrap();
    let warm = solver.solve_from(&u.scaled(1.01), Some(&cold.y)).unwrap();
    let cold2 = solver.solve(&u.scaled(1.01)).unwrap();
    assert!(warm.iterations < cold2.iterations);
    assert!(warm.y.sub(&cold2.y).max_abs() < 1e-8);
}

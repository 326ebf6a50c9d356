//! Discrete Poincaré and Korn constants by inverse iteration.
//!
//! `C1` is the smallest constant with `‖y‖₂ ≤ C1 ‖∇y‖₂` and `C2` the largest
//! with `C2 ‖y‖₁,₂ ≤ ‖Dy‖₂`, both over velocity fields vanishing on the
//! boundary. Each trial starts inverse iteration from an independent random
//! field; trial `k` draws from stream `k` of a fixed seed, so a larger trial
//! count always contains the smaller one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sprs::{CsMat, TriMat};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::{dot, SparseLu};
use crate::ops::{spmv, Operators};

const SEED: u64 = 0x5eed_c0de;
const MAX_SWEEPS: usize = 2000;
const RQ_TOL: f64 = 1e-13;

/// Estimated `(C1_hat, C2_hat)`.
pub fn estimate_poincare_korn(g: &Grid, trials: usize) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let ops = Operators::new(g);
    let dofs = g.interior_faces();
    let lap = weighted_normal(&restrict_cols(&ops.grad, &dofs, g.n_vel()), &ops.grad_w);
    let korn = weighted_normal(&restrict_cols(&ops.sym_grad, &dofs, g.n_vel()), &ops.tensor_w);
    let n = dofs.len();
    let lap_lu = SparseLu::factor(&lap, None)?;
    let korn_lu = SparseLu::factor(&korn, None)?;
    let mut c1: f64 = 0.0;
    let mut c2: f64 = f64::INFINITY;
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        rng.set_stream(t as u64);
        let x0: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        // ‖y‖²/‖∇y‖² is maximal at the smallest eigenvalue of lap
        let lam = inverse_iteration(&lap_lu, &lap, None, x0.clone());
        c1 = c1.max((1.0 / lam).sqrt());
        // ‖Dy‖²/(‖y‖² + ‖∇y‖²) is minimal at the smallest generalized eigenvalue
        let mu = inverse_iteration(&korn_lu, &korn, Some(&lap), x0);
        c2 = c2.min(mu.sqrt());
    }
    Ok((c1, c2))
}

/// Smallest eigenvalue of `a x = λ (I + b) x` (or `a x = λ x` without `b`),
/// returned as the final Rayleigh quotient.
fn inverse_iteration(lu: &SparseLu, a: &CsMat<f64>, b: Option<&CsMat<f64>>, mut x: Vec<f64>) -> f64 {
    let rhs_op = |x: &[f64]| -> Vec<f64> {
        match b {
            Some(b) => {
                let bx = spmv(b, x);
                x.iter().zip(&bx).map(|(x, y)| x + y).collect()
            }
            None => x.to_vec(),
        }
    };
    let mut rq = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        let mx = rhs_op(&x);
        let mut next = lu.solve(&mx);
        let nn = dot(&next, &next).sqrt();
        next.iter_mut().for_each(|v| *v /= nn);
        x = next;
        let ax = spmv(a, &x);
        let new_rq = dot(&x, &ax) / dot(&x, &rhs_op(&x));
        let done = (rq - new_rq).abs() <= RQ_TOL * new_rq;
        rq = new_rq;
        if done {
            break;
        }
    }
    rq
}

/// Columns of `a` restricted to `dofs`.
pub(crate) fn restrict_cols(a: &CsMat<f64>, dofs: &[usize], ncols: usize) -> CsMat<f64> {
    let mut map = vec![usize::MAX; ncols];
    for (k, &d) in dofs.iter().enumerate() {
        map[d] = k;
    }
    let mut t = TriMat::new((a.rows(), dofs.len()));
    for (r, row) in a.outer_iterator().enumerate() {
        for (c, v) in row.iter() {
            if map[c] != usize::MAX {
                t.add_triplet(r, map[c], *v);
            }
        }
    }
    t.to_csr()
}

/// `Aᵀ diag(w) A`.
pub(crate) fn weighted_normal(a: &CsMat<f64>, w: &[f64]) -> CsMat<f64> {
    let mut wa = a.clone();
    for (r, mut row) in wa.outer_iterator_mut().enumerate() {
        for (_, v) in row.iter_mut() {
            *v *= w[r];
        }
    }
    let at: CsMat<f64> = a.transpose_view().to_csr();
    &at * &wa
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn poincare_constant_of_unit_square() {
        let g = Grid::unit_square(32).unwrap();
        let (c1, c2) = estimate_poincare_korn(&g, 2).unwrap();
        let exact = 1.0 / (PI * 2f64.sqrt());
        assert!((c1 - exact).abs() < 0.05 * exact, "{c1} vs {exact}");
        assert!(c2 > 0.0 && c2 <= 1.0);
    }

    #[test]
    fn more_trials_never_raise_korn_estimate() {
        let g = Grid::unit_square(8).unwrap();
        let (_, a) = estimate_poincare_korn(&g, 2).unwrap();
        let (_, b) = estimate_poincare_korn(&g, 4).unwrap();
        assert!(b <= a);
        assert!(estimate_poincare_korn(&g, 0).is_err());
    }
}

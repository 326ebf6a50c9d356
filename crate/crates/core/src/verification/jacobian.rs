//! Finite-difference consistency of the analytic stress Jacobian and of the
//! potential gradient.
//!
//! Derivatives are taken along symmetric directions with a step proportional
//! to `|η|`, Richardson-extrapolated from steps `h` and `h/2`, so the
//! truncation error stays far below the tolerance across the whole magnitude
//! range.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{potential, stress, stress_jacobian, ExponentValue, SymMatrix};

use super::campaign::{MAX_LOG_NORM, MIN_LOG_NORM};

const REL_STEP: f64 = 1e-3;

/// Richardson-extrapolated central difference of `f` at `t = 0` with step `h`.
fn richardson<T>(f: impl Fn(f64) -> T, h: f64, combine: impl Fn(&T, &T, f64) -> T) -> (T, T)
where
    T: Clone,
{
    let (p1, m1) = (f(h), f(-h));
    let (p2, m2) = (f(0.5 * h), f(-0.5 * h));
    (combine(&p1, &m1, 2.0 * h), combine(&p2, &m2, h))
}

fn extrapolate(coarse: f64, fine: f64) -> f64 {
    (4.0 * fine - coarse) / 3.0
}

/// Relative discrepancy between `S'(η)ζ` and its difference quotient.
pub fn jacobian_error(eta: &SymMatrix, zeta: &SymMatrix, alpha: ExponentValue) -> f64 {
    let h = REL_STEP * eta.norm().max(f64::MIN_POSITIVE) / zeta.norm();
    let (coarse, fine) = richardson(
        |t| stress(&eta.add(&zeta.scale(t)), alpha),
        h,
        |p, m, w| p.sub(m).scale(1.0 / w),
    );
    let exact = stress_jacobian(eta, alpha).apply(zeta);
    let d = eta.dim();
    let mut num: f64 = 0.0;
    for k in 0..d {
        for l in 0..d {
            let fd = extrapolate(coarse.get(k, l), fine.get(k, l));
            num = num.max((fd - exact.get(k, l)).abs());
        }
    }
    num / exact.norm()
}

/// Relative discrepancy between `S(η):ζ` and the difference quotient of the potential.
pub fn potential_gradient_error(eta: &SymMatrix, zeta: &SymMatrix, alpha: ExponentValue) -> f64 {
    let h = REL_STEP * eta.norm().max(f64::MIN_POSITIVE) / zeta.norm();
    let (coarse, fine) = richardson(
        |t| potential(&eta.add(&zeta.scale(t)), alpha),
        h,
        |p, m, w| (p - m) / w,
    );
    let s = stress(eta, alpha);
    let exact = s.contract(zeta);
    (extrapolate(coarse, fine) - exact).abs() / (s.norm() * zeta.norm())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JacobianReport {
    pub seed: u64,
    pub samples: usize,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub max_jacobian_error: f64,
    pub worst_jacobian_index: u64,
    pub max_potential_error: f64,
    pub worst_potential_index: u64,
}

impl JacobianReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_jacobian_error <= tol && self.max_potential_error <= tol
    }
}

fn random_direction(rng: &mut ChaCha8Rng, dim: usize) -> SymMatrix {
    let a: Vec<f64> = (0..dim * dim).map(|_| StandardNormal.sample(rng)).collect();
    SymMatrix::symmetrize(dim, |i, j| 0.5 * (a[i * dim + j] + a[j * dim + i]))
}

/// Checks `samples` seeded points `(η, α)`, each along one random direction
/// and every coordinate direction.
pub fn jacobian_check(samples: usize, seed: u64, alpha_min: f64, alpha_max: f64) -> Result<JacobianReport> {
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be at least 1".into()));
    }
    if !(alpha_min > 1.0 && alpha_max >= alpha_min && alpha_max.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "exponent range [{alpha_min}, {alpha_max}] must lie above 1"
        )));
    }
    let errs: Vec<(f64, f64)> = (0..samples as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            let dim = if k % 2 == 0 { 2 } else { 3 };
            let mut eta = random_direction(&mut rng, dim);
            let target = 10f64.powf(rng.random_range(MIN_LOG_NORM..=MAX_LOG_NORM));
            eta = eta.scale(target / eta.norm());
            let alpha = ExponentValue::new(if alpha_max > alpha_min {
                rng.random_range(alpha_min..=alpha_max)
            } else {
                alpha_min
            })
            .expect("range checked above");
            let mut dirs = vec![random_direction(&mut rng, dim)];
            for i in 0..dim {
                for j in i..dim {
                    dirs.push(SymMatrix::basis(dim, i, j));
                }
            }
            dirs.iter().fold((0.0f64, 0.0f64), |(a, b), z| {
                (a.max(jacobian_error(&eta, z, alpha)), b.max(potential_gradient_error(&eta, z, alpha)))
            })
        })
        .collect();
    let worst = |sel: fn(&(f64, f64)) -> f64| {
        errs.iter()
            .enumerate()
            .fold((0usize, f64::NEG_INFINITY), |(bi, bv), (i, e)| {
                let v = sel(e);
                if v > bv || v.is_nan() {
                    (i, v)
                } else {
                    (bi, bv)
                }
            })
    };
    let (ji, jv) = worst(|e| e.0);
    let (pi, pv) = worst(|e| e.1);
    Ok(JacobianReport {
        seed,
        samples,
        alpha_min,
        alpha_max,
        max_jacobian_error: jv,
        worst_jacobian_index: ji as u64,
        max_potential_error: pv,
        worst_potential_index: pi as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn errors_are_small_at_moderate_arguments() {
        let eta = SymMatrix::new2(0.4, -1.2, 2.5);
        let zeta = SymMatrix::new2(1.0, 0.3, -0.7);
        let a = ExponentValue::new(1.6).unwrap();
        assert!(jacobian_error(&eta, &zeta, a) < 1e-9);
        assert!(potential_gradient_error(&eta, &zeta, a) < 1e-9);
    }

    #[test]
    fn wrong_jacobian_would_be_detected() {
        // differentiating the Newtonian map at a shear-thinning exponent must disagree
        let eta = SymMatrix::new2(3.0, 1.0, -2.0);
        let zeta = SymMatrix::new2(0.0, 1.0, 0.0);
        let a = ExponentValue::new(1.5).unwrap();
        let h = 1e-3 * eta.norm();
        let fd = stress(&eta.add(&zeta.scale(h)), a).sub(&stress(&eta.add(&zeta.scale(-h)), a)).scale(0.5 / h);
        assert!(fd.sub(&zeta).norm() > 1e-2);
    }

    #[test]
    fn small_check_passes_and_is_seeded() {
        let r = jacobian_check(200, 9, 1.1, 4.0).unwrap();
        assert!(r.passed(1e-6), "{r:?}");
        assert_eq!(r, jacobian_check(200, 9, 1.1, 4.0).unwrap());
        assert!(jacobian_check(0, 9, 1.1, 4.0).is_err());
        assert!(jacobian_check(10, 9, 0.9, 4.0).is_err());
    }
}

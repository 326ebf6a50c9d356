//! Extra-stress law `S(η) = (1 + |η|)^(α-2) η` for symmetric rate-of-strain
//! arguments, its potential, its analytic derivative and executable margins
//! for the Jacobian bounds, coercivity and monotonicity estimates.
//!
//! Every margin function returns `lhs - bound` for the inequality it certifies,
//! so a nonnegative value (up to round-off) certifies the inequality at that
//! sample. The [`Certificate`] variants additionally return the magnitude of the
//! terms involved, which is what relative round-off slack is measured against.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric `dim x dim` matrix with `dim` in {2, 3}.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    e: [[f64; 3]; 3],
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim == 2 || dim == 3, "SymMatrix dimension must be 2 or 3");
        SymMatrix {
            dim,
            e: [[0.0; 3]; 3],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.e[i][i] = 1.0;
        }
        m
    }

    /// Builds a matrix from full rows, rejecting asymmetric input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidArgument(format!(
                "symmetric matrix must be 2x2 or 3x3, got {dim} rows"
            )));
        }
        let mut m = Self::zeros(dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::ShapeMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            for (j, &x) in row.iter().enumerate() {
                m.e[i][j] = x;
            }
        }
        for i in 0..dim {
            for j in 0..i {
                if m.e[i][j] != m.e[j][i] {
                    return Err(Error::Invariant(format!(
                        "matrix is not symmetric: entry ({i},{j}) = {} but ({j},{i}) = {}",
                        m.e[i][j], m.e[j][i]
                    )));
                }
            }
        }
        Ok(m)
    }

    /// Symmetric part `(A + Aᵀ)/2` of an arbitrary square matrix given entrywise.
    pub fn symmetrize(dim: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.e[i][j] = 0.5 * (f(i, j) + f(j, i));
            }
        }
        m
    }

    /// 2x2 matrix `[[a11, a12], [a12, a22]]`.
    pub fn new2(a11: f64, a12: f64, a22: f64) -> Self {
        let mut m = Self::zeros(2);
        m.e[0][0] = a11;
        m.e[0][1] = a12;
        m.e[1][0] = a12;
        m.e[1][1] = a22;
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &x) in values.iter().enumerate() {
            m.e[i][i] = x;
        }
        m
    }

    /// Unit matrix `(e_i e_jᵀ + e_j e_iᵀ)/2` scaled so that `i == j` gives `e_i e_iᵀ`.
    pub fn basis(dim: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(dim);
        if i == j {
            m.e[i][i] = 1.0;
        } else {
            m.e[i][j] = 0.5;
            m.e[j][i] = 0.5;
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.e[i][j]
    }

    /// Frobenius norm `|η| = sqrt(Σ η_ij²)`.
    pub fn norm(&self) -> f64 {
        self.contract(self).sqrt()
    }

    /// Double contraction `η : ζ = Σ η_ij ζ_ij`.
    pub fn contract(&self, other: &SymMatrix) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += self.e[i][j] * other.e[i][j];
            }
        }
        s
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map(|x| a * x)
    }

    pub fn add(&self, other: &SymMatrix) -> Self {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &SymMatrix) -> Self {
        self.zip(other, |a, b| a - b)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|i| (0..i).all(|j| self.e[i][j] == self.e[j][i]))
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut m = *self;
        for row in m.e.iter_mut().take(self.dim) {
            for x in row.iter_mut().take(self.dim) {
                *x = f(*x);
            }
        }
        m
    }

    fn zip(&self, other: &SymMatrix, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let mut m = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                m.e[i][j] = f(self.e[i][j], other.e[i][j]);
            }
        }
        m
    }
}

/// Pointwise exponent value, strictly greater than one.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ExponentValue(f64);

impl ExponentValue {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha.is_finite() && alpha > 1.0 {
            Ok(ExponentValue(alpha))
        } else {
            Err(Error::Invariant(format!(
                "exponent must satisfy alpha > 1 (lower bound alpha0 > 1), got {alpha}"
            )))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    /// `α < 2` selects the shear-thinning branch of every piecewise bound;
    /// `α == 2` goes with the shear-thickening branch.
    #[inline]
    pub fn is_shear_thinning(self) -> bool {
        self.0 < 2.0
    }
}

impl TryFrom<f64> for ExponentValue {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        ExponentValue::new(v)
    }
}

impl From<ExponentValue> for f64 {
    fn from(v: ExponentValue) -> f64 {
        v.0
    }
}

/// Constants of the Jacobian bounds and the monotonicity estimate,
/// instantiated from the exponent bounds `1 < alpha0 <= alpha_inf`.
///
/// Fields are public so verification fixtures can corrupt them on purpose.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorConstants {
    pub alpha0: f64,
    pub alpha_inf: f64,
    /// Upper bound constant for `|∂S_kl/∂η_ij|`: `max(3 - alpha0, alpha_inf - 1)`.
    pub c3: f64,
    /// Lower bound constant for `S'(η):ζ:ζ`: `min(alpha0 - 1, 1)`.
    pub c4: f64,
    /// Monotonicity constant: `min(alpha0 - 1, 1)`.
    pub nu_mono: f64,
}

impl TensorConstants {
    pub fn from_bounds(alpha0: f64, alpha_inf: f64) -> Result<Self> {
        if !(alpha0 > 1.0) {
            return Err(Error::Invariant(format!(
                "alpha0 must exceed 1, got {alpha0}"
            )));
        }
        if !(alpha_inf >= alpha0) || !alpha_inf.is_finite() {
            return Err(Error::Invariant(format!(
                "alpha_inf must be finite and >= alpha0 = {alpha0}, got {alpha_inf}"
            )));
        }
        Ok(TensorConstants {
            alpha0,
            alpha_inf,
            c3: f64::max(3.0 - alpha0, alpha_inf - 1.0),
            c4: f64::min(alpha0 - 1.0, 1.0),
            nu_mono: f64::min(alpha0 - 1.0, 1.0),
        })
    }
}

/// Fourth-order tensor holding `∂S_kl/∂η_ij` at index `[i][j][k][l]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4 {
    dim: usize,
    data: [f64; 81],
}

impl Tensor4 {
    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        ((i * 3 + j) * 3 + k) * 3 + l
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `∂S_kl/∂η_ij`.
    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.data[self.idx(i, j, k, l)]
    }

    /// Directional derivative `Σ_ij ∂S_kl/∂η_ij ζ_ij`, returned as the matrix over `(k, l)`.
    pub fn apply(&self, zeta: &SymMatrix) -> SymMatrix {
        let d = self.dim;
        let mut out = SymMatrix::zeros(d);
        for k in 0..d {
            for l in 0..d {
                let mut s = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        s += self.get(i, j, k, l) * zeta.get(i, j);
                    }
                }
                out.e[k][l] = s;
            }
        }
        out
    }

    /// Quadratic form `S'(η):ζ:ζ = Σ_ijkl ∂S_kl/∂η_ij ζ_kl ζ_ij`.
    pub fn quadratic_form(&self, zeta: &SymMatrix) -> f64 {
        let d = self.dim;
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        s += self.get(i, j, k, l) * zeta.get(k, l) * zeta.get(i, j);
                    }
                }
            }
        }
        s
    }

    /// Largest entry magnitude over all `dim⁴` index combinations.
    pub fn max_abs(&self) -> f64 {
        let d = self.dim;
        let mut m: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        m = m.max(self.get(i, j, k, l).abs());
                    }
                }
            }
        }
        m
    }
}

/// Effective viscosity factor `(1 + r)^(α-2)`.
#[inline]
pub fn viscosity_factor(r: f64, alpha: f64) -> f64 {
    (1.0 + r).powf(alpha - 2.0)
}

pub fn stress(eta: &SymMatrix, alpha: ExponentValue) -> SymMatrix {
    eta.scale(viscosity_factor(eta.norm(), alpha.get()))
}

/// `Φ(|η|²)`, normalised so that `Φ(0) = 0`; its gradient with respect to `η` is [`stress`].
pub fn potential(eta: &SymMatrix, alpha: ExponentValue) -> f64 {
    potential_of_norm(eta.norm(), alpha.get())
}

/// `∫₀^r s (1+s)^(α-2) ds` in closed form, with a binomial series near zero where
/// the closed form cancels catastrophically.
pub fn potential_of_norm(r: f64, alpha: f64) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    if r < 0.05 {
        // Σ_k C(α-2, k) r^(k+2)/(k+2)
        let beta = alpha - 2.0;
        let mut binom = 1.0;
        let mut rk = r * r;
        let mut sum = 0.0;
        for k in 0..80 {
            let term = binom * rk / (k as f64 + 2.0);
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() {
                break;
            }
            binom *= (beta - k as f64) / (k as f64 + 1.0);
            rk *= r;
        }
        return sum;
    }
    let l = r.ln_1p();
    let e = |a: f64| (a * l).exp_m1() / a;
    e(alpha) - e(alpha - 1.0)
}

/// `∂S_kl/∂η_ij = (α-2)(1+|η|)^(α-3) η_ij η_kl / |η| + (1+|η|)^(α-2) δ_ik δ_jl`,
/// with the first term taken as zero at `η = 0`.
pub fn stress_jacobian(eta: &SymMatrix, alpha: ExponentValue) -> Tensor4 {
    let d = eta.dim();
    let a = alpha.get();
    let r = eta.norm();
    let f2 = viscosity_factor(r, a);
    let c = if r > 0.0 {
        (a - 2.0) * (1.0 + r).powf(a - 3.0) / r
    } else {
        0.0
    };
    let mut t = Tensor4 {
        dim: d,
        data: [0.0; 81],
    };
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    let delta = if i == k && j == l { f2 } else { 0.0 };
                    let idx = t.idx(i, j, k, l);
                    t.data[idx] = c * eta.get(i, j) * eta.get(k, l) + delta;
                }
            }
        }
    }
    t
}

/// Margin of an inequality together with the magnitude of the terms it was computed from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub margin: f64,
    pub scale: f64,
}

impl Certificate {
    /// `margin / scale`, or the raw margin when the scale is zero.
    pub fn normalized(&self) -> f64 {
        if self.scale > 0.0 {
            self.margin / self.scale
        } else {
            self.margin
        }
    }

    pub fn holds(&self, rel_tol: f64) -> bool {
        self.margin >= -rel_tol * self.scale
    }
}

pub fn a1_certificate(eta: &SymMatrix, alpha: ExponentValue, c: &TensorConstants) -> Certificate {
    let bound = c.c3 * viscosity_factor(eta.norm(), alpha.get());
    let jac = stress_jacobian(eta, alpha);
    Certificate {
        margin: bound - jac.max_abs(),
        scale: bound.abs(),
    }
}

/// `min_{ijkl} C3 (1+|η|)^(α-2) - |∂S_kl/∂η_ij|`.
pub fn check_a1(eta: &SymMatrix, alpha: ExponentValue, c: &TensorConstants) -> f64 {
    a1_certificate(eta, alpha, c).margin
}

pub fn a2_certificate(
    eta: &SymMatrix,
    zeta: &SymMatrix,
    alpha: ExponentValue,
    c: &TensorConstants,
) -> Certificate {
    let a = alpha.get();
    let r = eta.norm();
    let f2 = viscosity_factor(r, a);
    let z2 = zeta.contract(zeta);
    let lhs = stress_jacobian(eta, alpha).quadratic_form(zeta);
    let bound = c.c4 * f2 * z2;
    let rank_one = if r > 0.0 {
        ((a - 2.0) * (1.0 + r).powf(a - 3.0) / r).abs() * eta.contract(zeta).powi(2)
    } else {
        0.0
    };
    Certificate {
        margin: lhs - bound,
        scale: f2 * z2 + rank_one + bound.abs(),
    }
}

/// `S'(η):ζ:ζ - C4 (1+|η|)^(α-2) |ζ|²`.
pub fn check_a2(
    eta: &SymMatrix,
    zeta: &SymMatrix,
    alpha: ExponentValue,
    c: &TensorConstants,
) -> f64 {
    a2_certificate(eta, zeta, alpha, c).margin
}

pub fn coercivity_certificate(
    eta: &SymMatrix,
    alpha: ExponentValue,
    c: &TensorConstants,
) -> Certificate {
    let r = eta.norm();
    let lhs = stress(eta, alpha).contract(eta);
    let bound = if alpha.is_shear_thinning() {
        c.nu_mono * viscosity_factor(r, alpha.get()) * r * r
    } else {
        r * r
    };
    Certificate {
        margin: lhs - bound,
        scale: lhs.abs() + bound.abs(),
    }
}

/// `S(η):η` minus `nu_mono (1+|η|)^(α-2)|η|²` for `α < 2`, or minus `|η|²` for `α >= 2`.
pub fn coercivity_margin(eta: &SymMatrix, alpha: ExponentValue, c: &TensorConstants) -> f64 {
    coercivity_certificate(eta, alpha, c).margin
}

pub fn monotonicity_certificate(
    eta: &SymMatrix,
    zeta: &SymMatrix,
    alpha: ExponentValue,
    c: &TensorConstants,
) -> Certificate {
    let diff = eta.sub(zeta);
    let d2 = diff.contract(&diff);
    let s_eta = stress(eta, alpha).contract(&diff);
    let s_zeta = stress(zeta, alpha).contract(&diff);
    let lhs = s_eta - s_zeta;
    let bound = if alpha.is_shear_thinning() {
        c.nu_mono * (1.0 + eta.norm() + zeta.norm()).powf(alpha.get() - 2.0) * d2
    } else {
        d2
    };
    Certificate {
        margin: lhs - bound,
        scale: s_eta.abs() + s_zeta.abs() + bound.abs(),
    }
}

/// `(S(η)-S(ζ)):(η-ζ)` minus `nu_mono (1+|η|+|ζ|)^(α-2)|η-ζ|²` for `α < 2`,
/// or minus `|η-ζ|²` for `α >= 2`.
pub fn monotonicity_margin(
    eta: &SymMatrix,
    zeta: &SymMatrix,
    alpha: ExponentValue,
    c: &TensorConstants,
) -> f64 {
    monotonicity_certificate(eta, zeta, alpha, c).margin
}

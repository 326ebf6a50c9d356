//! Sparse direct factorisation, restarted GMRES and the pressure Schur
//! complement solver for the Oseen saddle-point problem
//!
//! ```text
//! [ A  -Bᵀ ] [y]   [f]
//! [ B   0  ] [p] = [g]
//! ```
//!
//! with the pressure fixed to zero mean.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::Col;
use sprs::CsMat;

use crate::error::{Error, Result};
use crate::ops::{spmv, spmv_t};

fn to_faer(a: &CsMat<f64>) -> Result<SparseColMat<usize, f64>> {
    let mut t = Vec::with_capacity(a.nnz());
    for (v, (r, c)) in a.iter() {
        t.push(Triplet::new(r, c, *v));
    }
    SparseColMat::try_new_from_triplets(a.rows(), a.cols(), &t)
        .map_err(|e| Error::LinearSolver(format!("sparse conversion failed: {e:?}")))
}

/// Sparse LU factors of a square matrix.
pub struct SparseLu {
    n: usize,
    lu: Lu<usize, f64>,
}

impl SparseLu {
    /// Factorises `a`, reusing `symbolic` when its sparsity pattern matches.
    pub fn factor(a: &CsMat<f64>, symbolic: Option<&SymbolicLu<usize>>) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::ShapeMismatch {
                expected: a.rows(),
                found: a.cols(),
            });
        }
        let m = to_faer(a)?;
        let sym = match symbolic {
            Some(s) => s.clone(),
            None => SymbolicLu::try_new(m.symbolic())
                .map_err(|e| Error::LinearSolver(format!("symbolic factorisation: {e:?}")))?,
        };
        let lu = Lu::try_new_with_symbolic(sym, m.as_ref())
            .map_err(|e| Error::LinearSolver(format!("numeric factorisation: {e:?}")))?;
        Ok(SparseLu { n: a.rows(), lu })
    }

    pub fn symbolic(a: &CsMat<f64>) -> Result<SymbolicLu<usize>> {
        let m = to_faer(a)?;
        SymbolicLu::try_new(m.symbolic())
            .map_err(|e| Error::LinearSolver(format!("symbolic factorisation: {e:?}")))
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        debug_assert_eq!(b.len(), self.n);
        let mut x = Col::<f64>::from_fn(self.n, |i| b[i]);
        self.lu.solve_in_place(x.as_mat_mut());
        (0..self.n).map(|i| x[i]).collect()
    }

    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        debug_assert_eq!(b.len(), self.n);
        let mut x = Col::<f64>::from_fn(self.n, |i| b[i]);
        self.lu.solve_transpose_in_place(x.as_mat_mut());
        (0..self.n).map(|i| x[i]).collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn remove_mean(x: &mut [f64]) {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= m);
}

#[derive(Clone, Debug)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Right-preconditioned restarted GMRES with modified Gram-Schmidt.
#[derive(Clone, Copy, Debug)]
pub struct Gmres {
    pub tol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Gmres {
    /// `project` is applied to every Krylov vector; it lets a singular operator
    /// be solved on the complement of its null space.
    pub fn solve(
        &self,
        op: &dyn Fn(&[f64]) -> Vec<f64>,
        precond: &dyn Fn(&[f64]) -> Vec<f64>,
        project: &dyn Fn(&mut [f64]),
        b: &[f64],
        x0: Vec<f64>,
    ) -> GmresOutcome {
        gmres(op, precond, project, b, x0, self)
    }
}

fn gmres(
    op: &dyn Fn(&[f64]) -> Vec<f64>,
    precond: &dyn Fn(&[f64]) -> Vec<f64>,
    project: &dyn Fn(&mut [f64]),
    b: &[f64],
    x0: Vec<f64>,
    cfg: &Gmres,
) -> GmresOutcome {
    let Gmres {
        tol,
        restart,
        max_iter,
    } = *cfg;
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = x0;
    if bnorm == 0.0 {
        return GmresOutcome {
            x: vec![0.0; n],
            iterations: 0,
            rel_residual: 0.0,
        };
    }
    let mut total = 0;
    let mut rel = f64::INFINITY;
    while total < max_iter {
        let ax = op(&x);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        project(&mut r);
        let beta = norm2(&r);
        rel = beta / bnorm;
        if rel <= tol {
            break;
        }
        let m = restart.min(max_iter - total);
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(m);
        v.push(r.iter().map(|x| x / beta).collect());
        let mut hess = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut s = vec![0.0; m + 1];
        s[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            let mut zk = precond(&v[k]);
            project(&mut zk);
            let mut w = op(&zk);
            project(&mut w);
            z.push(zk);
            for (i, vi) in v.iter().enumerate() {
                let hik = dot(&w, vi);
                hess[i][k] = hik;
                w.iter_mut().zip(vi).for_each(|(w, v)| *w -= hik * v);
            }
            let wn = norm2(&w);
            hess[k + 1][k] = wn;
            for i in 0..k {
                let t = cs[i] * hess[i][k] + sn[i] * hess[i + 1][k];
                hess[i + 1][k] = -sn[i] * hess[i][k] + cs[i] * hess[i + 1][k];
                hess[i][k] = t;
            }
            let d = hess[k][k].hypot(hess[k + 1][k]);
            cs[k] = if d == 0.0 { 1.0 } else { hess[k][k] / d };
            sn[k] = if d == 0.0 { 0.0 } else { hess[k + 1][k] / d };
            hess[k][k] = d;
            hess[k + 1][k] = 0.0;
            s[k + 1] = -sn[k] * s[k];
            s[k] *= cs[k];
            k_used = k + 1;
            total += 1;
            rel = s[k + 1].abs() / bnorm;
            if rel <= tol || wn == 0.0 {
                break;
            }
            v.push(w.iter().map(|x| x / wn).collect());
        }
        // back substitution on the k_used x k_used triangle
        let mut c = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut acc = s[i];
            for j in i + 1..k_used {
                acc -= hess[i][j] * c[j];
            }
            c[i] = acc / hess[i][i];
        }
        for (ci, zi) in c.iter().zip(&z) {
            x.iter_mut().zip(zi).for_each(|(x, z)| *x += ci * z);
        }
        if rel <= tol {
            // confirm with the true residual on the next pass
            let ax = op(&x);
            let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
            project(&mut r);
            rel = norm2(&r) / bnorm;
            if rel <= tol {
                break;
            }
        }
    }
    GmresOutcome {
        x,
        iterations: total,
        rel_residual: rel,
    }
}

/// Solver for `A y - Bᵀ p = f`, `B y = g` with zero-mean `p`.
///
/// `A` is factorised directly; the pressure solves the Schur complement
/// `B A⁻¹ Bᵀ p = g - B A⁻¹ f` by GMRES, right-preconditioned with a cellwise
/// viscosity scaling.
pub struct SaddleSolver<'a> {
    pub a: &'a CsMat<f64>,
    pub lu: &'a SparseLu,
    pub b: &'a CsMat<f64>,
    /// Cellwise preconditioner weights (inverse Schur diagonal estimate).
    pub pressure_scale: &'a [f64],
    pub transpose: bool,
}

#[derive(Clone, Debug)]
pub struct SaddleOutcome {
    pub y: Vec<f64>,
    pub p: Vec<f64>,
    pub rel_residual: f64,
    pub krylov_iterations: usize,
}

impl SaddleSolver<'_> {
    fn a_solve(&self, r: &[f64]) -> Vec<f64> {
        if self.transpose {
            self.lu.solve_transpose(r)
        } else {
            self.lu.solve(r)
        }
    }

    fn a_apply(&self, y: &[f64]) -> Vec<f64> {
        if self.transpose {
            spmv_t(self.a, y)
        } else {
            spmv(self.a, y)
        }
    }

    /// Residuals `(f - A y + Bᵀ p, g - B y)`.
    pub fn residual(&self, y: &[f64], p: &[f64], f: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let ay = self.a_apply(y);
        let btp = spmv_t(self.b, p);
        let r1 = (0..f.len()).map(|i| f[i] - ay[i] + btp[i]).collect();
        let by = spmv(self.b, y);
        let r2 = (0..g.len()).map(|i| g[i] - by[i]).collect();
        (r1, r2)
    }

    fn schur_pass(&self, f: &[f64], g: &[f64], tol: f64) -> Result<(Vec<f64>, Vec<f64>, usize)> {
        let ainv_f = self.a_solve(f);
        let b_ainv_f = spmv(self.b, &ainv_f);
        let mut rhs: Vec<f64> = g.iter().zip(&b_ainv_f).map(|(g, x)| g - x).collect();
        remove_mean(&mut rhs);
        let op = |p: &[f64]| {
            let btp = spmv_t(self.b, p);
            spmv(self.b, &self.a_solve(&btp))
        };
        let pre = |r: &[f64]| {
            r.iter()
                .zip(self.pressure_scale)
                .map(|(r, s)| r * s)
                .collect::<Vec<f64>>()
        };
        let n = rhs.len();
        let solver = Gmres {
            tol,
            restart: 60,
            max_iter: 3000,
        };
        let out = solver.solve(&op, &pre, &remove_mean, &rhs, vec![0.0; n]);
        if !out.rel_residual.is_finite() {
            return Err(Error::LinearSolver("Schur complement iteration broke down".into()));
        }
        let mut p = out.x;
        remove_mean(&mut p);
        let btp = spmv_t(self.b, &p);
        let rhs_y: Vec<f64> = f.iter().zip(&btp).map(|(f, b)| f + b).collect();
        let y = self.a_solve(&rhs_y);
        Ok((y, p, out.iterations))
    }

    /// Solves to relative residual `tol` measured on the full system, with a
    /// few passes of iterative refinement. The mean of `g` lies outside the
    /// range of `B` and is discarded.
    pub fn solve(&self, f: &[f64], g: &[f64], tol: f64) -> Result<SaddleOutcome> {
        let mut g = g.to_vec();
        remove_mean(&mut g);
        let g = &g[..];
        let scale = (dot(f, f) + dot(g, g)).sqrt();
        if scale == 0.0 {
            return Ok(SaddleOutcome {
                y: vec![0.0; f.len()],
                p: vec![0.0; g.len()],
                rel_residual: 0.0,
                krylov_iterations: 0,
            });
        }
        let (mut y, mut p, mut its) = self.schur_pass(f, g, 0.1 * tol)?;
        let mut rel = f64::INFINITY;
        for _ in 0..6 {
            let (r1, r2) = self.residual(&y, &p, f, g);
            rel = (dot(&r1, &r1) + dot(&r2, &r2)).sqrt() / scale;
            if rel <= tol {
                break;
            }
            let (dy, dp, k) = self.schur_pass(&r1, &r2, 0.1 * tol)?;
            y.iter_mut().zip(&dy).for_each(|(a, b)| *a += b);
            p.iter_mut().zip(&dp).for_each(|(a, b)| *a += b);
            remove_mean(&mut p);
            its += k;
        }
        if !(rel <= tol) {
            return Err(Error::LinearSolver(format!(
                "saddle-point residual {rel:.3e} above tolerance {tol:.3e}"
            )));
        }
        Ok(SaddleOutcome {
            y,
            p,
            rel_residual: rel,
            krylov_iterations: its,
        })
    }
}

//! Discrete differential operators on the MAC grid.
//!
//! The symmetric gradient stores its shear component at grid nodes, where the
//! cross derivatives are naturally centred; walls are imposed by reflecting
//! tangential velocity into ghost values. The stress divergence is the exact
//! negative adjoint of the symmetric gradient in the weighted inner products,
//! and the convection operator is the skew part of the conservative MAC
//! stencil, so `(C(y) v, v) = 0` holds identically.

use sprs::{CsMat, TriMat};

use crate::error::{Error, Result};
use crate::grid::{tensor_len, CellField, Grid, PressureField, StaggeredField, SymTensorField};

/// Bilinear convection term: contributes `coef * y[a] * v[b]` to row `row` of
/// the conservative form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvTerm {
    pub row: usize,
    pub a: usize,
    pub b: usize,
    pub coef: f64,
}

/// Calls `f(row, col, value)` for each entry of the symmetric-gradient matrix.
/// Rows follow the [`SymTensorField`] layout.
fn sym_gradient_entries(g: &Grid, mut f: impl FnMut(usize, usize, f64)) {
    let (nx, ny, ih) = (g.nx, g.ny, 1.0 / g.h);
    let nc = g.n_cells();
    for j in 0..ny {
        for i in 0..nx {
            let c = g.cell(i, j);
            f(c, g.u_idx(i + 1, j), ih);
            f(c, g.u_idx(i, j), -ih);
            f(nc + c, g.v_idx(i, j + 1), ih);
            f(nc + c, g.v_idx(i, j), -ih);
        }
    }
    shear_entries(g, |_, n, col, val| f(2 * nc + n, col, 0.5 * val));
}

/// Node-centred `∂u/∂y` (component 0) and `∂v/∂x` (component 1) with ghost
/// reflection at the walls.
fn shear_entries(g: &Grid, mut f: impl FnMut(usize, usize, usize, f64)) {
    let mut fu = |n, c, v| f(0, n, c, v);
    let (nx, ny, ih) = (g.nx, g.ny, 1.0 / g.h);
    for j in 0..=ny {
        for i in 0..=nx {
            let n = g.node(i, j);
            if j == 0 {
                fu(n, g.u_idx(i, 0), 2.0 * ih);
            } else if j == ny {
                fu(n, g.u_idx(i, ny - 1), -2.0 * ih);
            } else {
                fu(n, g.u_idx(i, j), ih);
                fu(n, g.u_idx(i, j - 1), -ih);
            }
        }
    }
    let mut fv = |n, c, v| f(1, n, c, v);
    for j in 0..=ny {
        for i in 0..=nx {
            let n = g.node(i, j);
            if i == 0 {
                fv(n, g.v_idx(0, j), 2.0 * ih);
            } else if i == nx {
                fv(n, g.v_idx(nx - 1, j), -2.0 * ih);
            } else {
                fv(n, g.v_idx(i, j), ih);
                fv(n, g.v_idx(i - 1, j), -ih);
            }
        }
    }
}

fn divergence_entries(g: &Grid, mut f: impl FnMut(usize, usize, f64)) {
    let ih = 1.0 / g.h;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let c = g.cell(i, j);
            f(c, g.u_idx(i + 1, j), ih);
            f(c, g.u_idx(i, j), -ih);
            f(c, g.v_idx(i, j + 1), ih);
            f(c, g.v_idx(i, j), -ih);
        }
    }
}

/// Full velocity gradient rows: `[∂x u (cells) | ∂y v (cells) | ∂y u (nodes) | ∂x v (nodes)]`.
fn gradient_entries(g: &Grid, mut f: impl FnMut(usize, usize, f64)) {
    let nc = g.n_cells();
    let nn = g.n_nodes();
    let ih = 1.0 / g.h;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let c = g.cell(i, j);
            f(c, g.u_idx(i + 1, j), ih);
            f(c, g.u_idx(i, j), -ih);
            f(nc + c, g.v_idx(i, j + 1), ih);
            f(nc + c, g.v_idx(i, j), -ih);
        }
    }
    shear_entries(g, |comp, n, c, v| f(2 * nc + comp * nn + n, c, v));
}

/// Relative quadrature weights of the symmetric-gradient rows: cells count
/// once, node shear counts twice (both off-diagonal entries) with trapezoidal
/// edge factors.
pub fn tensor_weights(g: &Grid) -> Vec<f64> {
    let mut w = vec![1.0; 2 * g.n_cells()];
    for j in 0..=g.ny {
        for i in 0..=g.nx {
            w.push(2.0 * g.node_factor(i, j));
        }
    }
    w
}

fn gradient_weights(g: &Grid) -> Vec<f64> {
    let mut w = vec![1.0; 2 * g.n_cells()];
    for _ in 0..2 {
        for j in 0..=g.ny {
            for i in 0..=g.nx {
                w.push(g.node_factor(i, j));
            }
        }
    }
    w
}

/// Relative face weights: 1 for interior faces, ½ on boundary-normal faces.
pub fn face_weights(g: &Grid) -> Vec<f64> {
    (0..g.n_vel())
        .map(|k| if g.is_boundary_face(k) { 0.5 } else { 1.0 })
        .collect()
}

/// Conservative MAC convection stencil `div(y ⊗ v)` as bilinear terms.
///
/// Terms whose transported face is a wall face are dropped: either the value
/// is zero under the Dirichlet condition, or it pairs with its ghost reflection
/// and the interpolated flux vanishes.
pub fn convection_terms(g: &Grid) -> Vec<ConvTerm> {
    let (nx, ny) = (g.nx, g.ny);
    let q = 0.25 / g.h;
    let mut terms = Vec::new();
    let mut flux = |row: usize, sign: f64, a: [usize; 2], b: [usize; 2]| {
        for &bb in &b {
            if g.is_boundary_face(bb) {
                continue;
            }
            for &aa in &a {
                terms.push(ConvTerm {
                    row,
                    a: aa,
                    b: bb,
                    coef: sign * q,
                });
            }
        }
    };
    for j in 0..ny {
        for i in 1..nx {
            let row = g.u_idx(i, j);
            let east = [g.u_idx(i, j), g.u_idx(i + 1, j)];
            let west = [g.u_idx(i - 1, j), g.u_idx(i, j)];
            flux(row, 1.0, east, east);
            flux(row, -1.0, west, west);
            if j + 1 < ny {
                let a = [g.v_idx(i - 1, j + 1), g.v_idx(i, j + 1)];
                flux(row, 1.0, a, [g.u_idx(i, j), g.u_idx(i, j + 1)]);
            }
            if j > 0 {
                let a = [g.v_idx(i - 1, j), g.v_idx(i, j)];
                flux(row, -1.0, a, [g.u_idx(i, j - 1), g.u_idx(i, j)]);
            }
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let row = g.v_idx(i, j);
            let north = [g.v_idx(i, j), g.v_idx(i, j + 1)];
            let south = [g.v_idx(i, j - 1), g.v_idx(i, j)];
            flux(row, 1.0, north, north);
            flux(row, -1.0, south, south);
            if i + 1 < nx {
                let a = [g.u_idx(i + 1, j - 1), g.u_idx(i + 1, j)];
                flux(row, 1.0, a, [g.v_idx(i, j), g.v_idx(i + 1, j)]);
            }
            if i > 0 {
                let a = [g.u_idx(i, j - 1), g.u_idx(i, j)];
                flux(row, -1.0, a, [g.v_idx(i - 1, j), g.v_idx(i, j)]);
            }
        }
    }
    terms
}

fn assemble(
    rows: usize,
    cols: usize,
    entries: impl FnOnce(&mut dyn FnMut(usize, usize, f64)),
) -> CsMat<f64> {
    let mut t = TriMat::new((rows, cols));
    entries(&mut |r, c, v| t.add_triplet(r, c, v));
    t.to_csr()
}

/// Precomputed sparse operators of one grid.
#[derive(Clone, Debug)]
pub struct Operators {
    pub grid: Grid,
    /// Symmetric gradient, rows in [`SymTensorField`] layout.
    pub sym_grad: CsMat<f64>,
    /// Cell-centred divergence.
    pub div: CsMat<f64>,
    /// Full velocity gradient (for `H¹` norms).
    pub grad: CsMat<f64>,
    pub tensor_w: Vec<f64>,
    pub grad_w: Vec<f64>,
    pub face_w: Vec<f64>,
    pub conv: Vec<ConvTerm>,
}

impl Operators {
    pub fn new(g: &Grid) -> Self {
        let g = *g;
        let sym_grad = assemble(tensor_len(&g), g.n_vel(), |f| sym_gradient_entries(&g, f));
        let div = assemble(g.n_cells(), g.n_vel(), |f| divergence_entries(&g, f));
        let grad = assemble(
            2 * g.n_cells() + 2 * g.n_nodes(),
            g.n_vel(),
            |f| gradient_entries(&g, f),
        );
        Operators {
            grid: g,
            sym_grad,
            div,
            grad,
            tensor_w: tensor_weights(&g),
            grad_w: gradient_weights(&g),
            face_w: face_weights(&g),
            conv: convection_terms(&g),
        }
    }

    pub fn sym_gradient(&self, y: &[f64]) -> Vec<f64> {
        spmv(&self.sym_grad, y)
    }

    pub fn divergence(&self, y: &[f64]) -> Vec<f64> {
        spmv(&self.div, y)
    }

    /// `-W⁻¹ Gᵀ Ŵ T`: negative adjoint of the symmetric gradient.
    pub fn div_stress(&self, t: &[f64]) -> Vec<f64> {
        let wt: Vec<f64> = t.iter().zip(&self.tensor_w).map(|(a, w)| a * w).collect();
        let mut out = spmv_t(&self.sym_grad, &wt);
        for (o, w) in out.iter_mut().zip(&self.face_w) {
            *o = -*o / w;
        }
        out
    }

    /// Pressure gradient `-W⁻¹ Bᵀ p`, the negative adjoint of the divergence.
    pub fn pressure_gradient(&self, p: &[f64]) -> Vec<f64> {
        let mut out = spmv_t(&self.div, p);
        for (o, w) in out.iter_mut().zip(&self.face_w) {
            *o = -*o / w;
        }
        out
    }

    /// Skew-symmetric convection `C(y) v = ½ (N(y) v - N(y)ᵀ v)`.
    pub fn convect(&self, y: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for t in &self.conv {
            let c = 0.5 * t.coef * y[t.a];
            out[t.row] += c * v[t.b];
            out[t.b] -= c * v[t.row];
        }
        out
    }

    /// Weighted `L²` product of two staggered vectors.
    pub fn face_dot(&self, a: &[f64], b: &[f64]) -> f64 {
        let h2 = self.grid.h * self.grid.h;
        h2 * a
            .iter()
            .zip(b)
            .zip(&self.face_w)
            .map(|((x, y), w)| w * x * y)
            .sum::<f64>()
    }

    /// Weighted `L²` product of two tensor vectors (Frobenius pointwise).
    pub fn tensor_dot(&self, a: &[f64], b: &[f64]) -> f64 {
        let h2 = self.grid.h * self.grid.h;
        h2 * a
            .iter()
            .zip(b)
            .zip(&self.tensor_w)
            .map(|((x, y), w)| w * x * y)
            .sum::<f64>()
    }

    pub fn l2_norm(&self, y: &[f64]) -> f64 {
        self.face_dot(y, y).sqrt()
    }

    /// `‖∇y‖₂` with the node-centred cross derivatives.
    pub fn grad_norm(&self, y: &[f64]) -> f64 {
        let h2 = self.grid.h * self.grid.h;
        let d = spmv(&self.grad, y);
        (h2 * d.iter().zip(&self.grad_w).map(|(x, w)| w * x * x).sum::<f64>()).sqrt()
    }

    /// `‖Dy‖₂`.
    pub fn sym_grad_norm(&self, y: &[f64]) -> f64 {
        let d = self.sym_gradient(y);
        self.tensor_dot(&d, &d).sqrt()
    }

    /// `‖y‖₁,₂ = (‖y‖₂² + ‖∇y‖₂²)^½`.
    pub fn h1_norm(&self, y: &[f64]) -> f64 {
        (self.face_dot(y, y) + self.grad_norm(y).powi(2)).sqrt()
    }

    /// Componentwise `L^q` norm `(Σ w |y_k|^q)^(1/q)`.
    pub fn lq_norm(&self, y: &[f64], q: f64) -> f64 {
        let h2 = self.grid.h * self.grid.h;
        (h2 * y
            .iter()
            .zip(&self.face_w)
            .map(|(x, w)| w * x.abs().powf(q))
            .sum::<f64>())
        .powf(1.0 / q)
    }
}

/// `A x` for a CSR matrix.
pub fn spmv(a: &CsMat<f64>, x: &[f64]) -> Vec<f64> {
    debug_assert!(a.is_csr());
    debug_assert_eq!(a.cols(), x.len());
    a.outer_iterator()
        .map(|row| row.iter().map(|(c, v)| v * x[c]).sum())
        .collect()
}

/// `Aᵀ x` for a CSR matrix.
pub fn spmv_t(a: &CsMat<f64>, x: &[f64]) -> Vec<f64> {
    debug_assert!(a.is_csr());
    debug_assert_eq!(a.rows(), x.len());
    let mut out = vec![0.0; a.cols()];
    for (r, row) in a.outer_iterator().enumerate() {
        let xr = x[r];
        for (c, v) in row.iter() {
            out[c] += v * xr;
        }
    }
    out
}

fn check_grid(found: (usize, usize), g: &Grid) -> Result<()> {
    if found != (g.nx, g.ny) {
        return Err(Error::ShapeMismatch {
            expected: g.nx * g.ny,
            found: found.0 * found.1,
        });
    }
    Ok(())
}

/// Discrete `Dy`.
pub fn sym_gradient(y: &StaggeredField, g: &Grid) -> Result<SymTensorField> {
    check_grid(y.dims(), g)?;
    let mut out = vec![0.0; tensor_len(g)];
    sym_gradient_entries(g, |r, c, v| out[r] += v * y.as_slice()[c]);
    SymTensorField::from_vec(g, out)
}

/// Discrete `div y` at cell centres.
pub fn divergence(y: &StaggeredField, g: &Grid) -> Result<CellField> {
    check_grid(y.dims(), g)?;
    let mut out = vec![0.0; g.n_cells()];
    divergence_entries(g, |r, c, v| out[r] += v * y.as_slice()[c]);
    CellField::from_vec(g, out)
}

/// Skew-symmetric discrete `y·∇v`.
pub fn convect(y: &StaggeredField, v: &StaggeredField, g: &Grid) -> Result<StaggeredField> {
    check_grid(y.dims(), g)?;
    check_grid(v.dims(), g)?;
    let (y, v) = (y.as_slice(), v.as_slice());
    let mut out = vec![0.0; g.n_vel()];
    for t in convection_terms(g) {
        let c = 0.5 * t.coef * y[t.a];
        out[t.row] += c * v[t.b];
        out[t.b] -= c * v[t.row];
    }
    StaggeredField::from_vec(g, out)
}

/// Discrete `div T`, the negative adjoint of [`sym_gradient`].
pub fn div_stress(t: &SymTensorField, g: &Grid) -> Result<StaggeredField> {
    check_grid(t.dims(), g)?;
    let w = tensor_weights(g);
    let fw = face_weights(g);
    let mut out = vec![0.0; g.n_vel()];
    sym_gradient_entries(g, |r, c, v| out[c] += v * w[r] * t.as_slice()[r]);
    for (o, w) in out.iter_mut().zip(&fw) {
        *o = -*o / w;
    }
    StaggeredField::from_vec(g, out)
}

/// Discrete `∇p` on faces (the negative adjoint of [`divergence`]).
pub fn gradient(p: &PressureField, g: &Grid) -> Result<StaggeredField> {
    check_grid(p.cells().dims(), g)?;
    let fw = face_weights(g);
    let mut out = vec![0.0; g.n_vel()];
    divergence_entries(g, |r, c, v| out[c] += v * p.as_slice()[r]);
    for (o, w) in out.iter_mut().zip(&fw) {
        *o = -*o / w;
    }
    StaggeredField::from_vec(g, out)
}

/// Fields that carry their own quadrature rule.
pub trait Quadrature {
    fn values(&self) -> &[f64];
    fn weight(&self, k: usize, g: &Grid) -> f64;
    fn expected_len(g: &Grid) -> usize;
}

impl Quadrature for StaggeredField {
    fn values(&self) -> &[f64] {
        self.as_slice()
    }
    fn weight(&self, k: usize, g: &Grid) -> f64 {
        g.face_weight(k)
    }
    fn expected_len(g: &Grid) -> usize {
        g.n_vel()
    }
}

impl Quadrature for CellField {
    fn values(&self) -> &[f64] {
        self.as_slice()
    }
    fn weight(&self, _k: usize, g: &Grid) -> f64 {
        g.h * g.h
    }
    fn expected_len(g: &Grid) -> usize {
        g.n_cells()
    }
}

impl Quadrature for PressureField {
    fn values(&self) -> &[f64] {
        self.as_slice()
    }
    fn weight(&self, _k: usize, g: &Grid) -> f64 {
        g.h * g.h
    }
    fn expected_len(g: &Grid) -> usize {
        g.n_cells()
    }
}

/// Discrete `L²(Ω)` inner product.
pub fn inner_product<F: Quadrature>(a: &F, b: &F, g: &Grid) -> Result<f64> {
    let n = F::expected_len(g);
    for len in [a.values().len(), b.values().len()] {
        if len != n {
            return Err(Error::ShapeMismatch {
                expected: n,
                found: len,
            });
        }
    }
    Ok(a
        .values()
        .iter()
        .zip(b.values())
        .enumerate()
        .map(|(k, (x, y))| a.weight(k, g) * x * y)
        .sum())
}

/// Discrete `∫ A : B`.
pub fn tensor_inner_product(a: &SymTensorField, b: &SymTensorField, g: &Grid) -> Result<f64> {
    check_grid(a.dims(), g)?;
    check_grid(b.dims(), g)?;
    let w = tensor_weights(g);
    let h2 = g.h * g.h;
    Ok(h2
        * a.as_slice()
            .iter()
            .zip(b.as_slice())
            .zip(&w)
            .map(|((x, y), w)| w * x * y)
            .sum::<f64>())
}

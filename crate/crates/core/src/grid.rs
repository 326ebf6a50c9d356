//! Uniform MAC grid on a rectangle and the discrete fields living on it.
//!
//! Layout conventions:
//! - x-velocity on vertical faces `(i, j)`, `i in 0..=nx`, `j in 0..ny`, at `(i h, (j+½) h)`
//! - y-velocity on horizontal faces `(i, j)`, `i in 0..nx`, `j in 0..=ny`, at `((i+½) h, j h)`
//! - scalars (pressure, divergence) at cell centres `(i, j)`, `i in 0..nx`, `j in 0..ny`
//! - grid nodes `(i, j)`, `i in 0..=nx`, `j in 0..=ny`, at `(i h, j h)`
//!
//! Staggered fields store both components in one flat vector, x-velocity first,
//! each component row-major with `i` fastest.

use crate::error::{Error, Result};
use crate::tensor::SymMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
}

impl Grid {
    pub fn new(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx < 4 || ny < 4 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 4 cells per direction, got {nx} x {ny}"
            )));
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "domain extents must be positive, got {lx} x {ly}"
            )));
        }
        let hx = lx / nx as f64;
        let hy = ly / ny as f64;
        if (hx - hy).abs() > 1e-12 * hx {
            return Err(Error::InvalidArgument(format!(
                "cells must be square: lx/nx = {hx} but ly/ny = {hy}"
            )));
        }
        Ok(Grid {
            lx,
            ly,
            nx,
            ny,
            h: hx,
        })
    }

    pub fn unit_square(n: usize) -> Result<Self> {
        Grid::new(1.0, 1.0, n, n)
    }

    /// Same domain with twice the resolution.
    pub fn refined(&self) -> Self {
        Grid::new(self.lx, self.ly, 2 * self.nx, 2 * self.ny).expect("refinement of a valid grid")
    }

    #[inline]
    pub fn n_u(&self) -> usize {
        (self.nx + 1) * self.ny
    }
    #[inline]
    pub fn n_v(&self) -> usize {
        self.nx * (self.ny + 1)
    }
    #[inline]
    pub fn n_vel(&self) -> usize {
        self.n_u() + self.n_v()
    }
    #[inline]
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }
    #[inline]
    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    /// Flat index of x-velocity face `(i, j)` in a staggered vector.
    #[inline]
    pub fn u_idx(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }
    /// Flat index of y-velocity face `(i, j)` in a staggered vector.
    #[inline]
    pub fn v_idx(&self, i: usize, j: usize) -> usize {
        self.n_u() + j * self.nx + i
    }
    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
    #[inline]
    pub fn node(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn u_pos(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.h, (j as f64 + 0.5) * self.h)
    }
    pub fn v_pos(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.h, j as f64 * self.h)
    }
    pub fn cell_pos(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.h, (j as f64 + 0.5) * self.h)
    }
    pub fn node_pos(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.h, j as f64 * self.h)
    }

    /// Position of the face with flat staggered index `k`.
    pub fn face_pos(&self, k: usize) -> (f64, f64) {
        if k < self.n_u() {
            self.u_pos(k % (self.nx + 1), k / (self.nx + 1))
        } else {
            let k = k - self.n_u();
            self.v_pos(k % self.nx, k / self.nx)
        }
    }

    /// Whether staggered index `k` is a face normal to the boundary.
    pub fn is_boundary_face(&self, k: usize) -> bool {
        if k < self.n_u() {
            let i = k % (self.nx + 1);
            i == 0 || i == self.nx
        } else {
            let j = (k - self.n_u()) / self.nx;
            j == 0 || j == self.ny
        }
    }

    /// Trapezoidal quadrature weight of staggered entry `k` (boundary faces carry half).
    pub fn face_weight(&self, k: usize) -> f64 {
        let h2 = self.h * self.h;
        if self.is_boundary_face(k) {
            0.5 * h2
        } else {
            h2
        }
    }

    /// Trapezoidal node weight factor: 1 inside, ½ on edges, ¼ at corners.
    pub fn node_factor(&self, i: usize, j: usize) -> f64 {
        let fx = if i == 0 || i == self.nx { 0.5 } else { 1.0 };
        let fy = if j == 0 || j == self.ny { 0.5 } else { 1.0 };
        fx * fy
    }

    /// Flat staggered indices of interior faces, x-velocity faces first.
    pub fn interior_faces(&self) -> Vec<usize> {
        (0..self.n_vel()).filter(|&k| !self.is_boundary_face(k)).collect()
    }
}

/// Velocity-like field on cell faces (velocity, body force, target).
#[derive(Clone, Debug, PartialEq)]
pub struct StaggeredField {
    nx: usize,
    ny: usize,
    data: Vec<f64>,
}

impl StaggeredField {
    pub fn zeros(g: &Grid) -> Self {
        StaggeredField {
            nx: g.nx,
            ny: g.ny,
            data: vec![0.0; g.n_vel()],
        }
    }

    pub fn from_vec(g: &Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != g.n_vel() {
            return Err(Error::ShapeMismatch {
                expected: g.n_vel(),
                found: data.len(),
            });
        }
        Ok(StaggeredField {
            nx: g.nx,
            ny: g.ny,
            data,
        })
    }

    /// Samples `fu` on x-velocity faces and `fv` on y-velocity faces.
    pub fn from_fns(g: &Grid, fu: impl Fn(f64, f64) -> f64, fv: impl Fn(f64, f64) -> f64) -> Self {
        let mut f = Self::zeros(g);
        for j in 0..g.ny {
            for i in 0..=g.nx {
                let (x, y) = g.u_pos(i, j);
                f.data[g.u_idx(i, j)] = fu(x, y);
            }
        }
        for j in 0..=g.ny {
            for i in 0..g.nx {
                let (x, y) = g.v_pos(i, j);
                f.data[g.v_idx(i, j)] = fv(x, y);
            }
        }
        f
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn matches(&self, g: &Grid) -> bool {
        self.nx == g.nx && self.ny == g.ny
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn u_component(&self) -> &[f64] {
        &self.data[..(self.nx + 1) * self.ny]
    }

    pub fn v_component(&self) -> &[f64] {
        &self.data[(self.nx + 1) * self.ny..]
    }

    pub fn u(&self, i: usize, j: usize) -> f64 {
        self.data[j * (self.nx + 1) + i]
    }

    pub fn v(&self, i: usize, j: usize) -> f64 {
        self.data[(self.nx + 1) * self.ny + j * self.nx + i]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Homogeneous Dirichlet role: every boundary-normal face is exactly zero.
    pub fn is_dirichlet(&self, g: &Grid) -> bool {
        (0..g.n_vel()).all(|k| !g.is_boundary_face(k) || self.data[k] == 0.0)
    }

    pub fn enforce_dirichlet(&mut self, g: &Grid) {
        for k in 0..g.n_vel() {
            if g.is_boundary_face(k) {
                self.data[k] = 0.0;
            }
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|x| *x *= a);
        out
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: f64, other: &StaggeredField) -> Self {
        assert_eq!(self.data.len(), other.data.len(), "staggered field shape mismatch");
        let mut out = self.clone();
        for (o, b) in out.data.iter_mut().zip(&other.data) {
            *o += a * b;
        }
        out
    }

    pub fn sub(&self, other: &StaggeredField) -> Self {
        self.axpy(-1.0, other)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
    }
}

/// Scalar field at cell centres.
#[derive(Clone, Debug, PartialEq)]
pub struct CellField {
    nx: usize,
    ny: usize,
    data: Vec<f64>,
}

impl CellField {
    pub fn zeros(g: &Grid) -> Self {
        CellField {
            nx: g.nx,
            ny: g.ny,
            data: vec![0.0; g.n_cells()],
        }
    }

    pub fn from_vec(g: &Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != g.n_cells() {
            return Err(Error::ShapeMismatch {
                expected: g.n_cells(),
                found: data.len(),
            });
        }
        Ok(CellField {
            nx: g.nx,
            ny: g.ny,
            data,
        })
    }

    pub fn from_fn(g: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut c = Self::zeros(g);
        for j in 0..g.ny {
            for i in 0..g.nx {
                let (x, y) = g.cell_pos(i, j);
                c.data[g.cell(i, j)] = f(x, y);
            }
        }
        c
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.nx + i]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
    }
}

/// Pressure at cell centres, gauge-fixed to zero mean.
#[derive(Clone, Debug, PartialEq)]
pub struct PressureField(CellField);

impl PressureField {
    pub fn zeros(g: &Grid) -> Self {
        PressureField(CellField::zeros(g))
    }

    /// Removes the mean so the gauge invariant holds.
    pub fn from_cells(mut c: CellField) -> Self {
        let m = c.mean();
        c.data.iter_mut().for_each(|x| *x -= m);
        PressureField(c)
    }

    pub fn cells(&self) -> &CellField {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }
}

/// Discrete symmetric gradient: diagonal components at cell centres, shear
/// component at grid nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct SymTensorField {
    nx: usize,
    ny: usize,
    /// `[d11 (cells) | d22 (cells) | d12 (nodes)]`
    data: Vec<f64>,
}

impl SymTensorField {
    pub fn zeros(g: &Grid) -> Self {
        SymTensorField {
            nx: g.nx,
            ny: g.ny,
            data: vec![0.0; tensor_len(g)],
        }
    }

    pub fn from_vec(g: &Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != tensor_len(g) {
            return Err(Error::ShapeMismatch {
                expected: tensor_len(g),
                found: data.len(),
            });
        }
        Ok(SymTensorField {
            nx: g.nx,
            ny: g.ny,
            data,
        })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn d11(&self) -> &[f64] {
        &self.data[..self.nx * self.ny]
    }
    pub fn d22(&self) -> &[f64] {
        &self.data[self.nx * self.ny..2 * self.nx * self.ny]
    }
    pub fn d12(&self) -> &[f64] {
        &self.data[2 * self.nx * self.ny..]
    }

    /// Cell-centred symmetric matrix; the shear entry is the mean of the four corner values.
    pub fn at_cell(&self, i: usize, j: usize) -> SymMatrix {
        let c = j * self.nx + i;
        let n = |a: usize, b: usize| self.d12()[b * (self.nx + 1) + a];
        let s = 0.25 * (n(i, j) + n(i + 1, j) + n(i, j + 1) + n(i + 1, j + 1));
        SymMatrix::new2(self.d11()[c], s, self.d22()[c])
    }
}

pub(crate) fn tensor_len(g: &Grid) -> usize {
    2 * g.n_cells() + g.n_nodes()
}

//! Pointwise stress law on the staggered strain layout.
//!
//! Cell rows (`d11`, `d22`) use the strain norm `m_c² = a² + b² + 2·avg₄(s²)`
//! with the shear averaged over the four corners; node rows (`d12`) use
//! `m_n² = 2s² + avg(a² + b²)` over the adjacent cells. Each component is then
//! scaled by `φ(m) = (1 + m)^(α-2)` with `α` sampled at the same location.

use sprs::{CsMat, TriMat};

use crate::error::Result;
use crate::exponent::ExponentField;
use crate::grid::Grid;

/// Floor applied to the effective viscosity.
pub const NU_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct StressMap {
    grid: Grid,
    alpha_cells: Vec<f64>,
    alpha_nodes: Vec<f64>,
    /// Adjacent cells of every node.
    node_cells: Vec<Vec<usize>>,
    /// Corner nodes of every cell.
    cell_nodes: Vec<[usize; 4]>,
}

/// Effective viscosity per strain row together with the strain norms.
#[derive(Clone, Debug)]
pub struct Viscosity {
    pub nu: Vec<f64>,
    pub m_cells: Vec<f64>,
    pub m_nodes: Vec<f64>,
    pub clamped: usize,
}

impl StressMap {
    pub fn new(g: &Grid, field: &ExponentField) -> Result<Self> {
        let mut alpha_cells = Vec::with_capacity(g.n_cells());
        for j in 0..g.ny {
            for i in 0..g.nx {
                let (x, y) = g.cell_pos(i, j);
                alpha_cells.push(field.eval_alpha(x, y)?.get());
            }
        }
        let mut alpha_nodes = Vec::with_capacity(g.n_nodes());
        let mut node_cells = Vec::with_capacity(g.n_nodes());
        for j in 0..=g.ny {
            for i in 0..=g.nx {
                let (x, y) = g.node_pos(i, j);
                alpha_nodes.push(field.eval_alpha(x.min(g.lx), y.min(g.ly))?.get());
                let mut adj = Vec::with_capacity(4);
                for cj in j.saturating_sub(1)..(j + 1).min(g.ny) {
                    for ci in i.saturating_sub(1)..(i + 1).min(g.nx) {
                        adj.push(g.cell(ci, cj));
                    }
                }
                node_cells.push(adj);
            }
        }
        let mut cell_nodes = Vec::with_capacity(g.n_cells());
        for j in 0..g.ny {
            for i in 0..g.nx {
                cell_nodes.push([
                    g.node(i, j),
                    g.node(i + 1, j),
                    g.node(i, j + 1),
                    g.node(i + 1, j + 1),
                ]);
            }
        }
        Ok(StressMap {
            grid: *g,
            alpha_cells,
            alpha_nodes,
            node_cells,
            cell_nodes,
        })
    }

    pub fn alpha_cells(&self) -> &[f64] {
        &self.alpha_cells
    }

    pub fn alpha_nodes(&self) -> &[f64] {
        &self.alpha_nodes
    }

    fn squared_norms(&self, d: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let nc = self.grid.n_cells();
        let (a, b, s) = (&d[..nc], &d[nc..2 * nc], &d[2 * nc..]);
        let mc2 = (0..nc)
            .map(|c| {
                let s2: f64 = self.cell_nodes[c].iter().map(|&n| s[n] * s[n]).sum();
                a[c] * a[c] + b[c] * b[c] + 0.5 * s2
            })
            .collect();
        let mn2 = self
            .node_cells
            .iter()
            .enumerate()
            .map(|(n, adj)| {
                let ab: f64 = adj.iter().map(|&c| a[c] * a[c] + b[c] * b[c]).sum();
                2.0 * s[n] * s[n] + ab / adj.len() as f64
            })
            .collect();
        (mc2, mn2)
    }

    /// Effective viscosity `φ(m)` for each strain row.
    pub fn viscosity(&self, d: &[f64]) -> Viscosity {
        let nc = self.grid.n_cells();
        let (mc2, mn2) = self.squared_norms(d);
        let m_cells: Vec<f64> = mc2.iter().map(|x| x.sqrt()).collect();
        let m_nodes: Vec<f64> = mn2.iter().map(|x| x.sqrt()).collect();
        let mut clamped = 0;
        let mut phi = |m: f64, a: f64| {
            let v = (1.0 + m).powf(a - 2.0);
            if v < NU_FLOOR {
                clamped += 1;
                NU_FLOOR
            } else {
                v
            }
        };
        let mut nu = vec![0.0; d.len()];
        for c in 0..nc {
            let v = phi(m_cells[c], self.alpha_cells[c]);
            nu[c] = v;
            nu[nc + c] = v;
        }
        for (n, &m) in m_nodes.iter().enumerate() {
            nu[2 * nc + n] = phi(m, self.alpha_nodes[n]);
        }
        Viscosity {
            nu,
            m_cells,
            m_nodes,
            clamped,
        }
    }

    /// Discrete extra stress `S(Dy)` in the strain layout.
    pub fn stress(&self, d: &[f64]) -> Vec<f64> {
        let v = self.viscosity(d);
        d.iter().zip(&v.nu).map(|(d, n)| d * n).collect()
    }

    /// `∂T/∂d` as a sparse matrix in the strain layout.
    pub fn jacobian(&self, d: &[f64]) -> CsMat<f64> {
        let nc = self.grid.n_cells();
        let nt = d.len();
        let vis = self.viscosity(d);
        let (a, b, s) = (&d[..nc], &d[nc..2 * nc], &d[2 * nc..]);
        // φ'(m)/m, zero where φ is clamped or m vanishes
        let dphi_over_m = |m: f64, alpha: f64, nu: f64| {
            if m == 0.0 || nu <= NU_FLOOR {
                0.0
            } else {
                (alpha - 2.0) * (1.0 + m).powf(alpha - 3.0) / m
            }
        };
        let mut t = TriMat::with_capacity((nt, nt), 12 * nt);
        for c in 0..nc {
            let q = dphi_over_m(vis.m_cells[c], self.alpha_cells[c], vis.nu[c]);
            // ∂m²/∂z halved: a, b and s_n/2 per corner
            let mut deps = vec![(c, a[c]), (nc + c, b[c])];
            for &n in &self.cell_nodes[c] {
                deps.push((2 * nc + n, 0.5 * s[n]));
            }
            for (row, val) in [(c, a[c]), (nc + c, b[c])] {
                t.add_triplet(row, row, vis.nu[row]);
                if q != 0.0 {
                    for &(z, dz) in &deps {
                        t.add_triplet(row, z, q * val * dz);
                    }
                }
            }
        }
        for (n, adj) in self.node_cells.iter().enumerate() {
            let row = 2 * nc + n;
            t.add_triplet(row, row, vis.nu[row]);
            let q = dphi_over_m(vis.m_nodes[n], self.alpha_nodes[n], vis.nu[row]);
            if q == 0.0 {
                continue;
            }
            let k = adj.len() as f64;
            t.add_triplet(row, row, q * s[n] * 2.0 * s[n]);
            for &c in adj {
                t.add_triplet(row, c, q * s[n] * a[c] / k);
                t.add_triplet(row, nc + c, q * s[n] * b[c] / k);
            }
        }
        t.to_csr()
    }

    /// Pointwise coercivity constant of the current state: `nu_mono·φ(m)` where
    /// `α < 2`, and 1 elsewhere.
    pub fn coercivity(&self, d: &[f64], nu_mono: f64) -> f64 {
        let vis = self.viscosity(d);
        let nc = self.grid.n_cells();
        let mut c = f64::INFINITY;
        for k in 0..nc {
            let a = self.alpha_cells[k];
            c = c.min(if a >= 2.0 { 1.0 } else { nu_mono * vis.nu[k] });
        }
        for (n, &a) in self.alpha_nodes.iter().enumerate() {
            c = c.min(if a >= 2.0 { 1.0 } else { nu_mono * vis.nu[2 * nc + n] });
        }
        c
    }
}

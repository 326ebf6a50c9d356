//! Spatially varying exponent `α(x)` over the rectangle `[0, lx] x [0, ly]`.

use crate::dual::{Dual2, Real};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::tensor::{ExponentValue, TensorConstants};

/// Samples on a uniform `mx x my` lattice of nodes covering the closed domain,
/// row-major with `i` (along x1) fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct GriddedSamples {
    pub mx: usize,
    pub my: usize,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ExponentKind {
    Constant(f64),
    Expression(Expr),
    Gridded(GriddedSamples),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExponentField {
    kind: ExponentKind,
    lx: f64,
    ly: f64,
    alpha0: f64,
    alpha_inf: f64,
    holder_gamma: f64,
    holder_budget: Option<f64>,
}

const LATTICE: usize = 201;
const DEFAULT_GAMMA: f64 = 0.5;

fn check_bounds(alpha0: f64, alpha_inf: f64) -> Result<()> {
    if !(alpha0 > 1.0) {
        return Err(Error::Invariant(format!(
            "exponent lower bound must satisfy alpha0 > 1, got {alpha0}"
        )));
    }
    if !(alpha_inf >= alpha0 && alpha_inf.is_finite()) {
        return Err(Error::Invariant(format!(
            "exponent upper bound must be finite and >= alpha0 = {alpha0}, got {alpha_inf}"
        )));
    }
    Ok(())
}

impl ExponentField {
    pub fn constant(value: f64, lx: f64, ly: f64) -> Result<Self> {
        check_bounds(value, value)?;
        Ok(ExponentField {
            kind: ExponentKind::Constant(value),
            lx,
            ly,
            alpha0: value,
            alpha_inf: value,
            holder_gamma: DEFAULT_GAMMA,
            holder_budget: None,
        })
    }

    /// Analytic exponent. Without declared bounds, `alpha0`/`alpha_inf` are the
    /// extremes over a 201 x 201 lattice; declared bounds are checked on it.
    pub fn expression(expr: Expr, lx: f64, ly: f64, bounds: Option<(f64, f64)>) -> Result<Self> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for j in 0..LATTICE {
            for i in 0..LATTICE {
                let x = lx * i as f64 / (LATTICE - 1) as f64;
                let y = ly * j as f64 / (LATTICE - 1) as f64;
                let a: f64 = expr.eval(x, y);
                if !a.is_finite() {
                    return Err(Error::Invariant(format!(
                        "exponent expression `{}` is not finite at ({x}, {y})",
                        expr.source()
                    )));
                }
                lo = lo.min(a);
                hi = hi.max(a);
            }
        }
        let (alpha0, alpha_inf) = match bounds {
            Some((a0, ainf)) => {
                if lo < a0 || hi > ainf {
                    return Err(Error::Invariant(format!(
                        "exponent expression `{}` takes values in [{lo}, {hi}], outside declared bounds [{a0}, {ainf}]",
                        expr.source()
                    )));
                }
                (a0, ainf)
            }
            None => (lo, hi),
        };
        check_bounds(alpha0, alpha_inf)?;
        Ok(ExponentField {
            kind: ExponentKind::Expression(expr),
            lx,
            ly,
            alpha0,
            alpha_inf,
            holder_gamma: DEFAULT_GAMMA,
            holder_budget: None,
        })
    }

    pub fn gridded(samples: GriddedSamples, lx: f64, ly: f64) -> Result<Self> {
        if samples.mx < 2 || samples.my < 2 {
            return Err(Error::InvalidArgument(
                "gridded exponent needs at least 2 x 2 samples".into(),
            ));
        }
        if samples.values.len() != samples.mx * samples.my {
            return Err(Error::ShapeMismatch {
                expected: samples.mx * samples.my,
                found: samples.values.len(),
            });
        }
        let lo = samples.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = samples.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        check_bounds(lo, hi)?;
        Ok(ExponentField {
            kind: ExponentKind::Gridded(samples),
            lx,
            ly,
            alpha0: lo,
            alpha_inf: hi,
            holder_gamma: DEFAULT_GAMMA,
            holder_budget: None,
        })
    }

    /// Declares the Hölder exponent and an optional seminorm budget used by
    /// [`ExponentField::check_holder_budget`].
    pub fn with_holder(mut self, gamma: f64, budget: Option<f64>) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "Hölder exponent must lie in (0, 1), got {gamma}"
            )));
        }
        self.holder_gamma = gamma;
        self.holder_budget = budget;
        Ok(self)
    }

    pub fn kind(&self) -> &ExponentKind {
        &self.kind
    }
    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }
    pub fn alpha_inf(&self) -> f64 {
        self.alpha_inf
    }
    pub fn holder_gamma(&self) -> f64 {
        self.holder_gamma
    }
    pub fn holder_budget(&self) -> Option<f64> {
        self.holder_budget
    }
    pub fn extents(&self) -> (f64, f64) {
        (self.lx, self.ly)
    }

    pub fn constants(&self) -> TensorConstants {
        TensorConstants::from_bounds(self.alpha0, self.alpha_inf)
            .expect("bounds validated at construction")
    }

    fn check_point(&self, x: f64, y: f64) -> Result<()> {
        let tx = 1e-12 * self.lx;
        let ty = 1e-12 * self.ly;
        if !(x >= -tx && x <= self.lx + tx && y >= -ty && y <= self.ly + ty) {
            return Err(Error::OutOfDomain {
                x,
                y,
                lx: self.lx,
                ly: self.ly,
            });
        }
        Ok(())
    }

    pub fn eval_alpha(&self, x: f64, y: f64) -> Result<ExponentValue> {
        self.check_point(x, y)?;
        let a = self.raw(x, y).v;
        if !(a >= self.alpha0 && a <= self.alpha_inf) {
            return Err(Error::Invariant(format!(
                "alpha({x}, {y}) = {a} lies outside [{}, {}]",
                self.alpha0, self.alpha_inf
            )));
        }
        ExponentValue::new(a)
    }

    /// `α` and its gradient at `(x, y)`. Gridded fields report the gradient of
    /// the bilinear patch containing the point.
    pub fn eval_with_gradient(&self, x: f64, y: f64) -> Result<Dual2> {
        self.check_point(x, y)?;
        Ok(self.raw(x, y))
    }

    fn raw(&self, x: f64, y: f64) -> Dual2 {
        match &self.kind {
            ExponentKind::Constant(a) => Dual2::constant(*a),
            ExponentKind::Expression(e) => e.eval(Dual2::var_x(x), Dual2::var_y(y)),
            ExponentKind::Gridded(g) => bilinear(g, self.lx, self.ly, x, y),
        }
    }

    /// Pairwise estimate `max |α(p)-α(q)| / |p-q|^γ` over the given points.
    /// This is a lower bound on the true seminorm.
    pub fn holder_seminorm(&self, gamma: f64, points: &[(f64, f64)]) -> Result<f64> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "Hölder exponent must lie in (0, 1), got {gamma}"
            )));
        }
        if points.len() < 2 {
            return Err(Error::InvalidArgument(
                "Hölder seminorm needs at least two sample points".into(),
            ));
        }
        let values = points
            .iter()
            .map(|&(x, y)| self.eval_alpha(x, y).map(ExponentValue::get))
            .collect::<Result<Vec<_>>>()?;
        let mut best: f64 = 0.0;
        for a in 0..points.len() {
            for b in (a + 1)..points.len() {
                let (dx, dy) = (points[a].0 - points[b].0, points[a].1 - points[b].1);
                let dist = dx.hypot(dy);
                if dist == 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "coincident sample points {a} and {b} at ({}, {})",
                        points[a].0, points[a].1
                    )));
                }
                best = best.max((values[a] - values[b]).abs() / dist.powf(gamma));
            }
        }
        Ok(best)
    }

    /// Estimates the seminorm at the declared exponent on an `n x n` lattice and
    /// compares it with the budget, if one is set.
    pub fn check_holder_budget(&self, n: usize) -> Result<f64> {
        let pts = lattice_points(self.lx, self.ly, n);
        let est = self.holder_seminorm(self.holder_gamma, &pts)?;
        if let Some(budget) = self.holder_budget {
            if est > budget {
                return Err(Error::Invariant(format!(
                    "Hölder seminorm estimate {est} exceeds declared budget {budget}"
                )));
            }
        }
        Ok(est)
    }
}

/// Uniform `n x n` lattice including the boundary.
pub fn lattice_points(lx: f64, ly: f64, n: usize) -> Vec<(f64, f64)> {
    let n = n.max(2);
    let mut pts = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            pts.push((
                lx * i as f64 / (n - 1) as f64,
                ly * j as f64 / (n - 1) as f64,
            ));
        }
    }
    pts
}

fn locate(t: f64, cells: usize) -> (usize, f64) {
    let r = t.round();
    if (t - r).abs() < 1e-12 {
        let k = (r.max(0.0) as usize).min(cells);
        return if k == cells { (cells - 1, 1.0) } else { (k, 0.0) };
    }
    let k = (t.floor().max(0.0) as usize).min(cells - 1);
    (k, (t - k as f64).clamp(0.0, 1.0))
}

fn bilinear(g: &GriddedSamples, lx: f64, ly: f64, x: f64, y: f64) -> Dual2 {
    let (cx, cy) = (g.mx - 1, g.my - 1);
    let hx = lx / cx as f64;
    let hy = ly / cy as f64;
    let (i, s) = locate(x / hx, cx);
    let (j, t) = locate(y / hy, cy);
    let at = |i: usize, j: usize| g.values[j * g.mx + i];
    let (v00, v10, v01, v11) = (at(i, j), at(i + 1, j), at(i, j + 1), at(i + 1, j + 1));
    // exact zero weights so that nodes are reproduced bit-for-bit
    let w = |a: f64, b: f64, wa: f64, wb: f64| {
        let mut acc = 0.0;
        if wa != 0.0 {
            acc += wa * a;
        }
        if wb != 0.0 {
            acc += wb * b;
        }
        acc
    };
    let lower = w(v00, v10, 1.0 - s, s);
    let upper = w(v01, v11, 1.0 - s, s);
    let v = w(lower, upper, 1.0 - t, t);
    let dx = ((1.0 - t) * (v10 - v00) + t * (v11 - v01)) / hx;
    let dy = ((1.0 - s) * (v01 - v00) + s * (v11 - v10)) / hy;
    Dual2::new(v, dx, dy)
}

//! First-order forward-mode dual numbers over two spatial variables.
//!
//! Used to differentiate exponent expressions and stress fluxes when building
//! manufactured forcing terms.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar operations shared by `f64` and [`Dual2`], enough to evaluate the
/// whitelisted expression language.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(c: f64) -> Self;
    fn value(self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn powf(self, e: Self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn min(self, other: Self) -> Self;
    fn max(self, other: Self) -> Self;
}

impl Real for f64 {
    fn constant(c: f64) -> Self {
        c
    }
    fn value(self) -> f64 {
        self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn powf(self, e: Self) -> Self {
        f64::powf(self, e)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn min(self, other: Self) -> Self {
        f64::min(self, other)
    }
    fn max(self, other: Self) -> Self {
        f64::max(self, other)
    }
}

/// Value with its gradient with respect to `(x1, x2)`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Dual2 {
    pub v: f64,
    pub dx: f64,
    pub dy: f64,
}

impl Dual2 {
    pub const fn new(v: f64, dx: f64, dy: f64) -> Self {
        Dual2 { v, dx, dy }
    }

    pub const fn var_x(x: f64) -> Self {
        Dual2::new(x, 1.0, 0.0)
    }

    pub const fn var_y(y: f64) -> Self {
        Dual2::new(y, 0.0, 1.0)
    }

    #[inline]
    fn chain(self, f: f64, df: f64) -> Self {
        Dual2::new(f, df * self.dx, df * self.dy)
    }
}

impl Add for Dual2 {
    type Output = Dual2;
    fn add(self, o: Dual2) -> Dual2 {
        Dual2::new(self.v + o.v, self.dx + o.dx, self.dy + o.dy)
    }
}

impl Sub for Dual2 {
    type Output = Dual2;
    fn sub(self, o: Dual2) -> Dual2 {
        Dual2::new(self.v - o.v, self.dx - o.dx, self.dy - o.dy)
    }
}

impl Mul for Dual2 {
    type Output = Dual2;
    fn mul(self, o: Dual2) -> Dual2 {
        Dual2::new(
            self.v * o.v,
            self.dx * o.v + self.v * o.dx,
            self.dy * o.v + self.v * o.dy,
        )
    }
}

impl Div for Dual2 {
    type Output = Dual2;
    fn div(self, o: Dual2) -> Dual2 {
        let inv = 1.0 / o.v;
        let q = self.v * inv;
        Dual2::new(q, (self.dx - q * o.dx) * inv, (self.dy - q * o.dy) * inv)
    }
}

impl Neg for Dual2 {
    type Output = Dual2;
    fn neg(self) -> Dual2 {
        Dual2::new(-self.v, -self.dx, -self.dy)
    }
}

impl Real for Dual2 {
    fn constant(c: f64) -> Self {
        Dual2::new(c, 0.0, 0.0)
    }
    fn value(self) -> f64 {
        self.v
    }
    fn sin(self) -> Self {
        self.chain(self.v.sin(), self.v.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.v.cos(), -self.v.sin())
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }
    fn ln(self) -> Self {
        self.chain(self.v.ln(), 1.0 / self.v)
    }
    /// Derivative is taken as zero at the origin, where `sqrt` of a squared
    /// norm is only used multiplied by quantities that vanish there.
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        if s == 0.0 {
            Dual2::new(0.0, 0.0, 0.0)
        } else {
            self.chain(s, 0.5 / s)
        }
    }
    fn abs(self) -> Self {
        if self.v < 0.0 {
            -self
        } else {
            self
        }
    }
    fn powf(self, e: Self) -> Self {
        let p = self.v.powf(e.v);
        // d(a^b) = b a^(b-1) da + a^b ln(a) db
        let da = if self.v == 0.0 {
            0.0
        } else {
            e.v * self.v.powf(e.v - 1.0)
        };
        let lnb = if e.dx == 0.0 && e.dy == 0.0 {
            0.0
        } else {
            p * self.v.ln()
        };
        Dual2::new(p, da * self.dx + lnb * e.dx, da * self.dy + lnb * e.dy)
    }
    fn powi(self, n: i32) -> Self {
        let p = self.v.powi(n);
        let d = if n == 0 {
            0.0
        } else {
            n as f64 * self.v.powi(n - 1)
        };
        self.chain(p, d)
    }
    fn min(self, other: Self) -> Self {
        if other.v < self.v {
            other
        } else {
            self
        }
    }
    fn max(self, other: Self) -> Self {
        if other.v > self.v {
            other
        } else {
            self
        }
    }
}

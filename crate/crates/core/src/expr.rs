//! Whitelisted analytic expressions in the spatial coordinates.
//!
//! Grammar (usual precedence, `^` right-associative):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | x1 | x2 | x | y | pi | func '(' args ')' | '(' expr ')'
//! ```
//!
//! Functions: `sin cos exp ln sqrt abs` (one argument) and `min max` (two).

use crate::dual::Real;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Num(f64),
    X1,
    X2,
    Neg(Box<Node>),
    Bin(Op, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Min,
    Max,
}

impl Func {
    fn lookup(name: &str) -> Option<(Func, usize)> {
        Some(match name {
            "sin" => (Func::Sin, 1),
            "cos" => (Func::Cos, 1),
            "exp" => (Func::Exp, 1),
            "ln" => (Func::Ln, 1),
            "sqrt" => (Func::Sqrt, 1),
            "abs" => (Func::Abs, 1),
            "min" => (Func::Min, 2),
            "max" => (Func::Max, 2),
            _ => return None,
        })
    }
}

/// Parsed expression in `x1`, `x2` (aliases `x`, `y`).
#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self> {
        let mut p = Parser {
            src: src.as_bytes(),
            pos: 0,
        };
        let root = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(Expr {
            source: src.to_string(),
            root,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval<T: Real>(&self, x1: T, x2: T) -> T {
        eval(&self.root, x1, x2)
    }
}

fn eval<T: Real>(n: &Node, x1: T, x2: T) -> T {
    match n {
        Node::Num(c) => T::constant(*c),
        Node::X1 => x1,
        Node::X2 => x2,
        Node::Neg(a) => -eval(a, x1, x2),
        Node::Bin(op, a, b) => {
            let a = eval(a, x1, x2);
            // integer powers keep derivatives well defined at a zero base
            if let (Op::Pow, Node::Num(e)) = (op, b.as_ref()) {
                if e.fract() == 0.0 && e.abs() < 64.0 {
                    return a.powi(*e as i32);
                }
            }
            let b = eval(b, x1, x2);
            match op {
                Op::Add => a + b,
                Op::Sub => a - b,
                Op::Mul => a * b,
                Op::Div => a / b,
                Op::Pow => a.powf(b),
            }
        }
        Node::Call(f, args) => {
            let a = eval(&args[0], x1, x2);
            match f {
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Exp => a.exp(),
                Func::Ln => a.ln(),
                Func::Sqrt => a.sqrt(),
                Func::Abs => a.abs(),
                Func::Min => a.min(eval(&args[1], x1, x2)),
                Func::Max => a.max(eval(&args[1], x1, x2)),
            }
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Expression {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => Op::Add,
                Some(b'-') => Op::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => Op::Mul,
                Some(b'/') => Op::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat(b'-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let e = self.unary()?;
            return Ok(Node::Bin(Op::Pow, Box::new(base), Box::new(e)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.peek() {
            None => Err(self.err("unexpected end of expression")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.err("expected `)`"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            Some(_) => Err(self.err("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        while self.pos < self.src.len() {
            let c = self.src[self.pos];
            let exp_sign = (c == b'+' || c == b'-')
                && self.pos > start
                && matches!(self.src[self.pos - 1], b'e' | b'E');
            if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exp_sign {
                self.pos += 1;
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>().map(Node::Num).map_err(|_| Error::Expression {
            pos: start,
            msg: format!("invalid number `{text}`"),
        })
    }

    fn ident(&mut self) -> Result<Node> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        match name {
            "x1" | "x" => return Ok(Node::X1),
            "x2" | "y" => return Ok(Node::X2),
            "pi" => return Ok(Node::Num(std::f64::consts::PI)),
            _ => {}
        }
        let (f, arity) = Func::lookup(name).ok_or_else(|| Error::Expression {
            pos: start,
            msg: format!("unknown identifier `{name}`"),
        })?;
        if !self.eat(b'(') {
            return Err(self.err("expected `(` after function name"));
        }
        let mut args = vec![self.expr()?];
        while self.eat(b',') {
            args.push(self.expr()?);
        }
        if !self.eat(b')') {
            return Err(self.err("expected `)`"));
        }
        if args.len() != arity {
            return Err(Error::Expression {
                pos: start,
                msg: format!("`{name}` takes {arity} argument(s), got {}", args.len()),
            });
        }
        Ok(Node::Call(f, args))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::Dual2;
    use std::f64::consts::PI;

    fn ev(s: &str, x: f64, y: f64) -> f64 {
        Expr::parse(s).unwrap().eval(x, y)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1+2*3", 0.0, 0.0), 7.0);
        assert_eq!(ev("2^3^2", 0.0, 0.0), 512.0);
        assert_eq!(ev("-2^2", 0.0, 0.0), -4.0);
        assert_eq!(ev("(1+2)*3", 0.0, 0.0), 9.0);
        assert_eq!(ev("8/4/2", 0.0, 0.0), 1.0);
        assert_eq!(ev("1.5e1 - 2E-1", 0.0, 0.0), 14.8);
    }

    #[test]
    fn variables_and_functions() {
        assert!((ev("2+0.5*sin(pi*x1)", 0.5, 0.3) - 2.5).abs() < 1e-15);
        assert_eq!(ev("x + 10*y", 1.0, 2.0), 21.0);
        assert_eq!(ev("min(2, 2+0.5*sin(pi*x))", 0.5, 0.0), 2.0);
        assert_eq!(ev("max(x1, x2)", 0.25, 0.75), 0.75);
        assert!((ev("exp(ln(3))", 0.0, 0.0) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_unknown_names_and_garbage() {
        assert!(Expr::parse("foo(x)").is_err());
        assert!(Expr::parse("z + 1").is_err());
        assert!(Expr::parse("sin(x, y)").is_err());
        assert!(Expr::parse("1 +").is_err());
        assert!(Expr::parse("(1").is_err());
        assert!(Expr::parse("1 2").is_err());
        assert!(Expr::parse("x; rm").is_err());
    }

    #[test]
    fn dual_evaluation_gives_gradient() {
        let e = Expr::parse("2 + 0.5*sin(pi*x1)*x2^2").unwrap();
        let d = e.eval(Dual2::var_x(0.3), Dual2::var_y(0.6));
        assert!((d.dx - 0.5 * PI * (PI * 0.3).cos() * 0.36).abs() < 1e-14);
        assert!((d.dy - 0.5 * (PI * 0.3).sin() * 1.2).abs() < 1e-14);
    }
}

//! Real-valued defining-function expressions over `z`, `w` and their
//! conjugates, with plain evaluation and forward-mode Wirtinger jets.
//!
//! Variables are stored as flat coordinate indices: `z1..zl` occupy
//! `0..l`, `w1..wm` occupy `l..l+m`, and the path parameter `t` (when
//! allowed) sits at `l+m`.

mod jet;
mod parse;

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use thiserror::Error;

pub use jet::{gradient, Gradient};
pub use parse::parse;

pub type C64 = Complex<f64>;

/// Denominators below this magnitude are rejected.
pub const DIV_EPS: f64 = 1e-300;
/// Relative tolerance for treating a value as real.
pub const REAL_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown variable `{name}` (declared l={l}, m={m})")]
    UnknownVariable { name: String, l: usize, m: usize },
    #[error("denominator magnitude {0:e} is below 1e-300")]
    DivisionNearZero(f64),
    #[error("expression is not real-valued here (imaginary part {imag:e}, value {real:e})")]
    NotRealValued { real: f64, imag: f64 },
    #[error("point has {got} coordinates, expression expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, ExprError>;

/// Variable dimensions an expression is parsed against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub l: usize,
    pub m: usize,
    /// Whether the path parameter `t` is a legal variable.
    pub t: bool,
}

impl Dims {
    pub fn new(l: usize, m: usize) -> Self {
        Dims { l, m, t: false }
    }

    /// Dimensions for path expressions: `t` only.
    pub fn path() -> Self {
        Dims { l: 0, m: 0, t: true }
    }

    pub fn n_coords(&self) -> usize {
        self.l + self.m + usize::from(self.t)
    }

    pub(crate) fn var_name(&self, idx: usize) -> String {
        if idx < self.l {
            format!("z{}", idx + 1)
        } else if idx < self.l + self.m {
            format!("w{}", idx - self.l + 1)
        } else {
            "t".to_string()
        }
    }
}

/// Holomorphic unary functions allowed in path expressions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Exp,
    Cos,
    Sin,
}

impl Func {
    pub(crate) fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Cos => "cos",
            Func::Sin => "sin",
        }
    }

    /// Value, first and second derivative at `x`.
    pub(crate) fn eval3(self, x: C64) -> (C64, C64, C64) {
        match self {
            Func::Exp => {
                let e = x.exp();
                (e, e, e)
            }
            Func::Cos => (x.cos(), -x.sin(), -x.cos()),
            Func::Sin => (x.sin(), x.cos(), -x.sin()),
        }
    }
}

/// Normalized expression tree.
#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Lit(C64),
    Var(usize),
    Conj(Box<Node>),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, i32),
    Func(Func, Box<Node>),
}

/// A parsed expression together with the dimensions it was parsed under.
#[derive(Clone, Debug, PartialEq)]
pub struct Expression {
    pub root: Node,
    pub dims: Dims,
}

impl Expression {
    pub fn n_coords(&self) -> usize {
        self.dims.n_coords()
    }

    /// Evaluate at a flat coordinate vector.
    pub fn eval(&self, x: &[C64]) -> Result<C64> {
        self.check_len(x.len())?;
        eval_node(&self.root, x)
    }

    /// Evaluate a path expression at real parameter `t`.
    pub fn eval_t(&self, t: f64) -> Result<C64> {
        let mut x = vec![C64::new(0.0, 0.0); self.n_coords()];
        if let Some(last) = x.last_mut() {
            *last = C64::new(t, 0.0);
        }
        self.eval(&x)
    }

    /// Derivative of a path expression with respect to the real parameter `t`.
    pub fn deriv_t(&self, t: f64) -> Result<(C64, C64)> {
        let mut x = vec![C64::new(0.0, 0.0); self.n_coords()];
        let k = x.len() - 1;
        x[k] = C64::new(t, 0.0);
        let g = gradient(self, &x)?;
        // t real: d/dt = d/dτ + d/dτ̄
        Ok((g.value, g.hol[k] + g.anti[k]))
    }

    pub(crate) fn check_len(&self, got: usize) -> Result<()> {
        if got != self.n_coords() {
            return Err(ExprError::DimensionMismatch { expected: self.n_coords(), got });
        }
        Ok(())
    }

    /// Whether any variable with flat index in `range` occurs.
    pub fn uses_vars(&self, range: std::ops::Range<usize>) -> bool {
        fn walk(n: &Node, r: &std::ops::Range<usize>) -> bool {
            match n {
                Node::Lit(_) => false,
                Node::Var(i) => r.contains(i),
                Node::Conj(a) | Node::Neg(a) | Node::Pow(a, _) | Node::Func(_, a) => walk(a, r),
                Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                    walk(a, r) || walk(b, r)
                }
            }
        }
        walk(&self.root, &range)
    }
}

fn eval_node(n: &Node, x: &[C64]) -> Result<C64> {
    Ok(match n {
        Node::Lit(c) => *c,
        Node::Var(i) => x[*i],
        Node::Conj(a) => eval_node(a, x)?.conj(),
        Node::Neg(a) => -eval_node(a, x)?,
        Node::Add(a, b) => eval_node(a, x)? + eval_node(b, x)?,
        Node::Sub(a, b) => eval_node(a, x)? - eval_node(b, x)?,
        Node::Mul(a, b) => eval_node(a, x)? * eval_node(b, x)?,
        Node::Div(a, b) => {
            let num = eval_node(a, x)?;
            let den = eval_node(b, x)?;
            check_den(den)?;
            num / den
        }
        Node::Pow(a, k) => {
            let base = eval_node(a, x)?;
            if *k < 0 {
                check_den(base)?;
            }
            base.powi(*k)
        }
        Node::Func(f, a) => f.eval3(eval_node(a, x)?).0,
    })
}

pub(crate) fn check_den(d: C64) -> Result<()> {
    if d.norm() < DIV_EPS {
        Err(ExprError::DivisionNearZero(d.norm()))
    } else {
        Ok(())
    }
}

/// A point of ℂ^ℓ × ℂ^m.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    pub z: DVector<C64>,
    pub w: DVector<C64>,
}

impl Point {
    pub fn new(z: DVector<C64>, w: DVector<C64>) -> Self {
        Point { z, w }
    }

    pub fn from_slices(z: &[C64], w: &[C64]) -> Self {
        Point { z: DVector::from_column_slice(z), w: DVector::from_column_slice(w) }
    }

    /// Flat `(z, w)` coordinates.
    pub fn flat(&self) -> Vec<C64> {
        self.z.iter().chain(self.w.iter()).copied().collect()
    }

    pub fn from_flat(x: &[C64], l: usize) -> Self {
        Point::from_slices(&x[..l], &x[l..])
    }
}

/// Value and first/second Wirtinger derivatives of a real expression.
///
/// Second-order blocks are indexed `[σ][i]` = ∂²/∂ā_σ ∂b_i.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub dz: DVector<C64>,
    pub dw: DVector<C64>,
    pub h_zbar_z: DMatrix<C64>,
    pub h_zbar_w: DMatrix<C64>,
    pub h_wbar_z: DMatrix<C64>,
    pub h_wbar_w: DMatrix<C64>,
}

/// First and mixed second Wirtinger derivatives of a real-valued expression.
pub fn jet2(e: &Expression, x: &Point) -> Result<Jet2> {
    let (l, m) = (e.dims.l, e.dims.m);
    if x.z.len() != l || x.w.len() != m {
        return Err(ExprError::DimensionMismatch { expected: l + m, got: x.z.len() + x.w.len() });
    }
    let flat = x.flat();
    let full = jet::full_jet(e, &flat)?;
    let v = full.value;
    if v.im.abs() > REAL_TOL * (1.0 + v.re.abs()) {
        return Err(ExprError::NotRealValued { real: v.re, imag: v.im });
    }
    let n = l + m;
    let h = |row: usize, col: usize| full.hess[row * 2 * n + col];
    Ok(Jet2 {
        value: v.re,
        dz: DVector::from_fn(l, |i, _| full.grad[i]),
        dw: DVector::from_fn(m, |j, _| full.grad[l + j]),
        h_zbar_z: DMatrix::from_fn(l, l, |s, i| h(n + s, i)),
        h_zbar_w: DMatrix::from_fn(l, m, |s, j| h(n + s, l + j)),
        h_wbar_z: DMatrix::from_fn(m, l, |s, i| h(n + l + s, i)),
        h_wbar_w: DMatrix::from_fn(m, m, |s, j| h(n + l + s, l + j)),
    })
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        parse::print(&self.root, &self.dims, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn sphere_evaluates_to_zero_on_sphere() {
        let e = parse("z1*conj(z1)+z2*conj(z2)-1", Dims::new(2, 0)).unwrap();
        assert_eq!(e.eval(&[c(1.0, 0.0), c(0.0, 0.0)]).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn shifted_circle_vanishes() {
        let e = parse("(w1-z1)*conj(w1-z1)-1", Dims::new(2, 1)).unwrap();
        let v = e.eval(&[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert!(v.norm() < 1e-15);
    }

    #[test]
    fn conj_of_literal_point() {
        let e = parse("conj(z1)", Dims::new(1, 0)).unwrap();
        assert_eq!(e.eval(&[c(2.0, 1.0)]).unwrap(), c(2.0, -1.0));
    }

    #[test]
    fn division_by_zero_is_an_error() {
        let e = parse("1/z1", Dims::new(1, 0)).unwrap();
        assert!(matches!(e.eval(&[c(0.0, 0.0)]), Err(ExprError::DivisionNearZero(_))));
        let e = parse("z1^-2", Dims::new(1, 0)).unwrap();
        assert!(matches!(e.eval(&[c(0.0, 0.0)]), Err(ExprError::DivisionNearZero(_))));
    }

    #[test]
    fn jet_of_abs2_w() {
        let e = parse("w1*conj(w1)", Dims::new(0, 1)).unwrap();
        let j = jet2(&e, &Point::from_slices(&[], &[c(2.0, 1.0)])).unwrap();
        assert_eq!(j.value, 5.0);
        assert_eq!(j.dw[0], c(2.0, -1.0));
        assert_eq!(j.h_wbar_w[(0, 0)], c(1.0, 0.0));
    }

    #[test]
    fn jet_of_shifted_circle() {
        let e = parse("(w1-z1)*conj(w1-z1)-1", Dims::new(2, 1)).unwrap();
        let x = Point::from_slices(&[c(0.0, 0.0), c(1.0, 0.0)], &[c(1.0, 0.0)]);
        let j = jet2(&e, &x).unwrap();
        assert_eq!(j.value, 0.0);
        assert_eq!(j.dz.as_slice(), &[c(-1.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(j.dw[0], c(1.0, 0.0));
        assert_eq!(j.h_zbar_w.as_slice(), &[c(-1.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(j.h_wbar_w[(0, 0)], c(1.0, 0.0));
        assert_eq!(j.h_wbar_z[(0, 0)], c(-1.0, 0.0));
        assert_eq!(j.h_zbar_z[(0, 0)], c(1.0, 0.0));
    }

    #[test]
    fn jet_rejects_complex_values() {
        let e = parse("i*z1", Dims::new(1, 0)).unwrap();
        let r = jet2(&e, &Point::from_slices(&[c(1.0, 0.0)], &[]));
        assert!(matches!(r, Err(ExprError::NotRealValued { .. })));
    }

    #[test]
    fn path_derivative() {
        let e = parse("cos(t)+i*sin(t)", Dims::path()).unwrap();
        let (v, d) = e.deriv_t(0.3).unwrap();
        assert!((v - c(0.3f64.cos(), 0.3f64.sin())).norm() < 1e-15);
        assert!((d - c(-(0.3f64.sin()), 0.3f64.cos())).norm() < 1e-15);
    }
}

//! Forward-mode propagation over the Wirtinger coordinates
//! (ζ_1..ζ_n, ζ̄_1..ζ̄_n), treated as 2n independent variables.

use super::{check_den, Expression, Node, Result, C64};

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Value with gradient (length 2n) and, at order 2, a row-major 2n×2n Hessian.
#[derive(Clone, Debug)]
pub(super) struct Dual {
    pub value: C64,
    pub grad: Vec<C64>,
    pub hess: Vec<C64>,
}

struct Ctx {
    n: usize,
    second: bool,
}

impl Ctx {
    fn dim(&self) -> usize {
        2 * self.n
    }

    fn constant(&self, v: C64) -> Dual {
        let d = self.dim();
        Dual { value: v, grad: vec![ZERO; d], hess: if self.second { vec![ZERO; d * d] } else { Vec::new() } }
    }

    fn var(&self, i: usize, v: C64) -> Dual {
        let mut out = self.constant(v);
        out.grad[i] = ONE;
        out
    }

    /// Swap holomorphic and antiholomorphic halves and conjugate.
    fn conj(&self, a: Dual) -> Dual {
        let n = self.n;
        let d = self.dim();
        let swap = |k: usize| if k < n { k + n } else { k - n };
        let grad = (0..d).map(|k| a.grad[swap(k)].conj()).collect();
        let hess = if self.second {
            let mut h = vec![ZERO; d * d];
            for r in 0..d {
                for c in 0..d {
                    h[r * d + c] = a.hess[swap(r) * d + swap(c)].conj();
                }
            }
            h
        } else {
            Vec::new()
        };
        Dual { value: a.value.conj(), grad, hess }
    }

    fn lin(&self, a: Dual, sa: C64, b: Dual, sb: C64) -> Dual {
        Dual {
            value: sa * a.value + sb * b.value,
            grad: a.grad.iter().zip(&b.grad).map(|(x, y)| sa * x + sb * y).collect(),
            hess: a.hess.iter().zip(&b.hess).map(|(x, y)| sa * x + sb * y).collect(),
        }
    }

    fn scale(&self, mut a: Dual, s: C64) -> Dual {
        a.value *= s;
        a.grad.iter_mut().for_each(|g| *g *= s);
        a.hess.iter_mut().for_each(|h| *h *= s);
        a
    }

    fn mul(&self, a: &Dual, b: &Dual) -> Dual {
        let d = self.dim();
        let grad = (0..d).map(|k| a.grad[k] * b.value + a.value * b.grad[k]).collect();
        let hess = if self.second {
            let mut h = vec![ZERO; d * d];
            for r in 0..d {
                for c in 0..d {
                    h[r * d + c] = a.hess[r * d + c] * b.value
                        + a.value * b.hess[r * d + c]
                        + a.grad[r] * b.grad[c]
                        + b.grad[r] * a.grad[c];
                }
            }
            h
        } else {
            Vec::new()
        };
        Dual { value: a.value * b.value, grad, hess }
    }

    /// Compose with a scalar function given its value and first two derivatives.
    fn chain(&self, a: &Dual, f0: C64, f1: C64, f2: C64) -> Dual {
        let d = self.dim();
        let grad = a.grad.iter().map(|g| f1 * g).collect();
        let hess = if self.second {
            let mut h = vec![ZERO; d * d];
            for r in 0..d {
                for c in 0..d {
                    h[r * d + c] = f1 * a.hess[r * d + c] + f2 * a.grad[r] * a.grad[c];
                }
            }
            h
        } else {
            Vec::new()
        };
        Dual { value: f0, grad, hess }
    }

    fn eval(&self, node: &Node, x: &[C64]) -> Result<Dual> {
        Ok(match node {
            Node::Lit(c) => self.constant(*c),
            Node::Var(i) => self.var(*i, x[*i]),
            Node::Conj(a) => {
                let a = self.eval(a, x)?;
                self.conj(a)
            }
            Node::Neg(a) => {
                let a = self.eval(a, x)?;
                self.scale(a, -ONE)
            }
            Node::Add(a, b) => self.lin(self.eval(a, x)?, ONE, self.eval(b, x)?, ONE),
            Node::Sub(a, b) => self.lin(self.eval(a, x)?, ONE, self.eval(b, x)?, -ONE),
            Node::Mul(a, b) => self.mul(&self.eval(a, x)?, &self.eval(b, x)?),
            Node::Div(a, b) => {
                let num = self.eval(a, x)?;
                let den = self.eval(b, x)?;
                check_den(den.value)?;
                let v = den.value;
                let recip = self.chain(&den, ONE / v, -ONE / (v * v), 2.0 * ONE / (v * v * v));
                self.mul(&num, &recip)
            }
            Node::Pow(a, k) => {
                let a = self.eval(a, x)?;
                let k = *k;
                if k == 0 {
                    return Ok(self.constant(ONE));
                }
                if k < 0 {
                    check_den(a.value)?;
                }
                let v = a.value;
                let kf = k as f64;
                let f1 = if k == 1 { ONE } else { kf * v.powi(k - 1) };
                let f2 = match k {
                    1 => ZERO,
                    2 => C64::new(2.0, 0.0),
                    _ => kf * (kf - 1.0) * v.powi(k - 2),
                };
                self.chain(&a, v.powi(k), f1, f2)
            }
            Node::Func(f, a) => {
                let a = self.eval(a, x)?;
                let (f0, f1, f2) = f.eval3(a.value);
                self.chain(&a, f0, f1, f2)
            }
        })
    }
}

pub(super) fn full_jet(e: &Expression, x: &[C64]) -> Result<Dual> {
    e.check_len(x.len())?;
    Ctx { n: x.len(), second: true }.eval(&e.root, x)
}

/// Value and first Wirtinger derivatives of a (possibly complex-valued) expression.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub value: C64,
    /// ∂/∂ζ_k
    pub hol: Vec<C64>,
    /// ∂/∂ζ̄_k
    pub anti: Vec<C64>,
}

pub fn gradient(e: &Expression, x: &[C64]) -> Result<Gradient> {
    e.check_len(x.len())?;
    let n = x.len();
    let d = Ctx { n, second: false }.eval(&e.root, x)?;
    let mut grad = d.grad;
    let anti = grad.split_off(n);
    Ok(Gradient { value: d.value, hol: grad, anti })
}

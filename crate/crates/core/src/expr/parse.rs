use std::fmt;

use super::{Dims, Expression, ExprError, Func, Node, Result, C64};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Int(i64),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn syntax(pos: usize, msg: impl Into<String>) -> ExprError {
    ExprError::Syntax { pos, msg: msg.into() }
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let ch = bytes[i];
        let start = i;
        match ch {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => out.push((start, Tok::Plus)),
            b'-' => out.push((start, Tok::Minus)),
            b'*' => out.push((start, Tok::Star)),
            b'/' => out.push((start, Tok::Slash)),
            b'^' => out.push((start, Tok::Caret)),
            b'(' => out.push((start, Tok::LParen)),
            b')' => out.push((start, Tok::RParen)),
            b'0'..=b'9' | b'.' => {
                let mut j = i;
                let mut is_int = true;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                if j < bytes.len() && bytes[j] == b'.' {
                    is_int = false;
                    j += 1;
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                }
                if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
                    let mut k = j + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    if k < bytes.len() && bytes[k].is_ascii_digit() {
                        is_int = false;
                        while k < bytes.len() && bytes[k].is_ascii_digit() {
                            k += 1;
                        }
                        j = k;
                    }
                }
                let s = &text[i..j];
                let v: f64 = s.parse().map_err(|_| syntax(start, format!("bad number `{s}`")))?;
                if is_int {
                    let n: i64 = s.parse().map_err(|_| syntax(start, format!("bad integer `{s}`")))?;
                    out.push((start, Tok::Int(n)));
                } else {
                    out.push((start, Tok::Num(v)));
                }
                i = j;
                continue;
            }
            c if c.is_ascii_alphabetic() => {
                let mut j = i;
                while j < bytes.len() && bytes[j].is_ascii_alphabetic() {
                    j += 1;
                }
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                out.push((start, Tok::Ident(text[i..j].to_string())));
                i = j;
                continue;
            }
            _ => return Err(syntax(start, format!("unexpected character `{}`", ch as char))),
        }
        i += 1;
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    dims: Dims,
    text_len: usize,
    _text: &'a str,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map(|(p, _)| *p).unwrap_or(self.text_len)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        let at = self.here();
        match self.bump() {
            Some(t) if t == want => Ok(()),
            _ => Err(syntax(at, format!("expected {what}"))),
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    lhs = fold(Node::Add(Box::new(lhs), Box::new(self.term()?)));
                }
                Some(Tok::Minus) => {
                    self.bump();
                    lhs = fold(Node::Sub(Box::new(lhs), Box::new(self.term()?)));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.bump();
                    lhs = fold(Node::Mul(Box::new(lhs), Box::new(self.factor()?)));
                }
                Some(Tok::Slash) => {
                    self.bump();
                    lhs = fold(Node::Div(Box::new(lhs), Box::new(self.factor()?)));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.peek() == Some(&Tok::Caret) {
            self.bump();
            let at = self.here();
            let sign = match self.peek() {
                Some(Tok::Minus) => {
                    self.bump();
                    -1
                }
                Some(Tok::Plus) => {
                    self.bump();
                    1
                }
                _ => 1,
            };
            match self.bump() {
                Some(Tok::Int(n)) => {
                    let k = i32::try_from(sign * n).map_err(|_| syntax(at, "exponent out of range"))?;
                    return Ok(fold(Node::Pow(Box::new(base), k)));
                }
                _ => return Err(syntax(at, "expected integer exponent")),
            }
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let at = self.here();
        match self.bump() {
            Some(Tok::Num(v)) => Ok(Node::Lit(C64::new(v, 0.0))),
            Some(Tok::Int(n)) => Ok(Node::Lit(C64::new(n as f64, 0.0))),
            Some(Tok::Minus) => Ok(fold(Node::Neg(Box::new(self.atom()?)))),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => self.ident(at, name),
            Some(t) => Err(syntax(at, format!("unexpected token {t:?}"))),
            None => Err(syntax(at, "unexpected end of input")),
        }
    }

    fn call_arg(&mut self) -> Result<Node> {
        self.expect(Tok::LParen, "`(`")?;
        let e = self.expr()?;
        self.expect(Tok::RParen, "`)`")?;
        Ok(e)
    }

    fn ident(&mut self, at: usize, name: String) -> Result<Node> {
        match name.as_str() {
            "i" => return Ok(Node::Lit(C64::new(0.0, 1.0))),
            "conj" => return Ok(conj(self.call_arg()?)),
            "re" => {
                let e = self.call_arg()?;
                let sum = fold(Node::Add(Box::new(e.clone()), Box::new(conj(e))));
                return Ok(fold(Node::Mul(Box::new(sum), Box::new(Node::Lit(C64::new(0.5, 0.0))))));
            }
            "im" => {
                let e = self.call_arg()?;
                let diff = fold(Node::Sub(Box::new(e.clone()), Box::new(conj(e))));
                return Ok(fold(Node::Mul(Box::new(diff), Box::new(Node::Lit(C64::new(0.0, -0.5))))));
            }
            "abs2" => {
                let e = self.call_arg()?;
                return Ok(fold(Node::Mul(Box::new(e.clone()), Box::new(conj(e)))));
            }
            "exp" | "cos" | "sin" => {
                let f = match name.as_str() {
                    "exp" => Func::Exp,
                    "cos" => Func::Cos,
                    _ => Func::Sin,
                };
                return Ok(fold(Node::Func(f, Box::new(self.call_arg()?))));
            }
            "t" => {
                if self.dims.t {
                    return Ok(Node::Var(self.dims.l + self.dims.m));
                }
                return Err(ExprError::UnknownVariable { name, l: self.dims.l, m: self.dims.m });
            }
            _ => {}
        }
        let (head, digits) = name.split_at(1);
        if (head == "z" || head == "w") && !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
            let k: usize = digits.parse().map_err(|_| syntax(at, "bad variable index"))?;
            let (limit, offset) = if head == "z" { (self.dims.l, 0) } else { (self.dims.m, self.dims.l) };
            if k == 0 || k > limit {
                return Err(ExprError::UnknownVariable { name, l: self.dims.l, m: self.dims.m });
            }
            return Ok(Node::Var(offset + k - 1));
        }
        Err(syntax(at, format!("unknown identifier `{name}`")))
    }
}

fn conj(e: Node) -> Node {
    match e {
        Node::Conj(inner) => *inner,
        Node::Lit(c) => Node::Lit(c.conj()),
        other => Node::Conj(Box::new(other)),
    }
}

/// Constant-fold a freshly built node whose operands are literals.
fn fold(n: Node) -> Node {
    use Node::*;
    let lit = |x: &Node| if let Lit(c) = x { Some(*c) } else { None };
    let folded = match &n {
        Neg(a) => lit(a).map(|a| -a),
        Add(a, b) => lit(a).zip(lit(b)).map(|(a, b)| a + b),
        Sub(a, b) => lit(a).zip(lit(b)).map(|(a, b)| a - b),
        Mul(a, b) => lit(a).zip(lit(b)).map(|(a, b)| a * b),
        Div(a, b) => lit(a).zip(lit(b)).filter(|(_, b)| b.norm() >= super::DIV_EPS).map(|(a, b)| a / b),
        Pow(a, k) => lit(a).filter(|a| *k >= 0 || a.norm() >= super::DIV_EPS).map(|a| a.powi(*k)),
        Func(f, a) => lit(a).map(|a| f.eval3(a).0),
        _ => None,
    };
    folded.map(Lit).unwrap_or(n)
}

/// Parse an expression under the given dimensions.
pub fn parse(text: &str, dims: Dims) -> Result<Expression> {
    if text.trim().is_empty() {
        return Err(syntax(0, "empty expression"));
    }
    let toks = tokenize(text)?;
    let mut p = Parser { toks, pos: 0, dims, text_len: text.len(), _text: text };
    let root = p.expr()?;
    if p.pos < p.toks.len() {
        return Err(syntax(p.here(), "trailing input"));
    }
    Ok(Expression { root, dims })
}

pub(super) fn print(n: &Node, dims: &Dims, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let wrap = |child: &Node, f: &mut fmt::Formatter<'_>| -> fmt::Result {
        f.write_str("(")?;
        print(child, dims, f)?;
        f.write_str(")")
    };
    match n {
        Node::Lit(c) => {
            // adding 0.0 turns -0.0 into 0.0
            let c = C64::new(c.re + 0.0, c.im + 0.0);
            if c.im == 0.0 {
                write!(f, "({:e})", c.re)
            } else {
                write!(f, "({:e}+({:e})*i)", c.re, c.im)
            }
        }
        Node::Var(i) => f.write_str(&dims.var_name(*i)),
        Node::Conj(a) => {
            f.write_str("conj")?;
            wrap(a, f)
        }
        Node::Neg(a) => {
            f.write_str("(-")?;
            wrap(a, f)?;
            f.write_str(")")
        }
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
            let op = match n {
                Node::Add(..) => "+",
                Node::Sub(..) => "-",
                Node::Mul(..) => "*",
                _ => "/",
            };
            f.write_str("(")?;
            wrap(a, f)?;
            f.write_str(op)?;
            wrap(b, f)?;
            f.write_str(")")
        }
        Node::Pow(a, k) => {
            f.write_str("(")?;
            wrap(a, f)?;
            write!(f, "^{k})")
        }
        Node::Func(func, a) => {
            f.write_str(func.name())?;
            wrap(a, f)
        }
    }
}

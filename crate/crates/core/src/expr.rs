//! Closed-form expression vocabulary for user-defined fields.
//!
//! Expressions are built from numbers, `pi`, the variables `t`, `x0..`,
//! `y0..`, the operators `+ - * /`, integer powers `^`, and the functions
//! `exp`, `sin`, `cos`, `sqrt`, `cbrt`, `ln`. They evaluate on any [`Real`], so the
//! differentiation kernel applies to them unchanged.

use std::fmt;
use std::str::FromStr;

use crate::diffkernel::{DomainBox, Real, ScalarField, VectorMap};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Sin,
    Cos,
    Sqrt,
    Cbrt,
    Ln,
}

impl Func {
    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "exp" => Func::Exp,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            "cbrt" => Func::Cbrt,
            "ln" => Func::Ln,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Cbrt => "cbrt",
            Func::Ln => "ln",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    T,
    X(usize),
    Y(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

/// Which variables an expression may mention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vars {
    pub n: usize,
    pub t: bool,
    pub y: bool,
}

impl Vars {
    /// `(t, x, y)`, as for Lagrangians and forces.
    pub fn phase(n: usize) -> Self {
        Self { n, t: true, y: true }
    }

    /// `(t, x)`, as for potentials and metrics.
    pub fn config_time(n: usize) -> Self {
        Self { n, t: true, y: false }
    }

    /// `x` only, as for maps.
    pub fn config(n: usize) -> Self {
        Self {
            n,
            t: false,
            y: false,
        }
    }
}

impl Expr {
    pub fn parse(src: &str, vars: Vars) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            vars,
        };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expr(format!(
                "unexpected trailing input in `{src}` at token {}",
                p.pos
            )));
        }
        Ok(e)
    }

    pub fn eval<R: Real>(&self, t: R, x: &[R], y: &[R]) -> R {
        match self {
            Expr::Const(c) => R::cst(*c),
            Expr::T => t,
            Expr::X(i) => x[*i],
            Expr::Y(i) => y[*i],
            Expr::Neg(a) => -a.eval(t, x, y),
            Expr::Add(a, b) => a.eval(t, x, y) + b.eval(t, x, y),
            Expr::Sub(a, b) => a.eval(t, x, y) - b.eval(t, x, y),
            Expr::Mul(a, b) => a.eval(t, x, y) * b.eval(t, x, y),
            Expr::Div(a, b) => a.eval(t, x, y) / b.eval(t, x, y),
            Expr::Pow(a, k) => {
                let base = a.eval(t, x, y);
                if *k >= 0 {
                    base.powi(*k)
                } else {
                    R::one() / base.powi(-k)
                }
            }
            Expr::Call(f, a) => {
                let v = a.eval(t, x, y);
                match f {
                    Func::Exp => v.exp(),
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Sqrt => v.sqrt(),
                    Func::Cbrt => v.cbrt(),
                    Func::Ln => v.ln(),
                }
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::T => write!(f, "t"),
            Expr::X(i) => write!(f, "x{i}"),
            Expr::Y(i) => write!(f, "y{i}"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, k) => write!(f, "({a}^{k})"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v = f64::from_str(&s).map_err(|_| Error::Expr(format!("bad number `{s}`")))?;
            out.push(Token::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^".contains(c) {
            out.push(Token::Op(c));
            i += 1;
        } else if c == '(' {
            out.push(Token::LParen);
            i += 1;
        } else if c == ')' {
            out.push(Token::RParen);
            i += 1;
        } else {
            return Err(Error::Expr(format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    vars: Vars,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(Token::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(Token::Op(op @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(Token::Op('-')) => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some(Token::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if let Some(Token::Op('^')) = self.peek() {
            self.pos += 1;
            let neg = if let Some(Token::Op('-')) = self.peek() {
                self.pos += 1;
                true
            } else {
                false
            };
            match self.next() {
                Some(Token::Num(v)) if v.fract() == 0.0 && v.abs() <= 64.0 => {
                    let k = v as i32;
                    return Ok(Expr::Pow(Box::new(base), if neg { -k } else { k }));
                }
                other => {
                    let found = other.map_or_else(|| "end of input".to_string(), |t| format!("{t:?}"));
                    return Err(Error::Expr(format!(
                        "exponent must be an integer literal, found {found}"
                    )))
                }
            }
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.next() {
            Some(Token::Num(v)) => Ok(Expr::Const(v)),
            Some(Token::LParen) => {
                let e = self.expr()?;
                match self.next() {
                    Some(Token::RParen) => Ok(e),
                    _ => Err(Error::Expr("missing `)`".into())),
                }
            }
            Some(Token::Ident(name)) => self.ident(&name),
            other => Err(Error::Expr(format!("unexpected token {other:?}"))),
        }
    }

    fn ident(&mut self, name: &str) -> Result<Expr> {
        if let Some(func) = Func::from_name(name) {
            if self.next() != Some(Token::LParen) {
                return Err(Error::Expr(format!("`{name}` must be called with parentheses")));
            }
            let arg = self.expr()?;
            if self.next() != Some(Token::RParen) {
                return Err(Error::Expr(format!("missing `)` after `{name}(`")));
            }
            return Ok(Expr::Call(func, Box::new(arg)));
        }
        match name {
            "pi" => return Ok(Expr::Const(std::f64::consts::PI)),
            "t" if self.vars.t => return Ok(Expr::T),
            _ => {}
        }
        let index = |prefix: char| -> Option<usize> {
            name.strip_prefix(prefix).and_then(|d| d.parse::<usize>().ok())
        };
        if let Some(i) = index('x') {
            if i < self.vars.n {
                return Ok(Expr::X(i));
            }
        }
        if let Some(i) = index('y') {
            if self.vars.y && i < self.vars.n {
                return Ok(Expr::Y(i));
            }
        }
        Err(Error::Expr(format!(
            "unknown or out-of-scope identifier `{name}` (dimension {})",
            self.vars.n
        )))
    }
}

/// A Lagrangian given by one expression in `t, x_i, y_i`.
#[derive(Debug, Clone)]
pub struct ExprLagrangian {
    expr: Expr,
    n: usize,
    domain: DomainBox,
}

impl ExprLagrangian {
    pub fn parse(src: &str, n: usize) -> Result<Self> {
        Ok(Self::new(Expr::parse(src, Vars::phase(n))?, n, DomainBox::unbounded(1 + 2 * n)))
    }

    pub fn new(expr: Expr, n: usize, domain: DomainBox) -> Self {
        assert_eq!(domain.dim(), 1 + 2 * n);
        Self { expr, n, domain }
    }

    pub fn with_domain(mut self, domain: DomainBox) -> Self {
        assert_eq!(domain.dim(), 1 + 2 * self.n);
        self.domain = domain;
        self
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }
}

impl ScalarField for ExprLagrangian {
    fn dim(&self) -> usize {
        self.n
    }
    fn domain(&self) -> &DomainBox {
        &self.domain
    }
    fn eval<R: Real>(&self, t: R, x: &[R], y: &[R]) -> R {
        self.expr.eval(t, x, y)
    }
}

/// A vector map given by one expression in `x_i` per output.
#[derive(Debug, Clone)]
pub struct ExprMap {
    exprs: Vec<Expr>,
    n: usize,
    domain: DomainBox,
}

impl ExprMap {
    pub fn parse<S: AsRef<str>>(srcs: &[S], n: usize) -> Result<Self> {
        let exprs = srcs
            .iter()
            .map(|s| Expr::parse(s.as_ref(), Vars::config(n)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            exprs,
            n,
            domain: DomainBox::unbounded(n),
        })
    }

    pub fn with_domain(mut self, domain: DomainBox) -> Self {
        assert_eq!(domain.dim(), self.n);
        self.domain = domain;
        self
    }
}

impl VectorMap for ExprMap {
    fn dim_in(&self) -> usize {
        self.n
    }
    fn dim_out(&self) -> usize {
        self.exprs.len()
    }
    fn domain(&self) -> &DomainBox {
        &self.domain
    }
    fn eval<R: Real>(&self, x: &[R]) -> Vec<R> {
        let t = R::zero();
        self.exprs.iter().map(|e| e.eval(t, x, &[])).collect()
    }
}

/// Parses a list of expressions over the given variables.
pub fn parse_all<S: AsRef<str>>(srcs: &[S], vars: Vars) -> Result<Vec<Expr>> {
    srcs.iter().map(|s| Expr::parse(s.as_ref(), vars)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffkernel::partials;
    use crate::point::TangentSample;

    #[test]
    fn precedence_and_powers() {
        let e = Expr::parse("1 + 2*3^2 - -4/2", Vars::config(0)).unwrap();
        assert_eq!(e.eval::<f64>(0.0, &[], &[]), 1.0 + 18.0 + 2.0);
        let e = Expr::parse("2^-2", Vars::config(0)).unwrap();
        assert_eq!(e.eval::<f64>(0.0, &[], &[]), 0.25);
    }

    #[test]
    fn functions_and_variables() {
        let e = Expr::parse("0.5*exp(2*t)*y0^2 + sin(x1)*cos(pi)", Vars::phase(2)).unwrap();
        let v = e.eval(0.5, &[0.0, 1.0], &[3.0, 0.0]);
        let want = 0.5 * (1.0f64).exp() * 9.0 - (1.0f64).sin();
        assert!((v - want).abs() < 1e-14);
        assert!(Expr::parse("1.5e-3*x0", Vars::config(1)).is_ok());
    }

    #[test]
    fn scoping_is_enforced() {
        assert!(Expr::parse("y0", Vars::config_time(1)).is_err());
        assert!(Expr::parse("t", Vars::config(1)).is_err());
        assert!(Expr::parse("x2", Vars::phase(2)).is_err());
        assert!(Expr::parse("foo(x0)", Vars::phase(1)).is_err());
        assert!(Expr::parse("x0^0.5", Vars::phase(1)).is_err());
        assert!(Expr::parse("(x0", Vars::phase(1)).is_err());
        assert!(Expr::parse("x0 x0", Vars::phase(1)).is_err());
    }

    #[test]
    fn expression_lagrangian_differentiates() {
        let l = ExprLagrangian::parse("0.5*exp(2*t)*y0^2", 1).unwrap();
        let j = partials(&l, &TangentSample::new(0.0, vec![0.0], vec![3.0])).unwrap();
        assert_eq!(j.dt_dy[0], 6.0);
        assert_eq!(j.dy_dy[(0, 0)], 1.0);
    }
}

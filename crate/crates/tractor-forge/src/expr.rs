//! A small expression language for metric entries, conformal factors and
//! curve coordinates.
//!
//! The grammar covers numeric literals, chart variables `x1..xn`, the reserved
//! ambient coordinates `t` and `r`, the curve parameter `s`, unary negation,
//! `+ - * / ^` with standard precedence (`^` > unary `-` > `* /` > `+ -`),
//! parentheses, and the functions `sin cos exp log sqrt tanh`. Differentiation
//! is exact and total on the grammar, so curvature formulas downstream never
//! need nested finite differencing.

use std::fmt;

use serde::{Deserialize, Serialize};

/// A variable the grammar knows about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    /// Chart coordinate `x<i>`, 1-based.
    X(usize),
    /// Ambient cone coordinate `t`.
    T,
    /// Ambient deformation coordinate `r`.
    R,
    /// Curve parameter `s`.
    S,
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X(i) => write!(f, "x{i}"),
            Var::T => write!(f, "t"),
            Var::R => write!(f, "r"),
            Var::S => write!(f, "s"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Tanh,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
        }
    }
}

/// Parsed arithmetic expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Fun(Func, Box<Expr>),
}

/// Syntax error with the byte offset where parsing failed.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("syntax error at byte {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

/// Evaluation failure: a domain violation or an unbound variable, with the
/// offending node and the point it was evaluated at.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("cannot evaluate `{node}` at {point:?}: {reason}")]
pub struct EvalError {
    pub node: String,
    pub point: Vec<f64>,
    pub reason: String,
}

/// Values bound to variables during evaluation.
///
/// Chart coordinates come from the slice; `t`, `r`, `s` are only bound when the
/// caller is working with ambient or curve expressions.
#[derive(Debug, Clone, Copy, Default)]
pub struct Bindings<'a> {
    pub x: &'a [f64],
    pub t: Option<f64>,
    pub r: Option<f64>,
    pub s: Option<f64>,
}

impl<'a> Bindings<'a> {
    pub fn chart(x: &'a [f64]) -> Self {
        Bindings {
            x,
            t: None,
            r: None,
            s: None,
        }
    }

    pub fn ambient(t: f64, r: f64, x: &'a [f64]) -> Self {
        Bindings {
            x,
            t: Some(t),
            r: Some(r),
            s: None,
        }
    }

    pub fn curve(s: f64) -> Self {
        Bindings {
            x: &[],
            t: None,
            r: None,
            s: Some(s),
        }
    }

    fn lookup(&self, v: Var) -> Option<f64> {
        match v {
            Var::X(i) => self.x.get(i - 1).copied(),
            Var::T => self.t,
            Var::R => self.r,
            Var::S => self.s,
        }
    }

    fn point(&self) -> Vec<f64> {
        let mut p = Vec::new();
        if let Some(t) = self.t {
            p.push(t);
        }
        if let Some(r) = self.r {
            p.push(r);
        }
        p.extend_from_slice(self.x);
        if let Some(s) = self.s {
            p.push(s);
        }
        p
    }
}

// ---------------------------------------------------------------------------
// Construction helpers. The `expr::*` builders fold constants and absorb
// 0/1 so derivative trees stay small; flat metrics differentiate to literal
// zeros this way.
// ---------------------------------------------------------------------------

pub fn num(v: f64) -> Expr {
    Expr::Num(v)
}

pub fn var(i: usize) -> Expr {
    Expr::Var(Var::X(i))
}

pub fn add(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x + y),
        (Expr::Num(x), b) if x == 0.0 => b,
        (a, Expr::Num(y)) if y == 0.0 => a,
        (a, b) => Expr::Bin(BinOp::Add, Box::new(a), Box::new(b)),
    }
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x - y),
        (a, Expr::Num(y)) if y == 0.0 => a,
        (Expr::Num(x), b) if x == 0.0 => neg(b),
        (a, b) => Expr::Bin(BinOp::Sub, Box::new(a), Box::new(b)),
    }
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x * y),
        (Expr::Num(x), _) | (_, Expr::Num(x)) if x == 0.0 => Expr::Num(0.0),
        (Expr::Num(x), b) if x == 1.0 => b,
        (a, Expr::Num(y)) if y == 1.0 => a,
        (a, b) => Expr::Bin(BinOp::Mul, Box::new(a), Box::new(b)),
    }
}

pub fn div(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Num(x), Expr::Num(y)) if y != 0.0 => Expr::Num(x / y),
        (Expr::Num(x), _) if x == 0.0 => Expr::Num(0.0),
        (a, Expr::Num(y)) if y == 1.0 => a,
        (a, b) => Expr::Bin(BinOp::Div, Box::new(a), Box::new(b)),
    }
}

pub fn pow(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (_, Expr::Num(y)) if *y == 0.0 => return Expr::Num(1.0),
        (_, Expr::Num(y)) if *y == 1.0 => return a,
        (Expr::Num(x), Expr::Num(y)) => {
            let v = powi_or_powf(*x, *y);
            if v.is_finite() {
                return Expr::Num(v);
            }
        }
        _ => {}
    }
    Expr::Bin(BinOp::Pow, Box::new(a), Box::new(b))
}

pub fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(x) => Expr::Num(-x),
        Expr::Neg(inner) => *inner,
        a => Expr::Neg(Box::new(a)),
    }
}

pub fn fun(f: Func, a: Expr) -> Expr {
    if let Expr::Num(x) = a {
        if let Ok(v) = apply_func(f, x) {
            return Expr::Num(v);
        }
    }
    Expr::Fun(f, Box::new(a))
}

fn powi_or_powf(base: f64, exp: f64) -> f64 {
    if exp.fract() == 0.0 && exp.abs() <= i32::MAX as f64 {
        base.powi(exp as i32)
    } else {
        base.powf(exp)
    }
}

fn apply_func(f: Func, x: f64) -> Result<f64, &'static str> {
    match f {
        Func::Sin => Ok(x.sin()),
        Func::Cos => Ok(x.cos()),
        Func::Exp => Ok(x.exp()),
        Func::Log => {
            if x > 0.0 {
                Ok(x.ln())
            } else {
                Err("log of a non-positive value")
            }
        }
        Func::Sqrt => {
            if x >= 0.0 {
                Ok(x.sqrt())
            } else {
                Err("sqrt of a negative value")
            }
        }
        Func::Tanh => Ok(x.tanh()),
    }
}

impl Expr {
    /// Parse an expression from text. See the module docs for the grammar.
    pub fn parse(text: &str) -> Result<Expr, ParseError> {
        Parser::new(text).parse()
    }

    /// Evaluate at a point. Domain violations (log of a non-positive value,
    /// division by zero, fractional power of a non-positive base) are reported
    /// with the offending node rather than silently producing NaN.
    pub fn eval(&self, at: Bindings<'_>) -> Result<f64, EvalError> {
        let fail = |node: &Expr, reason: String| EvalError {
            node: node.to_string(),
            point: at.point(),
            reason,
        };
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Var(v) => at
                .lookup(*v)
                .ok_or_else(|| fail(self, format!("variable {v} is not bound"))),
            Expr::Neg(a) => Ok(-a.eval(at)?),
            Expr::Bin(op, a, b) => {
                let x = a.eval(at)?;
                let y = b.eval(at)?;
                match op {
                    BinOp::Add => Ok(x + y),
                    BinOp::Sub => Ok(x - y),
                    BinOp::Mul => Ok(x * y),
                    BinOp::Div => {
                        if y == 0.0 {
                            Err(fail(self, "division by zero".into()))
                        } else {
                            Ok(x / y)
                        }
                    }
                    BinOp::Pow => {
                        if y.fract() == 0.0 && y.abs() <= i32::MAX as f64 {
                            if x == 0.0 && y < 0.0 {
                                return Err(fail(self, "zero raised to a negative power".into()));
                            }
                            Ok(x.powi(y as i32))
                        } else if x > 0.0 {
                            Ok(x.powf(y))
                        } else {
                            Err(fail(self, "fractional power of a non-positive base".into()))
                        }
                    }
                }
            }
            Expr::Fun(f, a) => {
                let x = a.eval(at)?;
                apply_func(*f, x).map_err(|reason| fail(self, reason.into()))
            }
        }
    }

    /// Exact partial derivative with respect to `v`. Total on the grammar.
    pub fn differentiate(&self, v: Var) -> Expr {
        match self {
            Expr::Num(_) => num(0.0),
            Expr::Var(w) => {
                if *w == v {
                    num(1.0)
                } else {
                    num(0.0)
                }
            }
            Expr::Neg(a) => neg(a.differentiate(v)),
            Expr::Bin(op, a, b) => {
                let da = a.differentiate(v);
                let db = b.differentiate(v);
                match op {
                    BinOp::Add => add(da, db),
                    BinOp::Sub => sub(da, db),
                    BinOp::Mul => add(mul(da, (**b).clone()), mul((**a).clone(), db)),
                    BinOp::Div => div(
                        sub(mul(da, (**b).clone()), mul((**a).clone(), db)),
                        pow((**b).clone(), num(2.0)),
                    ),
                    BinOp::Pow => {
                        if let Expr::Num(c) = **b {
                            // d(f^c) = c f^(c-1) f'
                            mul(mul(num(c), pow((**a).clone(), num(c - 1.0))), da)
                        } else {
                            // d(f^g) = f^g (g' log f + g f'/f)
                            mul(
                                pow((**a).clone(), (**b).clone()),
                                add(
                                    mul(db, fun(Func::Log, (**a).clone())),
                                    div(mul((**b).clone(), da), (**a).clone()),
                                ),
                            )
                        }
                    }
                }
            }
            Expr::Fun(f, a) => {
                let da = a.differentiate(v);
                let inner = (**a).clone();
                let outer = match f {
                    Func::Sin => fun(Func::Cos, inner),
                    Func::Cos => neg(fun(Func::Sin, inner)),
                    Func::Exp => fun(Func::Exp, inner),
                    Func::Log => return div(da, inner),
                    Func::Sqrt => return div(da, mul(num(2.0), fun(Func::Sqrt, inner))),
                    Func::Tanh => sub(num(1.0), pow(fun(Func::Tanh, inner), num(2.0))),
                };
                mul(outer, da)
            }
        }
    }

    /// Conservative bottom-up simplification: constant folding and 0/1
    /// absorption only. Never changes the value where the original is defined.
    pub fn simplify(&self) -> Expr {
        match self {
            Expr::Num(_) | Expr::Var(_) => self.clone(),
            Expr::Neg(a) => neg(a.simplify()),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.simplify(), b.simplify());
                match op {
                    BinOp::Add => add(a, b),
                    BinOp::Sub => sub(a, b),
                    BinOp::Mul => mul(a, b),
                    BinOp::Div => div(a, b),
                    BinOp::Pow => pow(a, b),
                }
            }
            Expr::Fun(f, a) => fun(*f, a.simplify()),
        }
    }

    /// Variables occurring in the expression.
    pub fn variables(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut Vec<Var>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => {
                if !out.contains(v) {
                    out.push(*v);
                }
            }
            Expr::Neg(a) | Expr::Fun(_, a) => a.collect_vars(out),
            Expr::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// True when the expression is the literal `0`.
    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Num(v) if *v == 0.0)
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Bin(BinOp::Pow, ..) => 4,
            Expr::Num(v) if *v < 0.0 => 3,
            _ => 5,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn wrap(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
            if e.precedence() < min_prec {
                write!(f, "(")?;
                write!(f, "{e}")?;
                write!(f, ")")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(a) => {
                write!(f, "-")?;
                wrap(f, a, 3)
            }
            Expr::Bin(op, a, b) => match op {
                BinOp::Add => {
                    wrap(f, a, 1)?;
                    write!(f, " + ")?;
                    wrap(f, b, 2)
                }
                BinOp::Sub => {
                    wrap(f, a, 1)?;
                    write!(f, " - ")?;
                    wrap(f, b, 2)
                }
                BinOp::Mul => {
                    wrap(f, a, 2)?;
                    write!(f, "*")?;
                    wrap(f, b, 3)
                }
                BinOp::Div => {
                    wrap(f, a, 2)?;
                    write!(f, "/")?;
                    wrap(f, b, 3)
                }
                BinOp::Pow => {
                    wrap(f, a, 5)?;
                    write!(f, "^")?;
                    // Exponent may be a negation but anything looser needs parens.
                    wrap(f, b, 3)
                }
            },
            Expr::Fun(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

impl Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let text = String::deserialize(de)?;
        Expr::parse(&text).map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser {
            text,
            bytes: text.as_bytes(),
            pos: 0,
        }
    }

    fn parse(mut self) -> Result<Expr, ParseError> {
        let e = self.parse_sum()?;
        self.skip_ws();
        if self.pos < self.bytes.len() {
            return Err(self.err(self.pos, "unexpected trailing input"));
        }
        Ok(e)
    }

    fn err(&self, offset: usize, message: impl Into<String>) -> ParseError {
        ParseError {
            offset,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn parse_sum(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.parse_product()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    let rhs = self.parse_product()?;
                    acc = Expr::Bin(BinOp::Add, Box::new(acc), Box::new(rhs));
                }
                Some(b'-') => {
                    self.pos += 1;
                    let rhs = self.parse_product()?;
                    acc = Expr::Bin(BinOp::Sub, Box::new(acc), Box::new(rhs));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn parse_product(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.parse_unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    let rhs = self.parse_unary()?;
                    acc = Expr::Bin(BinOp::Mul, Box::new(acc), Box::new(rhs));
                }
                Some(b'/') => {
                    self.pos += 1;
                    let rhs = self.parse_unary()?;
                    acc = Expr::Bin(BinOp::Div, Box::new(acc), Box::new(rhs));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn parse_unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            let inner = self.parse_unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<Expr, ParseError> {
        let base = self.parse_atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            // Right-associative; the exponent may carry a unary minus.
            let exp = self.parse_unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn parse_atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            None => Err(self.err(self.bytes.len(), "unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.parse_sum()?;
                if self.peek() == Some(b')') {
                    self.pos += 1;
                    Ok(inner)
                } else {
                    Err(self.err(
                        self.pos.min(self.bytes.len()),
                        "unbalanced parenthesis: expected `)`",
                    ))
                }
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.parse_number(),
            Some(c) if c.is_ascii_alphabetic() => self.parse_ident(),
            Some(c) => Err(self.err(self.pos, format!("unexpected character `{}`", c as char))),
        }
    }

    fn parse_number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_digit() || *c == b'.')
        {
            self.pos += 1;
        }
        // Optional exponent part.
        if self
            .bytes
            .get(self.pos)
            .is_some_and(|c| *c == b'e' || *c == b'E')
        {
            let mut probe = self.pos + 1;
            if self
                .bytes
                .get(probe)
                .is_some_and(|c| *c == b'+' || *c == b'-')
            {
                probe += 1;
            }
            if self.bytes.get(probe).is_some_and(|c| c.is_ascii_digit()) {
                self.pos = probe;
                while self.bytes.get(self.pos).is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
            }
        }
        let token = &self.text[start..self.pos];
        token
            .parse::<f64>()
            .map(Expr::Num)
            .map_err(|_| self.err(start, format!("malformed number `{token}`")))
    }

    fn parse_ident(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_')
        {
            self.pos += 1;
        }
        let name = &self.text[start..self.pos];
        let func = match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "log" => Some(Func::Log),
            "sqrt" => Some(Func::Sqrt),
            "tanh" => Some(Func::Tanh),
            _ => None,
        };
        if let Some(func) = func {
            if self.peek() != Some(b'(') {
                return Err(self.err(
                    self.pos.min(self.bytes.len()),
                    format!("function `{name}` must be followed by `(`"),
                ));
            }
            self.pos += 1;
            let arg = self.parse_sum()?;
            if self.peek() == Some(b')') {
                self.pos += 1;
                return Ok(Expr::Fun(func, Box::new(arg)));
            }
            return Err(self.err(
                self.pos.min(self.bytes.len()),
                "unbalanced parenthesis: expected `)`",
            ));
        }
        match name {
            "t" => Ok(Expr::Var(Var::T)),
            "r" => Ok(Expr::Var(Var::R)),
            "s" => Ok(Expr::Var(Var::S)),
            _ => {
                if let Some(idx) = name.strip_prefix('x') {
                    if !idx.is_empty()
                        && !idx.starts_with('0')
                        && idx.bytes().all(|c| c.is_ascii_digit())
                    {
                        return Ok(Expr::Var(Var::X(idx.parse().unwrap())));
                    }
                }
                Err(self.err(start, format!("unknown identifier `{name}`")))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(text: &str, x: &[f64]) -> f64 {
        Expr::parse(text).unwrap().eval(Bindings::chart(x)).unwrap()
    }

    #[test]
    fn parses_with_standard_precedence() {
        let e = Expr::parse("x1^2 + 2*x2").unwrap();
        assert_eq!(
            e,
            Expr::Bin(
                BinOp::Add,
                Box::new(Expr::Bin(
                    BinOp::Pow,
                    Box::new(Expr::Var(Var::X(1))),
                    Box::new(Expr::Num(2.0)),
                )),
                Box::new(Expr::Bin(
                    BinOp::Mul,
                    Box::new(Expr::Num(2.0)),
                    Box::new(Expr::Var(Var::X(2))),
                )),
            )
        );
    }

    #[test]
    fn sphere_scale_factor_at_origin() {
        assert_eq!(ev("4/(1+x1^2+x2^2+x3^2)^2", &[0.0, 0.0, 0.0]), 4.0);
    }

    #[test]
    fn unbalanced_paren_reports_end_of_input() {
        let err = Expr::parse("sin(x1").unwrap_err();
        assert_eq!(err.offset, 6);
        assert!(err.message.contains("unbalanced"));
    }

    #[test]
    fn unknown_identifier_reports_offset() {
        let err = Expr::parse("2*y1").unwrap_err();
        assert_eq!(err.offset, 2);
        assert!(err.message.contains("unknown identifier"));
    }

    #[test]
    fn malformed_number_reports_offset() {
        let err = Expr::parse("1.2.3").unwrap_err();
        assert_eq!(err.offset, 0);
        assert!(err.message.contains("malformed number"));
    }

    #[test]
    fn power_binds_tighter_than_unary_minus() {
        // -x1^2 at x1=2 must be -(x1^2) = -4, not (-x1)^2.
        assert_eq!(ev("-x1^2", &[2.0]), -4.0);
        assert_eq!(ev("2^-2", &[]), 0.25);
    }

    #[test]
    fn evaluation_basics() {
        assert_eq!(ev("x1*x2", &[3.0, 4.0]), 12.0);
        assert_eq!(ev("exp(0)", &[]), 1.0);
    }

    #[test]
    fn log_of_negative_is_a_domain_error() {
        let e = Expr::parse("log(x1)").unwrap();
        let err = e.eval(Bindings::chart(&[-1.0])).unwrap_err();
        assert!(err.reason.contains("non-positive"));
        assert_eq!(err.point, vec![-1.0]);
        assert!(err.node.contains("log"));
    }

    #[test]
    fn division_by_zero_is_a_domain_error() {
        let e = Expr::parse("1/x1").unwrap();
        assert!(e.eval(Bindings::chart(&[0.0])).is_err());
    }

    #[test]
    fn unbound_variable_is_reported() {
        let e = Expr::parse("x3").unwrap();
        let err = e.eval(Bindings::chart(&[1.0])).unwrap_err();
        assert!(err.reason.contains("not bound"));
    }

    #[test]
    fn derivative_of_square_is_linear() {
        let e = Expr::parse("x1^2").unwrap();
        let d = e.differentiate(Var::X(1));
        assert_eq!(d, Expr::parse("2*x1").unwrap());
    }

    #[test]
    fn derivative_in_absent_variable_is_literal_zero() {
        let e = Expr::parse("x1").unwrap();
        assert!(e.differentiate(Var::X(2)).is_zero());
        // A flat-metric entry stays flat through two derivatives.
        let c = Expr::parse("1").unwrap();
        assert!(c.differentiate(Var::X(1)).is_zero());
    }

    #[test]
    fn derivative_matches_central_difference() {
        let e = Expr::parse("exp(x1*x2)").unwrap();
        let d = e.differentiate(Var::X(1));
        let x = [1.0, 1.0];
        let got = d.eval(Bindings::chart(&x)).unwrap();
        let h = 1e-5;
        let fd = (e.eval(Bindings::chart(&[1.0 + h, 1.0])).unwrap()
            - e.eval(Bindings::chart(&[1.0 - h, 1.0])).unwrap())
            / (2.0 * h);
        assert!((got - std::f64::consts::E).abs() < 1e-12);
        assert!((got - fd).abs() < 1e-7);
    }

    #[test]
    fn general_power_rule_handles_expression_exponents() {
        // d/dx (x^x) = x^x (log x + 1)
        let e = Expr::parse("x1^x1").unwrap();
        let d = e.differentiate(Var::X(1));
        let at = Bindings::chart(&[2.0]);
        let expect = 4.0 * (2f64.ln() + 1.0);
        assert!((d.eval(at).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn ambient_variables_parse_and_differentiate() {
        let e = Expr::parse("t^2*(1 + 2*r*x1)").unwrap();
        let dt = e.differentiate(Var::T);
        let at = Bindings::ambient(3.0, 0.5, &[2.0]);
        assert!((dt.eval(at).unwrap() - 2.0 * 3.0 * 3.0).abs() < 1e-12);
        let dr = e.differentiate(Var::R);
        assert!((dr.eval(at).unwrap() - 9.0 * 4.0).abs() < 1e-12);
    }

    #[test]
    fn integer_powers_allow_negative_bases() {
        assert_eq!(ev("(-2)^3", &[]), -8.0);
        let e = Expr::parse("x1^0.5").unwrap();
        assert!(e.eval(Bindings::chart(&[-1.0])).is_err());
    }
}

//! Closed-form coordinate expressions.
//!
//! Grammar (whitespace is insignificant):
//!
//! ```text
//! expr    = term { ("+" | "-") term } ;
//! term    = unary { ("*" | "/") unary } ;
//! unary   = "-" unary | power ;
//! power   = atom [ "^" exponent ] ;
//! exponent= [ "-" ] integer | "(" [ "-" ] integer ")" ;
//! atom    = number | ident | func "(" expr ")" | "(" expr ")" ;
//! func    = "exp" | "log" | "sin" | "cos" | "sqrt" ;
//! number  = digit { digit } [ "." { digit } ] [ ("e" | "E") [ "+" | "-" ] digit { digit } ] ;
//! ident   = letter { letter | digit | "_" } ;
//! ```
//!
//! Identifiers resolve to chart coordinates, to caller-declared constants, or
//! to the built-in constant `pi`.

use std::fmt;

use thiserror::Error;

use crate::error::GeomError;
use crate::jet::Jet;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expression {
    Const(f64),
    Var(usize),
    Neg(Box<Expression>),
    Add(Box<Expression>, Box<Expression>),
    Sub(Box<Expression>, Box<Expression>),
    Mul(Box<Expression>, Box<Expression>),
    Div(Box<Expression>, Box<Expression>),
    Pow(Box<Expression>, i32),
    Call(Func, Box<Expression>),
}

use Expression as E;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown symbol `{name}` at offset {offset}")]
    UnknownSymbol { name: String, offset: usize },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. } | ParseError::UnknownSymbol { offset, .. } => *offset,
        }
    }
}

/// Parses `text` over the given coordinate names.
pub fn parse_expression(text: &str, coord_names: &[&str]) -> Result<Expression, ParseError> {
    parse_with_constants(text, coord_names, &[])
}

/// Parses `text`, resolving identifiers against coordinates first and then
/// against the declared constants.
pub fn parse_with_constants(
    text: &str,
    coord_names: &[&str],
    constants: &[(&str, f64)],
) -> Result<Expression, ParseError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
        coords: coord_names,
        constants,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.syntax("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    coords: &'a [&'a str],
    constants: &'a [(&'a str, f64)],
}

impl Parser<'_> {
    fn syntax(&self, message: &str) -> ParseError {
        ParseError::Syntax {
            offset: self.pos,
            message: message.to_string(),
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

    fn expr(&mut self) -> Result<Expression, ParseError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = E::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = E::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expression, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = E::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = E::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expression, ParseError> {
        if self.eat(b'-') {
            return Ok(E::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expression, ParseError> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let k = self.exponent()?;
            return Ok(E::Pow(Box::new(base), k));
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<i32, ParseError> {
        let paren = self.eat(b'(');
        let neg = self.eat(b'-');
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.syntax("expected integer exponent"));
        }
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'.' | b'e' | b'E') {
            return Err(self.syntax("exponent must be an integer"));
        }
        let digits = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
        let k: i32 = digits
            .parse()
            .map_err(|_| ParseError::Syntax { offset: start, message: "exponent out of range".into() })?;
        if paren && !self.eat(b')') {
            return Err(self.syntax("expected `)`"));
        }
        Ok(if neg { -k } else { k })
    }

    fn atom(&mut self) -> Result<Expression, ParseError> {
        match self.peek() {
            None => Err(self.syntax("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.syntax("expected `)`"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            Some(_) => Err(self.syntax("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Expression, ParseError> {
        let start = self.pos;
        let src = self.src;
        let digits = |p: &mut usize| {
            while *p < src.len() && src[*p].is_ascii_digit() {
                *p += 1;
            }
        };
        digits(&mut self.pos);
        if self.pos < src.len() && src[self.pos] == b'.' {
            self.pos += 1;
            digits(&mut self.pos);
        }
        if self.pos < src.len() && matches!(src[self.pos], b'e' | b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < src.len() && matches!(src[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            let exp_start = self.pos;
            digits(&mut self.pos);
            if exp_start == self.pos {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&src[start..self.pos]).expect("ascii number");
        text.parse::<f64>()
            .map(E::Const)
            .map_err(|_| ParseError::Syntax { offset: start, message: format!("malformed number `{text}`") })
    }

    fn ident(&mut self) -> Result<Expression, ParseError> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii ident");
        if let Some(f) = Func::from_name(name) {
            if self.eat(b'(') {
                let arg = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.syntax("expected `)`"));
                }
                return Ok(E::Call(f, Box::new(arg)));
            }
        }
        if let Some(i) = self.coords.iter().position(|c| *c == name) {
            return Ok(E::Var(i));
        }
        if let Some((_, v)) = self.constants.iter().find(|(c, _)| *c == name) {
            return Ok(E::Const(*v));
        }
        if name == "pi" {
            return Ok(E::Const(std::f64::consts::PI));
        }
        Err(ParseError::UnknownSymbol { name: name.to_string(), offset: start })
    }
}

// Smart constructors with constant folding.

pub fn constant(c: f64) -> Expression {
    E::Const(c)
}

pub fn var(i: usize) -> Expression {
    E::Var(i)
}

impl Expression {
    pub fn is_zero(&self) -> bool {
        matches!(self, E::Const(c) if *c == 0.0)
    }

    fn is_one(&self) -> bool {
        matches!(self, E::Const(c) if *c == 1.0)
    }

    fn as_const(&self) -> Option<f64> {
        match self {
            E::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn add(a: Expression, b: Expression) -> Expression {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => E::Const(x + y),
            (Some(x), _) if x == 0.0 => b,
            (_, Some(y)) if y == 0.0 => a,
            _ => E::Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Expression, b: Expression) -> Expression {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => E::Const(x - y),
            (_, Some(y)) if y == 0.0 => a,
            (Some(x), _) if x == 0.0 => Expression::neg(b),
            _ => E::Sub(Box::new(a), Box::new(b)),
        }
    }

    pub fn mul(a: Expression, b: Expression) -> Expression {
        if a.is_zero() || b.is_zero() {
            return E::Const(0.0);
        }
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => E::Const(x * y),
            _ if a.is_one() => b,
            _ if b.is_one() => a,
            _ => E::Mul(Box::new(a), Box::new(b)),
        }
    }

    pub fn div(a: Expression, b: Expression) -> Expression {
        if a.is_zero() {
            return E::Const(0.0);
        }
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) if y != 0.0 => E::Const(x / y),
            _ if b.is_one() => a,
            _ => E::Div(Box::new(a), Box::new(b)),
        }
    }

    pub fn neg(a: Expression) -> Expression {
        match a {
            E::Const(c) => E::Const(-c),
            E::Neg(inner) => *inner,
            other => E::Neg(Box::new(other)),
        }
    }

    pub fn pow(a: Expression, k: i32) -> Expression {
        match (a.as_const(), k) {
            (_, 0) => E::Const(1.0),
            (_, 1) => a,
            (Some(c), _) => E::Const(c.powi(k)),
            _ => E::Pow(Box::new(a), k),
        }
    }

    pub fn call(f: Func, a: Expression) -> Expression {
        match (f, a.as_const()) {
            (Func::Exp, Some(c)) => E::Const(c.exp()),
            (Func::Sin, Some(c)) => E::Const(c.sin()),
            (Func::Cos, Some(c)) => E::Const(c.cos()),
            (Func::Log, Some(c)) if c > 0.0 => E::Const(c.ln()),
            (Func::Sqrt, Some(c)) if c >= 0.0 => E::Const(c.sqrt()),
            _ => E::Call(f, Box::new(a)),
        }
    }

    /// Highest coordinate index referenced, plus one.
    pub fn arity(&self) -> usize {
        match self {
            E::Const(_) => 0,
            E::Var(i) => i + 1,
            E::Neg(a) | E::Pow(a, _) | E::Call(_, a) => a.arity(),
            E::Add(a, b) | E::Sub(a, b) | E::Mul(a, b) | E::Div(a, b) => a.arity().max(b.arity()),
        }
    }

    /// Exact symbolic partial derivative with respect to coordinate `i`.
    pub fn differentiate(&self, i: usize) -> Expression {
        match self {
            E::Const(_) => E::Const(0.0),
            E::Var(j) => E::Const(if *j == i { 1.0 } else { 0.0 }),
            E::Neg(a) => Expression::neg(a.differentiate(i)),
            E::Add(a, b) => Expression::add(a.differentiate(i), b.differentiate(i)),
            E::Sub(a, b) => Expression::sub(a.differentiate(i), b.differentiate(i)),
            E::Mul(a, b) => Expression::add(
                Expression::mul(a.differentiate(i), (**b).clone()),
                Expression::mul((**a).clone(), b.differentiate(i)),
            ),
            E::Div(a, b) => {
                // (a' b - a b') / b^2
                let num = Expression::sub(
                    Expression::mul(a.differentiate(i), (**b).clone()),
                    Expression::mul((**a).clone(), b.differentiate(i)),
                );
                Expression::div(num, Expression::pow((**b).clone(), 2))
            }
            E::Pow(a, k) => Expression::mul(
                Expression::mul(E::Const(*k as f64), Expression::pow((**a).clone(), k - 1)),
                a.differentiate(i),
            ),
            E::Call(f, a) => {
                let da = a.differentiate(i);
                if da.is_zero() {
                    return E::Const(0.0);
                }
                let inner = (**a).clone();
                let outer = match f {
                    Func::Exp => Expression::call(Func::Exp, inner),
                    Func::Log => Expression::div(E::Const(1.0), inner),
                    Func::Sin => Expression::call(Func::Cos, inner),
                    Func::Cos => Expression::neg(Expression::call(Func::Sin, inner)),
                    Func::Sqrt => Expression::div(
                        E::Const(0.5),
                        Expression::call(Func::Sqrt, inner),
                    ),
                };
                Expression::mul(outer, da)
            }
        }
    }

    /// Replaces every coordinate `Var(i)` by `replacements[i]`.
    pub fn substitute(&self, replacements: &[Expression]) -> Expression {
        match self {
            E::Const(c) => E::Const(*c),
            E::Var(i) => replacements[*i].clone(),
            E::Neg(a) => Expression::neg(a.substitute(replacements)),
            E::Add(a, b) => Expression::add(a.substitute(replacements), b.substitute(replacements)),
            E::Sub(a, b) => Expression::sub(a.substitute(replacements), b.substitute(replacements)),
            E::Mul(a, b) => Expression::mul(a.substitute(replacements), b.substitute(replacements)),
            E::Div(a, b) => Expression::div(a.substitute(replacements), b.substitute(replacements)),
            E::Pow(a, k) => Expression::pow(a.substitute(replacements), *k),
            E::Call(f, a) => Expression::call(*f, a.substitute(replacements)),
        }
    }

    /// Plain floating-point evaluation.
    pub fn eval(&self, p: &[f64]) -> Result<f64, GeomError> {
        let v = match self {
            E::Const(c) => *c,
            E::Var(i) => *p
                .get(*i)
                .ok_or_else(|| GeomError::Invalid(format!("coordinate {i} out of range")))?,
            E::Neg(a) => -a.eval(p)?,
            E::Add(a, b) => a.eval(p)? + b.eval(p)?,
            E::Sub(a, b) => a.eval(p)? - b.eval(p)?,
            E::Mul(a, b) => a.eval(p)? * b.eval(p)?,
            E::Div(a, b) => {
                let d = b.eval(p)?;
                if d == 0.0 {
                    return Err(GeomError::Domain("division by zero".into()));
                }
                a.eval(p)? / d
            }
            E::Pow(a, k) => {
                let x = a.eval(p)?;
                if *k < 0 && x == 0.0 {
                    return Err(GeomError::Domain("negative power of zero".into()));
                }
                x.powi(*k)
            }
            E::Call(f, a) => {
                let x = a.eval(p)?;
                match f {
                    Func::Exp => x.exp(),
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Log if x > 0.0 => x.ln(),
                    Func::Sqrt if x >= 0.0 => x.sqrt(),
                    Func::Log => return Err(GeomError::Domain(format!("log of {x}"))),
                    Func::Sqrt => return Err(GeomError::Domain(format!("sqrt of {x}"))),
                }
            }
        };
        if !v.is_finite() {
            return Err(GeomError::Domain("non-finite value".into()));
        }
        Ok(v)
    }

    /// Evaluates with every coordinate bound to a jet; this is the general
    /// composition `e(x(u))` when the jets come from another map.
    pub fn eval_jets(&self, vars: &[Jet]) -> Result<Jet, GeomError> {
        let dim = vars.first().map(Jet::dim).unwrap_or(0);
        let order = crate::jet::min_order(vars);
        let j = match self {
            E::Const(c) => Jet::constant(*c, dim, order),
            E::Var(i) => vars
                .get(*i)
                .cloned()
                .ok_or_else(|| GeomError::Invalid(format!("coordinate {i} out of range")))?,
            E::Neg(a) => -a.eval_jets(vars)?,
            E::Add(a, b) => a.eval_jets(vars)? + b.eval_jets(vars)?,
            E::Sub(a, b) => a.eval_jets(vars)? - b.eval_jets(vars)?,
            E::Mul(a, b) => a.eval_jets(vars)? * b.eval_jets(vars)?,
            E::Div(a, b) => a.eval_jets(vars)?.div_jet(&b.eval_jets(vars)?)?,
            E::Pow(a, k) => a.eval_jets(vars)?.powi(*k)?,
            E::Call(f, a) => {
                let x = a.eval_jets(vars)?;
                match f {
                    Func::Exp => x.exp(),
                    Func::Log => x.ln()?,
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Sqrt => x.sqrt()?,
                }
            }
        };
        if !j.is_finite() {
            return Err(GeomError::Domain("non-finite jet".into()));
        }
        Ok(j)
    }

    fn precedence(&self) -> u8 {
        match self {
            E::Add(..) | E::Sub(..) => 1,
            E::Mul(..) | E::Div(..) => 2,
            E::Neg(_) => 3,
            E::Pow(..) => 4,
            E::Const(c) if *c < 0.0 => 3,
            _ => 5,
        }
    }
}

/// Jet of `e` at `p`, with partials up to `order` in the chart coordinates.
pub fn eval_jet(e: &Expression, p: &[f64], order: usize) -> Result<Jet, GeomError> {
    if order > crate::jet::MAX_ORDER {
        return Err(GeomError::OrderTooHigh(order));
    }
    e.eval_jets(&Jet::seed(p, order))
}

/// Central difference `(e(p + h e_i) - e(p - h e_i)) / 2h`.
pub fn finite_difference_oracle(e: &Expression, p: &[f64], coord: usize, h: f64) -> Result<f64, GeomError> {
    let mut plus = p.to_vec();
    let mut minus = p.to_vec();
    plus[coord] += h;
    minus[coord] -= h;
    Ok((e.eval(&plus)? - e.eval(&minus)?) / (2.0 * h))
}

/// Printing with names; `Display` uses `x0, x1, ...`.
pub struct Named<'a> {
    pub expr: &'a Expression,
    pub names: &'a [&'a str],
}

impl Expression {
    pub fn display<'a>(&'a self, names: &'a [&'a str]) -> Named<'a> {
        Named { expr: self, names }
    }

    fn write(&self, f: &mut fmt::Formatter<'_>, names: &[&str]) -> fmt::Result {
        let child = |e: &Expression, f: &mut fmt::Formatter<'_>, min: u8| -> fmt::Result {
            if e.precedence() < min {
                write!(f, "(")?;
                e.write(f, names)?;
                write!(f, ")")
            } else {
                e.write(f, names)
            }
        };
        match self {
            E::Const(c) if *c < 0.0 => write!(f, "-{}", -c),
            E::Const(c) => write!(f, "{c}"),
            E::Var(i) => match names.get(*i) {
                Some(n) => write!(f, "{n}"),
                None => write!(f, "x{i}"),
            },
            E::Neg(a) => {
                write!(f, "-")?;
                child(a, f, 4)
            }
            E::Add(a, b) => {
                child(a, f, 1)?;
                write!(f, " + ")?;
                child(b, f, 2)
            }
            E::Sub(a, b) => {
                child(a, f, 1)?;
                write!(f, " - ")?;
                child(b, f, 2)
            }
            E::Mul(a, b) => {
                child(a, f, 2)?;
                write!(f, "*")?;
                child(b, f, 3)
            }
            E::Div(a, b) => {
                child(a, f, 2)?;
                write!(f, "/")?;
                child(b, f, 4)
            }
            E::Pow(a, k) => {
                child(a, f, 5)?;
                if *k < 0 {
                    write!(f, "^({k})")
                } else {
                    write!(f, "^{k}")
                }
            }
            E::Call(func, a) => {
                write!(f, "{}(", func.name())?;
                a.write(f, names)?;
                write!(f, ")")
            }
        }
    }
}

impl fmt::Display for Named<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.expr.write(f, self.names)
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f, &[])
    }
}


#[cfg(test)]
mod properties {
    use proptest::prelude::*;

    use super::*;
    use crate::random::{random_expression, random_point};
    use crate::testing::rng;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn jet_partials_match_symbolic_derivatives(seed in any::<u64>(), dim in 1usize..4) {
            let mut r = rng(seed);
            let e = random_expression(&mut r, dim, 4);
            let p = random_point(&mut r, dim);
            let j = eval_jet(&e, &p, 2).unwrap();
            for i in 0..dim {
                let di = e.differentiate(i);
                let exact = di.eval(&p).unwrap();
                prop_assert!((j.d1(i) - exact).abs() <= 1e-12 * (1.0 + exact.abs()), "{i}: {} vs {exact}", j.d1(i));
                for k in 0..dim {
                    let exact = di.differentiate(k).eval(&p).unwrap();
                    prop_assert!((j.d2(i, k) - exact).abs() <= 1e-11 * (1.0 + exact.abs()));
                }
            }
        }

        #[test]
        fn finite_differences_converge_quadratically(seed in any::<u64>(), dim in 1usize..4) {
            let mut r = rng(seed);
            let e = random_expression(&mut r, dim, 4);
            let p = random_point(&mut r, dim);
            let j = eval_jet(&e, &p, 3).unwrap();
            for i in 0..dim {
                let exact = j.d1(i);
                let third = j.d3(i, i, i).abs();
                for h in [1e-3, 1e-4] {
                    let err = (finite_difference_oracle(&e, &p, i, h).unwrap() - exact).abs();
                    // Truncation h²|f'''|/6 plus rounding of the difference quotient.
                    let bound = h * h * (third / 6.0 + 1.0) + 1e-12 * (1.0 + j.value().abs()) / h;
                    prop_assert!(err <= bound, "h {h}: err {err:e} bound {bound:e}");
                }
            }
        }

        #[test]
        fn jet_hessians_are_symmetric(seed in any::<u64>(), dim in 2usize..5) {
            let mut r = rng(seed);
            let e = random_expression(&mut r, dim, 4);
            let h = eval_jet(&e, &random_point(&mut r, dim), 2).unwrap().hessian();
            let scale = 1.0 + h.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            for i in 0..dim {
                for k in 0..dim {
                    prop_assert!((h[i * dim + k] - h[k * dim + i]).abs() <= 1e-13 * scale);
                }
            }
        }
    }
}

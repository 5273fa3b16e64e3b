//! A small expression language for functionals, polynomials and actions
//! given on the command line. See `docs/expr.md` for the grammar.

use std::fmt;

use crate::error::{Error, Result};
use crate::poly::Poly;

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Exp(Box<Node>),
    // Only produced by differentiation.
    Ln(Box<Node>),
}

/// A parsed expression over variables `<prefix>1, <prefix>2, ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    prefix: String,
    source: String,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    prefix: &'a str,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            offset: self.pos,
            message: message.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.src[self.pos..].starts_with(|c: char| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat('-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.eat('^') {
            // Right-associative; the exponent may carry a sign.
            return Ok(Node::Pow(Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.peek() {
            None => self.err("unexpected end of input"),
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return self.err("expected ')'");
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.identifier(),
            Some(c) => self.err(format!("unexpected character {c:?}")),
        }
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut end = start;
        while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
            end += 1;
        }
        if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
            let mut k = end + 1;
            if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                k += 1;
            }
            if k < bytes.len() && bytes[k].is_ascii_digit() {
                while k < bytes.len() && bytes[k].is_ascii_digit() {
                    k += 1;
                }
                end = k;
            }
        }
        match self.src[start..end].parse::<f64>() {
            Ok(v) => {
                self.pos = end;
                Ok(Node::Num(v))
            }
            Err(_) => self.err(format!("bad number {:?}", &self.src[start..end])),
        }
    }

    fn identifier(&mut self) -> Result<Node> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut end = start;
        while end < bytes.len() && bytes[end].is_ascii_alphabetic() {
            end += 1;
        }
        let letters = &self.src[start..end];
        let mut dend = end;
        while dend < bytes.len() && bytes[dend].is_ascii_digit() {
            dend += 1;
        }
        let digits = &self.src[end..dend];
        if digits.is_empty() {
            if letters == "exp" {
                self.pos = end;
                if !self.eat('(') {
                    return self.err("expected '(' after exp");
                }
                let arg = self.expr()?;
                if !self.eat(')') {
                    return self.err("expected ')'");
                }
                return Ok(Node::Exp(Box::new(arg)));
            }
            return self.err(format!("unknown name {letters:?}"));
        }
        if letters != self.prefix {
            return self.err(format!(
                "variable {letters}{digits} does not use the prefix {:?}",
                self.prefix
            ));
        }
        let index: usize = digits.parse().map_err(|_| Error::Parse {
            offset: end,
            message: "bad index".into(),
        })?;
        if index == 0 {
            return self.err("variable indices start at 1");
        }
        self.pos = dend;
        Ok(Node::Var(index - 1))
    }
}

fn max_var(n: &Node) -> Option<usize> {
    match n {
        Node::Num(_) => None,
        Node::Var(k) => Some(*k),
        Node::Neg(a) | Node::Exp(a) | Node::Ln(a) => max_var(a),
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
            max_var(a).max(max_var(b))
        }
    }
}

fn eval(n: &Node, x: &[f64]) -> f64 {
    match n {
        Node::Num(v) => *v,
        Node::Var(k) => x[*k],
        Node::Neg(a) => -eval(a, x),
        Node::Add(a, b) => eval(a, x) + eval(b, x),
        Node::Sub(a, b) => eval(a, x) - eval(b, x),
        Node::Mul(a, b) => eval(a, x) * eval(b, x),
        Node::Div(a, b) => eval(a, x) / eval(b, x),
        Node::Pow(a, b) => match integer_exponent(b) {
            Some(k) => eval(a, x).powi(k),
            None => eval(a, x).powf(eval(b, x)),
        },
        Node::Exp(a) => eval(a, x).exp(),
        Node::Ln(a) => eval(a, x).ln(),
    }
}

fn constant(n: &Node) -> Option<f64> {
    match n {
        Node::Num(v) => Some(*v),
        Node::Var(_) => None,
        Node::Neg(a) => constant(a).map(|v| -v),
        Node::Exp(a) => constant(a).map(f64::exp),
        Node::Ln(a) => constant(a).map(f64::ln),
        Node::Add(a, b) => Some(constant(a)? + constant(b)?),
        Node::Sub(a, b) => Some(constant(a)? - constant(b)?),
        Node::Mul(a, b) => Some(constant(a)? * constant(b)?),
        Node::Div(a, b) => Some(constant(a)? / constant(b)?),
        Node::Pow(a, b) => Some(constant(a)?.powf(constant(b)?)),
    }
}

fn integer_exponent(n: &Node) -> Option<i32> {
    let v = constant(n)?;
    (v.fract() == 0.0 && v.abs() <= i32::MAX as f64).then_some(v as i32)
}

fn num(v: f64) -> Box<Node> {
    Box::new(Node::Num(v))
}

fn derivative(n: &Node, k: usize) -> Node {
    use Node::*;
    match n {
        Num(_) => Num(0.0),
        Var(j) => Num(if *j == k { 1.0 } else { 0.0 }),
        Neg(a) => Neg(Box::new(derivative(a, k))),
        Add(a, b) => Add(Box::new(derivative(a, k)), Box::new(derivative(b, k))),
        Sub(a, b) => Sub(Box::new(derivative(a, k)), Box::new(derivative(b, k))),
        Mul(a, b) => Add(
            Box::new(Mul(Box::new(derivative(a, k)), b.clone())),
            Box::new(Mul(a.clone(), Box::new(derivative(b, k)))),
        ),
        Div(a, b) => Div(
            Box::new(Sub(
                Box::new(Mul(Box::new(derivative(a, k)), b.clone())),
                Box::new(Mul(a.clone(), Box::new(derivative(b, k)))),
            )),
            Box::new(Mul(b.clone(), b.clone())),
        ),
        Pow(a, b) => match constant(b) {
            Some(c) => Mul(
                Box::new(Mul(num(c), Box::new(Pow(a.clone(), num(c - 1.0))))),
                Box::new(derivative(a, k)),
            ),
            None => {
                // a^b (b' ln a + b a'/a), written with exp to stay in the grammar.
                let ln_a_db = Mul(Box::new(derivative(b, k)), Box::new(Ln(a.clone())));
                let b_da_a = Div(
                    Box::new(Mul(b.clone(), Box::new(derivative(a, k)))),
                    a.clone(),
                );
                Mul(
                    Box::new(n.clone()),
                    Box::new(Add(Box::new(ln_a_db), Box::new(b_da_a))),
                )
            }
        },
        Exp(a) => Mul(Box::new(n.clone()), Box::new(derivative(a, k))),
        Ln(a) => Div(Box::new(derivative(a, k)), a.clone()),
    }
}

fn to_poly(n: &Node, nvars: usize) -> Result<Poly> {
    let not_poly = |what: &str| Error::Unsupported(format!("{what} is not polynomial"));
    Ok(match n {
        Node::Num(v) => Poly::constant(nvars, *v),
        Node::Var(k) => Poly::var(nvars, *k),
        Node::Neg(a) => -&to_poly(a, nvars)?,
        Node::Add(a, b) => &to_poly(a, nvars)? + &to_poly(b, nvars)?,
        Node::Sub(a, b) => &to_poly(a, nvars)? - &to_poly(b, nvars)?,
        Node::Mul(a, b) => &to_poly(a, nvars)? * &to_poly(b, nvars)?,
        Node::Div(a, b) => {
            let c = constant(b).ok_or_else(|| not_poly("division by a non-constant"))?;
            to_poly(a, nvars)?.scale(1.0 / c)
        }
        Node::Pow(a, b) => match integer_exponent(b) {
            Some(k) if k >= 0 => to_poly(a, nvars)?.pow(k as u32),
            _ => return Err(not_poly("a negative or fractional power")),
        },
        Node::Exp(a) => match constant(a) {
            Some(c) => Poly::constant(nvars, c.exp()),
            None => return Err(not_poly("exp of a variable")),
        },
        Node::Ln(_) => return Err(not_poly("a logarithm")),
    })
}

impl Expr {
    pub fn parse(src: &str, prefix: &str) -> Result<Self> {
        if prefix.is_empty() || !prefix.chars().all(|c| c.is_ascii_alphabetic()) || prefix == "exp"
        {
            return Err(Error::InvalidArgument(format!(
                "bad variable prefix {prefix:?}"
            )));
        }
        let mut p = Parser {
            src,
            pos: 0,
            prefix,
        };
        let root = p.expr()?;
        if p.peek().is_some() {
            return p.err("trailing input");
        }
        Ok(Self {
            root,
            prefix: prefix.to_string(),
            source: src.to_string(),
        })
    }

    /// Number of variables referenced, i.e. the largest index used.
    pub fn arity(&self) -> usize {
        max_var(&self.root).map_or(0, |k| k + 1)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    /// Evaluates at `x`; `x` must hold at least [`Expr::arity`] values.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() < self.arity() {
            return Err(Error::InvalidArgument(format!(
                "{} needs {} values, got {}",
                self.source,
                self.arity(),
                x.len()
            )));
        }
        Ok(eval(&self.root, x))
    }

    /// Symbolic partial derivative with respect to variable `k` (zero-based).
    pub fn derivative(&self, k: usize) -> Expr {
        Expr {
            root: derivative(&self.root, k),
            prefix: self.prefix.clone(),
            source: format!("d({})/d{}{}", self.source, self.prefix, k + 1),
        }
    }

    pub fn to_poly(&self, nvars: usize) -> Result<Poly> {
        if self.arity() > nvars {
            return Err(Error::InvalidArgument(format!(
                "{} uses {} variables, only {nvars} available",
                self.source,
                self.arity()
            )));
        }
        to_poly(&self.root, nvars)
    }

    /// Unchecked evaluation for hot loops, after the caller has validated the arity.
    pub fn eval_unchecked(&self, x: &[f64]) -> f64 {
        eval(&self.root, x)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(s: &str) -> Expr {
        Expr::parse(s, "w").unwrap()
    }

    #[test]
    fn precedence() {
        assert_eq!(e("1 + 2 * 3").eval(&[]).unwrap(), 7.0);
        assert_eq!(e("-2^2").eval(&[]).unwrap(), -4.0);
        assert_eq!(e("2^3^2").eval(&[]).unwrap(), 512.0);
        assert_eq!(e("2^-1").eval(&[]).unwrap(), 0.5);
        assert_eq!(e("(1 + 2) * 3 - 4 / 2").eval(&[]).unwrap(), 7.0);
        assert_eq!(e("1.5e1 + .5").eval(&[]).unwrap(), 15.5);
    }

    #[test]
    fn variables_and_exp() {
        let f = e("exp(-w1^2) + w2*w1");
        assert_eq!(f.arity(), 2);
        let v = f.eval(&[0.5, 2.0]).unwrap();
        assert!((v - ((-0.25f64).exp() + 1.0)).abs() < 1e-15);
        assert!(f.eval(&[1.0]).is_err());
    }

    #[test]
    fn derivatives() {
        let f = e("exp(-w1^2) + w2*w1^3 - w1/w2");
        let x = [0.7, 1.3];
        let d1 = -2.0 * 0.7 * (-0.49f64).exp() + 1.3 * 3.0 * 0.49 - 1.0 / 1.3;
        let d2 = 0.343 + 0.7 / (1.3 * 1.3);
        assert!((f.derivative(0).eval(&x).unwrap() - d1).abs() < 1e-13);
        assert!((f.derivative(1).eval(&x).unwrap() - d2).abs() < 1e-13);
        let g = e("w1^w2");
        let dg = g.derivative(1).eval(&[2.0, 3.0]).unwrap();
        assert!((dg - 8.0 * 2f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn polynomial_conversion() {
        let p = Expr::parse("xi1^2 - 1 + 3*xi1*xi2/2", "xi")
            .unwrap()
            .to_poly(2)
            .unwrap();
        assert_eq!(p.coeff(&[2, 0]), 1.0);
        assert_eq!(p.coeff(&[0, 0]), -1.0);
        assert_eq!(p.coeff(&[1, 1]), 1.5);
        assert!(e("exp(w1)").to_poly(1).is_err());
        assert!(e("w1^-1").to_poly(1).is_err());
        assert!(e("w3").to_poly(2).is_err());
    }

    #[test]
    fn parse_errors() {
        for bad in [
            "", "1 +", "(w1", "w0", "x1", "sin(w1)", "w1 w2", "exp w1", "3 $ 4",
        ] {
            assert!(
                matches!(Expr::parse(bad, "w"), Err(Error::Parse { .. })),
                "{bad}"
            );
        }
    }
}

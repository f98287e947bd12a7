//! Small arithmetic expression language used for custom metrics, weight
//! fields and symbolic maps.
//!
//! Grammar: `+ - * / ^` (with `^` right-associative and binding tighter than
//! unary minus), parentheses, numeric literals, the functions
//! `sin cos exp log sqrt tanh abs`, the constant `pi`, chart coordinates
//! `x1..x9` and `r`, the geodesic distance to the current center point.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Tanh,
    Abs,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" | "ln" => Func::Log,
            "sqrt" => Func::Sqrt,
            "tanh" => Func::Tanh,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
            Func::Log => v.ln(),
            Func::Sqrt => v.sqrt(),
            Func::Tanh => v.tanh(),
            Func::Abs => v.abs(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
            Func::Abs => "abs",
        }
    }
}

/// Variable slot: a chart coordinate (0-based) or the center distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    Coord(usize),
    Dist,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Parse(format!(
                "unexpected trailing input in `{src}`"
            )));
        }
        Ok(e)
    }

    /// Highest coordinate index referenced plus one.
    pub fn arity(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Var(Var::Dist) => 0,
            Expr::Var(Var::Coord(i)) => i + 1,
            Expr::Neg(a) | Expr::Call(_, a) => a.arity(),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.arity().max(b.arity()),
        }
    }

    pub fn uses_distance(&self) -> bool {
        match self {
            Expr::Num(_) | Expr::Var(Var::Coord(_)) => false,
            Expr::Var(Var::Dist) => true,
            Expr::Neg(a) | Expr::Call(_, a) => a.uses_distance(),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.uses_distance() || b.uses_distance(),
        }
    }

    pub fn eval(&self, x: &[f64], r: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(Var::Coord(i)) => x.get(*i).copied().unwrap_or(f64::NAN),
            Expr::Var(Var::Dist) => r,
            Expr::Neg(a) => -a.eval(x, r),
            Expr::Add(a, b) => a.eval(x, r) + b.eval(x, r),
            Expr::Sub(a, b) => a.eval(x, r) - b.eval(x, r),
            Expr::Mul(a, b) => a.eval(x, r) * b.eval(x, r),
            Expr::Div(a, b) => a.eval(x, r) / b.eval(x, r),
            Expr::Pow(a, b) => {
                let base = a.eval(x, r);
                match **b {
                    Expr::Num(e) if e.fract() == 0.0 && e.abs() < 64.0 => base.powi(e as i32),
                    _ => base.powf(b.eval(x, r)),
                }
            }
            Expr::Call(f, a) => f.apply(a.eval(x, r)),
        }
    }

    /// Symbolic partial derivative with respect to `v`.
    pub fn diff(&self, v: Var) -> Expr {
        use Expr::*;
        match self {
            Num(_) => Num(0.0),
            Var(w) => Num(if *w == v { 1.0 } else { 0.0 }),
            Neg(a) => neg(a.diff(v)),
            Add(a, b) => add(a.diff(v), b.diff(v)),
            Sub(a, b) => sub(a.diff(v), b.diff(v)),
            Mul(a, b) => add(
                mul(a.diff(v), (**b).clone()),
                mul((**a).clone(), b.diff(v)),
            ),
            Div(a, b) => div(
                sub(
                    mul(a.diff(v), (**b).clone()),
                    mul((**a).clone(), b.diff(v)),
                ),
                pow((**b).clone(), Num(2.0)),
            ),
            Pow(a, b) => {
                if let Num(e) = **b {
                    mul(
                        mul(Num(e), pow((**a).clone(), Num(e - 1.0))),
                        a.diff(v),
                    )
                } else {
                    // d(u^w) = u^w (w' ln u + w u'/u)
                    mul(
                        self.clone(),
                        add(
                            mul(b.diff(v), Call(Func::Log, a.clone())),
                            div(mul((**b).clone(), a.diff(v)), (**a).clone()),
                        ),
                    )
                }
            }
            Call(f, a) => {
                let inner = (**a).clone();
                let outer = match f {
                    Func::Sin => Call(Func::Cos, Box::new(inner)),
                    Func::Cos => neg(Call(Func::Sin, Box::new(inner))),
                    Func::Exp => Call(Func::Exp, Box::new(inner)),
                    Func::Log => div(Num(1.0), inner),
                    Func::Sqrt => div(Num(0.5), Call(Func::Sqrt, Box::new(inner))),
                    Func::Tanh => sub(
                        Num(1.0),
                        pow(Call(Func::Tanh, Box::new(inner)), Num(2.0)),
                    ),
                    Func::Abs => div(inner.clone(), Call(Func::Abs, Box::new(inner))),
                };
                mul(outer, a.diff(v))
            }
        }
    }
}

fn is_zero(e: &Expr) -> bool {
    matches!(e, Expr::Num(v) if *v == 0.0)
}

fn is_one(e: &Expr) -> bool {
    matches!(e, Expr::Num(v) if *v == 1.0)
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) => Expr::Num(-v),
        a => Expr::Neg(Box::new(a)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) {
        b
    } else if is_zero(&b) {
        a
    } else {
        Expr::Add(Box::new(a), Box::new(b))
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    if is_zero(&b) {
        a
    } else if is_zero(&a) {
        neg(b)
    } else {
        Expr::Sub(Box::new(a), Box::new(b))
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) || is_zero(&b) {
        Expr::Num(0.0)
    } else if is_one(&a) {
        b
    } else if is_one(&b) {
        a
    } else {
        Expr::Mul(Box::new(a), Box::new(b))
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) {
        Expr::Num(0.0)
    } else if is_one(&b) {
        a
    } else {
        Expr::Div(Box::new(a), Box::new(b))
    }
}

fn pow(a: Expr, b: Expr) -> Expr {
    if is_one(&b) {
        a
    } else {
        Expr::Pow(Box::new(a), Box::new(b))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(Var::Coord(i)) => write!(f, "x{}", i + 1),
            Expr::Var(Var::Dist) => write!(f, "r"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
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
            // exponent part: 1e-3, 2.5E+4
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
            let text: String = chars[start..i].iter().collect();
            let v = text
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number `{text}`")))?;
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
            return Err(Error::Parse(format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
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
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.next() {
            Some(Token::Num(v)) => Ok(Expr::Num(v)),
            Some(Token::LParen) => {
                let e = self.expr()?;
                match self.next() {
                    Some(Token::RParen) => Ok(e),
                    _ => Err(Error::Parse("missing `)`".into())),
                }
            }
            Some(Token::Ident(name)) => {
                if let Some(func) = Func::from_name(&name) {
                    match self.next() {
                        Some(Token::LParen) => {}
                        _ => return Err(Error::Parse(format!("`{name}` needs `(`"))),
                    }
                    let arg = self.expr()?;
                    match self.next() {
                        Some(Token::RParen) => Ok(Expr::Call(func, Box::new(arg))),
                        _ => Err(Error::Parse("missing `)`".into())),
                    }
                } else if name == "pi" {
                    Ok(Expr::Num(std::f64::consts::PI))
                } else if name == "r" {
                    Ok(Expr::Var(Var::Dist))
                } else if let Some(idx) = name
                    .strip_prefix('x')
                    .and_then(|d| d.parse::<usize>().ok())
                    .filter(|&d| d >= 1)
                {
                    Ok(Expr::Var(Var::Coord(idx - 1)))
                } else {
                    Err(Error::Parse(format!("unknown identifier `{name}`")))
                }
            }
            Some(t) => Err(Error::Parse(format!("unexpected token {t:?}"))),
            None => Err(Error::Parse("unexpected end of expression".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, x: &[f64]) -> f64 {
        Expr::parse(src).unwrap().eval(x, 0.0)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3", &[]), 7.0);
        assert_eq!(ev("2 ^ 3 ^ 2", &[]), 512.0);
        assert_eq!(ev("-2 ^ 2", &[]), -4.0);
        assert_eq!(ev("(1 + 2) * 3", &[]), 9.0);
        assert_eq!(ev("8 / 4 / 2", &[]), 1.0);
        assert_eq!(ev("1.5e1 - 5", &[]), 10.0);
    }

    #[test]
    fn variables_and_functions() {
        let v = ev("1 + x1^2 + x2^2", &[0.5, 1.0]);
        assert!((v - 2.25).abs() < 1e-15);
        let v = ev("sqrt(exp(log(4))) + sin(pi / 2) + tanh(0)", &[]);
        assert!((v - 3.0).abs() < 1e-14);
        let e = Expr::parse("3 * log(1 / r)").unwrap();
        assert!(e.uses_distance());
        assert!((e.eval(&[], 0.5) - 3.0 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Expr::parse("1 +").is_err());
        assert!(Expr::parse("foo(1)").is_err());
        assert!(Expr::parse("x0").is_err());
        assert!(Expr::parse("(1").is_err());
        assert!(Expr::parse("1 $ 2").is_err());
    }

    #[test]
    fn symbolic_derivative_matches_central_difference() {
        let srcs = [
            "1 + x1^2 + x2^2",
            "4 / (1 - x1^2 - x2^2)^2",
            "sin(x1) * exp(x2) + sqrt(2 + x1 * x2)",
            "x1 ^ x2",
            "tanh(x1 / (1 + x2^2))",
        ];
        let x = [0.3, 0.7];
        for src in srcs {
            let e = Expr::parse(src).unwrap();
            for k in 0..2 {
                let d = e.diff(Var::Coord(k)).eval(&x, 0.0);
                let h = 1e-6;
                let mut xp = x;
                let mut xm = x;
                xp[k] += h;
                xm[k] -= h;
                let fd = (e.eval(&xp, 0.0) - e.eval(&xm, 0.0)) / (2.0 * h);
                assert!((d - fd).abs() < 1e-7 * (1.0 + d.abs()), "{src} d/dx{k}: {d} vs {fd}");
            }
        }
    }
}

//! A tiny closed expression language for coefficient functions.
//!
//! Expressions are arithmetic over numbers and the variables `t`, `x1..xd`,
//! `u1..`, `v1..` (with `x`, `u`, `v` as aliases for the first component),
//! the constant `pi`, and the functions `sin cos exp sqrt abs min max clamp`.
//! `^` is exponentiation and binds tighter than unary minus, so `-x^2` is
//! `-(x^2)`.

use std::fmt;

use crate::error::{Error, Result};

/// A variable reference resolved at parse time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    X(usize),
    U(usize),
    V(usize),
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
    Sqrt,
    Abs,
    Min,
    Max,
    Clamp,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            "clamp" => Func::Clamp,
            _ => return None,
        })
    }

    fn check_arity(self, n: usize) -> bool {
        match self {
            Func::Min | Func::Max => n >= 1,
            Func::Clamp => n == 3,
            _ => n == 1,
        }
    }
}

/// Parsed expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// Values bound to the variables during evaluation.
#[derive(Debug, Clone, Copy)]
pub struct Env<'a> {
    pub t: f64,
    pub x: &'a [f64],
    pub u: &'a [f64],
    pub v: &'a [f64],
}

impl<'a> Env<'a> {
    pub fn new(t: f64, x: &'a [f64], u: &'a [f64], v: &'a [f64]) -> Self {
        Env { t, x, u, v }
    }
}

/// Highest component index referenced per variable family (1-based, 0 = unused).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Usage {
    pub t: bool,
    pub x: usize,
    pub u: usize,
    pub v: usize,
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens: &tokens, pos: 0, src };
        let e = p.expr()?;
        if p.pos != tokens.len() {
            return Err(p.error("trailing input"));
        }
        Ok(e)
    }

    pub fn eval(&self, env: &Env<'_>) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(var) => match *var {
                Var::T => env.t,
                Var::X(j) => env.x[j],
                Var::U(j) => env.u[j],
                Var::V(j) => env.v[j],
            },
            Expr::Neg(a) => -a.eval(env),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(env), b.eval(env));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Call(f, args) => {
                let arg = |i: usize| args[i].eval(env);
                match f {
                    Func::Sin => arg(0).sin(),
                    Func::Cos => arg(0).cos(),
                    Func::Exp => arg(0).exp(),
                    Func::Sqrt => arg(0).sqrt(),
                    Func::Abs => arg(0).abs(),
                    Func::Min => args.iter().map(|a| a.eval(env)).fold(f64::INFINITY, f64::min),
                    Func::Max => args
                        .iter()
                        .map(|a| a.eval(env))
                        .fold(f64::NEG_INFINITY, f64::max),
                    Func::Clamp => {
                        let (v, lo, hi) = (arg(0), arg(1), arg(2));
                        v.max(lo).min(hi)
                    }
                }
            }
        }
    }

    pub fn usage(&self) -> Usage {
        let mut u = Usage::default();
        self.collect(&mut u);
        u
    }

    fn collect(&self, acc: &mut Usage) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(Var::T) => acc.t = true,
            Expr::Var(Var::X(j)) => acc.x = acc.x.max(j + 1),
            Expr::Var(Var::U(j)) => acc.u = acc.u.max(j + 1),
            Expr::Var(Var::V(j)) => acc.v = acc.v.max(j + 1),
            Expr::Neg(a) => a.collect(acc),
            Expr::Bin(_, a, b) => {
                a.collect(acc);
                b.collect(acc);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.collect(acc)),
        }
    }

    /// Folds a variable-free subtree to its value.
    pub fn constant_value(&self) -> Option<f64> {
        if self.usage() == Usage::default() {
            Some(self.eval(&Env::new(0.0, &[], &[], &[])))
        } else {
            None
        }
    }

    /// Recognizes `sin(x1) + c` (in any of the obvious spellings) and returns `c`.
    pub fn as_sin_plus_const(&self) -> Option<f64> {
        let is_sin_x = |e: &Expr| matches!(e, Expr::Call(Func::Sin, a) if a.len() == 1 && a[0] == Expr::Var(Var::X(0)));
        if is_sin_x(self) {
            return Some(0.0);
        }
        match self {
            Expr::Bin(BinOp::Add, a, b) if is_sin_x(a) => b.constant_value(),
            Expr::Bin(BinOp::Add, a, b) if is_sin_x(b) => a.constant_value(),
            Expr::Bin(BinOp::Sub, a, b) if is_sin_x(a) => b.constant_value().map(|c| -c),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

fn tokenize(src: &str) -> Result<Vec<Tok>> {
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
            // exponent part, e.g. 1e-3
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
                .map_err(|_| Error::Parse(format!("bad number `{text}` in `{src}`")))?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else {
            out.push(match c {
                '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                _ => return Err(Error::Parse(format!("unexpected character `{c}` in `{src}`"))),
            });
            i += 1;
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [Tok],
    pos: usize,
    src: &'a str,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> Error {
        Error::Parse(format!("{msg} at token {} in `{}`", self.pos, self.src))
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == Some(t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Op('+')) => BinOp::Add,
                Some(Tok::Op('-')) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Op('*')) => BinOp::Mul,
                Some(Tok::Op('/')) => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(&Tok::Op('-')) {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat(&Tok::Op('+')) {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat(&Tok::Op('^')) {
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(&Tok::RParen) {
                    return Err(self.error("expected `)`"));
                }
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if self.eat(&Tok::LParen) {
                    let func = Func::from_name(&name)
                        .ok_or_else(|| self.error(&format!("unknown function `{name}`")))?;
                    let mut args = Vec::new();
                    if !self.eat(&Tok::RParen) {
                        loop {
                            args.push(self.expr()?);
                            if self.eat(&Tok::RParen) {
                                break;
                            }
                            if !self.eat(&Tok::Comma) {
                                return Err(self.error("expected `,` or `)`"));
                            }
                        }
                    }
                    if !func.check_arity(args.len()) {
                        return Err(self.error(&format!("wrong number of arguments to `{name}`")));
                    }
                    return Ok(Expr::Call(func, args));
                }
                resolve_ident(&name).ok_or_else(|| self.error(&format!("unknown identifier `{name}`")))
            }
            _ => Err(self.error("expected a number, variable, call or `(`")),
        }
    }
}

fn resolve_ident(name: &str) -> Option<Expr> {
    match name {
        "t" => return Some(Expr::Var(Var::T)),
        "x" => return Some(Expr::Var(Var::X(0))),
        "u" => return Some(Expr::Var(Var::U(0))),
        "v" => return Some(Expr::Var(Var::V(0))),
        "pi" => return Some(Expr::Const(std::f64::consts::PI)),
        _ => {}
    }
    let (head, digits) = name.split_at(1);
    let idx: usize = digits.parse().ok()?;
    if idx == 0 {
        return None;
    }
    let j = idx - 1;
    match head {
        "x" => Some(Expr::Var(Var::X(j))),
        "u" => Some(Expr::Var(Var::U(j))),
        "v" => Some(Expr::Var(Var::V(j))),
        _ => None,
    }
}

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t:{} x:{} u:{} v:{}", self.t, self.x, self.u, self.v)
    }
}

use std::fmt;

use crate::error::{Error, Result};

pub const MAX_SOURCE_LEN: usize = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    T,
    X,
    Y,
    S,
}

impl Var {
    pub const ALL: [Var; 4] = [Var::T, Var::X, Var::Y, Var::S];

    pub fn name(self) -> &'static str {
        match self {
            Var::T => "t",
            Var::X => "x",
            Var::Y => "y",
            Var::S => "s",
        }
    }

    pub fn from_name(name: &str) -> Option<Var> {
        match name {
            "t" => Some(Var::T),
            "x" => Some(Var::X),
            "y" => Some(Var::Y),
            "s" => Some(Var::S),
            _ => None,
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "sqrt" => Some(Func::Sqrt),
            _ => None,
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

/// Byte range in the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone)]
pub enum ExprKind {
    Num(f64),
    Var(Var),
    /// Named constant resolved at evaluation time (`pi` is always known).
    Const(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

// Structural equality; spans are ignored.
impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        use ExprKind::*;
        match (&self.kind, &other.kind) {
            (Num(a), Num(b)) => a.to_bits() == b.to_bits(),
            (Var(a), Var(b)) => a == b,
            (Const(a), Const(b)) => a == b,
            (Neg(a), Neg(b)) => a == b,
            (Bin(o1, a1, b1), Bin(o2, a2, b2)) => o1 == o2 && a1 == a2 && b1 == b2,
            (Call(f1, a1), Call(f2, a2)) => f1 == f2 && a1 == a2,
            _ => false,
        }
    }
}

impl Expr {
    pub fn new(kind: ExprKind) -> Self {
        Expr {
            kind,
            span: Span::default(),
        }
    }

    pub fn num(v: f64) -> Self {
        Expr::new(ExprKind::Num(v))
    }

    pub fn var(v: Var) -> Self {
        Expr::new(ExprKind::Var(v))
    }

    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Self {
        Expr::new(ExprKind::Bin(op, Box::new(a), Box::new(b)))
    }

    pub fn neg(a: Expr) -> Self {
        Expr::new(ExprKind::Neg(Box::new(a)))
    }

    pub fn call(f: Func, a: Expr) -> Self {
        Expr::new(ExprKind::Call(f, Box::new(a)))
    }

    /// Variables the expression mentions.
    pub fn variables(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.visit_vars(&mut out);
        out.sort_by_key(|v| v.slot());
        out.dedup();
        out
    }

    fn visit_vars(&self, out: &mut Vec<Var>) {
        match &self.kind {
            ExprKind::Var(v) => out.push(*v),
            ExprKind::Num(_) | ExprKind::Const(_) => {}
            ExprKind::Neg(a) | ExprKind::Call(_, a) => a.visit_vars(out),
            ExprKind::Bin(_, a, b) => {
                a.visit_vars(out);
                b.visit_vars(out);
            }
        }
    }

    /// Evaluates in real arithmetic.
    pub fn eval(&self, env: &Bindings) -> Result<f64> {
        let v = self.eval_in(&|v| Ok(env.get(v)), &|name| env.constant(name), &|c| c)?;
        if !v.is_finite() {
            return Err(Error::Evaluation(format!(
                "non-finite value at {}..{}",
                self.span.start, self.span.end
            )));
        }
        Ok(v)
    }

    /// Evaluates over any [`Number`] type.
    pub fn eval_in<N: Number>(
        &self,
        var: &dyn Fn(Var) -> Result<N>,
        konst: &dyn Fn(&str) -> Option<f64>,
        lift: &dyn Fn(f64) -> N,
    ) -> Result<N> {
        match &self.kind {
            ExprKind::Num(v) => Ok(lift(*v)),
            ExprKind::Var(v) => var(*v),
            ExprKind::Const(name) => konst(name)
                .map(lift)
                .ok_or_else(|| Error::Evaluation(format!("unbound constant `{name}`"))),
            ExprKind::Neg(a) => Ok(a.eval_in(var, konst, lift)?.neg()),
            ExprKind::Call(f, a) => {
                let a = a.eval_in(var, konst, lift)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Sqrt => a.sqrt(),
                }
            }
            ExprKind::Bin(op, a, b) => {
                let a = a.eval_in(var, konst, lift)?;
                let b = b.eval_in(var, konst, lift)?;
                match op {
                    BinOp::Add => Ok(a.add(&b)),
                    BinOp::Sub => Ok(a.sub(&b)),
                    BinOp::Mul => Ok(a.mul(&b)),
                    BinOp::Div => a.div(&b),
                    BinOp::Pow => a.pow(&b),
                }
            }
        }
    }

    fn level(&self) -> u8 {
        match &self.kind {
            ExprKind::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            ExprKind::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            ExprKind::Neg(_) => 3,
            ExprKind::Bin(BinOp::Pow, ..) => 4,
            ExprKind::Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => 3,
            _ => 5,
        }
    }
}

fn write_wrapped(f: &mut fmt::Formatter<'_>, e: &Expr, min_level: u8) -> fmt::Result {
    if e.level() < min_level {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ExprKind::Num(v) => {
                if self.level() == 3 {
                    write!(f, "-{}", -v)
                } else {
                    write!(f, "{v}")
                }
            }
            ExprKind::Var(v) => f.write_str(v.name()),
            ExprKind::Const(c) => f.write_str(c),
            ExprKind::Neg(a) => {
                f.write_str("-")?;
                write_wrapped(f, a, 3)
            }
            ExprKind::Call(func, a) => write!(f, "{}({a})", func.name()),
            ExprKind::Bin(op, a, b) => {
                let (sym, la, lb) = match op {
                    BinOp::Add => (" + ", 1, 2),
                    BinOp::Sub => (" - ", 1, 2),
                    BinOp::Mul => ("*", 2, 3),
                    BinOp::Div => ("/", 2, 3),
                    BinOp::Pow => ("^", 5, 3),
                };
                write_wrapped(f, a, la)?;
                f.write_str(sym)?;
                write_wrapped(f, b, lb)
            }
        }
    }
}

/// Arithmetic needed to evaluate an [`Expr`].
pub trait Number: Sized {
    fn neg(&self) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Result<Self>;
    fn pow(&self, o: &Self) -> Result<Self>;
    fn sin(&self) -> Result<Self>;
    fn cos(&self) -> Result<Self>;
    fn exp(&self) -> Result<Self>;
    fn sqrt(&self) -> Result<Self>;
}

impl Number for f64 {
    fn neg(&self) -> Self {
        -self
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Result<Self> {
        if *o == 0.0 {
            return Err(Error::Evaluation("division by zero".into()));
        }
        Ok(self / o)
    }
    fn pow(&self, o: &Self) -> Result<Self> {
        if *self < 0.0 && o.fract() != 0.0 {
            return Err(Error::Evaluation(format!(
                "negative base {self} raised to non-integer power {o}"
            )));
        }
        if *self == 0.0 && *o < 0.0 {
            return Err(Error::Evaluation("zero raised to a negative power".into()));
        }
        Ok(self.powf(*o))
    }
    fn sin(&self) -> Result<Self> {
        Ok(f64::sin(*self))
    }
    fn cos(&self) -> Result<Self> {
        Ok(f64::cos(*self))
    }
    fn exp(&self) -> Result<Self> {
        Ok(f64::exp(*self))
    }
    fn sqrt(&self) -> Result<Self> {
        if *self < 0.0 {
            return Err(Error::Evaluation(format!(
                "square root of negative value {self}"
            )));
        }
        Ok(f64::sqrt(*self))
    }
}

/// Variable values and named constants for evaluation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bindings {
    vals: [f64; 4],
    consts: Vec<(String, f64)>,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, v: Var, value: f64) -> Self {
        self.vals[v.slot()] = value;
        self
    }

    pub fn set(&mut self, v: Var, value: f64) {
        self.vals[v.slot()] = value;
    }

    pub fn get(&self, v: Var) -> f64 {
        self.vals[v.slot()]
    }

    pub fn with_constant(mut self, name: &str, value: f64) -> Self {
        self.consts.retain(|(n, _)| n != name);
        self.consts.push((name.to_string(), value));
        self
    }

    pub fn constant(&self, name: &str) -> Option<f64> {
        if name == "pi" {
            return Some(std::f64::consts::PI);
        }
        self.consts.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    toks: Vec<(Tok, Span)>,
}

impl<'a> Lexer<'a> {
    fn run(src: &'a str) -> Result<Vec<(Tok, Span)>> {
        let mut lx = Lexer {
            src,
            toks: Vec::new(),
        };
        let bytes = src.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i];
            let start = i;
            let single = match c {
                b'+' => Some(Tok::Plus),
                b'-' => Some(Tok::Minus),
                b'*' => Some(Tok::Star),
                b'/' => Some(Tok::Slash),
                b'^' => Some(Tok::Caret),
                b'(' => Some(Tok::LParen),
                b')' => Some(Tok::RParen),
                _ => None,
            };
            if let Some(t) = single {
                lx.toks.push((t, Span { start, end: i + 1 }));
                i += 1;
            } else if c.is_ascii_whitespace() {
                i += 1;
            } else if c.is_ascii_digit() || c == b'.' {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                let v: f64 = text
                    .parse()
                    .map_err(|_| lx.error(start, format!("malformed number `{text}`")))?;
                lx.toks.push((Tok::Num(v), Span { start, end: i }));
            } else if c.is_ascii_alphabetic() || c == b'_' {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                lx.toks.push((
                    Tok::Ident(src[start..i].to_string()),
                    Span { start, end: i },
                ));
            } else {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(lx.error(start, format!("unexpected character `{ch}`")));
            }
        }
        lx.toks.push((
            Tok::End,
            Span {
                start: src.len(),
                end: src.len(),
            },
        ));
        Ok(lx.toks)
    }

    fn error(&self, offset: usize, message: String) -> Error {
        position_error(self.src, offset, message)
    }
}

fn position_error(src: &str, offset: usize, message: String) -> Error {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    Error::Parse {
        line,
        column,
        message,
    }
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<(Tok, Span)>,
    pos: usize,
    constants: &'a [&'a str],
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, Span) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, span: Span, msg: impl Into<String>) -> Error {
        position_error(self.src, span.start, msg.into())
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = joined(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = joined(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if *self.peek() == Tok::Minus {
            let (_, sp) = self.bump();
            let inner = self.unary()?;
            let end = inner.span.end;
            return Ok(Expr {
                kind: ExprKind::Neg(Box::new(inner)),
                span: Span {
                    start: sp.start,
                    end,
                },
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exp = self.unary()?;
            return Ok(joined(BinOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let (tok, sp) = self.bump();
        match tok {
            Tok::Num(v) => Ok(Expr {
                kind: ExprKind::Num(v),
                span: sp,
            }),
            Tok::LParen => {
                let inner = self.expr()?;
                match self.peek() {
                    Tok::RParen => {
                        self.bump();
                        Ok(inner)
                    }
                    _ => Err(self.err(sp, "unbalanced parentheses: `(` is never closed")),
                }
            }
            Tok::Ident(name) => {
                if let Some(v) = Var::from_name(&name) {
                    return Ok(Expr {
                        kind: ExprKind::Var(v),
                        span: sp,
                    });
                }
                if let Some(func) = Func::from_name(&name) {
                    if *self.peek() != Tok::LParen {
                        return Err(self.err(
                            self.span(),
                            format!("function `{name}` must be followed by `(`"),
                        ));
                    }
                    let open = self.bump().1;
                    let arg = self.expr()?;
                    if *self.peek() != Tok::RParen {
                        return Err(self.err(open, "unbalanced parentheses: `(` is never closed"));
                    }
                    let close = self.bump().1;
                    return Ok(Expr {
                        kind: ExprKind::Call(func, Box::new(arg)),
                        span: Span {
                            start: sp.start,
                            end: close.end,
                        },
                    });
                }
                if name == "pi" || self.constants.contains(&name.as_str()) {
                    return Ok(Expr {
                        kind: ExprKind::Const(name),
                        span: sp,
                    });
                }
                Err(self.err(sp, format!("unknown identifier `{name}`")))
            }
            Tok::RParen => Err(self.err(sp, "unbalanced parentheses: unexpected `)`")),
            Tok::End => Err(self.err(sp, "unexpected end of input")),
            other => Err(self.err(sp, format!("unexpected token {other:?}"))),
        }
    }
}

fn joined(op: BinOp, a: Expr, b: Expr) -> Expr {
    let span = Span {
        start: a.span.start,
        end: b.span.end,
    };
    Expr {
        kind: ExprKind::Bin(op, Box::new(a), Box::new(b)),
        span,
    }
}

pub fn parse_expression(text: &str) -> Result<Expr> {
    parse_expression_with(text, &[])
}

/// Parses with extra named constants besides `pi`.
pub fn parse_expression_with(text: &str, constants: &[&str]) -> Result<Expr> {
    if text.len() > MAX_SOURCE_LEN {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: format!("expression longer than {MAX_SOURCE_LEN} bytes"),
        });
    }
    let toks = Lexer::run(text)?;
    if toks.len() == 1 {
        return Err(position_error(text, 0, "empty expression".into()));
    }
    let mut p = Parser {
        src: text,
        toks,
        pos: 0,
        constants,
    };
    let e = p.expr()?;
    match p.peek() {
        Tok::End => Ok(e),
        Tok::RParen => Err(p.err(p.span(), "unbalanced parentheses: unexpected `)`")),
        t => {
            let t = t.clone();
            Err(p.err(p.span(), format!("unexpected token {t:?} after expression")))
        }
    }
}

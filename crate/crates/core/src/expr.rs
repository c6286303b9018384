//! Scalar expression language for vector-field components.
//!
//! Grammar (whitespace ignored):
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := unary (("*" | "/") unary)*
//! unary   := ("-" | "+") unary | power
//! power   := primary ("^" ["-"|"+"] integer)?
//! primary := number | "x"<index> | func "(" expr ("," expr)? ")" | "(" expr ")"
//! func    := abs | sign | sin | cos | exp | min | max
//! ```
//!
//! Expressions compile to a postfix tape for evaluation. First derivatives
//! are produced symbolically; `abs` differentiates to `sign` and
//! `min`/`max` are rewritten through `abs`, so derivatives stay inside the
//! language.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Zero-based coordinate index.
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Abs(Box<Expr>),
    Sign(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
}

fn b(e: Expr) -> Box<Expr> {
    Box::new(e)
}

impl Expr {
    pub fn parse(text: &str, dim: usize) -> Result<Expr> {
        let tokens = tokenize(text)?;
        let mut p = Parser { tokens: &tokens, pos: 0, dim, end: text.len() };
        let e = p.expr()?;
        if p.pos < tokens.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(e)
    }

    /// Direct recursive evaluation. [`Tape`] is the fast path.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => x[*i],
            Expr::Neg(a) => -a.eval(x)?,
            Expr::Add(a, c) => a.eval(x)? + c.eval(x)?,
            Expr::Sub(a, c) => a.eval(x)? - c.eval(x)?,
            Expr::Mul(a, c) => a.eval(x)? * c.eval(x)?,
            Expr::Div(a, c) => divide(a.eval(x)?, c.eval(x)?)?,
            Expr::Pow(a, k) => powi(a.eval(x)?, *k)?,
            Expr::Abs(a) => a.eval(x)?.abs(),
            Expr::Sign(a) => sign(a.eval(x)?),
            Expr::Sin(a) => a.eval(x)?.sin(),
            Expr::Cos(a) => a.eval(x)?.cos(),
            Expr::Exp(a) => a.eval(x)?.exp(),
            Expr::Min(a, c) => a.eval(x)?.min(c.eval(x)?),
            Expr::Max(a, c) => a.eval(x)?.max(c.eval(x)?),
        })
    }

    /// True when the expression uses no kink-producing operator.
    pub fn is_smooth(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Var(_) => true,
            Expr::Abs(_) | Expr::Sign(_) | Expr::Min(_, _) | Expr::Max(_, _) => false,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Sin(a) | Expr::Cos(a) | Expr::Exp(a) => a.is_smooth(),
            Expr::Add(a, c) | Expr::Sub(a, c) | Expr::Mul(a, c) | Expr::Div(a, c) => a.is_smooth() && c.is_smooth(),
        }
    }

    /// True when the expression uses a discontinuous operation (`sign`).
    pub fn has_jump(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Var(_) => false,
            Expr::Sign(_) => true,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Abs(a) | Expr::Sin(a) | Expr::Cos(a) | Expr::Exp(a) => a.has_jump(),
            Expr::Add(a, c) | Expr::Sub(a, c) | Expr::Mul(a, c) | Expr::Div(a, c) | Expr::Min(a, c) | Expr::Max(a, c) => {
                a.has_jump() || c.has_jump()
            }
        }
    }

    /// Largest variable index used (zero-based), if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Abs(a) | Expr::Sign(a) | Expr::Sin(a) | Expr::Cos(a) | Expr::Exp(a) => {
                a.max_var()
            }
            Expr::Add(a, c) | Expr::Sub(a, c) | Expr::Mul(a, c) | Expr::Div(a, c) | Expr::Min(a, c) | Expr::Max(a, c) => {
                a.max_var().max(c.max_var())
            }
        }
    }

    /// Symbolic partial derivative with respect to coordinate `k` (zero-based).
    pub fn derivative(&self, k: usize) -> Expr {
        use Expr::*;
        match self {
            Const(_) => Const(0.0),
            Var(i) => Const(if *i == k { 1.0 } else { 0.0 }),
            Neg(a) => neg(a.derivative(k)),
            Add(a, c) => add(a.derivative(k), c.derivative(k)),
            Sub(a, c) => sub(a.derivative(k), c.derivative(k)),
            Mul(a, c) => add(mul(a.derivative(k), (**c).clone()), mul((**a).clone(), c.derivative(k))),
            Div(a, c) => {
                let num = sub(mul(a.derivative(k), (**c).clone()), mul((**a).clone(), c.derivative(k)));
                div(num, pow((**c).clone(), 2))
            }
            Pow(a, n) => match *n {
                0 => Const(0.0),
                1 => a.derivative(k),
                n => mul(mul(Const(n as f64), pow((**a).clone(), n - 1)), a.derivative(k)),
            },
            Abs(a) => mul(Sign(a.clone()), a.derivative(k)),
            Sign(_) => Const(0.0),
            Sin(a) => mul(Cos(a.clone()), a.derivative(k)),
            Cos(a) => neg(mul(Sin(a.clone()), a.derivative(k))),
            Exp(a) => mul(Exp(a.clone()), a.derivative(k)),
            // min(a,c) = (a+c)/2 - |a-c|/2 and max(a,c) = (a+c)/2 + |a-c|/2
            Min(a, c) | Max(a, c) => {
                let da = a.derivative(k);
                let dc = c.derivative(k);
                let mean = mul(Const(0.5), add(da.clone(), dc.clone()));
                let half_jump = mul(mul(Const(0.5), Sign(b(sub((**a).clone(), (**c).clone())))), sub(da, dc));
                if matches!(self, Min(_, _)) {
                    sub(mean, half_jump)
                } else {
                    add(mean, half_jump)
                }
            }
        }
    }

    pub fn compile(&self) -> Tape {
        let mut ops = Vec::new();
        emit(self, &mut ops);
        let mut depth = 0usize;
        let mut max_depth = 0usize;
        for op in &ops {
            depth = depth + 1 - op.arity();
            max_depth = max_depth.max(depth);
        }
        Tape { ops, max_depth }
    }
}

fn as_const(e: &Expr) -> Option<f64> {
    match e {
        Expr::Const(c) => Some(*c),
        _ => None,
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => *inner,
        a => Expr::Neg(b(a)),
    }
}

fn add(a: Expr, c: Expr) -> Expr {
    match (as_const(&a), as_const(&c)) {
        (Some(x), Some(y)) => Expr::Const(x + y),
        (Some(0.0), _) => c,
        (_, Some(0.0)) => a,
        _ => Expr::Add(b(a), b(c)),
    }
}

fn sub(a: Expr, c: Expr) -> Expr {
    match (as_const(&a), as_const(&c)) {
        (Some(x), Some(y)) => Expr::Const(x - y),
        (Some(0.0), _) => neg(c),
        (_, Some(0.0)) => a,
        _ => Expr::Sub(b(a), b(c)),
    }
}

fn mul(a: Expr, c: Expr) -> Expr {
    match (as_const(&a), as_const(&c)) {
        (Some(x), Some(y)) => Expr::Const(x * y),
        (Some(x), _) | (_, Some(x)) if x == 0.0 => Expr::Const(0.0),
        (Some(1.0), _) => c,
        (_, Some(1.0)) => a,
        _ => Expr::Mul(b(a), b(c)),
    }
}

fn div(a: Expr, c: Expr) -> Expr {
    match (as_const(&a), as_const(&c)) {
        (Some(0.0), _) => Expr::Const(0.0),
        (_, Some(1.0)) => a,
        _ => Expr::Div(b(a), b(c)),
    }
}

fn pow(a: Expr, n: i32) -> Expr {
    match n {
        0 => Expr::Const(1.0),
        1 => a,
        n => Expr::Pow(b(a), n),
    }
}

fn divide(num: f64, den: f64) -> Result<f64> {
    if den == 0.0 {
        Err(Error::Domain("division by zero".into()))
    } else {
        Ok(num / den)
    }
}

fn powi(base: f64, k: i32) -> Result<f64> {
    if k < 0 && base == 0.0 {
        Err(Error::Domain("negative power of zero".into()))
    } else {
        Ok(base.powi(k))
    }
}

/// `sign(0) = 0`.
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    Var(usize),
    Neg,
    Add,
    Sub,
    Mul,
    Div,
    Pow(i32),
    Abs,
    Sign,
    Sin,
    Cos,
    Exp,
    Min,
    Max,
}

impl Op {
    /// Number of stack operands consumed.
    fn arity(&self) -> usize {
        match self {
            Op::Const(_) | Op::Var(_) => 0,
            Op::Neg | Op::Pow(_) | Op::Abs | Op::Sign | Op::Sin | Op::Cos | Op::Exp => 1,
            Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Min | Op::Max => 2,
        }
    }
}

fn emit(e: &Expr, ops: &mut Vec<Op>) {
    match e {
        Expr::Const(c) => ops.push(Op::Const(*c)),
        Expr::Var(i) => ops.push(Op::Var(*i)),
        Expr::Neg(a) => unary(a, Op::Neg, ops),
        Expr::Pow(a, k) => unary(a, Op::Pow(*k), ops),
        Expr::Abs(a) => unary(a, Op::Abs, ops),
        Expr::Sign(a) => unary(a, Op::Sign, ops),
        Expr::Sin(a) => unary(a, Op::Sin, ops),
        Expr::Cos(a) => unary(a, Op::Cos, ops),
        Expr::Exp(a) => unary(a, Op::Exp, ops),
        Expr::Add(a, c) => binary(a, c, Op::Add, ops),
        Expr::Sub(a, c) => binary(a, c, Op::Sub, ops),
        Expr::Mul(a, c) => binary(a, c, Op::Mul, ops),
        Expr::Div(a, c) => binary(a, c, Op::Div, ops),
        Expr::Min(a, c) => binary(a, c, Op::Min, ops),
        Expr::Max(a, c) => binary(a, c, Op::Max, ops),
    }
}

fn unary(a: &Expr, op: Op, ops: &mut Vec<Op>) {
    emit(a, ops);
    ops.push(op);
}

fn binary(a: &Expr, c: &Expr, op: Op, ops: &mut Vec<Op>) {
    emit(a, ops);
    emit(c, ops);
    ops.push(op);
}

/// Postfix program for one scalar expression.
#[derive(Debug, Clone, PartialEq)]
pub struct Tape {
    ops: Vec<Op>,
    max_depth: usize,
}

const INLINE_STACK: usize = 32;

impl Tape {
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if self.max_depth <= INLINE_STACK {
            let mut stack = [0.0f64; INLINE_STACK];
            self.run(x, &mut stack)
        } else {
            let mut stack = vec![0.0f64; self.max_depth];
            self.run(x, &mut stack)
        }
    }

    fn run(&self, x: &[f64], stack: &mut [f64]) -> Result<f64> {
        let mut sp = 0usize;
        for op in &self.ops {
            match *op {
                Op::Const(c) => {
                    stack[sp] = c;
                    sp += 1;
                }
                Op::Var(i) => {
                    stack[sp] = x[i];
                    sp += 1;
                }
                Op::Neg => stack[sp - 1] = -stack[sp - 1],
                Op::Pow(k) => stack[sp - 1] = powi(stack[sp - 1], k)?,
                Op::Abs => stack[sp - 1] = stack[sp - 1].abs(),
                Op::Sign => stack[sp - 1] = sign(stack[sp - 1]),
                Op::Sin => stack[sp - 1] = stack[sp - 1].sin(),
                Op::Cos => stack[sp - 1] = stack[sp - 1].cos(),
                Op::Exp => stack[sp - 1] = stack[sp - 1].exp(),
                _ => {
                    sp -= 1;
                    let r = stack[sp];
                    let l = stack[sp - 1];
                    stack[sp - 1] = match *op {
                        Op::Add => l + r,
                        Op::Sub => l - r,
                        Op::Mul => l * r,
                        Op::Div => divide(l, r)?,
                        Op::Min => l.min(r),
                        Op::Max => l.max(r),
                        _ => unreachable!(),
                    };
                }
            }
        }
        Ok(stack[0])
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => {
                if *c < 0.0 {
                    write!(f, "({c})")
                } else {
                    write!(f, "{c}")
                }
            }
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, c) => write!(f, "({a} + {c})"),
            Expr::Sub(a, c) => write!(f, "({a} - {c})"),
            Expr::Mul(a, c) => write!(f, "({a} * {c})"),
            Expr::Div(a, c) => write!(f, "({a} / {c})"),
            Expr::Pow(a, k) => write!(f, "({a})^({k})"),
            Expr::Abs(a) => write!(f, "abs({a})"),
            Expr::Sign(a) => write!(f, "sign({a})"),
            Expr::Sin(a) => write!(f, "sin({a})"),
            Expr::Cos(a) => write!(f, "cos({a})"),
            Expr::Exp(a) => write!(f, "exp({a})"),
            Expr::Min(a, c) => write!(f, "min({a}, {c})"),
            Expr::Max(a, c) => write!(f, "max({a}, {c})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let s = &text[start..i];
            let v: f64 = s
                .parse()
                .map_err(|_| Error::Syntax { pos: start, msg: format!("bad number '{s}'") })?;
            out.push((start, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(text[start..i].to_ascii_lowercase())));
        } else if "+-*/^(),".contains(c) {
            out.push((i, Tok::Sym(c)));
            i += 1;
        } else {
            return Err(Error::Syntax { pos: i, msg: format!("unexpected character '{c}'") });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [(usize, Tok)],
    pos: usize,
    dim: usize,
    end: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        let pos = self.tokens.get(self.pos).map_or(self.end, |(o, _)| *o);
        Error::Syntax { pos, msg: msg.to_string() }
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(&format!("expected '{c}'")))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Expr::Add(b(lhs), b(self.term()?));
            } else if self.eat('-') {
                lhs = Expr::Sub(b(lhs), b(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Expr::Mul(b(lhs), b(self.unary()?));
            } else if self.eat('/') {
                lhs = Expr::Div(b(lhs), b(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            Ok(Expr::Neg(b(self.unary()?)))
        } else if self.eat('+') {
            self.unary()
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if !self.eat('^') {
            return Ok(base);
        }
        let parenthesized = self.eat('(');
        let negative = if self.eat('-') {
            true
        } else {
            self.eat('+');
            false
        };
        let k = match self.peek() {
            Some(Tok::Num(v)) if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 => *v as i32,
            _ => return Err(self.err("exponent must be an integer literal")),
        };
        self.pos += 1;
        if parenthesized {
            self.expect(')')?;
        }
        Ok(Expr::Pow(b(base), if negative { -k } else { k }))
    }

    fn primary(&mut self) -> Result<Expr> {
        let (offset, tok) = match self.tokens.get(self.pos) {
            Some(t) => t.clone(),
            None => return Err(self.err("unexpected end of expression")),
        };
        match tok {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            Tok::Sym('(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.pos += 1;
                if let Some(idx) = name.strip_prefix('x').filter(|s| !s.is_empty() && s.bytes().all(|c| c.is_ascii_digit())) {
                    let index: usize = idx
                        .parse()
                        .map_err(|_| Error::Syntax { pos: offset, msg: "variable index out of range".into() })?;
                    if index == 0 || index > self.dim {
                        return Err(Error::UnknownVariable { index, dim: self.dim });
                    }
                    return Ok(Expr::Var(index - 1));
                }
                let arity = match name.as_str() {
                    "abs" | "sign" | "sin" | "cos" | "exp" => 1,
                    "min" | "max" => 2,
                    _ => return Err(Error::Syntax { pos: offset, msg: format!("unknown identifier '{name}'") }),
                };
                self.expect('(')?;
                let a = self.expr()?;
                let c = if arity == 2 {
                    self.expect(',')?;
                    Some(self.expr()?)
                } else {
                    None
                };
                self.expect(')')?;
                Ok(match (name.as_str(), c) {
                    ("abs", _) => Expr::Abs(b(a)),
                    ("sign", _) => Expr::Sign(b(a)),
                    ("sin", _) => Expr::Sin(b(a)),
                    ("cos", _) => Expr::Cos(b(a)),
                    ("exp", _) => Expr::Exp(b(a)),
                    ("min", Some(c)) => Expr::Min(b(a), b(c)),
                    ("max", Some(c)) => Expr::Max(b(a), b(c)),
                    _ => unreachable!(),
                })
            }
            Tok::Sym(c) => Err(Error::Syntax { pos: offset, msg: format!("unexpected '{c}'") }),
        }
    }
}

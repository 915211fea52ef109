//! A small arithmetic expression language for metric coefficients.
//!
//! Grammar: `+ - * / ^`, unary minus, parentheses, the functions
//! `exp ln sin cos sinh cosh sqrt`, variables `x1..xn`, the constant `pi`,
//! and named parameters bound at parse time. Expressions compile to a postfix
//! program that evaluates over any [`Scalar`], so the same coefficient string
//! yields plain values or full Taylor jets.

use crate::jet::Scalar;
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct ExprError {
    pub message: String,
    pub position: usize,
}

impl fmt::Display for ExprError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (at offset {})", self.message, self.position)
    }
}

impl std::error::Error for ExprError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Ln,
    Sin,
    Cos,
    Sinh,
    Cosh,
    Sqrt,
}

impl Func {
    fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "exp" => Func::Exp,
            "ln" | "log" => Func::Ln,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn apply_f64(self, v: f64) -> f64 {
        match self {
            Func::Exp => v.exp(),
            Func::Ln => v.ln(),
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Sinh => v.sinh(),
            Func::Cosh => v.cosh(),
            Func::Sqrt => v.sqrt(),
        }
    }

    fn apply<S: Scalar>(self, v: &S) -> S {
        match self {
            Func::Exp => v.exp(),
            Func::Ln => v.ln(),
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Sinh => v.sinh(),
            Func::Cosh => v.cosh(),
            Func::Sqrt => v.sqrt(),
        }
    }
}

/// Expression tree. Constructors fold constants so that derivative trees stay small.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    PowI(Box<Expr>, i32),
    PowF(Box<Expr>, f64),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn constant(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Const(c) => Expr::Const(-c),
            Expr::Neg(inner) => *inner,
            a => Expr::Neg(Box::new(a)),
        }
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a.constant(), b.constant()) {
            (Some(x), Some(y)) => Expr::Const(x + y),
            (Some(x), _) if x == 0.0 => b,
            (_, Some(y)) if y == 0.0 => a,
            _ => Expr::Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a.constant(), b.constant()) {
            (Some(x), Some(y)) => Expr::Const(x - y),
            (Some(x), _) if x == 0.0 => Expr::neg(b),
            (_, Some(y)) if y == 0.0 => a,
            _ => Expr::Sub(Box::new(a), Box::new(b)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a.constant(), b.constant()) {
            (Some(x), Some(y)) => Expr::Const(x * y),
            (Some(x), _) if x == 0.0 => Expr::Const(0.0),
            (_, Some(y)) if y == 0.0 => Expr::Const(0.0),
            (Some(x), _) if x == 1.0 => b,
            (_, Some(y)) if y == 1.0 => a,
            (Some(x), _) if x == -1.0 => Expr::neg(b),
            _ => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        match (a.constant(), b.constant()) {
            (Some(x), Some(y)) => Expr::Const(x / y),
            (Some(x), _) if x == 0.0 => Expr::Const(0.0),
            (_, Some(y)) if y == 1.0 => a,
            _ => Expr::Div(Box::new(a), Box::new(b)),
        }
    }

    pub fn powi(a: Expr, k: i32) -> Expr {
        match (a.constant(), k) {
            (_, 0) => Expr::Const(1.0),
            (_, 1) => a,
            (Some(x), _) => Expr::Const(x.powi(k)),
            _ => Expr::PowI(Box::new(a), k),
        }
    }

    pub fn powf(a: Expr, c: f64) -> Expr {
        if c.fract() == 0.0 && c.abs() <= 64.0 {
            return Expr::powi(a, c as i32);
        }
        match a.constant() {
            Some(x) => Expr::Const(x.powf(c)),
            None => Expr::PowF(Box::new(a), c),
        }
    }

    pub fn pow(a: Expr, b: Expr) -> Expr {
        match b.constant() {
            Some(c) => Expr::powf(a, c),
            None => Expr::Pow(Box::new(a), Box::new(b)),
        }
    }

    pub fn call(f: Func, a: Expr) -> Expr {
        match a.constant() {
            Some(x) => Expr::Const(f.apply_f64(x)),
            None => Expr::Call(f, Box::new(a)),
        }
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(a) | Expr::PowI(a, _) | Expr::PowF(a, _) | Expr::Call(_, a) => a.max_var(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.max_var().max(b.max_var())
            }
        }
    }

    /// Symbolic partial derivative with respect to variable `k`.
    pub fn derivative(&self, k: usize) -> Expr {
        use Expr::*;
        match self {
            Const(_) => Const(0.0),
            Var(i) => Const(if *i == k { 1.0 } else { 0.0 }),
            Neg(a) => Expr::neg(a.derivative(k)),
            Add(a, b) => Expr::add(a.derivative(k), b.derivative(k)),
            Sub(a, b) => Expr::sub(a.derivative(k), b.derivative(k)),
            Mul(a, b) => Expr::add(
                Expr::mul(a.derivative(k), (**b).clone()),
                Expr::mul((**a).clone(), b.derivative(k)),
            ),
            Div(a, b) => {
                let da = a.derivative(k);
                let db = b.derivative(k);
                if db.constant() == Some(0.0) {
                    return Expr::div(da, (**b).clone());
                }
                Expr::div(
                    Expr::sub(Expr::mul(da, (**b).clone()), Expr::mul((**a).clone(), db)),
                    Expr::powi((**b).clone(), 2),
                )
            }
            PowI(a, n) => Expr::mul(
                Expr::mul(Const(*n as f64), Expr::powi((**a).clone(), n - 1)),
                a.derivative(k),
            ),
            PowF(a, c) => Expr::mul(
                Expr::mul(Const(*c), Expr::powf((**a).clone(), c - 1.0)),
                a.derivative(k),
            ),
            Pow(a, b) => {
                // a^b = exp(b ln a)
                let inner = Expr::add(
                    Expr::mul(b.derivative(k), Expr::call(Func::Ln, (**a).clone())),
                    Expr::div(Expr::mul((**b).clone(), a.derivative(k)), (**a).clone()),
                );
                Expr::mul(self.clone(), inner)
            }
            Call(f, a) => {
                let da = a.derivative(k);
                if da.constant() == Some(0.0) {
                    return Const(0.0);
                }
                let a = (**a).clone();
                let outer = match f {
                    Func::Exp => Expr::call(Func::Exp, a),
                    Func::Ln => Expr::div(Const(1.0), a),
                    Func::Sin => Expr::call(Func::Cos, a),
                    Func::Cos => Expr::neg(Expr::call(Func::Sin, a)),
                    Func::Sinh => Expr::call(Func::Cosh, a),
                    Func::Cosh => Expr::call(Func::Sinh, a),
                    Func::Sqrt => Expr::div(Const(0.5), Expr::call(Func::Sqrt, a)),
                };
                Expr::mul(outer, da)
            }
        }
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        use Expr::*;
        match self {
            Const(c) => *c,
            Var(i) => x[*i],
            Neg(a) => -a.eval_f64(x),
            Add(a, b) => a.eval_f64(x) + b.eval_f64(x),
            Sub(a, b) => a.eval_f64(x) - b.eval_f64(x),
            Mul(a, b) => a.eval_f64(x) * b.eval_f64(x),
            Div(a, b) => a.eval_f64(x) / b.eval_f64(x),
            PowI(a, k) => a.eval_f64(x).powi(*k),
            PowF(a, c) => a.eval_f64(x).powf(*c),
            Pow(a, b) => a.eval_f64(x).powf(b.eval_f64(x)),
            Call(f, a) => f.apply_f64(a.eval_f64(x)),
        }
    }
}

// ---------------------------------------------------------------- parsing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
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
                if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let v: f64 = text
                .parse()
                .map_err(|_| ExprError { message: format!("malformed number '{text}'"), position: start })?;
            out.push((Tok::Num(v), start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
        } else if "+-*/^".contains(c) {
            out.push((Tok::Op(c), i));
            i += 1;
        } else if c == '(' {
            out.push((Tok::LParen, i));
            i += 1;
        } else if c == ')' {
            out.push((Tok::RParen, i));
            i += 1;
        } else {
            return Err(ExprError { message: format!("unexpected character '{c}'"), position: i });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    nvars: usize,
    params: &'a BTreeMap<String, f64>,
    end: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |t| t.1)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError { message: msg.into(), position: self.offset() })
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if c == '+' { Expr::add(lhs, rhs) } else { Expr::sub(lhs, rhs) };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if c == '*' { Expr::mul(lhs, rhs) } else { Expr::div(lhs, rhs) };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.pos += 1;
                Ok(Expr::neg(self.unary()?))
            }
            Some(Tok::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::pow(base, exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let Some(tok) = self.peek().cloned() else {
            return self.err("unexpected end of expression");
        };
        match tok {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            Tok::LParen => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(&Tok::RParen) {
                    return self.err("expected ')'");
                }
                self.pos += 1;
                Ok(e)
            }
            Tok::Ident(name) => {
                let at = self.offset();
                self.pos += 1;
                if let Some(f) = Func::from_name(&name) {
                    if self.peek() != Some(&Tok::LParen) {
                        return self.err(format!("expected '(' after function '{name}'"));
                    }
                    self.pos += 1;
                    let arg = self.expr()?;
                    if self.peek() != Some(&Tok::RParen) {
                        return self.err("expected ')'");
                    }
                    self.pos += 1;
                    return Ok(Expr::call(f, arg));
                }
                if let Some(&v) = self.params.get(&name) {
                    return Ok(Expr::Const(v));
                }
                if name == "pi" {
                    return Ok(Expr::Const(std::f64::consts::PI));
                }
                if let Some(idx) = name.strip_prefix('x').and_then(|d| d.parse::<usize>().ok()) {
                    if idx >= 1 && idx <= self.nvars {
                        return Ok(Expr::Var(idx - 1));
                    }
                    return Err(ExprError {
                        message: format!("variable '{name}' out of range x1..x{}", self.nvars),
                        position: at,
                    });
                }
                Err(ExprError { message: format!("unknown identifier '{name}'"), position: at })
            }
            Tok::Op(c) => self.err(format!("unexpected operator '{c}'")),
            Tok::RParen => self.err("unexpected ')'"),
        }
    }
}

/// Parses `src` over variables `x1..x{nvars}` with the given parameter bindings.
pub fn parse(src: &str, nvars: usize, params: &BTreeMap<String, f64>) -> Result<Expr, ExprError> {
    let toks = tokenize(src)?;
    let mut p = Parser { toks, pos: 0, nvars, params, end: src.len() };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return p.err("trailing input");
    }
    Ok(e)
}

// ---------------------------------------------------------------- programs

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    Var(usize),
    Neg,
    Add,
    Sub,
    Mul,
    Div,
    PowI(i32),
    PowF(f64),
    Pow,
    Call(Func),
    /// Multiplication by a literal, common in metric coefficients.
    Scale(f64),
}

/// A compiled expression: postfix code evaluated with a value stack.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    ops: Vec<Op>,
    constant: Option<f64>,
}

impl Program {
    pub fn compile(e: &Expr) -> Program {
        fn emit(e: &Expr, ops: &mut Vec<Op>) {
            match e {
                Expr::Const(c) => ops.push(Op::Const(*c)),
                Expr::Var(i) => ops.push(Op::Var(*i)),
                Expr::Neg(a) => {
                    emit(a, ops);
                    ops.push(Op::Neg);
                }
                Expr::Mul(a, b) if a.constant().is_some() || b.constant().is_some() => {
                    let (c, rest) = match a.constant() {
                        Some(c) => (c, b),
                        None => (b.constant().unwrap(), a),
                    };
                    emit(rest, ops);
                    ops.push(Op::Scale(c));
                }
                Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                    emit(a, ops);
                    emit(b, ops);
                    ops.push(match e {
                        Expr::Add(..) => Op::Add,
                        Expr::Sub(..) => Op::Sub,
                        Expr::Mul(..) => Op::Mul,
                        Expr::Div(..) => Op::Div,
                        _ => Op::Pow,
                    });
                }
                Expr::PowI(a, k) => {
                    emit(a, ops);
                    ops.push(Op::PowI(*k));
                }
                Expr::PowF(a, c) => {
                    emit(a, ops);
                    ops.push(Op::PowF(*c));
                }
                Expr::Call(f, a) => {
                    emit(a, ops);
                    ops.push(Op::Call(*f));
                }
            }
        }
        let mut ops = Vec::new();
        emit(e, &mut ops);
        Program { constant: e.constant(), ops }
    }

    pub fn constant(&self) -> Option<f64> {
        self.constant
    }

    pub fn is_zero(&self) -> bool {
        self.constant == Some(0.0)
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        if let Some(c) = self.constant {
            return c;
        }
        let mut stack: smallvec::SmallVec<[f64; 16]> = smallvec::SmallVec::new();
        for op in &self.ops {
            match *op {
                Op::Const(c) => stack.push(c),
                Op::Var(i) => stack.push(x[i]),
                Op::Neg => {
                    let a = stack.pop().unwrap();
                    stack.push(-a);
                }
                Op::PowI(k) => {
                    let a = stack.pop().unwrap();
                    stack.push(a.powi(k));
                }
                Op::PowF(c) => {
                    let a = stack.pop().unwrap();
                    stack.push(a.powf(c));
                }
                Op::Scale(c) => {
                    let a = stack.pop().unwrap();
                    stack.push(a * c);
                }
                Op::Call(f) => {
                    let a = stack.pop().unwrap();
                    stack.push(f.apply_f64(a));
                }
                Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Pow => {
                    let b = stack.pop().unwrap();
                    let a = stack.pop().unwrap();
                    stack.push(match op {
                        Op::Add => a + b,
                        Op::Sub => a - b,
                        Op::Mul => a * b,
                        Op::Div => a / b,
                        _ => a.powf(b),
                    });
                }
            }
        }
        stack.pop().unwrap()
    }

    /// Evaluates on generic scalars; constants are lifted into the space of `x[0]`.
    pub fn eval<S: Scalar>(&self, x: &[S]) -> S {
        let proto = &x[0];
        if let Some(c) = self.constant {
            return proto.lift(c);
        }
        let mut stack: Vec<S> = Vec::with_capacity(8);
        for op in &self.ops {
            match *op {
                Op::Const(c) => stack.push(proto.lift(c)),
                Op::Var(i) => stack.push(x[i].clone()),
                Op::Neg => {
                    let a = stack.pop().unwrap();
                    stack.push(a.negate());
                }
                Op::PowI(k) => {
                    let a = stack.pop().unwrap();
                    stack.push(a.powi(k));
                }
                Op::PowF(c) => {
                    let a = stack.pop().unwrap();
                    stack.push(a.powf(c));
                }
                Op::Scale(c) => {
                    let a = stack.pop().unwrap();
                    stack.push(a.scale(c));
                }
                Op::Call(f) => {
                    let a = stack.pop().unwrap();
                    stack.push(f.apply(&a));
                }
                Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Pow => {
                    let b = stack.pop().unwrap();
                    let a = stack.pop().unwrap();
                    stack.push(match op {
                        Op::Add => a.plus(&b),
                        Op::Sub => a.minus(&b),
                        Op::Mul => a.times(&b),
                        Op::Div => a.over(&b),
                        _ => a.ln().times(&b).exp(),
                    });
                }
            }
        }
        stack.pop().unwrap()
    }
}

/// A scalar expression together with its compiled program and gradient.
#[derive(Debug, Clone)]
pub struct ScalarExpr {
    pub source: String,
    pub expr: Expr,
    pub program: Program,
    pub gradient: Vec<Program>,
}

impl ScalarExpr {
    pub fn parse(src: &str, nvars: usize, params: &BTreeMap<String, f64>) -> Result<Self, ExprError> {
        let expr = parse(src, nvars, params)?;
        Ok(Self::from_expr(src.to_string(), expr, nvars))
    }

    pub fn from_expr(source: String, expr: Expr, nvars: usize) -> Self {
        let program = Program::compile(&expr);
        let gradient = (0..nvars).map(|k| Program::compile(&expr.derivative(k))).collect();
        ScalarExpr { source, expr, program, gradient }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::Jet;

    fn p(s: &str, n: usize) -> Expr {
        parse(s, n, &BTreeMap::new()).unwrap()
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(p("1+2*3", 1).eval_f64(&[0.0]), 7.0);
        assert_eq!(p("2^3^2", 1).eval_f64(&[0.0]), 512.0);
        assert_eq!(p("-2^2", 1).eval_f64(&[0.0]), -4.0);
        assert_eq!(p("8/4/2", 1).eval_f64(&[0.0]), 1.0);
        assert_eq!(p("x1^-1", 1).eval_f64(&[4.0]), 0.25);
        assert!((p("1.5e-1*pi", 1).eval_f64(&[0.0]) - 0.15 * std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn parameters_and_errors() {
        let mut params = BTreeMap::new();
        params.insert("eps".to_string(), 0.25);
        let e = parse("x1 + eps", 1, &params).unwrap();
        assert_eq!(e.eval_f64(&[1.0]), 1.25);
        let err = parse("x3", 2, &params).unwrap_err();
        assert!(err.message.contains("out of range"));
        assert!(parse("foo(x1)", 1, &params).is_err());
        assert!(parse("(x1", 1, &params).is_err());
        assert!(parse("x1 x1", 1, &params).is_err());
        assert!(parse("x1 # 2", 1, &params).is_err());
    }

    #[test]
    fn symbolic_derivative_matches_jets() {
        let src = "exp(2*x1)*cos(x2)/(1+x1^2) + sqrt(2+sinh(x1*x2)) + ln(3+x2)*cosh(x1)";
        let e = p(src, 2);
        let x = [0.3, -0.6];
        let jets = Jet::seed(&x, 2);
        let prog = Program::compile(&e);
        let j = prog.eval(&jets);
        assert!((j.value() - e.eval_f64(&x)).abs() < 1e-14);
        for k in 0..2 {
            let dk = e.derivative(k);
            let mut ex = [0u8; 2];
            ex[k] = 1;
            assert!((dk.eval_f64(&x) - j.derivative(&ex)).abs() < 1e-12);
            for l in 0..2 {
                let mut ex2 = ex;
                ex2[l] += 1;
                assert!((dk.derivative(l).eval_f64(&x) - j.derivative(&ex2)).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn general_power_derivative() {
        let e = p("x1^x2", 2);
        let x = [1.7, 0.4];
        let d0 = e.derivative(0).eval_f64(&x);
        let d1 = e.derivative(1).eval_f64(&x);
        assert!((d0 - 0.4 * 1.7f64.powf(-0.6)).abs() < 1e-14);
        assert!((d1 - 1.7f64.powf(0.4) * 1.7f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn constant_folding_keeps_zero_derivatives_trivial() {
        let e = p("1 + 0*x1", 2);
        let prog = Program::compile(&e.derivative(0));
        assert!(prog.is_zero());
        assert!(Program::compile(&p("exp(x1)", 2).derivative(1)).is_zero());
    }

    #[test]
    fn program_matches_tree() {
        let e = p("x1*x2 - x1/x2 + x2^3 - cos(x1)^2", 2);
        let prog = Program::compile(&e);
        let x = [0.9, 1.4];
        assert!((prog.eval_f64(&x) - e.eval_f64(&x)).abs() < 1e-15);
        assert!((prog.eval::<f64>(&x) - e.eval_f64(&x)).abs() < 1e-15);
    }
}

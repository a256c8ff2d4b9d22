//! A small scalar expression language for dynamics, running costs, terminal
//! functionals and candidate solutions in problem files.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | primary
//! primary := number | '(' expr ')' | 't' | 'T' | u<i> | v<i> | y<i>
//!          | y<i>'(' read ')' | func '(' expr (',' expr)* ')'
//! read    := 't' | 't' '-' number | 'T' | 'T' '-' number
//! func    := min | max | abs | sin | cos | exp | step
//! ```
//!
//! Indices are 1-based. `step(t - c)` is `𝟙[t ≥ c]`. State reads never look
//! past the current time: `y1(T - d)` evaluated at `t` reads `x(min(t, T − d))`,
//! which is the terminal sample once `t = T`.
//! Literals are non-negative; negative values are written with unary minus.

use std::fmt;

use crate::error::{config, Result};
use crate::path::Path;

/// Binary operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

/// Built-in functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Min,
    Max,
    Abs,
    Sin,
    Cos,
    Exp,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Min => "min",
            Func::Max => "max",
            Func::Abs => "abs",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "min" => Func::Min,
            "max" => Func::Max,
            "abs" => Func::Abs,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            _ => return None,
        })
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

/// When a state coordinate is read.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReadTime {
    /// `y_i`, the current value.
    Now,
    /// `y_i(t − d)`.
    Lag(f64),
    /// `y_i(T − d)`.
    Terminal(f64),
}

/// Which player a control variable belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlVar {
    U,
    V,
}

/// Expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Time,
    Horizon,
    Control(ControlVar, usize),
    State(usize, ReadTime),
    Step(f64),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// A parse or validation failure with the byte column where it was detected.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "column {}: {}", self.column + 1, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

fn tokenize(src: &str) -> std::result::Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
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
            let value = text.parse::<f64>().map_err(|_| ParseError {
                column: start,
                message: format!("malformed number `{text}`"),
            })?;
            out.push((start, Tok::Num(value)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else if "+-*/(),".contains(c) {
            out.push((i, Tok::Sym(c)));
            i += 1;
        } else {
            let ch = src[i..].chars().next().unwrap_or(c);
            return Err(ParseError {
                column: i,
                message: format!("unexpected character `{ch}`"),
            });
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn column(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |t| t.0)
    }

    fn err<T>(&self, message: impl Into<String>) -> std::result::Result<T, ParseError> {
        Err(ParseError {
            column: self.column(),
            message: message.into(),
        })
    }

    fn peek_sym(&self, c: char) -> bool {
        matches!(self.toks.get(self.pos), Some((_, Tok::Sym(s))) if *s == c)
    }

    fn expect_sym(&mut self, c: char) -> std::result::Result<(), ParseError> {
        if self.peek_sym(c) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected `{c}`"))
        }
    }

    fn expr(&mut self) -> std::result::Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.peek_sym('+') {
                BinOp::Add
            } else if self.peek_sym('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> std::result::Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.peek_sym('*') {
                BinOp::Mul
            } else if self.peek_sym('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            self.pos += 1;
            let column = self.column();
            let rhs = self.unary()?;
            if op == BinOp::Div {
                if let Some(c) = rhs.constant_value() {
                    if c == 0.0 {
                        return Err(ParseError {
                            column,
                            message: "division by an expression that is constantly zero".into(),
                        });
                    }
                }
            }
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> std::result::Result<Expr, ParseError> {
        if self.peek_sym('-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> std::result::Result<Expr, ParseError> {
        let column = self.column();
        let Some((_, tok)) = self.toks.get(self.pos).cloned() else {
            return self.err("unexpected end of expression");
        };
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Expr::Const(v)),
            Tok::Sym('(') => {
                let e = self.expr()?;
                self.expect_sym(')')?;
                Ok(e)
            }
            Tok::Sym(c) => Err(ParseError {
                column,
                message: format!("unexpected `{c}`"),
            }),
            Tok::Ident(name) => self.identifier(&name, column),
        }
    }

    fn identifier(&mut self, name: &str, column: usize) -> std::result::Result<Expr, ParseError> {
        match name {
            "t" => return Ok(Expr::Time),
            "T" => return Ok(Expr::Horizon),
            "step" => {
                self.expect_sym('(')?;
                let arg_column = self.column();
                let arg = self.expr()?;
                self.expect_sym(')')?;
                return match offset_from(&arg, &Expr::Time) {
                    Some(c) => Ok(Expr::Step(c)),
                    None => Err(ParseError {
                        column: arg_column,
                        message: "step takes an argument of the form `t - c`".into(),
                    }),
                };
            }
            _ => {}
        }
        if let Some(func) = Func::from_name(name) {
            self.expect_sym('(')?;
            let mut args = vec![self.expr()?];
            while self.peek_sym(',') {
                self.pos += 1;
                args.push(self.expr()?);
            }
            self.expect_sym(')')?;
            if args.len() != func.arity() {
                return Err(ParseError {
                    column,
                    message: format!("{} takes {} argument(s), got {}", func.name(), func.arity(), args.len()),
                });
            }
            return Ok(Expr::Call(func, args));
        }
        let (head, digits) = name.split_at(1);
        let index = match digits.parse::<usize>() {
            Ok(i) if i >= 1 && !digits.starts_with('0') => i,
            _ => {
                return Err(ParseError {
                    column,
                    message: format!("unknown identifier `{name}`"),
                })
            }
        };
        match head {
            "u" => Ok(Expr::Control(ControlVar::U, index)),
            "v" => Ok(Expr::Control(ControlVar::V, index)),
            "y" => {
                if !self.peek_sym('(') {
                    return Ok(Expr::State(index, ReadTime::Now));
                }
                self.pos += 1;
                let arg_column = self.column();
                let arg = self.expr()?;
                self.expect_sym(')')?;
                if let Some(d) = offset_from(&arg, &Expr::Time) {
                    Ok(Expr::State(index, if d == 0.0 { ReadTime::Now } else { ReadTime::Lag(d) }))
                } else if let Some(d) = offset_from(&arg, &Expr::Horizon) {
                    Ok(Expr::State(index, ReadTime::Terminal(d)))
                } else {
                    Err(ParseError {
                        column: arg_column,
                        message: "state reads take the form `y_i(t - d)` or `y_i(T - d)`".into(),
                    })
                }
            }
            _ => Err(ParseError {
                column,
                message: format!("unknown identifier `{name}`"),
            }),
        }
    }
}

/// `base` itself gives 0, `base - c` gives `c`.
fn offset_from(e: &Expr, base: &Expr) -> Option<f64> {
    match e {
        e if e == base => Some(0.0),
        Expr::Bin(BinOp::Sub, a, b) if **a == *base => match **b {
            Expr::Const(c) => Some(c),
            _ => None,
        },
        _ => None,
    }
}

/// Parses an expression. Division by a constant zero is rejected here; other
/// checks need the problem context, see [`Expr::validate`].
pub fn parse(src: &str) -> std::result::Result<Expr, ParseError> {
    let toks = tokenize(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: src.len(),
    };
    let e = p.expr()?;
    if p.pos < p.toks.len() {
        return p.err("unexpected trailing input");
    }
    Ok(e)
}

/// Where an expression is used, which fixes the variables it may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// Dynamics or running cost: `t`, controls, current and lagged state.
    Running,
    /// Terminal functional: constants, `T` and `y_i(T − d)` only.
    Terminal,
    /// Candidate solution `φ(t, x)`: everything but the controls.
    Candidate,
    /// Scalar function of time (growth bounds, Lipschitz densities).
    TimeOnly,
    /// Initial history in `τ` (spelled `t`).
    History,
}

/// What validation needs to know about the problem.
#[derive(Debug, Clone)]
pub struct Context {
    pub n: usize,
    pub p_dim: usize,
    pub q_dim: usize,
    pub h: f64,
    pub horizon: f64,
    pub dt: f64,
    pub discontinuities: Vec<f64>,
}

fn on_grid(d: f64, dt: f64) -> bool {
    let r = d / dt;
    (r - r.round()).abs() <= 1e-9 * r.abs().max(1.0)
}

impl Expr {
    /// The value if the expression contains no variables.
    pub fn constant_value(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            Expr::Neg(e) => e.constant_value().map(|v| -v),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.constant_value()?, b.constant_value()?);
                Some(apply(*op, a, b))
            }
            Expr::Call(f, args) => {
                let vals: Option<Vec<f64>> = args.iter().map(Expr::constant_value).collect();
                Some(call(*f, &vals?))
            }
            _ => None,
        }
    }

    fn walk(&self, visit: &mut impl FnMut(&Expr)) {
        visit(self);
        match self {
            Expr::Neg(e) => e.walk(visit),
            Expr::Bin(_, a, b) => {
                a.walk(visit);
                b.walk(visit);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.walk(visit)),
            _ => {}
        }
    }

    /// Times `c` of all `step(t − c)` terms, sorted and deduplicated.
    pub fn step_times(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let Expr::Step(c) = e {
                out.push(*c);
            }
        });
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Lags `d` of all `y_i(t − d)` reads.
    pub fn lags(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let Expr::State(_, ReadTime::Lag(d)) = e {
                out.push(*d);
            }
        });
        out
    }

    /// Whether the expression reads any state coordinate.
    pub fn reads_state(&self) -> bool {
        let mut found = false;
        self.walk(&mut |e| found |= matches!(e, Expr::State(..)));
        found
    }

    /// Checks indices, lags and step times against the problem and the role.
    pub fn validate(&self, role: Role, ctx: &Context) -> std::result::Result<(), String> {
        let mut problem = None;
        self.walk(&mut |e| {
            if problem.is_some() {
                return;
            }
            problem = match e {
                Expr::Time if role == Role::Terminal => {
                    Some("a terminal functional may not reference `t`; use `y_i(T - d)` reads".to_string())
                }
                Expr::Control(..) if role != Role::Running => Some(format!("controls are not available in {role:?} expressions")),
                Expr::Control(ControlVar::U, i) if *i > ctx.p_dim => Some(format!("u{i} exceeds the dimension {} of P", ctx.p_dim)),
                Expr::Control(ControlVar::V, i) if *i > ctx.q_dim => Some(format!("v{i} exceeds the dimension {} of Q", ctx.q_dim)),
                Expr::State(..) if matches!(role, Role::TimeOnly | Role::History) => {
                    Some(format!("state reads are not available in {role:?} expressions"))
                }
                Expr::State(i, _) if *i > ctx.n => Some(format!("y{i} exceeds the state dimension {}", ctx.n)),
                Expr::State(_, ReadTime::Now) if role == Role::Terminal => {
                    Some("a terminal functional reads the state as `y_i(T - d)`".to_string())
                }
                Expr::State(_, ReadTime::Lag(_)) if role == Role::Terminal => {
                    Some("a terminal functional reads the state as `y_i(T - d)`".to_string())
                }
                Expr::State(_, ReadTime::Lag(d)) if *d < 0.0 || *d > ctx.h + 1e-12 || !on_grid(*d, ctx.dt) => Some(format!(
                    "lag {d} must be a non-negative multiple of dt = {} not exceeding h = {}",
                    ctx.dt, ctx.h
                )),
                Expr::State(_, ReadTime::Terminal(d))
                    if *d < 0.0 || *d > ctx.horizon + ctx.h + 1e-12 || !on_grid(*d, ctx.dt) =>
                {
                    Some(format!(
                        "terminal lag {d} must be a non-negative multiple of dt = {} not exceeding T + h = {}",
                        ctx.dt,
                        ctx.horizon + ctx.h
                    ))
                }
                Expr::Step(c) if !ctx.discontinuities.iter().any(|&d| (d - c).abs() <= 1e-12) => {
                    Some(format!("step(t - {c}) needs {c} among the declared discontinuities"))
                }
                _ => None,
            };
        });
        problem.map_or(Ok(()), Err)
    }

    /// Evaluates the expression; total on validated expressions.
    pub fn eval(&self, env: &Env<'_>) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Time => env.t,
            Expr::Horizon => env.horizon,
            Expr::Control(ControlVar::U, i) => env.u[i - 1],
            Expr::Control(ControlVar::V, i) => env.v[i - 1],
            Expr::State(i, at) => {
                let path = env.path.expect("state read without a path");
                let tau = match at {
                    ReadTime::Now => env.t,
                    ReadTime::Lag(d) => env.t - d,
                    ReadTime::Terminal(d) => (env.horizon - d).min(env.t),
                };
                path.eval(tau)[i - 1]
            }
            Expr::Step(c) => {
                if env.t >= *c {
                    1.0
                } else {
                    0.0
                }
            }
            Expr::Neg(e) => -e.eval(env),
            Expr::Bin(op, a, b) => apply(*op, a.eval(env), b.eval(env)),
            Expr::Call(f, args) => match f {
                Func::Min | Func::Max => call(*f, &[args[0].eval(env), args[1].eval(env)]),
                _ => call(*f, &[args[0].eval(env)]),
            },
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(op, ..) => op.precedence(),
            Expr::Neg(_) => 3,
            _ => 4,
        }
    }
}

fn apply(op: BinOp, a: f64, b: f64) -> f64 {
    match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div => a / b,
    }
}

fn call(f: Func, args: &[f64]) -> f64 {
    match f {
        Func::Min => args[0].min(args[1]),
        Func::Max => args[0].max(args[1]),
        Func::Abs => args[0].abs(),
        Func::Sin => args[0].sin(),
        Func::Cos => args[0].cos(),
        Func::Exp => args[0].exp(),
    }
}

/// Evaluation environment. State reads never look past `t`, so `path` need not
/// be stopped.
#[derive(Debug, Clone, Copy)]
pub struct Env<'a> {
    pub t: f64,
    pub horizon: f64,
    pub path: Option<&'a Path>,
    pub u: &'a [f64],
    pub v: &'a [f64],
}

impl<'a> Env<'a> {
    pub fn time(t: f64, horizon: f64) -> Self {
        Self {
            t,
            horizon,
            path: None,
            u: &[],
            v: &[],
        }
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
    if e.precedence() < min_prec {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

fn write_offset(f: &mut fmt::Formatter<'_>, base: &str, d: f64) -> fmt::Result {
    if d == 0.0 {
        write!(f, "{base}")
    } else {
        write!(f, "{base} - {d:?}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Time => write!(f, "t"),
            Expr::Horizon => write!(f, "T"),
            Expr::Control(ControlVar::U, i) => write!(f, "u{i}"),
            Expr::Control(ControlVar::V, i) => write!(f, "v{i}"),
            Expr::State(i, ReadTime::Now) => write!(f, "y{i}"),
            Expr::State(i, ReadTime::Lag(d)) => {
                write!(f, "y{i}(")?;
                write_offset(f, "t", *d)?;
                write!(f, ")")
            }
            Expr::State(i, ReadTime::Terminal(d)) => {
                write!(f, "y{i}(")?;
                write_offset(f, "T", *d)?;
                write!(f, ")")
            }
            Expr::Step(c) => {
                write!(f, "step(")?;
                write_offset(f, "t", *c)?;
                write!(f, ")")
            }
            Expr::Neg(e) => {
                write!(f, "-")?;
                write_child(f, e, 3)
            }
            Expr::Bin(op, a, b) => {
                let p = op.precedence();
                write_child(f, a, p)?;
                write!(f, " {} ", op.symbol())?;
                write_child(f, b, p + 1)
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Parses and validates in one go, reporting failures as configuration errors
/// prefixed with `field`.
pub fn compile(field: &str, src: &str, role: Role, ctx: &Context) -> Result<Expr> {
    let e = parse(src).map_err(|e| config(format!("{field}: {e}")))?;
    e.validate(role, ctx).map_err(|m| config(format!("{field}: {m}")))?;
    Ok(e)
}

//! Scalar expressions over the phase-space variables `t, t1, t2, x, p, u`.
//!
//! The grammar is deliberately small:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | base ('^' factor)?
//! base   := number | ident | ident '(' expr (',' expr)? ')' | '(' expr ')'
//! ```
//!
//! `^` is right-associative and unary minus binds looser than `^`, so
//! `-x^2` is `-(x^2)`. Implicit multiplication is not supported.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

/// Variables an expression may reference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    T,
    T1,
    T2,
    X,
    P,
    U,
}

impl Var {
    pub const ALL: [Var; 6] = [Var::T, Var::T1, Var::T2, Var::X, Var::P, Var::U];

    pub fn name(self) -> &'static str {
        match self {
            Var::T => "t",
            Var::T1 => "t1",
            Var::T2 => "t2",
            Var::X => "x",
            Var::P => "p",
            Var::U => "u",
        }
    }

    pub fn from_name(name: &str) -> Option<Var> {
        Var::ALL.into_iter().find(|v| v.name() == name)
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Values for the variables of an expression. Unset variables make
/// evaluation fail with [`EvalError::MissingBinding`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Bindings {
    values: [Option<f64>; 6],
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, var: Var, value: f64) -> Self {
        self.set(var, value);
        self
    }

    pub fn set(&mut self, var: Var, value: f64) {
        self.values[var.slot()] = Some(value);
    }

    pub fn get(&self, var: Var) -> Option<f64> {
        self.values[var.slot()]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Abs,
    Sqrt,
}

impl UnaryOp {
    fn function(name: &str) -> Option<UnaryOp> {
        Some(match name {
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "tan" => UnaryOp::Tan,
            "exp" => UnaryOp::Exp,
            "log" => UnaryOp::Log,
            "abs" => UnaryOp::Abs,
            "sqrt" => UnaryOp::Sqrt,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "neg",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Tan => "tan",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Abs => "abs",
            UnaryOp::Sqrt => "sqrt",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Min,
    Max,
}

impl BinaryOp {
    fn function(name: &str) -> Option<BinaryOp> {
        match name {
            "min" => Some(BinaryOp::Min),
            "max" => Some(BinaryOp::Max),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
            BinaryOp::Min => "min",
            BinaryOp::Max => "max",
        }
    }
}

/// Expression tree. Immutable once built; cheap to share behind `&`.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(String),
    UnknownIdentifier(String),
    Arity {
        function: String,
        expected: usize,
        found: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{} at byte offset {offset}", describe(.kind))]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub offset: usize,
}

fn describe(kind: &ParseErrorKind) -> String {
    match kind {
        ParseErrorKind::Syntax(msg) => format!("syntax error: {msg}"),
        ParseErrorKind::UnknownIdentifier(name) => format!("unknown identifier '{name}'"),
        ParseErrorKind::Arity {
            function,
            expected,
            found,
        } => format!("{function} takes {expected} argument(s), got {found}"),
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EvalError {
    #[error("no value bound for variable '{0}'")]
    MissingBinding(Var),
    #[error("domain error: {op} of {value}")]
    Domain { op: &'static str, value: f64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum DiffError {
    #[error("cannot differentiate {op}(...) with respect to {var}")]
    NonDifferentiable { op: &'static str, var: Var },
}

pub fn parse_expression(text: &str) -> Result<Expr, ParseError> {
    Expr::parse(text)
}

impl std::str::FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expr::parse(s)
    }
}

impl Expr {
    pub fn parse(text: &str) -> Result<Expr, ParseError> {
        let tokens = tokenize(text)?;
        let mut parser = Parser {
            tokens,
            pos: 0,
            end: text.len(),
        };
        let expr = parser.expr()?;
        match parser.peek() {
            None => Ok(expr),
            Some(tok) => Err(ParseError {
                kind: ParseErrorKind::Syntax(format!("unexpected {}", tok.kind)),
                offset: tok.offset,
            }),
        }
    }

    pub fn constant(value: f64) -> Expr {
        Expr::Const(value)
    }

    pub fn var(var: Var) -> Expr {
        Expr::Var(var)
    }

    pub fn eval(&self, bindings: &Bindings) -> Result<f64, EvalError> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(v) => bindings.get(*v).ok_or(EvalError::MissingBinding(*v)),
            Expr::Unary(op, arg) => {
                let a = arg.eval(bindings)?;
                Ok(match op {
                    UnaryOp::Neg => -a,
                    UnaryOp::Sin => a.sin(),
                    UnaryOp::Cos => a.cos(),
                    UnaryOp::Tan => a.tan(),
                    UnaryOp::Exp => a.exp(),
                    UnaryOp::Abs => a.abs(),
                    UnaryOp::Log => {
                        if a <= 0.0 || a.is_nan() {
                            return Err(EvalError::Domain { op: "log", value: a });
                        }
                        a.ln()
                    }
                    UnaryOp::Sqrt => {
                        if a < 0.0 || a.is_nan() {
                            return Err(EvalError::Domain { op: "sqrt", value: a });
                        }
                        a.sqrt()
                    }
                })
            }
            Expr::Binary(op, lhs, rhs) => {
                let a = lhs.eval(bindings)?;
                let b = rhs.eval(bindings)?;
                Ok(match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::Domain {
                                op: "division",
                                value: b,
                            });
                        }
                        a / b
                    }
                    BinaryOp::Pow => {
                        let r = a.powf(b);
                        if r.is_nan() && !a.is_nan() && !b.is_nan() {
                            return Err(EvalError::Domain { op: "pow", value: a });
                        }
                        r
                    }
                    BinaryOp::Min => a.min(b),
                    BinaryOp::Max => a.max(b),
                })
            }
        }
    }

    /// The set of variables referenced anywhere in the tree.
    pub fn variables(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                out.insert(*v);
            }
            Expr::Unary(_, a) => a.collect_vars(out),
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn depends_on(&self, var: Var) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(v) => *v == var,
            Expr::Unary(_, a) => a.depends_on(var),
            Expr::Binary(_, a, b) => a.depends_on(var) || b.depends_on(var),
        }
    }

    /// Renames variables, e.g. to swap the roles of `t1` and `t2`.
    pub fn substitute(&self, map: &impl Fn(Var) -> Var) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(v) => Expr::Var(map(*v)),
            Expr::Unary(op, a) => Expr::Unary(*op, Box::new(a.substitute(map))),
            Expr::Binary(op, a, b) => {
                Expr::Binary(*op, Box::new(a.substitute(map)), Box::new(b.substitute(map)))
            }
        }
    }

    /// Exact symbolic derivative with light 0/1 folding.
    ///
    /// `abs`, `min` and `max` are rejected whenever their argument depends on
    /// `var`; they are never smoothed.
    pub fn differentiate(&self, var: Var) -> Result<Expr, DiffError> {
        if !self.depends_on(var) {
            return Ok(Expr::Const(0.0));
        }
        Ok(match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(v) => Expr::Const(if *v == var { 1.0 } else { 0.0 }),
            Expr::Unary(op, a) => {
                let da = a.differentiate(var)?;
                let a = (**a).clone();
                match op {
                    UnaryOp::Neg => neg(da),
                    UnaryOp::Sin => mul(unary(UnaryOp::Cos, a), da),
                    UnaryOp::Cos => neg(mul(unary(UnaryOp::Sin, a), da)),
                    UnaryOp::Tan => div(da, pow(unary(UnaryOp::Cos, a), Expr::Const(2.0))),
                    UnaryOp::Exp => mul(unary(UnaryOp::Exp, a), da),
                    UnaryOp::Log => div(da, a),
                    UnaryOp::Sqrt => div(da, mul(Expr::Const(2.0), unary(UnaryOp::Sqrt, a))),
                    UnaryOp::Abs => {
                        return Err(DiffError::NonDifferentiable { op: "abs", var });
                    }
                }
            }
            Expr::Binary(op, a, b) => match op {
                BinaryOp::Min | BinaryOp::Max => {
                    return Err(DiffError::NonDifferentiable { op: op.name(), var });
                }
                BinaryOp::Add => add(a.differentiate(var)?, b.differentiate(var)?),
                BinaryOp::Sub => sub(a.differentiate(var)?, b.differentiate(var)?),
                BinaryOp::Mul => add(
                    mul(a.differentiate(var)?, (**b).clone()),
                    mul((**a).clone(), b.differentiate(var)?),
                ),
                BinaryOp::Div => div(
                    sub(
                        mul(a.differentiate(var)?, (**b).clone()),
                        mul((**a).clone(), b.differentiate(var)?),
                    ),
                    pow((**b).clone(), Expr::Const(2.0)),
                ),
                BinaryOp::Pow => {
                    let base = (**a).clone();
                    let exponent = (**b).clone();
                    if !exponent.depends_on(var) {
                        let lowered = match exponent {
                            Expr::Const(c) => Expr::Const(c - 1.0),
                            ref e => sub(e.clone(), Expr::Const(1.0)),
                        };
                        mul(mul(exponent, pow(base, lowered)), a.differentiate(var)?)
                    } else if !base.depends_on(var) {
                        mul(
                            mul(self.clone(), unary(UnaryOp::Log, base)),
                            b.differentiate(var)?,
                        )
                    } else {
                        let da = a.differentiate(var)?;
                        let db = b.differentiate(var)?;
                        mul(
                            self.clone(),
                            add(
                                mul(db, unary(UnaryOp::Log, base.clone())),
                                div(mul(exponent, da), base),
                            ),
                        )
                    }
                }
            },
        })
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => 1,
            Expr::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => 2,
            Expr::Binary(BinaryOp::Pow, ..) => 4,
            // Negation and negative constants always print parenthesised.
            _ => 5,
        }
    }
}

pub(crate) fn unary(op: UnaryOp, a: Expr) -> Expr {
    Expr::Unary(op, Box::new(a))
}

fn is_const(e: &Expr, value: f64) -> bool {
    matches!(e, Expr::Const(c) if *c == value)
}

pub(crate) fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Unary(UnaryOp::Neg, inner) => *inner,
        other => unary(UnaryOp::Neg, other),
    }
}

pub(crate) fn add(a: Expr, b: Expr) -> Expr {
    if is_const(&a, 0.0) {
        b
    } else if is_const(&b, 0.0) {
        a
    } else {
        Expr::Binary(BinaryOp::Add, Box::new(a), Box::new(b))
    }
}

pub(crate) fn sub(a: Expr, b: Expr) -> Expr {
    if is_const(&b, 0.0) {
        a
    } else if is_const(&a, 0.0) {
        neg(b)
    } else {
        Expr::Binary(BinaryOp::Sub, Box::new(a), Box::new(b))
    }
}

pub(crate) fn mul(a: Expr, b: Expr) -> Expr {
    if is_const(&a, 0.0) || is_const(&b, 0.0) {
        Expr::Const(0.0)
    } else if is_const(&a, 1.0) {
        b
    } else if is_const(&b, 1.0) {
        a
    } else {
        Expr::Binary(BinaryOp::Mul, Box::new(a), Box::new(b))
    }
}

pub(crate) fn div(a: Expr, b: Expr) -> Expr {
    if is_const(&a, 0.0) {
        Expr::Const(0.0)
    } else if is_const(&b, 1.0) {
        a
    } else {
        Expr::Binary(BinaryOp::Div, Box::new(a), Box::new(b))
    }
}

pub(crate) fn pow(a: Expr, b: Expr) -> Expr {
    if is_const(&b, 1.0) {
        a
    } else if is_const(&b, 0.0) {
        Expr::Const(1.0)
    } else {
        Expr::Binary(BinaryOp::Pow, Box::new(a), Box::new(b))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
            if parens {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            Expr::Const(c) => {
                if c.is_sign_negative() {
                    write!(f, "(-{:?})", -c)
                } else {
                    write!(f, "{c:?}")
                }
            }
            Expr::Var(v) => f.write_str(v.name()),
            Expr::Unary(UnaryOp::Neg, a) => {
                f.write_str("(-")?;
                child(f, a, a.precedence() < 4)?;
                f.write_str(")")
            }
            Expr::Unary(op, a) => write!(f, "{}({a})", op.name()),
            Expr::Binary(op @ (BinaryOp::Min | BinaryOp::Max), a, b) => {
                write!(f, "{}({a},{b})", op.name())
            }
            Expr::Binary(op, a, b) => {
                let (lp, rp) = match op {
                    BinaryOp::Add | BinaryOp::Sub => (a.precedence() < 1, b.precedence() <= 1),
                    BinaryOp::Mul | BinaryOp::Div => (a.precedence() < 2, b.precedence() <= 2),
                    _ => (a.precedence() <= 4, b.precedence() < 4),
                };
                child(f, a, lp)?;
                f.write_str(op.name())?;
                child(f, b, rp)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum TokenKind {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Number(n) => write!(f, "number {n}"),
            TokenKind::Ident(s) => write!(f, "identifier '{s}'"),
            TokenKind::Plus => f.write_str("'+'"),
            TokenKind::Minus => f.write_str("'-'"),
            TokenKind::Star => f.write_str("'*'"),
            TokenKind::Slash => f.write_str("'/'"),
            TokenKind::Caret => f.write_str("'^'"),
            TokenKind::LParen => f.write_str("'('"),
            TokenKind::RParen => f.write_str("')'"),
            TokenKind::Comma => f.write_str("','"),
        }
    }
}

#[derive(Clone, Debug)]
struct Token {
    kind: TokenKind,
    offset: usize,
}

fn syntax(msg: impl Into<String>, offset: usize) -> ParseError {
    ParseError {
        kind: ParseErrorKind::Syntax(msg.into()),
        offset,
    }
}

fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let kind = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => TokenKind::Plus,
            b'-' => TokenKind::Minus,
            b'*' => TokenKind::Star,
            b'/' => TokenKind::Slash,
            b'^' => TokenKind::Caret,
            b'(' => TokenKind::LParen,
            b')' => TokenKind::RParen,
            b',' => TokenKind::Comma,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
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
                let literal = &text[start..i];
                let value: f64 = literal
                    .parse()
                    .map_err(|_| syntax(format!("malformed number '{literal}'"), start))?;
                if !value.is_finite() {
                    return Err(syntax(format!("number '{literal}' out of range"), start));
                }
                tokens.push(Token {
                    kind: TokenKind::Number(value),
                    offset: start,
                });
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                tokens.push(Token {
                    kind: TokenKind::Ident(text[start..i].to_string()),
                    offset: start,
                });
                continue;
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(syntax(format!("unexpected character '{ch}'"), start));
            }
        };
        tokens.push(Token {
            kind,
            offset: start,
        });
        i += 1;
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_kind(&self) -> Option<&TokenKind> {
        self.peek().map(|t| &t.kind)
    }

    fn offset(&self) -> usize {
        self.peek().map_or(self.end, |t| t.offset)
    }

    fn next(&mut self) -> Option<Token> {
        let tok = self.tokens.get(self.pos).cloned();
        if tok.is_some() {
            self.pos += 1;
        }
        tok
    }

    fn expect(&mut self, kind: TokenKind) -> Result<(), ParseError> {
        match self.peek() {
            Some(tok) if tok.kind == kind => {
                self.pos += 1;
                Ok(())
            }
            Some(tok) => Err(syntax(format!("expected {kind}, found {}", tok.kind), tok.offset)),
            None => Err(syntax(format!("expected {kind}, found end of input"), self.end)),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek_kind() {
                Some(TokenKind::Plus) => BinaryOp::Add,
                Some(TokenKind::Minus) => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek_kind() {
                Some(TokenKind::Star) => BinaryOp::Mul,
                Some(TokenKind::Slash) => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if let Some(TokenKind::Minus) = self.peek_kind() {
            self.pos += 1;
            return Ok(unary(UnaryOp::Neg, self.factor()?));
        }
        let base = self.base()?;
        if let Some(TokenKind::Caret) = self.peek_kind() {
            self.pos += 1;
            let exponent = self.factor()?;
            return Ok(Expr::Binary(BinaryOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn base(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        let Some(tok) = self.next() else {
            return Err(syntax("unexpected end of input", self.end));
        };
        match tok.kind {
            TokenKind::Number(n) => Ok(Expr::Const(n)),
            TokenKind::LParen => {
                let inner = self.expr()?;
                self.expect(TokenKind::RParen)?;
                Ok(inner)
            }
            TokenKind::Ident(name) => {
                if let Some(TokenKind::LParen) = self.peek_kind() {
                    self.pos += 1;
                    self.call(name, offset)
                } else if let Some(var) = Var::from_name(&name) {
                    Ok(Expr::Var(var))
                } else if UnaryOp::function(&name).is_some() || BinaryOp::function(&name).is_some()
                {
                    Err(syntax(format!("function '{name}' must be called"), offset))
                } else {
                    Err(ParseError {
                        kind: ParseErrorKind::UnknownIdentifier(name),
                        offset,
                    })
                }
            }
            other => Err(syntax(format!("unexpected {other}"), offset)),
        }
    }

    fn call(&mut self, name: String, offset: usize) -> Result<Expr, ParseError> {
        let expected = if UnaryOp::function(&name).is_some() {
            1
        } else if BinaryOp::function(&name).is_some() {
            2
        } else {
            return Err(ParseError {
                kind: ParseErrorKind::UnknownIdentifier(name),
                offset,
            });
        };
        let mut args = vec![self.expr()?];
        while let Some(TokenKind::Comma) = self.peek_kind() {
            self.pos += 1;
            args.push(self.expr()?);
        }
        self.expect(TokenKind::RParen)?;
        if args.len() != expected {
            return Err(ParseError {
                kind: ParseErrorKind::Arity {
                    function: name,
                    expected,
                    found: args.len(),
                },
                offset,
            });
        }
        let mut args = args.into_iter();
        let first = args.next().expect("one argument");
        Ok(match (UnaryOp::function(&name), BinaryOp::function(&name)) {
            (Some(op), _) => unary(op, first),
            (_, Some(op)) => Expr::Binary(op, Box::new(first), Box::new(args.next().expect("two"))),
            _ => unreachable!("checked above"),
        })
    }
}

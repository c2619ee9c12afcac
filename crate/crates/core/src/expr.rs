//! Arithmetic expressions over the state `x` and the control `u`.
//!
//! Coefficients of a control problem are written as plain text, e.g.
//! `"-u*x"` or `"sqrt(1 + 0.5*u^2)"`, parsed once into a small tree and then
//! evaluated many times. The grammar is
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := primary ('^' unary)?
//! primary := number | 'u' | 'x' | ident '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! so `-x^2` is `-(x^2)` and `2^-1` is `0.5`. Every node remembers the byte
//! span it was parsed from, which is what evaluation errors report.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use thiserror::Error;

/// Deeper nesting than this is rejected instead of risking the stack.
const MAX_DEPTH: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    U,
    X,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Sin,
    Cos,
    Tanh,
    Abs,
    Sign,
    Min,
    Max,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tanh" => Func::Tanh,
            "abs" => Func::Abs,
            "sign" => Func::Sign,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tanh => "tanh",
            Func::Abs => "abs",
            Func::Sign => "sign",
            Func::Min => "min",
            Func::Max => "max",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

#[derive(Debug, Clone, PartialEq)]
struct Node {
    kind: Kind,
    span: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("empty expression")]
    Empty,
    #[error("unexpected character {0:?}")]
    UnexpectedChar(char),
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("malformed number")]
    BadNumber,
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("`{name}` takes {expected} argument(s), got {found}")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("nesting deeper than {MAX_DEPTH} levels")]
    TooDeep,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at byte {offset}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

/// Evaluation produced a non-finite value.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("`{subexpr}` is not finite at u = {u}, x = {x}")]
pub struct DomainError {
    /// Source text of the innermost sub-expression that went non-finite.
    pub subexpr: String,
    pub u: f64,
    pub x: f64,
}

/// A compiled coefficient expression in `u` and `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientExpr {
    source: String,
    root: Node,
}

impl CoefficientExpr {
    pub fn parse(source: &str) -> Result<Self, ParseError> {
        let mut parser = Parser {
            src: source,
            bytes: source.as_bytes(),
            pos: 0,
            depth: 0,
        };
        parser.skip_ws();
        if parser.pos == parser.bytes.len() {
            return Err(ParseError {
                offset: 0,
                kind: ParseErrorKind::Empty,
            });
        }
        let root = parser.expr()?;
        parser.skip_ws();
        if let Some(c) = parser.peek_char() {
            return Err(parser.error(ParseErrorKind::UnexpectedChar(c)));
        }
        Ok(Self {
            source: source.to_string(),
            root,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn uses(&self, var: Var) -> bool {
        fn walk(node: &Node, var: Var) -> bool {
            match &node.kind {
                Kind::Num(_) => false,
                Kind::Var(v) => *v == var,
                Kind::Neg(a) => walk(a, var),
                Kind::Bin(_, a, b) => walk(a, var) || walk(b, var),
                Kind::Call(_, args) => args.iter().any(|a| walk(a, var)),
            }
        }
        walk(&self.root, var)
    }

    pub fn eval(&self, u: f64, x: f64) -> Result<f64, DomainError> {
        self.eval_node(&self.root, u, x)
    }

    fn eval_node(&self, node: &Node, u: f64, x: f64) -> Result<f64, DomainError> {
        let value = match &node.kind {
            Kind::Num(v) => *v,
            Kind::Var(Var::U) => u,
            Kind::Var(Var::X) => x,
            Kind::Neg(a) => -self.eval_node(a, u, x)?,
            Kind::Bin(op, a, b) => {
                let a = self.eval_node(a, u, x)?;
                let b = self.eval_node(b, u, x)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => pow(a, b),
                }
            }
            Kind::Call(func, args) => {
                let a = self.eval_node(&args[0], u, x)?;
                match func {
                    Func::Exp => a.exp(),
                    Func::Log => {
                        if a > 0.0 {
                            a.ln()
                        } else {
                            f64::NAN
                        }
                    }
                    Func::Sqrt => a.sqrt(),
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Tanh => a.tanh(),
                    Func::Abs => a.abs(),
                    Func::Sign => {
                        if a > 0.0 {
                            1.0
                        } else if a < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    }
                    Func::Min => a.min(self.eval_node(&args[1], u, x)?),
                    Func::Max => a.max(self.eval_node(&args[1], u, x)?),
                }
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(DomainError {
                subexpr: self.source[node.span.clone()].trim().to_string(),
                u,
                x,
            })
        }
    }
}

fn pow(base: f64, exponent: f64) -> f64 {
    if exponent.fract() == 0.0 && exponent.abs() <= 64.0 {
        base.powi(exponent as i32)
    } else {
        base.powf(exponent)
    }
}

impl FromStr for CoefficientExpr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl fmt::Display for CoefficientExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    depth: usize,
}

impl Parser<'_> {
    fn error(&self, kind: ParseErrorKind) -> ParseError {
        ParseError {
            offset: self.pos,
            kind,
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

    fn peek_char(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn unexpected(&self) -> ParseError {
        match self.peek_char() {
            Some(c) => self.error(ParseErrorKind::UnexpectedChar(c)),
            None => self.error(ParseErrorKind::UnexpectedEnd),
        }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            Err(self.error(ParseErrorKind::TooDeep))
        } else {
            Ok(())
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        self.enter()?;
        let start = self.start();
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = self.binary(op, lhs, rhs, start);
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let start = self.start();
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = self.binary(op, lhs, rhs, start);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        self.enter()?;
        let start = self.start();
        let node = match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                let inner = self.unary()?;
                Node {
                    span: start..inner.span.end,
                    kind: Kind::Neg(Box::new(inner)),
                }
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()?
            }
            _ => self.power()?,
        };
        self.depth -= 1;
        Ok(node)
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let start = self.start();
        let base = self.primary()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(self.binary(BinOp::Pow, base, exponent, start));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node, ParseError> {
        let start = self.start();
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(b')')?;
                Ok(Node {
                    kind: inner.kind,
                    span: start..self.pos,
                })
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            _ => Err(self.unexpected()),
        }
    }

    fn number(&mut self) -> Result<Node, ParseError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let from = p.pos;
            while p.pos < p.bytes.len() && p.bytes[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - from
        };
        let mut count = digits(self);
        if self.bytes.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            count += digits(self);
        }
        if count == 0 {
            self.pos = start;
            return Err(self.error(ParseErrorKind::BadNumber));
        }
        if matches!(self.bytes.get(self.pos), Some(b'e' | b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.bytes.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = mark;
                return Err(self.error(ParseErrorKind::BadNumber));
            }
        }
        let value: f64 = self.src[start..self.pos].parse().map_err(|_| ParseError {
            offset: start,
            kind: ParseErrorKind::BadNumber,
        })?;
        if !value.is_finite() {
            return Err(ParseError {
                offset: start,
                kind: ParseErrorKind::BadNumber,
            });
        }
        Ok(Node {
            kind: Kind::Num(value),
            span: start..self.pos,
        })
    }

    fn identifier(&mut self) -> Result<Node, ParseError> {
        let start = self.pos;
        while self.pos < self.bytes.len()
            && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = &self.src[start..self.pos];
        let unknown = || ParseError {
            offset: start,
            kind: ParseErrorKind::UnknownIdentifier(name.to_string()),
        };
        if self.peek() != Some(b'(') {
            let var = match name {
                "u" => Var::U,
                "x" => Var::X,
                _ => return Err(unknown()),
            };
            return Ok(Node {
                kind: Kind::Var(var),
                span: start..start + name.len(),
            });
        }
        let func = Func::lookup(name).ok_or_else(unknown)?;
        self.pos += 1;
        let mut args = vec![self.expr()?];
        while self.peek() == Some(b',') {
            self.pos += 1;
            args.push(self.expr()?);
        }
        self.expect(b')')?;
        if args.len() != func.arity() {
            return Err(ParseError {
                offset: start,
                kind: ParseErrorKind::Arity {
                    name: func.name().to_string(),
                    expected: func.arity(),
                    found: args.len(),
                },
            });
        }
        Ok(Node {
            kind: Kind::Call(func, args),
            span: start..self.pos,
        })
    }

    fn expect(&mut self, byte: u8) -> Result<(), ParseError> {
        if self.peek() == Some(byte) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.unexpected())
        }
    }

    fn start(&mut self) -> usize {
        self.skip_ws();
        self.pos
    }

    fn binary(&self, op: BinOp, lhs: Node, rhs: Node, start: usize) -> Node {
        Node {
            span: start..rhs.span.end,
            kind: Kind::Bin(op, Box::new(lhs), Box::new(rhs)),
        }
    }
}

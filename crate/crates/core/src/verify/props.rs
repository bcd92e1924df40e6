//! Property language for exploration: boolean combinations of location
//! atoms `at(Automaton, Location)` and comparisons over global scalar
//! variables. Parsed against a concrete network so every name resolves up
//! front.

use serde::Deserialize;
use thiserror::Error;

use crate::engine::ast::Value;
use crate::engine::lexer::{tokenize, Tok, Token};
use crate::engine::{AutomatonNetwork, NetState};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PropError {
    #[error("property parse error at line {line}, col {col}: {message}")]
    Parse { line: u32, col: u32, message: String },
    #[error("properties file: {0}")]
    File(String),
}

/// A parsed predicate over loop+stub state.
#[derive(Debug, Clone, PartialEq)]
pub enum PropExpr {
    At { automaton: usize, location: usize, automaton_name: String, location_name: String },
    Const(Value),
    Var { slot: usize, name: String },
    Cmp { op: CmpOp, lhs: Box<PropExpr>, rhs: Box<PropExpr> },
    Arith { op: ArithOp, lhs: Box<PropExpr>, rhs: Box<PropExpr> },
    And(Box<PropExpr>, Box<PropExpr>),
    Or(Box<PropExpr>, Box<PropExpr>),
    Not(Box<PropExpr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ne,
    Ge,
    Gt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
}

impl PropExpr {
    /// Evaluate to a boolean over a state. Numeric subexpressions appearing
    /// in boolean position are truthy when nonzero.
    pub fn holds(&self, state: &NetState) -> bool {
        match self.eval(state) {
            Value::Int(i) => i != 0,
            Value::Real(r) => r != 0.0,
        }
    }

    fn eval(&self, state: &NetState) -> Value {
        match self {
            PropExpr::At { automaton, location, .. } => {
                Value::Int(state.is_at(*automaton, *location) as i64)
            }
            PropExpr::Const(v) => *v,
            PropExpr::Var { slot, .. } => state.store[*slot],
            PropExpr::Cmp { op, lhs, rhs } => {
                let (a, b) = (lhs.eval(state), rhs.eval(state));
                let r = match (a, b) {
                    (Value::Int(x), Value::Int(y)) => compare(*op, x as f64, y as f64),
                    (a, b) => compare(*op, a.as_f64(), b.as_f64()),
                };
                Value::Int(r as i64)
            }
            PropExpr::Arith { op, lhs, rhs } => {
                let (a, b) = (lhs.eval(state), rhs.eval(state));
                match (a, b) {
                    (Value::Int(x), Value::Int(y)) => Value::Int(match op {
                        ArithOp::Add => x.wrapping_add(y),
                        ArithOp::Sub => x.wrapping_sub(y),
                        ArithOp::Mul => x.wrapping_mul(y),
                    }),
                    (a, b) => {
                        let (x, y) = (a.as_f64(), b.as_f64());
                        Value::Real(match op {
                            ArithOp::Add => x + y,
                            ArithOp::Sub => x - y,
                            ArithOp::Mul => x * y,
                        })
                    }
                }
            }
            PropExpr::And(a, b) => Value::Int((a.holds(state) && b.holds(state)) as i64),
            PropExpr::Or(a, b) => Value::Int((a.holds(state) || b.holds(state)) as i64),
            PropExpr::Not(a) => Value::Int(!a.holds(state) as i64),
        }
    }
}

fn compare(op: CmpOp, x: f64, y: f64) -> bool {
    match op {
        CmpOp::Lt => x < y,
        CmpOp::Le => x <= y,
        CmpOp::Eq => x == y,
        CmpOp::Ne => x != y,
        CmpOp::Ge => x >= y,
        CmpOp::Gt => x > y,
    }
}

struct PropParser<'n> {
    toks: Vec<Token>,
    pos: usize,
    net: &'n AutomatonNetwork,
}

impl<'n> PropParser<'n> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, message: impl Into<String>) -> PropError {
        PropError::Parse {
            line: self.toks[self.pos].line,
            col: self.toks[self.pos].col,
            message: message.into(),
        }
    }

    fn expect(&mut self, t: Tok) -> Result<(), PropError> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            Err(self.err(format!("expected {t}, found {}", self.peek())))
        }
    }

    fn parse_or(&mut self) -> Result<PropExpr, PropError> {
        let mut lhs = self.parse_and()?;
        while *self.peek() == Tok::OrOr {
            self.bump();
            let rhs = self.parse_and()?;
            lhs = PropExpr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_and(&mut self) -> Result<PropExpr, PropError> {
        let mut lhs = self.parse_cmp()?;
        while *self.peek() == Tok::AndAnd {
            self.bump();
            let rhs = self.parse_cmp()?;
            lhs = PropExpr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_cmp(&mut self) -> Result<PropExpr, PropError> {
        let lhs = self.parse_add()?;
        let op = match self.peek() {
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::EqEq => CmpOp::Eq,
            Tok::Ne => CmpOp::Ne,
            Tok::Ge => CmpOp::Ge,
            Tok::Gt => CmpOp::Gt,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.parse_add()?;
        Ok(PropExpr::Cmp { op, lhs: Box::new(lhs), rhs: Box::new(rhs) })
    }

    fn parse_add(&mut self) -> Result<PropExpr, PropError> {
        let mut lhs = self.parse_mul()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => ArithOp::Add,
                Tok::Minus => ArithOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.parse_mul()?;
            lhs = PropExpr::Arith { op, lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
        Ok(lhs)
    }

    fn parse_mul(&mut self) -> Result<PropExpr, PropError> {
        let mut lhs = self.parse_prim()?;
        while *self.peek() == Tok::Star {
            self.bump();
            let rhs = self.parse_prim()?;
            lhs = PropExpr::Arith { op: ArithOp::Mul, lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
        Ok(lhs)
    }

    fn parse_prim(&mut self) -> Result<PropExpr, PropError> {
        match self.bump() {
            Tok::Int(i) => Ok(PropExpr::Const(Value::Int(i))),
            Tok::Real(r) => Ok(PropExpr::Const(Value::Real(r))),
            Tok::Minus => {
                let inner = self.parse_prim()?;
                Ok(PropExpr::Arith {
                    op: ArithOp::Sub,
                    lhs: Box::new(PropExpr::Const(Value::Int(0))),
                    rhs: Box::new(inner),
                })
            }
            Tok::Bang => {
                let inner = self.parse_prim()?;
                Ok(PropExpr::Not(Box::new(inner)))
            }
            Tok::LParen => {
                let e = self.parse_or()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) if name == "at" => {
                self.expect(Tok::LParen)?;
                let automaton_name = match self.bump() {
                    Tok::Ident(a) => a,
                    other => return Err(self.err(format!("expected automaton name, found {other}"))),
                };
                self.expect(Tok::Comma)?;
                let location_name = match self.bump() {
                    Tok::Ident(l) => l,
                    other => return Err(self.err(format!("expected location name, found {other}"))),
                };
                self.expect(Tok::RParen)?;
                let (automaton, location) =
                    self.net.locate(&automaton_name, &location_name).ok_or_else(|| {
                        self.err(format!("unknown location `{automaton_name}.{location_name}`"))
                    })?;
                Ok(PropExpr::At { automaton, location, automaton_name, location_name })
            }
            Tok::Ident(name) => {
                let slot = self
                    .net
                    .scalar_slot(&name)
                    .ok_or_else(|| self.err(format!("unknown scalar variable `{name}`")))?;
                Ok(PropExpr::Var { slot, name })
            }
            other => Err(self.err(format!("expected a predicate term, found {other}"))),
        }
    }
}

/// Parse a predicate against a network.
pub fn parse_predicate(text: &str, net: &AutomatonNetwork) -> Result<PropExpr, PropError> {
    let toks = tokenize(text).map_err(|d| PropError::Parse {
        line: d.line,
        col: d.col,
        message: d.message,
    })?;
    let mut p = PropParser { toks, pos: 0, net };
    let e = p.parse_or()?;
    p.expect(Tok::Eof)?;
    Ok(e)
}

/// A correctness property to check by exploration.
#[derive(Debug, Clone, PartialEq)]
pub struct Property {
    pub name: String,
    pub kind: PropertyKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PropertyKind {
    /// Fails iff any reachable state satisfies the predicate.
    NeverReach { predicate: PropExpr },
    /// Fails iff some premise state has a path of up to `bound` steps (or to
    /// a dead end) avoiding the conclusion.
    LeadsTo { premise: PropExpr, conclusion: PropExpr, bound: u64 },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PropsFile {
    #[serde(default)]
    property: Vec<PropEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PropEntry {
    name: String,
    kind: String,
    predicate: Option<String>,
    premise: Option<String>,
    conclusion: Option<String>,
    bound: Option<u64>,
}

/// Parse a properties file (TOML) against a network.
pub fn parse_properties(text: &str, net: &AutomatonNetwork) -> Result<Vec<Property>, PropError> {
    let file: PropsFile = toml::from_str(text).map_err(|e| PropError::File(e.to_string()))?;
    file.property
        .into_iter()
        .map(|e| {
            let kind = match e.kind.as_str() {
                "never-reach" => {
                    let text = e.predicate.ok_or_else(|| {
                        PropError::File(format!("property `{}`: missing predicate", e.name))
                    })?;
                    PropertyKind::NeverReach { predicate: parse_predicate(&text, net)? }
                }
                "leads-to" => {
                    let premise = e.premise.ok_or_else(|| {
                        PropError::File(format!("property `{}`: missing premise", e.name))
                    })?;
                    let conclusion = e.conclusion.ok_or_else(|| {
                        PropError::File(format!("property `{}`: missing conclusion", e.name))
                    })?;
                    PropertyKind::LeadsTo {
                        premise: parse_predicate(&premise, net)?,
                        conclusion: parse_predicate(&conclusion, net)?,
                        bound: e.bound.unwrap_or(32),
                    }
                }
                other => {
                    return Err(PropError::File(format!(
                        "property `{}`: unknown kind `{other}`",
                        e.name
                    )))
                }
            };
            Ok(Property { name: e.name, kind })
        })
        .collect()
}

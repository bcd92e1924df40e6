//! Abstract syntax for the `.anm` automaton-network modeling language.
//!
//! The AST is fully resolved at parse time: every variable, channel, and
//! function reference carries the index assigned by the parser, and constant
//! expressions (bounds, weights, array lengths, loop bounds) are already
//! folded. Structural equality (`PartialEq`) deliberately ignores nothing —
//! two networks compare equal exactly when they would behave identically.

/// Runtime value: the language has integers and reals only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Int(i64),
    Real(f64),
}

impl Value {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            Value::Real(_) => None,
        }
    }

    pub fn as_f64(&self) -> f64 {
        match self {
            Value::Int(i) => *i as f64,
            Value::Real(r) => *r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValType {
    Int,
    Real,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Lt,
    Le,
    Eq,
    Ne,
    Ge,
    Gt,
    And,
    Or,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnOp {
    Neg,
    Not,
}

/// Where a variable reference points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarScope {
    /// Index into the network's variable declarations.
    Global(usize),
    /// Slot in the enclosing function's frame.
    Local(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarRef {
    pub name: String,
    pub scope: VarScope,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Int(i64),
    Real(f64),
    Var(VarRef),
    Index { var: VarRef, index: Box<Expr> },
    Unary { op: UnOp, operand: Box<Expr> },
    Binary { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Ternary { cond: Box<Expr>, then_branch: Box<Expr>, else_branch: Box<Expr> },
    Call { func: usize, name: String, args: Vec<Expr> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VarKind {
    BoundedInt { lo: i64, hi: i64 },
    Real,
}

/// A global variable declaration; arrays occupy `len` consecutive store slots
/// starting at `base_slot`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarDecl {
    pub name: String,
    pub kind: VarKind,
    pub len: Option<usize>,
    pub base_slot: usize,
    pub init: Vec<Value>,
}

impl VarDecl {
    pub fn slot_count(&self) -> usize {
        self.len.unwrap_or(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub name: String,
    pub broadcast: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    /// `var int x = e;` — local slot was assigned by the parser.
    Local { name: String, slot: usize, ty: ValType, init: Expr },
    /// Assignment to a function-local scalar (functions are pure).
    Assign { name: String, slot: usize, ty: ValType, value: Expr },
    If { cond: Expr, then_body: Vec<Stmt>, else_body: Vec<Stmt> },
    /// `for i in lo..hi { ... }` with constant-folded bounds.
    For { name: String, slot: usize, lo: i64, hi: i64, body: Vec<Stmt> },
    Return(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuncDef {
    pub name: String,
    pub ret: ValType,
    pub params: Vec<(String, ValType)>,
    /// Total frame size: parameters plus every `var` in the body.
    pub frame_size: usize,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncDir {
    Send,
    Receive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sync {
    pub channel: usize,
    pub channel_name: String,
    pub dir: SyncDir,
}

/// One `do:` assignment on an edge. Targets are always global variables.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateAssign {
    pub var: VarRef,
    pub index: Option<Expr>,
    pub value: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Location {
    pub name: String,
    pub committed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub guard: Option<Expr>,
    pub sync: Option<Sync>,
    pub weight: Option<u64>,
    pub updates: Vec<UpdateAssign>,
}

/// Edges that share (source, guard, sync) and carry `weight:` annotations form
/// one probabilistic branch group; everything else is a singleton alternative.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceUnit {
    pub guard: Option<Expr>,
    pub sync: Option<Sync>,
    /// Edge indices into the automaton's edge list.
    pub edges: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Automaton {
    pub name: String,
    pub locations: Vec<Location>,
    pub initial: usize,
    pub edges: Vec<Edge>,
    /// Choice units grouped per source location, `units[loc]`.
    pub units: Vec<Vec<ChoiceUnit>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutomatonNetwork {
    pub consts: Vec<(String, Value)>,
    pub vars: Vec<VarDecl>,
    pub channels: Vec<Channel>,
    pub funcs: Vec<FuncDef>,
    pub automata: Vec<Automaton>,
    pub slot_count: usize,
}

impl AutomatonNetwork {
    /// Initial store: declared initializers (zero-filled where omitted).
    pub fn initial_store(&self) -> Vec<Value> {
        let mut store = vec![Value::Int(0); self.slot_count];
        for decl in &self.vars {
            for (offset, value) in decl.init.iter().enumerate() {
                store[decl.base_slot + offset] = *value;
            }
        }
        store
    }

    pub fn automaton_index(&self, name: &str) -> Option<usize> {
        self.automata.iter().position(|a| a.name == name)
    }

    /// Resolve `(automaton, location)` by name.
    pub fn locate(&self, automaton: &str, location: &str) -> Option<(usize, usize)> {
        let ai = self.automaton_index(automaton)?;
        let li = self.automata[ai]
            .locations
            .iter()
            .position(|l| l.name == location)?;
        Some((ai, li))
    }

    pub fn var_decl(&self, name: &str) -> Option<&VarDecl> {
        self.vars.iter().find(|v| v.name == name)
    }

    /// Slot of a scalar global, for reading observables out of a state.
    pub fn scalar_slot(&self, name: &str) -> Option<usize> {
        self.var_decl(name)
            .filter(|d| d.len.is_none())
            .map(|d| d.base_slot)
    }
}

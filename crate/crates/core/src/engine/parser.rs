//! Recursive-descent parser for the `.anm` modeling language.
//!
//! Parsing is total: any input yields either a validated
//! [`AutomatonNetwork`] or a [`Diagnostic`] with a source position. All name
//! resolution happens here (declare-before-use), constants are folded, and
//! the network invariants are checked before the network is returned.

use std::collections::HashMap;

use super::ast::*;
use super::lexer::{tokenize, Diagnostic, Tok, Token};

const MAX_NEST_DEPTH: u32 = 200;
const MAX_ARRAY_LEN: i64 = 65_536;
const MAX_WEIGHT: i64 = u32::MAX as i64;

#[derive(Clone, Copy)]
enum NameKind {
    Const(usize),
    Var(usize),
    Chan(usize),
    Func(usize),
}

struct RawEdge {
    source: String,
    source_pos: (u32, u32),
    target: String,
    target_pos: (u32, u32),
    guard: Option<Expr>,
    sync: Option<Sync>,
    weight: Option<u64>,
    updates: Vec<UpdateAssign>,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    depth: u32,
    consts: Vec<(String, Value)>,
    vars: Vec<VarDecl>,
    channels: Vec<Channel>,
    funcs: Vec<FuncDef>,
    names: HashMap<String, NameKind>,
    slot_count: usize,
    // active only while parsing a function body
    local_scopes: Vec<Vec<(String, usize, ValType)>>,
    next_local_slot: usize,
}

/// Parse `.anm` source into a validated network.
pub fn parse_model(source: &str) -> Result<AutomatonNetwork, Diagnostic> {
    let toks = tokenize(source)?;
    let mut p = Parser {
        toks,
        pos: 0,
        depth: 0,
        consts: Vec::new(),
        vars: Vec::new(),
        channels: Vec::new(),
        funcs: Vec::new(),
        names: HashMap::new(),
        slot_count: 0,
        local_scopes: Vec::new(),
        next_local_slot: 0,
    };
    let mut automata = Vec::new();
    let mut automaton_names: HashMap<String, ()> = HashMap::new();
    loop {
        match p.peek().clone() {
            Tok::Eof => break,
            Tok::Const => p.parse_const()?,
            Tok::KwInt | Tok::KwReal => p.parse_var_decl()?,
            Tok::Chan | Tok::Broadcast => p.parse_chan_decl()?,
            Tok::Func => p.parse_func()?,
            Tok::Automaton => {
                let a = p.parse_automaton()?;
                if automaton_names.insert(a.0.clone(), ()).is_some() {
                    return Err(p.err_at(a.2, format!("duplicate automaton `{}`", a.0)));
                }
                automata.push(a);
            }
            other => {
                return Err(p.err(format!("expected a declaration or automaton, found {other}")))
            }
        }
    }
    let automata = automata
        .into_iter()
        .map(|(name, raw, pos)| p.finish_automaton(name, raw, pos))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AutomatonNetwork {
        consts: p.consts,
        vars: p.vars,
        channels: p.channels,
        funcs: p.funcs,
        automata,
        slot_count: p.slot_count,
    })
}

type RawAutomaton = (String, (Vec<Location>, Option<usize>, Vec<RawEdge>), (u32, u32));

/// Parse a standalone expression against an existing network's symbols.
pub fn parse_expr_in(source: &str, net: &AutomatonNetwork) -> Result<Expr, Diagnostic> {
    let toks = tokenize(source)?;
    let mut names = HashMap::new();
    for (i, (name, _)) in net.consts.iter().enumerate() {
        names.insert(name.clone(), NameKind::Const(i));
    }
    for (i, v) in net.vars.iter().enumerate() {
        names.insert(v.name.clone(), NameKind::Var(i));
    }
    for (i, c) in net.channels.iter().enumerate() {
        names.insert(c.name.clone(), NameKind::Chan(i));
    }
    for (i, f) in net.funcs.iter().enumerate() {
        names.insert(f.name.clone(), NameKind::Func(i));
    }
    let mut p = Parser {
        toks,
        pos: 0,
        depth: 0,
        consts: net.consts.clone(),
        vars: net.vars.clone(),
        channels: net.channels.clone(),
        funcs: net.funcs.clone(),
        names,
        slot_count: net.slot_count,
        local_scopes: Vec::new(),
        next_local_slot: 0,
    };
    let e = p.parse_expr()?;
    p.expect(Tok::Eof)?;
    Ok(e)
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_pos(&self) -> (u32, u32) {
        (self.toks[self.pos].line, self.toks[self.pos].col)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, message: impl Into<String>) -> Diagnostic {
        let (line, col) = self.peek_pos();
        Diagnostic { line, col, message: message.into() }
    }

    fn err_at(&self, pos: (u32, u32), message: impl Into<String>) -> Diagnostic {
        Diagnostic { line: pos.0, col: pos.1, message: message.into() }
    }

    fn expect(&mut self, want: Tok) -> Result<(), Diagnostic> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(self.err(format!("expected {want}, found {}", self.peek())))
        }
    }

    fn expect_ident(&mut self) -> Result<(String, (u32, u32)), Diagnostic> {
        let pos = self.peek_pos();
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.bump();
                Ok((name, pos))
            }
            other => Err(self.err(format!("expected identifier, found {other}"))),
        }
    }

    fn declare(&mut self, name: &str, kind: NameKind, pos: (u32, u32)) -> Result<(), Diagnostic> {
        if self.names.insert(name.to_string(), kind).is_some() {
            return Err(self.err_at(pos, format!("duplicate declaration of `{name}`")));
        }
        Ok(())
    }

    // ----- declarations ---------------------------------------------------

    fn parse_const(&mut self) -> Result<(), Diagnostic> {
        self.expect(Tok::Const)?;
        let ty = match self.bump() {
            Tok::KwInt => ValType::Int,
            Tok::KwReal => ValType::Real,
            other => return Err(self.err(format!("expected `int` or `real` after `const`, found {other}"))),
        };
        let (name, pos) = self.expect_ident()?;
        self.expect(Tok::Assign)?;
        let expr = self.parse_expr()?;
        let value = self.fold_const(&expr, pos)?;
        let value = match (ty, value) {
            (ValType::Int, Value::Int(i)) => Value::Int(i),
            (ValType::Real, v) => Value::Real(v.as_f64()),
            (ValType::Int, Value::Real(_)) => {
                return Err(self.err_at(pos, format!("const int `{name}` initialized with a real value")))
            }
        };
        self.expect(Tok::Semi)?;
        self.declare(&name, NameKind::Const(self.consts.len()), pos)?;
        self.consts.push((name, value));
        Ok(())
    }

    fn parse_type_spec(&mut self) -> Result<VarKind, Diagnostic> {
        match self.bump() {
            Tok::KwReal => Ok(VarKind::Real),
            Tok::KwInt => {
                self.expect(Tok::LBracket)?;
                let lo_pos = self.peek_pos();
                let lo_expr = self.parse_expr()?;
                let lo = self.fold_const_int(&lo_expr, lo_pos)?;
                self.expect(Tok::Comma)?;
                let hi_pos = self.peek_pos();
                let hi_expr = self.parse_expr()?;
                let hi = self.fold_const_int(&hi_expr, hi_pos)?;
                self.expect(Tok::RBracket)?;
                if lo > hi {
                    return Err(self.err_at(lo_pos, format!("empty int range [{lo},{hi}]")));
                }
                Ok(VarKind::BoundedInt { lo, hi })
            }
            other => Err(self.err(format!("expected a type, found {other}"))),
        }
    }

    fn parse_var_decl(&mut self) -> Result<(), Diagnostic> {
        let kind = self.parse_type_spec()?;
        let (name, pos) = self.expect_ident()?;
        let mut len = None;
        if *self.peek() == Tok::LBracket {
            self.bump();
            let n_pos = self.peek_pos();
            let n_expr = self.parse_expr()?;
            let n = self.fold_const_int(&n_expr, n_pos)?;
            self.expect(Tok::RBracket)?;
            if n < 1 || n > MAX_ARRAY_LEN {
                return Err(self.err_at(n_pos, format!("array length {n} out of range [1,{MAX_ARRAY_LEN}]")));
            }
            len = Some(n as usize);
        }
        let count = len.unwrap_or(1);
        let mut init = Vec::with_capacity(count);
        if *self.peek() == Tok::Assign {
            self.bump();
            if len.is_some() {
                self.expect(Tok::LBrace)?;
                loop {
                    let e_pos = self.peek_pos();
                    let e = self.parse_expr()?;
                    init.push(self.coerce_init(&name, kind, &e, e_pos)?);
                    if *self.peek() == Tok::Comma {
                        self.bump();
                    } else {
                        break;
                    }
                }
                self.expect(Tok::RBrace)?;
                if init.len() != count {
                    return Err(self.err_at(
                        pos,
                        format!("array `{name}` has length {count} but {} initializers", init.len()),
                    ));
                }
            } else {
                let e_pos = self.peek_pos();
                let e = self.parse_expr()?;
                init.push(self.coerce_init(&name, kind, &e, e_pos)?);
            }
        } else {
            let default = match kind {
                VarKind::Real => Value::Real(0.0),
                VarKind::BoundedInt { lo, hi } => {
                    Value::Int(if lo <= 0 && 0 <= hi { 0 } else { lo })
                }
            };
            init = vec![default; count];
        }
        self.expect(Tok::Semi)?;
        self.declare(&name, NameKind::Var(self.vars.len()), pos)?;
        let base_slot = self.slot_count;
        self.slot_count += count;
        self.vars.push(VarDecl { name, kind, len, base_slot, init });
        Ok(())
    }

    fn coerce_init(
        &self,
        name: &str,
        kind: VarKind,
        expr: &Expr,
        pos: (u32, u32),
    ) -> Result<Value, Diagnostic> {
        let v = self.fold_const(expr, pos)?;
        match (kind, v) {
            (VarKind::Real, v) => Ok(Value::Real(v.as_f64())),
            (VarKind::BoundedInt { lo, hi }, Value::Int(i)) => {
                if i < lo || i > hi {
                    Err(self.err_at(
                        pos,
                        format!("initializer out of bounds: `{name}` = {i}, declared range [{lo},{hi}]"),
                    ))
                } else {
                    Ok(Value::Int(i))
                }
            }
            (VarKind::BoundedInt { .. }, Value::Real(_)) => {
                Err(self.err_at(pos, format!("real initializer for int variable `{name}`")))
            }
        }
    }

    fn parse_chan_decl(&mut self) -> Result<(), Diagnostic> {
        let broadcast = if *self.peek() == Tok::Broadcast {
            self.bump();
            true
        } else {
            false
        };
        self.expect(Tok::Chan)?;
        loop {
            let (name, pos) = self.expect_ident()?;
            self.declare(&name, NameKind::Chan(self.channels.len()), pos)?;
            self.channels.push(Channel { name, broadcast });
            if *self.peek() == Tok::Comma {
                self.bump();
            } else {
                break;
            }
        }
        self.expect(Tok::Semi)?;
        Ok(())
    }

    // ----- functions -------------------------------------------------------

    fn parse_func(&mut self) -> Result<(), Diagnostic> {
        self.expect(Tok::Func)?;
        let ret = match self.bump() {
            Tok::KwInt => ValType::Int,
            Tok::KwReal => ValType::Real,
            other => return Err(self.err(format!("expected return type, found {other}"))),
        };
        let (name, pos) = self.expect_ident()?;
        self.expect(Tok::LParen)?;
        let mut params = Vec::new();
        self.local_scopes.clear();
        self.local_scopes.push(Vec::new());
        self.next_local_slot = 0;
        if *self.peek() != Tok::RParen {
            loop {
                let ty = match self.bump() {
                    Tok::KwInt => ValType::Int,
                    Tok::KwReal => ValType::Real,
                    other => return Err(self.err(format!("expected parameter type, found {other}"))),
                };
                let (pname, ppos) = self.expect_ident()?;
                self.bind_local(&pname, ty, ppos)?;
                params.push((pname, ty));
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        let body = self.parse_block()?;
        let frame_size = self.next_local_slot;
        self.local_scopes.clear();
        // Registered after the body parses: helpers can only call
        // previously declared helpers, which rules out recursion.
        self.declare(&name, NameKind::Func(self.funcs.len()), pos)?;
        self.funcs.push(FuncDef { name, ret, params, frame_size, body });
        Ok(())
    }

    fn bind_local(&mut self, name: &str, ty: ValType, pos: (u32, u32)) -> Result<usize, Diagnostic> {
        if self.names.contains_key(name) {
            return Err(self.err_at(pos, format!("local `{name}` shadows a global declaration")));
        }
        for scope in &self.local_scopes {
            if scope.iter().any(|(n, _, _)| n == name) {
                return Err(self.err_at(pos, format!("duplicate local `{name}`")));
            }
        }
        let slot = self.next_local_slot;
        self.next_local_slot += 1;
        self.local_scopes
            .last_mut()
            .expect("scope stack is nonempty inside a function")
            .push((name.to_string(), slot, ty));
        Ok(slot)
    }

    fn lookup_local(&self, name: &str) -> Option<(usize, ValType)> {
        for scope in self.local_scopes.iter().rev() {
            if let Some((_, slot, ty)) = scope.iter().find(|(n, _, _)| n == name) {
                return Some((*slot, *ty));
            }
        }
        None
    }

    fn parse_block(&mut self) -> Result<Vec<Stmt>, Diagnostic> {
        self.depth += 1;
        if self.depth > MAX_NEST_DEPTH {
            return Err(self.err("nesting too deep"));
        }
        self.expect(Tok::LBrace)?;
        self.local_scopes.push(Vec::new());
        let mut stmts = Vec::new();
        while *self.peek() != Tok::RBrace {
            if *self.peek() == Tok::Eof {
                return Err(self.err("unterminated block"));
            }
            stmts.push(self.parse_stmt()?);
        }
        self.expect(Tok::RBrace)?;
        self.local_scopes.pop();
        self.depth -= 1;
        Ok(stmts)
    }

    fn parse_stmt(&mut self) -> Result<Stmt, Diagnostic> {
        match self.peek().clone() {
            Tok::Var => {
                self.bump();
                let ty = match self.bump() {
                    Tok::KwInt => ValType::Int,
                    Tok::KwReal => ValType::Real,
                    other => return Err(self.err(format!("expected type after `var`, found {other}"))),
                };
                let (name, pos) = self.expect_ident()?;
                self.expect(Tok::Assign)?;
                let init = self.parse_expr()?;
                self.expect(Tok::Semi)?;
                let slot = self.bind_local(&name, ty, pos)?;
                Ok(Stmt::Local { name, slot, ty, init })
            }
            Tok::If => {
                self.bump();
                self.expect(Tok::LParen)?;
                let cond = self.parse_expr()?;
                self.expect(Tok::RParen)?;
                let then_body = self.parse_block()?;
                let else_body = if *self.peek() == Tok::Else {
                    self.bump();
                    if *self.peek() == Tok::If {
                        vec![self.parse_stmt()?]
                    } else {
                        self.parse_block()?
                    }
                } else {
                    Vec::new()
                };
                Ok(Stmt::If { cond, then_body, else_body })
            }
            Tok::For => {
                self.bump();
                let (name, pos) = self.expect_ident()?;
                self.expect(Tok::In)?;
                let lo_pos = self.peek_pos();
                let lo_expr = self.parse_expr()?;
                let lo = self.fold_const_int(&lo_expr, lo_pos)?;
                self.expect(Tok::DotDot)?;
                let hi_pos = self.peek_pos();
                let hi_expr = self.parse_expr()?;
                let hi = self.fold_const_int(&hi_expr, hi_pos)?;
                // bind the loop variable in a dedicated scope around the body
                self.local_scopes.push(Vec::new());
                let slot = self.bind_local(&name, ValType::Int, pos)?;
                let body = self.parse_block()?;
                self.local_scopes.pop();
                Ok(Stmt::For { name, slot, lo, hi, body })
            }
            Tok::Return => {
                self.bump();
                let e = self.parse_expr()?;
                self.expect(Tok::Semi)?;
                Ok(Stmt::Return(e))
            }
            Tok::Ident(name) => {
                let pos = self.peek_pos();
                self.bump();
                if *self.peek() == Tok::LBracket {
                    return Err(self.err_at(pos, "function locals are scalars; arrays cannot be assigned here"));
                }
                let (slot, ty) = self.lookup_local(&name).ok_or_else(|| {
                    self.err_at(pos, format!("cannot assign to `{name}`: functions may only assign to their locals"))
                })?;
                self.expect(Tok::Assign)?;
                let value = self.parse_expr()?;
                self.expect(Tok::Semi)?;
                Ok(Stmt::Assign { name, slot, ty, value })
            }
            other => Err(self.err(format!("expected a statement, found {other}"))),
        }
    }

    // ----- automata ---------------------------------------------------------

    fn parse_automaton(&mut self) -> Result<RawAutomaton, Diagnostic> {
        self.expect(Tok::Automaton)?;
        let (name, pos) = self.expect_ident()?;
        self.expect(Tok::LBrace)?;
        let mut locations: Vec<Location> = Vec::new();
        let mut initial: Option<usize> = None;
        let mut edges: Vec<RawEdge> = Vec::new();
        loop {
            match self.peek().clone() {
                Tok::RBrace => {
                    self.bump();
                    break;
                }
                Tok::Init | Tok::Committed | Tok::Location => {
                    let mut is_init = false;
                    let mut committed = false;
                    loop {
                        match self.peek() {
                            Tok::Init if !is_init => {
                                self.bump();
                                is_init = true;
                            }
                            Tok::Committed if !committed => {
                                self.bump();
                                committed = true;
                            }
                            _ => break,
                        }
                    }
                    self.expect(Tok::Location)?;
                    loop {
                        let (lname, lpos) = self.expect_ident()?;
                        if locations.iter().any(|l| l.name == lname) {
                            return Err(self.err_at(lpos, format!("duplicate location `{lname}`")));
                        }
                        if is_init {
                            if initial.is_some() {
                                return Err(self.err_at(lpos, format!("automaton `{name}` has more than one init location")));
                            }
                            initial = Some(locations.len());
                        }
                        locations.push(Location { name: lname, committed });
                        if *self.peek() == Tok::Comma {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    self.expect(Tok::Semi)?;
                }
                Tok::Edge => {
                    self.bump();
                    let (src, src_pos) = self.expect_ident()?;
                    self.expect(Tok::Arrow)?;
                    let (dst, dst_pos) = self.expect_ident()?;
                    let (guard, sync, weight, updates) = self.parse_edge_body()?;
                    edges.push(RawEdge {
                        source: src,
                        source_pos: src_pos,
                        target: dst,
                        target_pos: dst_pos,
                        guard,
                        sync,
                        weight,
                        updates,
                    });
                }
                other => {
                    return Err(self.err(format!("expected `location`, `edge` or `}}` in automaton body, found {other}")))
                }
            }
        }
        Ok((name, (locations, initial, edges), pos))
    }

    #[allow(clippy::type_complexity)]
    fn parse_edge_body(
        &mut self,
    ) -> Result<(Option<Expr>, Option<Sync>, Option<u64>, Vec<UpdateAssign>), Diagnostic> {
        self.expect(Tok::LBrace)?;
        let mut guard = None;
        let mut sync = None;
        let mut weight = None;
        let mut updates = Vec::new();
        let mut saw_do = false;
        loop {
            match self.peek().clone() {
                Tok::RBrace => {
                    self.bump();
                    break;
                }
                Tok::Guard => {
                    if guard.is_some() {
                        return Err(self.err("duplicate `guard` clause"));
                    }
                    self.bump();
                    self.expect(Tok::Colon)?;
                    guard = Some(self.parse_expr()?);
                    self.expect(Tok::Semi)?;
                }
                Tok::Sync => {
                    if sync.is_some() {
                        return Err(self.err("duplicate `sync` clause"));
                    }
                    self.bump();
                    self.expect(Tok::Colon)?;
                    let (cname, cpos) = self.expect_ident()?;
                    let chan = match self.names.get(&cname) {
                        Some(NameKind::Chan(i)) => *i,
                        _ => return Err(self.err_at(cpos, format!("undeclared channel `{cname}`"))),
                    };
                    let dir = match self.bump() {
                        Tok::Bang => SyncDir::Send,
                        Tok::Question => SyncDir::Receive,
                        other => return Err(self.err(format!("expected `!` or `?` after channel name, found {other}"))),
                    };
                    sync = Some(Sync { channel: chan, channel_name: cname, dir });
                    self.expect(Tok::Semi)?;
                }
                Tok::Weight => {
                    if weight.is_some() {
                        return Err(self.err("duplicate `weight` clause"));
                    }
                    self.bump();
                    self.expect(Tok::Colon)?;
                    let wpos = self.peek_pos();
                    let wexpr = self.parse_expr()?;
                    let w = self.fold_const_int(&wexpr, wpos)?;
                    if !(0..=MAX_WEIGHT).contains(&w) {
                        return Err(self.err_at(wpos, format!("weight {w} out of range [0,{MAX_WEIGHT}]")));
                    }
                    weight = Some(w as u64);
                    self.expect(Tok::Semi)?;
                }
                Tok::Do => {
                    if saw_do {
                        return Err(self.err("duplicate `do` clause"));
                    }
                    saw_do = true;
                    self.bump();
                    self.expect(Tok::Colon)?;
                    loop {
                        updates.push(self.parse_update()?);
                        if *self.peek() == Tok::Comma {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    self.expect(Tok::Semi)?;
                }
                other => {
                    return Err(self.err(format!("expected an edge clause (`guard`, `sync`, `weight`, `do`) or `}}`, found {other}")))
                }
            }
        }
        Ok((guard, sync, weight, updates))
    }

    fn parse_update(&mut self) -> Result<UpdateAssign, Diagnostic> {
        let (name, pos) = self.expect_ident()?;
        let var_idx = match self.names.get(&name) {
            Some(NameKind::Var(i)) => *i,
            Some(NameKind::Const(_)) => {
                return Err(self.err_at(pos, format!("cannot assign to constant `{name}`")))
            }
            _ => return Err(self.err_at(pos, format!("undeclared variable `{name}`"))),
        };
        let mut index = None;
        if *self.peek() == Tok::LBracket {
            self.bump();
            index = Some(self.parse_expr()?);
            self.expect(Tok::RBracket)?;
        }
        let is_array = self.vars[var_idx].len.is_some();
        if is_array && index.is_none() {
            return Err(self.err_at(pos, format!("array `{name}` must be assigned by element")));
        }
        if !is_array && index.is_some() {
            return Err(self.err_at(pos, format!("`{name}` is not an array")));
        }
        self.expect(Tok::Assign)?;
        let value = self.parse_expr()?;
        Ok(UpdateAssign {
            var: VarRef { name, scope: VarScope::Global(var_idx) },
            index,
            value,
        })
    }

    fn finish_automaton(
        &self,
        name: String,
        (locations, initial, raw_edges): (Vec<Location>, Option<usize>, Vec<RawEdge>),
        pos: (u32, u32),
    ) -> Result<Automaton, Diagnostic> {
        let initial = initial
            .ok_or_else(|| self.err_at(pos, format!("automaton `{name}` has no init location")))?;
        let mut edges = Vec::with_capacity(raw_edges.len());
        for raw in raw_edges {
            let source = locations
                .iter()
                .position(|l| l.name == raw.source)
                .ok_or_else(|| self.err_at(raw.source_pos, format!("undeclared location `{}`", raw.source)))?;
            let target = locations
                .iter()
                .position(|l| l.name == raw.target)
                .ok_or_else(|| self.err_at(raw.target_pos, format!("undeclared location `{}`", raw.target)))?;
            edges.push(Edge {
                source,
                target,
                guard: raw.guard,
                sync: raw.sync,
                weight: raw.weight,
                updates: raw.updates,
            });
        }
        let units = build_units(&locations, &edges)
            .map_err(|msg| self.err_at(pos, format!("automaton `{name}`: {msg}")))?;
        Ok(Automaton { name, locations, initial, edges, units })
    }

    // ----- expressions ------------------------------------------------------

    fn parse_expr(&mut self) -> Result<Expr, Diagnostic> {
        self.depth += 1;
        if self.depth > MAX_NEST_DEPTH {
            return Err(self.err("expression too deeply nested"));
        }
        let e = self.parse_ternary();
        self.depth -= 1;
        e
    }

    fn parse_ternary(&mut self) -> Result<Expr, Diagnostic> {
        let cond = self.parse_or()?;
        if *self.peek() == Tok::Question {
            self.bump();
            let then_branch = self.parse_expr()?;
            self.expect(Tok::Colon)?;
            let else_branch = self.parse_expr()?;
            Ok(Expr::Ternary {
                cond: Box::new(cond),
                then_branch: Box::new(then_branch),
                else_branch: Box::new(else_branch),
            })
        } else {
            Ok(cond)
        }
    }

    fn parse_or(&mut self) -> Result<Expr, Diagnostic> {
        let mut lhs = self.parse_and()?;
        while *self.peek() == Tok::OrOr {
            self.bump();
            let rhs = self.parse_and()?;
            lhs = Expr::Binary { op: BinOp::Or, lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
        Ok(lhs)
    }

    fn parse_and(&mut self) -> Result<Expr, Diagnostic> {
        let mut lhs = self.parse_cmp()?;
        while *self.peek() == Tok::AndAnd {
            self.bump();
            let rhs = self.parse_cmp()?;
            lhs = Expr::Binary { op: BinOp::And, lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
        Ok(lhs)
    }

    fn parse_cmp(&mut self) -> Result<Expr, Diagnostic> {
        let mut lhs = self.parse_add()?;
        loop {
            let op = match self.peek() {
                Tok::Lt => BinOp::Lt,
                Tok::Le => BinOp::Le,
                Tok::EqEq => BinOp::Eq,
                Tok::Ne => BinOp::Ne,
                Tok::Ge => BinOp::Ge,
                Tok::Gt => BinOp::Gt,
                _ => break,
            };
            self.bump();
            let rhs = self.parse_add()?;
            lhs = Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
        Ok(lhs)
    }

    fn parse_add(&mut self) -> Result<Expr, Diagnostic> {
        let mut lhs = self.parse_mul()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.parse_mul()?;
            lhs = Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
        Ok(lhs)
    }

    fn parse_mul(&mut self) -> Result<Expr, Diagnostic> {
        let mut lhs = self.parse_unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                Tok::Percent => BinOp::Rem,
                _ => break,
            };
            let pos = self.peek_pos();
            self.bump();
            let rhs = self.parse_unary()?;
            if matches!(op, BinOp::Div | BinOp::Rem) && matches!(rhs, Expr::Int(0)) {
                return Err(self.err_at(pos, "division by constant zero"));
            }
            lhs = Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self) -> Result<Expr, Diagnostic> {
        self.depth += 1;
        if self.depth > MAX_NEST_DEPTH {
            return Err(self.err("expression too deeply nested"));
        }
        let e = match self.peek() {
            Tok::Minus => {
                self.bump();
                let operand = self.parse_unary()?;
                // fold negated literals so `-5` is a literal, not a unary node
                match operand {
                    Expr::Int(i) => Ok(Expr::Int(-i)),
                    Expr::Real(r) => Ok(Expr::Real(-r)),
                    other => Ok(Expr::Unary { op: UnOp::Neg, operand: Box::new(other) }),
                }
            }
            Tok::Bang => {
                self.bump();
                let operand = self.parse_unary()?;
                Ok(Expr::Unary { op: UnOp::Not, operand: Box::new(operand) })
            }
            _ => self.parse_primary(),
        };
        self.depth -= 1;
        e
    }

    fn parse_primary(&mut self) -> Result<Expr, Diagnostic> {
        let pos = self.peek_pos();
        match self.bump() {
            Tok::Int(i) => Ok(Expr::Int(i)),
            Tok::Real(r) => Ok(Expr::Real(r)),
            Tok::LParen => {
                let e = self.parse_expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if *self.peek() == Tok::LParen {
                    self.bump();
                    let func = match self.names.get(&name) {
                        Some(NameKind::Func(i)) => *i,
                        _ => return Err(self.err_at(pos, format!("undeclared function `{name}`"))),
                    };
                    let mut args = Vec::new();
                    if *self.peek() != Tok::RParen {
                        loop {
                            args.push(self.parse_expr()?);
                            if *self.peek() == Tok::Comma {
                                self.bump();
                            } else {
                                break;
                            }
                        }
                    }
                    self.expect(Tok::RParen)?;
                    let want = self.funcs[func].params.len();
                    if args.len() != want {
                        return Err(self.err_at(
                            pos,
                            format!("function `{name}` takes {want} arguments, {} given", args.len()),
                        ));
                    }
                    return Ok(Expr::Call { func, name, args });
                }
                // local, const, or global variable
                if let Some((slot, _)) = self.lookup_local(&name) {
                    return Ok(Expr::Var(VarRef { name, scope: VarScope::Local(slot) }));
                }
                match self.names.get(&name) {
                    Some(NameKind::Const(i)) => Ok(match self.consts[*i].1 {
                        Value::Int(v) => Expr::Int(v),
                        Value::Real(v) => Expr::Real(v),
                    }),
                    Some(NameKind::Var(i)) => {
                        let var_idx = *i;
                        let vref = VarRef { name: name.clone(), scope: VarScope::Global(var_idx) };
                        if *self.peek() == Tok::LBracket {
                            self.bump();
                            let idx = self.parse_expr()?;
                            self.expect(Tok::RBracket)?;
                            if self.vars[var_idx].len.is_none() {
                                return Err(self.err_at(pos, format!("`{name}` is not an array")));
                            }
                            Ok(Expr::Index { var: vref, index: Box::new(idx) })
                        } else {
                            if self.vars[var_idx].len.is_some() {
                                return Err(self.err_at(pos, format!("array `{name}` must be indexed")));
                            }
                            Ok(Expr::Var(vref))
                        }
                    }
                    Some(NameKind::Chan(_)) => {
                        Err(self.err_at(pos, format!("channel `{name}` used as a value")))
                    }
                    Some(NameKind::Func(_)) => {
                        Err(self.err_at(pos, format!("function `{name}` used without arguments")))
                    }
                    None => Err(self.err_at(pos, format!("undeclared identifier `{name}`"))),
                }
            }
            other => Err(self.err_at(pos, format!("expected an expression, found {other}"))),
        }
    }

    // ----- constant folding ---------------------------------------------------

    fn fold_const(&self, expr: &Expr, pos: (u32, u32)) -> Result<Value, Diagnostic> {
        fold_expr(expr).ok_or_else(|| self.err_at(pos, "expression is not constant"))
    }

    fn fold_const_int(&self, expr: &Expr, pos: (u32, u32)) -> Result<i64, Diagnostic> {
        match self.fold_const(expr, pos)? {
            Value::Int(i) => Ok(i),
            Value::Real(_) => Err(self.err_at(pos, "expected an integer constant")),
        }
    }
}

/// Best-effort constant evaluation; `None` when the expression references
/// runtime state. Division by zero folds to `None` (the parser reports the
/// literal-zero case separately).
fn fold_expr(expr: &Expr) -> Option<Value> {
    match expr {
        Expr::Int(i) => Some(Value::Int(*i)),
        Expr::Real(r) => Some(Value::Real(*r)),
        Expr::Unary { op, operand } => {
            let v = fold_expr(operand)?;
            match (op, v) {
                (UnOp::Neg, Value::Int(i)) => Some(Value::Int(-i)),
                (UnOp::Neg, Value::Real(r)) => Some(Value::Real(-r)),
                (UnOp::Not, Value::Int(i)) => Some(Value::Int((i == 0) as i64)),
                (UnOp::Not, Value::Real(_)) => None,
            }
        }
        Expr::Binary { op, lhs, rhs } => {
            let a = fold_expr(lhs)?;
            let b = fold_expr(rhs)?;
            fold_binop(*op, a, b)
        }
        Expr::Ternary { cond, then_branch, else_branch } => {
            let c = fold_expr(cond)?.as_int()?;
            if c != 0 {
                fold_expr(then_branch)
            } else {
                fold_expr(else_branch)
            }
        }
        _ => None,
    }
}

fn fold_binop(op: BinOp, a: Value, b: Value) -> Option<Value> {
    use BinOp::*;
    if let (Value::Int(x), Value::Int(y)) = (a, b) {
        return Some(Value::Int(match op {
            Add => x.checked_add(y)?,
            Sub => x.checked_sub(y)?,
            Mul => x.checked_mul(y)?,
            Div => x.checked_div(y)?,
            Rem => x.checked_rem(y)?,
            Lt => (x < y) as i64,
            Le => (x <= y) as i64,
            Eq => (x == y) as i64,
            Ne => (x != y) as i64,
            Ge => (x >= y) as i64,
            Gt => (x > y) as i64,
            And => (x != 0 && y != 0) as i64,
            Or => (x != 0 || y != 0) as i64,
        }));
    }
    let (x, y) = (a.as_f64(), b.as_f64());
    Some(match op {
        Add => Value::Real(x + y),
        Sub => Value::Real(x - y),
        Mul => Value::Real(x * y),
        Div => {
            if y == 0.0 {
                return None;
            }
            Value::Real(x / y)
        }
        Rem => return None,
        Lt => Value::Int((x < y) as i64),
        Le => Value::Int((x <= y) as i64),
        Eq => Value::Int((x == y) as i64),
        Ne => Value::Int((x != y) as i64),
        Ge => Value::Int((x >= y) as i64),
        Gt => Value::Int((x > y) as i64),
        And | Or => return None,
    })
}

/// Group edges into choice units per source location. Weighted edges that
/// share (source, guard, sync) form a probabilistic branch group; unweighted
/// edges stay independent alternatives.
fn build_units(locations: &[Location], edges: &[Edge]) -> Result<Vec<Vec<ChoiceUnit>>, String> {
    let mut units: Vec<Vec<ChoiceUnit>> = vec![Vec::new(); locations.len()];
    for (idx, edge) in edges.iter().enumerate() {
        let per_loc = &mut units[edge.source];
        if edge.weight.is_some() {
            if let Some(unit) = per_loc.iter_mut().find(|u| {
                u.guard == edge.guard
                    && u.sync == edge.sync
                    && edges[u.edges[0]].weight.is_some()
            }) {
                unit.edges.push(idx);
                continue;
            }
        }
        per_loc.push(ChoiceUnit {
            guard: edge.guard.clone(),
            sync: edge.sync.clone(),
            edges: vec![idx],
        });
    }
    for (loc, per_loc) in units.iter().enumerate() {
        for unit in per_loc {
            if edges[unit.edges[0]].weight.is_some() {
                let total: u64 = unit.edges.iter().map(|&e| edges[e].weight.unwrap_or(0)).sum();
                if total == 0 {
                    return Err(format!(
                        "branch group at location `{}` has zero total weight",
                        locations[loc].name
                    ));
                }
            }
        }
    }
    Ok(units)
}

//! Canonical pretty-printer. `parse(pretty(net))` reproduces a structurally
//! equal network, which the test suite checks as a round-trip invariant.

use std::fmt::Write;

use super::ast::*;

fn fmt_real(r: f64) -> String {
    let s = format!("{r}");
    if s.contains('.') || s.contains('e') || s.contains('E') || s.contains("inf") || s.contains("NaN")
    {
        s
    } else {
        format!("{s}.0")
    }
}

fn fmt_value(v: &Value) -> String {
    match v {
        Value::Int(i) => format!("{i}"),
        Value::Real(r) => fmt_real(*r),
    }
}

fn prec(op: BinOp) -> u8 {
    use BinOp::*;
    match op {
        Or => 1,
        And => 2,
        Lt | Le | Eq | Ne | Ge | Gt => 3,
        Add | Sub => 4,
        Mul | Div | Rem => 5,
    }
}

fn op_str(op: BinOp) -> &'static str {
    use BinOp::*;
    match op {
        Add => "+",
        Sub => "-",
        Mul => "*",
        Div => "/",
        Rem => "%",
        Lt => "<",
        Le => "<=",
        Eq => "==",
        Ne => "!=",
        Ge => ">=",
        Gt => ">",
        And => "&&",
        Or => "||",
    }
}

pub fn fmt_expr(e: &Expr) -> String {
    fmt_expr_prec(e, 0)
}

fn fmt_expr_prec(e: &Expr, parent: u8) -> String {
    match e {
        Expr::Int(i) => {
            if *i < 0 {
                format!("({i})")
            } else {
                format!("{i}")
            }
        }
        Expr::Real(r) => {
            if *r < 0.0 {
                format!("({})", fmt_real(*r))
            } else {
                fmt_real(*r)
            }
        }
        Expr::Var(v) => v.name.clone(),
        Expr::Index { var, index } => format!("{}[{}]", var.name, fmt_expr(index)),
        Expr::Unary { op, operand } => {
            let inner = fmt_expr_prec(operand, 6);
            match op {
                UnOp::Neg => format!("-{inner}"),
                UnOp::Not => format!("!{inner}"),
            }
        }
        Expr::Binary { op, lhs, rhs } => {
            let p = prec(*op);
            let s = format!(
                "{} {} {}",
                fmt_expr_prec(lhs, p),
                op_str(*op),
                fmt_expr_prec(rhs, p + 1)
            );
            if p < parent {
                format!("({s})")
            } else {
                s
            }
        }
        Expr::Ternary { cond, then_branch, else_branch } => {
            let s = format!(
                "{} ? {} : {}",
                fmt_expr_prec(cond, 1),
                fmt_expr(then_branch),
                fmt_expr(else_branch)
            );
            if parent > 0 {
                format!("({s})")
            } else {
                s
            }
        }
        Expr::Call { name, args, .. } => {
            let args: Vec<String> = args.iter().map(fmt_expr).collect();
            format!("{name}({})", args.join(", "))
        }
    }
}

fn fmt_type(kind: &VarKind) -> String {
    match kind {
        VarKind::BoundedInt { lo, hi } => format!("int[{lo},{hi}]"),
        VarKind::Real => "real".to_string(),
    }
}

fn fmt_stmt(s: &Stmt, indent: usize, out: &mut String) {
    let pad = "    ".repeat(indent);
    match s {
        Stmt::Local { name, ty, init, .. } => {
            let ty = match ty {
                ValType::Int => "int",
                ValType::Real => "real",
            };
            let _ = writeln!(out, "{pad}var {ty} {name} = {};", fmt_expr(init));
        }
        Stmt::Assign { name, value, .. } => {
            let _ = writeln!(out, "{pad}{name} = {};", fmt_expr(value));
        }
        Stmt::If { cond, then_body, else_body } => {
            let _ = writeln!(out, "{pad}if ({}) {{", fmt_expr(cond));
            for st in then_body {
                fmt_stmt(st, indent + 1, out);
            }
            if else_body.is_empty() {
                let _ = writeln!(out, "{pad}}}");
            } else {
                let _ = writeln!(out, "{pad}}} else {{");
                for st in else_body {
                    fmt_stmt(st, indent + 1, out);
                }
                let _ = writeln!(out, "{pad}}}");
            }
        }
        Stmt::For { name, lo, hi, body, .. } => {
            let _ = writeln!(out, "{pad}for {name} in {lo}..{hi} {{");
            for st in body {
                fmt_stmt(st, indent + 1, out);
            }
            let _ = writeln!(out, "{pad}}}");
        }
        Stmt::Return(e) => {
            let _ = writeln!(out, "{pad}return {};", fmt_expr(e));
        }
    }
}

/// Render a network back to canonical `.anm` source.
pub fn pretty_print(net: &AutomatonNetwork) -> String {
    let mut out = String::new();
    for (name, value) in &net.consts {
        let ty = match value {
            Value::Int(_) => "int",
            Value::Real(_) => "real",
        };
        let _ = writeln!(out, "const {ty} {name} = {};", fmt_value(value));
    }
    for decl in &net.vars {
        let ty = fmt_type(&decl.kind);
        match decl.len {
            None => {
                let _ = writeln!(out, "{ty} {} = {};", decl.name, fmt_value(&decl.init[0]));
            }
            Some(n) => {
                let inits: Vec<String> = decl.init.iter().map(fmt_value).collect();
                let _ = writeln!(out, "{ty} {}[{n}] = {{{}}};", decl.name, inits.join(", "));
            }
        }
    }
    for chan in &net.channels {
        if chan.broadcast {
            let _ = writeln!(out, "broadcast chan {};", chan.name);
        } else {
            let _ = writeln!(out, "chan {};", chan.name);
        }
    }
    for func in &net.funcs {
        let ret = match func.ret {
            ValType::Int => "int",
            ValType::Real => "real",
        };
        let params: Vec<String> = func
            .params
            .iter()
            .map(|(n, t)| {
                format!("{} {n}", match t {
                    ValType::Int => "int",
                    ValType::Real => "real",
                })
            })
            .collect();
        let _ = writeln!(out, "func {ret} {}({}) {{", func.name, params.join(", "));
        for st in &func.body {
            fmt_stmt(st, 1, &mut out);
        }
        let _ = writeln!(out, "}}");
    }
    for automaton in &net.automata {
        let _ = writeln!(out, "automaton {} {{", automaton.name);
        for (i, loc) in automaton.locations.iter().enumerate() {
            let mut flags = String::new();
            if i == automaton.initial {
                flags.push_str("init ");
            }
            if loc.committed {
                flags.push_str("committed ");
            }
            let _ = writeln!(out, "    {flags}location {};", loc.name);
        }
        for edge in &automaton.edges {
            let src = &automaton.locations[edge.source].name;
            let dst = &automaton.locations[edge.target].name;
            let mut clauses = String::new();
            if let Some(g) = &edge.guard {
                let _ = write!(clauses, " guard: {};", fmt_expr(g));
            }
            if let Some(s) = &edge.sync {
                let d = match s.dir {
                    SyncDir::Send => "!",
                    SyncDir::Receive => "?",
                };
                let _ = write!(clauses, " sync: {}{};", s.channel_name, d);
            }
            if let Some(w) = edge.weight {
                let _ = write!(clauses, " weight: {w};");
            }
            if !edge.updates.is_empty() {
                let parts: Vec<String> = edge
                    .updates
                    .iter()
                    .map(|u| match &u.index {
                        None => format!("{} = {}", u.var.name, fmt_expr(&u.value)),
                        Some(ix) => {
                            format!("{}[{}] = {}", u.var.name, fmt_expr(ix), fmt_expr(&u.value))
                        }
                    })
                    .collect();
                let _ = write!(clauses, " do: {};", parts.join(", "));
            }
            let _ = writeln!(out, "    edge {src} -> {dst} {{{clauses} }}");
        }
        let _ = writeln!(out, "}}");
    }
    out
}

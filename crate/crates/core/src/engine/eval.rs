//! Expression and helper-function evaluation.
//!
//! Evaluation is dynamically typed over [`Value`]: integer arithmetic stays
//! exact, any real operand promotes the operation to `f64`. Comparisons
//! produce `Int` 0/1; logical operators and guards require integers and
//! short-circuit. Helper functions run against a private frame and cannot
//! write globals.

use thiserror::Error;

use super::ast::*;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RuntimeError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("modulo requires integer operands")]
    RealModulo,
    #[error("logical operator applied to a real value")]
    LogicalOnReal,
    #[error("condition must be an integer")]
    NonIntCondition,
    #[error("array index {index} out of range for `{name}` (length {len})")]
    IndexOutOfRange { name: String, index: i64, len: usize },
    #[error("array index must be an integer")]
    NonIntIndex,
    #[error("`{name}` = {value} violates declared bounds [{lo},{hi}]")]
    BoundViolation { name: String, value: i64, lo: i64, hi: i64 },
    #[error("cannot assign a real value to integer variable `{name}`")]
    RealToInt { name: String },
    #[error("function `{name}` finished without returning a value")]
    NoReturn { name: String },
    #[error("function `{name}` must return an integer")]
    ReturnTypeMismatch { name: String },
    #[error("integer overflow in arithmetic")]
    IntOverflow,
}

/// Evaluation context; `frame` is the active function frame, if any.
pub struct EvalCtx<'a> {
    pub net: &'a AutomatonNetwork,
    pub globals: &'a [Value],
}

impl<'a> EvalCtx<'a> {
    pub fn new(net: &'a AutomatonNetwork, globals: &'a [Value]) -> Self {
        EvalCtx { net, globals }
    }

    pub fn eval(&self, expr: &Expr) -> Result<Value, RuntimeError> {
        self.eval_in(expr, &[])
    }

    fn eval_in(&self, expr: &Expr, frame: &[Value]) -> Result<Value, RuntimeError> {
        match expr {
            Expr::Int(i) => Ok(Value::Int(*i)),
            Expr::Real(r) => Ok(Value::Real(*r)),
            Expr::Var(vref) => Ok(self.read(vref, frame)),
            Expr::Index { var, index } => {
                let idx = self.eval_in(index, frame)?;
                let slot = self.array_slot(var, idx)?;
                Ok(self.globals[slot])
            }
            Expr::Unary { op, operand } => {
                let v = self.eval_in(operand, frame)?;
                match (op, v) {
                    (UnOp::Neg, Value::Int(i)) => {
                        i.checked_neg().map(Value::Int).ok_or(RuntimeError::IntOverflow)
                    }
                    (UnOp::Neg, Value::Real(r)) => Ok(Value::Real(-r)),
                    (UnOp::Not, Value::Int(i)) => Ok(Value::Int((i == 0) as i64)),
                    (UnOp::Not, Value::Real(_)) => Err(RuntimeError::LogicalOnReal),
                }
            }
            Expr::Binary { op, lhs, rhs } => match op {
                BinOp::And => {
                    if self.truth(self.eval_in(lhs, frame)?)? {
                        Ok(Value::Int(self.truth(self.eval_in(rhs, frame)?)? as i64))
                    } else {
                        Ok(Value::Int(0))
                    }
                }
                BinOp::Or => {
                    if self.truth(self.eval_in(lhs, frame)?)? {
                        Ok(Value::Int(1))
                    } else {
                        Ok(Value::Int(self.truth(self.eval_in(rhs, frame)?)? as i64))
                    }
                }
                _ => {
                    let a = self.eval_in(lhs, frame)?;
                    let b = self.eval_in(rhs, frame)?;
                    binop(*op, a, b)
                }
            },
            Expr::Ternary { cond, then_branch, else_branch } => {
                if self.truth(self.eval_in(cond, frame)?)? {
                    self.eval_in(then_branch, frame)
                } else {
                    self.eval_in(else_branch, frame)
                }
            }
            Expr::Call { func, args, .. } => {
                let def = &self.net.funcs[*func];
                let mut new_frame = vec![Value::Int(0); def.frame_size];
                for (i, arg) in args.iter().enumerate() {
                    let v = self.eval_in(arg, frame)?;
                    new_frame[i] = coerce_param(def.params[i].1, v, &def.params[i].0)?;
                }
                self.call(def, new_frame)
            }
        }
    }

    fn call(&self, def: &FuncDef, mut frame: Vec<Value>) -> Result<Value, RuntimeError> {
        match self.exec_body(&def.body, &mut frame)? {
            Some(v) => match (def.ret, v) {
                (ValType::Int, Value::Int(_)) => Ok(v),
                (ValType::Int, Value::Real(_)) => {
                    Err(RuntimeError::ReturnTypeMismatch { name: def.name.clone() })
                }
                (ValType::Real, v) => Ok(Value::Real(v.as_f64())),
            },
            None => Err(RuntimeError::NoReturn { name: def.name.clone() }),
        }
    }

    fn exec_body(&self, stmts: &[Stmt], frame: &mut Vec<Value>) -> Result<Option<Value>, RuntimeError> {
        for stmt in stmts {
            match stmt {
                Stmt::Local { slot, ty, init, name } => {
                    let v = self.eval_in(init, frame)?;
                    frame[*slot] = coerce_param(*ty, v, name)?;
                }
                Stmt::Assign { slot, ty, value, name } => {
                    let v = self.eval_in(value, frame)?;
                    frame[*slot] = coerce_param(*ty, v, name)?;
                }
                Stmt::If { cond, then_body, else_body } => {
                    let branch = if self.truth(self.eval_in(cond, frame)?)? {
                        then_body
                    } else {
                        else_body
                    };
                    if let Some(v) = self.exec_body(branch, frame)? {
                        return Ok(Some(v));
                    }
                }
                Stmt::For { slot, lo, hi, body, .. } => {
                    let mut i = *lo;
                    while i < *hi {
                        frame[*slot] = Value::Int(i);
                        if let Some(v) = self.exec_body(body, frame)? {
                            return Ok(Some(v));
                        }
                        i += 1;
                    }
                }
                Stmt::Return(e) => return Ok(Some(self.eval_in(e, frame)?)),
            }
        }
        Ok(None)
    }

    fn read(&self, vref: &VarRef, frame: &[Value]) -> Value {
        match vref.scope {
            VarScope::Global(idx) => self.globals[self.net.vars[idx].base_slot],
            VarScope::Local(slot) => frame[slot],
        }
    }

    /// Resolve an array element to its store slot, bounds-checking the index.
    pub fn array_slot(&self, vref: &VarRef, idx: Value) -> Result<usize, RuntimeError> {
        let VarScope::Global(var_idx) = vref.scope else {
            unreachable!("parser rejects indexed locals");
        };
        let decl = &self.net.vars[var_idx];
        let len = decl.len.expect("parser guarantees indexed vars are arrays");
        let i = idx.as_int().ok_or(RuntimeError::NonIntIndex)?;
        if i < 0 || i as usize >= len {
            return Err(RuntimeError::IndexOutOfRange { name: vref.name.clone(), index: i, len });
        }
        Ok(decl.base_slot + i as usize)
    }

    pub fn truth(&self, v: Value) -> Result<bool, RuntimeError> {
        match v {
            Value::Int(i) => Ok(i != 0),
            Value::Real(_) => Err(RuntimeError::NonIntCondition),
        }
    }
}

fn coerce_param(ty: ValType, v: Value, name: &str) -> Result<Value, RuntimeError> {
    match (ty, v) {
        (ValType::Int, Value::Int(_)) => Ok(v),
        (ValType::Int, Value::Real(_)) => Err(RuntimeError::RealToInt { name: name.to_string() }),
        (ValType::Real, v) => Ok(Value::Real(v.as_f64())),
    }
}

fn binop(op: BinOp, a: Value, b: Value) -> Result<Value, RuntimeError> {
    use BinOp::*;
    if let (Value::Int(x), Value::Int(y)) = (a, b) {
        return match op {
            Add => x.checked_add(y).map(Value::Int).ok_or(RuntimeError::IntOverflow),
            Sub => x.checked_sub(y).map(Value::Int).ok_or(RuntimeError::IntOverflow),
            Mul => x.checked_mul(y).map(Value::Int).ok_or(RuntimeError::IntOverflow),
            Div => {
                if y == 0 {
                    Err(RuntimeError::DivisionByZero)
                } else {
                    x.checked_div(y).map(Value::Int).ok_or(RuntimeError::IntOverflow)
                }
            }
            Rem => {
                if y == 0 {
                    Err(RuntimeError::DivisionByZero)
                } else {
                    x.checked_rem(y).map(Value::Int).ok_or(RuntimeError::IntOverflow)
                }
            }
            Lt => Ok(Value::Int((x < y) as i64)),
            Le => Ok(Value::Int((x <= y) as i64)),
            Eq => Ok(Value::Int((x == y) as i64)),
            Ne => Ok(Value::Int((x != y) as i64)),
            Ge => Ok(Value::Int((x >= y) as i64)),
            Gt => Ok(Value::Int((x > y) as i64)),
            And | Or => unreachable!("short-circuited by the caller"),
        };
    }
    let (x, y) = (a.as_f64(), b.as_f64());
    match op {
        Add => Ok(Value::Real(x + y)),
        Sub => Ok(Value::Real(x - y)),
        Mul => Ok(Value::Real(x * y)),
        Div => {
            if y == 0.0 {
                Err(RuntimeError::DivisionByZero)
            } else {
                Ok(Value::Real(x / y))
            }
        }
        Rem => Err(RuntimeError::RealModulo),
        Lt => Ok(Value::Int((x < y) as i64)),
        Le => Ok(Value::Int((x <= y) as i64)),
        Eq => Ok(Value::Int((x == y) as i64)),
        Ne => Ok(Value::Int((x != y) as i64)),
        Ge => Ok(Value::Int((x >= y) as i64)),
        Gt => Ok(Value::Int((x > y) as i64)),
        And | Or => Err(RuntimeError::LogicalOnReal),
    }
}

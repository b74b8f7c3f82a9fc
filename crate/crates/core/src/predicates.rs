//! Evaluation of expressions and predicates, bounded validity, and state
//! updates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{BinOp, Expr, UnOp, Update, Value, VirtualState};

/// Values of message and recursion variables.
pub type Vars = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("unknown state variable `@{0}`")]
    UnknownState(String),
    #[error("sort mismatch evaluating `{0}`")]
    Sort(String),
    #[error("integer overflow evaluating `{0}`")]
    Overflow(String),
    #[error("validity domain has {size} assignments, above the cap of {cap}")]
    DomainTooLarge { size: u128, cap: u128 },
}

/// Message-variable values paired with the virtual state.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Binding {
    pub vars: Vars,
    pub state: VirtualState,
}

impl Binding {
    pub fn new(vars: Vars, state: VirtualState) -> Binding {
        Binding { vars, state }
    }

    pub fn of_state(state: VirtualState) -> Binding {
        Binding {
            vars: Vars::new(),
            state,
        }
    }

    pub fn with_var(mut self, x: impl Into<String>, v: Value) -> Binding {
        self.vars.insert(x.into(), v);
        self
    }
}

pub fn eval(e: &Expr, b: &Binding) -> Result<Value, EvalError> {
    eval_in(e, &b.vars, &b.state)
}

pub fn eval_in(e: &Expr, vars: &Vars, state: &VirtualState) -> Result<Value, EvalError> {
    let sort_err = || EvalError::Sort(crate::kernel::print_expr(e));
    let overflow = || EvalError::Overflow(crate::kernel::print_expr(e));
    match e {
        Expr::Lit(v) => Ok(*v),
        Expr::Var(x) => vars.get(x).copied().ok_or_else(|| EvalError::Unbound(x.clone())),
        Expr::State(x) => state.get(x).ok_or_else(|| EvalError::UnknownState(x.clone())),
        Expr::Unary(op, a) => match (op, eval_in(a, vars, state)?) {
            (UnOp::Neg, Value::Int(n)) => n.checked_neg().map(Value::Int).ok_or_else(overflow),
            (UnOp::Not, Value::Bool(b)) => Ok(Value::Bool(!b)),
            _ => Err(sort_err()),
        },
        Expr::Binary(op, a, b) => {
            // Short-circuit so that `false /\ e` is defined even if `e` is not.
            if matches!(op, BinOp::And | BinOp::Or) {
                let l = match eval_in(a, vars, state)? {
                    Value::Bool(l) => l,
                    _ => return Err(sort_err()),
                };
                if (*op == BinOp::And && !l) || (*op == BinOp::Or && l) {
                    return Ok(Value::Bool(l));
                }
                return match eval_in(b, vars, state)? {
                    Value::Bool(r) => Ok(Value::Bool(r)),
                    _ => Err(sort_err()),
                };
            }
            let l = eval_in(a, vars, state)?;
            let r = eval_in(b, vars, state)?;
            match (op, l, r) {
                (BinOp::Eq, l, r) if l.ty() == r.ty() => Ok(Value::Bool(l == r)),
                (BinOp::Ne, l, r) if l.ty() == r.ty() => Ok(Value::Bool(l != r)),
                (_, Value::Int(x), Value::Int(y)) => {
                    let v = match op {
                        BinOp::Add => Value::Int(x.checked_add(y).ok_or_else(overflow)?),
                        BinOp::Sub => Value::Int(x.checked_sub(y).ok_or_else(overflow)?),
                        BinOp::Mul => Value::Int(x.checked_mul(y).ok_or_else(overflow)?),
                        BinOp::Lt => Value::Bool(x < y),
                        BinOp::Le => Value::Bool(x <= y),
                        BinOp::Gt => Value::Bool(x > y),
                        BinOp::Ge => Value::Bool(x >= y),
                        _ => return Err(sort_err()),
                    };
                    Ok(v)
                }
                _ => Err(sort_err()),
            }
        }
    }
}

/// `sigma |- a` under the message binding `vars`.
pub fn holds(a: &Expr, sigma: &VirtualState, vars: &Vars) -> Result<bool, EvalError> {
    match eval_in(a, vars, sigma)? {
        Value::Bool(b) => Ok(b),
        Value::Int(_) => Err(EvalError::Sort(crate::kernel::print_expr(a))),
    }
}

/// Finite domains for the free variables of a validity query. State
/// variables are keyed without the `@`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Domains {
    pub vars: BTreeMap<String, Vec<Value>>,
    pub state: BTreeMap<String, Vec<Value>>,
    pub cap: u128,
}

pub const DEFAULT_VALIDITY_CAP: u128 = 1_000_000;

impl Domains {
    pub fn new() -> Domains {
        Domains {
            cap: DEFAULT_VALIDITY_CAP,
            ..Domains::default()
        }
    }

    pub fn var(mut self, x: impl Into<String>, dom: Vec<Value>) -> Domains {
        self.vars.insert(x.into(), dom);
        self
    }

    pub fn state_var(mut self, x: impl Into<String>, dom: Vec<Value>) -> Domains {
        self.state.insert(x.into(), dom);
        self
    }
}

/// Outcome of a bounded validity query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Validity {
    Valid,
    /// A falsifying assignment; state variables carry a leading `@`.
    Invalid(BTreeMap<String, Value>),
}

impl Validity {
    pub fn is_valid(&self) -> bool {
        matches!(self, Validity::Valid)
    }
}

/// Decides `hyp => concl` for every assignment of the free variables of both
/// sides over their domains. Assignments on which `hyp` is false or
/// undefined are skipped; an undefined conclusion under a true hypothesis
/// is a counterexample.
pub fn valid_bounded(hyp: &Expr, concl: &Expr, doms: &Domains) -> Result<Validity, EvalError> {
    let mut free = hyp.free_vars();
    free.extend(concl.free_vars());
    let mut st = hyp.state_vars();
    st.extend(concl.state_vars());

    let mut axes: Vec<(String, bool, &Vec<Value>)> = Vec::new();
    for x in &free {
        let d = doms.vars.get(x).ok_or_else(|| EvalError::Unbound(x.clone()))?;
        axes.push((x.clone(), false, d));
    }
    for x in &st {
        let d = doms.state.get(x).ok_or_else(|| EvalError::UnknownState(x.clone()))?;
        axes.push((x.clone(), true, d));
    }
    let size = axes
        .iter()
        .fold(1u128, |acc, (_, _, d)| acc.saturating_mul(d.len() as u128));
    let cap = if doms.cap == 0 { DEFAULT_VALIDITY_CAP } else { doms.cap };
    if size > cap {
        return Err(EvalError::DomainTooLarge { size, cap });
    }
    if axes.iter().any(|(_, _, d)| d.is_empty()) {
        return Ok(Validity::Valid);
    }

    let mut idx = vec![0usize; axes.len()];
    let mut vars = Vars::new();
    let mut state = VirtualState::new();
    loop {
        for (k, (x, is_state, d)) in axes.iter().enumerate() {
            if *is_state {
                state.0.insert(x.clone(), d[idx[k]]);
            } else {
                vars.insert(x.clone(), d[idx[k]]);
            }
        }
        if let Ok(true) = holds(hyp, &state, &vars) {
            if !matches!(holds(concl, &state, &vars), Ok(true)) {
                let mut w: BTreeMap<String, Value> = vars.clone();
                w.extend(state.0.iter().map(|(k, v)| (format!("@{k}"), *v)));
                return Ok(Validity::Invalid(w));
            }
        }
        let mut k = 0;
        loop {
            if k == axes.len() {
                return Ok(Validity::Valid);
            }
            idx[k] += 1;
            if idx[k] < axes[k].2.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// `sigma after E`: right-hand sides are evaluated in the pre-state.
pub fn apply_update(u: &Update, sigma: &VirtualState, vars: &Vars) -> Result<VirtualState, EvalError> {
    let mut out = sigma.clone();
    for a in &u.0 {
        if !sigma.0.contains_key(&a.var) {
            return Err(EvalError::UnknownState(a.var.clone()));
        }
        let v = eval_in(&a.expr, vars, sigma)?;
        out.0.insert(a.var.clone(), v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{parse_update, SortBound, Sort};

    fn e(src: &str) -> Expr {
        crate::kernel::parse_expr(src).unwrap()
    }

    #[test]
    fn eval_examples() {
        let st = VirtualState::new().with("x", Value::Int(10));
        assert_eq!(eval(&e("@x + 1"), &Binding::of_state(st)).unwrap(), Value::Int(11));
        let b = Binding::of_state(VirtualState::new().with("x", Value::Int(11))).with_var("y", Value::Int(11));
        assert_eq!(eval(&e("y > 10 /\\ y == @x"), &b).unwrap(), Value::Bool(true));
        let b = Binding::default().with_var("y", Value::Int(5));
        assert_eq!(eval(&e("y > 10"), &b).unwrap(), Value::Bool(false));
        assert_eq!(eval(&e("z"), &b), Err(EvalError::Unbound("z".into())));
    }

    #[test]
    fn holds_examples() {
        let st = VirtualState::new().with("x", Value::Int(3));
        let mut v = Vars::new();
        assert!(holds(&Expr::bool(true), &VirtualState::new(), &v).unwrap());
        v.insert("y".into(), Value::Int(3));
        assert!(holds(&e("y == @x"), &st, &v).unwrap());
        v.insert("y".into(), Value::Int(4));
        assert!(!holds(&e("y == @x"), &st, &v).unwrap());
    }

    #[test]
    fn validity_examples() {
        let b = SortBound::default();
        let d = Domains::new().var("x", b.domain(Sort::Int)).var("y", b.domain(Sort::Nat));
        assert!(valid_bounded(&Expr::bool(true), &e("x == x"), &d).unwrap().is_valid());
        assert!(valid_bounded(&e("y > 10"), &e("y > 5"), &d).unwrap().is_valid());
        let w = valid_bounded(&e("y > 5"), &e("y > 10"), &d).unwrap();
        assert_eq!(w, Validity::Invalid(BTreeMap::from([("y".to_string(), Value::Int(6))])));
    }

    #[test]
    fn validity_cap() {
        let d = Domains {
            cap: 10,
            ..Domains::new().var("x", SortBound(32).domain(Sort::Nat))
        };
        assert!(matches!(
            valid_bounded(&e("x > 0"), &e("x > 0"), &d),
            Err(EvalError::DomainTooLarge { size: 32, cap: 10 })
        ));
    }

    #[test]
    fn update_examples() {
        let st = VirtualState::new().with("x", Value::Int(10));
        let out = apply_update(&parse_update("@x++").unwrap(), &st, &Vars::new()).unwrap();
        assert_eq!(out.get("x"), Some(Value::Int(11)));
        assert_eq!(apply_update(&Update::skip(), &st, &Vars::new()).unwrap(), st);
        let st0 = VirtualState::new().with("x", Value::Int(0));
        let v = Vars::from([("y".to_string(), Value::Int(7))]);
        let out = apply_update(&parse_update("@x := y").unwrap(), &st0, &v).unwrap();
        assert_eq!(out.get("x"), Some(Value::Int(7)));
        assert!(apply_update(&parse_update("@z := 1").unwrap(), &st0, &v).is_err());
    }

    #[test]
    fn simultaneous_update_reads_pre_state() {
        let st = VirtualState::new().with("a", Value::Int(1)).with("b", Value::Int(2));
        let out = apply_update(&parse_update("@a := @b, @b := @a").unwrap(), &st, &Vars::new()).unwrap();
        assert_eq!(out.get("a"), Some(Value::Int(2)));
        assert_eq!(out.get("b"), Some(Value::Int(1)));
    }
}

//! Labelled transition system over configurations `(P, sigma)`.
//!
//! Every communication is followed by exactly one update step: after an
//! input or output the configuration holds a pending update, and the only
//! transition available is the corresponding update action.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{
    fresh_name, infer_binder_ty, print_update, Action, Expr, FreeNames, Process, SessionRole,
    Sort, SortBound, Ty, Update, Value, VirtualState,
};
use crate::predicates::{apply_update, eval_in, EvalError, Vars};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LtsError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("guards of selection on {chan} are not exhaustive under the current state")]
    GuardsNotExhaustive { chan: String },
    #[error("guards of selection on {chan} overlap (labels {first} and {second})")]
    GuardsOverlap {
        chan: String,
        first: String,
        second: String,
    },
    #[error("recursion `{0}` unfolds without reaching a prefix")]
    Unguarded(String),
}

/// A process with its virtual state and, right after a communication, the
/// update still to be performed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Config {
    pub process: Process,
    pub state: VirtualState,
    pub pending: Option<Update>,
}

impl Config {
    pub fn new(process: Process, state: VirtualState) -> Config {
        Config {
            process,
            state,
            pending: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[derive(Default)]
pub struct LtsOpts {
    pub bound: SortBound,
}


impl LtsOpts {
    pub fn with_bound(bound: i64) -> LtsOpts {
        LtsOpts {
            bound: SortBound(bound),
        }
    }

    /// Values offered to an input binder of the given type. Numeric binders
    /// receive the union of the `Int` and `Nat` domains.
    pub fn input_domain(&self, ty: Option<Ty>) -> Vec<Value> {
        let nums = || -> Vec<Value> {
            let set: BTreeSet<Value> = self
                .bound
                .domain(Sort::Int)
                .into_iter()
                .chain(self.bound.domain(Sort::Nat))
                .collect();
            set.into_iter().collect()
        };
        match ty {
            Some(Ty::Num) => nums(),
            Some(Ty::Bool) => self.bound.domain(Sort::Bool),
            None => {
                let mut v = nums();
                v.extend(self.bound.domain(Sort::Bool));
                v
            }
        }
    }
}

const MAX_UNFOLD: usize = 64;

/// All one-step successors of `c`.
pub fn step(c: &Config, opts: &LtsOpts) -> Result<Vec<(Action, Config)>, LtsError> {
    if let Some(u) = &c.pending {
        let state = apply_update(u, &c.state, &Vars::new())?;
        return Ok(vec![(
            Action::Update(u.clone()),
            Config {
                process: c.process.clone(),
                state,
                pending: None,
            },
        )]);
    }
    let avoid = c.process.free_names();
    let tys: BTreeMap<String, Ty> = c.state.0.iter().map(|(k, v)| (k.clone(), v.ty())).collect();
    let mut out = Vec::new();
    proc_steps(&c.process, &c.state, &avoid, &tys, opts, 0, &mut |a, p, u| {
        out.push((
            a,
            Config {
                process: p,
                state: c.state.clone(),
                pending: u,
            },
        ))
    })?;
    Ok(out)
}

type Emit<'a> = dyn FnMut(Action, Process, Option<Update>) + 'a;

fn proc_steps(
    p: &Process,
    sigma: &VirtualState,
    avoid: &BTreeSet<String>,
    tys: &BTreeMap<String, Ty>,
    opts: &LtsOpts,
    unfolds: usize,
    emit: &mut Emit<'_>,
) -> Result<(), LtsError> {
    let none = Vars::new();
    match p {
        Process::Inact | Process::RecCall { .. } => Ok(()),
        Process::Request {
            shared, var, body, ..
        } => {
            accept_step(shared, "1", var, body, avoid, emit);
            Ok(())
        }
        Process::Accept {
            shared,
            role,
            var,
            body,
        } => {
            accept_step(shared, &role.to_string(), var, body, avoid, emit);
            Ok(())
        }
        Process::Select { chan, branches } => {
            let mut chosen: Option<usize> = None;
            for (i, b) in branches.iter().enumerate() {
                if eval_in(&b.guard, &none, sigma)? == Value::Bool(true) {
                    if let Some(j) = chosen {
                        return Err(LtsError::GuardsOverlap {
                            chan: chan.to_string(),
                            first: branches[j].label.clone(),
                            second: b.label.clone(),
                        });
                    }
                    chosen = Some(i);
                }
            }
            let Some(j) = chosen else {
                return Err(LtsError::GuardsNotExhaustive {
                    chan: chan.to_string(),
                });
            };
            let b = &branches[j];
            let v = eval_in(&b.payload, &none, sigma)?;
            let lit = Expr::Lit(v);
            emit(
                Action::Output {
                    chan: chan.clone(),
                    label: b.label.clone(),
                    value: v,
                },
                b.cont.subst_var(&b.var, &lit),
                Some(b.update.subst_var(&b.var, &lit)),
            );
            Ok(())
        }
        Process::Branch { chan, branches } => {
            for b in branches {
                let ty = infer_binder_ty(&b.var, &b.update, &b.cont, tys);
                for v in opts.input_domain(ty) {
                    let lit = Expr::Lit(v);
                    emit(
                        Action::Input {
                            chan: chan.clone(),
                            label: b.label.clone(),
                            value: v,
                        },
                        b.cont.subst_var(&b.var, &lit),
                        Some(b.update.subst_var(&b.var, &lit)),
                    );
                }
            }
            Ok(())
        }
        Process::Par(l, r) => {
            proc_steps(l, sigma, avoid, tys, opts, unfolds, &mut |a, p, u| {
                emit(a, Process::par(p, (**r).clone()), u)
            })?;
            proc_steps(r, sigma, avoid, tys, opts, unfolds, &mut |a, p, u| {
                emit(a, Process::par((**l).clone(), p), u)
            })
        }
        Process::RecDef { var, .. } => {
            if unfolds >= MAX_UNFOLD {
                return Err(LtsError::Unguarded(var.clone()));
            }
            let unfolded = unfold(p, sigma)?;
            proc_steps(&unfolded, sigma, avoid, tys, opts, unfolds + 1, emit)
        }
    }
}

fn accept_step(
    shared: &str,
    role: &str,
    var: &str,
    body: &Process,
    avoid: &BTreeSet<String>,
    emit: &mut Emit<'_>,
) {
    let s = fresh_name(var, avoid);
    emit(
        Action::SessionAccept {
            shared: shared.to_string(),
            at: SessionRole::new(s.clone(), role),
        },
        body.rename_session(var, &s),
        None,
    );
}

/// One unfolding of `mu X(x := e). P`: evaluates `e` and substitutes.
pub fn unfold(p: &Process, sigma: &VirtualState) -> Result<Process, LtsError> {
    match p {
        Process::RecDef {
            var,
            param,
            init,
            body,
        } => {
            let v = eval_in(init, &Vars::new(), sigma)?;
            Ok(body
                .subst_call(var, param, body)
                .subst_var(param, &Expr::Lit(v)))
        }
        other => Ok(other.clone()),
    }
}

/// All maximal action sequences of length at most `depth`.
pub fn traces(c: &Config, depth: usize, opts: &LtsOpts) -> Result<Vec<Vec<Action>>, LtsError> {
    let mut out = Vec::new();
    let mut prefix = Vec::new();
    traces_rec(c, depth, opts, &mut prefix, &mut out)?;
    out.sort_by_key(|t| t.iter().map(|a| a.to_string()).collect::<Vec<_>>());
    out.dedup();
    Ok(out)
}

fn traces_rec(
    c: &Config,
    depth: usize,
    opts: &LtsOpts,
    prefix: &mut Vec<Action>,
    out: &mut Vec<Vec<Action>>,
) -> Result<(), LtsError> {
    if depth == 0 {
        out.push(prefix.clone());
        return Ok(());
    }
    let succ = step(c, opts)?;
    if succ.is_empty() {
        out.push(prefix.clone());
        return Ok(());
    }
    for (a, next) in succ {
        prefix.push(a);
        traces_rec(&next, depth - 1, opts, prefix, out)?;
        prefix.pop();
    }
    Ok(())
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Output { chan, value, .. } => write!(f, "{chan}!{value}"),
            Action::Input { chan, value, .. } => write!(f, "{chan}?{value}"),
            Action::Update(u) => write!(f, "<{}>", print_update(u)),
            Action::SessionAccept { shared, at } => write!(f, "{shared}({at})"),
        }
    }
}

/// Trace dump: one action per line.
pub fn dump_trace(t: &[Action]) -> String {
    t.iter().map(|a| format!("{a}\n")).collect()
}

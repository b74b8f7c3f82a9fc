//! Transition system of encoded processes and pure-HML model checking.
//!
//! Synchronisations on cells are silent. Modalities are weak: an action is
//! observed from the τ-normal forms of the current term. Observing a cell
//! leaves it in place, and an updater reads and rewrites the cells in the
//! same step as the update that triggers it.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{par, PiBranch, PiChan, PiFormula, PiPat, PiProcess, PiTerm, PiVal, Slot};
use crate::kernel::{fresh_name, print_expr, Chan, Expr, Sort, SessionRole, SortBound, Value, VirtualState};
use crate::lts::LtsOpts;
use crate::predicates::{eval_in, holds, EvalError, Vars};
use crate::satisfaction::Verdict;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PiError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("no guard of `cond` holds")]
    NoGuard,
    #[error("two guards of `cond` hold")]
    Overlap,
    #[error("recursion `{0}` unfolds without reaching a prefix")]
    Unguarded(String),
    #[error("free recursion variable `{0}`")]
    FreeMuVar(String),
    #[error("malformed pattern argument `{0}`")]
    Pattern(String),
    #[error("more than {0} silent configurations")]
    TauBudget(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PiAction {
    Out { chan: Chan, label: Option<String>, value: Value },
    In { chan: Chan, label: Option<String>, value: Value },
    Accept { shared: String, at: SessionRole },
    Cell { var: String, value: Value },
    Update { var: String, expr: Expr },
    Skip,
}

impl fmt::Display for PiAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PiAction::Out { chan, value, .. } => write!(f, "{chan}!{value}"),
            PiAction::In { chan, value, .. } => write!(f, "{chan}?{value}"),
            PiAction::Accept { shared, at } => write!(f, "{shared}({at})"),
            PiAction::Cell { var, value } => write!(f, "a_{var}!{value}"),
            PiAction::Update { var, expr } => write!(f, "{var}!<{}>", print_expr(expr)),
            PiAction::Skip => write!(f, "skip"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PiOpts {
    pub bound: SortBound,
    pub mu_depth: usize,
    /// Number of updater activations allowed along a path.
    pub repl_depth: usize,
    pub tau_cap: usize,
}

impl Default for PiOpts {
    fn default() -> Self {
        PiOpts {
            bound: SortBound::default(),
            mu_depth: 8,
            repl_depth: 4,
            tau_cap: 10_000,
        }
    }
}

impl PiOpts {
    pub fn new(sort_bound: i64, mu_depth: usize, repl_depth: usize) -> PiOpts {
        PiOpts {
            bound: SortBound(sort_bound),
            mu_depth,
            repl_depth,
            ..PiOpts::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PiSatResult {
    pub verdict: Verdict,
    pub trace: Vec<PiAction>,
    pub obligations_checked: usize,
}

const MAX_UNFOLD: usize = 64;

fn value_of(t: &PiTerm) -> Result<Value, PiError> {
    let none = Vars::new();
    let empty = VirtualState::new();
    Ok(match t {
        PiTerm::Expr(e) | PiTerm::Quote(e) => eval_in(e, &none, &empty)?,
        PiTerm::Eval { slot, subst } => {
            let q = match slot {
                Slot::Quoted(q) => q.clone(),
                Slot::Var(v) => return Err(EvalError::Unbound(v.clone()).into()),
            };
            let map: Vec<(String, Expr)> = subst.clone();
            let inst = q.subst_state(&|z| map.iter().find(|(x, _)| x == z).map(|(_, e)| e.clone()));
            eval_in(&inst, &none, &empty)?
        }
    })
}

/// Flattens parallel composition, resolves `cond` and unfolds recursion;
/// the result is sorted for use as a key.
fn normalize(items: Vec<PiProcess>) -> Result<Vec<PiProcess>, PiError> {
    let mut out = Vec::new();
    let mut work: Vec<(PiProcess, usize)> = items.into_iter().map(|p| (p, 0)).collect();
    while let Some((p, n)) = work.pop() {
        match p {
            PiProcess::Nil | PiProcess::Call { .. } => {}
            PiProcess::Par(ps) => work.extend(ps.into_iter().map(|q| (q, n))),
            PiProcess::Cond(bs) => {
                let mut chosen = None;
                for (g, q) in bs {
                    if holds(&g, &VirtualState::new(), &Vars::new())? {
                        if chosen.is_some() {
                            return Err(PiError::Overlap);
                        }
                        chosen = Some(q);
                    }
                }
                work.push((chosen.ok_or(PiError::NoGuard)?, n));
            }
            PiProcess::Rec { var, param, init, body } => {
                if n >= MAX_UNFOLD {
                    return Err(PiError::Unguarded(var));
                }
                let v = eval_in(&init, &Vars::new(), &VirtualState::new())?;
                let unfolded = body.subst_call(&var, &param, &body).subst(&param, &PiVal::Val(v));
                work.push((unfolded, n + 1));
            }
            PiProcess::Send { chan: chan @ PiChan::Cell(_), label, value, bind, cont } => {
                let value = match value_of(&value) {
                    Ok(v) => PiTerm::Expr(Expr::Lit(v)),
                    Err(_) => value,
                };
                out.push(PiProcess::Send { chan, label, value, bind, cont });
            }
            other => out.push(other),
        }
    }
    out.sort_by_cached_key(|p| format!("{p:?}"));
    Ok(out)
}

fn cell_send(p: &PiProcess, x: &str) -> Option<Value> {
    match p {
        PiProcess::Send { chan: PiChan::Cell(y), value, cont, .. } if y == x && **cont == PiProcess::Nil => {
            value_of(value).ok()
        }
        _ => None,
    }
}

fn plain_recv(p: &PiProcess) -> Option<(&PiChan, &PiBranch)> {
    match p {
        PiProcess::Recv { chan, branches } if branches.len() == 1 && branches[0].label.is_none() => {
            Some((chan, &branches[0]))
        }
        _ => None,
    }
}

/// Silent successors: a cell read meets the cell.
fn tau_steps(c: &[PiProcess]) -> Result<Vec<Vec<PiProcess>>, PiError> {
    let mut out = Vec::new();
    for (i, p) in c.iter().enumerate() {
        let Some((PiChan::Cell(x), b)) = plain_recv(p) else { continue };
        for (j, q) in c.iter().enumerate() {
            if i == j {
                continue;
            }
            if let Some(v) = cell_send(q, x) {
                let mut next: Vec<PiProcess> = c
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != i && *k != j)
                    .map(|(_, r)| r.clone())
                    .collect();
                next.push(b.cont.subst(&b.var, &PiVal::Val(v)));
                out.push(normalize(next)?);
            }
        }
    }
    out.sort_by_cached_key(|c| format!("{c:?}"));
    out.dedup();
    Ok(out)
}

/// τ-normal forms reachable from `c`.
pub fn stable_states(c: &[PiProcess], cap: usize) -> Result<Vec<Vec<PiProcess>>, PiError> {
    let mut seen: HashSet<Vec<PiProcess>> = HashSet::new();
    let mut stack = vec![c.to_vec()];
    let mut out = Vec::new();
    while let Some(s) = stack.pop() {
        if !seen.insert(s.clone()) {
            continue;
        }
        if seen.len() > cap {
            return Err(PiError::TauBudget(cap));
        }
        let next = tau_steps(&s)?;
        if next.is_empty() {
            out.push(s);
        } else {
            stack.extend(next);
        }
    }
    out.sort_by_cached_key(|c| format!("{c:?}"));
    Ok(out)
}

fn session_names(c: &[PiProcess]) -> BTreeSet<String> {
    c.iter().flat_map(|p| p.free_names()).collect()
}

/// Visible steps of a τ-normal configuration; the flag marks updater
/// activations.
pub fn pi_step(c: &[PiProcess], lts: &LtsOpts) -> Result<Vec<(PiAction, Vec<PiProcess>, bool)>, PiError> {
    let mut out = Vec::new();
    let without = |i: usize| -> Vec<PiProcess> {
        c.iter().enumerate().filter(|(k, _)| *k != i).map(|(_, r)| r.clone()).collect()
    };
    for (i, p) in c.iter().enumerate() {
        match p {
            PiProcess::Send { chan: PiChan::Cell(x), value, .. } => {
                out.push((PiAction::Cell { var: x.clone(), value: value_of(value)? }, c.to_vec(), false));
            }
            PiProcess::Send { chan: PiChan::Session(k), label, value, bind, cont } => {
                let v = value_of(value)?;
                let cont = match bind {
                    Some(b) => cont.subst(b, &PiVal::Val(v)),
                    None => (**cont).clone(),
                };
                let mut next = without(i);
                next.push(cont);
                out.push((
                    PiAction::Out { chan: k.clone(), label: label.clone(), value: v },
                    normalize(next)?,
                    false,
                ));
            }
            PiProcess::Send { chan: PiChan::Update(x), value, cont, .. } => {
                let PiTerm::Quote(e) = value else { continue };
                for r in c {
                    let PiProcess::Repl(inner) = r else { continue };
                    let Some((PiChan::Update(y), b)) = plain_recv(inner) else { continue };
                    if y != x {
                        continue;
                    }
                    let mut rest: Vec<PiProcess> = without(i);
                    rest.push((**cont).clone());
                    let mut upd = b.cont.subst(&b.var, &PiVal::Quote(e.clone()));
                    while let Some((PiChan::Cell(z), rb)) = plain_recv(&upd) {
                        let Some(k) = rest.iter().position(|q| cell_send(q, z).is_some()) else { break };
                        let v = cell_send(&rest[k], z).expect("cell");
                        rest.remove(k);
                        upd = rb.cont.subst(&rb.var, &PiVal::Val(v));
                    }
                    rest.push(upd);
                    out.push((PiAction::Update { var: x.clone(), expr: e.clone() }, normalize(rest)?, true));
                }
            }
            PiProcess::Skip(cont) => {
                let mut next = without(i);
                next.push((**cont).clone());
                out.push((PiAction::Skip, normalize(next)?, false));
            }
            PiProcess::Recv { chan: PiChan::Session(k), branches } => {
                for b in branches {
                    for v in lts.input_domain(b.ty) {
                        let mut next = without(i);
                        next.push(b.cont.subst(&b.var, &PiVal::Val(v)));
                        out.push((
                            PiAction::In { chan: k.clone(), label: b.label.clone(), value: v },
                            normalize(next)?,
                            false,
                        ));
                    }
                }
            }
            PiProcess::Init { shared, role, var, cont, .. } => {
                let s = fresh_name(var, &session_names(c));
                let mut next = without(i);
                next.push(cont.rename_session(var, &s));
                out.push((
                    PiAction::Accept { shared: shared.clone(), at: SessionRole::new(s, role.clone()) },
                    normalize(next)?,
                    false,
                ));
            }
            _ => {}
        }
    }
    Ok(out)
}

/// `P |= phi` for an encoded system `P`.
pub fn pi_sat(p: &PiProcess, phi: &PiFormula, opts: &PiOpts) -> Result<PiSatResult, PiError> {
    let mut ck = PiChecker {
        opts: *opts,
        lts: LtsOpts { bound: opts.bound },
        assumed: HashSet::new(),
        obligations: 0,
        trace: Vec::new(),
    };
    let start = normalize(vec![p.clone()])?;
    let verdict = ck.check(&start, phi, &mut Vec::new(), 0, 0)?;
    Ok(PiSatResult {
        verdict,
        trace: ck.trace,
        obligations_checked: ck.obligations,
    })
}

struct PiChecker {
    opts: PiOpts,
    lts: LtsOpts,
    assumed: HashSet<(Vec<PiProcess>, PiFormula)>,
    obligations: usize,
    trace: Vec<PiAction>,
}

fn fails(reason: String) -> Verdict {
    Verdict::Fails { trace: Vec::new(), reason }
}

impl PiChecker {
    fn check(
        &mut self,
        c: &[PiProcess],
        phi: &PiFormula,
        sessions: &mut Vec<String>,
        unfolds: usize,
        updates: usize,
    ) -> Result<Verdict, PiError> {
        self.obligations += 1;
        match phi {
            PiFormula::True => Ok(Verdict::Holds),
            PiFormula::Pred(a) => Ok(if holds(a, &VirtualState::new(), &Vars::new())? {
                Verdict::Holds
            } else {
                fails(format!("predicate `{}` is false", print_expr(a)))
            }),
            PiFormula::Var(x) => Err(PiError::FreeMuVar(x.clone())),
            PiFormula::And(a, b) => {
                let va = self.check(c, a, sessions, unfolds, updates)?;
                if va.fails() {
                    return Ok(va);
                }
                let vb = self.check(c, b, sessions, unfolds, updates)?;
                Ok(match (va, vb) {
                    (_, f @ Verdict::Fails { .. }) => f,
                    (Verdict::Holds, Verdict::Holds) => Verdict::Holds,
                    _ => Verdict::Inconclusive,
                })
            }
            PiFormula::Implies(a, b) => {
                if holds(a, &VirtualState::new(), &Vars::new())? {
                    self.check(c, b, sessions, unfolds, updates)
                } else {
                    Ok(Verdict::Holds)
                }
            }
            PiFormula::Forall(x, Sort::Session, body) => {
                sessions.push(x.clone());
                let v = self.check(c, body, sessions, unfolds, updates);
                sessions.pop();
                v
            }
            PiFormula::Forall(x, sort, body) => {
                let values: Vec<Value> = match &**body {
                    PiFormula::Must(PiPat::Cell { var, arg: Expr::Var(y) }, _) if y == x => {
                        self.cell_values(c, var)?
                    }
                    _ => self.opts.bound.domain(*sort),
                };
                let mut acc = Verdict::Holds;
                for v in values {
                    let inst = body.subst_var(x, &Expr::Lit(v));
                    match self.check(c, &inst, sessions, unfolds, updates)? {
                        Verdict::Holds => {}
                        Verdict::Fails { trace, reason } => {
                            return Ok(Verdict::Fails { trace, reason: format!("{reason} (with {x} = {v})") })
                        }
                        Verdict::Inconclusive => acc = Verdict::Inconclusive,
                    }
                }
                Ok(acc)
            }
            PiFormula::Mu(x, body) => {
                let key = (c.to_vec(), phi.clone());
                if self.assumed.contains(&key) {
                    return Ok(Verdict::Holds);
                }
                if unfolds >= self.opts.mu_depth {
                    return Ok(Verdict::Inconclusive);
                }
                let unfolded = body.subst_mu(x, phi);
                self.assumed.insert(key.clone());
                let v = self.check(c, &unfolded, sessions, unfolds + 1, updates);
                self.assumed.remove(&key);
                v
            }
            PiFormula::Must(pat, body) => {
                let mut acc = Verdict::Holds;
                for s in stable_states(c, self.opts.tau_cap)? {
                    for (a, next, activates) in pi_step(&s, &self.lts)? {
                        let Some(rename) = self.matches(pat, &a, sessions)? else { continue };
                        if activates && updates >= self.opts.repl_depth {
                            acc = Verdict::Inconclusive;
                            continue;
                        }
                        let u2 = updates + usize::from(activates);
                        let v = match rename {
                            Some((from, to)) => {
                                let pos = sessions.iter().rposition(|s| *s == from);
                                if let Some(i) = pos {
                                    sessions.remove(i);
                                }
                                let v = self.check(&next, &body.rename_session(&from, &to), sessions, unfolds, u2);
                                if let Some(i) = pos {
                                    sessions.insert(i, from);
                                }
                                v?
                            }
                            None => self.check(&next, body, sessions, unfolds, u2)?,
                        };
                        match v {
                            Verdict::Holds => {}
                            Verdict::Fails { reason, .. } => {
                                self.trace.insert(0, a.clone());
                                return Ok(fails(reason));
                            }
                            Verdict::Inconclusive => acc = Verdict::Inconclusive,
                        }
                    }
                }
                Ok(acc)
            }
        }
    }

    fn cell_values(&self, c: &[PiProcess], var: &str) -> Result<Vec<Value>, PiError> {
        let mut vals = BTreeSet::new();
        for s in stable_states(c, self.opts.tau_cap)? {
            vals.extend(s.iter().filter_map(|p| cell_send(p, var)));
        }
        Ok(vals.into_iter().collect())
    }

    fn matches(&self, pat: &PiPat, a: &PiAction, sessions: &[String]) -> Result<Option<Option<(String, String)>>, PiError> {
        let lit = |e: &Expr| -> Result<Value, PiError> {
            match e {
                Expr::Lit(v) => Ok(*v),
                other => Err(PiError::Pattern(print_expr(other))),
            }
        };
        let label_ok = |want: &Option<String>, got: &Option<String>| want.is_none() || want == got;
        Ok(match (pat, a) {
            (PiPat::SessionOut { chan, label, arg }, PiAction::Out { chan: c2, label: l2, value })
            | (PiPat::SessionIn { chan, label, arg }, PiAction::In { chan: c2, label: l2, value }) => {
                (chan == c2 && label_ok(label, l2) && lit(arg)? == *value).then_some(None)
            }
            (PiPat::Cell { var, arg }, PiAction::Cell { var: v2, value }) => {
                (var == v2 && lit(arg)? == *value).then_some(None)
            }
            (PiPat::Update { var, expr }, PiAction::Update { var: v2, expr: e2 }) => {
                (var == v2 && expr == e2).then_some(None)
            }
            (PiPat::Skip, PiAction::Skip) => Some(None),
            (PiPat::Accept { shared, session, role }, PiAction::Accept { shared: sh2, at }) => {
                if shared != sh2 || *role != at.role {
                    None
                } else if sessions.contains(session) {
                    Some(Some((session.clone(), at.session.clone())))
                } else if *session == at.session {
                    Some(None)
                } else {
                    None
                }
            }
            _ => None,
        })
    }
}

/// The encoded system `<<P>> | <<sigma>>`.
pub fn system(p: &PiProcess, store: &PiProcess) -> PiProcess {
    par(vec![p.clone(), store.clone()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{parse_formula, parse_process, parse_state};
    use crate::lts::Config;
    use crate::pure::{encode_formula, encode_process, encode_store};
    use crate::satisfaction::{sat, SatOpts};

    fn both(p: &str, st: &str, f: &str) -> (Verdict, Verdict) {
        let p = parse_process(p).unwrap();
        let sigma = parse_state(st).unwrap();
        let phi = parse_formula(f).unwrap();
        let v1 = sat(&Config::new(p.clone(), sigma.clone()), &phi, &SatOpts::new(8, 6)).unwrap().verdict;
        let store: BTreeSet<String> = sigma.0.keys().cloned().collect();
        let sys = system(&encode_process(&p), &encode_store(&sigma));
        let v2 = pi_sat(&sys, &encode_formula(&phi, &store).unwrap(), &PiOpts::new(8, 6, 4)).unwrap().verdict;
        (v1, v2)
    }

    #[test]
    fn store_reads_and_updates() {
        let sys = encode_store(&parse_state("@x = 5").unwrap());
        let f = encode_formula(&parse_formula("{@x == 5}").unwrap(), &BTreeSet::from(["x".into()])).unwrap();
        assert!(pi_sat(&sys, &f, &PiOpts::default()).unwrap().verdict.holds());
        let g = encode_formula(&parse_formula("{@x == 4}").unwrap(), &BTreeSet::from(["x".into()])).unwrap();
        assert!(pi_sat(&sys, &g, &PiOpts::default()).unwrap().verdict.fails());
    }

    #[test]
    fn agrees_with_direct_semantics() {
        let p = "s[S,C]!{ true :: l<@x>(y)<@x++>. s[S,C]!{ @x > 5 :: m<@x>(z)<skip>. 0; @x <= 5 :: n<0>(z)<skip>. 0 } }";
        for (f, expect) in [
            ("forall y:Nat. [s[S,C]!(y)][<@x++>]{@x == y + 1}", true),
            ("forall y:Nat. [s[S,C]!(y)][<@x++>]{@x == y}", false),
            ("forall y:Nat. [s[S,C]!(y)][<@x++>] forall z:Nat. [s[S,C]!m(z)][<skip>]{z > 5}", true),
            ("forall y:Nat. [s[S,C]!(y)](true /\\ [<skip>]{false})", true),
            ("forall y:Nat. [s[S,C]!(y)][<@x++>] forall z:Nat. [s[S,C]!n(z)][<skip>] true", true),
        ] {
            for st in ["@x = 3", "@x = 5"] {
                let (v1, v2) = both(p, st, f);
                assert_eq!(v1.name(), v2.name(), "{f} at {st}");
                if st == "@x = 5" {
                    assert_eq!(v1.holds(), expect, "{f}");
                }
            }
        }
    }

    #[test]
    fn inputs_and_recursion() {
        let p = "mu X(n := 0). s[q,p]?{ l(y)<@x := y>. s[q,p]!{ true :: m<@x>(z)<@x := 0>. X<n> } }";
        let f = "mu A. forall y:Nat. [s[q,p]?l(y)][<@x := y>] forall z:Nat. [s[q,p]!m(z)][<@x := 0>]({z == y} /\\ A)";
        let (v1, v2) = both(p, "@x = 0", f);
        assert!(v1.holds());
        assert_eq!(v1, v2);
    }

    #[test]
    fn accept_renames() {
        let (v1, v2) = both(
            "acc a[2](s). s[2,1]!{ true :: l<1>(y)<skip>. 0 }",
            "@x = 0",
            "forall k:Session. [a(k[2])] forall y:Nat. [k[2,1]!l(y)][<skip>]{y == 1}",
        );
        assert!(v1.holds());
        assert_eq!(v1, v2);
    }

    #[test]
    fn repl_depth_bounds_updates() {
        let p = parse_process("mu X(n := 0). s[p,q]!{ true :: l<0>(y)<@x++>. X<n> }").unwrap();
        let sigma = parse_state("@x = 0").unwrap();
        let phi = parse_formula("mu A. forall y:Int. [s[p,q]!(y)][<@x++>] A").unwrap();
        let sys = system(&encode_process(&p), &encode_store(&sigma));
        let f = encode_formula(&phi, &BTreeSet::from(["x".into()])).unwrap();
        let v = pi_sat(&sys, &f, &PiOpts::new(8, 20, 2)).unwrap().verdict;
        assert_eq!(v, Verdict::Inconclusive);
    }
}

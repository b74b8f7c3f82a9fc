//! Embedding into pure HML over a value-passing π-calculus: the virtual
//! state becomes a process of store cells and replicated updaters, update
//! modalities become outputs to those updaters, and predicates read the
//! cells through value-capture modalities.

mod sat;
mod syntax;

pub use sat::{pi_sat, pi_step, stable_states, system, PiAction, PiError, PiOpts, PiSatResult};
pub use syntax::{
    parse_pi_formula, parse_pi_process, print_pi_formula, print_pi_pat, print_pi_process, PiParseError,
};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{
    fresh_name, infer_binder_ty, ActPat, Chan, Expr, Formula, Process, Sort, Ty, Update, Value,
    VirtualState,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PureError {
    #[error("state variable @{0} is not in the store domain")]
    UnknownState(String),
    #[error("pattern `{0}` has no pure counterpart")]
    Pattern(String),
}

/// Channels of the encoding.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PiChan {
    Session(Chan),
    /// `a_x`, holding the content of `@x`.
    Cell(String),
    /// `x`, on which updates of `@x` are sent.
    Update(String),
}

/// Terms carried by outputs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PiTerm {
    Expr(Expr),
    /// An update expression sent as data.
    Quote(Expr),
    /// `eval(e[y1..yn/x1..xn])`: `slot` is the variable holding the quoted
    /// expression (or the expression itself once received).
    Eval { slot: Slot, subst: Vec<(String, Expr)> },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Slot {
    Var(String),
    Quoted(Expr),
}

/// Values exchanged at run time.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PiVal {
    Val(Value),
    Quote(Expr),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PiBranch {
    pub label: Option<String>,
    pub var: String,
    pub ty: Option<Ty>,
    pub cont: PiProcess,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PiProcess {
    Nil,
    /// Output; `bind` names the sent value in the continuation.
    Send {
        chan: PiChan,
        label: Option<String>,
        value: PiTerm,
        bind: Option<String>,
        cont: Box<PiProcess>,
    },
    Recv { chan: PiChan, branches: Vec<PiBranch> },
    Par(Vec<PiProcess>),
    Repl(Box<PiProcess>),
    /// Exactly one guard must hold; evaluated silently.
    Cond(Vec<(Expr, PiProcess)>),
    Init {
        shared: String,
        role: String,
        request: Option<u32>,
        var: String,
        cont: Box<PiProcess>,
    },
    Rec { var: String, param: String, init: Expr, body: Box<PiProcess> },
    Call { var: String, arg: Expr },
    /// Visible `skip` step standing for the empty update.
    Skip(Box<PiProcess>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PiPat {
    SessionOut { chan: Chan, label: Option<String>, arg: Expr },
    SessionIn { chan: Chan, label: Option<String>, arg: Expr },
    Accept { shared: String, session: String, role: String },
    /// Observation of the cell of `@var`.
    Cell { var: String, arg: Expr },
    /// The update message `var<e>`.
    Update { var: String, expr: Expr },
    Skip,
    Label(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PiFormula {
    True,
    Pred(Expr),
    And(Box<PiFormula>, Box<PiFormula>),
    Implies(Expr, Box<PiFormula>),
    Must(PiPat, Box<PiFormula>),
    Forall(String, Sort, Box<PiFormula>),
    Mu(String, Box<PiFormula>),
    Var(String),
}

pub fn cell(x: &str) -> String {
    format!("a_{x}")
}

fn capture_names(vars: &[String]) -> Vec<String> {
    if vars.len() == 1 {
        vec!["y".to_string()]
    } else {
        (1..=vars.len()).map(|i| format!("y{i}")).collect()
    }
}

fn send(chan: PiChan, value: PiTerm, cont: PiProcess) -> PiProcess {
    PiProcess::Send {
        chan,
        label: None,
        value,
        bind: None,
        cont: Box::new(cont),
    }
}

fn recv(chan: PiChan, var: &str, cont: PiProcess) -> PiProcess {
    PiProcess::Recv {
        chan,
        branches: vec![PiBranch {
            label: None,
            var: var.to_string(),
            ty: None,
            cont,
        }],
    }
}

/// Parallel composition, flattening nested compositions and dropping `0`.
pub fn par(items: Vec<PiProcess>) -> PiProcess {
    let mut out = Vec::new();
    for p in items {
        match p {
            PiProcess::Nil => {}
            PiProcess::Par(ps) => out.extend(ps),
            other => out.push(other),
        }
    }
    match out.len() {
        0 => PiProcess::Nil,
        1 => out.pop().expect("one item"),
        _ => PiProcess::Par(out),
    }
}

/// Store cells and one replicated updater per variable; variables are
/// taken in ascending order.
pub fn encode_store(sigma: &VirtualState) -> PiProcess {
    let vars: Vec<String> = sigma.0.keys().cloned().collect();
    let ys = capture_names(&vars);
    let mut items: Vec<PiProcess> = sigma
        .0
        .iter()
        .map(|(x, v)| send(PiChan::Cell(x.clone()), PiTerm::Expr(Expr::Lit(*v)), PiProcess::Nil))
        .collect();
    for (i, x) in vars.iter().enumerate() {
        let outs: Vec<PiProcess> = vars
            .iter()
            .enumerate()
            .map(|(j, z)| {
                let value = if i == j {
                    PiTerm::Eval {
                        slot: Slot::Var("e".into()),
                        subst: vars.iter().cloned().zip(ys.iter().map(|y| Expr::var(y.clone()))).collect(),
                    }
                } else {
                    PiTerm::Expr(Expr::var(ys[j].clone()))
                };
                send(PiChan::Cell(z.clone()), value, PiProcess::Nil)
            })
            .collect();
        let mut body = par(outs);
        for (z, y) in vars.iter().zip(&ys).rev() {
            body = recv(PiChan::Cell(z.clone()), y, body);
        }
        items.push(PiProcess::Repl(Box::new(recv(PiChan::Update(x.clone()), "e", body))));
    }
    par(items)
}

fn update_chain(u: &Update, cont: PiProcess) -> PiProcess {
    if u.is_skip() {
        return PiProcess::Skip(Box::new(cont));
    }
    let mut p = cont;
    for a in u.normalized().0.iter().rev() {
        p = send(PiChan::Update(a.var.clone()), PiTerm::Quote(a.expr.clone()), p);
    }
    p
}

/// Reads the cells of `vars` (ascending), re-emits them, and continues
/// with `k` applied to the substitution from state variables to captures.
fn with_reads(vars: &BTreeSet<String>, avoid: &BTreeSet<String>, k: impl FnOnce(&dyn Fn(&Expr) -> Expr) -> PiProcess) -> PiProcess {
    if vars.is_empty() {
        return k(&|e: &Expr| e.clone());
    }
    let vs: Vec<String> = vars.iter().cloned().collect();
    let mut taken = avoid.clone();
    let ys: Vec<String> = vs
        .iter()
        .map(|x| {
            let y = fresh_name(&format!("y_{x}"), &taken);
            taken.insert(y.clone());
            y
        })
        .collect();
    let map: BTreeMap<String, String> = vs.iter().cloned().zip(ys.iter().cloned()).collect();
    let subst = move |e: &Expr| e.subst_state(&|z| map.get(z).map(|y| Expr::var(y.clone())));
    let mut items: Vec<PiProcess> = vs
        .iter()
        .zip(&ys)
        .map(|(x, y)| send(PiChan::Cell(x.clone()), PiTerm::Expr(Expr::var(y.clone())), PiProcess::Nil))
        .collect();
    items.push(k(&subst));
    let mut p = par(items);
    for (x, y) in vs.iter().zip(&ys).rev() {
        p = recv(PiChan::Cell(x.clone()), y, p);
    }
    p
}

fn bound_names(p: &Process, out: &mut BTreeSet<String>) {
    match p {
        Process::Inact | Process::RecCall { .. } => {}
        Process::Request { var, body, .. } | Process::Accept { var, body, .. } => {
            out.insert(var.clone());
            bound_names(body, out);
        }
        Process::Select { branches, .. } => {
            for b in branches {
                out.insert(b.var.clone());
                bound_names(&b.cont, out);
            }
        }
        Process::Branch { branches, .. } => {
            for b in branches {
                out.insert(b.var.clone());
                bound_names(&b.cont, out);
            }
        }
        Process::Par(l, r) => {
            bound_names(l, out);
            bound_names(r, out);
        }
        Process::RecDef { param, body, .. } => {
            out.insert(param.clone());
            bound_names(body, out);
        }
    }
}

/// `<<P>>`: session prefixes are kept, every update becomes outputs to the
/// updaters, and guards, payloads and recursion arguments read the cells.
pub fn encode_process(p: &Process) -> PiProcess {
    encode_process_with(p, &BTreeMap::new())
}

/// As [`encode_process`], with state types for inferring input binders.
pub fn encode_process_with(p: &Process, tys: &BTreeMap<String, Ty>) -> PiProcess {
    let mut avoid = BTreeSet::new();
    bound_names(p, &mut avoid);
    Enc { avoid, tys }.go(p)
}

struct Enc<'a> {
    avoid: BTreeSet<String>,
    tys: &'a BTreeMap<String, Ty>,
}

impl Enc<'_> {
fn go(&self, p: &Process) -> PiProcess {
    let avoid = &self.avoid;
    let tys = self.tys;
    match p {
        Process::Inact => PiProcess::Nil,
        Process::Select { chan, branches } => {
            let mut reads = BTreeSet::new();
            for b in branches {
                reads.extend(b.guard.state_vars());
                reads.extend(b.payload.state_vars());
            }
            with_reads(&reads, avoid, |s| {
                PiProcess::Cond(
                    branches
                        .iter()
                        .map(|b| {
                            (
                                s(&b.guard),
                                PiProcess::Send {
                                    chan: PiChan::Session(chan.clone()),
                                    label: Some(b.label.clone()),
                                    value: PiTerm::Expr(s(&b.payload)),
                                    bind: Some(b.var.clone()),
                                    cont: Box::new(update_chain(&b.update, self.go(&b.cont))),
                                },
                            )
                        })
                        .collect(),
                )
            })
        }
        Process::Branch { chan, branches } => PiProcess::Recv {
            chan: PiChan::Session(chan.clone()),
            branches: branches
                .iter()
                .map(|b| PiBranch {
                    label: Some(b.label.clone()),
                    var: b.var.clone(),
                    ty: infer_binder_ty(&b.var, &b.update, &b.cont, tys),
                    cont: update_chain(&b.update, self.go(&b.cont)),
                })
                .collect(),
        },
        Process::Par(l, r) => par(vec![self.go(l), self.go(r)]),
        Process::Request { shared, arity, var, body } => PiProcess::Init {
            shared: shared.clone(),
            role: "1".into(),
            request: Some(*arity),
            var: var.clone(),
            cont: Box::new(self.go(body)),
        },
        Process::Accept { shared, role, var, body } => PiProcess::Init {
            shared: shared.clone(),
            role: role.to_string(),
            request: None,
            var: var.clone(),
            cont: Box::new(self.go(body)),
        },
        Process::RecDef { var, param, init, body } => with_reads(&init.state_vars(), avoid, |s| PiProcess::Rec {
            var: var.clone(),
            param: param.clone(),
            init: s(init),
            body: Box::new(self.go(body)),
        }),
        Process::RecCall { var, arg } => with_reads(&arg.state_vars(), avoid, |s| PiProcess::Call {
            var: var.clone(),
            arg: s(arg),
        }),
    }
}
}

/// `<<phi>>` over a store with the given variables.
pub fn encode_formula(phi: &Formula, store: &BTreeSet<String>) -> Result<PiFormula, PureError> {
    let mut avoid = phi.free_vars();
    collect_binders(phi, &mut avoid);
    encf(phi, store, &mut avoid)
}

fn collect_binders(f: &Formula, out: &mut BTreeSet<String>) {
    match f {
        Formula::Forall(x, _, g) => {
            out.insert(x.clone());
            collect_binders(g, out);
        }
        Formula::And(a, b) | Formula::Implies(a, b) => {
            collect_binders(a, out);
            collect_binders(b, out);
        }
        Formula::Must(_, g) | Formula::Mu(_, g) => collect_binders(g, out),
        _ => {}
    }
}

/// `[a_x1(v1)]...[a_xn(vn)] k(A[v/x])` with the captures quantified.
fn captures(
    a: &Expr,
    store: &BTreeSet<String>,
    avoid: &mut BTreeSet<String>,
    k: impl FnOnce(Expr) -> PiFormula,
) -> Result<PiFormula, PureError> {
    let vars = a.state_vars();
    if let Some(x) = vars.iter().find(|x| !store.contains(*x)) {
        return Err(PureError::UnknownState(x.clone()));
    }
    let mut map = BTreeMap::new();
    for x in &vars {
        let v = fresh_name("v", avoid);
        avoid.insert(v.clone());
        map.insert(x.clone(), v);
    }
    let inst = a.subst_state(&|z| map.get(z).map(|v| Expr::var(v.clone())));
    let mut f = k(inst);
    for (x, v) in map.iter().rev() {
        f = PiFormula::Forall(
            v.clone(),
            Sort::Int,
            Box::new(PiFormula::Must(
                PiPat::Cell {
                    var: x.clone(),
                    arg: Expr::var(v.clone()),
                },
                Box::new(f),
            )),
        );
    }
    Ok(f)
}

fn encf(phi: &Formula, store: &BTreeSet<String>, avoid: &mut BTreeSet<String>) -> Result<PiFormula, PureError> {
    Ok(match phi {
        Formula::True => PiFormula::True,
        Formula::Var(x) => PiFormula::Var(x.clone()),
        Formula::Pred(a) => captures(a, store, avoid, PiFormula::Pred)?,
        Formula::And(a, b) => PiFormula::And(Box::new(encf(a, store, avoid)?), Box::new(encf(b, store, avoid)?)),
        Formula::Implies(a, b) => {
            let rest = encf(b, store, avoid)?;
            captures(&a.as_pred(), store, avoid, |h| PiFormula::Implies(h, Box::new(rest)))?
        }
        Formula::Forall(x, s, g) => PiFormula::Forall(x.clone(), *s, Box::new(encf(g, store, avoid)?)),
        Formula::Mu(x, g) => PiFormula::Mu(x.clone(), Box::new(encf(g, store, avoid)?)),
        Formula::Must(ActPat::Update(u), g) => {
            let mut f = encf(g, store, avoid)?;
            if u.is_skip() {
                return Ok(PiFormula::Must(PiPat::Skip, Box::new(f)));
            }
            for a in u.normalized().0.iter().rev() {
                if !store.contains(&a.var) {
                    return Err(PureError::UnknownState(a.var.clone()));
                }
                f = PiFormula::Must(
                    PiPat::Update {
                        var: a.var.clone(),
                        expr: a.expr.clone(),
                    },
                    Box::new(f),
                );
            }
            f
        }
        Formula::Must(pat, g) => {
            let p = match pat {
                ActPat::Output { chan, label, arg } => PiPat::SessionOut {
                    chan: chan.clone(),
                    label: label.clone(),
                    arg: arg.clone(),
                },
                ActPat::Input { chan, label, arg } => PiPat::SessionIn {
                    chan: chan.clone(),
                    label: label.clone(),
                    arg: arg.clone(),
                },
                ActPat::Accept { shared, session, role } => PiPat::Accept {
                    shared: shared.clone(),
                    session: session.clone(),
                    role: role.clone(),
                },
                ActPat::Label(l) => PiPat::Label(l.clone()),
                ActPat::Update(_) => unreachable!("handled above"),
            };
            PiFormula::Must(p, Box::new(encf(g, store, avoid)?))
        }
    })
}

impl PiFormula {
    pub fn subst_var(&self, x: &str, by: &Expr) -> PiFormula {
        let pat = |p: &PiPat| -> PiPat {
            match p {
                PiPat::SessionOut { chan, label, arg } => PiPat::SessionOut {
                    chan: chan.clone(),
                    label: label.clone(),
                    arg: arg.subst_var(x, by),
                },
                PiPat::SessionIn { chan, label, arg } => PiPat::SessionIn {
                    chan: chan.clone(),
                    label: label.clone(),
                    arg: arg.subst_var(x, by),
                },
                PiPat::Cell { var, arg } => PiPat::Cell {
                    var: var.clone(),
                    arg: arg.subst_var(x, by),
                },
                PiPat::Update { var, expr } => PiPat::Update {
                    var: var.clone(),
                    expr: expr.subst_var(x, by),
                },
                other => other.clone(),
            }
        };
        match self {
            PiFormula::True | PiFormula::Var(_) => self.clone(),
            PiFormula::Pred(e) => PiFormula::Pred(e.subst_var(x, by)),
            PiFormula::And(a, b) => PiFormula::And(Box::new(a.subst_var(x, by)), Box::new(b.subst_var(x, by))),
            PiFormula::Implies(a, b) => PiFormula::Implies(a.subst_var(x, by), Box::new(b.subst_var(x, by))),
            PiFormula::Must(p, g) => PiFormula::Must(pat(p), Box::new(g.subst_var(x, by))),
            PiFormula::Forall(y, _, _) if y == x => self.clone(),
            PiFormula::Forall(y, s, g) => PiFormula::Forall(y.clone(), *s, Box::new(g.subst_var(x, by))),
            PiFormula::Mu(t, g) => PiFormula::Mu(t.clone(), Box::new(g.subst_var(x, by))),
        }
    }

    pub fn subst_mu(&self, t: &str, by: &PiFormula) -> PiFormula {
        match self {
            PiFormula::Var(y) if y == t => by.clone(),
            PiFormula::True | PiFormula::Var(_) | PiFormula::Pred(_) => self.clone(),
            PiFormula::And(a, b) => PiFormula::And(Box::new(a.subst_mu(t, by)), Box::new(b.subst_mu(t, by))),
            PiFormula::Implies(a, b) => PiFormula::Implies(a.clone(), Box::new(b.subst_mu(t, by))),
            PiFormula::Must(p, g) => PiFormula::Must(p.clone(), Box::new(g.subst_mu(t, by))),
            PiFormula::Forall(y, s, g) => PiFormula::Forall(y.clone(), *s, Box::new(g.subst_mu(t, by))),
            PiFormula::Mu(y, _) if y == t => self.clone(),
            PiFormula::Mu(y, g) => PiFormula::Mu(y.clone(), Box::new(g.subst_mu(t, by))),
        }
    }

    pub fn rename_session(&self, from: &str, to: &str) -> PiFormula {
        let ch = |c: &Chan| -> Chan {
            if c.session == from {
                Chan::new(to, c.from.clone(), c.to.clone())
            } else {
                c.clone()
            }
        };
        match self {
            PiFormula::Must(p, g) => {
                let p2 = match p {
                    PiPat::SessionOut { chan, label, arg } => PiPat::SessionOut {
                        chan: ch(chan),
                        label: label.clone(),
                        arg: arg.clone(),
                    },
                    PiPat::SessionIn { chan, label, arg } => PiPat::SessionIn {
                        chan: ch(chan),
                        label: label.clone(),
                        arg: arg.clone(),
                    },
                    PiPat::Accept { shared, session, role } if session == from => PiPat::Accept {
                        shared: shared.clone(),
                        session: to.to_string(),
                        role: role.clone(),
                    },
                    other => other.clone(),
                };
                PiFormula::Must(p2, Box::new(g.rename_session(from, to)))
            }
            PiFormula::And(a, b) => PiFormula::And(Box::new(a.rename_session(from, to)), Box::new(b.rename_session(from, to))),
            PiFormula::Implies(a, b) => PiFormula::Implies(a.clone(), Box::new(b.rename_session(from, to))),
            PiFormula::Forall(y, Sort::Session, _) if y == from => self.clone(),
            PiFormula::Forall(y, s, g) => PiFormula::Forall(y.clone(), *s, Box::new(g.rename_session(from, to))),
            PiFormula::Mu(y, g) => PiFormula::Mu(y.clone(), Box::new(g.rename_session(from, to))),
            other => other.clone(),
        }
    }
}

impl PiProcess {
    /// Substitutes a received value for `x`, respecting binders.
    pub fn subst(&self, x: &str, v: &PiVal) -> PiProcess {
        let ex = |e: &Expr| -> Expr {
            match v {
                PiVal::Val(val) => e.subst_var(x, &Expr::Lit(*val)),
                PiVal::Quote(_) => e.clone(),
            }
        };
        let term = |t: &PiTerm| -> PiTerm {
            match t {
                PiTerm::Expr(e) => PiTerm::Expr(ex(e)),
                PiTerm::Quote(e) => PiTerm::Quote(ex(e)),
                PiTerm::Eval { slot, subst } => PiTerm::Eval {
                    slot: match (slot, v) {
                        (Slot::Var(y), PiVal::Quote(q)) if y == x => Slot::Quoted(q.clone()),
                        _ => slot.clone(),
                    },
                    subst: subst.iter().map(|(z, e)| (z.clone(), ex(e))).collect(),
                },
            }
        };
        match self {
            PiProcess::Nil => PiProcess::Nil,
            PiProcess::Send { chan, label, value, bind, cont } => PiProcess::Send {
                chan: chan.clone(),
                label: label.clone(),
                value: term(value),
                bind: bind.clone(),
                cont: if bind.as_deref() == Some(x) {
                    cont.clone()
                } else {
                    Box::new(cont.subst(x, v))
                },
            },
            PiProcess::Recv { chan, branches } => PiProcess::Recv {
                chan: chan.clone(),
                branches: branches
                    .iter()
                    .map(|b| PiBranch {
                        cont: if b.var == x { b.cont.clone() } else { b.cont.subst(x, v) },
                        ..b.clone()
                    })
                    .collect(),
            },
            PiProcess::Par(ps) => PiProcess::Par(ps.iter().map(|p| p.subst(x, v)).collect()),
            PiProcess::Repl(p) => PiProcess::Repl(Box::new(p.subst(x, v))),
            PiProcess::Cond(bs) => PiProcess::Cond(bs.iter().map(|(g, p)| (ex(g), p.subst(x, v))).collect()),
            PiProcess::Init { shared, role, request, var, cont } => PiProcess::Init {
                shared: shared.clone(),
                role: role.clone(),
                request: *request,
                var: var.clone(),
                cont: Box::new(cont.subst(x, v)),
            },
            PiProcess::Rec { var, param, init, body } => PiProcess::Rec {
                var: var.clone(),
                param: param.clone(),
                init: ex(init),
                body: if param == x { body.clone() } else { Box::new(body.subst(x, v)) },
            },
            PiProcess::Call { var, arg } => PiProcess::Call {
                var: var.clone(),
                arg: ex(arg),
            },
            PiProcess::Skip(p) => PiProcess::Skip(Box::new(p.subst(x, v))),
        }
    }

    /// Replaces `X<e>` by `mu X(param := e). body`.
    pub fn subst_call(&self, x: &str, param: &str, body: &PiProcess) -> PiProcess {
        let go = |p: &PiProcess| p.subst_call(x, param, body);
        match self {
            PiProcess::Call { var, arg } if var == x => PiProcess::Rec {
                var: x.to_string(),
                param: param.to_string(),
                init: arg.clone(),
                body: Box::new(body.clone()),
            },
            PiProcess::Nil | PiProcess::Call { .. } => self.clone(),
            PiProcess::Send { chan, label, value, bind, cont } => PiProcess::Send {
                chan: chan.clone(),
                label: label.clone(),
                value: value.clone(),
                bind: bind.clone(),
                cont: Box::new(go(cont)),
            },
            PiProcess::Recv { chan, branches } => PiProcess::Recv {
                chan: chan.clone(),
                branches: branches
                    .iter()
                    .map(|b| PiBranch {
                        cont: go(&b.cont),
                        ..b.clone()
                    })
                    .collect(),
            },
            PiProcess::Par(ps) => PiProcess::Par(ps.iter().map(go).collect()),
            PiProcess::Repl(p) => PiProcess::Repl(Box::new(go(p))),
            PiProcess::Cond(bs) => PiProcess::Cond(bs.iter().map(|(g, p)| (g.clone(), go(p))).collect()),
            PiProcess::Init { shared, role, request, var, cont } => PiProcess::Init {
                shared: shared.clone(),
                role: role.clone(),
                request: *request,
                var: var.clone(),
                cont: Box::new(go(cont)),
            },
            PiProcess::Skip(p) => PiProcess::Skip(Box::new(go(p))),
            PiProcess::Rec { var, .. } if var == x => self.clone(),
            PiProcess::Rec { var, param: p2, init, body: b2 } => PiProcess::Rec {
                var: var.clone(),
                param: p2.clone(),
                init: init.clone(),
                body: Box::new(go(b2)),
            },
        }
    }

    pub fn rename_session(&self, from: &str, to: &str) -> PiProcess {
        let ch = |c: &PiChan| -> PiChan {
            match c {
                PiChan::Session(k) if k.session == from => PiChan::Session(Chan::new(to, k.from.clone(), k.to.clone())),
                other => other.clone(),
            }
        };
        let go = |p: &PiProcess| p.rename_session(from, to);
        match self {
            PiProcess::Nil | PiProcess::Call { .. } => self.clone(),
            PiProcess::Send { chan, label, value, bind, cont } => PiProcess::Send {
                chan: ch(chan),
                label: label.clone(),
                value: value.clone(),
                bind: bind.clone(),
                cont: Box::new(go(cont)),
            },
            PiProcess::Recv { chan, branches } => PiProcess::Recv {
                chan: ch(chan),
                branches: branches
                    .iter()
                    .map(|b| PiBranch {
                        cont: go(&b.cont),
                        ..b.clone()
                    })
                    .collect(),
            },
            PiProcess::Par(ps) => PiProcess::Par(ps.iter().map(go).collect()),
            PiProcess::Repl(p) => PiProcess::Repl(Box::new(go(p))),
            PiProcess::Skip(p) => PiProcess::Skip(Box::new(go(p))),
            PiProcess::Cond(bs) => PiProcess::Cond(bs.iter().map(|(g, p)| (g.clone(), go(p))).collect()),
            PiProcess::Init { var, .. } if var == from => self.clone(),
            PiProcess::Init { shared, role, request, var, cont } => PiProcess::Init {
                shared: shared.clone(),
                role: role.clone(),
                request: *request,
                var: var.clone(),
                cont: Box::new(go(cont)),
            },
            PiProcess::Rec { var, param, init, body } => PiProcess::Rec {
                var: var.clone(),
                param: param.clone(),
                init: init.clone(),
                body: Box::new(go(body)),
            },
        }
    }

    pub fn free_names(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.names_into(&mut out);
        out
    }

    fn names_into(&self, out: &mut BTreeSet<String>) {
        match self {
            PiProcess::Nil | PiProcess::Call { .. } => {}
            PiProcess::Send { chan, cont, .. } => {
                if let PiChan::Session(c) = chan {
                    out.insert(c.session.clone());
                }
                cont.names_into(out);
            }
            PiProcess::Recv { chan, branches } => {
                if let PiChan::Session(c) = chan {
                    out.insert(c.session.clone());
                }
                for b in branches {
                    b.cont.names_into(out);
                }
            }
            PiProcess::Par(ps) => ps.iter().for_each(|p| p.names_into(out)),
            PiProcess::Repl(p) | PiProcess::Skip(p) => p.names_into(out),
            PiProcess::Cond(bs) => bs.iter().for_each(|(_, p)| p.names_into(out)),
            PiProcess::Init { shared, var, cont, .. } => {
                let mut inner = BTreeSet::new();
                cont.names_into(&mut inner);
                inner.remove(var);
                out.extend(inner);
                out.insert(shared.clone());
            }
            PiProcess::Rec { body, .. } => body.names_into(out),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{parse_formula, parse_process, parse_state};

    #[test]
    fn store_n1_display() {
        let p = encode_store(&parse_state("@x = 5").unwrap());
        assert_eq!(print_pi_process(&p), "a\u{304}_x⟨5⟩ | !x(e).a_x(y).a\u{304}_x⟨eval(e[y/x])⟩");
        assert_eq!(encode_store(&VirtualState::new()), PiProcess::Nil);
    }

    #[test]
    fn store_n2() {
        let p = encode_store(&parse_state("@x = 1, @z = 2").unwrap());
        assert_eq!(
            print_pi_process(&p),
            "a\u{304}_x⟨1⟩ | a\u{304}_z⟨2⟩ | !x(e).a_x(y1).a_z(y2).(a\u{304}_x⟨eval(e[y1,y2/x,z])⟩ | a\u{304}_z⟨y2⟩) | !z(e).a_x(y1).a_z(y2).(a\u{304}_x⟨y1⟩ | a\u{304}_z⟨eval(e[y1,y2/x,z])⟩)"
        );
    }

    #[test]
    fn formula_encoding() {
        let store = BTreeSet::from(["x".to_string()]);
        assert_eq!(encode_formula(&Formula::True, &store).unwrap(), PiFormula::True);
        let f = encode_formula(&parse_formula("{y == @x}").unwrap(), &store).unwrap();
        assert_eq!(print_pi_formula(&f), "forall v:Int. [a\u{304}_x⟨v⟩] {y == v}");
        let g = encode_formula(&parse_formula("[<@x++>] true").unwrap(), &store).unwrap();
        assert_eq!(print_pi_formula(&g), "[x̄⟨@x + 1⟩] true");
        assert_eq!(
            encode_formula(&parse_formula("{@z > 0}").unwrap(), &store),
            Err(PureError::UnknownState("z".into()))
        );
    }

    #[test]
    fn process_encoding() {
        assert_eq!(encode_process(&Process::Inact), PiProcess::Nil);
        let p = parse_process("s[S,C]!{ true :: l<@x>(y)<@x++>. 0 }").unwrap();
        assert_eq!(
            print_pi_process(&encode_process(&p)),
            "a_x(y_x).(a\u{304}_x⟨y_x⟩ | cond{(true) -> s̄[S,C]⟨l:y_x⟩(y).x̄⟨@x + 1⟩})"
        );
    }
}

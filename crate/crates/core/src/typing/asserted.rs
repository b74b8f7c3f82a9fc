//! Asserted proof checking `C; Gamma |- P |> Delta`.
//!
//! The rules are applied to the embedding of `Delta` and `Gamma`: a
//! selection packet is discharged by showing its predicate for the sent
//! value under the current hypotheses, a branching packet adds its
//! predicate as a hypothesis, update modalities advance a symbolic store,
//! and recursion is closed when the process, store and assertion recur on
//! the current path. Values exchanged on channels stay symbolic and range
//! over the bounded domain of their sort; validity of the side conditions
//! is decided by bounded enumeration.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{erase_env, erase_gamma, typecheck_unasserted, TypingError};
use crate::kernel::{
    infer_binder_ty, print_expr, print_formula, print_update, ActPat, BinOp, Chan, Env, Expr,
    Formula, FreeNames, LocalAssertion, Process, SessionRole, Sort, SortBound, Ty, Update, Value,
    fresh_name,
};
use crate::predicates::{eval_in, valid_bounded, Domains, Validity, Vars, DEFAULT_VALIDITY_CAP};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProveOpts {
    pub sort_bound: SortBound,
    pub mu_depth: usize,
    /// Initial values ranged over for each state variable.
    pub state_domains: BTreeMap<String, Vec<Value>>,
    pub cap: u128,
}

impl Default for ProveOpts {
    fn default() -> Self {
        ProveOpts {
            sort_bound: SortBound::default(),
            mu_depth: 8,
            state_domains: BTreeMap::new(),
            cap: DEFAULT_VALIDITY_CAP,
        }
    }
}

impl ProveOpts {
    pub fn new(sort_bound: i64, mu_depth: usize) -> ProveOpts {
        ProveOpts {
            sort_bound: SortBound(sort_bound),
            mu_depth,
            ..ProveOpts::default()
        }
    }

    pub fn with_state(mut self, x: impl Into<String>, dom: Vec<Value>) -> ProveOpts {
        self.state_domains.insert(x.into(), dom);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Derivation {
    pub accepted: bool,
    pub reason: Option<String>,
    pub obligations: usize,
    pub trace: String,
}

pub fn prove_asserted(env: &Env, p: &Process, opts: &ProveOpts) -> Result<Derivation, TypingError> {
    let state_tys: BTreeMap<String, Ty> = opts
        .state_domains
        .iter()
        .map(|(k, d)| (k.clone(), d.first().map_or(Ty::Num, |v| v.ty())))
        .collect();
    let un = typecheck_unasserted(p, &erase_env(&env.delta), &erase_gamma(&env.gamma), &state_tys);
    if !un.ok {
        return Ok(Derivation {
            accepted: false,
            reason: Some("erasure is not typable".into()),
            obligations: 0,
            trace: un.trace,
        });
    }
    let mut pr = Prover {
        opts,
        state_tys,
        syms: BTreeMap::new(),
        defs: Vec::new(),
        memo: HashMap::new(),
        trace: Vec::new(),
        depth: 0,
        obligations: 0,
        reason: None,
        assumed: Vec::new(),
    };
    let mut ok = true;
    for (at, l) in &env.delta {
        pr.note(format!("[Rec-side] {at}"));
        ok = ok && pr.rec_conditions(l, &mut Vec::new(), &mut Vec::new())?;
    }
    for table in env.gamma.values() {
        for l in table.values() {
            ok = ok && pr.rec_conditions(l, &mut Vec::new(), &mut Vec::new())?;
        }
    }
    if ok {
        let phi = crate::shuffle::env_formula(&env.delta, &env.gamma)?;
        let store = opts
            .state_domains
            .keys()
            .map(|k| (k.clone(), Expr::state(k.clone())))
            .collect();
        let goal = Goal {
            process: p.clone(),
            store,
            pending: None,
            pc: if env.precondition.is_true() {
                Vec::new()
            } else {
                vec![env.precondition.clone()]
            },
            sessions: Vec::new(),
            unfolds: 0,
        };
        pr.note(format!("[Pre] {}", print_expr(&env.precondition)));
        ok = pr.prove(&phi, &goal)?;
    }
    Ok(Derivation {
        accepted: ok,
        reason: pr.reason,
        obligations: pr.obligations,
        trace: pr.trace.join("\n"),
    })
}

#[derive(Debug, Clone)]
struct Goal {
    process: Process,
    store: BTreeMap<String, Expr>,
    pending: Option<Update>,
    pc: Vec<Expr>,
    sessions: Vec<String>,
    unfolds: usize,
}

type Key = (Process, BTreeMap<String, Expr>, Option<Update>, Formula);

enum Act {
    Output { chan: Chan, label: String, value: Expr, var: String },
    Input { chan: Chan, label: String, var: String, ty: Option<Ty> },
    Accept { shared: String, at: SessionRole },
    Update(Update),
}

struct Step {
    guard: Option<Expr>,
    act: Act,
    next: Process,
    pending: Option<Update>,
}

struct Prover<'a> {
    opts: &'a ProveOpts,
    state_tys: BTreeMap<String, Ty>,
    syms: BTreeMap<String, Vec<Value>>,
    defs: Vec<Expr>,
    memo: HashMap<Expr, String>,
    trace: Vec<String>,
    depth: usize,
    obligations: usize,
    reason: Option<String>,
    assumed: Vec<Key>,
}

fn at_store(e: &Expr, store: &BTreeMap<String, Expr>) -> Expr {
    fold(&e.subst_state(&|z| store.get(z).cloned()))
}

/// Constant folding of closed subterms.
fn fold(e: &Expr) -> Expr {
    let e = match e {
        Expr::Unary(op, a) => Expr::Unary(*op, Box::new(fold(a))),
        Expr::Binary(op, a, b) => Expr::Binary(*op, Box::new(fold(a)), Box::new(fold(b))),
        other => return other.clone(),
    };
    if e.free_vars().is_empty() && e.state_vars().is_empty() {
        if let Ok(v) = eval_in(&e, &Vars::new(), &Default::default()) {
            return Expr::Lit(v);
        }
    }
    e
}

fn is_sym(x: &str) -> bool {
    x.contains('#')
}

/// Condition under which two update labels coincide once every symbol is
/// replaced by its value; `None` when they never do.
fn unify(a: &Expr, b: &Expr) -> Option<Expr> {
    match (a, b) {
        (Expr::Var(x), Expr::Var(y)) if x == y => Some(Expr::bool(true)),
        (Expr::Var(_), Expr::Var(_)) | (Expr::Var(_), Expr::Lit(_)) | (Expr::Lit(_), Expr::Var(_)) => {
            Some(Expr::eq(a.clone(), b.clone()))
        }
        (Expr::Lit(x), Expr::Lit(y)) => (x == y).then(|| Expr::bool(true)),
        (Expr::State(x), Expr::State(y)) => (x == y).then(|| Expr::bool(true)),
        (Expr::Unary(o1, x), Expr::Unary(o2, y)) if o1 == o2 => unify(x, y),
        (Expr::Binary(o1, x1, y1), Expr::Binary(o2, x2, y2)) if o1 == o2 => {
            Some(Expr::and(unify(x1, x2)?, unify(y1, y2)?))
        }
        _ => None,
    }
}

fn unify_updates(a: &Update, b: &Update) -> Option<Expr> {
    let (a, b) = (a.normalized(), b.normalized());
    if a.0.len() != b.0.len() {
        return None;
    }
    let mut c = Expr::bool(true);
    for (x, y) in a.0.iter().zip(&b.0) {
        if x.var != y.var {
            return None;
        }
        c = Expr::and(c, unify(&x.expr, &y.expr)?);
    }
    Some(c)
}

fn exactly_one(gs: &[Expr]) -> Expr {
    let mut some = Expr::bool(false);
    for g in gs {
        some = Expr::bin(BinOp::Or, some, g.clone());
    }
    let mut c = some;
    for i in 0..gs.len() {
        for j in i + 1..gs.len() {
            c = Expr::and(c, Expr::not(Expr::and(gs[i].clone(), gs[j].clone())));
        }
    }
    c
}

fn vars_of(e: &Expr) -> BTreeSet<String> {
    let mut s = e.free_vars();
    s.extend(e.state_vars().into_iter().map(|x| format!("@{x}")));
    s
}

impl Prover<'_> {
    fn note(&mut self, line: String) {
        self.trace.push(format!("{}{line}", "  ".repeat(self.depth)));
    }

    fn reject(&mut self, why: String) -> bool {
        self.note(format!("x {why}"));
        if self.reason.is_none() {
            self.reason = Some(why);
        }
        false
    }

    fn fresh(&mut self, base: &str, dom: Vec<Value>) -> String {
        let base = base.split('#').next().unwrap_or(base);
        let name = format!("{base}#{}", self.syms.len());
        self.syms.insert(name.clone(), dom);
        name
    }

    /// `pc => concl`, restricted to the hypotheses connected to `seed`.
    fn query(&mut self, pc: &[Expr], extra: &[Expr], concl: &Expr) -> Result<Validity, TypingError> {
        self.obligations += 1;
        let mut pool: Vec<&Expr> = pc.iter().chain(&self.defs).chain(extra).collect();
        let mut seen = vars_of(concl);
        for e in extra {
            seen.extend(vars_of(e));
        }
        let mut hyps: Vec<Expr> = Vec::new();
        loop {
            let before = hyps.len();
            pool.retain(|h| {
                let vs = vars_of(h);
                if vs.is_empty() || !vs.is_disjoint(&seen) {
                    seen.extend(vs);
                    hyps.push((*h).clone());
                    false
                } else {
                    true
                }
            });
            if hyps.len() == before {
                break;
            }
        }
        let mut doms = Domains::new();
        doms.cap = self.opts.cap;
        for x in &seen {
            if let Some(z) = x.strip_prefix('@') {
                let d = self.opts.state_domains.get(z).cloned().unwrap_or_default();
                doms = doms.state_var(z, d);
            } else if let Some(d) = self.syms.get(x) {
                doms = doms.var(x.clone(), d.clone());
            }
        }
        Ok(valid_bounded(&Expr::conj(hyps), concl, &doms)?)
    }

    fn infeasible(&mut self, pc: &[Expr], extra: &[Expr]) -> Result<bool, TypingError> {
        Ok(self.query(pc, extra, &Expr::bool(false))?.is_valid())
    }

    /// The term standing for the value of `e`: literals and symbols are used
    /// as they are, anything else gets a defining symbol.
    fn value_term(&mut self, e: &Expr) -> Result<Expr, TypingError> {
        match e {
            Expr::Lit(_) => return Ok(e.clone()),
            Expr::Var(x) if is_sym(x) => return Ok(e.clone()),
            _ => {}
        }
        if let Some(s) = self.memo.get(e) {
            return Ok(Expr::var(s.clone()));
        }
        let dom = self.value_set(e)?;
        let s = self.fresh("r", dom);
        self.defs.push(Expr::eq(Expr::var(s.clone()), e.clone()));
        self.memo.insert(e.clone(), s.clone());
        Ok(Expr::var(s))
    }

    fn value_set(&self, e: &Expr) -> Result<Vec<Value>, TypingError> {
        let axes: Vec<(String, Vec<Value>)> = vars_of(e)
            .into_iter()
            .map(|x| {
                let d = match x.strip_prefix('@') {
                    Some(z) => self.opts.state_domains.get(z).cloned().unwrap_or_default(),
                    None => self.syms.get(&x).cloned().unwrap_or_default(),
                };
                (x, d)
            })
            .collect();
        let mut out = BTreeSet::new();
        let mut idx = vec![0usize; axes.len()];
        if axes.iter().any(|(_, d)| d.is_empty()) {
            return Ok(Vec::new());
        }
        loop {
            let mut vars = Vars::new();
            let mut st = crate::kernel::VirtualState::new();
            for (k, (x, d)) in axes.iter().enumerate() {
                match x.strip_prefix('@') {
                    Some(z) => {
                        st.0.insert(z.to_string(), d[idx[k]]);
                    }
                    None => {
                        vars.insert(x.clone(), d[idx[k]]);
                    }
                }
            }
            if let Ok(v) = eval_in(e, &vars, &st) {
                out.insert(v);
            }
            let mut k = 0;
            loop {
                if k == axes.len() {
                    return Ok(out.into_iter().collect());
                }
                idx[k] += 1;
                if idx[k] < axes[k].1.len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    fn prove(&mut self, phi: &Formula, g: &Goal) -> Result<bool, TypingError> {
        self.depth += 1;
        let r = self.prove_inner(phi, g);
        self.depth -= 1;
        r
    }

    fn prove_inner(&mut self, phi: &Formula, g: &Goal) -> Result<bool, TypingError> {
        match phi {
            Formula::True => Ok(true),
            Formula::Pred(a) => {
                let concl = at_store(a, &g.store);
                match self.query(&g.pc, &[], &concl)? {
                    Validity::Valid => {
                        self.note(format!("[Assert] {} holds", print_expr(&concl)));
                        Ok(true)
                    }
                    Validity::Invalid(w) => {
                        let w: Vec<String> = w.iter().map(|(k, v)| format!("{k}={v}")).collect();
                        Ok(self.reject(format!("`{}` not derivable (witness {})", print_expr(&concl), w.join(", "))))
                    }
                }
            }
            Formula::Implies(a, b) => {
                let hyp = at_store(&Formula::as_pred(a), &g.store);
                self.note(format!("[Assume] {}", print_expr(&hyp)));
                if self.infeasible(&g.pc, std::slice::from_ref(&hyp))? {
                    self.note("[Vacuous]".into());
                    return Ok(true);
                }
                let mut g2 = g.clone();
                g2.pc.push(hyp);
                self.prove(b, &g2)
            }
            Formula::And(a, b) => Ok(self.prove(a, g)? && self.prove(b, g)?),
            Formula::Forall(x, Sort::Session, body) => {
                let mut g2 = g.clone();
                g2.sessions.push(x.clone());
                self.prove(body, &g2)
            }
            Formula::Forall(x, sort, body) => {
                let s = self.fresh(x, self.opts.sort_bound.domain(*sort));
                self.prove(&body.subst_var(x, &Expr::var(s)), g)
            }
            Formula::Mu(x, body) => {
                let key: Key = (g.process.clone(), g.store.clone(), g.pending.clone(), phi.clone());
                if self.assumed.contains(&key) {
                    self.note(format!("[Rec] {x} closed by hypothesis"));
                    return Ok(true);
                }
                if g.unfolds >= self.opts.mu_depth {
                    return Ok(self.reject(format!("recursion {x} not closed within {} unfoldings", self.opts.mu_depth)));
                }
                self.note(format!("[Rec] {x}"));
                self.assumed.push(key);
                let mut g2 = g.clone();
                g2.unfolds += 1;
                let r = self.prove(&body.subst_mu(x, phi), &g2);
                self.assumed.pop();
                r
            }
            Formula::Var(x) => Ok(self.reject(format!("free recursion variable {x}"))),
            Formula::Must(pat, body) => self.must(pat, body, g),
        }
    }

    fn must(&mut self, pat: &ActPat, body: &Formula, g: &Goal) -> Result<bool, TypingError> {
        let Some(steps) = self.steps(g)? else {
            return Ok(false);
        };
        for st in steps {
            let mut g2 = g.clone();
            g2.pending = st.pending.clone();
            let mut body2 = body.clone();
            let mut conds: Vec<Expr> = st.guard.iter().cloned().collect();
            let label_ok = |want: &Option<String>, got: &str| want.as_deref().is_none_or(|w| w == got);
            match (pat, &st.act) {
                (ActPat::Output { chan, label, arg }, Act::Output { chan: c2, label: l2, value, var })
                    if chan == c2 && label_ok(label, l2) =>
                {
                    let Some(term) = self.pattern_term(arg) else {
                        return Ok(self.reject(format!("pattern argument `{}` is not a value", print_expr(arg))));
                    };
                    conds.push(Expr::eq(term.clone(), value.clone()));
                    g2.process = st.next.subst_var(var, &term);
                    g2.pending = st.pending.as_ref().map(|u| u.subst_var(var, &term));
                    self.note(format!("[Select] {c2}!{l2}({}) = {}", print_expr(&term), print_expr(value)));
                }
                (ActPat::Input { chan, label, arg }, Act::Input { chan: c2, label: l2, var, ty })
                    if chan == c2 && label_ok(label, l2) =>
                {
                    let Some(term) = self.pattern_term(arg) else {
                        return Ok(self.reject(format!("pattern argument `{}` is not a value", print_expr(arg))));
                    };
                    if !self.offered(&term, *ty) {
                        continue;
                    }
                    g2.process = st.next.subst_var(var, &term);
                    g2.pending = st.pending.as_ref().map(|u| u.subst_var(var, &term));
                    self.note(format!("[Branch] {c2}?{l2}({})", print_expr(&term)));
                }
                (ActPat::Update(e), Act::Update(u)) => {
                    let Some(c) = unify_updates(e, u) else {
                        self.note(format!("[Update] <{}> does not match <{}>", print_update(u), print_update(e)));
                        continue;
                    };
                    conds.push(c);
                    let mut store = g.store.clone();
                    for a in &u.0 {
                        if !store.contains_key(&a.var) {
                            return Ok(self.reject(format!("update of undeclared state variable @{}", a.var)));
                        }
                        store.insert(a.var.clone(), at_store(&a.expr, &g.store));
                    }
                    g2.store = store;
                    g2.process = st.next.clone();
                    self.note(format!("[Update] <{}>", print_update(u)));
                }
                (ActPat::Accept { shared, session, role }, Act::Accept { shared: sh2, at }) => {
                    if shared != sh2 || *role != at.role {
                        continue;
                    }
                    if let Some(i) = g.sessions.iter().rposition(|s| s == session) {
                        g2.sessions.remove(i);
                        body2 = body.rename_session(session, &at.session);
                    } else if *session != at.session {
                        continue;
                    }
                    g2.process = st.next.clone();
                    self.note(format!("[Init] {sh2}({at})"));
                }
                _ => continue,
            }
            conds.retain(|c| !c.is_true());
            if self.infeasible(&g.pc, &conds)? {
                self.note("[Vacuous]".into());
                continue;
            }
            g2.pc.extend(conds);
            if !self.prove(&body2, &g2)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn pattern_term(&self, arg: &Expr) -> Option<Expr> {
        match arg {
            Expr::Lit(_) => Some(arg.clone()),
            Expr::Var(x) if is_sym(x) => Some(arg.clone()),
            _ => None,
        }
    }

    fn offered(&self, term: &Expr, ty: Option<Ty>) -> bool {
        let b = self.opts.sort_bound.0.max(1);
        let num_ok = |n: i64| -(b / 2) <= n && n < b;
        let vals: Vec<Value> = match term {
            Expr::Lit(v) => vec![*v],
            Expr::Var(x) => self.syms.get(x).cloned().unwrap_or_default(),
            _ => Vec::new(),
        };
        vals.iter().any(|v| match (v, ty) {
            (Value::Int(n), Some(Ty::Num) | None) => num_ok(*n),
            (Value::Bool(_), Some(Ty::Bool) | None) => true,
            _ => false,
        })
    }

    /// Symbolic successors; `None` after a rejection.
    fn steps(&mut self, g: &Goal) -> Result<Option<Vec<Step>>, TypingError> {
        if let Some(u) = &g.pending {
            return Ok(Some(vec![Step {
                guard: None,
                act: Act::Update(u.clone()),
                next: g.process.clone(),
                pending: None,
            }]));
        }
        let avoid = g.process.free_names();
        let mut out = Vec::new();
        let ok = self.proc_steps(&g.process, g, &avoid, 0, &mut |s| out.push(s))?;
        Ok(ok.then_some(out))
    }

    fn proc_steps(
        &mut self,
        p: &Process,
        g: &Goal,
        avoid: &BTreeSet<String>,
        unfolds: usize,
        emit: &mut dyn FnMut(Step),
    ) -> Result<bool, TypingError> {
        match p {
            Process::Inact | Process::RecCall { .. } => Ok(true),
            Process::Request { shared, var, body, .. } => {
                emit(accept_step(shared, "1", var, body, avoid));
                Ok(true)
            }
            Process::Accept { shared, role, var, body } => {
                emit(accept_step(shared, &role.to_string(), var, body, avoid));
                Ok(true)
            }
            Process::Select { chan, branches } => {
                let guards: Vec<Expr> = branches.iter().map(|b| at_store(&b.guard, &g.store)).collect();
                if !self.query(&g.pc, &[], &exactly_one(&guards))?.is_valid() {
                    return Ok(self.reject(format!("guards of {chan} are not exhaustive and exclusive")));
                }
                for (b, gd) in branches.iter().zip(guards) {
                    emit(Step {
                        guard: Some(gd),
                        act: Act::Output {
                            chan: chan.clone(),
                            label: b.label.clone(),
                            value: at_store(&b.payload, &g.store),
                            var: b.var.clone(),
                        },
                        next: b.cont.clone(),
                        pending: Some(b.update.clone()),
                    });
                }
                Ok(true)
            }
            Process::Branch { chan, branches } => {
                for b in branches {
                    let ty = infer_binder_ty(&b.var, &b.update, &b.cont, &self.state_tys);
                    emit(Step {
                        guard: None,
                        act: Act::Input {
                            chan: chan.clone(),
                            label: b.label.clone(),
                            var: b.var.clone(),
                            ty,
                        },
                        next: b.cont.clone(),
                        pending: Some(b.update.clone()),
                    });
                }
                Ok(true)
            }
            Process::Par(l, r) => {
                let ok = self.proc_steps(l, g, avoid, unfolds, &mut |s| {
                    emit(Step {
                        next: Process::par(s.next, (**r).clone()),
                        ..s
                    })
                })?;
                if !ok {
                    return Ok(false);
                }
                self.proc_steps(r, g, avoid, unfolds, &mut |s| {
                    emit(Step {
                        next: Process::par((**l).clone(), s.next),
                        ..s
                    })
                })
            }
            Process::RecDef { var, param, init, body } => {
                if unfolds >= 64 {
                    return Ok(self.reject(format!("unguarded recursion {var}")));
                }
                let v = self.value_term(&at_store(init, &g.store))?;
                let unfolded = body.subst_call(var, param, body).subst_var(param, &v);
                self.proc_steps(&unfolded, g, avoid, unfolds + 1, emit)
            }
        }
    }

    /// Side conditions of asserted recursion: the initialisation entails the
    /// invariant, and so does every recursive call's argument predicate.
    fn rec_conditions(
        &mut self,
        l: &LocalAssertion,
        scope: &mut Vec<(String, Sort)>,
        recs: &mut Vec<(String, String, Sort, Expr)>,
    ) -> Result<bool, TypingError> {
        match l {
            LocalAssertion::End => Ok(true),
            LocalAssertion::Select { branches, .. } | LocalAssertion::Branch { branches, .. } => {
                for b in branches {
                    scope.push((b.var.clone(), b.sort));
                    let ok = self.rec_conditions(&b.cont, scope, recs)?;
                    scope.pop();
                    if !ok {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            LocalAssertion::Rec { var, param, sort, init_var, init_pred, invariant, body } => {
                let hyp = init_pred.subst_var(init_var, &Expr::var(param.clone()));
                if !self.entails(&hyp, invariant, scope, (param, *sort))? {
                    return Ok(self.reject(format!("initialisation of {var} does not entail its invariant")));
                }
                recs.push((var.clone(), param.clone(), *sort, invariant.clone()));
                scope.push((param.clone(), *sort));
                let ok = self.rec_conditions(body, scope, recs)?;
                scope.pop();
                recs.pop();
                Ok(ok)
            }
            LocalAssertion::RecCall { var, arg_var, arg_pred } => {
                let Some((_, param, sort, inv)) = recs.iter().rev().find(|r| r.0 == *var).cloned() else {
                    return Ok(self.reject(format!("unbound recursion variable {var}")));
                };
                let hyp = arg_pred.subst_var(arg_var, &Expr::var(param.clone()));
                if !self.entails(&hyp, &inv, scope, (&param, sort))? {
                    return Ok(self.reject(format!("argument of {var} does not entail its invariant")));
                }
                Ok(true)
            }
        }
    }

    fn entails(
        &mut self,
        hyp: &Expr,
        concl: &Expr,
        scope: &[(String, Sort)],
        param: (&str, Sort),
    ) -> Result<bool, TypingError> {
        if concl.is_true() {
            return Ok(true);
        }
        self.obligations += 1;
        let mut doms = Domains::new();
        doms.cap = self.opts.cap;
        for (x, s) in scope.iter().chain(std::iter::once(&(param.0.to_string(), param.1))) {
            doms = doms.var(x.clone(), self.opts.sort_bound.domain(*s));
        }
        for (z, d) in &self.opts.state_domains {
            doms = doms.state_var(z.clone(), d.clone());
        }
        Ok(valid_bounded(hyp, concl, &doms)?.is_valid())
    }
}

fn accept_step(shared: &str, role: &str, var: &str, body: &Process, avoid: &BTreeSet<String>) -> Step {
    let s = fresh_name(var, avoid);
    Step {
        guard: None,
        act: Act::Accept {
            shared: shared.to_string(),
            at: SessionRole::new(s.clone(), role),
        },
        next: body.rename_session(var, &s),
        pending: None,
    }
}

impl Formula {
    /// The predicate denoted by a propositional formula.
    pub fn as_pred(&self) -> Expr {
        match self {
            Formula::True => Expr::bool(true),
            Formula::Pred(e) => e.clone(),
            Formula::And(a, b) => Expr::and(a.as_pred(), b.as_pred()),
            other => panic!("not propositional: {}", print_formula(other)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{parse_assertion, parse_process};

    fn opts() -> ProveOpts {
        ProveOpts::new(32, 8).with_state("x", SortBound(32).domain(Sort::Nat))
    }

    fn env(pre: &str, l: &str) -> Env {
        let mut e = Env::new().with_delta(SessionRole::new("s", "S"), parse_assertion(l).unwrap());
        e.precondition = crate::kernel::parse_expr(pre).unwrap();
        e
    }

    const EQ2: &str = "C!{ l(y:Nat){y>10 /\\ y==@x}<@x++>. end }";

    #[test]
    fn trivial() {
        let e = Env::new().with_delta(SessionRole::new("s", "p"), LocalAssertion::End);
        assert!(prove_asserted(&e, &Process::Inact, &opts()).unwrap().accepted);
    }

    #[test]
    fn sender_needs_precondition() {
        let p = parse_process("s[S,C]!{ true :: l<@x>(y)<@x++>. 0 }").unwrap();
        let d = prove_asserted(&env("@x > 10", EQ2), &p, &opts()).unwrap();
        assert!(d.accepted, "{}", d.trace);
        let d = prove_asserted(&env("true", EQ2), &p, &opts()).unwrap();
        assert!(!d.accepted);
        assert!(d.reason.unwrap().contains("@x=0"));
    }

    #[test]
    fn wrong_update_is_vacuous() {
        let p = parse_process("s[S,C]!{ true :: l<@x>(y)<@x := @x + 2>. 0 }").unwrap();
        assert!(prove_asserted(&env("@x > 10", EQ2), &p, &opts()).unwrap().accepted);
    }

    #[test]
    fn branching_assumes() {
        let l = "C?{ l(y:Nat){y > 3}<@x := y>. C!{ m(z:Nat){z > 3}<skip>. end } }";
        let good = parse_process("s[C,S]?{ l(v)<@x := v>. s[S,C]!{ true :: m<@x>(w)<skip>. 0 } }").unwrap();
        let d = prove_asserted(&env("true", l), &good, &opts()).unwrap();
        assert!(d.accepted, "{}", d.trace);
        let bad = parse_process("s[C,S]?{ l(v)<@x := v>. s[S,C]!{ true :: m<@x - 1>(w)<skip>. 0 } }").unwrap();
        assert!(!prove_asserted(&env("true", l), &bad, &opts()).unwrap().accepted);
    }

    #[test]
    fn recursion_closes() {
        let l = "mu t{y: true}(x:Int). C!{ l(z:Nat){z == 1}<skip>. t(y: true) } : true";
        let p = parse_process("mu X(n := 0). s[S,C]!{ true :: l<1>(y)<skip>. X<n> }").unwrap();
        let d = prove_asserted(&env("true", l), &p, &opts()).unwrap();
        assert!(d.accepted, "{}", d.trace);
        let counting = parse_process("mu X(n := 0). s[S,C]!{ true :: l<1>(y)<skip>. X<n + 1> }").unwrap();
        assert!(!prove_asserted(&env("true", l), &counting, &opts()).unwrap().accepted);
    }

    #[test]
    fn erasure_mismatch_rejected() {
        let p = parse_process("s[C,S]?{ l(v)<skip>. 0 }").unwrap();
        let d = prove_asserted(&env("true", EQ2), &p, &opts()).unwrap();
        assert!(!d.accepted);
        assert_eq!(d.reason.as_deref(), Some("erasure is not typable"));
    }
}

//! Free names and substitution.

use std::collections::BTreeSet;

use super::{
    ActPat, AssertBranch, Assign, Chan, Expr, Formula, LocalAssertion, Process, RecvBranch,
    SelectBranch, Update,
};

/// Returns `base` or `base'`, `base''`, ... whichever is first absent from `avoid`.
pub fn fresh_name(base: &str, avoid: &BTreeSet<String>) -> String {
    let mut name = base.to_string();
    while avoid.contains(&name) {
        name.push('\'');
    }
    name
}

/// Free session and shared-channel names.
pub trait FreeNames {
    fn free_names(&self) -> BTreeSet<String>;
}

impl Expr {
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Lit(_) | Expr::State(_) => {}
            Expr::Var(x) => {
                out.insert(x.clone());
            }
            Expr::Unary(_, e) => e.collect_vars(out),
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn state_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_state(&mut out);
        out
    }

    fn collect_state(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Lit(_) | Expr::Var(_) => {}
            Expr::State(x) => {
                out.insert(x.clone());
            }
            Expr::Unary(_, e) => e.collect_state(out),
            Expr::Binary(_, a, b) => {
                a.collect_state(out);
                b.collect_state(out);
            }
        }
    }

    pub fn subst_var(&self, x: &str, by: &Expr) -> Expr {
        self.map_leaves(&|leaf| match leaf {
            Expr::Var(y) if y == x => Some(by.clone()),
            _ => None,
        })
    }

    /// Replaces state variables using `f`; unmapped ones are kept.
    pub fn subst_state(&self, f: &dyn Fn(&str) -> Option<Expr>) -> Expr {
        self.map_leaves(&|leaf| match leaf {
            Expr::State(y) => f(y),
            _ => None,
        })
    }

    pub fn map_leaves(&self, f: &dyn Fn(&Expr) -> Option<Expr>) -> Expr {
        match self {
            Expr::Unary(op, e) => Expr::Unary(*op, Box::new(e.map_leaves(f))),
            Expr::Binary(op, a, b) => {
                Expr::Binary(*op, Box::new(a.map_leaves(f)), Box::new(b.map_leaves(f)))
            }
            leaf => f(leaf).unwrap_or_else(|| leaf.clone()),
        }
    }
}

impl Update {
    pub fn subst_var(&self, x: &str, by: &Expr) -> Update {
        Update(
            self.0
                .iter()
                .map(|a| Assign {
                    var: a.var.clone(),
                    expr: a.expr.subst_var(x, by),
                })
                .collect(),
        )
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        self.0.iter().flat_map(|a| a.expr.free_vars()).collect()
    }

    pub fn state_reads(&self) -> BTreeSet<String> {
        self.0.iter().flat_map(|a| a.expr.state_vars()).collect()
    }
}

impl ActPat {
    pub fn chan(&self) -> Option<&Chan> {
        match self {
            ActPat::Output { chan, .. } | ActPat::Input { chan, .. } => Some(chan),
            _ => None,
        }
    }

    fn free_vars(&self) -> BTreeSet<String> {
        match self {
            ActPat::Output { arg, .. } | ActPat::Input { arg, .. } => arg.free_vars(),
            ActPat::Update(u) => u.free_vars(),
            ActPat::Accept { .. } | ActPat::Label(_) => BTreeSet::new(),
        }
    }

    fn subst_var(&self, x: &str, by: &Expr) -> ActPat {
        match self {
            ActPat::Output { chan, label, arg } => ActPat::Output {
                chan: chan.clone(),
                label: label.clone(),
                arg: arg.subst_var(x, by),
            },
            ActPat::Input { chan, label, arg } => ActPat::Input {
                chan: chan.clone(),
                label: label.clone(),
                arg: arg.subst_var(x, by),
            },
            ActPat::Update(u) => ActPat::Update(u.subst_var(x, by)),
            other => other.clone(),
        }
    }

    fn rename_session(&self, from: &str, to: &str) -> ActPat {
        let ren = |s: &String| if s == from { to.to_string() } else { s.clone() };
        match self {
            ActPat::Output { chan, label, arg } => ActPat::Output {
                chan: Chan::new(ren(&chan.session), chan.from.clone(), chan.to.clone()),
                label: label.clone(),
                arg: arg.clone(),
            },
            ActPat::Input { chan, label, arg } => ActPat::Input {
                chan: Chan::new(ren(&chan.session), chan.from.clone(), chan.to.clone()),
                label: label.clone(),
                arg: arg.clone(),
            },
            ActPat::Accept {
                shared,
                session,
                role,
            } => ActPat::Accept {
                shared: shared.clone(),
                session: ren(session),
                role: role.clone(),
            },
            other => other.clone(),
        }
    }

    fn names(&self) -> BTreeSet<String> {
        match self {
            ActPat::Output { chan, .. } | ActPat::Input { chan, .. } => {
                BTreeSet::from([chan.session.clone()])
            }
            ActPat::Accept {
                shared, session, ..
            } => BTreeSet::from([shared.clone(), session.clone()]),
            ActPat::Update(_) | ActPat::Label(_) => BTreeSet::new(),
        }
    }
}

impl Formula {
    /// Free message variables (not μ-variables, not session names).
    pub fn free_vars(&self) -> BTreeSet<String> {
        match self {
            Formula::True | Formula::Var(_) => BTreeSet::new(),
            Formula::Pred(e) => e.free_vars(),
            Formula::And(a, b) | Formula::Implies(a, b) => {
                let mut s = a.free_vars();
                s.extend(b.free_vars());
                s
            }
            Formula::Must(a, f) => {
                let mut s = a.free_vars();
                s.extend(f.free_vars());
                s
            }
            Formula::Forall(x, _, f) => {
                let mut s = f.free_vars();
                s.remove(x);
                s
            }
            Formula::Mu(_, f) => f.free_vars(),
        }
    }

    /// Capture-avoiding substitution of a message variable.
    pub fn subst_var(&self, x: &str, by: &Expr) -> Formula {
        match self {
            Formula::True | Formula::Var(_) => self.clone(),
            Formula::Pred(e) => Formula::Pred(e.subst_var(x, by)),
            Formula::And(a, b) => Formula::and(a.subst_var(x, by), b.subst_var(x, by)),
            Formula::Implies(a, b) => Formula::implies(a.subst_var(x, by), b.subst_var(x, by)),
            Formula::Must(a, f) => Formula::must(a.subst_var(x, by), f.subst_var(x, by)),
            Formula::Mu(v, f) => Formula::mu(v.clone(), f.subst_var(x, by)),
            Formula::Forall(y, s, f) => {
                if y == x {
                    return self.clone();
                }
                let by_vars = by.free_vars();
                if by_vars.contains(y) {
                    let mut avoid = by_vars;
                    avoid.extend(f.free_vars());
                    avoid.insert(x.to_string());
                    let y2 = fresh_name(y, &avoid);
                    let body = f.subst_var(y, &Expr::Var(y2.clone()));
                    Formula::forall(y2, *s, body.subst_var(x, by))
                } else {
                    Formula::forall(y.clone(), *s, f.subst_var(x, by))
                }
            }
        }
    }

    /// Renames a free session name (used for `forall s:Session` instantiation).
    pub fn rename_session(&self, from: &str, to: &str) -> Formula {
        match self {
            Formula::True | Formula::Var(_) | Formula::Pred(_) => self.clone(),
            Formula::And(a, b) => Formula::and(a.rename_session(from, to), b.rename_session(from, to)),
            Formula::Implies(a, b) => {
                Formula::implies(a.rename_session(from, to), b.rename_session(from, to))
            }
            Formula::Must(a, f) => Formula::must(a.rename_session(from, to), f.rename_session(from, to)),
            Formula::Mu(v, f) => Formula::mu(v.clone(), f.rename_session(from, to)),
            Formula::Forall(y, s, f) => {
                if *s == crate::kernel::Sort::Session && y == from {
                    self.clone()
                } else {
                    Formula::forall(y.clone(), *s, f.rename_session(from, to))
                }
            }
        }
    }

    /// Replaces free occurrences of the μ-variable `x` by `by`.
    pub fn subst_mu(&self, x: &str, by: &Formula) -> Formula {
        match self {
            Formula::Var(y) if y == x => by.clone(),
            Formula::True | Formula::Var(_) | Formula::Pred(_) => self.clone(),
            Formula::And(a, b) => Formula::and(a.subst_mu(x, by), b.subst_mu(x, by)),
            Formula::Implies(a, b) => Formula::implies(a.subst_mu(x, by), b.subst_mu(x, by)),
            Formula::Must(a, f) => Formula::must(a.clone(), f.subst_mu(x, by)),
            Formula::Forall(y, s, f) => Formula::forall(y.clone(), *s, f.subst_mu(x, by)),
            Formula::Mu(y, f) if y == x => self.clone(),
            Formula::Mu(y, f) => Formula::mu(y.clone(), f.subst_mu(x, by)),
        }
    }

    /// State variables read by predicates or update modalities.
    pub fn state_vars(&self) -> BTreeSet<String> {
        match self {
            Formula::True | Formula::Var(_) => BTreeSet::new(),
            Formula::Pred(e) => e.state_vars(),
            Formula::And(a, b) | Formula::Implies(a, b) => {
                let mut s = a.state_vars();
                s.extend(b.state_vars());
                s
            }
            Formula::Must(a, f) => {
                let mut s = f.state_vars();
                if let ActPat::Update(u) = a {
                    s.extend(u.state_reads());
                    s.extend(u.assigned().map(str::to_string));
                }
                s
            }
            Formula::Forall(_, _, f) | Formula::Mu(_, f) => f.state_vars(),
        }
    }
}

impl FreeNames for Formula {
    fn free_names(&self) -> BTreeSet<String> {
        match self {
            Formula::True | Formula::Var(_) | Formula::Pred(_) => BTreeSet::new(),
            Formula::And(a, b) | Formula::Implies(a, b) => {
                let mut s = a.free_names();
                s.extend(b.free_names());
                s
            }
            Formula::Must(a, f) => {
                let mut s = a.names();
                s.extend(f.free_names());
                s
            }
            Formula::Forall(y, sort, f) => {
                let mut s = f.free_names();
                if *sort == crate::kernel::Sort::Session {
                    s.remove(y);
                }
                s
            }
            Formula::Mu(_, f) => f.free_names(),
        }
    }
}

impl FreeNames for Process {
    fn free_names(&self) -> BTreeSet<String> {
        match self {
            Process::Inact | Process::RecCall { .. } => BTreeSet::new(),
            Process::Request {
                shared, var, body, ..
            }
            | Process::Accept {
                shared, var, body, ..
            } => {
                let mut s = body.free_names();
                s.remove(var);
                s.insert(shared.clone());
                s
            }
            Process::Select { chan, branches } => {
                let mut s = BTreeSet::from([chan.session.clone()]);
                for b in branches {
                    s.extend(b.cont.free_names());
                }
                s
            }
            Process::Branch { chan, branches } => {
                let mut s = BTreeSet::from([chan.session.clone()]);
                for b in branches {
                    s.extend(b.cont.free_names());
                }
                s
            }
            Process::Par(a, b) => {
                let mut s = a.free_names();
                s.extend(b.free_names());
                s
            }
            Process::RecDef { body, .. } => body.free_names(),
        }
    }
}

impl Process {
    /// Renames a free session name in channel prefixes.
    pub fn rename_session(&self, from: &str, to: &str) -> Process {
        let chan = |c: &Chan| {
            if c.session == from {
                Chan::new(to, c.from.clone(), c.to.clone())
            } else {
                c.clone()
            }
        };
        let rec = |p: &Process| p.rename_session(from, to);
        match self {
            Process::Inact | Process::RecCall { .. } => self.clone(),
            Process::Request { var, .. } | Process::Accept { var, .. } if var == from => self.clone(),
            Process::Request {
                shared,
                arity,
                var,
                body,
            } => Process::Request {
                shared: shared.clone(),
                arity: *arity,
                var: var.clone(),
                body: Box::new(rec(body)),
            },
            Process::Accept {
                shared,
                role,
                var,
                body,
            } => Process::Accept {
                shared: shared.clone(),
                role: *role,
                var: var.clone(),
                body: Box::new(rec(body)),
            },
            Process::Select { chan: c, branches } => Process::Select {
                chan: chan(c),
                branches: branches
                    .iter()
                    .map(|b| SelectBranch {
                        cont: rec(&b.cont),
                        ..b.clone()
                    })
                    .collect(),
            },
            Process::Branch { chan: c, branches } => Process::Branch {
                chan: chan(c),
                branches: branches
                    .iter()
                    .map(|b| RecvBranch {
                        cont: rec(&b.cont),
                        ..b.clone()
                    })
                    .collect(),
            },
            Process::Par(a, b) => Process::par(rec(a), rec(b)),
            Process::RecDef {
                var,
                param,
                init,
                body,
            } => Process::RecDef {
                var: var.clone(),
                param: param.clone(),
                init: init.clone(),
                body: Box::new(rec(body)),
            },
        }
    }

    /// Substitutes a message variable, respecting binders.
    pub fn subst_var(&self, x: &str, by: &Expr) -> Process {
        match self {
            Process::Inact => Process::Inact,
            Process::Request {
                shared,
                arity,
                var,
                body,
            } => Process::Request {
                shared: shared.clone(),
                arity: *arity,
                var: var.clone(),
                body: Box::new(body.subst_var(x, by)),
            },
            Process::Accept {
                shared,
                role,
                var,
                body,
            } => Process::Accept {
                shared: shared.clone(),
                role: *role,
                var: var.clone(),
                body: Box::new(body.subst_var(x, by)),
            },
            Process::Select { chan, branches } => Process::Select {
                chan: chan.clone(),
                branches: branches
                    .iter()
                    .map(|b| {
                        let shadow = b.var == x;
                        SelectBranch {
                            guard: b.guard.subst_var(x, by),
                            label: b.label.clone(),
                            payload: b.payload.subst_var(x, by),
                            var: b.var.clone(),
                            update: if shadow {
                                b.update.clone()
                            } else {
                                b.update.subst_var(x, by)
                            },
                            cont: if shadow {
                                b.cont.clone()
                            } else {
                                b.cont.subst_var(x, by)
                            },
                        }
                    })
                    .collect(),
            },
            Process::Branch { chan, branches } => Process::Branch {
                chan: chan.clone(),
                branches: branches
                    .iter()
                    .map(|b| {
                        if b.var == x {
                            b.clone()
                        } else {
                            RecvBranch {
                                label: b.label.clone(),
                                var: b.var.clone(),
                                update: b.update.subst_var(x, by),
                                cont: b.cont.subst_var(x, by),
                            }
                        }
                    })
                    .collect(),
            },
            Process::Par(a, b) => Process::par(a.subst_var(x, by), b.subst_var(x, by)),
            Process::RecDef {
                var,
                param,
                init,
                body,
            } => Process::RecDef {
                var: var.clone(),
                param: param.clone(),
                init: init.subst_var(x, by),
                body: if param == x {
                    body.clone()
                } else {
                    Box::new(body.subst_var(x, by))
                },
            },
            Process::RecCall { var, arg } => Process::RecCall {
                var: var.clone(),
                arg: arg.subst_var(x, by),
            },
        }
    }

    /// Replaces every call `X<e>` by `mu X(param := e). body`.
    pub fn subst_call(&self, x: &str, param: &str, body: &Process) -> Process {
        let rec = |p: &Process| p.subst_call(x, param, body);
        match self {
            Process::Inact => Process::Inact,
            Process::RecCall { var, arg } if var == x => Process::RecDef {
                var: var.clone(),
                param: param.to_string(),
                init: arg.clone(),
                body: Box::new(body.clone()),
            },
            Process::RecCall { .. } => self.clone(),
            Process::Request {
                shared,
                arity,
                var,
                body: b,
            } => Process::Request {
                shared: shared.clone(),
                arity: *arity,
                var: var.clone(),
                body: Box::new(rec(b)),
            },
            Process::Accept {
                shared,
                role,
                var,
                body: b,
            } => Process::Accept {
                shared: shared.clone(),
                role: *role,
                var: var.clone(),
                body: Box::new(rec(b)),
            },
            Process::Select { chan, branches } => Process::Select {
                chan: chan.clone(),
                branches: branches
                    .iter()
                    .map(|b| SelectBranch {
                        cont: rec(&b.cont),
                        ..b.clone()
                    })
                    .collect(),
            },
            Process::Branch { chan, branches } => Process::Branch {
                chan: chan.clone(),
                branches: branches
                    .iter()
                    .map(|b| RecvBranch {
                        cont: rec(&b.cont),
                        ..b.clone()
                    })
                    .collect(),
            },
            Process::Par(a, b) => Process::par(rec(a), rec(b)),
            Process::RecDef { var, .. } if var == x => self.clone(),
            Process::RecDef {
                var,
                param: p,
                init,
                body: b,
            } => Process::RecDef {
                var: var.clone(),
                param: p.clone(),
                init: init.clone(),
                body: Box::new(rec(b)),
            },
        }
    }

    /// State variables read (guards, payloads, update right-hand sides, call arguments).
    pub fn state_reads(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit_exprs(&mut |e| out.extend(e.state_vars()));
        out
    }

    /// State variables assigned by some update.
    pub fn state_writes(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit_updates(&mut |u| out.extend(u.assigned().map(str::to_string)));
        out
    }

    pub fn visit_exprs(&self, f: &mut dyn FnMut(&Expr)) {
        match self {
            Process::Inact => {}
            Process::Request { body, .. } | Process::Accept { body, .. } => body.visit_exprs(f),
            Process::Select { branches, .. } => {
                for b in branches {
                    f(&b.guard);
                    f(&b.payload);
                    for a in &b.update.0 {
                        f(&a.expr);
                    }
                    b.cont.visit_exprs(f);
                }
            }
            Process::Branch { branches, .. } => {
                for b in branches {
                    for a in &b.update.0 {
                        f(&a.expr);
                    }
                    b.cont.visit_exprs(f);
                }
            }
            Process::Par(a, b) => {
                a.visit_exprs(f);
                b.visit_exprs(f);
            }
            Process::RecDef { init, body, .. } => {
                f(init);
                body.visit_exprs(f);
            }
            Process::RecCall { arg, .. } => f(arg),
        }
    }

    pub fn visit_updates(&self, f: &mut dyn FnMut(&Update)) {
        match self {
            Process::Inact | Process::RecCall { .. } => {}
            Process::Request { body, .. } | Process::Accept { body, .. } => body.visit_updates(f),
            Process::Select { branches, .. } => {
                for b in branches {
                    f(&b.update);
                    b.cont.visit_updates(f);
                }
            }
            Process::Branch { branches, .. } => {
                for b in branches {
                    f(&b.update);
                    b.cont.visit_updates(f);
                }
            }
            Process::Par(a, b) => {
                a.visit_updates(f);
                b.visit_updates(f);
            }
            Process::RecDef { body, .. } => body.visit_updates(f),
        }
    }
}

impl LocalAssertion {
    /// Substitutes a message variable, respecting binders.
    pub fn subst_var(&self, x: &str, by: &Expr) -> LocalAssertion {
        let branches = |bs: &Vec<AssertBranch>| {
            bs.iter()
                .map(|b| {
                    if b.var == x {
                        b.clone()
                    } else {
                        AssertBranch {
                            label: b.label.clone(),
                            var: b.var.clone(),
                            sort: b.sort,
                            pred: b.pred.subst_var(x, by),
                            update: b.update.subst_var(x, by),
                            cont: b.cont.subst_var(x, by),
                        }
                    }
                })
                .collect()
        };
        match self {
            LocalAssertion::End => LocalAssertion::End,
            LocalAssertion::Select { partner, branches: bs } => LocalAssertion::Select {
                partner: partner.clone(),
                branches: branches(bs),
            },
            LocalAssertion::Branch { partner, branches: bs } => LocalAssertion::Branch {
                partner: partner.clone(),
                branches: branches(bs),
            },
            LocalAssertion::Rec {
                var,
                param,
                sort,
                init_var,
                init_pred,
                invariant,
                body,
            } => LocalAssertion::Rec {
                var: var.clone(),
                param: param.clone(),
                sort: *sort,
                init_var: init_var.clone(),
                init_pred: if init_var == x {
                    init_pred.clone()
                } else {
                    init_pred.subst_var(x, by)
                },
                invariant: if param == x {
                    invariant.clone()
                } else {
                    invariant.subst_var(x, by)
                },
                body: if param == x {
                    body.clone()
                } else {
                    Box::new(body.subst_var(x, by))
                },
            },
            LocalAssertion::RecCall {
                var,
                arg_var,
                arg_pred,
            } => LocalAssertion::RecCall {
                var: var.clone(),
                arg_var: arg_var.clone(),
                arg_pred: if arg_var == x {
                    arg_pred.clone()
                } else {
                    arg_pred.subst_var(x, by)
                },
            },
        }
    }

    /// Replaces calls of recursion variable `t` by `by` (used for unfolding).
    pub fn subst_rec(&self, t: &str, by: &LocalAssertion) -> LocalAssertion {
        let branches = |bs: &Vec<AssertBranch>| {
            bs.iter()
                .map(|b| AssertBranch {
                    cont: b.cont.subst_rec(t, by),
                    ..b.clone()
                })
                .collect()
        };
        match self {
            LocalAssertion::RecCall { var, .. } if var == t => by.clone(),
            LocalAssertion::End | LocalAssertion::RecCall { .. } => self.clone(),
            LocalAssertion::Select { partner, branches: bs } => LocalAssertion::Select {
                partner: partner.clone(),
                branches: branches(bs),
            },
            LocalAssertion::Branch { partner, branches: bs } => LocalAssertion::Branch {
                partner: partner.clone(),
                branches: branches(bs),
            },
            LocalAssertion::Rec { var, .. } if var == t => self.clone(),
            LocalAssertion::Rec {
                var,
                param,
                sort,
                init_var,
                init_pred,
                invariant,
                body,
            } => LocalAssertion::Rec {
                var: var.clone(),
                param: param.clone(),
                sort: *sort,
                init_var: init_var.clone(),
                init_pred: init_pred.clone(),
                invariant: invariant.clone(),
                body: Box::new(body.subst_rec(t, by)),
            },
        }
    }

    /// State variables mentioned by predicates and updates.
    pub fn state_vars(&self) -> BTreeSet<String> {
        match self {
            LocalAssertion::End => BTreeSet::new(),
            LocalAssertion::RecCall { arg_pred, .. } => arg_pred.state_vars(),
            LocalAssertion::Select { branches, .. } | LocalAssertion::Branch { branches, .. } => {
                let mut s = BTreeSet::new();
                for b in branches {
                    s.extend(b.pred.state_vars());
                    s.extend(b.update.state_reads());
                    s.extend(b.update.assigned().map(str::to_string));
                    s.extend(b.cont.state_vars());
                }
                s
            }
            LocalAssertion::Rec {
                init_pred,
                invariant,
                body,
                ..
            } => {
                let mut s = init_pred.state_vars();
                s.extend(invariant.state_vars());
                s.extend(body.state_vars());
                s
            }
        }
    }
}

//! Erasure to plain session types, the unasserted type checker and the
//! asserted proof checker.

mod asserted;

pub use asserted::{prove_asserted, Derivation, ProveOpts};

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{
    infer_binder_ty, print_expr, Expr, FreeNames, LocalAssertion, Process, SessionRole, Sort,
    SortCtx, Ty,
};
use crate::predicates::EvalError;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypingError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Shuffle(#[from] crate::shuffle::ShuffleError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UBranch {
    pub label: String,
    pub sort: Sort,
    pub cont: UnassertedType,
}

/// Session types without predicates, updates or parameters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnassertedType {
    Select { partner: String, branches: Vec<UBranch> },
    Branch { partner: String, branches: Vec<UBranch> },
    Rec { var: String, body: Box<UnassertedType> },
    Var(String),
    End,
}

pub type UEnv = BTreeMap<SessionRole, UnassertedType>;
pub type UGamma = BTreeMap<String, BTreeMap<String, UnassertedType>>;

pub fn erase(l: &LocalAssertion) -> UnassertedType {
    let bs = |branches: &[crate::kernel::AssertBranch]| {
        branches
            .iter()
            .map(|b| UBranch {
                label: b.label.clone(),
                sort: b.sort,
                cont: erase(&b.cont),
            })
            .collect()
    };
    match l {
        LocalAssertion::Select { partner, branches } => UnassertedType::Select {
            partner: partner.clone(),
            branches: bs(branches),
        },
        LocalAssertion::Branch { partner, branches } => UnassertedType::Branch {
            partner: partner.clone(),
            branches: bs(branches),
        },
        LocalAssertion::Rec { var, body, .. } => UnassertedType::Rec {
            var: var.clone(),
            body: Box::new(erase(body)),
        },
        LocalAssertion::RecCall { var, .. } => UnassertedType::Var(var.clone()),
        LocalAssertion::End => UnassertedType::End,
    }
}

pub fn erase_env(delta: &BTreeMap<SessionRole, LocalAssertion>) -> UEnv {
    delta.iter().map(|(k, l)| (k.clone(), erase(l))).collect()
}

pub fn erase_gamma(gamma: &BTreeMap<String, crate::kernel::RoleTable>) -> UGamma {
    gamma
        .iter()
        .map(|(a, t)| (a.clone(), t.iter().map(|(r, l)| (r.clone(), erase(l))).collect()))
        .collect()
}

impl fmt::Display for UnassertedType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UnassertedType::Select { partner, branches } | UnassertedType::Branch { partner, branches } => {
                let op = if matches!(self, UnassertedType::Select { .. }) { '!' } else { '?' };
                write!(f, "{partner}{op}{{")?;
                for (i, b) in branches.iter().enumerate() {
                    if i > 0 {
                        write!(f, "; ")?;
                    }
                    write!(f, "{}({}).{}", b.label, b.sort, b.cont)?;
                }
                write!(f, "}}")
            }
            UnassertedType::Rec { var, body } => write!(f, "mu {var}.{body}"),
            UnassertedType::Var(t) => write!(f, "{t}"),
            UnassertedType::End => write!(f, "end"),
        }
    }
}

impl UnassertedType {
    fn subst(&self, t: &str, by: &UnassertedType) -> UnassertedType {
        let bs = |branches: &[UBranch]| {
            branches
                .iter()
                .map(|b| UBranch {
                    cont: b.cont.subst(t, by),
                    ..b.clone()
                })
                .collect()
        };
        match self {
            UnassertedType::Var(x) if x == t => by.clone(),
            UnassertedType::Var(_) | UnassertedType::End => self.clone(),
            UnassertedType::Rec { var, .. } if var == t => self.clone(),
            UnassertedType::Rec { var, body } => UnassertedType::Rec {
                var: var.clone(),
                body: Box::new(body.subst(t, by)),
            },
            UnassertedType::Select { partner, branches } => UnassertedType::Select {
                partner: partner.clone(),
                branches: bs(branches),
            },
            UnassertedType::Branch { partner, branches } => UnassertedType::Branch {
                partner: partner.clone(),
                branches: bs(branches),
            },
        }
    }

    /// Unfolds leading recursion; unguarded recursion is left folded.
    pub fn unfold(&self) -> UnassertedType {
        let mut t = self.clone();
        for _ in 0..64 {
            match &t {
                UnassertedType::Rec { var, body } => t = body.subst(var, &t),
                _ => return t,
            }
        }
        t
    }

    fn is_end(&self) -> bool {
        self.unfold() == UnassertedType::End
    }
}

/// Equality up to unfolding of recursion.
pub fn type_eq(a: &UnassertedType, b: &UnassertedType) -> bool {
    eq_rec(a, b, &mut HashSet::new())
}

fn eq_rec(a: &UnassertedType, b: &UnassertedType, seen: &mut HashSet<(UnassertedType, UnassertedType)>) -> bool {
    if !seen.insert((a.clone(), b.clone())) {
        return true;
    }
    match (a.unfold(), b.unfold()) {
        (UnassertedType::End, UnassertedType::End) => true,
        (UnassertedType::Var(x), UnassertedType::Var(y)) => x == y,
        (UnassertedType::Select { partner: p, branches: x }, UnassertedType::Select { partner: q, branches: y })
        | (UnassertedType::Branch { partner: p, branches: x }, UnassertedType::Branch { partner: q, branches: y }) => {
            p == q
                && x.len() == y.len()
                && x.iter().all(|bx| {
                    y.iter()
                        .find(|by| by.label == bx.label)
                        .is_some_and(|by| by.sort == bx.sort && eq_rec(&bx.cont, &by.cont, seen))
                })
        }
        _ => false,
    }
}

fn env_eq(a: &UEnv, b: &UEnv) -> bool {
    let live = |e: &UEnv| -> BTreeSet<SessionRole> { e.iter().filter(|(_, t)| !t.is_end()).map(|(k, _)| k.clone()).collect() };
    live(a) == live(b) && a.iter().all(|(k, t)| b.get(k).map_or(t.is_end(), |u| type_eq(t, u)))
}

/// Outcome of a type check with its derivation rendered as indented text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeCheck {
    pub ok: bool,
    pub trace: String,
}

/// `Gamma |- P |> Delta` without assertions.
pub fn typecheck_unasserted(
    p: &Process,
    delta: &UEnv,
    gamma: &UGamma,
    state_tys: &BTreeMap<String, Ty>,
) -> TypeCheck {
    let mut ck = UChecker {
        state_tys,
        trace: Vec::new(),
        depth: 0,
    };
    let ok = ck.check(p, delta.clone(), gamma.clone(), &mut Vec::new(), &HashMap::new());
    TypeCheck {
        ok,
        trace: ck.trace.join("\n"),
    }
}

struct UChecker<'a> {
    state_tys: &'a BTreeMap<String, Ty>,
    trace: Vec<String>,
    depth: usize,
}

type Scope = Vec<(String, Option<Ty>)>;

impl UChecker<'_> {
    fn note(&mut self, line: String) {
        self.trace.push(format!("{}{line}", "  ".repeat(self.depth)));
    }

    fn fail(&mut self, why: String) -> bool {
        self.note(format!("x {why}"));
        false
    }

    fn ty_of(&self, e: &Expr, scope: &Scope) -> Result<Option<Ty>, String> {
        let mut ctx = SortCtx::new().with_state(self.state_tys.clone());
        for (x, t) in scope {
            ctx.push(x, *t);
        }
        ctx.infer(e).map_err(|err| err.to_string())
    }

    fn check(
        &mut self,
        p: &Process,
        delta: UEnv,
        gamma: UGamma,
        scope: &mut Scope,
        recs: &HashMap<String, UEnv>,
    ) -> bool {
        self.depth += 1;
        let ok = self.check_inner(p, delta, gamma, scope, recs);
        self.depth -= 1;
        ok
    }

    fn check_inner(
        &mut self,
        p: &Process,
        delta: UEnv,
        gamma: UGamma,
        scope: &mut Scope,
        recs: &HashMap<String, UEnv>,
    ) -> bool {
        match p {
            Process::Inact => {
                self.note("[Inact]".into());
                match delta.iter().find(|(_, t)| !t.is_end()) {
                    Some((k, t)) => self.fail(format!("{k} still has type {t}")),
                    None => true,
                }
            }
            Process::Select { chan, branches } => {
                let at = SessionRole::new(chan.session.clone(), chan.from.clone());
                self.note(format!("[Select] {chan}"));
                let Some(ty) = delta.get(&at).map(UnassertedType::unfold) else {
                    return self.fail(format!("no type for {at}"));
                };
                let UnassertedType::Select { partner, branches: tbs } = ty else {
                    return self.fail(format!("{at} expects {ty}, not a selection"));
                };
                if partner != chan.to {
                    return self.fail(format!("{at} selects towards {partner}, not {}", chan.to));
                }
                for b in branches {
                    let Some(tb) = tbs.iter().find(|t| t.label == b.label) else {
                        return self.fail(format!("label {} not offered by the type", b.label));
                    };
                    match self.ty_of(&b.guard, scope) {
                        Ok(Some(Ty::Num)) | Err(_) => {
                            return self.fail(format!("guard `{}` is not boolean", print_expr(&b.guard)))
                        }
                        _ => {}
                    }
                    match self.ty_of(&b.payload, scope) {
                        Ok(t) if t.is_none() || t == tb.sort.ty() => {}
                        _ => {
                            return self.fail(format!(
                                "payload `{}` does not have sort {}",
                                print_expr(&b.payload),
                                tb.sort
                            ))
                        }
                    }
                    let mut d = delta.clone();
                    d.insert(at.clone(), tb.cont.clone());
                    scope.push((b.var.clone(), tb.sort.ty()));
                    let ok = self.check(&b.cont, d, gamma.clone(), scope, recs);
                    scope.pop();
                    if !ok {
                        return false;
                    }
                }
                true
            }
            Process::Branch { chan, branches } => {
                let at = SessionRole::new(chan.session.clone(), chan.to.clone());
                self.note(format!("[Branch] {chan}"));
                let Some(ty) = delta.get(&at).map(UnassertedType::unfold) else {
                    return self.fail(format!("no type for {at}"));
                };
                let UnassertedType::Branch { partner, branches: tbs } = ty else {
                    return self.fail(format!("{at} expects {ty}, not a branching"));
                };
                if partner != chan.from {
                    return self.fail(format!("{at} receives from {partner}, not {}", chan.from));
                }
                let pl: BTreeSet<&str> = branches.iter().map(|b| b.label.as_str()).collect();
                let tl: BTreeSet<&str> = tbs.iter().map(|b| b.label.as_str()).collect();
                if pl != tl || pl.len() != branches.len() {
                    return self.fail(format!("labels {pl:?} do not cover {tl:?}"));
                }
                for b in branches {
                    let tb = tbs.iter().find(|t| t.label == b.label).expect("label checked");
                    let bt = infer_binder_ty(&b.var, &b.update, &b.cont, self.state_tys);
                    if bt.is_some() && bt != tb.sort.ty() {
                        return self.fail(format!("binder {} is used at another sort than {}", b.var, tb.sort));
                    }
                    let mut d = delta.clone();
                    d.insert(at.clone(), tb.cont.clone());
                    scope.push((b.var.clone(), tb.sort.ty()));
                    let ok = self.check(&b.cont, d, gamma.clone(), scope, recs);
                    scope.pop();
                    if !ok {
                        return false;
                    }
                }
                true
            }
            Process::Par(l, r) => {
                self.note("[Par]".into());
                let (ln, rn) = (l.free_names(), r.free_names());
                let (mut dl, mut dr) = (UEnv::new(), UEnv::new());
                for (k, t) in delta {
                    match (ln.contains(&k.session), rn.contains(&k.session)) {
                        (true, true) => return self.fail(format!("{k} used on both sides")),
                        (false, true) => dr.insert(k, t),
                        _ => dl.insert(k, t),
                    };
                }
                let (mut gl, mut gr) = (UGamma::new(), UGamma::new());
                for (a, t) in gamma {
                    match (ln.contains(&a), rn.contains(&a)) {
                        (true, true) => return self.fail(format!("shared name {a} used on both sides")),
                        (false, true) => gr.insert(a, t),
                        _ => gl.insert(a, t),
                    };
                }
                self.check(l, dl, gl, scope, recs) && self.check(r, dr, gr, scope, recs)
            }
            Process::Request { shared, var, body, .. } => self.session_init(shared, "1", var, body, delta, gamma, scope, recs),
            Process::Accept { shared, role, var, body } => {
                self.session_init(shared, &role.to_string(), var, body, delta, gamma, scope, recs)
            }
            Process::RecDef { var, param, init, body } => {
                self.note(format!("[Rec] {var}"));
                let t = match self.ty_of(init, scope) {
                    Ok(t) => t,
                    Err(e) => return self.fail(e),
                };
                let mut recs = recs.clone();
                recs.insert(var.clone(), delta.clone());
                scope.push((param.clone(), t));
                let ok = self.check(body, delta, gamma, scope, &recs);
                scope.pop();
                ok
            }
            Process::RecCall { var, .. } => {
                self.note(format!("[Call] {var}"));
                match recs.get(var) {
                    None => self.fail(format!("unbound process variable {var}")),
                    Some(d) if env_eq(d, &delta) => true,
                    Some(_) => self.fail(format!("environment at {var} differs from the loop head")),
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn session_init(
        &mut self,
        shared: &str,
        role: &str,
        var: &str,
        body: &Process,
        mut delta: UEnv,
        mut gamma: UGamma,
        scope: &mut Scope,
        recs: &HashMap<String, UEnv>,
    ) -> bool {
        self.note(format!("[Init] {shared}[{role}]({var})"));
        let Some(table) = gamma.remove(shared) else {
            return self.fail(format!("no entry for shared name {shared}"));
        };
        let Some(t) = table.get(role) else {
            return self.fail(format!("{shared} has no role {role}"));
        };
        let at = SessionRole::new(var, role);
        if delta.keys().any(|k| k.session == var) {
            return self.fail(format!("session {var} already in use"));
        }
        delta.insert(at, t.clone());
        self.check(body, delta, gamma, scope, recs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{parse_assertion, parse_process};

    fn env(at: (&str, &str), src: &str) -> UEnv {
        UEnv::from([(SessionRole::new(at.0, at.1), erase(&parse_assertion(src).unwrap()))])
    }

    #[test]
    fn erasure() {
        let l = parse_assertion("C!{ l(y:Nat){y>10 /\\ y==@x}<@x++>. end }").unwrap();
        assert_eq!(erase(&l).to_string(), "C!{l(Nat).end}");
        assert_eq!(erase(&LocalAssertion::End), UnassertedType::End);
        let r = parse_assertion("mu t{y: true}(x:Int). q!{ l(z:Nat){z > x}<skip>. t(y: true) } : true").unwrap();
        assert_eq!(erase(&r).to_string(), "mu t.q!{l(Nat).t}");
    }

    #[test]
    fn unasserted_examples() {
        let tys = BTreeMap::new();
        let end = UEnv::from([(SessionRole::new("s", "p"), UnassertedType::End)]);
        assert!(typecheck_unasserted(&Process::Inact, &end, &UGamma::new(), &tys).ok);
        let sender = parse_process("s[p,q]!{ true :: l<11>(y)<skip>. 0 }").unwrap();
        assert!(typecheck_unasserted(&sender, &env(("s", "p"), "q!{ l(y:Nat){true}<skip>. end }"), &UGamma::new(), &tys).ok);
        let tc = typecheck_unasserted(&sender, &env(("s", "p"), "q?{ l(y:Nat){true}<skip>. end }"), &UGamma::new(), &tys);
        assert!(!tc.ok);
        assert!(tc.trace.contains("not a selection"));
    }

    #[test]
    fn branching_needs_all_labels() {
        let tys = BTreeMap::new();
        let d = env(("s", "p"), "q?{ a(y:Nat){true}<skip>. end; b(y:Bool){y}<skip>. end }");
        let full = parse_process("s[q,p]?{ a(y)<skip>. 0; b(z)<skip>. 0 }").unwrap();
        assert!(typecheck_unasserted(&full, &d, &UGamma::new(), &tys).ok);
        let partial = parse_process("s[q,p]?{ a(y)<skip>. 0 }").unwrap();
        assert!(!typecheck_unasserted(&partial, &d, &UGamma::new(), &tys).ok);
    }

    #[test]
    fn recursion_and_par() {
        let tys = BTreeMap::new();
        let d = env(("s", "p"), "mu t{y: true}(x:Int). q!{ l(z:Nat){true}<skip>. t(y: true) } : true");
        let p = parse_process("mu X(n := 0). s[p,q]!{ true :: l<1>(y)<skip>. X<n> }").unwrap();
        assert!(typecheck_unasserted(&p, &d, &UGamma::new(), &tys).ok);
        let mut d2 = d.clone();
        d2.insert(SessionRole::new("k", "r"), UnassertedType::End);
        let par = Process::par(p, Process::Inact);
        assert!(typecheck_unasserted(&par, &d2, &UGamma::new(), &tys).ok);
    }

    #[test]
    fn accept_consumes_gamma() {
        let tys = BTreeMap::new();
        let g = UGamma::from([(
            "a".to_string(),
            BTreeMap::from([("2".to_string(), erase(&parse_assertion("1!{ l(y:Nat){true}<skip>. end }").unwrap()))]),
        )]);
        let p = parse_process("acc a[2](s). s[2,1]!{ true :: l<1>(y)<skip>. 0 }").unwrap();
        assert!(typecheck_unasserted(&p, &UEnv::new(), &g, &tys).ok);
        let bad = parse_process("acc a[3](s). 0").unwrap();
        assert!(!typecheck_unasserted(&bad, &UEnv::new(), &g, &tys).ok);
    }

    #[test]
    fn erase_idempotent_on_images() {
        let l = parse_assertion("q!{ a(x:Nat){true}<skip>. p?{ b(y:Nat){true}<skip>. end }; c(x:Nat){true}<skip>. end }").unwrap();
        let e = erase(&l);
        assert_eq!(e.unfold(), e);
        assert!(type_eq(&e, &e));
    }
}

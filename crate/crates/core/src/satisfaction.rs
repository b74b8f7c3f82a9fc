//! Bounded model checking of `P, sigma |= phi`.
//!
//! Quantifiers range over bounded sort domains and are instantiated by
//! substitution. `mu` formulae are greatest fixed points: a configuration
//! that revisits itself under the same recursive formula along the current
//! path is accepted, and unfoldings beyond `mu_depth` yield an
//! inconclusive verdict.

use std::collections::{HashMap, HashSet};
use std::rc::Rc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{
    print_expr, print_formula, ActPat, Action, Env, Expr, Formula, Predicate, Process, Sort,
    Value, VirtualState,
};
use crate::lts::{step, Config, LtsError, LtsOpts};
use crate::predicates::{holds, EvalError, Vars};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SatError {
    #[error(transparent)]
    Lts(#[from] LtsError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("malformed action pattern `{0}`: argument is not a value")]
    Pattern(String),
    #[error("free recursion variable `{0}`")]
    FreeMuVar(String),
    #[error(transparent)]
    Shuffle(#[from] crate::shuffle::ShuffleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SatOpts {
    pub lts: LtsOpts,
    pub mu_depth: usize,
}

impl Default for SatOpts {
    fn default() -> Self {
        SatOpts {
            lts: LtsOpts::default(),
            mu_depth: 8,
        }
    }
}

impl SatOpts {
    pub fn new(sort_bound: i64, mu_depth: usize) -> SatOpts {
        SatOpts {
            lts: LtsOpts::with_bound(sort_bound),
            mu_depth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    /// Actions leading to the failing configuration and the failed obligation.
    Fails { trace: Vec<Action>, reason: String },
    Inconclusive,
}

impl Verdict {
    pub fn holds(&self) -> bool {
        matches!(self, Verdict::Holds)
    }

    pub fn fails(&self) -> bool {
        matches!(self, Verdict::Fails { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::Fails { .. } => "fails",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// Verdict with exploration statistics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SatResult {
    pub verdict: Verdict,
    pub obligations_checked: usize,
}

/// JSON shape of a verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub verdict: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<String>>,
    pub obligations_checked: usize,
}

impl SatResult {
    pub fn report(&self) -> VerdictReport {
        let witness = match &self.verdict {
            Verdict::Fails { trace, reason } => {
                let mut w: Vec<String> = trace.iter().map(|a| a.to_string()).collect();
                w.push(reason.clone());
                Some(w)
            }
            _ => None,
        };
        VerdictReport {
            verdict: self.verdict.name().to_string(),
            witness,
            obligations_checked: self.obligations_checked,
        }
    }
}

pub fn sat(c: &Config, phi: &Formula, opts: &SatOpts) -> Result<SatResult, SatError> {
    let mut ck = Checker::new(*opts);
    let verdict = ck.check(c, phi, &mut Vec::new(), 0)?;
    Ok(SatResult {
        verdict,
        obligations_checked: ck.obligations,
    })
}

/// `P, sigma |= C => F<Delta, Gamma>`.
pub fn check_judgement(
    env: &Env,
    p: &Process,
    sigma: &VirtualState,
    opts: &SatOpts,
) -> Result<SatResult, SatError> {
    if !holds(&env.precondition, sigma, &Vars::new())? {
        return Ok(SatResult {
            verdict: Verdict::Holds,
            obligations_checked: 1,
        });
    }
    let phi = crate::shuffle::env_formula(&env.delta, &env.gamma)?;
    sat(&Config::new(p.clone(), sigma.clone()), &phi, opts)
}

/// Reusable checker; caches successor sets across queries.
pub struct Checker {
    opts: SatOpts,
    succ: HashMap<Config, Rc<Vec<(Action, Config)>>>,
    assumed: HashSet<(Config, Formula)>,
    pub obligations: usize,
}

impl Checker {
    pub fn new(opts: SatOpts) -> Checker {
        Checker {
            opts,
            succ: HashMap::new(),
            assumed: HashSet::new(),
            obligations: 0,
        }
    }

    fn successors(&mut self, c: &Config) -> Result<Rc<Vec<(Action, Config)>>, SatError> {
        if let Some(s) = self.succ.get(c) {
            return Ok(s.clone());
        }
        let s = Rc::new(step(c, &self.opts.lts)?);
        self.succ.insert(c.clone(), s.clone());
        Ok(s)
    }

    /// `sessions` lists session variables bound by enclosing
    /// `forall s:Session` quantifiers; `unfolds` counts μ-unfoldings on the
    /// current path.
    pub fn check(
        &mut self,
        c: &Config,
        phi: &Formula,
        sessions: &mut Vec<String>,
        unfolds: usize,
    ) -> Result<Verdict, SatError> {
        self.obligations += 1;
        match phi {
            Formula::True => Ok(Verdict::Holds),
            Formula::Pred(a) => {
                if holds(a, &c.state, &Vars::new())? {
                    Ok(Verdict::Holds)
                } else {
                    Ok(Verdict::Fails {
                        trace: Vec::new(),
                        reason: format!("predicate `{}` is false", print_expr(a)),
                    })
                }
            }
            Formula::Var(x) => Err(SatError::FreeMuVar(x.clone())),
            Formula::And(a, b) => {
                let va = self.check(c, a, sessions, unfolds)?;
                if va.fails() {
                    return Ok(va);
                }
                let vb = self.check(c, b, sessions, unfolds)?;
                Ok(match (va, vb) {
                    (_, f @ Verdict::Fails { .. }) => f,
                    (Verdict::Holds, Verdict::Holds) => Verdict::Holds,
                    _ => Verdict::Inconclusive,
                })
            }
            Formula::Implies(a, b) => match self.check(c, a, sessions, unfolds)? {
                Verdict::Fails { .. } => Ok(Verdict::Holds),
                Verdict::Holds => self.check(c, b, sessions, unfolds),
                Verdict::Inconclusive => Ok(Verdict::Inconclusive),
            },
            Formula::Forall(x, Sort::Session, body) => {
                sessions.push(x.clone());
                let v = self.check(c, body, sessions, unfolds);
                sessions.pop();
                v
            }
            Formula::Forall(x, sort, body) => {
                let mut acc = Verdict::Holds;
                for v in self.opts.lts.bound.domain(*sort) {
                    let inst = body.subst_var(x, &Expr::Lit(v));
                    match self.check(c, &inst, sessions, unfolds)? {
                        Verdict::Holds => {}
                        Verdict::Fails { trace, reason } => {
                            return Ok(Verdict::Fails {
                                trace,
                                reason: format!("{reason} (with {x} = {v})"),
                            })
                        }
                        Verdict::Inconclusive => acc = Verdict::Inconclusive,
                    }
                }
                Ok(acc)
            }
            Formula::Mu(x, body) => {
                let key = (c.clone(), phi.clone());
                if self.assumed.contains(&key) {
                    return Ok(Verdict::Holds);
                }
                if unfolds >= self.opts.mu_depth {
                    return Ok(Verdict::Inconclusive);
                }
                let unfolded = body.subst_mu(x, phi);
                self.assumed.insert(key.clone());
                let v = self.check(c, &unfolded, sessions, unfolds + 1);
                self.assumed.remove(&key);
                v
            }
            Formula::Must(pat, body) => {
                let succ = self.successors(c)?;
                let mut acc = Verdict::Holds;
                for (a, next) in succ.iter() {
                    let Some(renamed) = self.matches(pat, a, sessions)? else {
                        continue;
                    };
                    let v = match renamed {
                        Some((from, to)) => {
                            let pos = sessions.iter().rposition(|s| *s == from);
                            if let Some(i) = pos {
                                sessions.remove(i);
                            }
                            let body2 = body.rename_session(&from, &to);
                            let v = self.check(next, &body2, sessions, unfolds);
                            if let Some(i) = pos {
                                sessions.insert(i, from);
                            }
                            v?
                        }
                        None => self.check(next, body, sessions, unfolds)?,
                    };
                    match v {
                        Verdict::Holds => {}
                        Verdict::Fails { mut trace, reason } => {
                            trace.insert(0, a.clone());
                            return Ok(Verdict::Fails { trace, reason });
                        }
                        Verdict::Inconclusive => acc = Verdict::Inconclusive,
                    }
                }
                Ok(acc)
            }
        }
    }

    /// `Some(rename)` when `a` matches `pat`; `rename` instantiates a bound
    /// session variable.
    fn matches(
        &self,
        pat: &ActPat,
        a: &Action,
        sessions: &[String],
    ) -> Result<Option<Option<(String, String)>>, SatError> {
        let value_of = |e: &Expr| -> Result<Value, SatError> {
            match e {
                Expr::Lit(v) => Ok(*v),
                other => Err(SatError::Pattern(print_expr(other))),
            }
        };
        let label_ok = |want: &Option<String>, got: &str| want.as_deref().is_none_or(|w| w == got);
        Ok(match (pat, a) {
            (
                ActPat::Output { chan, label, arg },
                Action::Output {
                    chan: c2,
                    label: l2,
                    value,
                },
            )
            | (
                ActPat::Input { chan, label, arg },
                Action::Input {
                    chan: c2,
                    label: l2,
                    value,
                },
            ) => (chan == c2 && label_ok(label, l2) && value_of(arg)? == *value).then_some(None),
            (ActPat::Update(u), Action::Update(u2)) => (u.normalized() == u2.normalized()).then_some(None),
            (
                ActPat::Accept {
                    shared,
                    session,
                    role,
                },
                Action::SessionAccept { shared: sh2, at },
            ) => {
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

/// Convenience: `sat` over every state in `states`, stopping at the first
/// non-holding verdict.
pub fn sat_all_states(
    p: &Process,
    states: &[VirtualState],
    phi: &Formula,
    opts: &SatOpts,
) -> Result<Verdict, SatError> {
    let mut ck = Checker::new(*opts);
    let mut acc = Verdict::Holds;
    for st in states {
        match ck.check(&Config::new(p.clone(), st.clone()), phi, &mut Vec::new(), 0)? {
            Verdict::Holds => {}
            Verdict::Inconclusive => acc = Verdict::Inconclusive,
            f => return Ok(f),
        }
    }
    Ok(acc)
}

/// `C => phi` as a formula.
pub fn guarded(c: &Predicate, phi: Formula) -> Formula {
    if c.is_true() {
        phi
    } else {
        Formula::implies(Formula::Pred(c.clone()), phi)
    }
}

pub fn describe(phi: &Formula) -> String {
    print_formula(phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::embed;
    use crate::kernel::{parse_assertion, parse_formula, parse_process, SessionRole};

    fn st(x: i64) -> VirtualState {
        VirtualState::new().with("x", Value::Int(x))
    }

    fn eq3() -> Formula {
        let l = parse_assertion("C!{ l(y:Nat){y>10 /\\ y==@x}<@x++>. end }").unwrap();
        embed(&l, &SessionRole::new("s", "S")).unwrap()
    }

    #[test]
    fn trivial_truth() {
        let r = sat(&Config::new(Process::Inact, st(0)), &Formula::True, &SatOpts::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Holds);
    }

    #[test]
    fn counter_sender() {
        let p = parse_process("s[S,C]!{ true :: l<11>(y)<@x:=@x+1>. 0 }").unwrap();
        let r = sat(&Config::new(p.clone(), st(11)), &eq3(), &SatOpts::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Holds);
        let r = sat(&Config::new(p, st(10)), &eq3(), &SatOpts::default()).unwrap();
        match r.verdict {
            Verdict::Fails { trace, reason } => {
                assert_eq!(trace.len(), 1);
                assert_eq!(trace[0].to_string(), "s[S,C]!11");
                assert!(reason.contains("11 > 10 /\\ 11 == @x"), "{reason}");
            }
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn update_label_must_match() {
        let p = parse_process("s[S,C]!{ true :: l<@x>(y)<@x:=@x+1>. 0 }").unwrap();
        let phi = parse_formula("[s[S,C]!(5)][<@x := @x + 1>] @x == 6").unwrap();
        let r = sat(&Config::new(p, st(5)), &phi, &SatOpts::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Holds);
        let p = parse_process("s[S,C]!{ true :: l<@x>(y)<@x:=@x+2>. 0 }").unwrap();
        let phi = parse_formula("[s[S,C]!(5)][<@x := @x + 2>] @x == 6").unwrap();
        assert!(sat(&Config::new(p, st(5)), &phi, &SatOpts::default()).unwrap().verdict.fails());
    }

    #[test]
    fn recursion_is_greatest_fixed_point() {
        let p = parse_process("mu X(n := 0). s[p,q]!{ true :: l<1>(y)<skip>. X<0> }").unwrap();
        let phi = parse_formula("mu T. [s[p,q]!(1)][<skip>] T").unwrap();
        let r = sat(&Config::new(p.clone(), st(0)), &phi, &SatOpts::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Holds);
        let counting = parse_process("mu X(n := 0). s[p,q]!{ true :: l<n>(y)<skip>. X<n + 1> }").unwrap();
        let phi = parse_formula("mu T. forall v:Nat. [s[p,q]!(v)](v < 100 /\\ [<skip>] T)").unwrap();
        let r = sat(&Config::new(counting.clone(), st(0)), &phi, &SatOpts::new(8, 3)).unwrap();
        assert_eq!(r.verdict, Verdict::Inconclusive);
        let phi = parse_formula("mu T. forall v:Nat. [s[p,q]!(v)](v < 2 /\\ [<skip>] T)").unwrap();
        let r = sat(&Config::new(counting, st(0)), &phi, &SatOpts::new(8, 6)).unwrap();
        assert!(r.verdict.fails());
    }

    #[test]
    fn judgement_examples() {
        let opts = SatOpts::new(16, 4);
        let env = Env::new().with_delta(SessionRole::new("s", "p"), crate::kernel::LocalAssertion::End);
        assert!(check_judgement(&env, &Process::Inact, &st(0), &opts).unwrap().verdict.holds());
        let l = parse_assertion("C!{ l(y:Nat){y>10 /\\ y==@x}<@x++>. end }").unwrap();
        let mut env = Env::new().with_delta(SessionRole::new("s", "S"), l);
        env.precondition = crate::kernel::parse_expr("@x > 10").unwrap();
        let p = parse_process("s[S,C]!{ true :: l<@x>(y)<@x:=@x+1>. 0 }").unwrap();
        assert!(check_judgement(&env, &p, &st(11), &opts).unwrap().verdict.holds());
        assert!(check_judgement(&env, &p, &st(3), &opts).unwrap().verdict.holds());
        env.precondition = Expr::bool(true);
        assert!(check_judgement(&env, &p, &st(3), &opts).unwrap().verdict.fails());
        env.precondition = Expr::bool(false);
        assert!(check_judgement(&env, &p, &st(3), &opts).unwrap().verdict.holds());
    }

    #[test]
    fn report_json() {
        let p = parse_process("s[S,C]!{ true :: l<11>(y)<@x:=@x+1>. 0 }").unwrap();
        let r = sat(&Config::new(p, st(10)), &eq3(), &SatOpts::default()).unwrap();
        let j = serde_json::to_value(r.report()).unwrap();
        assert_eq!(j["verdict"], "fails");
        assert_eq!(j["witness"][0], "s[S,C]!11");
        assert!(j["obligations_checked"].as_u64().unwrap() > 0);
    }
}

//! Compilation of local assertions into HML formulae.

use thiserror::Error;

use crate::kernel::{
    ActPat, AssertBranch, Chan, Expr, Formula, LocalAssertion, RoleTable, SessionRole, Sort,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmbedError {
    #[error("unbound recursion variable `{0}`")]
    UnboundRec(String),
    #[error("shared name `{0}` has an empty role table")]
    EmptyTable(String),
}

/// `[[L]]` at the session-role `at`.
///
/// A selection towards `q` becomes, per branch,
/// `forall x:S. [s[p,q]!(x)](A /\ [<E>] [[L']])`; a branching from `q`
/// becomes `forall x:S. [s[q,p]?(x)](A => [<E>] [[L']])`. Branch labels are
/// kept in the patterns only when the choice has several branches.
pub fn embed(l: &LocalAssertion, at: &SessionRole) -> Result<Formula, EmbedError> {
    embed_in(l, at, &mut Vec::new())
}

fn embed_in(l: &LocalAssertion, at: &SessionRole, recs: &mut Vec<String>) -> Result<Formula, EmbedError> {
    match l {
        LocalAssertion::End => Ok(Formula::True),
        LocalAssertion::Select { partner, branches } => {
            let chan = Chan::new(at.session.clone(), at.role.clone(), partner.clone());
            choice(branches, at, recs, |label, x| ActPat::Output {
                chan: chan.clone(),
                label,
                arg: Expr::var(x),
            }, Formula::and)
        }
        LocalAssertion::Branch { partner, branches } => {
            let chan = Chan::new(at.session.clone(), partner.clone(), at.role.clone());
            choice(branches, at, recs, |label, x| ActPat::Input {
                chan: chan.clone(),
                label,
                arg: Expr::var(x),
            }, Formula::implies)
        }
        LocalAssertion::Rec {
            var,
            param,
            sort,
            invariant,
            body,
            ..
        } => {
            recs.push(var.clone());
            let inner = embed_in(body, at, recs);
            recs.pop();
            let inner = inner?;
            let inner = if inner.free_vars().contains(param) {
                Formula::forall(
                    param.clone(),
                    *sort,
                    Formula::implies(Formula::Pred(invariant.clone()), inner),
                )
            } else {
                inner
            };
            Ok(Formula::mu(var.clone(), inner))
        }
        LocalAssertion::RecCall { var, .. } => {
            if recs.contains(var) {
                Ok(Formula::Var(var.clone()))
            } else {
                Err(EmbedError::UnboundRec(var.clone()))
            }
        }
    }
}

fn choice(
    branches: &[AssertBranch],
    at: &SessionRole,
    recs: &mut Vec<String>,
    pat: impl Fn(Option<String>, &str) -> ActPat,
    join: impl Fn(Formula, Formula) -> Formula,
) -> Result<Formula, EmbedError> {
    let labelled = branches.len() > 1;
    let mut parts = Vec::new();
    for b in branches {
        let cont = embed_in(&b.cont, at, recs)?;
        let label = labelled.then(|| b.label.clone());
        let body = join(
            Formula::Pred(b.pred.clone()),
            Formula::must(ActPat::Update(b.update.clone()), cont),
        );
        parts.push(Formula::forall(
            b.var.clone(),
            b.sort,
            Formula::must(pat(label, &b.var), body),
        ));
    }
    Ok(Formula::conj(parts))
}

/// Session variable bound by environment-entry formulae.
pub const ENTRY_SESSION: &str = "s'";

/// `forall s':Session. /\_p [a(s'[p])] [[L_p]]_{s'[p]}` over the roles of
/// the table.
pub fn embed_env_entry(shared: &str, table: &RoleTable) -> Result<Formula, EmbedError> {
    if table.is_empty() {
        return Err(EmbedError::EmptyTable(shared.to_string()));
    }
    let mut parts = Vec::new();
    for (role, l) in table {
        let at = SessionRole::new(ENTRY_SESSION, role.clone());
        parts.push(Formula::must(
            ActPat::Accept {
                shared: shared.to_string(),
                session: ENTRY_SESSION.to_string(),
                role: role.clone(),
            },
            embed(l, &at)?,
        ));
    }
    Ok(Formula::forall(ENTRY_SESSION, Sort::Session, Formula::conj(parts)))
}

/// Number of communication modalities along the deepest path.
pub fn comm_depth(f: &Formula) -> usize {
    match f {
        Formula::True | Formula::Pred(_) | Formula::Var(_) => 0,
        Formula::And(a, b) | Formula::Implies(a, b) => comm_depth(a).max(comm_depth(b)),
        Formula::Must(a, g) => {
            let here = usize::from(matches!(a, ActPat::Input { .. } | ActPat::Output { .. }));
            here + comm_depth(g)
        }
        Formula::Forall(_, _, g) | Formula::Mu(_, g) => comm_depth(g),
    }
}

/// Communication depth of an assertion (recursion bodies counted once).
pub fn assertion_depth(l: &LocalAssertion) -> usize {
    match l {
        LocalAssertion::End | LocalAssertion::RecCall { .. } => 0,
        LocalAssertion::Select { branches, .. } | LocalAssertion::Branch { branches, .. } => {
            1 + branches.iter().map(|b| assertion_depth(&b.cont)).max().unwrap_or(0)
        }
        LocalAssertion::Rec { body, .. } => assertion_depth(body),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{parse_assertion, parse_formula, print_formula};

    fn at(s: &str, p: &str) -> SessionRole {
        SessionRole::new(s, p)
    }

    #[test]
    fn select_example() {
        let l = parse_assertion("C!{ l(y:Nat){y>10 /\\ y==@x}<@x++>. end }").unwrap();
        let f = embed(&l, &at("s", "S")).unwrap();
        assert_eq!(
            f,
            parse_formula("forall y:Nat. [s[S,C]!(y)]({y > 10 /\\ y == @x} /\\ [<@x := @x + 1>] true)").unwrap()
        );
        assert_eq!(
            print_formula(&f),
            "forall y:Nat. [s[S,C]!(y)]({y > 10 /\\ y == @x} /\\ [<@x := @x + 1>] true)"
        );
    }

    #[test]
    fn end_and_branch() {
        assert_eq!(embed(&LocalAssertion::End, &at("s", "p")).unwrap(), Formula::True);
        let l = parse_assertion("q?{ l(y:Int){y>0}<skip>. end }").unwrap();
        let f = embed(&l, &at("s", "p")).unwrap();
        assert_eq!(print_formula(&f), "forall y:Int. [s[q,p]?(y)](y > 0 => [<skip>] true)");
    }

    #[test]
    fn labels_only_on_multi_branch() {
        let l = parse_assertion("q!{ a(x:Nat){true}<skip>. end; b(x:Bool){x}<skip>. end }").unwrap();
        let f = embed(&l, &at("s", "p")).unwrap();
        assert_eq!(
            print_formula(&f),
            "(forall x:Nat. [s[p,q]!a(x)]({true} /\\ [<skip>] true)) /\\ (forall x:Bool. [s[p,q]!b(x)]({x} /\\ [<skip>] true))"
        );
        f.check_positive().unwrap();
    }

    #[test]
    fn recursion() {
        let l = parse_assertion("mu t{y: y == 0}(x:Int). q!{ l(z:Nat){true}<skip>. t(y: true) } : true").unwrap();
        let f = embed(&l, &at("s", "p")).unwrap();
        assert_eq!(print_formula(&f), "mu t. forall z:Nat. [s[p,q]!(z)]({true} /\\ [<skip>] t)");
        let l = parse_assertion("mu t{y: y == 0}(x:Int). q!{ l(z:Nat){z > x}<skip>. t(y: y == z) } : x >= 0").unwrap();
        let f = embed(&l, &at("s", "p")).unwrap();
        assert_eq!(
            print_formula(&f),
            "mu t. forall x:Int. x >= 0 => forall z:Nat. [s[p,q]!(z)](z > x /\\ [<skip>] t)"
        );
    }

    #[test]
    fn env_entries() {
        let t = RoleTable::from([("p".to_string(), LocalAssertion::End)]);
        assert_eq!(print_formula(&embed_env_entry("a", &t).unwrap()), "forall s':Session. [a(s'[p])] true");
        let t = RoleTable::from([(
            "p".to_string(),
            parse_assertion("q!{ l(y:Nat){y>0}<skip>. end }").unwrap(),
        )]);
        assert_eq!(
            print_formula(&embed_env_entry("a", &t).unwrap()),
            "forall s':Session. [a(s'[p])](forall y:Nat. [s'[p,q]!(y)](y > 0 /\\ [<skip>] true))"
        );
        assert_eq!(
            embed_env_entry("a", &RoleTable::new()),
            Err(EmbedError::EmptyTable("a".into()))
        );
    }

    #[test]
    fn depth_matches() {
        let l = parse_assertion("q!{ a(x:Nat){true}<skip>. p?{ b(y:Nat){true}<skip>. end }; c(x:Nat){true}<skip>. end }").unwrap();
        assert_eq!(comm_depth(&embed(&l, &at("s", "r")).unwrap()), assertion_depth(&l));
    }
}

//! Interleaving of formulae and the environment formula `F<Delta, Gamma>`.
//!
//! The unit of interleaving is a packet: a communication modality together
//! with its predicate and update, `[l](A /\ [<E>] K)` or `[l](A => [<E>] K)`.
//! Any other modality `[l] K` is a packet on its own.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::embedding::{embed, embed_env_entry, EmbedError};
use crate::kernel::{
    fresh_name, ActPat, Expr, Formula, FreeNames, LocalAssertion, Predicate, RoleTable,
    SessionRole, Sort, Update,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShuffleError {
    #[error("operands share free names: {0:?}")]
    Overlap(BTreeSet<String>),
    #[error("interleaving exceeds the budget of {0} conjuncts")]
    Budget(usize),
    #[error("recursive formulae are interleaved by the automata pipeline, not by `shuffle`")]
    Recursive,
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("automata pipeline: {0}")]
    Automata(String),
}

/// Reading of the main rule's right conjunct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShuffleMode {
    /// `[l2]([l1]phi1 >< phi2)`
    #[default]
    Symmetric,
    /// `[l2]([l1]phi1 /\ phi2)` as displayed.
    Literal,
}

pub const DEFAULT_BUDGET: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShuffleOpts {
    pub mode: ShuffleMode,
    pub budget: usize,
}

impl Default for ShuffleOpts {
    fn default() -> Self {
        ShuffleOpts {
            mode: ShuffleMode::Symmetric,
            budget: DEFAULT_BUDGET,
        }
    }
}

/// A modality frame `[l](A /\ [<E>] _)`, `[l](A => [<E>] _)` or `[l] _`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Packet {
    pub pat: ActPat,
    pub guard: Option<(Predicate, bool)>,
    pub update: Option<Update>,
}

impl Packet {
    /// Splits a modality into its packet and continuation.
    pub fn split(f: &Formula) -> Option<(Packet, Formula)> {
        let Formula::Must(pat, body) = f else {
            return None;
        };
        if matches!(pat, ActPat::Input { .. } | ActPat::Output { .. }) {
            let parts = match &**body {
                Formula::And(a, k) => Some((a, k, false)),
                Formula::Implies(a, k) => Some((a, k, true)),
                _ => None,
            };
            if let Some((a, k, hyp)) = parts {
                if let (Formula::Pred(a), Formula::Must(ActPat::Update(u), cont)) = (&**a, &**k) {
                    return Some((
                        Packet {
                            pat: pat.clone(),
                            guard: Some((a.clone(), hyp)),
                            update: Some(u.clone()),
                        },
                        (**cont).clone(),
                    ));
                }
            }
        }
        Some((
            Packet {
                pat: pat.clone(),
                guard: None,
                update: None,
            },
            (**body).clone(),
        ))
    }

    pub fn wrap(&self, cont: Formula) -> Formula {
        let inner = match &self.update {
            Some(u) => Formula::must(ActPat::Update(u.clone()), cont),
            None => cont,
        };
        let inner = match &self.guard {
            Some((a, false)) => Formula::and(Formula::Pred(a.clone()), inner),
            Some((a, true)) => Formula::implies(Formula::Pred(a.clone()), inner),
            None => inner,
        };
        Formula::must(self.pat.clone(), inner)
    }

    pub fn is_communication(&self) -> bool {
        matches!(self.pat, ActPat::Input { .. } | ActPat::Output { .. })
    }
}

/// `phi1 >< phi2` with the default options.
pub fn shuffle(phi1: &Formula, phi2: &Formula) -> Result<Formula, ShuffleError> {
    shuffle_with(phi1, phi2, &ShuffleOpts::default())
}

pub fn shuffle_with(phi1: &Formula, phi2: &Formula, opts: &ShuffleOpts) -> Result<Formula, ShuffleError> {
    let common: BTreeSet<String> = phi1
        .free_names()
        .intersection(&phi2.free_names())
        .cloned()
        .collect();
    if !common.is_empty() {
        return Err(ShuffleError::Overlap(common));
    }
    let mut sh = Shuffler { opts: *opts, made: 0 };
    sh.go(phi1, phi2)
}

struct Shuffler {
    opts: ShuffleOpts,
    made: usize,
}

impl Shuffler {
    fn and(&mut self, a: Formula, b: Formula) -> Result<Formula, ShuffleError> {
        self.made += 1;
        if self.made > self.opts.budget {
            return Err(ShuffleError::Budget(self.opts.budget));
        }
        Ok(Formula::and(a, b))
    }

    fn go(&mut self, l: &Formula, r: &Formula) -> Result<Formula, ShuffleError> {
        match (l, r) {
            (_, Formula::True) => Ok(l.clone()),
            (Formula::True, _) => Ok(r.clone()),
            (Formula::Mu(..) | Formula::Var(_), _) | (_, Formula::Mu(..) | Formula::Var(_)) => {
                Err(ShuffleError::Recursive)
            }
            (Formula::And(a, b), _) => {
                let x = self.go(a, r)?;
                let y = self.go(b, r)?;
                self.and(x, y)
            }
            (Formula::Forall(x, s, body), _) => {
                let (x2, body2) = freshen(x, *s, body, r);
                Ok(Formula::forall(x2, *s, self.go(&body2, r)?))
            }
            (Formula::Implies(a, body), _) => Ok(Formula::implies((**a).clone(), self.go(body, r)?)),
            (Formula::Pred(_), _) => self.and(l.clone(), r.clone()),
            (_, Formula::And(a, b)) => {
                let x = self.go(l, a)?;
                let y = self.go(l, b)?;
                self.and(x, y)
            }
            (_, Formula::Forall(x, s, body)) => {
                let (x2, body2) = freshen(x, *s, body, l);
                Ok(Formula::forall(x2, *s, self.go(l, &body2)?))
            }
            (_, Formula::Implies(a, body)) => Ok(Formula::implies((**a).clone(), self.go(l, body)?)),
            (_, Formula::Pred(_)) => self.and(l.clone(), r.clone()),
            (Formula::Must(..), Formula::Must(..)) => {
                let (p1, k1) = Packet::split(l).expect("modality");
                let (p2, k2) = Packet::split(r).expect("modality");
                let left = p1.wrap(self.go(&k1, r)?);
                let right = match self.opts.mode {
                    ShuffleMode::Symmetric => p2.wrap(self.go(l, &k2)?),
                    ShuffleMode::Literal => {
                        let inner = self.and(l.clone(), k2)?;
                        p2.wrap(inner)
                    }
                };
                self.and(left, right)
            }
        }
    }
}

/// Renames the bound variable `x` of `forall x:s. body` away from the free
/// names and variables of `other`.
fn freshen(x: &str, s: Sort, body: &Formula, other: &Formula) -> (String, Formula) {
    let clash = if s == Sort::Session {
        other.free_names().contains(x)
    } else {
        other.free_vars().contains(x)
    };
    if !clash {
        return (x.to_string(), body.clone());
    }
    let mut avoid = other.free_names();
    avoid.extend(other.free_vars());
    avoid.extend(body.free_names());
    avoid.extend(body.free_vars());
    let x2 = fresh_name(x, &avoid);
    let body2 = if s == Sort::Session {
        body.rename_session(x, &x2)
    } else {
        body.subst_var(x, &Expr::var(x2.clone()))
    };
    (x2, body2)
}

/// Formulae of each entry of `Delta` and `Gamma`, in key order.
pub fn env_components(
    delta: &BTreeMap<SessionRole, LocalAssertion>,
    gamma: &BTreeMap<String, RoleTable>,
) -> Result<Vec<Formula>, ShuffleError> {
    let mut parts = Vec::new();
    for (at, l) in delta {
        parts.push(embed(l, at)?);
    }
    for (a, table) in gamma {
        parts.push(embed_env_entry(a, table)?);
    }
    Ok(parts)
}

/// `F<Delta, Gamma>`: the interleaving of the embeddings of every entry.
/// Recursive components are interleaved through the automata pipeline.
pub fn env_formula(
    delta: &BTreeMap<SessionRole, LocalAssertion>,
    gamma: &BTreeMap<String, RoleTable>,
) -> Result<Formula, ShuffleError> {
    let parts: Vec<Formula> = env_components(delta, gamma)?
        .into_iter()
        .filter(|f| *f != Formula::True)
        .collect();
    if parts.len() > 1 && parts.iter().any(has_mu) {
        return crate::automata::interleave_formulas(&parts)
            .map_err(|e| ShuffleError::Automata(e.to_string()));
    }
    let mut acc = Formula::True;
    for f in &parts {
        acc = shuffle(&acc, f)?;
    }
    Ok(acc)
}

pub fn has_mu(f: &Formula) -> bool {
    match f {
        Formula::Mu(..) | Formula::Var(_) => true,
        Formula::True | Formula::Pred(_) => false,
        Formula::And(a, b) | Formula::Implies(a, b) => has_mu(a) || has_mu(b),
        Formula::Must(_, g) | Formula::Forall(_, _, g) => has_mu(g),
    }
}

/// Modality sequences along every path, dropping those that are a strict
/// prefix of another. Duplicates are removed; order is left to right.
pub fn maximal_paths(f: &Formula) -> Vec<Vec<ActPat>> {
    let mut all = Vec::new();
    collect_paths(f, &mut Vec::new(), &mut all);
    let mut out: Vec<Vec<ActPat>> = Vec::new();
    for p in &all {
        let is_prefix = all.iter().any(|q| q.len() > p.len() && q[..p.len()] == p[..]);
        if !is_prefix && !out.contains(p) {
            out.push(p.clone());
        }
    }
    out
}

fn collect_paths(f: &Formula, prefix: &mut Vec<ActPat>, out: &mut Vec<Vec<ActPat>>) {
    match f {
        Formula::True | Formula::Pred(_) | Formula::Var(_) => out.push(prefix.clone()),
        Formula::And(a, b) => {
            collect_paths(a, prefix, out);
            collect_paths(b, prefix, out);
        }
        Formula::Implies(_, b) => collect_paths(b, prefix, out),
        Formula::Forall(_, _, g) | Formula::Mu(_, g) => collect_paths(g, prefix, out),
        Formula::Must(a, g) => {
            prefix.push(a.clone());
            collect_paths(g, prefix, out);
            prefix.pop();
        }
    }
}

/// Pushes modalities, quantifiers and implications over conjunctions so the
/// result is a flat conjunction of chains. Box modalities, `forall` and
/// predicate-antecedent implications all distribute over `/\`, so the
/// result is logically equivalent.
pub fn distribute(f: &Formula) -> Formula {
    let parts = chains(f);
    let nontrivial: Vec<Formula> = parts.iter().filter(|c| **c != Formula::True).cloned().collect();
    if nontrivial.is_empty() {
        Formula::True
    } else {
        Formula::conj(nontrivial)
    }
}

fn chains(f: &Formula) -> Vec<Formula> {
    match f {
        Formula::And(a, b) => {
            let mut v = chains(a);
            v.extend(chains(b));
            v
        }
        Formula::Must(a, g) => chains(g).into_iter().map(|c| Formula::must(a.clone(), c)).collect(),
        Formula::Forall(x, s, g) => chains(g)
            .into_iter()
            .map(|c| Formula::forall(x.clone(), *s, c))
            .collect(),
        Formula::Implies(a, g) => chains(g)
            .into_iter()
            .map(|c| Formula::implies((**a).clone(), c))
            .collect(),
        other => vec![other.clone()],
    }
}

/// Conjuncts of a right-nested conjunction.
pub fn conjuncts(f: &Formula) -> Vec<&Formula> {
    match f {
        Formula::And(a, b) => {
            let mut v = conjuncts(a);
            v.extend(conjuncts(b));
            v
        }
        other => vec![other],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{parse_formula, print_actpat, print_formula};

    fn f(src: &str) -> Formula {
        parse_formula(src).unwrap()
    }

    fn path_strings(g: &Formula) -> Vec<String> {
        maximal_paths(g)
            .iter()
            .map(|p| p.iter().map(print_actpat).collect::<Vec<_>>().join(""))
            .collect()
    }

    #[test]
    fn six_interleavings() {
        let g = shuffle(&f("[1][2]true"), &f("[A][B]true")).unwrap();
        let mut paths = path_strings(&g);
        paths.sort();
        assert_eq!(paths, ["12AB", "1A2B", "1AB2", "A12B", "A1B2", "AB12"]);
        assert_eq!(
            print_formula(&distribute(&g)),
            "[1][2][A][B] true /\\ [1][A][2][B] true /\\ [1][A][B][2] true /\\ [A][1][2][B] true /\\ [A][1][B][2] true /\\ [A][B][1][2] true"
        );
    }

    #[test]
    fn unit_and_single_rule() {
        let phi = f("forall y:Nat. [s[p,q]!(y)](y > 1 /\\ [<skip>] true)");
        assert_eq!(shuffle(&phi, &Formula::True).unwrap(), phi);
        assert_eq!(shuffle(&Formula::True, &phi).unwrap(), phi);
        let lit = ShuffleOpts {
            mode: ShuffleMode::Literal,
            ..ShuffleOpts::default()
        };
        let g = shuffle_with(&f("[l1]true"), &f("[l2]true"), &lit).unwrap();
        assert_eq!(print_formula(&g), "[l1][l2] true /\\ [l2]([l1] true /\\ true)");
        let g = shuffle(&f("[l1]true"), &f("[l2]true")).unwrap();
        assert_eq!(print_formula(&g), "[l1][l2] true /\\ [l2][l1] true");
    }

    #[test]
    fn packets_stay_whole() {
        let a = f("forall x:Nat. [s[p,q]!(x)](x > 0 /\\ [<@u := x>] true)");
        let b = f("forall y:Nat. [k[r,t]?(y)](y < 5 => [<skip>] true)");
        let g = shuffle(&a, &b).unwrap();
        assert_eq!(
            print_formula(&g),
            "forall x:Nat. forall y:Nat. [s[p,q]!(x)](x > 0 /\\ [<@u := x>][k[r,t]?(y)](y < 5 => [<skip>] true)) /\\ [k[r,t]?(y)](y < 5 => [<skip>][s[p,q]!(x)](x > 0 /\\ [<@u := x>] true))"
        );
        assert_eq!(maximal_paths(&g).len(), 2);
    }

    #[test]
    fn bound_variables_are_renamed() {
        let a = f("forall x:Nat. [s[p,q]!(x)] {x > 0}");
        let b = f("forall x:Nat. [k[r,t]!(x)] {x > 1}");
        let g = shuffle(&a, &b).unwrap();
        let txt = print_formula(&g);
        assert!(txt.starts_with("forall x:Nat. forall x':Nat."), "{txt}");
    }

    #[test]
    fn overlapping_names_rejected() {
        let a = f("[s[p,q]!(1)] true");
        let b = f("[s[q,p]?(1)] true");
        assert!(matches!(shuffle(&a, &b), Err(ShuffleError::Overlap(_))));
    }

    #[test]
    fn budget_guard() {
        let chain = |pre: &str| {
            let mut s = String::from("true");
            for i in 0..6 {
                s = format!("[{pre}{i}]{s}");
            }
            f(&s)
        };
        let opts = ShuffleOpts {
            budget: 100,
            ..ShuffleOpts::default()
        };
        assert_eq!(
            shuffle_with(&chain("a"), &chain("b"), &opts),
            Err(ShuffleError::Budget(100))
        );
        assert!(shuffle(&chain("a"), &chain("b")).is_ok());
    }

    #[test]
    fn env_formula_examples() {
        use crate::kernel::parse_assertion;
        assert_eq!(env_formula(&BTreeMap::new(), &BTreeMap::new()).unwrap(), Formula::True);
        let d = BTreeMap::from([(SessionRole::new("s", "p"), LocalAssertion::End)]);
        assert_eq!(env_formula(&d, &BTreeMap::new()).unwrap(), Formula::True);
        let d = BTreeMap::from([
            (SessionRole::new("s", "p2"), parse_assertion("p1?{l(x:Nat){true}<skip>. end}").unwrap()),
            (SessionRole::new("k", "q1"), parse_assertion("q2!{l(y:Nat){true}<skip>. end}").unwrap()),
        ]);
        let g = env_formula(&d, &BTreeMap::new()).unwrap();
        assert_eq!(maximal_paths(&g).len(), 2);
    }
}

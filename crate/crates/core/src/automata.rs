//! Recursive formulae as packet automata: translation from formulae,
//! asynchronous product, expansion into branch automata, and translation
//! back into a single μ-formula.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

use crate::embedding::{embed, EmbedError};
use crate::kernel::{
    fresh_name, print_formula, Expr, Formula, FreeNames, LocalAssertion, SessionRole, Sort,
};
use crate::shuffle::Packet;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AutError {
    #[error("formula is not in packet form: {0}")]
    NotPacketForm(String),
    #[error("automaton is not a branch automaton: {0}")]
    NotBranchForm(String),
    #[error("components share names: {0:?}")]
    NameClash(BTreeSet<String>),
    #[error("expansion exceeds the cap of {0} states")]
    Budget(usize),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

pub const DEFAULT_STATE_CAP: usize = 10_000;

/// A packet together with the quantifiers scoping it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AutPacket {
    pub binders: Vec<(String, Sort)>,
    pub packet: Packet,
}

impl AutPacket {
    pub fn plain(packet: Packet) -> AutPacket {
        AutPacket {
            binders: Vec::new(),
            packet,
        }
    }

    /// Builds the formula `forall ... . [l](... K)`.
    pub fn wrap(&self, cont: Formula) -> Formula {
        let mut f = self.packet.wrap(cont);
        for (x, s) in self.binders.iter().rev() {
            f = Formula::forall(x.clone(), *s, f);
        }
        f
    }

    /// Text identifying the packet; the continuation is shown as `_`.
    pub fn label(&self) -> String {
        print_formula(&self.wrap(Formula::Var("_".into())))
    }

    fn names(&self) -> BTreeSet<String> {
        let mut s = self.packet.wrap(Formula::True).free_names();
        for (x, sort) in &self.binders {
            if *sort == Sort::Session {
                s.remove(x);
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub from: usize,
    pub to: usize,
    pub packet: AutPacket,
    pub back: bool,
}

/// States are `0..names.len()`; transitions are kept in insertion order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketAutomaton {
    pub names: Vec<String>,
    pub source: usize,
    pub trans: Vec<Transition>,
}

impl PacketAutomaton {
    pub fn num_states(&self) -> usize {
        self.names.len()
    }

    pub fn out(&self, q: usize) -> impl Iterator<Item = &Transition> {
        self.trans.iter().filter(move |t| t.from == q)
    }

    fn add_state(&mut self, name: String) -> usize {
        self.names.push(name);
        self.names.len() - 1
    }

    /// Single state, no transitions.
    pub fn unit() -> PacketAutomaton {
        PacketAutomaton {
            names: vec!["0".into()],
            source: 0,
            trans: Vec::new(),
        }
    }

    /// Graph in DOT syntax; back-edges are dashed.
    pub fn to_dot(&self, title: &str) -> String {
        let mut out = format!("digraph \"{title}\" {{\n  rankdir=LR;\n");
        for (i, n) in self.names.iter().enumerate() {
            let shape = if i == self.source { "doublecircle" } else { "circle" };
            let _ = writeln!(out, "  q{i} [label=\"{}\", shape={shape}];", escape(n));
        }
        for t in &self.trans {
            let style = if t.back { ", style=dashed" } else { "" };
            let _ = writeln!(
                out,
                "  q{} -> q{} [label=\"{}\"{style}];",
                t.from,
                t.to,
                escape(&t.packet.label())
            );
        }
        out.push_str("}\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Step 2: one state per syntactic point between modalities (or at a μ),
/// `Var(X)` closing a back-edge to the state of its binder.
pub fn formula_to_automaton(phi: &Formula) -> Result<PacketAutomaton, AutError> {
    let mut a = PacketAutomaton {
        names: vec!["0".into()],
        source: 0,
        trans: Vec::new(),
    };
    build(&mut a, phi, 0, &[], &mut HashMap::new())?;
    Ok(a)
}

fn build(
    a: &mut PacketAutomaton,
    f: &Formula,
    q: usize,
    binders: &[(String, Sort)],
    mus: &mut HashMap<String, usize>,
) -> Result<(), AutError> {
    match f {
        Formula::True => Ok(()),
        Formula::And(l, r) => {
            build(a, l, q, binders, mus)?;
            build(a, r, q, binders, mus)
        }
        Formula::Forall(x, s, g) => {
            let mut b = binders.to_vec();
            b.push((x.clone(), *s));
            build(a, g, q, &b, mus)
        }
        Formula::Mu(x, g) => {
            if !binders.is_empty() {
                return Err(AutError::NotPacketForm(format!(
                    "quantifier scoping over `mu {x}`"
                )));
            }
            let saved = mus.insert(x.clone(), q);
            let res = build(a, g, q, binders, mus);
            match saved {
                Some(old) => mus.insert(x.clone(), old),
                None => mus.remove(x),
            };
            res
        }
        Formula::Must(..) => {
            let (p, k) = Packet::split(f).expect("modality");
            let packet = AutPacket {
                binders: binders.to_vec(),
                packet: p,
            };
            if let Formula::Var(x) = &k {
                let to = *mus
                    .get(x)
                    .ok_or_else(|| AutError::NotPacketForm(format!("free recursion variable `{x}`")))?;
                a.trans.push(Transition {
                    from: q,
                    to,
                    packet,
                    back: true,
                });
                return Ok(());
            }
            let t = a.add_state(a.names.len().to_string());
            a.trans.push(Transition {
                from: q,
                to: t,
                packet,
                back: false,
            });
            build(a, &k, t, &[], mus)
        }
        Formula::Var(x) => Err(AutError::NotPacketForm(format!("`{x}` is not guarded by a modality"))),
        other => Err(AutError::NotPacketForm(format!("`{}` outside a packet", print_formula(other)))),
    }
}

/// Step 3: asynchronous product. Each transition moves one component;
/// a move is a back-edge iff it is one in its component.
pub fn product(a: &PacketAutomaton, b: &PacketAutomaton) -> Result<PacketAutomaton, AutError> {
    let na: BTreeSet<String> = a.trans.iter().flat_map(|t| t.packet.names()).collect();
    let nb: BTreeSet<String> = b.trans.iter().flat_map(|t| t.packet.names()).collect();
    let common: BTreeSet<String> = na.intersection(&nb).cloned().collect();
    if !common.is_empty() {
        return Err(AutError::NameClash(common));
    }
    let mut out = PacketAutomaton {
        names: Vec::new(),
        source: 0,
        trans: Vec::new(),
    };
    let mut index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut queue = VecDeque::new();
    let start = (a.source, b.source);
    index.insert(start, out.add_state(format!("({},{})", a.names[start.0], b.names[start.1])));
    queue.push_back(start);
    while let Some((i, j)) = queue.pop_front() {
        let from = index[&(i, j)];
        let moves: Vec<((usize, usize), &Transition)> = a
            .out(i)
            .map(|t| ((t.to, j), t))
            .chain(b.out(j).map(|t| ((i, t.to), t)))
            .collect();
        for (pair, t) in moves {
            let to = match index.get(&pair) {
                Some(&s) => s,
                None => {
                    let s = out.add_state(format!("({},{})", a.names[pair.0], b.names[pair.1]));
                    index.insert(pair, s);
                    queue.push_back(pair);
                    s
                }
            };
            out.trans.push(Transition {
                from,
                to,
                packet: t.packet.clone(),
                back: t.back,
            });
        }
    }
    Ok(out)
}

/// Step 4: unfolds the automaton into a tree of paths. An edge whose
/// target state already occurs on the current path becomes a back-edge to
/// the nearest such ancestor; any other edge creates a fresh child.
pub fn expand_to_branch(a: &PacketAutomaton, cap: usize) -> Result<PacketAutomaton, AutError> {
    let mut out = PacketAutomaton {
        names: Vec::new(),
        source: 0,
        trans: Vec::new(),
    };
    let root = out.add_state(a.names[a.source].clone());
    let mut path = vec![(a.source, root)];
    expand_rec(a, &mut out, &mut path, cap)?;
    Ok(out)
}

fn expand_rec(
    a: &PacketAutomaton,
    out: &mut PacketAutomaton,
    path: &mut Vec<(usize, usize)>,
    cap: usize,
) -> Result<(), AutError> {
    let (q, node) = *path.last().expect("nonempty path");
    for t in a.out(q) {
        if let Some(&(_, anc)) = path.iter().rev().find(|(s, _)| *s == t.to) {
            out.trans.push(Transition {
                from: node,
                to: anc,
                packet: t.packet.clone(),
                back: true,
            });
            continue;
        }
        if out.num_states() >= cap {
            return Err(AutError::Budget(cap));
        }
        let child = out.add_state(a.names[t.to].clone());
        out.trans.push(Transition {
            from: node,
            to: child,
            packet: t.packet.clone(),
            back: false,
        });
        path.push((t.to, child));
        expand_rec(a, out, path, cap)?;
        path.pop();
    }
    Ok(())
}

/// Forward tree of a branch automaton: parent of every non-source state.
fn branch_parents(a: &PacketAutomaton) -> Result<Vec<Option<usize>>, AutError> {
    let n = a.num_states();
    let mut parent: Vec<Option<usize>> = vec![None; n];
    for t in a.trans.iter().filter(|t| !t.back) {
        if t.to == a.source {
            return Err(AutError::NotBranchForm("forward edge into the source".into()));
        }
        if parent[t.to].replace(t.from).is_some() {
            return Err(AutError::NotBranchForm(format!("state {} has two forward parents", t.to)));
        }
    }
    let is_ancestor = |anc: usize, mut q: usize| loop {
        if q == anc {
            return true;
        }
        match parent[q] {
            Some(p) => q = p,
            None => return false,
        }
    };
    for q in 0..n {
        if q != a.source && !is_ancestor(a.source, q) {
            return Err(AutError::NotBranchForm(format!("state {q} unreachable by forward edges")));
        }
    }
    for t in a.trans.iter().filter(|t| t.back) {
        if !is_ancestor(t.to, t.from) {
            return Err(AutError::NotBranchForm(format!(
                "back-edge {} -> {} does not target an ancestor",
                t.from, t.to
            )));
        }
    }
    Ok(parent)
}

/// Step 5: every back-edge target binds a μ-variable; forward branching
/// becomes conjunction, back-edges become variables. Back-edges are listed
/// before forward edges at each state.
pub fn automaton_to_formula(a: &PacketAutomaton) -> Result<Formula, AutError> {
    branch_parents(a)?;
    let targets: BTreeSet<usize> = a.trans.iter().filter(|t| t.back).map(|t| t.to).collect();
    let mut names: HashMap<usize, String> = HashMap::new();
    let mut order = Vec::new();
    preorder(a, a.source, &mut order);
    for q in order {
        if targets.contains(&q) {
            let k = names.len();
            names.insert(q, mu_name(k));
        }
    }
    Ok(state_formula(a, a.source, &names))
}

fn mu_name(k: usize) -> String {
    let letter = (b'A' + (k % 26) as u8) as char;
    if k < 26 {
        letter.to_string()
    } else {
        format!("{letter}{}", k / 26)
    }
}

fn preorder(a: &PacketAutomaton, q: usize, out: &mut Vec<usize>) {
    out.push(q);
    for t in a.out(q).filter(|t| !t.back) {
        preorder(a, t.to, out);
    }
}

fn state_formula(a: &PacketAutomaton, q: usize, names: &HashMap<usize, String>) -> Formula {
    let mut parts = Vec::new();
    for t in a.out(q).filter(|t| t.back) {
        parts.push(t.packet.wrap(Formula::Var(names[&t.to].clone())));
    }
    for t in a.out(q).filter(|t| !t.back) {
        parts.push(t.packet.wrap(state_formula(a, t.to, names)));
    }
    let body = Formula::conj(parts);
    match names.get(&q) {
        Some(x) => Formula::mu(x.clone(), body),
        None => body,
    }
}

/// Automata produced by each stage of the pipeline.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub components: Vec<PacketAutomaton>,
    pub product: PacketAutomaton,
    pub expanded: PacketAutomaton,
    pub formula: Formula,
}

impl Pipeline {
    pub fn state_counts(&self) -> (Vec<usize>, usize, usize) {
        (
            self.components.iter().map(PacketAutomaton::num_states).collect(),
            self.product.num_states(),
            self.expanded.num_states(),
        )
    }
}

/// Steps 2-5 on already embedded formulae.
pub fn pipeline(parts: &[Formula], cap: usize) -> Result<Pipeline, AutError> {
    let mut used = BTreeSet::new();
    let mut components = Vec::new();
    for f in parts {
        let g = freshen_binders(f, &mut used);
        components.push(formula_to_automaton(&g)?);
    }
    let mut prod = PacketAutomaton::unit();
    for c in &components {
        prod = if prod.trans.is_empty() && prod.num_states() == 1 {
            c.clone()
        } else {
            product(&prod, c)?
        };
    }
    let expanded = expand_to_branch(&prod, cap)?;
    let formula = automaton_to_formula(&expanded)?;
    Ok(Pipeline {
        components,
        product: prod,
        expanded,
        formula,
    })
}

pub fn interleave_formulas(parts: &[Formula]) -> Result<Formula, AutError> {
    Ok(pipeline(parts, DEFAULT_STATE_CAP)?.formula)
}

/// Steps 1-5 on a session environment.
pub fn rec_interleave_pipeline(
    delta: &BTreeMap<SessionRole, LocalAssertion>,
    cap: usize,
) -> Result<Pipeline, AutError> {
    let mut parts = Vec::new();
    for (at, l) in delta {
        parts.push(embed(l, at)?);
    }
    pipeline(&parts, cap)
}

pub fn rec_interleave(delta: &BTreeMap<SessionRole, LocalAssertion>) -> Result<Formula, AutError> {
    Ok(rec_interleave_pipeline(delta, DEFAULT_STATE_CAP)?.formula)
}

/// Renames quantified variables of `f` that clash with `used`, then adds
/// all of `f`'s binders to `used`.
pub fn freshen_binders(f: &Formula, used: &mut BTreeSet<String>) -> Formula {
    match f {
        Formula::Forall(x, s, g) => {
            let (x2, g2) = if used.contains(x) {
                let mut avoid = used.clone();
                avoid.extend(g.free_vars());
                avoid.extend(g.free_names());
                let x2 = fresh_name(x, &avoid);
                let g2 = if *s == Sort::Session {
                    g.rename_session(x, &x2)
                } else {
                    g.subst_var(x, &Expr::var(x2.clone()))
                };
                (x2, g2)
            } else {
                (x.clone(), (**g).clone())
            };
            used.insert(x2.clone());
            Formula::forall(x2, *s, freshen_binders(&g2, used))
        }
        Formula::And(a, b) => {
            let a2 = freshen_binders(a, used);
            Formula::and(a2, freshen_binders(b, used))
        }
        Formula::Implies(a, b) => Formula::implies((**a).clone(), freshen_binders(b, used)),
        Formula::Must(p, g) => Formula::must(p.clone(), freshen_binders(g, used)),
        Formula::Mu(x, g) => Formula::mu(x.clone(), freshen_binders(g, used)),
        other => other.clone(),
    }
}

/// Strong bisimilarity of the sources of `a` and `b` over packet labels,
/// by partition refinement on the disjoint union.
pub fn bisimilar(a: &PacketAutomaton, b: &PacketAutomaton) -> bool {
    let off = a.num_states();
    let n = off + b.num_states();
    let mut labels: HashMap<String, usize> = HashMap::new();
    let mut edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (base, aut) in [(0, a), (off, b)] {
        for t in &aut.trans {
            let k = labels.len();
            let l = *labels.entry(t.packet.label()).or_insert(k);
            edges[base + t.from].push((l, base + t.to));
        }
    }
    let mut block = vec![0usize; n];
    loop {
        let mut sigs: HashMap<(usize, BTreeSet<(usize, usize)>), usize> = HashMap::new();
        let mut next = vec![0usize; n];
        for q in 0..n {
            let sig: BTreeSet<(usize, usize)> = edges[q].iter().map(|&(l, t)| (l, block[t])).collect();
            let k = sigs.len();
            next[q] = *sigs.entry((block[q], sig)).or_insert(k);
        }
        let stable = sigs.len() == block.iter().collect::<BTreeSet<_>>().len();
        block = next;
        if stable {
            break;
        }
    }
    block[a.source] == block[off + b.source]
}

/// Finite packet-label sequences of length at most `depth` from the source
/// (every prefix is included).
pub fn label_sequences(a: &PacketAutomaton, depth: usize) -> BTreeSet<Vec<String>> {
    let mut out = BTreeSet::new();
    let mut stack = vec![(a.source, Vec::<String>::new())];
    while let Some((q, seq)) = stack.pop() {
        out.insert(seq.clone());
        if seq.len() == depth {
            continue;
        }
        for t in a.out(q) {
            let mut s = seq.clone();
            s.push(t.packet.label());
            stack.push((t.to, s));
        }
    }
    out
}

/// α-normal form: μ-variables and quantified variables renamed in binding
/// order.
pub fn alpha_normal(f: &Formula) -> Formula {
    let mut k = 0;
    alpha_rec(f, &mut k)
}

fn alpha_rec(f: &Formula, k: &mut usize) -> Formula {
    match f {
        Formula::Mu(x, g) => {
            let x2 = format!("_X{k}");
            *k += 1;
            Formula::mu(x2.clone(), alpha_rec(&g.subst_mu(x, &Formula::Var(x2)), k))
        }
        Formula::Forall(x, s, g) => {
            let x2 = format!("_v{k}");
            *k += 1;
            let g2 = if *s == Sort::Session {
                g.rename_session(x, &x2)
            } else {
                g.subst_var(x, &Expr::var(x2.clone()))
            };
            Formula::forall(x2, *s, alpha_rec(&g2, k))
        }
        Formula::And(a, b) => {
            let a2 = alpha_rec(a, k);
            Formula::and(a2, alpha_rec(b, k))
        }
        Formula::Implies(a, b) => Formula::implies((**a).clone(), alpha_rec(b, k)),
        Formula::Must(p, g) => Formula::must(p.clone(), alpha_rec(g, k)),
        other => other.clone(),
    }
}

pub fn alpha_eq(f: &Formula, g: &Formula) -> bool {
    alpha_normal(f) == alpha_normal(g)
}

/// Formulae equal up to α-renaming of the translated automata: compares
/// them by bisimulation.
pub fn automata_equivalent(f: &Formula, g: &Formula) -> Result<bool, AutError> {
    Ok(bisimilar(&formula_to_automaton(f)?, &formula_to_automaton(g)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{parse_assertion, parse_formula};

    fn f(src: &str) -> Formula {
        parse_formula(src).unwrap()
    }

    const TWO_LOOPS: &str = "mu A. [1](mu B. [2] A /\\ [3](mu C. [4] B /\\ [2]([1] C /\\ [4] A))) /\\ [3](mu D. [4] A /\\ [1](mu E. [2] D /\\ [4]([2] A /\\ [3] E)))";

    #[test]
    fn translation_examples() {
        let a = formula_to_automaton(&f("mu X. [1][2] X")).unwrap();
        assert_eq!(a.num_states(), 2);
        assert_eq!(a.trans.len(), 2);
        assert!(a.trans[1].back);
        assert_eq!(formula_to_automaton(&Formula::True).unwrap().num_states(), 1);
        let b = formula_to_automaton(&f("[1] true")).unwrap();
        assert_eq!((b.num_states(), b.trans.len(), b.trans[0].back), (2, 1, false));
        assert!(matches!(formula_to_automaton(&f("{x > 1}")), Err(AutError::NotPacketForm(_))));
    }

    #[test]
    fn two_loop_pipeline() {
        let p = pipeline(&[f("mu X. [1][2] X"), f("mu Y. [3][4] Y")], DEFAULT_STATE_CAP).unwrap();
        assert_eq!(p.state_counts(), (vec![2, 2], 4, 7));
        let expected = f(TWO_LOOPS);
        assert!(alpha_eq(&p.formula, &expected), "{}", print_formula(&p.formula));
        assert!(automata_equivalent(&p.formula, &expected).unwrap());
        assert!(bisimilar(&p.product, &p.expanded));
    }

    #[test]
    fn singleton_and_empty() {
        let d = BTreeMap::from([(
            SessionRole::new("s", "p"),
            parse_assertion("mu t{y: true}(x:Int). q!{l(z:Nat){true}<skip>. t(y: true)} : true").unwrap(),
        )]);
        let g = rec_interleave(&d).unwrap();
        assert!(alpha_eq(&g, &f("mu X. forall z:Nat. [s[p,q]!(z)]({true} /\\ [<skip>] X)")), "{}", print_formula(&g));
        assert_eq!(rec_interleave(&BTreeMap::new()).unwrap(), Formula::True);
    }

    #[test]
    fn product_laws() {
        let a = formula_to_automaton(&f("mu X. [1][2] X")).unwrap();
        let u = PacketAutomaton::unit();
        assert!(bisimilar(&product(&a, &u).unwrap(), &a));
        let b = formula_to_automaton(&f("[3]([4] true /\\ [5] true)")).unwrap();
        assert!(bisimilar(&product(&a, &b).unwrap(), &product(&b, &a).unwrap()));
    }

    #[test]
    fn expansion_fixed_points() {
        let tree = formula_to_automaton(&f("[1]([2] true /\\ [3] true) /\\ [4] true")).unwrap();
        assert_eq!(expand_to_branch(&tree, 100).unwrap(), tree);
        let cyc = formula_to_automaton(&f("mu X. [1][2][3] X")).unwrap();
        assert_eq!(expand_to_branch(&cyc, 100).unwrap(), cyc);
    }

    #[test]
    fn round_trip_and_dot() {
        let a = formula_to_automaton(&f(TWO_LOOPS)).unwrap();
        assert_eq!(a.num_states(), 7);
        let back = automaton_to_formula(&a).unwrap();
        assert_eq!(back, f(TWO_LOOPS));
        let dot = a.to_dot("two_loops");
        assert!(dot.contains("style=dashed"));
        assert!(dot.starts_with("digraph"));
    }

    #[test]
    fn non_branch_rejected() {
        let diamond = product(
            &formula_to_automaton(&f("[1] true")).unwrap(),
            &formula_to_automaton(&f("[2] true")).unwrap(),
        )
        .unwrap();
        assert_eq!(diamond.num_states(), 4);
        assert!(matches!(automaton_to_formula(&diamond), Err(AutError::NotBranchForm(_))));
        let e = expand_to_branch(&diamond, 100).unwrap();
        assert_eq!(e.num_states(), 5);
        assert!(automaton_to_formula(&e).is_ok());
        assert!(matches!(expand_to_branch(&diamond, 3), Err(AutError::Budget(3))));
    }
}

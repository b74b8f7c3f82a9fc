//! Seeded generators for the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;

use mpsa::automata::{AutPacket, PacketAutomaton, Transition};
use mpsa::shuffle::Packet;
use mpsa::{parse_env_file, parse_process_with, ActPat, EnvFile, Process};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// A generated environment file together with a process for it.
#[derive(Debug, Clone)]
pub struct Instance {
    pub spec: String,
    pub process: String,
    /// The local assertion of the single `delta` entry.
    pub assertion: String,
}

impl Instance {
    pub fn load(&self) -> (EnvFile, Process) {
        let file = parse_env_file(&self.spec).unwrap_or_else(|e| panic!("{e}\n{}", self.spec));
        let p = parse_process_with(&self.process, &file.state_types())
            .unwrap_or_else(|e| panic!("{e}\n{}", self.process));
        (file, p)
    }
}

/// Naming scheme for one session endpoint.
#[derive(Debug, Clone)]
pub struct Shape {
    pub session: &'static str,
    pub me: &'static str,
    pub peer: &'static str,
    pub state: &'static str,
    pub label: &'static str,
    pub var: &'static str,
    pub max_comms: usize,
    pub recursion: bool,
    /// Free value variable used in payloads, predicates and guards.
    pub free: Option<&'static str>,
}

impl Shape {
    pub fn simple() -> Shape {
        Shape {
            session: "s",
            me: "S",
            peer: "C",
            state: "x",
            label: "l",
            var: "y",
            max_comms: 3,
            recursion: true,
            free: None,
        }
    }

    pub fn other() -> Shape {
        Shape {
            session: "k",
            me: "K",
            peer: "D",
            state: "z",
            label: "m",
            var: "w",
            max_comms: 3,
            recursion: false,
            free: None,
        }
    }
}

struct Gen<'a> {
    rng: &'a mut StdRng,
    sh: &'a Shape,
    in_loop: bool,
}

impl Gen<'_> {
    fn st(&self) -> String {
        format!("@{}", self.sh.state)
    }

    fn update(&mut self) -> String {
        let st = self.st();
        let mut opts = vec!["skip".to_string(), format!("{st} := 0"), format!("{st} := 2")];
        if !self.in_loop {
            opts.push(format!("{st}++"));
            opts.push("skip".into());
        }
        opts.choose(self.rng).unwrap().clone()
    }

    fn select_pred(&mut self, y: &str, scope: &[String]) -> (String, Vec<String>) {
        let st = self.st();
        let any = vec![st.clone(), format!("{st} + 1"), "0".into(), "2".into()];
        let mut opts = vec![
            ("true".to_string(), any),
            (format!("{y} == {st}"), vec![st.clone()]),
            (format!("{y} >= {st}"), vec![st.clone(), format!("{st} + 1")]),
            (format!("{y} > 0"), vec![format!("{st} + 1"), "1".into(), "2".into()]),
            (format!("{y} <= {st} + 1"), vec![st.clone(), format!("{st} + 1")]),
        ];
        if let Some(v) = self.sh.free {
            opts.push((format!("{y} <= {v}"), vec![v.to_string()]));
        }
        if let Some(v) = scope.choose(self.rng) {
            opts.push((format!("{y} >= {v}"), vec![v.clone()]));
            opts.push((format!("{y} == {v}"), vec![v.clone()]));
        }
        opts.choose(self.rng).unwrap().clone()
    }

    fn payload(&mut self, good: &[String], scope: &[String]) -> String {
        if self.rng.gen_bool(0.6) {
            return good.choose(self.rng).unwrap().clone();
        }
        let st = self.st();
        let mut all = vec![st.clone(), format!("{st} + 1"), "0".into(), "1".into(), "3".into()];
        all.extend(scope.iter().cloned());
        all.extend(self.sh.free.map(String::from));
        all.choose(self.rng).unwrap().clone()
    }

    fn branch_pred(&mut self, y: &str) -> String {
        let st = self.st();
        [
            "true".to_string(),
            format!("{y} > {st}"),
            format!("{y} <= 3"),
            format!("{y} == {st}"),
        ]
        .choose(self.rng)
        .unwrap()
        .clone()
    }

    fn guard(&mut self) -> String {
        let st = self.st();
        let mut opts = vec!["true".to_string(), format!("{st} > 1"), format!("{st} <= 2")];
        if let Some(v) = self.sh.free {
            opts.push(format!("{st} < {v}"));
        }
        opts.choose(self.rng).unwrap().clone()
    }

    /// Process update matching `u`, occasionally mutated.
    fn proc_update(&mut self, u: &str) -> String {
        if self.rng.gen_bool(0.1) {
            self.update()
        } else {
            u.to_string()
        }
    }

    /// Assertion and process text for communications `i..n`.
    fn chain(&mut self, i: usize, n: usize, scope: &mut Vec<String>, tail: (&str, &str)) -> (String, String) {
        if i == n {
            return (tail.0.to_string(), tail.1.to_string());
        }
        let sh = self.sh.clone();
        let y = format!("{}{}", sh.var, i + 1);
        let lab = format!("{}{}", sh.label, i + 1);
        let (s, me, peer) = (sh.session, sh.me, sh.peer);
        if self.rng.gen_bool(0.5) {
            let (pred, good) = self.select_pred(&y, scope);
            let e = self.payload(&good, scope);
            let u = self.update();
            let pu = self.proc_update(&u);
            scope.push(y.clone());
            let (la, lp) = self.chain(i + 1, n, scope, tail);
            scope.pop();
            if self.rng.gen_bool(0.2) {
                let g = self.guard();
                let (pred2, good2) = self.select_pred(&y, scope);
                let e2 = self.payload(&good2, scope);
                let a = format!(
                    "{peer}!{{ {lab}a({y}:Nat){{{pred}}}<{u}>. {la}; {lab}b({y}:Nat){{{pred2}}}<{u}>. {la} }}"
                );
                let p = format!(
                    "{s}[{me},{peer}]!{{ {g} :: {lab}a<{e}>({y})<{pu}>. {lp}; !({g}) :: {lab}b<{e2}>({y})<{pu}>. {lp} }}"
                );
                (a, p)
            } else {
                (
                    format!("{peer}!{{ {lab}({y}:Nat){{{pred}}}<{u}>. {la} }}"),
                    format!("{s}[{me},{peer}]!{{ true :: {lab}<{e}>({y})<{pu}>. {lp} }}"),
                )
            }
        } else {
            let pred = self.branch_pred(&y);
            let u = self.update();
            let pu = self.proc_update(&u);
            scope.push(y.clone());
            let (la, lp) = self.chain(i + 1, n, scope, tail);
            scope.pop();
            (
                format!("{peer}?{{ {lab}({y}:Nat){{{pred}}}<{u}>. {la} }}"),
                format!("{s}[{peer},{me}]?{{ {lab}({y})<{pu}>. {lp} }}"),
            )
        }
    }
}

/// Local assertion at `session[me]` and a process, both over `@state`.
pub fn endpoint(rng: &mut StdRng, sh: &Shape) -> (String, String) {
    let n = rng.gen_range(1..=sh.max_comms);
    let rec = sh.recursion && rng.gen_bool(0.25);
    let mut g = Gen { rng, sh, in_loop: rec };
    if rec {
        let (a, p) = g.chain(0, n, &mut Vec::new(), ("t(y: true)", "X<n>"));
        (
            format!("mu t{{y: true}}(x:Int). {a} : true"),
            format!("mu X(n := 0). {p}"),
        )
    } else {
        g.chain(0, n, &mut Vec::new(), ("end", "0"))
    }
}

pub const PRECONDITIONS: [&str; 4] = ["true", "@x > 0", "@x >= 2", "@x == 1"];

/// Single session `s`, process playing `S` against `C`, state `@x: Int = 0 .. 3`.
pub fn simple(rng: &mut StdRng) -> Instance {
    let pre = *PRECONDITIONS.choose(rng).unwrap();
    let (a, p) = endpoint(rng, &Shape::simple());
    Instance {
        spec: format!("precondition: {pre}\nstate: @x: Int = 0 .. 3\ndelta: s[S]: {a}\n"),
        process: p,
        assertion: a,
    }
}

/// Two non-recursive endpoints on disjoint sessions and state variables.
pub fn disjoint_pair(rng: &mut StdRng) -> ((String, String), (String, String)) {
    let mut a = Shape::simple();
    a.recursion = false;
    let b = Shape::other();
    (endpoint(rng, &a), endpoint(rng, &b))
}

/// Instance for the pure round trip: one or two state variables, at most
/// three communications, single assignments only.
pub fn pure_instance(rng: &mut StdRng) -> (String, String, BTreeMap<String, i64>) {
    let mut sh = Shape::simple();
    sh.recursion = false;
    let (a, p) = endpoint(rng, &sh);
    let mut state = BTreeMap::new();
    state.insert("x".to_string(), rng.gen_range(0..=3));
    if rng.gen_bool(0.5) {
        state.insert("z".to_string(), rng.gen_range(0..=3));
    }
    (a, p, state)
}

/// Random directed packet automaton: a forward tree plus back-edges and
/// cross edges, labelled by one of a few plain packets.
pub fn packet_automaton(rng: &mut StdRng, max_states: usize) -> PacketAutomaton {
    let n = rng.gen_range(1..=max_states);
    let labels: Vec<AutPacket> = (1..=4)
        .map(|i| {
            AutPacket::plain(Packet {
                pat: ActPat::Label(i.to_string()),
                guard: None,
                update: None,
            })
        })
        .collect();
    let mut trans = Vec::new();
    for q in 1..n {
        let parent = rng.gen_range(0..q);
        trans.push(Transition {
            from: parent,
            to: q,
            packet: labels.choose(rng).unwrap().clone(),
            back: false,
        });
    }
    let extra = rng.gen_range(0..=n);
    for _ in 0..extra {
        let from = rng.gen_range(0..n);
        let to = rng.gen_range(0..n);
        trans.push(Transition {
            from,
            to,
            packet: labels.choose(rng).unwrap().clone(),
            back: to <= from,
        });
    }
    PacketAutomaton {
        names: (0..n).map(|i| i.to_string()).collect(),
        source: 0,
        trans,
    }
}

/// Branch-form automaton: forward edges form a tree, other edges go back to
/// an ancestor.
pub fn branch_automaton(rng: &mut StdRng, max_states: usize) -> PacketAutomaton {
    let n = rng.gen_range(1..=max_states);
    let mut parent = vec![0usize];
    let mut trans = Vec::new();
    let label = |rng: &mut StdRng| {
        AutPacket::plain(Packet {
            pat: ActPat::Label(rng.gen_range(1..=4).to_string()),
            guard: None,
            update: None,
        })
    };
    for q in 1..n {
        let from = rng.gen_range(0..q);
        parent.push(from);
        trans.push(Transition {
            from,
            to: q,
            packet: label(rng),
            back: false,
        });
    }
    for q in 0..n {
        if rng.gen_bool(0.4) {
            let mut anc = vec![q];
            let mut a = q;
            while a != 0 {
                a = parent[a];
                anc.push(a);
            }
            let to = *anc.choose(rng).unwrap();
            trans.push(Transition {
                from: q,
                to,
                packet: label(rng),
                back: true,
            });
        }
    }
    PacketAutomaton {
        names: (0..n).map(|i| i.to_string()).collect(),
        source: 0,
        trans,
    }
}

/// Every order-preserving merge of `a` and `b`.
pub fn brute_shuffle<T: Clone>(a: &[T], b: &[T]) -> Vec<Vec<T>> {
    if a.is_empty() {
        return vec![b.to_vec()];
    }
    if b.is_empty() {
        return vec![a.to_vec()];
    }
    let mut out = Vec::new();
    for mut rest in brute_shuffle(&a[1..], b) {
        rest.insert(0, a[0].clone());
        out.push(rest);
    }
    for mut rest in brute_shuffle(a, &b[1..]) {
        rest.insert(0, b[0].clone());
        out.push(rest);
    }
    out
}

pub fn binomial(n: u64, k: u64) -> u64 {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

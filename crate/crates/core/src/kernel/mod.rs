//! Abstract syntax for stateful local assertions, processes, actions and
//! HML formulae, together with the text syntax (lexer, parser, printer).

mod lexer;
mod names;
mod parser;
mod printer;
mod sorts;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use names::{fresh_name, FreeNames};
pub use parser::{
    parse_assertion, parse_assertion_with, parse_env_file, parse_expr, parse_formula, parse_formula_with,
    parse_process, parse_process_with, parse_state, parse_update, EnvFile, ParseError, StateDecl,
};
pub use printer::{
    print_actpat, print_assertion, print_expr, print_formula, print_process, print_state, print_update,
};
pub(crate) use parser::infer_binder_ty;
pub use sorts::{SortCtx, SortError, Ty};

/// Message sorts. `Session` only ranges over session names bound by
/// session-accept quantifiers in environment formulae.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sort {
    Int,
    Nat,
    Bool,
    Session,
}

impl Sort {
    pub fn keyword(self) -> &'static str {
        match self {
            Sort::Int => "Int",
            Sort::Nat => "Nat",
            Sort::Bool => "Bool",
            Sort::Session => "Session",
        }
    }

    pub fn ty(self) -> Option<Ty> {
        match self {
            Sort::Int | Sort::Nat => Some(Ty::Num),
            Sort::Bool => Some(Ty::Bool),
            Sort::Session => None,
        }
    }
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// Enumeration bounds for the value sorts. `Nat` ranges over `0..bound`,
/// `Int` over `-bound/2 .. bound - bound/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SortBound(pub i64);

impl Default for SortBound {
    fn default() -> Self {
        SortBound(32)
    }
}

impl SortBound {
    pub fn domain(self, sort: Sort) -> Vec<Value> {
        let b = self.0.max(1);
        match sort {
            Sort::Nat => (0..b).map(Value::Int).collect(),
            Sort::Int => (-(b / 2)..b - b / 2).map(Value::Int).collect(),
            Sort::Bool => vec![Value::Bool(false), Value::Bool(true)],
            Sort::Session => Vec::new(),
        }
    }

    pub fn contains(self, sort: Sort, v: &Value) -> bool {
        let b = self.0.max(1);
        match (sort, v) {
            (Sort::Nat, Value::Int(n)) => (0..b).contains(n),
            (Sort::Int, Value::Int(n)) => (-(b / 2)..b - b / 2).contains(n),
            (Sort::Bool, Value::Bool(_)) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Value {
    Int(i64),
    Bool(bool),
}

impl Value {
    pub fn ty(self) -> Ty {
        match self {
            Value::Int(_) => Ty::Num,
            Value::Bool(_) => Ty::Bool,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "/\\",
            BinOp::Or => "\\/",
        }
    }

    /// Binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul => 6,
        }
    }
}

/// Expressions over message variables (`x`) and state variables (`@x`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Expr {
    Lit(Value),
    Var(String),
    State(String),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

/// A predicate is a boolean-sorted expression.
pub type Predicate = Expr;

impl Expr {
    pub fn int(n: i64) -> Expr {
        Expr::Lit(Value::Int(n))
    }

    pub fn bool(b: bool) -> Expr {
        Expr::Lit(Value::Bool(b))
    }

    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn state(name: impl Into<String>) -> Expr {
        Expr::State(name.into())
    }

    pub fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    pub fn not(e: Expr) -> Expr {
        Expr::Unary(UnOp::Not, Box::new(e))
    }

    /// Conjunction that drops literal `true` operands.
    pub fn and(l: Expr, r: Expr) -> Expr {
        match (l, r) {
            (Expr::Lit(Value::Bool(true)), r) => r,
            (l, Expr::Lit(Value::Bool(true))) => l,
            (l, r) => Expr::bin(BinOp::And, l, r),
        }
    }

    pub fn eq(l: Expr, r: Expr) -> Expr {
        Expr::bin(BinOp::Eq, l, r)
    }

    pub fn is_true(&self) -> bool {
        matches!(self, Expr::Lit(Value::Bool(true)))
    }

    pub fn conj(items: impl IntoIterator<Item = Expr>) -> Expr {
        items.into_iter().fold(Expr::bool(true), Expr::and)
    }
}

/// One assignment `@var := expr`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assign {
    pub var: String,
    pub expr: Expr,
}

/// A state update: simultaneous assignments to distinct state variables.
/// The empty update is `skip`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Update(pub Vec<Assign>);

impl Update {
    pub fn skip() -> Update {
        Update(Vec::new())
    }

    pub fn assign(var: impl Into<String>, expr: Expr) -> Update {
        Update(vec![Assign { var: var.into(), expr }])
    }

    /// `@var++`
    pub fn incr(var: &str) -> Update {
        Update::assign(var, Expr::bin(BinOp::Add, Expr::state(var), Expr::int(1)))
    }

    pub fn is_skip(&self) -> bool {
        self.0.is_empty()
    }

    /// Assignments sorted by variable; two updates denote the same action
    /// label iff their normalized forms are equal.
    pub fn normalized(&self) -> Update {
        let mut v = self.0.clone();
        v.sort_by(|a, b| a.var.cmp(&b.var));
        Update(v)
    }

    pub fn assigned(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|a| a.var.as_str())
    }
}

/// A branch `l(x:S){A}<E>.L` of a selection or branching assertion.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AssertBranch {
    pub label: String,
    pub var: String,
    pub sort: Sort,
    pub pred: Predicate,
    pub update: Update,
    pub cont: LocalAssertion,
}

/// Asserted local session type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LocalAssertion {
    Select {
        partner: String,
        branches: Vec<AssertBranch>,
    },
    Branch {
        partner: String,
        branches: Vec<AssertBranch>,
    },
    /// `mu t{y: init_pred}(param: sort). body : invariant`
    Rec {
        var: String,
        param: String,
        sort: Sort,
        init_var: String,
        init_pred: Predicate,
        invariant: Predicate,
        body: Box<LocalAssertion>,
    },
    /// `t(arg_var: arg_pred)`
    RecCall {
        var: String,
        arg_var: String,
        arg_pred: Predicate,
    },
    End,
}

/// Branch `e :: l<e'>(x)<E>.P` of a guarded command.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SelectBranch {
    pub guard: Expr,
    pub label: String,
    pub payload: Expr,
    pub var: String,
    pub update: Update,
    pub cont: Process,
}

/// Branch `l(x)<E>.P` of a branching process.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RecvBranch {
    pub label: String,
    pub var: String,
    pub update: Update,
    pub cont: Process,
}

/// Session channel endpoint `k[from,to]` as used by process prefixes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Chan {
    pub session: String,
    pub from: String,
    pub to: String,
}

impl Chan {
    pub fn new(session: impl Into<String>, from: impl Into<String>, to: impl Into<String>) -> Chan {
        Chan {
            session: session.into(),
            from: from.into(),
            to: to.into(),
        }
    }
}

impl fmt::Display for Chan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{},{}]", self.session, self.from, self.to)
    }
}

/// Asserted processes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Process {
    Inact,
    Request {
        shared: String,
        arity: u32,
        var: String,
        body: Box<Process>,
    },
    Accept {
        shared: String,
        role: u32,
        var: String,
        body: Box<Process>,
    },
    Select {
        chan: Chan,
        branches: Vec<SelectBranch>,
    },
    Branch {
        chan: Chan,
        branches: Vec<RecvBranch>,
    },
    Par(Box<Process>, Box<Process>),
    RecDef {
        var: String,
        param: String,
        init: Expr,
        body: Box<Process>,
    },
    RecCall {
        var: String,
        arg: Expr,
    },
}

impl Process {
    pub fn par(l: Process, r: Process) -> Process {
        Process::Par(Box::new(l), Box::new(r))
    }
}

/// Session endpoint `s[p]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SessionRole {
    pub session: String,
    pub role: String,
}

impl SessionRole {
    pub fn new(session: impl Into<String>, role: impl Into<String>) -> SessionRole {
        SessionRole {
            session: session.into(),
            role: role.into(),
        }
    }
}

impl fmt::Display for SessionRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.session, self.role)
    }
}

/// Labels of the transition system. Communication actions carry the branch
/// label so that distinct branches of one choice are distinguishable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Input {
        chan: Chan,
        label: String,
        value: Value,
    },
    Output {
        chan: Chan,
        label: String,
        value: Value,
    },
    Update(Update),
    SessionAccept {
        shared: String,
        at: SessionRole,
    },
}

/// Action patterns inside must modalities. The argument of a communication
/// pattern is a variable (bound by an enclosing `forall`) or a value after
/// instantiation; `label: None` matches any branch label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActPat {
    Output {
        chan: Chan,
        label: Option<String>,
        arg: Expr,
    },
    Input {
        chan: Chan,
        label: Option<String>,
        arg: Expr,
    },
    Update(Update),
    Accept {
        shared: String,
        session: String,
        role: String,
    },
    /// Abstract label, as in `[1]` or `[A]`; matched by no process action.
    Label(String),
}

/// Positive HML with predicates and recursion.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Formula {
    True,
    And(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Must(ActPat, Box<Formula>),
    Pred(Predicate),
    Forall(String, Sort, Box<Formula>),
    Mu(String, Box<Formula>),
    Var(String),
}

impl Formula {
    pub fn and(l: Formula, r: Formula) -> Formula {
        Formula::And(Box::new(l), Box::new(r))
    }

    pub fn implies(l: Formula, r: Formula) -> Formula {
        Formula::Implies(Box::new(l), Box::new(r))
    }

    pub fn must(a: ActPat, f: Formula) -> Formula {
        Formula::Must(a, Box::new(f))
    }

    pub fn forall(x: impl Into<String>, s: Sort, f: Formula) -> Formula {
        Formula::Forall(x.into(), s, Box::new(f))
    }

    pub fn mu(x: impl Into<String>, f: Formula) -> Formula {
        Formula::Mu(x.into(), Box::new(f))
    }

    pub fn label(l: impl Into<String>, f: Formula) -> Formula {
        Formula::must(ActPat::Label(l.into()), f)
    }

    /// Right-nested conjunction; empty input gives `true`.
    pub fn conj(items: Vec<Formula>) -> Formula {
        let mut it = items.into_iter().rev();
        match it.next() {
            None => Formula::True,
            Some(last) => it.fold(last, |acc, f| Formula::and(f, acc)),
        }
    }

    /// Positivity: antecedents of implications contain no modality,
    /// quantifier or recursion.
    pub fn check_positive(&self) -> Result<(), String> {
        match self {
            Formula::True | Formula::Pred(_) | Formula::Var(_) => Ok(()),
            Formula::And(a, b) => {
                a.check_positive()?;
                b.check_positive()
            }
            Formula::Implies(a, b) => {
                if !a.is_propositional() {
                    return Err(format!(
                        "antecedent `{}` is not a predicate",
                        print_formula(a)
                    ));
                }
                b.check_positive()
            }
            Formula::Must(_, f) | Formula::Forall(_, _, f) | Formula::Mu(_, f) => {
                f.check_positive()
            }
        }
    }

    /// Built only from `true`, predicates and conjunction.
    pub fn is_propositional(&self) -> bool {
        match self {
            Formula::True | Formula::Pred(_) => true,
            Formula::And(a, b) => a.is_propositional() && b.is_propositional(),
            _ => false,
        }
    }

    /// Number of nodes.
    pub fn size(&self) -> usize {
        match self {
            Formula::True | Formula::Pred(_) | Formula::Var(_) => 1,
            Formula::And(a, b) | Formula::Implies(a, b) => 1 + a.size() + b.size(),
            Formula::Must(_, f) | Formula::Forall(_, _, f) | Formula::Mu(_, f) => 1 + f.size(),
        }
    }
}

/// Virtual state: finite map from state-variable names (without `@`) to values.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct VirtualState(pub BTreeMap<String, Value>);

impl VirtualState {
    pub fn new() -> VirtualState {
        VirtualState::default()
    }

    pub fn with(mut self, var: impl Into<String>, v: Value) -> VirtualState {
        self.0.insert(var.into(), v);
        self
    }

    pub fn get(&self, var: &str) -> Option<Value> {
        self.0.get(var).copied()
    }
}

/// Per-role local assertions for one shared name (projection pre-applied).
pub type RoleTable = BTreeMap<String, LocalAssertion>;

/// The judgement environment `C; Gamma; Delta`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Env {
    pub precondition: Predicate,
    pub gamma: BTreeMap<String, RoleTable>,
    pub delta: BTreeMap<SessionRole, LocalAssertion>,
}

impl Default for Expr {
    fn default() -> Self {
        Expr::bool(true)
    }
}

impl Env {
    pub fn new() -> Env {
        Env::default()
    }

    pub fn with_delta(mut self, at: SessionRole, l: LocalAssertion) -> Env {
        self.delta.insert(at, l);
        self
    }
}

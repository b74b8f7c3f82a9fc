//! Recursive-descent parser for the text syntax of assertions, processes,
//! formulae, states and environment files.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::lexer::{tokenize, Tok, Token};
use super::sorts::{SortCtx, SortError, Ty};
use super::{
    ActPat, AssertBranch, Assign, BinOp, Chan, Env, Expr, Formula, LocalAssertion, Process,
    RecvBranch, RoleTable, SelectBranch, SessionRole, Sort, SortBound, UnOp, Update, Value,
    VirtualState,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{line}:{col}: syntax error: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error(transparent)]
    Sort(#[from] SortError),
    #[error("unbound recursion variable `{0}`")]
    UnboundRec(String),
    #[error("positivity violation: {0}")]
    Positivity(String),
    #[error("ill-formed: {0}")]
    Malformed(String),
}

impl ParseError {
    pub(crate) fn syntax(line: usize, col: usize, msg: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            line,
            col,
            msg: msg.into(),
        }
    }
}

type PResult<T> = Result<T, ParseError>;

/// Declared state variable with its value range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDecl {
    pub var: String,
    pub sort: Sort,
    pub range: Option<(i64, i64)>,
}

impl StateDecl {
    pub fn domain(&self, bound: SortBound) -> Vec<Value> {
        match (self.sort, self.range) {
            (Sort::Bool, _) => bound.domain(Sort::Bool),
            (_, Some((lo, hi))) => (lo..=hi).map(Value::Int).collect(),
            (s, None) => bound.domain(s),
        }
    }
}

/// Contents of an environment file: precondition, state declarations,
/// shared-name tables and session environment.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EnvFile {
    pub env: Env,
    pub state: Vec<StateDecl>,
}

impl EnvFile {
    pub fn state_types(&self) -> BTreeMap<String, Ty> {
        self.state
            .iter()
            .filter_map(|d| d.sort.ty().map(|t| (d.var.clone(), t)))
            .collect()
    }

    /// Every valuation of the declared state variables.
    pub fn all_states(&self, bound: SortBound) -> Vec<VirtualState> {
        let mut out = vec![VirtualState::new()];
        for d in &self.state {
            let dom = d.domain(bound);
            out = out
                .into_iter()
                .flat_map(|s| dom.iter().map(move |v| s.clone().with(d.var.clone(), *v)))
                .collect();
        }
        out
    }
}

pub fn parse_assertion(src: &str) -> PResult<LocalAssertion> {
    parse_assertion_with(src, &BTreeMap::new())
}

pub fn parse_assertion_with(src: &str, state: &BTreeMap<String, Ty>) -> PResult<LocalAssertion> {
    let mut p = Parser::new(src)?;
    let l = p.assertion()?;
    p.expect_eof()?;
    check_assertion(&l, &mut SortCtx::new().with_state(state.clone()), &mut Vec::new())?;
    Ok(l)
}

pub fn parse_process(src: &str) -> PResult<Process> {
    parse_process_with(src, &BTreeMap::new())
}

pub fn parse_process_with(src: &str, state: &BTreeMap<String, Ty>) -> PResult<Process> {
    let mut p = Parser::new(src)?;
    let proc_ = p.process()?;
    p.expect_eof()?;
    check_process(&proc_, &mut SortCtx::new().with_state(state.clone()), &mut Vec::new())?;
    Ok(proc_)
}

pub fn parse_formula(src: &str) -> PResult<Formula> {
    parse_formula_with(src, &BTreeMap::new())
}

pub fn parse_formula_with(src: &str, state: &BTreeMap<String, Ty>) -> PResult<Formula> {
    let mut p = Parser::new(src)?;
    let f = p.formula()?;
    p.expect_eof()?;
    f.check_positive().map_err(ParseError::Positivity)?;
    check_formula(&f, &mut SortCtx::open().with_state(state.clone()), &mut Vec::new())?;
    Ok(f)
}

/// Parses a bare expression; sorts are not checked.
pub fn parse_expr(src: &str) -> PResult<Expr> {
    let mut p = Parser::new(src)?;
    let e = p.expr()?;
    p.expect_eof()?;
    Ok(e)
}

pub fn parse_update(src: &str) -> PResult<Update> {
    let mut p = Parser::new(src)?;
    let u = p.update()?;
    p.expect_eof()?;
    Ok(u)
}

/// `@x = 11, @b = true`; the empty string is the empty state.
pub fn parse_state(src: &str) -> PResult<VirtualState> {
    let mut p = Parser::new(src)?;
    let mut st = VirtualState::new();
    let braced = p.eat("{");
    while !p.at_eof() && !p.check("}") {
        p.expect("@")?;
        let x = p.ident()?;
        if !p.eat("=") {
            p.expect(":=")?;
        }
        let v = p.value()?;
        if st.0.insert(x.clone(), v).is_some() {
            return Err(ParseError::Malformed(format!("state variable @{x} given twice")));
        }
        if !p.eat(",") {
            break;
        }
    }
    if braced {
        p.expect("}")?;
    }
    p.expect_eof()?;
    Ok(st)
}

pub fn parse_env_file(src: &str) -> PResult<EnvFile> {
    let mut p = Parser::new(src)?;
    let mut file = EnvFile::default();
    let mut have_pre = false;
    while !p.at_eof() {
        let (line, col) = p.pos();
        let section = p.ident()?;
        p.expect(":")?;
        match section.as_str() {
            "precondition" => {
                if have_pre {
                    return Err(ParseError::syntax(line, col, "duplicate precondition"));
                }
                have_pre = true;
                file.env.precondition = p.expr()?;
            }
            "state" => {
                p.expect("@")?;
                let var = p.ident()?;
                p.expect(":")?;
                let sort = p.sort()?;
                let range = if p.eat("=") {
                    let lo = p.int()?;
                    let hi = if p.eat("..") { p.int()? } else { lo };
                    if hi < lo {
                        return Err(ParseError::Malformed(format!("empty range for @{var}")));
                    }
                    Some((lo, hi))
                } else {
                    None
                };
                if file.state.iter().any(|d| d.var == var) {
                    return Err(ParseError::Malformed(format!("state variable @{var} declared twice")));
                }
                file.state.push(StateDecl { var, sort, range });
            }
            "gamma" => {
                let name = p.ident()?;
                p.expect("->")?;
                p.expect("{")?;
                let mut table = RoleTable::new();
                loop {
                    let role = p.role()?;
                    p.expect(":")?;
                    let l = p.assertion()?;
                    if table.insert(role.clone(), l).is_some() {
                        return Err(ParseError::Malformed(format!("role {role} repeated in {name}")));
                    }
                    if !p.eat(",") {
                        break;
                    }
                }
                p.expect("}")?;
                if file.env.gamma.insert(name.clone(), table).is_some() {
                    return Err(ParseError::Malformed(format!("shared name {name} declared twice")));
                }
            }
            "delta" => {
                let s = p.ident()?;
                p.expect("[")?;
                let role = p.role()?;
                p.expect("]")?;
                p.expect(":")?;
                let l = p.assertion()?;
                let at = SessionRole::new(s, role);
                if file.env.delta.insert(at.clone(), l).is_some() {
                    return Err(ParseError::Malformed(format!("{at} declared twice")));
                }
            }
            other => {
                return Err(ParseError::syntax(line, col, format!("unknown section `{other}`")));
            }
        }
    }
    let tys = file.state_types();
    let mut ctx = SortCtx::new().with_state(tys.clone());
    ctx.check(&file.env.precondition, Ty::Bool)?;
    for l in file.env.delta.values() {
        check_assertion(l, &mut SortCtx::new().with_state(tys.clone()), &mut Vec::new())?;
    }
    for t in file.env.gamma.values() {
        for l in t.values() {
            check_assertion(l, &mut SortCtx::new().with_state(tys.clone()), &mut Vec::new())?;
        }
    }
    Ok(file)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    mus: Vec<String>,
}

const FORMULA_FOLLOW: &[&str] = &["/\\", "=>", ")"];

impl Parser {
    fn new(src: &str) -> PResult<Parser> {
        Ok(Parser {
            toks: tokenize(src)?,
            pos: 0,
            mus: Vec::new(),
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn pos(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        let (l, c) = self.pos();
        let found = match self.peek() {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(n) => format!("`{n}`"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".to_string(),
        };
        Err(ParseError::syntax(l, c, format!("{}, found {found}", msg.into())))
    }

    fn check(&self, sym: &str) -> bool {
        matches!(self.peek(), Tok::Sym(s) if *s == sym)
    }

    fn check_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat(&mut self, sym: &str) -> bool {
        if self.check(sym) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.check_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, sym: &str) -> PResult<()> {
        if self.eat(sym) {
            Ok(())
        } else {
            self.err(format!("expected `{sym}`"))
        }
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    fn expect_eof(&self) -> PResult<()> {
        if self.at_eof() {
            Ok(())
        } else {
            self.err("expected end of input")
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.err("expected identifier"),
        }
    }

    fn int(&mut self) -> PResult<i64> {
        let neg = self.eat("-");
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(if neg { -n } else { n })
            }
            _ => self.err("expected integer"),
        }
    }

    /// Role or label: identifier or integer.
    fn role(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            Tok::Int(n) => {
                self.bump();
                Ok(n.to_string())
            }
            _ => self.err("expected role or label"),
        }
    }

    fn value(&mut self) -> PResult<Value> {
        if self.eat_kw("true") {
            return Ok(Value::Bool(true));
        }
        if self.eat_kw("false") {
            return Ok(Value::Bool(false));
        }
        Ok(Value::Int(self.int()?))
    }

    fn sort(&mut self) -> PResult<Sort> {
        let s = match self.peek() {
            Tok::Ident(s) => match s.as_str() {
                "Int" => Sort::Int,
                "Nat" => Sort::Nat,
                "Bool" => Sort::Bool,
                "Session" => Sort::Session,
                _ => return self.err("expected sort"),
            },
            _ => return self.err("expected sort"),
        };
        self.bump();
        Ok(s)
    }

    // ---- expressions ----

    fn expr(&mut self) -> PResult<Expr> {
        let mut l = self.and_expr()?;
        while self.eat("\\/") {
            let r = self.and_expr()?;
            l = Expr::bin(BinOp::Or, l, r);
        }
        Ok(l)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut l = self.not_expr()?;
        while self.eat("/\\") {
            let r = self.not_expr()?;
            l = Expr::bin(BinOp::And, l, r);
        }
        Ok(l)
    }

    fn not_expr(&mut self) -> PResult<Expr> {
        if self.eat("!") {
            return Ok(Expr::Unary(UnOp::Not, Box::new(self.not_expr()?)));
        }
        self.cmp_expr()
    }

    fn cmp_expr(&mut self) -> PResult<Expr> {
        let l = self.add_expr()?;
        let op = match self.peek() {
            Tok::Sym("<") => BinOp::Lt,
            Tok::Sym("<=") => BinOp::Le,
            Tok::Sym(">") => BinOp::Gt,
            Tok::Sym(">=") => BinOp::Ge,
            Tok::Sym("==") => BinOp::Eq,
            Tok::Sym("!=") => BinOp::Ne,
            _ => return Ok(l),
        };
        self.bump();
        let r = self.add_expr()?;
        Ok(Expr::bin(op, l, r))
    }

    fn add_expr(&mut self) -> PResult<Expr> {
        let mut l = self.mul_expr()?;
        loop {
            let op = if self.check("+") {
                BinOp::Add
            } else if self.check("-") {
                BinOp::Sub
            } else {
                return Ok(l);
            };
            self.bump();
            let r = self.mul_expr()?;
            l = Expr::bin(op, l, r);
        }
    }

    fn mul_expr(&mut self) -> PResult<Expr> {
        let mut l = self.unary_expr()?;
        while self.eat("*") {
            let r = self.unary_expr()?;
            l = Expr::bin(BinOp::Mul, l, r);
        }
        Ok(l)
    }

    fn unary_expr(&mut self) -> PResult<Expr> {
        if self.eat("-") {
            if let Tok::Int(n) = self.peek().clone() {
                self.bump();
                return Ok(Expr::int(-n));
            }
            return Ok(Expr::Unary(UnOp::Neg, Box::new(self.unary_expr()?)));
        }
        self.atom_expr()
    }

    fn atom_expr(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(Expr::int(n))
            }
            Tok::Ident(s) if s == "true" => {
                self.bump();
                Ok(Expr::bool(true))
            }
            Tok::Ident(s) if s == "false" => {
                self.bump();
                Ok(Expr::bool(false))
            }
            Tok::Ident(s) => {
                self.bump();
                Ok(Expr::Var(s))
            }
            Tok::Sym("@") => {
                self.bump();
                Ok(Expr::State(self.ident()?))
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            _ => self.err("expected expression"),
        }
    }

    fn update(&mut self) -> PResult<Update> {
        if self.eat_kw("skip") {
            return Ok(Update::skip());
        }
        let mut assigns: Vec<Assign> = Vec::new();
        loop {
            self.expect("@")?;
            let var = self.ident()?;
            let expr = if self.eat("++") {
                Expr::bin(BinOp::Add, Expr::State(var.clone()), Expr::int(1))
            } else {
                self.expect(":=")?;
                self.add_expr()?
            };
            if assigns.iter().any(|a| a.var == var) {
                return Err(ParseError::Malformed(format!("@{var} assigned twice in one update")));
            }
            assigns.push(Assign { var, expr });
            if !self.eat(",") {
                break;
            }
        }
        Ok(Update(assigns))
    }

    // ---- assertions ----

    fn assertion(&mut self) -> PResult<LocalAssertion> {
        if self.eat_kw("end") {
            return Ok(LocalAssertion::End);
        }
        if self.eat_kw("mu") {
            let var = self.ident()?;
            self.expect("{")?;
            let init_var = self.ident()?;
            self.expect(":")?;
            let init_pred = self.expr()?;
            self.expect("}")?;
            self.expect("(")?;
            let param = self.ident()?;
            self.expect(":")?;
            let sort = self.sort()?;
            self.expect(")")?;
            self.expect(".")?;
            let body = self.assertion()?;
            self.expect(":")?;
            let invariant = self.expr()?;
            return Ok(LocalAssertion::Rec {
                var,
                param,
                sort,
                init_var,
                init_pred,
                invariant,
                body: Box::new(body),
            });
        }
        let name = self.role()?;
        if self.eat("(") {
            let arg_var = self.ident()?;
            self.expect(":")?;
            let arg_pred = self.expr()?;
            self.expect(")")?;
            return Ok(LocalAssertion::RecCall {
                var: name,
                arg_var,
                arg_pred,
            });
        }
        let select = if self.eat("!") {
            true
        } else if self.eat("?") {
            false
        } else {
            return self.err("expected `!`, `?` or `(`");
        };
        self.expect("{")?;
        let mut branches = Vec::new();
        loop {
            branches.push(self.assert_branch()?);
            if !self.eat(";") {
                break;
            }
        }
        self.expect("}")?;
        Ok(if select {
            LocalAssertion::Select {
                partner: name,
                branches,
            }
        } else {
            LocalAssertion::Branch {
                partner: name,
                branches,
            }
        })
    }

    fn assert_branch(&mut self) -> PResult<AssertBranch> {
        let label = self.role()?;
        self.expect("(")?;
        let var = self.ident()?;
        self.expect(":")?;
        let sort = self.sort()?;
        self.expect(")")?;
        self.expect("{")?;
        let pred = self.expr()?;
        self.expect("}")?;
        self.expect("<")?;
        let update = self.update()?;
        self.expect(">")?;
        self.expect(".")?;
        let cont = self.assertion()?;
        Ok(AssertBranch {
            label,
            var,
            sort,
            pred,
            update,
            cont,
        })
    }

    // ---- processes ----

    fn process(&mut self) -> PResult<Process> {
        let mut l = self.process_unit()?;
        while self.eat("|") {
            let r = self.process_unit()?;
            l = Process::par(l, r);
        }
        Ok(l)
    }

    fn process_unit(&mut self) -> PResult<Process> {
        if let Tok::Int(0) = self.peek() {
            self.bump();
            return Ok(Process::Inact);
        }
        if self.eat("(") {
            let p = self.process()?;
            self.expect(")")?;
            return Ok(p);
        }
        for (kw, is_req) in [("req", true), ("acc", false)] {
            if self.check_kw(kw) && matches!(self.peek_at(1), Tok::Ident(_)) {
                self.bump();
                let shared = self.ident()?;
                self.expect("[")?;
                let n = self.int()?;
                let n = u32::try_from(n).map_err(|_| ParseError::Malformed(format!("bad role index {n}")))?;
                self.expect("]")?;
                self.expect("(")?;
                let var = self.ident()?;
                self.expect(")")?;
                self.expect(".")?;
                let body = Box::new(self.process_unit()?);
                return Ok(if is_req {
                    Process::Request {
                        shared,
                        arity: n,
                        var,
                        body,
                    }
                } else {
                    Process::Accept {
                        shared,
                        role: n,
                        var,
                        body,
                    }
                });
            }
        }
        if self.check_kw("mu") && matches!(self.peek_at(1), Tok::Ident(_)) {
            self.bump();
            let var = self.ident()?;
            self.expect("(")?;
            let param = self.ident()?;
            self.expect(":=")?;
            let init = self.expr()?;
            self.expect(")")?;
            self.expect(".")?;
            let body = self.process_unit()?;
            return Ok(Process::RecDef {
                var,
                param,
                init,
                body: Box::new(body),
            });
        }
        let name = self.ident()?;
        if self.eat("<") {
            let arg = self.add_expr()?;
            self.expect(">")?;
            return Ok(Process::RecCall { var: name, arg });
        }
        self.expect("[")?;
        let from = self.role()?;
        self.expect(",")?;
        let to = self.role()?;
        self.expect("]")?;
        let chan = Chan::new(name, from, to);
        if self.eat("!") {
            self.expect("{")?;
            let mut branches = Vec::new();
            loop {
                let guard = self.expr()?;
                self.expect("::")?;
                let label = self.role()?;
                self.expect("<")?;
                let payload = self.add_expr()?;
                self.expect(">")?;
                self.expect("(")?;
                let var = self.ident()?;
                self.expect(")")?;
                self.expect("<")?;
                let update = self.update()?;
                self.expect(">")?;
                self.expect(".")?;
                let cont = self.process()?;
                branches.push(SelectBranch {
                    guard,
                    label,
                    payload,
                    var,
                    update,
                    cont,
                });
                if !self.eat(";") {
                    break;
                }
            }
            self.expect("}")?;
            Ok(Process::Select { chan, branches })
        } else if self.eat("?") {
            self.expect("{")?;
            let mut branches = Vec::new();
            loop {
                let label = self.role()?;
                self.expect("(")?;
                let var = self.ident()?;
                self.expect(")")?;
                self.expect("<")?;
                let update = self.update()?;
                self.expect(">")?;
                self.expect(".")?;
                let cont = self.process()?;
                branches.push(RecvBranch {
                    label,
                    var,
                    update,
                    cont,
                });
                if !self.eat(";") {
                    break;
                }
            }
            self.expect("}")?;
            Ok(Process::Branch { chan, branches })
        } else {
            self.err("expected `!` or `?`")
        }
    }

    // ---- formulae ----

    fn formula(&mut self) -> PResult<Formula> {
        let l = self.conj_formula()?;
        if self.eat("=>") {
            if !l.is_propositional() {
                return Err(ParseError::Positivity(format!(
                    "antecedent `{}` is not a predicate",
                    super::print_formula(&l)
                )));
            }
            let r = self.formula()?;
            return Ok(Formula::implies(l, r));
        }
        Ok(l)
    }

    fn conj_formula(&mut self) -> PResult<Formula> {
        let mut items = vec![self.unit_formula()?];
        while self.eat("/\\") {
            items.push(self.unit_formula()?);
        }
        Ok(Formula::conj(items))
    }

    fn follows_unit(&self) -> bool {
        self.at_eof() || FORMULA_FOLLOW.iter().any(|s| self.check(s))
    }

    fn unit_formula(&mut self) -> PResult<Formula> {
        if self.eat_kw("forall") {
            let x = self.ident()?;
            self.expect(":")?;
            let s = self.sort()?;
            self.expect(".")?;
            let body = self.formula()?;
            return Ok(Formula::forall(x, s, body));
        }
        if self.check_kw("mu") && matches!(self.peek_at(1), Tok::Ident(_)) && *self.peek_at(2) == Tok::Sym(".") {
            self.bump();
            let x = self.ident()?;
            self.expect(".")?;
            self.mus.push(x.clone());
            let body = self.formula();
            self.mus.pop();
            return Ok(Formula::mu(x, body?));
        }
        if self.eat("[") {
            let a = self.actpat()?;
            self.expect("]")?;
            let body = self.unit_formula()?;
            return Ok(Formula::must(a, body));
        }
        if self.check_kw("true") && self.is_unit_end(1) {
            self.bump();
            return Ok(Formula::True);
        }
        if self.eat("{") {
            let e = self.expr()?;
            self.expect("}")?;
            return Ok(Formula::Pred(e));
        }
        if self.check("(") {
            let save = self.pos;
            self.bump();
            if let Ok(f) = self.formula() {
                if self.eat(")") && self.follows_unit() {
                    return Ok(f);
                }
            }
            self.pos = save;
            let e = self.not_expr()?;
            return Ok(Formula::Pred(e));
        }
        if let Tok::Ident(x) = self.peek().clone() {
            if self.mus.contains(&x) && self.is_unit_end(1) {
                self.bump();
                return Ok(Formula::Var(x));
            }
        }
        let e = self.not_expr()?;
        Ok(Formula::Pred(e))
    }

    fn is_unit_end(&self, k: usize) -> bool {
        match self.peek_at(k) {
            Tok::Eof => true,
            Tok::Sym(s) => FORMULA_FOLLOW.contains(s),
            _ => false,
        }
    }

    fn pat_arg(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Ident(s) if s == "true" || s == "false" => Ok(Expr::Lit(self.value()?)),
            Tok::Ident(s) => {
                self.bump();
                Ok(Expr::Var(s))
            }
            _ => Ok(Expr::Lit(Value::Int(self.int()?))),
        }
    }

    fn actpat(&mut self) -> PResult<ActPat> {
        if self.eat("<") {
            let u = self.update()?;
            self.expect(">")?;
            return Ok(ActPat::Update(u));
        }
        if let Tok::Int(n) = self.peek().clone() {
            self.bump();
            return Ok(ActPat::Label(n.to_string()));
        }
        let name = self.ident()?;
        if self.check("]") {
            return Ok(ActPat::Label(name));
        }
        if self.eat("(") {
            let session = self.ident()?;
            self.expect("[")?;
            let role = self.role()?;
            self.expect("]")?;
            self.expect(")")?;
            return Ok(ActPat::Accept {
                shared: name,
                session,
                role,
            });
        }
        self.expect("[")?;
        let from = self.role()?;
        self.expect(",")?;
        let to = self.role()?;
        self.expect("]")?;
        let chan = Chan::new(name, from, to);
        let output = if self.eat("!") {
            true
        } else if self.eat("?") {
            false
        } else {
            return self.err("expected `!` or `?`");
        };
        let label = if self.check("(") { None } else { Some(self.role()?) };
        self.expect("(")?;
        let arg = self.pat_arg()?;
        self.expect(")")?;
        Ok(if output {
            ActPat::Output { chan, label, arg }
        } else {
            ActPat::Input { chan, label, arg }
        })
    }
}

// ---- well-formedness and sorting passes ----

pub(crate) fn check_update(u: &Update, ctx: &mut SortCtx) -> PResult<()> {
    for a in &u.0 {
        let want = ctx.infer(&Expr::State(a.var.clone()))?.unwrap_or(Ty::Num);
        ctx.check(&a.expr, want)?;
    }
    Ok(())
}

fn check_assertion(
    l: &LocalAssertion,
    ctx: &mut SortCtx,
    recs: &mut Vec<(String, bool)>,
) -> PResult<()> {
    match l {
        LocalAssertion::End => Ok(()),
        LocalAssertion::Select { branches, .. } | LocalAssertion::Branch { branches, .. } => {
            let mut seen = BTreeSet::new();
            for b in branches {
                if !seen.insert(&b.label) {
                    return Err(ParseError::Malformed(format!("duplicate label `{}`", b.label)));
                }
                if b.sort == Sort::Session {
                    return Err(ParseError::Malformed("Session is not a message sort".into()));
                }
                ctx.push(&b.var, b.sort.ty());
                ctx.check(&b.pred, Ty::Bool)?;
                check_update(&b.update, ctx)?;
                let saved: Vec<_> = recs.iter().map(|r| r.1).collect();
                for r in recs.iter_mut() {
                    r.1 = true;
                }
                let res = check_assertion(&b.cont, ctx, recs);
                for (r, g) in recs.iter_mut().zip(saved) {
                    r.1 = g;
                }
                ctx.pop();
                res?;
            }
            Ok(())
        }
        LocalAssertion::Rec {
            var,
            param,
            sort,
            init_var,
            init_pred,
            invariant,
            body,
        } => {
            ctx.push(init_var, sort.ty());
            ctx.check(init_pred, Ty::Bool)?;
            ctx.pop();
            ctx.push(param, sort.ty());
            ctx.check(invariant, Ty::Bool)?;
            recs.push((var.clone(), false));
            let res = check_assertion(body, ctx, recs);
            recs.pop();
            ctx.pop();
            res
        }
        LocalAssertion::RecCall {
            var,
            arg_var,
            arg_pred,
        } => {
            match recs.iter().rev().find(|r| &r.0 == var) {
                None => return Err(ParseError::UnboundRec(var.clone())),
                Some((_, false)) => {
                    return Err(ParseError::Malformed(format!(
                        "recursion variable `{var}` is not guarded"
                    )))
                }
                Some(_) => {}
            }
            ctx.push(arg_var, None);
            let res = ctx.check(arg_pred, Ty::Bool);
            ctx.pop();
            Ok(res?)
        }
    }
}

pub(crate) fn check_process(p: &Process, ctx: &mut SortCtx, recs: &mut Vec<String>) -> PResult<()> {
    match p {
        Process::Inact => Ok(()),
        Process::Request { body, .. } | Process::Accept { body, .. } => {
            check_process(body, ctx, recs)
        }
        Process::Select { branches, .. } => {
            let mut seen = BTreeSet::new();
            for b in branches {
                if !seen.insert(&b.label) {
                    return Err(ParseError::Malformed(format!("duplicate label `{}`", b.label)));
                }
                ctx.check(&b.guard, Ty::Bool)?;
                let t = ctx.infer(&b.payload)?;
                ctx.push(&b.var, t);
                let res = check_update(&b.update, ctx).and_then(|_| check_process(&b.cont, ctx, recs));
                ctx.pop();
                res?;
            }
            Ok(())
        }
        Process::Branch { branches, .. } => {
            let mut seen = BTreeSet::new();
            for b in branches {
                if !seen.insert(&b.label) {
                    return Err(ParseError::Malformed(format!("duplicate label `{}`", b.label)));
                }
                ctx.push(&b.var, None);
                let res = check_update(&b.update, ctx).and_then(|_| check_process(&b.cont, ctx, recs));
                ctx.pop();
                res?;
            }
            Ok(())
        }
        Process::Par(a, b) => {
            check_process(a, ctx, recs)?;
            check_process(b, ctx, recs)
        }
        Process::RecDef {
            var,
            param,
            init,
            body,
        } => {
            let t = ctx.infer(init)?;
            ctx.push(param, t.or(Some(Ty::Num)));
            recs.push(var.clone());
            let res = check_process(body, ctx, recs);
            recs.pop();
            ctx.pop();
            res
        }
        Process::RecCall { var, arg } => {
            if !recs.contains(var) {
                return Err(ParseError::UnboundRec(var.clone()));
            }
            ctx.infer(arg)?;
            Ok(())
        }
    }
}

fn check_formula(f: &Formula, ctx: &mut SortCtx, mus: &mut Vec<String>) -> PResult<()> {
    match f {
        Formula::True => Ok(()),
        Formula::Pred(e) => Ok(ctx.check(e, Ty::Bool)?),
        Formula::And(a, b) | Formula::Implies(a, b) => {
            check_formula(a, ctx, mus)?;
            check_formula(b, ctx, mus)
        }
        Formula::Must(a, body) => {
            if let ActPat::Update(u) = a {
                check_update(u, ctx)?;
            }
            check_formula(body, ctx, mus)
        }
        Formula::Forall(x, s, body) => {
            if *s == Sort::Session {
                return check_formula(body, ctx, mus);
            }
            ctx.push(x, s.ty());
            let res = check_formula(body, ctx, mus);
            ctx.pop();
            res
        }
        Formula::Mu(x, body) => {
            mus.push(x.clone());
            let res = check_formula(body, ctx, mus);
            mus.pop();
            res
        }
        Formula::Var(x) => {
            if mus.contains(x) {
                Ok(())
            } else {
                Err(ParseError::UnboundRec(x.clone()))
            }
        }
    }
}

/// Type of an input binder, inferred from its uses in the update and the
/// continuation; `None` when the binder is unconstrained.
pub(crate) fn infer_binder_ty(
    var: &str,
    update: &Update,
    cont: &Process,
    state: &BTreeMap<String, Ty>,
) -> Option<Ty> {
    let mut ctx = SortCtx::new().with_state(state.clone());
    ctx.push(var, None);
    let _ = check_update(update, &mut ctx).and_then(|_| check_process(cont, &mut ctx, &mut Vec::new()));
    ctx.outermost(var).flatten()
}

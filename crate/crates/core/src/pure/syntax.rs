//! Concrete syntax of encoded processes and pure formulas.
//!
//! Outputs carry a combining overline on the first character of the
//! channel (`ā_x⟨5⟩`, `x̄⟨@x + 1⟩`, `s̄[p,q]⟨l:3⟩(y)`); the precomposed `ā`
//! is accepted on input. Inputs are written
//! `a_x(y).P` or `s[q,p]?{l(y:Int).P; m(z).Q}`.

use thiserror::Error;

use super::{PiBranch, PiChan, PiFormula, PiPat, PiProcess, PiTerm, Slot};
use crate::kernel::{parse_expr, print_expr, Chan, Expr, Sort, Ty};

const BAR: char = '\u{304}';

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("pi syntax error at offset {pos}: {msg}")]
pub struct PiParseError {
    pub pos: usize,
    pub msg: String,
}

fn chan_name(c: &PiChan) -> String {
    match c {
        PiChan::Session(k) => k.to_string(),
        PiChan::Cell(x) => super::cell(x),
        PiChan::Update(x) => x.clone(),
    }
}

fn bar(name: &str) -> String {
    let mut it = name.chars();
    let mut out = String::new();
    if let Some(c) = it.next() {
        out.push(c);
        out.push(BAR);
    }
    out.extend(it);
    out
}

fn ty_name(t: Ty) -> &'static str {
    match t {
        Ty::Num => "Int",
        Ty::Bool => "Bool",
    }
}

fn print_term(t: &PiTerm) -> String {
    match t {
        PiTerm::Expr(e) | PiTerm::Quote(e) => print_expr(e),
        PiTerm::Eval { slot, subst } => {
            let s = match slot {
                Slot::Var(v) => v.clone(),
                Slot::Quoted(q) => format!("{{{}}}", print_expr(q)),
            };
            let ys: Vec<String> = subst.iter().map(|(_, e)| print_expr(e)).collect();
            let xs: Vec<&str> = subst.iter().map(|(x, _)| x.as_str()).collect();
            format!("eval({s}[{}/{}])", ys.join(","), xs.join(","))
        }
    }
}

pub fn print_pi_process(p: &PiProcess) -> String {
    let mut out = String::new();
    write_proc(&mut out, p);
    out
}

fn write_proc(out: &mut String, p: &PiProcess) {
    match p {
        PiProcess::Par(ps) => {
            for (i, q) in ps.iter().enumerate() {
                if i > 0 {
                    out.push_str(" | ");
                }
                write_prefix(out, q);
            }
        }
        other => write_prefix(out, other),
    }
}

fn write_prefix(out: &mut String, p: &PiProcess) {
    match p {
        PiProcess::Nil => out.push('0'),
        PiProcess::Par(_) => {
            out.push('(');
            write_proc(out, p);
            out.push(')');
        }
        PiProcess::Send { chan, label, value, bind, cont } => {
            out.push_str(&bar(&chan_name(chan)));
            out.push('⟨');
            if let Some(l) = label {
                out.push_str(l);
                out.push(':');
            }
            out.push_str(&print_term(value));
            out.push('⟩');
            if let Some(b) = bind {
                out.push_str(&format!("({b})"));
            }
            write_cont(out, cont);
        }
        PiProcess::Recv { chan, branches } => {
            let plain = !matches!(chan, PiChan::Session(_))
                && branches.len() == 1
                && branches[0].label.is_none()
                && branches[0].ty.is_none();
            out.push_str(&chan_name(chan));
            if plain {
                out.push_str(&format!("({}).", branches[0].var));
                write_prefix(out, &branches[0].cont);
            } else {
                out.push_str("?{");
                for (i, b) in branches.iter().enumerate() {
                    if i > 0 {
                        out.push_str("; ");
                    }
                    out.push_str(b.label.as_deref().unwrap_or("_"));
                    out.push('(');
                    out.push_str(&b.var);
                    if let Some(t) = b.ty {
                        out.push(':');
                        out.push_str(ty_name(t));
                    }
                    out.push_str(").");
                    write_prefix(out, &b.cont);
                }
                out.push('}');
            }
        }
        PiProcess::Repl(q) => {
            out.push('!');
            write_prefix(out, q);
        }
        PiProcess::Cond(bs) => {
            out.push_str("cond{");
            for (i, (g, q)) in bs.iter().enumerate() {
                if i > 0 {
                    out.push_str("; ");
                }
                out.push_str(&format!("({}) -> ", print_expr(g)));
                write_proc(out, q);
            }
            out.push('}');
        }
        PiProcess::Init { shared, role, request, var, cont } => {
            match request {
                Some(n) => out.push_str(&format!("req {shared}[{n}]({var}).")),
                None => out.push_str(&format!("acc {shared}[{role}]({var}).")),
            }
            write_prefix(out, cont);
        }
        PiProcess::Rec { var, param, init, body } => {
            out.push_str(&format!("mu {var}({param} := {}).", print_expr(init)));
            write_prefix(out, body);
        }
        PiProcess::Call { var, arg } => out.push_str(&format!("{var}⟨{}⟩", print_expr(arg))),
        PiProcess::Skip(cont) => {
            out.push_str("skip");
            write_cont(out, cont);
        }
    }
}

fn write_cont(out: &mut String, cont: &PiProcess) {
    if *cont != PiProcess::Nil {
        out.push('.');
        write_prefix(out, cont);
    }
}

fn print_arg(e: &Expr) -> String {
    match e {
        Expr::Var(x) => x.clone(),
        other => print_expr(other),
    }
}

pub fn print_pi_pat(p: &PiPat) -> String {
    match p {
        PiPat::SessionOut { chan, label, arg } => {
            format!("{chan}!{}({})", label.as_deref().unwrap_or(""), print_arg(arg))
        }
        PiPat::SessionIn { chan, label, arg } => {
            format!("{chan}?{}({})", label.as_deref().unwrap_or(""), print_arg(arg))
        }
        PiPat::Accept { shared, session, role } => format!("{shared}({session}[{role}])"),
        PiPat::Cell { var, arg } => format!("{}⟨{}⟩", bar(&super::cell(var)), print_arg(arg)),
        PiPat::Update { var, expr } => format!("{}⟨{}⟩", bar(var), print_expr(expr)),
        PiPat::Skip => "skip".into(),
        PiPat::Label(l) => l.clone(),
    }
}

fn level(f: &PiFormula) -> u8 {
    match f {
        PiFormula::Forall(..) | PiFormula::Mu(..) | PiFormula::Implies(..) => 0,
        PiFormula::And(..) => 1,
        _ => 2,
    }
}

pub fn print_pi_formula(f: &PiFormula) -> String {
    let mut out = String::new();
    write_formula(&mut out, f, 0);
    out
}

fn write_formula(out: &mut String, f: &PiFormula, min: u8) {
    if level(f) < min {
        out.push('(');
        write_formula(out, f, 0);
        out.push(')');
        return;
    }
    match f {
        PiFormula::True => out.push_str("true"),
        PiFormula::Var(x) => out.push_str(x),
        PiFormula::Pred(e) => out.push_str(&format!("{{{}}}", print_expr(e))),
        PiFormula::And(a, b) => {
            write_formula(out, a, 2);
            out.push_str(" /\\ ");
            write_formula(out, b, 1);
        }
        PiFormula::Implies(a, b) => {
            out.push_str(&format!("{{{}}} => ", print_expr(a)));
            write_formula(out, b, 0);
        }
        PiFormula::Forall(x, s, g) => {
            out.push_str(&format!("forall {x}:{s}. "));
            write_formula(out, g, 0);
        }
        PiFormula::Mu(x, g) => {
            out.push_str(&format!("mu {x}. "));
            write_formula(out, g, 0);
        }
        PiFormula::Must(p, g) => {
            out.push('[');
            out.push_str(&print_pi_pat(p));
            out.push(']');
            if matches!(**g, PiFormula::Must(..)) {
                write_formula(out, g, 2);
            } else if level(g) < 2 {
                out.push('(');
                write_formula(out, g, 0);
                out.push(')');
            } else {
                out.push(' ');
                write_formula(out, g, 2);
            }
        }
    }
}

struct Cur {
    s: Vec<char>,
    i: usize,
}

type R<T> = Result<T, PiParseError>;

impl Cur {
    fn new(src: &str) -> Cur {
        Cur { s: src.chars().collect(), i: 0 }
    }

    fn err<T>(&self, msg: impl Into<String>) -> R<T> {
        Err(PiParseError { pos: self.i, msg: msg.into() })
    }

    fn ws(&mut self) {
        while self.i < self.s.len() && self.s[self.i].is_whitespace() {
            self.i += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.ws();
        self.s.get(self.i).copied()
    }

    fn rest_starts(&mut self, t: &str) -> bool {
        self.ws();
        let tc: Vec<char> = t.chars().collect();
        self.s[self.i..].starts_with(&tc)
    }

    fn eat(&mut self, t: &str) -> bool {
        if self.rest_starts(t) {
            self.i += t.chars().count();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: &str) -> R<()> {
        if self.eat(t) {
            Ok(())
        } else {
            self.err(format!("expected `{t}`"))
        }
    }

    fn keyword(&mut self, k: &str) -> bool {
        self.ws();
        let save = self.i;
        if self.eat(k) && !self.s.get(self.i).is_some_and(|c| c.is_alphanumeric() || *c == '_') {
            return true;
        }
        self.i = save;
        false
    }

    /// Identifier; the flag reports an overline after its first character.
    fn ident(&mut self) -> R<(String, bool)> {
        self.ws();
        let start = self.i;
        let mut out = String::new();
        let mut barred = false;
        while let Some(&c) = self.s.get(self.i) {
            if c == BAR && self.i == start + 1 {
                barred = true;
            } else if c == 'ā' && self.i == start {
                out.push('a');
                barred = true;
            } else if c.is_alphanumeric() || c == '_' || c == '\'' || c == '#' {
                out.push(c);
            } else {
                break;
            }
            self.i += 1;
        }
        if out.is_empty() {
            return self.err("expected identifier");
        }
        Ok((out, barred))
    }

    /// Raw text up to the `close` that balances `open`, consuming `close`.
    fn until(&mut self, open: char, close: char) -> R<String> {
        let mut depth = 0usize;
        let start = self.i;
        while let Some(&c) = self.s.get(self.i) {
            if c == close && depth == 0 {
                let txt: String = self.s[start..self.i].iter().collect();
                self.i += 1;
                return Ok(txt);
            }
            if c == open {
                depth += 1;
            } else if c == close {
                depth -= 1;
            }
            self.i += 1;
        }
        self.err(format!("unclosed `{open}`"))
    }

    fn expr(&self, txt: &str) -> R<Expr> {
        parse_expr(txt.trim()).map_err(|e| PiParseError { pos: self.i, msg: e.to_string() })
    }

    fn chan_suffix(&mut self, name: String) -> R<Option<Chan>> {
        if self.s.get(self.i) == Some(&'[') {
            self.i += 1;
            let (p, _) = self.ident()?;
            self.expect(",")?;
            let (q, _) = self.ident()?;
            self.expect("]")?;
            Ok(Some(Chan::new(name, p, q)))
        } else {
            Ok(None)
        }
    }

    fn proc(&mut self) -> R<PiProcess> {
        let mut items = vec![self.prefix()?];
        while self.eat("|") {
            items.push(self.prefix()?);
        }
        Ok(if items.len() == 1 { items.pop().expect("one") } else { PiProcess::Par(items) })
    }

    fn cont(&mut self) -> R<PiProcess> {
        if self.eat(".") {
            self.prefix()
        } else {
            Ok(PiProcess::Nil)
        }
    }

    fn prefix(&mut self) -> R<PiProcess> {
        match self.peek() {
            None => return self.err("unexpected end of input"),
            Some('0') => {
                self.i += 1;
                return Ok(PiProcess::Nil);
            }
            Some('(') => {
                self.i += 1;
                let p = self.proc()?;
                self.expect(")")?;
                return Ok(p);
            }
            Some('!') => {
                self.i += 1;
                return Ok(PiProcess::Repl(Box::new(self.prefix()?)));
            }
            _ => {}
        }
        if self.keyword("skip") {
            return Ok(PiProcess::Skip(Box::new(self.cont()?)));
        }
        if self.keyword("cond") {
            self.expect("{")?;
            let mut bs = Vec::new();
            loop {
                self.expect("(")?;
                let g = self.until('(', ')')?;
                let g = self.expr(&g)?;
                self.expect("->")?;
                bs.push((g, self.proc()?));
                if !self.eat(";") {
                    break;
                }
            }
            self.expect("}")?;
            return Ok(PiProcess::Cond(bs));
        }
        for (kw, req) in [("req", true), ("acc", false)] {
            if self.keyword(kw) {
                let (shared, _) = self.ident()?;
                self.expect("[")?;
                let (role, _) = self.ident()?;
                self.expect("]")?;
                self.expect("(")?;
                let (var, _) = self.ident()?;
                self.expect(")")?;
                self.expect(".")?;
                let cont = Box::new(self.prefix()?);
                let request = if req {
                    Some(role.parse().map_err(|_| PiParseError { pos: self.i, msg: "bad arity".into() })?)
                } else {
                    None
                };
                return Ok(PiProcess::Init {
                    shared,
                    role: if req { "1".into() } else { role },
                    request,
                    var,
                    cont,
                });
            }
        }
        if self.keyword("mu") {
            let (var, _) = self.ident()?;
            self.expect("(")?;
            let (param, _) = self.ident()?;
            self.expect(":=")?;
            let init = self.until('(', ')')?;
            let init = self.expr(&init)?;
            self.expect(".")?;
            let body = Box::new(self.prefix()?);
            return Ok(PiProcess::Rec { var, param, init, body });
        }
        let (name, barred) = self.ident()?;
        let session = self.chan_suffix(name.clone())?;
        let chan = match session {
            Some(c) => PiChan::Session(c),
            None => match name.strip_prefix("a_") {
                Some(x) => PiChan::Cell(x.to_string()),
                None => PiChan::Update(name.clone()),
            },
        };
        if barred {
            self.expect("⟨")?;
            let raw = self.until('⟨', '⟩')?;
            let (label, body) = split_label(&raw);
            let value = self.term(body, &chan)?;
            let bind = if self.s.get(self.i) == Some(&'(') {
                self.i += 1;
                let (b, _) = self.ident()?;
                self.expect(")")?;
                Some(b)
            } else {
                None
            };
            let cont = Box::new(self.cont()?);
            return Ok(PiProcess::Send { chan, label, value, bind, cont });
        }
        if matches!(chan, PiChan::Update(_)) && self.s.get(self.i) == Some(&'⟨') {
            self.i += 1;
            let raw = self.until('⟨', '⟩')?;
            return Ok(PiProcess::Call { var: name, arg: self.expr(&raw)? });
        }
        if self.eat("?{") {
            let mut branches = Vec::new();
            loop {
                let (label, _) = self.ident()?;
                self.expect("(")?;
                let (var, _) = self.ident()?;
                let ty = if self.eat(":") {
                    let (t, _) = self.ident()?;
                    match t.as_str() {
                        "Int" => Some(Ty::Num),
                        "Bool" => Some(Ty::Bool),
                        _ => return self.err(format!("unknown type `{t}`")),
                    }
                } else {
                    None
                };
                self.expect(")")?;
                self.expect(".")?;
                let cont = self.prefix()?;
                branches.push(PiBranch {
                    label: (label != "_").then_some(label),
                    var,
                    ty,
                    cont,
                });
                if !self.eat(";") {
                    break;
                }
            }
            self.expect("}")?;
            return Ok(PiProcess::Recv { chan, branches });
        }
        self.expect("(")?;
        let (var, _) = self.ident()?;
        self.expect(")")?;
        self.expect(".")?;
        let cont = self.prefix()?;
        Ok(PiProcess::Recv {
            chan,
            branches: vec![PiBranch { label: None, var, ty: None, cont }],
        })
    }

    fn term(&self, raw: &str, chan: &PiChan) -> R<PiTerm> {
        let t = raw.trim();
        if let Some(inner) = t.strip_prefix("eval(").and_then(|r| r.strip_suffix(')')) {
            let open = inner.rfind('[').ok_or_else(|| PiParseError { pos: self.i, msg: "bad eval".into() })?;
            let slot_txt = &inner[..open];
            let slot = match slot_txt.strip_prefix('{').and_then(|r| r.strip_suffix('}')) {
                Some(q) => Slot::Quoted(self.expr(q)?),
                None => Slot::Var(slot_txt.trim().to_string()),
            };
            let sub = inner[open + 1..].trim_end_matches(']');
            let (ys, xs) = sub.split_once('/').ok_or_else(|| PiParseError { pos: self.i, msg: "bad eval".into() })?;
            let mut subst = Vec::new();
            for (y, x) in ys.split(',').zip(xs.split(',')) {
                subst.push((x.trim().to_string(), self.expr(y)?));
            }
            return Ok(PiTerm::Eval { slot, subst });
        }
        let e = self.expr(t)?;
        Ok(if matches!(chan, PiChan::Update(_)) { PiTerm::Quote(e) } else { PiTerm::Expr(e) })
    }

    fn sort(&mut self) -> R<Sort> {
        let (s, _) = self.ident()?;
        [Sort::Int, Sort::Nat, Sort::Bool, Sort::Session]
            .into_iter()
            .find(|k| k.keyword() == s)
            .map_or_else(|| self.err(format!("unknown sort `{s}`")), Ok)
    }

    fn formula(&mut self) -> R<PiFormula> {
        if self.keyword("forall") {
            let (x, _) = self.ident()?;
            self.expect(":")?;
            let s = self.sort()?;
            self.expect(".")?;
            return Ok(PiFormula::Forall(x, s, Box::new(self.formula()?)));
        }
        if self.keyword("mu") {
            let (x, _) = self.ident()?;
            self.expect(".")?;
            return Ok(PiFormula::Mu(x, Box::new(self.formula()?)));
        }
        let first = self.unit()?;
        if let PiFormula::Pred(a) = &first {
            if self.eat("=>") {
                return Ok(PiFormula::Implies(a.clone(), Box::new(self.formula()?)));
            }
        }
        let mut items = vec![first];
        while self.eat("/\\") {
            items.push(self.unit()?);
        }
        let mut f = items.pop().expect("one");
        while let Some(a) = items.pop() {
            f = PiFormula::And(Box::new(a), Box::new(f));
        }
        Ok(f)
    }

    fn unit(&mut self) -> R<PiFormula> {
        match self.peek() {
            Some('{') => {
                self.i += 1;
                let e = self.until('{', '}')?;
                Ok(PiFormula::Pred(self.expr(&e)?))
            }
            Some('(') => {
                self.i += 1;
                let f = self.formula()?;
                self.expect(")")?;
                Ok(f)
            }
            Some('[') => {
                self.i += 1;
                let p = self.pat()?;
                self.expect("]")?;
                let body = match self.peek() {
                    Some('[') | Some('(') | Some('{') => self.unit()?,
                    _ => self.unit()?,
                };
                Ok(PiFormula::Must(p, Box::new(body)))
            }
            _ => {
                if self.keyword("true") {
                    return Ok(PiFormula::True);
                }
                let (x, _) = self.ident()?;
                Ok(PiFormula::Var(x))
            }
        }
    }

    fn pat(&mut self) -> R<PiPat> {
        if self.keyword("skip") {
            return Ok(PiPat::Skip);
        }
        let (name, barred) = self.ident()?;
        if barred {
            self.expect("⟨")?;
            let raw = self.until('⟨', '⟩')?;
            let e = self.expr(&raw)?;
            return Ok(match name.strip_prefix("a_") {
                Some(x) => PiPat::Cell { var: x.to_string(), arg: e },
                None => PiPat::Update { var: name, expr: e },
            });
        }
        if let Some(chan) = self.chan_suffix(name.clone())? {
            let out = if self.eat("!") {
                true
            } else {
                self.expect("?")?;
                false
            };
            let label = if self.peek() == Some('(') { None } else { Some(self.ident()?.0) };
            self.expect("(")?;
            let raw = self.until('(', ')')?;
            let arg = self.expr(&raw)?;
            return Ok(if out {
                PiPat::SessionOut { chan, label, arg }
            } else {
                PiPat::SessionIn { chan, label, arg }
            });
        }
        if self.eat("(") {
            let (session, _) = self.ident()?;
            self.expect("[")?;
            let (role, _) = self.ident()?;
            self.expect("]")?;
            self.expect(")")?;
            return Ok(PiPat::Accept { shared: name, session, role });
        }
        Ok(PiPat::Label(name))
    }

    fn finish(&mut self) -> R<()> {
        if self.peek().is_some() {
            self.err("trailing input")
        } else {
            Ok(())
        }
    }
}

fn split_label(raw: &str) -> (Option<String>, &str) {
    if let Some((l, rest)) = raw.split_once(':') {
        if !rest.starts_with('=') && !l.is_empty() && l.chars().all(|c| c.is_alphanumeric() || c == '_') {
            return (Some(l.to_string()), rest);
        }
    }
    (None, raw)
}

pub fn parse_pi_process(src: &str) -> Result<PiProcess, PiParseError> {
    let mut c = Cur::new(src);
    let p = c.proc()?;
    c.finish()?;
    Ok(p)
}

pub fn parse_pi_formula(src: &str) -> Result<PiFormula, PiParseError> {
    let mut c = Cur::new(src);
    let f = c.formula()?;
    c.finish()?;
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn process_round_trip() {
        for src in [
            "a\u{304}_x⟨5⟩ | !x(e).a_x(y).a\u{304}_x⟨eval(e[y/x])⟩",
            "a_x(y_x).(a\u{304}_x⟨y_x⟩ | cond{(y_x > 0) -> s̄[S,C]⟨l:y_x⟩(y).x̄⟨@x + 1⟩; (!y_x > 0) -> 0})",
            "acc a[2](s).s[s,1]?{ok(v:Int).skip.mu X(n := 0).X⟨n + 1⟩; ko(b:Bool).0}",
            "req a[3](s).a\u{304}_x⟨eval({@x + 1}[4/x])⟩",
        ] {
            let p = parse_pi_process(src).unwrap();
            assert_eq!(print_pi_process(&p), src);
        }
    }

    #[test]
    fn formula_round_trip() {
        for src in [
            "forall v:Int. [a\u{304}_x⟨v⟩] {y == v}",
            "[x̄⟨@x + 1⟩][skip] true /\\ (mu A. [s[p,q]!l(3)] A)",
            "{v > 0} => [a(s[2])](true /\\ true)",
        ] {
            let f = parse_pi_formula(src).unwrap();
            assert_eq!(print_pi_formula(&f), src);
        }
    }

    #[test]
    fn parse_errors() {
        assert!(parse_pi_process("a\u{304}_x⟨5").is_err());
        assert!(parse_pi_formula("[a\u{304}_x⟨v⟩").is_err());
    }
}

//! Canonical text rendering. Parsing the output yields the same AST.

use super::{
    ActPat, BinOp, Expr, Formula, LocalAssertion, Process, UnOp, Update, Value, VirtualState,
};

const PREC_NOT: u8 = 3;
const PREC_ADD: u8 = 5;
const PREC_UNARY: u8 = 7;
const PREC_ATOM: u8 = 8;

fn expr_prec(e: &Expr) -> u8 {
    match e {
        Expr::Lit(_) | Expr::Var(_) | Expr::State(_) => PREC_ATOM,
        Expr::Unary(UnOp::Not, _) => PREC_NOT,
        Expr::Unary(UnOp::Neg, _) => PREC_UNARY,
        Expr::Binary(op, _, _) => op.precedence(),
    }
}

fn is_cmp(op: BinOp) -> bool {
    op.precedence() == 4
}

pub fn print_expr(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, 0);
    s
}

fn write_expr(out: &mut String, e: &Expr, min: u8) {
    let p = expr_prec(e);
    if p < min {
        out.push('(');
        write_expr(out, e, 0);
        out.push(')');
        return;
    }
    match e {
        Expr::Lit(v) => out.push_str(&v.to_string()),
        Expr::Var(x) => out.push_str(x),
        Expr::State(x) => {
            out.push('@');
            out.push_str(x);
        }
        Expr::Unary(UnOp::Not, a) => {
            out.push('!');
            write_expr(out, a, PREC_NOT);
        }
        Expr::Unary(UnOp::Neg, a) => {
            out.push('-');
            if matches!(**a, Expr::Lit(Value::Int(_))) {
                out.push('(');
                write_expr(out, a, 0);
                out.push(')');
            } else {
                write_expr(out, a, PREC_UNARY);
            }
        }
        Expr::Binary(op, a, b) => {
            let lmin = if is_cmp(*op) { p + 1 } else { p };
            write_expr(out, a, lmin);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            write_expr(out, b, p + 1);
        }
    }
}

/// Expression inside angle brackets: additive level, parenthesized otherwise.
fn write_angle_expr(out: &mut String, e: &Expr) {
    write_expr(out, e, PREC_ADD);
}

pub fn print_update(u: &Update) -> String {
    if u.is_skip() {
        return "skip".to_string();
    }
    let mut out = String::new();
    for (i, a) in u.0.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push('@');
        out.push_str(&a.var);
        out.push_str(" := ");
        write_angle_expr(&mut out, &a.expr);
    }
    out
}

pub fn print_state(s: &VirtualState) -> String {
    s.0.iter()
        .map(|(k, v)| format!("@{k} = {v}"))
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn print_assertion(l: &LocalAssertion) -> String {
    let mut out = String::new();
    write_assertion(&mut out, l);
    out
}

fn write_assertion(out: &mut String, l: &LocalAssertion) {
    match l {
        LocalAssertion::End => out.push_str("end"),
        LocalAssertion::Select { partner, branches } | LocalAssertion::Branch { partner, branches } => {
            out.push_str(partner);
            out.push_str(if matches!(l, LocalAssertion::Select { .. }) {
                "!{"
            } else {
                "?{"
            });
            for (i, b) in branches.iter().enumerate() {
                if i > 0 {
                    out.push_str("; ");
                }
                out.push_str(&format!(
                    "{}({}:{}){{{}}}<{}>. ",
                    b.label,
                    b.var,
                    b.sort,
                    print_expr(&b.pred),
                    print_update(&b.update)
                ));
                write_assertion(out, &b.cont);
            }
            out.push('}');
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
            out.push_str(&format!(
                "mu {var}{{{init_var}: {}}}({param}:{sort}). ",
                print_expr(init_pred)
            ));
            write_assertion(out, body);
            out.push_str(" : ");
            out.push_str(&print_expr(invariant));
        }
        LocalAssertion::RecCall {
            var,
            arg_var,
            arg_pred,
        } => out.push_str(&format!("{var}({arg_var}: {})", print_expr(arg_pred))),
    }
}

pub fn print_process(p: &Process) -> String {
    let mut out = String::new();
    write_process(&mut out, p, false);
    out
}

fn write_process(out: &mut String, p: &Process, unit: bool) {
    match p {
        Process::Inact => out.push('0'),
        Process::Par(a, b) => {
            if unit {
                out.push('(');
            }
            write_process(out, a, false);
            out.push_str(" | ");
            write_process(out, b, true);
            if unit {
                out.push(')');
            }
        }
        Process::Request {
            shared,
            arity,
            var,
            body,
        } => {
            out.push_str(&format!("req {shared}[{arity}]({var}). "));
            write_process(out, body, true);
        }
        Process::Accept {
            shared,
            role,
            var,
            body,
        } => {
            out.push_str(&format!("acc {shared}[{role}]({var}). "));
            write_process(out, body, true);
        }
        Process::Select { chan, branches } => {
            out.push_str(&format!("{chan}!{{"));
            for (i, b) in branches.iter().enumerate() {
                if i > 0 {
                    out.push_str("; ");
                }
                out.push_str(&print_expr(&b.guard));
                out.push_str(" :: ");
                out.push_str(&b.label);
                out.push('<');
                write_angle_expr(out, &b.payload);
                out.push_str(&format!(">({})<{}>. ", b.var, print_update(&b.update)));
                write_process(out, &b.cont, false);
            }
            out.push('}');
        }
        Process::Branch { chan, branches } => {
            out.push_str(&format!("{chan}?{{"));
            for (i, b) in branches.iter().enumerate() {
                if i > 0 {
                    out.push_str("; ");
                }
                out.push_str(&format!("{}({})<{}>. ", b.label, b.var, print_update(&b.update)));
                write_process(out, &b.cont, false);
            }
            out.push('}');
        }
        Process::RecDef {
            var,
            param,
            init,
            body,
        } => {
            out.push_str(&format!("mu {var}({param} := {}). ", print_expr(init)));
            write_process(out, body, true);
        }
        Process::RecCall { var, arg } => {
            out.push_str(var);
            out.push('<');
            write_angle_expr(out, arg);
            out.push('>');
        }
    }
}

pub fn print_actpat(a: &ActPat) -> String {
    let arg_str = |e: &Expr| match e {
        Expr::Var(x) => x.clone(),
        Expr::Lit(v) => v.to_string(),
        other => print_expr(other),
    };
    match a {
        ActPat::Output { chan, label, arg } => format!(
            "{chan}!{}({})",
            label.as_deref().unwrap_or(""),
            arg_str(arg)
        ),
        ActPat::Input { chan, label, arg } => format!(
            "{chan}?{}({})",
            label.as_deref().unwrap_or(""),
            arg_str(arg)
        ),
        ActPat::Update(u) => format!("<{}>", print_update(u)),
        ActPat::Accept {
            shared,
            session,
            role,
        } => format!("{shared}({session}[{role}])"),
        ActPat::Label(l) => l.clone(),
    }
}

fn formula_level(f: &Formula) -> u8 {
    match f {
        Formula::Forall(..) | Formula::Mu(..) | Formula::Implies(..) => 0,
        Formula::And(..) => 1,
        _ => 2,
    }
}

pub fn print_formula(f: &Formula) -> String {
    let mut out = String::new();
    write_formula(&mut out, f, 0);
    out
}

fn write_formula(out: &mut String, f: &Formula, min: u8) {
    if formula_level(f) < min {
        out.push('(');
        write_formula(out, f, 0);
        out.push(')');
        return;
    }
    match f {
        Formula::True => out.push_str("true"),
        Formula::Var(x) => out.push_str(x),
        Formula::Pred(e) => {
            let p = expr_prec(e);
            if (PREC_NOT..=4).contains(&p) {
                out.push_str(&print_expr(e));
            } else {
                out.push('{');
                out.push_str(&print_expr(e));
                out.push('}');
            }
        }
        Formula::And(a, b) => {
            write_formula(out, a, 2);
            out.push_str(" /\\ ");
            write_formula(out, b, 1);
        }
        Formula::Implies(a, b) => {
            write_formula(out, a, 1);
            out.push_str(" => ");
            write_formula(out, b, 0);
        }
        Formula::Forall(x, s, body) => {
            out.push_str(&format!("forall {x}:{s}. "));
            write_formula(out, body, 0);
        }
        Formula::Mu(x, body) => {
            out.push_str(&format!("mu {x}. "));
            write_formula(out, body, 0);
        }
        Formula::Must(a, body) => {
            out.push('[');
            out.push_str(&print_actpat(a));
            out.push(']');
            if matches!(**body, Formula::Must(..)) {
                write_formula(out, body, 2);
            } else if formula_level(body) < 2 {
                out.push('(');
                write_formula(out, body, 0);
                out.push(')');
            } else {
                out.push(' ');
                write_formula(out, body, 2);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{parse_assertion, parse_formula, parse_process};

    fn rt_formula(src: &str) -> String {
        let f = parse_formula(src).unwrap();
        let out = print_formula(&f);
        assert_eq!(parse_formula(&out).unwrap(), f, "{out}");
        out
    }

    #[test]
    fn formula_canonical_forms() {
        assert_eq!(rt_formula("true /\\ true"), "true /\\ true");
        assert_eq!(rt_formula("mu X. [1][2]X"), "mu X. [1][2] X");
        assert_eq!(
            rt_formula("forall y:Nat. [s[p,q]!(y)]((y==@x) /\\ [<@x:=@x+1>] true)"),
            "forall y:Nat. [s[p,q]!(y)](y == @x /\\ [<@x := @x + 1>] true)"
        );
        rt_formula("forall y:Int. [s[q,p]?(y)](y > 0 => true)");
        rt_formula("[a(s[p])] forall y:Bool. {y}");
        rt_formula("mu A. ([1] mu B. ([2] A /\\ [3] B)) /\\ true");
        rt_formula("{x > 1 /\\ y < 2} => [s[p,q]!l(x)] {true}");
        rt_formula("[s[p,q]!(-3)] -x + 2 * (y - 1) >= -(4)");
    }

    #[test]
    fn assertion_and_process_round_trip() {
        for src in [
            "end",
            "q!{l(y:Nat){y>10 /\\ y==@x}<@x:=@x+1>. end}",
            "mu t {y: y==0}(x:Int). p?{a(z:Int){z > x}<skip>. t(y: y == x + 1); b(z:Bool){z}<@c++>. end} : x>=0",
        ] {
            let a = parse_assertion(src).unwrap();
            assert_eq!(parse_assertion(&print_assertion(&a)).unwrap(), a);
        }
        for src in [
            "0",
            "s[p,q]!{ true :: l<11>(y)<@x:=@x+1>. 0 }",
            "s[q,p]?{ l(y)<skip>. 0 } | (0 | 0)",
            "req a[2](s). acc b[1](k). mu X(n := 0). s[p,q]!{n < 3 :: m<n*2>(y)<skip>. X<n + 1>; n >= 3 :: d<0>(y)<skip>. 0}",
        ] {
            let p = parse_process(src).unwrap();
            assert_eq!(parse_process(&print_process(&p)).unwrap(), p, "{}", print_process(&p));
        }
    }
}

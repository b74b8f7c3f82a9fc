use mpsa::cli::{run, EXIT_DATA, EXIT_NOINPUT, EXIT_USAGE};

fn ex(name: &str) -> String {
    format!("{}/examples/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn mpsa(args: &[&str]) -> (i32, String, String) {
    let argv = std::iter::once("mpsa").chain(args.iter().copied());
    let out = run(argv.map(std::ffi::OsString::from));
    (out.code, out.stdout, out.stderr)
}

#[test]
fn embed_golden() {
    let (code, out, _) = mpsa(&["embed", "--at", "s[S]", &ex("eq2.mpsa")]);
    assert_eq!(code, 0);
    assert_eq!(
        out.trim(),
        "forall y:Nat. [s[S,C]!(y)]({y > 10 /\\ y == @x} /\\ [<@x := @x + 1>] true)"
    );
}

#[test]
fn shuffle_golden() {
    let (code, out, _) = mpsa(&["shuffle", "[1][2] true", "[3][4] true"]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(
        lines,
        [
            "[1][2][3][4] true",
            "[1][3][2][4] true",
            "[1][3][4][2] true",
            "[3][1][2][4] true",
            "[3][1][4][2] true",
            "[3][4][1][2] true",
        ]
    );
}

#[test]
fn rec_embed_golden() {
    let dir = std::env::temp_dir().join(format!("mpsa-dot-{}", std::process::id()));
    let (code, out, _) = mpsa(&["rec-embed", &ex("two_loops.spec"), "--dump-automata", dir.to_str().unwrap()]);
    assert_eq!(code, 0);
    let mut lines = out.lines();
    assert_eq!(
        lines.next(),
        Some("mu A. [1](mu B. [2] A /\\ [3](mu C. [4] B /\\ [2]([1] C /\\ [4] A))) /\\ [3](mu D. [4] A /\\ [1](mu E. [2] D /\\ [4]([2] A /\\ [3] E)))")
    );
    assert_eq!(lines.next(), Some("states: 2,2 -> 4 -> 7"));
    for f in ["component1.dot", "component2.dot", "product.dot", "expanded.dot"] {
        let text = std::fs::read_to_string(dir.join(f)).unwrap();
        assert!(text.starts_with("digraph"), "{f}");
    }
    let _ = std::fs::remove_dir_all(dir);
}

#[test]
fn judge_golden() {
    let (code, out, _) = mpsa(&["judge", "--spec", &ex("counter.spec"), "--process", &ex("counter.proc")]);
    assert_eq!(code, 0);
    assert_eq!(out.trim(), "judgement: holds\nasserted: accepted\nunasserted: accepted");
}

#[test]
fn envfml_and_erase() {
    let (_, out, _) = mpsa(&["envfml", &ex("counter.spec")]);
    assert_eq!(
        out.trim(),
        "@x > 10 => forall y:Nat. [s[S,C]!(y)]({y > 10 /\\ y == @x} /\\ [<@x := @x + 1>] true)"
    );
    let (_, out, _) = mpsa(&["erase", &ex("eq2.mpsa")]);
    assert_eq!(out.trim(), "C!{l(Nat).end}");
}

#[test]
fn check_reports_witness() {
    let (code, out, _) = mpsa(&[
        "--json",
        "check",
        "--process",
        &ex("counter.proc"),
        "--state",
        "@x := 3",
        "--formula",
        "forall y:Nat. [s[S,C]!(y)]{y > 10}",
    ]);
    assert_eq!(code, 1);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["verdict"], "fails");
    assert_eq!(v["witness"][0], "s[S,C]!3");
}

#[test]
fn pure_commands() {
    let (code, out, _) = mpsa(&["encode-store", "@x := 5"]);
    assert_eq!(code, 0);
    assert_eq!(out.trim(), "a\u{304}_x⟨5⟩ | !x(e).a_x(y).a\u{304}_x⟨eval(e[y/x])⟩");
    let (code, out, _) = mpsa(&[
        "pi-check",
        "--process",
        &ex("counter.proc"),
        "--state",
        "@x := 11",
        "--formula",
        "[s[S,C]!(1)] true",
    ]);
    assert_eq!(code, 0);
    assert!(out.contains("agree: true"));
}

#[test]
fn exit_codes() {
    assert_eq!(mpsa(&["bogus"]).0, EXIT_USAGE);
    assert_eq!(mpsa(&["parse", "C!{ l(y:Nat){"]).0, EXIT_DATA);
    let (code, out, _) = mpsa(&["--json", "embed", "--at", "s[S]", "missing.mpsa"]);
    assert_eq!(code, EXIT_NOINPUT);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["error"]["code"], "io::66");
}

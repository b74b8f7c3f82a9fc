//! Command-line driver.
//!
//! Arguments naming inputs accept either a path to a file or the text
//! itself. Exit status: 0 holds or accepted, 1 fails or rejected, 2
//! inconclusive, 64 usage error, 65 malformed input, 66 unreadable file,
//! 70 a checker error.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value as Json};

use crate::automata::{pipeline, rec_interleave_pipeline, DEFAULT_STATE_CAP};
use crate::embedding::embed;
use crate::kernel::{
    parse_assertion, parse_env_file, parse_expr, parse_formula, parse_process, parse_state, print_assertion,
    print_expr, print_formula, print_process, print_state, parse_process_with, EnvFile, Formula, SessionRole, SortBound,
};
use crate::lts::{Config, LtsOpts};
use crate::pure::{encode_formula, encode_process_with, encode_store, pi_sat, print_pi_process, system, PiOpts};
use crate::satisfaction::{check_judgement, guarded, sat, SatOpts, Verdict};
use crate::shuffle::{env_formula, shuffle_with, ShuffleMode, ShuffleOpts};
use crate::typing::{erase, erase_env, erase_gamma, prove_asserted, typecheck_unasserted, ProveOpts};

pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;
pub const EXIT_NOINPUT: i32 = 66;
pub const EXIT_SOFTWARE: i32 = 70;

#[derive(Debug, Parser)]
#[command(name = "mpsa", version, about = "Stateful multiparty session assertions and their HML embedding")]
pub struct Cli {
    /// Emit the report as JSON.
    #[arg(long, global = true)]
    pub json: bool,
    /// Worker threads for judgements over many states.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, global = true, default_value_t = 8)]
    pub mu_depth: usize,
    #[arg(long, global = true, default_value_t = 32)]
    pub sort_bound: i64,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Auto,
    Assertion,
    Process,
    Formula,
    State,
    Expr,
    Spec,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Parse and echo the canonical form.
    Parse {
        #[arg(long, value_enum, default_value_t = Kind::Auto)]
        kind: Kind,
        input: String,
    },
    /// Embed a local assertion at a session endpoint.
    Embed {
        #[arg(long)]
        at: String,
        input: String,
    },
    /// Interleave two formulae.
    Shuffle {
        f1: String,
        f2: String,
        /// Use the displayed right conjunct `[l2]([l1]phi1 /\ phi2)`.
        #[arg(long)]
        literal: bool,
    },
    /// Formula of a specification's environment.
    Envfml { spec: String },
    /// Model-check a process in a state against a formula.
    Check {
        #[arg(long)]
        process: String,
        #[arg(long)]
        state: String,
        #[arg(long)]
        formula: String,
    },
    /// Judgement semantics, asserted and unasserted typing of a process.
    Judge {
        #[arg(long)]
        spec: String,
        #[arg(long)]
        process: String,
    },
    /// Erase the assertions of a local assertion or a specification.
    Erase { input: String },
    /// Interleave a recursive environment through the automata pipeline. The
    /// input is a specification or a list of formulae, one per line.
    RecEmbed {
        spec: String,
        #[arg(long)]
        dump_automata: Option<PathBuf>,
    },
    /// Encode a virtual state as a process.
    EncodeStore { state: String },
    /// Compare direct and pure-HML model checking.
    PiCheck {
        #[arg(long)]
        process: String,
        #[arg(long)]
        state: String,
        #[arg(long)]
        formula: String,
        #[arg(long, default_value_t = 4)]
        repl_depth: usize,
    },
}

/// Exit status and text written to standard output and standard error.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

struct CliError {
    code: i32,
    module: &'static str,
    message: String,
}

fn err(code: i32, module: &'static str, e: impl ToString) -> CliError {
    CliError {
        code,
        module,
        message: e.to_string(),
    }
}

fn data(module: &'static str) -> impl Fn(crate::kernel::ParseError) -> CliError {
    move |e| err(EXIT_DATA, module, e)
}

fn read_input(arg: &str) -> Result<String, CliError> {
    let p = Path::new(arg);
    if p.is_file() {
        fs::read_to_string(p).map_err(|e| err(EXIT_NOINPUT, "io", format!("{arg}: {e}")))
    } else if looks_like_path(arg) {
        Err(err(EXIT_NOINPUT, "io", format!("{arg}: no such file")))
    } else {
        Ok(arg.to_string())
    }
}

fn looks_like_path(arg: &str) -> bool {
    let ext = Path::new(arg).extension().and_then(|e| e.to_str());
    matches!(ext, Some("mpsa" | "spec" | "hml" | "proc" | "state" | "txt"))
}

fn verdict_code(v: &Verdict) -> i32 {
    match v {
        Verdict::Holds => 0,
        Verdict::Fails { .. } => 1,
        Verdict::Inconclusive => 2,
    }
}

fn verdict_json(v: &Verdict) -> Json {
    match v {
        Verdict::Fails { trace, reason } => json!({
            "verdict": "fails",
            "witness": trace.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
            "reason": reason,
        }),
        other => json!({ "verdict": other.name() }),
    }
}

fn verdict_text(v: &Verdict) -> String {
    match v {
        Verdict::Fails { trace, reason } => {
            let mut s = String::from("fails\n");
            for a in trace {
                s.push_str(&format!("  {a}\n"));
            }
            s.push_str(&format!("  {reason}"));
            s
        }
        other => other.name().to_string(),
    }
}

struct Report {
    code: i32,
    text: String,
    json: Json,
}

impl Report {
    fn ok(text: String, json: Json) -> Report {
        Report { code: 0, text, json }
    }
}

pub fn run<I, T>(argv: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let text = e.render().to_string();
            return if code == 0 {
                Outcome { code, stdout: text, stderr: String::new() }
            } else {
                Outcome { code, stdout: String::new(), stderr: text }
            };
        }
    };
    match dispatch(&cli) {
        Ok(r) => {
            let stdout = if cli.json {
                format!("{}\n", serde_json::to_string_pretty(&r.json).expect("json"))
            } else {
                format!("{}\n", r.text)
            };
            Outcome { code: r.code, stdout, stderr: String::new() }
        }
        Err(e) => {
            let (stdout, stderr) = if cli.json {
                let j = json!({ "error": { "code": format!("{}::{}", e.module, e.code), "message": e.message } });
                (format!("{}\n", serde_json::to_string_pretty(&j).expect("json")), String::new())
            } else {
                (String::new(), format!("error[{}]: {}\n", e.module, e.message))
            };
            Outcome { code: e.code, stdout, stderr }
        }
    }
}

fn parse_at(s: &str) -> Result<SessionRole, CliError> {
    let bad = || err(EXIT_USAGE, "cli", format!("`{s}` is not an endpoint of the form s[p]"));
    let (sess, rest) = s.split_once('[').ok_or_else(bad)?;
    let role = rest.strip_suffix(']').ok_or_else(bad)?;
    if sess.is_empty() || role.is_empty() {
        return Err(bad());
    }
    Ok(SessionRole::new(sess.trim(), role.trim()))
}

fn load_spec(arg: &str) -> Result<EnvFile, CliError> {
    parse_env_file(&read_input(arg)?).map_err(data("kernel::parse"))
}

fn dispatch(cli: &Cli) -> Result<Report, CliError> {
    let bound = cli.sort_bound;
    let sat_opts = SatOpts::new(bound, cli.mu_depth);
    match &cli.cmd {
        Cmd::Parse { kind, input } => {
            let src = read_input(input)?;
            let (k, text) = canonical(*kind, &src)?;
            Ok(Report::ok(text.clone(), json!({ "kind": k, "canonical": text })))
        }
        Cmd::Embed { at, input } => {
            let at = parse_at(at)?;
            let l = parse_assertion(&read_input(input)?).map_err(data("kernel::parse"))?;
            let f = embed(&l, &at).map_err(|e| err(EXIT_DATA, "embedding", e))?;
            let s = print_formula(&f);
            Ok(Report::ok(s.clone(), json!({ "at": at.to_string(), "formula": s })))
        }
        Cmd::Shuffle { f1, f2, literal } => {
            let a = parse_formula(&read_input(f1)?).map_err(data("kernel::parse"))?;
            let b = parse_formula(&read_input(f2)?).map_err(data("kernel::parse"))?;
            let opts = ShuffleOpts {
                mode: if *literal { ShuffleMode::Literal } else { ShuffleMode::Symmetric },
                ..ShuffleOpts::default()
            };
            let f = shuffle_with(&a, &b, &opts).map_err(|e| err(EXIT_DATA, "shuffle", e))?;
            let flat = crate::shuffle::distribute(&f);
            let parts: Vec<String> = crate::shuffle::conjuncts(&flat).into_iter().map(print_formula).collect();
            Ok(Report::ok(
                parts.join("\n"),
                json!({ "formula": print_formula(&f), "conjuncts": parts }),
            ))
        }
        Cmd::Envfml { spec } => {
            let file = load_spec(spec)?;
            let f = env_formula(&file.env.delta, &file.env.gamma).map_err(|e| err(EXIT_DATA, "shuffle", e))?;
            let g = guarded(&file.env.precondition, f);
            let s = print_formula(&g);
            Ok(Report::ok(s.clone(), json!({ "formula": s })))
        }
        Cmd::Check { process, state, formula } => {
            let p = parse_process(&read_input(process)?).map_err(data("kernel::parse"))?;
            let st = parse_state(&read_input(state)?).map_err(data("kernel::parse"))?;
            let f = parse_formula(&read_input(formula)?).map_err(data("kernel::parse"))?;
            let r = sat(&Config::new(p, st), &f, &sat_opts).map_err(|e| err(EXIT_SOFTWARE, "satisfaction", e))?;
            let mut j = verdict_json(&r.verdict);
            j["obligations_checked"] = json!(r.obligations_checked);
            Ok(Report {
                code: verdict_code(&r.verdict),
                text: verdict_text(&r.verdict),
                json: j,
            })
        }
        Cmd::Judge { spec, process } => judge(cli, &load_spec(spec)?, process),
        Cmd::Erase { input } => {
            let src = read_input(input)?;
            if let Ok(l) = parse_assertion(&src) {
                let t = erase(&l).to_string();
                return Ok(Report::ok(t.clone(), json!({ "type": t })));
            }
            let file = parse_env_file(&src).map_err(data("kernel::parse"))?;
            let mut lines = Vec::new();
            let mut j = serde_json::Map::new();
            for (at, t) in erase_env(&file.env.delta) {
                lines.push(format!("{at}: {t}"));
                j.insert(at.to_string(), json!(t.to_string()));
            }
            for (a, table) in erase_gamma(&file.env.gamma) {
                for (role, t) in table {
                    lines.push(format!("{a}[{role}]: {t}"));
                    j.insert(format!("{a}[{role}]"), json!(t.to_string()));
                }
            }
            Ok(Report::ok(lines.join("\n"), Json::Object(j)))
        }
        Cmd::RecEmbed { spec, dump_automata } => {
            let src = read_input(spec)?;
            let pl = match parse_env_file(&src) {
                Ok(file) => rec_interleave_pipeline(&file.env.delta, DEFAULT_STATE_CAP),
                Err(spec_err) => {
                    let parts = component_formulas(&src).map_err(|_| err(EXIT_DATA, "kernel::parse", spec_err))?;
                    pipeline(&parts, DEFAULT_STATE_CAP)
                }
            }
            .map_err(|e| err(EXIT_DATA, "automata", e))?;
            if let Some(dir) = dump_automata {
                fs::create_dir_all(dir).map_err(|e| err(EXIT_SOFTWARE, "io", format!("{}: {e}", dir.display())))?;
                let mut files: Vec<(String, String)> = pl
                    .components
                    .iter()
                    .enumerate()
                    .map(|(i, a)| (format!("component{}.dot", i + 1), a.to_dot(&format!("component{}", i + 1))))
                    .collect();
                files.push(("product.dot".into(), pl.product.to_dot("product")));
                files.push(("expanded.dot".into(), pl.expanded.to_dot("expanded")));
                for (name, body) in files {
                    let path = dir.join(name);
                    fs::write(&path, body).map_err(|e| err(EXIT_SOFTWARE, "io", format!("{}: {e}", path.display())))?;
                }
            }
            let (comps, prod, exp) = pl.state_counts();
            let f = print_formula(&pl.formula);
            let counts = comps.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",");
            Ok(Report::ok(
                format!("{f}\nstates: {counts} -> {prod} -> {exp}"),
                json!({ "formula": f, "components": comps, "product": prod, "expanded": exp }),
            ))
        }
        Cmd::EncodeStore { state } => {
            let st = parse_state(&read_input(state)?).map_err(data("kernel::parse"))?;
            let s = print_pi_process(&encode_store(&st));
            Ok(Report::ok(s.clone(), json!({ "process": s })))
        }
        Cmd::PiCheck { process, state, formula, repl_depth } => {
            let p = parse_process(&read_input(process)?).map_err(data("kernel::parse"))?;
            let st = parse_state(&read_input(state)?).map_err(data("kernel::parse"))?;
            let f = parse_formula(&read_input(formula)?).map_err(data("kernel::parse"))?;
            let direct = sat(&Config::new(p.clone(), st.clone()), &f, &sat_opts)
                .map_err(|e| err(EXIT_SOFTWARE, "satisfaction", e))?
                .verdict;
            let tys = st.0.iter().map(|(k, v)| (k.clone(), v.ty())).collect();
            let store: BTreeSet<String> = st.0.keys().cloned().collect();
            let pf = encode_formula(&f, &store).map_err(|e| err(EXIT_DATA, "pure", e))?;
            let sys = system(&encode_process_with(&p, &tys), &encode_store(&st));
            let pure = pi_sat(&sys, &pf, &PiOpts::new(bound, cli.mu_depth, *repl_depth))
                .map_err(|e| err(EXIT_SOFTWARE, "pure", e))?
                .verdict;
            let agree = direct == Verdict::Inconclusive
                || pure == Verdict::Inconclusive
                || direct.holds() == pure.holds();
            Ok(Report {
                code: verdict_code(&pure),
                text: format!(
                    "direct: {}\npure: {}\nagree: {agree}",
                    direct.name(),
                    pure.name()
                ),
                json: json!({ "direct": verdict_json(&direct), "pure": verdict_json(&pure), "agree": agree }),
            })
        }
    }
}

/// One formula per non-empty line; `#` starts a comment.
fn component_formulas(src: &str) -> Result<Vec<Formula>, crate::kernel::ParseError> {
    src.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(parse_formula)
        .collect()
}

fn canonical(kind: Kind, src: &str) -> Result<(String, String), CliError> {
    let one = |k: Kind| -> Result<String, crate::kernel::ParseError> {
        Ok(match k {
            Kind::Assertion => print_assertion(&parse_assertion(src)?),
            Kind::Process => print_process(&parse_process(src)?),
            Kind::Formula => print_formula(&parse_formula(src)?),
            Kind::State => print_state(&parse_state(src)?),
            Kind::Expr => print_expr(&parse_expr(src)?),
            Kind::Spec => print_spec(&parse_env_file(src)?),
            Kind::Auto => unreachable!("resolved by the caller"),
        })
    };
    let name = |k: Kind| k.to_possible_value().expect("value").get_name().to_string();
    if kind != Kind::Auto {
        return one(kind).map(|s| (name(kind), s)).map_err(data("kernel::parse"));
    }
    let order = [Kind::Spec, Kind::Assertion, Kind::Process, Kind::Formula, Kind::State];
    let mut first = None;
    for k in order {
        match one(k) {
            Ok(s) => return Ok((name(k), s)),
            Err(e) => {
                first.get_or_insert(e);
            }
        }
    }
    Err(data("kernel::parse")(first.expect("an error")))
}

fn print_spec(file: &EnvFile) -> String {
    let mut out = Vec::new();
    out.push(format!("precondition: {}", print_expr(&file.env.precondition)));
    for d in &file.state {
        let range = d.range.map(|(lo, hi)| format!(" = {lo} .. {hi}")).unwrap_or_default();
        out.push(format!("state: @{}: {}{range}", d.var, d.sort));
    }
    for (a, table) in &file.env.gamma {
        let rows: Vec<String> = table.iter().map(|(r, l)| format!("{r}: {}", print_assertion(l))).collect();
        out.push(format!("gamma: {a} -> {{ {} }}", rows.join(", ")));
    }
    for (at, l) in &file.env.delta {
        out.push(format!("delta: {at}: {}", print_assertion(l)));
    }
    out.join("\n")
}

fn judge(cli: &Cli, file: &EnvFile, process: &str) -> Result<Report, CliError> {
    let bound = SortBound(cli.sort_bound);
    let tys = file.state_types();
    let p = parse_process_with(&read_input(process)?, &tys).map_err(data("kernel::parse"))?;
    let opts = SatOpts {
        lts: LtsOpts { bound },
        mu_depth: cli.mu_depth,
    };
    let states = file.all_states(bound);
    let semantic = judge_states(&file.env, &p, &states, &opts, cli.jobs.max(1))?;

    let mut popts = ProveOpts::new(cli.sort_bound, cli.mu_depth);
    for d in &file.state {
        popts = popts.with_state(d.var.clone(), d.domain(bound));
    }
    let der = prove_asserted(&file.env, &p, &popts).map_err(|e| err(EXIT_SOFTWARE, "typing", e))?;
    let tc = typecheck_unasserted(&p, &erase_env(&file.env.delta), &erase_gamma(&file.env.gamma), &tys);

    let code = if semantic.fails() || !der.accepted || !tc.ok {
        1
    } else if semantic == Verdict::Inconclusive {
        2
    } else {
        0
    };
    let acc = |b: bool| if b { "accepted" } else { "rejected" };
    let mut text = format!(
        "judgement: {}\nasserted: {}\nunasserted: {}",
        verdict_text(&semantic),
        acc(der.accepted),
        acc(tc.ok)
    );
    if let Some(r) = &der.reason {
        text.push_str(&format!("\n  reason: {r}"));
    }
    Ok(Report {
        code,
        text,
        json: json!({
            "judgement": verdict_json(&semantic),
            "states_checked": states.len(),
            "asserted": der,
            "unasserted": tc,
        }),
    })
}

/// `check_judgement` over every state, split across `jobs` threads.
fn judge_states(
    env: &crate::kernel::Env,
    p: &crate::kernel::Process,
    states: &[crate::kernel::VirtualState],
    opts: &SatOpts,
    jobs: usize,
) -> Result<Verdict, CliError> {
    let chunk = states.len().div_ceil(jobs).max(1);
    let results: Vec<Result<Verdict, String>> = std::thread::scope(|s| {
        let handles: Vec<_> = states
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || -> Result<Verdict, String> {
                    let mut acc = Verdict::Holds;
                    for st in part {
                        match check_judgement(env, p, st, opts).map_err(|e| e.to_string())?.verdict {
                            Verdict::Holds => {}
                            Verdict::Inconclusive => acc = Verdict::Inconclusive,
                            Verdict::Fails { trace, reason } => {
                                return Ok(Verdict::Fails {
                                    trace,
                                    reason: format!("{reason} (initial state {})", print_state(st)),
                                })
                            }
                        }
                    }
                    Ok(acc)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker")).collect()
    });
    let mut acc = Verdict::Holds;
    for r in results {
        match r.map_err(|e| err(EXIT_SOFTWARE, "satisfaction", e))? {
            f @ Verdict::Fails { .. } => return Ok(f),
            Verdict::Inconclusive => acc = Verdict::Inconclusive,
            Verdict::Holds => {}
        }
    }
    Ok(acc)
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context as _, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use mcmpst::check::{canonical, check_with, channels_used};
use mcmpst::ctxlts::{self, reach, CtxError, CtxGraph, Verdict};
use mcmpst::reduce::{explore, is_error, simulate_with, ReduceError, Scheduler};
use mcmpst::subtype::{self, SubtypeError, DEFAULT_BUDGET};
use mcmpst::surface::{parse_file, print_context, print_file, print_process, print_type, ProtocolFile};
use mcmpst::synth::{hide_internal, synthesize_interface_with, SynthError};
use mcmpst::{ActiveContext, Channel, GlobalEnv, LocalContext, Process};

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "mcmpst", version, about = "Checker and interpreter for probabilistic mixed-choice multiparty sessions")]
struct Cli {
    /// Report format.
    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    format: Format,
    /// Seed for randomized scheduling.
    #[arg(long, default_value_t = 0, global = true)]
    seed: u64,
    /// Step cap for `run`.
    #[arg(long, default_value_t = 100, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    steps: u64,
    /// Depth cap for `explore` and `errors`.
    #[arg(long, default_value_t = 32, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    depth: u64,
    /// Proof-search budget in goals.
    #[arg(long, env = "MCMPST_BUDGET", default_value_t = DEFAULT_BUDGET, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    budget: u64,
    /// `uniform`, `first` or `script:<i,j,...>`.
    #[arg(long, default_value = "uniform", global = true, value_parser = parse_scheduler)]
    scheduler: Scheduler,
    /// Also write the Graphviz rendering to this file.
    #[arg(long, global = true)]
    dot: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Dot,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Relation {
    Standard,
    Single,
    Multi,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Type-check a process against a context.
    Check { file: PathBuf, process: String, context: String },
    /// Decide subtyping between two contexts, or two types with `--relation standard`.
    Subtype {
        file: PathBuf,
        sub: String,
        sup: String,
        #[arg(long, value_enum, default_value_t = Relation::Multi)]
        relation: Relation,
    },
    /// Check safety of a context.
    Safety { file: PathBuf, context: String },
    /// Check deadlock freedom of a context.
    Dfree { file: PathBuf, context: String },
    /// Check that an active channel only waits on partners in the context.
    Pending { file: PathBuf, context: String, channel: String },
    /// Synthesize a single-channel interface for a context.
    Interface { file: PathBuf, context: String },
    /// Simulate one reduction sequence.
    Run { file: PathBuf, process: String },
    /// Explore every reduction sequence up to `--depth`.
    Explore { file: PathBuf, process: String },
    /// Look for reachable error states.
    Errors { file: PathBuf, process: String },
    /// Parse a file and pretty-print it.
    Parse { file: PathBuf },
}

fn parse_scheduler(s: &str) -> Result<Scheduler, String> {
    match s {
        "uniform" => Ok(Scheduler::Uniform),
        "first" => Ok(Scheduler::First),
        _ => {
            let Some(ix) = s.strip_prefix("script:") else {
                return Err(format!("unknown scheduler `{s}`"));
            };
            ix.split(',')
                .filter(|x| !x.trim().is_empty())
                .map(|x| x.trim().parse::<usize>().map_err(|e| format!("bad script index `{x}`: {e}")))
                .collect::<Result<Vec<_>, _>>()
                .map(Scheduler::Script)
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
enum Status {
    Holds,
    Refuted,
    Inconclusive,
}

impl Status {
    fn of(b: bool) -> Self {
        if b {
            Status::Holds
        } else {
            Status::Refuted
        }
    }

    fn name(self) -> &'static str {
        match self {
            Status::Holds => "holds",
            Status::Refuted => "refuted",
            Status::Inconclusive => "inconclusive",
        }
    }

    fn code(self) -> u8 {
        match self {
            Status::Holds => 0,
            Status::Refuted => 1,
            Status::Inconclusive => 3,
        }
    }
}

struct Report {
    status: Status,
    text: String,
    json: Value,
    dot: Option<String>,
}

impl Report {
    fn new(status: Status, text: impl Into<String>, json: Value) -> Self {
        Report { status, text: text.into(), json, dot: None }
    }

    fn with_dot(mut self, dot: String) -> Self {
        self.dot = Some(dot);
        self
    }

    fn inconclusive(message: String) -> Self {
        Report::new(Status::Inconclusive, format!("inconclusive: {message}"), json!({ "message": message }))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<u8> {
    let (name, report) = dispatch(cli)?;
    if let (Some(path), Some(dot)) = (&cli.dot, &report.dot) {
        std::fs::write(path, dot).with_context(|| format!("writing {}", path.display()))?;
    }
    match cli.format {
        Format::Text => emit(&format!("{}\n", report.text.trim_end()))?,
        Format::Json => {
            let mut obj = json!({
                "schema_version": SCHEMA_VERSION,
                "command": name,
                "status": report.status.name(),
            });
            if let (Value::Object(o), Value::Object(extra)) = (&mut obj, report.json) {
                o.extend(extra);
            }
            emit(&format!("{}\n", serde_json::to_string_pretty(&obj)?))?;
        }
        Format::Dot => match &report.dot {
            Some(d) => emit(d)?,
            None => bail!("`{name}` has no dot rendering"),
        },
    }
    Ok(report.status.code())
}

fn emit(s: &str) -> Result<()> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(s.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn load(path: &Path) -> Result<ProtocolFile> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_file(&text).map_err(|e| anyhow!("{}: {e}", path.display()))
}

fn process<'a>(f: &'a ProtocolFile, name: &str) -> Result<&'a Process> {
    f.processes.get(name).ok_or_else(|| anyhow!("no process named `{name}`"))
}

fn context<'a>(f: &'a ProtocolFile, name: &str) -> Result<&'a LocalContext> {
    f.contexts.get(name).ok_or_else(|| anyhow!("no context named `{name}`"))
}

fn channel(text: &str) -> Result<Channel> {
    let bad = || anyhow!("bad channel `{text}`; expected s[r] or s[{{r1,r2}}]");
    let (session, rest) = text.trim().split_once('[').ok_or_else(bad)?;
    let inner = rest.strip_suffix(']').ok_or_else(bad)?.trim();
    let inner = inner.strip_prefix('{').and_then(|x| x.strip_suffix('}')).unwrap_or(inner);
    let roles: Vec<String> = inner.split(',').map(|r| r.trim().to_string()).collect();
    if session.trim().is_empty() || roles.iter().any(|r| r.is_empty()) {
        return Err(bad());
    }
    Ok(Channel::new(session.trim(), roles))
}

fn dispatch(cli: &Cli) -> Result<(&'static str, Report)> {
    Ok(match &cli.command {
        Command::Check { file, process: p, context: d } => {
            let f = load(file)?;
            ("check", cmd_check(process(&f, p)?, context(&f, d)?, cli.budget))
        }
        Command::Subtype { file, sub, sup, relation } => {
            let f = load(file)?;
            ("subtype", cmd_subtype(&f, sub, sup, *relation, cli.budget)?)
        }
        Command::Safety { file, context: d } => ("safety", cmd_reach(context(&load(file)?, d)?, "safe", ctxlts::safe_in)?),
        Command::Dfree { file, context: d } => {
            ("dfree", cmd_reach(context(&load(file)?, d)?, "deadlock-free", ctxlts::dfree_in)?)
        }
        Command::Pending { file, context: d, channel: c } => {
            let f = load(file)?;
            ("pending", cmd_pending(context(&f, d)?, &channel(c)?)?)
        }
        Command::Interface { file, context: d } => ("interface", cmd_interface(context(&load(file)?, d)?, cli.budget)?),
        Command::Run { file, process: p } => {
            let f = load(file)?;
            ("run", cmd_run(process(&f, p)?, &cli.scheduler, cli.seed, cli.steps as usize)?)
        }
        Command::Explore { file, process: p } => ("explore", cmd_explore(process(&load(file)?, p)?, cli.depth as usize)?),
        Command::Errors { file, process: p } => ("errors", cmd_errors(process(&load(file)?, p)?, cli.depth as usize)?),
        Command::Parse { file } => {
            let f = load(file)?;
            let counts = json!({
                "types": f.types.len(),
                "contexts": f.contexts.len(),
                "processes": f.processes.len(),
            });
            ("parse", Report::new(Status::Holds, print_file(&f), json!({ "items": counts, "printed": print_file(&f) })))
        }
    })
}

fn cmd_check(p: &Process, d: &LocalContext, budget: u64) -> Report {
    let env = GlobalEnv::new();
    let rep = check_with(&env, p, d, budget);
    let status = if rep.inconclusive { Status::Inconclusive } else { Status::of(rep.verdict) };
    let mut text = match status {
        Status::Holds => "accepted".to_string(),
        Status::Refuted => "rejected".to_string(),
        Status::Inconclusive => "inconclusive".to_string(),
    };
    text.push_str(&format!("\nsynthesized: {}", print_context(&rep.synthesized)));
    for diag in &rep.diagnostics {
        text.push_str(&format!("\n  {}", diag.message));
    }
    if rep.verdict {
        let can = canonical(&env, p, d);
        text.push_str(&format!("\ncanonical: {}", can.holds));
    }
    let mut json = rep.to_json();
    if let Value::Object(o) = &mut json {
        let chans: Vec<String> = channels_used(p).iter().map(|c| c.to_string()).collect();
        o.insert("channels".into(), json!(chans));
        if rep.verdict {
            o.insert("canonical".into(), json!(canonical(&env, p, d).holds));
        }
    }
    Report::new(status, text, json)
}

fn subtype_outcome<G: std::fmt::Display>(
    r: Result<Option<subtype::Derivation<G>>, SubtypeError>,
    valid: impl Fn(&subtype::Derivation<G>) -> bool,
) -> Result<Report> {
    match r {
        Ok(Some(der)) => {
            let checked = valid(&der);
            if !checked {
                bail!("internal error: derivation failed independent validation");
            }
            let text = format!("holds ({} goals, validated)\n{}", der.size(), der.render());
            Ok(Report::new(Status::Holds, text, json!({ "validated": checked, "derivation": der.to_json() })))
        }
        Ok(None) => Ok(Report::new(Status::Refuted, "refuted: no derivation exists", json!({ "derivation": null }))),
        Err(e) if e.is_inconclusive() => Ok(Report::inconclusive(e.to_string())),
        Err(e) => Err(e.into()),
    }
}

fn cmd_subtype(f: &ProtocolFile, sub: &str, sup: &str, rel: Relation, budget: u64) -> Result<Report> {
    if rel == Relation::Standard {
        let t = f.types.get(sub).ok_or_else(|| anyhow!("no type named `{sub}`"))?;
        let u = f.types.get(sup).ok_or_else(|| anyhow!("no type named `{sup}`"))?;
        let mut rep = subtype_outcome(subtype::sub_standard_with(t, u, budget), subtype::check_std_derivation)?;
        rep.text = format!("{} <= {}: {}", print_type(t), print_type(u), rep.text);
        return Ok(rep);
    }
    let d1 = context(f, sub)?;
    let d2 = context(f, sup)?;
    let r = match rel {
        Relation::Single => subtype::sub_single_with(d1, d2, budget),
        _ => subtype::sub_multi_with(d1, d2, budget),
    };
    subtype_outcome(r, subtype::check_derivation)
}

fn verdict_json(g: &CtxGraph, v: &Verdict) -> Value {
    let cex = v.counterexample.as_ref().map(|c| {
        json!({
            "path": c.path.iter().map(|e| json!({
                "from": e.from,
                "to": e.to,
                "label": e.label.to_string(),
                "prob": e.prob,
            })).collect::<Vec<_>>(),
            "state": print_context(&c.state),
            "conflict": c.conflict.as_ref().map(|(o, i)| json!([o.to_string(), i.to_string()])),
            "trace": c.describe(g),
        })
    });
    json!({ "holds": v.holds, "states": g.states.len(), "edges": g.edges.len(), "counterexample": cex })
}

fn ctx_failure(e: CtxError) -> Result<Report> {
    match e {
        CtxError::StateBudgetExceeded(_) => Ok(Report::inconclusive(e.to_string())),
        e => Err(e.into()),
    }
}

fn cmd_reach(d: &LocalContext, what: &str, decide: fn(&CtxGraph) -> Verdict) -> Result<Report> {
    let g = match reach(d) {
        Ok(g) => g,
        Err(e) => return ctx_failure(e),
    };
    let v = decide(&g);
    let mut text = format!("{}{what} ({} states)", if v.holds { "" } else { "not " }, g.states.len());
    if let Some(c) = &v.counterexample {
        text.push_str(&format!("\ncounterexample:\n{}", c.describe(&g)));
    }
    Ok(Report::new(Status::of(v.holds), text, verdict_json(&g, &v)).with_dot(g.to_dot()))
}

fn cmd_pending(d: &LocalContext, c: &Channel) -> Result<Report> {
    let active = ActiveContext::activate(c, d)?;
    match ctxlts::pending(&active) {
        Ok(b) => Ok(Report::new(
            Status::of(b),
            format!("{}pending for {c}", if b { "" } else { "not " }),
            json!({ "pending": b, "channel": c.to_string() }),
        )),
        Err(e) => ctx_failure(e),
    }
}

fn cmd_interface(d: &LocalContext, budget: u64) -> Result<Report> {
    let dot = hide_internal(d).ok().map(|l| lts_dot(&l));
    let i = match synthesize_interface_with(d, budget) {
        Ok(i) => i,
        Err(SynthError::Subtype(e)) if e.is_inconclusive() => return Ok(Report::inconclusive(e.to_string())),
        Err(SynthError::Ctx(e)) => return ctx_failure(e),
        Err(e @ (SynthError::NotSafe(_) | SynthError::Stuck(_) | SynthError::ValidationFailed { .. })) => {
            return Ok(Report::new(Status::Refuted, format!("no interface: {e}"), json!({ "reason": e.to_string() })));
        }
        Err(e) => return Err(e.into()),
    };
    let validated = subtype::check_derivation(&i.derivation);
    let iface = print_context(&i.context());
    let text = format!("interface: {iface}\nvalidated: {validated} ({} goals)", i.derivation.size());
    let json = json!({
        "session": i.session,
        "roles": i.roles.iter().collect::<Vec<_>>(),
        "type": print_type(&i.ty),
        "interface": iface,
        "validated": validated,
        "derivation": i.derivation.to_json(),
    });
    let rep = Report::new(Status::of(validated), text, json);
    Ok(match dot {
        Some(d) => rep.with_dot(d),
        None => rep,
    })
}

fn lts_dot(l: &mcmpst::synth::AnnotatedLts) -> String {
    let esc = |s: String| s.replace('\\', "\\\\").replace('"', "\\\"");
    let mut out = String::from("digraph lts {\n  node [shape=box];\n");
    for (i, st) in l.states.iter().enumerate() {
        out.push_str(&format!("  n{i} [label=\"{}\"];\n", esc(print_context(st))));
    }
    for e in &l.edges {
        let style = match e.visibility {
            mcmpst::synth::Visibility::External => "solid",
            _ => "dashed",
        };
        out.push_str(&format!(
            "  n{} -> n{} [label=\"{} @ {}\", style={style}];\n",
            e.from,
            e.to,
            esc(e.label.to_string()),
            e.prob
        ));
    }
    out.push_str("}\n");
    out
}

fn reduce_failure(e: ReduceError) -> Result<Report> {
    match e {
        ReduceError::BudgetExceeded(_) => Ok(Report::inconclusive(e.to_string())),
        e => Err(e.into()),
    }
}

fn cmd_run(p: &Process, sched: &Scheduler, seed: u64, steps: usize) -> Result<Report> {
    let t = match simulate_with(p, sched, seed, steps) {
        Ok(t) => t,
        Err(e) => return reduce_failure(e),
    };
    let mut text = String::new();
    for (i, s) in t.steps.iter().enumerate() {
        text.push_str(&format!("{:>3}. [{}] {} @ {}\n", i + 1, s.rule, s.description, s.prob));
    }
    text.push_str(&format!("cumulative: {}\nfinal: {}", t.cumulative, print_process(&t.final_state)));
    Ok(Report::new(Status::Holds, text, t.to_json()))
}

fn cmd_explore(p: &Process, depth: usize) -> Result<Report> {
    let ex = match explore(p, depth) {
        Ok(ex) => ex,
        Err(e) => return reduce_failure(e),
    };
    let mut text = format!(
        "{} states, {} edges{}\n",
        ex.states.len(),
        ex.edges.len(),
        if ex.truncated { ", truncated" } else { "" }
    );
    for o in &ex.outcomes {
        let tag = match (&o.error, o.deadlocked) {
            (Some(e), _) => format!(" [{e}]"),
            (None, true) => " [deadlock]".to_string(),
            _ => String::new(),
        };
        text.push_str(&format!("{} : {}{tag}\n", o.mass, print_process(&o.terminal)));
    }
    let dot = ex.to_dot();
    Ok(Report::new(Status::Holds, text, ex.to_json()).with_dot(dot))
}

fn cmd_errors(p: &Process, depth: usize) -> Result<Report> {
    if let Some(e) = is_error(p) {
        return Ok(Report::new(
            Status::Refuted,
            format!("error at the initial state: {e}"),
            json!({ "errors": [{ "state": 0, "process": print_process(p), "error": e.to_string() }], "truncated": false }),
        ));
    }
    let ex = match explore(p, depth) {
        Ok(ex) => ex,
        Err(e) => return reduce_failure(e),
    };
    let errs: Vec<Value> = ex
        .errors
        .iter()
        .map(|(s, e)| json!({ "state": s, "process": print_process(&ex.states[*s]), "error": e.to_string() }))
        .collect();
    let mut text = if errs.is_empty() {
        format!("no error state within depth {depth}")
    } else {
        format!("{} error state(s)", errs.len())
    };
    for (s, e) in &ex.errors {
        text.push_str(&format!("\n  {}: {e}", print_process(&ex.states[*s])));
    }
    if ex.truncated {
        text.push_str("\n(exploration truncated)");
    }
    let status = if !errs.is_empty() {
        Status::Refuted
    } else if ex.truncated {
        Status::Inconclusive
    } else {
        Status::Holds
    };
    Ok(Report::new(status, text, json!({ "errors": errs, "truncated": ex.truncated })))
}

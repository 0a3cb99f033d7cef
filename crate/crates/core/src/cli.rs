//! The `ubdb` command line: parse → lint → check → generate.
//!
//! Exit status: 0 when everything holds, 1 for violations or error-level
//! findings, 2 for usage, input and internal errors.

use std::ffi::OsString;
use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::checker::{self, report, CheckOptions, CheckReport, Verdict};
use crate::engine::{MachineModel, Scope, Universe};
use crate::resolve::ResolvedChain;
use crate::{parser, patterns, resolve, sqlgen, types};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FINDINGS: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "ubdb", version, about = "Check layered refinement models of databases and generate SQL from them")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check every machine's invariants, feasibility and well-definedness.
    Check(CheckArgs),
    /// Check each refinement step along the chain.
    RefineCheck(CheckArgs),
    /// Report pattern and layering findings.
    Lint(CommonArgs),
    /// Generate SQL from the last (or named) machine once the chain verifies.
    Generate(GenerateArgs),
    /// Replay a trace file through the model, printing each state.
    Animate(AnimateArgs),
    /// Pretty-print models in canonical form.
    Fmt(FmtArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Structured,
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Model files; their contents form one refinement chain.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Restrict to one machine.
    #[arg(long)]
    machine: Option<String>,
}

#[derive(Args, Debug)]
struct ScopeArgs {
    /// Carrier set size, e.g. `--scope PERSON=3` (repeatable).
    #[arg(long = "scope", value_name = "SET=N")]
    scope: Vec<String>,
    /// Maximum number of states explored per machine.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    budget: Option<u64>,
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    scope: ScopeArgs,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    scope: ScopeArgs,
    /// Path of the `.sql` file; the manifest is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Generate without verifying first; recorded in the manifest.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct AnimateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    scope: ScopeArgs,
    /// Trace file: a structured check report or a list of steps.
    #[arg(long, required = true)]
    trace: PathBuf,
}

#[derive(Args, Debug)]
struct FmtArgs {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Write here instead of standard output (single input only).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Output sinks, so the command line can be driven in-process.
pub struct Io<'a> {
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
    pub color: bool,
}

/// Colour unless `UBDB_COLOR=0` or standard output is not a terminal.
pub fn color_enabled() -> bool {
    std::env::var("UBDB_COLOR").map(|v| v != "0").unwrap_or(true) && std::io::stdout().is_terminal()
}

/// Run the process command line.
pub fn main_with_env() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let mut out = stdout.lock();
    let mut err = stderr.lock();
    let mut io = Io {
        out: &mut out,
        err: &mut err,
        color: color_enabled(),
    };
    run(std::env::args_os(), &mut io)
}

struct Failure(i32, String);

type Outcome = Result<i32, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure(EXIT_USAGE, msg.into())
}

/// Parse arguments (the first is the program name) and run one command.
pub fn run<I, T>(args: I, io: &mut Io) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                io.out.write_all(text.as_bytes())
            } else {
                io.err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Check(a) => cmd_check(a, io, false),
        Command::RefineCheck(a) => cmd_check(a, io, true),
        Command::Lint(a) => cmd_lint(a, io),
        Command::Generate(a) => cmd_generate(a, io),
        Command::Animate(a) => cmd_animate(a, io),
        Command::Fmt(a) => cmd_fmt(a, io),
    };
    match result {
        Ok(code) => code,
        Err(Failure(code, msg)) => {
            let msg = msg.trim_end();
            let _ = writeln!(io.err, "{msg}");
            code
        }
    }
}

fn load(inputs: &[PathBuf]) -> Result<ResolvedChain, Failure> {
    let chain = parser::parse_files(inputs).map_err(|diags| {
        usage(diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n"))
    })?;
    let resolved = resolve::resolve(&chain)
        .map_err(|errs| usage(errs.iter().map(|e| format!("error: {e}")).collect::<Vec<_>>().join("\n")))?;
    let diags = types::typecheck(&resolved);
    if !diags.is_empty() {
        return Err(usage(
            diags.iter().map(|d| format!("type error: {d}")).collect::<Vec<_>>().join("\n"),
        ));
    }
    Ok(resolved)
}

fn options(chain: &ResolvedChain, a: &ScopeArgs) -> Result<CheckOptions, Failure> {
    let mut scope = Scope::default_for(chain);
    for s in &a.scope {
        let (set, n) = s
            .split_once('=')
            .ok_or_else(|| usage(format!("invalid --scope '{s}': expected SET=N")))?;
        let n: usize = n
            .trim()
            .parse()
            .map_err(|_| usage(format!("invalid --scope '{s}': '{n}' is not a count")))?;
        scope.set(set.trim(), n).map_err(|e| usage(format!("invalid --scope '{s}': {e}")))?;
    }
    let mut opts = CheckOptions::new(scope);
    if let Some(b) = a.budget {
        opts = opts.budget(usize::try_from(b).unwrap_or(usize::MAX));
    }
    Ok(opts)
}

fn write_out(io: &mut Io, text: &str) -> Result<(), Failure> {
    io.out
        .write_all(text.as_bytes())
        .map_err(|e| usage(format!("cannot write output: {e}")))
}

fn machine_names(chain: &ResolvedChain, only: Option<&str>) -> Result<Vec<String>, Failure> {
    match only {
        Some(m) if chain.machine(m).is_none() => Err(usage(format!("unknown machine '{m}'"))),
        Some(m) => Ok(vec![m.to_string()]),
        None => Ok(chain.machines.iter().map(|m| m.name.clone()).collect()),
    }
}

/// Machine checks, or refinement checks for every machine with an
/// abstraction.
fn verify(chain: &ResolvedChain, opts: &CheckOptions, only: Option<&str>, refinement: bool) -> Result<Vec<CheckReport>, Failure> {
    let internal = |e: checker::CheckError| Failure(EXIT_USAGE, format!("error: {e}"));
    let mut reports = Vec::new();
    for name in machine_names(chain, only)? {
        let m = chain.machine(&name).expect("known machine");
        if refinement {
            if let Some(abs) = chain.abstraction_of(m) {
                reports.extend(checker::check_refinement(chain, opts, &abs.name, &name).map_err(internal)?);
            }
        } else {
            let mut found = checker::check(chain, opts, &name).map_err(internal)?;
            checker::annotate_circular(m, &mut found);
            reports.extend(found);
        }
    }
    Ok(reports)
}

fn cmd_check(a: &CheckArgs, io: &mut Io, refinement: bool) -> Outcome {
    let chain = load(&a.common.inputs)?;
    let opts = options(&chain, &a.scope)?;
    let reports = verify(&chain, &opts, a.common.machine.as_deref(), refinement)?;
    match a.common.format {
        Format::Text => write_out(io, &report::to_text(&reports, io.color))?,
        Format::Structured => write_out(io, &json_text(&report::to_json(&reports)))?,
    }
    Ok(if reports.iter().all(|r| r.verdict == Verdict::Holds) {
        EXIT_OK
    } else {
        EXIT_FINDINGS
    })
}

fn json_text(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON value serializes");
    s.push('\n');
    s
}

fn cmd_lint(a: &CommonArgs, io: &mut Io) -> Outcome {
    let chain = load(&a.inputs)?;
    let mut findings = patterns::lint(&chain);
    if let Some(m) = &a.machine {
        let machine = chain.machine(m).ok_or_else(|| usage(format!("unknown machine '{m}'")))?;
        let names: Vec<&str> = machine
            .variables
            .iter()
            .map(|v| v.name.as_str())
            .chain(machine.events.iter().map(|e| e.name.as_str()))
            .chain(std::iter::once(m.as_str()))
            .collect();
        findings.retain(|f| names.contains(&f.subject.as_str()));
    }
    match a.format {
        Format::Text => write_out(io, &patterns::to_text(&findings, io.color))?,
        Format::Structured => write_out(io, &json_text(&patterns::to_json(&findings)))?,
    }
    Ok(if patterns::has_errors(&findings) { EXIT_FINDINGS } else { EXIT_OK })
}

fn default_out(inputs: &[PathBuf]) -> PathBuf {
    let stem = inputs
        .first()
        .and_then(|p| p.file_stem())
        .map(|s| s.to_os_string())
        .unwrap_or_else(|| "model".into());
    let mut p = PathBuf::from(stem);
    p.set_extension("sql");
    p
}

fn cmd_generate(a: &GenerateArgs, io: &mut Io) -> Outcome {
    let chain = load(&a.common.inputs)?;
    let opts = options(&chain, &a.scope)?;
    let mut summary = None;
    if !a.force {
        let mut reports = verify(&chain, &opts, None, false)?;
        reports.extend(verify(&chain, &opts, None, true)?);
        let failing: Vec<CheckReport> = reports.iter().filter(|r| r.verdict != Verdict::Holds).cloned().collect();
        if !failing.is_empty() {
            let mut msg = String::from("generation refused: the model does not verify at this scope (use --force to override)\n");
            msg.push_str(&report::to_text(&failing, false));
            return Err(Failure(EXIT_FINDINGS, msg));
        }
        summary = Some(report::summarize(&reports));
    }
    let mut script = sqlgen::generate(&chain, a.common.machine.as_deref()).map_err(|e| Failure(EXIT_FINDINGS, format!("error: {e}")))?;
    script.manifest.forced = a.force;
    let sql_path = a.out.clone().unwrap_or_else(|| default_out(&a.common.inputs));
    let manifest_path = sqlgen::emit(&script, &sql_path).map_err(|e| usage(format!("error: {e}")))?;
    match a.common.format {
        Format::Text => {
            let mut text = format!(
                "wrote {} ({} tables, {} procedures) and {}\n",
                sql_path.display(),
                script.tables.len(),
                script.procedures.len(),
                manifest_path.display()
            );
            match &summary {
                Some(s) => text.push_str(&format!("verified: {} obligations hold\n", s.holds)),
                None => text.push_str("not verified (--force)\n"),
            }
            write_out(io, &text)?;
        }
        Format::Structured => {
            let v = serde_json::json!({
                "machine": script.machine,
                "sql": sql_path.display().to_string(),
                "manifest": manifest_path.display().to_string(),
                "tables": script.tables.len(),
                "procedures": script.procedures.len(),
                "forced": a.force,
                "verification": summary,
            });
            write_out(io, &json_text(&v))?;
        }
    }
    Ok(EXIT_OK)
}

fn cmd_animate(a: &AnimateArgs, io: &mut Io) -> Outcome {
    let chain = load(&a.common.inputs)?;
    let opts = options(&chain, &a.scope)?;
    let text = std::fs::read_to_string(&a.trace)
        .map_err(|e| usage(format!("cannot read {}: {e}", a.trace.display())))?;
    // The machine: named, else the one the report's trace comes from, else
    // the last.
    let from_report = serde_json::from_str::<serde_json::Value>(&text).ok().and_then(|doc| {
        doc.get("records")?
            .as_array()?
            .iter()
            .find(|r| r.get("trace").and_then(|t| t.as_array()).is_some_and(|t| !t.is_empty()))?
            .get("machine")?
            .as_str()
            .map(str::to_string)
    });
    let name = a
        .common
        .machine
        .clone()
        .or(from_report)
        .or_else(|| chain.machines.last().map(|m| m.name.clone()))
        .ok_or_else(|| usage("the chain has no machines"))?;
    let m = chain.machine(&name).ok_or_else(|| usage(format!("unknown machine '{name}'")))?;
    let universe = std::sync::Arc::new(Universe::new(&chain, &opts.scope).map_err(|e| usage(format!("error: {e}")))?);
    let model = MachineModel::new(m, universe.clone()).map_err(|e| usage(format!("error: {e}")))?;
    let steps = report::parse_trace(&text, &universe).map_err(|e| usage(format!("{}: {e}", a.trace.display())))?;

    let mut state = model.initial_state();
    let mut records = Vec::new();
    let mut out = String::new();
    let show_state = |s: &crate::engine::State| -> Vec<(String, String)> {
        model
            .var_names
            .iter()
            .zip(s)
            .map(|(n, v)| (n.clone(), universe.display(v).to_string()))
            .collect()
    };
    out.push_str(&format!("machine {name}\ninitial state\n"));
    for (n, v) in show_state(&state) {
        out.push_str(&format!("    {n} = {v}\n"));
    }
    let mut failure = None;
    for (i, (event, binding)) in steps.iter().enumerate() {
        let Some(e) = model.event_index(event) else {
            failure = Some(format!("step {}: unknown event '{event}'", i + 1));
            break;
        };
        let ev = &model.events[e];
        let mut b = Vec::new();
        for p in &ev.params {
            match binding.iter().find(|(n, _)| n == p) {
                Some((_, v)) => b.push(v.clone()),
                None => {
                    failure = Some(format!("step {}: parameter '{p}' of {event} missing", i + 1));
                    break;
                }
            }
        }
        if failure.is_some() {
            break;
        }
        match ev.guards_hold(&b, &state) {
            Ok(true) => {}
            Ok(false) => {
                let g = ev.failing_guard(&b, &state).unwrap_or("typing");
                failure = Some(format!("step {}: {event} is not enabled (guard @{g} fails)", i + 1));
                break;
            }
            Err(err) => {
                failure = Some(format!("step {}: {err}", i + 1));
                break;
            }
        }
        let next = match ev.apply(&b, &state) {
            Ok(s) => s,
            Err(err) => {
                failure = Some(format!("step {}: {err}", i + 1));
                break;
            }
        };
        let args: Vec<String> = binding.iter().map(|(n, v)| format!("{n} = {}", universe.display(v))).collect();
        out.push_str(&format!("step {}: {event}({})\n", i + 1, args.join(", ")));
        let shown = show_state(&next);
        for ((n, v), old) in shown.iter().zip(&state) {
            let marker = if universe.display(old).to_string() != *v { "*" } else { " " };
            out.push_str(&format!("  {marker} {n} = {v}\n"));
        }
        records.push(serde_json::json!({
            "event": event,
            "binding": binding.iter().map(|(n, v)| (n.clone(), universe.display(v).to_string())).collect::<std::collections::BTreeMap<_, _>>(),
            "state": shown.into_iter().collect::<std::collections::BTreeMap<_, _>>(),
        }));
        state = next;
    }
    match a.common.format {
        Format::Text => {
            if let Some(f) = &failure {
                out.push_str(&format!("stopped: {f}\n"));
            }
            write_out(io, &out)?;
        }
        Format::Structured => {
            let v = serde_json::json!({
                "machine": name,
                "steps": records,
                "error": failure,
            });
            write_out(io, &json_text(&v))?;
        }
    }
    Ok(if failure.is_some() { EXIT_FINDINGS } else { EXIT_OK })
}

fn cmd_fmt(a: &FmtArgs, io: &mut Io) -> Outcome {
    if a.out.is_some() && a.inputs.len() > 1 {
        return Err(usage("--out takes a single input file"));
    }
    let mut texts = Vec::new();
    for path in &a.inputs {
        let chain = parser::parse_files(std::slice::from_ref(path))
            .map_err(|diags| usage(diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n")))?;
        texts.push(parser::pretty_print(&chain));
    }
    match &a.out {
        Some(p) => write_file(p, &texts[0])?,
        None => write_out(io, &texts.join("\n"))?,
    }
    Ok(EXIT_OK)
}

fn write_file(p: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(p, text).map_err(|e| usage(format!("cannot write {}: {e}", p.display())))
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use panicgate_core::cfg::{build_cfg, compute_panic_reach, dump, DEFAULT_AST_BLOCKS};
use panicgate_core::corpus::{self, show};
use panicgate_core::exec::{run, ExecConfig, ExecError, Report, StopMode};
use panicgate_core::ir::Program;
use panicgate_core::loader::parse_program;
use panicgate_core::report::{ExitClass, ReportDocument};
use panicgate_core::state::DEFAULT_STEP_BUDGET;
use panicgate_core::symbolic::{parse_seed, ArgError, ArgValue, SolverConfig};

const EXIT_USAGE: u8 = 2;
const EXIT_FAULT: u8 = 3;

#[derive(Parser)]
#[command(name = "panicgate", version, about = "Panic-gated concolic execution over .pprog programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a program from a start point and report panic findings.
    Run(RunArgs),
    /// Regenerate the benchmark corpus and check it against a fresh emission.
    Corpus {
        /// Output directory.
        #[arg(long, default_value = "corpus")]
        out: PathBuf,
        /// Only compare; exit 3 if any file is missing or stale.
        #[arg(long)]
        check: bool,
    },
    /// Run optimized and unoptimized modes on one program and compare them.
    Diff(Target),
}

#[derive(Args)]
struct Target {
    /// Program in .pprog format.
    program: PathBuf,
    /// Entry name or function signature to start from.
    #[arg(long)]
    start: String,
    /// Seed value, one per argument in signature order.
    #[arg(long = "seed")]
    seeds: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_AST_BLOCKS)]
    max_ast_blocks: usize,
    #[arg(long, default_value_t = DEFAULT_STEP_BUDGET)]
    step_budget: u64,
    /// Solver command line; defaults to $PANICGATE_SOLVER or `z3 -in -smt2`.
    #[arg(long)]
    solver_cmd: Option<String>,
    /// Per-query solver timeout in milliseconds.
    #[arg(long)]
    solver_timeout_ms: Option<u64>,
    /// Keep exploring after the first confirmed finding.
    #[arg(long)]
    find_all: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    target: Target,
    /// Query every symbolic branch (filters 1, 3, 4 off).
    #[arg(long)]
    no_opt: bool,
    /// Write the JSON report here (`-` for stdout).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Print the CFG with panic reachability before running.
    #[arg(long)]
    dump_cfg: bool,
    /// Write every solver query as an SMT-LIB script into this directory.
    #[arg(long)]
    emit_smt: Option<PathBuf>,
    /// Check shadow terms against concrete values at every micro-op.
    #[arg(long)]
    check_consistency: bool,
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn usage(error: anyhow::Error) -> Failure {
    Failure { code: EXIT_USAGE, error }
}

fn fault(error: anyhow::Error) -> Failure {
    Failure { code: EXIT_FAULT, error }
}

fn exec_failure(e: ExecError) -> Failure {
    match e {
        ExecError::UnknownStart(_) | ExecError::Arg(_) => usage(e.into()),
        other => fault(other.into()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Corpus { out, check } => cmd_corpus(&out, check),
        Command::Diff(target) => cmd_diff(&target),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("panicgate: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load(path: &Path) -> Result<Program, Failure> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display())).map_err(usage)?;
    match parse_program(&text) {
        Ok(loaded) => {
            for w in &loaded.warnings {
                eprintln!("{}: {w}", path.display());
            }
            Ok(loaded.program)
        }
        Err(diags) => {
            for d in &diags {
                eprintln!("{}: {d}", path.display());
            }
            Err(usage(anyhow!("{} does not load ({} errors)", path.display(), diags.len())))
        }
    }
}

fn seeds(program: &Program, target: &Target) -> Result<Vec<ArgValue>, Failure> {
    let specs = program.signature_for(&target.start).map(|s| s.args.clone()).unwrap_or_default();
    if specs.len() != target.seeds.len() {
        let e = ArgError::Arity { expected: specs.len(), got: target.seeds.len() };
        return Err(usage(anyhow!("start `{}`: {e}", target.start)));
    }
    specs
        .iter()
        .zip(&target.seeds)
        .map(|(spec, text)| parse_seed(spec, text).map_err(|e| usage(e.into())))
        .collect()
}

fn config(program: &Program, target: &Target) -> Result<ExecConfig, Failure> {
    if program.resolve_start(&target.start).is_none() {
        return Err(usage(anyhow!("unknown start `{}`", target.start)));
    }
    let mut c = ExecConfig::new(&target.start, seeds(program, target)?);
    c.max_ast_blocks = target.max_ast_blocks;
    c.step_budget = target.step_budget;
    c.stop_mode = if target.find_all { StopMode::Exhaustive } else { StopMode::FirstFinding };
    let mut solver = SolverConfig::default();
    if let Some(cmd) = &target.solver_cmd {
        solver.command = cmd.clone();
    }
    if let Some(ms) = target.solver_timeout_ms {
        solver.timeout = Duration::from_millis(ms);
    }
    c.solver = solver;
    Ok(c)
}

fn summary(report: &Report) -> String {
    let s = report.stats;
    format!(
        "branches {} (internal {}, gated {}, context {}, ast {}, queried {}: sat {}, unsat {}, unknown {})",
        s.cbranch_total,
        s.internal_filtered,
        s.gate_filtered,
        s.context_filtered,
        s.ast_filtered,
        s.solver_queries,
        s.sat_count,
        s.unsat_count,
        s.unknown_count
    )
}

fn cmd_run(args: &RunArgs) -> Result<u8, Failure> {
    let program = load(&args.target.program)?;
    let mut c = config(&program, &args.target)?;
    c.optimized = !args.no_opt;
    c.check_consistency = args.check_consistency;
    if let Some(dir) = &args.emit_smt {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display())).map_err(fault)?;
        c.emit_smt = Some(dir.clone());
    }
    if args.dump_cfg {
        let cfg = build_cfg(&program);
        print!("{}", dump(&cfg, &compute_panic_reach(&cfg, &program.panic_set)));
    }
    let report = run(&program, &c).map_err(exec_failure)?;
    let doc = ReportDocument::new(&program, &c, &report);

    let to_stdout = args.report.as_deref() == Some(Path::new("-"));
    if !to_stdout {
        println!("start {} seed [{}] {}", c.start, show(&c.seeds), if c.optimized { "optimized" } else { "unoptimized" });
        println!("{}", summary(&report));
        for f in &doc.findings {
            println!("finding at {} -> [{}] {:?}", f.branch_location, show(&f.synthesized_inputs), f.replay_verdict);
        }
        if args.check_consistency {
            println!("consistency {} checks, {} violations", report.consistency_checks, report.consistency_violations);
        }
        println!("terminal {:?}", report.terminal);
        println!("exit {} {:?}", doc.exit.code(), doc.exit);
    }
    match &args.report {
        Some(_) if to_stdout => print!("{}", doc.to_json()),
        Some(path) => std::fs::write(path, doc.to_json()).with_context(|| format!("cannot write {}", path.display())).map_err(fault)?,
        None => {}
    }
    Ok(doc.exit.code() as u8)
}

fn cmd_diff(target: &Target) -> Result<u8, Failure> {
    let program = load(&target.program)?;
    let base = config(&program, target)?;
    let mut reports = Vec::new();
    for optimized in [true, false] {
        let mut c = base.clone();
        c.optimized = optimized;
        let r = run(&program, &c).map_err(exec_failure)?;
        println!("{:<11} {}", if optimized { "optimized" } else { "unoptimized" }, summary(&r));
        println!("{:<11} confirmed sites {:?}", "", r.confirmed().map(|f| f.branch_location.to_string()).collect::<Vec<_>>());
        reports.push(r);
    }
    let (o, u) = (reports[0].stats.solver_queries, reports[1].stats.solver_queries);
    if o == 0 {
        println!("query reduction {u}/0 (optimized mode made no queries)");
    } else {
        println!("query reduction {u}/{o} = {:.2}x", u as f64 / o as f64);
    }
    let sites = |r: &Report| r.confirmed().map(|f| f.branch_location).collect::<std::collections::BTreeSet<_>>();
    println!("confirmed sites {}", if sites(&reports[0]) == sites(&reports[1]) { "agree" } else { "differ" });
    Ok(0)
}

fn cmd_corpus(out: &Path, check: bool) -> Result<u8, Failure> {
    let err = |e: corpus::CorpusError| fault(e.into());
    if !check {
        for name in corpus::write_corpus(out).map_err(err)? {
            println!("wrote {}", out.join(name).display());
        }
    }
    let stale = corpus::verify_corpus(out).map_err(err)?;
    for name in &stale {
        println!("stale {}", out.join(name).display());
    }
    if stale.is_empty() {
        println!("corpus at {} is current", out.display());
        Ok(ExitClass::NoFinding.code() as u8)
    } else {
        Ok(EXIT_FAULT)
    }
}

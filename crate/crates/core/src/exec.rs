//! Concolic executor: the concrete fetch/execute loop with a symbolic
//! shadow, the branch filter cascade and negated-path exploration.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cfg::{ast_precheck, build_cfg, compute_panic_reach, AstVerdict, Cfg, ReachSet, DEFAULT_AST_BLOCKS};
use crate::ir::{is_internal_pcode_target, AddressSpace, Location, Opcode, PcodeOp, Program};
use crate::state::{fallthrough, FaultKind, MachineState, StateError, StepOutcome, DEFAULT_STEP_BUDGET};
use crate::symbolic::{
    assert_path, init_symbolic_args, lazily_concretize, materialize, references_args, shadow_eval, ArgError,
    ArgValue, CheckResult, Model, PathPredicate, Shadow, SolverConfig, SolverError, SolverSession, SolverStats, SymbolicArg,
    Term, UnboundVar,
};

pub use crate::symbolic::synthesize_inputs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StopMode {
    FirstFinding,
    Exhaustive,
}

#[derive(Debug, Clone)]
pub struct ExecConfig {
    pub start: String,
    pub seeds: Vec<ArgValue>,
    pub optimized: bool,
    pub max_ast_blocks: usize,
    pub step_budget: u64,
    pub stop_mode: StopMode,
    pub solver: SolverConfig,
    /// Check every shadow term against the concrete value under the seed.
    pub check_consistency: bool,
    /// Directory receiving one SMT-LIB script per solver query.
    pub emit_smt: Option<PathBuf>,
}

impl ExecConfig {
    pub fn new(start: &str, seeds: Vec<ArgValue>) -> Self {
        ExecConfig {
            start: start.to_string(),
            seeds,
            optimized: true,
            max_ast_blocks: DEFAULT_AST_BLOCKS,
            step_budget: DEFAULT_STEP_BUDGET,
            stop_mode: StopMode::FirstFinding,
            solver: SolverConfig::default(),
            check_consistency: false,
            emit_smt: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecStats {
    pub cbranch_total: u64,
    pub internal_filtered: u64,
    pub gate_filtered: u64,
    pub context_filtered: u64,
    pub ast_filtered: u64,
    pub solver_queries: u64,
    pub sat_count: u64,
    pub unsat_count: u64,
    pub unknown_count: u64,
    pub steps: u64,
    pub wall_ms: u64,
}

impl ExecStats {
    /// Every CBRANCH is accounted for by exactly one filter or one query.
    pub fn identity_holds(&self) -> bool {
        self.cbranch_total
            == self.internal_filtered + self.gate_filtered + self.context_filtered + self.ast_filtered + self.solver_queries
    }

    pub fn gate_ratio(&self) -> f64 {
        if self.cbranch_total == 0 {
            0.0
        } else {
            self.gate_filtered as f64 / self.cbranch_total as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReplayVerdict {
    PanicConfirmed,
    ReachedAltOnly,
    Diverged,
}

mod hex_model {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    pub fn serialize<S: Serializer>(m: &BTreeMap<String, u128>, s: S) -> Result<S::Ok, S::Error> {
        m.iter().map(|(k, v)| (k.clone(), format!("{v:#x}"))).collect::<BTreeMap<_, _>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, u128>, D::Error> {
        let raw = BTreeMap::<String, String>::deserialize(d)?;
        raw.into_iter()
            .map(|(k, v)| {
                let digits = v.strip_prefix("0x").unwrap_or(&v);
                u128::from_str_radix(digits, 16).map(|n| (k, n)).map_err(serde::de::Error::custom)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub branch_location: Location,
    pub addr_alt: Location,
    /// SMT-LIB text of the condition that was asserted negated.
    pub negated_condition: String,
    #[serde(with = "hex_model")]
    pub model: Model,
    /// The model satisfies the base assertions and ¬φ under the pure evaluator.
    pub model_checked: bool,
    pub synthesized_inputs: Vec<ArgValue>,
    pub replay_verdict: ReplayVerdict,
}

/// Which filter disposed of a CBRANCH, or `Queried` if it reached the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchDecision {
    Internal,
    Gated,
    Context,
    Ast,
    Queried,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BranchEvent {
    pub location: Location,
    pub decision: BranchDecision,
    pub symbolic: bool,
    pub taken: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Terminal {
    Halt,
    PanicReached { addr: u64 },
    Fault { fault: FaultKind },
    StoppedAtFinding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub findings: Vec<Finding>,
    pub stats: ExecStats,
    pub terminal: Terminal,
    /// One event per executed CBRANCH, in execution order.
    pub branch_log: Vec<BranchEvent>,
    /// Counters kept by the solver session itself.
    pub solver: SolverStats,
    pub consistency_checks: u64,
    pub consistency_violations: u64,
    pub scope_violations: u64,
    pub lazy_concretizations: u64,
    pub path_predicate_len: usize,
    /// Π re-evaluated under the seed at the end of the run.
    pub path_holds_under_seed: bool,
}

impl Report {
    /// Branch sites that got a solver query, in execution order.
    pub fn queried_sites(&self) -> Vec<Location> {
        self.branch_log.iter().filter(|e| e.decision == BranchDecision::Queried).map(|e| e.location).collect()
    }

    pub fn confirmed(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.replay_verdict == ReplayVerdict::PanicConfirmed)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExecError {
    #[error("unknown start `{0}`")]
    UnknownStart(String),
    #[error(transparent)]
    Arg(#[from] ArgError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error("concretization failed: {0}")]
    Unbound(#[from] UnboundVar),
    #[error("cannot write query script: {0}")]
    Io(#[from] std::io::Error),
}

impl From<crate::symbolic::args::InitError> for ExecError {
    fn from(e: crate::symbolic::args::InitError) -> Self {
        match e {
            crate::symbolic::args::InitError::Arg(a) => ExecError::Arg(a),
            crate::symbolic::args::InitError::Solver(s) => ExecError::Solver(s),
        }
    }
}

fn resolve(program: &Program, start: &str) -> Result<(u64, Option<crate::ir::FunctionSig>), ExecError> {
    let addr = program.resolve_start(start).ok_or_else(|| ExecError::UnknownStart(start.to_string()))?;
    Ok((addr, program.signature_for(start).cloned()))
}

fn empty_sig(addr: u64) -> crate::ir::FunctionSig {
    crate::ir::FunctionSig { name: String::new(), args: vec![], entry: addr }
}

/// Pure concrete execution with the given inputs.
pub fn replay_concrete(
    program: &Program,
    inputs: &[ArgValue],
    start: &str,
    addr_alt: Option<Location>,
    step_budget: u64,
) -> Result<ReplayVerdict, ExecError> {
    let (addr, sig) = resolve(program, start)?;
    let mut state = MachineState::new(program);
    state.step_budget = step_budget;
    materialize(&sig.unwrap_or_else(|| empty_sig(addr)), inputs, &mut state)?;
    if program.is_panic(addr) {
        return Ok(ReplayVerdict::PanicConfirmed);
    }
    state.pc = Some(Location::new(addr, 0));
    let mut reached = false;
    loop {
        reached |= state.pc == addr_alt;
        match state.step(program)? {
            StepOutcome::Continue(_) => {}
            StepOutcome::PanicReached(_) => return Ok(ReplayVerdict::PanicConfirmed),
            StepOutcome::Halt if reached => return Ok(ReplayVerdict::ReachedAltOnly),
            StepOutcome::Halt | StepOutcome::Fault(_) => return Ok(ReplayVerdict::Diverged),
        }
    }
}

/// Terminal outcome of a plain concrete run.
pub fn run_concrete(program: &Program, inputs: &[ArgValue], start: &str, step_budget: u64) -> Result<Terminal, ExecError> {
    let (addr, sig) = resolve(program, start)?;
    let mut state = MachineState::new(program);
    state.step_budget = step_budget;
    materialize(&sig.unwrap_or_else(|| empty_sig(addr)), inputs, &mut state)?;
    if program.is_panic(addr) {
        return Ok(Terminal::PanicReached { addr });
    }
    state.pc = Some(Location::new(addr, 0));
    Ok(match crate::state::run_to_end(&mut state, program)? {
        StepOutcome::PanicReached(a) => Terminal::PanicReached { addr: a },
        StepOutcome::Fault(f) => Terminal::Fault { fault: f },
        _ => Terminal::Halt,
    })
}

pub fn run(program: &Program, config: &ExecConfig) -> Result<Report, ExecError> {
    Executor::new(program, config)?.execute()
}

/// Baseline: every symbolic non-internal CBRANCH gets a query.
pub fn run_unoptimized(program: &Program, config: &ExecConfig) -> Result<Report, ExecError> {
    let mut c = config.clone();
    c.optimized = false;
    run(program, &c)
}

enum Flow {
    Go,
    Stop,
}

struct Executor<'p> {
    program: &'p Program,
    config: &'p ExecConfig,
    cfg: Cfg,
    reach: ReachSet,
    state: MachineState,
    shadow: Shadow,
    session: SolverSession,
    pp: PathPredicate,
    args: Vec<SymbolicArg>,
    seed_model: Model,
    entry: u64,
    report: Report,
}

impl<'p> Executor<'p> {
    fn new(program: &'p Program, config: &'p ExecConfig) -> Result<Self, ExecError> {
        let (entry, sig) = resolve(program, &config.start)?;
        let cfg = build_cfg(program);
        let reach = compute_panic_reach(&cfg, &program.panic_set);
        let mut state = MachineState::new(program);
        state.step_budget = config.step_budget;
        let mut shadow = Shadow::default();
        let mut session = SolverSession::spawn(&config.solver)?;
        let sig = sig.unwrap_or_else(|| empty_sig(entry));
        let (args, seed_model) = init_symbolic_args(&sig, &config.seeds, &mut state, &mut shadow, &mut session)?;
        if let Some(dir) = &config.emit_smt {
            std::fs::create_dir_all(dir)?;
        }
        Ok(Executor {
            program,
            config,
            cfg,
            reach,
            state,
            shadow,
            session,
            pp: PathPredicate::default(),
            args,
            seed_model,
            entry,
            report: Report {
                findings: vec![],
                stats: ExecStats::default(),
                terminal: Terminal::Halt,
                branch_log: vec![],
                solver: SolverStats::default(),
                consistency_checks: 0,
                consistency_violations: 0,
                scope_violations: 0,
                lazy_concretizations: 0,
                path_predicate_len: 0,
                path_holds_under_seed: true,
            },
        })
    }

    fn execute(mut self) -> Result<Report, ExecError> {
        let started = Instant::now();
        let terminal = if self.program.is_panic(self.entry) {
            Terminal::PanicReached { addr: self.entry }
        } else {
            self.state.pc = Some(Location::new(self.entry, 0));
            self.main_loop()?
        };
        self.report.terminal = terminal;
        self.report.stats.steps = self.state.step_count;
        self.report.stats.wall_ms = started.elapsed().as_millis() as u64;
        self.report.path_predicate_len = self.pp.len();
        self.report.solver = self.session.stats();
        self.report.path_holds_under_seed = self.pp.holds_under(&self.seed_model).unwrap_or(false);
        if let Some(dir) = &self.config.emit_smt {
            std::fs::write(dir.join("session.smt2"), self.session.emit_smtlib())?;
        }
        Ok(self.report)
    }

    fn main_loop(&mut self) -> Result<Terminal, ExecError> {
        loop {
            let loc = self.state.pc.ok_or(StateError::NoPc)?;
            let op = self.program.op_at(loc).ok_or(StateError::NoPc)?;
            if let Flow::Stop = self.before(op)? {
                return Ok(Terminal::StoppedAtFinding);
            }
            let pre = self.pre_terms(op)?;
            let outcome = self.state.step_concrete(op, self.program)?;
            self.after(op, pre);
            match outcome {
                StepOutcome::Continue(_) => {}
                StepOutcome::PanicReached(a) => return Ok(Terminal::PanicReached { addr: a }),
                StepOutcome::Fault(f) => return Ok(Terminal::Fault { fault: f }),
                StepOutcome::Halt => return Ok(Terminal::Halt),
            }
        }
    }

    /// Concrete value of a symbolic address; the binding joins Π.
    fn concretize(&mut self, t: &Term) -> Result<u128, ExecError> {
        let v = lazily_concretize(t, &self.seed_model)?;
        assert_path(&mut self.pp, &t.eq(&Term::constant(v, t.width())), &mut self.session)?;
        self.report.lazy_concretizations += 1;
        Ok(v)
    }

    /// Shadow terms needed after the concrete step, computed before it so
    /// that outputs aliasing inputs see the old values.
    fn pre_terms(&mut self, op: &PcodeOp) -> Result<PreStep, ExecError> {
        Ok(match op.opcode {
            Opcode::Load => {
                let ptr = &op.inputs[0];
                let addr = self.state.read_u64(ptr);
                if let Some(t) = self.shadow.read(ptr, &self.state) {
                    self.concretize(&t)?;
                }
                let size = op.output.map_or(0, |o| o.size as usize);
                PreStep::Out(self.shadow.read_bytes(AddressSpace::Ram, addr, size, &self.state))
            }
            Opcode::Store => {
                let ptr = &op.inputs[0];
                let addr = self.state.read_u64(ptr);
                if let Some(t) = self.shadow.read(ptr, &self.state) {
                    self.concretize(&t)?;
                }
                PreStep::Store { addr, term: self.shadow.read(&op.inputs[1], &self.state) }
            }
            Opcode::BranchInd | Opcode::CallInd => {
                if let Some(t) = self.shadow.read(&op.inputs[0], &self.state) {
                    self.concretize(&t)?;
                }
                PreStep::None
            }
            Opcode::Branch | Opcode::CBranch | Opcode::Call | Opcode::Return => PreStep::None,
            _ => {
                let terms: Vec<Option<Term>> = op.inputs.iter().map(|v| self.shadow.read(v, &self.state)).collect();
                let concrete: Vec<Vec<u8>> = op.inputs.iter().map(|v| self.state.read_varnode(v)).collect();
                PreStep::Out(shadow_eval(op, &terms, &concrete))
            }
        })
    }

    fn after(&mut self, op: &PcodeOp, pre: PreStep) {
        match pre {
            PreStep::Out(term) => {
                if let Some(out) = op.output {
                    self.shadow.write(&out, term.as_ref());
                    if self.config.check_consistency {
                        if let Some(t) = &term {
                            let concrete = self.state.read_varnode(&out);
                            self.check(t, &concrete);
                        }
                    }
                }
            }
            PreStep::Store { addr, term } => {
                let size = op.inputs[1].size as usize;
                self.shadow.write_bytes(AddressSpace::Ram, addr, size, term.as_ref());
                if self.config.check_consistency {
                    if let Some(t) = &term {
                        let concrete = self.state.read_bytes(AddressSpace::Ram, addr, size);
                        self.check(t, &concrete);
                    }
                }
            }
            PreStep::None => {}
        }
    }

    fn check(&mut self, t: &Term, concrete: &[u8]) {
        self.report.consistency_checks += 1;
        let want = concrete.iter().rev().fold(0u128, |acc, b| (acc << 8) | *b as u128);
        if t.eval_map(&self.seed_model) != Ok(want) {
            self.report.consistency_violations += 1;
        }
    }

    /// Filter cascade and exploration at CBRANCH; other ops pass.
    fn before(&mut self, op: &PcodeOp) -> Result<Flow, ExecError> {
        if op.opcode != Opcode::CBranch {
            return Ok(Flow::Go);
        }
        let stats = &mut self.report.stats;
        stats.cbranch_total += 1;
        let target = op.inputs[0];
        let taken = self.state.read_varnode(&op.inputs[1])[0] != 0;
        let phi = self.shadow.read(&op.inputs[1], &self.state).map(|f| {
            let c = f.truthy();
            if taken {
                c
            } else {
                c.not()
            }
        });
        if self.config.check_consistency {
            if let Some(p) = &phi {
                self.report.consistency_checks += 1;
                if p.eval_map(&self.seed_model) != Ok(1) {
                    self.report.consistency_violations += 1;
                }
            }
        }

        let symbolic = phi.as_ref().is_some_and(|p| p.as_bool().is_none());
        let mut flow = Flow::Go;
        let decision = if is_internal_pcode_target(&target) {
            self.report.stats.internal_filtered += 1;
            BranchDecision::Internal
        } else {
            let addr_alt = if taken {
                fallthrough(self.program, op.location).unwrap_or(Location::new(u64::MAX, 0))
            } else {
                Location::new(target.offset, 0)
            };
            let d = self.cascade(op, phi.as_ref(), addr_alt);
            if d == BranchDecision::Queried {
                flow = self.explore(op, phi.as_ref().expect("queried branches have a term"), addr_alt)?;
            }
            d
        };
        self.report.branch_log.push(BranchEvent { location: op.location, decision, symbolic, taken });
        if let Some(p) = phi {
            if p.as_bool().is_none() {
                assert_path(&mut self.pp, &p, &mut self.session)?;
            }
        }
        Ok(flow)
    }

    fn cascade(&mut self, op: &PcodeOp, phi: Option<&Term>, addr_alt: Location) -> BranchDecision {
        let stats = &mut self.report.stats;
        let symbolic = phi.is_some_and(|p| p.as_bool().is_none());
        if !self.config.optimized {
            if !symbolic {
                stats.context_filtered += 1;
                return BranchDecision::Context;
            }
            return BranchDecision::Queried;
        }
        let t = op.inputs[0].offset;
        let pc_reaches = self.reach.contains_addr(&self.cfg, op.location.addr);
        let t_reaches = self.reach.contains_addr(&self.cfg, t) || self.program.is_panic(t);
        if !pc_reaches && !t_reaches {
            stats.gate_filtered += 1;
            return BranchDecision::Gated;
        }
        let context = symbolic && (references_args(phi.unwrap(), &self.args) || !self.pp.is_empty());
        if !context {
            stats.context_filtered += 1;
            return BranchDecision::Context;
        }
        if ast_precheck(&self.cfg, addr_alt.addr, self.config.max_ast_blocks) == AstVerdict::NotFound {
            stats.ast_filtered += 1;
            return BranchDecision::Ast;
        }
        BranchDecision::Queried
    }

    fn explore(&mut self, op: &PcodeOp, phi: &Term, addr_alt: Location) -> Result<Flow, ExecError> {
        let n = self.report.stats.solver_queries;
        self.report.stats.solver_queries += 1;
        if let Some(dir) = &self.config.emit_smt {
            let name = format!("query{n:04}_{:x}_{}.smt2", op.location.addr, op.location.micro);
            std::fs::write(dir.join(name), self.session.query_script(phi))?;
        }
        let depth = self.session.scope_depth();
        let result = self.session.check_negated(phi)?;
        if self.session.scope_depth() != depth {
            self.report.scope_violations += 1;
        }
        let stats = &mut self.report.stats;
        let model = match result {
            CheckResult::Sat(m) => {
                stats.sat_count += 1;
                m
            }
            CheckResult::Unsat => {
                stats.unsat_count += 1;
                return Ok(Flow::Go);
            }
            CheckResult::Unknown => {
                stats.unknown_count += 1;
                return Ok(Flow::Go);
            }
        };
        let neg = phi.not();
        let model_checked = self.session.assertions().iter().chain(std::iter::once(&neg)).all(|a| a.eval_map(&model) == Ok(1));
        let inputs = synthesize_inputs(&model, &self.args, &self.config.seeds)?;
        let verdict = replay_concrete(self.program, &inputs, &self.config.start, Some(addr_alt), self.config.step_budget)?;
        self.report.findings.push(Finding {
            branch_location: op.location,
            addr_alt,
            negated_condition: crate::symbolic::smt::render(&neg),
            model,
            model_checked,
            synthesized_inputs: inputs,
            replay_verdict: verdict,
        });
        if verdict == ReplayVerdict::PanicConfirmed && self.config.stop_mode == StopMode::FirstFinding {
            return Ok(Flow::Stop);
        }
        Ok(Flow::Go)
    }
}

enum PreStep {
    None,
    Out(Option<Term>),
    Store { addr: u64, term: Option<Term> },
}

/// Per-site counts of queries, used to compare filter selectivity.
pub fn query_histogram(report: &Report) -> BTreeMap<Location, usize> {
    let mut h = BTreeMap::new();
    for l in report.queried_sites() {
        *h.entry(l).or_default() += 1;
    }
    h
}

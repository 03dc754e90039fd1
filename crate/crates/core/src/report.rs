//! The JSON report document written by the command-line driver.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::exec::{ExecConfig, ExecStats, Finding, Report, StopMode, Terminal};
use crate::ir::Program;
use crate::loader::render;

pub const TOOL: &str = "panicgate";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExitClass {
    NoFinding,
    PanicConfirmed,
    /// The seed itself reached a panic site.
    SeedPanic,
    Fault,
}

impl ExitClass {
    pub fn code(self) -> i32 {
        match self {
            ExitClass::NoFinding => 0,
            ExitClass::PanicConfirmed | ExitClass::SeedPanic => 1,
            ExitClass::Fault => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub start: String,
    pub seeds: Vec<String>,
    pub optimized: bool,
    pub max_ast_blocks: usize,
    pub step_budget: u64,
    pub stop_mode: StopMode,
    pub solver_command: String,
    pub solver_timeout_ms: u64,
}

impl ConfigEcho {
    pub fn new(config: &ExecConfig) -> Self {
        ConfigEcho {
            start: config.start.clone(),
            seeds: config.seeds.iter().map(|s| s.to_string()).collect(),
            optimized: config.optimized,
            max_ast_blocks: config.max_ast_blocks,
            step_budget: config.step_budget,
            stop_mode: config.stop_mode,
            solver_command: config.solver.command.clone(),
            solver_timeout_ms: config.solver.timeout.as_millis() as u64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterCounters {
    pub internal: u64,
    pub gate: u64,
    pub context: u64,
    pub ast: u64,
    pub queried: u64,
    pub gated_over_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub tool: String,
    pub version: String,
    /// SHA-256 over the canonical rendering of the program.
    pub program_digest: String,
    pub config: ConfigEcho,
    pub stats: ExecStats,
    pub filters: FilterCounters,
    pub findings: Vec<Finding>,
    pub terminal: Terminal,
    pub consistency_checks: u64,
    pub consistency_violations: u64,
    pub scope_violations: u64,
    pub lazy_concretizations: u64,
    pub path_predicate_len: usize,
    pub exit: ExitClass,
}

pub fn program_digest(program: &Program) -> String {
    hex::encode(Sha256::digest(render(program).as_bytes()))
}

pub fn classify(report: &Report) -> ExitClass {
    if report.confirmed().next().is_some() {
        ExitClass::PanicConfirmed
    } else {
        match report.terminal {
            Terminal::PanicReached { .. } => ExitClass::SeedPanic,
            Terminal::Fault { .. } => ExitClass::Fault,
            Terminal::Halt | Terminal::StoppedAtFinding => ExitClass::NoFinding,
        }
    }
}

impl ReportDocument {
    pub fn new(program: &Program, config: &ExecConfig, report: &Report) -> Self {
        let s = report.stats;
        let mut findings = report.findings.clone();
        findings.sort_by(|a, b| {
            (a.branch_location, &a.synthesized_inputs, a.addr_alt).cmp(&(b.branch_location, &b.synthesized_inputs, b.addr_alt))
        });
        ReportDocument {
            tool: TOOL.into(),
            version: VERSION.into(),
            program_digest: program_digest(program),
            config: ConfigEcho::new(config),
            stats: s,
            filters: FilterCounters {
                internal: s.internal_filtered,
                gate: s.gate_filtered,
                context: s.context_filtered,
                ast: s.ast_filtered,
                queried: s.solver_queries,
                gated_over_total: s.gate_ratio(),
            },
            findings,
            terminal: report.terminal,
            consistency_checks: report.consistency_checks,
            consistency_violations: report.consistency_violations,
            scope_violations: report.scope_violations,
            lazy_concretizations: report.lazy_concretizations,
            path_predicate_len: report.path_predicate_len,
            exit: classify(report),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// The document with the only nondeterministic field zeroed.
    pub fn without_timing(&self) -> Self {
        let mut d = self.clone();
        d.stats.wall_ms = 0;
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::{run, ExecConfig};
    use crate::loader::parse_program;
    use crate::symbolic::ArgValue;

    const SRC: &str = "\
.panic 0x9000
.sig check(x:INT8@reg:0x0:1) entry 0x1000
.code
0x1000: INT_EQUAL reg:0x0:1 const:0x2a:1 -> uniq:0x0:1
        CBRANCH ram:0x1008:8 uniq:0x0:1
0x1004: RETURN
0x1008: CALL ram:0x9000:8
";

    #[test]
    fn json_round_trips_and_is_stable() {
        let p = parse_program(SRC).unwrap().program;
        let c = ExecConfig::new("check", vec![ArgValue::Int(3)]);
        let a = ReportDocument::new(&p, &c, &run(&p, &c).unwrap());
        let b = ReportDocument::new(&p, &c, &run(&p, &c).unwrap());
        assert_eq!(a.without_timing().to_json(), b.without_timing().to_json());
        let back = ReportDocument::from_json(&a.to_json()).unwrap();
        assert_eq!(back, a);
        assert_eq!(a.exit, ExitClass::PanicConfirmed);
        assert!(a.to_json().contains("\"x\": \"0x2a\""));
        assert_eq!(a.program_digest.len(), 64);
    }

    #[test]
    fn seed_panic_and_clean_runs_classify() {
        let p = parse_program(SRC).unwrap().program;
        let c = ExecConfig::new("check", vec![ArgValue::Int(0x2a)]);
        assert_eq!(classify(&run(&p, &c).unwrap()), ExitClass::SeedPanic);
        assert_eq!(ExitClass::NoFinding.code(), 0);
        assert_eq!(ExitClass::Fault.code(), 3);
    }
}

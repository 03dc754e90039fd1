//! Incremental SMT-LIB2 session over an external solver process.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::Duration;

use super::smt::{self, Sexp};
use super::term::Term;

pub type Model = BTreeMap<String, u128>;

pub const DEFAULT_SOLVER_CMD: &str = "z3 -in -smt2";
pub const DEFAULT_TIMEOUT_MS: u64 = 10_000;
pub const SOLVER_ENV: &str = "PANICGATE_SOLVER";

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("cannot start solver `{cmd}`")]
    Spawn { cmd: String, source: std::io::Error },
    #[error("solver process died")]
    Died,
    #[error("solver did not answer within the timeout")]
    Timeout,
    #[error("solver protocol error: {0}")]
    Protocol(String),
}

/// Transport to a solver. `send` writes commands that produce no output;
/// `request` writes one command and returns its complete response.
pub trait SmtBackend: Send {
    fn send(&mut self, text: &str) -> Result<(), SolverError>;
    fn request(&mut self, text: &str, timeout: Duration) -> Result<String, SolverError>;
}

pub struct ProcessBackend {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
}

impl ProcessBackend {
    pub fn spawn(cmd: &str) -> Result<Self, SolverError> {
        let mut parts = cmd.split_whitespace();
        let program = parts.next().ok_or_else(|| SolverError::Protocol("empty solver command".into()))?;
        let mut child = Command::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|source| SolverError::Spawn { cmd: cmd.to_string(), source })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(ProcessBackend { child, stdin, lines: rx })
    }
}

impl SmtBackend for ProcessBackend {
    fn send(&mut self, text: &str) -> Result<(), SolverError> {
        self.stdin.write_all(text.as_bytes()).map_err(|_| SolverError::Died)?;
        self.stdin.flush().map_err(|_| SolverError::Died)
    }

    fn request(&mut self, text: &str, timeout: Duration) -> Result<String, SolverError> {
        self.send(text)?;
        let mut response = String::new();
        while !smt::is_complete(&response) {
            match self.lines.recv_timeout(timeout) {
                Ok(line) => {
                    response.push_str(&line);
                    response.push('\n');
                }
                Err(RecvTimeoutError::Timeout) => return Err(SolverError::Timeout),
                Err(RecvTimeoutError::Disconnected) => return Err(SolverError::Died),
            }
        }
        let response = response.trim().to_string();
        if response.starts_with("(error") {
            return Err(SolverError::Protocol(response));
        }
        Ok(response)
    }
}

impl Drop for ProcessBackend {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Sat,
    Unsat,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckResult {
    Sat(Model),
    Unsat,
    Unknown,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SolverStats {
    pub queries: u64,
    pub sat: u64,
    pub unsat: u64,
    pub unknown: u64,
    pub timeouts: u64,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub command: String,
    pub timeout: Duration,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            command: std::env::var(SOLVER_ENV).unwrap_or_else(|_| DEFAULT_SOLVER_CMD.to_string()),
            timeout: Duration::from_millis(DEFAULT_TIMEOUT_MS),
        }
    }
}

type Factory = Box<dyn FnMut() -> Result<Box<dyn SmtBackend>, SolverError> + Send>;

const HEADER: &str = "(set-option :print-success false)\n(set-option :produce-models true)\n(set-logic QF_BV)\n";

/// Solver session with a base assertion set and push/pop exploration.
///
/// Declarations and base assertions are logged so that a restarted solver
/// can be brought back to the same state.
pub struct SolverSession {
    backend: Box<dyn SmtBackend>,
    factory: Option<Factory>,
    timeout: Duration,
    decls: Vec<(String, u32)>,
    declared: BTreeMap<String, u32>,
    assertions: Vec<Term>,
    assertion_vars: BTreeSet<String>,
    scope_depth: usize,
    stats: SolverStats,
}

impl SolverSession {
    pub fn spawn(config: &SolverConfig) -> Result<Self, SolverError> {
        let cmd = config.command.clone();
        let mut factory: Factory = Box::new(move || Ok(Box::new(ProcessBackend::spawn(&cmd)?) as Box<dyn SmtBackend>));
        let backend = factory()?;
        let mut s = SolverSession::with_backend(backend, config.timeout)?;
        s.factory = Some(factory);
        Ok(s)
    }

    pub fn with_backend(mut backend: Box<dyn SmtBackend>, timeout: Duration) -> Result<Self, SolverError> {
        backend.send(HEADER)?;
        Ok(SolverSession {
            backend,
            factory: None,
            timeout,
            decls: Vec::new(),
            declared: BTreeMap::new(),
            assertions: Vec::new(),
            assertion_vars: BTreeSet::new(),
            scope_depth: 0,
            stats: SolverStats::default(),
        })
    }

    pub fn scope_depth(&self) -> usize {
        self.scope_depth
    }

    pub fn stats(&self) -> SolverStats {
        self.stats
    }

    pub fn assertions(&self) -> &[Term] {
        &self.assertions
    }

    fn declare_vars(&mut self, t: &Term) -> Result<(), SolverError> {
        for (name, width) in t.vars() {
            match self.declared.get(&name) {
                Some(w) if *w == width => continue,
                Some(w) => {
                    return Err(SolverError::Protocol(format!("{name} declared with widths {w} and {width}")))
                }
                None => {}
            }
            self.backend.send(&declare_text(&name, width))?;
            self.declared.insert(name.clone(), width);
            self.decls.push((name, width));
        }
        Ok(())
    }

    /// Asserts `t` at the base scope; bit-vectors are coerced via `≠ 0`.
    pub fn assert(&mut self, t: &Term) -> Result<(), SolverError> {
        let t = t.truthy();
        self.declare_vars(&t)?;
        self.backend.send(&format!("(assert {})\n", smt::render(&t)))?;
        self.assertion_vars.extend(t.vars().into_keys());
        self.assertions.push(t);
        Ok(())
    }

    /// check-sat of the base assertions alone; not counted as a query.
    pub fn check_base(&mut self) -> Result<Verdict, SolverError> {
        let r = self.backend.request("(check-sat)\n", self.timeout);
        match r {
            Ok(text) => parse_verdict(&text),
            Err(SolverError::Timeout) => {
                self.restart()?;
                Ok(Verdict::Unknown)
            }
            Err(e) => Err(e),
        }
    }

    /// Checks base ∧ ¬φ inside a push/pop pair. Exactly one check-sat is
    /// issued; the scope depth is restored on every path, including errors.
    pub fn check_negated(&mut self, phi: &Term) -> Result<CheckResult, SolverError> {
        let neg = phi.truthy().not();
        let base = self.scope_depth;
        self.stats.queries += 1;
        let result = self.declare_vars(&neg).and_then(|_| self.negated_query(&neg));
        if self.scope_depth != base {
            // the solver failed mid-query; its scopes are unknown
            self.scope_depth = base;
            let _ = self.restart();
        }
        match &result {
            Ok(CheckResult::Sat(_)) => self.stats.sat += 1,
            Ok(CheckResult::Unsat) => self.stats.unsat += 1,
            Ok(CheckResult::Unknown) => self.stats.unknown += 1,
            Err(_) => {}
        }
        result
    }

    fn negated_query(&mut self, neg: &Term) -> Result<CheckResult, SolverError> {
        self.backend.send(&format!("(push 1)\n(assert {})\n", smt::render(neg)))?;
        self.scope_depth += 1;
        let verdict = match self.backend.request("(check-sat)\n", self.timeout) {
            Ok(text) => parse_verdict(&text)?,
            Err(SolverError::Timeout) => {
                self.stats.timeouts += 1;
                return Ok(CheckResult::Unknown);
            }
            Err(e) => return Err(e),
        };
        let result = match verdict {
            Verdict::Sat => {
                let mut vars: BTreeSet<String> = self.assertion_vars.clone();
                vars.extend(neg.vars().into_keys());
                CheckResult::Sat(self.get_values(&vars)?)
            }
            Verdict::Unsat => CheckResult::Unsat,
            Verdict::Unknown => CheckResult::Unknown,
        };
        self.backend.send("(pop 1)\n")?;
        self.scope_depth -= 1;
        Ok(result)
    }

    fn get_values(&mut self, vars: &BTreeSet<String>) -> Result<Model, SolverError> {
        let mut model = Model::new();
        if vars.is_empty() {
            return Ok(model);
        }
        let names: Vec<String> = vars.iter().map(|v| smt::symbol(v)).collect();
        let text = self.backend.request(&format!("(get-value ({}))\n", names.join(" ")), self.timeout)?;
        let sexp = Sexp::parse(&text).map_err(|e| SolverError::Protocol(e.to_string()))?;
        let Sexp::List(pairs) = sexp else {
            return Err(SolverError::Protocol(format!("unexpected get-value reply {text}")));
        };
        for pair in pairs {
            let parsed = match &pair {
                Sexp::List(kv) if kv.len() == 2 => kv[0].atom().zip(smt::parse_value(&kv[1])),
                _ => None,
            };
            let (name, value) = parsed.ok_or_else(|| SolverError::Protocol(format!("bad model entry {pair:?}")))?;
            model.insert(name.to_string(), value);
        }
        for v in vars {
            if !model.contains_key(v) {
                return Err(SolverError::Protocol(format!("model lacks {v}")));
            }
        }
        Ok(model)
    }

    /// Replaces the backend and replays declarations and base assertions.
    fn restart(&mut self) -> Result<(), SolverError> {
        let factory = self.factory.as_mut().ok_or(SolverError::Died)?;
        self.backend = factory()?;
        self.backend.send(HEADER)?;
        let mut replay = String::new();
        for (name, width) in &self.decls {
            replay.push_str(&declare_text(name, *width));
        }
        for a in &self.assertions {
            let _ = writeln!(replay, "(assert {})", smt::render(a));
        }
        self.backend.send(&replay)
    }

    /// Deterministic script of all live declarations and assertions.
    pub fn emit_smtlib(&self) -> String {
        let mut out = String::from(HEADER);
        for (name, width) in &self.decls {
            out.push_str(&declare_text(name, *width));
        }
        for a in &self.assertions {
            let _ = writeln!(out, "(assert {})", smt::render(a));
        }
        out.push_str("(check-sat)\n");
        out
    }

    /// Standalone script for the negated query of `phi`.
    pub fn query_script(&self, phi: &Term) -> String {
        let neg = phi.truthy().not();
        let mut out = String::from(HEADER);
        let mut decls = self.decls.clone();
        for (name, width) in neg.vars() {
            if !self.declared.contains_key(&name) {
                decls.push((name, width));
            }
        }
        for (name, width) in &decls {
            out.push_str(&declare_text(name, *width));
        }
        for a in &self.assertions {
            let _ = writeln!(out, "(assert {})", smt::render(a));
        }
        let _ = writeln!(out, "(assert {})", smt::render(&neg));
        out.push_str("(check-sat)\n");
        out
    }
}

fn declare_text(name: &str, width: u32) -> String {
    format!("(declare-fun {} () {})\n", smt::symbol(name), smt::sort_text(width))
}

fn parse_verdict(text: &str) -> Result<Verdict, SolverError> {
    match text.trim() {
        "sat" => Ok(Verdict::Sat),
        "unsat" => Ok(Verdict::Unsat),
        "unknown" => Ok(Verdict::Unknown),
        other => Err(SolverError::Protocol(format!("unexpected check-sat reply {other:?}"))),
    }
}

/// Runs a complete script through a fresh solver and returns the first
/// check-sat verdict.
pub fn run_script(config: &SolverConfig, script: &str) -> Result<Verdict, SolverError> {
    let mut backend = ProcessBackend::spawn(&config.command)?;
    let text = backend.request(script, config.timeout)?;
    parse_verdict(&text)
}

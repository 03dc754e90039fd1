//! The five logic-bomb benchmark programs, their seeds and ground truth,
//! and an exhaustive brute-force trigger oracle.

pub mod asm;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::exec::{run_concrete, ExecError, Terminal};
use crate::ir::{ArgKind, FunctionSig, Program};
use crate::loader::{parse_program, render, Diagnostic};
use crate::symbolic::ArgValue;

pub use asm::{assemble, AsmError, Build};

pub const NAMES: [&str; 5] = ["crashme", "invalid_shift", "panic_index", "broken_calculator", "omni_vuln_mini"];

/// Steps allowed to a single oracle replay.
pub const ORACLE_STEP_BUDGET: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Gating {
    None,
    Partial,
}

#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub name: &'static str,
    pub start: &'static str,
    pub source: String,
    pub program: Program,
    pub signature: FunctionSig,
    pub seeds: Vec<Vec<ArgValue>>,
    pub known_triggers: Vec<Vec<ArgValue>>,
    pub expected_gating: Gating,
    pub trigger_rule: &'static str,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("unknown corpus entry `{0}`")]
    UnknownName(String),
    #[error(transparent)]
    Asm(#[from] AsmError),
    #[error("generated program does not load: {0:?}")]
    Load(Vec<Diagnostic>),
    #[error("{entry}: {detail}")]
    Inconsistent { entry: String, detail: String },
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("input domain too large: {0}")]
    DomainTooLarge(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

struct Recipe {
    name: &'static str,
    start: &'static str,
    text: &'static str,
    seeds: fn() -> Vec<Vec<ArgValue>>,
    triggers: fn() -> Vec<Vec<ArgValue>>,
    gating: Gating,
    rule: &'static str,
}

fn s(text: &str) -> ArgValue {
    ArgValue::Str(text.as_bytes().to_vec())
}

const RECIPES: [Recipe; 5] = [
    Recipe {
        name: "crashme",
        start: "crash",
        text: include_str!("crashme.pasm"),
        seeds: || vec![vec![s("a")], vec![s("B")], vec![s("100")]],
        triggers: || vec![vec![s("K")]],
        gating: Gating::None,
        rule: "panics iff the input is the single byte 'K'",
    },
    Recipe {
        name: "invalid_shift",
        start: "shift",
        text: include_str!("invalid_shift.pasm"),
        seeds: || vec![vec![s("10")], vec![s("42")], vec![s("1000")]],
        triggers: || vec![vec![s("@")], vec![s("H?")], vec![s("d???")]],
        gating: Gating::None,
        rule: "each byte indexes a 64-cell table; panics iff some byte is >= 0x40",
    },
    Recipe {
        name: "panic_index",
        start: "index",
        text: include_str!("panic_index.pasm"),
        seeds: || vec![vec![ArgValue::Int(0)], vec![ArgValue::Int(1)], vec![ArgValue::Int(2)]],
        triggers: || vec![vec![ArgValue::Int(4)], vec![ArgValue::Int(255)]],
        gating: Gating::Partial,
        rule: "panics iff arg1 > 3",
    },
    Recipe {
        name: "broken_calculator",
        start: "coreEngine",
        text: include_str!("broken_calculator.pasm"),
        seeds: || {
            vec![
                vec![ArgValue::Int(2), s("+"), ArgValue::Int(3)],
                vec![ArgValue::Int(5), s("+"), ArgValue::Int(1)],
                vec![ArgValue::Int(6), s("-"), ArgValue::Int(5)],
            ]
        },
        triggers: || vec![vec![ArgValue::Int(5), s("+"), ArgValue::Int(5)], vec![ArgValue::Int(5), s("/"), ArgValue::Int(5)]],
        gating: Gating::Partial,
        rule: "panics iff the operator is one of + - * / and num1 = num2 = 5",
    },
    Recipe {
        name: "omni_vuln_mini",
        start: "verifyProof",
        text: include_str!("omni_vuln_mini.pasm"),
        seeds: || {
            vec![
                vec![ArgValue::Int(0), ArgValue::Int(7)],
                vec![ArgValue::Int(1), ArgValue::Int(7)],
                vec![ArgValue::Int(2), ArgValue::Int(7)],
            ]
        },
        triggers: || vec![vec![ArgValue::Int(7), ArgValue::Int(7)], vec![ArgValue::Int(0), ArgValue::Int(2)]],
        gating: Gating::Partial,
        rule: "i = count-1-leaf (64-bit wrap); while i != 0 for at most 8 levels: s = ((i+1)^1)-1 must be < count, else panic; i = (i-1)/2",
    },
];

fn recipe(name: &str) -> Result<&'static Recipe, CorpusError> {
    RECIPES.iter().find(|r| r.name == name).ok_or_else(|| CorpusError::UnknownName(name.to_string()))
}

fn load(text: &str) -> Result<Program, CorpusError> {
    parse_program(text).map(|l| l.program).map_err(CorpusError::Load)
}

/// Builds an entry and checks that seeds replay clean and triggers panic.
pub fn emit(name: &str) -> Result<CorpusEntry, CorpusError> {
    let r = recipe(name)?;
    let source = assemble(r.text, Build::Normal)?;
    let program = load(&source)?;
    let signature = program
        .signature_for(r.start)
        .cloned()
        .ok_or_else(|| CorpusError::Inconsistent { entry: name.into(), detail: format!("no signature for {}", r.start) })?;
    let entry = CorpusEntry {
        name: r.name,
        start: r.start,
        source,
        program,
        signature,
        seeds: (r.seeds)(),
        known_triggers: (r.triggers)(),
        expected_gating: r.gating,
        trigger_rule: r.rule,
    };
    for seed in &entry.seeds {
        if entry.replay(seed)?.panicked() {
            return Err(CorpusError::Inconsistent { entry: name.into(), detail: format!("seed {} panics", show(seed)) });
        }
    }
    for t in &entry.known_triggers {
        if !entry.replay(t)?.panicked() {
            return Err(CorpusError::Inconsistent { entry: name.into(), detail: format!("trigger {} does not panic", show(t)) });
        }
    }
    Ok(entry)
}

pub fn emit_all() -> Result<Vec<CorpusEntry>, CorpusError> {
    NAMES.iter().map(|n| emit(n)).collect()
}

/// Source of the entry with every panic call replaced by a return.
pub fn panic_free_source(name: &str) -> Result<String, CorpusError> {
    Ok(assemble(recipe(name)?.text, Build::PanicFree)?)
}

pub fn panic_free_program(name: &str) -> Result<Program, CorpusError> {
    load(&panic_free_source(name)?)
}

pub fn show(inputs: &[ArgValue]) -> String {
    inputs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

trait Panicked {
    fn panicked(&self) -> bool;
}

impl Panicked for Terminal {
    fn panicked(&self) -> bool {
        matches!(self, Terminal::PanicReached { .. })
    }
}

impl CorpusEntry {
    pub fn replay(&self, inputs: &[ArgValue]) -> Result<Terminal, ExecError> {
        run_concrete(&self.program, inputs, self.start, ORACLE_STEP_BUDGET)
    }

    pub fn file_name(&self) -> String {
        format!("{}.pprog", self.name)
    }
}

/// Enumeration limits for [`brute_force_triggers`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DomainBound {
    /// INT arguments range over `0..int_limit`, clipped to their width.
    pub int_limit: Option<u128>,
    /// STRING arguments range over printable ASCII strings up to this length.
    pub max_string_len: usize,
    /// When the signature mixes INT and STRING arguments, only INTs vary
    /// and strings keep the value given here per argument.
    pub fixed: Option<&'static [&'static str]>,
}

impl Default for DomainBound {
    fn default() -> Self {
        DomainBound { int_limit: None, max_string_len: 2, fixed: None }
    }
}

pub const MAX_INT_BITS: u32 = 16;
pub const MAX_ORACLE_STRING: usize = 2;

fn printable_strings(max_len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![vec![]];
    let mut layer = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for prefix in &layer {
            for b in 0x20u8..=0x7e {
                let mut v: Vec<u8> = prefix.clone();
                v.push(b);
                next.push(v);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

/// The enumerated input domain of an entry, or why it cannot be enumerated.
pub fn oracle_domain(entry: &CorpusEntry, bound: &DomainBound) -> Result<Vec<Vec<ArgValue>>, CorpusError> {
    let too_large = |why: String| CorpusError::DomainTooLarge(format!("{}: {why}", entry.name));
    let mut axes: Vec<Vec<ArgValue>> = Vec::new();
    let mut int_bits = 0u32;
    let has_int = entry.signature.args.iter().any(|a| matches!(a.kind, ArgKind::Int { .. }));
    for (k, spec) in entry.signature.args.iter().enumerate() {
        match &spec.kind {
            ArgKind::Int { width_bits, .. } => {
                let full = 1u128 << (*width_bits).min(64);
                let n = bound.int_limit.map_or(full, |l| l.min(full));
                int_bits += 128 - (n.max(1) - 1).leading_zeros();
                if int_bits > MAX_INT_BITS {
                    return Err(too_large(format!("INT arguments exceed {MAX_INT_BITS} bits")));
                }
                axes.push((0..n).map(ArgValue::Int).collect());
            }
            ArgKind::Str { .. } if has_int => {
                let fixed = bound
                    .fixed
                    .and_then(|f| f.get(k))
                    .ok_or_else(|| too_large(format!("STRING `{}` needs a fixed value next to INT arguments", spec.name)))?;
                axes.push(vec![s(fixed)]);
            }
            ArgKind::Str { .. } => {
                if bound.max_string_len > MAX_ORACLE_STRING {
                    return Err(too_large(format!("strings longer than {MAX_ORACLE_STRING} bytes")));
                }
                axes.push(printable_strings(bound.max_string_len).into_iter().map(ArgValue::Str).collect());
            }
            ArgKind::Slice { .. } => return Err(too_large(format!("SLICE `{}` is not enumerable", spec.name))),
        }
    }
    let mut points: Vec<Vec<ArgValue>> = vec![vec![]];
    for axis in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push(v.clone());
                    q
                })
            })
            .collect();
    }
    Ok(points)
}

/// Exhaustive concrete replay over the bounded domain; exactly the inputs
/// that end in a panic.
pub fn brute_force_triggers(entry: &CorpusEntry, bound: &DomainBound) -> Result<BTreeSet<Vec<ArgValue>>, CorpusError> {
    let mut out = BTreeSet::new();
    for point in oracle_domain(entry, bound)? {
        if entry.replay(&point)?.panicked() {
            out.insert(point);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub file: String,
    pub panic_free_file: String,
    pub start: String,
    pub signature: String,
    pub seeds: Vec<Vec<ArgValue>>,
    pub known_triggers: Vec<Vec<ArgValue>>,
    pub expected_gating: Gating,
    pub trigger_rule: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

fn signature_text(entry: &CorpusEntry) -> String {
    render(&entry.program)
        .lines()
        .find(|l| l.starts_with(".sig ") && l.contains(&format!(" {}(", entry.signature.name)))
        .map(|l| l.trim_start_matches(".sig ").to_string())
        .unwrap_or_default()
}

pub fn manifest(entries: &[CorpusEntry]) -> Manifest {
    Manifest {
        entries: entries
            .iter()
            .map(|e| ManifestEntry {
                name: e.name.into(),
                file: e.file_name(),
                panic_free_file: format!("{}_nopanic.pprog", e.name),
                start: e.start.into(),
                signature: signature_text(e),
                seeds: e.seeds.clone(),
                known_triggers: e.known_triggers.clone(),
                expected_gating: e.expected_gating,
                trigger_rule: e.trigger_rule.into(),
            })
            .collect(),
    }
}

/// File name to contents for every shipped corpus file.
pub fn corpus_files() -> Result<BTreeMap<String, String>, CorpusError> {
    let entries = emit_all()?;
    let mut files = BTreeMap::new();
    for e in &entries {
        files.insert(e.file_name(), e.source.clone());
        files.insert(format!("{}_nopanic.pprog", e.name), panic_free_source(e.name)?);
    }
    files.insert("manifest.json".into(), serde_json::to_string_pretty(&manifest(&entries))? + "\n");
    Ok(files)
}

/// Writes every `.pprog`, its panic-free variant and `manifest.json`.
pub fn write_corpus(dir: &Path) -> Result<Vec<String>, CorpusError> {
    std::fs::create_dir_all(dir)?;
    let files = corpus_files()?;
    for (name, text) in &files {
        std::fs::write(dir.join(name), text)?;
    }
    Ok(files.into_keys().collect())
}

/// Names of files in `dir` that are missing or differ from a fresh emission.
pub fn verify_corpus(dir: &Path) -> Result<Vec<String>, CorpusError> {
    Ok(corpus_files()?
        .into_iter()
        .filter(|(name, text)| std::fs::read_to_string(dir.join(name)).ok().as_deref() != Some(text.as_str()))
        .map(|(name, _)| name)
        .collect())
}

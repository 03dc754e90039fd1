//! The `.pprog` text format: parsing, validation and rendering.
//!
//! ```text
//! program   := section+
//! section   := ".entry" NAME ADDR
//!            | ".panic"  ADDR+
//!            | ".sig" NAME "(" arg ("," arg)* ")" "entry" ADDR
//!            | ".ram" (ADDR BYTE+)*
//!            | ".code" instr+
//! arg       := NAME ":" ("INT" WIDTH "@" vn | "SLICE@" vn vn vn | "STRING@" vn vn)
//! instr     := ADDR ":" micro+
//! micro     := OPCODE operand* ["->" vn]
//! vn        := ("const"|"reg"|"uniq"|"ram") ":" HEX ":" SIZE
//! ```
//!
//! `;` starts a comment. An instruction's micro-ops may share its line or
//! continue on following lines that do not start with an address.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::ir::{
    parse_hex, AddressSpace, ArgKind, ArgSpec, FunctionSig, Location, Opcode, PcodeOp, Program,
    Shape, Varnode, MAX_VARNODE_SIZE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Severity {
    Error,
    Warning,
}

/// A loader message. `line` is 1-based, or 0 when the program has no source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub line: usize,
    pub message: String,
}

impl Diagnostic {
    fn error(line: usize, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            line,
            message: message.into(),
        }
    }

    fn warning(line: usize, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            line,
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        if self.line > 0 {
            write!(f, "{sev}: line {}: {}", self.line, self.message)
        } else {
            write!(f, "{sev}: {}", self.message)
        }
    }
}

/// Source lines of parsed items, used to position validation diagnostics.
#[derive(Debug, Clone, Default)]
pub struct SourceMap {
    ops: HashMap<Location, usize>,
    entries: HashMap<String, usize>,
    sigs: HashMap<String, usize>,
    panic: usize,
}

impl SourceMap {
    fn op(&self, loc: Location) -> usize {
        self.ops.get(&loc).copied().unwrap_or(0)
    }
}

/// A successfully loaded program together with any warnings.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub program: Program,
    pub warnings: Vec<Diagnostic>,
}

/// Parses and validates `.pprog` source.
///
/// Any ERROR diagnostic means no program is produced; warnings ride along
/// with the program on success.
pub fn parse_program(source: &str) -> Result<Loaded, Vec<Diagnostic>> {
    let mut parser = Parser::default();
    for (idx, raw) in source.lines().enumerate() {
        let line = idx + 1;
        let text = raw.split(';').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        parser.line(line, text);
    }
    let (program, map, mut diags) = parser.finish();
    diags.extend(validate_with(&program, Some(&map)));
    if diags.iter().any(Diagnostic::is_error) {
        diags.sort_by_key(|d| d.line);
        return Err(diags);
    }
    if program.panic_set.is_empty() {
        diags.push(Diagnostic::warning(map.panic, "no panic sites"));
    }
    Ok(Loaded {
        program,
        warnings: diags,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Block {
    None,
    Ram,
    Code,
}

struct Parser {
    program: Program,
    map: SourceMap,
    diags: Vec<Diagnostic>,
    block: Block,
    seen_panic: bool,
    seen_ram: bool,
    seen_code: bool,
    current: Option<u64>,
    ram_lines: HashMap<u64, usize>,
    instr_lines: HashMap<u64, usize>,
}

impl Default for Parser {
    fn default() -> Self {
        Parser {
            program: Program::default(),
            map: SourceMap::default(),
            diags: Vec::new(),
            block: Block::None,
            seen_panic: false,
            seen_ram: false,
            seen_code: false,
            current: None,
            ram_lines: HashMap::new(),
            instr_lines: HashMap::new(),
        }
    }
}

fn tokens(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

impl Parser {
    fn err(&mut self, line: usize, msg: impl Into<String>) {
        self.diags.push(Diagnostic::error(line, msg));
    }

    fn line(&mut self, line: usize, text: &str) {
        if text.starts_with('.') {
            self.section(line, text);
            return;
        }
        match self.block {
            Block::Ram => self.ram_data(line, &tokens(text)),
            Block::Code => self.code_line(line, text),
            Block::None => self.err(line, "content outside of a .ram or .code section"),
        }
    }

    fn once(&mut self, line: usize, header: &str, seen: bool) -> bool {
        if seen {
            self.err(line, format!("duplicate section header {header}"));
        }
        !seen
    }

    fn section(&mut self, line: usize, text: &str) {
        let (head, rest) = text.split_once(char::is_whitespace).unwrap_or((text, ""));
        let rest = rest.trim();
        self.block = Block::None;
        self.current = None;
        match head {
            ".entry" => {
                let t = tokens(rest);
                match (t.as_slice(), t.get(1).and_then(|a| parse_hex(a))) {
                    ([name, _], Some(addr)) => {
                        if self.program.entry_points.contains_key(*name) {
                            self.err(line, format!("duplicate section header .entry {name}"));
                        } else {
                            self.program.entry_points.insert(name.to_string(), addr);
                            self.map.entries.insert(name.to_string(), line);
                        }
                    }
                    _ => self.err(line, "expected `.entry NAME ADDR`"),
                }
            }
            ".panic" => {
                if !self.once(line, ".panic", self.seen_panic) {
                    return;
                }
                self.seen_panic = true;
                self.map.panic = line;
                let t = tokens(rest);
                if t.is_empty() {
                    self.err(line, "`.panic` needs at least one address");
                }
                for tok in t {
                    match parse_hex(tok) {
                        Some(a) => {
                            self.program.panic_set.insert(a);
                        }
                        None => self.err(line, format!("bad panic address `{tok}`")),
                    }
                }
            }
            ".sig" => match parse_sig(rest) {
                Ok(sig) => {
                    if self.program.signatures.contains_key(&sig.name) {
                        self.err(line, format!("duplicate section header .sig {}", sig.name));
                    } else {
                        self.map.sigs.insert(sig.name.clone(), line);
                        self.program.signatures.insert(sig.name.clone(), sig);
                    }
                }
                Err(msg) => self.err(line, format!("malformed signature: {msg}")),
            },
            ".ram" => {
                if !self.once(line, ".ram", self.seen_ram) {
                    return;
                }
                self.seen_ram = true;
                self.block = Block::Ram;
                let t = tokens(rest);
                if !t.is_empty() {
                    self.ram_data(line, &t);
                }
            }
            ".code" => {
                if !self.once(line, ".code", self.seen_code) {
                    return;
                }
                self.seen_code = true;
                self.block = Block::Code;
                if !rest.is_empty() {
                    self.code_line(line, rest);
                }
            }
            other => self.err(line, format!("unknown section `{other}`")),
        }
    }

    fn ram_data(&mut self, line: usize, toks: &[&str]) {
        let Some(base) = toks.first().and_then(|t| parse_hex(t)) else {
            self.err(line, "expected `ADDR BYTE+` in .ram");
            return;
        };
        if toks.len() < 2 {
            self.err(line, "expected at least one byte after the address");
        }
        for (i, tok) in toks[1..].iter().enumerate() {
            let addr = base.wrapping_add(i as u64);
            let byte = parse_hex(tok).filter(|b| *b <= 0xff);
            match byte {
                Some(b) => {
                    if let Some(prev) = self.ram_lines.insert(addr, line) {
                        self.err(line, format!("ram byte {addr:#x} already set on line {prev}"));
                    }
                    self.program.initial_ram.insert(addr, b as u8);
                }
                None => self.err(line, format!("bad byte `{tok}`")),
            }
        }
    }

    fn code_line(&mut self, line: usize, text: &str) {
        let mut rest = text;
        let first = text.split_whitespace().next().unwrap_or("");
        if Opcode::from_mnemonic(first).is_none() {
            let Some((addr_tok, tail)) = text.split_once(':') else {
                self.err(line, "expected `ADDR:` or a micro-op");
                return;
            };
            let Some(addr) = parse_hex(addr_tok.trim()) else {
                self.err(line, format!("bad instruction address `{}`", addr_tok.trim()));
                return;
            };
            if self.program.instructions.contains_key(&addr) {
                self.err(line, format!("duplicate machine address {addr:#x}"));
                self.current = None;
                return;
            }
            self.program.instructions.insert(addr, Vec::new());
            self.instr_lines.insert(addr, line);
            self.current = Some(addr);
            rest = tail;
        }
        let Some(addr) = self.current else {
            self.err(line, "micro-op outside of an instruction");
            return;
        };
        let toks = tokens(rest);
        let mut i = 0;
        while i < toks.len() {
            let Some(opcode) = Opcode::from_mnemonic(toks[i]) else {
                self.err(line, format!("unknown opcode `{}`", toks[i]));
                return;
            };
            i += 1;
            let mut inputs = Vec::new();
            let mut output = None;
            while i < toks.len() && Opcode::from_mnemonic(toks[i]).is_none() {
                if toks[i] == "->" {
                    match toks.get(i + 1).map(|t| t.parse::<Varnode>()) {
                        Some(Ok(vn)) => output = Some(vn),
                        _ => {
                            self.err(line, "`->` must be followed by a varnode");
                            return;
                        }
                    }
                    i += 2;
                    break;
                }
                match toks[i].parse::<Varnode>() {
                    Ok(vn) => inputs.push(vn),
                    Err(e) => {
                        self.err(line, e.to_string());
                        return;
                    }
                }
                i += 1;
            }
            let ops = self.program.instructions.get_mut(&addr).expect("current instruction");
            let location = Location::new(addr, ops.len() as u16);
            ops.push(PcodeOp {
                opcode,
                inputs,
                output,
                location,
            });
            self.map.ops.insert(location, line);
        }
    }

    fn finish(mut self) -> (Program, SourceMap, Vec<Diagnostic>) {
        let empty: Vec<u64> = self
            .program
            .instructions
            .iter()
            .filter(|(_, ops)| ops.is_empty())
            .map(|(a, _)| *a)
            .collect();
        for addr in empty {
            let line = self.instr_lines.get(&addr).copied().unwrap_or(0);
            self.diags
                .push(Diagnostic::error(line, format!("instruction {addr:#x} has no micro-ops")));
        }
        (self.program, self.map, self.diags)
    }
}

fn parse_sig(rest: &str) -> Result<FunctionSig, String> {
    let open = rest.find('(').ok_or("missing `(`")?;
    let close = rest.rfind(')').ok_or("missing `)`")?;
    if close < open {
        return Err("unbalanced parentheses".into());
    }
    let name = rest[..open].trim();
    if name.is_empty() || name.contains(char::is_whitespace) {
        return Err("bad function name".into());
    }
    let tail = tokens(&rest[close + 1..]);
    let entry = match tail.as_slice() {
        ["entry", addr] => parse_hex(addr).ok_or("bad entry address")?,
        _ => return Err("expected `entry ADDR` after the argument list".into()),
    };
    let inner = rest[open + 1..close].trim();
    let mut args = Vec::new();
    if !inner.is_empty() {
        for piece in inner.split(',') {
            args.push(parse_arg(piece.trim())?);
        }
    }
    Ok(FunctionSig {
        name: name.to_string(),
        args,
        entry,
    })
}

fn parse_arg(text: &str) -> Result<ArgSpec, String> {
    let (name, spec) = text.split_once(':').ok_or_else(|| format!("argument `{text}` lacks `:`"))?;
    let name = name.trim();
    if name.is_empty() {
        return Err("empty argument name".into());
    }
    let (kind, locs) = spec.split_once('@').ok_or_else(|| format!("argument `{name}` lacks `@`"))?;
    let vns = tokens(locs)
        .into_iter()
        .map(|t| t.parse::<Varnode>().map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    let kind = kind.trim();
    let arity = |n: usize| {
        if vns.len() == n {
            Ok(())
        } else {
            Err(format!("argument `{name}` of kind {kind} needs {n} locations"))
        }
    };
    let kind = if let Some(width) = kind.strip_prefix("INT") {
        let width_bits: u32 = width.parse().map_err(|_| format!("bad INT width `{width}`"))?;
        arity(1)?;
        ArgKind::Int {
            location: vns[0],
            width_bits,
        }
    } else if kind == "SLICE" {
        arity(3)?;
        ArgKind::Slice {
            ptr: vns[0],
            len: vns[1],
            cap: vns[2],
        }
    } else if kind == "STRING" {
        arity(2)?;
        ArgKind::Str {
            ptr: vns[0],
            len: vns[1],
        }
    } else {
        return Err(format!("unknown argument kind `{kind}`"));
    };
    Ok(ArgSpec {
        name: name.to_string(),
        kind,
    })
}

/// Checks every program invariant; the result is empty iff the program is valid.
pub fn validate(program: &Program) -> Vec<Diagnostic> {
    validate_with(program, None)
}

fn validate_with(program: &Program, map: Option<&SourceMap>) -> Vec<Diagnostic> {
    let default_map = SourceMap::default();
    let map = map.unwrap_or(&default_map);
    let mut out = Vec::new();

    for (addr, ops) in &program.instructions {
        for (idx, op) in ops.iter().enumerate() {
            let line = map.op(op.location);
            if op.location != Location::new(*addr, idx as u16) {
                out.push(Diagnostic::error(
                    line,
                    format!("micro-op at {addr:#x}[{idx}] records location {}", op.location),
                ));
            }
            for msg in check_op(program, op, ops.len()) {
                out.push(Diagnostic::error(line, format!("{}: {msg}", op.location)));
            }
        }
    }

    for (name, addr) in &program.entry_points {
        if !program.instructions.contains_key(addr) {
            let line = map.entries.get(name).copied().unwrap_or(0);
            out.push(Diagnostic::error(line, format!("entry `{name}` at {addr:#x}: dangling target")));
        }
    }

    for (name, sig) in &program.signatures {
        let line = map.sigs.get(name).copied().unwrap_or(0);
        if !program.instructions.contains_key(&sig.entry) {
            out.push(Diagnostic::error(
                line,
                format!("signature `{name}` entry {:#x}: dangling target", sig.entry),
            ));
        }
        for msg in check_sig(sig) {
            out.push(Diagnostic::error(line, format!("signature `{name}`: {msg}")));
        }
    }
    out
}

fn check_sig(sig: &FunctionSig) -> Vec<String> {
    let mut msgs = Vec::new();
    let mut locs: Vec<(&str, Varnode)> = Vec::new();
    let mut names = std::collections::BTreeSet::new();
    for arg in &sig.args {
        if !names.insert(arg.name.as_str()) {
            msgs.push(format!("duplicate argument name `{}`", arg.name));
        }
        if let ArgKind::Int {
            location,
            width_bits,
        } = &arg.kind
        {
            if *width_bits == 0 || *width_bits != location.bits() {
                msgs.push(format!(
                    "`{}`: INT{} does not match a {}-byte location",
                    arg.name, width_bits, location.size
                ));
            }
        }
        if let ArgKind::Slice { ptr, .. } | ArgKind::Str { ptr, .. } = &arg.kind {
            if ptr.size > 8 {
                msgs.push(format!("`{}`: pointer wider than 8 bytes", arg.name));
            }
        }
        for vn in arg.locations() {
            if vn.is_const() {
                msgs.push(format!("`{}`: argument location {vn} is in the const space", arg.name));
            }
            for (other, prev) in &locs {
                if prev.aliases(&vn) {
                    msgs.push(format!(
                        "aliasing argument locations: `{}` {vn} overlaps `{other}` {prev}",
                        arg.name
                    ));
                }
            }
            locs.push((&arg.name, vn));
        }
    }
    msgs
}

/// Relative micro-op index named by a const-space branch target.
pub(crate) fn internal_target_index(op: &PcodeOp, target: &Varnode) -> Option<usize> {
    let size = target.size.min(8) as u32;
    let raw = target.const_value() as u64;
    let rel = if size >= 8 {
        raw as i64
    } else {
        let shift = 64 - 8 * size;
        ((raw << shift) as i64) >> shift
    };
    let idx = op.location.micro as i64 + rel;
    usize::try_from(idx).ok()
}

fn check_op(program: &Program, op: &PcodeOp, instr_len: usize) -> Vec<String> {
    let mut msgs = Vec::new();
    let n_in = op.inputs.len();
    let sizes: Vec<u8> = op.inputs.iter().map(|v| v.size).collect();
    for vn in op.inputs.iter().chain(op.output.iter()) {
        if vn.size == 0 || vn.size > MAX_VARNODE_SIZE {
            msgs.push(format!("varnode {vn} size outside 1..=16"));
        }
    }
    if let Some(out) = op.output {
        if out.is_const() {
            msgs.push("output cannot be in the const space".into());
        }
    }
    let out_size = op.output.map(|o| o.size);
    let need_output = |msgs: &mut Vec<String>| {
        if op.output.is_none() {
            msgs.push(format!("{} requires an output", op.opcode));
        }
    };
    let no_output = |msgs: &mut Vec<String>| {
        if op.output.is_some() {
            msgs.push(format!("{} takes no output", op.opcode));
        }
    };
    let arity = |msgs: &mut Vec<String>, n: usize| {
        if n_in != n {
            msgs.push(format!("{} expects {n} inputs, found {n_in}", op.opcode));
            false
        } else {
            true
        }
    };

    match op.opcode.shape() {
        Shape::Binary => {
            need_output(&mut msgs);
            if arity(&mut msgs, 2) && (sizes[0] != sizes[1] || out_size.is_some_and(|o| o != sizes[0])) {
                msgs.push("operands and output must have equal sizes".into());
            }
        }
        Shape::Compare => {
            need_output(&mut msgs);
            if arity(&mut msgs, 2) && sizes[0] != sizes[1] {
                msgs.push("compared operands must have equal sizes".into());
            }
            if out_size.is_some_and(|o| o != 1) {
                msgs.push("comparison output must be 1 byte".into());
            }
        }
        Shape::Unary => {
            need_output(&mut msgs);
            if arity(&mut msgs, 1) && out_size.is_some_and(|o| o != sizes[0]) {
                msgs.push("output must match the input size".into());
            }
        }
        Shape::Extend => {
            need_output(&mut msgs);
            if arity(&mut msgs, 1) && out_size.is_some_and(|o| o <= sizes[0]) {
                msgs.push("extension output must be wider than its input".into());
            }
        }
        Shape::Shift => {
            need_output(&mut msgs);
            if arity(&mut msgs, 2) && out_size.is_some_and(|o| o != sizes[0]) {
                msgs.push("shift output must match the shifted value".into());
            }
        }
        Shape::Bool(k) => {
            need_output(&mut msgs);
            if arity(&mut msgs, k) && (sizes.iter().any(|s| *s != 1) || out_size.is_some_and(|o| o != 1)) {
                msgs.push("boolean operands and output must be 1 byte".into());
            }
        }
        Shape::Subpiece => {
            need_output(&mut msgs);
            if arity(&mut msgs, 2) {
                if !op.inputs[1].is_const() {
                    msgs.push("SUBPIECE offset must be a constant".into());
                } else if let Some(o) = out_size {
                    let off = op.inputs[1].const_value();
                    if off >= sizes[0] as u128 || o as u128 > sizes[0] as u128 - off {
                        msgs.push("SUBPIECE range exceeds its input".into());
                    }
                }
            }
        }
        Shape::Effect => match op.opcode {
            Opcode::Load => {
                need_output(&mut msgs);
                if arity(&mut msgs, 1) && sizes[0] > 8 {
                    msgs.push("pointer wider than 8 bytes".into());
                }
            }
            Opcode::Store => {
                no_output(&mut msgs);
                if arity(&mut msgs, 2) && sizes[0] > 8 {
                    msgs.push("pointer wider than 8 bytes".into());
                }
            }
            Opcode::Branch | Opcode::CBranch | Opcode::Call => {
                no_output(&mut msgs);
                if op.opcode == Opcode::CBranch {
                    if arity(&mut msgs, 2) && sizes[1] != 1 {
                        msgs.push("condition must be 1 byte".into());
                    }
                } else if op.opcode == Opcode::Branch {
                    arity(&mut msgs, 1);
                } else if n_in == 0 {
                    msgs.push("CALL needs a target".into());
                }
                if let Some(target) = op.inputs.first() {
                    check_target(program, op, target, instr_len, &mut msgs);
                }
            }
            Opcode::BranchInd | Opcode::CallInd => {
                no_output(&mut msgs);
                if n_in == 0 {
                    msgs.push(format!("{} needs a target varnode", op.opcode));
                } else if sizes[0] > 8 {
                    msgs.push("target wider than 8 bytes".into());
                }
            }
            Opcode::Return => {
                no_output(&mut msgs);
                if n_in > 1 {
                    msgs.push("RETURN takes at most one input".into());
                }
            }
            _ => unreachable!(),
        },
    }
    msgs
}

fn check_target(program: &Program, op: &PcodeOp, target: &Varnode, len: usize, msgs: &mut Vec<String>) {
    match target.space {
        AddressSpace::Ram => {
            if !program.instructions.contains_key(&target.offset) && !program.is_panic(target.offset) {
                msgs.push(format!("{target}: dangling target"));
            }
        }
        AddressSpace::Const if op.opcode != Opcode::Call => {
            match internal_target_index(op, target) {
                Some(i) if i <= len => {}
                _ => msgs.push(format!("{target}: internal target out of range")),
            }
        }
        _ => msgs.push(format!("{target}: branch target must be in the ram or const space")),
    }
}

/// Renders a program as canonical `.pprog` text.
pub fn render(program: &Program) -> String {
    let mut out = String::new();
    for (name, addr) in &program.entry_points {
        let _ = writeln!(out, ".entry {name} {addr:#x}");
    }
    if !program.panic_set.is_empty() {
        out.push_str(".panic");
        for a in &program.panic_set {
            let _ = write!(out, " {a:#x}");
        }
        out.push('\n');
    }
    for sig in program.signatures.values() {
        let args: Vec<String> = sig.args.iter().map(render_arg).collect();
        let _ = writeln!(out, ".sig {}({}) entry {:#x}", sig.name, args.join(", "), sig.entry);
    }
    if !program.initial_ram.is_empty() {
        out.push_str(".ram\n");
        let mut runs: BTreeMap<u64, Vec<u8>> = BTreeMap::new();
        let mut last: Option<(u64, u64)> = None;
        for (addr, byte) in &program.initial_ram {
            match last {
                Some((start, prev)) if prev.checked_add(1) == Some(*addr) && runs[&start].len() < 16 => {
                    runs.get_mut(&start).unwrap().push(*byte);
                    last = Some((start, *addr));
                }
                _ => {
                    runs.insert(*addr, vec![*byte]);
                    last = Some((*addr, *addr));
                }
            }
        }
        for (start, bytes) in runs {
            let _ = write!(out, "{start:#x}");
            for b in bytes {
                let _ = write!(out, " {b:#04x}");
            }
            out.push('\n');
        }
    }
    if !program.instructions.is_empty() {
        out.push_str(".code\n");
        for (addr, ops) in &program.instructions {
            let label = format!("{addr:#x}:");
            for (i, op) in ops.iter().enumerate() {
                if i == 0 {
                    out.push_str(&label);
                } else {
                    out.push_str(&" ".repeat(label.len()));
                }
                let _ = write!(out, " {}", op.opcode);
                for vn in &op.inputs {
                    let _ = write!(out, " {vn}");
                }
                if let Some(o) = op.output {
                    let _ = write!(out, " -> {o}");
                }
                out.push('\n');
            }
        }
    }
    out
}

fn render_arg(arg: &ArgSpec) -> String {
    match &arg.kind {
        ArgKind::Int {
            location,
            width_bits,
        } => format!("{}:INT{}@{}", arg.name, width_bits, location),
        ArgKind::Slice { ptr, len, cap } => format!("{}:SLICE@{ptr} {len} {cap}", arg.name),
        ArgKind::Str { ptr, len } => format!("{}:STRING@{ptr} {len}", arg.name),
    }
}

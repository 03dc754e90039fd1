//! A label-resolving front end that expands corpus sources into `.pprog`.
//!
//! ```text
//! .panic @name ...        declare panic stubs (addresses assigned from PANIC_BASE)
//! .def NAME TEXT          `$NAME` expands to TEXT
//! .sig ... entry @label   passed through; labels become plain addresses
//! .data ADDR BYTE+        collected into the single `.ram` section; `@label`
//!                         there expands to the 8 little-endian address bytes
//! @label:                 label the next instruction
//!     OP in.. -> out | OP ..   one machine instruction, micro-ops split on `|`
//!     PANIC @stub         CALL to the stub, or RETURN in the panic-free build
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

pub const CODE_BASE: u64 = 0x1000;
pub const INSTR_SIZE: u64 = 4;
pub const PANIC_BASE: u64 = 0x9000;
pub const PANIC_STRIDE: u64 = 0x10;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("corpus source line {line}: {message}")]
pub struct AsmError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Build {
    Normal,
    PanicFree,
}

enum Item<'a> {
    Header(usize, &'a str),
    Instr(usize, Vec<String>),
}

pub fn assemble(source: &str, build: Build) -> Result<String, AsmError> {
    let err = |line: usize, message: String| AsmError { line, message };
    let mut defs: BTreeMap<String, String> = BTreeMap::new();
    let mut labels: BTreeMap<String, u64> = BTreeMap::new();
    let mut stubs: Vec<String> = Vec::new();
    let mut items = Vec::new();
    let mut data = Vec::new();
    let mut next = CODE_BASE;

    for (idx, raw) in source.lines().enumerate() {
        let line = idx + 1;
        let mut text = raw.split(';').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        if let Some(rest) = text.strip_prefix(".def ") {
            let (name, value) = rest.trim().split_once(char::is_whitespace).ok_or_else(|| err(line, "`.def NAME TEXT`".into()))?;
            defs.insert(name.to_string(), value.trim().to_string());
            continue;
        }
        if let Some(rest) = text.strip_prefix(".panic ") {
            for tok in rest.split_whitespace() {
                let name = tok.strip_prefix('@').ok_or_else(|| err(line, format!("stub `{tok}` needs `@`")))?;
                let addr = PANIC_BASE + PANIC_STRIDE * stubs.len() as u64;
                if labels.insert(name.to_string(), addr).is_some() {
                    return Err(err(line, format!("label @{name} defined twice")));
                }
                stubs.push(name.to_string());
            }
            continue;
        }
        if let Some(rest) = text.strip_prefix(".data ") {
            data.push((line, rest));
            continue;
        }
        if text.starts_with('.') {
            items.push(Item::Header(line, text));
            continue;
        }
        if text.starts_with('@') {
            let (label, rest) = text.split_once(':').ok_or_else(|| err(line, "label needs `:`".into()))?;
            if labels.insert(label[1..].to_string(), next).is_some() {
                return Err(err(line, format!("label {label} defined twice")));
            }
            text = rest.trim();
            if text.is_empty() {
                continue;
            }
        }
        items.push(Item::Instr(line, text.split('|').map(|m| m.trim().to_string()).collect()));
        next += INSTR_SIZE;
    }

    let expand = |line: usize, text: &str, header: bool| -> Result<String, AsmError> {
        let mut out = Vec::new();
        for tok in text.split_whitespace() {
            let tok = &substitute(tok, &defs).map_err(|name| err(line, format!("undefined ${name}")))?;
            if let Some(name) = tok.strip_prefix('@') {
                if build == Build::PanicFree && stubs.iter().any(|s| s == name) {
                    return Err(err(line, format!("@{name} is a panic stub; use PANIC")));
                }
                let addr = labels.get(name).ok_or_else(|| err(line, format!("undefined label @{name}")))?;
                out.push(if header { format!("{addr:#x}") } else { format!("ram:{addr:#x}:8") });
            } else {
                out.push(tok.to_string());
            }
        }
        Ok(out.join(" "))
    };

    let mut out = String::new();
    if build == Build::Normal && !stubs.is_empty() {
        out.push_str(".panic");
        for (k, _) in stubs.iter().enumerate() {
            let _ = write!(out, " {:#x}", PANIC_BASE + PANIC_STRIDE * k as u64);
        }
        out.push('\n');
    }
    let mut code = String::new();
    let mut addr = CODE_BASE;
    for item in &items {
        match item {
            Item::Header(line, text) => {
                out.push_str(&expand(*line, text, true)?);
                out.push('\n');
            }
            Item::Instr(line, micros) => {
                let label = format!("{addr:#x}:");
                for (i, m) in micros.iter().enumerate() {
                    let body = match m.strip_prefix("PANIC ") {
                        Some(stub) => {
                            let name = stub.trim().trim_start_matches('@');
                            let k = stubs.iter().position(|s| s == name).ok_or_else(|| err(*line, format!("@{name} is not a panic stub")))?;
                            match build {
                                Build::Normal => format!("CALL ram:{:#x}:8", PANIC_BASE + PANIC_STRIDE * k as u64),
                                Build::PanicFree => "RETURN".to_string(),
                            }
                        }
                        None => expand(*line, m, false)?,
                    };
                    let pad = if i == 0 { label.clone() } else { " ".repeat(label.len()) };
                    let _ = writeln!(code, "{pad} {body}");
                }
                addr += INSTR_SIZE;
            }
        }
    }
    if !data.is_empty() {
        out.push_str(".ram\n");
        for (line, d) in &data {
            let mut toks = Vec::new();
            for tok in d.split_whitespace() {
                let text = expand(*line, tok, true)?;
                if tok.starts_with('@') {
                    let value = u64::from_str_radix(text.trim_start_matches("0x"), 16).expect("labels expand to hex");
                    toks.extend(value.to_le_bytes().iter().map(|b| format!("{b:#04x}")));
                } else {
                    toks.push(text);
                }
            }
            out.push_str(&toks.join(" "));
            out.push('\n');
        }
    }
    out.push_str(".code\n");
    out.push_str(&code);
    Ok(out)
}

/// Replaces every `$NAME` inside `tok`.
fn substitute(tok: &str, defs: &BTreeMap<String, String>) -> Result<String, String> {
    let mut out = String::new();
    let mut rest = tok;
    while let Some(pos) = rest.find('$') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos + 1..];
        let end = tail.find(|c: char| !(c.is_ascii_alphanumeric() || c == '_')).unwrap_or(tail.len());
        let name = &tail[..end];
        out.push_str(defs.get(name).ok_or_else(|| name.to_string())?);
        rest = &tail[end..];
    }
    out.push_str(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SRC: &str = "\
.panic @boom
.def x reg:0x0:1
.sig f(x:INT8@$x) entry @f
@f: INT_EQUAL $x const:0x1:1 -> uniq:0x0:1 | CBRANCH @bad uniq:0x0:1
    RETURN          ; done
@bad:
    PANIC @boom
.data 0x6000 0x01   0x02
.data 0x6100 @bad
";

    #[test]
    fn labels_and_stubs_resolve() {
        let text = assemble(SRC, Build::Normal).unwrap();
        assert_eq!(
            text,
            ".panic 0x9000\n.sig f(x:INT8@reg:0x0:1) entry 0x1000\n.ram\n0x6000 0x01 0x02\n0x6100 0x08 0x10 0x00 0x00 0x00 0x00 0x00 0x00\n.code\n\
0x1000: INT_EQUAL reg:0x0:1 const:0x1:1 -> uniq:0x0:1\n        CBRANCH ram:0x1008:8 uniq:0x0:1\n\
0x1004: RETURN\n0x1008: CALL ram:0x9000:8\n"
        );
    }

    #[test]
    fn panic_free_build_drops_stubs() {
        let text = assemble(SRC, Build::PanicFree).unwrap();
        assert!(!text.contains(".panic"));
        assert!(text.contains("0x1008: RETURN"));
    }

    #[test]
    fn errors_carry_lines() {
        let e = assemble("@a: RETURN\n@a: RETURN\n", Build::Normal).unwrap_err();
        assert_eq!(e.line, 2);
        let e = assemble("    BRANCH @nowhere\n", Build::Normal).unwrap_err();
        assert!(e.message.contains("@nowhere"));
        let e = assemble(".panic @p\n    CBRANCH @p const:0x1:1\n", Build::PanicFree).unwrap_err();
        assert!(e.message.contains("panic stub"));
    }
}

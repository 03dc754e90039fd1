//! Typed function arguments: concrete layout in the machine state and
//! their symbolic variables.

use std::fmt;

use crate::ir::{AddressSpace, ArgKind, ArgSpec, FunctionSig, Varnode};
use crate::state::MachineState;

use super::shadow::Shadow;
use super::solver::{Model, SolverError, SolverSession};
use super::term::{CmpOp, Term};

/// Base of the RAM region holding slice and string contents; argument `k`
/// is anchored at `ARG_REGION + k * ARG_STRIDE`.
pub const ARG_REGION: u64 = 0x7f00_0000;
pub const ARG_STRIDE: u64 = 0x1000;
pub const MAX_SLICE_LEN: u64 = 64;
pub const MAX_STRING_LEN: u64 = 256;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum ArgValue {
    Int(u128),
    Str(Vec<u8>),
    Slice { bytes: Vec<u8>, cap: u64 },
}

impl ArgValue {
    pub fn slice(bytes: Vec<u8>) -> ArgValue {
        let cap = bytes.len() as u64;
        ArgValue::Slice { bytes, cap }
    }
}

impl fmt::Display for ArgValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArgValue::Int(v) => write!(f, "{v}"),
            ArgValue::Str(b) => write!(f, "{:?}", String::from_utf8_lossy(b)),
            ArgValue::Slice { bytes, cap } => write!(f, "[{}] cap={cap}", hex::encode(bytes)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ArgError {
    #[error("expected {expected} seed values, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("argument {arg}: value does not match its declared kind")]
    KindMismatch { arg: String },
    #[error("argument {arg}: {detail}")]
    BoundViolation { arg: String, detail: String },
    #[error("argument {arg}: cannot parse seed {text:?}: {detail}")]
    BadSeed { arg: String, text: String, detail: String },
}

/// Parses a command-line seed for `spec`: decimal or `0x` hex for INT,
/// raw text for STRING, hex bytes for SLICE.
pub fn parse_seed(spec: &ArgSpec, text: &str) -> Result<ArgValue, ArgError> {
    let bad = |detail: &str| ArgError::BadSeed { arg: spec.name.clone(), text: text.into(), detail: detail.into() };
    let value = match &spec.kind {
        ArgKind::Int { .. } => {
            let v = match text.strip_prefix("0x") {
                Some(h) => u128::from_str_radix(h, 16),
                None => text.parse::<u128>(),
            };
            ArgValue::Int(v.map_err(|_| bad("not an integer"))?)
        }
        ArgKind::Str { .. } => ArgValue::Str(text.as_bytes().to_vec()),
        ArgKind::Slice { .. } => {
            let h = text.strip_prefix("0x").unwrap_or(text);
            ArgValue::slice(hex::decode(h).map_err(|_| bad("not hex bytes"))?)
        }
    };
    check_value(spec, &value)?;
    Ok(value)
}

fn check_value(spec: &ArgSpec, value: &ArgValue) -> Result<(), ArgError> {
    let violation = |detail: String| ArgError::BoundViolation { arg: spec.name.clone(), detail };
    match (&spec.kind, value) {
        (ArgKind::Int { width_bits, .. }, ArgValue::Int(v)) => {
            if *width_bits < 128 && *v >> width_bits != 0 {
                return Err(violation(format!("{v} exceeds {width_bits} bits")));
            }
        }
        (ArgKind::Str { len, .. }, ArgValue::Str(b)) => {
            if b.len() as u64 > MAX_STRING_LEN || !fits(b.len() as u128, len) {
                return Err(violation(format!("string length {} out of bounds", b.len())));
            }
        }
        (ArgKind::Slice { len, cap: cap_vn, .. }, ArgValue::Slice { bytes, cap }) => {
            let n = bytes.len() as u64;
            if n > *cap || *cap > MAX_SLICE_LEN || !fits(*cap as u128, len) || !fits(*cap as u128, cap_vn) {
                return Err(violation(format!("slice len {n} cap {cap} violates 0 <= len <= cap <= {MAX_SLICE_LEN}")));
            }
        }
        _ => return Err(ArgError::KindMismatch { arg: spec.name.clone() }),
    }
    Ok(())
}

fn fits(v: u128, vn: &Varnode) -> bool {
    vn.size >= 16 || v >> (8 * vn.size as u32) == 0
}

pub fn anchor(index: usize) -> u64 {
    ARG_REGION + index as u64 * ARG_STRIDE
}

fn write_uint(state: &mut MachineState, vn: &Varnode, v: u128) {
    let bytes = v.to_le_bytes()[..vn.size as usize].to_vec();
    state.write_varnode(vn, &bytes).expect("argument locations are not constants");
}

/// Writes concrete argument values into registers and the argument region.
pub fn materialize(sig: &FunctionSig, values: &[ArgValue], state: &mut MachineState) -> Result<(), ArgError> {
    if values.len() != sig.args.len() {
        return Err(ArgError::Arity { expected: sig.args.len(), got: values.len() });
    }
    for (k, (spec, value)) in sig.args.iter().zip(values).enumerate() {
        check_value(spec, value)?;
        match (&spec.kind, value) {
            (ArgKind::Int { location, .. }, ArgValue::Int(v)) => write_uint(state, location, *v),
            (ArgKind::Str { ptr, len }, ArgValue::Str(bytes)) => {
                state.write_bytes(AddressSpace::Ram, anchor(k), bytes);
                write_uint(state, ptr, anchor(k) as u128);
                write_uint(state, len, bytes.len() as u128);
            }
            (ArgKind::Slice { ptr, len, cap: cap_vn }, ArgValue::Slice { bytes, cap }) => {
                state.write_bytes(AddressSpace::Ram, anchor(k), bytes);
                write_uint(state, ptr, anchor(k) as u128);
                write_uint(state, len, bytes.len() as u128);
                write_uint(state, cap_vn, *cap as u128);
            }
            _ => return Err(ArgError::KindMismatch { arg: spec.name.clone() }),
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub enum ArgTerms {
    Int(Term),
    Slice { ptr: u64, len: Term, cap: Term },
    Str { ptr: u64, len: Term, content: Vec<Term> },
}

#[derive(Debug, Clone)]
pub struct SymbolicArg {
    pub spec: ArgSpec,
    pub terms: ArgTerms,
}

impl SymbolicArg {
    pub fn len_var(name: &str) -> String {
        format!("{name}!len")
    }

    pub fn cap_var(name: &str) -> String {
        format!("{name}!cap")
    }

    pub fn byte_var(name: &str, i: usize) -> String {
        format!("{name}!b{i}")
    }

    /// True iff `var` is one of this argument's variables.
    pub fn owns(&self, var: &str) -> bool {
        let name = &self.spec.name;
        match &self.terms {
            ArgTerms::Int(_) => var == name,
            ArgTerms::Slice { .. } => var == Self::len_var(name) || var == Self::cap_var(name),
            ArgTerms::Str { .. } => {
                var == Self::len_var(name)
                    || var
                        .strip_prefix(&format!("{name}!b"))
                        .and_then(|i| i.parse::<u64>().ok())
                        .is_some_and(|i| i < MAX_STRING_LEN)
            }
        }
    }

    /// Solver-side bounds on lengths and capacities.
    pub fn hard_bounds(&self) -> Vec<Term> {
        match &self.terms {
            ArgTerms::Int(_) => vec![],
            ArgTerms::Slice { len, cap, .. } => {
                let w = len.width();
                let max = Term::constant(MAX_SLICE_LEN as u128, w);
                vec![
                    Term::cmp_unsimplified(CmpOp::Ule, &Term::constant(0, w), len),
                    len.ule(&max),
                    cap.ule(&Term::constant(MAX_SLICE_LEN as u128, cap.width())),
                    len.ule(&cap_at(cap, w)),
                ]
            }
            ArgTerms::Str { len, .. } => {
                let w = len.width();
                if w > 8 {
                    vec![len.ule(&Term::constant(MAX_STRING_LEN as u128, w))]
                } else {
                    vec![]
                }
            }
        }
    }
}

fn cap_at(cap: &Term, width: u32) -> Term {
    match cap.width() {
        w if w == width => cap.clone(),
        w if w < width => Term::zext(cap, width - w),
        _ => Term::extract(cap, width - 1, 0),
    }
}

/// Writes the seed to the machine state, attaches fresh variables to the
/// argument locations, and asserts the hard bounds at the base scope.
/// Returns the arguments and the seed assignment of every variable.
pub fn init_symbolic_args(
    sig: &FunctionSig,
    seeds: &[ArgValue],
    state: &mut MachineState,
    shadow: &mut Shadow,
    session: &mut SolverSession,
) -> Result<(Vec<SymbolicArg>, Model), InitError> {
    materialize(sig, seeds, state)?;
    let mut args = Vec::new();
    let mut model = Model::new();
    for (k, (spec, seed)) in sig.args.iter().zip(seeds).enumerate() {
        let name = &spec.name;
        let terms = match (&spec.kind, seed) {
            (ArgKind::Int { location, .. }, ArgValue::Int(v)) => {
                let t = Term::var(name, location.bits());
                shadow.write(location, Some(&t));
                model.insert(name.clone(), *v);
                ArgTerms::Int(t)
            }
            (ArgKind::Str { len, .. }, ArgValue::Str(bytes)) => {
                let len_t = Term::var(&SymbolicArg::len_var(name), len.bits());
                shadow.write(len, Some(&len_t));
                model.insert(SymbolicArg::len_var(name), bytes.len() as u128);
                let content: Vec<Term> = (0..MAX_STRING_LEN as usize)
                    .map(|i| {
                        let v = SymbolicArg::byte_var(name, i);
                        model.insert(v.clone(), bytes.get(i).copied().unwrap_or(0) as u128);
                        let t = Term::var(&v, 8);
                        shadow.write_bytes(AddressSpace::Ram, anchor(k) + i as u64, 1, Some(&t));
                        t
                    })
                    .collect();
                ArgTerms::Str { ptr: anchor(k), len: len_t, content }
            }
            (ArgKind::Slice { len, cap: cap_vn, .. }, ArgValue::Slice { bytes, cap }) => {
                let len_t = Term::var(&SymbolicArg::len_var(name), len.bits());
                let cap_t = Term::var(&SymbolicArg::cap_var(name), cap_vn.bits());
                shadow.write(len, Some(&len_t));
                shadow.write(cap_vn, Some(&cap_t));
                model.insert(SymbolicArg::len_var(name), bytes.len() as u128);
                model.insert(SymbolicArg::cap_var(name), *cap as u128);
                ArgTerms::Slice { ptr: anchor(k), len: len_t, cap: cap_t }
            }
            _ => return Err(ArgError::KindMismatch { arg: name.clone() }.into()),
        };
        let arg = SymbolicArg { spec: spec.clone(), terms };
        for bound in arg.hard_bounds() {
            session.assert(&bound)?;
        }
        args.push(arg);
    }
    Ok((args, model))
}

#[derive(Debug, thiserror::Error)]
pub enum InitError {
    #[error(transparent)]
    Arg(#[from] ArgError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// True iff a variable of some argument occurs in `phi`.
pub fn references_args(phi: &Term, args: &[SymbolicArg]) -> bool {
    phi.vars().keys().any(|v| args.iter().any(|a| a.owns(v)))
}

/// Rebuilds argument values from a model; variables the model omits keep
/// their seed values.
pub fn synthesize_inputs(model: &Model, args: &[SymbolicArg], seeds: &[ArgValue]) -> Result<Vec<ArgValue>, ArgError> {
    let mut out = Vec::new();
    for (arg, seed) in args.iter().zip(seeds) {
        let name = &arg.spec.name;
        let violation = |detail: String| ArgError::BoundViolation { arg: name.clone(), detail };
        let value = match (&arg.terms, seed) {
            (ArgTerms::Int(t), ArgValue::Int(s)) => {
                let v = model.get(name).copied().unwrap_or(*s);
                if t.width() < 128 && v >> t.width() != 0 {
                    return Err(violation(format!("model value {v} exceeds {} bits", t.width())));
                }
                ArgValue::Int(v)
            }
            (ArgTerms::Str { .. }, ArgValue::Str(s)) => {
                let len = model.get(&SymbolicArg::len_var(name)).copied().unwrap_or(s.len() as u128);
                if len > MAX_STRING_LEN as u128 {
                    return Err(violation(format!("string length {len} exceeds {MAX_STRING_LEN}")));
                }
                let bytes = (0..len as usize)
                    .map(|i| match model.get(&SymbolicArg::byte_var(name, i)) {
                        Some(v) => *v as u8,
                        None => s.get(i).copied().unwrap_or(0),
                    })
                    .collect();
                ArgValue::Str(bytes)
            }
            (ArgTerms::Slice { .. }, ArgValue::Slice { bytes, cap }) => {
                let len = model.get(&SymbolicArg::len_var(name)).copied().unwrap_or(bytes.len() as u128);
                let new_cap = model.get(&SymbolicArg::cap_var(name)).copied().unwrap_or(*cap as u128);
                if len > new_cap || new_cap > MAX_SLICE_LEN as u128 {
                    return Err(violation(format!("slice len {len} cap {new_cap} out of bounds")));
                }
                let mut content = bytes.clone();
                content.resize(len as usize, 0);
                ArgValue::Slice { bytes: content, cap: new_cap as u64 }
            }
            _ => return Err(ArgError::KindMismatch { arg: name.clone() }),
        };
        out.push(value);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loader::parse_program;
    use crate::symbolic::solver::{CheckResult, SolverConfig};

    fn sig(decl: &str) -> FunctionSig {
        let src = format!("{decl}\n.code\n0x1000: RETURN\n");
        let p = parse_program(&src).unwrap().program;
        p.signatures.into_values().next().unwrap()
    }

    fn setup(decl: &str, seeds: &[ArgValue]) -> (Vec<SymbolicArg>, Model, MachineState, Shadow, SolverSession) {
        let sig = sig(decl);
        let mut state = MachineState::default();
        let mut shadow = Shadow::default();
        let mut session = SolverSession::spawn(&SolverConfig::default()).unwrap();
        let (args, model) = init_symbolic_args(&sig, seeds, &mut state, &mut shadow, &mut session).unwrap();
        (args, model, state, shadow, session)
    }

    #[test]
    fn int_argument_gets_a_named_variable() {
        let (args, model, state, shadow, session) =
            setup(".sig f(num1:INT8@reg:0x0:1) entry 0x1000", &[ArgValue::Int(5)]);
        assert_eq!(state.read_varnode(&Varnode::reg(0, 1)), vec![5]);
        let t = shadow.read(&Varnode::reg(0, 1), &state).unwrap();
        assert_eq!(t, Term::var("num1", 8));
        assert_eq!(model["num1"], 5);
        assert!(session.assertions().is_empty());
        assert!(references_args(&t.eq(&Term::constant(5, 8)), &args));
        let doubled = Term::bv(crate::symbolic::term::BvOp::Mul, &Term::constant(2, 8), &t);
        assert!(references_args(&doubled, &args));
        assert!(!references_args(&Term::constant(1, 8).eq(&Term::constant(1, 8)), &args));
    }

    #[test]
    fn slice_bounds_are_hard_constraints() {
        let (_, _, state, _, session) = setup(
            ".sig f(xs:SLICE@reg:0x0:8 reg:0x8:8 reg:0x10:8) entry 0x1000",
            &[ArgValue::slice(vec![7, 8, 9])],
        );
        let text = session.emit_smtlib();
        for needle in [
            "(bvule #x0000000000000000 xs!len)",
            "(bvule xs!len #x0000000000000040)",
            "(bvule xs!cap #x0000000000000040)",
            "(bvule xs!len xs!cap)",
        ] {
            assert!(text.contains(needle), "{needle} missing from\n{text}");
        }
        let ptr = state.read_u64(&Varnode::reg(0, 8));
        assert_eq!(ptr, anchor(0));
        assert_eq!(state.read_bytes(AddressSpace::Ram, ptr, 3), vec![7, 8, 9]);
    }

    #[test]
    fn slice_models_respect_bounds() {
        let (args, _, state, shadow, mut session) = setup(
            ".sig f(xs:SLICE@reg:0x0:8 reg:0x8:8 reg:0x10:8) entry 0x1000",
            &[ArgValue::slice(vec![1, 2])],
        );
        let len = shadow.read(&Varnode::reg(8, 8), &state).unwrap();
        // ask for a length beyond the seed
        let CheckResult::Sat(m) = session.check_negated(&len.ule(&Term::constant(10, 64))).unwrap() else { panic!() };
        let (l, c) = (m["xs!len"], m["xs!cap"]);
        assert!(10 < l && l <= c && c <= 64);
        let v = synthesize_inputs(&m, &args, &[ArgValue::slice(vec![1, 2])]).unwrap();
        let ArgValue::Slice { bytes, cap } = &v[0] else { panic!() };
        assert_eq!(bytes.len() as u128, l);
        assert_eq!(&bytes[..2], &[1, 2]);
        assert_eq!(*cap as u128, c);
    }

    #[test]
    fn empty_signature_has_no_variables() {
        let (args, model, _, shadow, session) = setup(".sig f() entry 0x1000", &[]);
        assert!(args.is_empty() && model.is_empty() && shadow.is_empty() && session.assertions().is_empty());
    }

    #[test]
    fn string_layout_and_model_fallback() {
        let decl = ".sig f(s:STRING@reg:0x0:8 reg:0x8:8) entry 0x1000";
        let seeds = [ArgValue::Str(b"2+3".to_vec())];
        let (args, model, state, _, session) = setup(decl, &seeds);
        assert_eq!(model["s!len"], 3);
        assert_eq!(model["s!b1"], b'+' as u128);
        assert_eq!(model["s!b200"], 0);
        assert!(session.emit_smtlib().contains("(bvule s!len #x0000000000000100)"));
        assert_eq!(state.read_bytes(AddressSpace::Ram, anchor(0), 3), b"2+3".to_vec());
        let mut m = Model::new();
        m.insert("s!b0".into(), b'5' as u128);
        assert_eq!(synthesize_inputs(&m, &args, &seeds).unwrap(), vec![ArgValue::Str(b"5+3".to_vec())]);
        assert_eq!(synthesize_inputs(&Model::new(), &args, &seeds).unwrap(), seeds.to_vec());
    }

    #[test]
    fn model_values_beyond_width_are_rejected() {
        let decl = ".sig f(a:INT8@reg:0x0:1) entry 0x1000";
        let (args, ..) = setup(decl, &[ArgValue::Int(1)]);
        let mut m = Model::new();
        m.insert("a".into(), 300);
        assert!(matches!(synthesize_inputs(&m, &args, &[ArgValue::Int(1)]), Err(ArgError::BoundViolation { .. })));
    }

    #[test]
    fn seeds_are_parsed_per_kind() {
        let s = sig(".sig f(a:INT8@reg:0x0:1, s:STRING@reg:0x8:8 reg:0x10:8, t:SLICE@reg:0x18:8 reg:0x20:8 reg:0x28:8) entry 0x1000");
        assert_eq!(parse_seed(&s.args[0], "0x2a").unwrap(), ArgValue::Int(42));
        assert!(parse_seed(&s.args[0], "256").is_err());
        assert_eq!(parse_seed(&s.args[1], "2+3").unwrap(), ArgValue::Str(b"2+3".to_vec()));
        assert_eq!(parse_seed(&s.args[2], "0102").unwrap(), ArgValue::slice(vec![1, 2]));
        assert!(parse_seed(&s.args[2], &"00".repeat(65)).is_err());
        assert!(parse_seed(&s.args[2], "xyz").is_err());
    }
}

//! IR vocabulary: address spaces, varnodes, opcodes, micro-ops and programs.
//!
//! Everything here is immutable once built. Byte order is little-endian
//! throughout and varnodes are at most [`MAX_VARNODE_SIZE`] bytes wide.

pub(crate) mod eval;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use eval::{eval_concrete, EvalError};

/// Widest varnode the IR admits, in bytes.
pub const MAX_VARNODE_SIZE: u8 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AddressSpace {
    Const,
    Register,
    Unique,
    Ram,
}

impl AddressSpace {
    pub fn keyword(self) -> &'static str {
        match self {
            AddressSpace::Const => "const",
            AddressSpace::Register => "reg",
            AddressSpace::Unique => "uniq",
            AddressSpace::Ram => "ram",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        Some(match s {
            "const" => AddressSpace::Const,
            "reg" => AddressSpace::Register,
            "uniq" => AddressSpace::Unique,
            "ram" => AddressSpace::Ram,
            _ => return None,
        })
    }
}

/// A typed storage reference: `size` bytes at `offset` within `space`.
///
/// For the const space the offset *is* the value, truncated to `size` bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Varnode {
    pub space: AddressSpace,
    pub offset: u64,
    pub size: u8,
}

impl Varnode {
    pub const fn new(space: AddressSpace, offset: u64, size: u8) -> Self {
        Varnode {
            space,
            offset,
            size,
        }
    }

    pub const fn constant(value: u64, size: u8) -> Self {
        Varnode::new(AddressSpace::Const, value, size)
    }

    pub const fn reg(offset: u64, size: u8) -> Self {
        Varnode::new(AddressSpace::Register, offset, size)
    }

    pub const fn unique(offset: u64, size: u8) -> Self {
        Varnode::new(AddressSpace::Unique, offset, size)
    }

    pub const fn ram(offset: u64, size: u8) -> Self {
        Varnode::new(AddressSpace::Ram, offset, size)
    }

    pub fn is_const(&self) -> bool {
        self.space == AddressSpace::Const
    }

    /// The encoded constant, meaningful for const-space varnodes.
    pub fn const_value(&self) -> u128 {
        let v = self.offset as u128;
        if self.size >= 16 {
            v
        } else {
            v & ((1u128 << (8 * self.size as u32)) - 1)
        }
    }

    /// Little-endian bytes of the encoded constant.
    pub fn const_bytes(&self) -> Vec<u8> {
        self.const_value().to_le_bytes()[..self.size as usize].to_vec()
    }

    /// Same space and overlapping `[offset, offset + size)` ranges.
    pub fn aliases(&self, other: &Varnode) -> bool {
        if self.space != other.space {
            return false;
        }
        let a0 = self.offset as u128;
        let a1 = a0 + self.size as u128;
        let b0 = other.offset as u128;
        let b1 = b0 + other.size as u128;
        a0 < b1 && b0 < a1
    }

    pub fn bits(&self) -> u32 {
        8 * self.size as u32
    }
}

impl fmt::Display for Varnode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{:#x}:{}", self.space.keyword(), self.offset, self.size)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed varnode `{0}`")]
pub struct VarnodeParseError(pub String);

impl FromStr for Varnode {
    type Err = VarnodeParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || VarnodeParseError(s.to_string());
        let mut parts = s.split(':');
        let space = parts
            .next()
            .and_then(AddressSpace::from_keyword)
            .ok_or_else(err)?;
        let offset = parts.next().and_then(parse_hex).ok_or_else(err)?;
        let size: u8 = parts.next().and_then(|t| t.parse().ok()).ok_or_else(err)?;
        if parts.next().is_some() || size == 0 || size > MAX_VARNODE_SIZE {
            return Err(err());
        }
        Ok(Varnode::new(space, offset, size))
    }
}

/// Parses a `0x`-prefixed hexadecimal number.
pub fn parse_hex(s: &str) -> Option<u64> {
    let digits = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X"))?;
    if digits.is_empty() {
        return None;
    }
    u64::from_str_radix(digits, 16).ok()
}

macro_rules! opcodes {
    ($($variant:ident => $name:literal),* $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum Opcode {
            $($variant),*
        }

        impl Opcode {
            pub const ALL: &'static [Opcode] = &[$(Opcode::$variant),*];

            pub fn mnemonic(self) -> &'static str {
                match self {
                    $(Opcode::$variant => $name),*
                }
            }

            pub fn from_mnemonic(s: &str) -> Option<Opcode> {
                match s {
                    $($name => Some(Opcode::$variant),)*
                    _ => None,
                }
            }
        }
    };
}

opcodes! {
    Copy => "COPY",
    Load => "LOAD",
    Store => "STORE",
    Branch => "BRANCH",
    CBranch => "CBRANCH",
    BranchInd => "BRANCHIND",
    Call => "CALL",
    CallInd => "CALLIND",
    Return => "RETURN",
    IntEqual => "INT_EQUAL",
    IntNotEqual => "INT_NOTEQUAL",
    IntLess => "INT_LESS",
    IntSLess => "INT_SLESS",
    IntLessEqual => "INT_LESSEQUAL",
    IntSLessEqual => "INT_SLESSEQUAL",
    IntAdd => "INT_ADD",
    IntSub => "INT_SUB",
    IntMult => "INT_MULT",
    IntDiv => "INT_DIV",
    IntSDiv => "INT_SDIV",
    IntRem => "INT_REM",
    IntSRem => "INT_SREM",
    IntZExt => "INT_ZEXT",
    IntSExt => "INT_SEXT",
    IntAnd => "INT_AND",
    IntOr => "INT_OR",
    IntXor => "INT_XOR",
    IntNegate => "INT_NEGATE",
    Int2Comp => "INT_2COMP",
    IntLeft => "INT_LEFT",
    IntRight => "INT_RIGHT",
    IntSRight => "INT_SRIGHT",
    BoolNegate => "BOOL_NEGATE",
    BoolAnd => "BOOL_AND",
    BoolOr => "BOOL_OR",
    BoolXor => "BOOL_XOR",
    Subpiece => "SUBPIECE",
}

/// Operand shape of an opcode, used by validation and evaluation alike.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// Two equal-size inputs, output the same size.
    Binary,
    /// Two equal-size inputs, 1-byte output.
    Compare,
    /// One input, output the same size.
    Unary,
    /// One input, strictly wider output.
    Extend,
    /// Value input and shift amount of any size; output the value's size.
    Shift,
    /// 1-byte boolean inputs and output; arity 1 or 2.
    Bool(usize),
    /// Value and const byte offset; output no wider than the remaining bytes.
    Subpiece,
    /// Memory and control flow; handled by the machine, not by `eval_concrete`.
    Effect,
}

impl Opcode {
    pub fn shape(self) -> Shape {
        use Opcode::*;
        match self {
            IntAdd | IntSub | IntMult | IntDiv | IntSDiv | IntRem | IntSRem | IntAnd | IntOr
            | IntXor => Shape::Binary,
            IntEqual | IntNotEqual | IntLess | IntSLess | IntLessEqual | IntSLessEqual => {
                Shape::Compare
            }
            Copy | IntNegate | Int2Comp => Shape::Unary,
            IntZExt | IntSExt => Shape::Extend,
            IntLeft | IntRight | IntSRight => Shape::Shift,
            BoolNegate => Shape::Bool(1),
            BoolAnd | BoolOr | BoolXor => Shape::Bool(2),
            Subpiece => Shape::Subpiece,
            Load | Store | Branch | CBranch | BranchInd | Call | CallInd | Return => Shape::Effect,
        }
    }

    /// Micro-ops that may transfer control away from the next micro-op.
    pub fn is_control_flow(self) -> bool {
        matches!(
            self,
            Opcode::Branch
                | Opcode::CBranch
                | Opcode::BranchInd
                | Opcode::Call
                | Opcode::CallInd
                | Opcode::Return
        )
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

/// Position of a micro-op: machine address plus index within the instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Location {
    pub addr: u64,
    pub micro: u16,
}

impl Location {
    pub const fn new(addr: u64, micro: u16) -> Self {
        Location { addr, micro }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}.{}", self.addr, self.micro)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PcodeOp {
    pub opcode: Opcode,
    pub inputs: Vec<Varnode>,
    pub output: Option<Varnode>,
    pub location: Location,
}

impl PcodeOp {
    /// First input of BRANCH/CBRANCH/CALL, if this is one of those.
    pub fn static_target(&self) -> Option<Varnode> {
        match self.opcode {
            Opcode::Branch | Opcode::CBranch | Opcode::Call => self.inputs.first().copied(),
            _ => None,
        }
    }
}

/// True iff a branch target names another micro-op of the same instruction.
pub fn is_internal_pcode_target(target: &Varnode) -> bool {
    target.space == AddressSpace::Const
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArgKind {
    Int { location: Varnode, width_bits: u32 },
    Slice { ptr: Varnode, len: Varnode, cap: Varnode },
    Str { ptr: Varnode, len: Varnode },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgSpec {
    pub name: String,
    pub kind: ArgKind,
}

impl ArgSpec {
    pub fn locations(&self) -> Vec<Varnode> {
        match &self.kind {
            ArgKind::Int { location, .. } => vec![*location],
            ArgKind::Slice { ptr, len, cap } => vec![*ptr, *len, *cap],
            ArgKind::Str { ptr, len } => vec![*ptr, *len],
        }
    }

    /// Storage width of the argument's value (INT) or of its pointer slot.
    pub fn width_bytes(&self) -> u8 {
        match &self.kind {
            ArgKind::Int { location, .. } => location.size,
            ArgKind::Slice { ptr, .. } | ArgKind::Str { ptr, .. } => ptr.size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSig {
    pub name: String,
    pub args: Vec<ArgSpec>,
    pub entry: u64,
}

/// A lifted program: instructions indexed by machine address.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Program {
    pub instructions: BTreeMap<u64, Vec<PcodeOp>>,
    pub entry_points: BTreeMap<String, u64>,
    pub panic_set: BTreeSet<u64>,
    pub signatures: BTreeMap<String, FunctionSig>,
    pub initial_ram: BTreeMap<u64, u8>,
}

impl Program {
    pub fn op_at(&self, loc: Location) -> Option<&PcodeOp> {
        self.instructions.get(&loc.addr)?.get(loc.micro as usize)
    }

    /// Address of the instruction following `addr` in address order.
    pub fn next_instruction(&self, addr: u64) -> Option<u64> {
        self.instructions
            .range(addr.checked_add(1)?..)
            .next()
            .map(|(a, _)| *a)
    }

    pub fn is_panic(&self, addr: u64) -> bool {
        self.panic_set.contains(&addr)
    }

    /// Resolves a start name through the entry table, then the signatures.
    pub fn resolve_start(&self, name: &str) -> Option<u64> {
        self.entry_points
            .get(name)
            .copied()
            .or_else(|| self.signatures.get(name).map(|s| s.entry))
    }

    /// Signature for a start name: by function name, or by entry address.
    pub fn signature_for(&self, name: &str) -> Option<&FunctionSig> {
        if let Some(sig) = self.signatures.get(name) {
            return Some(sig);
        }
        let addr = self.resolve_start(name)?;
        self.signatures.values().find(|s| s.entry == addr)
    }

    pub fn op_count(&self) -> usize {
        self.instructions.values().map(Vec::len).sum()
    }
}

//! Byte-granular symbolic shadow of the machine state and the term mirror
//! of each pure micro-op.

use std::collections::HashMap;

use crate::ir::{AddressSpace, Opcode, PcodeOp, Varnode};
use crate::state::MachineState;

use super::term::{BvOp, CmpOp, Term};

/// Symbolic bytes keyed by (space, address). Bytes without an entry are
/// concrete and read from the machine state.
#[derive(Debug, Clone, Default)]
pub struct Shadow {
    bytes: HashMap<(AddressSpace, u64), Term>,
}

impl Shadow {
    pub fn read(&self, vn: &Varnode, state: &MachineState) -> Option<Term> {
        if vn.is_const() {
            return None;
        }
        self.read_bytes(vn.space, vn.offset, vn.size as usize, state)
    }

    /// Little-endian term over `len` bytes, or `None` if all are concrete.
    pub fn read_bytes(&self, space: AddressSpace, addr: u64, len: usize, state: &MachineState) -> Option<Term> {
        let keys: Vec<(AddressSpace, u64)> = (0..len as u64).map(|i| (space, addr.wrapping_add(i))).collect();
        if !keys.iter().any(|k| self.bytes.contains_key(k)) {
            return None;
        }
        let byte = |k: &(AddressSpace, u64)| {
            self.bytes
                .get(k)
                .cloned()
                .unwrap_or_else(|| Term::constant(state.read_byte(k.0, k.1) as u128, 8))
        };
        let mut acc = byte(&keys[0]);
        for k in &keys[1..] {
            acc = Term::concat(&byte(k), &acc);
        }
        Some(acc)
    }

    pub fn write(&mut self, vn: &Varnode, term: Option<&Term>) {
        if !vn.is_const() {
            self.write_bytes(vn.space, vn.offset, vn.size as usize, term);
        }
    }

    /// Sets or clears the shadow of `len` bytes; a term must be `8·len` wide.
    pub fn write_bytes(&mut self, space: AddressSpace, addr: u64, len: usize, term: Option<&Term>) {
        let term = term.filter(|t| t.has_vars());
        if let Some(t) = term {
            assert_eq!(t.width() as usize, 8 * len, "shadow width mismatch");
        }
        for i in 0..len as u64 {
            let key = (space, addr.wrapping_add(i));
            match term {
                Some(t) => {
                    let lo = 8 * i as u32;
                    self.bytes.insert(key, Term::extract(t, lo + 7, lo));
                }
                None => {
                    self.bytes.remove(&key);
                }
            }
        }
    }

    pub fn is_symbolic(&self, vn: &Varnode) -> bool {
        !vn.is_const() && (0..vn.size as u64).any(|i| self.bytes.contains_key(&(vn.space, vn.offset.wrapping_add(i))))
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }
}

/// Output term of a pure micro-op given optional input terms and the
/// concrete input bytes they shadow. Returns `None` when no input is
/// symbolic, and for effect ops, which the executor mirrors itself.
pub fn shadow_eval(op: &PcodeOp, inputs: &[Option<Term>], concrete: &[Vec<u8>]) -> Option<Term> {
    if op.opcode.shape() == crate::ir::Shape::Effect || inputs.iter().all(Option::is_none) {
        return None;
    }
    let ins: Vec<Term> = inputs
        .iter()
        .zip(concrete)
        .map(|(t, c)| t.clone().unwrap_or_else(|| Term::from_le_bytes(c)))
        .collect();
    let out_bits = 8 * op.output?.size as u32;
    let bool_in = |t: &Term| t.truthy();
    let t = match op.opcode {
        Opcode::Copy => ins[0].clone(),
        Opcode::IntAdd => Term::bv(BvOp::Add, &ins[0], &ins[1]),
        Opcode::IntSub => Term::bv(BvOp::Sub, &ins[0], &ins[1]),
        Opcode::IntMult => Term::bv(BvOp::Mul, &ins[0], &ins[1]),
        Opcode::IntDiv => Term::bv(BvOp::UDiv, &ins[0], &ins[1]),
        Opcode::IntSDiv => Term::bv(BvOp::SDiv, &ins[0], &ins[1]),
        Opcode::IntRem => Term::bv(BvOp::URem, &ins[0], &ins[1]),
        Opcode::IntSRem => Term::bv(BvOp::SRem, &ins[0], &ins[1]),
        Opcode::IntAnd => Term::bv(BvOp::And, &ins[0], &ins[1]),
        Opcode::IntOr => Term::bv(BvOp::Or, &ins[0], &ins[1]),
        Opcode::IntXor => Term::bv(BvOp::Xor, &ins[0], &ins[1]),
        Opcode::IntNegate => ins[0].bvnot(),
        Opcode::Int2Comp => ins[0].bvneg(),
        Opcode::IntEqual => Term::flag(&ins[0].eq(&ins[1]), 8),
        Opcode::IntNotEqual => Term::flag(&ins[0].ne(&ins[1]), 8),
        Opcode::IntLess => Term::flag(&Term::cmp(CmpOp::Ult, &ins[0], &ins[1]), 8),
        Opcode::IntLessEqual => Term::flag(&Term::cmp(CmpOp::Ule, &ins[0], &ins[1]), 8),
        Opcode::IntSLess => Term::flag(&Term::cmp(CmpOp::Slt, &ins[0], &ins[1]), 8),
        Opcode::IntSLessEqual => Term::flag(&Term::cmp(CmpOp::Sle, &ins[0], &ins[1]), 8),
        Opcode::IntZExt => Term::zext(&ins[0], out_bits - ins[0].width()),
        Opcode::IntSExt => Term::sext(&ins[0], out_bits - ins[0].width()),
        Opcode::IntLeft | Opcode::IntRight | Opcode::IntSRight => shift(op.opcode, &ins[0], &ins[1]),
        Opcode::BoolNegate => Term::flag(&bool_in(&ins[0]).not(), 8),
        Opcode::BoolAnd => Term::flag(&bool_in(&ins[0]).and(&bool_in(&ins[1])), 8),
        Opcode::BoolOr => Term::flag(&bool_in(&ins[0]).or(&bool_in(&ins[1])), 8),
        Opcode::BoolXor => Term::flag(&Term::logic(super::term::BoolOp::Xor, &bool_in(&ins[0]), &bool_in(&ins[1])), 8),
        Opcode::Subpiece => {
            // the byte offset is concrete by validation
            let offset = concrete[1].iter().rev().fold(0u32, |acc, b| (acc << 8) | *b as u32);
            let lo = 8 * offset;
            Term::extract(&ins[0], lo + out_bits - 1, lo)
        }
        _ => return None,
    };
    Some(t)
}

/// Shift with an amount of any width; both saturate at the value width
/// exactly as the machine does.
fn shift(opcode: Opcode, value: &Term, amount: &Term) -> Term {
    let (w, m) = (value.width(), amount.width());
    let op = match opcode {
        Opcode::IntLeft => BvOp::Shl,
        Opcode::IntRight => BvOp::LShr,
        _ => BvOp::AShr,
    };
    if m <= w {
        Term::bv(op, value, &Term::zext(amount, w - m))
    } else {
        let wide = if op == BvOp::AShr { Term::sext(value, m - w) } else { Term::zext(value, m - w) };
        Term::extract(&Term::bv(op, &wide, amount), w - 1, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{eval_concrete, Location, Opcode, Shape};
    use proptest::prelude::*;

    fn op(opcode: Opcode, inputs: Vec<Varnode>, out: u8) -> PcodeOp {
        PcodeOp { opcode, inputs, output: Some(Varnode::unique(0x100, out)), location: Location::new(0x1000, 0) }
    }

    #[test]
    fn add_of_var_and_one() {
        let x = Term::var("x", 8);
        let o = op(Opcode::IntAdd, vec![Varnode::reg(0, 1), Varnode::constant(1, 1)], 1);
        let t = shadow_eval(&o, &[Some(x.clone()), None], &[vec![4], vec![1]]).unwrap();
        assert_eq!(t, x.add(&Term::constant(1, 8)));
    }

    #[test]
    fn concrete_inputs_produce_no_term() {
        let o = op(Opcode::IntAdd, vec![Varnode::constant(2, 1), Varnode::constant(3, 1)], 1);
        assert!(shadow_eval(&o, &[None, None], &[vec![2], vec![3]]).is_none());
    }

    #[test]
    fn equality_flag_booleanizes_to_the_plain_comparison() {
        let len = Term::var("len!142", 8);
        let o = op(Opcode::IntEqual, vec![Varnode::reg(0, 1), Varnode::constant(1, 1)], 1);
        let flag = shadow_eval(&o, &[Some(len), None], &[vec![0], vec![1]]).unwrap();
        assert_eq!(super::super::smt::render(&flag.truthy()), "(= len!142 #x01)");
    }

    #[test]
    fn shadow_bytes_round_trip_through_overlapping_reads() {
        let mut st = MachineState::default();
        st.write_varnode(&Varnode::reg(0, 4), &[1, 2, 3, 4]).unwrap();
        let mut sh = Shadow::default();
        let v = Term::var("v", 16);
        sh.write(&Varnode::reg(1, 2), Some(&v));
        let t = sh.read(&Varnode::reg(0, 4), &st).unwrap();
        let value = t.eval(&|_| Some(0xbbaa)).unwrap();
        assert_eq!(value, u32::from_le_bytes([1, 0xaa, 0xbb, 4]) as u128);
        assert!(sh.read(&Varnode::reg(1, 2), &st).unwrap().same(&v));
        sh.write(&Varnode::reg(0, 4), None);
        assert!(sh.is_empty());
    }

    fn pure_opcodes() -> Vec<Opcode> {
        Opcode::ALL.iter().copied().filter(|o| o.shape() != Shape::Effect).collect()
    }

    prop_compose! {
        fn arb_case()(k in 0usize..28, a in any::<u32>(), b in any::<u32>(), n in prop_oneof![Just(1u8), Just(2), Just(4)], m in prop_oneof![Just(1u8), Just(2), Just(4)], sym in 1u8..4)
            -> (Opcode, u32, u32, u8, u8, u8) {
            let ops = pure_opcodes();
            (ops[k % ops.len()], a, b, n, m, sym)
        }
    }

    proptest! {
        /// The mirrored term evaluated at the concrete inputs equals the
        /// machine's result, for every pure opcode.
        #[test]
        fn mirror_agrees_with_concrete_semantics(case in arb_case()) {
            let (opcode, a, b, n, m, sym) = case;
            let (inputs, out): (Vec<Vec<u8>>, usize) = match opcode.shape() {
                Shape::Binary => (vec![a.to_le_bytes()[..n as usize].to_vec(), b.to_le_bytes()[..n as usize].to_vec()], n as usize),
                Shape::Compare => (vec![a.to_le_bytes()[..n as usize].to_vec(), b.to_le_bytes()[..n as usize].to_vec()], 1),
                Shape::Unary => (vec![a.to_le_bytes()[..n as usize].to_vec()], n as usize),
                Shape::Extend => (vec![a.to_le_bytes()[..n as usize].to_vec()], n as usize + m as usize),
                Shape::Shift => (vec![a.to_le_bytes()[..n as usize].to_vec(), vec![(b % 40) as u8; m as usize]], n as usize),
                Shape::Bool(1) => (vec![vec![a as u8 % 3]], 1),
                Shape::Bool(_) => (vec![vec![a as u8 % 3], vec![b as u8 % 3]], 1),
                Shape::Subpiece => (vec![a.to_le_bytes()[..4].to_vec(), vec![(b % 4) as u8]], 1 + (m as usize - 1).min(3 - (b % 4) as usize)),
                Shape::Effect => unreachable!(),
            };
            let refs: Vec<&[u8]> = inputs.iter().map(Vec::as_slice).collect();
            let Ok(expected) = eval_concrete(opcode, &refs, out) else { return Ok(()) };
            let vns: Vec<Varnode> = inputs.iter().enumerate().map(|(i, v)| Varnode::reg(0x10 * i as u64, v.len() as u8)).collect();
            let o = op(opcode, vns, out as u8);
            let mut names = Vec::new();
            let terms: Vec<Option<Term>> = inputs.iter().enumerate().map(|(i, v)| {
                let symbolic = sym & (1 << i) != 0 && !(opcode == Opcode::Subpiece && i == 1);
                symbolic.then(|| { names.push((format!("in{i}"), v.clone())); Term::var(&format!("in{i}"), 8 * v.len() as u32) })
            }).collect();
            let Some(t) = shadow_eval(&o, &terms, &inputs) else {
                prop_assert!(terms.iter().all(Option::is_none));
                return Ok(());
            };
            let env = |n: &str| names.iter().find(|(k, _)| k == n).map(|(_, v)| v.iter().rev().fold(0u128, |acc, b| (acc << 8) | *b as u128));
            let got = t.eval(&env).unwrap();
            let want = expected.iter().rev().fold(0u128, |acc, b| (acc << 8) | *b as u128);
            prop_assert_eq!(got, want, "{} {:?}", opcode, inputs);
        }
    }
}

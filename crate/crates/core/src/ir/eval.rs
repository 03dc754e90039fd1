use super::{Opcode, Shape, MAX_VARNODE_SIZE};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("{opcode}: operand sizes violate the opcode rules ({detail})")]
    SizeMismatch { opcode: Opcode, detail: String },
    #[error("{0}: division by zero")]
    DivideByZero(Opcode),
    #[error("{0} has no pure value semantics")]
    NotPure(Opcode),
}

fn mask(bytes: usize) -> u128 {
    if bytes >= 16 {
        u128::MAX
    } else {
        (1u128 << (8 * bytes)) - 1
    }
}

pub(crate) fn from_le(bytes: &[u8]) -> u128 {
    let mut buf = [0u8; 16];
    buf[..bytes.len()].copy_from_slice(bytes);
    u128::from_le_bytes(buf)
}

pub(crate) fn to_le(value: u128, bytes: usize) -> Vec<u8> {
    value.to_le_bytes()[..bytes].to_vec()
}

/// Sign-extends a `bytes`-wide value to the full 128 bits.
fn signed(value: u128, bytes: usize) -> i128 {
    let shift = 128 - 8 * bytes as u32;
    ((value << shift) as i128) >> shift
}

/// Concrete value of a pure micro-op.
///
/// Inputs and result are little-endian byte vectors; `out_size` is the output
/// varnode size. Integer ops wrap modulo 2^(8·size); comparisons and boolean
/// ops return a single `0`/`1` byte, treating any non-zero byte as true.
pub fn eval_concrete(opcode: Opcode, inputs: &[&[u8]], out_size: usize) -> Result<Vec<u8>, EvalError> {
    let bad = |detail: String| EvalError::SizeMismatch { opcode, detail };
    let max = MAX_VARNODE_SIZE as usize;
    if out_size == 0 || out_size > max || inputs.iter().any(|i| i.is_empty() || i.len() > max) {
        return Err(bad("sizes must be within 1..=16 bytes".into()));
    }
    let arity = |n: usize| {
        if inputs.len() == n {
            Ok(())
        } else {
            Err(bad(format!("expected {n} inputs, got {}", inputs.len())))
        }
    };

    match opcode.shape() {
        Shape::Effect => Err(EvalError::NotPure(opcode)),
        Shape::Binary => {
            arity(2)?;
            let n = inputs[0].len();
            if inputs[1].len() != n || out_size != n {
                return Err(bad(format!(
                    "inputs {}/{} and output {out_size} must agree",
                    n,
                    inputs[1].len()
                )));
            }
            let m = mask(n);
            let (a, b) = (from_le(inputs[0]), from_le(inputs[1]));
            let (sa, sb) = (signed(a, n), signed(b, n));
            let r = match opcode {
                Opcode::IntAdd => a.wrapping_add(b),
                Opcode::IntSub => a.wrapping_sub(b),
                Opcode::IntMult => a.wrapping_mul(b),
                Opcode::IntAnd => a & b,
                Opcode::IntOr => a | b,
                Opcode::IntXor => a ^ b,
                Opcode::IntDiv | Opcode::IntSDiv | Opcode::IntRem | Opcode::IntSRem if b == 0 => {
                    return Err(EvalError::DivideByZero(opcode))
                }
                Opcode::IntDiv => a / b,
                Opcode::IntRem => a % b,
                Opcode::IntSDiv => sa.wrapping_div(sb) as u128,
                Opcode::IntSRem => sa.wrapping_rem(sb) as u128,
                _ => unreachable!(),
            };
            Ok(to_le(r & m, n))
        }
        Shape::Compare => {
            arity(2)?;
            let n = inputs[0].len();
            if inputs[1].len() != n || out_size != 1 {
                return Err(bad("comparison needs equal inputs and a 1-byte output".into()));
            }
            let (a, b) = (from_le(inputs[0]), from_le(inputs[1]));
            let (sa, sb) = (signed(a, n), signed(b, n));
            let r = match opcode {
                Opcode::IntEqual => a == b,
                Opcode::IntNotEqual => a != b,
                Opcode::IntLess => a < b,
                Opcode::IntLessEqual => a <= b,
                Opcode::IntSLess => sa < sb,
                Opcode::IntSLessEqual => sa <= sb,
                _ => unreachable!(),
            };
            Ok(vec![r as u8])
        }
        Shape::Unary => {
            arity(1)?;
            let n = inputs[0].len();
            if out_size != n {
                return Err(bad("output must match input size".into()));
            }
            let a = from_le(inputs[0]);
            let r = match opcode {
                Opcode::Copy => a,
                Opcode::IntNegate => !a,
                Opcode::Int2Comp => a.wrapping_neg(),
                _ => unreachable!(),
            };
            Ok(to_le(r & mask(n), n))
        }
        Shape::Extend => {
            arity(1)?;
            let n = inputs[0].len();
            if out_size <= n {
                return Err(bad("extension output must be strictly wider".into()));
            }
            let a = from_le(inputs[0]);
            let r = match opcode {
                Opcode::IntZExt => a,
                Opcode::IntSExt => signed(a, n) as u128,
                _ => unreachable!(),
            };
            Ok(to_le(r & mask(out_size), out_size))
        }
        Shape::Shift => {
            arity(2)?;
            let n = inputs[0].len();
            if out_size != n {
                return Err(bad("output must match the shifted value".into()));
            }
            let a = from_le(inputs[0]);
            let amount = from_le(inputs[1]);
            let bits = 8 * n as u128;
            let r = match opcode {
                Opcode::IntLeft if amount >= bits => 0,
                Opcode::IntLeft => a << amount,
                Opcode::IntRight if amount >= bits => 0,
                Opcode::IntRight => a >> amount,
                Opcode::IntSRight => {
                    let s = signed(a, n);
                    (s >> amount.min(127) as u32) as u128
                }
                _ => unreachable!(),
            };
            Ok(to_le(r & mask(n), n))
        }
        Shape::Bool(k) => {
            arity(k)?;
            if out_size != 1 || inputs.iter().any(|i| i.len() != 1) {
                return Err(bad("boolean ops take and return single bytes".into()));
            }
            let a = inputs[0][0] != 0;
            let r = match opcode {
                Opcode::BoolNegate => !a,
                Opcode::BoolAnd => a && inputs[1][0] != 0,
                Opcode::BoolOr => a || inputs[1][0] != 0,
                Opcode::BoolXor => a != (inputs[1][0] != 0),
                _ => unreachable!(),
            };
            Ok(vec![r as u8])
        }
        Shape::Subpiece => {
            arity(2)?;
            let n = inputs[0].len();
            let offset = from_le(inputs[1]);
            if offset >= n as u128 || out_size as u128 > n as u128 - offset {
                return Err(bad(format!(
                    "offset {offset} with output {out_size} exceeds a {n}-byte input"
                )));
            }
            let offset = offset as usize;
            Ok(inputs[0][offset..offset + out_size].to_vec())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::{BigInt, BigUint, Sign};
    use num_traits::{One, Signed, Zero};
    use proptest::prelude::*;

    #[test]
    fn add_wraps() {
        assert_eq!(eval_concrete(Opcode::IntAdd, &[&[0xff], &[0x01]], 1).unwrap(), vec![0x00]);
    }

    #[test]
    fn signed_less_treats_ff_as_minus_one() {
        assert_eq!(eval_concrete(Opcode::IntSLess, &[&[0xff], &[0x00]], 1).unwrap(), vec![0x01]);
        assert_eq!(eval_concrete(Opcode::IntLess, &[&[0xff], &[0x00]], 1).unwrap(), vec![0x00]);
    }

    #[test]
    fn subpiece_matches_shift_oracle() {
        let v: u32 = 0xAABBCCDD;
        let oracle = ((v >> 16) & 0xff) as u8;
        let out = eval_concrete(Opcode::Subpiece, &[&v.to_le_bytes(), &[2]], 1).unwrap();
        assert_eq!(out, vec![oracle]);
        assert_eq!(out, vec![0xBB]);
    }

    #[test]
    fn division_by_zero_is_a_distinct_error() {
        for op in [Opcode::IntDiv, Opcode::IntSDiv, Opcode::IntRem, Opcode::IntSRem] {
            assert_eq!(eval_concrete(op, &[&[7], &[0]], 1), Err(EvalError::DivideByZero(op)));
        }
    }

    #[test]
    fn size_rules_are_enforced() {
        let e = eval_concrete(Opcode::IntAdd, &[&[1], &[1, 0]], 1).unwrap_err();
        assert!(matches!(e, EvalError::SizeMismatch { .. }));
        assert!(eval_concrete(Opcode::IntZExt, &[&[1, 0]], 2).is_err());
        assert!(eval_concrete(Opcode::IntEqual, &[&[1], &[1]], 2).is_err());
        assert!(eval_concrete(Opcode::Subpiece, &[&[1, 2], &[1]], 2).is_err());
        assert!(matches!(
            eval_concrete(Opcode::Load, &[&[0]], 1),
            Err(EvalError::NotPure(Opcode::Load))
        ));
    }

    #[test]
    fn sdiv_overflow_wraps() {
        assert_eq!(eval_concrete(Opcode::IntSDiv, &[&[0x80], &[0xff]], 1).unwrap(), vec![0x80]);
        assert_eq!(eval_concrete(Opcode::IntSRem, &[&[0x80], &[0xff]], 1).unwrap(), vec![0x00]);
        // remainder takes the dividend's sign
        assert_eq!(eval_concrete(Opcode::IntSRem, &[&[0xf9], &[0x02]], 1).unwrap(), vec![0xff]);
    }

    #[test]
    fn shifts_saturate_at_width() {
        assert_eq!(eval_concrete(Opcode::IntLeft, &[&[0x01], &[8]], 1).unwrap(), vec![0]);
        assert_eq!(eval_concrete(Opcode::IntSRight, &[&[0x80], &[200]], 1).unwrap(), vec![0xff]);
        assert_eq!(eval_concrete(Opcode::IntRight, &[&[0x80, 0], &[7, 0, 0, 0]], 2).unwrap(), vec![1, 0]);
    }

    // Reference semantics over arbitrary-precision integers.

    fn big_u(bytes: &[u8]) -> BigUint {
        BigUint::from_bytes_le(bytes)
    }

    fn big_s(bytes: &[u8]) -> BigInt {
        let u = BigInt::from(big_u(bytes));
        let half = BigInt::one() << (8 * bytes.len() - 1);
        if u >= half {
            u - (BigInt::one() << (8 * bytes.len()))
        } else {
            u
        }
    }

    fn modulo(v: BigInt, bytes: usize) -> Vec<u8> {
        let m = BigInt::one() << (8 * bytes);
        let mut r = v % &m;
        if r.sign() == Sign::Minus {
            r += &m;
        }
        let mut out = r.to_biguint().unwrap().to_bytes_le();
        out.resize(bytes, 0);
        out
    }

    fn reference(op: Opcode, ins: &[Vec<u8>], out: usize) -> Option<Vec<u8>> {
        let n = ins[0].len();
        let ua = || BigInt::from(big_u(&ins[0]));
        let ub = || BigInt::from(big_u(&ins[1]));
        let flag = |b: bool| Some(vec![b as u8]);
        Some(match op {
            Opcode::Copy => ins[0].clone(),
            Opcode::IntAdd => modulo(ua() + ub(), n),
            Opcode::IntSub => modulo(ua() - ub(), n),
            Opcode::IntMult => modulo(ua() * ub(), n),
            Opcode::IntDiv => {
                if ub().is_zero() {
                    return None;
                }
                modulo(ua() / ub(), n)
            }
            Opcode::IntRem => {
                if ub().is_zero() {
                    return None;
                }
                modulo(ua() % ub(), n)
            }
            Opcode::IntSDiv => {
                let (a, b) = (big_s(&ins[0]), big_s(&ins[1]));
                if b.is_zero() {
                    return None;
                }
                // BigInt division truncates toward zero
                modulo(a / b, n)
            }
            Opcode::IntSRem => {
                let (a, b) = (big_s(&ins[0]), big_s(&ins[1]));
                if b.is_zero() {
                    return None;
                }
                modulo(a % b, n)
            }
            Opcode::IntAnd => modulo(ua() & ub(), n),
            Opcode::IntOr => modulo(ua() | ub(), n),
            Opcode::IntXor => modulo(ua() ^ ub(), n),
            Opcode::IntNegate => modulo((BigInt::one() << (8 * n)) - BigInt::one() - ua(), n),
            Opcode::Int2Comp => modulo(-ua(), n),
            Opcode::IntEqual => return flag(ua() == ub()),
            Opcode::IntNotEqual => return flag(ua() != ub()),
            Opcode::IntLess => return flag(ua() < ub()),
            Opcode::IntLessEqual => return flag(ua() <= ub()),
            Opcode::IntSLess => return flag(big_s(&ins[0]) < big_s(&ins[1])),
            Opcode::IntSLessEqual => return flag(big_s(&ins[0]) <= big_s(&ins[1])),
            Opcode::IntZExt => modulo(ua(), out),
            Opcode::IntSExt => modulo(big_s(&ins[0]), out),
            Opcode::IntLeft | Opcode::IntRight | Opcode::IntSRight => {
                let amt = ub();
                let bits = BigInt::from(8 * n);
                let a = if op == Opcode::IntSRight { big_s(&ins[0]) } else { ua() };
                if amt >= bits {
                    match op {
                        Opcode::IntSRight if a.is_negative() => modulo(-BigInt::one(), n),
                        _ => vec![0; n],
                    }
                } else {
                    let s: usize = amt.try_into().unwrap();
                    match op {
                        Opcode::IntLeft => modulo(a << s, n),
                        // floor semantics of BigInt >> match arithmetic shift
                        _ => modulo(a >> s, n),
                    }
                }
            }
            Opcode::BoolNegate => return flag(ins[0][0] == 0),
            Opcode::BoolAnd => return flag(ins[0][0] != 0 && ins[1][0] != 0),
            Opcode::BoolOr => return flag(ins[0][0] != 0 || ins[1][0] != 0),
            Opcode::BoolXor => return flag((ins[0][0] != 0) != (ins[1][0] != 0)),
            Opcode::Subpiece => {
                let off: usize = big_u(&ins[1]).try_into().unwrap();
                let shifted = big_u(&ins[0]) >> (8 * off);
                modulo(BigInt::from(shifted), out)
            }
            _ => unreachable!(),
        })
    }

    fn sizes() -> impl Strategy<Value = usize> {
        prop_oneof![Just(1usize), Just(2), Just(4), Just(8), Just(16), 1usize..=16]
    }

    fn bytes(n: usize) -> impl Strategy<Value = Vec<u8>> {
        // bias toward small values and boundary patterns as well as uniform bytes
        prop_oneof![
            proptest::collection::vec(any::<u8>(), n),
            proptest::collection::vec(prop_oneof![Just(0u8), Just(1), Just(0x7f), Just(0x80), Just(0xff)], n),
        ]
    }

    fn case_for(op: Opcode) -> BoxedStrategy<(Vec<Vec<u8>>, usize)> {
        match op.shape() {
            Shape::Binary | Shape::Compare => sizes()
                .prop_flat_map(move |n| (bytes(n), bytes(n)))
                .prop_map(move |(a, b)| {
                    let out = if op.shape() == Shape::Compare { 1 } else { a.len() };
                    (vec![a, b], out)
                })
                .boxed(),
            Shape::Unary => sizes().prop_flat_map(bytes).prop_map(|a| {
                let n = a.len();
                (vec![a], n)
            }).boxed(),
            Shape::Extend => (1usize..16)
                .prop_flat_map(|n| (bytes(n), (n + 1)..=16))
                .prop_map(|(a, out)| (vec![a], out))
                .boxed(),
            Shape::Shift => (sizes(), sizes(), 0u16..200)
                .prop_flat_map(|(n, m, amt)| (bytes(n), Just(m), Just(amt)))
                .prop_map(|(a, m, amt)| {
                    let mut s = vec![0u8; m];
                    let amt_bytes = amt.to_le_bytes();
                    for (i, b) in amt_bytes.iter().enumerate().take(m) {
                        s[i] = *b;
                    }
                    let n = a.len();
                    (vec![a, s], n)
                })
                .boxed(),
            Shape::Bool(k) => proptest::collection::vec(any::<u8>(), k)
                .prop_map(|v| (v.into_iter().map(|b| vec![b]).collect(), 1))
                .boxed(),
            Shape::Subpiece => (1usize..=16)
                .prop_flat_map(|n| (bytes(n), 0..n))
                .prop_flat_map(|(a, off)| {
                    let rest = a.len() - off;
                    (Just(a), Just(off), 1..=rest)
                })
                .prop_map(|(a, off, out)| (vec![a, vec![off as u8]], out))
                .boxed(),
            Shape::Effect => unreachable!(),
        }
    }

    fn check_against_reference(op: Opcode) {
        let mut runner = proptest::test_runner::TestRunner::new(ProptestConfig::with_cases(10_000));
        runner
            .run(&case_for(op), |(ins, out)| {
                let refs: Vec<&[u8]> = ins.iter().map(Vec::as_slice).collect();
                let got = eval_concrete(op, &refs, out);
                match reference(op, &ins, out) {
                    Some(expected) => prop_assert_eq!(got, Ok(expected)),
                    None => prop_assert_eq!(got, Err(EvalError::DivideByZero(op))),
                }
                Ok(())
            })
            .unwrap();
    }

    #[test]
    fn every_pure_opcode_agrees_with_bigint_reference() {
        for op in Opcode::ALL.iter().filter(|o| o.shape() != Shape::Effect) {
            check_against_reference(*op);
        }
    }

    proptest! {
        #[test]
        fn two_complement_is_subtraction_from_zero(n in sizes(), seed in any::<[u8; 16]>()) {
            let x = &seed[..n];
            let zero = vec![0u8; n];
            prop_assert_eq!(
                eval_concrete(Opcode::Int2Comp, &[x], n).unwrap(),
                eval_concrete(Opcode::IntSub, &[&zero, x], n).unwrap()
            );
        }

        #[test]
        fn sext_then_subpiece_is_identity(n in 1usize..16, extra in 1usize..16, seed in any::<[u8; 16]>()) {
            let out = (n + extra).min(16);
            prop_assume!(out > n);
            let x = &seed[..n];
            let wide = eval_concrete(Opcode::IntSExt, &[x], out).unwrap();
            let back = eval_concrete(Opcode::Subpiece, &[&wide, &[0]], n).unwrap();
            prop_assert_eq!(back, x.to_vec());
        }
    }
}

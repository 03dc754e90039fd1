//! Hash-consing-free bit-vector terms with simplifying constructors.
//!
//! Terms are immutable DAGs behind `Arc`; every constructor checks operand
//! sorts and folds constants eagerly, so a term over no variables is always
//! a single literal.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sort {
    Bool,
    Bv(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BvOp {
    Add,
    Sub,
    Mul,
    UDiv,
    SDiv,
    URem,
    SRem,
    And,
    Or,
    Xor,
    Shl,
    LShr,
    AShr,
}

impl BvOp {
    pub fn smt(self) -> &'static str {
        match self {
            BvOp::Add => "bvadd",
            BvOp::Sub => "bvsub",
            BvOp::Mul => "bvmul",
            BvOp::UDiv => "bvudiv",
            BvOp::SDiv => "bvsdiv",
            BvOp::URem => "bvurem",
            BvOp::SRem => "bvsrem",
            BvOp::And => "bvand",
            BvOp::Or => "bvor",
            BvOp::Xor => "bvxor",
            BvOp::Shl => "bvshl",
            BvOp::LShr => "bvlshr",
            BvOp::AShr => "bvashr",
        }
    }

    fn commutative(self) -> bool {
        matches!(self, BvOp::Add | BvOp::Mul | BvOp::And | BvOp::Or | BvOp::Xor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ult,
    Ule,
    Slt,
    Sle,
}

impl CmpOp {
    pub fn smt(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ult => "bvult",
            CmpOp::Ule => "bvule",
            CmpOp::Slt => "bvslt",
            CmpOp::Sle => "bvsle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoolOp {
    And,
    Or,
    Xor,
}

impl BoolOp {
    pub fn smt(self) -> &'static str {
        match self {
            BoolOp::And => "and",
            BoolOp::Or => "or",
            BoolOp::Xor => "xor",
        }
    }
}

#[derive(Debug, PartialEq, Eq)]
pub enum Node {
    Var(Arc<str>, u32),
    Const(u128, u32),
    Bool(bool),
    Bv(BvOp, Term, Term),
    BvNot(Term),
    BvNeg(Term),
    /// High part first, as in SMT-LIB.
    Concat(Term, Term),
    Extract(u32, u32, Term),
    ZeroExt(u32, Term),
    SignExt(u32, Term),
    Ite(Term, Term, Term),
    Cmp(CmpOp, Term, Term),
    Not(Term),
    Logic(BoolOp, Term, Term),
}

#[derive(Debug, PartialEq, Eq)]
struct Inner {
    node: Node,
    sort: Sort,
}

#[derive(Clone, PartialEq, Eq)]
pub struct Term(Arc<Inner>);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("variable {0} has no value")]
pub struct UnboundVar(pub String);

pub(crate) fn mask(width: u32) -> u128 {
    if width >= 128 {
        u128::MAX
    } else {
        (1u128 << width) - 1
    }
}

fn to_signed(v: u128, width: u32) -> i128 {
    let shift = 128 - width;
    ((v << shift) as i128) >> shift
}

/// SMT-LIB semantics of a bit-vector operation on `width`-bit values.
pub fn apply_bv(op: BvOp, a: u128, b: u128, width: u32) -> u128 {
    let m = mask(width);
    let (sa, sb) = (to_signed(a, width), to_signed(b, width));
    let r = match op {
        BvOp::Add => a.wrapping_add(b),
        BvOp::Sub => a.wrapping_sub(b),
        BvOp::Mul => a.wrapping_mul(b),
        BvOp::UDiv if b == 0 => m,
        BvOp::UDiv => a / b,
        BvOp::URem if b == 0 => a,
        BvOp::URem => a % b,
        BvOp::SDiv if b == 0 => {
            if sa < 0 {
                1
            } else {
                m
            }
        }
        BvOp::SDiv => sa.wrapping_div(sb) as u128,
        BvOp::SRem if b == 0 => a,
        BvOp::SRem => sa.wrapping_rem(sb) as u128,
        BvOp::And => a & b,
        BvOp::Or => a | b,
        BvOp::Xor => a ^ b,
        BvOp::Shl if b >= width as u128 => 0,
        BvOp::Shl => a << b,
        BvOp::LShr if b >= width as u128 => 0,
        BvOp::LShr => a >> b,
        BvOp::AShr => (sa >> b.min(width as u128 - 1) as u32) as u128,
    };
    r & m
}

pub fn apply_cmp(op: CmpOp, a: u128, b: u128, width: u32) -> bool {
    let (sa, sb) = (to_signed(a, width), to_signed(b, width));
    match op {
        CmpOp::Eq => a == b,
        CmpOp::Ult => a < b,
        CmpOp::Ule => a <= b,
        CmpOp::Slt => sa < sb,
        CmpOp::Sle => sa <= sb,
    }
}

impl Term {
    fn make(node: Node, sort: Sort) -> Term {
        Term(Arc::new(Inner { node, sort }))
    }

    pub fn node(&self) -> &Node {
        &self.0.node
    }

    pub fn sort(&self) -> Sort {
        self.0.sort
    }

    /// Bit width; panics on boolean terms.
    pub fn width(&self) -> u32 {
        match self.0.sort {
            Sort::Bv(w) => w,
            Sort::Bool => panic!("boolean term has no width: {self}"),
        }
    }

    pub fn is_bool(&self) -> bool {
        self.0.sort == Sort::Bool
    }

    pub fn same(&self, other: &Term) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    fn id(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    pub fn as_const(&self) -> Option<u128> {
        match self.node() {
            Node::Const(v, _) => Some(*v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self.node() {
            Node::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn children(&self) -> Vec<&Term> {
        match self.node() {
            Node::Var(..) | Node::Const(..) | Node::Bool(_) => vec![],
            Node::BvNot(a) | Node::BvNeg(a) | Node::Not(a) => vec![a],
            Node::Extract(_, _, a) | Node::ZeroExt(_, a) | Node::SignExt(_, a) => vec![a],
            Node::Bv(_, a, b) | Node::Concat(a, b) | Node::Cmp(_, a, b) | Node::Logic(_, a, b) => {
                vec![a, b]
            }
            Node::Ite(c, a, b) => vec![c, a, b],
        }
    }

    // ---- leaves ----

    pub fn var(name: &str, width: u32) -> Term {
        assert!((1..=128).contains(&width), "bad width {width}");
        Term::make(Node::Var(name.into(), width), Sort::Bv(width))
    }

    pub fn constant(value: u128, width: u32) -> Term {
        assert!((1..=128).contains(&width), "bad width {width}");
        Term::make(Node::Const(value & mask(width), width), Sort::Bv(width))
    }

    pub fn bool(b: bool) -> Term {
        Term::make(Node::Bool(b), Sort::Bool)
    }

    /// Little-endian byte sequence as a constant.
    pub fn from_le_bytes(bytes: &[u8]) -> Term {
        let mut v = 0u128;
        for (i, b) in bytes.iter().enumerate() {
            v |= (*b as u128) << (8 * i);
        }
        Term::constant(v, 8 * bytes.len() as u32)
    }

    // ---- bit-vector ops ----

    pub fn bv(op: BvOp, a: &Term, b: &Term) -> Term {
        let w = a.width();
        assert_eq!(w, b.width(), "{} width mismatch", op.smt());
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            return Term::constant(apply_bv(op, x, y, w), w);
        }
        let (a, b) = if op.commutative() && a.as_const().is_some() { (b, a) } else { (a, b) };
        if let Some(c) = b.as_const() {
            match op {
                BvOp::Add | BvOp::Sub | BvOp::Or | BvOp::Xor | BvOp::Shl | BvOp::LShr | BvOp::AShr
                    if c == 0 =>
                {
                    return a.clone()
                }
                BvOp::Mul | BvOp::UDiv | BvOp::SDiv if c == 1 => return a.clone(),
                BvOp::Mul | BvOp::And if c == 0 => return Term::constant(0, w),
                BvOp::And if c == mask(w) => return a.clone(),
                BvOp::Add => {
                    if let Node::Bv(BvOp::Add, x, y) = a.node() {
                        if let Some(d) = y.as_const() {
                            return Term::bv(BvOp::Add, x, &Term::constant(c.wrapping_add(d), w));
                        }
                    }
                }
                _ => {}
            }
        }
        Term::make(Node::Bv(op, a.clone(), b.clone()), Sort::Bv(w))
    }

    pub fn add(&self, o: &Term) -> Term {
        Term::bv(BvOp::Add, self, o)
    }

    pub fn sub(&self, o: &Term) -> Term {
        Term::bv(BvOp::Sub, self, o)
    }

    pub fn bvnot(&self) -> Term {
        let w = self.width();
        match self.node() {
            Node::Const(v, _) => Term::constant(!v, w),
            Node::BvNot(a) => a.clone(),
            _ => Term::make(Node::BvNot(self.clone()), Sort::Bv(w)),
        }
    }

    pub fn bvneg(&self) -> Term {
        let w = self.width();
        match self.node() {
            Node::Const(v, _) => Term::constant(v.wrapping_neg(), w),
            Node::BvNeg(a) => a.clone(),
            _ => Term::make(Node::BvNeg(self.clone()), Sort::Bv(w)),
        }
    }

    fn merge_adjacent(hi: &Term, lo: &Term) -> Option<Term> {
        match (hi.node(), lo.node()) {
            (Node::Const(a, wa), Node::Const(b, wb)) if wa + wb <= 128 => {
                Some(Term::constant((a << wb) | b, wa + wb))
            }
            (Node::Extract(h1, l1, t1), Node::Extract(h2, l2, t2)) if t1.same(t2) && *l1 == h2 + 1 => {
                Some(Term::extract(t1, *h1, *l2))
            }
            _ => None,
        }
    }

    pub fn concat(hi: &Term, lo: &Term) -> Term {
        let (wh, wl) = (hi.width(), lo.width());
        assert!(wh + wl <= 128, "concat wider than 128 bits");
        if let Some(m) = Term::merge_adjacent(hi, lo) {
            return m;
        }
        if let Node::Concat(a, b) = lo.node() {
            if let Some(m) = Term::merge_adjacent(hi, a) {
                return Term::concat(&m, b);
            }
        }
        if hi.as_const() == Some(0) {
            return Term::zext(lo, wh);
        }
        Term::make(Node::Concat(hi.clone(), lo.clone()), Sort::Bv(wh + wl))
    }

    pub fn extract(t: &Term, hi: u32, lo: u32) -> Term {
        let w = t.width();
        assert!(lo <= hi && hi < w, "extract [{hi}:{lo}] of {w} bits");
        if lo == 0 && hi == w - 1 {
            return t.clone();
        }
        let out = hi - lo + 1;
        match t.node() {
            Node::Const(v, _) => return Term::constant(v >> lo, out),
            Node::Extract(_, l1, inner) => return Term::extract(inner, hi + l1, lo + l1),
            Node::Concat(a, b) => {
                let wb = b.width();
                if hi < wb {
                    return Term::extract(b, hi, lo);
                }
                if lo >= wb {
                    return Term::extract(a, hi - wb, lo - wb);
                }
            }
            Node::ZeroExt(_, inner) => {
                let wi = inner.width();
                if hi < wi {
                    return Term::extract(inner, hi, lo);
                }
                if lo >= wi {
                    return Term::constant(0, out);
                }
            }
            Node::SignExt(_, inner) if hi < inner.width() => return Term::extract(inner, hi, lo),
            Node::Ite(c, a, b) if a.as_const().is_some() && b.as_const().is_some() => {
                return Term::ite(c, &Term::extract(a, hi, lo), &Term::extract(b, hi, lo));
            }
            _ => {}
        }
        Term::make(Node::Extract(hi, lo, t.clone()), Sort::Bv(out))
    }

    pub fn zext(t: &Term, by: u32) -> Term {
        if by == 0 {
            return t.clone();
        }
        let w = t.width() + by;
        assert!(w <= 128, "extension wider than 128 bits");
        match t.node() {
            Node::Const(v, _) => Term::constant(*v, w),
            Node::ZeroExt(b, inner) => Term::zext(inner, b + by),
            _ => Term::make(Node::ZeroExt(by, t.clone()), Sort::Bv(w)),
        }
    }

    pub fn sext(t: &Term, by: u32) -> Term {
        if by == 0 {
            return t.clone();
        }
        let w = t.width() + by;
        assert!(w <= 128, "extension wider than 128 bits");
        match t.node() {
            Node::Const(v, wt) => Term::constant(to_signed(*v, *wt) as u128, w),
            _ => Term::make(Node::SignExt(by, t.clone()), Sort::Bv(w)),
        }
    }

    pub fn ite(c: &Term, a: &Term, b: &Term) -> Term {
        assert!(c.is_bool(), "ite condition must be boolean");
        assert_eq!(a.sort(), b.sort(), "ite branches differ in sort");
        if let Some(v) = c.as_bool() {
            return if v { a.clone() } else { b.clone() };
        }
        if a.same(b) || (a.as_const().is_some() && a.as_const() == b.as_const()) {
            return a.clone();
        }
        if let Node::Not(inner) = c.node() {
            return Term::ite(inner, b, a);
        }
        Term::make(Node::Ite(c.clone(), a.clone(), b.clone()), a.sort())
    }

    // ---- predicates ----

    pub fn cmp(op: CmpOp, a: &Term, b: &Term) -> Term {
        let w = a.width();
        assert_eq!(w, b.width(), "{} width mismatch", op.smt());
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            return Term::bool(apply_cmp(op, x, y, w));
        }
        if a.same(b) {
            return Term::bool(matches!(op, CmpOp::Eq | CmpOp::Ule | CmpOp::Sle));
        }
        match op {
            CmpOp::Eq => {
                let (x, k) = if a.as_const().is_some() { (b, a) } else { (a, b) };
                if let (Some(k), Node::Ite(c, t, e)) = (k.as_const(), x.node()) {
                    if let (Some(t), Some(e)) = (t.as_const(), e.as_const()) {
                        return match (k == t, k == e) {
                            (true, true) => Term::bool(true),
                            (true, false) => c.clone(),
                            (false, true) => c.not(),
                            (false, false) => Term::bool(false),
                        };
                    }
                }
                if let (Some(k), Node::ZeroExt(_, inner)) = (k.as_const(), x.node()) {
                    let wi = inner.width();
                    return if k >> wi == 0 {
                        Term::cmp(CmpOp::Eq, inner, &Term::constant(k, wi))
                    } else {
                        Term::bool(false)
                    };
                }
                Term::make(Node::Cmp(op, x.clone(), k.clone()), Sort::Bool)
            }
            CmpOp::Ult if b.as_const() == Some(0) => Term::bool(false),
            CmpOp::Ule if a.as_const() == Some(0) => Term::bool(true),
            CmpOp::Ule if b.as_const() == Some(mask(w)) => Term::bool(true),
            _ => Term::make(Node::Cmp(op, a.clone(), b.clone()), Sort::Bool),
        }
    }

    /// Comparison node exactly as given, skipping every rewrite.
    pub fn cmp_unsimplified(op: CmpOp, a: &Term, b: &Term) -> Term {
        assert_eq!(a.width(), b.width(), "{} width mismatch", op.smt());
        Term::make(Node::Cmp(op, a.clone(), b.clone()), Sort::Bool)
    }

    pub fn eq(&self, o: &Term) -> Term {
        Term::cmp(CmpOp::Eq, self, o)
    }

    pub fn ne(&self, o: &Term) -> Term {
        self.eq(o).not()
    }

    pub fn ult(&self, o: &Term) -> Term {
        Term::cmp(CmpOp::Ult, self, o)
    }

    pub fn ule(&self, o: &Term) -> Term {
        Term::cmp(CmpOp::Ule, self, o)
    }

    pub fn uge(&self, o: &Term) -> Term {
        Term::cmp(CmpOp::Ule, o, self)
    }

    pub fn not(&self) -> Term {
        assert!(self.is_bool(), "not of a bit-vector");
        match self.node() {
            Node::Bool(b) => Term::bool(!b),
            Node::Not(a) => a.clone(),
            _ => Term::make(Node::Not(self.clone()), Sort::Bool),
        }
    }

    pub fn logic(op: BoolOp, a: &Term, b: &Term) -> Term {
        assert!(a.is_bool() && b.is_bool(), "{} of bit-vectors", op.smt());
        match (op, a.as_bool(), b.as_bool()) {
            (_, Some(x), Some(y)) => Term::bool(match op {
                BoolOp::And => x && y,
                BoolOp::Or => x || y,
                BoolOp::Xor => x != y,
            }),
            (BoolOp::And, Some(true), _) | (BoolOp::Or, Some(false), _) | (BoolOp::Xor, Some(false), _) => {
                b.clone()
            }
            (BoolOp::And, _, Some(true)) | (BoolOp::Or, _, Some(false)) | (BoolOp::Xor, _, Some(false)) => {
                a.clone()
            }
            (BoolOp::And, Some(false), _) | (BoolOp::And, _, Some(false)) => Term::bool(false),
            (BoolOp::Or, Some(true), _) | (BoolOp::Or, _, Some(true)) => Term::bool(true),
            (BoolOp::Xor, Some(true), _) => b.not(),
            (BoolOp::Xor, _, Some(true)) => a.not(),
            _ => Term::make(Node::Logic(op, a.clone(), b.clone()), Sort::Bool),
        }
    }

    pub fn and(&self, o: &Term) -> Term {
        Term::logic(BoolOp::And, self, o)
    }

    pub fn or(&self, o: &Term) -> Term {
        Term::logic(BoolOp::Or, self, o)
    }

    /// `width`-bit flag that is 1 when `c` holds and 0 otherwise.
    pub fn flag(c: &Term, width: u32) -> Term {
        Term::ite(c, &Term::constant(1, width), &Term::constant(0, width))
    }

    /// A bit-vector is true iff non-zero; booleans pass through.
    pub fn truthy(&self) -> Term {
        if self.is_bool() {
            self.clone()
        } else {
            self.ne(&Term::constant(0, self.width()))
        }
    }

    // ---- queries ----

    /// Visits each distinct node once, children before parents.
    pub fn postorder(&self) -> Vec<Term> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        let mut stack: Vec<(Term, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                out.push(t);
                continue;
            }
            if !seen.insert(t.id()) {
                continue;
            }
            stack.push((t.clone(), true));
            for c in t.children().into_iter().rev() {
                if !seen.contains(&c.id()) {
                    stack.push((c.clone(), false));
                }
            }
        }
        out
    }

    /// Free variables with their widths.
    pub fn vars(&self) -> BTreeMap<String, u32> {
        self.postorder()
            .into_iter()
            .filter_map(|t| match t.node() {
                Node::Var(n, w) => Some((n.to_string(), *w)),
                _ => None,
            })
            .collect()
    }

    pub fn has_vars(&self) -> bool {
        !self.vars().is_empty()
    }

    /// Number of distinct nodes.
    pub fn dag_size(&self) -> usize {
        self.postorder().len()
    }

    /// Evaluates under `env`; booleans come back as 0 or 1.
    pub fn eval(&self, env: &dyn Fn(&str) -> Option<u128>) -> Result<u128, UnboundVar> {
        let mut memo: HashMap<usize, u128> = HashMap::new();
        for t in self.postorder() {
            let get = |c: &Term| memo[&c.id()];
            let v = match t.node() {
                Node::Var(n, w) => env(n).ok_or_else(|| UnboundVar(n.to_string()))? & mask(*w),
                Node::Const(v, _) => *v,
                Node::Bool(b) => *b as u128,
                Node::Bv(op, a, b) => apply_bv(*op, get(a), get(b), a.width()),
                Node::BvNot(a) => !get(a) & mask(a.width()),
                Node::BvNeg(a) => get(a).wrapping_neg() & mask(a.width()),
                Node::Concat(a, b) => (get(a) << b.width()) | get(b),
                Node::Extract(hi, lo, a) => (get(a) >> lo) & mask(hi - lo + 1),
                Node::ZeroExt(_, a) => get(a),
                Node::SignExt(by, a) => to_signed(get(a), a.width()) as u128 & mask(a.width() + by),
                Node::Ite(c, a, b) => {
                    if get(c) != 0 {
                        get(a)
                    } else {
                        get(b)
                    }
                }
                Node::Cmp(op, a, b) => apply_cmp(*op, get(a), get(b), a.width()) as u128,
                Node::Not(a) => (get(a) == 0) as u128,
                Node::Logic(op, a, b) => {
                    let (x, y) = (get(a) != 0, get(b) != 0);
                    (match op {
                        BoolOp::And => x && y,
                        BoolOp::Or => x || y,
                        BoolOp::Xor => x != y,
                    }) as u128
                }
            };
            memo.insert(t.id(), v);
        }
        Ok(memo[&self.id()])
    }

    pub fn eval_map(&self, model: &BTreeMap<String, u128>) -> Result<u128, UnboundVar> {
        self.eval(&|n| model.get(n).copied())
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::smt::render(self))
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Term({self})")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn x8() -> Term {
        Term::var("x", 8)
    }

    #[test]
    fn constants_fold() {
        let t = Term::constant(2, 8).add(&Term::constant(3, 8));
        assert_eq!(t.as_const(), Some(5));
        assert!(!t.has_vars());
    }

    #[test]
    fn flag_booleanization_collapses() {
        let c = x8().eq(&Term::constant(5, 8));
        let f = Term::flag(&c, 8);
        assert!(f.truthy().same(&c) || f.truthy() == c);
        assert_eq!(f.eq(&Term::constant(0, 8)), c.not());
        assert_eq!(c.not().not(), c);
    }

    #[test]
    fn byte_split_and_join_is_identity() {
        let v = Term::var("v", 32);
        let bytes: Vec<Term> = (0..4).map(|i| Term::extract(&v, 8 * i + 7, 8 * i)).collect();
        let mut acc = bytes[0].clone();
        for b in &bytes[1..] {
            acc = Term::concat(b, &acc);
        }
        assert!(acc.same(&v));
    }

    #[test]
    fn zero_padding_becomes_zext() {
        let t = Term::concat(&Term::constant(0, 24), &x8());
        assert!(matches!(t.node(), Node::ZeroExt(24, _)));
        assert!(Term::extract(&t, 7, 0).same(&Term::extract(&t, 7, 0)));
        assert_eq!(Term::extract(&t, 31, 8).as_const(), Some(0));
    }

    #[test]
    #[should_panic(expected = "width mismatch")]
    fn widths_are_checked() {
        let _ = Term::var("a", 8).add(&Term::var("b", 16));
    }

    #[test]
    fn smt_division_by_zero_semantics() {
        assert_eq!(apply_bv(BvOp::UDiv, 7, 0, 8), 0xff);
        assert_eq!(apply_bv(BvOp::URem, 7, 0, 8), 7);
        assert_eq!(apply_bv(BvOp::SDiv, 0xf9, 0, 8), 1);
        assert_eq!(apply_bv(BvOp::SDiv, 7, 0, 8), 0xff);
        assert_eq!(apply_bv(BvOp::SRem, 0xf9, 0, 8), 0xf9);
    }

    #[test]
    fn eval_with_shared_subterms_is_linear() {
        let mut t = x8();
        for _ in 0..200 {
            let c = t.ult(&Term::constant(100, 8));
            t = Term::ite(&c, &t.add(&Term::constant(1, 8)), &t.sub(&Term::constant(1, 8)));
        }
        assert!(t.dag_size() < 2000);
        assert!(t.eval(&|_| Some(3)).is_ok());
    }

    #[test]
    fn unbound_variables_are_reported() {
        assert_eq!(x8().eval(&|_| None), Err(UnboundVar("x".into())));
    }

    /// Unsimplified expression trees over two 8-bit variables.
    #[derive(Debug, Clone)]
    enum Expr {
        Leaf(Option<&'static str>, u8),
        Bin(usize, Box<Expr>, Box<Expr>),
        IteCmp(usize, Box<Expr>, Box<Expr>, Box<Expr>),
        Wide(Box<Expr>, Box<Expr>),
        NegExt(Box<Expr>),
        FlagTest(usize, Box<Expr>, Box<Expr>, u8),
    }

    const BV_OPS: [BvOp; 13] = [
        BvOp::Add, BvOp::Sub, BvOp::Mul, BvOp::UDiv, BvOp::SDiv, BvOp::URem, BvOp::SRem,
        BvOp::And, BvOp::Or, BvOp::Xor, BvOp::Shl, BvOp::LShr, BvOp::AShr,
    ];
    const CMP_OPS: [CmpOp; 5] = [CmpOp::Eq, CmpOp::Ult, CmpOp::Ule, CmpOp::Slt, CmpOp::Sle];

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = (prop_oneof![Just(None), Just(Some("a")), Just(Some("b"))], any::<u8>())
            .prop_map(|(n, v)| Expr::Leaf(n, v));
        leaf.prop_recursive(4, 32, 3, |inner| {
            let b = || inner.clone().prop_map(Box::new);
            prop_oneof![
                (0usize..13, b(), b()).prop_map(|(k, x, y)| Expr::Bin(k, x, y)),
                (0usize..5, b(), b(), b()).prop_map(|(k, x, y, z)| Expr::IteCmp(k, x, y, z)),
                (b(), b()).prop_map(|(x, y)| Expr::Wide(x, y)),
                b().prop_map(Expr::NegExt),
                (0usize..5, b(), b(), 0u8..3).prop_map(|(k, x, y, t)| Expr::FlagTest(k, x, y, t)),
            ]
        })
    }

    fn build(e: &Expr, subst: Option<(u8, u8)>) -> Term {
        let r = |x: &Expr| build(x, subst);
        match e {
            Expr::Leaf(None, v) => Term::constant(*v as u128, 8),
            Expr::Leaf(Some(n), _) => match subst {
                Some((a, b)) => Term::constant(if *n == "a" { a } else { b } as u128, 8),
                None => Term::var(n, 8),
            },
            Expr::Bin(k, x, y) => Term::bv(BV_OPS[*k], &r(x), &r(y)),
            Expr::IteCmp(k, x, y, z) => Term::ite(&Term::cmp(CMP_OPS[*k], &r(x), &r(y)), &r(z), &r(x).bvnot()),
            Expr::Wide(x, y) => {
                let wide = Term::concat(&r(x), &r(y));
                Term::extract(&Term::bv(BvOp::Add, &wide, &Term::sext(&r(y), 8)), 11, 4)
            }
            Expr::NegExt(x) => Term::extract(&Term::zext(&r(x).bvneg(), 8), 7, 0),
            Expr::FlagTest(k, x, y, t) => {
                let f = Term::flag(&Term::cmp(CMP_OPS[*k], &r(x), &r(y)), 8);
                Term::flag(&f.eq(&Term::constant(*t as u128, 8)), 8)
            }
        }
    }

    /// Direct evaluation of the expression tree, independent of `Term`.
    fn reference(e: &Expr, a: u8, b: u8) -> u128 {
        let r = |x: &Expr| reference(x, a, b);
        let cmp = |k: usize, x: u128, y: u128| {
            let (sx, sy) = (x as u8 as i8, y as u8 as i8);
            match k {
                0 => x == y,
                1 => x < y,
                2 => x <= y,
                3 => sx < sy,
                _ => sx <= sy,
            }
        };
        match e {
            Expr::Leaf(None, v) => *v as u128,
            Expr::Leaf(Some(n), _) => if *n == "a" { a as u128 } else { b as u128 },
            Expr::Bin(k, x, y) => apply_bv(BV_OPS[*k], r(x), r(y), 8),
            Expr::IteCmp(k, x, y, z) => if cmp(*k, r(x), r(y)) { r(z) } else { !r(x) & 0xff },
            Expr::Wide(x, y) => {
                let wide = (r(x) << 8) | r(y);
                let ext = (r(y) as u8 as i8 as i16 as u16) as u128;
                ((wide + ext) & 0xffff) >> 4 & 0xff
            }
            Expr::NegExt(x) => r(x).wrapping_neg() & 0xff,
            Expr::FlagTest(k, x, y, t) => (cmp(*k, r(x), r(y)) as u128 == *t as u128) as u128,
        }
    }

    proptest! {
        #[test]
        fn simplification_preserves_value(e in arb_expr(), a in any::<u8>(), b in any::<u8>()) {
            let expected = reference(&e, a, b);
            let symbolic = build(&e, None);
            let got = symbolic.eval(&|n| Some(if n == "a" { a as u128 } else { b as u128 })).unwrap();
            prop_assert_eq!(got, expected);
            prop_assert_eq!(build(&e, Some((a, b))).as_const(), Some(expected));
        }

        #[test]
        fn apply_bv_matches_machine_semantics_for_nonzero_divisors(
            a in any::<u16>(), b in 1u16.., k in 0usize..13,
        ) {
            use crate::ir::{eval_concrete, Opcode};
            let pairs = [
                (BvOp::Add, Opcode::IntAdd), (BvOp::Sub, Opcode::IntSub), (BvOp::Mul, Opcode::IntMult),
                (BvOp::UDiv, Opcode::IntDiv), (BvOp::SDiv, Opcode::IntSDiv), (BvOp::URem, Opcode::IntRem),
                (BvOp::SRem, Opcode::IntSRem), (BvOp::And, Opcode::IntAnd), (BvOp::Or, Opcode::IntOr),
                (BvOp::Xor, Opcode::IntXor), (BvOp::Shl, Opcode::IntLeft), (BvOp::LShr, Opcode::IntRight),
                (BvOp::AShr, Opcode::IntSRight),
            ];
            let (bv, op) = pairs[k];
            let machine = eval_concrete(op, &[&a.to_le_bytes(), &b.to_le_bytes()], 2).unwrap();
            let got = apply_bv(bv, a as u128, b as u128, 16) as u16;
            prop_assert_eq!(got.to_le_bytes().to_vec(), machine);
        }
    }
}

//! Basic-block control-flow graph, the panic-reachability set and the
//! bounded forward pre-check used before any solver query.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;

use crate::ir::{is_internal_pcode_target, AddressSpace, Opcode, PcodeOp, Program};
use crate::loader::internal_target_index;

pub type BlockId = usize;

/// Default node budget of [`ast_precheck`].
pub const DEFAULT_AST_BLOCKS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasicBlock {
    pub id: BlockId,
    pub start_addr: u64,
    pub instr_addrs: Vec<u64>,
    pub successors: Vec<BlockId>,
    /// Ends in BRANCHIND or CALLIND: control may go anywhere.
    pub has_indirect_exit: bool,
    /// Static CALL targets, including calls into the panic set.
    pub calls: Vec<u64>,
    /// Static RAM targets of BRANCH/CBRANCH.
    pub branch_targets: Vec<u64>,
}

impl BasicBlock {
    /// Calls or branches into `panic_set`, or contains one of its addresses.
    pub fn touches_panic(&self, panic_set: &BTreeSet<u64>) -> bool {
        self.calls
            .iter()
            .chain(&self.branch_targets)
            .chain(&self.instr_addrs)
            .any(|a| panic_set.contains(a))
    }
}

#[derive(Debug, Clone)]
pub struct Cfg {
    pub blocks: Vec<BasicBlock>,
    block_of: HashMap<u64, BlockId>,
    panic_set: BTreeSet<u64>,
}

impl Cfg {
    /// Block holding the instruction at `addr`.
    pub fn block_of(&self, addr: u64) -> Option<BlockId> {
        self.block_of.get(&addr).copied()
    }

    pub fn panic_set(&self) -> &BTreeSet<u64> {
        &self.panic_set
    }

    pub fn edge_count(&self) -> usize {
        self.blocks.iter().map(|b| b.successors.len()).sum()
    }

    fn predecessors(&self) -> Vec<Vec<BlockId>> {
        let mut preds = vec![Vec::new(); self.blocks.len()];
        for b in &self.blocks {
            for s in &b.successors {
                preds[*s].push(b.id);
            }
        }
        preds
    }
}

struct InstrInfo {
    terminator: bool,
    falls_through: bool,
    indirect: bool,
    calls: Vec<u64>,
    branches: Vec<u64>,
    returns: bool,
}

fn classify(ops: &[PcodeOp]) -> InstrInfo {
    let mut info = InstrInfo {
        terminator: false,
        falls_through: true,
        indirect: false,
        calls: Vec::new(),
        branches: Vec::new(),
        returns: false,
    };
    let mut jumps_past_end = false;
    for op in ops {
        match op.opcode {
            Opcode::Branch | Opcode::CBranch => {
                let target = op.inputs[0];
                if is_internal_pcode_target(&target) {
                    if internal_target_index(op, &target) == Some(ops.len()) {
                        jumps_past_end = true;
                    }
                } else if target.space == AddressSpace::Ram {
                    info.terminator = true;
                    info.branches.push(target.offset);
                }
            }
            Opcode::Call => {
                info.terminator = true;
                if let Some(t) = op.inputs.first().filter(|t| t.space == AddressSpace::Ram) {
                    info.calls.push(t.offset);
                }
            }
            Opcode::CallInd | Opcode::BranchInd => {
                info.terminator = true;
                info.indirect = true;
            }
            Opcode::Return => {
                info.terminator = true;
                info.returns = true;
            }
            _ => {}
        }
    }
    if let Some(last) = ops.last() {
        let unconditional = match last.opcode {
            Opcode::Branch => !is_internal_pcode_target(&last.inputs[0]),
            Opcode::Return | Opcode::BranchInd => true,
            _ => false,
        };
        info.falls_through = !unconditional || jumps_past_end;
    }
    info
}

/// Partitions every instruction of `program` into basic blocks.
///
/// Leaders are entry points, signature entries, panic addresses with bodies,
/// static branch and call targets, and instructions after a terminator.
/// Const-space branches stay inside their instruction and never split blocks.
/// Calls add an edge to the callee and a fall-through edge; RETURN adds edges
/// to the continuation of every static non-panic call site and of every
/// indirect call site.
pub fn build_cfg(program: &Program) -> Cfg {
    let addrs: Vec<u64> = program.instructions.keys().copied().collect();
    let infos: HashMap<u64, InstrInfo> = program
        .instructions
        .iter()
        .map(|(a, ops)| (*a, classify(ops)))
        .collect();

    let mut leaders: BTreeSet<u64> = BTreeSet::new();
    if let Some(first) = addrs.first() {
        leaders.insert(*first);
    }
    leaders.extend(program.entry_points.values());
    leaders.extend(program.signatures.values().map(|s| s.entry));
    leaders.extend(program.panic_set.iter());
    for (i, a) in addrs.iter().enumerate() {
        let info = &infos[a];
        leaders.extend(info.branches.iter().chain(&info.calls));
        if info.terminator {
            if let Some(next) = addrs.get(i + 1) {
                leaders.insert(*next);
            }
        }
    }
    leaders.retain(|a| program.instructions.contains_key(a));

    let mut blocks: Vec<BasicBlock> = Vec::new();
    let mut block_of = HashMap::new();
    for a in &addrs {
        if leaders.contains(a) || blocks.is_empty() {
            blocks.push(BasicBlock {
                id: blocks.len(),
                start_addr: *a,
                instr_addrs: Vec::new(),
                successors: Vec::new(),
                has_indirect_exit: false,
                calls: Vec::new(),
                branch_targets: Vec::new(),
            });
        }
        let b = blocks.last_mut().unwrap();
        b.instr_addrs.push(*a);
        block_of.insert(*a, b.id);
    }

    // continuations a RETURN may resume at
    let mut continuations = BTreeSet::new();
    for (i, a) in addrs.iter().enumerate() {
        let info = &infos[a];
        let returning_call = info.calls.iter().any(|c| !program.is_panic(*c))
            || program.instructions[a].iter().any(|op| op.opcode == Opcode::CallInd);
        if returning_call {
            if let Some(next) = addrs.get(i + 1) {
                continuations.insert(block_of[next]);
            }
        }
    }

    for b in &mut blocks {
        let last = *b.instr_addrs.last().unwrap();
        let mut succ = BTreeSet::new();
        for a in &b.instr_addrs {
            let info = &infos[a];
            b.calls.extend(&info.calls);
            b.branch_targets.extend(&info.branches);
            b.has_indirect_exit |= info.indirect;
        }
        for t in b.calls.iter().chain(&b.branch_targets) {
            if let Some(id) = block_of.get(t) {
                succ.insert(*id);
            }
        }
        let info = &infos[&last];
        if info.falls_through {
            if let Some(next) = program.next_instruction(last) {
                succ.insert(block_of[&next]);
            }
        }
        if info.returns {
            succ.extend(&continuations);
        }
        b.successors = succ.into_iter().collect();
    }

    Cfg {
        blocks,
        block_of,
        panic_set: program.panic_set.clone(),
    }
}

/// Blocks from which the panic set may be reached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReachSet {
    members: Vec<bool>,
}

impl ReachSet {
    pub fn contains(&self, id: BlockId) -> bool {
        self.members.get(id).copied().unwrap_or(false)
    }

    pub fn contains_addr(&self, cfg: &Cfg, addr: u64) -> bool {
        cfg.block_of(addr).is_some_and(|id| self.contains(id))
    }

    pub fn members(&self) -> BTreeSet<BlockId> {
        self.members
            .iter()
            .enumerate()
            .filter(|(_, m)| **m)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.members.iter().filter(|m| **m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_subset(&self, other: &ReachSet) -> bool {
        self.members
            .iter()
            .enumerate()
            .all(|(i, m)| !*m || other.contains(i))
    }
}

/// Reverse-BFS fixpoint from blocks that touch `panic_set` and from blocks
/// with an indirect exit, which are assumed to reach it.
pub fn compute_panic_reach(cfg: &Cfg, panic_set: &BTreeSet<u64>) -> ReachSet {
    let preds = cfg.predecessors();
    let mut members = vec![false; cfg.blocks.len()];
    let mut queue = VecDeque::new();
    for b in &cfg.blocks {
        if b.has_indirect_exit || b.touches_panic(panic_set) {
            members[b.id] = true;
            queue.push_back(b.id);
        }
    }
    while let Some(id) = queue.pop_front() {
        for p in &preds[id] {
            if !members[*p] {
                members[*p] = true;
                queue.push_back(*p);
            }
        }
    }
    ReachSet { members }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AstVerdict {
    FoundPanic,
    NotFound,
}

/// Breadth-first search over at most `max_blocks` distinct blocks from the
/// block holding `start_addr`, looking for one that touches the panic set.
pub fn ast_precheck(cfg: &Cfg, start_addr: u64, max_blocks: usize) -> AstVerdict {
    if cfg.panic_set.contains(&start_addr) && max_blocks > 0 {
        return AstVerdict::FoundPanic;
    }
    let Some(start) = cfg.block_of(start_addr) else {
        return AstVerdict::NotFound;
    };
    let mut seen = vec![false; cfg.blocks.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    let mut visited = 0;
    while let Some(id) = queue.pop_front() {
        if visited >= max_blocks {
            break;
        }
        visited += 1;
        let block = &cfg.blocks[id];
        if block.touches_panic(&cfg.panic_set) {
            return AstVerdict::FoundPanic;
        }
        for s in &block.successors {
            if !seen[*s] {
                seen[*s] = true;
                queue.push_back(*s);
            }
        }
    }
    AstVerdict::NotFound
}

/// One line per block: `B<id> start=0xADDR succ=[ids] reach=<0|1>`.
pub fn dump(cfg: &Cfg, reach: &ReachSet) -> String {
    let mut out = String::new();
    for b in &cfg.blocks {
        let succ: Vec<String> = b.successors.iter().map(ToString::to_string).collect();
        let _ = writeln!(
            out,
            "B{} start={:#x} succ=[{}] reach={}",
            b.id,
            b.start_addr,
            succ.join(","),
            reach.contains(b.id) as u8
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loader::parse_program;
    use proptest::prelude::*;

    fn program(src: &str) -> Program {
        parse_program(src).unwrap_or_else(|d| panic!("{d:?}")).program
    }

    fn analyse(src: &str) -> (Program, Cfg, ReachSet) {
        let p = program(src);
        let cfg = build_cfg(&p);
        let r = compute_panic_reach(&cfg, &p.panic_set);
        (p, cfg, r)
    }

    #[test]
    fn straight_line_is_one_block() {
        let src = ".code\n0x1000: COPY reg:0x0:1 -> reg:0x1:1\n0x1004: COPY reg:0x1:1 -> reg:0x2:1\n0x1008: COPY reg:0x2:1 -> reg:0x3:1\n";
        let cfg = build_cfg(&program(src));
        assert_eq!(cfg.blocks.len(), 1);
        assert!(cfg.blocks[0].successors.is_empty());
        assert_eq!(cfg.blocks[0].instr_addrs.len(), 3);
    }

    #[test]
    fn cbranch_with_fallthrough_makes_three_blocks() {
        let src = "\
.code
0x1000: CBRANCH ram:0x1008:8 reg:0x0:1
0x1004: RETURN
0x1008: RETURN
";
        let cfg = build_cfg(&program(src));
        assert_eq!(cfg.blocks.len(), 3);
        assert_eq!(cfg.blocks[0].successors, vec![1, 2]);
    }

    #[test]
    fn internal_branches_do_not_split_blocks() {
        let src = "\
.code
0x1000: CBRANCH const:0x2:8 reg:0x0:1
        COPY reg:0x1:1 -> reg:0x2:1
        COPY reg:0x2:1 -> reg:0x3:1
0x1004: RETURN
";
        let cfg = build_cfg(&program(src));
        assert_eq!(cfg.blocks.len(), 1);
    }

    #[test]
    fn chain_closure() {
        let src = "\
.panic 0x9000
.code
0x1000: BRANCH ram:0x1010:8
0x1010: BRANCH ram:0x1020:8
0x1020: CALL ram:0x9000:8
";
        let (_, cfg, r) = analyse(src);
        assert_eq!(cfg.blocks.len(), 3);
        assert_eq!(r.members(), BTreeSet::from([0, 1, 2]));
    }

    #[test]
    fn diamond_excludes_the_safe_arm() {
        // A -> {B, C}; B panics, C -> D; D returns.
        let src = "\
.panic 0x9000
.code
0x1000: CBRANCH ram:0x1010:8 reg:0x0:1
0x1004: BRANCH ram:0x1020:8
0x1010: CALL ram:0x9000:8
0x1020: RETURN
";
        let (_, cfg, r) = analyse(src);
        assert_eq!(cfg.blocks.len(), 4);
        // Oracle: enumerate every path of the 4-block graph from each block.
        let mut oracle = BTreeSet::new();
        fn paths(cfg: &Cfg, at: BlockId, seen: &mut Vec<BlockId>, hit: &mut bool, p: &BTreeSet<u64>) {
            if cfg.blocks[at].touches_panic(p) {
                *hit = true;
            }
            for s in &cfg.blocks[at].successors {
                if !seen.contains(s) {
                    seen.push(*s);
                    paths(cfg, *s, seen, hit, p);
                    seen.pop();
                }
            }
        }
        for b in 0..4 {
            let mut hit = false;
            paths(&cfg, b, &mut vec![b], &mut hit, cfg.panic_set());
            if hit {
                oracle.insert(b);
            }
        }
        assert_eq!(oracle, BTreeSet::from([0, 2]));
        assert_eq!(r.members(), oracle);
        assert!(!r.contains(cfg.block_of(0x1004).unwrap()));
    }

    #[test]
    fn indirect_exits_are_conservatively_reaching() {
        let src = "\
.code
0x1000: BRANCH ram:0x1010:8
0x1010: BRANCHIND reg:0x0:8
0x1020: RETURN
";
        let (_, cfg, r) = analyse(src);
        assert!(r.contains(cfg.block_of(0x1000).unwrap()));
        assert!(r.contains(cfg.block_of(0x1010).unwrap()));
        assert!(!r.contains(cfg.block_of(0x1020).unwrap()));
    }

    #[test]
    fn empty_panic_set_without_indirect_exits_is_empty() {
        let (_, _, r) = analyse(".code\n0x1000: CBRANCH ram:0x1000:8 reg:0x0:1\n0x1004: RETURN\n");
        assert!(r.is_empty());
    }

    #[test]
    fn return_resumes_after_static_calls() {
        // main calls f, then panics after f returns: f's body reaches the panic.
        let src = "\
.panic 0x9000
.code
0x1000: CALL ram:0x2000:8
0x1004: CALL ram:0x9000:8
0x2000: CBRANCH ram:0x2008:8 reg:0x0:1
0x2004: RETURN
0x2008: RETURN
";
        let (_, cfg, r) = analyse(src);
        for a in [0x2000, 0x2004, 0x2008] {
            assert!(r.contains_addr(&cfg, a), "{a:#x}");
        }
    }

    #[test]
    fn panic_calls_do_not_create_resume_edges() {
        let src = "\
.panic 0x9000
.code
0x1000: CBRANCH ram:0x1008:8 reg:0x0:1
0x1004: CALL ram:0x9000:8
0x1008: RETURN
";
        let (_, cfg, r) = analyse(src);
        assert!(!r.contains_addr(&cfg, 0x1008));
    }

    fn chain(n: usize, panic_at: usize) -> String {
        let mut s = String::from(".panic 0x9000\n.code\n");
        for i in 0..n {
            let addr = 0x1000 + 0x10 * i as u64;
            if i == panic_at {
                s += &format!("{addr:#x}: CALL ram:0x9000:8\n");
            } else if i + 1 < n {
                s += &format!("{addr:#x}: BRANCH ram:{:#x}:8\n", addr + 0x10);
            } else {
                s += &format!("{addr:#x}: RETURN\n");
            }
        }
        s
    }

    #[test]
    fn precheck_depth_zero_hit() {
        let cfg = build_cfg(&program(&chain(3, 0)));
        assert_eq!(ast_precheck(&cfg, 0x1000, 10), AstVerdict::FoundPanic);
    }

    #[test]
    fn precheck_respects_the_block_budget() {
        let cfg = build_cfg(&program(&chain(12, 11)));
        assert_eq!(cfg.blocks.len(), 12);
        assert_eq!(ast_precheck(&cfg, 0x1000, 10), AstVerdict::NotFound);
        assert_eq!(ast_precheck(&cfg, 0x1000, 12), AstVerdict::FoundPanic);
        let cfg = build_cfg(&program(&chain(12, 9)));
        assert_eq!(ast_precheck(&cfg, 0x1000, 10), AstVerdict::FoundPanic);
    }

    #[test]
    fn precheck_terminates_on_loops() {
        let src = ".panic 0x9000\n.code\n0x1000: BRANCH ram:0x1010:8\n0x1010: BRANCH ram:0x1000:8\n";
        let cfg = build_cfg(&program(src));
        assert_eq!(ast_precheck(&cfg, 0x1000, usize::MAX), AstVerdict::NotFound);
    }

    #[test]
    fn precheck_unknown_start_and_direct_panic_target() {
        let cfg = build_cfg(&program(&chain(3, 2)));
        assert_eq!(ast_precheck(&cfg, 0x5555, 10), AstVerdict::NotFound);
        assert_eq!(ast_precheck(&cfg, 0x9000, 10), AstVerdict::FoundPanic);
    }

    #[test]
    fn dump_format() {
        let (_, cfg, r) = analyse(&chain(2, 1));
        assert_eq!(dump(&cfg, &r), "B0 start=0x1000 succ=[1] reach=1\nB1 start=0x1010 succ=[] reach=1\n");
    }

    /// Random block-structured programs: each block is straight-line filler
    /// followed by one of several terminators.
    fn random_program(kinds: &[(u8, usize, usize)], panics: &[usize]) -> Program {
        let n = kinds.len();
        let addr = |i: usize| 0x1000 + 0x10 * i as u64;
        let panic_addr = |k: usize| 0x9000 + 0x10 * k as u64;
        let mut src = String::from(".panic");
        for k in 0..3 {
            src += &format!(" {:#x}", panic_addr(k));
        }
        src += "\n.code\n";
        for (i, (kind, a, b)) in kinds.iter().enumerate() {
            let t1 = addr(a % n);
            let t2 = addr(b % n);
            let body = match (kind % 6, panics.contains(&i)) {
                (_, true) => format!("CALL ram:{:#x}:8", panic_addr(a % 3)),
                (0, _) => format!("BRANCH ram:{t1:#x}:8"),
                (1, _) => format!("CBRANCH ram:{t1:#x}:8 reg:0x0:1"),
                (2, _) => format!("CALL ram:{t1:#x}:8"),
                (3, _) => "RETURN".to_string(),
                (4, _) if b % 5 == 0 => "BRANCHIND reg:0x8:8".to_string(),
                _ => format!("CBRANCH ram:{t2:#x}:8 reg:0x1:1"),
            };
            src += &format!("{:#x}: COPY reg:0x0:1 -> reg:0x2:1\n{:#x}: {body}\n", addr(i), addr(i) + 4);
        }
        program(&src)
    }

    fn forward_reach(cfg: &Cfg, from: BlockId) -> bool {
        let mut seen = vec![false; cfg.blocks.len()];
        let mut stack = vec![from];
        while let Some(b) = stack.pop() {
            if std::mem::replace(&mut seen[b], true) {
                continue;
            }
            if cfg.blocks[b].touches_panic(cfg.panic_set()) {
                return true;
            }
            stack.extend(&cfg.blocks[b].successors);
        }
        false
    }

    proptest! {
        #[test]
        fn reach_is_closed_under_reverse_edges(
            kinds in proptest::collection::vec((any::<u8>(), any::<usize>(), any::<usize>()), 1..40),
            panics in proptest::collection::vec(0usize..40, 0..3),
        ) {
            let p = random_program(&kinds, &panics);
            let cfg = build_cfg(&p);
            let r = compute_panic_reach(&cfg, &p.panic_set);
            for b in &cfg.blocks {
                for s in &b.successors {
                    prop_assert!(!r.contains(*s) || r.contains(b.id));
                }
                if b.touches_panic(&p.panic_set) {
                    prop_assert!(r.contains(b.id));
                }
            }
        }

        #[test]
        fn unbounded_precheck_equals_forward_reachability(
            kinds in proptest::collection::vec((any::<u8>(), any::<usize>(), any::<usize>()), 1..40),
            panics in proptest::collection::vec(0usize..40, 0..3),
        ) {
            let p = random_program(&kinds, &panics);
            let cfg = build_cfg(&p);
            for b in &cfg.blocks {
                let found = ast_precheck(&cfg, b.start_addr, usize::MAX) == AstVerdict::FoundPanic;
                prop_assert_eq!(found, forward_reach(&cfg, b.id));
            }
        }

        #[test]
        fn reach_is_monotone_in_the_panic_set(
            kinds in proptest::collection::vec((any::<u8>(), any::<usize>(), any::<usize>()), 1..40),
            panics in proptest::collection::vec(0usize..40, 0..3),
            extra in proptest::collection::btree_set(0x1000u64..0x1400, 0..4),
        ) {
            let p = random_program(&kinds, &panics);
            let cfg = build_cfg(&p);
            let small = compute_panic_reach(&cfg, &p.panic_set);
            let mut bigger = p.panic_set.clone();
            bigger.extend(extra.iter().map(|a| a & !0xf));
            let large = compute_panic_reach(&cfg, &bigger);
            prop_assert!(small.is_subset(&large));
        }
    }
}

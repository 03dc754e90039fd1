//! Fixtures shared by the benchmarks.

use panicgate_core::corpus::{emit_all, CorpusEntry};
use panicgate_core::exec::{ExecConfig, StopMode};
use panicgate_core::ir::Program;
use panicgate_core::loader::parse_program;

/// Every corpus entry with its first seed.
pub fn corpus_cases() -> Vec<(CorpusEntry, ExecConfig)> {
    emit_all()
        .expect("corpus emits")
        .into_iter()
        .map(|e| {
            let c = ExecConfig::new(e.start, e.seeds[0].clone());
            (e, c)
        })
        .collect()
}

pub fn exhaustive(config: &ExecConfig, optimized: bool) -> ExecConfig {
    let mut c = config.clone();
    c.optimized = optimized;
    c.stop_mode = StopMode::Exhaustive;
    c
}

/// A chain of `n` blocks, each branching back to the start or falling
/// through, that ends in a call to the only panic site.
pub fn chain_program(n: usize) -> Program {
    let mut src = String::from(".panic 0x9000\n.code\n");
    for i in 0..n {
        let addr = 0x1000 + 8 * i as u64;
        src += &format!("{addr:#x}: COPY reg:0x0:1 -> reg:0x1:1\n{:#x}: CBRANCH ram:0x1000:8 reg:0x1:1\n", addr + 4);
    }
    src += &format!("{:#x}: CALL ram:0x9000:8\n", 0x1000 + 8 * n as u64);
    parse_program(&src).expect("chain loads").program
}

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use panicgate_bench::{chain_program, corpus_cases, exhaustive};
use panicgate_core::cfg::{ast_precheck, build_cfg, compute_panic_reach, DEFAULT_AST_BLOCKS};
use panicgate_core::exec::{run, run_concrete};

fn reachability(c: &mut Criterion) {
    let mut g = c.benchmark_group("reach");
    for n in [64, 512, 4096] {
        let p = chain_program(n);
        g.bench_with_input(BenchmarkId::new("cfg+reach", n), &p, |b, p| {
            b.iter(|| {
                let cfg = build_cfg(p);
                compute_panic_reach(&cfg, &p.panic_set).len()
            })
        });
        let cfg = build_cfg(&p);
        g.bench_with_input(BenchmarkId::new("ast_precheck", n), &cfg, |b, cfg| {
            b.iter(|| ast_precheck(cfg, black_box(0x1000), DEFAULT_AST_BLOCKS))
        });
    }
    g.finish();
}

fn concrete(c: &mut Criterion) {
    let mut g = c.benchmark_group("replay");
    for (e, _) in corpus_cases() {
        let seed = e.seeds[0].clone();
        g.bench_function(e.name, |b| b.iter(|| run_concrete(&e.program, black_box(&seed), e.start, 100_000).unwrap()));
    }
    g.finish();
}

fn concolic(c: &mut Criterion) {
    let mut g = c.benchmark_group("concolic");
    g.sample_size(10);
    for (e, config) in corpus_cases() {
        for optimized in [true, false] {
            let cfg = exhaustive(&config, optimized);
            let id = BenchmarkId::new(if optimized { "optimized" } else { "unoptimized" }, e.name);
            g.bench_function(id, |b| b.iter(|| run(&e.program, &cfg).unwrap().stats.solver_queries));
        }
    }
    g.finish();
}

criterion_group!(benches, reachability, concrete, concolic);
criterion_main!(benches);

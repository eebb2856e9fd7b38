//! Criterion suite: multi-security fan-out with the rayon-backed map vs
//! the sequential baseline, plus the per-tick cost of a warm engine step.
//!
//! Build with `--no-default-features` to measure the sequential fallback
//! of `par_map` itself.

use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion, Throughput};

use hftsim_core::features::{feature_dim, NormState, DEFAULT_NORM_ALPHA};
use hftsim_core::online::{Engine, EngineConfig, RunOptions};
use hftsim_core::parallel::{par_map, seq_map};
use hftsim_core::synthgen::{generate_day, GenParams};
use hftsim_core::{EnsembleWeights, Tick};

const SECURITIES: usize = 8;
const TICKS_PER_SECURITY: usize = 4_000;

fn cfg() -> EngineConfig {
    EngineConfig { window: 200, horizon: 50, batch_size: 50, ..EngineConfig::default() }
}

fn weights(window: usize, seed: u64) -> EnsembleWeights {
    let dim = feature_dim(window);
    EnsembleWeights::init(dim, &[10, 10], NormState::new(dim, DEFAULT_NORM_ALPHA), seed).unwrap()
}

fn streams() -> Vec<Vec<Tick>> {
    (0..SECURITIES as u64)
        .map(|seed| {
            generate_day(&GenParams { n_ticks: TICKS_PER_SECURITY, seed, ..GenParams::default() })
                .unwrap()
        })
        .collect()
}

fn run_security(ticks: &[Tick]) -> u64 {
    let cfg = cfg();
    let result = hftsim_core::online::run_day(
        ticks,
        weights(cfg.window, 1),
        &cfg,
        &RunOptions { include_warmup: false, trade: false },
    )
    .unwrap();
    result.update_count
}

fn bench_fanout(c: &mut Criterion) {
    let data = streams();
    let mut group = c.benchmark_group("multi_security_fanout");
    group.sample_size(10);
    group.throughput(Throughput::Elements((SECURITIES * TICKS_PER_SECURITY) as u64));
    group.bench_function("par_map", |b| {
        b.iter(|| {
            let updates: u64 =
                par_map(data.clone(), |ticks| run_security(&ticks)).into_iter().sum();
            black_box(updates)
        })
    });
    group.bench_function("seq_map", |b| {
        b.iter(|| {
            let updates: u64 =
                seq_map(data.clone(), |ticks| run_security(&ticks)).into_iter().sum();
            black_box(updates)
        })
    });
    group.finish();
}

fn bench_warm_step(c: &mut Criterion) {
    let cfg = cfg();
    let ticks = generate_day(&GenParams { n_ticks: 2_000, ..GenParams::default() }).unwrap();
    let mut engine = Engine::new(cfg.clone(), weights(cfg.window, 2)).unwrap();
    // warm the window so every measured step takes the full prediction path
    for tick in &ticks[..cfg.window] {
        engine.step(tick).unwrap();
    }
    let tail = &ticks[cfg.window..cfg.window + 500];

    let mut group = c.benchmark_group("warm_engine");
    group.throughput(Throughput::Elements(tail.len() as u64));
    group.bench_function("step_500_ticks", |b| {
        b.iter_batched(
            || engine.clone(),
            |mut engine| {
                for tick in tail {
                    black_box(engine.step(tick).unwrap());
                }
            },
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

criterion_group!(benches, bench_fanout, bench_warm_step);
criterion_main!(benches);

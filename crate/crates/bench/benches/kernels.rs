//! Timing of the quadrature kernels, the power and precoder solvers and a
//! short simulation trace.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use mcp_bench::{channel, unit_powers, BPSK};
use mcp_core::{
    fixed_point_power, fixed_point_precoder, mi_sum, mmse_matrix, run_trace, Budgets,
    Constellation, InputSpec, IntegrationEngine, IterationSchedule, Mac, MimoChannel, Multipliers,
    Normalization, PrecoderPair, Scenario,
};

fn quadrature(c: &mut Criterion) {
    let ch = channel(3, 2.0).unwrap();
    let p = unit_powers();
    let qam = InputSpec::Discrete(Constellation::qam(4).unwrap());
    for order in [16, 32] {
        let engine = IntegrationEngine::gauss_hermite(order);
        c.bench_function(&format!("mi_sum bpsk gh{order}"), |b| {
            b.iter(|| mi_sum(black_box(&ch), &p, &BPSK, Mac::One, &engine).unwrap())
        });
        c.bench_function(&format!("mmse_matrix bpsk gh{order}"), |b| {
            b.iter(|| mmse_matrix(black_box(&ch), &p, &BPSK, &engine).unwrap())
        });
    }
    let engine = IntegrationEngine::gauss_hermite(16);
    c.bench_function("mi_sum qam16 gh16", |b| {
        b.iter(|| {
            mi_sum(
                black_box(&ch),
                &p,
                &[qam.clone(), qam.clone()],
                Mac::One,
                &engine,
            )
            .unwrap()
        })
    });
}

fn solvers(c: &mut Criterion) {
    let ch = channel(7, 2.0).unwrap();
    let engine = IntegrationEngine::gauss_hermite(16);
    let schedule = IterationSchedule::default()
        .with_max_iter(20_000)
        .with_tol(1e-10);
    let lambda = Multipliers::new(0.3, 0.5).unwrap();
    c.bench_function("fixed_point_power bpsk", |b| {
        b.iter(|| {
            fixed_point_power(
                black_box(&ch),
                &BPSK,
                &lambda,
                Mac::One,
                &unit_powers(),
                &schedule,
                &engine,
            )
            .unwrap()
        })
    });
    let mimo = MimoChannel::from_scalar(&ch);
    let budgets = Budgets::new(2.0, 2.0).unwrap();
    let nu = Multipliers::new(0.05, 0.05).unwrap();
    let init = PrecoderPair::svd_init(&mimo, Mac::One, &budgets);
    c.bench_function("fixed_point_precoder bpsk", |b| {
        b.iter(|| {
            fixed_point_precoder(
                black_box(&mimo),
                &BPSK,
                &nu,
                Mac::One,
                &init,
                &budgets,
                Normalization::Cap,
                &schedule,
                &engine,
            )
            .unwrap()
        })
    });
}

fn trace(c: &mut Criterion) {
    let s = Scenario {
        snr_grid: vec![1.0, 10.0],
        ..Default::default()
    };
    let mut g = c.benchmark_group("trace");
    g.sample_size(10);
    g.bench_function("run_trace 20 blocks", |b| {
        b.iter(|| run_trace(20, black_box(&s), 5).unwrap())
    });
    g.finish();
}

criterion_group!(benches, quadrature, solvers, trace);
criterion_main!(benches);

//! Score-covariance replications on the benchmark, sequential against rayon.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lan_diffusion::fisher::oracle::l2_fisher;
use lan_diffusion::lan::{score_covariance_experiment, Experiment};
use lan_diffusion::models::OuExternal;
use lan_diffusion::par::Execution;
use lan_diffusion::{FourierSignal, ParamPoint};

fn replications(c: &mut Criterion) {
    let ou = OuExternal::scalar(1.0, 1.0).unwrap();
    let signal = FourierSignal::linear_sine(1).unwrap();
    let truth = ParamPoint::new(vec![1.0], 1.0).unwrap();
    let reference = l2_fisher(&ou, &signal, &truth, 1.0).unwrap();

    let mut group = c.benchmark_group("score_covariance");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        let exp = Experiment {
            model: &ou,
            signal: &signal,
            truth: &truth,
            z0: &[0.0],
            step: 1e-3,
            exec,
        };
        group.bench_with_input(
            BenchmarkId::new(format!("{exec:?}"), 100),
            &exp,
            |b, exp| {
                b.iter(|| {
                    score_covariance_experiment(exp, black_box(2.0), 100, 1, &reference).unwrap()
                })
            },
        );
    }
    group.finish();
}

criterion_group!(benches, replications);
criterion_main!(benches);

use cardstack_core::sim::{simulate_with, Execution, PolicyMix, SimConfig};
use cardstack_core::Config;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn population(c: &mut Criterion) {
    let config = Config::default();
    let mut group = c.benchmark_group("simulate");
    group.sample_size(10);
    for students in [16usize, 64] {
        let cfg = SimConfig {
            n_students: students,
            steps_per_student: 60,
            policy_mix: "challenge_seeking=0.5,challenge_averse=0.5"
                .parse::<PolicyMix>()
                .unwrap(),
            ..SimConfig::default()
        };
        group.bench_with_input(BenchmarkId::new("sequential", students), &cfg, |b, cfg| {
            b.iter(|| simulate_with(cfg, &config, Execution::Sequential).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("parallel", students), &cfg, |b, cfg| {
            b.iter(|| simulate_with(cfg, &config, Execution::Parallel).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, population);
criterion_main!(benches);

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lowdim_ddpm::diagnostics::{energy_distance, mc_mean_trace};
use lowdim_ddpm::noise::Schedule;
use lowdim_ddpm::sampler::run_batch;
use lowdim_ddpm::targets::registry::{generate, GeneratorSpec};
use lowdim_ddpm::targets::{forward_sample, ScoreOracle, Target};
use lowdim_ddpm::{SamplerVariant, Workers};

fn workers() -> [(&'static str, Workers); 2] {
    [("sequential", Workers::sequential()), ("parallel", Workers::available())]
}

fn sampler(c: &mut Criterion) {
    let target: Target = generate(&GeneratorSpec {
        points: 512,
        ..GeneratorSpec::new("circle", 16)
    })
    .unwrap()
    .into();
    let oracle = ScoreOracle::exact(target);
    let s = Schedule::two_phase(6.0, 0.01, 64).unwrap();
    let mut g = c.benchmark_group("run_batch");
    g.sample_size(10);
    for (name, w) in workers() {
        g.bench_function(BenchmarkId::new(name, w.get()), |b| {
            b.iter(|| run_batch(&oracle, &s, SamplerVariant::Ddpm, 256, 1, w).unwrap())
        });
    }
    g.finish();
}

fn trace(c: &mut Criterion) {
    let target: Target = generate(&GeneratorSpec::new("circle", 16)).unwrap().into();
    let mut g = c.benchmark_group("mc_mean_trace");
    g.sample_size(10);
    for (name, w) in workers() {
        g.bench_function(BenchmarkId::new(name, w.get()), |b| {
            b.iter(|| mc_mean_trace(&target, 0.5, 500, 1, w).unwrap())
        });
    }
    g.finish();
}

fn energy(c: &mut Criterion) {
    let target = Target::point_mass(8).unwrap();
    let a = forward_sample(&target, 1.0, 1000, 1, Workers::sequential()).unwrap();
    let b = forward_sample(&target, 1.0, 1000, 2, Workers::sequential()).unwrap();
    let mut g = c.benchmark_group("energy_distance");
    g.sample_size(10);
    for (name, w) in workers() {
        g.bench_function(BenchmarkId::new(name, w.get()), |bench| {
            bench.iter(|| energy_distance(&a, &b, w).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, sampler, trace, energy);
criterion_main!(benches);

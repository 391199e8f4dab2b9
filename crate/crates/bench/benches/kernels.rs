use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use mvlab_core::measures::{median_cost, DEFAULT_ASSIGNMENT_CAP};
use mvlab_core::models::{granular_media_1d, mean_field_ou};
use mvlab_core::rates::{delta0_thm22, delta2_thm24, RateInputs, SearchBox};
use mvlab_core::rng::CounterRng;
use mvlab_core::*;

fn cloud(seed: u64, n: usize, d: usize, shift: f64) -> EmpiricalMeasure {
    let mut rng = CounterRng::from_seed(seed, 0);
    EmpiricalMeasure::new((0..n * d).map(|_| rng.normal() + shift).collect(), d).unwrap()
}

fn wasserstein_estimators(c: &mut Criterion) {
    let mut g = c.benchmark_group("wasserstein");
    for n in [1_000, 10_000] {
        let (mu, nu) = (cloud(1, n, 1, 0.0), cloud(2, n, 1, 0.5));
        g.bench_with_input(BenchmarkId::new("exact_1d", n), &n, |b, _| {
            b.iter(|| wasserstein_1d(black_box(&mu), black_box(&nu), 2.0).unwrap())
        });
    }
    for n in [64, 256] {
        let (mu, nu) = (cloud(3, n, 2, 0.0), cloud(4, n, 2, 1.0));
        g.bench_with_input(BenchmarkId::new("assignment", n), &n, |b, _| {
            b.iter(|| wasserstein_assignment(&mu, &nu, 2.0, DEFAULT_ASSIGNMENT_CAP).unwrap())
        });
        let reg = 1e-2 * median_cost(&mu, &nu, 1.0);
        g.bench_with_input(BenchmarkId::new("sinkhorn", n), &n, |b, _| {
            b.iter(|| wasserstein_sinkhorn(&mu, &nu, 1.0, reg).unwrap())
        });
    }
    g.finish();
}

fn particle_steps(c: &mut Criterion) {
    let mut g = c.benchmark_group("simulate");
    g.sample_size(10);
    let cfg = SimConfig { n_particles: 10_000, step: 1e-3, horizon: 0.5, record_every: 100, ..SimConfig::default() };
    let start = EmpiricalMeasure::dirac(&[1.0]).unwrap();
    let ou = mean_field_ou(1.0, 0.5, 2f64.sqrt(), 1).unwrap();
    g.bench_function("mv_ou_1e4x500", |b| b.iter(|| simulate_mv(&ou, &start, &cfg).unwrap()));
    let granular = granular_media_1d(0.25, 1.0, 1.0, 1.0).unwrap();
    let frozen = EmpiricalMeasure::dirac(&[0.5]).unwrap();
    g.bench_function("decoupled_granular_1e4x500", |b| {
        b.iter(|| simulate_decoupled(&granular, &frozen, &start, &cfg).unwrap())
    });
    g.finish();
}

fn rate_certificates(c: &mut Criterion) {
    let mut r = RateInputs::new(2.0, -1.0, 1.0, 1.0);
    r.sigma0 = Some(1.0);
    r.kappa = Some(1.0);
    r.delta = 0.3;
    c.bench_function("rates/delta0_thm22", |b| b.iter(|| delta0_thm22(black_box(&r)).unwrap()));
    c.bench_function("rates/delta2_thm24", |b| b.iter(|| delta2_thm24(black_box(&r), &SearchBox::default()).unwrap()));
}

criterion_group!(benches, wasserstein_estimators, particle_steps, rate_certificates);
criterion_main!(benches);

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use relumip::{solve_lp, solve_mip, SolverParams};
use relumip_bench::{formulations, largest_attack_model, small_attack_model};

fn small_attacks(c: &mut Criterion) {
    let params = SolverParams::default();
    let mut group = c.benchmark_group("small_attack");
    for (name, method, relu) in formulations() {
        let models: Vec<_> = (0..10).map(|k| small_attack_model(k, method, relu)).collect();
        group.bench_function(BenchmarkId::new("mip", name), |b| {
            b.iter(|| models.iter().map(|m| solve_mip(m, &params).nodes).sum::<usize>())
        });
        group.bench_function(BenchmarkId::new("lp", name), |b| {
            b.iter(|| models.iter().map(|m| solve_lp(m, &params).lp_iterations).sum::<usize>())
        });
    }
    group.finish();
}

fn largest_attack(c: &mut Criterion) {
    let params = SolverParams::default();
    let mut group = c.benchmark_group("largest_attack");
    group.sample_size(10);
    for (name, method, relu) in formulations().into_iter().filter(|(n, ..)| n.starts_with("bigm")) {
        let model = largest_attack_model(method, relu);
        group.bench_function(name, |b| b.iter(|| solve_mip(&model, &params).objective));
    }
    group.finish();
}

criterion_group!(benches, small_attacks, largest_attack);
criterion_main!(benches);

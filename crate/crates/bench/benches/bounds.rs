use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use relumip::fixtures::{largest_attack_net, soundness_nets};
use relumip::{compute_bounds, BoundMethod};

fn bounds(c: &mut Criterion) {
    let nets = [("largest", largest_attack_net()), ("sound_03", soundness_nets().swap_remove(3))];
    let mut group = c.benchmark_group("bounds");
    for (name, net) in &nets {
        for method in [BoundMethod::Bunel, BoundMethod::Cheng, BoundMethod::Serra, BoundMethod::Tjeng] {
            group.bench_with_input(BenchmarkId::new(format!("{method:?}"), name), net, |b, net| {
                b.iter(|| compute_bounds(net, method).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bounds);
criterion_main!(benches);

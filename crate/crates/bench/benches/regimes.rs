use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use typelink::eval::{benchmark, Regime};
use typelink::nn::Graph;
use typelink_bench::fixture;

fn regimes(c: &mut Criterion) {
    let f = fixture(4, 40, 7);
    let mut group = c.benchmark_group("regimes");
    group.sample_size(10);
    for regime in Regime::ALL {
        group.bench_with_input(BenchmarkId::from_parameter(regime), &regime, |b, &r| {
            b.iter(|| benchmark(black_box(&f.corpus), &f.model, &f.store, &f.options, r).unwrap())
        });
    }
    group.finish();
}

fn encoder(c: &mut Criterion) {
    let f = fixture(1, 10, 7);
    let ids = f.model.vocab().encode(&f.corpus[0].tokens);
    let mut group = c.benchmark_group("encoder");
    group.bench_function(BenchmarkId::new("chunk", ids.len()), |b| {
        b.iter(|| {
            let mut g = Graph::new(f.model.params(), false, 0);
            let h = f.model.encode_chunk(&mut g, black_box(&ids)).unwrap();
            g.value(h).len()
        })
    });
    group.finish();
}

criterion_group!(benches, regimes, encoder);
criterion_main!(benches);

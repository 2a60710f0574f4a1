use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use evoibm::ensemble::stream_rng;
use evoibm::sim::simulate_with_rng;
use evoibm::Engine;
use evoibm_bench::micro_setup;

fn engines(c: &mut Criterion) {
    let mut g = c.benchmark_group("simulate_kisdi_t1");
    g.sample_size(10);
    for k in [100u64, 1000] {
        for engine in [Engine::Direct, Engine::Rejection] {
            let (m, s, init, cfg) = micro_setup(engine, k, 1.0);
            let events = simulate_with_rng(&m, &s, init.clone(), &cfg, stream_rng(1, 0))
                .unwrap()
                .event_count;
            g.throughput(Throughput::Elements(events));
            g.bench_with_input(BenchmarkId::new(format!("{engine:?}"), k), &k, |b, _| {
                let mut seed = 0;
                b.iter(|| {
                    seed += 1;
                    simulate_with_rng(&m, &s, init.clone(), &cfg, stream_rng(seed, 0)).unwrap()
                })
            });
        }
    }
    g.finish();
}

criterion_group!(benches, engines);
criterion_main!(benches);

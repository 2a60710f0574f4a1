use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use evoibm::limits::{solve_dimorphic, solve_ide, solve_rd_pde, FieldOptions, IdeMode, OdeOptions};
use evoibm::TraitValue;
use evoibm_bench::{bump_on, kisdi};

fn ide(c: &mut Criterion) {
    let m = kisdi(0.1);
    let mut g = c.benchmark_group("ide_t1");
    g.sample_size(10);
    for n in [100, 400] {
        let (grid, init) = bump_on(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| {
                solve_ide(
                    &init,
                    1.0,
                    &m,
                    &IdeMode::Standard,
                    &grid,
                    &FieldOptions::default(),
                )
                .unwrap()
            })
        });
    }
    g.finish();
}

fn pde(c: &mut Criterion) {
    let m = kisdi(0.1);
    let (grid, init) = bump_on(400);
    let coef = vec![0.01; grid.len()];
    c.bench_function("rd_pde_400_t1", |b| {
        b.iter(|| solve_rd_pde(&init, 1.0, &m, &coef, &grid, &FieldOptions::default()).unwrap())
    });
}

fn ode(c: &mut Criterion) {
    let m = kisdi(0.1);
    let (x, y) = (TraitValue::scalar(1.2), TraitValue::scalar(1.3));
    c.bench_function("dimorphic_ode_t200", |b| {
        b.iter(|| solve_dimorphic(x, y, 2.5667, 1e-3, 200.0, &m, &OdeOptions::default()).unwrap())
    });
}

criterion_group!(benches, ide, pde, ode);
criterion_main!(benches);

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use edgeshare_core::cost;
use edgeshare_core::optimizer::random_instance;
use edgeshare_core::{
    brute_force_solve, solve_pso, Calibration, CalibrationMode, CostWeights, DeviceConstants, Fig4Anchors, PsoConfig,
    Scheme,
};

fn cost_model(c: &mut Criterion) {
    let inst = random_instance(3, 16);
    let x: Vec<bool> = (0..16).map(|i| i % 3 == 0).collect();
    let w = CostWeights::default();
    c.bench_function("objective/16 tasks", |b| b.iter(|| cost::objective(black_box(&inst.tasks), &x, &w)));
    c.bench_function("constraints/16 tasks", |b| {
        b.iter(|| cost::check_constraints(black_box(&inst.tasks), &x, &inst.bounds))
    });
}

fn calibration(c: &mut Criterion) {
    let anchors = Fig4Anchors::bundled();
    c.bench_function("calibration/fit", |b| {
        b.iter(|| Calibration::fit(black_box(&anchors), CalibrationMode::Interpolate, DeviceConstants::default()))
    });
    let cal = Calibration::fit(&anchors, CalibrationMode::Interpolate, DeviceConstants::default()).unwrap();
    c.bench_function("calibration/profile", |b| b.iter(|| cal.profile(Scheme::Edge, black_box(700.0))));
}

fn solvers(c: &mut Criterion) {
    let w = CostWeights::default();
    let mut g = c.benchmark_group("solve");
    g.sample_size(10);
    for n in [8, 12, 16] {
        let inst = random_instance(n as u64, n);
        g.bench_with_input(BenchmarkId::new("pso", n), &inst, |b, i| {
            b.iter(|| solve_pso(&i.tasks, &w, &i.bounds, &PsoConfig::default()))
        });
        g.bench_with_input(BenchmarkId::new("brute_force", n), &inst, |b, i| {
            b.iter(|| brute_force_solve(&i.tasks, &w, &i.bounds))
        });
    }
    let big = random_instance(64, 64);
    g.bench_function("pso/64", |b| b.iter(|| solve_pso(&big.tasks, &w, &big.bounds, &PsoConfig::default())));
    g.finish();
}

criterion_group!(benches, cost_model, calibration, solvers);
criterion_main!(benches);

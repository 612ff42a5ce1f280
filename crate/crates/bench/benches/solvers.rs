use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use oscilab::cellsolve::solve_cell_problem;
use oscilab::critical::{detect_critical_points, DetectOptions};
use oscilab::doubling::profile;
use oscilab::geom::{Disk, Vec2};
use oscilab::pde::{BoundaryData, DiskProblem};
use oscilab_bench::{fourier, laminate, laminate_solution};

fn cell(c: &mut Criterion) {
    let field = fourier();
    let mut group = c.benchmark_group("cell");
    group.sample_size(10);
    for n in [64, 128] {
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| solve_cell_problem(&field, n).unwrap())
        });
    }
    group.finish();
}

fn disk(c: &mut Criterion) {
    let field = laminate();
    let g = BoundaryData::cos(2);
    let mut group = c.benchmark_group("disk");
    group.sample_size(10);
    for eps in [0.25, 0.125] {
        let h = eps / 8.0;
        group.bench_with_input(BenchmarkId::new("assemble", eps), &eps, |b, &eps| {
            b.iter(|| DiskProblem::new(&field, eps, 1.0, h).unwrap())
        });
        let problem = DiskProblem::new(&field, eps, 1.0, h).unwrap();
        group.bench_with_input(BenchmarkId::new("solve", eps), &eps, |b, _| b.iter(|| problem.solve(&g).unwrap()));
    }
    group.finish();
}

fn analysis(c: &mut Criterion) {
    let sol = laminate_solution(0.125, 1.0 / 64.0);
    let mut group = c.benchmark_group("analysis");
    group.sample_size(10);
    group.bench_function("profile", |b| b.iter(|| profile(&sol, Vec2::zeros(), 0.5, 4).unwrap()));
    group.bench_function("critical", |b| {
        b.iter(|| detect_critical_points(&sol, &Disk::centered(0.25), &DetectOptions::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, cell, disk, analysis);
criterion_main!(benches);

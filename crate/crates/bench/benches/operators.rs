use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fracfield::pde::{solve, EllipticProblem, MaskSpec, SolveOptions};
use fracfield::{besov_seminorm, DirectConfig, DirectOperators, Grid, SpectralOperators};
use fracfield_bench::gaussian;

fn gradient(c: &mut Criterion) {
    let mut group = c.benchmark_group("gradient");
    for (dim, n) in [(1, 256), (1, 1024), (2, 32), (2, 64)] {
        let f = gaussian(dim, n);
        let label = format!("{dim}d/{n}");
        let direct = DirectOperators::new(f.grid(), 0.5, &DirectConfig::default()).unwrap();
        group.bench_with_input(BenchmarkId::new("direct", &label), &f, |b, f| b.iter(|| direct.gradient(f).unwrap()));
        let spectral = SpectralOperators::new(f.grid());
        group.bench_with_input(BenchmarkId::new("spectral", &label), &f, |b, f| b.iter(|| spectral.gradient(f, 0.5).unwrap()));
    }
    group.finish();
}

fn besov(c: &mut Criterion) {
    let f = gaussian(1, 256);
    c.bench_function("besov/1d/256", |b| b.iter(|| besov_seminorm(&f, 0.5, 2.0, 2.0).unwrap()));
}

fn elliptic(c: &mut Criterion) {
    let grid = Grid::cube(1, 0.0, 1.0, 256).unwrap();
    let rhs = fracfield::GridField::from_fn(&grid, |p| (3.0 * p[0]).sin());
    let problem = EllipticProblem::fractional_laplacian(&grid, 0.5, MaskSpec::Interval([0.2, 0.8]), 1.0, rhs).unwrap();
    c.bench_function("solve/1d/256", |b| b.iter(|| solve(&problem, &SolveOptions::default()).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = gradient, besov, elliptic
}
criterion_main!(benches);

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mongeamp::geometry::PLConvexFunction;
use mongeamp::measures::MassScale;
use mongeamp::obstacle::{calibrate_height, ObstacleConfig};
use mongeamp::solver::{isolated_singularity, SolverConfig};
use mongeamp_bench::quadratic_disk;

fn hull(c: &mut Criterion) {
    let mut g = c.benchmark_group("lower_hull");
    for lattice in [15, 33, 65] {
        let phi = quadratic_disk(lattice, 4 * lattice);
        let nodes = phi.nodes().clone();
        let values = phi.values().to_vec();
        g.bench_with_input(BenchmarkId::from_parameter(nodes.len()), &values, |b, v| {
            b.iter(|| PLConvexFunction::lower_hull(nodes.clone(), black_box(v.clone())).unwrap())
        });
    }
    g.finish();
}

fn singularity(c: &mut Criterion) {
    let mut g = c.benchmark_group("isolated_singularity");
    g.sample_size(10);
    let a = MassScale::from_a(0.2, 2).unwrap();
    for lattice in [17, 33] {
        let phi = quadratic_disk(lattice, 4 * lattice);
        let y = phi.nodes().nearest([0.0, 0.0]);
        g.bench_function(BenchmarkId::from_parameter(lattice), |b| {
            b.iter(|| isolated_singularity(&phi, y, a, &SolverConfig::default()).unwrap())
        });
    }
    g.finish();
}

fn calibration(c: &mut Criterion) {
    let mut g = c.benchmark_group("calibrate_height");
    g.sample_size(10);
    let phi = quadratic_disk(15, 48);
    let a = MassScale::from_a(0.15, 2).unwrap();
    g.bench_function("lattice-15", |b| b.iter(|| calibrate_height(&phi, black_box([0.1, 0.05]), a, &ObstacleConfig::default()).unwrap()));
    g.finish();
}

criterion_group!(benches, hull, singularity, calibration);
criterion_main!(benches);

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use condex::gmrf::{matern_to_spde, Dimension, SpdeOperator};
use condex::mesh::{distances, Mesh2D, Point};
use condex::model::{parametric_alpha, Residual};
use condex::par::Execution;
use condex::simulate::{ConditionalSimulator, ResidualSampler};

fn simulator() -> ConditionalSimulator {
    let sites: Vec<Point> = (0..400).map(|k| [(k % 20) as f64, (k / 20) as f64]).collect();
    let s0 = 210;
    let mesh = Mesh2D::build(&sites, 1.0, 2.0, 4.0).unwrap();
    let op = SpdeOperator::new(&mesh.fem(), 0.5, Dimension::Two).unwrap();
    let q = op.precision(&matern_to_spde(5.0, 1.0, 0.5, Dimension::Two).unwrap());
    let a = mesh.observation_matrix(&sites).unwrap();
    let a0 = a.select_rows(&[s0]);
    let residual = ResidualSampler::new(&q, a, a0, 1, Residual::SubtractS0).unwrap();
    let alpha = distances(&sites, sites[s0]).iter().map(|&h| parametric_alpha(h, 5.0, 1.0)).collect();
    ConditionalSimulator::new(sites.len(), 1, s0, alpha, vec![0.0; sites.len()], 0.0, 0.1, Some(residual)).unwrap()
}

fn bench_simulation(c: &mut Criterion) {
    let sim = simulator();
    let mut group = c.benchmark_group("simulate 2000 episodes");
    group.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_function(name, |b| b.iter(|| black_box(sim.simulate(2000, 2.3, 1, exec))));
    }
    group.finish();
}

criterion_group!(benches, bench_simulation);
criterion_main!(benches);

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use perc_core::events::{estimate_tail, EventKind, TailSpec};
use perc_core::par::Exec;
use perc_core::percolation::{BondConfig, LatticeBox};
use perc_core::walk::{cluster_graph, heat_kernel_rows, mc_heat_kernel, Boundary};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn walks(c: &mut Criterion) {
    let bx = LatticeBox::cube(&[0, 0], 60).unwrap();
    let cfg = BondConfig::sample(&bx, 0.7, 5).unwrap();
    let g = cluster_graph(&cfg, &bx).unwrap();
    let x = g.index_of(&[30, 30]).unwrap_or(0);
    let times = [1.0, 4.0, 16.0, 64.0];
    let mut group = c.benchmark_group("mc_heat_kernel");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new(name, 20_000), &exec, |b, &e| {
            b.iter(|| black_box(mc_heat_kernel(&g, x, &times, 20_000, 1, e).unwrap()))
        });
    }
    group.finish();

    let sources: Vec<usize> = (0..g.len()).step_by(g.len() / 16 + 1).collect();
    let mut group = c.benchmark_group("heat_kernel_rows");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new(name, sources.len()), &exec, |b, &e| {
            b.iter(|| black_box(heat_kernel_rows(&g, &sources, &times, Boundary::None, 1e-12, e).unwrap()))
        });
    }
    group.finish();
}

fn tails(c: &mut Criterion) {
    let spec = TailSpec { event: EventKind::K, sizes: vec![8, 16], trials: 200, p: 0.95, ..Default::default() };
    let mut group = c.benchmark_group("estimate_tail_k");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new(name, spec.trials), &exec, |b, &e| {
            b.iter(|| black_box(estimate_tail(&spec, e).unwrap()))
        });
    }
    group.finish();
}

fn sampling(c: &mut Criterion) {
    let bx = LatticeBox::cube(&[0, 0, 0], 80).unwrap();
    let mut group = c.benchmark_group("bond_sample");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new(name, bx.vertex_count()), &exec, |b, &e| {
            b.iter(|| black_box(BondConfig::sample_with(&bx, 0.5, 3, e).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, walks, tails, sampling);
criterion_main!(benches);

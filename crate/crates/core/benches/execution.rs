use balcon_core::presets::{preset_configuration, Preset};
use balcon_core::runner::run_trace;
use balcon_core::scenario::{builtin, load_scenario};
use balcon_core::spectrum::{planar_inertia, PlanarConfiguration};
use balcon_core::{Execution, Masses};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

const STRATEGIES: [(&str, Execution); 2] =
    [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn trace(c: &mut Criterion) {
    let mut group = c.benchmark_group("trace");
    group.sample_size(10);
    for name in ["square_center", "collinear_equal"] {
        let spec = load_scenario(builtin(name).unwrap()).unwrap();
        for (label, exec) in STRATEGIES {
            group.bench_with_input(BenchmarkId::new(label, name), &spec, |b, spec| {
                b.iter(|| run_trace(black_box(spec), None, exec, None).unwrap())
            });
        }
    }
    group.finish();
}

fn mass_scan(c: &mut Criterion) {
    let grid: Vec<f64> = (0..=150).map(|k| 0.7 + 1e-3 * k as f64).collect();
    let planar_minus = |m4: &f64| {
        let m = Masses::new(vec![1.0, 1.0, 1.0, *m4]).unwrap();
        let q = preset_configuration(&Preset::TriangleCenter, &m, 3).unwrap();
        planar_inertia(&PlanarConfiguration::new(q).unwrap(), &m).unwrap().minus
    };
    let mut group = c.benchmark_group("mass_scan");
    for (label, exec) in STRATEGIES {
        group.bench_function(label, |b| b.iter(|| exec.map(black_box(&grid), planar_minus)));
    }
    group.finish();
}

criterion_group!(benches, trace, mass_scan);
criterion_main!(benches);

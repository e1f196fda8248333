use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use pilot_relax::ensemble::{backtrack_lattice, LatticeGeometry};
use pilot_relax::guidance::{FChoice, GuidanceSpec, Guide};
use pilot_relax::integrate::{integrate, IntegratorConfig};
use pilot_relax::wavefield::WaveState;

fn sequential(
    state: &WaveState,
    spec: GuidanceSpec,
    geometry: LatticeGeometry,
    t: f64,
    cfg: &IntegratorConfig,
) -> u64 {
    let field = Guide::new(state, spec);
    (0..geometry.len())
        .filter(|&idx| geometry.is_attempted(idx))
        .map(|idx| integrate(&field, geometry.point(idx), t, 0.0, cfg).steps_taken)
        .sum()
}

fn backtrack(c: &mut Criterion) {
    let state = WaveState::psi1();
    let cfg = IntegratorConfig::default();
    let t = 1.0;
    let mut group = c.benchmark_group("backtrack");
    group.sample_size(10);
    for resolution in [32usize, 64] {
        let geometry = LatticeGeometry {
            resolution,
            cells: 32,
            margin: 2,
        };
        for spec in [GuidanceSpec::STANDARD, GuidanceSpec::new(1.0, FChoice::F1)] {
            let id = format!("R{resolution}/{spec}");
            group.bench_function(BenchmarkId::new("lattice", &id), |b| {
                b.iter(|| backtrack_lattice(&state, spec, geometry, black_box(t), &cfg).unwrap())
            });
            group.bench_function(BenchmarkId::new("sequential", &id), |b| {
                b.iter(|| sequential(&state, spec, geometry, black_box(t), &cfg))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, backtrack);
criterion_main!(benches);

use std::f64::consts::PI;

use pilot_relax::ensemble::{backtrack_lattice, LatticeGeometry};
use pilot_relax::guidance::{FChoice, GuidanceSpec, Guide};
use pilot_relax::integrate::{
    integrate, rk_step, IntegratorConfig, TrajectoryStatus, VelocityField,
};
use pilot_relax::parallel::with_workers;
use pilot_relax::wavefield::{Point, WaveState};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rk4_oracle(field: &impl VelocityField, mut x: Point, t0: f64, h: f64, substeps: usize) -> Point {
    let dt = h / substeps as f64;
    let add = |x: Point, k: [f64; 2], s: f64| [x[0] + s * k[0], x[1] + s * k[1]];
    for i in 0..substeps {
        let t = t0 + i as f64 * dt;
        let k1 = field.velocity(x, t).unwrap();
        let k2 = field.velocity(add(x, k1, dt / 2.0), t + dt / 2.0).unwrap();
        let k3 = field.velocity(add(x, k2, dt / 2.0), t + dt / 2.0).unwrap();
        let k4 = field.velocity(add(x, k3, dt), t + dt).unwrap();
        for c in 0..2 {
            x[c] += dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
    }
    x
}

fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[test]
fn tiny_step_from_centre_matches_fine_rk4() {
    let s = WaveState::psi1();
    let g = Guide::new(&s, GuidanceSpec::STANDARD);
    let x = [PI / 2.0, PI / 2.0];
    let (step, _) = rk_step(&g, x, 0.0, 1e-5).unwrap();
    assert!(distance(step, rk4_oracle(&g, x, 0.0, 1e-5, 100)) < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn small_steps_match_fine_rk4(x in [0.6..2.5f64, 0.6..2.5f64], t in 0.0..4.0 * PI, h in -1e-3..1e-3f64) {
        let s = WaveState::psi1();
        prop_assume!(s.density(x, t) > 1e-2);
        for spec in [GuidanceSpec::STANDARD, GuidanceSpec::new(2.0, FChoice::F1)] {
            let g = Guide::new(&s, spec);
            let (step, err) = rk_step(&g, x, t, h).unwrap();
            let oracle = rk4_oracle(&g, x, t, h, 200);
            // the embedded estimate bounds the fifth-order error, up to roundoff
            let estimate = err[0].hypot(err[1]);
            prop_assert!(distance(step, oracle) < estimate + 1e-13, "{} vs {estimate}", distance(step, oracle));
        }
    }
}

const SPECS: [GuidanceSpec; 2] = [
    GuidanceSpec::STANDARD,
    GuidanceSpec {
        mu: 1.0,
        f_choice: FChoice::F1,
    },
];

fn sample_points(n: usize, seed: u64) -> Vec<Point> {
    let geometry = LatticeGeometry::reduced();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < n {
        let idx = rng.random_range(0..geometry.len());
        if geometry.is_attempted(idx) {
            out.push(geometry.point(idx));
        }
    }
    out
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn halving_tolerance_changes_little() {
    // Trajectories grazing the node amplify step errors, so the bound is on
    // the median with a loose cap on the worst point.
    let s = WaveState::psi1();
    let cfg = IntegratorConfig::default();
    let finer = cfg.tightened(2.0);
    let t = PI / 2.0;
    for spec in SPECS {
        let g = Guide::new(&s, spec);
        let diffs: Vec<f64> = sample_points(100, 11)
            .into_iter()
            .filter_map(|x| {
                let (a, b) = (
                    integrate(&g, x, t, 0.0, &cfg),
                    integrate(&g, x, t, 0.0, &finer),
                );
                (a.is_ok() && b.is_ok()).then(|| distance(a.x_final, b.x_final))
            })
            .collect();
        assert!(diffs.len() >= 95);
        assert!(diffs.iter().all(|&d| d < 1e-4));
        assert!(median(diffs) < 10.0 * cfg.abs_tol);
    }
}

#[test]
fn forward_then_backward_returns() {
    let s = WaveState::psi1();
    let cfg = IntegratorConfig::default();
    let t = PI / 2.0;
    for spec in SPECS {
        let g = Guide::new(&s, spec);
        let errors: Vec<f64> = sample_points(100, 12)
            .into_iter()
            .filter_map(|x0| {
                let fwd = integrate(&g, x0, 0.0, t, &cfg);
                let back = fwd
                    .is_ok()
                    .then(|| integrate(&g, fwd.x_final, t, 0.0, &cfg))?;
                back.is_ok().then(|| distance(back.x_final, x0))
            })
            .collect();
        let within = errors.iter().filter(|&&e| e < 1e-5).count();
        assert!(
            within * 10 >= errors.len() * 9,
            "{within} of {}",
            errors.len()
        );
    }
}

#[test]
fn centre_trajectory_self_converges() {
    let s = WaveState::psi1();
    let g = Guide::new(&s, GuidanceSpec::STANDARD);
    let cfg = IntegratorConfig::default();
    let x0 = [PI / 2.0, PI / 2.0];
    let a = integrate(&g, x0, 0.0, 4.0 * PI, &cfg);
    let b = integrate(&g, x0, 0.0, 4.0 * PI, &cfg.tightened(2.0));
    assert_eq!(a.status, TrajectoryStatus::Ok);
    assert_eq!(b.status, TrajectoryStatus::Ok);
    assert!(distance(a.x_final, b.x_final) < 1e-5);
}

#[test]
fn backtrack_independent_of_worker_count() {
    let s = WaveState::psi1();
    let geometry = LatticeGeometry {
        resolution: 64,
        cells: 32,
        margin: 2,
    };
    let spec = GuidanceSpec::new(1.0, FChoice::F1);
    let run = |n| {
        with_workers(Some(n), || {
            backtrack_lattice(&s, spec, geometry, 1.0, &IntegratorConfig::default()).unwrap()
        })
    };
    let (one, three) = (run(1), run(3));
    assert_eq!(one.origins(), three.origins());
    assert_eq!(one.mask(), three.mask());
    assert_eq!(one.total_steps(), three.total_steps());
}

//! Acceptance criteria on the reduced lattice, shared by the `check` command
//! and the acceptance test target.

use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ensemble::{density_from_backtrack, fine_h, Backtrack, DensitySpec, LatticeGeometry};
use crate::error::{Error, Result};
use crate::guidance::{circulation, f_value_and_grad, FChoice, GuidanceSpec, Guide, Loop};
use crate::integrate::{
    flow_compose_check, integrate_with_path, IntegratorConfig, TrajectoryStatus, VelocityField,
};
use crate::nodes::track_node;
use crate::runner::BacktrackCache;
use crate::wavefield::{Point, WaveState};

pub const CRITERIA: [u8; 9] = [1, 2, 3, 4, 5, 6, 7, 8, 9];

const SEED: u64 = 20_080_416;

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(
            f,
            "[{verdict}] criterion {} ({}): {}",
            self.id, self.title, self.detail
        )
    }
}

fn g(mu: f64, f: FChoice) -> GuidanceSpec {
    GuidanceSpec::new(mu, f)
}

const MU0: GuidanceSpec = GuidanceSpec::STANDARD;

/// Reduced-lattice backtracks for both reference states, computed on demand.
pub struct Acceptance {
    psi1: BacktrackCache,
    psi2: BacktrackCache,
}

impl Default for Acceptance {
    fn default() -> Self {
        Self::new(LatticeGeometry::reduced(), IntegratorConfig::default())
    }
}

impl Acceptance {
    pub fn new(geometry: LatticeGeometry, integrator: IntegratorConfig) -> Self {
        Acceptance {
            psi1: BacktrackCache::new(WaveState::psi1(), geometry, integrator),
            psi2: BacktrackCache::new(WaveState::psi2(), geometry, integrator),
        }
    }

    pub fn evaluate(&self, id: u8) -> Outcome {
        let (title, result) = match id {
            1 => ("t=0 H ratios", t0_ratios()),
            2 => ("backtrack percentages", self.backtrack_ordering()),
            3 => ("relaxation ordering", self.relaxation_ordering()),
            4 => ("equivariance", self.equivariance()),
            5 => ("fine-grained H conservation", self.fine_h_conservation()),
            6 => ("circulation quantization", circulation_quantization()),
            7 => ("divergence-free modification", divergence_free()),
            8 => ("flow composition", flow_composition()),
            9 => ("psi2 contrast", self.psi2_contrast()),
            _ => ("unknown", Err(Error::Config(format!("no criterion {id}")))),
        };
        match result {
            Ok((passed, detail)) => Outcome {
                id,
                title,
                passed,
                detail,
            },
            Err(e) => Outcome {
                id,
                title,
                passed: false,
                detail: format!("error: {e}"),
            },
        }
    }

    fn hbar_of(
        &self,
        cache: &BacktrackCache,
        spec: GuidanceSpec,
        t: f64,
        d: DensitySpec,
    ) -> Result<f64> {
        Ok(cache.report(spec, t, d)?.hbar)
    }

    fn pct(&self, spec: GuidanceSpec, t: f64) -> Result<f64> {
        Ok(self.psi1.get(spec, t)?.0.backtrack_pct())
    }

    fn backtrack_ordering(&self) -> Result<(bool, String)> {
        let mu0_4 = self.pct(MU0, 4.0 * PI)?;
        let mu0_8 = self.pct(MU0, 8.0 * PI)?;
        let mu2_8 = self.pct(g(2.0, FChoice::F1), 8.0 * PI)?;
        let block = [
            (MU0, mu0_4),
            (
                g(0.5, FChoice::F2),
                self.pct(g(0.5, FChoice::F2), 4.0 * PI)?,
            ),
            (
                g(1.0, FChoice::F2),
                self.pct(g(1.0, FChoice::F2), 4.0 * PI)?,
            ),
            (
                g(1.0, FChoice::F3),
                self.pct(g(1.0, FChoice::F3), 4.0 * PI)?,
            ),
            (
                g(2.0, FChoice::F3),
                self.pct(g(2.0, FChoice::F3), 4.0 * PI)?,
            ),
        ];
        let lowest = block
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(s, _)| *s)
            .unwrap_or(MU0);
        let passed = mu0_4 >= 99.0 && mu2_8 < mu0_8 && lowest == g(1.0, FChoice::F2);
        let block_text: Vec<String> = block.iter().map(|(s, p)| format!("{s}: {p:.2}")).collect();
        Ok((
            passed,
            format!(
                "mu=0 4pi {mu0_4:.2}% (>= 99); 8pi mu=2 f1 {mu2_8:.2}% vs mu=0 {mu0_8:.2}%; 4pi block [{}], lowest {lowest}",
                block_text.join(", ")
            ),
        ))
    }

    fn relaxation_ordering(&self) -> Result<(bool, String)> {
        let times = [0.0, 4.0 * PI, 8.0 * PI];
        let specs = [MU0, g(1.0, FChoice::F1), g(2.0, FChoice::F1)];
        let mut table = [[0.0; 3]; 3];
        for (i, &s) in specs.iter().enumerate() {
            for (j, &t) in times.iter().enumerate() {
                table[i][j] = self.hbar_of(&self.psi1, s, t, DensitySpec::Rho0)?;
            }
        }
        let floor = 0.03 * table[0][0];
        let below = |a: f64, b: f64| b < a || (a.abs() <= floor && b.abs() <= floor);
        let in_mu = (1..3).all(|j| (0..2).all(|i| below(table[i][j], table[i + 1][j])));
        let in_t = (0..3).all(|i| (0..2).all(|j| below(table[i][j], table[i][j + 1])));
        let scale = scale_factor(self.psi1.geometry());
        let rows: Vec<String> = specs
            .iter()
            .zip(&table)
            .map(|(s, r)| {
                format!(
                    "{s}: {:.1} {:.1} {:.1}",
                    r[0] * scale,
                    r[1] * scale,
                    r[2] * scale
                )
            })
            .collect();
        Ok((
            in_mu && in_t,
            format!("scaled H at 0/4pi/8pi: {}", rows.join("; ")),
        ))
    }

    fn equivariance(&self) -> Result<(bool, String)> {
        let reference = self.hbar_of(&self.psi1, MU0, 0.0, DensitySpec::Rho0)?;
        let limit = 0.02 * reference;
        let state = self.psi1.state();
        let mut passed = true;
        let mut parts = Vec::new();
        for (k, spec) in [
            MU0,
            g(1.0, FChoice::F1),
            g(2.0, FChoice::F1),
            g(1.0, FChoice::F3),
        ]
        .into_iter()
        .enumerate()
        {
            let conserved = self.hbar_of(&self.psi1, spec, 4.0 * PI, DensitySpec::Equilibrium)?;
            let (median, finite) = liouville_deviation(
                state,
                spec,
                4.0 * PI,
                100,
                &self.psi1.integrator(),
                SEED + 40 + k as u64,
            );
            passed &= conserved.abs() < limit && median < 0.02 && finite >= 90;
            parts.push(format!(
                "{spec}: {:.2}% / {:.2}%",
                100.0 * conserved.abs() / reference,
                100.0 * median
            ));
        }
        Ok((
            passed,
            format!(
                "|H| of evolved equilibrium as % of H(rho0, 0) / median Liouville deviation from |psi|^2 (both < 2%): {}",
                parts.join(", ")
            ),
        ))
    }

    fn fine_h_conservation(&self) -> Result<(bool, String)> {
        let state = self.psi1.state();
        let (b0, _) = self.psi1.get(MU0, 0.0)?;
        let (bt, _) = self.psi1.get(MU0, 2.0 * PI)?;
        let mutual: Vec<bool> = b0
            .mask()
            .iter()
            .zip(bt.mask())
            .map(|(a, b)| *a && *b)
            .collect();
        let h = |b: &Backtrack| -> Result<f64> {
            let rho = density_from_backtrack(b, state, DensitySpec::Rho0).restricted_to(&mutual);
            let eq =
                density_from_backtrack(b, state, DensitySpec::Equilibrium).restricted_to(&mutual);
            fine_h(&rho, &eq)
        };
        let (h0, h1) = (h(&b0)?, h(&bt)?);
        let rel = (h1 - h0).abs() / h0.abs();
        Ok((
            rel < 0.02,
            format!("fine H {h0:.6} at t=0, {h1:.6} at 2pi, relative change {rel:.2e} (< 2e-2)"),
        ))
    }

    fn psi2_contrast(&self) -> Result<(bool, String)> {
        let h0 = self.hbar_of(&self.psi2, MU0, 0.0, DensitySpec::Rho0)?;
        let standard = self.hbar_of(&self.psi2, MU0, 12.0 * PI, DensitySpec::Rho0)?;
        let modified = self.hbar_of(
            &self.psi2,
            g(2.0, FChoice::F1),
            12.0 * PI,
            DensitySpec::Rho0,
        )?;
        let (a, b) = (standard / h0, modified / h0);
        Ok((
            a > 0.8 && b < 0.15,
            format!("H(12pi)/H(0): mu=0 {a:.3} (> 0.8), mu=2 f1 {b:.3} (< 0.15)"),
        ))
    }
}

/// `(C/π)²`, the factor between raw H̄ and the reference integers.
pub fn scale_factor(geometry: LatticeGeometry) -> f64 {
    let c = geometry.cells as f64 / PI;
    c * c
}

/// Median relative deviation of `|ψ(x₀, 0)|² · exp(∫ div v)` from `|ψ(x, t)|²`
/// at `samples` random interior points. Each accepted step of the adaptive
/// backtrack is re-run as four RK4 substeps carrying the log-Jacobian, with
/// `div v` from central differences of the velocity field. Also returns how
/// many samples backtracked.
pub fn liouville_deviation(
    state: &WaveState,
    spec: GuidanceSpec,
    t: f64,
    samples: usize,
    cfg: &IntegratorConfig,
    seed: u64,
) -> (f64, usize) {
    const H: f64 = 1e-6;
    const SUBSTEPS: usize = 4;
    let guide = Guide::new(state, spec);
    let rhs = |y: [f64; 3], s: f64| -> Option<[f64; 3]> {
        let x = [y[0], y[1]];
        let v = guide.velocity(x, s).ok()?;
        let e = guide.velocity([x[0] + H, x[1]], s).ok()?;
        let w = guide.velocity([x[0] - H, x[1]], s).ok()?;
        let n = guide.velocity([x[0], x[1] + H], s).ok()?;
        let so = guide.velocity([x[0], x[1] - H], s).ok()?;
        Some([v[0], v[1], (e[0] - w[0] + n[1] - so[1]) / (2.0 * H)])
    };
    let add =
        |y: [f64; 3], k: [f64; 3], c: f64| [y[0] + c * k[0], y[1] + c * k[1], y[2] + c * k[2]];
    let backtrack = |x: Point| -> Option<[f64; 3]> {
        let r = integrate_with_path(&guide, x, t, 0.0, cfg, 0.0);
        let path = r.path.filter(|_| r.status == TrajectoryStatus::Ok)?;
        let mut log_j = 0.0;
        for leg in path.windows(2) {
            let ((t0, x0), (t1, _)) = (leg[0], leg[1]);
            let dt = (t1 - t0) / SUBSTEPS as f64;
            let mut y = [x0[0], x0[1], log_j];
            for i in 0..SUBSTEPS {
                let s = t0 + i as f64 * dt;
                let k1 = rhs(y, s)?;
                let k2 = rhs(add(y, k1, dt / 2.0), s + dt / 2.0)?;
                let k3 = rhs(add(y, k2, dt / 2.0), s + dt / 2.0)?;
                let k4 = rhs(add(y, k3, dt), s + dt)?;
                for c in 0..3 {
                    y[c] += dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
                }
            }
            log_j = y[2];
        }
        Some([r.x_final[0], r.x_final[1], log_j])
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut deviations = Vec::with_capacity(samples);
    for _ in 0..samples {
        let x = [
            rng.random_range(0.2..PI - 0.2),
            rng.random_range(0.2..PI - 0.2),
        ];
        if let Some(y) = backtrack(x) {
            let evolved = state.density([y[0], y[1]], 0.0) * y[2].exp();
            deviations.push((evolved / state.density(x, t) - 1.0).abs());
        }
    }
    deviations.sort_by(f64::total_cmp);
    let median = deviations
        .get(deviations.len() / 2)
        .copied()
        .unwrap_or(f64::INFINITY);
    (median, deviations.len())
}

const REFERENCE_T0: [(&str, f64); 6] = [
    ("psi1 rho0", 54.0),
    ("psi1 rho1", 168.0),
    ("psi1 rho2", 169.0),
    ("psi1 rho3", 130.0),
    ("psi1 rho4", 300.0),
    ("psi2 rho0", 17.0),
];

/// Raw t = 0 H̄ values in the order of [`REFERENCE_T0`].
pub fn t0_hbars(geometry: LatticeGeometry) -> Result<Vec<f64>> {
    let cfg = IntegratorConfig::default();
    let mut out = Vec::new();
    for (state, densities) in [
        (WaveState::psi1(), &DensitySpec::NON_EQUILIBRIUM[..]),
        (WaveState::psi2(), &DensitySpec::NON_EQUILIBRIUM[..1]),
    ] {
        let cache = BacktrackCache::new(state, geometry, cfg);
        for &d in densities {
            out.push(cache.report(MU0, 0.0, d)?.hbar);
        }
    }
    Ok(out)
}

fn t0_ratios() -> Result<(bool, String)> {
    let values = t0_hbars(LatticeGeometry::default())?;
    let mut passed = true;
    let mut parts = Vec::new();
    for ((label, reference), v) in REFERENCE_T0.iter().zip(&values) {
        let ratio = v / values[0];
        let expected = reference / REFERENCE_T0[0].1;
        let dev = (ratio / expected - 1.0).abs();
        passed &= dev <= 0.05;
        parts.push(format!(
            "{label} {:.3} ({:+.1}%)",
            ratio * 54.0,
            100.0 * (ratio / expected - 1.0)
        ));
    }
    Ok((
        passed,
        format!("ratios on a 54 base, within 5%: {}", parts.join(", ")),
    ))
}

fn circulation_quantization() -> Result<(bool, String)> {
    const QUADRATURE: usize = 4000;
    const HALF_SIDE: f64 = 0.05;
    let state = WaveState::psi1();
    let paths = track_node(&state, "psi1", 0.0, 2.0, 0.01, 64)?;
    let path = paths
        .first()
        .ok_or_else(|| Error::Config("node path is empty".into()))?;
    let picks = [0, path.samples.len() / 2, path.samples.len() - 1];
    let mut windings = Vec::new();
    let mut worst = 0.0f64;
    for &k in &picks {
        let (t, node) = path.samples[k];
        let c = circulation(&state, MU0, &Loop::square(node, HALF_SIDE)?, t, QUADRATURE)?;
        let n = (c / (2.0 * PI)).round();
        if n != 0.0 {
            worst = worst.max((c - 2.0 * PI * n).abs() / (2.0 * PI * n.abs()));
        } else {
            worst = f64::INFINITY;
        }
        windings.push((t, n));
    }
    let same = windings.windows(2).all(|w| w[0].1 == w[1].1);

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut away = 0.0f64;
    let mut tried = 0;
    while tried < 5 {
        let t: f64 = rng.random_range(0.0..4.0 * PI);
        let centre: Point = [
            rng.random_range(0.4..PI - 0.4),
            rng.random_range(0.4..PI - 0.4),
        ];
        let near = crate::nodes::find_nodes(&state, t, 64)
            .iter()
            .any(|x| (x[0] - centre[0]).abs() < 0.3 && (x[1] - centre[1]).abs() < 0.3);
        if near {
            continue;
        }
        let c = circulation(&state, MU0, &Loop::square(centre, 0.1)?, t, QUADRATURE)?;
        away = away.max(c.abs());
        tried += 1;
    }
    let listed: Vec<String> = windings
        .iter()
        .map(|(t, n)| format!("t={t:.2}: n={n}"))
        .collect();
    Ok((
        same && worst < 1e-3 && away < 1e-4,
        format!(
            "around node [{}], worst relative residual {worst:.1e} (< 1e-3); away from node max |C| {away:.1e} (< 1e-4)",
            listed.join(", ")
        ),
    ))
}

/// Finite-difference divergence of `ε∇f` at `(x, t)`.
pub fn modification_divergence(state: &WaveState, f: FChoice, x: Point, t: f64, h: f64) -> f64 {
    let term = |y: Point| {
        let (_, grad) = f_value_and_grad(state, f, y, t);
        [grad[1], -grad[0]]
    };
    let (e, w) = (term([x[0] + h, x[1]]), term([x[0] - h, x[1]]));
    let (n, s) = (term([x[0], x[1] + h]), term([x[0], x[1] - h]));
    (e[0] - w[0]) / (2.0 * h) + (n[1] - s[1]) / (2.0 * h)
}

fn divergence_free() -> Result<(bool, String)> {
    const H: f64 = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 7);
    let mut worst = 0.0f64;
    for state in [WaveState::psi1(), WaveState::psi2()] {
        for f in [FChoice::F1, FChoice::F2, FChoice::F3] {
            for _ in 0..1000 {
                let x = [rng.random_range(H..PI - H), rng.random_range(H..PI - H)];
                let t = rng.random_range(0.0..4.0 * PI);
                worst = worst.max(modification_divergence(&state, f, x, t, H).abs());
            }
        }
    }
    Ok((
        worst < 1e-6,
        format!("max |div| over 6000 samples {worst:.1e} (< 1e-6)"),
    ))
}

fn flow_composition() -> Result<(bool, String)> {
    const TIGHTENING: f64 = 100.0;
    let state = WaveState::psi1();
    let cfg = IntegratorConfig::default().tightened(TIGHTENING);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 8);
    let mut worst = 0.0f64;
    let mut skipped = 0;
    for spec in [MU0, g(2.0, FChoice::F1)] {
        let mut done = 0;
        while done < 10 {
            let x = [
                rng.random_range(0.2..PI - 0.2),
                rng.random_range(0.2..PI - 0.2),
            ];
            let t_a = rng.random_range(0.5..4.0 * PI);
            match flow_compose_check(&state, spec, x, t_a, &cfg) {
                Ok(d) => {
                    worst = worst.max(d);
                    done += 1;
                }
                Err(Error::TrajectoryFailed(_)) => skipped += 1,
                Err(e) => return Err(e),
            }
        }
    }
    Ok((
        worst < 1e-4,
        format!(
            "max discrepancy {worst:.1e} over 20 starts (< 1e-4), tolerances / {TIGHTENING}; {skipped} unbacktrackable starts redrawn"
        ),
    ))
}

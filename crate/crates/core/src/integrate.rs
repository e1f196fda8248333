//! Adaptive Runge-Kutta-Fehlberg integration with Cash-Karp coefficients.
//!
//! Works in either time direction. A node singularity raised while
//! evaluating any stage is handled like a rejected step: the step is halved
//! and retried, and only persistent failure at `min_step` ends the
//! trajectory.

use serde::{Deserialize, Serialize};

use crate::error::{Error, NodeSingularity, Result};
use crate::guidance::{GuidanceSpec, Guide};
use crate::wavefield::{Point, WaveState, BOX_SIDE};

/// A time-dependent planar velocity field that may refuse to evaluate.
pub trait VelocityField: Sync {
    fn velocity(&self, x: Point, t: f64) -> Result<[f64; 2], NodeSingularity>;
}

/// Adapts a plain closure, mostly for tests and benchmarks.
pub struct FnField<F>(pub F);

impl<F> VelocityField for FnField<F>
where
    F: Fn(Point, f64) -> [f64; 2] + Sync,
{
    fn velocity(&self, x: Point, t: f64) -> Result<[f64; 2], NodeSingularity> {
        Ok((self.0)(x, t))
    }
}

mod cash_karp {
    pub const C: [f64; 6] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 3.0 / 5.0, 1.0, 7.0 / 8.0];

    pub const A: [[f64; 5]; 6] = [
        [0.0; 5],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
        [3.0 / 10.0, -9.0 / 10.0, 6.0 / 5.0, 0.0, 0.0],
        [-11.0 / 54.0, 5.0 / 2.0, -70.0 / 27.0, 35.0 / 27.0, 0.0],
        [
            1631.0 / 55296.0,
            175.0 / 512.0,
            575.0 / 13824.0,
            44275.0 / 110592.0,
            253.0 / 4096.0,
        ],
    ];

    /// Fifth-order weights.
    pub const B5: [f64; 6] = [
        37.0 / 378.0,
        0.0,
        250.0 / 621.0,
        125.0 / 594.0,
        0.0,
        512.0 / 1771.0,
    ];

    /// Fourth-order (embedded) weights.
    pub const B4: [f64; 6] = [
        2825.0 / 27648.0,
        0.0,
        18575.0 / 48384.0,
        13525.0 / 55296.0,
        277.0 / 14336.0,
        1.0 / 4.0,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub initial_step: f64,
    /// Attempted steps (accepted plus rejected).
    pub max_steps: u64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub safety: f64,
    pub min_step: f64,
    pub max_step: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            initial_step: 1e-5,
            max_steps: 100_000,
            abs_tol: 1e-8,
            rel_tol: 1e-8,
            safety: 0.9,
            min_step: 1e-14,
            max_step: 1e-1,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let ok_steps = self.min_step > 0.0
            && self.min_step <= self.initial_step
            && self.initial_step <= self.max_step;
        if !ok_steps {
            return Err(Error::Integrator(format!(
                "need 0 < min_step <= initial_step <= max_step, got {} / {} / {}",
                self.min_step, self.initial_step, self.max_step
            )));
        }
        if self.max_steps < 1 {
            return Err(Error::Integrator("max_steps must be at least 1".into()));
        }
        if !(self.abs_tol > 0.0 && self.rel_tol >= 0.0) {
            return Err(Error::Integrator("tolerances must be positive".into()));
        }
        if !(self.safety > 0.0 && self.safety < 1.0) {
            return Err(Error::Integrator(format!(
                "safety must lie in (0, 1), got {}",
                self.safety
            )));
        }
        Ok(())
    }

    /// Same config with both tolerances divided by `factor`.
    pub fn tightened(mut self, factor: f64) -> Self {
        self.abs_tol /= factor;
        self.rel_tol /= factor;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrajectoryStatus {
    Ok,
    MaxStepsExceeded,
    StepUnderflow,
    LeftBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryResult {
    pub x_final: Point,
    pub status: TrajectoryStatus,
    pub steps_taken: u64,
    /// `(t, x)` samples of accepted steps, when requested.
    pub path: Option<Vec<(f64, Point)>>,
}

impl TrajectoryResult {
    pub fn is_ok(&self) -> bool {
        self.status == TrajectoryStatus::Ok
    }
}

/// One embedded Cash-Karp step of signed size `h`.
///
/// Returns the fifth-order solution and the difference between the fifth-
/// and fourth-order solutions.
pub fn rk_step<F: VelocityField + ?Sized>(
    field: &F,
    x: Point,
    t: f64,
    h: f64,
) -> Result<(Point, [f64; 2]), NodeSingularity> {
    use cash_karp::{A, B4, B5, C};

    let mut k = [[0.0f64; 2]; 6];
    for stage in 0..6 {
        let mut xs = x;
        for (j, kj) in k.iter().enumerate().take(stage) {
            let a = A[stage][j];
            xs[0] += h * a * kj[0];
            xs[1] += h * a * kj[1];
        }
        k[stage] = field.velocity(xs, t + C[stage] * h)?;
    }

    let mut out = x;
    let mut err = [0.0; 2];
    for (s, ks) in k.iter().enumerate() {
        for d in 0..2 {
            out[d] += h * B5[s] * ks[d];
            err[d] += h * (B5[s] - B4[s]) * ks[d];
        }
    }
    Ok((out, err))
}

fn strictly_inside(x: Point) -> bool {
    x[0] > 0.0 && x[0] < BOX_SIDE && x[1] > 0.0 && x[1] < BOX_SIDE
}

// Below this error ratio the step grows by the maximum factor.
const MAX_GROWTH: f64 = 5.0;
const MIN_SHRINK: f64 = 0.1;

/// Integrates `dX/dt = v(X, t)` from `t0` to `t1` (either direction).
pub fn integrate<F: VelocityField + ?Sized>(
    field: &F,
    x0: Point,
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> TrajectoryResult {
    run(field, x0, t0, t1, cfg, None)
}

/// As [`integrate`], also recording accepted points at least `interval` apart.
pub fn integrate_with_path<F: VelocityField + ?Sized>(
    field: &F,
    x0: Point,
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    interval: f64,
) -> TrajectoryResult {
    run(field, x0, t0, t1, cfg, Some(interval))
}

fn run<F: VelocityField + ?Sized>(
    field: &F,
    x0: Point,
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    interval: Option<f64>,
) -> TrajectoryResult {
    let mut path = interval.map(|_| vec![(t0, x0)]);
    let done = |x_final, status, steps_taken, path: Option<Vec<(f64, Point)>>| TrajectoryResult {
        x_final,
        status,
        steps_taken,
        path,
    };
    if t1 == t0 {
        return done(x0, TrajectoryStatus::Ok, 0, path);
    }

    let dir = if t1 > t0 { 1.0 } else { -1.0 };
    let mut t = t0;
    let mut x = x0;
    let mut h = cfg.initial_step;
    let mut steps = 0u64;
    let mut last_sample = t0;

    loop {
        if steps >= cfg.max_steps {
            return done(x, TrajectoryStatus::MaxStepsExceeded, steps, path);
        }
        let remaining = (t1 - t).abs();
        let last = h >= remaining;
        let hs = if last { remaining } else { h };
        if t + dir * hs == t {
            return done(x, TrajectoryStatus::StepUnderflow, steps, path);
        }
        steps += 1;

        let (x_new, err) = match rk_step(field, x, t, dir * hs) {
            Ok(step) => step,
            Err(_) => {
                if hs <= cfg.min_step {
                    return done(x, TrajectoryStatus::StepUnderflow, steps, path);
                }
                h = (0.5 * hs).max(cfg.min_step);
                continue;
            }
        };

        let ratio = (0..2)
            .map(|d| err[d].abs() / (cfg.abs_tol + cfg.rel_tol * x[d].abs()))
            .fold(0.0f64, f64::max);
        if !ratio.is_finite() || ratio > 1.0 {
            if hs <= cfg.min_step {
                return done(x, TrajectoryStatus::StepUnderflow, steps, path);
            }
            let shrink = if ratio.is_finite() {
                (cfg.safety * ratio.powf(-0.25)).max(MIN_SHRINK)
            } else {
                MIN_SHRINK
            };
            h = (hs * shrink).max(cfg.min_step);
            continue;
        }

        if !strictly_inside(x_new) {
            if hs <= cfg.min_step {
                return done(x, TrajectoryStatus::LeftBox, steps, path);
            }
            h = (0.5 * hs).max(cfg.min_step);
            continue;
        }

        x = x_new;
        t = if last { t1 } else { t + dir * hs };
        if let (Some(p), Some(dt)) = (path.as_mut(), interval) {
            if last || (t - last_sample).abs() >= dt {
                p.push((t, x));
                last_sample = t;
            }
        }
        if last {
            return done(x, TrajectoryStatus::Ok, steps, path);
        }

        let growth = if ratio > 0.0 {
            (cfg.safety * ratio.powf(-0.2)).min(MAX_GROWTH)
        } else {
            MAX_GROWTH
        };
        h = (hs * growth).clamp(cfg.min_step, cfg.max_step);
    }
}

/// Distance between the direct flow over `[0, τ + t_a]` and the composition
/// of the flow over `[0, τ]` with the flow over `[0, t_a]`, `τ` the period.
///
/// Periodicity of the velocity field makes the two maps identical, so the
/// result measures integration error only.
pub fn flow_compose_check(
    state: &WaveState,
    spec: GuidanceSpec,
    x0: Point,
    t_a: f64,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    let field = Guide::new(state, spec);
    let tau = state.period();
    let leg = |x: Point, from: f64, to: f64| -> Result<Point> {
        let r = integrate(&field, x, from, to, cfg);
        match r.status {
            TrajectoryStatus::Ok => Ok(r.x_final),
            status => Err(Error::TrajectoryFailed(status)),
        }
    };
    let direct = leg(x0, 0.0, t_a + tau)?;
    let x_tau = leg(x0, 0.0, tau)?;
    let composed = leg(x_tau, 0.0, t_a)?;
    Ok(((direct[0] - composed[0]).powi(2) + (direct[1] - composed[1]).powi(2)).sqrt())
}

//! Guidance fields `v = v_s + μ ε∇f / |ψ|²` and their vorticity diagnostics.
//!
//! The antisymmetric symbol is oriented with `ε₁₂ = +1`, so the additive term
//! is `μ (∂₂f, −∂₁f) / |ψ|²`.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, NodeSingularity, Result};
use crate::integrate::VelocityField;
use crate::wavefield::{Partials, Point, WaveState, BOX_SIDE};

/// Default density floor: guards against underflow only.
pub const DEFAULT_DENSITY_FLOOR: f64 = 1e-300;

/// Which stream function generates the divergence-free additive current.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FChoice {
    /// No additive term; ordinary guidance.
    None,
    /// `f = |ψ|²`
    F1,
    /// `f = ∂₁j₂ − ∂₂j₁`
    F2,
    /// `f = ∂₁j₁ + ∂₂j₂`
    F3,
}

impl FChoice {
    /// Derivative order of ψ needed for `∇f`.
    pub fn gradient_order(self) -> usize {
        match self {
            FChoice::None | FChoice::F1 => 1,
            FChoice::F2 => 2,
            FChoice::F3 => 3,
        }
    }
}

impl fmt::Display for FChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FChoice::None => "none",
            FChoice::F1 => "f1",
            FChoice::F2 => "f2",
            FChoice::F3 => "f3",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceSpec {
    pub mu: f64,
    #[serde(rename = "f")]
    pub f_choice: FChoice,
}

impl GuidanceSpec {
    pub const STANDARD: GuidanceSpec = GuidanceSpec {
        mu: 0.0,
        f_choice: FChoice::None,
    };

    pub fn new(mu: f64, f_choice: FChoice) -> Self {
        GuidanceSpec { mu, f_choice }
    }

    /// True when the additive term vanishes identically.
    pub fn is_standard(&self) -> bool {
        self.mu == 0.0 || self.f_choice == FChoice::None
    }

    fn order(&self) -> usize {
        if self.is_standard() {
            1
        } else {
            self.f_choice.gradient_order()
        }
    }
}

impl fmt::Display for GuidanceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_standard() {
            write!(f, "mu=0")
        } else {
            write!(f, "mu={} {}", self.mu, self.f_choice)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocitySample {
    pub v: [f64; 2],
    pub v_s: [f64; 2],
    pub density: f64,
}

fn strictly_inside(x: Point) -> bool {
    x[0] > 0.0 && x[0] < BOX_SIDE && x[1] > 0.0 && x[1] < BOX_SIDE
}

/// `(f, ∇f)` for the chosen stream function. `None` yields zeros.
pub fn f_value_and_grad(state: &WaveState, choice: FChoice, x: Point, t: f64) -> (f64, [f64; 2]) {
    let p = state.partials(x, t, choice.gradient_order());
    stream_function(&p, choice)
}

fn stream_function(p: &Partials, choice: FChoice) -> (f64, [f64; 2]) {
    let psi = p.get(0, 0);
    let conj = psi.conj();
    let d1 = p.get(1, 0);
    let d2 = p.get(0, 1);
    match choice {
        FChoice::None => (0.0, [0.0, 0.0]),
        FChoice::F1 => (psi.norm_sqr(), [2.0 * (conj * d1).re, 2.0 * (conj * d2).re]),
        FChoice::F2 => {
            let (d11, d12, d22) = (p.get(2, 0), p.get(1, 1), p.get(0, 2));
            (
                2.0 * (d1.conj() * d2).im,
                [
                    2.0 * (d11.conj() * d2 + d1.conj() * d12).im,
                    2.0 * (d12.conj() * d2 + d1.conj() * d22).im,
                ],
            )
        }
        FChoice::F3 => {
            let lap = p.get(2, 0) + p.get(0, 2);
            let lap1 = p.get(3, 0) + p.get(1, 2);
            let lap2 = p.get(2, 1) + p.get(0, 3);
            (
                (conj * lap).im,
                [
                    (d1.conj() * lap + conj * lap1).im,
                    (d2.conj() * lap + conj * lap2).im,
                ],
            )
        }
    }
}

/// Velocity with the default density floor.
pub fn velocity(
    state: &WaveState,
    spec: GuidanceSpec,
    x: Point,
    t: f64,
) -> Result<VelocitySample, NodeSingularity> {
    Guide::new(state, spec).sample(x, t)
}

/// A wave state paired with a guidance law; the integrator's velocity field.
#[derive(Debug, Clone, Copy)]
pub struct Guide<'a> {
    pub state: &'a WaveState,
    pub spec: GuidanceSpec,
    pub density_floor: f64,
}

impl<'a> Guide<'a> {
    pub fn new(state: &'a WaveState, spec: GuidanceSpec) -> Self {
        Guide {
            state,
            spec,
            density_floor: DEFAULT_DENSITY_FLOOR,
        }
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.density_floor = floor;
        self
    }

    pub fn sample(&self, x: Point, t: f64) -> Result<VelocitySample, NodeSingularity> {
        if !strictly_inside(x) {
            return Err(NodeSingularity { x, density: 0.0 });
        }
        let p = self.state.partials(x, t, self.spec.order());
        let psi = p.get(0, 0);
        let density = psi.norm_sqr();
        if !(density > self.density_floor) {
            return Err(NodeSingularity { x, density });
        }
        let conj = psi.conj();
        let v_s = [
            (conj * p.get(1, 0)).im / density,
            (conj * p.get(0, 1)).im / density,
        ];
        if self.spec.is_standard() {
            return Ok(VelocitySample {
                v: v_s,
                v_s,
                density,
            });
        }
        let (_, grad_f) = stream_function(&p, self.spec.f_choice);
        let mu = self.spec.mu;
        let v = [
            v_s[0] + mu * grad_f[1] / density,
            v_s[1] - mu * grad_f[0] / density,
        ];
        Ok(VelocitySample { v, v_s, density })
    }

    /// Total current `j_s + μ ε∇f`; finite everywhere including walls.
    pub fn current(&self, x: Point, t: f64) -> [f64; 2] {
        let p = self.state.partials(x, t, self.spec.order());
        let conj = p.get(0, 0).conj();
        let j = [(conj * p.get(1, 0)).im, (conj * p.get(0, 1)).im];
        if self.spec.is_standard() {
            return j;
        }
        let (_, g) = stream_function(&p, self.spec.f_choice);
        [j[0] + self.spec.mu * g[1], j[1] - self.spec.mu * g[0]]
    }

    /// Scalar vorticity `∂₁v₂ − ∂₂v₁` away from nodes.
    ///
    /// With `v = J/ρ`, `curl v = (curl J)/ρ − (∂₁ρ J₂ − ∂₂ρ J₁)/ρ²` and
    /// `curl J = curl j_s − μ Δf`.
    pub fn vorticity(&self, x: Point, t: f64) -> Result<f64, NodeSingularity> {
        if !strictly_inside(x) {
            return Err(NodeSingularity { x, density: 0.0 });
        }
        let p = self.state.partials(x, t, 4);
        let psi = p.get(0, 0);
        let density = psi.norm_sqr();
        if !(density > self.density_floor) {
            return Err(NodeSingularity { x, density });
        }
        let conj = psi.conj();
        let (d1, d2) = (p.get(1, 0), p.get(0, 1));
        let grad_rho = [2.0 * (conj * d1).re, 2.0 * (conj * d2).re];
        let mut current = [(conj * d1).im, (conj * d2).im];
        let mut curl = 2.0 * (d1.conj() * d2).im;
        if !self.spec.is_standard() {
            let (_, g) = stream_function(&p, self.spec.f_choice);
            current[0] += self.spec.mu * g[1];
            current[1] -= self.spec.mu * g[0];
            curl -= self.spec.mu * laplacian_of_f(&p, self.spec.f_choice);
        }
        Ok(curl / density
            - (grad_rho[0] * current[1] - grad_rho[1] * current[0]) / (density * density))
    }
}

impl VelocityField for Guide<'_> {
    #[inline]
    fn velocity(&self, x: Point, t: f64) -> Result<[f64; 2], NodeSingularity> {
        self.sample(x, t).map(|s| s.v)
    }
}

fn laplacian_of_f(p: &Partials, choice: FChoice) -> f64 {
    let psi = p.get(0, 0);
    let conj = psi.conj();
    let (d1, d2) = (p.get(1, 0), p.get(0, 1));
    let (d11, d12, d22) = (p.get(2, 0), p.get(1, 1), p.get(0, 2));
    let lap = d11 + d22;
    match choice {
        FChoice::None => 0.0,
        FChoice::F1 => 2.0 * (d1.norm_sqr() + d2.norm_sqr()) + 2.0 * (conj * lap).re,
        FChoice::F2 => {
            let (d111, d112, d122, d222) = (p.get(3, 0), p.get(2, 1), p.get(1, 2), p.get(0, 3));
            let a1 = d111.conj() * d2 + 2.0 * d11.conj() * d12 + d1.conj() * d112;
            let a2 = d122.conj() * d2 + 2.0 * d12.conj() * d22 + d1.conj() * d222;
            2.0 * (a1 + a2).im
        }
        FChoice::F3 => {
            let lap1 = p.get(3, 0) + p.get(1, 2);
            let lap2 = p.get(2, 1) + p.get(0, 3);
            let lap11 = p.get(4, 0) + p.get(2, 2);
            let lap22 = p.get(2, 2) + p.get(0, 4);
            let term = |daa: Complex64, da: Complex64, lap_a: Complex64, lap_aa: Complex64| {
                daa.conj() * lap + 2.0 * da.conj() * lap_a + conj * lap_aa
            };
            (term(d11, d1, lap1, lap11) + term(d22, d2, lap2, lap22)).im
        }
    }
}

pub fn vorticity(state: &WaveState, spec: GuidanceSpec, x: Point, t: f64) -> Result<f64> {
    Ok(Guide::new(state, spec).vorticity(x, t)?)
}

/// Closed polyline; the last vertex connects back to the first.
#[derive(Debug, Clone, PartialEq)]
pub struct Loop {
    vertices: Vec<Point>,
}

impl Loop {
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::Loop(format!(
                "need at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if let Some(v) = vertices.iter().find(|v| !strictly_inside(**v)) {
            return Err(Error::Loop(format!(
                "vertex ({}, {}) is not strictly inside the box",
                v[0], v[1]
            )));
        }
        Ok(Loop { vertices })
    }

    /// Counter-clockwise axis-aligned square.
    pub fn square(center: Point, half_side: f64) -> Result<Self> {
        let [cx, cy] = center;
        let h = half_side;
        Self::new(vec![
            [cx - h, cy - h],
            [cx + h, cy - h],
            [cx + h, cy + h],
            [cx - h, cy + h],
        ])
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }
}

/// `∮ v·dl` by the composite midpoint rule with `quadrature_n` panels per edge.
pub fn circulation(
    state: &WaveState,
    spec: GuidanceSpec,
    path: &Loop,
    t: f64,
    quadrature_n: usize,
) -> Result<f64> {
    if quadrature_n == 0 {
        return Err(Error::Loop("quadrature_n must be positive".into()));
    }
    let guide = Guide::new(state, spec);
    let mut total = 0.0;
    for (a, b) in path.edges() {
        let dl = [
            (b[0] - a[0]) / quadrature_n as f64,
            (b[1] - a[1]) / quadrature_n as f64,
        ];
        let mut edge = 0.0;
        for k in 0..quadrature_n {
            let s = (k as f64 + 0.5) / quadrature_n as f64;
            let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
            let v = guide.velocity(x, t)?;
            edge += v[0] * dl[0] + v[1] * dl[1];
        }
        total += edge;
    }
    Ok(total)
}

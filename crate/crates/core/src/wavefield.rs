//! Box eigenstates, their superpositions and analytic derivative jets.
//!
//! Units are fixed: `ħ = m = 1` and the box is `[0, π]²`. Every mode evolves
//! by its own phase factor `exp(i(θ − E t))`, so evaluation at arbitrary `t`
//! is exact and costs one pass over the modes.

use std::f64::consts::{FRAC_2_PI, PI};

use num_complex::Complex64;
use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A position in the box, `(x₁, x₂)`.
pub type Point = [f64; 2];

pub const BOX_SIDE: f64 = PI;

/// Highest total derivative order held by a [`Partials`] table.
pub const MAX_ORDER: usize = 4;
const TABLE_LEN: usize = (MAX_ORDER + 1) * (MAX_ORDER + 2) / 2;

const NORMALIZATION_TOL: f64 = 1e-12;

/// Phases of the four lowest modes used by both reference superpositions.
pub const THETA_11: f64 = 1.152_598_892_609_329_7;
pub const THETA_12: f64 = 4.277_576_211_602_466_5;
pub const THETA_21: f64 = 2.166_032_988_855_502_5;
pub const THETA_22: f64 = 2.896_055_421_880_634_9;

pub fn in_box(x: Point) -> bool {
    (0.0..=BOX_SIDE).contains(&x[0]) && (0.0..=BOX_SIDE).contains(&x[1])
}

/// Normalized box eigenfunction `(2/π) sin(m x₁) sin(n x₂)`.
pub fn eigenmode(m: u32, n: u32, x: Point) -> Result<f64> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidMode { m, n });
    }
    if !in_box(x) {
        return Err(Error::OutOfBox(x[0], x[1]));
    }
    Ok(FRAC_2_PI * (m as f64 * x[0]).sin() * (n as f64 * x[1]).sin())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub m: u32,
    pub n: u32,
    pub amplitude: f64,
    pub phase: f64,
}

impl Mode {
    pub fn new(m: u32, n: u32, amplitude: f64, phase: f64) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::InvalidMode { m, n });
        }
        if !(amplitude.is_finite() && amplitude >= 0.0) {
            return Err(Error::InvalidAmplitude(amplitude));
        }
        Ok(Mode {
            m,
            n,
            amplitude,
            phase,
        })
    }

    /// `m² + n²`, twice the energy.
    pub fn level(&self) -> u32 {
        self.m * self.m + self.n * self.n
    }

    pub fn energy(&self) -> f64 {
        0.5 * self.level() as f64
    }
}

/// Immutable superposition of box eigenmodes.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    modes: Vec<Mode>,
    terms: Vec<Term>,
    max_m: usize,
    max_n: usize,
    max_level: usize,
}

impl WaveState {
    pub fn new(modes: Vec<Mode>) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::EmptyState);
        }
        for mode in &modes {
            Mode::new(mode.m, mode.n, mode.amplitude, mode.phase)?;
        }
        let norm: f64 = modes.iter().map(|m| m.amplitude * m.amplitude).sum();
        if (norm - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::NotNormalized(norm));
        }
        let max_m = modes.iter().map(|m| m.m).max().unwrap_or(1) as usize;
        let max_n = modes.iter().map(|m| m.n).max().unwrap_or(1) as usize;
        let terms = modes.iter().map(Term::from).collect();
        let max_level = modes.iter().map(Mode::level).max().unwrap_or(2) as usize;
        Ok(WaveState {
            modes,
            terms,
            max_m,
            max_level,
            max_n,
        })
    }

    /// Equal-weight superposition of the four lowest modes. Has one moving node.
    pub fn psi1() -> Self {
        Self::lowest_four([0.5; 4])
    }

    /// Ground-state dominated superposition of the four lowest modes; nodeless.
    pub fn psi2() -> Self {
        let minor = 1.0 / (2.0 * 3f64.sqrt());
        Self::lowest_four([3f64.sqrt() / 2.0, minor, minor, minor])
    }

    /// A single eigenmode with unit amplitude and zero phase.
    pub fn single(m: u32, n: u32) -> Result<Self> {
        Self::new(vec![Mode::new(m, n, 1.0, 0.0)?])
    }

    /// Resolves the builder names accepted in run configs.
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "psi1" => Some(Self::psi1()),
            "psi2" => Some(Self::psi2()),
            _ => None,
        }
    }

    fn lowest_four(amplitudes: [f64; 4]) -> Self {
        let quantum = [
            (1, 1, THETA_11),
            (1, 2, THETA_12),
            (2, 1, THETA_21),
            (2, 2, THETA_22),
        ];
        let modes = quantum
            .iter()
            .zip(amplitudes)
            .map(|(&(m, n, phase), amplitude)| Mode {
                m,
                n,
                amplitude,
                phase,
            })
            .collect();
        Self::new(modes).expect("reference superpositions are normalized")
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    /// Smallest `τ > 0` with `ψ(x, t + τ) = ψ(x, t)`, global phase included.
    ///
    /// Every energy is `k/2` for an integer level `k = m² + n²`, so the period
    /// is `4π / gcd(k)`.
    pub fn period(&self) -> f64 {
        let g = self
            .modes
            .iter()
            .map(Mode::level)
            .fold(0u32, |acc, k| acc.gcd(&k));
        4.0 * PI / g as f64
    }

    pub fn value(&self, x: Point, t: f64) -> Complex64 {
        self.partials(x, t, 0).get(0, 0)
    }

    pub fn density(&self, x: Point, t: f64) -> f64 {
        self.value(x, t).norm_sqr()
    }

    /// ψ with all partial derivatives up to third order.
    pub fn jet(&self, x: Point, t: f64) -> ComplexJet {
        ComplexJet::from(&self.partials(x, t, 3))
    }

    pub fn current(&self, x: Point, t: f64) -> CurrentJet {
        CurrentJet::from(&self.jet(x, t))
    }

    /// A single mixed partial `∂₁ᵖ ∂₂ᵠ ψ` of any order.
    pub fn partial(&self, x: Point, t: f64, p: usize, q: usize) -> Complex64 {
        self.modes
            .iter()
            .map(|mode| {
                mode_coefficient(mode, t)
                    * sin_derivative(mode.m as f64, x[0], p)
                    * sin_derivative(mode.n as f64, x[1], q)
            })
            .sum()
    }

    /// Table of all partials up to `order` (at most [`MAX_ORDER`]).
    ///
    /// Entries above `order` are left at zero.
    pub fn partials(&self, x: Point, t: f64, order: usize) -> Partials {
        match order {
            0 => self.partials_to::<0>(x, t),
            1 => self.partials_to::<1>(x, t),
            2 => self.partials_to::<2>(x, t),
            3 => self.partials_to::<3>(x, t),
            4 => self.partials_to::<4>(x, t),
            _ => panic!("derivative order {order} exceeds {MAX_ORDER}"),
        }
    }

    fn partials_to<const ORDER: usize>(&self, x: Point, t: f64) -> Partials {
        let a1 = AngleTable::new(x[0], self.max_m);
        let a2 = AngleTable::new(x[1], self.max_n);
        let phases = PhaseTable::new(t, self.max_level);

        let mut d = [Complex64::new(0.0, 0.0); TABLE_LEN];
        for term in &self.terms {
            let coef = term.weight * phases.get(term.level);
            let f1 = derivative_ladder::<ORDER>(term.kx, a1.get(term.m));
            let f2 = derivative_ladder::<ORDER>(term.ky, a2.get(term.n));
            let mut base = 0;
            for total in 0..=ORDER {
                for q in 0..=total {
                    d[base + q] += coef * (f1[total - q] * f2[q]);
                }
                base += total + 1;
            }
        }
        Partials { d, order: ORDER }
    }
}

/// Per-mode data for the partials kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Term {
    // amplitude · (2/π) · e^{iθ}
    weight: Complex64,
    m: u32,
    n: u32,
    level: u32,
    kx: f64,
    ky: f64,
}

impl From<&Mode> for Term {
    fn from(mode: &Mode) -> Self {
        Term {
            weight: Complex64::from_polar(mode.amplitude * FRAC_2_PI, mode.phase),
            m: mode.m,
            n: mode.n,
            level: mode.level(),
            kx: mode.m as f64,
            ky: mode.n as f64,
        }
    }
}

/// `amplitude · (2/π) · e^{i(θ − E t)}`
#[inline]
fn mode_coefficient(mode: &Mode, t: f64) -> Complex64 {
    Complex64::from_polar(mode.amplitude * FRAC_2_PI, mode.phase - mode.energy() * t)
}

const ANGLE_CACHE: usize = 8;
const PHASE_CACHE: usize = 17;

/// `(sin kx, cos kx)` for small `k` by angle addition, direct otherwise.
struct AngleTable {
    x: f64,
    cached: [(f64, f64); ANGLE_CACHE],
}

impl AngleTable {
    #[inline]
    fn new(x: f64, max: usize) -> Self {
        let mut cached = [(0.0, 1.0); ANGLE_CACHE];
        let (s, c) = x.sin_cos();
        let top = max.min(ANGLE_CACHE - 1);
        let mut k = 1;
        while k <= top {
            let (sk, ck) = cached[k - 1];
            cached[k] = (sk * c + ck * s, ck * c - sk * s);
            k += 1;
        }
        AngleTable { x, cached }
    }

    #[inline]
    fn get(&self, k: u32) -> (f64, f64) {
        match self.cached.get(k as usize) {
            Some(&sc) => sc,
            None => (k as f64 * self.x).sin_cos(),
        }
    }
}

/// `e^{-i level t/2}` as powers of one unit phase for small levels.
struct PhaseTable {
    t: f64,
    cached: [Complex64; PHASE_CACHE],
}

impl PhaseTable {
    #[inline]
    fn new(t: f64, max: usize) -> Self {
        let mut cached = [Complex64::new(1.0, 0.0); PHASE_CACHE];
        let unit = Complex64::from_polar(1.0, -0.5 * t);
        let top = max.min(PHASE_CACHE - 1);
        let mut k = 1;
        while k <= top {
            cached[k] = cached[k - 1] * unit;
            k += 1;
        }
        PhaseTable { t, cached }
    }

    #[inline]
    fn get(&self, level: u32) -> Complex64 {
        match self.cached.get(level as usize) {
            Some(&z) => z,
            None => Complex64::from_polar(1.0, -0.5 * level as f64 * self.t),
        }
    }
}

/// Derivatives of `sin(k x)` up to `ORDER`, given `(sin kx, cos kx)`.
#[inline(always)]
fn derivative_ladder<const ORDER: usize>(k: f64, (s, c): (f64, f64)) -> [f64; MAX_ORDER + 1] {
    let mut out = [0.0; MAX_ORDER + 1];
    out[0] = s;
    if ORDER >= 1 {
        out[1] = k * c;
    }
    if ORDER >= 2 {
        out[2] = -k * k * s;
    }
    if ORDER >= 3 {
        out[3] = -k * k * k * c;
    }
    if ORDER >= 4 {
        out[4] = k * k * k * k * s;
    }
    out
}

fn sin_derivative(k: f64, x: f64, p: usize) -> f64 {
    let (s, c) = (k * x).sin_cos();
    let cycle = [s, c, -s, -c];
    k.powi(p as i32) * cycle[p % 4]
}

/// Triangular table of `∂₁ᵖ ∂₂ᵠ ψ` for `p + q ≤ order`.
#[derive(Debug, Clone, Copy)]
pub struct Partials {
    d: [Complex64; TABLE_LEN],
    order: usize,
}

impl Partials {
    #[inline]
    pub fn get(&self, p: usize, q: usize) -> Complex64 {
        let total = p + q;
        debug_assert!(total <= self.order);
        self.d[total * (total + 1) / 2 + q]
    }

    pub fn order(&self) -> usize {
        self.order
    }
}

/// ψ and its partials to third order. Mixed partials are stored once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexJet {
    pub value: Complex64,
    /// `(∂₁, ∂₂)`
    pub grad: [Complex64; 2],
    /// `(∂₁₁, ∂₁₂, ∂₂₂)`
    pub hess: [Complex64; 3],
    /// `(∂₁₁₁, ∂₁₁₂, ∂₁₂₂, ∂₂₂₂)`
    pub third: [Complex64; 4],
}

impl From<&Partials> for ComplexJet {
    fn from(p: &Partials) -> Self {
        assert!(p.order >= 3);
        ComplexJet {
            value: p.get(0, 0),
            grad: [p.get(1, 0), p.get(0, 1)],
            hess: [p.get(2, 0), p.get(1, 1), p.get(0, 2)],
            third: [p.get(3, 0), p.get(2, 1), p.get(1, 2), p.get(0, 3)],
        }
    }
}

/// Standard current `j = Im(ψ* ∇ψ)` with the derived scalars the guidance
/// fields are built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurrentJet {
    pub j: [f64; 2],
    pub div_j: f64,
    /// `∂₁ j₂ − ∂₂ j₁`
    pub curl_j: f64,
    pub grad_div_j: [f64; 2],
    pub grad_curl_j: [f64; 2],
    pub density: f64,
    pub grad_density: [f64; 2],
}

impl From<&ComplexJet> for CurrentJet {
    fn from(jet: &ComplexJet) -> Self {
        let psi = jet.value;
        let [d1, d2] = jet.grad;
        let [d11, d12, d22] = jet.hess;
        let [d111, d112, d122, d222] = jet.third;
        let conj = psi.conj();

        let lap = d11 + d22;
        let lap_grad = [d111 + d122, d112 + d222];

        CurrentJet {
            j: [(conj * d1).im, (conj * d2).im],
            div_j: (conj * lap).im,
            curl_j: 2.0 * (d1.conj() * d2).im,
            grad_div_j: [
                (d1.conj() * lap + conj * lap_grad[0]).im,
                (d2.conj() * lap + conj * lap_grad[1]).im,
            ],
            grad_curl_j: [
                2.0 * (d11.conj() * d2 + d1.conj() * d12).im,
                2.0 * (d12.conj() * d2 + d1.conj() * d22).im,
            ],
            density: psi.norm_sqr(),
            grad_density: [2.0 * (conj * d1).re, 2.0 * (conj * d2).re],
        }
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    use approx::assert_relative_eq;

    use super::*;

    #[test]
    fn eigenmode_examples() {
        assert_relative_eq!(eigenmode(1, 1, [FRAC_PI_2, FRAC_PI_2]).unwrap(), FRAC_2_PI);
        assert_eq!(eigenmode(1, 1, [0.0, FRAC_PI_2]).unwrap(), 0.0);
        assert!(eigenmode(2, 1, [FRAC_PI_2, FRAC_PI_2]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn eigenmode_rejects_outside_points() {
        assert!(matches!(
            eigenmode(1, 1, [-0.1, 1.0]),
            Err(Error::OutOfBox(..))
        ));
        assert!(matches!(
            eigenmode(1, 1, [1.0, 3.2]),
            Err(Error::OutOfBox(..))
        ));
        assert!(matches!(
            eigenmode(0, 1, [1.0, 1.0]),
            Err(Error::InvalidMode { .. })
        ));
    }

    #[test]
    fn reference_states() {
        let psi1 = WaveState::psi1();
        assert_eq!(psi1.modes().len(), 4);
        let norm: f64 = psi1.modes().iter().map(|m| m.amplitude.powi(2)).sum();
        assert_relative_eq!(norm, 1.0, epsilon = 1e-15);
        assert_eq!(psi1.modes()[1].phase, 4.2775762116024665);

        let psi2 = WaveState::psi2();
        assert_relative_eq!(psi2.modes()[0].amplitude.powi(2), 0.75, epsilon = 1e-15);
        assert_relative_eq!(
            psi2.modes()[3].amplitude.powi(2),
            1.0 / 12.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn periods() {
        assert_relative_eq!(WaveState::psi1().period(), 4.0 * PI);
        assert_relative_eq!(WaveState::psi2().period(), 4.0 * PI);
        assert_relative_eq!(WaveState::single(1, 1).unwrap().period(), 2.0 * PI);
        // levels 5 and 10 share a factor 5
        let s = WaveState::new(vec![
            Mode::new(1, 2, 0.6, 0.0).unwrap(),
            Mode::new(1, 3, 0.8, 1.0).unwrap(),
        ])
        .unwrap();
        assert_relative_eq!(s.period(), 4.0 * PI / 5.0);
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(WaveState::new(vec![]), Err(Error::EmptyState)));
        let half = Mode::new(1, 1, 0.5, 0.0).unwrap();
        assert!(matches!(
            WaveState::new(vec![half]),
            Err(Error::NotNormalized(_))
        ));
        assert!(Mode::new(1, 1, -0.1, 0.0).is_err());
    }

    #[test]
    fn single_mode_jet_at_centre() {
        let s = WaveState::single(1, 1).unwrap();
        let jet = s.jet([FRAC_PI_2, FRAC_PI_2], 0.0);
        assert_relative_eq!(jet.value.re, FRAC_2_PI, epsilon = 1e-15);
        assert!(jet.grad[0].norm() < 1e-15 && jet.grad[1].norm() < 1e-15);
    }

    #[test]
    fn single_mode_carries_no_current() {
        let s = WaveState::single(2, 1).unwrap();
        for &x in &[[0.3, 0.7], [FRAC_PI_4, 2.0], [2.9, 0.1]] {
            let c = s.current(x, 1.7);
            assert!(c.j[0].abs() < 1e-15 && c.j[1].abs() < 1e-15);
            assert!(c.curl_j.abs() < 1e-14);
        }
    }

    #[test]
    fn angle_table_matches_direct() {
        let table = AngleTable::new(0.77, 20);
        for k in 0..25u32 {
            let (s, c) = table.get(k);
            assert_relative_eq!(s, (k as f64 * 0.77).sin(), epsilon = 1e-13);
            assert_relative_eq!(c, (k as f64 * 0.77).cos(), epsilon = 1e-13);
        }
    }

    #[test]
    fn table_agrees_with_single_partial() {
        let s = WaveState::psi1();
        let x = [1.1, 2.3];
        let table = s.partials(x, 0.9, 4);
        for total in 0..=4 {
            for q in 0..=total {
                let direct = s.partial(x, 0.9, total - q, q);
                assert!((table.get(total - q, q) - direct).norm() < 1e-12);
            }
        }
    }
}

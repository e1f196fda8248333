//! Non-equilibrium densities evolved by backtracking lattice points, plus the
//! coarse-graining, smoothing and H-function reductions applied to them.
//!
//! The ratio `ρ/|ψ|²` is constant along trajectories, so the density at a
//! lattice point `x` at time `t` is `|ψ(x, t)|² · ρ(x₀, 0)/|ψ(x₀, 0)|²`, with
//! `x₀` the point reached by integrating backwards to `t = 0`. Lattice points
//! whose backtracking fails are masked out of every reduction.

use std::f64::consts::{FRAC_2_PI, FRAC_PI_2, PI};
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guidance::{GuidanceSpec, Guide, DEFAULT_DENSITY_FLOOR};
use crate::integrate::{integrate, IntegratorConfig, TrajectoryStatus};
use crate::parallel;
use crate::wavefield::{Point, WaveState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensitySpec {
    Equilibrium,
    Rho0,
    Rho1,
    Rho2,
    Rho3,
    Rho4,
}

impl DensitySpec {
    pub const NON_EQUILIBRIUM: [DensitySpec; 5] = [
        DensitySpec::Rho0,
        DensitySpec::Rho1,
        DensitySpec::Rho2,
        DensitySpec::Rho3,
        DensitySpec::Rho4,
    ];

    /// Lower-left corner of the quadrant carrying a contracted copy of ρ₀.
    fn quadrant(self) -> Option<Point> {
        match self {
            DensitySpec::Rho1 => Some([0.0, 0.0]),
            DensitySpec::Rho2 => Some([FRAC_PI_2, 0.0]),
            DensitySpec::Rho3 => Some([0.0, FRAC_PI_2]),
            DensitySpec::Rho4 => Some([FRAC_PI_2, FRAC_PI_2]),
            _ => None,
        }
    }
}

impl fmt::Display for DensitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DensitySpec::Equilibrium => "equilibrium",
            DensitySpec::Rho0 => "rho0",
            DensitySpec::Rho1 => "rho1",
            DensitySpec::Rho2 => "rho2",
            DensitySpec::Rho3 => "rho3",
            DensitySpec::Rho4 => "rho4",
        })
    }
}

fn ground_state_density(x: Point) -> f64 {
    let a = FRAC_2_PI * x[0].sin() * x[1].sin();
    a * a
}

/// The density at `t = 0`. Each is normalized over the box.
pub fn initial_density(spec: DensitySpec, state: &WaveState, x: Point) -> f64 {
    match spec {
        DensitySpec::Equilibrium => state.density(x, 0.0),
        DensitySpec::Rho0 => ground_state_density(x),
        quadrant => {
            let corner = quadrant
                .quadrant()
                .expect("quadrant densities have a corner");
            let u = [x[0] - corner[0], x[1] - corner[1]];
            if (0.0..=FRAC_PI_2).contains(&u[0]) && (0.0..=FRAC_PI_2).contains(&u[1]) {
                4.0 * ground_state_density([2.0 * u[0], 2.0 * u[1]])
            } else {
                0.0
            }
        }
    }
}

/// Lattice, coarse-graining cells and the excluded boundary band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeGeometry {
    /// Lattice points per side.
    #[serde(rename = "R")]
    pub resolution: usize,
    /// Coarse cells per side.
    #[serde(rename = "C")]
    pub cells: usize,
    /// Width of the excluded boundary band, in coarse cells.
    pub margin: usize,
}

impl Default for LatticeGeometry {
    fn default() -> Self {
        LatticeGeometry {
            resolution: 1024,
            cells: 32,
            margin: 2,
        }
    }
}

impl LatticeGeometry {
    /// Quarter-resolution lattice with the same cell layout.
    pub fn reduced() -> Self {
        LatticeGeometry {
            resolution: 256,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution == 0 || self.cells == 0 || !self.resolution.is_multiple_of(self.cells) {
            return Err(Error::Geometry(format!(
                "resolution {} must be a positive multiple of the cell count {}",
                self.resolution, self.cells
            )));
        }
        if 2 * self.margin >= self.cells {
            return Err(Error::Geometry(format!(
                "margin of {} cells leaves no interior in a {}-cell grid",
                self.margin, self.cells
            )));
        }
        Ok(())
    }

    pub fn points_per_cell(&self) -> usize {
        self.resolution / self.cells
    }

    pub fn margin_points(&self) -> usize {
        self.margin * self.points_per_cell()
    }

    pub fn spacing(&self) -> f64 {
        PI / self.resolution as f64
    }

    /// Coordinate of 0-based lattice index `i`: `(i + 1/2) π / R`.
    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.spacing()
    }

    /// Lattice point for flat index `l·R + k` (rows run along x₂).
    pub fn point(&self, idx: usize) -> Point {
        let (row, col) = (idx / self.resolution, idx % self.resolution);
        [self.coord(col), self.coord(row)]
    }

    pub fn len(&self) -> usize {
        self.resolution * self.resolution
    }

    pub fn is_empty(&self) -> bool {
        self.resolution == 0
    }

    /// Whether the lattice point lies outside the excluded band.
    pub fn is_attempted(&self, idx: usize) -> bool {
        let m = self.margin_points();
        let hi = self.resolution - m;
        let (row, col) = (idx / self.resolution, idx % self.resolution);
        (m..hi).contains(&row) && (m..hi).contains(&col)
    }

    pub fn attempted_count(&self) -> usize {
        let side = self.resolution - 2 * self.margin_points();
        side * side
    }

    fn cell_is_interior(&self, cell_row: usize, cell_col: usize) -> bool {
        let hi = self.cells - self.margin;
        (self.margin..hi).contains(&cell_row) && (self.margin..hi).contains(&cell_col)
    }
}

/// Backtracked origins of every lattice point for one guidance law and time.
#[derive(Debug, Clone)]
pub struct Backtrack {
    pub geometry: LatticeGeometry,
    pub time: f64,
    pub spec: GuidanceSpec,
    origins: Vec<Point>,
    mask: Vec<bool>,
    attempted: usize,
    ok: usize,
    status_counts: [usize; 4],
    steps: u64,
}

impl Backtrack {
    pub fn origins(&self) -> &[Point] {
        &self.origins
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn attempted(&self) -> usize {
        self.attempted
    }

    pub fn ok_count(&self) -> usize {
        self.ok
    }

    /// Percentage of attempted lattice points that reached `t = 0`.
    pub fn backtrack_pct(&self) -> f64 {
        100.0 * self.ok as f64 / self.attempted as f64
    }

    pub fn status_count(&self, status: TrajectoryStatus) -> usize {
        self.status_counts[status_index(status)]
    }

    /// Total attempted integrator steps over the lattice.
    pub fn total_steps(&self) -> u64 {
        self.steps
    }
}

fn status_index(status: TrajectoryStatus) -> usize {
    match status {
        TrajectoryStatus::Ok => 0,
        TrajectoryStatus::MaxStepsExceeded => 1,
        TrajectoryStatus::StepUnderflow => 2,
        TrajectoryStatus::LeftBox => 3,
    }
}

/// Integrates every attempted lattice point from `t` back to `0`.
pub fn backtrack_lattice(
    state: &WaveState,
    spec: GuidanceSpec,
    geometry: LatticeGeometry,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<Backtrack> {
    geometry.validate()?;
    cfg.validate()?;
    if !(t >= 0.0) {
        return Err(Error::Config(format!(
            "output time must be non-negative, got {t}"
        )));
    }
    let field = Guide::new(state, spec);
    let results = parallel::map_indexed(geometry.len(), |idx| {
        if !geometry.is_attempted(idx) {
            return None;
        }
        let r = integrate(&field, geometry.point(idx), t, 0.0, cfg);
        Some((r.x_final, r.status, r.steps_taken))
    });

    let mut origins = Vec::with_capacity(results.len());
    let mut mask = Vec::with_capacity(results.len());
    let mut status_counts = [0usize; 4];
    let mut steps = 0u64;
    for (idx, r) in results.into_iter().enumerate() {
        match r {
            Some((x0, status, n)) => {
                status_counts[status_index(status)] += 1;
                steps += n;
                origins.push(x0);
                mask.push(status == TrajectoryStatus::Ok);
            }
            None => {
                origins.push(geometry.point(idx));
                mask.push(false);
            }
        }
    }
    let ok = status_counts[0];
    Ok(Backtrack {
        geometry,
        time: t,
        spec,
        origins,
        mask,
        attempted: geometry.attempted_count(),
        ok,
        status_counts,
        steps,
    })
}

/// Lattice of density values with a validity mask. Flat index is `l·R + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub geometry: LatticeGeometry,
    pub time: f64,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl DensityField {
    pub fn resolution(&self) -> usize {
        self.geometry.resolution
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// `Σ ρ (π/R)²` over valid points.
    pub fn mass(&self) -> f64 {
        let area = self.geometry.spacing().powi(2);
        self.valid_values().map(|(_, v)| v).sum::<f64>() * area
    }

    /// Copy with the mask intersected with `other`.
    pub fn restricted_to(&self, other: &[bool]) -> DensityField {
        let mut out = self.clone();
        for (m, &o) in out.mask.iter_mut().zip(other) {
            *m &= o;
        }
        out
    }

    fn valid_values(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .zip(&self.mask)
            .enumerate()
            .filter(|(_, (_, &m))| m)
            .map(|(i, (&v, _))| (i, v))
    }

    /// Plain-text grid: `#` header lines then one row per x₂ lattice index,
    /// masked entries written as `nan`.
    pub fn write_text(&self, path: &Path, label: &str) -> Result<()> {
        let mut out = String::with_capacity(self.values.len() * 12);
        out.push_str(&format!("# resolution {}\n", self.resolution()));
        out.push_str(&format!("# time {}\n", self.time));
        out.push_str(&format!("# spec {label}\n"));
        out.push_str(&format!("# mask_count {}\n", self.valid_count()));
        let r = self.resolution();
        write_rows(&mut out, r, |i| self.mask[i].then_some(self.values[i]));
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn write_rows(out: &mut String, side: usize, value: impl Fn(usize) -> Option<f64>) {
    use std::fmt::Write as _;
    for row in 0..side {
        for col in 0..side {
            if col > 0 {
                out.push(' ');
            }
            match value(row * side + col) {
                Some(v) => write!(out, "{v:e}").expect("writing to a String"),
                None => out.push_str("nan"),
            }
        }
        out.push('\n');
    }
}

/// Density at time `t` from a finished backtrack.
pub fn density_from_backtrack(
    bt: &Backtrack,
    state: &WaveState,
    dspec: DensitySpec,
) -> DensityField {
    let geometry = bt.geometry;
    let mut mask = bt.mask.clone();
    let values = (0..geometry.len())
        .map(|idx| {
            if !mask[idx] {
                return 0.0;
            }
            let x0 = bt.origins[idx];
            let eq0 = state.density(x0, 0.0);
            if !(eq0 > DEFAULT_DENSITY_FLOOR) {
                mask[idx] = false;
                return 0.0;
            }
            let f = match dspec {
                DensitySpec::Equilibrium => 1.0,
                other => initial_density(other, state, x0) / eq0,
            };
            state.density(geometry.point(idx), bt.time) * f
        })
        .collect();
    DensityField {
        geometry,
        time: bt.time,
        values,
        mask,
    }
}

/// Backtracks the lattice and evaluates one density.
pub fn evolve_density(
    state: &WaveState,
    spec: GuidanceSpec,
    dspec: DensitySpec,
    t: f64,
    geometry: LatticeGeometry,
    cfg: &IntegratorConfig,
) -> Result<DensityField> {
    let bt = backtrack_lattice(state, spec, geometry, t, cfg)?;
    Ok(density_from_backtrack(&bt, state, dspec))
}

/// Cell means over valid lattice points; margin and empty cells carry no value.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseField {
    pub cells: usize,
    pub margin: usize,
    pub values: Vec<Option<f64>>,
    pub counts: Vec<usize>,
}

impl CoarseField {
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.values[row * self.cells + col]
    }

    pub fn cell_area(&self) -> f64 {
        (PI / self.cells as f64).powi(2)
    }
}

pub fn coarse_grain(field: &DensityField) -> CoarseField {
    let g = field.geometry;
    let c = g.cells;
    let per = g.points_per_cell();
    let mut sums = vec![0.0; c * c];
    let mut counts = vec![0usize; c * c];
    for (idx, v) in field.valid_values() {
        let (row, col) = (idx / g.resolution, idx % g.resolution);
        let cell = (row / per) * c + col / per;
        sums[cell] += v;
        counts[cell] += 1;
    }
    let values = (0..c * c)
        .map(|cell| {
            let (row, col) = (cell / c, cell % c);
            (g.cell_is_interior(row, col) && counts[cell] > 0)
                .then(|| sums[cell] / counts[cell] as f64)
        })
        .collect();
    for (cell, n) in counts.iter_mut().enumerate() {
        if !g.cell_is_interior(cell / c, cell % c) {
            *n = 0;
        }
    }
    CoarseField {
        cells: c,
        margin: g.margin,
        values,
        counts,
    }
}

fn x_log_ratio(x: f64, reference: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * (x / reference).ln()
    }
}

/// Coarse-grained H-function: `Σ_cells area · ρ̄ ln(ρ̄ / |ψ|²‾)`.
pub fn hbar(rho: &CoarseField, eq: &CoarseField) -> Result<f64> {
    if rho.cells != eq.cells || rho.margin != eq.margin {
        return Err(Error::MismatchedCells);
    }
    let mut sum = 0.0;
    for (cell, (r, e)) in rho.values.iter().zip(&eq.values).enumerate() {
        match (r, e) {
            (None, None) => {}
            (Some(r), Some(e)) => {
                if !(*e > 0.0) {
                    return Err(Error::NonPositiveEquilibrium(
                        cell / rho.cells,
                        cell % rho.cells,
                    ));
                }
                sum += x_log_ratio(*r, *e);
            }
            _ => return Err(Error::MismatchedCells),
        }
    }
    Ok(sum * rho.cell_area())
}

/// Fine-grained `∫ ρ ln(ρ/|ψ|²)` as a lattice sum over valid points.
pub fn fine_h(rho: &DensityField, eq: &DensityField) -> Result<f64> {
    if rho.geometry != eq.geometry || rho.mask != eq.mask {
        return Err(Error::MismatchedCells);
    }
    let mut sum = 0.0;
    for (idx, r) in rho.valid_values() {
        let e = eq.values[idx];
        if !(e > 0.0) {
            let (row, col) = (idx / rho.resolution(), idx % rho.resolution());
            return Err(Error::NonPositiveEquilibrium(row, col));
        }
        sum += x_log_ratio(r, e);
    }
    Ok(sum * rho.geometry.spacing().powi(2))
}

/// Number of smoothing points per side.
pub const SMOOTH_POINTS: usize = 105;

/// Overlapping window averages of side π/16 centred on
/// `(kπ/128 + 3π/32, lπ/128 + 3π/32)`, `k, l = 0..=104`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedGrid {
    pub time: f64,
    pub values: Vec<Option<f64>>,
}

impl SmoothedGrid {
    pub fn coord(k: usize) -> f64 {
        k as f64 * PI / 128.0 + 3.0 * PI / 32.0
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.values[row * SMOOTH_POINTS + col]
    }

    pub fn write_text(&self, path: &Path, label: &str) -> Result<()> {
        let mut out = String::new();
        out.push_str(&format!("# points {SMOOTH_POINTS}\n"));
        out.push_str(&format!("# time {}\n", self.time));
        out.push_str(&format!("# spec {label}\n"));
        out.push_str(&format!(
            "# coords k*pi/128 + 3*pi/32, k = 0..{}\n",
            SMOOTH_POINTS - 1
        ));
        write_rows(&mut out, SMOOTH_POINTS, |i| self.values[i]);
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

pub fn smooth(field: &DensityField) -> Result<SmoothedGrid> {
    let r = field.resolution();
    if !r.is_multiple_of(128) {
        return Err(Error::Geometry(format!(
            "smoothing needs a resolution divisible by 128, got {r}"
        )));
    }
    let step = r / 128;
    let window = r / 16;
    // Summed-area tables over valid values and valid counts.
    let w = r + 1;
    let mut sum = vec![0.0; w * w];
    let mut cnt = vec![0u32; w * w];
    for row in 0..r {
        for col in 0..r {
            let idx = row * r + col;
            let (v, n) = if field.mask[idx] {
                (field.values[idx], 1)
            } else {
                (0.0, 0)
            };
            let at = (row + 1) * w + col + 1;
            sum[at] = v + sum[at - 1] + sum[at - w] - sum[at - w - 1];
            cnt[at] = n + cnt[at - 1] + cnt[at - w] - cnt[at - w - 1];
        }
    }
    let rect = |row0: usize, col0: usize| {
        let (r1, c1) = (row0 + window, col0 + window);
        let s = sum[r1 * w + c1] - sum[row0 * w + c1] - sum[r1 * w + col0] + sum[row0 * w + col0];
        let n = cnt[r1 * w + c1] + cnt[row0 * w + col0] - cnt[row0 * w + c1] - cnt[r1 * w + col0];
        (n > 0).then(|| s / n as f64)
    };
    let offset = r / 16;
    let values = (0..SMOOTH_POINTS * SMOOTH_POINTS)
        .map(|i| {
            let (row, col) = (i / SMOOTH_POINTS, i % SMOOTH_POINTS);
            rect(offset + row * step, offset + col * step)
        })
        .collect();
    Ok(SmoothedGrid {
        time: field.time,
        values,
    })
}

/// The per-task summary reported by the runner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxationReport {
    pub density: DensitySpec,
    pub spec: GuidanceSpec,
    pub time: f64,
    pub hbar: f64,
    pub backtrack_pct: f64,
}

/// H̄ of one density against equilibrium over the backtrack's valid points.
pub fn relaxation_report(
    bt: &Backtrack,
    state: &WaveState,
    dspec: DensitySpec,
) -> Result<RelaxationReport> {
    let rho = density_from_backtrack(bt, state, dspec);
    let eq = density_from_backtrack(bt, state, DensitySpec::Equilibrium);
    let eq = eq.restricted_to(&rho.mask);
    let h = hbar(&coarse_grain(&rho), &coarse_grain(&eq))?;
    Ok(RelaxationReport {
        density: dspec,
        spec: bt.spec,
        time: bt.time,
        hbar: h,
        backtrack_pct: bt.backtrack_pct(),
    })
}

/// Writes a `(t, x₁, x₂)` table.
pub fn write_path(path: &Path, header: &str, samples: &[(f64, Point)]) -> Result<()> {
    let mut file =
        std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let mut body = format!("# {header}\n# t x1 x2\n");
    for (t, x) in samples {
        body.push_str(&format!("{t:.12e} {:.12e} {:.12e}\n", x[0], x[1]));
    }
    file.write_all(body.as_bytes())
        .map_err(|e| Error::io(path, e))
}

//! Config-driven experiment runs: backtracks for every (guidance, time) pair,
//! relaxation reports for every density, and the files derived from them.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use crate::ensemble::{
    backtrack_lattice, density_from_backtrack, relaxation_report, smooth, write_path, Backtrack,
    DensitySpec, LatticeGeometry, RelaxationReport,
};
use crate::error::{Error, Result};
use crate::guidance::{GuidanceSpec, Guide};
use crate::integrate::{integrate_with_path, IntegratorConfig};
use crate::nodes::{find_nodes, track_node};
use crate::wavefield::{Mode, WaveState};

/// Environment variable overriding the worker count of a run.
pub const WORKERS_ENV: &str = "PILOT_RELAX_THREADS";

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

const FIGURE_WINDOW: f64 = 4.0 * PI;
const FIGURE_SAMPLE_INTERVAL: f64 = 0.01;
const NODE_TRACK_STEP: f64 = 0.01;
const NODE_SEED_RESOLUTION: usize = 64;

/// Wave state given by builder name or by explicit modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WaveConfig {
    Named(String),
    Modes(Vec<Mode>),
}

impl WaveConfig {
    pub fn build(&self) -> Result<WaveState> {
        match self {
            WaveConfig::Named(name) => WaveState::by_name(name)
                .ok_or_else(|| Error::Config(format!("unknown wavefunction {name:?}"))),
            WaveConfig::Modes(modes) => {
                for m in modes {
                    Mode::new(m.m, m.n, m.amplitude, m.phase)?;
                }
                WaveState::new(modes.clone())
            }
        }
    }
}

/// An output time: a number, or a multiple of π written like `"4pi"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeValue {
    Value(f64),
    Text(String),
}

impl TimeValue {
    pub fn value(&self) -> Result<f64> {
        match self {
            TimeValue::Value(t) => Ok(*t),
            TimeValue::Text(s) => parse_time(s),
        }
    }
}

fn parse_time(s: &str) -> Result<f64> {
    let bad = || Error::Config(format!("cannot parse time {s:?}"));
    let s = s.trim();
    let body = s.strip_suffix("pi").or_else(|| s.strip_suffix('π'));
    match body {
        Some("") => Ok(PI),
        Some(k) => k
            .trim()
            .trim_end_matches('*')
            .parse::<f64>()
            .map(|k| k * PI)
            .map_err(|_| bad()),
        None => s.parse().map_err(|_| bad()),
    }
}

/// Multiplier shown next to raw H̄ values in rendered tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HbarScale {
    Factor(f64),
    /// `"inverse-cell-area"`: `(C/π)²`
    Named(String),
}

impl HbarScale {
    pub fn factor(&self, geometry: &LatticeGeometry) -> Result<f64> {
        match self {
            HbarScale::Factor(s) if s.is_finite() && *s > 0.0 => Ok(*s),
            HbarScale::Factor(s) => Err(Error::Config(format!(
                "hbar_scale must be positive, got {s}"
            ))),
            HbarScale::Named(n) if n == "inverse-cell-area" => {
                let c = geometry.cells as f64 / PI;
                Ok(c * c)
            }
            HbarScale::Named(n) => Err(Error::Config(format!("unknown hbar_scale {n:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub wavefunction: WaveConfig,
    pub guidance: Vec<GuidanceSpec>,
    pub densities: Vec<DensitySpec>,
    pub times: Vec<TimeValue>,
    #[serde(default)]
    pub lattice: LatticeGeometry,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    pub output: PathBuf,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub hbar_scale: Option<HbarScale>,
    /// Smoothed grids, centre trajectories and node paths.
    #[serde(default)]
    pub figures: bool,
    /// Full lattice density grids.
    #[serde(default)]
    pub density_grids: bool,
    /// Adds wall-clock seconds to the report CSV, which then differs run to run.
    #[serde(default)]
    pub timings: bool,
}

/// Shipped configs for the reference tables.
pub const PRESETS: [(&str, &str); 3] = [
    ("psi1_f1", include_str!("../presets/psi1_f1.toml")),
    ("psi1_f2f3", include_str!("../presets/psi1_f2f3.toml")),
    ("psi2", include_str!("../presets/psi2.toml")),
];

impl RunConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_owned(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text, path)?;
        if cfg.name.is_none() {
            cfg.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        Ok(cfg)
    }

    pub fn preset(name: &str) -> Option<Self> {
        let (_, text) = PRESETS.iter().find(|(n, _)| *n == name)?;
        let mut cfg = Self::from_toml(text, Path::new(name)).expect("shipped preset parses");
        cfg.name.get_or_insert_with(|| name.to_owned());
        Some(cfg)
    }

    /// Same tasks on the R = 256 lattice.
    pub fn reduced(mut self) -> Self {
        self.lattice = LatticeGeometry::reduced();
        self
    }

    pub fn time_values(&self) -> Result<Vec<f64>> {
        self.times.iter().map(TimeValue::value).collect()
    }

    /// Checks every entry without touching the output directory.
    pub fn validate(&self) -> Result<ValidRun> {
        let state = self.wavefunction.build()?;
        self.lattice.validate()?;
        self.integrator.validate()?;
        let times = self.time_values()?;
        if times.is_empty() {
            return Err(Error::Config("times must not be empty".into()));
        }
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::Config(
                "times must be finite and non-negative".into(),
            ));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("times must be strictly increasing".into()));
        }
        if self.guidance.is_empty() {
            return Err(Error::Config("guidance must not be empty".into()));
        }
        for g in &self.guidance {
            if !g.mu.is_finite() {
                return Err(Error::Config(format!("mu must be finite, got {}", g.mu)));
            }
        }
        for (i, g) in self.guidance.iter().enumerate() {
            if self.guidance[..i].contains(g) {
                return Err(Error::Config(format!("guidance {g} listed twice")));
            }
        }
        if self.densities.is_empty() {
            return Err(Error::Config("densities must not be empty".into()));
        }
        for (i, d) in self.densities.iter().enumerate() {
            if self.densities[..i].contains(d) {
                return Err(Error::Config(format!("density {d} listed twice")));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        let hbar_scale = self
            .hbar_scale
            .as_ref()
            .map(|s| s.factor(&self.lattice))
            .transpose()?;
        if self.figures && !self.lattice.resolution.is_multiple_of(128) {
            return Err(Error::Config(format!(
                "figures need R divisible by 128, got R = {}",
                self.lattice.resolution
            )));
        }
        Ok(ValidRun {
            state,
            times,
            hbar_scale,
        })
    }
}

/// Values resolved by [`RunConfig::validate`].
#[derive(Debug, Clone)]
pub struct ValidRun {
    pub state: WaveState,
    pub times: Vec<f64>,
    pub hbar_scale: Option<f64>,
}

/// Worker count from the environment, falling back to `configured`.
pub fn resolve_workers(configured: Option<usize>) -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!(
                "{WORKERS_ENV} must be a positive integer, got {v:?}"
            ))),
        },
        Err(_) => Ok(configured),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct TaskKey {
    spec: GuidanceSpec,
    time: f64,
}

impl TaskKey {
    // Every law gives the identity map at t = 0, and all standard laws coincide.
    fn new(spec: GuidanceSpec, time: f64) -> Self {
        let spec = if time == 0.0 || spec.is_standard() {
            GuidanceSpec::STANDARD
        } else {
            spec
        };
        TaskKey { spec, time }
    }
}

/// Backtracks computed once per distinct (guidance, time) and shared.
pub struct BacktrackCache {
    state: WaveState,
    geometry: LatticeGeometry,
    integrator: IntegratorConfig,
    entries: Mutex<Vec<(TaskKey, Arc<Backtrack>, f64)>>,
}

impl BacktrackCache {
    pub fn new(state: WaveState, geometry: LatticeGeometry, integrator: IntegratorConfig) -> Self {
        BacktrackCache {
            state,
            geometry,
            integrator,
            entries: Mutex::new(Vec::new()),
        }
    }

    pub fn state(&self) -> &WaveState {
        &self.state
    }

    pub fn geometry(&self) -> LatticeGeometry {
        self.geometry
    }

    pub fn integrator(&self) -> IntegratorConfig {
        self.integrator
    }

    /// The backtrack and the seconds it took to compute (zero when shared).
    pub fn get(&self, spec: GuidanceSpec, time: f64) -> Result<(Arc<Backtrack>, f64)> {
        let key = TaskKey::new(spec, time);
        if let Some((_, bt, _)) = self.lock().iter().find(|(k, _, _)| *k == key) {
            return Ok((Arc::clone(bt), 0.0));
        }
        let start = Instant::now();
        let bt = Arc::new(backtrack_lattice(
            &self.state,
            key.spec,
            self.geometry,
            time,
            &self.integrator,
        )?);
        let seconds = start.elapsed().as_secs_f64();
        info!(
            "backtracked {} at t = {}: {:.2}% in {seconds:.1}s",
            key.spec,
            time_label(time),
            bt.backtrack_pct()
        );
        self.lock().push((key, Arc::clone(&bt), seconds));
        Ok((bt, seconds))
    }

    /// Like [`get`](Self::get) but reporting `spec` rather than the shared key.
    pub fn report(
        &self,
        spec: GuidanceSpec,
        time: f64,
        density: DensitySpec,
    ) -> Result<RelaxationReport> {
        let (bt, _) = self.get(spec, time)?;
        let mut rep = relaxation_report(&bt, &self.state, density)?;
        rep.spec = spec;
        Ok(rep)
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Vec<(TaskKey, Arc<Backtrack>, f64)>> {
        self.entries.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// One report row plus the backtrack time attributed to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    #[serde(flatten)]
    pub report: RelaxationReport,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktrackTiming {
    pub spec: GuidanceSpec,
    pub time: f64,
    pub seconds: f64,
    pub backtrack_pct: f64,
    pub total_steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    pub version: String,
    pub config: RunConfig,
    pub integrator: IntegratorConfig,
    pub step_count: String,
    pub hbar_scale: Option<f64>,
    pub rows: Vec<ReportRow>,
    pub backtracks: Vec<BacktrackTiming>,
    pub total_seconds: f64,
    pub files: Vec<PathBuf>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_owned(),
            message: e.to_string(),
        })
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.csv";

/// Runs every task of `cfg`, writing outputs under `cfg.output`.
pub fn run(cfg: &RunConfig) -> Result<RunManifest> {
    let valid = cfg.validate()?;
    let workers = resolve_workers(cfg.workers)?;
    prepare_output(&cfg.output)?;
    crate::parallel::with_workers(workers, || execute(cfg, valid))
}

fn prepare_output(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let probe = dir.join(".write-check");
    std::fs::write(&probe, b"").map_err(|e| Error::io(&probe, e))?;
    std::fs::remove_file(&probe).map_err(|e| Error::io(&probe, e))
}

fn execute(cfg: &RunConfig, valid: ValidRun) -> Result<RunManifest> {
    let start = Instant::now();
    let name = cfg.name.clone().unwrap_or_else(|| "run".into());
    let cache = BacktrackCache::new(valid.state.clone(), cfg.lattice, cfg.integrator);
    let mut files = Vec::new();
    let mut backtracks = Vec::new();
    let mut by_task: BTreeMap<(usize, usize, usize), ReportRow> = BTreeMap::new();

    for (gi, &spec) in cfg.guidance.iter().enumerate() {
        for (ti, &t) in valid.times.iter().enumerate() {
            let (bt, seconds) = cache.get(spec, t)?;
            backtracks.push(BacktrackTiming {
                spec,
                time: t,
                seconds,
                backtrack_pct: bt.backtrack_pct(),
                total_steps: bt.total_steps(),
            });
            for (di, &d) in cfg.densities.iter().enumerate() {
                let mut report = relaxation_report(&bt, &valid.state, d)?;
                report.spec = spec;
                by_task.insert(
                    (gi, di, ti),
                    ReportRow {
                        report,
                        runtime_s: seconds,
                    },
                );
                if cfg.density_grids || cfg.figures {
                    let field = density_from_backtrack(&bt, &valid.state, d);
                    let label = format!("{d} {spec} t={}", time_label(t));
                    if cfg.density_grids {
                        let path = cfg.output.join(format!(
                            "density_{}_{d}_{}.txt",
                            spec_slug(spec),
                            time_slug(t)
                        ));
                        field.write_text(&path, &label)?;
                        files.push(path);
                    }
                    if cfg.figures {
                        let path = cfg.output.join(format!(
                            "smoothed_{}_{d}_{}.txt",
                            spec_slug(spec),
                            time_slug(t)
                        ));
                        smooth(&field)?.write_text(&path, &label)?;
                        files.push(path);
                    }
                }
            }
        }
    }
    let rows: Vec<ReportRow> = by_task.into_values().collect();

    let report_path = cfg.output.join(REPORT_FILE);
    write_report(&report_path, &rows, cfg.timings)?;
    files.push(report_path);

    if cfg.figures {
        files.extend(figure_dump(cfg, &valid.state)?);
    }

    let manifest = RunManifest {
        name,
        version: VERSION.into(),
        config: cfg.clone(),
        integrator: cfg.integrator,
        step_count: "attempted steps (accepted + rejected) count toward max_steps".into(),
        hbar_scale: valid.hbar_scale,
        rows,
        backtracks,
        total_seconds: start.elapsed().as_secs_f64(),
        files,
    };
    let path = cfg.output.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

fn write_report(path: &Path, rows: &[ReportRow], timings: bool) -> Result<()> {
    let to_err = |e: csv::Error| Error::Config(format!("writing {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(to_err)?;
    w.write_record([
        "density",
        "mu",
        "f",
        "t",
        "hbar",
        "backtrack_pct",
        "runtime_s",
    ])
    .map_err(to_err)?;
    for row in rows {
        let r = &row.report;
        let runtime = if timings {
            format!("{:.3}", row.runtime_s)
        } else {
            String::new()
        };
        w.write_record([
            r.density.to_string(),
            r.spec.mu.to_string(),
            r.spec.f_choice.to_string(),
            r.time.to_string(),
            r.hbar.to_string(),
            r.backtrack_pct.to_string(),
            runtime,
        ])
        .map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Centre-of-box trajectories over `[0, 4π]` and the node path(s) of the state.
pub fn figure_dump(cfg: &RunConfig, state: &WaveState) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let centre = [PI / 2.0, PI / 2.0];
    for &spec in &cfg.guidance {
        let r = integrate_with_path(
            &Guide::new(state, spec),
            centre,
            0.0,
            FIGURE_WINDOW,
            &cfg.integrator,
            FIGURE_SAMPLE_INTERVAL,
        );
        let path = cfg
            .output
            .join(format!("trajectory_{}.txt", spec_slug(spec)));
        let header = format!(
            "trajectory from the box centre, {spec}, status {:?}",
            r.status
        );
        write_path(&path, &header, r.path.as_deref().unwrap_or_default())?;
        files.push(path);
    }
    let id = cfg.name.clone().unwrap_or_else(|| "state".into());
    if find_nodes(state, 0.0, NODE_SEED_RESOLUTION).len() == 1 {
        let paths = track_node(
            state,
            &id,
            0.0,
            FIGURE_WINDOW,
            NODE_TRACK_STEP,
            NODE_SEED_RESOLUTION,
        )?;
        for (k, p) in paths.iter().enumerate() {
            let path = cfg.output.join(format!("node_path_{k}.txt"));
            write_path(&path, &format!("node of {id}, segment {k}"), &p.samples)?;
            files.push(path);
        }
    } else {
        info!("{id} has no single node at t = 0; no node path written");
    }
    Ok(files)
}

/// `"4pi"` for multiples of π up to three decimals, the plain number otherwise.
pub fn time_label(t: f64) -> String {
    let k = t / PI;
    let rounded = (k * 1000.0).round() / 1000.0;
    if (k - rounded).abs() < 1e-9 {
        if rounded == 0.0 {
            "0".into()
        } else {
            format!("{rounded}pi")
        }
    } else {
        format!("{t}")
    }
}

fn time_slug(t: f64) -> String {
    format!("t{}", time_label(t))
}

fn spec_slug(spec: GuidanceSpec) -> String {
    if spec.is_standard() {
        "mu0".into()
    } else {
        format!("mu{}_{}", spec.mu, spec.f_choice)
    }
}

/// Aligned text tables: backtrack percentages by guidance × time and H̄ by
/// (density, guidance) × time.
pub fn table_render(manifest: &RunManifest) -> String {
    let mut specs: Vec<GuidanceSpec> = Vec::new();
    let mut densities: Vec<DensitySpec> = Vec::new();
    let mut times: Vec<f64> = Vec::new();
    for row in &manifest.rows {
        let r = &row.report;
        if !specs.contains(&r.spec) {
            specs.push(r.spec);
        }
        if !densities.contains(&r.density) {
            densities.push(r.density);
        }
        if !times.contains(&r.time) {
            times.push(r.time);
        }
    }
    let find = |d: DensitySpec, g: GuidanceSpec, t: f64| {
        manifest
            .rows
            .iter()
            .map(|r| &r.report)
            .find(|r| r.density == d && r.spec == g && r.time == t)
    };
    let headers: Vec<String> = times
        .iter()
        .map(|&t| format!("t={}", time_label(t)))
        .collect();

    let mut pct_rows = Vec::new();
    for &g in &specs {
        let cells = times
            .iter()
            .map(|&t| {
                densities
                    .iter()
                    .find_map(|&d| find(d, g, t))
                    .map_or("-".into(), |r| format!("{:.2}", r.backtrack_pct))
            })
            .collect();
        pct_rows.push((g.to_string(), cells));
    }

    let mut h_rows = Vec::new();
    for &d in &densities {
        for &g in &specs {
            let cells = times
                .iter()
                .map(|&t| {
                    find(d, g, t).map_or("-".into(), |r| match manifest.hbar_scale {
                        Some(s) => format!("{:.5} ({})", r.hbar, (r.hbar * s).round()),
                        None => format!("{:.5}", r.hbar),
                    })
                })
                .collect();
            h_rows.push((format!("{d}, {g}"), cells));
        }
    }

    let mut out = String::new();
    let _ = writeln!(out, "{}: backtracked lattice points (%)", manifest.name);
    out.push_str(&aligned(&headers, &pct_rows));
    out.push('\n');
    match manifest.hbar_scale {
        Some(s) => {
            let _ = writeln!(
                out,
                "{}: coarse-grained H (scaled by {s:.4}, rounded)",
                manifest.name
            );
        }
        None => {
            let _ = writeln!(out, "{}: coarse-grained H", manifest.name);
        }
    }
    out.push_str(&aligned(&headers, &h_rows));
    out
}

fn aligned(headers: &[String], rows: &[(String, Vec<String>)]) -> String {
    let label_w = rows
        .iter()
        .map(|(l, _)| l.chars().count())
        .max()
        .unwrap_or(0);
    let widths: Vec<usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| {
            rows.iter()
                .map(|(_, c)| c[i].chars().count())
                .chain([h.chars().count()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let _ = write!(out, "{:label_w$} |", "");
    for (h, w) in headers.iter().zip(&widths) {
        let _ = write!(out, " {h:>w$}");
    }
    out.push('\n');
    let _ = writeln!(
        out,
        "{}",
        "-".repeat(label_w + 2 + widths.iter().map(|w| w + 1).sum::<usize>())
    );
    for (label, cells) in rows {
        let _ = write!(out, "{label:label_w$} |");
        for (c, w) in cells.iter().zip(&widths) {
            let _ = write!(out, " {c:>w$}");
        }
        out.push('\n');
    }
    out
}

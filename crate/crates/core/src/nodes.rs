//! Isolated zeros of ψ inside the box, found by 2D Newton iteration on
//! `x ↦ (Re ψ, Im ψ)` and followed in time by continuation.

use log::{info, warn};

use crate::wavefield::{Point, WaveState, BOX_SIDE};

const MAX_ITERATIONS: usize = 50;
const MAX_HALVINGS: usize = 30;
const CONVERGED: f64 = 1e-14;
const ACCEPTED: f64 = 1e-10;
const DEDUP_RADIUS: f64 = 1e-6;
const WALL_CLEARANCE: f64 = 1e-9;
// |det J| below this fraction of ‖J‖² means Re ψ and Im ψ vanish on a shared line.
const DEGENERATE_DET: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct NodePath {
    pub state_id: String,
    pub samples: Vec<(f64, Point)>,
}

impl NodePath {
    pub fn is_closed(&self, tol: f64) -> bool {
        match (self.samples.first(), self.samples.last()) {
            (Some((_, a)), Some((_, b))) => (a[0] - b[0]).hypot(a[1] - b[1]) < tol,
            _ => false,
        }
    }
}

enum Newton {
    Converged(Point),
    Degenerate,
    Failed,
}

fn newton(state: &WaveState, t: f64, start: Point) -> Newton {
    let mut x = start;
    let mut p = state.partials(x, t, 1);
    let mut norm = p.get(0, 0).norm();
    for _ in 0..MAX_ITERATIONS {
        if norm < CONVERGED {
            break;
        }
        let psi = p.get(0, 0);
        let (d1, d2) = (p.get(1, 0), p.get(0, 1));
        // J = [[Re ∂₁ψ, Re ∂₂ψ], [Im ∂₁ψ, Im ∂₂ψ]]
        let det = d1.re * d2.im - d2.re * d1.im;
        let scale = d1.norm_sqr() + d2.norm_sqr();
        if det.abs() <= DEGENERATE_DET * scale {
            return Newton::Degenerate;
        }
        let step = [
            (d2.im * psi.re - d2.re * psi.im) / det,
            (-d1.im * psi.re + d1.re * psi.im) / det,
        ];
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial = [x[0] - lambda * step[0], x[1] - lambda * step[1]];
            if trial[0] > 0.0 && trial[0] < BOX_SIDE && trial[1] > 0.0 && trial[1] < BOX_SIDE {
                let q = state.partials(trial, t, 1);
                let n = q.get(0, 0).norm();
                if n <= norm {
                    accepted = Some((trial, q, n));
                    break;
                }
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((trial, q, n)) => {
                let moved = (trial[0] - x[0]).hypot(trial[1] - x[1]);
                x = trial;
                p = q;
                norm = n;
                if moved < 1e-15 {
                    break;
                }
            }
            None => break,
        }
    }
    if norm < ACCEPTED {
        Newton::Converged(x)
    } else {
        Newton::Failed
    }
}

fn away_from_walls(x: Point) -> bool {
    x.iter()
        .all(|&c| c > WALL_CLEARANCE && c < BOX_SIDE - WALL_CLEARANCE)
}

/// Refines a node estimate; `None` when Newton does not converge to an
/// isolated interior zero.
pub fn refine_node(state: &WaveState, t: f64, guess: Point) -> Option<Point> {
    match newton(state, t, guess) {
        Newton::Converged(x) if away_from_walls(x) => Some(x),
        _ => None,
    }
}

/// All isolated interior nodes at time `t`, seeded from a
/// `seed_resolution × seed_resolution` cell grid.
pub fn find_nodes(state: &WaveState, t: f64, seed_resolution: usize) -> Vec<Point> {
    assert!(seed_resolution >= 32, "seed_resolution must be at least 32");
    let n = seed_resolution;
    let h = BOX_SIDE / n as f64;
    let corners: Vec<_> = (0..=n)
        .flat_map(|row| (0..=n).map(move |col| (row, col)))
        .map(|(row, col)| state.value([col as f64 * h, row as f64 * h], t))
        .collect();

    let mut nodes: Vec<Point> = Vec::new();
    let mut seeds = 0usize;
    let mut degenerate = 0usize;
    for row in 0..n {
        for col in 0..n {
            let c = [
                corners[row * (n + 1) + col],
                corners[row * (n + 1) + col + 1],
                corners[(row + 1) * (n + 1) + col],
                corners[(row + 1) * (n + 1) + col + 1],
            ];
            let changes = |f: fn(&num_complex::Complex64) -> f64| {
                let lo = c.iter().map(f).fold(f64::INFINITY, f64::min);
                let hi = c.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
                lo < 0.0 && hi > 0.0
            };
            if !(changes(|z| z.re) && changes(|z| z.im)) {
                continue;
            }
            seeds += 1;
            let centre = [(col as f64 + 0.5) * h, (row as f64 + 0.5) * h];
            match newton(state, t, centre) {
                Newton::Converged(x) => {
                    let fresh = nodes
                        .iter()
                        .all(|y| (x[0] - y[0]).hypot(x[1] - y[1]) > DEDUP_RADIUS);
                    if away_from_walls(x) && fresh {
                        nodes.push(x);
                    }
                }
                Newton::Degenerate => degenerate += 1,
                Newton::Failed => {}
            }
        }
    }
    if nodes.is_empty() && seeds > degenerate {
        warn!(
            "node search at t = {t}: {seeds} sign-change cells but no Newton iteration converged"
        );
    }
    nodes.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    nodes
}

/// Follows the single node present at `t0` up to `t1` in steps of `dt`.
///
/// Continuation restarts from the previous position; when it fails a global
/// search is run. A change in the node count closes the current path and a
/// new one starts once exactly one node is present again.
pub fn track_node(
    state: &WaveState,
    state_id: &str,
    t0: f64,
    t1: f64,
    dt: f64,
    seed_resolution: usize,
) -> crate::error::Result<Vec<NodePath>> {
    let start = find_nodes(state, t0, seed_resolution);
    if start.len() != 1 {
        return Err(crate::error::Error::Config(format!(
            "node tracking needs exactly one node at t = {t0}, found {}",
            start.len()
        )));
    }
    let steps = ((t1 - t0) / dt).round().max(0.0) as usize;
    let new_path = || NodePath {
        state_id: state_id.to_owned(),
        samples: Vec::new(),
    };
    let mut paths = Vec::new();
    let mut current = new_path();
    current.samples.push((t0, start[0]));
    let mut last = Some(start[0]);
    let mut count = 1;

    for k in 1..=steps {
        let t = if k == steps { t1 } else { t0 + k as f64 * dt };
        let now = find_nodes(state, t, seed_resolution).len();
        if now != count {
            info!("{state_id}: {now} node(s) from t = {t:.3}");
            count = now;
        }
        let continued = last.and_then(|x| refine_node(state, t, x));
        let next = match continued {
            Some(x) => Some(x),
            None => {
                let found = find_nodes(state, t, seed_resolution);
                if found.len() == 1 {
                    Some(found[0])
                } else {
                    if last.is_some() {
                        warn!(
                            "node count changed to {} at t = {t}; splitting path",
                            found.len()
                        );
                    }
                    None
                }
            }
        };
        match next {
            Some(x) => {
                current.samples.push((t, x));
                last = Some(x);
            }
            None => {
                if !current.samples.is_empty() {
                    paths.push(std::mem::replace(&mut current, new_path()));
                }
                last = None;
            }
        }
    }
    if !current.samples.is_empty() {
        paths.push(current);
    }
    Ok(paths)
}

//! Numerical campaigns over the billiard: seeded long-trajectory runs with
//! exponent series, field and geometry sweeps with attractor
//! classification, recurrence-based periodicity detection, basin probing
//! around an attracting orbit, and the two independent current estimates.
//!
//! Everything here is deterministic given the run configuration, including
//! under parallel sweep execution: each grid point derives its own PRNG
//! stream from the base seed and the point index, and results are keyed by
//! the grid index.

use crate::dynamics::{step, CollisionInfo, EventKind, ParticleState};
use crate::geometry::{BilliardGeometry, GeometryError, Point, SideLabel};
use crate::tangent::{
    benettin_step, collision_jacobian, finite_time_exponents, flight_jacobian, TangentFrame,
};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Recurrence tolerance in the Birkhoff coordinates (r, η).
pub const TOL_REC: f64 = 1e-9;

/// Largest period searched for by the recurrence detector.
pub const P_MAX: usize = 64;

/// Sliding window length for collapse detection, in collisions.
pub const RECURRENCE_WINDOW: usize = 4 * P_MAX;

/// Finite-time λ1 above this value classifies a non-recurrent tail as
/// apparently chaotic; below it the state is left unresolved. The chaotic
/// attractors of this system sit well above (λ1 ≈ 0.14), collapsed or
/// quasi-periodic states at or below zero.
pub const CHAOS_LAMBDA_THRESHOLD: f64 = 0.005;

/// Upper bound on the root-mean-square residual of the 1/n tail fit for a
/// probe to count as converged. Post-collapse series carry a within-period
/// oscillation of amplitude ~1/n, so the rms sits well below this for a
/// genuine collapse and orders of magnitude above it for chaotic tails.
pub const FIT_RESIDUAL_MAX: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
}

/// Geometry block of a run configuration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GeometryParams {
    #[serde(rename = "L")]
    pub hex_side: f64,
    pub s_x: f64,
    pub s_y: f64,
}

impl GeometryParams {
    pub fn build(&self) -> Result<BilliardGeometry, GeometryError> {
        BilliardGeometry::new(self.hex_side, self.s_x, self.s_y)
    }

    pub fn standard() -> Self {
        GeometryParams {
            hex_side: 1.291,
            s_x: 0.7573,
            s_y: 1.1,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum InitialCondition {
    /// Uniform over the free region of the cell × uniform angle.
    Random,
    Explicit(ParticleState),
}

/// Configuration of a single trajectory run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub geometry: GeometryParams,
    pub eps: f64,
    pub n_collisions: u64,
    pub seed: u64,
    pub ic: InitialCondition,
    /// Number of trailing bounce-map points retained for classification
    /// and scatter output.
    pub tail_size: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            geometry: GeometryParams::standard(),
            eps: 0.374,
            n_collisions: 100_000,
            seed: 1,
            ic: InitialCondition::Random,
            tail_size: 1000,
        }
    }
}

/// One bounce-map point: side, Birkhoff coordinates, outgoing angle.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BouncePoint {
    pub side: SideLabel,
    pub r: f64,
    pub eta: f64,
    pub theta: f64,
}

impl BouncePoint {
    fn matches(&self, other: &BouncePoint, tol: f64) -> bool {
        self.side == other.side
            && (self.r - other.r).abs() <= tol
            && (self.eta - other.eta).abs() <= tol
    }
}

/// Exponent series sample at collision `n`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ExponentSample {
    pub n: u64,
    pub t: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Completed,
    CornerHit,
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Periodic(usize),
    QuasiPeriodicOrUnresolved,
    ApparentlyChaotic,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Classification::Periodic(p) => write!(f, "periodic({p})"),
            Classification::QuasiPeriodicOrUnresolved => write!(f, "quasiperiodic-or-unresolved"),
            Classification::ApparentlyChaotic => write!(f, "apparently-chaotic"),
        }
    }
}

/// Results of a trajectory run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryStats {
    pub exponent_series: Vec<ExponentSample>,
    pub tail: Vec<BouncePoint>,
    /// Unfolded displacement over the whole run.
    pub displacement: (f64, f64),
    pub total_time: f64,
    pub n_done: u64,
    pub termination: Termination,
    pub final_exponents: Option<(f64, f64)>,
    /// First collision index of sustained recurrence, when a collapse onto
    /// a low-period cycle was detected during the run.
    pub collapse_index: Option<u64>,
    pub classification: Classification,
}

/// Uniform state over the free region of the cell: position rejected
/// against the hexagon and the rhombus, angle uniform in (-π, π].
pub fn random_initial_state(g: &BilliardGeometry, rng: &mut ChaCha8Rng) -> ParticleState {
    loop {
        let x = rng.random_range(-g.x_lat..g.x_lat);
        let y = rng.random_range(-g.hex_side..g.hex_side);
        let p = Point::new(x, y);
        if g.in_hexagon(p) && !g.in_rhombus(p) {
            let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            return ParticleState::new(x, y, theta);
        }
    }
}

/// Logarithmically thinned sampling: every collision up to 10³, then every
/// `10^(⌊log10 n⌋ - 2)` collisions.
pub fn thinning_stride(n: u64) -> u64 {
    if n <= 1000 {
        1
    } else {
        10u64.pow((n as f64).log10().floor() as u32 - 2)
    }
}

/// Smallest period `p ≤ p_max` such that every tail point matches the
/// point `p` collisions earlier in `(side, r, η)` within `tol`, requiring
/// at least two full periods of evidence.
pub fn detect_periodicity(tail: &[BouncePoint], tol: f64, p_max: usize) -> Option<usize> {
    if tail.is_empty() {
        return None;
    }
    for p in 1..=p_max.min(tail.len() / 2) {
        if (p..tail.len()).all(|i| tail[i].matches(&tail[i - p], tol)) {
            return Some(p);
        }
    }
    None
}

/// Fraction of 100 equal θ-bins over (-π, π] occupied by the tail.
pub fn theta_coverage(tail: &[BouncePoint]) -> f64 {
    let mut bins = [false; 100];
    for p in tail {
        let f = (p.theta + std::f64::consts::PI) / (2.0 * std::f64::consts::PI);
        let idx = ((f * 100.0) as usize).min(99);
        bins[idx] = true;
    }
    bins.iter().filter(|b| **b).count() as f64 / 100.0
}

/// Least-squares fit of `y = a + b/n` over `(n, y)` samples.
/// Returns `(a, b, rms_residual)`.
pub fn fit_inverse_n(samples: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    if samples.len() < 2 {
        return None;
    }
    let m = samples.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(n, y) in samples {
        let x = 1.0 / n;
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let det = m * sxx - sx * sx;
    if det.abs() < 1e-300 {
        return None;
    }
    let b = (m * sxy - sx * sy) / det;
    let a = (sy - b * sx) / m;
    let mut ss = 0.0;
    for &(n, y) in samples {
        let r = y - (a + b / n);
        ss += r * r;
    }
    Some((a, b, (ss / m).sqrt()))
}

/// Run one seeded trajectory, streaming every collision into `sink`.
///
/// The sink receives `(collision index starting at 1, absolute time,
/// post-collision state, collision info, leg flight time)`.
pub fn run_trajectory_with<F>(
    cfg: &RunConfig,
    mut sink: F,
) -> Result<TrajectoryStats, ExperimentError>
where
    F: FnMut(u64, f64, &ParticleState, &CollisionInfo, f64),
{
    let g = cfg.geometry.build()?;
    if cfg.n_collisions == 0 {
        return Err(ExperimentError::InvalidConfig(
            "n_collisions must be at least 1".into(),
        ));
    }
    if cfg.eps < 0.0 {
        return Err(ExperimentError::InvalidConfig(format!(
            "field must be non-negative (got {})",
            cfg.eps
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let start = match cfg.ic {
        InitialCondition::Random => random_initial_state(&g, &mut rng),
        InitialCondition::Explicit(s) => s,
    };

    let mut s = start;
    let mut frame = TangentFrame::new();
    let tangent_active = cfg.eps > 0.0;
    let mut prev: Option<(SideLabel, f64)> = None; // side and outgoing angle
    let mut termination = Termination::Completed;
    let mut series: Vec<ExponentSample> = Vec::new();
    let mut tail: Vec<BouncePoint> = Vec::with_capacity(cfg.tail_size.max(RECURRENCE_WINDOW) + 1);
    let tail_cap = cfg.tail_size.max(RECURRENCE_WINDOW).max(2);
    let mut collapse_index: Option<u64> = None;
    let mut pending_collapse: Option<(usize, u64)> = None;
    let mut n_done: u64 = 0;

    for n in 1..=cfg.n_collisions {
        let (next, ev) = step(&s, &g, cfg.eps);
        let info = match ev.kind {
            EventKind::Collision(info) => info,
            EventKind::CornerHit => {
                termination = Termination::CornerHit;
                break;
            }
            EventKind::Stalled | EventKind::CellExit(_) => {
                termination = Termination::Stalled;
                break;
            }
        };
        n_done = n;
        s = next;
        sink(n, s.t, &s, &info, ev.dt);

        // Tangent propagation needs a previous collision to define a leg.
        if tangent_active {
            if let Some((from_side, theta_out)) = prev {
                let jf = flight_jacobian(
                    g.rhombus_side(from_side).slope_sign,
                    g.rhombus_side(info.side).slope_sign,
                    theta_out,
                    info.theta_in,
                    &g,
                    cfg.eps,
                );
                match jf {
                    Ok(jf) => {
                        if benettin_step(&mut frame, &collision_jacobian().mul(&jf), ev.dt).is_err()
                        {
                            termination = Termination::Stalled;
                            break;
                        }
                    }
                    Err(_) => {
                        // Singular leg configuration: skip the stretch but
                        // keep the clock so exponents stay per unit time.
                        frame.t_total += ev.dt;
                        frame.n += 1;
                    }
                }
            }
        }
        prev = Some((info.side, info.theta_out));

        if n % thinning_stride(n) == 0 {
            if let Ok((l1, l2)) = finite_time_exponents(&frame) {
                series.push(ExponentSample {
                    n,
                    t: frame.t_total,
                    lambda1: l1,
                    lambda2: l2,
                });
            }
        }

        tail.push(BouncePoint {
            side: info.side,
            r: info.r,
            eta: info.eta,
            theta: info.theta_out,
        });
        if tail.len() > tail_cap {
            let drop = tail.len() - tail_cap;
            tail.drain(..drop);
        }

        // Collapse detection on the sliding window, confirmed by two
        // consecutive firings with the same period.
        if collapse_index.is_none()
            && tail.len() >= RECURRENCE_WINDOW
            && n % (RECURRENCE_WINDOW as u64 / 2) == 0
        {
            let window = &tail[tail.len() - RECURRENCE_WINDOW..];
            match detect_periodicity(window, TOL_REC, P_MAX) {
                Some(p) => match pending_collapse {
                    Some((pp, nn)) if pp == p => {
                        collapse_index = Some(nn.saturating_sub(RECURRENCE_WINDOW as u64) + 1);
                    }
                    _ => pending_collapse = Some((p, n)),
                },
                None => pending_collapse = None,
            }
        }
    }

    let final_exponents = finite_time_exponents(&frame).ok();
    let class_tail_len = cfg.tail_size.min(tail.len());
    let class_tail = &tail[tail.len() - class_tail_len..];
    let classification = match detect_periodicity(class_tail, TOL_REC, P_MAX) {
        Some(p) => Classification::Periodic(p),
        None => match final_exponents {
            Some((l1, _)) if l1 > CHAOS_LAMBDA_THRESHOLD => Classification::ApparentlyChaotic,
            _ => Classification::QuasiPeriodicOrUnresolved,
        },
    };

    let (dx, dy) = s.unfolded(&g, start.cell);
    let displacement = (dx - start.x, dy - start.y);
    let mut tail_out = tail;
    if tail_out.len() > cfg.tail_size {
        let drop = tail_out.len() - cfg.tail_size;
        tail_out.drain(..drop);
    }
    Ok(TrajectoryStats {
        exponent_series: series,
        tail: tail_out,
        displacement,
        total_time: s.t,
        n_done,
        termination,
        final_exponents,
        collapse_index,
        classification,
    })
}

/// Run one seeded trajectory without streaming output.
pub fn run_trajectory(cfg: &RunConfig) -> Result<TrajectoryStats, ExperimentError> {
    run_trajectory_with(cfg, |_, _, _, _, _| {})
}

/// The two current estimates and their relative gap: mean displacement
/// per unit time along the field versus `-(λ1+λ2)/ε`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CurrentEstimate {
    pub j_displacement: f64,
    pub j_lyapunov: f64,
    pub relative_gap: f64,
}

pub fn current_estimate(stats: &TrajectoryStats, eps: f64) -> Option<CurrentEstimate> {
    if stats.total_time <= 0.0 {
        return None;
    }
    let j_displacement = stats.displacement.0 / stats.total_time;
    let (l1, l2) = stats.final_exponents?;
    let j_lyapunov = -(l1 + l2) / eps;
    let scale = j_displacement.abs().max(j_lyapunov.abs()).max(1e-300);
    Some(CurrentEstimate {
        j_displacement,
        j_lyapunov,
        relative_gap: (j_displacement - j_lyapunov).abs() / scale,
    })
}

/// One record of a parameter sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRecord {
    /// Swept parameter value (field strength or s_x).
    pub param: f64,
    pub seed: u64,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub classification: Option<Classification>,
    pub period: Option<usize>,
    pub n_c: Option<u64>,
    pub coverage: Option<f64>,
    pub tail: Vec<BouncePoint>,
    /// Per-point failure, recorded without aborting the sweep.
    pub error: Option<String>,
}

fn derive_seed(base: u64, index: u64) -> u64 {
    // splitmix64 step over the base/index pair; stable across platforms.
    let mut z = base ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if step <= 0.0 {
        return out;
    }
    let n = ((hi - lo) / step + 1e-9).floor() as i64;
    for k in 0..=n.max(-1) {
        out.push(lo + k as f64 * step);
    }
    out
}

fn sweep_point(cfg: RunConfig, param: f64) -> SweepRecord {
    let seed = cfg.seed;
    match run_trajectory(&cfg) {
        Ok(stats) => SweepRecord {
            param,
            seed,
            lambda1: stats.final_exponents.map(|e| e.0),
            lambda2: stats.final_exponents.map(|e| e.1),
            classification: Some(stats.classification),
            period: match stats.classification {
                Classification::Periodic(p) => Some(p),
                _ => None,
            },
            n_c: stats.collapse_index,
            coverage: Some(theta_coverage(&stats.tail)),
            tail: stats.tail,
            error: match stats.termination {
                Termination::Completed => None,
                Termination::CornerHit => Some("corner hit".into()),
                Termination::Stalled => Some("stalled".into()),
            },
        },
        Err(e) => SweepRecord {
            param,
            seed,
            lambda1: None,
            lambda2: None,
            classification: None,
            period: None,
            n_c: None,
            coverage: None,
            tail: Vec::new(),
            error: Some(e.to_string()),
        },
    }
}

/// Sweep the field over `[lo, hi]` with the given step. Grid points run
/// concurrently; output order and content are deterministic.
pub fn sweep_field(lo: f64, hi: f64, step: f64, template: &RunConfig) -> Vec<SweepRecord> {
    grid(lo, hi, step)
        .into_par_iter()
        .enumerate()
        .map(|(k, eps)| {
            let mut cfg = template.clone();
            cfg.eps = eps;
            cfg.seed = derive_seed(template.seed, k as u64);
            sweep_point(cfg, eps)
        })
        .collect()
}

/// Sweep the rhombus semiaxis s_x at fixed field. Invalid geometries are
/// recorded as per-point errors.
pub fn sweep_geometry(lo: f64, hi: f64, step: f64, template: &RunConfig) -> Vec<SweepRecord> {
    grid(lo, hi, step)
        .into_par_iter()
        .enumerate()
        .map(|(k, s_x)| {
            let mut cfg = template.clone();
            cfg.geometry.s_x = s_x;
            cfg.seed = derive_seed(template.seed, k as u64);
            sweep_point(cfg, s_x)
        })
        .collect()
}

/// Asymptotic exponent from the post-collapse series, via the 1/n model
/// `λ(n) = λ∞ + c/n`. Early post-collapse samples carry a within-period
/// oscillation, so the fit window starts at `max(2·N_c, n_done/10)`.
/// Returns `(λ∞, c, rms)`.
pub fn collapse_fit(stats: &TrajectoryStats) -> Option<(f64, f64, f64)> {
    let nc = stats.collapse_index?;
    let lo = (2 * nc).max(stats.n_done / 10).max(1);
    let pts: Vec<(f64, f64)> = stats
        .exponent_series
        .iter()
        .filter(|s| s.n >= lo)
        .map(|s| (s.n as f64, s.lambda1))
        .collect();
    fit_inverse_n(&pts)
}

/// One basin probe around an attracting orbit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasinProbeResult {
    /// Perturbation direction in (x, y, θ).
    pub direction: [f64; 3],
    pub magnitude: f64,
    pub n_c: Option<u64>,
    pub lambda_inf: Option<f64>,
    pub fit_residual: Option<f64>,
    pub converged: bool,
}

/// Probe the basin of an attracting periodic orbit by perturbing the
/// center state along each direction with each magnitude, running until
/// collapse is detected or the cap is reached, and fitting the post-
/// collapse exponent series as `λ(n) = λ∞ + c/n`.
pub fn basin_probe(
    g_params: GeometryParams,
    eps: f64,
    center: ParticleState,
    magnitudes: &[f64],
    directions: &[[f64; 3]],
    cap: u64,
) -> Vec<BasinProbeResult> {
    let mut probes = Vec::new();
    for dir in directions {
        for &mag in magnitudes {
            probes.push((*dir, mag));
        }
    }
    probes
        .into_par_iter()
        .map(|(dir, mag)| {
            let norm = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2])
                .sqrt()
                .max(1e-300);
            let ic = ParticleState::new(
                center.x + mag * dir[0] / norm,
                center.y + mag * dir[1] / norm,
                center.theta + mag * dir[2] / norm,
            );
            let cfg = RunConfig {
                geometry: g_params,
                eps,
                n_collisions: cap,
                seed: 0,
                ic: InitialCondition::Explicit(ic),
                tail_size: RECURRENCE_WINDOW,
            };
            let stats = match run_trajectory(&cfg) {
                Ok(s) => s,
                Err(_) => {
                    return BasinProbeResult {
                        direction: dir,
                        magnitude: mag,
                        n_c: None,
                        lambda_inf: None,
                        fit_residual: None,
                        converged: false,
                    }
                }
            };
            let n_c = stats.collapse_index;
            let fit = collapse_fit(&stats);
            let periodic_now = detect_periodicity(&stats.tail, TOL_REC, P_MAX).is_some();
            BasinProbeResult {
                direction: dir,
                magnitude: mag,
                n_c,
                lambda_inf: fit.map(|f| f.0),
                fit_residual: fit.map(|f| f.2),
                converged: periodic_now && fit.map(|f| f.2 < FIT_RESIDUAL_MAX).unwrap_or(false),
            }
        })
        .collect()
}

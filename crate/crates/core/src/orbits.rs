//! Catalog of low-period periodic orbits: the closed two-collision family
//! bouncing between vertically stacked rhombi, the open two-collision
//! family drifting along the field, and the open four-collision orbits
//! embedded in the chaotic attractor. Each family comes with existence
//! windows, analytic periods, a simulation-based verification gate, the
//! composed stability matrix, eigenvalue exponents and the orbit current.
//!
//! Construction is analytic-first where a formula exists and otherwise a
//! damped Newton iteration on the bounce-map section coordinates `(x, θ)`
//! of an anchor collision; any orbit failing verification is rejected
//! rather than corrected.

use crate::dynamics::{normalize_angle, step, DynamicsError, EventKind, ParticleState};
use crate::geometry::{BilliardGeometry, CellIndex, Point, SideLabel};
use crate::tangent::{
    collision_jacobian, finite_time_exponents, flight_jacobian, Matrix2, TangentError, TangentFrame,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OrbitError {
    #[error("no such orbit: {reason}")]
    NoSuchOrbit { reason: String },
    #[error("orbit closure failed (residual {residual})")]
    ClosureFailed { residual: f64 },
    #[error("realized symbolic sequence differs from the requested one: {realized:?}")]
    SequenceMismatch {
        realized: Vec<(CellIndex, SideLabel)>,
    },
    #[error("trajectory terminated ({0}) before the orbit closed")]
    Terminated(&'static str),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Tangent(#[from] TangentError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrbitKind {
    /// Returns to the same point of the plane: zero displacement.
    Closed,
    /// Returns to the same relative position in a translated cell.
    Open,
}

/// Mirror branches of the vertical closed family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerticalBranch {
    /// Launch upward from side r3 toward the cell two rows above.
    Up,
    /// Launch downward from side r2 toward the cell two rows below.
    Down,
}

/// Mirror branches of the open two-collision family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftBranch {
    /// Intermediate collision one row above.
    Up,
    /// Intermediate collision one row below.
    Down,
}

/// Symbolic itinerary: cell and side of each collision in one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolicSequence(pub Vec<(CellIndex, SideLabel)>);

impl SymbolicSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Compare against a realized itinerary up to a uniform cell shift.
    pub fn matches_translated(&self, realized: &[(CellIndex, SideLabel)]) -> bool {
        if self.0.len() != realized.len() || realized.is_empty() {
            return false;
        }
        let dm = realized[0].0.m - self.0[0].0.m;
        let dn = realized[0].0.n - self.0[0].0.n;
        self.0
            .iter()
            .zip(realized)
            .all(|(a, b)| a.1 == b.1 && a.0.m + dm == b.0.m && a.0.n + dn == b.0.n)
    }
}

/// A periodic orbit: itinerary, field, anchor initial condition
/// (post-collision), period, displacement per period, and kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrbitSpec {
    pub sequence: SymbolicSequence,
    pub eps: f64,
    pub ic: ParticleState,
    pub period_tau: f64,
    pub displacement: (f64, f64),
    pub kind: OrbitKind,
}

/// Stability data of a verified orbit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrbitStability {
    pub j_s: Matrix2,
    /// Eigenvalues of `j_s` as `(re, im)` pairs.
    pub eigenvalues: [(f64, f64); 2],
    /// Per-unit-time exponents `ln|μ_i| / τ`, ordered λ1 ≥ λ2.
    pub lambda: (f64, f64),
    /// Current `Δx / τ`.
    pub current_j: f64,
    /// Residual of the identity `j = -(λ1+λ2)/ε`.
    pub current_residual: f64,
}

/// One recorded collision along a trajectory.
#[derive(Debug, Clone, Copy)]
pub struct CollisionRecord {
    pub cell: CellIndex,
    pub side: SideLabel,
    pub point: Point,
    pub r: f64,
    pub eta: f64,
    pub theta_in: f64,
    pub theta_out: f64,
    /// Flight time since the previous collision (or since the start).
    pub dt: f64,
}

/// Run `n` collisions of the bounce map from `start`, recording each one.
pub fn collisions_from(
    g: &BilliardGeometry,
    eps: f64,
    start: &ParticleState,
    n: usize,
) -> Result<Vec<CollisionRecord>, OrbitError> {
    collisions_from_capped(g, eps, start, n, f64::INFINITY)
}

/// As [`collisions_from`], giving up once the accumulated flight time
/// exceeds `t_budget`, checked per sub-flight, so trajectories escaping
/// through collision-free corridors are discarded promptly. Section scans
/// use this to keep unrealizable candidates cheap.
pub fn collisions_from_capped(
    g: &BilliardGeometry,
    eps: f64,
    start: &ParticleState,
    n: usize,
    t_budget: f64,
) -> Result<Vec<CollisionRecord>, OrbitError> {
    if t_budget.is_infinite() {
        return collisions_without_budget(g, eps, start, n);
    }
    let mut out = Vec::with_capacity(n);
    let mut s = *start;
    let mut spent = 0.0;
    let mut leg_dt = 0.0;
    while out.len() < n {
        let ev = crate::dynamics::next_event(&s, g, eps);
        spent += ev.dt;
        if spent > t_budget {
            return Err(OrbitError::Terminated("time budget exhausted"));
        }
        match ev.kind {
            EventKind::Collision(info) => {
                leg_dt += ev.dt;
                out.push(CollisionRecord {
                    cell: ev.state.cell,
                    side: info.side,
                    point: info.point,
                    r: info.r,
                    eta: info.eta,
                    theta_in: info.theta_in,
                    theta_out: info.theta_out,
                    dt: leg_dt,
                });
                leg_dt = 0.0;
                s = ev.state;
            }
            EventKind::CellExit(label) => {
                leg_dt += ev.dt;
                match g.wrap_exit(ev.state.position(), label, ev.state.cell) {
                    Ok((p, cell)) => {
                        s = ParticleState {
                            x: p.x,
                            y: p.y,
                            theta: ev.state.theta,
                            cell,
                            t: ev.state.t,
                        };
                    }
                    Err(_) => return Err(OrbitError::Terminated("corner hit")),
                }
            }
            EventKind::CornerHit => return Err(OrbitError::Terminated("corner hit")),
            EventKind::Stalled => return Err(OrbitError::Terminated("stalled")),
        }
    }
    Ok(out)
}

fn collisions_without_budget(
    g: &BilliardGeometry,
    eps: f64,
    start: &ParticleState,
    n: usize,
) -> Result<Vec<CollisionRecord>, OrbitError> {
    let mut out = Vec::with_capacity(n);
    let mut s = *start;
    for _ in 0..n {
        let (next, ev) = step(&s, g, eps);
        match ev.kind {
            EventKind::Collision(info) => {
                out.push(CollisionRecord {
                    cell: next.cell,
                    side: info.side,
                    point: info.point,
                    r: info.r,
                    eta: info.eta,
                    theta_in: info.theta_in,
                    theta_out: info.theta_out,
                    dt: ev.dt,
                });
                s = next;
            }
            EventKind::CornerHit => return Err(OrbitError::Terminated("corner hit")),
            EventKind::Stalled => return Err(OrbitError::Terminated("stalled")),
            EventKind::CellExit(_) => unreachable!("step resolves cell exits"),
        }
    }
    Ok(out)
}

/// Post-collision state on a rhombus side of the origin cell, from the
/// horizontal coordinate of the collision point and the outgoing angle.
pub fn state_on_side(
    g: &BilliardGeometry,
    side: SideLabel,
    x: f64,
    theta_out: f64,
) -> ParticleState {
    let s = g.rhombus_side(side);
    let (a, b, c) = s.line();
    // b is never zero for rhombus sides.
    let y = (c - a * x) / b;
    ParticleState::new(x, y, theta_out)
}

/// Field strength for which the closed two-collision orbit has its
/// turning point (vertical velocity) at horizontal position `x0`.
pub fn closed_period2_eps(g: &BilliardGeometry, x0: f64) -> f64 {
    let th = g.theta_side;
    let t = th.tan();
    (th - t * th.cos().ln()) / (g.y_lat - g.s_y - t * x0)
}

/// Existence window of the closed two-collision family:
/// `2θ/(3L) < ε < 2θ/(3L - 2 s_y)`.
pub fn closed_period2_window(g: &BilliardGeometry) -> (f64, f64) {
    let th = g.theta_side;
    let l = g.hex_side;
    (2.0 * th / (3.0 * l), 2.0 * th / (3.0 * l - 2.0 * g.s_y))
}

/// Analytic period of the closed two-collision orbit.
pub fn closed_period2_tau(g: &BilliardGeometry, eps: f64) -> f64 {
    let h = g.theta_side / 2.0;
    let q = std::f64::consts::FRAC_PI_4;
    2.0 / eps * ((q + h).tan() / (q - h).tan()).ln()
}

/// Weighted length of the closed two-collision orbit,
/// `(2/ε)·e^{-ε·x0}·sin θ_side` with `x0` the turning-point abscissa.
pub fn closed_period2_length(g: &BilliardGeometry, eps: f64, x0: f64) -> f64 {
    2.0 / eps * (-eps * x0).exp() * g.theta_side.sin()
}

/// Construct the closed two-collision orbit whose turning point sits at
/// horizontal position `x0` (necessarily negative: the flight arcs bulge
/// against the field). Fails when the implied field leaves the existence
/// window.
pub fn closed_period2(
    g: &BilliardGeometry,
    x0: f64,
    branch: VerticalBranch,
) -> Result<OrbitSpec, OrbitError> {
    let eps = closed_period2_eps(g, x0);
    let (lo, hi) = closed_period2_window(g);
    if !(eps > lo && eps < hi) {
        return Err(OrbitError::NoSuchOrbit {
            reason: format!("field {eps} outside the existence window ({lo}, {hi})"),
        });
    }
    let th = g.theta_side;
    let t = th.tan();
    // Launch collision: the turning point shifted along the flight back to
    // the source side.
    let x_p = x0 - th.cos().ln() / eps;
    let y_p = t * x_p + g.s_y;
    let theta0 = std::f64::consts::FRAC_PI_2 + th;
    let (ic, sequence) = match branch {
        VerticalBranch::Up => (
            ParticleState::new(x_p, y_p, theta0),
            SymbolicSequence(vec![
                (CellIndex::ORIGIN, SideLabel::R3),
                (CellIndex::new(0, 2), SideLabel::R2),
            ]),
        ),
        VerticalBranch::Down => (
            ParticleState::new(x_p, -y_p, -theta0),
            SymbolicSequence(vec![
                (CellIndex::ORIGIN, SideLabel::R2),
                (CellIndex::new(0, -2), SideLabel::R3),
            ]),
        ),
    };
    Ok(OrbitSpec {
        sequence,
        eps,
        ic,
        period_tau: closed_period2_tau(g, eps),
        displacement: (0.0, 0.0),
        kind: OrbitKind::Closed,
    })
}

/// Analytic period of the open two-collision family,
/// `τ = (2/ε)·ln(1/tan(π/4 - θ_side))`; degenerate for θ_side ≥ π/4.
pub fn open_period2_tau(g: &BilliardGeometry, eps: f64) -> Result<f64, OrbitError> {
    let arg = (std::f64::consts::FRAC_PI_4 - g.theta_side).tan();
    if arg <= 0.0 {
        return Err(OrbitError::NoSuchOrbit {
            reason: format!(
                "period formula degenerates for theta_side = {} >= pi/4",
                g.theta_side
            ),
        });
    }
    Ok(2.0 / eps * (1.0 / arg).ln())
}

/// Newton solve of a period-`n` bounce-map fixed point anchored on `side`,
/// with prescribed cell displacement per period. Returns the polished
/// `(x, theta_out)` at the anchor collision.
fn polish_periodic(
    g: &BilliardGeometry,
    eps: f64,
    side: SideLabel,
    x_seed: f64,
    theta_seed: f64,
    period: usize,
    dcell: (i64, i64),
) -> Result<(f64, f64), OrbitError> {
    let residual = |x: f64, theta: f64| -> Option<(f64, f64)> {
        let ic = state_on_side(g, side, x, theta);
        let recs = collisions_from(g, eps, &ic, period).ok()?;
        let last = recs.last()?;
        if last.side != side || last.cell.m != dcell.0 || last.cell.n != dcell.1 {
            return None;
        }
        Some((last.point.x - x, normalize_angle(last.theta_out - theta)))
    };

    let norm = |f: (f64, f64)| f.0.abs().max(f.1.abs());
    let (mut x, mut theta) = (x_seed, theta_seed);
    let mut f = residual(x, theta).ok_or(OrbitError::ClosureFailed { residual: f64::NAN })?;
    for _ in 0..60 {
        if norm(f) < 1e-12 {
            return Ok((x, theta));
        }
        let h = 1e-8;
        let fx = residual(x + h, theta).ok_or(OrbitError::ClosureFailed { residual: norm(f) })?;
        let ft = residual(x, theta + h).ok_or(OrbitError::ClosureFailed { residual: norm(f) })?;
        let j11 = (fx.0 - f.0) / h;
        let j21 = (fx.1 - f.1) / h;
        let j12 = (ft.0 - f.0) / h;
        let j22 = (ft.1 - f.1) / h;
        let det = j11 * j22 - j12 * j21;
        if det.abs() < 1e-300 {
            return Err(OrbitError::ClosureFailed { residual: norm(f) });
        }
        let dx = (f.0 * j22 - f.1 * j12) / det;
        let dtheta = (f.1 * j11 - f.0 * j21) / det;
        // Damped update: halve until the residual improves.
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let (xn, tn) = (x - lambda * dx, theta - lambda * dtheta);
            if let Some(fnew) = residual(xn, tn) {
                if norm(fnew) < norm(f) {
                    x = xn;
                    theta = tn;
                    f = fnew;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if norm(f) < 1e-10 {
        Ok((x, theta))
    } else {
        Err(OrbitError::ClosureFailed { residual: norm(f) })
    }
}

/// Assemble an `OrbitSpec` from a polished anchor collision.
fn orbit_from_anchor(
    g: &BilliardGeometry,
    eps: f64,
    side: SideLabel,
    x: f64,
    theta_out: f64,
    period: usize,
) -> Result<OrbitSpec, OrbitError> {
    let ic = state_on_side(g, side, x, theta_out);
    let recs = collisions_from(g, eps, &ic, period)?;
    let last = recs.last().expect("period >= 1");
    let mut cells = vec![(CellIndex::ORIGIN, side)];
    cells.extend(recs[..period - 1].iter().map(|r| (r.cell, r.side)));
    let tau: f64 = recs.iter().map(|r| r.dt).sum();
    let dx = last.cell.m as f64 * g.x_lat + (last.point.x - ic.x);
    let dy = last.cell.n as f64 * g.y_lat + (last.point.y - ic.y);
    let kind = if last.cell == CellIndex::ORIGIN {
        OrbitKind::Closed
    } else {
        OrbitKind::Open
    };
    Ok(OrbitSpec {
        sequence: SymbolicSequence(cells),
        eps,
        ic,
        period_tau: tau,
        displacement: (dx, dy),
        kind,
    })
}

/// Construct the open two-collision orbit at field `eps`: one collision,
/// an intermediate collision one row up (or down), and a return to the
/// starting side two columns along the field. The anchor is found by a
/// coarse section scan refined by Newton; failure to close is reported,
/// never corrected.
pub fn open_period2(
    g: &BilliardGeometry,
    eps: f64,
    branch: DriftBranch,
) -> Result<OrbitSpec, OrbitError> {
    // The analytic period formula must be non-degenerate for the family
    // to exist at all.
    let _ = open_period2_tau(g, eps)?;
    solve_open_period2(g, eps, branch).ok_or_else(|| OrbitError::NoSuchOrbit {
        reason: format!("no two-collision closure found at eps = {eps}"),
    })
}

fn solve_open_period2(g: &BilliardGeometry, eps: f64, branch: DriftBranch) -> Option<OrbitSpec> {
    let (mid_dn, sides): (i64, [SideLabel; 2]) = match branch {
        DriftBranch::Up => (1, [SideLabel::R4, SideLabel::R3]),
        DriftBranch::Down => (-1, [SideLabel::R1, SideLabel::R2]),
    };
    let mut best: Option<(f64, SideLabel, f64, f64)> = None;
    for side in sides {
        let seg = g.rhombus_side(side);
        for i in 1..12 {
            let f = i as f64 / 12.0;
            let x = seg.start.x + f * (seg.end.x - seg.start.x);
            for k in 0..24 {
                let theta =
                    -std::f64::consts::PI + (k as f64 + 0.5) / 24.0 * 2.0 * std::f64::consts::PI;
                let ic = state_on_side(g, side, x, theta);
                let budget = 20.0 * (g.x_lat + g.y_lat);
                let Ok(recs) = collisions_from_capped(g, eps, &ic, 2, budget) else {
                    continue;
                };
                let last = &recs[1];
                if last.side != side || last.cell.m != 2 || last.cell.n != 0 {
                    continue;
                }
                if recs[0].cell.n != mid_dn {
                    continue;
                }
                let res = (last.point.x - x)
                    .abs()
                    .max(normalize_angle(last.theta_out - theta).abs());
                if best.is_none_or(|(b, ..)| res < b) {
                    best = Some((res, side, x, theta));
                }
            }
        }
    }
    let (_, side, x0, th0) = best?;
    let (x, theta) = polish_periodic(g, eps, side, x0, th0, 2, (2, 0)).ok()?;
    let orbit = orbit_from_anchor(g, eps, side, x, theta, 2).ok()?;
    // The intermediate collision must sit one row off, or this closure
    // belongs to a different family.
    if orbit.sequence.0[1].0.n != mid_dn {
        return None;
    }
    Some(orbit)
}

/// Search for a periodic orbit realizing a closing itinerary: `period+1`
/// symbols whose last entry repeats the first side in a translated cell.
/// A section grid scan collects candidate trajectories whose realized
/// cells and sides match the request, Newton closes the best one, and a
/// realized-sequence mismatch is rejected, never corrected. Unrealizable
/// patterns (no trajectory visits those cells in that order) come back as
/// `NoSuchOrbit`.
pub fn find_closing_sequence(
    g: &BilliardGeometry,
    eps: f64,
    seq: &SymbolicSequence,
) -> Result<OrbitSpec, OrbitError> {
    if seq.len() < 2 {
        return Err(OrbitError::NoSuchOrbit {
            reason: "a closing itinerary needs at least two symbols".into(),
        });
    }
    let first = seq.0[0];
    let last = *seq.0.last().expect("non-empty");
    if first.1 != last.1 {
        return Err(OrbitError::NoSuchOrbit {
            reason: "a closing itinerary must return to its starting side".into(),
        });
    }
    let period = seq.len() - 1;
    let dcell = (last.0.m - first.0.m, last.0.n - first.0.n);
    let anchor_side = first.1;
    let wanted: Vec<(i64, i64, SideLabel)> = seq.0[1..]
        .iter()
        .map(|(c, s)| (c.m - first.0.m, c.n - first.0.n, *s))
        .collect();

    let matches_wanted = |recs: &[CollisionRecord]| {
        recs.len() == period
            && recs
                .iter()
                .zip(&wanted)
                .all(|(r, w)| r.cell.m == w.0 && r.cell.n == w.1 && r.side == w.2)
    };

    let seg = g.rhombus_side(anchor_side);
    let budget = 10.0 * period as f64 * (g.x_lat + g.y_lat);
    let mut best: Option<(f64, f64, f64)> = None;
    'scan: for i in 1..24 {
        let f = i as f64 / 24.0;
        let x = seg.start.x + f * (seg.end.x - seg.start.x);
        for k in 0..48 {
            let theta =
                -std::f64::consts::PI + (k as f64 + 0.5) / 48.0 * 2.0 * std::f64::consts::PI;
            let ic = state_on_side(g, anchor_side, x, theta);
            let Ok(recs) = collisions_from_capped(g, eps, &ic, period, budget) else {
                continue;
            };
            if !matches_wanted(&recs) {
                continue;
            }
            let end = recs.last().expect("period >= 1");
            let res = (end.point.x - x)
                .abs()
                .max(normalize_angle(end.theta_out - theta).abs());
            if best.is_none_or(|(b, ..)| res < b) {
                best = Some((res, x, theta));
                if res < 0.02 {
                    break 'scan;
                }
            }
        }
    }
    let (_, x0, th0) = best.ok_or_else(|| OrbitError::NoSuchOrbit {
        reason: format!("no trajectory realizes the itinerary {:?}", seq.0),
    })?;
    let (x, theta) = polish_periodic(g, eps, anchor_side, x0, th0, period, dcell)?;
    let orbit = orbit_from_anchor(g, eps, anchor_side, x, theta, period)?;
    let recs = collisions_from(g, eps, &orbit.ic, period)?;
    if !matches_wanted(&recs) {
        return Err(OrbitError::SequenceMismatch {
            realized: recs.iter().map(|r| (r.cell, r.side)).collect(),
        });
    }
    Ok(orbit)
}

/// Existence window in the anchor abscissa for the open four-collision
/// family: `max{-s_x, -x_lat + ln(sin θ0'/sin θ0)/ε} < x0 <
/// min{-x_lat + s_x + ln(sin θ0'/sin θ0)/ε, 0}`. May be empty.
pub fn open_period4_window(
    g: &BilliardGeometry,
    eps: f64,
    theta0: f64,
    theta0p: f64,
) -> Result<(f64, f64), OrbitError> {
    let (s0, s1) = (theta0.sin().abs(), theta0p.sin().abs());
    if s0 <= 0.0 || s1 <= 0.0 {
        return Err(OrbitError::Dynamics(DynamicsError::Domain {
            theta_0: theta0,
            theta_t: theta0p,
        }));
    }
    let shift = (s1 / s0).ln() / eps;
    let lo = (-g.s_x).max(-g.x_lat + shift);
    let hi = (-g.x_lat + g.s_x + shift).min(0.0);
    Ok((lo, hi))
}

/// Polish a period-`period` orbit from a phase-space seed (a point of the
/// orbit anywhere along a flight). The seed's first collision provides the
/// anchor; the cell displacement per period is measured from the seed's
/// own itinerary and then held fixed during the Newton closure.
pub fn periodic_orbit_from_phase_point(
    g: &BilliardGeometry,
    eps: f64,
    seed: &ParticleState,
    period: usize,
) -> Result<OrbitSpec, OrbitError> {
    let recs = collisions_from(g, eps, seed, period + 1)?;
    let first = recs[0];
    let last = recs[period];
    let dcell = (last.cell.m - first.cell.m, last.cell.n - first.cell.n);
    let (x, theta) = polish_periodic(
        g,
        eps,
        first.side,
        first.point.x,
        first.theta_out,
        period,
        dcell,
    )?;
    orbit_from_anchor(g, eps, first.side, x, theta, period)
}

/// Polish a four-collision orbit from a phase-space seed. The family
/// drifts two columns along the field per period.
pub fn period4_orbit(
    g: &BilliardGeometry,
    eps: f64,
    seed: &ParticleState,
) -> Result<OrbitSpec, OrbitError> {
    periodic_orbit_from_phase_point(g, eps, seed, 4)
}

/// Recurrence residual of a phase point under `period` collisions:
/// the `(side, r, η)` distance between the first and the
/// `(period+1)`-th collision, and the realized itinerary in between.
pub fn phase_point_recurrence(
    g: &BilliardGeometry,
    eps: f64,
    ic: &ParticleState,
    period: usize,
) -> Result<(f64, Vec<(CellIndex, SideLabel)>), OrbitError> {
    let recs = collisions_from(g, eps, ic, period + 1)?;
    let (a, b) = (&recs[0], &recs[period]);
    if a.side != b.side {
        return Err(OrbitError::SequenceMismatch {
            realized: recs.iter().map(|r| (r.cell, r.side)).collect(),
        });
    }
    let residual = (a.r - b.r).abs().max((a.eta - b.eta).abs());
    Ok((
        residual,
        recs[..period].iter().map(|r| (r.cell, r.side)).collect(),
    ))
}

/// Simulate one period from the orbit's anchor and report the closure
/// residual: the worst `(r, η)` mismatch between the anchor collision and
/// its return. The realized itinerary must reproduce `o.sequence` up to a
/// cell translation.
pub fn verify_orbit(o: &OrbitSpec, g: &BilliardGeometry) -> Result<f64, OrbitError> {
    let n = o.sequence.len();
    let anchor_side = o.sequence.0[0].1;
    let side = g.rhombus_side(anchor_side);
    let (r0, eta0) = g
        .birkhoff_coords(o.ic.position(), &side, o.ic.theta)
        .map_err(DynamicsError::from)?;
    let recs = collisions_from(g, o.eps, &o.ic, n)?;
    let mut realized = vec![(o.ic.cell, anchor_side)];
    realized.extend(recs[..n - 1].iter().map(|r| (r.cell, r.side)));
    if !o.sequence.matches_translated(&realized) {
        return Err(OrbitError::SequenceMismatch { realized });
    }
    let last = recs.last().expect("period >= 1");
    if last.side != anchor_side {
        realized.push((last.cell, last.side));
        return Err(OrbitError::SequenceMismatch { realized });
    }
    Ok((last.r - r0).abs().max((last.eta - eta0).abs()))
}

/// Compose the stability matrix of one period from per-leg flight
/// Jacobians and the collision reflection, and derive exponents and the
/// orbit current from it. The orbit is assumed verified.
pub fn orbit_stability(o: &OrbitSpec, g: &BilliardGeometry) -> Result<OrbitStability, OrbitError> {
    let n = o.sequence.len();
    let recs = collisions_from(g, o.eps, &o.ic, n)?;
    // Guard against silently analyzing a different trajectory (an
    // obstructed or unverified orbit).
    let mut realized = vec![(o.ic.cell, o.sequence.0[0].1)];
    realized.extend(recs[..n - 1].iter().map(|r| (r.cell, r.side)));
    if !o.sequence.matches_translated(&realized) {
        return Err(OrbitError::SequenceMismatch { realized });
    }
    let jc = collision_jacobian();
    let mut j_s = Matrix2::IDENTITY;
    let mut from_side = o.sequence.0[0].1;
    let mut theta_out = o.ic.theta;
    let mut tau = 0.0;
    for rec in &recs {
        let jf = flight_jacobian(
            g.rhombus_side(from_side).slope_sign,
            g.rhombus_side(rec.side).slope_sign,
            theta_out,
            rec.theta_in,
            g,
            o.eps,
        )?;
        j_s = jc.mul(&jf).mul(&j_s);
        tau += rec.dt;
        from_side = rec.side;
        theta_out = rec.theta_out;
    }
    let eigenvalues = j_s.eigenvalues();
    let modulus = |(re, im): (f64, f64)| (re * re + im * im).sqrt();
    let mut l1 = modulus(eigenvalues[0]).ln() / tau;
    let mut l2 = modulus(eigenvalues[1]).ln() / tau;
    if l1 < l2 {
        std::mem::swap(&mut l1, &mut l2);
    }
    let last = recs.last().expect("period >= 1");
    let dx = last.cell.m as f64 * g.x_lat + (last.point.x - o.ic.x);
    let current_j = dx / tau;
    Ok(OrbitStability {
        j_s,
        eigenvalues,
        lambda: (l1, l2),
        current_j,
        current_residual: (current_j + (l1 + l2) / o.eps).abs(),
    })
}

/// The orbit current `j = Δx/τ` and the residual of the pairing identity
/// `j = -(λ1+λ2)/ε`.
pub fn orbit_current(o: &OrbitSpec, st: &OrbitStability) -> (f64, f64) {
    let j = o.displacement.0 / o.period_tau;
    (j, (j + (st.lambda.0 + st.lambda.1) / o.eps).abs())
}

/// Accumulate Benettin steps along exactly `periods` repetitions of the
/// orbit, returning the tangent frame (for exponent comparisons against
/// the eigenvalue route).
pub fn benettin_along_orbit(
    o: &OrbitSpec,
    g: &BilliardGeometry,
    periods: usize,
) -> Result<TangentFrame, OrbitError> {
    let n = o.sequence.len() * periods;
    let recs = collisions_from(g, o.eps, &o.ic, n)?;
    let jc = collision_jacobian();
    let mut frame = TangentFrame::new();
    let mut from_side = o.sequence.0[0].1;
    let mut theta_out = o.ic.theta;
    for rec in &recs {
        let jf = flight_jacobian(
            g.rhombus_side(from_side).slope_sign,
            g.rhombus_side(rec.side).slope_sign,
            theta_out,
            rec.theta_in,
            g,
            o.eps,
        )?;
        crate::tangent::benettin_step(&mut frame, &jc.mul(&jf), rec.dt)?;
        from_side = rec.side;
        theta_out = rec.theta_out;
    }
    Ok(frame)
}

/// Exponents of a tangent frame, convenience re-export for orbit analysis.
pub fn frame_exponents(frame: &TangentFrame) -> Result<(f64, f64), TangentError> {
    finite_time_exponents(frame)
}

/// Published reference orbits, pinned to the standard table.
pub mod recipes {
    use super::*;

    /// Four-collision orbit embedded in the chaotic attractor at
    /// field 0.374.
    pub fn table2_row1() -> (BilliardGeometry, f64, ParticleState) {
        (
            BilliardGeometry::default_table(),
            0.374,
            ParticleState::new(-0.48971578282741385, -0.3886737605834475, -2.06199461833),
        )
    }

    /// Four-collision orbit embedded in the chaotic attractor at
    /// field 0.5.
    pub fn table2_row2() -> (BilliardGeometry, f64, ParticleState) {
        (
            BilliardGeometry::default_table(),
            0.5,
            ParticleState::new(0.30576674801010, 0.6558650167554337, -0.31873995693500),
        )
    }

    /// Attracting nineteen-collision orbit at field 0.087.
    pub fn nineteen_point() -> (BilliardGeometry, f64, ParticleState) {
        (
            BilliardGeometry::default_table(),
            0.087,
            ParticleState::new(0.418447478686, 0.492193019206, 0.718794450586),
        )
    }

    /// Build the attracting orbit at field 0.087 as an `OrbitSpec` by
    /// polishing the cycle anchored at the first collision of the
    /// published point.
    pub fn nineteen_point_orbit() -> Result<OrbitSpec, OrbitError> {
        let (g, eps, ic) = nineteen_point();
        periodic_orbit_from_phase_point(&g, eps, &ic, 19)
    }
}

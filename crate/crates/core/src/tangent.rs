//! Tangent dynamics of the bounce map in (θ, x) coordinates: analytic
//! per-leg Jacobians, their composition, and Lyapunov exponent estimation
//! by repeated orthonormalization.
//!
//! The billiard map has two degrees of freedom; rows and columns of every
//! matrix here refer to `(θ, x)` where `x` is the horizontal coordinate of
//! the collision point on its side. The collision contributes the constant
//! `diag(-1, 1)`; the free flight between two sides contributes one of
//! three matrices depending on the slope signs of the source and target
//! sides, with entries rational in `tan θ0` (outgoing angle at the source),
//! `tan θ0'` (incidence angle at the target) and `tan θ_side`.

use crate::geometry::{BilliardGeometry, SlopeSign};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TangentError {
    #[error("flight Jacobian is singular for θ0={theta0}, θ0'={theta0p} (denominator {denom})")]
    SingularConfiguration {
        theta0: f64,
        theta0p: f64,
        denom: f64,
    },
    #[error("field must be positive for tangent propagation (got {0})")]
    NonPositiveField(f64),
    #[error("tangent vector collapsed (stretch factor {0})")]
    DegenerateTangent(f64),
    #[error("no time accumulated; exponents undefined")]
    EmptyFrame,
}

/// Dense 2×2 real matrix in (θ, x) tangent coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Matrix2 {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
}

impl Matrix2 {
    pub const IDENTITY: Matrix2 = Matrix2 {
        a11: 1.0,
        a12: 0.0,
        a21: 0.0,
        a22: 1.0,
    };

    pub fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Matrix2 { a11, a12, a21, a22 }
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    pub fn mul(&self, rhs: &Matrix2) -> Matrix2 {
        Matrix2 {
            a11: self.a11 * rhs.a11 + self.a12 * rhs.a21,
            a12: self.a11 * rhs.a12 + self.a12 * rhs.a22,
            a21: self.a21 * rhs.a11 + self.a22 * rhs.a21,
            a22: self.a21 * rhs.a12 + self.a22 * rhs.a22,
        }
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.a11 * v[0] + self.a12 * v[1],
            self.a21 * v[0] + self.a22 * v[1],
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.a11.is_finite() && self.a12.is_finite() && self.a21.is_finite() && self.a22.is_finite()
    }

    /// Eigenvalues as complex pairs `(re, im)`.
    pub fn eigenvalues(&self) -> [(f64, f64); 2] {
        let tr = self.trace();
        let disc = tr * tr - 4.0 * self.det();
        if disc >= 0.0 {
            let s = disc.sqrt();
            [((tr + s) / 2.0, 0.0), ((tr - s) / 2.0, 0.0)]
        } else {
            let s = (-disc).sqrt() / 2.0;
            [(tr / 2.0, s), (tr / 2.0, -s)]
        }
    }
}

/// Jacobian of the elastic collision in (θ, x): θ flips, the point stays.
pub fn collision_jacobian() -> Matrix2 {
    Matrix2::new(-1.0, 0.0, 0.0, 1.0)
}

/// Jacobian of the free flight from a side with slope sign `from_slope` to
/// a side with slope sign `to_slope`.
///
/// `theta0` is the outgoing angle at the source collision; `theta0p` the
/// incidence angle at the target. Entries depend only on angles and the
/// field, never on the collision position.
pub fn flight_jacobian(
    from_slope: SlopeSign,
    to_slope: SlopeSign,
    theta0: f64,
    theta0p: f64,
    g: &BilliardGeometry,
    eps: f64,
) -> Result<Matrix2, TangentError> {
    if eps <= 0.0 {
        return Err(TangentError::NonPositiveField(eps));
    }
    let t = g.theta_side.tan();
    let t0 = theta0.tan();
    let t1 = theta0p.tan();
    let singular = |denom: f64| TangentError::SingularConfiguration {
        theta0,
        theta0p,
        denom,
    };

    use SlopeSign::{Negative, Positive};
    let m = match (from_slope, to_slope) {
        (Positive, Negative) => {
            let denom = t1 + t;
            if denom.abs() < 1e-14 || t0.abs() < 1e-14 {
                return Err(singular(denom));
            }
            Matrix2::new(
                (t0 + t) * t1 / (denom * t0),
                2.0 * eps * t * t1 / denom,
                -(t0 - t1) / (eps * t0 * denom),
                (t1 - t) / denom,
            )
        }
        (Negative, Positive) => {
            let denom = t - t1;
            if denom.abs() < 1e-14 || t0.abs() < 1e-14 {
                return Err(singular(denom));
            }
            Matrix2::new(
                -(t0 - t) * t1 / (denom * t0),
                2.0 * eps * t * t1 / denom,
                -(t1 - t0) / (eps * t0 * denom),
                (t1 + t) / (t1 - t),
            )
        }
        (Positive, Positive) => {
            let denom = t1 - t;
            if denom.abs() < 1e-14 || t0.abs() < 1e-14 {
                return Err(singular(denom));
            }
            Matrix2::new(
                (t0 - t) * t1 / (denom * t0),
                0.0,
                -(t0 - t1) / (eps * t0 * denom),
                1.0,
            )
        }
        (Negative, Negative) => {
            let denom = t1 + t;
            if denom.abs() < 1e-14 || t0.abs() < 1e-14 {
                return Err(singular(denom));
            }
            Matrix2::new(
                (t0 + t) * t1 / (denom * t0),
                0.0,
                -(t0 - t1) / (eps * t0 * denom),
                1.0,
            )
        }
    };
    Ok(m)
}

/// Orthonormalized tangent basis with accumulated log-stretches, used for
/// the classic two-exponent estimation along a trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TangentFrame {
    pub basis: [[f64; 2]; 2],
    pub log_sums: [f64; 2],
    /// Accumulated flight time.
    pub t_total: f64,
    /// Collision count.
    pub n: u64,
}

impl Default for TangentFrame {
    fn default() -> Self {
        Self::new()
    }
}

impl TangentFrame {
    pub fn new() -> Self {
        TangentFrame {
            basis: [[1.0, 0.0], [0.0, 1.0]],
            log_sums: [0.0, 0.0],
            t_total: 0.0,
            n: 0,
        }
    }

    /// Frame orthonormality defect, for diagnostics and tests.
    pub fn orthonormality_defect(&self) -> f64 {
        let [u, v] = self.basis;
        let dot = u[0] * v[0] + u[1] * v[1];
        let nu = (u[0] * u[0] + u[1] * u[1]).sqrt();
        let nv = (v[0] * v[0] + v[1] * v[1]).sqrt();
        dot.abs().max((nu - 1.0).abs()).max((nv - 1.0).abs())
    }
}

/// Propagate the frame through one leg: apply `j`, re-orthonormalize by
/// Gram–Schmidt with positive diagonal, accumulate the log stretches and
/// the leg flight time.
pub fn benettin_step(frame: &mut TangentFrame, j: &Matrix2, dt: f64) -> Result<(), TangentError> {
    let v1 = j.apply(frame.basis[0]);
    let v2 = j.apply(frame.basis[1]);
    let r11 = (v1[0] * v1[0] + v1[1] * v1[1]).sqrt();
    if r11 < 1e-300 {
        return Err(TangentError::DegenerateTangent(r11));
    }
    let q1 = [v1[0] / r11, v1[1] / r11];
    let proj = q1[0] * v2[0] + q1[1] * v2[1];
    let w2 = [v2[0] - proj * q1[0], v2[1] - proj * q1[1]];
    let r22 = (w2[0] * w2[0] + w2[1] * w2[1]).sqrt();
    if r22 < 1e-300 {
        return Err(TangentError::DegenerateTangent(r22));
    }
    frame.basis = [q1, [w2[0] / r22, w2[1] / r22]];
    frame.log_sums[0] += r11.ln();
    frame.log_sums[1] += r22.ln();
    frame.t_total += dt;
    frame.n += 1;
    Ok(())
}

/// Finite-time Lyapunov exponents per unit time, ordered λ1 ≥ λ2.
pub fn finite_time_exponents(frame: &TangentFrame) -> Result<(f64, f64), TangentError> {
    if frame.t_total <= 0.0 {
        return Err(TangentError::EmptyFrame);
    }
    let a = frame.log_sums[0] / frame.t_total;
    let b = frame.log_sums[1] / frame.t_total;
    Ok(if a >= b { (a, b) } else { (b, a) })
}

/// Secondary diagnostic: exponents per collision instead of per unit time.
pub fn per_collision_exponents(frame: &TangentFrame) -> Result<(f64, f64), TangentError> {
    if frame.n == 0 {
        return Err(TangentError::EmptyFrame);
    }
    let a = frame.log_sums[0] / frame.n as f64;
    let b = frame.log_sums[1] / frame.n as f64;
    Ok(if a >= b { (a, b) } else { (b, a) })
}

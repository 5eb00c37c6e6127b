//! Output emission: CSV for bulk series, JSON for structured records.
//! Floats are written with 17 significant digits so every value
//! round-trips exactly and reruns diff clean.

use crate::dynamics::{CollisionInfo, ParticleState};
use crate::experiments::{BasinProbeResult, ExponentSample, SweepRecord};
use std::io::{self, Write};

/// 17-significant-digit scientific form; round-trip exact for f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Header of the per-collision trajectory stream.
pub const TRAJECTORY_HEADER: &str = "collision_index,t,cell_m,cell_n,side_label,r,eta,theta_out,dt";

/// One CSV row of the trajectory stream.
pub fn trajectory_row(
    n: u64,
    t: f64,
    state: &ParticleState,
    info: &CollisionInfo,
    dt: f64,
) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        n,
        fmt_f64(t),
        state.cell.m,
        state.cell.n,
        info.side,
        fmt_f64(info.r),
        fmt_f64(info.eta),
        fmt_f64(info.theta_out),
        fmt_f64(dt)
    )
}

pub const EXPONENT_HEADER: &str = "n,t,lambda1,lambda2";

pub fn write_exponent_csv<W: Write>(w: &mut W, series: &[ExponentSample]) -> io::Result<()> {
    writeln!(w, "{EXPONENT_HEADER}")?;
    for s in series {
        writeln!(
            w,
            "{},{},{},{}",
            s.n,
            fmt_f64(s.t),
            fmt_f64(s.lambda1),
            fmt_f64(s.lambda2)
        )?;
    }
    Ok(())
}

pub const SWEEP_HEADER: &str =
    "param,lambda1,lambda2,classification,period,n_c,coverage,seed,error";

fn opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn write_sweep_csv<W: Write>(w: &mut W, records: &[SweepRecord]) -> io::Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            fmt_f64(r.param),
            opt_f64(r.lambda1),
            opt_f64(r.lambda2),
            r.classification.map(|c| c.to_string()).unwrap_or_default(),
            r.period.map(|p| p.to_string()).unwrap_or_default(),
            r.n_c.map(|n| n.to_string()).unwrap_or_default(),
            opt_f64(r.coverage),
            r.seed,
            r.error.clone().unwrap_or_default().replace(',', ";"),
        )?;
    }
    Ok(())
}

pub const MULTIFURCATION_HEADER: &str = "param,theta";

/// Scatter data: one row per retained tail point of each sweep record,
/// directly plottable as a multi-furcation diagram.
pub fn write_multifurcation_csv<W: Write>(w: &mut W, records: &[SweepRecord]) -> io::Result<()> {
    writeln!(w, "{MULTIFURCATION_HEADER}")?;
    for r in records {
        for p in &r.tail {
            writeln!(w, "{},{}", fmt_f64(r.param), fmt_f64(p.theta))?;
        }
    }
    Ok(())
}

pub const BASIN_HEADER: &str = "dx,dy,dtheta,magnitude,n_c,lambda_inf,converged";

pub fn write_basin_csv<W: Write>(w: &mut W, results: &[BasinProbeResult]) -> io::Result<()> {
    writeln!(w, "{BASIN_HEADER}")?;
    for r in results {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            fmt_f64(r.direction[0]),
            fmt_f64(r.direction[1]),
            fmt_f64(r.direction[2]),
            fmt_f64(r.magnitude),
            r.n_c.map(|n| n.to_string()).unwrap_or_default(),
            opt_f64(r.lambda_inf),
            r.converged,
        )?;
    }
    Ok(())
}

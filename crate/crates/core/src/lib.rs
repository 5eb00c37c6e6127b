//! Event-driven simulator and analysis toolkit for a field-driven,
//! isokinetically thermostatted point particle scattering off rhombi on a
//! triangular lattice.
//!
//! The crate is organized around the bounce map of the billiard:
//!
//! * [`geometry`]: the hexagonal Wigner-Seitz cell, the rhombic
//!   scatterer, periodic wrapping and Birkhoff boundary coordinates;
//! * [`dynamics`]: exact curved free flights, the event search, the
//!   elastic collision map and per-flight conserved quantities;
//! * [`tangent`]: analytic 2x2 flight/collision Jacobians and Lyapunov
//!   exponent estimation by repeated orthonormalization;
//! * [`orbits`]: construction, verification and stability of the
//!   low-period periodic orbit families, and the orbit current;
//! * [`experiments`]: long-trajectory runs, parameter sweeps,
//!   periodicity detection, basin probing and current estimation;
//! * [`io`]: CSV/JSON emission with reproducible formatting.

pub mod dynamics;
pub mod experiments;
pub mod geometry;
pub mod io;
pub mod orbits;
pub mod tangent;

pub use dynamics::{Event, EventKind, FieldParams, ParticleState};
pub use geometry::{
    BilliardGeometry, CellIndex, GeometryError, HexSideLabel, Horizon, Point, RhombusSide,
    SideLabel, SlopeSign,
};
pub use tangent::{Matrix2, TangentFrame};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

//! Billiard table geometry: the hexagonal Wigner–Seitz cell of a triangular
//! lattice, the rhombic scatterer centered in it, periodic wrapping between
//! cells, and Birkhoff boundary coordinates.
//!
//! Conventions fixed here and relied on everywhere else:
//!
//! * The hexagon is regular with side `L`, centered on the rhombus center,
//!   with two vertical sides at `x = ±√3·L/2` and vertices
//!   `(±√3L/2, ±L/2)`, `(0, ±L)`.
//! * Lattice cells are indexed by `(m, n)` with `m, n` both even or both odd;
//!   the cell center sits at `(m·x_lat, n·y_lat)`.
//! * Rhombus sides are labelled `r1..r4` clockwise starting from the side
//!   that runs from the right vertex `(s_x, 0)` down to `(0, -s_y)`.
//!   Hexagon sides are labelled `h1..h6` clockwise starting from the right
//!   vertical side.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Corner tolerance in boundary arc length. Collision points closer than
/// this to a vertex are reported as corner hits, never silently perturbed.
pub const CORNER_TOL: f64 = 1e-12;

/// Tolerance for "point lies on this line" checks at cell boundaries.
pub const ON_LINE_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("geometry parameters must be strictly positive (got L={l}, s_x={s_x}, s_y={s_y})")]
    NonPositive { l: f64, s_x: f64, s_y: f64 },
    #[error("rhombus overlaps its neighbors: side length {side_len} exceeds {max_side} (or s_x {s_x} > x_lat {x_lat})")]
    Overlap {
        side_len: f64,
        max_side: f64,
        s_x: f64,
        x_lat: f64,
    },
    #[error("point ({x}, {y}) is not on the claimed boundary (distance {dist})")]
    NotOnSide { x: f64, y: f64, dist: f64 },
    #[error("collision point within corner tolerance of a vertex (arc distance {arc_dist})")]
    CornerHit { arc_dist: f64 },
}

/// Whether straight corridors parallel to the x-axis are blocked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Horizon {
    Finite,
    Infinite,
}

/// Sign of a rhombus side's slope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlopeSign {
    Positive,
    Negative,
}

/// Rhombus side labels, clockwise from the right vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SideLabel {
    R1,
    R2,
    R3,
    R4,
}

impl SideLabel {
    pub const ALL: [SideLabel; 4] = [SideLabel::R1, SideLabel::R2, SideLabel::R3, SideLabel::R4];

    pub fn index(self) -> usize {
        match self {
            SideLabel::R1 => 0,
            SideLabel::R2 => 1,
            SideLabel::R3 => 2,
            SideLabel::R4 => 3,
        }
    }
}

impl std::fmt::Display for SideLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "r{}", self.index() + 1)
    }
}

/// Hexagon side labels, clockwise from the right vertical side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HexSideLabel {
    H1,
    H2,
    H3,
    H4,
    H5,
    H6,
}

impl HexSideLabel {
    pub const ALL: [HexSideLabel; 6] = [
        HexSideLabel::H1,
        HexSideLabel::H2,
        HexSideLabel::H3,
        HexSideLabel::H4,
        HexSideLabel::H5,
        HexSideLabel::H6,
    ];

    pub fn index(self) -> usize {
        match self {
            HexSideLabel::H1 => 0,
            HexSideLabel::H2 => 1,
            HexSideLabel::H3 => 2,
            HexSideLabel::H4 => 3,
            HexSideLabel::H5 => 4,
            HexSideLabel::H6 => 5,
        }
    }

    /// The side reached after wrapping through `self`.
    pub fn opposite(self) -> HexSideLabel {
        HexSideLabel::ALL[(self.index() + 3) % 6]
    }
}

impl std::fmt::Display for HexSideLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "h{}", self.index() + 1)
    }
}

/// Lattice cell index. Valid indices have `m` and `n` of equal parity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellIndex {
    pub m: i64,
    pub n: i64,
}

impl CellIndex {
    pub const ORIGIN: CellIndex = CellIndex { m: 0, n: 0 };

    pub fn new(m: i64, n: i64) -> Self {
        CellIndex { m, n }
    }

    /// Both-even-or-both-odd lattice parity rule.
    pub fn parity_ok(self) -> bool {
        (self.m - self.n) % 2 == 0
    }

    pub fn offset(self, dm: i64, dn: i64) -> CellIndex {
        CellIndex {
            m: self.m + dm,
            n: self.n + dn,
        }
    }
}

/// A plane point in cell-local coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// One side of the rhombus as an oriented segment (clockwise traversal).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RhombusSide {
    pub label: SideLabel,
    pub start: Point,
    pub end: Point,
    pub slope_sign: SlopeSign,
    /// Unit normal pointing away from the rhombus center.
    pub outward_normal: (f64, f64),
}

impl RhombusSide {
    /// Unit direction along the clockwise traversal, used for Birkhoff η.
    pub fn direction(&self) -> (f64, f64) {
        let dx = self.end.x - self.start.x;
        let dy = self.end.y - self.start.y;
        let len = dx.hypot(dy);
        (dx / len, dy / len)
    }

    pub fn length(&self) -> f64 {
        self.start.dist(self.end)
    }

    /// Line coefficients `(a, b, c)` with `a·x + b·y = c` and `(a, b)` unit.
    pub fn line(&self) -> (f64, f64, f64) {
        let (dx, dy) = self.direction();
        let (a, b) = (-dy, dx);
        (a, b, a * self.start.x + b * self.start.y)
    }
}

/// One side of the hexagonal cell boundary.
#[derive(Debug, Clone, Copy)]
pub struct HexSide {
    pub label: HexSideLabel,
    pub start: Point,
    pub end: Point,
    /// Cell index change when wrapping through this side.
    pub neighbor_delta: (i64, i64),
}

impl HexSide {
    pub fn line(&self) -> (f64, f64, f64) {
        let dx = self.end.x - self.start.x;
        let dy = self.end.y - self.start.y;
        let len = dx.hypot(dy);
        let (a, b) = (-dy / len, dx / len);
        (a, b, a * self.start.x + b * self.start.y)
    }
}

/// Fully derived table geometry. Immutable after construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BilliardGeometry {
    /// Hexagon side length L.
    #[serde(rename = "L")]
    pub hex_side: f64,
    /// Rhombus semiaxis along x.
    pub s_x: f64,
    /// Rhombus semiaxis along y.
    pub s_y: f64,
    /// Half lattice spacing along x: √3·L/2.
    #[serde(rename = "x_L")]
    pub x_lat: f64,
    /// Lattice spacing along y: 3·L/2.
    #[serde(rename = "y_L")]
    pub y_lat: f64,
    /// Rhombus side length √(s_x² + s_y²).
    #[serde(rename = "l")]
    pub side_len: f64,
    /// Side inclination atan(s_y/s_x).
    pub theta_side: f64,
    pub horizon: Horizon,
    /// Wigner–Seitz cell area 2·x_lat·y_lat = (3√3/2)·L².
    #[serde(rename = "A_WS")]
    pub cell_area: f64,
}

impl BilliardGeometry {
    /// Build and classify a geometry from the three defining lengths.
    pub fn new(hex_side: f64, s_x: f64, s_y: f64) -> Result<Self, GeometryError> {
        if !(hex_side > 0.0 && s_x > 0.0 && s_y > 0.0) {
            return Err(GeometryError::NonPositive {
                l: hex_side,
                s_x,
                s_y,
            });
        }
        let x_lat = 3.0f64.sqrt() * hex_side / 2.0;
        let y_lat = 1.5 * hex_side;
        let side_len = s_x.hypot(s_y);
        let max_side = 7.0f64.sqrt() / 2.0 * hex_side;
        if side_len > max_side || s_x > x_lat {
            return Err(GeometryError::Overlap {
                side_len,
                max_side,
                s_x,
                x_lat,
            });
        }
        let horizon = if s_y >= y_lat / 2.0 {
            Horizon::Finite
        } else {
            Horizon::Infinite
        };
        Ok(BilliardGeometry {
            hex_side,
            s_x,
            s_y,
            x_lat,
            y_lat,
            side_len,
            theta_side: (s_y / s_x).atan(),
            horizon,
            cell_area: 2.0 * x_lat * y_lat,
        })
    }

    /// The paper-standard table: L = 1.291, s_x = 0.7573, s_y = 1.1.
    pub fn default_table() -> Self {
        BilliardGeometry::new(1.291, 0.7573, 1.1).expect("default geometry is valid")
    }

    /// Slope of a side with the given sign, `±s_y/s_x`.
    pub fn slope(&self, sign: SlopeSign) -> f64 {
        match sign {
            SlopeSign::Positive => self.s_y / self.s_x,
            SlopeSign::Negative => -self.s_y / self.s_x,
        }
    }

    /// The four rhombus sides in label order r1..r4.
    pub fn rhombus_sides(&self) -> [RhombusSide; 4] {
        let (sx, sy) = (self.s_x, self.s_y);
        let l = self.side_len;
        [
            RhombusSide {
                label: SideLabel::R1,
                start: Point::new(sx, 0.0),
                end: Point::new(0.0, -sy),
                slope_sign: SlopeSign::Positive,
                outward_normal: (sy / l, -sx / l),
            },
            RhombusSide {
                label: SideLabel::R2,
                start: Point::new(0.0, -sy),
                end: Point::new(-sx, 0.0),
                slope_sign: SlopeSign::Negative,
                outward_normal: (-sy / l, -sx / l),
            },
            RhombusSide {
                label: SideLabel::R3,
                start: Point::new(-sx, 0.0),
                end: Point::new(0.0, sy),
                slope_sign: SlopeSign::Positive,
                outward_normal: (-sy / l, sx / l),
            },
            RhombusSide {
                label: SideLabel::R4,
                start: Point::new(0.0, sy),
                end: Point::new(sx, 0.0),
                slope_sign: SlopeSign::Negative,
                outward_normal: (sy / l, sx / l),
            },
        ]
    }

    pub fn rhombus_side(&self, label: SideLabel) -> RhombusSide {
        self.rhombus_sides()[label.index()]
    }

    /// The six hexagon sides in label order h1..h6 with wrap translations.
    pub fn hexagon_sides(&self) -> [HexSide; 6] {
        let xl = self.x_lat;
        let l = self.hex_side;
        let h = l / 2.0;
        [
            HexSide {
                label: HexSideLabel::H1,
                start: Point::new(xl, -h),
                end: Point::new(xl, h),
                neighbor_delta: (2, 0),
            },
            HexSide {
                label: HexSideLabel::H2,
                start: Point::new(xl, -h),
                end: Point::new(0.0, -l),
                neighbor_delta: (1, -1),
            },
            HexSide {
                label: HexSideLabel::H3,
                start: Point::new(0.0, -l),
                end: Point::new(-xl, -h),
                neighbor_delta: (-1, -1),
            },
            HexSide {
                label: HexSideLabel::H4,
                start: Point::new(-xl, -h),
                end: Point::new(-xl, h),
                neighbor_delta: (-2, 0),
            },
            HexSide {
                label: HexSideLabel::H5,
                start: Point::new(-xl, h),
                end: Point::new(0.0, l),
                neighbor_delta: (-1, 1),
            },
            HexSide {
                label: HexSideLabel::H6,
                start: Point::new(0.0, l),
                end: Point::new(xl, h),
                neighbor_delta: (1, 1),
            },
        ]
    }

    pub fn hexagon_side(&self, label: HexSideLabel) -> HexSide {
        self.hexagon_sides()[label.index()]
    }

    /// Translation applied to a point when wrapping through `side`
    /// (the negative of the neighbor center offset).
    pub fn wrap_translation(&self, side: HexSideLabel) -> (f64, f64) {
        let (dm, dn) = self.hexagon_side(side).neighbor_delta;
        (-(dm as f64) * self.x_lat, -(dn as f64) * self.y_lat)
    }

    /// Move a boundary point to the opposite side of the neighboring cell.
    ///
    /// `p` must lie on the named hexagon side (within boundary tolerance);
    /// the translation is one of `(±2·x_lat, 0)`, `(±x_lat, ±y_lat)` and
    /// preserves the cell parity rule.
    pub fn wrap_exit(
        &self,
        p: Point,
        exit_side: HexSideLabel,
        cell: CellIndex,
    ) -> Result<(Point, CellIndex), GeometryError> {
        let side = self.hexagon_side(exit_side);
        let (a, b, c) = side.line();
        let dist = (a * p.x + b * p.y - c).abs();
        if dist > ON_LINE_TOL {
            return Err(GeometryError::NotOnSide {
                x: p.x,
                y: p.y,
                dist,
            });
        }
        let (tx, ty) = self.wrap_translation(exit_side);
        let (dm, dn) = side.neighbor_delta;
        Ok((Point::new(p.x + tx, p.y + ty), cell.offset(dm, dn)))
    }

    /// Strictly-inside test for the hexagonal cell (boundary excluded at tol 0).
    pub fn in_hexagon(&self, p: Point) -> bool {
        let l = self.hex_side;
        let inv_s3 = 1.0 / 3.0f64.sqrt();
        p.x.abs() <= self.x_lat
            && p.y <= l - p.x * inv_s3
            && p.y <= l + p.x * inv_s3
            && p.y >= -l - p.x * inv_s3
            && p.y >= -l + p.x * inv_s3
    }

    /// Interior test for the rhombus obstacle.
    pub fn in_rhombus(&self, p: Point) -> bool {
        p.x.abs() / self.s_x + p.y.abs() / self.s_y < 1.0
    }

    /// Birkhoff coordinates of a collision.
    ///
    /// `r` is the perimetral distance of the point from the right vertex
    /// `(s_x, 0)` measured clockwise, in `[0, 4l)`; `eta = cos φ` with `φ`
    /// the angle between the outgoing velocity and the side direction.
    pub fn birkhoff_coords(
        &self,
        collision_point: Point,
        side: &RhombusSide,
        theta_out: f64,
    ) -> Result<(f64, f64), GeometryError> {
        let (a, b, c) = side.line();
        let dist = (a * collision_point.x + b * collision_point.y - c).abs();
        if dist > ON_LINE_TOL {
            return Err(GeometryError::NotOnSide {
                x: collision_point.x,
                y: collision_point.y,
                dist,
            });
        }
        let (dx, dy) = side.direction();
        let s = dx * (collision_point.x - side.start.x) + dy * (collision_point.y - side.start.y);
        let len = self.side_len;
        if s < CORNER_TOL || s > len - CORNER_TOL {
            return Err(GeometryError::CornerHit {
                arc_dist: s.min(len - s).abs(),
            });
        }
        let r = side.label.index() as f64 * len + s;
        let eta = theta_out.cos() * dx + theta_out.sin() * dy;
        Ok((r, eta))
    }

    /// Boundary point at perimetral distance `r` from the right vertex,
    /// together with its side. Inverse of the `r` part of `birkhoff_coords`.
    pub fn point_at_arc(&self, r: f64) -> (Point, SideLabel) {
        let len = self.side_len;
        let total = 4.0 * len;
        let r = r.rem_euclid(total);
        let idx = ((r / len) as usize).min(3);
        let s = r - idx as f64 * len;
        let side = self.rhombus_sides()[idx];
        let (dx, dy) = side.direction();
        (
            Point::new(side.start.x + s * dx, side.start.y + s * dy),
            side.label,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn default_table_derived_fields() {
        let g = BilliardGeometry::default_table();
        assert!(close(g.x_lat, 1.1180387962857101, 1e-12));
        assert!(close(g.y_lat, 1.9365, 1e-12));
        assert!(close(g.theta_side, 0.9678610900590011, 1e-12));
        // Printed approximations of the same quantities.
        assert!(close(g.x_lat, 1.11802, 5e-5));
        assert!(close(g.theta_side, 0.968, 1e-3));
        assert_eq!(g.horizon, Horizon::Finite);
        assert!(close(
            g.cell_area,
            1.5 * 3.0f64.sqrt() * 1.291 * 1.291,
            1e-12
        ));
    }

    #[test]
    fn infinite_horizon_when_sy_small() {
        let g = BilliardGeometry::new(2.0, 0.8, 0.5).unwrap();
        assert_eq!(g.horizon, Horizon::Infinite);
        assert!(close(g.theta_side, 0.5585993153435624, 1e-12));
    }

    #[test]
    fn overlap_rejected() {
        // l = √2 > √7/2 for L = 1.
        let err = BilliardGeometry::new(1.0, 1.0, 1.0).unwrap_err();
        assert!(matches!(err, GeometryError::Overlap { .. }));
        // s_x beyond the half lattice spacing is also an overlap.
        let err = BilliardGeometry::new(1.0, 0.9, 0.1).unwrap_err();
        assert!(matches!(err, GeometryError::Overlap { .. }));
    }

    #[test]
    fn non_positive_rejected() {
        assert!(matches!(
            BilliardGeometry::new(-1.0, 0.5, 0.5),
            Err(GeometryError::NonPositive { .. })
        ));
        assert!(matches!(
            BilliardGeometry::new(1.0, 0.0, 0.5),
            Err(GeometryError::NonPositive { .. })
        ));
    }

    #[test]
    fn side_slopes_and_normals() {
        let g = BilliardGeometry::default_table();
        let sides = g.rhombus_sides();
        let t = (g.theta_side).tan();
        // Side through (s_x, 0) and (0, s_y) is r4 and has slope -tan(theta_side).
        let r4 = &sides[3];
        let slope = (r4.end.y - r4.start.y) / (r4.end.x - r4.start.x);
        assert!(close(slope, -1.4525287204542454, 1e-12));
        assert!(close(slope, -t, 1e-12));
        for s in &sides {
            let m = (s.end.y - s.start.y) / (s.end.x - s.start.x);
            assert!(close(m.abs(), t, 1e-12));
            assert!(close(s.length(), g.side_len, 1e-12));
            // Outward normal points away from the origin.
            let mid = Point::new((s.start.x + s.end.x) / 2.0, (s.start.y + s.end.y) / 2.0);
            assert!(mid.x * s.outward_normal.0 + mid.y * s.outward_normal.1 > 0.0);
        }
        // Central symmetry: normals cancel in pairs.
        let (nx, ny) = sides.iter().fold((0.0, 0.0), |(ax, ay), s| {
            (ax + s.outward_normal.0, ay + s.outward_normal.1)
        });
        assert!(nx.abs() < 1e-14 && ny.abs() < 1e-14);
    }

    #[test]
    fn hexagon_tiles_under_neighbor_translations() {
        // Midpoint between any two neighboring centers lies on a shared side.
        let g = BilliardGeometry::default_table();
        for hs in g.hexagon_sides() {
            let (dm, dn) = hs.neighbor_delta;
            let cx = dm as f64 * g.x_lat;
            let cy = dn as f64 * g.y_lat;
            let mid = Point::new(cx / 2.0, cy / 2.0);
            let (a, b, c) = hs.line();
            assert!((a * mid.x + b * mid.y - c).abs() < 1e-12);
            // and the midpoint is within the side segment
            let seg = mid.dist(hs.start) + mid.dist(hs.end);
            assert!(close(seg, hs.start.dist(hs.end), 1e-12));
        }
    }

    #[test]
    fn rhombus_inside_hexagon() {
        for (l, sx, sy) in [(1.291, 0.7573, 1.1), (2.0, 0.8, 0.5), (1.0, 0.3, 0.9)] {
            let g = BilliardGeometry::new(l, sx, sy).unwrap();
            for side in g.rhombus_sides() {
                for k in 0..=10 {
                    let f = k as f64 / 10.0;
                    let p = Point::new(
                        side.start.x + f * (side.end.x - side.start.x),
                        side.start.y + f * (side.end.y - side.start.y),
                    );
                    assert!(g.in_hexagon(p), "rhombus point {p:?} escapes hexagon");
                }
            }
        }
    }

    #[test]
    fn wrap_exit_translation_and_parity() {
        let g = BilliardGeometry::default_table();
        let cell = CellIndex::new(2, 0);
        // Point on the right vertical side h1.
        let p = Point::new(g.x_lat, 0.3);
        let (q, c2) = g.wrap_exit(p, HexSideLabel::H1, cell).unwrap();
        assert!(close(q.x, -g.x_lat, 1e-12));
        assert!(close(q.y, 0.3, 1e-12));
        assert_eq!(c2, CellIndex::new(4, 0));
        assert!(c2.parity_ok());
        // Immediate reverse exit restores the original state.
        let (p2, c3) = g.wrap_exit(q, HexSideLabel::H4, c2).unwrap();
        assert!(close(p2.x, p.x, 1e-12) && close(p2.y, p.y, 1e-12));
        assert_eq!(c3, cell);
    }

    #[test]
    fn wrap_exit_all_sides_involutive() {
        let g = BilliardGeometry::default_table();
        for hs in g.hexagon_sides() {
            let mid = Point::new((hs.start.x + hs.end.x) / 2.0, (hs.start.y + hs.end.y) / 2.0);
            let (q, c) = g.wrap_exit(mid, hs.label, CellIndex::ORIGIN).unwrap();
            assert!(c.parity_ok());
            // Landing point lies on the opposite side.
            let opp = g.hexagon_side(hs.label.opposite());
            let (a, b, cc) = opp.line();
            assert!((a * q.x + b * q.y - cc).abs() < 1e-12);
            let (back, c0) = g.wrap_exit(q, hs.label.opposite(), c).unwrap();
            assert!(close(back.x, mid.x, 1e-12) && close(back.y, mid.y, 1e-12));
            assert_eq!(c0, CellIndex::ORIGIN);
        }
    }

    #[test]
    fn wrap_exit_rejects_point_off_side() {
        let g = BilliardGeometry::default_table();
        let err = g
            .wrap_exit(Point::new(0.0, 0.0), HexSideLabel::H1, CellIndex::ORIGIN)
            .unwrap_err();
        assert!(matches!(err, GeometryError::NotOnSide { .. }));
    }

    #[test]
    fn birkhoff_basics() {
        let g = BilliardGeometry::default_table();
        let sides = g.rhombus_sides();
        // Vertex exactly -> corner hit.
        let err = g
            .birkhoff_coords(Point::new(g.s_x, 0.0), &sides[0], 1.0)
            .unwrap_err();
        assert!(matches!(err, GeometryError::CornerHit { .. }));
        // Midpoint of r1 -> r = l/2.
        let mid = Point::new(g.s_x / 2.0, -g.s_y / 2.0);
        let (r, _eta) = g.birkhoff_coords(mid, &sides[0], 0.0).unwrap();
        assert!(close(r, g.side_len / 2.0, 1e-12));
        // Outgoing velocity perpendicular to the side -> eta = 0.
        let (dx, dy) = sides[0].direction();
        let theta_perp = dy.atan2(dx) + std::f64::consts::FRAC_PI_2;
        let (_, eta) = g.birkhoff_coords(mid, &sides[0], theta_perp).unwrap();
        assert!(eta.abs() < 1e-12);
    }

    #[test]
    fn birkhoff_arc_roundtrip() {
        let g = BilliardGeometry::default_table();
        let sides = g.rhombus_sides();
        for k in 0..200 {
            let r = (k as f64 + 0.31) / 200.0 * 4.0 * g.side_len;
            let (p, label) = g.point_at_arc(r);
            let side = &sides[label.index()];
            match g.birkhoff_coords(p, side, 0.5) {
                Ok((r2, _)) => assert!(close(r2, r, 1e-9), "r={r} roundtrips to {r2}"),
                Err(GeometryError::CornerHit { .. }) => {
                    let s = r % g.side_len;
                    assert!(s < CORNER_TOL || s > g.side_len - CORNER_TOL);
                }
                Err(e) => panic!("unexpected {e}"),
            }
        }
    }
}

//! Planar geometry and candidate-well preparation.
//!
//! Coordinates are metres in a projected CRS. Polygons are stored as open
//! rings (the closing vertex is not repeated).

mod candidates;
mod feasible;
mod grid;

pub use candidates::{
    adaptive_candidates, median, Candidates, DoubletLine, FieldSampler, PrepConfig, UniformField,
    WellCandidate,
};
pub use feasible::{feasible_area, FeasibleArea};
pub use grid::{generate_grid, lattice, GridNode};

use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// Absolute length tolerance for boundary tests, m.
pub const LENGTH_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Rotate counter-clockwise by `angle` radians about `center`.
    pub fn rotate_about(self, center: Point, angle: f64) -> Point {
        let (sin, cos) = angle.sin_cos();
        let dx = self.x - center.x;
        let dy = self.y - center.y;
        Point::new(center.x + cos * dx - sin * dy, center.y + sin * dx + cos * dy)
    }
}

/// Distance from `p` to the segment `a`–`b`.
pub fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.dist(Point::new(a.x + t * dx, a.y + t * dy))
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn on_segment(p: Point, a: Point, b: Point) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection test.
pub fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0))
        && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0))
    {
        return true;
    }
    (o1 == 0.0 && on_segment(c, a, b))
        || (o2 == 0.0 && on_segment(d, a, b))
        || (o3 == 0.0 && on_segment(a, c, d))
        || (o4 == 0.0 && on_segment(b, c, d))
}

fn ring_edges(ring: &[Point]) -> impl Iterator<Item = (Point, Point)> + '_ {
    (0..ring.len()).map(move |i| (ring[i], ring[(i + 1) % ring.len()]))
}

fn ring_signed_area(ring: &[Point]) -> f64 {
    let o = ring[0];
    ring_edges(ring)
        .map(|(a, b)| (a.x - o.x) * (b.y - o.y) - (b.x - o.x) * (a.y - o.y))
        .sum::<f64>()
        / 2.0
}

/// Even-odd crossing test; boundary points give an arbitrary answer.
fn ring_crosses(ring: &[Point], p: Point) -> bool {
    let mut inside = false;
    for (a, b) in ring_edges(ring) {
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn normalize_ring(mut ring: Vec<Point>) -> Result<Vec<Point>, GeometryError> {
    if ring.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(GeometryError::InvalidGeometry("non-finite coordinate".into()));
    }
    ring.dedup();
    while ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    if ring.len() < 3 {
        return Err(GeometryError::InvalidGeometry(
            "ring has fewer than 3 distinct vertices".into(),
        ));
    }
    Ok(ring)
}

/// A polygon with optional holes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    exterior: Vec<Point>,
    holes: Vec<Vec<Point>>,
}

impl Polygon {
    /// Builds a polygon after removing repeated vertices. Fails on rings that
    /// remain degenerate, have zero area or self-intersect.
    pub fn new(exterior: Vec<Point>, holes: Vec<Vec<Point>>) -> Result<Self, GeometryError> {
        let exterior = normalize_ring(exterior)?;
        let holes = holes
            .into_iter()
            .map(normalize_ring)
            .collect::<Result<Vec<_>, _>>()?;
        let poly = Polygon { exterior, holes };
        if poly.area() <= 0.0 {
            return Err(GeometryError::InvalidGeometry(
                "polygon has no positive area".into(),
            ));
        }
        if !poly.is_simple() {
            return Err(GeometryError::InvalidGeometry(
                "polygon boundary self-intersects".into(),
            ));
        }
        Ok(poly)
    }

    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, GeometryError> {
        Polygon::new(
            vec![
                Point::new(x0, y0),
                Point::new(x1, y0),
                Point::new(x1, y1),
                Point::new(x0, y1),
            ],
            vec![],
        )
    }

    pub fn exterior(&self) -> &[Point] {
        &self.exterior
    }

    pub fn holes(&self) -> &[Vec<Point>] {
        &self.holes
    }

    pub fn rings(&self) -> impl Iterator<Item = &[Point]> {
        std::iter::once(self.exterior.as_slice()).chain(self.holes.iter().map(Vec::as_slice))
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        self.rings().flat_map(ring_edges)
    }

    pub fn vertices(&self) -> impl Iterator<Item = Point> + '_ {
        self.rings().flat_map(|r| r.iter().copied())
    }

    pub fn area(&self) -> f64 {
        ring_signed_area(&self.exterior).abs()
            - self.holes.iter().map(|h| ring_signed_area(h).abs()).sum::<f64>()
    }

    /// Area centroid, holes subtracted.
    pub fn centroid(&self) -> Point {
        // shift to a local origin; projected coordinates are large
        let o = self.exterior[0];
        let mut a_sum = 0.0;
        let mut cx = 0.0;
        let mut cy = 0.0;
        for (idx, ring) in self.rings().enumerate() {
            let signed = ring_signed_area(ring);
            // exterior counts positive, holes negative, whatever the winding
            let sign = if (idx == 0) == (signed > 0.0) { 1.0 } else { -1.0 };
            for (a, b) in ring_edges(ring) {
                let (ax, ay, bx, by) = (a.x - o.x, a.y - o.y, b.x - o.x, b.y - o.y);
                let cross = (ax * by - bx * ay) * sign;
                a_sum += cross;
                cx += (ax + bx) * cross;
                cy += (ay + by) * cross;
            }
        }
        Point::new(o.x + cx / (3.0 * a_sum), o.y + cy / (3.0 * a_sum))
    }

    /// Distance from `p` to the polygon boundary.
    pub fn boundary_distance(&self, p: Point) -> f64 {
        self.edges()
            .map(|(a, b)| segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Interior test for points farther than [`LENGTH_EPS`] from the boundary.
    fn strictly_contains(&self, p: Point) -> bool {
        ring_crosses(&self.exterior, p) && !self.holes.iter().any(|h| ring_crosses(h, p))
    }

    /// Closed containment: boundary points (within [`LENGTH_EPS`]) count as inside.
    pub fn contains(&self, p: Point) -> bool {
        self.boundary_distance(p) <= LENGTH_EPS || self.strictly_contains(p)
    }

    /// Euclidean distance from `p` to the polygon as a closed set; zero inside.
    pub fn distance(&self, p: Point) -> f64 {
        let d = self.boundary_distance(p);
        if d > 0.0 && self.strictly_contains(p) {
            0.0
        } else {
            d
        }
    }

    /// True when the closed polygons share at least one point.
    pub fn intersects(&self, other: &Polygon) -> bool {
        for (a, b) in self.edges() {
            for (c, d) in other.edges() {
                if segments_intersect(a, b, c, d) {
                    return true;
                }
            }
        }
        self.contains(other.exterior[0]) || other.contains(self.exterior[0])
    }

    pub fn rotate_about(&self, center: Point, angle: f64) -> Polygon {
        let rot = |ring: &Vec<Point>| ring.iter().map(|p| p.rotate_about(center, angle)).collect();
        Polygon {
            exterior: rot(&self.exterior),
            holes: self.holes.iter().map(rot).collect(),
        }
    }

    /// Largest vertex-to-vertex distance.
    pub fn diameter(&self) -> f64 {
        let v = &self.exterior;
        let mut best = 0.0f64;
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                best = best.max(v[i].dist(v[j]));
            }
        }
        best
    }

    fn is_simple(&self) -> bool {
        let edges: Vec<(usize, usize, usize, Point, Point)> = self
            .rings()
            .enumerate()
            .flat_map(|(r, ring)| {
                ring_edges(ring)
                    .enumerate()
                    .map(move |(i, (a, b))| (r, ring.len(), i, a, b))
            })
            .collect();
        for x in 0..edges.len() {
            for y in x + 1..edges.len() {
                let (ra, n, ia, a, b) = edges[x];
                let (rc, _, ic, c, d) = edges[y];
                if ra == rc && ((ia + 1) % n == ic || (ic + 1) % n == ia) {
                    // consecutive edges share one vertex; reject only a fold-back
                    let (p, shared, q) = if (ia + 1) % n == ic { (a, b, d) } else { (c, a, b) };
                    let back = (shared.x - p.x) * (q.x - shared.x) + (shared.y - p.y) * (q.y - shared.y);
                    if orient(p, shared, q) == 0.0 && back < 0.0 {
                        return false;
                    }
                    continue;
                }
                if segments_intersect(a, b, c, d) {
                    return false;
                }
            }
        }
        true
    }
}

/// Block outline with the footprints of buildings standing on or near it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockGeometry {
    pub block_id: String,
    pub boundary: Polygon,
    pub buildings: Vec<Polygon>,
}

impl BlockGeometry {
    /// Rigid rotation of the block and its buildings about `center`.
    pub fn rotate_about(&self, center: Point, angle: f64) -> BlockGeometry {
        BlockGeometry {
            block_id: self.block_id.clone(),
            boundary: self.boundary.rotate_about(center, angle),
            buildings: self
                .buildings
                .iter()
                .map(|b| b.rotate_about(center, angle))
                .collect(),
        }
    }
}

/// Orthonormal frame with `s` along the groundwater flow and `t` across it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowFrame {
    pub origin: Point,
    /// Downstream unit vector.
    pub dir: [f64; 2],
}

impl FlowFrame {
    pub fn new(origin: Point, dir: [f64; 2]) -> Self {
        let n = dir[0].hypot(dir[1]);
        FlowFrame {
            origin,
            dir: [dir[0] / n, dir[1] / n],
        }
    }

    /// Left-hand normal of the flow direction.
    pub fn normal(&self) -> [f64; 2] {
        [-self.dir[1], self.dir[0]]
    }

    pub fn to_local(&self, p: Point) -> (f64, f64) {
        let dx = p.x - self.origin.x;
        let dy = p.y - self.origin.y;
        let n = self.normal();
        (dx * self.dir[0] + dy * self.dir[1], dx * n[0] + dy * n[1])
    }

    pub fn to_world(&self, s: f64, t: f64) -> Point {
        let n = self.normal();
        Point::new(
            self.origin.x + s * self.dir[0] + t * n[0],
            self.origin.y + s * self.dir[1] + t * n[1],
        )
    }

    /// `(s_min, s_max, t_min, t_max)` of the given points.
    pub fn extent(&self, pts: impl Iterator<Item = Point>) -> Option<(f64, f64, f64, f64)> {
        pts.map(|p| self.to_local(p)).fold(None, |acc, (s, t)| {
            Some(match acc {
                None => (s, s, t, t),
                Some((s0, s1, t0, t1)) => (s0.min(s), s1.max(s), t0.min(t), t1.max(t)),
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square(x0: f64, y0: f64, side: f64) -> Polygon {
        Polygon::rect(x0, y0, x0 + side, y0 + side).unwrap()
    }

    #[test]
    fn area_and_centroid() {
        let p = square(0.0, 0.0, 50.0);
        assert_eq!(p.area(), 2500.0);
        assert_eq!(p.centroid(), Point::new(25.0, 25.0));
        let with_hole = Polygon::new(
            p.exterior().to_vec(),
            vec![square(0.0, 0.0, 10.0).exterior().to_vec()],
        );
        // hole touches the exterior at a corner and along edges
        assert!(with_hole.is_err() || with_hole.unwrap().area() == 2400.0);
        let ring = Polygon::new(
            p.exterior().to_vec(),
            vec![square(20.0, 20.0, 10.0).exterior().to_vec()],
        )
        .unwrap();
        assert_eq!(ring.area(), 2400.0);
        let c = ring.centroid();
        assert!((c.x - 25.0).abs() < 1e-12 && (c.y - 25.0).abs() < 1e-12);
    }

    #[test]
    fn containment_is_closed() {
        let p = square(0.0, 0.0, 10.0);
        assert!(p.contains(Point::new(0.0, 0.0)));
        assert!(p.contains(Point::new(10.0, 5.0)));
        assert!(p.contains(Point::new(5.0, 5.0)));
        assert!(!p.contains(Point::new(10.0 + 1e-6, 5.0)));
        assert_eq!(p.distance(Point::new(5.0, 5.0)), 0.0);
        assert_eq!(p.distance(Point::new(13.0, 5.0)), 3.0);
        assert!((p.distance(Point::new(13.0, 14.0)) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_polygons_rejected() {
        let pts = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(2.0, 0.0)];
        assert!(Polygon::new(pts, vec![]).is_err());
        let dup = vec![
            Point::new(0.0, 0.0),
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 0.0),
        ];
        // duplicates and closing vertex are repaired
        assert_eq!(Polygon::new(dup, vec![]).unwrap().exterior().len(), 3);
        let bowtie = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        ];
        assert!(Polygon::new(bowtie, vec![]).is_err());
        let nan = vec![
            Point::new(0.0, f64::NAN),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
        ];
        assert!(Polygon::new(nan, vec![]).is_err());
    }

    #[test]
    fn intersects_overlap_and_disjoint() {
        let a = square(0.0, 0.0, 10.0);
        assert!(a.intersects(&square(5.0, 5.0, 10.0)));
        assert!(a.intersects(&square(2.0, 2.0, 1.0)));
        assert!(!a.intersects(&square(20.0, 0.0, 5.0)));
    }

    proptest! {
        #[test]
        fn frame_round_trip(ox in -1e6..1e6f64, oy in -1e6..1e6f64, ang in 0.0..std::f64::consts::TAU,
                            px in -200.0..200.0f64, py in -200.0..200.0f64) {
            let frame = FlowFrame::new(Point::new(ox, oy), [ang.cos(), ang.sin()]);
            let p = Point::new(ox + px, oy + py);
            let (s, t) = frame.to_local(p);
            let back = frame.to_world(s, t);
            prop_assert!(back.dist(p) < 1e-9);
        }
    }
}

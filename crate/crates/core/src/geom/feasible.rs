use super::{BlockGeometry, FlowFrame, Point, Polygon, LENGTH_EPS};
use crate::error::GeometryError;

/// Area of a block where wells may be placed.
///
/// Kept as an exact predicate: the block polygon minus every building dilated
/// by a Euclidean buffer. Containment is closed, so points exactly on the
/// block outline or exactly `buffer` away from a building are feasible.
#[derive(Debug, Clone)]
pub struct FeasibleArea {
    boundary: Polygon,
    obstacles: Vec<Polygon>,
    buffer: f64,
}

impl FeasibleArea {
    pub fn boundary(&self) -> &Polygon {
        &self.boundary
    }

    pub fn obstacles(&self) -> &[Polygon] {
        &self.obstacles
    }

    pub fn buffer(&self) -> f64 {
        self.buffer
    }

    pub fn contains(&self, p: Point) -> bool {
        self.boundary.contains(p)
            && self
                .obstacles
                .iter()
                .all(|b| b.distance(p) >= self.buffer - LENGTH_EPS)
    }

    /// Bounding box of the area in a flow-aligned frame.
    pub fn extent(&self, frame: &FlowFrame) -> (f64, f64, f64, f64) {
        frame
            .extent(self.boundary.exterior().iter().copied())
            .expect("validated polygon has vertices")
    }
}

/// Block outline minus the buffered building footprints.
pub fn feasible_area(g: &BlockGeometry, buffer_m: f64) -> Result<FeasibleArea, GeometryError> {
    if !(buffer_m >= 0.0) || !buffer_m.is_finite() {
        return Err(GeometryError::InvalidGeometry(format!(
            "buffer must be a finite non-negative distance, got {buffer_m}"
        )));
    }
    // re-run validation; BlockGeometry fields are public
    let boundary = Polygon::new(g.boundary.exterior().to_vec(), g.boundary.holes().to_vec())?;
    let obstacles = g
        .buildings
        .iter()
        .map(|b| Polygon::new(b.exterior().to_vec(), b.holes().to_vec()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FeasibleArea {
        boundary,
        obstacles,
        buffer: buffer_m,
    })
}

use super::{FeasibleArea, FlowFrame, Point, LENGTH_EPS};

/// One lattice node. `col` counts along the flow, `row` across it, both from
/// the frame origin, so `s = col · spacing` and `t = row · spacing` exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridNode {
    pub col: i64,
    pub row: i64,
    pub s: f64,
    pub t: f64,
    pub point: Point,
}

fn index_range(lo: f64, hi: f64, spacing: f64) -> std::ops::RangeInclusive<i64> {
    let first = (lo / spacing - LENGTH_EPS).ceil() as i64;
    let last = (hi / spacing + LENGTH_EPS).floor() as i64;
    first..=last
}

/// Lattice nodes of `frame` with step `spacing` that fall inside `area`,
/// ordered by `(t, s)`.
pub fn lattice(area: &FeasibleArea, frame: &FlowFrame, spacing: f64) -> Vec<GridNode> {
    assert!(spacing > 0.0, "grid spacing must be positive");
    let (s0, s1, t0, t1) = area.extent(frame);
    let mut nodes = Vec::new();
    for row in index_range(t0, t1, spacing) {
        let t = row as f64 * spacing;
        for col in index_range(s0, s1, spacing) {
            let s = col as f64 * spacing;
            let point = frame.to_world(s, t);
            if area.contains(point) {
                nodes.push(GridNode {
                    col,
                    row,
                    s,
                    t,
                    point,
                });
            }
        }
    }
    nodes
}

/// Square lattice aligned with `flow_dir`, anchored at `anchor`, clipped to `area`.
pub fn generate_grid(area: &FeasibleArea, flow_dir: [f64; 2], spacing: f64, anchor: Point) -> Vec<Point> {
    let frame = FlowFrame::new(anchor, flow_dir);
    lattice(area, &frame, spacing)
        .into_iter()
        .map(|n| n.point)
        .collect()
}

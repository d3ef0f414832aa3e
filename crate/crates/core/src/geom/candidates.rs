use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{feasible_area, lattice, BlockGeometry, FlowFrame, Point};
use crate::error::PrepError;
use crate::hydro::{HydroSample, TapLimits};
use crate::units::Rate;

/// Read-only access to groundwater parameters at arbitrary points.
pub trait FieldSampler: Sync {
    /// Parameters at `p`, or `None` where the field has no data.
    fn sample(&self, p: Point) -> Option<HydroSample>;
}

/// The same sample everywhere.
#[derive(Debug, Clone, Copy)]
pub struct UniformField(pub HydroSample);

impl FieldSampler for UniformField {
    fn sample(&self, _p: Point) -> Option<HydroSample> {
        Some(self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrepConfig {
    /// Minimum distance between wells and buildings, m.
    pub buffer_m: f64,
    /// First grid spacing tried, m.
    pub initial_spacing: f64,
    /// Increment applied while too many wells survive, m.
    pub spacing_step: f64,
    pub max_wells: usize,
    /// Wells whose drawdown or upconing rate falls below this are dropped.
    pub min_well_rate: Rate,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            buffer_m: 3.0,
            initial_spacing: 5.0,
            spacing_step: 2.5,
            max_wells: 100,
            min_well_rate: Rate::from_l_per_s(1.0),
        }
    }
}

impl PrepConfig {
    pub fn validate(&self) -> Result<(), PrepError> {
        let bad = |what: &str| Err(PrepError::Config(what.to_string()));
        if !(self.buffer_m >= 0.0 && self.buffer_m.is_finite()) {
            return bad("buffer_m must be >= 0");
        }
        if !(self.initial_spacing > 0.0 && self.initial_spacing.is_finite()) {
            return bad("initial_spacing must be > 0");
        }
        if !(self.spacing_step > 0.0 && self.spacing_step.is_finite()) {
            return bad("spacing_step must be > 0");
        }
        if self.max_wells < 1 {
            return bad("max_wells must be >= 1");
        }
        if !(self.min_well_rate.m3_per_s() >= 0.0) {
            return bad("min_well_rate must be >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellCandidate {
    pub well_id: usize,
    pub x: f64,
    pub y: f64,
    /// Along-flow coordinate, m.
    pub s: f64,
    /// Cross-flow coordinate, m.
    pub t: f64,
    pub limits: TapLimits,
}

impl WellCandidate {
    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// Flow-parallel row of candidates hosting at most one doublet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoubletLine {
    pub line_id: usize,
    pub t: f64,
    /// Ordered by ascending `s`.
    pub wells: Vec<WellCandidate>,
    /// Line length, the largest possible internal well distance, m.
    pub chi: f64,
    /// Median breakthrough parameter of the wells, m²/s.
    pub alpha_med: f64,
}

impl DoubletLine {
    /// Builds a line from wells sharing `t`; sorts them by `s`.
    pub fn new(line_id: usize, t: f64, mut wells: Vec<WellCandidate>) -> Self {
        wells.sort_by(|a, b| a.s.total_cmp(&b.s));
        let chi = match (wells.first(), wells.last()) {
            (Some(a), Some(b)) => b.s - a.s,
            _ => 0.0,
        };
        let alphas: Vec<f64> = wells.iter().map(|w| w.limits.alpha).collect();
        DoubletLine {
            line_id,
            t,
            chi,
            alpha_med: median(&alphas),
            wells,
        }
    }
}

/// Median; the mean of the two middle values for even counts, 0 when empty.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

/// Candidate doublet lines of one block and the grid they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidates {
    pub block_id: String,
    /// Grid spacing of the accepted iteration; `None` if the loop gave up.
    pub spacing: Option<f64>,
    pub flow_dir: [f64; 2],
    pub anchor: Point,
    pub lines: Vec<DoubletLine>,
}

impl Candidates {
    pub fn well_count(&self) -> usize {
        self.lines.iter().map(|l| l.wells.len()).sum()
    }
}

/// Grid, sample, filter and group candidates, widening the grid until at
/// most `cfg.max_wells` wells survive.
pub fn adaptive_candidates(
    g: &BlockGeometry,
    field: &dyn FieldSampler,
    cfg: &PrepConfig,
) -> Result<Candidates, PrepError> {
    cfg.validate()?;
    let geometry_err = |source| PrepError::Geometry {
        block_id: g.block_id.clone(),
        source,
    };
    let area = feasible_area(g, cfg.buffer_m).map_err(geometry_err)?;
    let centroid = area.boundary().centroid();
    let at_centroid = field
        .sample(centroid)
        .ok_or_else(|| PrepError::FieldUnavailable {
            block_id: g.block_id.clone(),
        })?;
    at_centroid.validate().map_err(|source| PrepError::Sample {
        block_id: g.block_id.clone(),
        source,
    })?;
    let flow_dir = at_centroid.flow_dir;

    // anchor the lattice at the lower corner of the bounding box in the flow frame
    let centred = FlowFrame::new(centroid, flow_dir);
    let (s0, _, t0, _) = area.extent(&centred);
    let anchor = centred.to_world(s0, t0);
    let frame = FlowFrame::new(anchor, flow_dir);

    let diameter = area.boundary().diameter();
    let min_rate = cfg.min_well_rate.m3_per_s();
    let mut spacing = cfg.initial_spacing;
    loop {
        let mut rows: BTreeMap<i64, Vec<WellCandidate>> = BTreeMap::new();
        for node in lattice(&area, &frame, spacing) {
            let Some(sample) = field.sample(node.point) else {
                continue;
            };
            sample.validate().map_err(|source| PrepError::Sample {
                block_id: g.block_id.clone(),
                source,
            })?;
            let limits = TapLimits::evaluate(&sample);
            if limits.q_d < min_rate || limits.q_f < min_rate {
                continue;
            }
            rows.entry(node.row).or_default().push(WellCandidate {
                well_id: 0,
                x: node.point.x,
                y: node.point.y,
                s: node.s,
                t: node.t,
                limits,
            });
        }
        let kept: Vec<(f64, Vec<WellCandidate>)> = rows
            .into_iter()
            .filter(|(_, wells)| wells.len() >= 2)
            .map(|(row, wells)| (row as f64 * spacing, wells))
            .collect();
        let count: usize = kept.iter().map(|(_, w)| w.len()).sum();
        if count <= cfg.max_wells {
            let mut next_well = 0;
            let lines = kept
                .into_iter()
                .enumerate()
                .map(|(line_id, (t, wells))| {
                    let mut line = DoubletLine::new(line_id, t, wells);
                    for w in &mut line.wells {
                        w.well_id = next_well;
                        next_well += 1;
                    }
                    line
                })
                .collect();
            return Ok(Candidates {
                block_id: g.block_id.clone(),
                spacing: Some(spacing),
                flow_dir,
                anchor,
                lines,
            });
        }
        spacing += cfg.spacing_step;
        if spacing > diameter {
            log::warn!(
                "block {}: no grid spacing up to {diameter:.1} m keeps wells <= {}",
                g.block_id,
                cfg.max_wells
            );
            return Ok(Candidates {
                block_id: g.block_id.clone(),
                spacing: None,
                flow_dir,
                anchor,
                lines: Vec::new(),
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Polygon;

    fn sample(k: f64, b: f64) -> HydroSample {
        HydroSample {
            conductivity: k,
            thickness: b,
            natural_level: 500.0,
            max_level: 502.0,
            gradient: 0.001,
            darcy_velocity: None,
            flow_dir: [1.0, 0.0],
        }
    }

    fn block(side: f64, buildings: Vec<Polygon>) -> BlockGeometry {
        BlockGeometry {
            block_id: "B1".into(),
            boundary: Polygon::rect(0.0, 0.0, side, side).unwrap(),
            buildings,
        }
    }

    #[test]
    fn median_conventions() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&[]), 0.0);
    }

    #[test]
    fn fifty_metre_block_widens_to_seven_and_a_half() {
        let field = UniformField(sample(2e-3, 10.0));
        let c = adaptive_candidates(&block(50.0, vec![]), &field, &PrepConfig::default()).unwrap();
        assert_eq!(c.spacing, Some(7.5));
        assert_eq!(c.well_count(), 49);
        assert_eq!(c.lines.len(), 7);
        for (k, line) in c.lines.iter().enumerate() {
            assert_eq!(line.line_id, k);
            assert_eq!(line.wells.len(), 7);
            assert_eq!(line.chi, 45.0);
            assert_eq!(line.t, k as f64 * 7.5);
            assert!(line.wells.windows(2).all(|w| w[0].s < w[1].s));
        }
    }

    #[test]
    fn low_rate_field_is_filtered_out() {
        // q_d = 0.195 · 1e-4 · 5² ≈ 0.49 l/s < 1 l/s
        let field = UniformField(sample(1e-4, 5.0));
        let c = adaptive_candidates(&block(50.0, vec![]), &field, &PrepConfig::default()).unwrap();
        assert!(c.lines.is_empty());
    }

    #[test]
    fn single_well_lines_are_dropped() {
        // 4 m wide strip with flow along x: every row holds a single node
        let g = BlockGeometry {
            block_id: "strip".into(),
            boundary: Polygon::rect(0.0, 0.0, 4.0, 20.0).unwrap(),
            buildings: vec![],
        };
        let field = UniformField(sample(2e-3, 10.0));
        let c = adaptive_candidates(&g, &field, &PrepConfig::default()).unwrap();
        assert_eq!(c.spacing, Some(5.0));
        assert!(c.lines.is_empty());
    }

    #[test]
    fn wells_keep_buffer_from_buildings() {
        let building = Polygon::rect(18.0, 21.0, 31.0, 29.0).unwrap();
        let field = UniformField(sample(2e-3, 10.0));
        let c = adaptive_candidates(
            &block(50.0, vec![building.clone()]),
            &field,
            &PrepConfig::default(),
        )
        .unwrap();
        assert!(c.well_count() > 0);
        for w in c.lines.iter().flat_map(|l| &l.wells) {
            assert!(building.distance(w.point()) >= 3.0 - 1e-9);
        }
    }

    #[test]
    fn missing_centroid_data_is_an_error() {
        struct Nowhere;
        impl FieldSampler for Nowhere {
            fn sample(&self, _p: Point) -> Option<HydroSample> {
                None
            }
        }
        let err = adaptive_candidates(&block(50.0, vec![]), &Nowhere, &PrepConfig::default());
        assert!(matches!(err, Err(PrepError::FieldUnavailable { .. })));
    }
}

use std::io::{Read, Write};
use std::path::Path;

use rstar::primitives::GeomWithData;
use rstar::RTree;
use serde::Deserialize;

use crate::error::{IoError, ValidationError};
use crate::geom::{FieldSampler, Point};
use crate::hydro::HydroSample;

type Indexed = GeomWithData<[f64; 2], usize>;

/// Unit vector of a flow azimuth in degrees, clockwise from grid north.
pub fn azimuth_to_dir(deg: f64) -> [f64; 2] {
    let r = deg.to_radians();
    [r.sin(), r.cos()]
}

/// Azimuth in degrees, clockwise from grid north, in `[0, 360)`.
pub fn dir_to_azimuth(dir: [f64; 2]) -> f64 {
    dir[0].atan2(dir[1]).to_degrees().rem_euclid(360.0)
}

/// Point samples of groundwater parameters with nearest-sample lookup.
#[derive(Debug, Clone)]
pub struct GroundwaterField {
    points: Vec<Point>,
    samples: Vec<HydroSample>,
    tree: RTree<Indexed>,
    max_distance: Option<f64>,
}

impl GroundwaterField {
    pub fn new(records: Vec<(Point, HydroSample)>) -> Result<Self, ValidationError> {
        if records.is_empty() {
            return Err(ValidationError::new(
                "a groundwater field needs at least one sample",
            ));
        }
        for (p, s) in &records {
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(ValidationError::new("sample coordinates must be finite"));
            }
            s.validate()?;
        }
        let (points, samples): (Vec<Point>, Vec<HydroSample>) = records.into_iter().unzip();
        let tree = RTree::bulk_load(
            points
                .iter()
                .enumerate()
                .map(|(i, p)| Indexed::new([p.x, p.y], i))
                .collect(),
        );
        Ok(GroundwaterField {
            points,
            samples,
            tree,
            max_distance: None,
        })
    }

    /// Points farther than `d` from every sample have no data.
    pub fn with_max_distance(mut self, d: Option<f64>) -> Self {
        self.max_distance = d;
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = (Point, &HydroSample)> {
        self.points.iter().copied().zip(&self.samples)
    }

    /// Index of the closest sample; equidistant samples resolve to the
    /// earliest row.
    pub fn nearest(&self, p: Point) -> Option<usize> {
        let mut iter = self.tree.nearest_neighbor_iter_with_distance_2([p.x, p.y]);
        let (first, d2) = iter.next()?;
        let mut best = first.data;
        for (cand, d) in iter {
            if d > d2 {
                break;
            }
            best = best.min(cand.data);
        }
        match self.max_distance {
            Some(max) if d2.sqrt() > max => None,
            _ => Some(best),
        }
    }
}

impl FieldSampler for GroundwaterField {
    fn sample(&self, p: Point) -> Option<HydroSample> {
        self.nearest(p).map(|i| self.samples[i])
    }
}

#[derive(Debug, Deserialize)]
struct FieldRow {
    x: f64,
    y: f64,
    #[serde(rename = "K")]
    k: f64,
    #[serde(rename = "B")]
    b: f64,
    h_n: f64,
    h_max: f64,
    grad_h: f64,
    #[serde(rename = "v_D", default)]
    v_d: Option<f64>,
    flow_azimuth_deg: f64,
}

pub fn read_field(path: &Path) -> Result<GroundwaterField, IoError> {
    let file = std::fs::File::open(path).map_err(|e| IoError::io(path, e))?;
    parse_field(file, path)
}

/// Parse a field table; `path` only labels errors.
pub fn parse_field(reader: impl Read, path: &Path) -> Result<GroundwaterField, IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut records = Vec::new();
    for (i, row) in rdr.deserialize::<FieldRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| IoError::parse(path, format!("line {line}"), e))?;
        let sample = HydroSample {
            conductivity: row.k,
            thickness: row.b,
            natural_level: row.h_n,
            max_level: row.h_max,
            gradient: row.grad_h,
            darcy_velocity: row.v_d,
            flow_dir: azimuth_to_dir(row.flow_azimuth_deg),
        };
        let invalid = |rule: String| IoError::Validation {
            path: path.to_path_buf(),
            row: line,
            rule,
        };
        if !row.x.is_finite() || !row.y.is_finite() || !row.flow_azimuth_deg.is_finite() {
            return Err(invalid("coordinates and azimuth must be finite".into()));
        }
        sample.validate().map_err(|e| invalid(e.rule))?;
        records.push((Point::new(row.x, row.y), sample));
    }
    GroundwaterField::new(records).map_err(|e| IoError::Validation {
        path: path.to_path_buf(),
        row: 1,
        rule: e.rule,
    })
}

/// Azimuth with ten decimals, trailing zeros dropped. Converting a
/// direction back to degrees is exact only to the last bit, so the
/// rounding keeps repeated read/write cycles byte-stable.
fn fmt_azimuth(deg: f64) -> String {
    let s = format!("{deg:.10}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "360" {
        "0".into()
    } else {
        s.into()
    }
}

/// Write samples in the format [`read_field`] accepts.
pub fn write_field(out: impl Write, records: &[(Point, HydroSample)]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "x",
        "y",
        "K",
        "B",
        "h_n",
        "h_max",
        "grad_h",
        "v_D",
        "flow_azimuth_deg",
    ])?;
    for (p, s) in records {
        w.write_record([
            p.x.to_string(),
            p.y.to_string(),
            s.conductivity.to_string(),
            s.thickness.to_string(),
            s.natural_level.to_string(),
            s.max_level.to_string(),
            s.gradient.to_string(),
            s.darcy_velocity.map(|v| v.to_string()).unwrap_or_default(),
            fmt_azimuth(dir_to_azimuth(s.flow_dir)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

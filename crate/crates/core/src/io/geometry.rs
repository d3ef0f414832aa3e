use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde_json::Value;

use super::{json_str, FORMAT_VERSION};
use crate::error::{Error, IoError};
use crate::geom::{BlockGeometry, FieldSampler, Point, Polygon, PrepConfig};
use crate::scenario::{prepare_blocks, prepared_id, BlockFailure, Prepared, Stage};

/// A block that could not be read into a valid geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectedBlock {
    pub block_id: String,
    pub reason: String,
}

/// Blocks of a geometry file, ordered by block id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GeometrySet {
    pub blocks: Vec<BlockGeometry>,
    /// Blocks with an invalid outline or touched by an invalid building.
    pub rejected: Vec<RejectedBlock>,
}

impl GeometrySet {
    /// Prepare every valid block; rejected blocks become preparation
    /// failures. Ordered by block id.
    pub fn prepare(
        &self,
        field: &dyn FieldSampler,
        prep: &PrepConfig,
        workers: usize,
    ) -> Result<Prepared, Error> {
        let mut prepared = prepare_blocks(&self.blocks, field, prep, workers)?;
        for r in &self.rejected {
            log::warn!("block {}: {}", r.block_id, r.reason);
            prepared.push(Err(BlockFailure {
                block_id: r.block_id.clone(),
                stage: Stage::Prep,
                message: r.reason.clone(),
            }));
        }
        prepared.sort_by(|a, b| prepared_id(a).cmp(prepared_id(b)));
        Ok(prepared)
    }
}

pub fn read_geometry(path: &Path) -> Result<GeometrySet, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    parse_geometry(&text, path)
}

enum Role {
    Block,
    Building,
}

type Rings = Vec<Vec<Point>>;

/// Parse a GeoJSON feature collection; `path` only labels errors.
///
/// Each feature needs a `role` property of `block` or `building`. Blocks
/// carry a `block_id` (string or number) and a Polygon geometry; buildings
/// are Polygons or MultiPolygons and are attached to every block they
/// intersect.
pub fn parse_geometry(text: &str, path: &Path) -> Result<GeometrySet, IoError> {
    let root: Value = serde_json::from_str(text).map_err(|e| IoError::parse(path, "document", e))?;
    if let Some(v) = root.get("format_version") {
        if v.as_u64() != Some(FORMAT_VERSION as u64) {
            return Err(IoError::parse(
                path,
                "format_version",
                format!("unsupported version {v}, expected {FORMAT_VERSION}"),
            ));
        }
    }
    let features = root
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| IoError::parse(path, "document", "expected a FeatureCollection"))?;

    let mut block_rings: BTreeMap<String, Rings> = BTreeMap::new();
    let mut building_rings: Vec<Rings> = Vec::new();
    let mut geographic = true;
    for (idx, f) in features.iter().enumerate() {
        let ctx = format!("feature {idx}");
        let err = |msg: &str| IoError::parse(path, ctx.clone(), msg);
        let props = f.get("properties").ok_or_else(|| err("missing properties"))?;
        let role = match props.get("role").and_then(Value::as_str) {
            Some("block") => Role::Block,
            Some("building") => Role::Building,
            _ => return Err(err("property role must be \"block\" or \"building\"")),
        };
        let geometry = f.get("geometry").ok_or_else(|| err("missing geometry"))?;
        let kind = geometry.get("type").and_then(Value::as_str).unwrap_or("");
        let coords = geometry
            .get("coordinates")
            .ok_or_else(|| err("missing coordinates"))?;
        let polygons: Vec<Rings> = match (&role, kind) {
            (_, "Polygon") => vec![rings(coords).ok_or_else(|| err("malformed Polygon coordinates"))?],
            (Role::Building, "MultiPolygon") => coords
                .as_array()
                .and_then(|ps| ps.iter().map(rings).collect::<Option<Vec<_>>>())
                .ok_or_else(|| err("malformed MultiPolygon coordinates"))?,
            (Role::Block, _) => return Err(err("block geometry must be a Polygon")),
            (Role::Building, _) => return Err(err("building geometry must be a Polygon or MultiPolygon")),
        };
        geographic &= polygons
            .iter()
            .flatten()
            .flatten()
            .all(|p| p.x.abs() <= 180.0 && p.y.abs() <= 90.0);
        match role {
            Role::Block => {
                let id = match props.get("block_id") {
                    Some(Value::String(s)) => s.clone(),
                    Some(Value::Number(n)) => n.to_string(),
                    _ => return Err(err("block feature has no block_id")),
                };
                if block_rings.contains_key(&id) {
                    return Err(err(&format!("duplicate block_id {id}")));
                }
                block_rings.insert(id, polygons.into_iter().next().unwrap_or_default());
            }
            Role::Building => building_rings.extend(polygons),
        }
    }
    if geographic && (!block_rings.is_empty() || !building_rings.is_empty()) {
        return Err(IoError::Crs {
            path: path.to_path_buf(),
        });
    }

    let mut buildings = Vec::new();
    let mut bad_buildings = Vec::new();
    for r in building_rings {
        match to_polygon(r.clone()) {
            Ok(p) => buildings.push(p),
            Err(reason) => bad_buildings.push((envelope(&r), reason)),
        }
    }
    let mut set = GeometrySet::default();
    for (block_id, r) in block_rings {
        let boundary = match to_polygon(r) {
            Ok(p) => p,
            Err(reason) => {
                set.rejected.push(RejectedBlock { block_id, reason });
                continue;
            }
        };
        if let Some((_, reason)) = bad_buildings
            .iter()
            .find(|(env, _)| env.as_ref().is_some_and(|e| e.intersects(&boundary)))
        {
            set.rejected.push(RejectedBlock {
                block_id,
                reason: format!("overlapping building is invalid: {reason}"),
            });
            continue;
        }
        let attached = buildings
            .iter()
            .filter(|b| b.intersects(&boundary))
            .cloned()
            .collect();
        set.blocks.push(BlockGeometry {
            block_id,
            boundary,
            buildings: attached,
        });
    }
    Ok(set)
}

fn point(v: &Value) -> Option<Point> {
    let a = v.as_array()?;
    if a.len() < 2 {
        return None;
    }
    Some(Point::new(a[0].as_f64()?, a[1].as_f64()?))
}

fn rings(v: &Value) -> Option<Rings> {
    v.as_array()?
        .iter()
        .map(|ring| ring.as_array()?.iter().map(point).collect())
        .collect()
}

fn to_polygon(mut r: Rings) -> Result<Polygon, String> {
    if r.is_empty() {
        return Err("polygon has no rings".into());
    }
    let exterior = r.remove(0);
    Polygon::new(exterior, r).map_err(|e| e.to_string())
}

/// Bounding rectangle of the vertices, if it has positive area.
fn envelope(r: &Rings) -> Option<Polygon> {
    let pts = r.iter().flatten();
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in pts {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    Polygon::rect(x0, y0, x1, y1).ok()
}

fn write_ring(out: &mut String, ring: &[Point]) {
    out.push('[');
    for p in ring.iter().chain(ring.first()) {
        if !out.ends_with('[') {
            out.push(',');
        }
        let _ = write!(out, "[{},{}]", p.x, p.y);
    }
    out.push(']');
}

fn write_polygon(out: &mut String, p: &Polygon) {
    out.push('[');
    for (i, r) in p.rings().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write_ring(out, r);
    }
    out.push(']');
}

/// Serialize blocks as a feature collection [`parse_geometry`] reads back.
/// Buildings shared by several blocks are written once.
pub fn write_geometry(blocks: &[BlockGeometry]) -> String {
    let mut out =
        format!("{{\"type\":\"FeatureCollection\",\"format_version\":{FORMAT_VERSION},\"features\":[\n");
    let mut first = true;
    let mut sep = |out: &mut String| {
        if !first {
            out.push_str(",\n");
        }
        first = false;
    };
    let mut seen: Vec<&Polygon> = Vec::new();
    for b in blocks {
        sep(&mut out);
        let _ = write!(
            out,
            "{{\"type\":\"Feature\",\"properties\":{{\"role\":\"block\",\"block_id\":{}}},\"geometry\":{{\"type\":\"Polygon\",\"coordinates\":",
            json_str(&b.block_id)
        );
        write_polygon(&mut out, &b.boundary);
        out.push_str("}}");
        for h in &b.buildings {
            if seen.contains(&h) {
                continue;
            }
            seen.push(h);
            sep(&mut out);
            out.push_str("{\"type\":\"Feature\",\"properties\":{\"role\":\"building\"},\"geometry\":{\"type\":\"Polygon\",\"coordinates\":");
            write_polygon(&mut out, h);
            out.push_str("}}");
        }
    }
    out.push_str("\n]}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn collection(features: &[String]) -> String {
        format!(
            "{{\"type\":\"FeatureCollection\",\"features\":[{}]}}",
            features.join(",")
        )
    }

    fn square(x0: f64, y0: f64, side: f64) -> String {
        let (x1, y1) = (x0 + side, y0 + side);
        format!("[[[{x0},{y0}],[{x1},{y0}],[{x1},{y1}],[{x0},{y1}],[{x0},{y0}]]]")
    }

    fn block(id: &str, coords: &str) -> String {
        format!(
            "{{\"type\":\"Feature\",\"properties\":{{\"role\":\"block\",\"block_id\":{id}}},\"geometry\":{{\"type\":\"Polygon\",\"coordinates\":{coords}}}}}"
        )
    }

    fn building(coords: &str) -> String {
        format!(
            "{{\"type\":\"Feature\",\"properties\":{{\"role\":\"building\"}},\"geometry\":{{\"type\":\"Polygon\",\"coordinates\":{coords}}}}}"
        )
    }

    fn parse(text: &str) -> Result<GeometrySet, IoError> {
        parse_geometry(text, Path::new("city.geojson"))
    }

    #[test]
    fn one_block_no_buildings() {
        let set = parse(&collection(&[block("\"A\"", &square(690000.0, 5330000.0, 50.0))])).unwrap();
        assert_eq!(set.blocks.len(), 1);
        assert_eq!(set.blocks[0].block_id, "A");
        assert_eq!(set.blocks[0].boundary.exterior().len(), 4);
        assert!(set.blocks[0].buildings.is_empty());
        assert!(set.rejected.is_empty());
    }

    #[test]
    fn numeric_block_id() {
        let set = parse(&collection(&[block("17", &square(1000.0, 1000.0, 10.0))])).unwrap();
        assert_eq!(set.blocks[0].block_id, "17");
    }

    #[test]
    fn missing_block_id_names_feature() {
        let no_id = "{\"type\":\"Feature\",\"properties\":{\"role\":\"block\"},\"geometry\":{\"type\":\"Polygon\",\"coordinates\":[[[1000,1000],[1010,1000],[1010,1010]]]}}";
        let text = collection(&[block("\"A\"", &square(1000.0, 1000.0, 10.0)), no_id.to_string()]);
        match parse(&text).unwrap_err() {
            IoError::Parse { context, message, .. } => {
                assert_eq!(context, "feature 1");
                assert!(message.contains("block_id"));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn building_over_two_blocks_attaches_to_both() {
        let text = collection(&[
            block("\"A\"", &square(1000.0, 1000.0, 50.0)),
            block("\"B\"", &square(1050.0, 1000.0, 50.0)),
            block("\"C\"", &square(1200.0, 1000.0, 50.0)),
            building(&square(1040.0, 1020.0, 20.0)),
        ]);
        let set = parse(&text).unwrap();
        let counts: Vec<usize> = set.blocks.iter().map(|b| b.buildings.len()).collect();
        assert_eq!(counts, vec![1, 1, 0]);
    }

    #[test]
    fn multipolygon_buildings() {
        let multi = format!(
            "{{\"type\":\"Feature\",\"properties\":{{\"role\":\"building\"}},\"geometry\":{{\"type\":\"MultiPolygon\",\"coordinates\":[{},{}]}}}}",
            square(1005.0, 1005.0, 5.0),
            square(1030.0, 1030.0, 5.0)
        );
        let set = parse(&collection(&[
            block("\"A\"", &square(1000.0, 1000.0, 50.0)),
            multi,
        ]))
        .unwrap();
        assert_eq!(set.blocks[0].buildings.len(), 2);
    }

    #[test]
    fn lon_lat_is_rejected() {
        let text = collection(&[block("\"A\"", &square(11.5, 48.1, 0.001))]);
        assert!(matches!(parse(&text), Err(IoError::Crs { .. })));
    }

    #[test]
    fn invalid_outline_rejects_only_that_block() {
        let bow = "[[[1000,1000],[1010,1010],[1010,1000],[1000,1010]]]";
        let text = collection(&[block("\"A\"", bow), block("\"B\"", &square(1100.0, 1000.0, 10.0))]);
        let set = parse(&text).unwrap();
        assert_eq!(set.blocks.len(), 1);
        assert_eq!(set.rejected[0].block_id, "A");
    }

    #[test]
    fn write_then_read() {
        let text = collection(&[
            block("\"A\"", &square(1000.0, 1000.0, 50.0)),
            block("\"B\"", &square(1050.0, 1000.0, 50.0)),
            building(&square(1040.25, 1020.0, 20.0)),
        ]);
        let set = parse(&text).unwrap();
        let written = write_geometry(&set.blocks);
        assert_eq!(written.matches("\"building\"").count(), 1);
        let again = parse(&written).unwrap();
        assert_eq!(again, set);
        assert_eq!(write_geometry(&again.blocks), written);
    }
}

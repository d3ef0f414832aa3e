//! Result files of a run and their readers.
//!
//! Per scenario (tag `q<q_min>_r<r_delta>`):
//! `wells_<tag>.geojson`, `doublets_<tag>.geojson`, `blocks_<tag>.csv`.
//! Per run: `report.csv` with one row per scenario and `manifest.json`.
//! The `prep` verb writes `candidates.geojson` and `prep_blocks.csv`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{fmt_fixed, fmt_rate, json_str, FORMAT_VERSION};
use crate::error::IoError;
use crate::geom::{Candidates, Point, WellCandidate};
use crate::model::{BlockProblem, ScenarioConfig};
use crate::scenario::{
    BlockFailure, BlockFigures, BlockOutcome, Prepared, ScenarioReport, ScenarioRun, Stage,
};
use crate::solver::{audit_solution_with_tol, BlockSolution, Certificate, InstalledDoublet, AUDIT_TOL};
use crate::units::Rate;

/// Largest error of a rate written with three decimals in l/s, m³/s.
pub const ROUNDING: f64 = 5e-7;

pub const REPORT_FILE: &str = "report.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CANDIDATES_FILE: &str = "candidates.geojson";
pub const PREP_BLOCKS_FILE: &str = "prep_blocks.csv";

pub fn wells_file(tag: &str) -> String {
    format!("wells_{tag}.geojson")
}

pub fn doublets_file(tag: &str) -> String {
    format!("doublets_{tag}.geojson")
}

pub fn blocks_file(tag: &str) -> String {
    format!("blocks_{tag}.csv")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WellRole {
    Ext,
    Inj,
}

impl WellRole {
    pub fn as_str(self) -> &'static str {
        match self {
            WellRole::Ext => "ext",
            WellRole::Inj => "inj",
        }
    }
}

/// One installed well as written to the wells file.
#[derive(Debug, Clone, PartialEq)]
pub struct WellRecord {
    pub block_id: String,
    pub line_id: usize,
    pub well_id: usize,
    pub role: WellRole,
    pub q: Rate,
    pub location: Point,
}

/// One installed doublet as written to the doublets file.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubletRecord {
    pub block_id: String,
    pub line_id: usize,
    pub ext_well_id: usize,
    pub inj_well_id: usize,
    pub q: Rate,
    pub ext: Point,
    pub inj: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolvedRecord {
    pub block_id: String,
    pub n_doublet: usize,
    pub q_block: Rate,
    pub max_doublet: Rate,
    pub certificate: Certificate,
    pub node_count: u64,
    /// Only present in runs with timings enabled.
    pub solve_time: Option<f64>,
}

/// One row of a per-scenario block table.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockRecord {
    Solved(SolvedRecord),
    Failed(BlockFailure),
}

impl BlockRecord {
    pub fn block_id(&self) -> &str {
        match self {
            BlockRecord::Solved(s) => &s.block_id,
            BlockRecord::Failed(f) => &f.block_id,
        }
    }
}

/// Scenario entry of the manifest; rates keep full precision here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestScenario {
    pub tag: String,
    pub q_min_l_s: f64,
    pub r_delta: f64,
    pub delta_min_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub scenarios: Vec<ManifestScenario>,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn scenario_configs(&self) -> Result<Vec<ScenarioConfig>, String> {
        self.scenarios
            .iter()
            .map(|s| {
                ScenarioConfig::new(Rate::from_l_per_s(s.q_min_l_s), s.r_delta, s.delta_min_m)
                    .map_err(|e| e.to_string())
            })
            .collect()
    }
}

fn candidates_by_block(prepared: &Prepared) -> BTreeMap<&str, &Candidates> {
    prepared
        .iter()
        .filter_map(|p| p.as_ref().ok())
        .map(|c| (c.block_id.as_str(), c))
        .collect()
}

fn find_well(c: &Candidates, line_id: usize, well_id: usize) -> Option<&WellCandidate> {
    c.lines
        .iter()
        .find(|l| l.line_id == line_id)?
        .wells
        .iter()
        .find(|w| w.well_id == well_id)
}

fn coords(p: Point) -> String {
    format!("[{},{}]", p.x, p.y)
}

fn collection(header: &str, features: &[String]) -> String {
    let mut out = format!(
        "{{\"type\":\"FeatureCollection\",\"format_version\":{FORMAT_VERSION},{header}\"features\":["
    );
    for (i, f) in features.iter().enumerate() {
        out.push_str(if i == 0 { "\n" } else { ",\n" });
        out.push_str(f);
    }
    out.push_str("\n]}\n");
    out
}

fn scenario_header(s: &ScenarioConfig) -> String {
    format!(
        "\"scenario\":{{\"q_min_l_s\":{},\"r_delta\":{}}},",
        fmt_rate(s.q_min),
        fmt_fixed(s.r_delta, 3)
    )
}

/// Installed doublets of solved blocks with the locations of their wells.
fn located<'a>(
    run: &'a ScenarioRun,
    prepared: &'a Prepared,
) -> impl Iterator<Item = (&'a str, &'a InstalledDoublet, Point, Point)> + 'a {
    let by_block = candidates_by_block(prepared);
    run.outcomes
        .iter()
        .filter_map(BlockOutcome::solution)
        .flat_map(move |s| {
            let c = by_block.get(s.block_id.as_str()).copied();
            s.installed.iter().filter_map(move |d| {
                let c = c?;
                let ext = find_well(c, d.line_id, d.ext_well_id)?;
                let inj = find_well(c, d.line_id, d.inj_well_id)?;
                Some((s.block_id.as_str(), d, ext.point(), inj.point()))
            })
        })
}

/// Point features of every installed well.
pub fn wells_geojson(run: &ScenarioRun, prepared: &Prepared) -> String {
    let mut features = Vec::new();
    for (block_id, d, ext, inj) in located(run, prepared) {
        for (role, well_id, p) in [
            (WellRole::Ext, d.ext_well_id, ext),
            (WellRole::Inj, d.inj_well_id, inj),
        ] {
            features.push(format!(
                "{{\"type\":\"Feature\",\"properties\":{{\"block_id\":{},\"line_id\":{},\"well_id\":{},\"role\":\"{}\",\"q_l_s\":{}}},\"geometry\":{{\"type\":\"Point\",\"coordinates\":{}}}}}",
                json_str(block_id),
                d.line_id,
                well_id,
                role.as_str(),
                fmt_rate(d.q),
                coords(p)
            ));
        }
    }
    collection(&scenario_header(&run.scenario), &features)
}

/// Line features from extraction to injection well of every doublet.
pub fn doublets_geojson(run: &ScenarioRun, prepared: &Prepared) -> String {
    let features: Vec<String> = located(run, prepared)
        .map(|(block_id, d, ext, inj)| {
            format!(
                "{{\"type\":\"Feature\",\"properties\":{{\"block_id\":{},\"line_id\":{},\"ext_well_id\":{},\"inj_well_id\":{},\"q_l_s\":{}}},\"geometry\":{{\"type\":\"LineString\",\"coordinates\":[{},{}]}}}}",
                json_str(block_id),
                d.line_id,
                d.ext_well_id,
                d.inj_well_id,
                fmt_rate(d.q),
                coords(ext),
                coords(inj)
            )
        })
        .collect();
    collection(&scenario_header(&run.scenario), &features)
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    // writing to memory cannot fail
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(&r).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 input")
}

pub const BLOCKS_HEADER: [&str; 11] = [
    "block_id",
    "status",
    "stage",
    "n_doublet",
    "q_block_l_s",
    "max_doublet_l_s",
    "proven_optimal",
    "gap",
    "node_count",
    "solve_time_s",
    "message",
];

/// Per-block table of one scenario; solve times only with `timings`.
pub fn blocks_csv(run: &ScenarioRun, timings: bool) -> String {
    let rows = run.outcomes.iter().map(|o| match o {
        BlockOutcome::Solved(s) => vec![
            s.block_id.clone(),
            "solved".into(),
            String::new(),
            s.n_doublet.to_string(),
            fmt_rate(s.q_block),
            fmt_rate(s.max_doublet_rate()),
            s.certificate.proven_optimal.to_string(),
            format!("{:.6e}", s.certificate.gap),
            s.node_count.to_string(),
            if timings {
                format!("{:.6}", s.solve_time)
            } else {
                String::new()
            },
            String::new(),
        ],
        BlockOutcome::Failed(f) => vec![
            f.block_id.clone(),
            "failed".into(),
            f.stage.as_str().into(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            f.message.clone(),
        ],
    });
    csv_string(&BLOCKS_HEADER, rows)
}

pub const REPORT_HEADER: [&str; 12] = [
    "q_min_l_s",
    "r_delta",
    "total_doublets",
    "max_doublets_per_block",
    "mean_doublets_per_block",
    "avg_max_doublet_rate_l_s",
    "mean_doublet_rate_l_s",
    "blocks_with",
    "blocks_without",
    "total_rate_l_s",
    "max_block_rate_l_s",
    "mean_block_rate_l_s",
];

pub fn report_csv(reports: &[ScenarioReport]) -> String {
    let rows = reports.iter().map(|r| {
        vec![
            fmt_rate(r.q_min),
            fmt_fixed(r.r_delta, 3),
            r.total_doublets.to_string(),
            r.max_doublets_per_block.to_string(),
            fmt_fixed(r.mean_doublets_per_block, 3),
            fmt_rate(r.avg_max_doublet_rate),
            fmt_rate(r.mean_doublet_rate),
            r.blocks_with.to_string(),
            r.blocks_without.to_string(),
            fmt_rate(r.total_rate),
            fmt_rate(r.max_block_rate),
            fmt_rate(r.mean_block_rate),
        ]
    });
    csv_string(&REPORT_HEADER, rows)
}

pub fn manifest(runs: &[ScenarioRun]) -> Manifest {
    let mut files = Vec::new();
    let scenarios = runs
        .iter()
        .map(|r| {
            let tag = r.scenario.tag();
            files.push(wells_file(&tag));
            files.push(doublets_file(&tag));
            files.push(blocks_file(&tag));
            ManifestScenario {
                tag,
                q_min_l_s: r.scenario.q_min.l_per_s(),
                r_delta: r.scenario.r_delta,
                delta_min_m: r.scenario.delta_min,
            }
        })
        .collect();
    files.push(REPORT_FILE.into());
    Manifest {
        format_version: FORMAT_VERSION,
        scenarios,
        files,
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, IoError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| IoError::io(&path, e))?;
    Ok(path)
}

/// Write every result file of a run into `dir`, creating it if needed.
pub fn write_results(
    dir: &Path,
    prepared: &Prepared,
    runs: &[ScenarioRun],
    timings: bool,
) -> Result<Vec<PathBuf>, IoError> {
    std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    let mut written = Vec::new();
    for run in runs {
        let tag = run.scenario.tag();
        written.push(write_file(dir, &wells_file(&tag), &wells_geojson(run, prepared))?);
        written.push(write_file(
            dir,
            &doublets_file(&tag),
            &doublets_geojson(run, prepared),
        )?);
        written.push(write_file(dir, &blocks_file(&tag), &blocks_csv(run, timings))?);
    }
    let reports: Vec<ScenarioReport> = runs.iter().map(|r| r.report.clone()).collect();
    written.push(write_file(dir, REPORT_FILE, &report_csv(&reports))?);
    let m = serde_json::to_string_pretty(&manifest(runs)).expect("manifest serializes") + "\n";
    written.push(write_file(dir, MANIFEST_FILE, &m)?);
    Ok(written)
}

/// Point features of every candidate well.
pub fn candidates_geojson(prepared: &Prepared) -> String {
    let mut features = Vec::new();
    for c in prepared.iter().filter_map(|p| p.as_ref().ok()) {
        for line in &c.lines {
            for w in &line.wells {
                features.push(format!(
                    "{{\"type\":\"Feature\",\"properties\":{{\"block_id\":{},\"line_id\":{},\"well_id\":{},\"s_m\":{},\"t_m\":{},\"q_d_l_s\":{},\"q_f_l_s\":{},\"alpha_m2_s\":{:e}}},\"geometry\":{{\"type\":\"Point\",\"coordinates\":{}}}}}",
                    json_str(&c.block_id),
                    line.line_id,
                    w.well_id,
                    w.s,
                    w.t,
                    fmt_rate(Rate::from_m3_per_s(w.limits.q_d)),
                    fmt_rate(Rate::from_m3_per_s(w.limits.q_f)),
                    w.limits.alpha,
                    coords(w.point())
                ));
            }
        }
    }
    collection("", &features)
}

/// Per-block summary of candidate preparation.
pub fn prep_csv(prepared: &Prepared) -> String {
    let rows = prepared.iter().map(|p| match p {
        Ok(c) => vec![
            c.block_id.clone(),
            "prepared".into(),
            c.spacing.map(|s| s.to_string()).unwrap_or_default(),
            c.lines.len().to_string(),
            c.well_count().to_string(),
            format!("{:.6}", super::field::dir_to_azimuth(c.flow_dir)),
            if c.spacing.is_none() {
                "no spacing keeps the well count within max_wells".into()
            } else {
                String::new()
            },
        ],
        Err(f) => vec![
            f.block_id.clone(),
            "failed".into(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            f.message.clone(),
        ],
    });
    csv_string(
        &[
            "block_id",
            "status",
            "spacing_m",
            "n_lines",
            "n_wells",
            "flow_azimuth_deg",
            "message",
        ],
        rows,
    )
}

pub fn write_prep(dir: &Path, prepared: &Prepared) -> Result<Vec<PathBuf>, IoError> {
    std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    Ok(vec![
        write_file(dir, CANDIDATES_FILE, &candidates_geojson(prepared))?,
        write_file(dir, PREP_BLOCKS_FILE, &prep_csv(prepared))?,
    ])
}

// ---- readers ----

fn features<'a>(root: &'a Value, path: &Path) -> Result<&'a Vec<Value>, IoError> {
    if root.get("format_version").and_then(Value::as_u64) != Some(FORMAT_VERSION as u64) {
        return Err(IoError::parse(path, "format_version", "missing or unsupported"));
    }
    root.get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| IoError::parse(path, "document", "expected a FeatureCollection"))
}

struct Props<'a> {
    v: &'a Value,
    path: &'a Path,
    idx: usize,
}

impl Props<'_> {
    fn err(&self, msg: String) -> IoError {
        IoError::parse(self.path, format!("feature {}", self.idx), msg)
    }

    fn str(&self, key: &str) -> Result<String, IoError> {
        self.v["properties"][key]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| self.err(format!("property {key} must be a string")))
    }

    fn uint(&self, key: &str) -> Result<usize, IoError> {
        self.v["properties"][key]
            .as_u64()
            .map(|v| v as usize)
            .ok_or_else(|| self.err(format!("property {key} must be a non-negative integer")))
    }

    fn rate(&self, key: &str) -> Result<Rate, IoError> {
        self.v["properties"][key]
            .as_f64()
            .map(Rate::from_l_per_s)
            .ok_or_else(|| self.err(format!("property {key} must be a number")))
    }

    fn points(&self) -> Result<Vec<Point>, IoError> {
        let c = &self.v["geometry"]["coordinates"];
        let pt = |v: &Value| Some(Point::new(v.get(0)?.as_f64()?, v.get(1)?.as_f64()?));
        match self.v["geometry"]["type"].as_str() {
            Some("Point") => pt(c).map(|p| vec![p]),
            Some("LineString") => c.as_array().and_then(|a| a.iter().map(pt).collect()),
            _ => None,
        }
        .ok_or_else(|| self.err("malformed geometry".into()))
    }
}

fn parse_json(text: &str, path: &Path) -> Result<Value, IoError> {
    serde_json::from_str(text).map_err(|e| IoError::parse(path, "document", e))
}

pub fn parse_wells(text: &str, path: &Path) -> Result<Vec<WellRecord>, IoError> {
    let root = parse_json(text, path)?;
    features(&root, path)?
        .iter()
        .enumerate()
        .map(|(idx, v)| {
            let p = Props { v, path, idx };
            let role = match p.str("role")?.as_str() {
                "ext" => WellRole::Ext,
                "inj" => WellRole::Inj,
                other => return Err(p.err(format!("unknown role {other:?}"))),
            };
            let pts = p.points()?;
            if pts.len() != 1 {
                return Err(p.err("well geometry must be a Point".into()));
            }
            Ok(WellRecord {
                block_id: p.str("block_id")?,
                line_id: p.uint("line_id")?,
                well_id: p.uint("well_id")?,
                role,
                q: p.rate("q_l_s")?,
                location: pts[0],
            })
        })
        .collect()
}

pub fn parse_doublets(text: &str, path: &Path) -> Result<Vec<DoubletRecord>, IoError> {
    let root = parse_json(text, path)?;
    features(&root, path)?
        .iter()
        .enumerate()
        .map(|(idx, v)| {
            let p = Props { v, path, idx };
            let pts = p.points()?;
            if pts.len() != 2 {
                return Err(p.err("doublet geometry must be a two-point LineString".into()));
            }
            Ok(DoubletRecord {
                block_id: p.str("block_id")?,
                line_id: p.uint("line_id")?,
                ext_well_id: p.uint("ext_well_id")?,
                inj_well_id: p.uint("inj_well_id")?,
                q: p.rate("q_l_s")?,
                ext: pts[0],
                inj: pts[1],
            })
        })
        .collect()
}

fn csv_rows(text: &str, path: &Path, header: &[&str]) -> Result<Vec<(usize, csv::StringRecord)>, IoError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let found = rdr.headers().map_err(|e| IoError::parse(path, "header", e))?;
    if found.iter().ne(header.iter().copied()) {
        return Err(IoError::parse(
            path,
            "header",
            format!("expected {}", header.join(",")),
        ));
    }
    rdr.records()
        .enumerate()
        .map(|(i, r)| {
            r.map(|r| (i + 2, r))
                .map_err(|e| IoError::parse(path, format!("line {}", i + 2), e))
        })
        .collect()
}

fn field<T: std::str::FromStr>(
    r: &csv::StringRecord,
    col: usize,
    name: &str,
    line: usize,
    path: &Path,
) -> Result<T, IoError> {
    r[col]
        .parse()
        .map_err(|_| IoError::parse(path, format!("line {line}"), format!("bad {name} {:?}", &r[col])))
}

pub fn parse_blocks(text: &str, path: &Path) -> Result<Vec<BlockRecord>, IoError> {
    csv_rows(text, path, &BLOCKS_HEADER)?
        .into_iter()
        .map(|(line, r)| {
            let f = |col: usize| BLOCKS_HEADER[col];
            match &r[1] {
                "solved" => Ok(BlockRecord::Solved(SolvedRecord {
                    block_id: r[0].to_string(),
                    n_doublet: field(&r, 3, f(3), line, path)?,
                    q_block: Rate::from_l_per_s(field(&r, 4, f(4), line, path)?),
                    max_doublet: Rate::from_l_per_s(field(&r, 5, f(5), line, path)?),
                    certificate: Certificate {
                        proven_optimal: field(&r, 6, f(6), line, path)?,
                        gap: field(&r, 7, f(7), line, path)?,
                    },
                    node_count: field(&r, 8, f(8), line, path)?,
                    solve_time: if r[9].is_empty() {
                        None
                    } else {
                        Some(field(&r, 9, f(9), line, path)?)
                    },
                })),
                "failed" => Ok(BlockRecord::Failed(BlockFailure {
                    block_id: r[0].to_string(),
                    stage: Stage::parse(&r[2]).ok_or_else(|| {
                        IoError::parse(path, format!("line {line}"), format!("bad stage {:?}", &r[2]))
                    })?,
                    message: r[10].to_string(),
                })),
                other => Err(IoError::parse(
                    path,
                    format!("line {line}"),
                    format!("bad status {other:?}"),
                )),
            }
        })
        .collect()
}

pub fn parse_report(text: &str, path: &Path) -> Result<Vec<ScenarioReport>, IoError> {
    csv_rows(text, path, &REPORT_HEADER)?
        .into_iter()
        .map(|(line, r)| {
            let num = |col: usize| field::<f64>(&r, col, REPORT_HEADER[col], line, path);
            let count = |col: usize| field::<usize>(&r, col, REPORT_HEADER[col], line, path);
            let rate = |col: usize| num(col).map(Rate::from_l_per_s);
            Ok(ScenarioReport {
                q_min: rate(0)?,
                r_delta: num(1)?,
                total_doublets: count(2)?,
                max_doublets_per_block: count(3)?,
                mean_doublets_per_block: num(4)?,
                avg_max_doublet_rate: rate(5)?,
                mean_doublet_rate: rate(6)?,
                blocks_with: count(7)?,
                blocks_without: count(8)?,
                total_rate: rate(9)?,
                max_block_rate: rate(10)?,
                mean_block_rate: rate(11)?,
            })
        })
        .collect()
}

pub fn parse_manifest(text: &str, path: &Path) -> Result<Manifest, IoError> {
    let m: Manifest = serde_json::from_str(text).map_err(|e| IoError::parse(path, "document", e))?;
    if m.format_version != FORMAT_VERSION {
        return Err(IoError::parse(path, "format_version", "unsupported version"));
    }
    Ok(m)
}

fn read(dir: &Path, name: &str) -> Result<(String, PathBuf), IoError> {
    let path = dir.join(name);
    let text = std::fs::read_to_string(&path).map_err(|e| IoError::io(&path, e))?;
    Ok((text, path))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, IoError> {
    let (t, p) = read(dir, MANIFEST_FILE)?;
    parse_manifest(&t, &p)
}

pub fn read_report(dir: &Path) -> Result<Vec<ScenarioReport>, IoError> {
    let (t, p) = read(dir, REPORT_FILE)?;
    parse_report(&t, &p)
}

pub fn read_blocks(dir: &Path, tag: &str) -> Result<Vec<BlockRecord>, IoError> {
    let (t, p) = read(dir, &blocks_file(tag))?;
    parse_blocks(&t, &p)
}

pub fn read_wells(dir: &Path, tag: &str) -> Result<Vec<WellRecord>, IoError> {
    let (t, p) = read(dir, &wells_file(tag))?;
    parse_wells(&t, &p)
}

pub fn read_doublets(dir: &Path, tag: &str) -> Result<Vec<DoubletRecord>, IoError> {
    let (t, p) = read(dir, &doublets_file(tag))?;
    parse_doublets(&t, &p)
}

// ---- consistency checks on written files ----

fn close(a: Rate, b: Rate, allowance: f64) -> bool {
    (a.m3_per_s() - b.m3_per_s()).abs() <= allowance + 1e-9 * a.m3_per_s().abs().max(b.m3_per_s().abs())
}

/// Recompute the report of one scenario from its block table.
pub fn recompute_report(scenario: &ScenarioConfig, blocks: &[BlockRecord]) -> ScenarioReport {
    let figures: Vec<BlockFigures> = blocks
        .iter()
        .filter_map(|b| match b {
            BlockRecord::Solved(s) => Some(BlockFigures {
                n_doublet: s.n_doublet,
                q_block: s.q_block,
                max_doublet_rate: s.max_doublet,
            }),
            BlockRecord::Failed(_) => None,
        })
        .collect();
    ScenarioReport::aggregate(scenario, &figures)
}

/// Differences between a written report row and the one recomputed from
/// the block table, beyond what rounding of the written values explains,
/// plus any broken report invariant.
pub fn compare_reports(written: &ScenarioReport, blocks: &[BlockRecord]) -> Vec<String> {
    let scenario = ScenarioConfig {
        q_min: written.q_min,
        r_delta: written.r_delta,
        delta_min: 1.0,
    };
    let re = recompute_report(&scenario, blocks);
    let analysed = blocks
        .iter()
        .filter(|b| matches!(b, BlockRecord::Solved(_)))
        .count();
    let mut out: Vec<String> = re
        .check(analysed)
        .into_iter()
        .map(|m| format!("recomputed: {m}"))
        .collect();
    let counts = [
        ("total_doublets", written.total_doublets, re.total_doublets),
        (
            "max_doublets_per_block",
            written.max_doublets_per_block,
            re.max_doublets_per_block,
        ),
        ("blocks_with", written.blocks_with, re.blocks_with),
        ("blocks_without", written.blocks_without, re.blocks_without),
    ];
    for (name, w, r) in counts {
        if w != r {
            out.push(format!("{name}: written {w}, recomputed {r}"));
        }
    }
    if (written.mean_doublets_per_block - re.mean_doublets_per_block).abs() > 5e-4 + 1e-12 {
        out.push(format!(
            "mean_doublets_per_block: written {}, recomputed {}",
            written.mean_doublets_per_block, re.mean_doublets_per_block
        ));
    }
    // each block value was rounded once when written, each aggregate once more
    let rates = [
        (
            "total_rate",
            written.total_rate,
            re.total_rate,
            (analysed + 1) as f64,
        ),
        ("max_block_rate", written.max_block_rate, re.max_block_rate, 2.0),
        (
            "mean_block_rate",
            written.mean_block_rate,
            re.mean_block_rate,
            2.0,
        ),
        (
            "avg_max_doublet_rate",
            written.avg_max_doublet_rate,
            re.avg_max_doublet_rate,
            2.0,
        ),
        (
            "mean_doublet_rate",
            written.mean_doublet_rate,
            re.mean_doublet_rate,
            2.0,
        ),
    ];
    for (name, w, r, k) in rates {
        if !close(w, r, k * ROUNDING) {
            out.push(format!("{name}: written {w}, recomputed {r}"));
        }
    }
    if written.blocks_with + written.blocks_without != analysed {
        out.push(format!(
            "written blocks_with + blocks_without = {} but the block table has {analysed} analysed blocks",
            written.blocks_with + written.blocks_without
        ));
    }
    let product = Rate::from_m3_per_s(written.mean_doublet_rate.m3_per_s() * written.total_doublets as f64);
    if !close(
        product,
        written.total_rate,
        (written.total_doublets + 1) as f64 * ROUNDING,
    ) {
        out.push(format!(
            "written mean_doublet_rate * total_doublets = {product} differs from total_rate {}",
            written.total_rate
        ));
    }
    out
}

/// Re-check the written wells, doublets and block table of one scenario
/// against freshly prepared candidates. Rates are compared with an
/// allowance for the three-decimal rounding of the files.
pub fn audit_files(
    prepared: &Prepared,
    scenario: &ScenarioConfig,
    wells: &[WellRecord],
    doublets: &[DoubletRecord],
    blocks: &[BlockRecord],
) -> Vec<String> {
    let mut out = Vec::new();
    let by_block = candidates_by_block(prepared);

    type Ends = (Option<WellRecord>, Option<WellRecord>);
    let mut per_block: BTreeMap<&str, BTreeMap<usize, Ends>> = BTreeMap::new();
    for w in wells {
        let slot = per_block
            .entry(&w.block_id)
            .or_default()
            .entry(w.line_id)
            .or_default();
        let end = match w.role {
            WellRole::Ext => &mut slot.0,
            WellRole::Inj => &mut slot.1,
        };
        if end.replace(w.clone()).is_some() {
            out.push(format!(
                "block {} line {}: more than one {} well",
                w.block_id,
                w.line_id,
                w.role.as_str()
            ));
        }
    }
    let mut doublet_index: BTreeMap<(&str, usize), &DoubletRecord> = BTreeMap::new();
    for d in doublets {
        if doublet_index.insert((&d.block_id, d.line_id), d).is_some() {
            out.push(format!(
                "block {} line {}: doublet listed twice",
                d.block_id, d.line_id
            ));
        }
    }

    let listed: std::collections::BTreeSet<&str> = blocks.iter().map(BlockRecord::block_id).collect();
    for p in prepared {
        let id = match p {
            Ok(c) => c.block_id.as_str(),
            Err(f) => f.block_id.as_str(),
        };
        if !listed.contains(id) {
            out.push(format!("block {id} is missing from the block table"));
        }
    }
    for id in per_block.keys() {
        if !matches!(
            blocks.iter().find(|b| b.block_id() == *id),
            Some(BlockRecord::Solved(_))
        ) {
            out.push(format!("block {id} has wells but is not a solved block"));
        }
    }
    for (block_id, _) in doublet_index.keys() {
        if !per_block.contains_key(block_id) {
            out.push(format!("block {block_id} has doublets but no wells"));
        }
    }

    for b in blocks {
        let BlockRecord::Solved(rec) = b else {
            continue;
        };
        let id = rec.block_id.as_str();
        let Some(c) = by_block.get(id) else {
            out.push(format!(
                "block {id} is solved in the table but could not be prepared"
            ));
            continue;
        };
        let mut installed = Vec::new();
        for (&line_id, ends) in per_block.get(id).into_iter().flatten() {
            let tag = format!("block {id} line {line_id}");
            let (Some(ext), Some(inj)) = ends else {
                out.push(format!("{tag}: needs exactly one ext and one inj well"));
                continue;
            };
            if ext.q != inj.q {
                out.push(format!(
                    "{tag}: ext rate {} differs from inj rate {}",
                    ext.q, inj.q
                ));
            }
            for w in [ext, inj] {
                match find_well(c, line_id, w.well_id) {
                    Some(cand) if cand.point() == w.location => {}
                    Some(_) => out.push(format!(
                        "{tag}: well {} is not at its candidate location",
                        w.well_id
                    )),
                    None => out.push(format!(
                        "{tag}: well {} is not a candidate of this line",
                        w.well_id
                    )),
                }
            }
            match doublet_index.get(&(id, line_id)) {
                Some(d)
                    if d.ext_well_id == ext.well_id
                        && d.inj_well_id == inj.well_id
                        && d.q == ext.q
                        && d.ext == ext.location
                        && d.inj == inj.location => {}
                Some(_) => out.push(format!("{tag}: doublet feature disagrees with its wells")),
                None => out.push(format!("{tag}: doublet feature missing")),
            }
            installed.push(InstalledDoublet {
                line_id,
                ext_well_id: ext.well_id,
                inj_well_id: inj.well_id,
                q: ext.q,
            });
        }
        for &(b, line_id) in doublet_index.keys() {
            if b == id && !per_block[id].contains_key(&line_id) {
                out.push(format!("block {id} line {line_id}: doublet without wells"));
            }
        }

        let total: Rate = installed.iter().map(|d| d.q).sum();
        let max = installed
            .iter()
            .map(|d| d.q)
            .fold(Rate::ZERO, |a, b| if b > a { b } else { a });
        if rec.n_doublet != installed.len() {
            out.push(format!(
                "block {id}: n_doublet {} but {} doublets in the wells file",
                rec.n_doublet,
                installed.len()
            ));
        }
        if !close(rec.q_block, total, (installed.len() + 1) as f64 * ROUNDING) {
            out.push(format!(
                "block {id}: q_block {} but the doublets sum to {total}",
                rec.q_block
            ));
        }
        if !close(rec.max_doublet, max, ROUNDING) {
            out.push(format!(
                "block {id}: max_doublet {} but the largest doublet is {max}",
                rec.max_doublet
            ));
        }
        if installed.is_empty() {
            continue;
        }
        let problem = match BlockProblem::new(id, c.lines.clone(), *scenario) {
            Ok(p) => p,
            Err(e) => {
                out.push(format!("block {id}: {e}"));
                continue;
            }
        };
        let sol = BlockSolution {
            block_id: id.to_string(),
            n_doublet: installed.len(),
            q_block: total,
            installed,
            certificate: rec.certificate,
            node_count: rec.node_count,
            solve_time: 0.0,
        };
        // two rounded rates enter the coupled rows
        for v in audit_solution_with_tol(&sol, &problem, AUDIT_TOL + 2.0 * ROUNDING) {
            out.push(format!("block {id}: {v}"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{BlockGeometry, Polygon, UniformField};
    use crate::hydro::HydroSample;
    use crate::scenario::{prepare_blocks, solve_prepared};
    use crate::solver::Budget;

    fn field() -> UniformField {
        UniformField(HydroSample {
            conductivity: 2e-3,
            thickness: 10.0,
            natural_level: 500.0,
            max_level: 502.0,
            gradient: 1e-3,
            darcy_velocity: None,
            flow_dir: [0.6, 0.8],
        })
    }

    fn city() -> Vec<BlockGeometry> {
        let mk = |id: &str, x0: f64, w: f64, h: f64| BlockGeometry {
            block_id: id.into(),
            boundary: Polygon::rect(x0, 5_330_000.0, x0 + w, 5_330_000.0 + h).unwrap(),
            buildings: vec![Polygon::rect(x0 + 10.0, 5_330_010.0, x0 + 20.0, 5_330_020.0).unwrap()],
        };
        vec![
            mk("b", 691_000.0, 80.0, 60.0),
            mk("a", 690_000.0, 100.0, 60.0),
            mk("c", 692_000.0, 12.0, 12.0),
        ]
    }

    fn run() -> (Prepared, Vec<ScenarioRun>) {
        let prepared = prepare_blocks(&city(), &field(), &Default::default(), 2).unwrap();
        let scenarios = [ScenarioConfig::new(Rate::from_l_per_s(1.0), 1.5, 10.0).unwrap()];
        let runs = solve_prepared(&prepared, &scenarios, &Budget::default(), 2).unwrap();
        (prepared, runs)
    }

    #[test]
    fn empty_run_files_are_valid() {
        let prepared: Prepared = Vec::new();
        let s = ScenarioConfig::new(Rate::from_l_per_s(1.0), 1.5, 10.0).unwrap();
        let run = ScenarioRun {
            scenario: s,
            outcomes: vec![],
            report: ScenarioReport::aggregate(&s, &[]),
        };
        let p = Path::new("x");
        assert!(parse_wells(&wells_geojson(&run, &prepared), p)
            .unwrap()
            .is_empty());
        assert!(parse_doublets(&doublets_geojson(&run, &prepared), p)
            .unwrap()
            .is_empty());
        assert!(parse_blocks(&blocks_csv(&run, false), p).unwrap().is_empty());
        let reports = parse_report(&report_csv(std::slice::from_ref(&run.report)), p).unwrap();
        assert_eq!(reports[0].total_doublets, 0);
        assert_eq!(blocks_csv(&run, false).lines().count(), 1);
    }

    #[test]
    fn wells_round_trip() {
        let (prepared, runs) = run();
        let run = &runs[0];
        assert!(run.report.total_doublets > 0);
        let text = wells_geojson(run, &prepared);
        let wells = parse_wells(&text, Path::new("w")).unwrap();
        assert_eq!(wells.len(), 2 * run.report.total_doublets);
        let by_block = candidates_by_block(&prepared);
        for w in &wells {
            let cand = find_well(by_block[w.block_id.as_str()], w.line_id, w.well_id).unwrap();
            assert_eq!(cand.point(), w.location);
            let sol = run
                .outcomes
                .iter()
                .find_map(|o| o.solution().filter(|s| s.block_id == w.block_id))
                .unwrap();
            let d = sol.installed.iter().find(|d| d.line_id == w.line_id).unwrap();
            assert!((d.q.m3_per_s() - w.q.m3_per_s()).abs() <= ROUNDING);
            assert_eq!(fmt_rate(d.q), fmt_rate(w.q));
        }
    }

    #[test]
    fn blocks_and_report_round_trip() {
        let (_, runs) = run();
        let text = blocks_csv(&runs[0], false);
        let rec = parse_blocks(&text, Path::new("b")).unwrap();
        assert_eq!(rec.len(), 3);
        let ids: Vec<&str> = rec.iter().map(BlockRecord::block_id).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        let report = report_csv(&[runs[0].report.clone()]);
        let parsed = parse_report(&report, Path::new("r")).unwrap();
        assert_eq!(report_csv(&parsed), report);
        assert!(
            compare_reports(&parsed[0], &rec).is_empty(),
            "{:?}",
            compare_reports(&parsed[0], &rec)
        );
    }

    #[test]
    fn tampered_report_is_caught() {
        let (_, runs) = run();
        let rec = parse_blocks(&blocks_csv(&runs[0], false), Path::new("b")).unwrap();
        let mut r = runs[0].report.clone();
        r.total_rate += Rate::from_l_per_s(0.01);
        assert!(!compare_reports(&r, &rec).is_empty());
        let mut r = runs[0].report.clone();
        r.blocks_without += 1;
        assert!(!compare_reports(&r, &rec).is_empty());
    }

    #[test]
    fn written_files_pass_their_audit() {
        let (prepared, runs) = run();
        let run = &runs[0];
        let p = Path::new("f");
        let wells = parse_wells(&wells_geojson(run, &prepared), p).unwrap();
        let doublets = parse_doublets(&doublets_geojson(run, &prepared), p).unwrap();
        let blocks = parse_blocks(&blocks_csv(run, false), p).unwrap();
        let problems = audit_files(&prepared, &run.scenario, &wells, &doublets, &blocks);
        assert!(problems.is_empty(), "{problems:?}");

        let mut moved = wells.clone();
        moved[0].location.x += 0.5;
        assert!(!audit_files(&prepared, &run.scenario, &moved, &doublets, &blocks).is_empty());
        let mut fast = wells.clone();
        for w in fast.iter_mut().take(2) {
            w.q = Rate::from_l_per_s(1000.0);
        }
        assert!(!audit_files(&prepared, &run.scenario, &fast, &doublets, &blocks).is_empty());
    }

    #[test]
    fn output_is_byte_identical_across_runs() {
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        for d in [&dir1, &dir2] {
            let (prepared, runs) = run();
            write_results(d.path(), &prepared, &runs, false).unwrap();
        }
        let m = read_manifest(dir1.path()).unwrap();
        for f in m.files.iter().chain([&MANIFEST_FILE.to_string()]) {
            let a = std::fs::read(dir1.path().join(f)).unwrap();
            let b = std::fs::read(dir2.path().join(f)).unwrap();
            assert_eq!(a, b, "{f}");
        }
    }

    #[test]
    fn failed_blocks_are_listed() {
        let prepared: Prepared = vec![Err(BlockFailure {
            block_id: "z".into(),
            stage: Stage::Prep,
            message: "no groundwater data, here".into(),
        })];
        let s = ScenarioConfig::new(Rate::from_l_per_s(1.0), 1.5, 10.0).unwrap();
        let runs = solve_prepared(&prepared, &[s], &Budget::default(), 1).unwrap();
        let rec = parse_blocks(&blocks_csv(&runs[0], false), Path::new("b")).unwrap();
        assert_eq!(
            rec,
            vec![BlockRecord::Failed(BlockFailure {
                block_id: "z".into(),
                stage: Stage::Prep,
                message: "no groundwater data, here".into(),
            })]
        );
        assert!(prep_csv(&prepared).contains("\"no groundwater data, here\""));
    }
}

//! Per-block mixed-integer program.
//!
//! Variables per potential doublet line `k`: install decision `d[k]` and
//! pumping rate `q[k]`; per candidate well: extraction and injection choices.
//! The rows follow the constraint families listed in [`Family`].

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::geom::DoubletLine;
use crate::units::Rate;

/// Scenario parameters that shape the program but not the candidate set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Smallest rate an installed doublet may run at.
    pub q_min: Rate,
    /// Ratio of external to internal well distance.
    pub r_delta: f64,
    /// Regulatory minimum distance between the wells of one doublet, m.
    pub delta_min: f64,
}

impl ScenarioConfig {
    pub fn new(q_min: Rate, r_delta: f64, delta_min: f64) -> Result<Self, ModelError> {
        let s = ScenarioConfig {
            q_min,
            r_delta,
            delta_min,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.q_min.m3_per_s() > 0.0 && self.q_min.m3_per_s().is_finite()) {
            return Err(ModelError::Scenario("q_min must be > 0".into()));
        }
        if !(self.r_delta >= 1.0 && self.r_delta.is_finite()) {
            return Err(ModelError::Scenario("r_delta must be >= 1".into()));
        }
        if !(self.delta_min > 0.0 && self.delta_min.is_finite()) {
            return Err(ModelError::Scenario("delta_min must be > 0".into()));
        }
        Ok(())
    }

    /// The six combinations of q_min ∈ {1, 5} l/s and r_Δ ∈ {1.5, 2, 3}.
    pub fn standard_matrix(delta_min: f64) -> Vec<ScenarioConfig> {
        let mut out = Vec::new();
        for q in [1.0, 5.0] {
            for r in [1.5, 2.0, 3.0] {
                out.push(ScenarioConfig {
                    q_min: Rate::from_l_per_s(q),
                    r_delta: r,
                    delta_min,
                });
            }
        }
        out
    }

    /// Short stable tag used in file names, e.g. `q1.000_r1.500`.
    pub fn tag(&self) -> String {
        format!("q{:.3}_r{:.3}", self.q_min.l_per_s(), self.r_delta)
    }
}

/// Upper bound on the rate of a line: the smaller of the best drawdown rate
/// and the best upconing rate among its wells.
pub fn compute_q_max(line: &DoubletLine) -> f64 {
    let best_d = line
        .wells
        .iter()
        .map(|w| w.limits.q_d)
        .fold(f64::NEG_INFINITY, f64::max);
    let best_f = line
        .wells
        .iter()
        .map(|w| w.limits.q_f)
        .fold(f64::NEG_INFINITY, f64::max);
    best_d.min(best_f).max(0.0)
}

/// Everything needed to assemble the program of one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockProblem {
    pub block_id: String,
    pub lines: Vec<DoubletLine>,
    pub q_max: Vec<f64>,
    /// Distance between line supports, `|t_k − t_p|`, m.
    pub pair_dist: Vec<Vec<f64>>,
    /// Interference parameter `q_max,k/α̃_k + q_max,p/α̃_p`; infinite when
    /// either median α is zero.
    pub m_param: Vec<Vec<f64>>,
    pub scenario: ScenarioConfig,
}

impl BlockProblem {
    pub fn new(
        block_id: impl Into<String>,
        lines: Vec<DoubletLine>,
        scenario: ScenarioConfig,
    ) -> Result<Self, ModelError> {
        scenario.validate()?;
        for line in &lines {
            if line.wells.len() < 2 {
                return Err(ModelError::Line {
                    line_id: line.line_id,
                    reason: "a doublet line needs at least two wells".into(),
                });
            }
        }
        let q_max: Vec<f64> = lines.iter().map(compute_q_max).collect();
        let n = lines.len();
        let mut pair_dist = vec![vec![0.0; n]; n];
        let mut m_param = vec![vec![0.0; n]; n];
        for k in 0..n {
            for p in 0..n {
                if k == p {
                    continue;
                }
                pair_dist[k][p] = (lines[k].t - lines[p].t).abs();
                let (ak, ap) = (lines[k].alpha_med, lines[p].alpha_med);
                m_param[k][p] = if ak > 0.0 && ap > 0.0 {
                    q_max[k] / ak + q_max[p] / ap
                } else {
                    f64::INFINITY
                };
            }
        }
        Ok(BlockProblem {
            block_id: block_id.into(),
            lines,
            q_max,
            pair_dist,
            m_param,
            scenario,
        })
    }

    pub fn well_count(&self) -> usize {
        self.lines.iter().map(|l| l.wells.len()).sum()
    }

    /// Neighbouring lines close enough for the mutual footprint limit.
    pub fn footprint_coupled(&self, k: usize, p: usize) -> bool {
        k != p && self.pair_dist[k][p] < self.scenario.r_delta * (self.lines[k].chi + self.lines[p].chi) / 2.0
    }

    /// Neighbouring lines too close to host doublets at the same time.
    pub fn spacing_excluded(&self, k: usize, p: usize) -> bool {
        k != p && self.pair_dist[k][p] < self.scenario.r_delta * self.scenario.delta_min
    }

    /// Whether extraction at well index `ext` and injection at `inj` of line
    /// `k` is a permitted pairing: far enough apart, injection downstream.
    pub fn pair_admissible(&self, k: usize, ext: usize, inj: usize) -> bool {
        let wells = &self.lines[k].wells;
        let (e, i) = (&wells[ext], &wells[inj]);
        (i.s - e.s).abs() >= self.scenario.delta_min && i.s > e.s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lb: f64,
    pub ub: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
}

/// Constraint families of the block program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    /// `q_k ≤ q_max,k · d_k`
    Operation,
    /// `q_min · d_k ≤ q_k`
    MinRate,
    /// `Σ d_inj = d_k`
    InjectionCount,
    /// `Σ d_ext = d_k`
    ExtractionCount,
    /// Drawdown threshold of the selected extraction well.
    Drawdown,
    /// Upconing threshold of the selected injection well.
    Upconing,
    /// Internal breakthrough for the selected well pair.
    InternalBreakthrough,
    /// Pairs too close or in the wrong flow order.
    PairExclusion,
    /// Mutual footprint of neighbouring doublets.
    ExternalBreakthrough,
    /// Minimum spacing of neighbouring doublets.
    DoubletSpacing,
    /// Per-line rate cap implied by the well choice; added by the solver only.
    PairCap,
    /// Footprint rows with big-M taken from the per-line caps; solver only.
    FootprintCap,
    /// Sets of lines that pairwise violate the spacing rule; solver only.
    SpacingClique,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Operation => "operation",
            Family::MinRate => "min_rate",
            Family::InjectionCount => "injection_count",
            Family::ExtractionCount => "extraction_count",
            Family::Drawdown => "drawdown",
            Family::Upconing => "upconing",
            Family::InternalBreakthrough => "internal_breakthrough",
            Family::PairExclusion => "pair_exclusion",
            Family::ExternalBreakthrough => "external_breakthrough",
            Family::DoubletSpacing => "doublet_spacing",
            Family::PairCap => "pair_cap",
            Family::FootprintCap => "footprint_cap",
            Family::SpacingClique => "spacing_clique",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub family: Family,
    pub label: String,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates the row, zero when satisfied.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.activity(x);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// Variable indices of one candidate well.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellVars {
    pub well_id: usize,
    pub ext: usize,
    pub inj: usize,
}

/// Admissible pairing with its largest operable rate,
/// `min(q_max, q_d,ext, q_f,inj, α_pair · Δ_pair)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairBound {
    /// Index into [`LineVars::wells`].
    pub ext: usize,
    pub inj: usize,
    pub cap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineVars {
    pub line_id: usize,
    pub d: usize,
    pub q: usize,
    pub wells: Vec<WellVars>,
    pub admissible: Vec<PairBound>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BuildWarning {
    /// Line cannot reach the minimum rate and is fixed off.
    BelowMinRate { line_id: usize },
    /// Line has a zero median breakthrough parameter but a footprint
    /// neighbour; it is fixed off.
    DegenerateLine { line_id: usize },
}

/// Assembled program: maximise `objective · x` subject to `rows`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpInstance {
    pub block_id: String,
    pub vars: Vec<Variable>,
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    pub lines: Vec<LineVars>,
    pub q_min: f64,
    pub warnings: Vec<BuildWarning>,
}

impl MilpInstance {
    pub fn binaries(&self) -> impl Iterator<Item = usize> + '_ {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind == VarKind::Binary)
            .map(|(j, _)| j)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest row or bound violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| r.violation(x)).fold(0.0, f64::max);
        let bounds = self
            .vars
            .iter()
            .zip(x)
            .map(|(v, &xv)| (v.lb - xv).max(xv - v.ub).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    pub fn rows_of(&self, family: Family) -> impl Iterator<Item = &Row> {
        self.rows.iter().filter(move |r| r.family == family)
    }

    /// Canonical text dump; numbers carry 17 significant digits.
    pub fn dump(&self) -> String {
        let num = |v: f64| format!("{v:.16e}");
        let mut out = String::new();
        out.push_str("# doubletopt milp instance\n");
        out.push_str("format_version 1\n");
        let _ = writeln!(out, "block {}", self.block_id);
        let _ = writeln!(out, "sense max");
        let _ = writeln!(out, "variables {}", self.vars.len());
        for (j, v) in self.vars.iter().enumerate() {
            let kind = match v.kind {
                VarKind::Binary => "B",
                VarKind::Continuous => "C",
            };
            let _ = writeln!(
                out,
                "{j} {} {kind} {} {} {}",
                v.name,
                num(v.lb),
                num(v.ub),
                num(self.objective[j])
            );
        }
        let _ = writeln!(out, "rows {}", self.rows.len());
        for (i, r) in self.rows.iter().enumerate() {
            let sense = match r.sense {
                Sense::Le => "le",
                Sense::Eq => "eq",
            };
            let _ = write!(
                out,
                "{i} {} {} {sense} {} {}",
                r.family,
                r.label,
                num(r.rhs),
                r.terms.len()
            );
            for &(j, a) in &r.terms {
                let _ = write!(out, " {j}:{}", num(a));
            }
            out.push('\n');
        }
        out
    }
}

/// Assemble the program for one block.
///
/// Lines that cannot reach `q_min`, and lines with a zero median α that have
/// a footprint neighbour, get `d = q = 0` through their bounds and a warning.
pub fn build_milp(p: &BlockProblem) -> MilpInstance {
    let n = p.lines.len();
    let n_wells = p.well_count();
    let q_min = p.scenario.q_min.m3_per_s();
    let mut vars = Vec::with_capacity(2 * n + 2 * n_wells);
    let mut objective = Vec::with_capacity(vars.capacity());
    let mut warnings = Vec::new();

    let degenerate: Vec<bool> = (0..n)
        .map(|k| p.lines[k].alpha_med <= 0.0 && (0..n).any(|o| p.footprint_coupled(k, o)))
        .collect();

    for line in &p.lines {
        vars.push(Variable {
            name: format!("d[{}]", line.line_id),
            kind: VarKind::Binary,
            lb: 0.0,
            ub: 1.0,
        });
        objective.push(0.0);
    }
    for (k, line) in p.lines.iter().enumerate() {
        vars.push(Variable {
            name: format!("q[{}]", line.line_id),
            kind: VarKind::Continuous,
            lb: 0.0,
            ub: p.q_max[k],
        });
        objective.push(1.0);
    }
    for role in ["ext", "inj"] {
        for line in &p.lines {
            for w in &line.wells {
                vars.push(Variable {
                    name: format!("{role}[{}.{}]", line.line_id, w.well_id),
                    kind: VarKind::Binary,
                    lb: 0.0,
                    ub: 1.0,
                });
                objective.push(0.0);
            }
        }
    }

    for k in 0..n {
        let line_id = p.lines[k].line_id;
        if p.q_max[k] < q_min {
            warnings.push(BuildWarning::BelowMinRate { line_id });
        } else if degenerate[k] {
            log::warn!(
                "block {}: line {line_id} has zero median breakthrough parameter; fixed off",
                p.block_id
            );
            warnings.push(BuildWarning::DegenerateLine { line_id });
        } else {
            continue;
        }
        vars[k].ub = 0.0;
        vars[n + k].ub = 0.0;
    }

    let mut lines = Vec::with_capacity(n);
    let mut offset = 2 * n;
    for (k, line) in p.lines.iter().enumerate() {
        let wells = line
            .wells
            .iter()
            .enumerate()
            .map(|(idx, w)| WellVars {
                well_id: w.well_id,
                ext: offset + idx,
                inj: offset + n_wells + idx,
            })
            .collect();
        offset += line.wells.len();
        lines.push(LineVars {
            line_id: line.line_id,
            d: k,
            q: n + k,
            wells,
            admissible: Vec::new(),
        });
    }

    let mut rows = Vec::new();
    for (k, line) in p.lines.iter().enumerate() {
        let lv = &mut lines[k];
        let (d, q, q_max) = (lv.d, lv.q, p.q_max[k]);
        let id = line.line_id;
        rows.push(Row {
            family: Family::Operation,
            label: format!("L{id}"),
            terms: vec![(q, 1.0), (d, -q_max)],
            sense: Sense::Le,
            rhs: 0.0,
        });
        rows.push(Row {
            family: Family::MinRate,
            label: format!("L{id}"),
            terms: vec![(d, q_min), (q, -1.0)],
            sense: Sense::Le,
            rhs: 0.0,
        });
        let mut inj_terms: Vec<(usize, f64)> = lv.wells.iter().map(|w| (w.inj, 1.0)).collect();
        inj_terms.push((d, -1.0));
        rows.push(Row {
            family: Family::InjectionCount,
            label: format!("L{id}"),
            terms: inj_terms,
            sense: Sense::Eq,
            rhs: 0.0,
        });
        let mut ext_terms: Vec<(usize, f64)> = lv.wells.iter().map(|w| (w.ext, 1.0)).collect();
        ext_terms.push((d, -1.0));
        rows.push(Row {
            family: Family::ExtractionCount,
            label: format!("L{id}"),
            terms: ext_terms,
            sense: Sense::Eq,
            rhs: 0.0,
        });
        for (wv, w) in lv.wells.iter().zip(&line.wells) {
            // q ≤ d_ext·q_d + q_max·(1 − d_ext)
            rows.push(Row {
                family: Family::Drawdown,
                label: format!("L{id}.W{}", w.well_id),
                terms: vec![(q, 1.0), (wv.ext, q_max - w.limits.q_d)],
                sense: Sense::Le,
                rhs: q_max,
            });
        }
        for (wv, w) in lv.wells.iter().zip(&line.wells) {
            rows.push(Row {
                family: Family::Upconing,
                label: format!("L{id}.W{}", w.well_id),
                terms: vec![(q, 1.0), (wv.inj, q_max - w.limits.q_f)],
                sense: Sense::Le,
                rhs: q_max,
            });
        }
        for (j, ext) in line.wells.iter().enumerate() {
            for (i, inj) in line.wells.iter().enumerate() {
                let label = format!("L{id}.E{}.I{}", ext.well_id, inj.well_id);
                if p.pair_admissible(k, j, i) {
                    let alpha = (ext.limits.alpha + inj.limits.alpha) / 2.0;
                    let dist = (inj.s - ext.s).abs();
                    let limit = alpha * dist;
                    // q ≤ α·Δ + q_max·(2 − d_ext − d_inj)
                    rows.push(Row {
                        family: Family::InternalBreakthrough,
                        label,
                        terms: vec![(q, 1.0), (lv.wells[j].ext, q_max), (lv.wells[i].inj, q_max)],
                        sense: Sense::Le,
                        rhs: limit + 2.0 * q_max,
                    });
                    let cap = q_max.min(ext.limits.q_d).min(inj.limits.q_f).min(limit);
                    lv.admissible.push(PairBound { ext: j, inj: i, cap });
                } else {
                    rows.push(Row {
                        family: Family::PairExclusion,
                        label,
                        terms: vec![(lv.wells[i].inj, 1.0), (lv.wells[j].ext, 1.0)],
                        sense: Sense::Le,
                        rhs: 1.0,
                    });
                }
            }
        }
    }

    let r = p.scenario.r_delta;
    for k in 0..n {
        for o in k + 1..n {
            let (lk, lo) = (&lines[k], &lines[o]);
            let label = format!("L{}.L{}", lk.line_id, lo.line_id);
            if p.footprint_coupled(k, o) && !degenerate[k] && !degenerate[o] {
                let m = p.m_param[k][o];
                // q_k/α̃_k + q_p/α̃_p ≤ (2/r)·Δ + m·(2 − d_k − d_p)
                rows.push(Row {
                    family: Family::ExternalBreakthrough,
                    label: label.clone(),
                    terms: vec![
                        (lk.q, 1.0 / p.lines[k].alpha_med),
                        (lo.q, 1.0 / p.lines[o].alpha_med),
                        (lk.d, m),
                        (lo.d, m),
                    ],
                    sense: Sense::Le,
                    rhs: 2.0 / r * p.pair_dist[k][o] + 2.0 * m,
                });
            }
            if p.spacing_excluded(k, o) {
                rows.push(Row {
                    family: Family::DoubletSpacing,
                    label,
                    terms: vec![(lk.d, 1.0), (lo.d, 1.0)],
                    sense: Sense::Le,
                    rhs: 1.0,
                });
            }
        }
    }

    MilpInstance {
        block_id: p.block_id.clone(),
        vars,
        objective,
        rows,
        lines,
        q_min,
        warnings,
    }
}

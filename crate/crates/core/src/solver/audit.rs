use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::BlockSolution;
use crate::model::{BlockProblem, Family};

/// Absolute tolerance of the audit in SI units.
pub const AUDIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuditRule {
    /// A constraint family of the block program.
    Constraint(Family),
    /// Reported totals disagree with the installed doublets.
    Totals,
    /// A referenced line or well does not exist or is used twice.
    Reference,
}

impl fmt::Display for AuditRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AuditRule::Constraint(fam) => write!(f, "{fam}"),
            AuditRule::Totals => f.write_str("totals"),
            AuditRule::Reference => f.write_str("reference"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: AuditRule,
    pub entities: String,
    /// Excess over the limit, in the row's SI unit (m³/s or m). Footprint
    /// violations are expressed as the smallest rate cut that clears them.
    pub residual: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [{}] residual {:e}",
            self.rule, self.entities, self.residual
        )
    }
}

/// Re-check a solution against the raw block data, independent of the
/// assembled program.
pub fn audit_solution(sol: &BlockSolution, p: &BlockProblem) -> Vec<Violation> {
    audit_solution_with_tol(sol, p, AUDIT_TOL)
}

/// [`audit_solution`] with a custom tolerance, e.g. for rates read back
/// from rounded output.
pub fn audit_solution_with_tol(sol: &BlockSolution, p: &BlockProblem, tol: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |rule: AuditRule, entities: String, residual: f64| {
        if residual > tol || residual.is_nan() {
            out.push(Violation {
                rule,
                entities,
                residual,
            });
        }
    };
    let c = |f: Family| AuditRule::Constraint(f);
    let sc = &p.scenario;
    let q_min = sc.q_min.m3_per_s();

    // (line index, rate) of every resolvable doublet
    let mut active: Vec<(usize, f64)> = Vec::new();
    let mut seen = BTreeSet::new();
    for d in &sol.installed {
        let tag = format!("line {}", d.line_id);
        if !seen.insert(d.line_id) {
            push(c(Family::ExtractionCount), format!("{tag} installed twice"), 1.0);
            continue;
        }
        let Some(k) = p.lines.iter().position(|l| l.line_id == d.line_id) else {
            push(AuditRule::Reference, format!("{tag} unknown"), f64::INFINITY);
            continue;
        };
        let line = &p.lines[k];
        let ext = line.wells.iter().find(|w| w.well_id == d.ext_well_id);
        let inj = line.wells.iter().find(|w| w.well_id == d.inj_well_id);
        let (Some(ext), Some(inj)) = (ext, inj) else {
            push(
                AuditRule::Reference,
                format!("{tag} wells {} / {} not on line", d.ext_well_id, d.inj_well_id),
                f64::INFINITY,
            );
            continue;
        };
        let q = d.q.m3_per_s();
        let pair = format!("{tag} ext {} inj {}", ext.well_id, inj.well_id);
        push(c(Family::Operation), tag.clone(), q - p.q_max[k]);
        push(c(Family::Operation), format!("{tag} negative rate"), -q);
        push(c(Family::MinRate), tag.clone(), q_min - q);
        push(c(Family::Drawdown), pair.clone(), q - ext.limits.q_d);
        push(c(Family::Upconing), pair.clone(), q - inj.limits.q_f);
        let dist = (inj.s - ext.s).abs();
        push(
            c(Family::PairExclusion),
            format!("{pair} distance"),
            sc.delta_min - dist,
        );
        // equal s means the same well, already caught by the distance check
        push(
            c(Family::PairExclusion),
            format!("{pair} not downstream"),
            ext.s - inj.s,
        );
        let alpha = (ext.limits.alpha + inj.limits.alpha) / 2.0;
        push(c(Family::InternalBreakthrough), pair, q - alpha * dist);
        active.push((k, q));
    }

    for (a, &(k, qk)) in active.iter().enumerate() {
        for &(o, qo) in &active[a + 1..] {
            let (lk, lo) = (&p.lines[k], &p.lines[o]);
            let tag = format!("lines {} and {}", lk.line_id, lo.line_id);
            let dist = (lk.t - lo.t).abs();
            if dist < sc.r_delta * sc.delta_min {
                push(
                    c(Family::DoubletSpacing),
                    tag.clone(),
                    sc.r_delta * sc.delta_min - dist,
                );
            }
            if dist < sc.r_delta * (lk.chi + lo.chi) / 2.0 {
                let (ak, ao) = (lk.alpha_med, lo.alpha_med);
                let residual = if ak > 0.0 && ao > 0.0 {
                    let excess = qk / ak + qo / ao - 2.0 / sc.r_delta * dist;
                    excess * ak.min(ao)
                } else if qk > 0.0 || qo > 0.0 {
                    qk.max(qo)
                } else {
                    0.0
                };
                push(c(Family::ExternalBreakthrough), tag, residual);
            }
        }
    }

    let total: f64 = sol.installed.iter().map(|d| d.q.m3_per_s()).sum();
    push(
        AuditRule::Totals,
        "q_block".into(),
        (sol.q_block.m3_per_s() - total).abs(),
    );
    push(
        AuditRule::Totals,
        "n_doublet".into(),
        (sol.n_doublet as f64 - sol.installed.len() as f64).abs(),
    );
    out
}

//! Exact solution of block programs: LP relaxations by a bounded dual
//! simplex, integrality by depth-first branch-and-bound with best-bound
//! backtracking.

mod audit;
mod bnb;
mod lp;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::SolveError;
use crate::model::{MilpInstance, VarKind};
use crate::units::Rate;

pub use audit::{audit_solution, audit_solution_with_tol, AuditRule, Violation, AUDIT_TOL};
pub use bnb::solve_milp;
pub use lp::LpStatus;

/// Integrality tolerance on binary variables.
pub const INTEGRALITY_TOL: f64 = 1e-6;
/// Relative gap below which a solution counts as proven optimal.
pub const GAP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LpResult {
    pub status: LpStatus,
    /// Objective value, m³/s; zero unless optimal.
    pub objective: f64,
    pub primal: Vec<f64>,
}

/// Solve the linear relaxation of `inst` with some binaries fixed.
pub fn solve_lp(inst: &MilpInstance, fixings: &[(usize, f64)]) -> Result<LpResult, SolveError> {
    for &(j, v) in fixings {
        let var = inst
            .vars
            .get(j)
            .ok_or_else(|| SolveError::Malformed(format!("fixing references variable {j}")))?;
        if var.kind != VarKind::Binary || (v != 0.0 && v != 1.0) {
            return Err(SolveError::Malformed(format!(
                "fixings must set binaries to 0 or 1, got {} = {v}",
                var.name
            )));
        }
    }
    let problem = lp::LpProblem::new(inst, &[])?;
    let mut sx = lp::Simplex::new(&problem);
    for &(j, v) in fixings {
        sx.fix(j, v);
    }
    let status = sx.optimize()?;
    let primal = sx.primal();
    let objective = if status == LpStatus::Optimal {
        sx.objective(&primal)
    } else {
        0.0
    };
    Ok(LpResult {
        status,
        objective,
        primal,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub max_nodes: u64,
    pub max_time: Duration,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_nodes: 1_000_000,
            max_time: Duration::from_secs(60),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub proven_optimal: bool,
    /// Relative distance between the best bound and the incumbent.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstalledDoublet {
    pub line_id: usize,
    pub ext_well_id: usize,
    pub inj_well_id: usize,
    pub q: Rate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSolution {
    pub block_id: String,
    /// Ordered by line id.
    pub installed: Vec<InstalledDoublet>,
    pub q_block: Rate,
    pub n_doublet: usize,
    pub certificate: Certificate,
    pub node_count: u64,
    /// Wall time of the solve, s.
    pub solve_time: f64,
}

impl BlockSolution {
    /// Solution of a block without candidate lines.
    pub fn empty(block_id: impl Into<String>) -> Self {
        BlockSolution {
            block_id: block_id.into(),
            installed: Vec::new(),
            q_block: Rate::ZERO,
            n_doublet: 0,
            certificate: Certificate {
                proven_optimal: true,
                gap: 0.0,
            },
            node_count: 0,
            solve_time: 0.0,
        }
    }

    /// Largest single doublet rate.
    pub fn max_doublet_rate(&self) -> Rate {
        self.installed
            .iter()
            .map(|d| d.q)
            .fold(Rate::ZERO, |a, b| if b.m3_per_s() > a.m3_per_s() { b } else { a })
    }
}

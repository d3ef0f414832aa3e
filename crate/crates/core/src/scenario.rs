//! City-scale runs: prepare every block once, solve it under each scenario
//! on a worker pool and reduce the results in block order.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::geom::{adaptive_candidates, BlockGeometry, Candidates, FieldSampler, PrepConfig};
use crate::model::{build_milp, BlockProblem, ScenarioConfig};
use crate::solver::{audit_solution, solve_milp, BlockSolution, Budget};
use crate::units::Rate;

/// Pipeline stage at which a block failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Prep,
    Model,
    Solve,
    Audit,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Prep => "prep",
            Stage::Model => "model",
            Stage::Solve => "solve",
            Stage::Audit => "audit",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        [Stage::Prep, Stage::Model, Stage::Solve, Stage::Audit]
            .into_iter()
            .find(|st| st.as_str() == s)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockFailure {
    pub block_id: String,
    pub stage: Stage,
    pub message: String,
}

impl fmt::Display for BlockFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "block {} failed at {}: {}",
            self.block_id, self.stage, self.message
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BlockOutcome {
    Solved(BlockSolution),
    Failed(BlockFailure),
}

impl BlockOutcome {
    pub fn block_id(&self) -> &str {
        match self {
            BlockOutcome::Solved(s) => &s.block_id,
            BlockOutcome::Failed(f) => &f.block_id,
        }
    }

    pub fn solution(&self) -> Option<&BlockSolution> {
        match self {
            BlockOutcome::Solved(s) => Some(s),
            BlockOutcome::Failed(_) => None,
        }
    }
}

/// Aggregate statistics of one scenario over all analysed blocks.
///
/// Means per block divide by the number of analysed blocks
/// (`blocks_with + blocks_without`); failed blocks are not analysed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub q_min: Rate,
    pub r_delta: f64,
    pub total_doublets: usize,
    pub max_doublets_per_block: usize,
    pub mean_doublets_per_block: f64,
    /// Mean over blocks with doublets of their largest doublet rate.
    pub avg_max_doublet_rate: Rate,
    /// Mean over installed doublets.
    pub mean_doublet_rate: Rate,
    pub blocks_with: usize,
    pub blocks_without: usize,
    pub total_rate: Rate,
    pub max_block_rate: Rate,
    pub mean_block_rate: Rate,
}

/// Per-block figures the report is reduced from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockFigures {
    pub n_doublet: usize,
    pub q_block: Rate,
    pub max_doublet_rate: Rate,
}

impl From<&BlockSolution> for BlockFigures {
    fn from(s: &BlockSolution) -> Self {
        BlockFigures {
            n_doublet: s.n_doublet,
            q_block: s.q_block,
            max_doublet_rate: s.max_doublet_rate(),
        }
    }
}

impl ScenarioReport {
    /// Reduce per-block figures in the given order.
    pub fn aggregate(scenario: &ScenarioConfig, blocks: &[BlockFigures]) -> Self {
        let mut r = ScenarioReport {
            q_min: scenario.q_min,
            r_delta: scenario.r_delta,
            total_doublets: 0,
            max_doublets_per_block: 0,
            mean_doublets_per_block: 0.0,
            avg_max_doublet_rate: Rate::ZERO,
            mean_doublet_rate: Rate::ZERO,
            blocks_with: 0,
            blocks_without: 0,
            total_rate: Rate::ZERO,
            max_block_rate: Rate::ZERO,
            mean_block_rate: Rate::ZERO,
        };
        let mut sum_max = 0.0;
        for b in blocks {
            r.total_doublets += b.n_doublet;
            r.max_doublets_per_block = r.max_doublets_per_block.max(b.n_doublet);
            r.total_rate += b.q_block;
            if b.q_block > r.max_block_rate {
                r.max_block_rate = b.q_block;
            }
            if b.n_doublet > 0 {
                r.blocks_with += 1;
                sum_max += b.max_doublet_rate.m3_per_s();
            } else {
                r.blocks_without += 1;
            }
        }
        let analysed = blocks.len();
        if analysed > 0 {
            r.mean_doublets_per_block = r.total_doublets as f64 / analysed as f64;
            r.mean_block_rate = Rate::from_m3_per_s(r.total_rate.m3_per_s() / analysed as f64);
        }
        if r.blocks_with > 0 {
            r.avg_max_doublet_rate = Rate::from_m3_per_s(sum_max / r.blocks_with as f64);
        }
        if r.total_doublets > 0 {
            r.mean_doublet_rate = Rate::from_m3_per_s(r.total_rate.m3_per_s() / r.total_doublets as f64);
        }
        r
    }

    /// Broken arithmetic invariants, empty when the report is consistent.
    pub fn check(&self, analysed: usize) -> Vec<String> {
        let mut out = Vec::new();
        if self.blocks_with + self.blocks_without != analysed {
            out.push(format!(
                "blocks_with + blocks_without = {} but {analysed} blocks were analysed",
                self.blocks_with + self.blocks_without
            ));
        }
        let total = self.total_rate.m3_per_s();
        if self.max_block_rate.m3_per_s() > total * (1.0 + 1e-12) {
            out.push("max_block_rate exceeds total_rate".into());
        }
        let product = self.mean_doublet_rate.m3_per_s() * self.total_doublets as f64;
        if (product - total).abs() > 1e-6 * total.abs().max(1e-12) && total > 0.0 {
            out.push(format!(
                "mean_doublet_rate * total_doublets = {product:e} differs from total_rate {total:e}"
            ));
        }
        if self.total_doublets == 0 && total != 0.0 {
            out.push("rate without doublets".into());
        }
        out
    }
}

/// Result of one scenario: outcomes ordered by block id, and their report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRun {
    pub scenario: ScenarioConfig,
    pub outcomes: Vec<BlockOutcome>,
    pub report: ScenarioReport,
}

impl ScenarioRun {
    pub fn failures(&self) -> impl Iterator<Item = &BlockFailure> {
        self.outcomes.iter().filter_map(|o| match o {
            BlockOutcome::Failed(f) => Some(f),
            BlockOutcome::Solved(_) => None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunOptions {
    pub prep: PrepConfig,
    pub budget: Budget,
    /// Worker threads; 0 lets the pool pick one per core.
    pub workers: usize,
}

/// Candidates of every block, or the reason they could not be prepared.
pub type Prepared = Vec<Result<Candidates, BlockFailure>>;

/// Block id of a prepared entry.
pub fn prepared_id(p: &Result<Candidates, BlockFailure>) -> &str {
    match p {
        Ok(c) => &c.block_id,
        Err(f) => &f.block_id,
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, Error> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Pool(e.to_string()))
}

fn sorted(blocks: &[BlockGeometry]) -> Vec<&BlockGeometry> {
    let mut v: Vec<&BlockGeometry> = blocks.iter().collect();
    v.sort_by(|a, b| a.block_id.cmp(&b.block_id));
    v
}

/// Prepare the candidates of every block, ordered by block id.
pub fn prepare_blocks(
    blocks: &[BlockGeometry],
    field: &dyn FieldSampler,
    prep: &PrepConfig,
    workers: usize,
) -> Result<Prepared, Error> {
    prep.validate()?;
    let order = sorted(blocks);
    Ok(pool(workers)?.install(|| {
        order
            .par_iter()
            .map(|g| {
                adaptive_candidates(g, field, prep).map_err(|e| BlockFailure {
                    block_id: g.block_id.clone(),
                    stage: Stage::Prep,
                    message: e.to_string(),
                })
            })
            .collect()
    }))
}

/// Build, solve and audit the program of one prepared block.
pub fn solve_block(c: &Candidates, scenario: &ScenarioConfig, budget: &Budget) -> BlockOutcome {
    let fail = |stage, message: String| {
        BlockOutcome::Failed(BlockFailure {
            block_id: c.block_id.clone(),
            stage,
            message,
        })
    };
    if c.lines.is_empty() {
        return BlockOutcome::Solved(BlockSolution::empty(c.block_id.clone()));
    }
    let problem = match BlockProblem::new(c.block_id.clone(), c.lines.clone(), *scenario) {
        Ok(p) => p,
        Err(e) => return fail(Stage::Model, e.to_string()),
    };
    let inst = build_milp(&problem);
    let sol = match solve_milp(&inst, budget) {
        Ok(s) => s,
        Err(e) => return fail(Stage::Solve, e.to_string()),
    };
    if !sol.certificate.proven_optimal {
        log::warn!(
            "block {}: budget exhausted, gap {:.3e} after {} nodes",
            c.block_id,
            sol.certificate.gap,
            sol.node_count
        );
    }
    let violations = audit_solution(&sol, &problem);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return fail(Stage::Audit, list.join("; "));
    }
    BlockOutcome::Solved(sol)
}

/// Solve already prepared blocks under each scenario.
pub fn solve_prepared(
    prepared: &Prepared,
    scenarios: &[ScenarioConfig],
    budget: &Budget,
    workers: usize,
) -> Result<Vec<ScenarioRun>, Error> {
    for s in scenarios {
        s.validate()?;
    }
    let pool = pool(workers)?;
    let runs = scenarios
        .iter()
        .map(|scenario| {
            let outcomes: Vec<BlockOutcome> = pool.install(|| {
                prepared
                    .par_iter()
                    .map(|p| match p {
                        Ok(c) => solve_block(c, scenario, budget),
                        Err(f) => BlockOutcome::Failed(f.clone()),
                    })
                    .collect()
            });
            let figures: Vec<BlockFigures> = outcomes
                .iter()
                .filter_map(BlockOutcome::solution)
                .map(BlockFigures::from)
                .collect();
            let report = ScenarioReport::aggregate(scenario, &figures);
            ScenarioRun {
                scenario: *scenario,
                outcomes,
                report,
            }
        })
        .collect();
    Ok(runs)
}

/// Run one scenario over all blocks.
pub fn run_scenario(
    blocks: &[BlockGeometry],
    field: &dyn FieldSampler,
    scenario: &ScenarioConfig,
    opts: &RunOptions,
) -> Result<ScenarioRun, Error> {
    let mut runs = run_matrix(blocks, field, std::slice::from_ref(scenario), opts)?;
    Ok(runs.remove(0))
}

/// Run several scenarios, preparing each block only once.
pub fn run_matrix(
    blocks: &[BlockGeometry],
    field: &dyn FieldSampler,
    scenarios: &[ScenarioConfig],
    opts: &RunOptions,
) -> Result<Vec<ScenarioRun>, Error> {
    let prepared = prepare_blocks(blocks, field, &opts.prep, opts.workers)?;
    solve_prepared(&prepared, scenarios, &opts.budget, opts.workers)
}

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use super::lp::{LpProblem, LpStatus, Simplex};
use super::{BlockSolution, Budget, Certificate, InstalledDoublet, GAP_TOL, INTEGRALITY_TOL};
use crate::error::SolveError;
use crate::model::{Family, MilpInstance, Row, Sense, VarKind};
use crate::units::Rate;

/// Pruning is a little stricter than the reported gap tolerance so that
/// accepted solutions sit well inside it.
const PRUNE_REL: f64 = 1e-7;
const PRUNE_ABS: f64 = 1e-12;

/// Inequalities implied by the block program that tighten its relaxation.
///
/// * Pair caps: a selected pair runs at most at the smallest of its
///   drawdown, upconing and breakthrough limits (not at all below q_min).
///   Weighting the best cap reachable from each extraction (injection) well
///   by its selection variable bounds the line rate.
/// * Footprint caps: the footprint rows again, with big-M values taken from
///   those caps instead of q_max.
/// * Spacing cliques: lines that pairwise may not both host a doublet.
fn implied_rows(inst: &MilpInstance) -> Vec<Row> {
    let mut rows = Vec::new();
    let mut line_cap = vec![f64::INFINITY; inst.vars.len()];
    for lv in &inst.lines {
        let w = lv.wells.len();
        let mut by_ext = vec![0.0f64; w];
        let mut by_inj = vec![0.0f64; w];
        for pb in &lv.admissible {
            if pb.cap >= inst.q_min {
                by_ext[pb.ext] = by_ext[pb.ext].max(pb.cap);
                by_inj[pb.inj] = by_inj[pb.inj].max(pb.cap);
            }
        }
        line_cap[lv.q] = by_ext.iter().copied().fold(0.0, f64::max).min(inst.vars[lv.q].ub);
        if inst.vars[lv.q].ub <= 0.0 {
            continue;
        }
        for (role, caps) in [("ext", &by_ext), ("inj", &by_inj)] {
            let mut terms = vec![(lv.q, 1.0)];
            for (wv, &cap) in lv.wells.iter().zip(caps.iter()) {
                if cap > 0.0 {
                    terms.push((if role == "ext" { wv.ext } else { wv.inj }, -cap));
                }
            }
            rows.push(Row {
                family: Family::PairCap,
                label: format!("L{}.{role}", lv.line_id),
                terms,
                sense: Sense::Le,
                rhs: 0.0,
            });
        }
    }

    // q_k/α̃_k + q_p/α̃_p ≤ L + (A_k − L)⁺(1 − d_p) + (A_p − L)⁺(1 − d_k), A = cap/α̃
    for row in inst
        .rows
        .iter()
        .filter(|r| r.family == Family::ExternalBreakthrough)
    {
        let [(qk, ck), (qp, cp), (dk, m), (dp, _)] = row.terms[..] else {
            continue;
        };
        let limit = row.rhs - 2.0 * m;
        // differences at rounding level are zero
        let excess = |a: f64| if a - limit > 1e-9 * limit { a - limit } else { 0.0 };
        let slack_k = excess(line_cap[qk] * ck);
        let slack_p = excess(line_cap[qp] * cp);
        if !(slack_k.is_finite() && slack_p.is_finite()) || slack_k + slack_p >= 2.0 * m {
            continue;
        }
        rows.push(Row {
            family: Family::FootprintCap,
            label: row.label.clone(),
            terms: [(qk, ck), (qp, cp), (dk, slack_p), (dp, slack_k)]
                .into_iter()
                .filter(|&(_, c)| c != 0.0)
                .collect(),
            sense: Sense::Le,
            rhs: limit + slack_k + slack_p,
        });
    }

    let mut conflicts: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for row in inst.rows.iter().filter(|r| r.family == Family::DoubletSpacing) {
        if let [(a, _), (b, _)] = row.terms[..] {
            conflicts.entry(a).or_default().insert(b);
            conflicts.entry(b).or_default().insert(a);
        }
    }
    let mut cliques: BTreeSet<Vec<usize>> = BTreeSet::new();
    for (&a, adj) in &conflicts {
        for &b in adj.range(a + 1..) {
            let mut clique = vec![a, b];
            for &c in adj.range(b + 1..) {
                if clique.iter().all(|x| conflicts[x].contains(&c)) {
                    clique.push(c);
                }
            }
            if clique.len() > 2 {
                cliques.insert(clique);
            }
        }
    }
    for clique in cliques {
        rows.push(Row {
            family: Family::SpacingClique,
            label: clique
                .iter()
                .map(|d| format!("d{d}"))
                .collect::<Vec<_>>()
                .join("."),
            terms: clique.iter().map(|&d| (d, 1.0)).collect(),
            sense: Sense::Le,
            rhs: 1.0,
        });
    }
    rows
}

struct Node {
    id: u64,
    bound: f64,
    fixings: Vec<(usize, f64)>,
}

fn prune_level(incumbent: f64) -> f64 {
    incumbent + PRUNE_REL * incumbent.abs() + PRUNE_ABS
}

fn most_fractional(binaries: &[usize], x: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &j in binaries {
        let f = x[j] - x[j].floor();
        let score = f.min(1.0 - f);
        if score > INTEGRALITY_TOL && best.is_none_or(|(_, s)| score > s) {
            best = Some((j, score));
        }
    }
    best.map(|(j, _)| j)
}

fn reoptimize(sx: &mut Simplex) -> Result<Option<(f64, Vec<f64>)>, SolveError> {
    match sx.optimize()? {
        LpStatus::Optimal => {
            let x = sx.primal();
            Ok(Some((sx.objective(&x), x)))
        }
        LpStatus::Infeasible => Ok(None),
        LpStatus::Unbounded => Err(SolveError::Malformed("relaxation is unbounded".into())),
    }
}

/// Solve a block program to proven optimality within `budget`.
///
/// Branches on the most fractional line binary, then on the most fractional
/// well binary (lowest index on ties), dives into the `= 1` child and
/// backtracks to the open node with the best bound.
/// Runs are deterministic for a given instance as long as the time budget
/// is not hit.
pub fn solve_milp(inst: &MilpInstance, budget: &Budget) -> Result<BlockSolution, SolveError> {
    let start = Instant::now();
    let binaries: Vec<usize> = inst.binaries().collect();
    let line_binaries: Vec<usize> = inst.lines.iter().map(|l| l.d).collect();
    let problem = LpProblem::new(inst, &implied_rows(inst))?;

    let zero = vec![0.0; inst.vars.len()];
    let (mut inc_value, mut inc_x) = if inst.max_violation(&zero) <= 1e-12 {
        (0.0, Some(zero))
    } else {
        (f64::NEG_INFINITY, None)
    };

    // one working tableau follows the search; every node only changes
    // binary bounds, which keeps it dual feasible
    let mut work = Simplex::new(&problem);
    let mut node_count: u64 = 1;
    let Some((root_z, root_x)) = reoptimize(&mut work)? else {
        return Err(SolveError::Infeasible);
    };
    let root_snapshot = work.clone();
    let refresh_after = 20 * (inst.vars.len() + inst.rows.len());

    let mut open: Vec<Node> = Vec::new();
    let mut next_id: u64 = 1;
    let mut current = Some((Vec::new(), root_z, root_x));
    let mut pending_bound = f64::NEG_INFINITY;

    loop {
        if let Some((fixings, z, x)) = current.take() {
            if z > prune_level(inc_value) {
                match most_fractional(&line_binaries, &x).or_else(|| most_fractional(&binaries, &x)) {
                    None => {
                        if let Some((pz, px)) = polish(&mut work, inst, &binaries, &x)? {
                            if pz > prune_level(inc_value) {
                                inc_value = pz;
                                inc_x = Some(px);
                            }
                        }
                    }
                    Some(j) => {
                        let mut down = fixings.clone();
                        down.push((j, 0.0));
                        open.push(Node {
                            id: next_id,
                            bound: z,
                            fixings: down,
                        });
                        next_id += 1;
                        if out_of_budget(budget, node_count, start) {
                            pending_bound = z;
                            break;
                        }
                        let mut up = fixings;
                        up.push((j, 1.0));
                        work.fix(j, 1.0);
                        node_count += 1;
                        if let Some((cz, cx)) = reoptimize(&mut work)? {
                            current = Some((up, cz.min(z), cx));
                        }
                        continue;
                    }
                }
            }
        }

        let level = prune_level(inc_value);
        open.retain(|n| n.bound > level);
        let Some(pos) = open
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.bound.total_cmp(&b.bound).then(b.id.cmp(&a.id)))
            .map(|(i, _)| i)
        else {
            break;
        };
        if out_of_budget(budget, node_count, start) {
            break;
        }
        let node = open.swap_remove(pos);
        if work.pivots_since_reset() > refresh_after {
            work = root_snapshot.clone();
        }
        let mut target: Vec<Option<f64>> = vec![None; inst.vars.len()];
        for &(j, v) in &node.fixings {
            target[j] = Some(v);
        }
        for &j in &binaries {
            let var = &inst.vars[j];
            match target[j] {
                Some(v) => work.set_bounds(j, v, v),
                None => work.set_bounds(j, var.lb, var.ub),
            }
        }
        node_count += 1;
        if let Some((cz, cx)) = reoptimize(&mut work)? {
            current = Some((node.fixings, cz.min(node.bound), cx));
        }
    }

    let best_open = open.iter().map(|n| n.bound).fold(pending_bound, f64::max);
    let upper = best_open.max(inc_value);
    let gap = if upper <= prune_level(inc_value) {
        0.0
    } else {
        (upper - inc_value) / upper.abs().max(1e-12)
    };
    let x = inc_x.ok_or(SolveError::Infeasible)?;
    let mut sol = extract(inst, &x);
    sol.certificate = Certificate {
        proven_optimal: gap <= GAP_TOL,
        gap,
    };
    sol.node_count = node_count;
    sol.solve_time = start.elapsed().as_secs_f64();
    Ok(sol)
}

fn out_of_budget(budget: &Budget, nodes: u64, start: Instant) -> bool {
    nodes >= budget.max_nodes || start.elapsed() >= budget.max_time
}

/// Fix every binary to its rounded value and re-solve for clean rates.
fn polish(
    sx: &mut Simplex,
    inst: &MilpInstance,
    binaries: &[usize],
    x: &[f64],
) -> Result<Option<(f64, Vec<f64>)>, SolveError> {
    for &j in binaries {
        sx.fix(j, x[j].round());
    }
    let Some((z, mut px)) = reoptimize(sx)? else {
        return Ok(None);
    };
    for &j in binaries {
        px[j] = px[j].round();
    }
    for (v, var) in px.iter_mut().zip(&inst.vars) {
        if var.kind == VarKind::Continuous {
            *v = v.clamp(var.lb, var.ub);
        }
    }
    Ok(Some((z, px)))
}

fn extract(inst: &MilpInstance, x: &[f64]) -> BlockSolution {
    let mut installed = Vec::new();
    for lv in &inst.lines {
        if x[lv.d] < 0.5 {
            continue;
        }
        let ext = lv.wells.iter().find(|w| x[w.ext] > 0.5);
        let inj = lv.wells.iter().find(|w| x[w.inj] > 0.5);
        if let (Some(e), Some(i)) = (ext, inj) {
            installed.push(InstalledDoublet {
                line_id: lv.line_id,
                ext_well_id: e.well_id,
                inj_well_id: i.well_id,
                q: Rate::from_m3_per_s(x[lv.q]),
            });
        }
    }
    installed.sort_by_key(|d| d.line_id);
    let q_block = installed.iter().map(|d| d.q).sum();
    BlockSolution {
        block_id: inst.block_id.clone(),
        n_doublet: installed.len(),
        installed,
        q_block,
        certificate: Certificate {
            proven_optimal: false,
            gap: f64::INFINITY,
        },
        node_count: 0,
        solve_time: 0.0,
    }
}

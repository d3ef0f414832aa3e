//! Brute-force reference optimum for small blocks.
//!
//! Every combination of per-line choices (nothing, or one admissible
//! extraction/injection pair) is tried; the rates of each combination come
//! from an exact vertex enumeration of the remaining linear program. Works
//! on [`BlockProblem`] directly and never touches the assembled program.

use thiserror::Error;

use crate::model::BlockProblem;

/// Hard ceiling on the number of combinations.
pub const MAX_COMBINATIONS: f64 = 1e7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationBound {
    pub max_lines: usize,
    pub max_wells_per_line: usize,
}

impl Default for EnumerationBound {
    fn default() -> Self {
        EnumerationBound {
            max_lines: 3,
            max_wells_per_line: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("instance too large for enumeration: {0}")]
    TooLarge(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleChoice {
    pub line_id: usize,
    pub ext_well_id: usize,
    pub inj_well_id: usize,
    /// m³/s
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    /// m³/s
    pub objective: f64,
    pub installed: Vec<OracleChoice>,
}

struct PairOption {
    ext: usize,
    inj: usize,
    cap: f64,
}

/// Exact optimum of `p` by enumeration.
pub fn brute_force_optimum(p: &BlockProblem, bound: EnumerationBound) -> Result<OracleSolution, OracleError> {
    enumerate(p, bound, true)
}

/// Optimum with the footprint coupling between lines ignored; an upper
/// bound on [`brute_force_optimum`].
pub fn brute_force_uncoupled(
    p: &BlockProblem,
    bound: EnumerationBound,
) -> Result<OracleSolution, OracleError> {
    enumerate(p, bound, false)
}

fn enumerate(
    p: &BlockProblem,
    bound: EnumerationBound,
    coupled: bool,
) -> Result<OracleSolution, OracleError> {
    if p.lines.len() > bound.max_lines {
        return Err(OracleError::TooLarge(format!(
            "{} lines > {}",
            p.lines.len(),
            bound.max_lines
        )));
    }
    if let Some(l) = p.lines.iter().find(|l| l.wells.len() > bound.max_wells_per_line) {
        return Err(OracleError::TooLarge(format!(
            "line {} has {} wells > {}",
            l.line_id,
            l.wells.len(),
            bound.max_wells_per_line
        )));
    }
    let sc = &p.scenario;
    let q_min = sc.q_min.m3_per_s();
    let n = p.lines.len();
    let coupled_pair = |k: usize, o: usize| {
        let dist = (p.lines[k].t - p.lines[o].t).abs();
        dist < sc.r_delta * (p.lines[k].chi + p.lines[o].chi) / 2.0
    };
    let too_close = |k: usize, o: usize| (p.lines[k].t - p.lines[o].t).abs() < sc.r_delta * sc.delta_min;

    let mut options: Vec<Vec<PairOption>> = Vec::with_capacity(n);
    let mut size = 1.0f64;
    for (k, line) in p.lines.iter().enumerate() {
        let mut opts = Vec::new();
        // a zero median α with a footprint neighbour leaves no room for any rate
        let blocked = line.alpha_med <= 0.0 && (0..n).any(|o| o != k && coupled_pair(k, o));
        let q_max = {
            let d = line.wells.iter().map(|w| w.limits.q_d).fold(f64::MIN, f64::max);
            let f = line.wells.iter().map(|w| w.limits.q_f).fold(f64::MIN, f64::max);
            d.min(f)
        };
        for (j, e) in line.wells.iter().enumerate() {
            for (i, w) in line.wells.iter().enumerate() {
                let dist = (w.s - e.s).abs();
                if !(w.s > e.s && dist >= sc.delta_min) {
                    continue;
                }
                let alpha = 0.5 * (e.limits.alpha + w.limits.alpha);
                let cap = q_max.min(e.limits.q_d).min(w.limits.q_f).min(alpha * dist);
                if !blocked && cap >= q_min {
                    opts.push(PairOption { ext: j, inj: i, cap });
                }
            }
        }
        let admissible = line
            .wells
            .iter()
            .flat_map(|e| line.wells.iter().map(move |w| (e, w)))
            .filter(|(e, w)| w.s > e.s && (w.s - e.s).abs() >= sc.delta_min)
            .count();
        size *= 1.0 + admissible as f64;
        options.push(opts);
    }
    if size > MAX_COMBINATIONS {
        return Err(OracleError::TooLarge(format!("{size} combinations")));
    }

    let mut best = OracleSolution {
        objective: 0.0,
        installed: Vec::new(),
    };
    let mut choice: Vec<Option<usize>> = vec![None; n];
    let mut ctx = Search {
        p,
        options: &options,
        q_min,
        coupled,
        coupled_pair: &coupled_pair,
        too_close: &too_close,
        best: &mut best,
    };
    ctx.descend(0, &mut choice);
    Ok(best)
}

struct Search<'a> {
    p: &'a BlockProblem,
    options: &'a [Vec<PairOption>],
    q_min: f64,
    coupled: bool,
    coupled_pair: &'a dyn Fn(usize, usize) -> bool,
    too_close: &'a dyn Fn(usize, usize) -> bool,
    best: &'a mut OracleSolution,
}

impl Search<'_> {
    fn descend(&mut self, k: usize, choice: &mut Vec<Option<usize>>) {
        if k == choice.len() {
            self.evaluate(choice);
            return;
        }
        choice[k] = None;
        self.descend(k + 1, choice);
        if (0..k).any(|o| choice[o].is_some() && (self.too_close)(k, o)) {
            return;
        }
        for idx in 0..self.options[k].len() {
            choice[k] = Some(idx);
            self.descend(k + 1, choice);
        }
        choice[k] = None;
    }

    fn evaluate(&mut self, choice: &[Option<usize>]) {
        let lines: Vec<usize> = (0..choice.len()).filter(|&k| choice[k].is_some()).collect();
        if lines.is_empty() {
            return;
        }
        let upper: Vec<f64> = lines
            .iter()
            .map(|&k| self.options[k][choice[k].unwrap()].cap)
            .collect();
        // rows a·q ≤ b: bounds first, then couplings
        let nv = lines.len();
        let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
        for v in 0..nv {
            let mut up = vec![0.0; nv];
            up[v] = 1.0;
            rows.push((up, upper[v]));
            let mut lo = vec![0.0; nv];
            lo[v] = -1.0;
            rows.push((lo, -self.q_min));
        }
        if self.coupled {
            for a in 0..nv {
                for b in a + 1..nv {
                    let (k, o) = (lines[a], lines[b]);
                    if !(self.coupled_pair)(k, o) {
                        continue;
                    }
                    let (lk, lo) = (&self.p.lines[k], &self.p.lines[o]);
                    let mut row = vec![0.0; nv];
                    row[a] = 1.0 / lk.alpha_med;
                    row[b] = 1.0 / lo.alpha_med;
                    let rhs = 2.0 / self.p.scenario.r_delta * (lk.t - lo.t).abs();
                    rows.push((row, rhs));
                }
            }
        }
        let Some((value, q)) = best_vertex(nv, &rows) else {
            return;
        };
        if value > self.best.objective {
            self.best.objective = value;
            self.best.installed = lines
                .iter()
                .zip(q)
                .map(|(&k, q)| {
                    let o = &self.options[k][choice[k].unwrap()];
                    let line = &self.p.lines[k];
                    OracleChoice {
                        line_id: line.line_id,
                        ext_well_id: line.wells[o.ext].well_id,
                        inj_well_id: line.wells[o.inj].well_id,
                        q,
                    }
                })
                .collect();
        }
    }
}

/// Maximise Σq over the polytope `rows` by checking every vertex.
fn best_vertex(nv: usize, rows: &[(Vec<f64>, f64)]) -> Option<(f64, Vec<f64>)> {
    let feasible = |q: &[f64]| {
        rows.iter().all(|(a, b)| {
            let lhs: f64 = a.iter().zip(q).map(|(x, y)| x * y).sum();
            let scale = a.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1.0);
            lhs <= b + 1e-12 * scale.max(b.abs())
        })
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut subset: Vec<usize> = (0..nv).collect();
    loop {
        let a: Vec<Vec<f64>> = subset.iter().map(|&r| rows[r].0.clone()).collect();
        let b: Vec<f64> = subset.iter().map(|&r| rows[r].1).collect();
        if let Some(q) = gauss(a, b) {
            if feasible(&q) {
                let value: f64 = q.iter().sum();
                if best.as_ref().is_none_or(|(v, _)| value > *v) {
                    best = Some((value, q));
                }
            }
        }
        if !next_subset(&mut subset, rows.len()) {
            break;
        }
    }
    best
}

fn next_subset(s: &mut [usize], n: usize) -> bool {
    let k = s.len();
    for i in (0..k).rev() {
        if s[i] < n - k + i {
            s[i] += 1;
            for j in i + 1..k {
                s[j] = s[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn gauss(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        let scale = a[piv].iter().map(|v| v.abs()).fold(0.0, f64::max);
        if a[piv][col].abs() <= 1e-12 * scale || a[piv][col] == 0.0 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    let pivot_row = a[col].clone();
                    for (x, p) in a[r][col..].iter_mut().zip(&pivot_row[col..]) {
                        *x -= f * p;
                    }
                    b[r] -= f * b[col];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

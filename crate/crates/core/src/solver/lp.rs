//! Bounded-variable dual simplex on a dense condensed tableau.
//!
//! Internally the problem is `min cost·x` over `A x + s = b` with box bounds
//! on the structural columns and `s ≥ 0` (inequality) or `s = 0` (equality)
//! on the slacks. The slack basis is dual feasible once every structural
//! column sits at the bound its cost prefers, so branch-and-bound can change
//! bounds and re-optimise without a phase one.

use crate::error::SolveError;
use crate::model::{MilpInstance, Row, Sense};

const PRIMAL_TOL: f64 = 1e-10;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
pub(crate) const VERIFY_TOL: f64 = 1e-9;
/// Stand-in for infinite structural bounds.
const BIG: f64 = 1e12;
/// Relative contribution below which a coefficient is dropped.
const NEGLIGIBLE: f64 = 1e-13;
/// Consecutive degenerate pivots before switching to Bland's rule.
const DEGENERATE_SWITCH: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Scaled dense copy of an instance's rows and bounds.
#[derive(Debug, Clone)]
pub(crate) struct LpProblem {
    n: usize,
    m: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    /// Minimisation costs of the structural columns, scaled.
    cost: Vec<f64>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    slack_ub: Vec<f64>,
    col_scale: Vec<f64>,
    /// Objective of the instance (maximisation), unscaled.
    objective: Vec<f64>,
    free_bound: Vec<bool>,
}

fn pow2_near_inverse(min: f64, max: f64) -> f64 {
    if max == 0.0 {
        return 1.0;
    }
    let e = -(0.5 * (min.log2() + max.log2())).round();
    2f64.powi(e.clamp(-60.0, 60.0) as i32)
}

impl LpProblem {
    pub(crate) fn new(inst: &MilpInstance, extra: &[Row]) -> Result<Self, SolveError> {
        let n = inst.vars.len();
        if inst.objective.len() != n {
            return Err(SolveError::Malformed(
                "objective length differs from variable count".into(),
            ));
        }
        let rows: Vec<&Row> = inst.rows.iter().chain(extra).collect();
        let m = rows.len();
        let mut a = vec![0.0; m * n];
        let mut b = vec![0.0; m];
        let mut slack_ub = vec![0.0; m];
        for (i, row) in rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(SolveError::Malformed(format!(
                    "row {} has a non-finite rhs",
                    row.label
                )));
            }
            for &(j, coef) in &row.terms {
                if j >= n || !coef.is_finite() {
                    return Err(SolveError::Malformed(format!(
                        "row {} {} references variable {j} with coefficient {coef}",
                        row.family, row.label
                    )));
                }
                a[i * n + j] += coef;
            }
            b[i] = row.rhs;
            slack_ub[i] = match row.sense {
                Sense::Le => f64::INFINITY,
                Sense::Eq => 0.0,
            };
        }
        let mut lb = Vec::with_capacity(n);
        let mut ub = Vec::with_capacity(n);
        let mut free_bound = Vec::with_capacity(n);
        for v in &inst.vars {
            if v.lb.is_nan() || v.ub.is_nan() || v.lb > v.ub {
                return Err(SolveError::Malformed(format!(
                    "variable {} has bounds [{}, {}]",
                    v.name, v.lb, v.ub
                )));
            }
            free_bound.push(!v.lb.is_finite() || !v.ub.is_finite());
            lb.push(v.lb.max(-BIG));
            ub.push(v.ub.min(BIG));
        }

        // entries whose largest possible contribution is rounding noise
        // next to the rest of the row would wreck the scaling
        for i in 0..m {
            let reach = |j: usize, v: f64| v.abs() * lb[j].abs().max(ub[j].abs()).max(1.0);
            let top = (0..n).map(|j| reach(j, a[i * n + j])).fold(0.0, f64::max);
            for j in 0..n {
                if reach(j, a[i * n + j]) <= NEGLIGIBLE * top {
                    a[i * n + j] = 0.0;
                }
            }
        }
        let mut row_scale = vec![1.0; m];
        for i in 0..m {
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for &v in &a[i * n..(i + 1) * n] {
                if v != 0.0 {
                    lo = lo.min(v.abs());
                    hi = hi.max(v.abs());
                }
            }
            row_scale[i] = pow2_near_inverse(lo, hi);
            for v in &mut a[i * n..(i + 1) * n] {
                *v *= row_scale[i];
            }
            b[i] *= row_scale[i];
        }
        let mut col_scale = vec![1.0; n];
        for j in 0..n {
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for i in 0..m {
                let v = a[i * n + j].abs();
                if v != 0.0 {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            col_scale[j] = pow2_near_inverse(lo, hi);
            for i in 0..m {
                a[i * n + j] *= col_scale[j];
            }
            lb[j] /= col_scale[j];
            ub[j] /= col_scale[j];
        }
        let cost = (0..n).map(|j| -inst.objective[j] * col_scale[j]).collect();
        Ok(LpProblem {
            n,
            m,
            a,
            b,
            cost,
            lb,
            ub,
            slack_ub,
            col_scale,
            objective: inst.objective.clone(),
            free_bound,
        })
    }
}

#[derive(Debug, Clone, Copy)]
enum Loc {
    Basic(usize),
    Nonbasic(usize),
}

/// Simplex state over one [`LpProblem`]; cheap enough to clone per node.
#[derive(Debug, Clone)]
pub(crate) struct Simplex<'a> {
    p: &'a LpProblem,
    tab: Vec<f64>,
    xb: Vec<f64>,
    d: Vec<f64>,
    basic: Vec<usize>,
    nonbasic: Vec<usize>,
    loc: Vec<Loc>,
    at_upper: Vec<bool>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    bland: bool,
    pivots: usize,
}

impl<'a> Simplex<'a> {
    pub(crate) fn new(p: &'a LpProblem) -> Self {
        let mut lb = p.lb.clone();
        let mut ub = p.ub.clone();
        lb.extend(std::iter::repeat_n(0.0, p.m));
        ub.extend_from_slice(&p.slack_ub);
        let mut s = Simplex {
            p,
            tab: Vec::new(),
            xb: Vec::new(),
            d: Vec::new(),
            basic: Vec::new(),
            nonbasic: Vec::new(),
            loc: Vec::new(),
            at_upper: Vec::new(),
            lb,
            ub,
            bland: false,
            pivots: 0,
        };
        s.reset(false);
        s
    }

    /// Rebuild the slack basis from the original data, keeping current bounds.
    fn reset(&mut self, bland: bool) {
        let (n, m) = (self.p.n, self.p.m);
        self.bland = bland;
        self.pivots = 0;
        self.tab = self.p.a.clone();
        self.basic = (n..n + m).collect();
        self.nonbasic = (0..n).collect();
        self.loc = (0..n).map(Loc::Nonbasic).chain((0..m).map(Loc::Basic)).collect();
        self.d = self.p.cost.clone();
        self.at_upper = vec![false; n + m];
        for j in 0..n {
            self.at_upper[j] = self.lb[j] < self.ub[j] && self.d[j] < 0.0;
        }
        self.xb = (0..m)
            .map(|i| {
                let row = &self.tab[i * n..(i + 1) * n];
                self.p.b[i] - (0..n).map(|j| row[j] * self.value(j)).sum::<f64>()
            })
            .collect();
    }

    fn value(&self, v: usize) -> f64 {
        if self.at_upper[v] {
            self.ub[v]
        } else {
            self.lb[v]
        }
    }

    /// Change the bounds of structural `v` (unscaled values).
    pub(crate) fn set_bounds(&mut self, v: usize, lo: f64, hi: f64) {
        let s = self.p.col_scale[v];
        let (lo, hi) = ((lo / s).max(-BIG / s), (hi / s).min(BIG / s));
        let Loc::Nonbasic(j) = self.loc[v] else {
            self.lb[v] = lo;
            self.ub[v] = hi;
            return;
        };
        let old = self.value(v);
        self.lb[v] = lo;
        self.ub[v] = hi;
        if lo == hi {
            self.at_upper[v] = false;
        } else if self.d[j] < 0.0 {
            self.at_upper[v] = true;
        } else if self.d[j] > 0.0 {
            self.at_upper[v] = false;
        }
        let delta = self.value(v) - old;
        if delta != 0.0 {
            let n = self.p.n;
            for i in 0..self.p.m {
                self.xb[i] -= self.tab[i * n + j] * delta;
            }
        }
    }

    /// Pivots applied since the tableau was last built from the original data.
    pub(crate) fn pivots_since_reset(&self) -> usize {
        self.pivots
    }

    pub(crate) fn fix(&mut self, v: usize, value: f64) {
        self.set_bounds(v, value, value);
    }

    fn leaving_row(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &x) in self.xb.iter().enumerate() {
            let v = self.basic[i];
            let infeas = (self.lb[v] - x).max(x - self.ub[v]);
            if infeas <= PRIMAL_TOL * (1.0 + x.abs()) {
                continue;
            }
            best = match best {
                None => Some((i, infeas)),
                Some((bi, bv)) => {
                    let better = if self.bland {
                        v < self.basic[bi]
                    } else {
                        infeas > bv
                    };
                    if better {
                        Some((i, infeas))
                    } else {
                        Some((bi, bv))
                    }
                }
            };
        }
        best.map(|(i, _)| i)
    }

    /// Entering column for row `r`; `up` when the leaving variable must rise.
    fn entering(&self, r: usize, up: bool) -> Option<usize> {
        let n = self.p.n;
        let row = &self.tab[r * n..(r + 1) * n];
        let eligible = |j: usize| -> Option<(f64, f64)> {
            let v = self.nonbasic[j];
            if self.lb[v] == self.ub[v] {
                return None;
            }
            let a = row[j];
            if a.abs() <= PIVOT_TOL {
                return None;
            }
            let ok = if self.at_upper[v] {
                (a > 0.0) == up
            } else {
                (a < 0.0) == up
            };
            if !ok {
                return None;
            }
            let dj = if self.at_upper[v] {
                (-self.d[j]).max(0.0)
            } else {
                self.d[j].max(0.0)
            };
            Some((dj, a.abs()))
        };
        if self.bland {
            let mut best: Option<(usize, f64)> = None;
            for j in 0..n {
                let Some((dj, a)) = eligible(j) else { continue };
                let ratio = dj / a;
                best = match best {
                    Some((bj, br)) if br < ratio || (br == ratio && self.nonbasic[bj] < self.nonbasic[j]) => {
                        Some((bj, br))
                    }
                    _ => Some((j, ratio)),
                };
            }
            return best.map(|(j, _)| j);
        }
        // Harris two-pass ratio test
        let mut bound = f64::INFINITY;
        for j in 0..n {
            if let Some((dj, a)) = eligible(j) {
                bound = bound.min((dj + DUAL_TOL) / a);
            }
        }
        if bound == f64::INFINITY {
            return None;
        }
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            let Some((dj, a)) = eligible(j) else { continue };
            if dj / a <= bound && best.is_none_or(|(_, ba)| a > ba) {
                best = Some((j, a));
            }
        }
        best.map(|(j, _)| j)
    }

    fn pivot(&mut self, r: usize, q: usize, target: f64) {
        let n = self.p.n;
        let m = self.p.m;
        let piv = self.tab[r * n + q];
        let enter = self.nonbasic[q];
        let leave = self.basic[r];
        let theta = (self.xb[r] - target) / piv;
        for i in 0..m {
            self.xb[i] -= self.tab[i * n + q] * theta;
        }
        self.xb[r] = self.value(enter) + theta;

        for v in &mut self.tab[r * n..(r + 1) * n] {
            *v /= piv;
        }
        self.tab[r * n + q] = 1.0 / piv;
        let (head, rest) = self.tab.split_at_mut(r * n);
        let (pivot_row, tail) = rest.split_at_mut(n);
        for row in head.chunks_exact_mut(n).chain(tail.chunks_exact_mut(n)) {
            let f = row[q];
            if f == 0.0 {
                continue;
            }
            for (x, &p) in row.iter_mut().zip(pivot_row.iter()) {
                *x -= f * p;
            }
            row[q] = -f / piv;
        }
        let dq = self.d[q];
        if dq != 0.0 {
            for (dj, &p) in self.d.iter_mut().zip(pivot_row.iter()) {
                *dj -= dq * p;
            }
        }
        self.d[q] = -dq / piv;

        self.pivots += 1;
        self.basic[r] = enter;
        self.nonbasic[q] = leave;
        self.loc[enter] = Loc::Basic(r);
        self.loc[leave] = Loc::Nonbasic(q);
        self.at_upper[leave] = self.lb[leave] < self.ub[leave] && target == self.ub[leave];
    }

    fn run(&mut self) -> Result<LpStatus, SolveError> {
        let limit = 50 * (self.p.m + self.p.n) + 1000;
        let mut iters = 0;
        let mut degenerate = 0;
        loop {
            let Some(r) = self.leaving_row() else {
                return Ok(LpStatus::Optimal);
            };
            let v = self.basic[r];
            let x = self.xb[r];
            let (target, up) = if x < self.lb[v] {
                (self.lb[v], true)
            } else {
                (self.ub[v], false)
            };
            let Some(q) = self.entering(r, up) else {
                return Ok(LpStatus::Infeasible);
            };
            let step = self.d[q].abs() / self.tab[r * self.p.n + q].abs();
            if step <= 1e-12 {
                degenerate += 1;
                if degenerate > DEGENERATE_SWITCH {
                    self.bland = true;
                }
            } else {
                degenerate = 0;
            }
            self.pivot(r, q, target);
            iters += 1;
            if iters > limit {
                if self.bland {
                    return Err(SolveError::NumericalFailure("simplex iteration limit".into()));
                }
                self.bland = true;
                iters = 0;
            }
        }
    }

    fn scaled_primal(&self) -> Vec<f64> {
        (0..self.p.n)
            .map(|v| {
                let x = match self.loc[v] {
                    Loc::Basic(i) => self.xb[i],
                    Loc::Nonbasic(_) => self.value(v),
                };
                x.clamp(self.lb[v], self.ub[v])
            })
            .collect()
    }

    /// Largest scaled row residual of the current primal point, relative to
    /// the magnitude of the terms involved.
    fn residual(&self, xs: &[f64]) -> f64 {
        let n = self.p.n;
        (0..self.p.m)
            .map(|i| {
                let row = &self.p.a[i * n..(i + 1) * n];
                let (mut lhs, mut mag) = (0.0, self.p.b[i].abs());
                for (a, x) in row.iter().zip(xs) {
                    lhs += a * x;
                    mag = mag.max((a * x).abs());
                }
                let s = lhs - self.p.b[i];
                let excess = if self.p.slack_ub[i] == 0.0 {
                    s.abs()
                } else {
                    s.max(0.0)
                };
                excess / (1.0 + mag)
            })
            .fold(0.0, f64::max)
    }

    /// Optimise from the current state; on a failed accuracy check retry
    /// once from a fresh slack basis under Bland's rule.
    pub(crate) fn optimize(&mut self) -> Result<LpStatus, SolveError> {
        let mut last = String::new();
        for attempt in 0..2 {
            match self.run() {
                Ok(LpStatus::Optimal) => {
                    let res = self.residual(&self.scaled_primal());
                    if res <= VERIFY_TOL {
                        return Ok(self.classify());
                    }
                    last = format!("row residual {res:e} after optimisation");
                }
                Ok(status) => return Ok(status),
                Err(e) => last = e.to_string(),
            }
            if attempt == 0 {
                self.reset(true);
            }
        }
        Err(SolveError::NumericalFailure(last))
    }

    fn classify(&self) -> LpStatus {
        let xs = self.scaled_primal();
        let hits_big =
            (0..self.p.n).any(|j| self.p.free_bound[j] && (xs[j] * self.p.col_scale[j]).abs() >= BIG / 2.0);
        if hits_big {
            LpStatus::Unbounded
        } else {
            LpStatus::Optimal
        }
    }

    /// Primal values in the instance's units.
    pub(crate) fn primal(&self) -> Vec<f64> {
        self.scaled_primal()
            .into_iter()
            .zip(&self.p.col_scale)
            .map(|(x, s)| x * s)
            .collect()
    }

    pub(crate) fn objective(&self, x: &[f64]) -> f64 {
        self.p.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Family, VarKind, Variable};

    fn var(name: &str, lb: f64, ub: f64) -> Variable {
        Variable {
            name: name.into(),
            kind: VarKind::Continuous,
            lb,
            ub,
        }
    }

    fn row(terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> Row {
        Row {
            family: Family::Operation,
            label: "r".into(),
            terms,
            sense,
            rhs,
        }
    }

    fn inst(vars: Vec<Variable>, objective: Vec<f64>, rows: Vec<Row>) -> MilpInstance {
        MilpInstance {
            block_id: "lp".into(),
            vars,
            objective,
            rows,
            lines: vec![],
            q_min: 0.0,
            warnings: vec![],
        }
    }

    fn solve(i: &MilpInstance) -> (LpStatus, Vec<f64>, f64) {
        let p = LpProblem::new(i, &[]).unwrap();
        let mut s = Simplex::new(&p);
        let st = s.optimize().unwrap();
        let x = s.primal();
        let z = s.objective(&x);
        (st, x, z)
    }

    #[test]
    fn textbook_maximisation() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), 36
        let i = inst(
            vec![var("x", 0.0, 100.0), var("y", 0.0, 100.0)],
            vec![3.0, 5.0],
            vec![
                row(vec![(0, 1.0)], Sense::Le, 4.0),
                row(vec![(1, 2.0)], Sense::Le, 12.0),
                row(vec![(0, 3.0), (1, 2.0)], Sense::Le, 18.0),
            ],
        );
        let (st, x, z) = solve(&i);
        assert_eq!(st, LpStatus::Optimal);
        assert!((z - 36.0).abs() < 1e-9);
        assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_infeasibility() {
        let i = inst(
            vec![var("x", 0.0, 10.0), var("y", 0.0, 10.0)],
            vec![1.0, 1.0],
            vec![
                row(vec![(0, 1.0), (1, -1.0)], Sense::Eq, 1.0),
                row(vec![(0, 1.0), (1, 1.0)], Sense::Le, 5.0),
            ],
        );
        let (st, x, z) = solve(&i);
        assert_eq!(st, LpStatus::Optimal);
        assert!((z - 5.0).abs() < 1e-9);
        assert!((x[0] - x[1] - 1.0).abs() < 1e-9);

        let bad = inst(
            vec![var("x", 0.0, 1.0)],
            vec![1.0],
            vec![row(vec![(0, -1.0)], Sense::Le, -2.0)],
        );
        assert_eq!(solve(&bad).0, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_detected_through_artificial_bound() {
        let i = inst(
            vec![var("x", 0.0, f64::INFINITY), var("y", 0.0, 1.0)],
            vec![1.0, 0.0],
            vec![row(vec![(0, -1.0), (1, 1.0)], Sense::Le, 1.0)],
        );
        assert_eq!(solve(&i).0, LpStatus::Unbounded);
    }

    #[test]
    fn badly_scaled_rows() {
        // rates ~1e-3 mixed with coefficients ~1e4
        let i = inst(
            vec![var("q1", 0.0, 0.02), var("q2", 0.0, 0.02)],
            vec![1.0, 1.0],
            vec![row(vec![(0, 2000.0), (1, 4000.0)], Sense::Le, 30.0)],
        );
        let (st, x, z) = solve(&i);
        assert_eq!(st, LpStatus::Optimal);
        assert!((x[0] - 0.015).abs() < 1e-12);
        assert!((z - 0.015).abs() < 1e-12);
    }

    #[test]
    fn rounding_noise_coefficient_is_ignored() {
        // the 2e-15 entry on a binary fixed at zero must not drive the scaling
        let i = inst(
            vec![
                var("q0", 0.0, 0.063),
                var("q1", 0.0, 0.0),
                var("q2", 1e-3, 1.3485e-3),
                var("d", 0.0, 0.0),
            ],
            vec![1.0, 1.0, 1.0, 0.0],
            vec![
                row(vec![(0, 4673.2), (2, 11123.4)], Sense::Le, 30.0),
                row(vec![(1, 10426.2), (2, 11123.4), (3, 1.8e-15)], Sense::Le, 15.0),
            ],
        );
        let p = LpProblem::new(&i, &[]).unwrap();
        assert_eq!(p.a[p.n + 3], 0.0);
        let (st, x, z) = solve(&i);
        assert_eq!(st, LpStatus::Optimal);
        assert!((x[2] - 1e-3).abs() < 1e-12);
        assert!((z - (1e-3 + (30.0 - 11.1234) / 4673.2)).abs() < 1e-12);
    }

    #[test]
    fn bound_changes_after_optimum() {
        let i = inst(
            vec![var("x", 0.0, 1.0), var("y", 0.0, 1.0), var("z", 0.0, 1.0)],
            vec![1.0, 2.0, 3.0],
            vec![row(vec![(0, 1.0), (1, 1.0), (2, 1.0)], Sense::Le, 1.5)],
        );
        let p = LpProblem::new(&i, &[]).unwrap();
        let mut s = Simplex::new(&p);
        s.optimize().unwrap();
        assert!((s.objective(&s.primal()) - 4.0).abs() < 1e-9);
        s.fix(2, 0.0);
        assert_eq!(s.optimize().unwrap(), LpStatus::Optimal);
        assert!((s.objective(&s.primal()) - 2.5).abs() < 1e-9);
        s.fix(0, 1.0);
        s.fix(1, 1.0);
        assert_eq!(s.optimize().unwrap(), LpStatus::Infeasible);
    }
}

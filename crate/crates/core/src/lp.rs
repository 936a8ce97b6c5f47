//! Dense revised simplex for the small linear programs built by the solvers.
//!
//! Problems are converted to standard form `min c'x, Ax = b, x >= 0, b >= 0`
//! and solved with a two-phase method. The basis inverse is kept explicitly
//! and updated with eta transformations; it is rebuilt from scratch every
//! [`REFACTOR_EVERY`] pivots. Pricing is Dantzig's rule, switching to Bland's
//! rule after a streak of degenerate pivots so the method cannot cycle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Primal feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-10;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 100;
const DEGENERATE_STREAK: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowKind {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub kind: RowKind,
    pub rhs: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<Row>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Iteration limit or a singular basis; never reported as optimal.
    NumericalFailure,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub x: Vec<f64>,
    /// Sensitivity of the optimal objective to each row's right-hand side.
    pub duals: Vec<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    fn failed(status: LpStatus, n: usize, m: usize, iterations: usize) -> Self {
        Self {
            status,
            objective: f64::NAN,
            x: vec![0.0; n],
            duals: vec![0.0; m],
            iterations,
            primal_residual: f64::NAN,
            dual_residual: f64::NAN,
            gap: f64::NAN,
        }
    }
}

impl LinearProgram {
    pub fn new(sense: Sense) -> Self {
        Self {
            sense,
            objective: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    pub fn add_nonneg(&mut self, cost: f64) -> usize {
        self.add_var(cost, 0.0, f64::INFINITY)
    }

    pub fn add_free(&mut self, cost: f64) -> usize {
        self.add_var(cost, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, kind: RowKind, rhs: f64) -> usize {
        self.rows.push(Row { coeffs, kind, rhs });
        self.rows.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::InvalidLp("bound vectors do not match variable count".into()));
        }
        for j in 0..n {
            if !self.objective[j].is_finite() {
                return Err(Error::InvalidLp(format!("objective coefficient {j} is not finite")));
            }
            if self.lower[j].is_nan() || self.upper[j].is_nan() || self.lower[j] > self.upper[j] {
                return Err(Error::InvalidLp(format!("variable {j} has invalid bounds")));
            }
            if self.lower[j] == f64::INFINITY || self.upper[j] == f64::NEG_INFINITY {
                return Err(Error::InvalidLp(format!("variable {j} has invalid bounds")));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(Error::InvalidLp(format!("row {i} has a non-finite right-hand side")));
            }
            for &(j, a) in &row.coeffs {
                if j >= n || !a.is_finite() {
                    return Err(Error::InvalidLp(format!("row {i} has an invalid coefficient")));
                }
            }
        }
        Ok(())
    }

    /// Largest violation of rows and bounds at `x`.
    pub fn primal_residual(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        for row in &self.rows {
            let lhs: f64 = row.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            let viol = match row.kind {
                RowKind::Le => lhs - row.rhs,
                RowKind::Ge => row.rhs - lhs,
                RowKind::Eq => (lhs - row.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

#[derive(Clone, Copy, Debug)]
enum VarMap {
    Shift { col: usize, lo: f64 },
    Mirror { col: usize, hi: f64 },
    Split { pos: usize, neg: usize },
}

struct StdForm {
    m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    cost: Vec<f64>,
    artificial_start: usize,
    var_map: Vec<VarMap>,
    row_sign: Vec<f64>,
    initial_basis: Vec<usize>,
}

impl StdForm {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let mut ncols = 0usize;
        let mut var_map = Vec::with_capacity(n);
        let mut bound_rows: Vec<(usize, f64)> = Vec::new();
        for j in 0..n {
            let (lo, hi) = (lp.lower[j], lp.upper[j]);
            if lo.is_finite() {
                var_map.push(VarMap::Shift { col: ncols, lo });
                if hi.is_finite() {
                    bound_rows.push((ncols, hi - lo));
                }
                ncols += 1;
            } else if hi.is_finite() {
                var_map.push(VarMap::Mirror { col: ncols, hi });
                ncols += 1;
            } else {
                var_map.push(VarMap::Split { pos: ncols, neg: ncols + 1 });
                ncols += 2;
            }
        }
        let structural = ncols;

        let mut cost = vec![0.0; structural];
        let flip = if lp.sense == Sense::Maximize { -1.0 } else { 1.0 };
        for (j, map) in var_map.iter().enumerate() {
            let c = flip * lp.objective[j];
            match *map {
                VarMap::Shift { col, .. } => cost[col] = c,
                VarMap::Mirror { col, .. } => cost[col] = -c,
                VarMap::Split { pos, neg } => {
                    cost[pos] = c;
                    cost[neg] = -c;
                }
            }
        }

        // Rows in terms of standard columns: (entries, kind, rhs).
        let mut rows: Vec<(Vec<(usize, f64)>, RowKind, f64)> = Vec::with_capacity(lp.rows.len() + bound_rows.len());
        for row in &lp.rows {
            let mut rhs = row.rhs;
            let mut entries: Vec<(usize, f64)> = Vec::with_capacity(row.coeffs.len());
            for &(j, a) in &row.coeffs {
                if a == 0.0 {
                    continue;
                }
                match var_map[j] {
                    VarMap::Shift { col, lo } => {
                        entries.push((col, a));
                        rhs -= a * lo;
                    }
                    VarMap::Mirror { col, hi } => {
                        entries.push((col, -a));
                        rhs -= a * hi;
                    }
                    VarMap::Split { pos, neg } => {
                        entries.push((pos, a));
                        entries.push((neg, -a));
                    }
                }
            }
            rows.push((entries, row.kind, rhs));
        }
        for &(col, cap) in &bound_rows {
            rows.push((vec![(col, 1.0)], RowKind::Le, cap));
        }

        let m = rows.len();
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); structural];
        let mut b = vec![0.0; m];
        let mut row_sign = vec![1.0; m];
        let mut slack_of_row: Vec<Option<(usize, f64)>> = vec![None; m];
        for (i, (entries, kind, rhs)) in rows.iter().enumerate() {
            let sign = if *rhs < 0.0 { -1.0 } else { 1.0 };
            row_sign[i] = sign;
            b[i] = sign * rhs;
            // merge duplicate column entries
            let mut merged: Vec<(usize, f64)> = entries.clone();
            merged.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < merged.len() {
                let col = merged[k].0;
                let mut val = 0.0;
                while k < merged.len() && merged[k].0 == col {
                    val += merged[k].1;
                    k += 1;
                }
                if val != 0.0 {
                    cols[col].push((i, sign * val));
                }
            }
            let slack_coef = match kind {
                RowKind::Le => Some(1.0),
                RowKind::Ge => Some(-1.0),
                RowKind::Eq => None,
            };
            if let Some(sc) = slack_coef {
                cols.push(vec![(i, sign * sc)]);
                cost.push(0.0);
                slack_of_row[i] = Some((cols.len() - 1, sign * sc));
            }
        }
        let artificial_start = cols.len();
        let mut initial_basis = vec![0usize; m];
        for i in 0..m {
            match slack_of_row[i] {
                Some((col, coef)) if coef > 0.0 => initial_basis[i] = col,
                _ => {
                    cols.push(vec![(i, 1.0)]);
                    cost.push(0.0);
                    initial_basis[i] = cols.len() - 1;
                }
            }
        }
        StdForm {
            m,
            cols,
            b,
            cost,
            artificial_start,
            var_map,
            row_sign,
            initial_basis,
        }
    }

    fn ncols(&self) -> usize {
        self.cols.len()
    }
}

enum Outcome {
    Optimal,
    Unbounded,
    Failure,
}

struct Simplex<'a> {
    sf: &'a StdForm,
    basis: Vec<usize>,
    position: Vec<Option<usize>>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    iterations: usize,
    max_iterations: usize,
    since_refactor: usize,
}

impl<'a> Simplex<'a> {
    fn new(sf: &'a StdForm) -> Self {
        let m = sf.m;
        let mut position = vec![None; sf.ncols()];
        for (r, &j) in sf.initial_basis.iter().enumerate() {
            position[j] = Some(r);
        }
        let mut binv = vec![0.0; m * m];
        for r in 0..m {
            binv[r * m + r] = 1.0;
        }
        Simplex {
            sf,
            basis: sf.initial_basis.clone(),
            position,
            binv,
            xb: sf.b.clone(),
            iterations: 0,
            max_iterations: 200 * (m + sf.ncols()) + 2000,
            since_refactor: 0,
        }
    }

    /// Rebuilds the basis inverse by Gauss-Jordan elimination.
    fn refactor(&mut self) -> bool {
        let m = self.sf.m;
        if m == 0 {
            return true;
        }
        let w = 2 * m;
        let mut aug = vec![0.0; m * w];
        for (r, &j) in self.basis.iter().enumerate() {
            for &(i, a) in &self.sf.cols[j] {
                aug[i * w + r] = a;
            }
        }
        for i in 0..m {
            aug[i * w + m + i] = 1.0;
        }
        for c in 0..m {
            let mut piv = c;
            let mut best = aug[c * w + c].abs();
            for i in c + 1..m {
                let v = aug[i * w + c].abs();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if best < 1e-12 {
                return false;
            }
            if piv != c {
                for k in 0..w {
                    aug.swap(c * w + k, piv * w + k);
                }
            }
            let inv = 1.0 / aug[c * w + c];
            for k in c..w {
                aug[c * w + k] *= inv;
            }
            for i in 0..m {
                if i == c {
                    continue;
                }
                let f = aug[i * w + c];
                if f != 0.0 {
                    for k in c..w {
                        aug[i * w + k] -= f * aug[c * w + k];
                    }
                }
            }
        }
        for i in 0..m {
            self.binv[i * m..(i + 1) * m].copy_from_slice(&aug[i * w + m..(i + 1) * w]);
        }
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            self.xb[i] = row.iter().zip(&self.sf.b).map(|(a, b)| a * b).sum();
        }
        self.since_refactor = 0;
        true
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.sf.m;
        let mut y = vec![0.0; m];
        for (r, &j) in self.basis.iter().enumerate() {
            let c = cost[j];
            if c != 0.0 {
                let row = &self.binv[r * m..(r + 1) * m];
                for (yi, a) in y.iter_mut().zip(row) {
                    *yi += c * a;
                }
            }
        }
        y
    }

    fn reduced_cost(&self, cost: &[f64], y: &[f64], j: usize) -> f64 {
        cost[j] - self.sf.cols[j].iter().map(|&(i, a)| y[i] * a).sum::<f64>()
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.sf.m;
        let mut alpha = vec![0.0; m];
        for &(i, a) in &self.sf.cols[j] {
            for r in 0..m {
                alpha[r] += self.binv[r * m + i] * a;
            }
        }
        alpha
    }

    fn pivot(&mut self, r: usize, q: usize, alpha: &[f64]) {
        let m = self.sf.m;
        let theta = self.xb[r].max(0.0) / alpha[r];
        for i in 0..m {
            if i != r && alpha[i] != 0.0 {
                self.xb[i] -= theta * alpha[i];
                if self.xb[i] < 0.0 && self.xb[i] > -1e-13 {
                    self.xb[i] = 0.0;
                }
            }
        }
        self.xb[r] = theta;
        let inv = 1.0 / alpha[r];
        for k in 0..m {
            self.binv[r * m + k] *= inv;
        }
        let (head, tail) = self.binv.split_at_mut(r * m);
        let (prow, rest) = tail.split_at_mut(m);
        for i in 0..m {
            if i == r || alpha[i] == 0.0 {
                continue;
            }
            let f = alpha[i];
            let row = if i < r {
                &mut head[i * m..(i + 1) * m]
            } else {
                let off = (i - r - 1) * m;
                &mut rest[off..off + m]
            };
            for (a, p) in row.iter_mut().zip(prow.iter()) {
                *a -= f * p;
            }
        }
        let old = self.basis[r];
        self.position[old] = None;
        self.basis[r] = q;
        self.position[q] = Some(r);
        self.iterations += 1;
        self.since_refactor += 1;
    }

    fn run(&mut self, cost: &[f64], allow: &dyn Fn(usize) -> bool) -> Outcome {
        let n = self.sf.ncols();
        let mut degenerate = 0usize;
        loop {
            if self.iterations >= self.max_iterations {
                return Outcome::Failure;
            }
            if self.since_refactor >= REFACTOR_EVERY && !self.refactor() {
                return Outcome::Failure;
            }
            let bland = degenerate >= DEGENERATE_STREAK;
            let y = self.duals(cost);
            let scale = 1.0 + y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let tol = OPT_TOL * scale;
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..n {
                if self.position[j].is_some() || !allow(j) {
                    continue;
                }
                let d = self.reduced_cost(cost, &y, j);
                if d < -tol {
                    if bland {
                        entering = Some((j, d));
                        break;
                    }
                    if entering.is_none_or(|(_, best)| d < best) {
                        entering = Some((j, d));
                    }
                }
            }
            let Some((q, _)) = entering else {
                return Outcome::Optimal;
            };
            let alpha = self.ftran(q);
            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for r in 0..self.sf.m {
                if alpha[r] > PIVOT_TOL {
                    let ratio = self.xb[r].max(0.0) / alpha[r];
                    match leave {
                        None => {
                            leave = Some(r);
                            best_ratio = ratio;
                        }
                        Some(cur) => {
                            let tie = (ratio - best_ratio).abs() <= 1e-12 * (1.0 + best_ratio.abs());
                            if ratio < best_ratio && !tie {
                                leave = Some(r);
                                best_ratio = ratio;
                            } else if tie {
                                let better = if bland {
                                    self.basis[r] < self.basis[cur]
                                } else {
                                    alpha[r] > alpha[cur]
                                };
                                if better {
                                    leave = Some(r);
                                    best_ratio = best_ratio.min(ratio);
                                }
                            }
                        }
                    }
                }
            }
            let Some(r) = leave else {
                return Outcome::Unbounded;
            };
            if best_ratio <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(r, q, &alpha);
        }
    }

    /// Pivots basic artificials at zero level out of the basis where possible.
    fn evict_artificials(&mut self) {
        let m = self.sf.m;
        let art = self.sf.artificial_start;
        for r in 0..m {
            if self.basis[r] < art {
                continue;
            }
            let row = self.binv[r * m..(r + 1) * m].to_vec();
            let mut best: Option<(usize, f64)> = None;
            for j in 0..art {
                if self.position[j].is_some() {
                    continue;
                }
                let v: f64 = self.sf.cols[j].iter().map(|&(i, a)| row[i] * a).sum();
                if v.abs() > 1e-7 && best.is_none_or(|(_, b)| v.abs() > b.abs()) {
                    best = Some((j, v));
                }
            }
            if let Some((j, _)) = best {
                let alpha = self.ftran(j);
                self.pivot(r, j, &alpha);
            }
        }
    }
}

/// Solves `lp`. Invalid input is an error; infeasibility, unboundedness and
/// numerical trouble are reported through [`LpSolution::status`].
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    let n = lp.num_vars();
    let orig_rows = lp.rows.len();
    let sf = StdForm::build(lp);
    let m = sf.m;
    let mut sx = Simplex::new(&sf);

    let art = sf.artificial_start;
    let needs_phase1 = sf.initial_basis.iter().any(|&j| j >= art);
    if needs_phase1 {
        let phase1_cost: Vec<f64> = (0..sf.ncols()).map(|j| if j >= art { 1.0 } else { 0.0 }).collect();
        match sx.run(&phase1_cost, &|j| j < art) {
            Outcome::Optimal => {}
            Outcome::Unbounded | Outcome::Failure => {
                return Ok(LpSolution::failed(LpStatus::NumericalFailure, n, orig_rows, sx.iterations));
            }
        }
        if !sx.refactor() {
            return Ok(LpSolution::failed(LpStatus::NumericalFailure, n, orig_rows, sx.iterations));
        }
        let infeas: f64 = sx
            .basis
            .iter()
            .zip(&sx.xb)
            .filter(|(&j, _)| j >= art)
            .map(|(_, &v)| v.max(0.0))
            .sum();
        let bscale = 1.0 + sf.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if infeas > FEAS_TOL * bscale {
            return Ok(LpSolution::failed(LpStatus::Infeasible, n, orig_rows, sx.iterations));
        }
        sx.evict_artificials();
        if !sx.refactor() {
            return Ok(LpSolution::failed(LpStatus::NumericalFailure, n, orig_rows, sx.iterations));
        }
    }

    match sx.run(&sf.cost, &|j| j < art) {
        Outcome::Optimal => {}
        Outcome::Unbounded => {
            return Ok(LpSolution::failed(LpStatus::Unbounded, n, orig_rows, sx.iterations));
        }
        Outcome::Failure => {
            return Ok(LpSolution::failed(LpStatus::NumericalFailure, n, orig_rows, sx.iterations));
        }
    }
    if !sx.refactor() {
        return Ok(LpSolution::failed(LpStatus::NumericalFailure, n, orig_rows, sx.iterations));
    }

    let mut xs = vec![0.0; sf.ncols()];
    for (r, &j) in sx.basis.iter().enumerate() {
        xs[j] = sx.xb[r].max(0.0);
    }
    let x: Vec<f64> = sf
        .var_map
        .iter()
        .map(|map| match *map {
            VarMap::Shift { col, lo } => lo + xs[col],
            VarMap::Mirror { col, hi } => hi - xs[col],
            VarMap::Split { pos, neg } => xs[pos] - xs[neg],
        })
        .collect();

    let y = sx.duals(&sf.cost);
    let flip = if lp.sense == Sense::Maximize { -1.0 } else { 1.0 };
    let duals: Vec<f64> = (0..orig_rows).map(|i| flip * sf.row_sign[i] * y[i]).collect();

    let mut dual_residual: f64 = 0.0;
    for j in 0..art {
        if sx.position[j].is_none() {
            dual_residual = dual_residual.max(-sx.reduced_cost(&sf.cost, &y, j));
        }
    }
    let primal_std: f64 = sx.basis.iter().zip(&sx.xb).map(|(&j, &v)| sf.cost[j] * v.max(0.0)).sum();
    let dual_std: f64 = y.iter().zip(&sf.b).map(|(a, b)| a * b).sum();
    let gap = (primal_std - dual_std).abs() / (1.0 + primal_std.abs());

    let objective = lp.evaluate(&x);
    let primal_residual = lp.primal_residual(&x);
    let _ = m;
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective,
        x,
        duals,
        iterations: sx.iterations,
        primal_residual,
        dual_residual,
        gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn max_single_bound() {
        let mut lp = LinearProgram::new(Sense::Maximize);
        let x = lp.add_nonneg(1.0);
        lp.add_row(vec![(x, 1.0)], RowKind::Le, 3.0);
        let sol = solve_lp(&lp).unwrap();
        assert!(sol.is_optimal());
        assert_abs_diff_eq!(sol.objective, 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.duals[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn infeasible_pair() {
        let mut lp = LinearProgram::new(Sense::Maximize);
        let x = lp.add_free(1.0);
        lp.add_row(vec![(x, 1.0)], RowKind::Le, 0.0);
        lp.add_row(vec![(x, 1.0)], RowKind::Ge, 1.0);
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_ray() {
        let mut lp = LinearProgram::new(Sense::Maximize);
        let x = lp.add_nonneg(1.0);
        let y = lp.add_nonneg(0.0);
        lp.add_row(vec![(x, 1.0), (y, -1.0)], RowKind::Le, 1.0);
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn free_and_mirrored_variables() {
        // min x + y, x >= -2 (free otherwise), y <= 5 and y >= x + 1
        let mut lp = LinearProgram::new(Sense::Minimize);
        let x = lp.add_free(1.0);
        let y = lp.add_var(1.0, f64::NEG_INFINITY, 5.0);
        lp.add_row(vec![(x, 1.0)], RowKind::Ge, -2.0);
        lp.add_row(vec![(y, 1.0), (x, -1.0)], RowKind::Ge, 1.0);
        let sol = solve_lp(&lp).unwrap();
        assert!(sol.is_optimal());
        assert_abs_diff_eq!(sol.objective, -3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.x[0], -2.0, epsilon = 1e-12);
    }

    #[test]
    fn boxed_variable_and_equality() {
        let mut lp = LinearProgram::new(Sense::Maximize);
        let a = lp.add_var(2.0, 0.0, 1.0);
        let b = lp.add_var(1.0, 0.5, 4.0);
        lp.add_row(vec![(a, 1.0), (b, 1.0)], RowKind::Eq, 2.0);
        let sol = solve_lp(&lp).unwrap();
        assert_abs_diff_eq!(sol.objective, 3.0, epsilon = 1e-12);
        assert!(sol.primal_residual < 1e-12);
    }

    #[test]
    fn redundant_equalities_are_tolerated() {
        let mut lp = LinearProgram::new(Sense::Maximize);
        let a = lp.add_nonneg(1.0);
        let b = lp.add_nonneg(2.0);
        lp.add_row(vec![(a, 1.0), (b, 1.0)], RowKind::Eq, 1.0);
        lp.add_row(vec![(a, 2.0), (b, 2.0)], RowKind::Eq, 2.0);
        let sol = solve_lp(&lp).unwrap();
        assert!(sol.is_optimal());
        assert_abs_diff_eq!(sol.objective, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_non_finite_coefficients() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let a = lp.add_nonneg(1.0);
        lp.add_row(vec![(a, f64::NAN)], RowKind::Le, 1.0);
        assert!(solve_lp(&lp).is_err());
    }
}

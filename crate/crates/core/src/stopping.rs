//! Stopping rules, randomized stopping times, and the extraction of a
//! (path measure, randomized stopping time) pair from a measure on the
//! enlarged space via the Azéma supermartingale and its multiplicative
//! decomposition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Tree;
use crate::measures::{
    atom_kernels, epsilon_modify, is_epsilon_modified, validate_martingale, EnlargedMeasure, Filtration,
    ModelClass, PathMeasure,
};

pub const DEFAULT_EPS_FLOOR: f64 = 1e-6;
pub const DEFAULT_RULE_CAP: u128 = 100_000;
const EXHAUSTION_TOL: f64 = 1e-14;

/// A pure adapted stopping rule: one stop/continue decision per vertex.
/// Stored canonically: only the first stop along each path is marked, and
/// every leaf is marked.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StoppingRule {
    pub stop: Vec<bool>,
}

impl StoppingRule {
    /// Builds the canonical rule from arbitrary per-vertex decisions
    /// (leaves always stop).
    pub fn from_decisions(tree: &Tree, decisions: &[bool]) -> Self {
        let mut stop = vec![false; tree.vertices.len()];
        let mut stack = vec![tree.root()];
        while let Some(v) = stack.pop() {
            let vx = &tree.vertices[v];
            if vx.is_leaf() || decisions[v] {
                stop[v] = true;
            } else {
                stack.extend(vx.children.iter().copied());
            }
        }
        Self { stop }
    }

    pub fn always_at_terminal(tree: &Tree) -> Self {
        Self::from_decisions(tree, &vec![false; tree.vertices.len()])
    }

    pub fn at_date(tree: &Tree, date: usize) -> Self {
        let d: Vec<bool> = tree.vertices.iter().map(|v| v.date >= date).collect();
        Self::from_decisions(tree, &d)
    }

    pub fn stop_vertex(&self, tree: &Tree, path: usize) -> usize {
        *tree
            .path_vertices(path)
            .iter()
            .find(|&&v| self.stop[v])
            .expect("leaves always stop")
    }

    pub fn stop_date(&self, tree: &Tree, path: usize) -> usize {
        tree.vertices[self.stop_vertex(tree, path)].date
    }

    /// Dates at which the rule stops some path.
    pub fn stop_dates(&self, tree: &Tree) -> Vec<usize> {
        let mut d: Vec<usize> = (0..tree.num_paths()).map(|p| self.stop_date(tree, p)).collect();
        d.sort_unstable();
        d.dedup();
        d
    }
}

/// Number of canonical rules: `count(leaf) = 1`,
/// `count(v) = 1 + prod count(children)`, saturating.
pub fn count_rules(tree: &Tree) -> u128 {
    let mut count = vec![1u128; tree.vertices.len()];
    for v in (0..tree.vertices.len()).rev() {
        let vx = &tree.vertices[v];
        if !vx.is_leaf() {
            let prod = vx
                .children
                .iter()
                .fold(1u128, |acc, &c| acc.saturating_mul(count[c]));
            count[v] = prod.saturating_add(1);
        }
    }
    count[0]
}

/// Enumerates every pure adapted stopping rule, erroring when the count
/// exceeds `cap`.
pub fn enumerate_rules(tree: &Tree, cap: u128) -> Result<Vec<StoppingRule>> {
    let count = count_rules(tree);
    if count > cap {
        return Err(Error::RuleCap { count, cap });
    }
    fn sets(tree: &Tree, v: usize) -> Vec<Vec<usize>> {
        let vx = &tree.vertices[v];
        if vx.is_leaf() {
            return vec![vec![v]];
        }
        let mut combos: Vec<Vec<usize>> = vec![Vec::new()];
        for &c in &vx.children {
            let sub = sets(tree, c);
            let mut next = Vec::with_capacity(combos.len() * sub.len());
            for base in &combos {
                for s in &sub {
                    let mut x = base.clone();
                    x.extend_from_slice(s);
                    next.push(x);
                }
            }
            combos = next;
        }
        let mut out = vec![vec![v]];
        out.extend(combos);
        out
    }
    Ok(sets(tree, tree.root())
        .into_iter()
        .map(|vs| {
            let mut stop = vec![false; tree.vertices.len()];
            for v in vs {
                stop[v] = true;
            }
            StoppingRule { stop }
        })
        .collect())
}

/// Push-forward of `P` under `omega -> (tau(omega), omega)`.
pub fn rule_to_enlarged(tree: &Tree, p: &PathMeasure, rule: &StoppingRule, theta_dates: &[usize]) -> Result<EnlargedMeasure> {
    let n = tree.num_paths();
    if p.len() != n {
        return Err(Error::IndexMismatch("measure does not match the lattice".into()));
    }
    let mut weights = vec![0.0; theta_dates.len() * n];
    for path in 0..n {
        let u = rule.stop_date(tree, path);
        let k = theta_dates
            .iter()
            .position(|&d| d == u)
            .ok_or_else(|| Error::InvalidMeasure(format!("rule stops at date {u}, which is not a stop date")))?;
        weights[k * n + path] = p.weights[path];
    }
    EnlargedMeasure::new(theta_dates.to_vec(), n, weights)
}

/// Cumulative stopping profile `A`, one value per vertex (so adapted by
/// construction), nondecreasing along paths, equal to 1 at leaves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomizedStoppingTime {
    pub a: Vec<f64>,
}

impl RandomizedStoppingTime {
    pub fn from_rule(tree: &Tree, rule: &StoppingRule) -> Self {
        let mut a = vec![0.0; tree.vertices.len()];
        for v in 0..tree.vertices.len() {
            let parent = tree.vertices[v].parent.map(|u| a[u]).unwrap_or(0.0);
            a[v] = if rule.stop[v] { 1.0 } else { parent };
        }
        Self { a }
    }

    /// Increment `A_t - A_{t-1}` at a vertex (with `A_{-1} = 0`).
    pub fn increment(&self, tree: &Tree, v: usize) -> f64 {
        self.a[v] - tree.vertices[v].parent.map(|u| self.a[u]).unwrap_or(0.0)
    }

    /// `A` along every path, `[path][date]`.
    pub fn per_path(&self, tree: &Tree) -> Vec<Vec<f64>> {
        (0..tree.num_paths())
            .map(|p| tree.path_vertices(p).iter().map(|&v| self.a[v]).collect())
            .collect()
    }

    /// Checks `0 <= A <= 1`, monotonicity and `A_T = 1`; returns the largest
    /// violation.
    pub fn defect(&self, tree: &Tree) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, vx) in tree.vertices.iter().enumerate() {
            worst = worst.max(-self.increment(tree, v)).max(-self.a[v]).max(self.a[v] - 1.0);
            if vx.is_leaf() {
                worst = worst.max((self.a[v] - 1.0).abs());
            }
        }
        worst
    }
}

/// `R(omega, s) = mu(theta <= s | omega)` per path and date; `None` for
/// paths of zero marginal mass.
pub fn disintegrate(tree: &Tree, mu: &EnlargedMeasure) -> Result<Vec<Option<Vec<f64>>>> {
    mu.check_tree(tree)?;
    let marginal = mu.omega_marginal();
    Ok((0..mu.num_paths)
        .map(|p| {
            let m = marginal.weights[p];
            if m <= 0.0 {
                return None;
            }
            let mut acc = 0.0;
            let mut k = 0;
            Some(
                (0..=tree.terminal())
                    .map(|s| {
                        while k < mu.theta_dates.len() && mu.theta_dates[k] <= s {
                            acc += mu.weight(k, p);
                            k += 1;
                        }
                        (acc / m).min(1.0)
                    })
                    .collect(),
            )
        })
        .collect())
}

/// Mass-weighted average of `R(., t)` over each vertex at date `t`;
/// `None` on zero-mass vertices.
pub fn optional_projection(tree: &Tree, r: &[Option<Vec<f64>>], mu_omega: &PathMeasure) -> Vec<Option<f64>> {
    let mass = mu_omega.vertex_masses(tree);
    tree.vertices
        .iter()
        .enumerate()
        .map(|(v, vx)| {
            if mass[v] <= 0.0 {
                return None;
            }
            let s: f64 = vx
                .paths()
                .filter_map(|p| r[p].as_ref().map(|row| mu_omega.weights[p] * row[vx.date]))
                .sum();
            Some(s / mass[v])
        })
        .collect()
}

/// Per-vertex sums `mu(theta >= t, v)`, `mu(theta > t, v)` and `mu^Omega(v)`.
fn survival_sums(tree: &Tree, mu: &EnlargedMeasure) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = mu.num_paths;
    let kk = mu.theta_dates.len();
    let mut ge = vec![0.0; tree.vertices.len()];
    let mut gt = vec![0.0; tree.vertices.len()];
    let mut om = vec![0.0; tree.vertices.len()];
    for (v, vx) in tree.vertices.iter().enumerate() {
        for k in 0..kk {
            let u = mu.theta_dates[k];
            let s: f64 = vx.paths().map(|p| mu.weights[k * n + p]).sum();
            om[v] += s;
            if u >= vx.date {
                ge[v] += s;
            }
            if u > vx.date {
                gt[v] += s;
            }
        }
    }
    (ge, gt, om)
}

/// Survival process `S_t = mu(theta >= t | F_t)` per vertex; `None` on
/// zero-mass vertices. It equals one minus the optional projection of
/// `R_{t-1}`.
pub fn survival(tree: &Tree, mu: &EnlargedMeasure) -> Result<Vec<Option<f64>>> {
    mu.check_tree(tree)?;
    let (ge, _, om) = survival_sums(tree, mu);
    Ok(ge
        .iter()
        .zip(&om)
        .map(|(g, m)| if *m > 0.0 { Some((g / m).min(1.0)) } else { None })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    /// Martingale factor per vertex (`None` on zero-mass vertices).
    pub m: Vec<Option<f64>>,
    /// Increasing factor per vertex; `1 - A_{t-1}` is predictable.
    pub a: Vec<f64>,
    /// `D_t = 1 - A_{t-1}` per vertex.
    pub d: Vec<f64>,
}

/// Multiplicative decomposition `S = M (1 - A_-)` of a positive process on
/// the tree, with `D_t = D_{t-1} E[S_t | F_{t-1}] / S_{t-1}`, `D_0 = 1`,
/// `M = S / D` and `A_t = 1 - D_{t+1}`.
pub fn multiplicative_decompose(tree: &Tree, mu_omega: &PathMeasure, s: &[Option<f64>]) -> Result<Decomposition> {
    let nv = tree.vertices.len();
    if s.len() != nv || mu_omega.len() != tree.num_paths() {
        return Err(Error::IndexMismatch("process does not match the lattice".into()));
    }
    let mass = mu_omega.vertex_masses(tree);
    let mut d = vec![1.0; nv];
    let mut a = vec![0.0; nv];
    let mut m = vec![None; nv];
    for v in 0..nv {
        let vx = &tree.vertices[v];
        if let Some(sv) = s[v].filter(|_| mass[v] > 0.0) {
            m[v] = Some(if d[v] > 0.0 { sv / d[v] } else { 0.0 });
            if vx.is_leaf() {
                a[v] = 1.0;
                continue;
            }
            if sv <= EXHAUSTION_TOL {
                return Err(Error::SurvivalExhausted { date: vx.date, vertex: v });
            }
            let es: f64 = vx
                .children
                .iter()
                .map(|&c| if mass[c] > 0.0 { mass[c] * s[c].unwrap_or(0.0) } else { 0.0 })
                .sum::<f64>()
                / mass[v];
            let next = d[v] * es / sv;
            a[v] = 1.0 - next;
            for &c in &vx.children {
                d[c] = next;
            }
        } else {
            a[v] = if vx.is_leaf() { 1.0 } else { 1.0 - d[v] };
            for &c in &vx.children {
                d[c] = d[v];
            }
        }
    }
    Ok(Decomposition { m, a, d })
}

/// Inspection dump of the Azéma construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AzemaData {
    /// `R(omega, s)` per path and date.
    pub r: Vec<Option<Vec<f64>>>,
    /// Optional projection of `R` per vertex.
    pub optional_r: Vec<Option<f64>>,
    /// Survival `S_t = mu(theta >= t | F_t)` per vertex.
    pub s: Vec<Option<f64>>,
    pub m: Vec<Option<f64>>,
    pub a: Vec<f64>,
    /// `dP / dmu^Omega = M_T` per path (`None` off the support).
    pub density: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Extraction {
    pub p: PathMeasure,
    pub a: RandomizedStoppingTime,
    pub azema: AzemaData,
    /// Epsilon applied automatically, if the input was not modified enough.
    pub eps_applied: Option<f64>,
    /// The measure actually decomposed (the input or its modification).
    pub mu_used: EnlargedMeasure,
}

/// Extracts `(P, A)` with `dP/dmu^Omega = M_T` from an enlarged measure so
/// that `mu(psi_theta) = E^P sum_t psi_t dA_t` for adapted `psi`.
///
/// With `eps_floor = Some(e)` the input is epsilon-modified first unless it
/// already is (at level `e`); then `P` is equivalent to `mu^Omega`. With
/// `None` the input is decomposed as is; once the stop mass on a prefix is
/// exhausted, `P` continues with the kernel of `mu^Omega`.
pub fn extract_pair(tree: &Tree, mu: &EnlargedMeasure, eps_floor: Option<f64>) -> Result<Extraction> {
    mu.check_tree(tree)?;
    let (mu_used, eps_applied) = match eps_floor {
        Some(e) if !is_epsilon_modified(mu, e) => (epsilon_modify(mu, e)?, Some(e)),
        _ => (mu.clone(), None),
    };
    let mu = &mu_used;
    let (ge, gt, om) = survival_sums(tree, mu);
    let nv = tree.vertices.len();
    let mut pv = vec![0.0; nv];
    let mut d = vec![1.0; nv];
    let mut a = vec![0.0; nv];
    pv[0] = 1.0;
    for v in 0..nv {
        let vx = &tree.vertices[v];
        if vx.is_leaf() {
            a[v] = 1.0;
            continue;
        }
        let exhausted = gt[v] <= EXHAUSTION_TOL * om[v];
        if om[v] > 0.0 && exhausted && eps_floor.is_some() {
            return Err(Error::SurvivalExhausted { date: vx.date, vertex: v });
        }
        let next = if ge[v] > 0.0 {
            if exhausted {
                0.0
            } else {
                d[v] * gt[v] / ge[v]
            }
        } else {
            d[v]
        };
        a[v] = 1.0 - next;
        for &c in &vx.children {
            d[c] = next;
            pv[c] = if om[v] <= 0.0 || pv[v] == 0.0 {
                0.0
            } else if exhausted {
                pv[v] * om[c] / om[v]
            } else {
                pv[v] * ge[c] / gt[v]
            };
        }
    }
    let weights: Vec<f64> = tree.leaves.iter().map(|&l| pv[l]).collect();
    let p = PathMeasure::new(weights)?;
    let marginal = mu.omega_marginal();
    let m: Vec<Option<f64>> = (0..nv).map(|v| if om[v] > 0.0 { Some(pv[v] / om[v]) } else { None }).collect();
    let density = (0..tree.num_paths())
        .map(|q| {
            let w = marginal.weights[q];
            if w > 0.0 {
                Some(p.weights[q] / w)
            } else {
                None
            }
        })
        .collect();
    let r = disintegrate(tree, mu)?;
    let optional_r = optional_projection(tree, &r, &marginal);
    let s = ge
        .iter()
        .zip(&om)
        .map(|(g, o)| if *o > 0.0 { Some((g / o).min(1.0)) } else { None })
        .collect();
    Ok(Extraction {
        p,
        a: RandomizedStoppingTime { a: a.clone() },
        azema: AzemaData {
            r,
            optional_r,
            s,
            m,
            a,
            density,
        },
        eps_applied,
        mu_used: mu_used.clone(),
    })
}

/// `tau_r = inf { t : A_t >= r }` as a pure rule.
pub fn tau_r(tree: &Tree, a: &RandomizedStoppingTime, r: f64) -> StoppingRule {
    let decisions: Vec<bool> = a.a.iter().map(|x| *x >= r).collect();
    StoppingRule::from_decisions(tree, &decisions)
}

/// The finitely many levels at which `tau_r` changes, restricted to vertices
/// charged by `p`, always ending with 1.
pub fn change_levels(tree: &Tree, a: &RandomizedStoppingTime, p: &PathMeasure) -> Vec<f64> {
    let mass = p.vertex_masses(tree);
    let mut levels: Vec<f64> = (0..tree.vertices.len())
        .filter(|&v| mass[v] > 0.0 && a.a[v] > 0.0 && a.a[v] < 1.0)
        .map(|v| a.a[v])
        .collect();
    levels.push(1.0);
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    levels
}

/// `E^P[Z_tau]` for a pure rule, with `Z` given per vertex.
pub fn stopped_value(tree: &Tree, p: &PathMeasure, rule: &StoppingRule, z: &[f64]) -> f64 {
    (0..tree.num_paths())
        .map(|q| p.weights[q] * z[rule.stop_vertex(tree, q)])
        .sum()
}

/// Both sides of the layer-cake identity
/// `sum_levels (r_i - r_{i-1}) E^P[Z_{tau_{r_i}}] = E^P sum_t Z_t dA_t`.
pub fn layer_cake(tree: &Tree, p: &PathMeasure, a: &RandomizedStoppingTime, z: &[f64]) -> (f64, f64) {
    let mut lhs = 0.0;
    let mut prev = 0.0;
    for r in change_levels(tree, a, p) {
        lhs += (r - prev) * stopped_value(tree, p, &tau_r(tree, a, r), z);
        prev = r;
    }
    (lhs, integrate_against(tree, p, a, z))
}

/// `E^P sum_t psi_t dA_t` for `psi` given per vertex.
pub fn integrate_against(tree: &Tree, p: &PathMeasure, a: &RandomizedStoppingTime, psi: &[f64]) -> f64 {
    let mass = p.vertex_masses(tree);
    (0..tree.vertices.len())
        .map(|v| mass[v] * psi[v] * a.increment(tree, v))
        .sum()
}

/// `mu(psi_theta)` for `psi` given per vertex.
pub fn enlarged_expectation(tree: &Tree, mu: &EnlargedMeasure, psi: &[f64]) -> f64 {
    let n = mu.num_paths;
    let mut total = 0.0;
    for (k, &u) in mu.theta_dates.iter().enumerate() {
        for p in 0..n {
            let w = mu.weights[k * n + p];
            if w != 0.0 {
                total += w * psi[tree.vertex_at(p, u)];
            }
        }
    }
    total
}

/// Converts a process given per path and date into a per-vertex process,
/// rejecting it if it is not constant on the atoms (not adapted).
pub fn adapted_process(tree: &Tree, values: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut out = vec![f64::NAN; tree.vertices.len()];
    for (p, row) in values.iter().enumerate() {
        for (t, &v) in tree.path_vertices(p).iter().enumerate() {
            if out[v].is_nan() {
                out[v] = row[t];
            } else if out[v] != row[t] {
                return Err(Error::NotAdapted { date: t, vertex: v });
            }
        }
    }
    Ok(out)
}

/// Largest reconstruction error `|mu(psi_theta) - E^P sum_t psi_t dA_t|`
/// over adapted test processes given per vertex.
pub fn verify_reconstruction(
    tree: &Tree,
    mu: &EnlargedMeasure,
    p: &PathMeasure,
    a: &RandomizedStoppingTime,
    psis: &[Vec<f64>],
) -> Result<f64> {
    mu.check_tree(tree)?;
    let mut worst: f64 = 0.0;
    for psi in psis {
        if psi.len() != tree.vertices.len() {
            return Err(Error::IndexMismatch("test process must have one value per vertex".into()));
        }
        let lhs = enlarged_expectation(tree, mu, psi);
        let rhs = integrate_against(tree, p, a, psi);
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

/// Both sides of the reconstruction identity for a process given per path
/// and date, without an adaptedness check. Anticipating processes break the
/// identity; this is how that is exhibited.
pub fn reconstruction_sides_unchecked(
    tree: &Tree,
    mu: &EnlargedMeasure,
    p: &PathMeasure,
    a: &RandomizedStoppingTime,
    psi: &[Vec<f64>],
) -> (f64, f64) {
    let n = mu.num_paths;
    let mut lhs = 0.0;
    for (k, &u) in mu.theta_dates.iter().enumerate() {
        for q in 0..n {
            lhs += mu.weights[k * n + q] * psi[q][u];
        }
    }
    let mut rhs = 0.0;
    for q in 0..n {
        for (t, &v) in tree.path_vertices(q).iter().enumerate() {
            rhs += p.weights[q] * psi[q][t] * a.increment(tree, v);
        }
    }
    (lhs, rhs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreservationReport {
    pub martingale_violations: usize,
    pub max_drift: f64,
    pub band_ok: bool,
    /// `E^P[g_i]` per option.
    pub calibration: Vec<f64>,
    /// Largest `|E^P[1_Gamma 1_{tau_r > s} (X_{tau_r} - X_s)]|` over levels
    /// `r < 1`, dates `s` and atoms `Gamma`.
    pub max_stopped_increment: f64,
    /// Whether `P` and `mu^Omega` have the same null paths.
    pub equivalent: bool,
}

/// Checks that the extracted `P` is a martingale satisfying the band and
/// that stopped increments `X_{tau_r} - X_s` have zero conditional mean.
pub fn verify_martingale_preservation(
    model: &ModelClass,
    mu: &EnlargedMeasure,
    ex: &Extraction,
    tol: f64,
) -> Result<PreservationReport> {
    let tree = &model.tree;
    let drifts = validate_martingale(&ex.p, tree, Filtration::Base, tol)?;
    let max_drift = drifts.iter().map(|v| v.value.abs()).fold(0.0, f64::max);
    let en = EnlargedMeasure {
        theta_dates: vec![tree.terminal()],
        num_paths: ex.p.len(),
        weights: ex.p.weights.clone(),
    };
    let mut band_ok = true;
    for k in atom_kernels(tree, &en, Filtration::Base)? {
        if k.mass <= 0.0 || !tree.band_applies(k.date) {
            continue;
        }
        if let Some(b) = model.band.interval(k.vertex) {
            let var = crate::measures::conditional_variance(tree, &k).unwrap();
            for i in 0..tree.x_dim {
                if var[i] < b.lo[i] - tol || var[i] > b.hi[i] + tol {
                    band_ok = false;
                }
            }
        }
    }
    let calibration = model.options.iter().map(|g| ex.p.expectation(g)).collect();
    let mass = ex.p.vertex_masses(tree);
    let mut worst: f64 = 0.0;
    for r in change_levels(tree, &ex.a, &ex.p) {
        if r >= 1.0 {
            continue;
        }
        let rule = tau_r(tree, &ex.a, r);
        let stop_v: Vec<usize> = (0..tree.num_paths()).map(|q| rule.stop_vertex(tree, q)).collect();
        for (v, vx) in tree.vertices.iter().enumerate() {
            if vx.is_leaf() || mass[v] <= 0.0 {
                continue;
            }
            let mut acc = vec![0.0; tree.dim()];
            for q in vx.paths() {
                let sv = stop_v[q];
                if tree.vertices[sv].date > vx.date {
                    for (i, x) in acc.iter_mut().enumerate() {
                        *x += ex.p.weights[q] * (tree.vertices[sv].state[i] - vx.state[i]);
                    }
                }
            }
            worst = acc.iter().fold(worst, |w, x| w.max(x.abs()));
        }
    }
    let marginal = mu.omega_marginal();
    let equivalent = marginal
        .weights
        .iter()
        .zip(&ex.p.weights)
        .all(|(a, b)| (*a > 0.0) == (*b > 0.0));
    Ok(PreservationReport {
        martingale_violations: drifts.len(),
        max_drift,
        band_ok,
        calibration,
        max_stopped_increment: worst,
        equivalent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, LatticeSpec};

    fn tree(steps: Vec<Vec<f64>>) -> Tree {
        let n = steps.len();
        let dates = (0..=n).map(|i| i as f64).collect();
        build_lattice(&LatticeSpec::uniform(dates, 1.0, steps)).unwrap().tree
    }

    #[test]
    fn rule_counts() {
        let t = tree(vec![vec![0.0]]);
        assert_eq!(enumerate_rules(&t, 10).unwrap().len(), 2);
        let t = tree(vec![vec![-1.0, 1.0], vec![-1.0, 1.0]]);
        let rules = enumerate_rules(&t, 100).unwrap();
        assert_eq!(rules.len() as u128, count_rules(&t));
        assert_eq!(rules.len(), 1 + 2 * 2);
        let mut dedup = rules.clone();
        dedup.sort_by(|a, b| a.stop.cmp(&b.stop));
        dedup.dedup();
        assert_eq!(dedup.len(), rules.len());
        assert!(matches!(enumerate_rules(&t, 4), Err(Error::RuleCap { count: 5, cap: 4 })));
    }

    #[test]
    fn rule_measure_and_round_trip() {
        let t = tree(vec![vec![-1.0, 1.0], vec![-0.5, 0.5]]);
        let p = PathMeasure::uniform(4);
        let d: Vec<bool> = t.vertices.iter().map(|v| v.date == 1 && v.state[0] > 1.0).collect();
        let rule = StoppingRule::from_decisions(&t, &d);
        let mu = rule_to_enlarged(&t, &p, &rule, &[0, 1, 2]).unwrap();
        assert_eq!(mu.omega_marginal(), p);
        let ex = extract_pair(&t, &mu, None).unwrap();
        for (a, b) in ex.p.weights.iter().zip(&p.weights) {
            assert!((a - b).abs() < 1e-12);
        }
        let ind = RandomizedStoppingTime::from_rule(&t, &rule);
        for (a, b) in ex.a.a.iter().zip(&ind.a) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn decomposition_matches_extraction() {
        let t = tree(vec![vec![-1.0, 1.0], vec![-1.0, 1.0]]);
        let n = t.num_paths();
        let raw: Vec<f64> = (0..3 * n).map(|i| 1.0 + (i as f64 * 0.37).sin().abs()).collect();
        let total: f64 = raw.iter().sum();
        let mu = EnlargedMeasure::new(vec![0, 1, 2], n, raw.iter().map(|x| x / total).collect()).unwrap();
        let ex = extract_pair(&t, &mu, Some(1e-6)).unwrap();
        let s = survival(&t, &mu).unwrap();
        let dec = multiplicative_decompose(&t, &mu.omega_marginal(), &s).unwrap();
        for v in 0..t.vertices.len() {
            assert!((dec.a[v] - ex.a.a[v]).abs() < 1e-12);
            assert!((dec.m[v].unwrap() - ex.azema.m[v].unwrap()).abs() < 1e-12);
            assert!((s[v].unwrap() - dec.m[v].unwrap() * dec.d[v]).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_survival() {
        let t = tree(vec![vec![0.0], vec![0.0]]);
        let mu = EnlargedMeasure::new(vec![0, 1, 2], 1, vec![0.2, 0.3, 0.5]).unwrap();
        let s = survival(&t, &mu).unwrap();
        let dec = multiplicative_decompose(&t, &mu.omega_marginal(), &s).unwrap();
        for v in 0..3 {
            assert!((dec.m[v].unwrap() - 1.0).abs() < 1e-15);
            assert!((dec.d[v] - s[v].unwrap()).abs() < 1e-15);
        }
        let exhausted = vec![Some(1.0), Some(0.0), Some(0.0)];
        assert!(matches!(
            multiplicative_decompose(&t, &mu.omega_marginal(), &exhausted),
            Err(Error::SurvivalExhausted { .. })
        ));
    }

    #[test]
    fn tau_r_of_linear_profile() {
        let t = tree(vec![vec![0.0], vec![0.0], vec![0.0], vec![0.0]]);
        let a = RandomizedStoppingTime {
            a: vec![0.0, 0.25, 0.5, 0.75, 1.0],
        };
        for (r, want) in [(0.1, 1), (0.25, 1), (0.3, 2), (0.6, 3), (1.0, 4)] {
            assert_eq!(tau_r(&t, &a, r).stop_date(&t, 0), want);
        }
    }

    #[test]
    fn disintegration_uniform() {
        let t = tree(vec![vec![0.0], vec![0.0], vec![0.0]]);
        let mu = EnlargedMeasure::new(vec![0, 1, 2, 3], 1, vec![0.25; 4]).unwrap();
        let r = disintegrate(&t, &mu).unwrap();
        assert_eq!(r[0].as_ref().unwrap(), &vec![0.25, 0.5, 0.75, 1.0]);
    }
}

//! The joint lattice of asset prices `X` and dynamically traded option
//! prices `Y` used by the dynamic lift.
//!
//! A pre-trading date is prepended at which `X = x0` and `Y = 0`. At every
//! later vertex the admissible `Y` levels are: the previous level (carry),
//! explicit branch levels for that date, and seed levels supplied per base
//! vertex (typically conditional option prices of some calibrated model).
//! At the terminal date `Y` is pinned to the option payoffs `g(X)`. States
//! that cannot be continued by any one-step martingale kernel satisfying the
//! band are pruned.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Tree, TreeNode};
use crate::lp::{solve_lp, LinearProgram, LpStatus, RowKind, Sense};
use crate::measures::ModelClass;
use crate::payoff::AmericanPayoff;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YBranch {
    /// Base date index at which these levels become available.
    pub date: usize,
    pub levels: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YSpec {
    #[serde(default)]
    pub branches: Vec<YBranch>,
    /// Whether solvers should add levels lifted from their own optimizers.
    #[serde(default = "default_true")]
    pub lift_seeds: bool,
}

fn default_true() -> bool {
    true
}

impl Default for YSpec {
    fn default() -> Self {
        Self {
            branches: Vec::new(),
            lift_seeds: true,
        }
    }
}

impl YSpec {
    pub fn branching(date: usize, levels: Vec<Vec<f64>>) -> Self {
        Self {
            branches: vec![YBranch { date, levels }],
            lift_seeds: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointLattice {
    pub tree: Tree,
    /// Base path of each joint path.
    pub base_paths: Vec<usize>,
    /// Number of option-price coordinates.
    pub m: usize,
}

impl JointLattice {
    /// Model class on the joint tree: the base band is transferred to the
    /// asset coordinates, there are no calibration rows (the pin and the
    /// martingale property of `Y` replace them), and stopping may happen at
    /// every joint date including the pre-trading one.
    pub fn model(&self, base: &ModelClass) -> Result<ModelClass> {
        Ok(ModelClass::new(self.tree.clone(), base.band.transfer(&self.tree))?.with_conditioning(base.conditioning))
    }

    pub fn payoff(&self, z: &AmericanPayoff) -> AmericanPayoff {
        z.transfer(&self.tree)
    }
}

fn key(y: &[f64]) -> Vec<i64> {
    y.iter().map(|v| (v * 1e12).round() as i64).collect()
}

fn push_level(out: &mut Vec<Vec<f64>>, y: &[f64]) {
    let k = key(y);
    if !out.iter().any(|z| key(z) == k) {
        out.push(y.to_vec());
    }
}

struct Builder<'a> {
    base: &'a ModelClass,
    branch_levels: HashMap<usize, Vec<Vec<f64>>>,
    seeds: &'a [Vec<Vec<f64>>],
    memo: HashMap<(usize, Vec<i64>), Option<TreeNode>>,
    first_failure: Option<usize>,
}

impl Builder<'_> {
    fn g_at(&self, leaf: usize) -> Vec<f64> {
        let p = self.base.tree.vertices[leaf].first_path;
        self.base.options.iter().map(|row| row[p]).collect()
    }

    fn levels(&self, c: usize, prev: &[f64]) -> Vec<Vec<f64>> {
        let tree = &self.base.tree;
        if tree.vertices[c].is_leaf() {
            return vec![self.g_at(c)];
        }
        let mut out = vec![prev.to_vec()];
        if let Some(ls) = self.branch_levels.get(&tree.vertices[c].date) {
            ls.iter().for_each(|y| push_level(&mut out, y));
        }
        if let Some(ls) = self.seeds.get(c) {
            ls.iter().for_each(|y| push_level(&mut out, y));
        }
        out
    }

    fn node(&mut self, b: usize, y: &[f64]) -> Result<Option<TreeNode>> {
        let k = (b, key(y));
        if let Some(hit) = self.memo.get(&k) {
            return Ok(hit.clone());
        }
        let tree = &self.base.tree;
        let vx = &tree.vertices[b];
        let mut state = vx.state.clone();
        state.extend_from_slice(y);
        let result = if vx.is_leaf() {
            Some(TreeNode {
                state,
                base: b,
                children: Vec::new(),
            })
        } else {
            let mut children = Vec::new();
            for &c in &vx.children.clone() {
                for y2 in self.levels(c, y) {
                    if let Some(n) = self.node(c, &y2)? {
                        children.push(n);
                    }
                }
            }
            let band = if tree.band_applies(vx.date) {
                self.base.band.interval(b).map(|iv| (iv.lo.clone(), iv.hi.clone()))
            } else {
                None
            };
            if viable(&state, &children, tree.x_dim, band.as_ref())? {
                Some(TreeNode { state, base: b, children })
            } else {
                let leaf_children = vx.children.iter().all(|&c| tree.vertices[c].is_leaf());
                if leaf_children && self.first_failure.is_none() {
                    self.first_failure = Some(vx.first_path);
                }
                None
            }
        };
        self.memo.insert(k, result.clone());
        Ok(result)
    }
}

/// Whether some kernel on `children` has zero drift in every coordinate and
/// (if given) one-step asset variance within the band.
fn viable(state: &[f64], children: &[TreeNode], x_dim: usize, band: Option<&(Vec<f64>, Vec<f64>)>) -> Result<bool> {
    if children.is_empty() {
        return Ok(false);
    }
    let mut lp = LinearProgram::new(Sense::Minimize);
    for _ in children {
        lp.add_nonneg(0.0);
    }
    lp.add_row((0..children.len()).map(|j| (j, 1.0)).collect(), RowKind::Eq, 1.0);
    for i in 0..state.len() {
        let coeffs: Vec<(usize, f64)> = children
            .iter()
            .enumerate()
            .map(|(j, c)| (j, c.state[i] - state[i]))
            .filter(|(_, a)| *a != 0.0)
            .collect();
        if !coeffs.is_empty() {
            lp.add_row(coeffs, RowKind::Eq, 0.0);
        }
    }
    if let Some((lo, hi)) = band {
        for i in 0..x_dim {
            let sq: Vec<f64> = children.iter().map(|c| (c.state[i] - state[i]).powi(2)).collect();
            lp.add_row(sq.iter().enumerate().map(|(j, s)| (j, s - hi[i])).collect(), RowKind::Le, 0.0);
            if lo[i] > 0.0 {
                lp.add_row(sq.iter().enumerate().map(|(j, s)| (j, s - lo[i])).collect(), RowKind::Ge, 0.0);
            }
        }
    }
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(true),
        LpStatus::Infeasible => Ok(false),
        other => Err(Error::Solver(format!("viability check ended with status {other:?}"))),
    }
}

/// Builds the joint lattice over the base model's tree, options and band.
/// `seeds[v]` lists extra option-price levels at base vertex `v`.
pub fn build_joint_lattice(base: &ModelClass, pre_date: f64, y_spec: &YSpec, seeds: &[Vec<Vec<f64>>]) -> Result<JointLattice> {
    let tree = &base.tree;
    if tree.pre_dates != 0 {
        return Err(Error::InvalidLattice("base tree already has a pre-trading date".into()));
    }
    if pre_date.is_nan() || pre_date >= tree.dates[0] {
        return Err(Error::InvalidGrid("pre_date must precede the first date".into()));
    }
    let m = base.options.len();
    let mut branch_levels: HashMap<usize, Vec<Vec<f64>>> = HashMap::new();
    for br in &y_spec.branches {
        if br.date > tree.terminal() {
            return Err(Error::DateOutOfRange {
                date: br.date,
                terminal: tree.terminal(),
            });
        }
        for y in &br.levels {
            if y.len() != m || y.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("Y levels must be finite {m}-vectors")));
            }
            push_level(branch_levels.entry(br.date).or_default(), y);
        }
    }
    let mut builder = Builder {
        base,
        branch_levels,
        seeds,
        memo: HashMap::new(),
        first_failure: None,
    };
    let zero = vec![0.0; m];
    let mut children = Vec::new();
    for y in builder.levels(tree.root(), &zero) {
        if let Some(n) = builder.node(tree.root(), &y)? {
            children.push(n);
        }
    }
    let mut pre_state = tree.vertices[0].state.clone();
    pre_state.extend_from_slice(&zero);
    if !viable(&pre_state, &children, tree.x_dim, None)? {
        return Err(Error::InfeasiblePin {
            x_path: builder.first_failure.unwrap_or(0),
        });
    }
    let root = TreeNode {
        state: pre_state,
        base: tree.root(),
        children,
    };
    let mut dates = vec![pre_date];
    dates.extend_from_slice(&tree.dates);
    let joint = Tree::from_nested(dates, tree.x_dim, 1, &root)?;
    let base_paths = joint
        .leaves
        .iter()
        .map(|&l| tree.vertices[joint.vertices[l].base].first_path)
        .collect();
    Ok(JointLattice {
        tree: joint,
        base_paths,
        m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, LatticeSpec};
    use crate::measures::VolatilityBand;

    fn model(steps: Vec<Vec<f64>>, g: Vec<f64>) -> ModelClass {
        let n = steps.len();
        let lat = build_lattice(&LatticeSpec::uniform((0..=n).map(|i| i as f64).collect(), 1.0, steps)).unwrap();
        let band = VolatilityBand::unconstrained(&lat.tree);
        ModelClass::new(lat.tree, band).unwrap().with_option_values(vec![g]).unwrap()
    }

    #[test]
    fn default_spec_matches_an_empty_document() {
        let parsed: YSpec = serde_json::from_str("{}").unwrap();
        assert_eq!(parsed, YSpec::default());
        assert!(parsed.lift_seeds);
    }

    #[test]
    fn zero_payoff_gives_zero_prices() {
        let base = model(vec![vec![-0.2, 0.2]], vec![0.0, 0.0]);
        let j = build_joint_lattice(&base, -1.0, &YSpec::default(), &[]).unwrap();
        assert!(j.tree.vertices.iter().all(|v| v.state[1] == 0.0));
        assert_eq!(j.tree.num_paths(), 2);
        assert_eq!(j.base_paths, vec![0, 1]);
    }

    #[test]
    fn single_path_with_nonzero_pin_is_infeasible() {
        let base = model(vec![vec![0.0]], vec![0.3]);
        let err = build_joint_lattice(&base, -1.0, &YSpec::default(), &[]).unwrap_err();
        assert!(matches!(err, Error::InfeasiblePin { x_path: 0 }));
    }

    #[test]
    fn inconsistent_branch_levels_are_pruned() {
        let base = model(vec![vec![0.0], vec![-0.2, 0.2]], vec![-0.1, 0.1]);
        let spec = YSpec::branching(0, vec![vec![0.05], vec![-0.05]]);
        let j = build_joint_lattice(&base, -1.0, &spec, &[]).unwrap();
        let root_levels: Vec<f64> = j.tree.vertices[0].children.iter().map(|&c| j.tree.vertices[c].state[1]).collect();
        assert_eq!(root_levels, vec![0.0]);
    }
}

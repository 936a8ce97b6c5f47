//! Seeded random instances: small explicit trees, martingale measures built
//! from mixtures of two-point kernels, bands around a reference measure's
//! conditional variances, payoffs and calibrated static options.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{lattice_from_tree, TimeGrid, Tree, TreeNode};
use crate::measures::{BandInterval, EnlargedMeasure, ModelClass, PathMeasure, VolatilityBand};
use crate::payoff::AmericanPayoff;
use crate::stopping::{count_rules, RandomizedStoppingTime};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceConfig {
    pub max_depth: usize,
    /// Maximum children per vertex (1 means a self-child).
    pub max_branching: usize,
    /// Trees with more canonical stopping rules are rejected.
    pub max_rules: u128,
    pub num_options: usize,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        Self {
            max_depth: 4,
            max_branching: 3,
            max_rules: 600,
            num_options: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RandomInstance {
    pub model: ModelClass,
    pub z: AmericanPayoff,
    /// A measure of the class (martingale, in the band, calibrated).
    pub reference: PathMeasure,
}

fn round(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn random_node<R: Rng>(rng: &mut R, x: f64, left: usize, max_branching: usize) -> TreeNode {
    if left == 0 {
        return TreeNode::leaf(vec![x]);
    }
    let b = rng.gen_range(1..=max_branching.max(1));
    let incs: Vec<f64> = match b {
        1 => vec![0.0],
        2 => vec![round(rng.gen_range(0.05..0.3)), -round(rng.gen_range(0.05..0.3))],
        _ => {
            let mut v = vec![round(rng.gen_range(0.05..0.3)), -round(rng.gen_range(0.05..0.3))];
            for _ in 2..b {
                let mid = if rng.gen_bool(0.5) {
                    0.0
                } else {
                    round(rng.gen_range(-0.04..0.04))
                };
                if !v.contains(&mid) {
                    v.push(mid);
                }
            }
            v.sort_by(|a, b| b.partial_cmp(a).unwrap());
            v
        }
    };
    let children = incs
        .iter()
        .map(|dx| random_node(rng, round(x + dx), left - 1, max_branching))
        .collect();
    TreeNode::with_children(vec![x], children)
}

/// A random scalar tree starting at 1 with `1..=max_depth` steps; resampled
/// until its rule count is within `max_rules`.
pub fn random_tree<R: Rng>(rng: &mut R, max_depth: usize, max_branching: usize, max_rules: u128) -> Result<Tree> {
    for _ in 0..10_000 {
        let depth = rng.gen_range(1..=max_depth.max(1));
        let root = random_node(rng, 1.0, depth, max_branching);
        let grid = TimeGrid::new((0..=depth).map(|t| t as f64).collect(), None)?;
        let tree = lattice_from_tree(grid, &root)?.tree;
        if count_rules(&tree) <= max_rules {
            return Ok(tree);
        }
    }
    Err(Error::Config("no random tree within the rule cap".into()))
}

/// Random one-step martingale kernel on the children of `v`: a random
/// convex combination of all two-point kernels (and the Dirac mass on a
/// zero increment).
pub fn random_kernel<R: Rng>(rng: &mut R, tree: &Tree, v: usize) -> Vec<f64> {
    let vx = &tree.vertices[v];
    let dx: Vec<f64> = vx.children.iter().map(|&c| tree.increment(v, c)[0]).collect();
    let n = dx.len();
    let mut k = vec![0.0; n];
    let mut total = 0.0;
    for i in 0..n {
        if dx[i] == 0.0 {
            let w = rng.gen_range(0.05..1.0);
            k[i] += w;
            total += w;
        }
        for j in 0..n {
            if dx[i] > 0.0 && dx[j] < 0.0 {
                let w = rng.gen_range(0.05..1.0);
                let span = dx[i] - dx[j];
                k[i] += w * -dx[j] / span;
                k[j] += w * dx[i] / span;
                total += w;
            }
        }
    }
    k.iter().map(|w| w / total).collect()
}

/// Path measure from random kernels at every vertex.
pub fn random_martingale_measure<R: Rng>(rng: &mut R, tree: &Tree) -> PathMeasure {
    let mut mass = vec![0.0; tree.vertices.len()];
    mass[tree.root()] = 1.0;
    for v in 0..tree.vertices.len() {
        let vx = &tree.vertices[v];
        if vx.is_leaf() {
            continue;
        }
        let k = random_kernel(rng, tree, v);
        for (&c, w) in vx.children.iter().zip(k) {
            mass[c] = mass[v] * w;
        }
    }
    PathMeasure {
        weights: tree.leaves.iter().map(|&l| mass[l]).collect(),
    }
}

/// One-step conditional variance of `p` at every vertex (`None` at leaves
/// and zero-mass vertices).
pub fn kernel_variances(tree: &Tree, p: &PathMeasure) -> Vec<Option<f64>> {
    let mass = p.vertex_masses(tree);
    (0..tree.vertices.len())
        .map(|v| {
            let vx = &tree.vertices[v];
            if vx.is_leaf() || mass[v] <= 0.0 {
                return None;
            }
            Some(
                vx.children
                    .iter()
                    .map(|&c| mass[c] * tree.increment(v, c)[0].powi(2))
                    .sum::<f64>()
                    / mass[v],
            )
        })
        .collect()
}

/// A band containing the variances of `p`: unconstrained, tight around the
/// reference, or mixed per vertex.
pub fn random_band<R: Rng>(rng: &mut R, tree: &Tree, p: &PathMeasure) -> Result<VolatilityBand> {
    let vars = kernel_variances(tree, p);
    let mode = rng.gen_range(0..3);
    VolatilityBand::from_fn(tree, |v| {
        let var = vars[v]?;
        if mode == 0 || (mode == 2 && rng.gen_bool(0.3)) {
            return None;
        }
        let lo = var * (1.0 - rng.gen_range(0.0..0.6));
        let hi = var * (1.0 + rng.gen_range(0.0..0.6));
        Some(BandInterval::scalar(lo, hi, 1))
    })
}

/// A random bounded American payoff: intrinsic call or put value plus noise.
pub fn random_payoff<R: Rng>(rng: &mut R, tree: &Tree) -> Result<AmericanPayoff> {
    let strike = round(rng.gen_range(0.8..1.2));
    let call = rng.gen_bool(0.5);
    let noise = rng.gen_range(0.0..0.1);
    let mut draws: Vec<f64> = (0..tree.vertices.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
    AmericanPayoff::from_fn(tree, |_, x| {
        let e = draws.pop().unwrap_or(0.0);
        let intrinsic = if call { x[0] - strike } else { strike - x[0] };
        intrinsic.max(0.0) + noise * e
    })
}

/// Random terminal payoffs priced under `p`, so `p` is calibrated.
pub fn random_options<R: Rng>(rng: &mut R, tree: &Tree, p: &PathMeasure, m: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|_| {
            let strike = round(rng.gen_range(0.8..1.2));
            let call = rng.gen_bool(0.5);
            let f: Vec<f64> = tree
                .leaves
                .iter()
                .map(|&l| {
                    let x = tree.vertices[l].state[0];
                    if call {
                        (x - strike).max(0.0)
                    } else {
                        (strike - x).max(0.0)
                    }
                })
                .collect();
            let price = p.expectation(&f);
            f.iter().map(|v| v - price).collect()
        })
        .collect()
}

pub fn random_instance<R: Rng>(rng: &mut R, cfg: &InstanceConfig) -> Result<RandomInstance> {
    let tree = random_tree(rng, cfg.max_depth, cfg.max_branching, cfg.max_rules)?;
    let reference = random_martingale_measure(rng, &tree);
    let band = random_band(rng, &tree, &reference)?;
    let z = random_payoff(rng, &tree)?;
    let options = random_options(rng, &tree, &reference, cfg.num_options);
    let model = ModelClass::new(tree, band)?.with_option_values(options)?;
    Ok(RandomInstance { model, z, reference })
}

/// Random randomized stopping time from per-vertex stop hazards; stopping
/// happens only at `theta_dates`.
pub fn random_stopping_time<R: Rng>(rng: &mut R, tree: &Tree, theta_dates: &[usize]) -> RandomizedStoppingTime {
    let mut a = vec![0.0; tree.vertices.len()];
    for v in 0..tree.vertices.len() {
        let vx = &tree.vertices[v];
        let prev = vx.parent.map(|u| a[u]).unwrap_or(0.0);
        a[v] = if vx.is_leaf() {
            1.0
        } else if theta_dates.contains(&vx.date) {
            let h: f64 = if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..1.0) };
            prev + (1.0 - prev) * h
        } else {
            prev
        };
    }
    RandomizedStoppingTime { a }
}

/// `mu(theta = u, omega) = P(omega) (A_u - A_{u-1})(omega)`; `A` must only
/// increase at `theta_dates`.
pub fn product_measure(tree: &Tree, p: &PathMeasure, a: &RandomizedStoppingTime, theta_dates: &[usize]) -> Result<EnlargedMeasure> {
    let n = tree.num_paths();
    let mut w = vec![0.0; theta_dates.len() * n];
    for path in 0..n {
        let pv = tree.path_vertices(path);
        for (k, &u) in theta_dates.iter().enumerate() {
            let lo = if k == 0 { 0.0 } else { a.a[pv[theta_dates[k - 1]]] };
            w[k * n + path] = p.weights[path] * (a.a[pv[u]] - lo).max(0.0);
        }
    }
    EnlargedMeasure::new(theta_dates.to_vec(), n, w)
}

/// Mixture of two independent (martingale measure, randomized stopping
/// time) products; a martingale measure on the enlarged space whose
/// kernels may depend on the stop status.
pub fn random_enlarged_measure<R: Rng>(rng: &mut R, tree: &Tree, theta_dates: &[usize]) -> Result<EnlargedMeasure> {
    let mut parts = Vec::new();
    for _ in 0..2 {
        let p = random_martingale_measure(rng, tree);
        let a = random_stopping_time(rng, tree, theta_dates);
        parts.push(product_measure(tree, &p, &a, theta_dates)?);
    }
    let lam = rng.gen_range(0.1..0.9);
    EnlargedMeasure::mixture(&[(lam, &parts[0]), (1.0 - lam, &parts[1])])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::all_dates;
    use crate::measures::{check_constraints, validate_martingale, Filtration};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reference_measure_belongs_to_the_class() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..30 {
            let inst = random_instance(
                &mut rng,
                &InstanceConfig {
                    num_options: 2,
                    ..Default::default()
                },
            )
            .unwrap();
            let rep = check_constraints(&inst.reference, &inst.model, 1e-9).unwrap();
            assert!(rep.all_ok(), "{:?}", rep.violations);
            assert!(count_rules(&inst.model.tree) <= 600);
        }
    }

    #[test]
    fn enlarged_mixtures_are_martingales() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let tree = random_tree(&mut rng, 4, 3, 600).unwrap();
            let dates = all_dates(&tree);
            let mu = random_enlarged_measure(&mut rng, &tree, &dates).unwrap();
            assert!((mu.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(validate_martingale(&mu, &tree, Filtration::Enlarged, 1e-9).unwrap().is_empty());
        }
    }
}

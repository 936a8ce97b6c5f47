//! Finite scenario trees: time grids, lattices, paths, filtration atoms and
//! the enlarged space of (stop date, path) pairs.
//!
//! Every lattice is stored as its prefix tree. A vertex of the tree is a
//! filtration atom (the set of paths sharing a prefix up to its date), and
//! vertices are numbered in depth-first order so that the paths through a
//! vertex form a contiguous id range.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_PATH_CAP: usize = 100_000;
pub const LATTICE_SCHEMA_VERSION: u32 = 1;
const MAIN_REGIME: &str = "main";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub dates: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre_date: Option<f64>,
}

impl TimeGrid {
    pub fn new(dates: Vec<f64>, pre_date: Option<f64>) -> Result<Self> {
        let grid = Self { dates, pre_date };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dates.len() < 2 {
            return Err(Error::InvalidGrid("at least two dates are required".into()));
        }
        if self.dates.iter().any(|d| !d.is_finite()) {
            return Err(Error::InvalidGrid("dates must be finite".into()));
        }
        if self.dates.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("dates must be strictly increasing".into()));
        }
        if let Some(pre) = self.pre_date {
            if !pre.is_finite() || pre >= self.dates[0] {
                return Err(Error::InvalidGrid("pre_date must precede the first date".into()));
            }
        }
        Ok(())
    }

    pub fn terminal(&self) -> usize {
        self.dates.len() - 1
    }

    /// Length of step `t -> t + 1`.
    pub fn dt(&self, t: usize) -> f64 {
        self.dates[t + 1] - self.dates[t]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub dx: Vec<f64>,
    /// Regime entered by the child; defaults to the parent's regime.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<String>,
}

impl Branch {
    pub fn new(dx: Vec<f64>) -> Self {
        Self { dx, to: None }
    }

    pub fn into_regime(dx: Vec<f64>, regime: &str) -> Self {
        Self {
            dx,
            to: Some(regime.to_string()),
        }
    }
}

fn default_cap() -> usize {
    DEFAULT_PATH_CAP
}

/// Recipe for a lattice. `steps[t]` lists the branches taken at date `t` by
/// nodes of the initial regime; extra regimes (for example a frozen,
/// constant-price regime) are listed in `regimes`. A regime with an empty
/// step list never moves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub grid: TimeGrid,
    pub x0: Vec<f64>,
    pub steps: Vec<Vec<Branch>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub regimes: BTreeMap<String, Vec<Vec<Branch>>>,
    /// Nodes with any coordinate at or above this level stop moving.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub absorb_above: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub absorb_below: Option<f64>,
    #[serde(default = "default_cap")]
    pub max_paths: usize,
}

impl LatticeSpec {
    /// One-dimensional lattice where every node at date `t` branches by the
    /// increments `steps[t]`.
    pub fn uniform(dates: Vec<f64>, x0: f64, steps: Vec<Vec<f64>>) -> Self {
        Self {
            grid: TimeGrid { dates, pre_date: None },
            x0: vec![x0],
            steps: steps
                .into_iter()
                .map(|s| s.into_iter().map(|dx| Branch::new(vec![dx])).collect())
                .collect(),
            regimes: BTreeMap::new(),
            absorb_above: None,
            absorb_below: None,
            max_paths: DEFAULT_PATH_CAP,
        }
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    fn regime_steps(&self, name: &str) -> Option<&Vec<Vec<Branch>>> {
        if name == MAIN_REGIME {
            Some(&self.steps)
        } else {
            self.regimes.get(name)
        }
    }

    fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let d = self.dim();
        if d == 0 || self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidLattice("x0 must be a finite non-empty vector".into()));
        }
        let nsteps = self.grid.dates.len() - 1;
        let mut names: Vec<&str> = vec![MAIN_REGIME];
        names.extend(self.regimes.keys().map(String::as_str));
        for name in names {
            let steps = self.regime_steps(name).expect("listed regime");
            if steps.is_empty() && name != MAIN_REGIME {
                continue;
            }
            if steps.len() != nsteps {
                return Err(Error::InvalidLattice(format!(
                    "regime '{name}' has {} steps, grid needs {nsteps}",
                    steps.len()
                )));
            }
            for (t, branches) in steps.iter().enumerate() {
                if branches.is_empty() {
                    return Err(Error::InvalidLattice(format!("regime '{name}' has empty branching at step {t}")));
                }
                for b in branches {
                    if b.dx.len() != d || b.dx.iter().any(|v| !v.is_finite()) {
                        return Err(Error::InvalidLattice(format!(
                            "regime '{name}' step {t}: increments must be finite {d}-vectors"
                        )));
                    }
                    if let Some(to) = &b.to {
                        if self.regime_steps(to).is_none() {
                            return Err(Error::InvalidLattice(format!("unknown regime '{to}'")));
                        }
                    }
                }
                if branches.len() == 1 && branches[0].dx.iter().any(|v| *v != 0.0) {
                    return Err(Error::InvalidLattice(format!(
                        "regime '{name}' step {t}: a single branch must be a self-child (zero increment)"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub date: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Traded coordinates: asset prices first, then any additional traded
    /// prices (option prices on a joint lattice).
    pub state: Vec<f64>,
    /// Base-lattice vertex carrying this vertex's asset-price history.
    pub base: usize,
    pub first_path: usize,
    pub path_count: usize,
}

impl Vertex {
    pub fn paths(&self) -> Range<usize> {
        self.first_path..self.first_path + self.path_count
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Prefix tree shared by base and joint lattices.
#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    pub dates: Vec<f64>,
    /// Number of leading asset-price coordinates in each state.
    pub x_dim: usize,
    /// Number of leading pre-trading dates (1 on a joint lattice, else 0).
    /// Volatility bands do not apply to steps starting at these dates.
    pub pre_dates: usize,
    pub vertices: Vec<Vertex>,
    pub by_date: Vec<Vec<usize>>,
    pub leaves: Vec<usize>,
    path_vertex: Vec<usize>,
}

/// Nested form of a tree, used to assemble a [`Tree`] from explicit nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub state: Vec<f64>,
    #[serde(default)]
    pub base: usize,
    #[serde(default)]
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    pub fn leaf(state: Vec<f64>) -> Self {
        Self {
            state,
            base: 0,
            children: Vec::new(),
        }
    }

    pub fn with_children(state: Vec<f64>, children: Vec<TreeNode>) -> Self {
        Self { state, base: 0, children }
    }
}

impl Tree {
    pub fn from_nested(dates: Vec<f64>, x_dim: usize, pre_dates: usize, root: &TreeNode) -> Result<Self> {
        let ndates = dates.len();
        let mut tree = Tree {
            dates,
            x_dim,
            pre_dates,
            vertices: Vec::new(),
            by_date: vec![Vec::new(); ndates],
            leaves: Vec::new(),
            path_vertex: Vec::new(),
        };
        tree.push(root, 0, None)?;
        let t1 = ndates;
        let mut table = vec![0usize; tree.leaves.len() * t1];
        for (p, &leaf) in tree.leaves.iter().enumerate() {
            let mut v = leaf;
            loop {
                let vx = &tree.vertices[v];
                table[p * t1 + vx.date] = v;
                match vx.parent {
                    Some(u) => v = u,
                    None => break,
                }
            }
        }
        tree.path_vertex = table;
        Ok(tree)
    }

    fn push(&mut self, node: &TreeNode, date: usize, parent: Option<usize>) -> Result<usize> {
        let id = self.vertices.len();
        let first_path = self.leaves.len();
        self.vertices.push(Vertex {
            date,
            parent,
            children: Vec::new(),
            state: node.state.clone(),
            base: node.base,
            first_path,
            path_count: 0,
        });
        self.by_date[date].push(id);
        if node.children.is_empty() {
            if date + 1 != self.dates.len() {
                return Err(Error::InvalidLattice(format!("vertex {id} at date {date} has no children")));
            }
            self.leaves.push(id);
        } else {
            if date + 1 >= self.dates.len() {
                return Err(Error::InvalidLattice("tree deeper than its grid".into()));
            }
            for child in &node.children {
                let c = self.push(child, date + 1, Some(id))?;
                self.vertices[id].children.push(c);
            }
        }
        self.vertices[id].path_count = self.leaves.len() - first_path;
        Ok(id)
    }

    pub fn terminal(&self) -> usize {
        self.dates.len() - 1
    }

    /// Nested form of the subtree at `v`; vertex ids are preserved when the
    /// result is rebuilt with [`lattice_from_tree`].
    pub fn to_nested(&self, v: usize) -> TreeNode {
        let vx = &self.vertices[v];
        TreeNode::with_children(vx.state.clone(), vx.children.iter().map(|&c| self.to_nested(c)).collect())
    }

    pub fn num_paths(&self) -> usize {
        self.leaves.len()
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].state.len()
    }

    pub fn root(&self) -> usize {
        0
    }

    /// Vertex (atom) containing `path` at date `t`.
    pub fn vertex_at(&self, path: usize, t: usize) -> usize {
        self.path_vertex[path * self.dates.len() + t]
    }

    pub fn path_vertices(&self, path: usize) -> &[usize] {
        let t1 = self.dates.len();
        &self.path_vertex[path * t1..(path + 1) * t1]
    }

    /// Increment of the traded state from `v` to `child`.
    pub fn increment(&self, v: usize, child: usize) -> Vec<f64> {
        let a = &self.vertices[v].state;
        let b = &self.vertices[child].state;
        b.iter().zip(a).map(|(y, x)| y - x).collect()
    }

    /// Whether volatility bands constrain the step leaving date `t`.
    pub fn band_applies(&self, t: usize) -> bool {
        t >= self.pre_dates
    }

    pub fn atoms(&self, t: usize) -> Result<Vec<FiltrationAtom>> {
        if t > self.terminal() {
            return Err(Error::DateOutOfRange {
                date: t,
                terminal: self.terminal(),
            });
        }
        Ok(self.by_date[t]
            .iter()
            .map(|&v| FiltrationAtom {
                date: t,
                vertex: v,
                paths: self.vertices[v].paths(),
            })
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiltrationAtom {
    pub date: usize,
    pub vertex: usize,
    pub paths: Range<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub id: usize,
    pub values: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppedPath {
    pub stop_index: usize,
    pub prefix: Vec<Vec<f64>>,
}

impl Path {
    pub fn stopped(&self, u: usize) -> StoppedPath {
        StoppedPath {
            stop_index: u,
            prefix: self.values[..=u].to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    pub grid: TimeGrid,
    /// Recipe the lattice was built from; `None` for explicit trees.
    pub spec: Option<LatticeSpec>,
    pub tree: Tree,
}

pub fn build_lattice(spec: &LatticeSpec) -> Result<Lattice> {
    spec.validate()?;
    let nsteps = spec.grid.dates.len() - 1;
    let mut count = 0usize;
    let root = grow(spec, 0, &spec.x0, MAIN_REGIME, nsteps, &mut count)?;
    let mut tree = Tree::from_nested(spec.grid.dates.clone(), spec.dim(), 0, &root)?;
    for v in 0..tree.vertices.len() {
        tree.vertices[v].base = v;
    }
    Ok(Lattice {
        grid: spec.grid.clone(),
        spec: Some(spec.clone()),
        tree,
    })
}

/// Builds a lattice from an explicit nested tree whose depth matches the
/// grid. Each non-terminal node needs at least two children or a single
/// self-child.
pub fn lattice_from_tree(grid: TimeGrid, root: &TreeNode) -> Result<Lattice> {
    grid.validate()?;
    let d = root.state.len();
    check_explicit(root, d)?;
    let mut tree = Tree::from_nested(grid.dates.clone(), d, 0, root)?;
    for v in 0..tree.vertices.len() {
        tree.vertices[v].base = v;
    }
    Ok(Lattice {
        grid,
        spec: None,
        tree,
    })
}

fn check_explicit(node: &TreeNode, d: usize) -> Result<()> {
    if node.state.len() != d || node.state.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidLattice("node states must be finite vectors of equal dimension".into()));
    }
    if node.children.len() == 1 && node.children[0].state != node.state {
        return Err(Error::InvalidLattice("a single child must be a self-child".into()));
    }
    node.children.iter().try_for_each(|c| check_explicit(c, d))
}

fn grow(spec: &LatticeSpec, t: usize, x: &[f64], regime: &str, nsteps: usize, count: &mut usize) -> Result<TreeNode> {
    if t == nsteps {
        *count += 1;
        if *count > spec.max_paths {
            return Err(Error::PathCap {
                count: *count,
                cap: spec.max_paths,
            });
        }
        return Ok(TreeNode {
            state: x.to_vec(),
            base: 0,
            children: Vec::new(),
        });
    }
    let absorbed = spec.absorb_above.is_some_and(|hi| x.iter().any(|v| *v >= hi))
        || spec.absorb_below.is_some_and(|lo| x.iter().any(|v| *v <= lo));
    let steps = spec.regime_steps(regime).expect("validated regime");
    let mut children = Vec::new();
    if absorbed || steps.is_empty() {
        children.push(grow(spec, t + 1, x, regime, nsteps, count)?);
    } else {
        for b in &steps[t] {
            let next: Vec<f64> = x.iter().zip(&b.dx).map(|(a, d)| a + d).collect();
            let r = b.to.as_deref().unwrap_or(regime);
            children.push(grow(spec, t + 1, &next, r, nsteps, count)?);
        }
    }
    Ok(TreeNode {
        state: x.to_vec(),
        base: 0,
        children,
    })
}

impl Lattice {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn num_paths(&self) -> usize {
        self.tree.num_paths()
    }

    pub fn terminal(&self) -> usize {
        self.tree.terminal()
    }

    /// Number of distinct asset-price values at date `t` (the recombined
    /// node count).
    pub fn distinct_nodes(&self, t: usize) -> usize {
        let mut seen = BTreeSet::new();
        for &v in &self.tree.by_date[t] {
            let key: Vec<i64> = self.tree.vertices[v]
                .state
                .iter()
                .map(|x| (x * 1e9).round() as i64)
                .collect();
            seen.insert(key);
        }
        seen.len()
    }

    pub fn atoms(&self, t: usize) -> Result<Vec<FiltrationAtom>> {
        self.tree.atoms(t)
    }
}

pub fn enumerate_paths(tree: &Tree) -> Vec<Path> {
    (0..tree.num_paths())
        .map(|p| Path {
            id: p,
            values: tree
                .path_vertices(p)
                .iter()
                .map(|&v| tree.vertices[v].state.clone())
                .collect(),
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StopStatus {
    /// Stopped at the given date (at or before the atom's date).
    Stopped(usize),
    Alive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnlargedAtom {
    pub date: usize,
    pub vertex: usize,
    pub status: StopStatus,
    /// Positions in `theta_dates` of the stop dates in this atom.
    pub thetas: Vec<usize>,
    pub paths: Range<usize>,
}

/// Index of the enlarged space `theta_dates x paths`. Element
/// `(k, p)` has flat index `k * num_paths + p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Enlarged {
    pub theta_dates: Vec<usize>,
    pub num_paths: usize,
    pub atoms_by_date: Vec<Vec<EnlargedAtom>>,
}

impl Enlarged {
    pub fn len(&self) -> usize {
        self.theta_dates.len() * self.num_paths
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, k: usize, path: usize) -> usize {
        k * self.num_paths + path
    }

    pub fn element(&self, idx: usize) -> (usize, usize) {
        (idx / self.num_paths, idx % self.num_paths)
    }

    pub fn theta_position(&self, date: usize) -> Option<usize> {
        self.theta_dates.iter().position(|&u| u == date)
    }
}

/// Builds the enlarged index with stop dates restricted to `theta_dates`
/// (which must contain the terminal date) and its atom partition per date.
pub fn enlarge(tree: &Tree, theta_dates: &[usize]) -> Result<Enlarged> {
    let terminal = tree.terminal();
    let mut dates: Vec<usize> = theta_dates.to_vec();
    dates.sort_unstable();
    dates.dedup();
    if dates.is_empty() || *dates.last().unwrap() != terminal {
        return Err(Error::InvalidLattice("theta dates must include the terminal date".into()));
    }
    if let Some(&bad) = dates.iter().find(|&&u| u > terminal) {
        return Err(Error::DateOutOfRange { date: bad, terminal });
    }
    let mut atoms_by_date = Vec::with_capacity(terminal + 1);
    for t in 0..=terminal {
        let mut atoms = Vec::new();
        for &v in &tree.by_date[t] {
            let paths = tree.vertices[v].paths();
            for (k, &u) in dates.iter().enumerate() {
                if u <= t {
                    atoms.push(EnlargedAtom {
                        date: t,
                        vertex: v,
                        status: StopStatus::Stopped(u),
                        thetas: vec![k],
                        paths: paths.clone(),
                    });
                }
            }
            let alive: Vec<usize> = dates.iter().enumerate().filter(|(_, &u)| u > t).map(|(k, _)| k).collect();
            if !alive.is_empty() {
                atoms.push(EnlargedAtom {
                    date: t,
                    vertex: v,
                    status: StopStatus::Alive,
                    thetas: alive,
                    paths,
                });
            }
        }
        atoms_by_date.push(atoms);
    }
    Ok(Enlarged {
        theta_dates: dates,
        num_paths: tree.num_paths(),
        atoms_by_date,
    })
}

pub fn all_dates(tree: &Tree) -> Vec<usize> {
    (0..=tree.terminal()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct VertexDoc {
    id: usize,
    date: usize,
    parent: Option<usize>,
    state: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct LatticeDoc {
    schema_version: u32,
    grid: TimeGrid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    spec: Option<LatticeSpec>,
    vertices: Vec<VertexDoc>,
    paths: Vec<Vec<usize>>,
}

/// Serializes a lattice as JSON: the grid, the optional spec, and the
/// explicit vertex and path tables with their ids.
pub fn save_lattice(lattice: &Lattice) -> Result<String> {
    let tree = &lattice.tree;
    let doc = LatticeDoc {
        schema_version: LATTICE_SCHEMA_VERSION,
        grid: lattice.grid.clone(),
        spec: lattice.spec.clone(),
        vertices: tree
            .vertices
            .iter()
            .enumerate()
            .map(|(id, v)| VertexDoc {
                id,
                date: v.date,
                parent: v.parent,
                state: v.state.clone(),
            })
            .collect(),
        paths: (0..tree.num_paths()).map(|p| tree.path_vertices(p).to_vec()).collect(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

/// Loads a lattice saved by [`save_lattice`], rebuilding the tree from the
/// vertex table and checking ids (and the `LatticeSpec`, when present).
pub fn load_lattice(text: &str) -> Result<Lattice> {
    let doc: LatticeDoc = serde_json::from_str(text)?;
    if doc.schema_version != LATTICE_SCHEMA_VERSION {
        return Err(Error::Config(format!("unsupported lattice schema version {}", doc.schema_version)));
    }
    let n = doc.vertices.len();
    if n == 0 || doc.vertices.iter().enumerate().any(|(i, v)| v.id != i) {
        return Err(Error::Config("vertex ids must be dense and ordered".into()));
    }
    let mut kids: Vec<Vec<usize>> = vec![Vec::new(); n];
    for v in &doc.vertices[1..] {
        match v.parent {
            Some(u) if u < v.id => kids[u].push(v.id),
            _ => return Err(Error::Config(format!("vertex {} has an invalid parent", v.id))),
        }
    }
    fn nest(id: usize, doc: &LatticeDoc, kids: &[Vec<usize>]) -> TreeNode {
        TreeNode::with_children(doc.vertices[id].state.clone(), kids[id].iter().map(|&c| nest(c, doc, kids)).collect())
    }
    let root = nest(0, &doc, &kids);
    let lattice = match &doc.spec {
        Some(spec) => {
            let built = build_lattice(spec)?;
            if built.grid != doc.grid {
                return Err(Error::Config("grid does not match the lattice spec fields".into()));
            }
            built
        }
        None => lattice_from_tree(doc.grid.clone(), &root)?,
    };
    let tree = &lattice.tree;
    let consistent = tree.vertices.len() == n
        && doc.vertices.iter().all(|vd| {
            let v = &tree.vertices[vd.id];
            v.date == vd.date && v.parent == vd.parent && v.state == vd.state
        })
        && doc.paths.len() == tree.num_paths()
        && doc.paths.iter().enumerate().all(|(p, vs)| tree.path_vertices(p) == vs.as_slice());
    if !consistent {
        return Err(Error::Config("lattice tables are inconsistent".into()));
    }
    Ok(lattice)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dates(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn trinomial_one_step() {
        let spec = LatticeSpec::uniform(dates(2), 1.0, vec![vec![-0.2, 0.0, 0.2]]);
        let lat = build_lattice(&spec).unwrap();
        assert_eq!(lat.num_paths(), 3);
    }

    #[test]
    fn recombining_binary_two_steps() {
        let spec = LatticeSpec::uniform(dates(3), 1.0, vec![vec![-0.1, 0.1], vec![-0.1, 0.1]]);
        let lat = build_lattice(&spec).unwrap();
        assert_eq!(lat.num_paths(), 4);
        assert_eq!(lat.distinct_nodes(2), 3);
    }

    #[test]
    fn chain_has_one_path_and_binary_depth_three_has_eight() {
        let chain = LatticeSpec::uniform(dates(4), 1.0, vec![vec![0.0]; 3]);
        assert_eq!(enumerate_paths(&build_lattice(&chain).unwrap().tree).len(), 1);
        let bin = LatticeSpec::uniform(dates(4), 1.0, vec![vec![-1.0, 2.0]; 3]);
        let paths = enumerate_paths(&build_lattice(&bin).unwrap().tree);
        assert_eq!(paths.len(), 8);
        assert!(paths.iter().enumerate().all(|(i, p)| p.id == i));
    }

    #[test]
    fn rejects_bad_specs() {
        let bad_grid = LatticeSpec::uniform(vec![0.0, 0.0], 1.0, vec![vec![-1.0, 1.0]]);
        assert!(matches!(build_lattice(&bad_grid), Err(Error::InvalidGrid(_))));
        let empty = LatticeSpec::uniform(dates(2), 1.0, vec![vec![]]);
        assert!(matches!(build_lattice(&empty), Err(Error::InvalidLattice(_))));
        let mut big = LatticeSpec::uniform(dates(11), 1.0, vec![vec![-1.0, 1.0]; 10]);
        big.max_paths = 1000;
        assert!(matches!(build_lattice(&big), Err(Error::PathCap { .. })));
        let lone = LatticeSpec::uniform(dates(2), 1.0, vec![vec![0.5]]);
        assert!(build_lattice(&lone).is_err());
    }

    #[test]
    fn atoms_partition_and_refine() {
        let spec = LatticeSpec::uniform(dates(4), 0.0, vec![vec![-1.0, 0.0, 1.0], vec![-1.0, 1.0], vec![-1.0, 1.0]]);
        let lat = build_lattice(&spec).unwrap();
        let n = lat.num_paths();
        for t in 0..=lat.terminal() {
            let atoms = lat.atoms(t).unwrap();
            let mut seen = vec![0; n];
            for a in &atoms {
                for p in a.paths.clone() {
                    seen[p] += 1;
                }
            }
            assert!(seen.iter().all(|&c| c == 1));
            if t > 0 {
                let prev = lat.atoms(t - 1).unwrap();
                for a in &atoms {
                    assert!(prev.iter().any(|b| b.paths.start <= a.paths.start && a.paths.end <= b.paths.end));
                }
            }
        }
        assert_eq!(lat.atoms(0).unwrap().len(), 1);
        assert_eq!(lat.atoms(3).unwrap().len(), n);
        assert!(lat.atoms(4).is_err());
    }

    #[test]
    fn enlarged_counts_and_separation() {
        let chain = build_lattice(&LatticeSpec::uniform(dates(3), 1.0, vec![vec![0.0]; 2])).unwrap();
        let e = enlarge(&chain.tree, &[0, 2]).unwrap();
        assert_eq!(e.len(), 2);
        for t in 0..=2 {
            let a0 = e.atoms_by_date[t].iter().find(|a| a.thetas.contains(&0)).unwrap();
            let a1 = e.atoms_by_date[t].iter().find(|a| a.thetas.contains(&1)).unwrap();
            assert_ne!(a0, a1);
        }
        let lat = build_lattice(&LatticeSpec::uniform(dates(3), 1.0, vec![vec![-1.0, 1.0]; 2])).unwrap();
        let e = enlarge(&lat.tree, &all_dates(&lat.tree)).unwrap();
        assert_eq!(e.len(), 4 * 3);
        assert!(enlarge(&lat.tree, &[0, 1]).is_err());
    }

    #[test]
    fn save_load_is_stable() {
        let spec = LatticeSpec::uniform(dates(3), 1.0, vec![vec![-0.1, 0.1], vec![-0.1, 0.0, 0.1]]);
        let lat = build_lattice(&spec).unwrap();
        let text = save_lattice(&lat).unwrap();
        assert_eq!(text, save_lattice(&build_lattice(&spec).unwrap()).unwrap());
        let back = load_lattice(&text).unwrap();
        assert_eq!(back, lat);
    }

    #[test]
    fn explicit_trees_round_trip() {
        let root = TreeNode::with_children(
            vec![1.0],
            vec![
                TreeNode::with_children(vec![1.5], vec![TreeNode::leaf(vec![1.5])]),
                TreeNode::with_children(vec![0.5], vec![TreeNode::leaf(vec![0.0]), TreeNode::leaf(vec![1.0])]),
            ],
        );
        let grid = TimeGrid::new(dates(3), None).unwrap();
        let lat = lattice_from_tree(grid, &root).unwrap();
        assert_eq!(lat.num_paths(), 3);
        let back = load_lattice(&save_lattice(&lat).unwrap()).unwrap();
        assert_eq!(back, lat);
        let bad = TreeNode::with_children(vec![1.0], vec![TreeNode::leaf(vec![2.0])]);
        assert!(lattice_from_tree(TimeGrid::new(dates(2), None).unwrap(), &bad).is_err());
    }
}

//! Measures on path and enlarged spaces, martingale and volatility-band
//! constraints, calibration to static options, epsilon-modification and the
//! dynamic lift of option prices.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{all_dates, enlarge, Enlarged, StopStatus, Tree, TreeNode};

/// Tolerance on total mass when accepting a measure.
pub const MASS_TOL: f64 = 1e-9;
/// Default absolute calibration tolerance per option.
pub const CALIBRATION_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathMeasure {
    pub weights: Vec<f64>,
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::InvalidMeasure("no weights".into()));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::InvalidMeasure(format!("weight {w} is negative or not finite")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > MASS_TOL {
        return Err(Error::InvalidMeasure(format!("total mass {total} differs from 1")));
    }
    Ok(())
}

/// Clamps solver round-off (tiny negatives) and renormalizes.
fn clean_weights(raw: &[f64]) -> Vec<f64> {
    let mut w: Vec<f64> = raw.iter().map(|x| if *x > 1e-15 { *x } else { 0.0 }).collect();
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        w.iter_mut().for_each(|x| *x /= total);
    }
    w
}

impl PathMeasure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        check_weights(&weights)?;
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn dirac(n: usize, path: usize) -> Self {
        let mut weights = vec![0.0; n];
        weights[path] = 1.0;
        Self { weights }
    }

    pub fn from_raw(raw: &[f64]) -> Result<Self> {
        Self::new(clean_weights(raw))
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn expectation(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }

    /// Mass of every vertex (filtration atom) of `tree`.
    pub fn vertex_masses(&self, tree: &Tree) -> Vec<f64> {
        let cum = prefix_sums(&self.weights);
        tree.vertices.iter().map(|v| cum[v.first_path + v.path_count] - cum[v.first_path]).collect()
    }

    /// Mixture `sum_i lambda_i * P_i`.
    pub fn mixture(parts: &[(f64, &PathMeasure)]) -> Result<Self> {
        let n = parts.first().map(|(_, p)| p.len()).unwrap_or(0);
        let mut weights = vec![0.0; n];
        for (lambda, p) in parts {
            if p.len() != n {
                return Err(Error::IndexMismatch("mixture components differ in size".into()));
            }
            for (w, x) in weights.iter_mut().zip(&p.weights) {
                *w += lambda * x;
            }
        }
        Self::new(weights)
    }

    fn check_tree(&self, tree: &Tree) -> Result<()> {
        if self.len() != tree.num_paths() {
            return Err(Error::IndexMismatch(format!(
                "measure has {} weights, lattice has {} paths",
                self.len(),
                tree.num_paths()
            )));
        }
        Ok(())
    }
}

fn prefix_sums(w: &[f64]) -> Vec<f64> {
    let mut cum = Vec::with_capacity(w.len() + 1);
    cum.push(0.0);
    let mut acc = 0.0;
    for x in w {
        acc += x;
        cum.push(acc);
    }
    cum
}

/// Weights on `theta_dates x paths`; element `(k, p)` sits at
/// `k * num_paths + p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnlargedMeasure {
    pub theta_dates: Vec<usize>,
    pub num_paths: usize,
    pub weights: Vec<f64>,
}

impl EnlargedMeasure {
    pub fn new(theta_dates: Vec<usize>, num_paths: usize, weights: Vec<f64>) -> Result<Self> {
        if theta_dates.is_empty() || theta_dates.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidMeasure("theta dates must be non-empty and increasing".into()));
        }
        if weights.len() != theta_dates.len() * num_paths {
            return Err(Error::IndexMismatch(format!(
                "{} weights for {} stop dates x {} paths",
                weights.len(),
                theta_dates.len(),
                num_paths
            )));
        }
        check_weights(&weights)?;
        Ok(Self {
            theta_dates,
            num_paths,
            weights,
        })
    }

    pub fn from_raw(theta_dates: Vec<usize>, num_paths: usize, raw: &[f64]) -> Result<Self> {
        Self::new(theta_dates, num_paths, clean_weights(raw))
    }

    /// `delta_theta (x) P`: every path stopped at date `theta`.
    pub fn stopped_at(theta_dates: Vec<usize>, theta: usize, p: &PathMeasure) -> Result<Self> {
        let k = theta_dates
            .iter()
            .position(|&u| u == theta)
            .ok_or_else(|| Error::InvalidMeasure(format!("date {theta} is not a stop date")))?;
        let n = p.len();
        let mut weights = vec![0.0; theta_dates.len() * n];
        weights[k * n..(k + 1) * n].copy_from_slice(&p.weights);
        Self::new(theta_dates, n, weights)
    }

    pub fn weight(&self, k: usize, path: usize) -> f64 {
        self.weights[k * self.num_paths + path]
    }

    pub fn terminal_position(&self) -> usize {
        self.theta_dates.len() - 1
    }

    /// The path-space marginal.
    pub fn omega_marginal(&self) -> PathMeasure {
        let n = self.num_paths;
        let mut w = vec![0.0; n];
        for k in 0..self.theta_dates.len() {
            for (p, x) in w.iter_mut().enumerate() {
                *x += self.weights[k * n + p];
            }
        }
        PathMeasure { weights: w }
    }

    pub fn expectation(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }

    /// Mixture `sum_i lambda_i * mu_i` of measures on the same index.
    pub fn mixture(parts: &[(f64, &EnlargedMeasure)]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidMeasure("empty mixture".into()))?
            .1;
        let mut weights = vec![0.0; first.weights.len()];
        for (lambda, mu) in parts {
            if mu.theta_dates != first.theta_dates || mu.num_paths != first.num_paths {
                return Err(Error::IndexMismatch("mixture components differ in index".into()));
            }
            for (w, x) in weights.iter_mut().zip(&mu.weights) {
                *w += lambda * x;
            }
        }
        Self::new(first.theta_dates.clone(), first.num_paths, weights)
    }

    pub fn check_tree(&self, tree: &Tree) -> Result<()> {
        if self.num_paths != tree.num_paths() {
            return Err(Error::IndexMismatch(format!(
                "measure indexes {} paths, lattice has {}",
                self.num_paths,
                tree.num_paths()
            )));
        }
        if *self.theta_dates.last().unwrap() != tree.terminal() {
            return Err(Error::IndexMismatch("last stop date must be the terminal date".into()));
        }
        Ok(())
    }
}

/// A measure on either space, for the checks below. Path measures are
/// treated as `delta_T (x) P`.
#[derive(Clone, Debug)]
pub enum MeasureRef<'a> {
    Path(&'a PathMeasure),
    Enlarged(&'a EnlargedMeasure),
}

impl<'a> From<&'a PathMeasure> for MeasureRef<'a> {
    fn from(p: &'a PathMeasure) -> Self {
        MeasureRef::Path(p)
    }
}

impl<'a> From<&'a EnlargedMeasure> for MeasureRef<'a> {
    fn from(m: &'a EnlargedMeasure) -> Self {
        MeasureRef::Enlarged(m)
    }
}

impl MeasureRef<'_> {
    fn as_enlarged(&self, tree: &Tree) -> Result<Cow<'_, EnlargedMeasure>> {
        match self {
            MeasureRef::Path(p) => {
                p.check_tree(tree)?;
                Ok(Cow::Owned(EnlargedMeasure {
                    theta_dates: vec![tree.terminal()],
                    num_paths: p.len(),
                    weights: p.weights.clone(),
                }))
            }
            MeasureRef::Enlarged(m) => {
                m.check_tree(tree)?;
                Ok(Cow::Borrowed(*m))
            }
        }
    }

    fn is_path(&self) -> bool {
        matches!(self, MeasureRef::Path(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Filtration {
    /// Atoms are prefixes of the traded state (stop status ignored).
    Base,
    /// Atoms are (prefix, stop status) pairs.
    Enlarged,
}

/// One-step kernel of a measure out of one atom: the atom's mass and the
/// mass sent to each child vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomKernel {
    pub date: usize,
    pub vertex: usize,
    pub status: Option<StopStatus>,
    pub mass: f64,
    pub child_mass: Vec<f64>,
}

pub fn atom_kernels(tree: &Tree, mu: &EnlargedMeasure, filtration: Filtration) -> Result<Vec<AtomKernel>> {
    mu.check_tree(tree)?;
    let n = mu.num_paths;
    let cums: Vec<Vec<f64>> = (0..mu.theta_dates.len())
        .map(|k| prefix_sums(&mu.weights[k * n..(k + 1) * n]))
        .collect();
    let range = |k: usize, v: usize| {
        let vx = &tree.vertices[v];
        cums[k][vx.first_path + vx.path_count] - cums[k][vx.first_path]
    };
    let mut out = Vec::new();
    match filtration {
        Filtration::Base => {
            let all: Vec<usize> = (0..mu.theta_dates.len()).collect();
            for t in 0..tree.terminal() {
                for &v in &tree.by_date[t] {
                    let child_mass: Vec<f64> = tree.vertices[v]
                        .children
                        .iter()
                        .map(|&c| all.iter().map(|&k| range(k, c)).sum())
                        .collect();
                    out.push(AtomKernel {
                        date: t,
                        vertex: v,
                        status: None,
                        mass: child_mass.iter().sum(),
                        child_mass,
                    });
                }
            }
        }
        Filtration::Enlarged => {
            let enl = enlarge(tree, &mu.theta_dates)?;
            for t in 0..tree.terminal() {
                for atom in &enl.atoms_by_date[t] {
                    let child_mass: Vec<f64> = tree.vertices[atom.vertex]
                        .children
                        .iter()
                        .map(|&c| atom.thetas.iter().map(|&k| range(k, c)).sum())
                        .collect();
                    out.push(AtomKernel {
                        date: t,
                        vertex: atom.vertex,
                        status: Some(atom.status),
                        mass: child_mass.iter().sum(),
                        child_mass,
                    });
                }
            }
        }
    }
    Ok(out)
}

fn kernel_moment(tree: &Tree, k: &AtomKernel, power: i32) -> Vec<f64> {
    let v = k.vertex;
    let mut acc = vec![0.0; tree.dim()];
    for (&c, &m) in tree.vertices[v].children.iter().zip(&k.child_mass) {
        for (a, dx) in acc.iter_mut().zip(tree.increment(v, c)) {
            *a += m * dx.powi(power);
        }
    }
    acc
}

/// One-step conditional second moment of each coordinate out of the atom;
/// `None` for zero-mass atoms, where band constraints are vacuous.
pub fn conditional_variance(tree: &Tree, kernel: &AtomKernel) -> Option<Vec<f64>> {
    if kernel.mass <= 0.0 {
        return None;
    }
    Some(kernel_moment(tree, kernel, 2).into_iter().map(|s| s / kernel.mass).collect())
}

/// Conditional variance at a given atom of a measure.
pub fn conditional_variance_at<'a>(
    mu: impl Into<MeasureRef<'a>>,
    tree: &Tree,
    vertex: usize,
    status: Option<StopStatus>,
) -> Result<Option<Vec<f64>>> {
    let mu = mu.into();
    let en = mu.as_enlarged(tree)?;
    let filtration = if status.is_some() && !mu.is_path() {
        Filtration::Enlarged
    } else {
        Filtration::Base
    };
    let kernel = atom_kernels(tree, &en, filtration)?
        .into_iter()
        .find(|k| k.vertex == vertex && (filtration == Filtration::Base || k.status == status))
        .ok_or_else(|| Error::IndexMismatch(format!("no atom at vertex {vertex} with that status")))?;
    Ok(conditional_variance(tree, &kernel))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Drift,
    VarianceBelow,
    VarianceAbove,
    Calibration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub date: Option<usize>,
    pub vertex: Option<usize>,
    pub status: Option<StopStatus>,
    /// Coordinate (or option index for calibration).
    pub index: usize,
    /// Offending conditional drift, variance or expectation.
    pub value: f64,
}

/// Lists atoms where the conditional one-step drift exceeds `tol`.
/// Path measures are checked on the prefix filtration; enlarged measures on
/// the requested one.
pub fn validate_martingale<'a>(
    mu: impl Into<MeasureRef<'a>>,
    tree: &Tree,
    filtration: Filtration,
    tol: f64,
) -> Result<Vec<Violation>> {
    let mu = mu.into();
    let en = mu.as_enlarged(tree)?;
    let filtration = if mu.is_path() { Filtration::Base } else { filtration };
    let mut out = Vec::new();
    for k in atom_kernels(tree, &en, filtration)? {
        if k.mass <= 0.0 {
            continue;
        }
        for (i, s) in kernel_moment(tree, &k, 1).into_iter().enumerate() {
            if s.abs() > tol * k.mass {
                out.push(Violation {
                    kind: ViolationKind::Drift,
                    date: Some(k.date),
                    vertex: Some(k.vertex),
                    status: k.status,
                    index: i,
                    value: s / k.mass,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandInterval {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BandInterval {
    pub fn scalar(lo: f64, hi: f64, dim: usize) -> Self {
        Self {
            lo: vec![lo; dim],
            hi: vec![hi; dim],
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.lo.len() == self.hi.len()
            && self
                .lo
                .iter()
                .zip(&self.hi)
                .all(|(l, h)| l.is_finite() && h.is_finite() && 0.0 <= *l && l <= h);
        if ok {
            Ok(())
        } else {
            Err(Error::Config("band intervals need 0 <= lo <= hi < inf".into()))
        }
    }
}

/// Per-vertex interval on the one-step conditional variance of each asset
/// coordinate (units: price squared per step). `None` leaves a step
/// unconstrained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolatilityBand {
    pub intervals: Vec<Option<BandInterval>>,
}

impl VolatilityBand {
    pub fn unconstrained(tree: &Tree) -> Self {
        Self {
            intervals: vec![None; tree.vertices.len()],
        }
    }

    pub fn from_fn(tree: &Tree, mut f: impl FnMut(usize) -> Option<BandInterval>) -> Result<Self> {
        let mut intervals = Vec::with_capacity(tree.vertices.len());
        for (v, vx) in tree.vertices.iter().enumerate() {
            let iv = if vx.is_leaf() { None } else { f(v) };
            if let Some(b) = &iv {
                b.validate()?;
                if b.lo.len() != tree.x_dim {
                    return Err(Error::Config("band dimension differs from the asset dimension".into()));
                }
            }
            intervals.push(iv);
        }
        Ok(Self { intervals })
    }

    /// Same scalar interval for every coordinate at every non-terminal vertex.
    pub fn uniform(tree: &Tree, lo: f64, hi: f64) -> Result<Self> {
        Self::from_fn(tree, |_| Some(BandInterval::scalar(lo, hi, tree.x_dim)))
    }

    /// Scalar interval per date.
    pub fn per_date(tree: &Tree, lo: &[f64], hi: &[f64]) -> Result<Self> {
        if lo.len() < tree.terminal() || hi.len() < tree.terminal() {
            return Err(Error::Config("band needs one interval per step".into()));
        }
        Self::from_fn(tree, |v| {
            let t = tree.vertices[v].date;
            Some(BandInterval::scalar(lo[t], hi[t], tree.x_dim))
        })
    }

    pub fn interval(&self, v: usize) -> Option<&BandInterval> {
        self.intervals.get(v).and_then(Option::as_ref)
    }

    /// Transfers a band on a base tree to a tree whose vertices point at
    /// base vertices through `Vertex::base`.
    pub fn transfer(&self, target: &Tree) -> Self {
        Self {
            intervals: target
                .vertices
                .iter()
                .map(|v| {
                    if v.is_leaf() {
                        None
                    } else {
                        self.intervals.get(v.base).cloned().flatten()
                    }
                })
                .collect(),
        }
    }

    /// Widens every interval by `down` below and `up` above (lo floored at 0).
    pub fn widened(&self, down: f64, up: f64) -> Self {
        Self {
            intervals: self
                .intervals
                .iter()
                .map(|iv| {
                    iv.as_ref().map(|b| BandInterval {
                        lo: b.lo.iter().map(|l| (l - down).max(0.0)).collect(),
                        hi: b.hi.iter().map(|h| h + up).collect(),
                    })
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payoff {
    Call {
        strike: f64,
        #[serde(default)]
        coordinate: usize,
    },
    Put {
        strike: f64,
        #[serde(default)]
        coordinate: usize,
    },
    Forward {
        strike: f64,
        #[serde(default)]
        coordinate: usize,
    },
    /// Payoff per terminal node, indexed by path id.
    Tabulated { values: Vec<f64> },
}

impl Payoff {
    fn eval(&self, x: &[f64], path: usize) -> Result<f64> {
        let coord = |c: usize| {
            x.get(c)
                .copied()
                .ok_or_else(|| Error::Config(format!("payoff coordinate {c} out of range")))
        };
        Ok(match self {
            Payoff::Call { strike, coordinate } => (coord(*coordinate)? - strike).max(0.0),
            Payoff::Put { strike, coordinate } => (strike - coord(*coordinate)?).max(0.0),
            Payoff::Forward { strike, coordinate } => coord(*coordinate)? - strike,
            Payoff::Tabulated { values } => *values
                .get(path)
                .ok_or_else(|| Error::Config(format!("tabulated payoff has no value for path {path}")))?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaticOption {
    pub payoff: Payoff,
    pub price: f64,
}

/// Statically traded options; each payoff is shifted by its price so that
/// calibration means zero expectation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StaticOptionSet {
    pub options: Vec<StaticOption>,
}

impl StaticOptionSet {
    pub fn new(options: Vec<StaticOption>) -> Self {
        Self { options }
    }

    pub fn len(&self) -> usize {
        self.options.len()
    }

    pub fn is_empty(&self) -> bool {
        self.options.is_empty()
    }

    /// Shifted payoff values `[option][path]` on a base lattice.
    pub fn values(&self, tree: &Tree) -> Result<Vec<Vec<f64>>> {
        self.options
            .iter()
            .map(|o| {
                tree.leaves
                    .iter()
                    .enumerate()
                    .map(|(p, &leaf)| {
                        let x = &tree.vertices[leaf].state[..tree.x_dim];
                        let v = o.payoff.eval(x, p)? - o.price;
                        if v.is_finite() {
                            Ok(v)
                        } else {
                            Err(Error::Config("option payoff is not finite".into()))
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandConditioning {
    /// Each (prefix, stop status) atom satisfies the band on its own.
    #[default]
    EnlargedAtom,
    /// Only the aggregate over stop statuses at a prefix must satisfy it.
    BaseAtom,
}

/// A discrete model class: a tree, its volatility band, optional
/// calibration payoffs (one row per option, one value per path) and the
/// admissible stop dates for enlarged measures.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelClass {
    pub tree: Tree,
    pub band: VolatilityBand,
    pub options: Vec<Vec<f64>>,
    pub theta_dates: Vec<usize>,
    pub conditioning: BandConditioning,
}

impl ModelClass {
    pub fn new(tree: Tree, band: VolatilityBand) -> Result<Self> {
        if band.intervals.len() != tree.vertices.len() {
            return Err(Error::IndexMismatch("band does not match the tree".into()));
        }
        let theta_dates = all_dates(&tree);
        Ok(Self {
            tree,
            band,
            options: Vec::new(),
            theta_dates,
            conditioning: BandConditioning::default(),
        })
    }

    pub fn with_options(self, g: &StaticOptionSet) -> Result<Self> {
        let values = g.values(&self.tree)?;
        self.with_option_values(values)
    }

    pub fn with_option_values(mut self, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.iter().any(|row| row.len() != self.tree.num_paths() || row.iter().any(|v| !v.is_finite())) {
            return Err(Error::IndexMismatch("option values must be finite, one per path".into()));
        }
        self.options = values;
        Ok(self)
    }

    pub fn without_options(mut self) -> Self {
        self.options.clear();
        self
    }

    pub fn with_theta_dates(mut self, dates: Vec<usize>) -> Result<Self> {
        let enl = enlarge(&self.tree, &dates)?;
        self.theta_dates = enl.theta_dates;
        Ok(self)
    }

    pub fn with_conditioning(mut self, conditioning: BandConditioning) -> Self {
        self.conditioning = conditioning;
        self
    }

    pub fn with_band(mut self, band: VolatilityBand) -> Self {
        self.band = band;
        self
    }

    pub fn has_options(&self) -> bool {
        !self.options.is_empty()
    }

    pub fn enlarged(&self) -> Result<Enlarged> {
        enlarge(&self.tree, &self.theta_dates)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomCheck {
    pub date: usize,
    pub vertex: usize,
    pub status: Option<StopStatus>,
    pub mass: f64,
    pub variance: Option<Vec<f64>>,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub martingale_ok: bool,
    pub variance_ok: bool,
    pub calibrated_ok: bool,
    pub atoms: Vec<AtomCheck>,
    pub violations: Vec<Violation>,
}

impl ConstraintReport {
    pub fn all_ok(&self) -> bool {
        self.martingale_ok && self.variance_ok && self.calibrated_ok
    }
}

/// Membership test for the model class: martingale property, band on every
/// positive-mass atom (`lo - tol <= var <= hi + tol`) and calibration
/// (`|E g_i| <= tol`).
pub fn check_constraints<'a>(mu: impl Into<MeasureRef<'a>>, model: &ModelClass, tol: f64) -> Result<ConstraintReport> {
    let mu = mu.into();
    let tree = &model.tree;
    let en = mu.as_enlarged(tree)?;
    let mut violations = validate_martingale(mu.clone(), tree, Filtration::Enlarged, tol)?;
    let martingale_ok = violations.is_empty();
    let filtration = match (mu.is_path(), model.conditioning) {
        (false, BandConditioning::EnlargedAtom) => Filtration::Enlarged,
        _ => Filtration::Base,
    };
    let mut atoms = Vec::new();
    let mut variance_ok = true;
    for k in atom_kernels(tree, &en, filtration)? {
        let variance = conditional_variance(tree, &k);
        let mut ok = true;
        if let (Some(var), Some(band)) = (&variance, model.band.interval(k.vertex)) {
            if tree.band_applies(k.date) {
                for i in 0..tree.x_dim {
                    let (kind, bad) = if var[i] < band.lo[i] - tol {
                        (ViolationKind::VarianceBelow, true)
                    } else if var[i] > band.hi[i] + tol {
                        (ViolationKind::VarianceAbove, true)
                    } else {
                        (ViolationKind::Drift, false)
                    };
                    if bad {
                        ok = false;
                        violations.push(Violation {
                            kind,
                            date: Some(k.date),
                            vertex: Some(k.vertex),
                            status: k.status,
                            index: i,
                            value: var[i],
                        });
                    }
                }
            }
        }
        variance_ok &= ok;
        atoms.push(AtomCheck {
            date: k.date,
            vertex: k.vertex,
            status: k.status,
            mass: k.mass,
            variance,
            ok,
        });
    }
    let marginal = en.omega_marginal();
    let mut calibrated_ok = true;
    for (i, g) in model.options.iter().enumerate() {
        let e = marginal.expectation(g);
        if e.abs() > tol {
            calibrated_ok = false;
            violations.push(Violation {
                kind: ViolationKind::Calibration,
                date: None,
                vertex: None,
                status: None,
                index: i,
                value: e,
            });
        }
    }
    Ok(ConstraintReport {
        martingale_ok,
        variance_ok,
        calibrated_ok,
        atoms,
        violations,
    })
}

/// `mu^eps = (1 - eps) mu + eps (delta_T (x) mu^Omega)`.
pub fn epsilon_modify(mu: &EnlargedMeasure, eps: f64) -> Result<EnlargedMeasure> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::EpsilonOutOfRange(eps));
    }
    let n = mu.num_paths;
    let kt = mu.terminal_position();
    let marginal = mu.omega_marginal();
    let mut weights: Vec<f64> = mu.weights.iter().map(|w| (1.0 - eps) * w).collect();
    for p in 0..n {
        weights[kt * n + p] += eps * marginal.weights[p];
    }
    Ok(EnlargedMeasure {
        theta_dates: mu.theta_dates.clone(),
        num_paths: n,
        weights,
    })
}

/// Whether the terminal stop mass on each path is at least `eps` times the
/// path's marginal mass.
pub fn is_epsilon_modified(mu: &EnlargedMeasure, eps: f64) -> bool {
    let n = mu.num_paths;
    let kt = mu.terminal_position();
    let marginal = mu.omega_marginal();
    (0..n).all(|p| mu.weights[kt * n + p] >= eps * marginal.weights[p] * (1.0 - 1e-12))
}

pub fn restrict(mu: &EnlargedMeasure) -> PathMeasure {
    mu.omega_marginal()
}

/// X-marginal of a measure on a joint lattice, given the base path of
/// every joint path.
pub fn restrict_joint(joint: &PathMeasure, base_paths: &[usize], base_count: usize) -> Result<PathMeasure> {
    if joint.len() != base_paths.len() {
        return Err(Error::IndexMismatch("joint measure and path map differ in size".into()));
    }
    let mut w = vec![0.0; base_count];
    for (x, &b) in joint.weights.iter().zip(base_paths) {
        w[b] += x;
    }
    Ok(PathMeasure { weights: w })
}

fn check_calibrated(marginal: &PathMeasure, g: &[Vec<f64>], tol: f64) -> Result<()> {
    for (i, row) in g.iter().enumerate() {
        let e = marginal.expectation(row);
        if e.abs() > tol {
            return Err(Error::Uncalibrated { option: i, value: e });
        }
    }
    Ok(())
}

/// Conditional option prices `E^P[g | F_t]` at every vertex. Zero-mass
/// vertices carry their parent's level; leaves hold `g` itself.
pub fn lift_levels(tree: &Tree, p: &PathMeasure, g: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    p.check_tree(tree)?;
    let m = g.len();
    let mass = p.vertex_masses(tree);
    let mut levels = vec![vec![0.0; m]; tree.vertices.len()];
    for (v, vx) in tree.vertices.iter().enumerate() {
        if vx.is_leaf() {
            let path = vx.first_path;
            levels[v] = g.iter().map(|row| row[path]).collect();
        } else if mass[v] > 0.0 {
            levels[v] = g
                .iter()
                .map(|row| vx.paths().map(|q| p.weights[q] * row[q]).sum::<f64>() / mass[v])
                .collect();
        } else if let Some(u) = vx.parent {
            levels[v] = levels[u].clone();
        }
    }
    Ok(levels)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnlargedLevel {
    pub date: usize,
    pub vertex: usize,
    pub status: StopStatus,
    pub mass: f64,
    pub level: Vec<f64>,
}

/// Conditional option prices given the enlarged filtration (prefix plus
/// stop status), on positive-mass atoms.
pub fn lift_enlarged_levels(tree: &Tree, mu: &EnlargedMeasure, g: &[Vec<f64>]) -> Result<Vec<EnlargedLevel>> {
    mu.check_tree(tree)?;
    let enl = enlarge(tree, &mu.theta_dates)?;
    let mut out = Vec::new();
    for atoms in &enl.atoms_by_date {
        for a in atoms {
            let mut mass = 0.0;
            let mut acc = vec![0.0; g.len()];
            for &k in &a.thetas {
                for p in a.paths.clone() {
                    let w = mu.weight(k, p);
                    mass += w;
                    for (x, row) in acc.iter_mut().zip(g) {
                        *x += w * row[p];
                    }
                }
            }
            if mass > 0.0 {
                out.push(EnlargedLevel {
                    date: a.date,
                    vertex: a.vertex,
                    status: a.status,
                    mass,
                    level: acc.into_iter().map(|x| x / mass).collect(),
                });
            }
        }
    }
    Ok(out)
}

/// A measure on a joint (asset, option price) tree produced by a lift.
#[derive(Clone, Debug, PartialEq)]
pub struct LiftedMeasure {
    pub tree: Tree,
    /// Base path of every joint path.
    pub base_paths: Vec<usize>,
    pub measure: PathMeasure,
}

/// Lifts a calibrated path measure to the joint tree where option prices
/// `Y_t = E^P[g | F_t]` trade, preceded by a pre-trading date at which the
/// asset sits at `x0` and `Y = 0`.
pub fn lift_measure(tree: &Tree, p: &PathMeasure, g: &[Vec<f64>], pre_date: f64, tol: f64) -> Result<LiftedMeasure> {
    p.check_tree(tree)?;
    if pre_date.is_nan() || pre_date >= tree.dates[0] {
        return Err(Error::InvalidGrid("pre_date must precede the first date".into()));
    }
    check_calibrated(p, g, tol)?;
    let levels = lift_levels(tree, p, g)?;
    fn copy(tree: &Tree, v: usize, levels: &[Vec<f64>]) -> TreeNode {
        let vx = &tree.vertices[v];
        let mut state = vx.state.clone();
        state.extend_from_slice(&levels[v]);
        TreeNode {
            state,
            base: v,
            children: vx.children.iter().map(|&c| copy(tree, c, levels)).collect(),
        }
    }
    let mut pre_state = tree.vertices[0].state.clone();
    pre_state.extend(std::iter::repeat_n(0.0, g.len()));
    let root = TreeNode {
        state: pre_state,
        base: 0,
        children: vec![copy(tree, 0, &levels)],
    };
    let mut dates = vec![pre_date];
    dates.extend_from_slice(&tree.dates);
    let joint = Tree::from_nested(dates, tree.x_dim, 1, &root)?;
    Ok(LiftedMeasure {
        base_paths: (0..tree.num_paths()).collect(),
        measure: p.clone(),
        tree: joint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, LatticeSpec};

    fn one_step(incs: Vec<f64>) -> Tree {
        build_lattice(&LatticeSpec::uniform(vec![0.0, 1.0], 1.0, vec![incs])).unwrap().tree
    }

    #[test]
    fn symmetric_measure_is_martingale() {
        let tree = one_step(vec![-0.2, 0.2]);
        let p = PathMeasure::uniform(2);
        assert!(validate_martingale(&p, &tree, Filtration::Base, 1e-12).unwrap().is_empty());
        let up = PathMeasure::dirac(2, 1);
        let v = validate_martingale(&up, &tree, Filtration::Base, 1e-12).unwrap();
        assert_eq!(v.len(), 1);
        assert!((v[0].value - 0.2).abs() < 1e-12);
    }

    #[test]
    fn variances() {
        let tree = one_step(vec![-0.2, 0.2]);
        let var = conditional_variance_at(&PathMeasure::uniform(2), &tree, 0, None).unwrap().unwrap();
        assert!((var[0] - 0.04).abs() < 1e-15);
        let tree = one_step(vec![-0.1, 0.0, 0.1]);
        let p = PathMeasure::new(vec![0.3, 0.4, 0.3]).unwrap();
        let var = conditional_variance_at(&p, &tree, 0, None).unwrap().unwrap();
        assert!((var[0] - 0.006).abs() < 1e-15);
        let c = PathMeasure::dirac(3, 1);
        assert_eq!(conditional_variance_at(&c, &tree, 0, None).unwrap().unwrap()[0], 0.0);
    }

    #[test]
    fn band_checks() {
        let tree = one_step(vec![-0.1, 0.0, 0.1]);
        let band = VolatilityBand::uniform(&tree, 0.005, 0.02).unwrap();
        let model = ModelClass::new(tree.clone(), band).unwrap();
        let c = PathMeasure::dirac(3, 1);
        let r = check_constraints(&c, &model, 1e-12).unwrap();
        assert!(r.martingale_ok && !r.variance_ok);
        let tree2 = one_step(vec![-0.2, 0.2]);
        let m2 = ModelClass::new(tree2.clone(), VolatilityBand::uniform(&tree2, 0.04, 0.04).unwrap()).unwrap();
        assert!(check_constraints(&PathMeasure::uniform(2), &m2, 1e-12).unwrap().all_ok());
    }

    #[test]
    fn epsilon_modification() {
        let tree = one_step(vec![-0.2, 0.2]);
        let p = PathMeasure::uniform(2);
        let mu = EnlargedMeasure::stopped_at(vec![0, 1], 0, &p).unwrap();
        let m = epsilon_modify(&mu, 0.5).unwrap();
        assert_eq!(m.weights, vec![0.25, 0.25, 0.25, 0.25]);
        assert!(is_epsilon_modified(&m, 0.5));
        let at_t = EnlargedMeasure::stopped_at(vec![0, 1], 1, &p).unwrap();
        assert_eq!(epsilon_modify(&at_t, 0.3).unwrap().weights, at_t.weights);
        assert!(epsilon_modify(&mu, 1.0).is_err());
        assert_eq!(restrict(&m), p);
        let _ = tree;
    }

    #[test]
    fn lift_one_step_call() {
        let tree = one_step(vec![-0.2, 0.2]);
        let g = StaticOptionSet::new(vec![StaticOption {
            payoff: Payoff::Call { strike: 1.0, coordinate: 0 },
            price: 0.1,
        }])
        .values(&tree)
        .unwrap();
        let p = PathMeasure::uniform(2);
        let lifted = lift_measure(&tree, &p, &g, -0.1, 1e-12).unwrap();
        let t = &lifted.tree;
        assert_eq!(t.vertices[0].state, vec![1.0, 0.0]);
        assert!(t.vertices[1].state[1].abs() < 1e-15);
        let ys: Vec<f64> = t.leaves.iter().map(|&l| t.vertices[l].state[1]).collect();
        assert!((ys[0] + 0.1).abs() < 1e-15 && (ys[1] - 0.1).abs() < 1e-15);
        assert!(validate_martingale(&lifted.measure, t, Filtration::Base, 1e-12).unwrap().is_empty());
        assert_eq!(restrict_joint(&lifted.measure, &lifted.base_paths, 2).unwrap(), p);
        let bad = PathMeasure::dirac(2, 1);
        assert!(matches!(lift_measure(&tree, &bad, &g, -0.1, 1e-9), Err(Error::Uncalibrated { .. })));
    }
}

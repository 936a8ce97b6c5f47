//! American payoffs: one value per vertex of a tree, i.e. a function of the
//! stopped path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Tree;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmericanPayoff {
    pub values: Vec<f64>,
    /// A finite lower bound of the payoff on the lattice.
    pub lower_bound: f64,
}

impl AmericanPayoff {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("payoff values must be finite".into()));
        }
        let lower_bound = values.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self { values, lower_bound })
    }

    pub fn from_fn(tree: &Tree, mut f: impl FnMut(usize, &[f64]) -> f64) -> Result<Self> {
        Self::new(
            tree.vertices
                .iter()
                .map(|v| f(v.date, &v.state[..tree.x_dim]))
                .collect(),
        )
    }

    pub fn constant(tree: &Tree, c: f64) -> Result<Self> {
        Self::new(vec![c; tree.vertices.len()])
    }

    /// A European claim inside the American machinery: exercise before the
    /// terminal date pays `lower_bound - 1`, which is never optimal.
    pub fn european(tree: &Tree, terminal: &[f64]) -> Result<Self> {
        if terminal.len() != tree.num_paths() || terminal.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("terminal payoff needs one finite value per path".into()));
        }
        let lower = terminal.iter().copied().fold(f64::INFINITY, f64::min);
        let sentinel = lower - 1.0;
        let mut values = vec![sentinel; tree.vertices.len()];
        for (p, &leaf) in tree.leaves.iter().enumerate() {
            values[leaf] = terminal[p];
        }
        Ok(Self {
            values,
            lower_bound: sentinel,
        })
    }

    pub fn check_tree(&self, tree: &Tree) -> Result<()> {
        if self.values.len() != tree.vertices.len() {
            return Err(Error::IndexMismatch(format!(
                "payoff has {} values, lattice has {} vertices",
                self.values.len(),
                tree.vertices.len()
            )));
        }
        Ok(())
    }

    /// Transfers a payoff on a base tree to a tree whose vertices point at
    /// base vertices (`Z_hat(v) = Z(base(v))`).
    pub fn transfer(&self, target: &Tree) -> Self {
        Self {
            values: target.vertices.iter().map(|v| self.values[v.base]).collect(),
            lower_bound: self.lower_bound,
        }
    }

    /// `Z(theta, omega)` on the enlarged index `theta_dates x paths`.
    pub fn enlarged_values(&self, tree: &Tree, theta_dates: &[usize]) -> Vec<f64> {
        let n = tree.num_paths();
        let mut out = Vec::with_capacity(theta_dates.len() * n);
        for &u in theta_dates {
            for p in 0..n {
                out.push(self.values[tree.vertex_at(p, u)]);
            }
        }
        out
    }

    pub fn terminal_values(&self, tree: &Tree) -> Vec<f64> {
        tree.leaves.iter().map(|&l| self.values[l]).collect()
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v + c).collect(),
            lower_bound: self.lower_bound + c,
        }
    }
}

/// Catalog of payoff formulas, evaluated on asset coordinate 0 at each
/// vertex as a function of (time, price).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PayoffSpec {
    Constant { value: f64 },
    Call { strike: f64 },
    Put { strike: f64 },
    /// `peak - slope |t - center| + min((x - strike)^+, cap)` up to
    /// `tent_end`, then `min((x - strike)^+, cap)`.
    Tent {
        peak: f64,
        slope: f64,
        center: f64,
        tent_end: f64,
        strike: f64,
        cap: f64,
    },
    /// European claim `(x_T - strike)^+`; exercise before maturity is
    /// never optimal.
    EuropeanCall { strike: f64 },
    /// One value per vertex id.
    Tabulated { values: Vec<f64> },
}

impl PayoffSpec {
    pub fn build(&self, tree: &Tree) -> Result<AmericanPayoff> {
        let time = |t: usize| tree.dates[t];
        match self {
            PayoffSpec::Constant { value } => AmericanPayoff::constant(tree, *value),
            PayoffSpec::Call { strike } => AmericanPayoff::from_fn(tree, |_, x| (x[0] - strike).max(0.0)),
            PayoffSpec::Put { strike } => AmericanPayoff::from_fn(tree, |_, x| (strike - x[0]).max(0.0)),
            PayoffSpec::Tent {
                peak,
                slope,
                center,
                tent_end,
                strike,
                cap,
            } => AmericanPayoff::from_fn(tree, |t, x| {
                let intrinsic = (x[0] - strike).max(0.0).min(*cap);
                let s = time(t);
                if s <= *tent_end + 1e-12 {
                    peak - slope * (s - center).abs() + intrinsic
                } else {
                    intrinsic
                }
            }),
            PayoffSpec::EuropeanCall { strike } => {
                let terminal: Vec<f64> = tree
                    .leaves
                    .iter()
                    .map(|&l| (tree.vertices[l].state[0] - strike).max(0.0))
                    .collect();
                AmericanPayoff::european(tree, &terminal)
            }
            PayoffSpec::Tabulated { values } => {
                let z = AmericanPayoff::new(values.clone())?;
                z.check_tree(tree)?;
                Ok(z)
            }
        }
    }
}

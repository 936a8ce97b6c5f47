use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::primal::{chargeable_paths, expect_optimal};
use super::system::{build_system, RowRole, System};
use crate::error::{Error, Result};
use crate::lattice::StopStatus;
use crate::lp::{solve_lp, LinearProgram, RowKind, Sense};
use crate::measures::ModelClass;
use crate::payoff::AmericanPayoff;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HedgeOptions {
    /// Drop all trading after exercise (`q~ = 0`) and the post-exercise band
    /// multipliers.
    pub forbid_continuation: bool,
    /// Strict pathwise variant: band multipliers forced to zero.
    pub no_band_multipliers: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyEntry {
    pub date: usize,
    pub vertex: usize,
    /// `Alive` for the pre-exercise strategy, `Stopped(u)` for the
    /// continuation strategy after exercise at `u`; `None` for single-date
    /// (European) hedges.
    pub status: Option<StopStatus>,
    pub position: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandSide {
    Upper,
    Lower,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplierEntry {
    pub date: usize,
    pub vertex: usize,
    pub status: Option<StopStatus>,
    pub coordinate: usize,
    pub side: BandSide,
    pub value: f64,
}

/// A superhedging plan: capital `x`, pre-exercise strategy `q`, continuation
/// strategies `q_tilde`, static option position `h` and nonnegative
/// variance-band multipliers.
///
/// Along a path stopped at `u` the plan pays
/// `x + sum_t q.dX + h.g + sum a+ (dX^2 - hi) + a- (lo - dX^2)`,
/// where the strategy used at `t >= u` is `q_tilde` for `u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HedgePlan {
    pub x: f64,
    pub q: Vec<StrategyEntry>,
    pub q_tilde: Vec<StrategyEntry>,
    pub h: Vec<f64>,
    pub multipliers: Vec<MultiplierEntry>,
}

type Key = (usize, usize, Option<StopStatus>);

impl HedgePlan {
    /// Terminal wealth of the plan along `path` when exercised at `theta`.
    pub fn wealth(&self, model: &ModelClass, theta: usize, path: usize) -> f64 {
        let tree = &model.tree;
        let positions: HashMap<Key, &Vec<f64>> = self
            .q
            .iter()
            .chain(&self.q_tilde)
            .map(|e| ((e.date, e.vertex, e.status), &e.position))
            .collect();
        let mut mult: HashMap<Key, Vec<&MultiplierEntry>> = HashMap::new();
        for m in &self.multipliers {
            mult.entry((m.date, m.vertex, m.status)).or_default().push(m);
        }
        let mut w = self.x;
        for (i, g) in model.options.iter().enumerate() {
            w += self.h[i] * g[path];
        }
        let pv = tree.path_vertices(path);
        for t in 0..tree.terminal() {
            let (v, c) = (pv[t], pv[t + 1]);
            let dx = tree.increment(v, c);
            let status = if theta <= t {
                StopStatus::Stopped(theta)
            } else {
                StopStatus::Alive
            };
            for key in [(t, v, Some(status)), (t, v, None)] {
                if let Some(pos) = positions.get(&key) {
                    w += pos.iter().zip(&dx).map(|(a, b)| a * b).sum::<f64>();
                }
                if let Some(ms) = mult.get(&key) {
                    let band = model.band.interval(v);
                    for m in ms {
                        let Some(b) = band else { continue };
                        let sq = dx[m.coordinate] * dx[m.coordinate];
                        w += match m.side {
                            BandSide::Upper => m.value * (sq - b.hi[m.coordinate]),
                            BandSide::Lower => m.value * (b.lo[m.coordinate] - sq),
                        };
                    }
                }
            }
        }
        w
    }

    /// Smallest `wealth - Z` over the given exercise dates and paths.
    pub fn slack(&self, model: &ModelClass, z: &AmericanPayoff, theta_dates: &[usize], paths: &[usize]) -> f64 {
        let tree = &model.tree;
        let mut worst = f64::INFINITY;
        for &p in paths {
            for &u in theta_dates {
                let zv = z.values[tree.vertex_at(p, u)];
                worst = worst.min(self.wealth(model, u, p) - zv);
            }
        }
        worst
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HedgeResult {
    pub value: f64,
    pub plan: HedgePlan,
    /// Paths charged by some measure of the model class.
    pub support: Vec<bool>,
}

fn solve_dual(model: &ModelClass, system: &System, zbar: &[f64], support: Vec<bool>) -> Result<HedgeResult> {
    let tree = &model.tree;
    let mut lp = LinearProgram::new(Sense::Minimize);
    let mut cons: Vec<Vec<(usize, f64)>> = vec![Vec::new(); system.elements.len()];
    for row in &system.rows {
        let var = match row.kind {
            RowKind::Eq => lp.add_free(row.rhs),
            RowKind::Le => lp.add_nonneg(row.rhs),
            RowKind::Ge => lp.add_nonneg(-row.rhs),
        };
        let sign = if row.kind == RowKind::Ge { -1.0 } else { 1.0 };
        for &(j, a) in &row.coeffs {
            cons[j].push((var, sign * a));
        }
    }
    for (j, coeffs) in cons.into_iter().enumerate() {
        lp.add_row(coeffs, RowKind::Ge, zbar[system.flat_index(j)]);
    }
    let sol = solve_lp(&lp)?;
    expect_optimal(&sol, "superhedging dual")?;
    let dim = tree.dim();
    let mut x = 0.0;
    let mut h = vec![0.0; model.options.len()];
    let mut strat: HashMap<Key, Vec<f64>> = HashMap::new();
    let mut order: Vec<Key> = Vec::new();
    let mut multipliers = Vec::new();
    for (r, row) in system.rows.iter().enumerate() {
        let y = sol.x[r];
        match row.role {
            RowRole::Mass => x = y,
            RowRole::Calibration { option } => h[option] = y,
            RowRole::Martingale {
                date,
                vertex,
                status,
                coordinate,
            } => {
                let status = if system.theta_dates.len() > 1 { status } else { None };
                let e = strat.entry((date, vertex, status)).or_insert_with(|| {
                    order.push((date, vertex, status));
                    vec![0.0; dim]
                });
                e[coordinate] = y;
            }
            RowRole::BandUpper {
                date,
                vertex,
                status,
                coordinate,
            }
            | RowRole::BandLower {
                date,
                vertex,
                status,
                coordinate,
            } => multipliers.push(MultiplierEntry {
                date,
                vertex,
                status,
                coordinate,
                side: if matches!(row.role, RowRole::BandUpper { .. }) {
                    BandSide::Upper
                } else {
                    BandSide::Lower
                },
                value: y.max(0.0),
            }),
        }
    }
    let (mut q, mut q_tilde) = (Vec::new(), Vec::new());
    for key in order {
        let entry = StrategyEntry {
            date: key.0,
            vertex: key.1,
            status: key.2,
            position: strat.remove(&key).unwrap_or_default(),
        };
        if matches!(key.2, Some(StopStatus::Stopped(_))) {
            q_tilde.push(entry);
        } else {
            q.push(entry);
        }
    }
    Ok(HedgeResult {
        value: sol.objective,
        plan: HedgePlan {
            x,
            q,
            q_tilde,
            h,
            multipliers,
        },
        support,
    })
}

/// Least capital superhedging the American payoff `Z` at every exercise
/// date on every chargeable path, with exercise-dependent continuation
/// strategies, static option positions and band multipliers.
pub fn dual_superhedge_american(model: &ModelClass, z: &AmericanPayoff, opts: HedgeOptions) -> Result<HedgeResult> {
    let tree = &model.tree;
    z.check_tree(tree)?;
    let support = chargeable_paths(model)?;
    let mut system = build_system(model, &model.theta_dates, &support)?;
    system.rows.retain(|r| {
        !(opts.no_band_multipliers && r.role.is_band()
            || opts.forbid_continuation && matches!(r.role.status(), Some(StopStatus::Stopped(_))))
    });
    let zbar = z.enlarged_values(tree, &system.theta_dates);
    solve_dual(model, &system, &zbar, support)
}

/// Least capital superhedging the terminal payoff `f` (one value per path).
pub fn dual_superhedge_european(model: &ModelClass, f: &[f64]) -> Result<HedgeResult> {
    let tree = &model.tree;
    if f.len() != tree.num_paths() {
        return Err(Error::IndexMismatch(format!(
            "payoff has {} values for {} paths",
            f.len(),
            tree.num_paths()
        )));
    }
    let support = chargeable_paths(model)?;
    let system = build_system(model, &[tree.terminal()], &support)?;
    solve_dual(model, &system, f, support)
}

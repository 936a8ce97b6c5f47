use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LinearProgram, LpStatus, RowKind, Sense};
use crate::measures::ModelClass;
use crate::payoff::AmericanPayoff;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DppResult {
    pub value: f64,
    /// Value per vertex; `None` where no admissible one-step kernel exists.
    pub values: Vec<Option<f64>>,
    /// Best continuation value per vertex.
    pub continuation: Vec<Option<f64>>,
    /// Whether stopping is optimal at the vertex.
    pub stop: Vec<bool>,
    /// Optimal one-step kernel over the children at each vertex.
    pub kernels: Vec<Option<Vec<f64>>>,
}

/// Best one-step continuation out of `v`: maximizes `sum p_c V_c` over
/// martingale kernels on admissible children satisfying the band.
fn continuation(model: &ModelClass, v: usize, values: &[Option<f64>]) -> Result<Option<(f64, Vec<f64>)>> {
    let tree = &model.tree;
    let vx = &tree.vertices[v];
    let kids: Vec<(usize, usize, f64)> = vx
        .children
        .iter()
        .enumerate()
        .filter_map(|(i, &c)| values[c].map(|val| (i, c, val)))
        .collect();
    if kids.is_empty() {
        return Ok(None);
    }
    let mut lp = LinearProgram::new(Sense::Maximize);
    for (_, _, val) in &kids {
        lp.add_nonneg(*val);
    }
    lp.add_row((0..kids.len()).map(|j| (j, 1.0)).collect(), RowKind::Eq, 1.0);
    let incs: Vec<Vec<f64>> = kids.iter().map(|(_, c, _)| tree.increment(v, *c)).collect();
    for i in 0..tree.dim() {
        let coeffs: Vec<(usize, f64)> = incs
            .iter()
            .enumerate()
            .filter(|(_, dx)| dx[i] != 0.0)
            .map(|(j, dx)| (j, dx[i]))
            .collect();
        if !coeffs.is_empty() {
            lp.add_row(coeffs, RowKind::Eq, 0.0);
        }
    }
    if tree.band_applies(vx.date) {
        if let Some(b) = model.band.interval(v) {
            for i in 0..tree.x_dim {
                let sq: Vec<f64> = incs.iter().map(|dx| dx[i] * dx[i]).collect();
                lp.add_row(sq.iter().enumerate().map(|(j, s)| (j, s - b.hi[i])).collect(), RowKind::Le, 0.0);
                if b.lo[i] > 0.0 {
                    lp.add_row(sq.iter().enumerate().map(|(j, s)| (j, s - b.lo[i])).collect(), RowKind::Ge, 0.0);
                }
            }
        }
    }
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => {
            let mut kernel = vec![0.0; vx.children.len()];
            for (j, (i, _, _)) in kids.iter().enumerate() {
                kernel[*i] = sol.x[j].max(0.0);
            }
            Ok(Some((sol.objective, kernel)))
        }
        LpStatus::Infeasible => Ok(None),
        other => Err(Error::Solver(format!("continuation LP at vertex {v}: {other:?}"))),
    }
}

/// Robust dynamic programming: `V_T = Z_T`, `V_t = max(Z_t, sup_p E_p V_{t+1})`
/// with the sup over one-step martingale kernels satisfying the band.
/// Vertices without an admissible kernel are excluded. Only valid without
/// static options.
pub fn robust_dpp(model: &ModelClass, z: &AmericanPayoff) -> Result<DppResult> {
    if model.has_options() {
        return Err(Error::Config("robust dynamic programming does not apply with static options".into()));
    }
    let tree = &model.tree;
    z.check_tree(tree)?;
    let nv = tree.vertices.len();
    let can_stop: Vec<bool> = (0..=tree.terminal()).map(|t| model.theta_dates.contains(&t)).collect();
    let mut values: Vec<Option<f64>> = vec![None; nv];
    let mut cont = vec![None; nv];
    let mut stop = vec![false; nv];
    let mut kernels = vec![None; nv];
    for &l in &tree.leaves {
        values[l] = Some(z.values[l]);
        stop[l] = true;
    }
    for t in (0..tree.terminal()).rev() {
        let results: Vec<Result<Option<(f64, Vec<f64>)>>> =
            tree.by_date[t].par_iter().map(|&v| continuation(model, v, &values)).collect();
        for (&v, r) in tree.by_date[t].iter().zip(results) {
            if let Some((c, kernel)) = r? {
                let s = can_stop[t] && z.values[v] >= c;
                values[v] = Some(if s { z.values[v] } else { c });
                stop[v] = s;
                cont[v] = Some(c);
                kernels[v] = Some(kernel);
            }
        }
    }
    let value = values[tree.root()]
        .ok_or_else(|| Error::InfeasibleClass("no admissible kernel at the root".into()))?;
    Ok(DppResult {
        value,
        values,
        continuation: cont,
        stop,
        kernels,
    })
}

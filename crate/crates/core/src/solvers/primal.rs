use serde::{Deserialize, Serialize};

use super::system::{build_system, System};
use crate::error::{Error, Result};
use crate::lp::{solve_lp, LinearProgram, LpSolution, LpStatus, RowKind, Sense};
use crate::measures::{EnlargedMeasure, ModelClass, PathMeasure};
use crate::payoff::AmericanPayoff;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PrimalOptions {
    /// Restrict to measures with terminal stop mass at least `eps` times
    /// the path mass.
    pub eps_floor: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrimalResult {
    pub value: f64,
    pub measure: EnlargedMeasure,
    pub iterations: usize,
}

pub(crate) fn lp_from_system(system: &System, objective: &[f64], sense: Sense) -> LinearProgram {
    let mut lp = LinearProgram::new(sense);
    for &c in objective {
        lp.add_nonneg(c);
    }
    for row in &system.rows {
        lp.add_row(row.coeffs.clone(), row.kind, row.rhs);
    }
    lp
}

pub(crate) fn expect_optimal(sol: &LpSolution, what: &str) -> Result<()> {
    match sol.status {
        LpStatus::Optimal => Ok(()),
        LpStatus::Infeasible => Err(Error::InfeasibleClass(format!("{what}: no measure satisfies the constraints"))),
        other => Err(Error::Solver(format!("{what}: solver status {other:?}"))),
    }
}

/// Maximizes `E^mu Z(theta, omega)` over enlarged martingale measures in the
/// model class (martingale per enlarged atom, band, calibration).
pub fn primal_enlarged(model: &ModelClass, z: &AmericanPayoff, opts: PrimalOptions) -> Result<PrimalResult> {
    let tree = &model.tree;
    z.check_tree(tree)?;
    let include = vec![true; tree.num_paths()];
    let system = build_system(model, &model.theta_dates, &include)?;
    let zbar = z.enlarged_values(tree, &system.theta_dates);
    let objective: Vec<f64> = (0..system.elements.len()).map(|j| zbar[system.flat_index(j)]).collect();
    let mut lp = lp_from_system(&system, &objective, Sense::Maximize);
    if let Some(eps) = opts.eps_floor {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::EpsilonOutOfRange(eps));
        }
        let n = tree.num_paths();
        let kt = system.theta_dates.len() - 1;
        for p in 0..n {
            let coeffs: Vec<(usize, f64)> = system
                .elements
                .iter()
                .enumerate()
                .filter(|(_, (_, q))| *q == p)
                .map(|(j, (k, _))| (j, if *k == kt { 1.0 - eps } else { -eps }))
                .collect();
            lp.add_row(coeffs, RowKind::Ge, 0.0);
        }
    }
    let sol = solve_lp(&lp)?;
    expect_optimal(&sol, "enlarged primal")?;
    let mut raw = vec![0.0; system.theta_dates.len() * system.num_paths];
    for j in 0..system.elements.len() {
        raw[system.flat_index(j)] = sol.x[j];
    }
    let measure = EnlargedMeasure::from_raw(system.theta_dates.clone(), system.num_paths, &raw)?;
    Ok(PrimalResult {
        value: sol.objective,
        measure,
        iterations: sol.iterations,
    })
}

/// Maximizes `E^P f` over path measures in the model class.
pub fn primal_paths(model: &ModelClass, f: &[f64]) -> Result<(f64, PathMeasure)> {
    let tree = &model.tree;
    let include = vec![true; tree.num_paths()];
    let system = build_system(model, &[tree.terminal()], &include)?;
    let lp = lp_from_system(&system, f, Sense::Maximize);
    let sol = solve_lp(&lp)?;
    expect_optimal(&sol, "path-measure primal")?;
    Ok((sol.objective, PathMeasure::from_raw(&sol.x)?))
}

/// Paths charged by at least one measure in the model class, found by
/// repeatedly maximizing the mass of not-yet-covered paths.
pub fn chargeable_paths(model: &ModelClass) -> Result<Vec<bool>> {
    let tree = &model.tree;
    let n = tree.num_paths();
    let include = vec![true; n];
    let system = build_system(model, &[tree.terminal()], &include)?;
    let mut covered = vec![false; n];
    loop {
        let objective: Vec<f64> = covered.iter().map(|c| if *c { 0.0 } else { 1.0 }).collect();
        if objective.iter().all(|c| *c == 0.0) {
            break;
        }
        let lp = lp_from_system(&system, &objective, Sense::Maximize);
        let sol = solve_lp(&lp)?;
        expect_optimal(&sol, "support search")?;
        if sol.objective <= 1e-12 {
            break;
        }
        let mut progress = false;
        for p in 0..n {
            if !covered[p] && sol.x[p] > 1e-12 {
                covered[p] = true;
                progress = true;
            }
        }
        if !progress {
            break;
        }
    }
    Ok(covered)
}

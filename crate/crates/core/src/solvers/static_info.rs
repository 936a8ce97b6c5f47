use rayon::prelude::*;

use super::primal::{expect_optimal, lp_from_system};
use super::system::{build_system, System};
use crate::error::{Error, Result};
use crate::lattice::Tree;
use crate::lp::{solve_lp, LpStatus, Sense};
use crate::measures::{ModelClass, PathMeasure};
use crate::payoff::AmericanPayoff;
use crate::stopping::{enumerate_rules, stopped_value, StoppingRule};

#[derive(Clone, Debug, PartialEq)]
pub struct StaticResult {
    pub value: f64,
    pub rule: StoppingRule,
    pub measure: PathMeasure,
    pub rules_evaluated: usize,
}

fn rule_objective(tree: &Tree, rule: &StoppingRule, z: &AmericanPayoff) -> Vec<f64> {
    (0..tree.num_paths()).map(|p| z.values[rule.stop_vertex(tree, p)]).collect()
}

fn solve_for_rule(system: &System, objective: &[f64]) -> Result<Option<(f64, Vec<f64>)>> {
    let lp = lp_from_system(system, objective, Sense::Maximize);
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(Some((sol.objective, sol.x))),
        LpStatus::Infeasible => Ok(None),
        other => Err(Error::Solver(format!("rule LP: {other:?}"))),
    }
}

/// Best value over pure stopping rules adapted to the asset filtration,
/// each paired with its worst-case-best calibrated path measure:
/// `max_tau max_P E^P Z_tau`.
pub fn static_info_value(model: &ModelClass, z: &AmericanPayoff, rule_cap: u128) -> Result<StaticResult> {
    let tree = &model.tree;
    z.check_tree(tree)?;
    let rules: Vec<StoppingRule> = enumerate_rules(tree, rule_cap)?
        .into_iter()
        .filter(|r| r.stop_dates(tree).iter().all(|d| model.theta_dates.contains(d)))
        .collect();
    let include = vec![true; tree.num_paths()];
    let system = build_system(model, &[tree.terminal()], &include)?;
    let results: Vec<Result<Option<(f64, Vec<f64>)>>> = rules
        .par_iter()
        .map(|r| solve_for_rule(&system, &rule_objective(tree, r, z)))
        .collect();
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    for (i, r) in results.into_iter().enumerate() {
        if let Some((v, x)) = r? {
            if best.as_ref().is_none_or(|(bv, _, _)| v > *bv + 1e-13) {
                best = Some((v, i, x));
            }
        }
    }
    let (value, i, x) = best.ok_or_else(|| Error::InfeasibleClass("no calibrated martingale measure".into()))?;
    Ok(StaticResult {
        value,
        rule: rules[i].clone(),
        measure: PathMeasure::from_raw(&x)?,
        rules_evaluated: rules.len(),
    })
}

/// Optimal rule for a fixed measure by backward induction (Snell envelope);
/// zero-mass vertices continue.
pub fn snell_rule(tree: &Tree, p: &PathMeasure, z: &AmericanPayoff, can_stop: &[bool]) -> StoppingRule {
    let mass = p.vertex_masses(tree);
    let nv = tree.vertices.len();
    let mut value = vec![0.0; nv];
    let mut decide = vec![false; nv];
    for v in (0..nv).rev() {
        let vx = &tree.vertices[v];
        if vx.is_leaf() {
            value[v] = z.values[v];
            decide[v] = true;
            continue;
        }
        let cont = if mass[v] > 0.0 {
            vx.children.iter().map(|&c| mass[c] * value[c]).sum::<f64>() / mass[v]
        } else {
            f64::NEG_INFINITY
        };
        if can_stop[vx.date] && mass[v] > 0.0 && z.values[v] >= cont {
            value[v] = z.values[v];
            decide[v] = true;
        } else {
            value[v] = if cont.is_finite() { cont } else { z.values[v] };
        }
    }
    StoppingRule::from_decisions(tree, &decide)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AscentResult {
    pub value: f64,
    pub rule: StoppingRule,
    pub measure: PathMeasure,
    pub iterations: usize,
}

/// Cross-check of the static value by alternating ascent over
/// (rule, measure): Snell rule under the current measure, then the best
/// measure for that rule. Returns a lower bound of the static value.
pub fn alternating_ascent(model: &ModelClass, z: &AmericanPayoff, max_iter: usize) -> Result<AscentResult> {
    let tree = &model.tree;
    z.check_tree(tree)?;
    let include = vec![true; tree.num_paths()];
    let system = build_system(model, &[tree.terminal()], &include)?;
    let can_stop: Vec<bool> = (0..=tree.terminal()).map(|t| model.theta_dates.contains(&t)).collect();
    let mut rule = StoppingRule::always_at_terminal(tree);
    let lp = lp_from_system(&system, &rule_objective(tree, &rule, z), Sense::Maximize);
    let sol = solve_lp(&lp)?;
    expect_optimal(&sol, "alternating ascent")?;
    let mut measure = PathMeasure::from_raw(&sol.x)?;
    let mut value = sol.objective;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let next_rule = snell_rule(tree, &measure, z, &can_stop);
        let Some((v, x)) = solve_for_rule(&system, &rule_objective(tree, &next_rule, z))? else {
            break;
        };
        if v <= value + 1e-12 {
            if stopped_value(tree, &measure, &next_rule, &z.values) > value + 1e-12 {
                rule = next_rule;
            }
            break;
        }
        value = v;
        rule = next_rule;
        measure = PathMeasure::from_raw(&x)?;
    }
    Ok(AscentResult {
        value,
        rule,
        measure,
        iterations,
    })
}

use serde::{Deserialize, Serialize};

use super::dpp::robust_dpp;
use super::dual::{dual_superhedge_american, HedgeOptions};
use super::primal::{primal_enlarged, PrimalOptions};
use super::static_info::static_info_value;
use crate::error::{Error, Result};
use crate::joint::{build_joint_lattice, JointLattice, YSpec};
use crate::lattice::StopStatus;
use crate::measures::{lift_enlarged_levels, lift_levels, EnlargedMeasure, ModelClass, PathMeasure};
use crate::payoff::AmericanPayoff;

/// Default slack allowed in every comparison of the chain.
pub const CHAIN_TOL: f64 = 1e-7;

/// Option-price seed levels per base vertex, collected from lifts of the
/// given path measures (own filtration) and enlarged measures (prefix plus
/// stop status).
pub fn lift_seeds(model: &ModelClass, paths: &[&PathMeasure], enlarged: &[&EnlargedMeasure]) -> Result<Vec<Vec<Vec<f64>>>> {
    let tree = &model.tree;
    let mut seeds: Vec<Vec<Vec<f64>>> = vec![Vec::new(); tree.vertices.len()];
    if !model.has_options() {
        return Ok(seeds);
    }
    for p in paths {
        for (v, y) in lift_levels(tree, p, &model.options)?.into_iter().enumerate() {
            seeds[v].push(y);
        }
    }
    for mu in enlarged {
        for lvl in lift_enlarged_levels(tree, mu, &model.options)? {
            seeds[lvl.vertex].push(lvl.level);
        }
    }
    Ok(seeds)
}

/// The joint model over `lattice`, with exercise allowed at the pre-trading
/// date and at every base exercise date.
pub fn joint_model(base: &ModelClass, lattice: &JointLattice) -> Result<ModelClass> {
    let mut dates = vec![0];
    dates.extend(base.theta_dates.iter().map(|t| t + 1));
    lattice.model(base)?.with_theta_dates(dates)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LiftedValue {
    pub value: f64,
    pub lattice: JointLattice,
    pub model: ModelClass,
    pub payoff: AmericanPayoff,
}

/// Best value over joint-lattice measures and stopping rules that see the
/// dynamically traded option prices, by robust dynamic programming on the
/// joint tree.
pub fn lifted_american_value(
    base: &ModelClass,
    z: &AmericanPayoff,
    y_spec: &YSpec,
    pre_date: f64,
    seeds: &[Vec<Vec<f64>>],
) -> Result<LiftedValue> {
    let seeds = if y_spec.lift_seeds { seeds } else { &[] };
    let lattice = build_joint_lattice(base, pre_date, y_spec, seeds)?;
    let model = joint_model(base, &lattice)?;
    let payoff = lattice.payoff(z);
    let value = robust_dpp(&model, &payoff)?.value;
    Ok(LiftedValue {
        value,
        lattice,
        model,
        payoff,
    })
}

#[derive(Clone, Debug)]
pub struct ChainInstance {
    pub model: ModelClass,
    pub z: AmericanPayoff,
    pub y_spec: YSpec,
    pub pre_date: f64,
    pub rule_cap: u128,
    pub tol: f64,
    pub description: String,
}

/// The chain `pi_a >= pi_hat >= lifted_primal = enlarged_primal >=
/// static_primal`, plus the calibrated enlarged value (equal to `pi_a` by
/// finite duality). Values not yet computed are NaN.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueReport {
    pub description: String,
    pub tol: f64,
    pub pi_a: f64,
    pub pi_hat: f64,
    pub lifted_primal: f64,
    pub enlarged_primal: f64,
    pub static_primal: f64,
    pub enlarged_calibrated: f64,
    /// `lifted_primal - static_primal`.
    pub gap: f64,
    /// `pi_a - lifted_primal`.
    pub residual: f64,
    pub ends_coincide: bool,
    pub ordering_ok: bool,
    pub joint_paths: usize,
    pub rules_evaluated: usize,
}

impl ValueReport {
    fn empty(description: &str, tol: f64) -> Self {
        Self {
            description: description.to_string(),
            tol,
            pi_a: f64::NAN,
            pi_hat: f64::NAN,
            lifted_primal: f64::NAN,
            enlarged_primal: f64::NAN,
            static_primal: f64::NAN,
            enlarged_calibrated: f64::NAN,
            gap: f64::NAN,
            residual: f64::NAN,
            ends_coincide: false,
            ordering_ok: false,
            joint_paths: 0,
            rules_evaluated: 0,
        }
    }

    /// Labelled values in chain order.
    pub fn entries(&self) -> [(&'static str, f64); 6] {
        [
            ("pi_a", self.pi_a),
            ("pi_hat", self.pi_hat),
            ("lifted_primal", self.lifted_primal),
            ("enlarged_primal", self.enlarged_primal),
            ("static_primal", self.static_primal),
            ("enlarged_calibrated", self.enlarged_calibrated),
        ]
    }

    pub fn check_ordering(&self) -> bool {
        let t = self.tol;
        self.pi_a >= self.pi_hat - t
            && self.pi_hat >= self.lifted_primal - t
            && (self.lifted_primal - self.enlarged_primal).abs() <= t
            && self.lifted_primal >= self.static_primal - t
    }

    pub fn summary(&self) -> String {
        let mut s = format!("{}\n", self.description);
        for (k, v) in self.entries() {
            s.push_str(&format!("  {k:<20} {v:.10}\n"));
        }
        s.push_str(&format!("  {:<20} {:.10}\n", "gap", self.gap));
        s.push_str(&format!("  {:<20} {:.3e}\n", "residual", self.residual));
        s.push_str(&format!("  {:<20} {}\n", "ends_coincide", self.ends_coincide));
        s.push_str(&format!("  {:<20} {}\n", "ordering_ok", self.ordering_ok));
        s
    }
}

fn abort(stage: &str, partial: &ValueReport, e: Error) -> Error {
    Error::ChainAborted {
        stage: stage.to_string(),
        partial: Box::new(partial.clone()),
        source: Box::new(e),
    }
}

/// Runs every solver of the chain on one instance.
pub fn inequality_chain(inst: &ChainInstance) -> Result<ValueReport> {
    let mut r = ValueReport::empty(&inst.description, inst.tol);
    let model = &inst.model;
    let z = &inst.z;

    let st = static_info_value(model, z, inst.rule_cap).map_err(|e| abort("static_primal", &r, e))?;
    r.static_primal = st.value;
    r.rules_evaluated = st.rules_evaluated;

    let cal = primal_enlarged(model, z, PrimalOptions::default()).map_err(|e| abort("enlarged_calibrated", &r, e))?;
    r.enlarged_calibrated = cal.value;

    let pi_a = dual_superhedge_american(model, z, HedgeOptions::default()).map_err(|e| abort("pi_a", &r, e))?;
    r.pi_a = pi_a.value;

    let seeds = lift_seeds(model, &[&st.measure], &[&cal.measure]).map_err(|e| abort("lift_seeds", &r, e))?;
    let lifted = lifted_american_value(model, z, &inst.y_spec, inst.pre_date, &seeds)
        .map_err(|e| abort("lifted_primal", &r, e))?;
    r.lifted_primal = lifted.value;
    r.joint_paths = lifted.lattice.tree.num_paths();

    let enl = primal_enlarged(&lifted.model, &lifted.payoff, PrimalOptions::default())
        .map_err(|e| abort("enlarged_primal", &r, e))?;
    r.enlarged_primal = enl.value;

    let pi_hat = dual_superhedge_american(&lifted.model, &lifted.payoff, HedgeOptions::default())
        .map_err(|e| abort("pi_hat", &r, e))?;
    r.pi_hat = pi_hat.value;

    r.gap = r.lifted_primal - r.static_primal;
    r.residual = r.pi_a - r.lifted_primal;
    r.ends_coincide = r.residual.abs() <= inst.tol;
    r.ordering_ok = r.check_ordering();
    Ok(r)
}

/// Stop-status of an enlarged level, kept for report tables.
pub fn status_label(s: StopStatus) -> String {
    match s {
        StopStatus::Alive => "alive".into(),
        StopStatus::Stopped(u) => format!("stopped@{u}"),
    }
}

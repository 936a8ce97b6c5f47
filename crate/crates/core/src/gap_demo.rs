//! The built-in duality-gap instance.
//!
//! The asset is constant on `{0, 1/4, 1/2}`; at `1/2` it moves by `+u`, `0`
//! (after which it stays frozen) or `-u`, and at `3/4` by `+-u`. The band
//! caps the one-step variance at `u^2`. The single static option is the call
//! `(X_1 - 1)^+` priced at `p`, and the American payoff is a tent peaking at
//! `t = 1/4`, `3p/2 - 6p |t - 1/4| + (X_t - 1)^+ ^ cap`, followed by the
//! capped call. Option prices may branch to `+-p` at date 0 in the lift.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::joint::YSpec;
use crate::lattice::{build_lattice, Branch, LatticeSpec, TimeGrid, DEFAULT_PATH_CAP};
use crate::measures::{epsilon_modify, ModelClass, Payoff, StaticOption, StaticOptionSet, VolatilityBand};
use crate::payoff::{AmericanPayoff, PayoffSpec};
use crate::solvers::{
    inequality_chain, lift_seeds, lifted_american_value, primal_enlarged, static_info_value, ChainInstance, PrimalOptions,
    ValueReport, CHAIN_TOL,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GapDemoConfig {
    /// Step size after the mid date.
    pub u: f64,
    /// Call price.
    pub p: f64,
    /// Length of the pre-trading step.
    pub delta: f64,
    pub cap: f64,
    /// Keep the static call; without it the chain collapses.
    pub include_option: bool,
    /// Report the value of the lifted optimizer after epsilon-modification.
    pub eps: Option<f64>,
    pub rule_cap: u128,
    pub tol: f64,
}

impl Default for GapDemoConfig {
    fn default() -> Self {
        Self {
            u: 0.2,
            p: 0.05,
            delta: 0.25,
            cap: 100.0,
            include_option: true,
            eps: None,
            rule_cap: 100_000,
            tol: CHAIN_TOL,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsCorrection {
    pub eps: f64,
    /// `E Z` under the epsilon-modified lifted optimizer.
    pub modified_value: f64,
    /// `(1 - eps) lifted + eps E[Z_T]` under the optimizer's path marginal.
    pub predicted: f64,
    pub terminal_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapDemoReport {
    pub config: GapDemoConfig,
    pub chain: ValueReport,
    pub static_value: f64,
    pub lifted_value: f64,
    pub gap: f64,
    pub num_paths: usize,
    pub eps_correction: Option<EpsCorrection>,
}

pub struct GapInstance {
    pub model: ModelClass,
    pub z: AmericanPayoff,
    pub y_spec: YSpec,
    pub pre_date: f64,
}

pub fn gap_lattice_spec(u: f64) -> LatticeSpec {
    let b = |dx: f64| Branch::new(vec![dx]);
    let frozen = Branch {
        dx: vec![0.0],
        to: Some("frozen".into()),
    };
    let mut spec = LatticeSpec {
        grid: TimeGrid {
            dates: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            pre_date: None,
        },
        x0: vec![1.0],
        steps: vec![vec![b(0.0)], vec![b(0.0)], vec![b(u), frozen, b(-u)], vec![b(u), b(-u)]],
        regimes: Default::default(),
        absorb_above: None,
        absorb_below: None,
        max_paths: DEFAULT_PATH_CAP,
    };
    spec.regimes.insert("frozen".into(), Vec::new());
    spec
}

pub fn gap_instance(cfg: &GapDemoConfig) -> Result<GapInstance> {
    let positive = |name: &str, x: f64| {
        if x.is_finite() && x > 0.0 {
            Ok(())
        } else {
            Err(Error::Config(format!("{name} must be positive and finite, got {x}")))
        }
    };
    positive("u", cfg.u)?;
    positive("p", cfg.p)?;
    positive("delta", cfg.delta)?;
    positive("cap", cfg.cap)?;
    let lat = build_lattice(&gap_lattice_spec(cfg.u))?;
    let tree = lat.tree;
    let band = VolatilityBand::uniform(&tree, 0.0, cfg.u * cfg.u)?;
    let z = PayoffSpec::Tent {
        peak: 1.5 * cfg.p,
        slope: 6.0 * cfg.p,
        center: 0.25,
        tent_end: 0.5,
        strike: 1.0,
        cap: cfg.cap,
    }
    .build(&tree)?;
    let mut model = ModelClass::new(tree, band)?;
    let mut y_spec = YSpec::default();
    if cfg.include_option {
        let g = StaticOptionSet::new(vec![StaticOption {
            payoff: Payoff::Call {
                strike: 1.0,
                coordinate: 0,
            },
            price: cfg.p,
        }]);
        model = model.with_options(&g)?;
        y_spec = YSpec::branching(0, vec![vec![cfg.p], vec![-cfg.p]]);
    }
    Ok(GapInstance {
        model,
        z,
        y_spec,
        pre_date: -cfg.delta,
    })
}

pub fn run_gap_demo(cfg: &GapDemoConfig) -> Result<GapDemoReport> {
    let inst = gap_instance(cfg)?;
    let chain = inequality_chain(&ChainInstance {
        model: inst.model.clone(),
        z: inst.z.clone(),
        y_spec: inst.y_spec.clone(),
        pre_date: inst.pre_date,
        rule_cap: cfg.rule_cap,
        tol: cfg.tol,
        description: "duality-gap demo".into(),
    })?;
    let eps_correction = match cfg.eps {
        Some(eps) => Some(eps_correction(&inst, eps, cfg.rule_cap)?),
        None => None,
    };
    Ok(GapDemoReport {
        config: cfg.clone(),
        static_value: chain.static_primal,
        lifted_value: chain.lifted_primal,
        gap: chain.gap,
        num_paths: inst.model.tree.num_paths(),
        chain,
        eps_correction,
    })
}

fn eps_correction(inst: &GapInstance, eps: f64, rule_cap: u128) -> Result<EpsCorrection> {
    let st = static_info_value(&inst.model, &inst.z, rule_cap)?;
    let cal = primal_enlarged(&inst.model, &inst.z, PrimalOptions::default())?;
    let seeds = lift_seeds(&inst.model, &[&st.measure], &[&cal.measure])?;
    let lifted = lifted_american_value(&inst.model, &inst.z, &inst.y_spec, inst.pre_date, &seeds)?;
    let best = primal_enlarged(&lifted.model, &lifted.payoff, PrimalOptions::default())?;
    let tree = &lifted.model.tree;
    let zbar = lifted.payoff.enlarged_values(tree, &best.measure.theta_dates);
    let modified = epsilon_modify(&best.measure, eps)?;
    let terminal = lifted.payoff.terminal_values(tree);
    let terminal_mean = best.measure.omega_marginal().expectation(&terminal);
    Ok(EpsCorrection {
        eps,
        modified_value: modified.expectation(&zbar),
        predicted: (1.0 - eps) * best.value + eps * terminal_mean,
        terminal_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_demo_reproduces_the_gap() {
        let r = run_gap_demo(&GapDemoConfig::default()).unwrap();
        assert_eq!(r.num_paths, 5);
        assert!((r.static_value - 0.075).abs() < 1e-9, "{}", r.chain.summary());
        assert!((r.lifted_value - 0.0875).abs() < 1e-9, "{}", r.chain.summary());
        assert!(r.chain.ordering_ok, "{}", r.chain.summary());
    }

    #[test]
    fn without_the_option_the_chain_collapses() {
        let cfg = GapDemoConfig {
            include_option: false,
            ..Default::default()
        };
        let r = run_gap_demo(&cfg).unwrap();
        for (name, v) in r.chain.entries() {
            assert!((v - r.chain.lifted_primal).abs() < 1e-7, "{name}: {}", r.chain.summary());
        }
    }

    #[test]
    fn eps_correction_is_linear() {
        let cfg = GapDemoConfig {
            eps: Some(0.1),
            ..Default::default()
        };
        let c = run_gap_demo(&cfg).unwrap().eps_correction.unwrap();
        assert!((c.modified_value - c.predicted).abs() < 1e-12);
    }
}

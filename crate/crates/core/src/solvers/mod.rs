//! Pricing and hedging solvers over a model class.

mod chain;
mod dpp;
mod dual;
mod primal;
mod static_info;
mod system;

pub use chain::{
    inequality_chain, joint_model, lift_seeds, lifted_american_value, status_label, ChainInstance, LiftedValue,
    ValueReport, CHAIN_TOL,
};
pub use dpp::{robust_dpp, DppResult};
pub use dual::{
    dual_superhedge_american, dual_superhedge_european, BandSide, HedgeOptions, HedgePlan, HedgeResult,
    MultiplierEntry, StrategyEntry,
};
pub use primal::{chargeable_paths, primal_enlarged, primal_paths, PrimalOptions, PrimalResult};
pub use static_info::{alternating_ascent, snell_rule, static_info_value, AscentResult, StaticResult};
pub use system::{build_system, RowRole, System, SystemRow};

//! Scenario and decomposition input files (JSON, schema-versioned) and the
//! tabular rows emitted for hedge plans and Azéma dumps.
//!
//! Units: band intervals bound the one-step conditional variance of the
//! price increment, i.e. price squared per step (not annualized).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::joint::YSpec;
use crate::lattice::{build_lattice, lattice_from_tree, Lattice, LatticeSpec, StopStatus, TimeGrid, Tree, TreeNode};
use crate::measures::{
    BandConditioning, BandInterval, EnlargedMeasure, ModelClass, Payoff, StaticOption, StaticOptionSet, VolatilityBand,
};
use crate::payoff::{AmericanPayoff, PayoffSpec};
use crate::solvers::{status_label, BandSide, HedgePlan, CHAIN_TOL};
use crate::stopping::{
    extract_pair, multiplicative_decompose, reconstruction_sides_unchecked, survival, verify_martingale_preservation,
    verify_reconstruction, AzemaData, PreservationReport, DEFAULT_RULE_CAP,
};

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BandSpec {
    #[default]
    Unconstrained,
    Uniform { lo: f64, hi: f64 },
    /// One interval per step `t -> t + 1`.
    PerDate { lo: Vec<f64>, hi: Vec<f64> },
    /// One entry per vertex id; `null` leaves the step unconstrained.
    PerVertex { intervals: Vec<Option<BandInterval>> },
}

impl BandSpec {
    pub fn build(&self, tree: &Tree) -> Result<VolatilityBand> {
        match self {
            BandSpec::Unconstrained => Ok(VolatilityBand::unconstrained(tree)),
            BandSpec::Uniform { lo, hi } => VolatilityBand::uniform(tree, *lo, *hi),
            BandSpec::PerDate { lo, hi } => VolatilityBand::per_date(tree, lo, hi),
            BandSpec::PerVertex { intervals } => {
                if intervals.len() != tree.vertices.len() {
                    return Err(Error::Config(format!(
                        "per-vertex band has {} entries, lattice has {} vertices",
                        intervals.len(),
                        tree.vertices.len()
                    )));
                }
                VolatilityBand::from_fn(tree, |v| intervals[v].clone())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub tol: f64,
    pub rule_cap: u128,
    /// Floor for epsilon-modification of extracted optimizers.
    pub eps_floor: Option<f64>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: CHAIN_TOL,
            rule_cap: DEFAULT_RULE_CAP,
            eps_floor: None,
        }
    }
}

/// A lattice given either as a recipe or as an explicit nested tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatticeSource {
    Spec(LatticeSpec),
    Explicit { grid: TimeGrid, root: TreeNode },
}

impl LatticeSource {
    pub fn build(&self) -> Result<Lattice> {
        match self {
            LatticeSource::Spec(spec) => build_lattice(spec),
            LatticeSource::Explicit { grid, root } => lattice_from_tree(grid.clone(), root),
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        match self {
            LatticeSource::Spec(spec) => &spec.grid,
            LatticeSource::Explicit { grid, .. } => grid,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub lattice: LatticeSource,
    #[serde(default)]
    pub band: BandSpec,
    pub payoff: PayoffSpec,
    #[serde(default)]
    pub options: StaticOptionSet,
    #[serde(default)]
    pub y_spec: YSpec,
    /// Admissible exercise dates; all dates when absent.
    #[serde(default)]
    pub theta_dates: Option<Vec<usize>>,
    #[serde(default)]
    pub conditioning: BandConditioning,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub seed: u64,
}

pub struct Scenario {
    pub lattice: Lattice,
    pub model: ModelClass,
    pub z: AmericanPayoff,
    pub y_spec: YSpec,
    /// Start of the pre-trading step of the lift: the grid's `pre_date`,
    /// else one first-step length before the first date.
    pub pre_date: f64,
    pub solver: SolverSettings,
}

fn check_version(found: u32, what: &str) -> Result<()> {
    if found == SCENARIO_SCHEMA_VERSION {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "unsupported {what} schema version {found} (expected {SCENARIO_SCHEMA_VERSION})"
        )))
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        check_version(cfg.schema_version, "scenario")?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Explicit, self-contained configuration reproducing a model class and
    /// payoff (tabulated payoff, per-vertex band, tabulated options).
    pub fn from_model(name: &str, model: &ModelClass, z: &AmericanPayoff, seed: u64) -> Self {
        let tree = &model.tree;
        let options = StaticOptionSet::new(
            model
                .options
                .iter()
                .map(|values| StaticOption {
                    payoff: Payoff::Tabulated { values: values.clone() },
                    price: 0.0,
                })
                .collect(),
        );
        Self {
            schema_version: SCENARIO_SCHEMA_VERSION,
            name: name.to_string(),
            lattice: LatticeSource::Explicit {
                grid: TimeGrid {
                    dates: tree.dates.clone(),
                    pre_date: None,
                },
                root: tree.to_nested(tree.root()),
            },
            band: BandSpec::PerVertex {
                intervals: model.band.intervals.clone(),
            },
            payoff: PayoffSpec::Tabulated { values: z.values.clone() },
            options,
            y_spec: YSpec::default(),
            theta_dates: Some(model.theta_dates.clone()),
            conditioning: model.conditioning,
            solver: SolverSettings::default(),
            seed,
        }
    }

    pub fn build(&self) -> Result<Scenario> {
        check_version(self.schema_version, "scenario")?;
        if !(self.solver.tol > 0.0 && self.solver.tol.is_finite()) {
            return Err(Error::Config("solver tolerance must be positive".into()));
        }
        let lattice = self.lattice.build()?;
        let tree = lattice.tree.clone();
        let band = self.band.build(&tree)?;
        let z = self.payoff.build(&tree)?;
        let mut model = ModelClass::new(tree, band)?
            .with_options(&self.options)?
            .with_conditioning(self.conditioning);
        if let Some(dates) = &self.theta_dates {
            model = model.with_theta_dates(dates.clone())?;
        }
        let grid = lattice.grid();
        let pre_date = grid.pre_date.unwrap_or(grid.dates[0] - grid.dt(0));
        Ok(Scenario {
            lattice,
            model,
            z,
            y_spec: self.y_spec.clone(),
            pre_date,
            solver: self.solver.clone(),
        })
    }
}

/// One row of a strategy table: a trading position or a band multiplier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HedgeRow {
    /// `q` (before exercise), `q_tilde` (after exercise), `static` or
    /// `band_upper` / `band_lower`.
    pub kind: String,
    pub date: usize,
    pub vertex: usize,
    pub status: String,
    pub coordinate: usize,
    pub value: f64,
}

fn status_text(s: Option<StopStatus>) -> String {
    s.map(status_label).unwrap_or_else(|| "any".into())
}

/// Flattens a hedge plan into one row per (kind, date, atom, coordinate).
pub fn hedge_rows(plan: &HedgePlan) -> Vec<HedgeRow> {
    let mut rows = Vec::new();
    for (kind, entries) in [("q", &plan.q), ("q_tilde", &plan.q_tilde)] {
        for e in entries {
            for (i, x) in e.position.iter().enumerate() {
                rows.push(HedgeRow {
                    kind: kind.into(),
                    date: e.date,
                    vertex: e.vertex,
                    status: status_text(e.status),
                    coordinate: i,
                    value: *x,
                });
            }
        }
    }
    for (i, h) in plan.h.iter().enumerate() {
        rows.push(HedgeRow {
            kind: "static".into(),
            date: 0,
            vertex: 0,
            status: "any".into(),
            coordinate: i,
            value: *h,
        });
    }
    for m in &plan.multipliers {
        rows.push(HedgeRow {
            kind: match m.side {
                BandSide::Upper => "band_upper".into(),
                BandSide::Lower => "band_lower".into(),
            },
            date: m.date,
            vertex: m.vertex,
            status: status_text(m.status),
            coordinate: m.coordinate,
            value: m.value,
        });
    }
    rows
}

/// Per-vertex Azéma table row (`None` columns are empty in CSV).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AzemaRow {
    pub vertex: usize,
    pub date: usize,
    pub optional_r: Option<f64>,
    pub s: Option<f64>,
    pub m: Option<f64>,
    pub a: f64,
}

pub fn azema_rows(tree: &Tree, az: &AzemaData) -> Vec<AzemaRow> {
    (0..tree.vertices.len())
        .map(|v| AzemaRow {
            vertex: v,
            date: tree.vertices[v].date,
            optional_r: az.optional_r[v],
            s: az.s[v],
            m: az.m[v],
            a: az.a[v],
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExhaustionPolicy {
    /// Without an epsilon floor, a survival process reaching zero before
    /// maturity is an error.
    #[default]
    Fail,
    /// Continue with the kernel of the path marginal after exhaustion
    /// (exact for measures induced by pure or randomized rules).
    Continue,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureInput {
    pub theta_dates: Vec<usize>,
    /// Weights indexed `k * num_paths + path` for the `k`-th stop date.
    pub weights: Vec<f64>,
}

/// A test process given per path and date; it may fail to be adapted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathTest {
    #[serde(default)]
    pub name: String,
    pub values: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecomposeInput {
    pub schema_version: u32,
    pub lattice: LatticeSource,
    pub measure: MeasureInput,
    #[serde(default)]
    pub band: BandSpec,
    #[serde(default)]
    pub options: StaticOptionSet,
    #[serde(default)]
    pub eps_floor: Option<f64>,
    #[serde(default)]
    pub on_exhaustion: ExhaustionPolicy,
    /// Number of random adapted test processes.
    #[serde(default = "default_random_tests")]
    pub random_tests: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub path_tests: Vec<PathTest>,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_random_tests() -> usize {
    100
}

fn default_tol() -> f64 {
    1e-9
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathTestOutcome {
    pub name: String,
    pub adapted: bool,
    /// Expectation under the enlarged measure.
    pub lhs: f64,
    /// `E^P sum_t psi_t dA_t`.
    pub rhs: f64,
    pub error: f64,
    /// The identity only covers adapted processes; a violation on a
    /// non-adapted one is expected.
    pub expected_failure: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecomposeReport {
    pub eps_applied: Option<f64>,
    pub num_paths: usize,
    pub random_tests: usize,
    pub max_reconstruction_error: f64,
    pub preservation: PreservationReport,
    pub path_tests: Vec<PathTestOutcome>,
    pub p: Vec<f64>,
    pub azema: AzemaData,
}

impl DecomposeInput {
    pub fn from_json(text: &str) -> Result<Self> {
        let input: Self = serde_json::from_str(text)?;
        check_version(input.schema_version, "decomposition input")?;
        Ok(input)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `eps_override` takes precedence over the file's floor.
    pub fn run(&self, eps_override: Option<f64>) -> Result<(DecomposeReport, Tree)> {
        check_version(self.schema_version, "decomposition input")?;
        let lattice = self.lattice.build()?;
        let tree = lattice.tree;
        let n = tree.num_paths();
        let mu = EnlargedMeasure::new(self.measure.theta_dates.clone(), n, self.measure.weights.clone())?;
        mu.check_tree(&tree)?;
        let eps = eps_override.or(self.eps_floor);
        if eps.is_none() && self.on_exhaustion == ExhaustionPolicy::Fail {
            let s = survival(&tree, &mu)?;
            multiplicative_decompose(&tree, &mu.omega_marginal(), &s)?;
        }
        let ex = extract_pair(&tree, &mu, eps)?;
        let band = self.band.build(&tree)?;
        let model = ModelClass::new(tree.clone(), band)?.with_options(&self.options)?;

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let psis: Vec<Vec<f64>> = (0..self.random_tests)
            .map(|_| (0..tree.vertices.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let max_err = verify_reconstruction(&tree, &ex.mu_used, &ex.p, &ex.a, &psis)?;
        let preservation = verify_martingale_preservation(&model, &ex.mu_used, &ex, self.tol)?;

        let mut outcomes = Vec::new();
        for t in &self.path_tests {
            if t.values.len() != n || t.values.iter().any(|row| row.len() != tree.dates.len()) {
                return Err(Error::IndexMismatch(format!(
                    "test '{}' needs {n} rows of {} values",
                    t.name,
                    tree.dates.len()
                )));
            }
            let adapted = crate::stopping::adapted_process(&tree, &t.values).is_ok();
            let (lhs, rhs) = reconstruction_sides_unchecked(&tree, &ex.mu_used, &ex.p, &ex.a, &t.values);
            let error = (lhs - rhs).abs();
            outcomes.push(PathTestOutcome {
                name: t.name.clone(),
                adapted,
                lhs,
                rhs,
                error,
                expected_failure: !adapted && error > 1e-10,
            });
        }
        Ok((
            DecomposeReport {
                eps_applied: ex.eps_applied,
                num_paths: n,
                random_tests: self.random_tests,
                max_reconstruction_error: max_err,
                preservation,
                path_tests: outcomes,
                p: ex.p.weights.clone(),
                azema: ex.azema,
            },
            tree,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Branch;

    fn call_scenario() -> ScenarioConfig {
        ScenarioConfig {
            schema_version: 1,
            name: "one-step call".into(),
            lattice: LatticeSource::Spec(LatticeSpec::uniform(vec![0.0, 1.0], 1.0, vec![vec![0.2, -0.2]])),
            band: BandSpec::Uniform { lo: 0.04, hi: 0.04 },
            payoff: PayoffSpec::EuropeanCall { strike: 1.0 },
            options: Default::default(),
            y_spec: Default::default(),
            theta_dates: None,
            conditioning: Default::default(),
            solver: Default::default(),
            seed: 0,
        }
    }

    #[test]
    fn scenario_round_trips_through_json() {
        let cfg = call_scenario();
        let back = ScenarioConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(cfg, back);
        let sc = back.build().unwrap();
        assert_eq!(sc.model.tree.num_paths(), 2);
        assert_eq!(sc.pre_date, -1.0);
    }

    #[test]
    fn explicit_config_rebuilds_the_same_model() {
        use crate::instances::{random_instance, InstanceConfig};
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let inst = random_instance(
            &mut rng,
            &InstanceConfig {
                num_options: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let cfg = ScenarioConfig::from_model("random", &inst.model, &inst.z, 4);
        let sc = ScenarioConfig::from_json(&cfg.to_json().unwrap()).unwrap().build().unwrap();
        assert_eq!(sc.model, inst.model);
        assert_eq!(sc.z, inst.z);
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let mut cfg = call_scenario();
        cfg.schema_version = 7;
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(matches!(ScenarioConfig::from_json(&text), Err(Error::Config(_))));
    }

    #[test]
    fn per_vertex_band_must_cover_the_tree() {
        let mut cfg = call_scenario();
        cfg.band = BandSpec::PerVertex { intervals: vec![None] };
        assert!(cfg.build().is_err());
    }

    fn rule_input(stop_at_zero: bool, policy: ExhaustionPolicy) -> DecomposeInput {
        let spec = LatticeSpec {
            grid: TimeGrid::new(vec![0.0, 1.0, 2.0], None).unwrap(),
            x0: vec![1.0],
            steps: vec![vec![Branch::new(vec![0.1]), Branch::new(vec![-0.1])]; 2],
            regimes: Default::default(),
            absorb_above: None,
            absorb_below: None,
            max_paths: 100,
        };
        let mut w = vec![0.0; 12];
        if stop_at_zero {
            w[..4].copy_from_slice(&[0.25; 4]);
        } else {
            w[8..].copy_from_slice(&[0.25; 4]);
        }
        DecomposeInput {
            schema_version: 1,
            lattice: LatticeSource::Spec(spec),
            measure: MeasureInput {
                theta_dates: vec![0, 1, 2],
                weights: w,
            },
            band: Default::default(),
            options: Default::default(),
            eps_floor: None,
            on_exhaustion: policy,
            random_tests: 20,
            seed: 1,
            path_tests: vec![],
            tol: 1e-9,
        }
    }

    #[test]
    fn exhausted_survival_fails_without_a_floor() {
        let input = rule_input(true, ExhaustionPolicy::Fail);
        assert!(matches!(input.run(None), Err(Error::SurvivalExhausted { .. })));
        let (rep, _) = input.run(Some(0.01)).unwrap();
        assert!(rep.max_reconstruction_error < 1e-12);
        let (rep, _) = rule_input(true, ExhaustionPolicy::Continue).run(None).unwrap();
        assert!(rep.max_reconstruction_error < 1e-12);
    }

    #[test]
    fn terminal_stopping_needs_no_floor() {
        let (rep, _) = rule_input(false, ExhaustionPolicy::Fail).run(None).unwrap();
        assert!(rep.max_reconstruction_error < 1e-12);
        assert_eq!(rep.preservation.martingale_violations, 0);
    }
}

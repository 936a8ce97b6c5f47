use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use robust_american::gap_demo::{run_gap_demo, GapDemoConfig};
use robust_american::instances::{random_enlarged_measure, random_instance, random_tree, InstanceConfig};
use robust_american::lattice::{all_dates, TimeGrid};
use robust_american::measures::check_constraints;
use robust_american::pathwise::{run_integration_suite, IntegrationConfig};
use robust_american::scenario::{
    azema_rows, hedge_rows, DecomposeInput, ExhaustionPolicy, LatticeSource, MeasureInput, ScenarioConfig,
    SCENARIO_SCHEMA_VERSION,
};
use robust_american::solvers::{
    dual_superhedge_american, inequality_chain, primal_enlarged, robust_dpp, ChainInstance, HedgeOptions, PrimalOptions,
};

use crate::output::{to_csv, Outcome, Table};
use crate::{Command, Flags, InputError};

fn read_input(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| InputError(format!("cannot read {}: {e}", path.display())).into())
}

fn outcome(started: Instant, config: impl Serialize, seed: Option<u64>) -> Result<Outcome> {
    Ok(Outcome {
        config: serde_json::to_value(config)?,
        seed,
        result: Value::Null,
        tables: Vec::new(),
        summary: String::new(),
        breaches: Vec::new(),
        started,
    })
}

pub fn dispatch(command: Command, flags: &Flags) -> Result<Outcome> {
    if let Some(tol) = flags.tol {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(InputError(format!("--tol must be positive, got {tol}")).into());
        }
    }
    let started = Instant::now();
    match command {
        Command::Price => price(flags, started),
        Command::Hedge => hedge(flags, started),
        Command::GapDemo => gap_demo(flags, started),
        Command::Decompose => decompose(flags, started),
        Command::Integrate => integrate(flags, started),
        Command::Chain => chain(flags, started),
    }
}

/// The scenario from `--config`, or a generated one from `--seed` (default
/// 0), with command-line overrides applied.
fn scenario_config(flags: &Flags, num_options: usize) -> Result<ScenarioConfig> {
    let mut cfg = match &flags.config {
        Some(path) => ScenarioConfig::from_json(&read_input(path)?).with_context(|| format!("parsing {}", path.display()))?,
        None => {
            let seed = flags.seed.unwrap_or(0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inst = random_instance(
                &mut rng,
                &InstanceConfig {
                    num_options,
                    ..Default::default()
                },
            )?;
            ScenarioConfig::from_model(&format!("random instance (seed {seed})"), &inst.model, &inst.z, seed)
        }
    };
    if let Some(seed) = flags.seed {
        cfg.seed = seed;
    }
    if let Some(tol) = flags.tol {
        cfg.solver.tol = tol;
    }
    if let Some(cap) = flags.rule_cap {
        cfg.solver.rule_cap = cap;
    }
    if flags.eps.is_some() {
        cfg.solver.eps_floor = flags.eps;
    }
    Ok(cfg)
}

fn measure_table(theta_dates: &[usize], num_paths: usize, weights: &[f64]) -> Result<Table> {
    #[derive(Serialize)]
    struct Row {
        theta: usize,
        path: usize,
        weight: f64,
    }
    let rows: Vec<Row> = theta_dates
        .iter()
        .enumerate()
        .flat_map(|(k, &u)| {
            (0..num_paths).map(move |p| Row {
                theta: u,
                path: p,
                weight: weights[k * num_paths + p],
            })
        })
        .collect();
    Ok(Table {
        file: "measure.csv",
        csv: to_csv(&rows)?,
    })
}

fn price(flags: &Flags, started: Instant) -> Result<Outcome> {
    let cfg = scenario_config(flags, 0)?;
    let sc = cfg.build()?;
    let tol = sc.solver.tol;
    let mut out = outcome(started, &cfg, Some(cfg.seed))?;
    let primal = primal_enlarged(
        &sc.model,
        &sc.z,
        PrimalOptions {
            eps_floor: sc.solver.eps_floor,
        },
    )?;
    let dpp = if sc.model.has_options() || sc.solver.eps_floor.is_some() {
        None
    } else {
        Some(robust_dpp(&sc.model, &sc.z)?.value)
    };
    let check = check_constraints(&primal.measure, &sc.model, tol)?;
    if !check.all_ok() {
        out.breaches.push(format!("optimal measure violates {} constraints", check.violations.len()));
    }
    if let Some(d) = dpp {
        if (d - primal.value).abs() > tol {
            out.breaches.push(format!("primal {} and dynamic programming {} differ", primal.value, d));
        }
    }
    out.summary = format!(
        "{}\n  value                {:.10}\n{}  paths                {}\n",
        cfg.name,
        primal.value,
        dpp.map(|d| format!("  dpp_value            {d:.10}\n")).unwrap_or_default(),
        sc.model.tree.num_paths()
    );
    out.result = json!({
        "value": primal.value,
        "dpp_value": dpp,
        "eps_floor": sc.solver.eps_floor,
        "num_paths": sc.model.tree.num_paths(),
        "theta_dates": primal.measure.theta_dates,
        "lp_iterations": primal.iterations,
        "constraints_ok": check.all_ok(),
        "measure": primal.measure.weights,
    });
    out.tables.push(measure_table(
        &primal.measure.theta_dates,
        primal.measure.num_paths,
        &primal.measure.weights,
    )?);
    Ok(out)
}

fn hedge(flags: &Flags, started: Instant) -> Result<Outcome> {
    let cfg = scenario_config(flags, 0)?;
    let sc = cfg.build()?;
    let tol = sc.solver.tol;
    let mut out = outcome(started, &cfg, Some(cfg.seed))?;
    let h = dual_superhedge_american(&sc.model, &sc.z, HedgeOptions::default())?;
    let primal = primal_enlarged(&sc.model, &sc.z, PrimalOptions::default())?;
    let support: Vec<usize> = (0..sc.model.tree.num_paths()).filter(|&p| h.support[p]).collect();
    let slack = h.plan.slack(&sc.model, &sc.z, &sc.model.theta_dates, &support);
    if slack < -tol {
        out.breaches.push(format!("hedge falls short of the payoff by {:e}", -slack));
    }
    let gap = h.value - primal.value;
    if gap.abs() > tol * h.value.abs().max(1.0) {
        out.breaches.push(format!("hedge value {} and primal value {} differ", h.value, primal.value));
    }
    let rows = hedge_rows(&h.plan);
    out.summary = format!(
        "{}\n  hedge_value          {:.10}\n  primal_value         {:.10}\n  min_slack            {:.3e}\n  plan_rows            {}\n",
        cfg.name,
        h.value,
        primal.value,
        slack,
        rows.len()
    );
    out.result = json!({
        "value": h.value,
        "primal_value": primal.value,
        "duality_gap": gap,
        "min_slack": slack,
        "support": support,
        "plan": h.plan,
    });
    out.tables.push(Table {
        file: "hedge_plan.csv",
        csv: to_csv(&rows)?,
    });
    Ok(out)
}

fn chain_table(entries: &[(&str, f64)]) -> Result<Table> {
    #[derive(Serialize)]
    struct Row<'a> {
        quantity: &'a str,
        value: f64,
    }
    let rows: Vec<Row> = entries.iter().map(|(q, v)| Row { quantity: q, value: *v }).collect();
    Ok(Table {
        file: "chain.csv",
        csv: to_csv(&rows)?,
    })
}

fn gap_demo(flags: &Flags, started: Instant) -> Result<Outcome> {
    let mut cfg = match &flags.config {
        Some(path) => serde_json::from_str::<GapDemoConfig>(&read_input(path)?)
            .with_context(|| format!("parsing {}", path.display()))?,
        None => GapDemoConfig::default(),
    };
    if flags.eps.is_some() {
        cfg.eps = flags.eps;
    }
    if let Some(cap) = flags.rule_cap {
        cfg.rule_cap = cap;
    }
    if let Some(tol) = flags.tol {
        cfg.tol = tol;
    }
    let mut out = outcome(started, &cfg, None)?;
    let r = run_gap_demo(&cfg)?;
    if !r.chain.ordering_ok {
        out.breaches.push("value chain ordering violated".into());
    }
    let mut entries: Vec<(&str, f64)> = r.chain.entries().to_vec();
    entries.push(("gap", r.gap));
    entries.push(("residual", r.chain.residual));
    let mut summary = r.chain.summary();
    if let Some(c) = &r.eps_correction {
        summary.push_str(&format!(
            "  eps {:.4}: modified value {:.12}, predicted {:.12}\n",
            c.eps, c.modified_value, c.predicted
        ));
        entries.push(("eps_modified_value", c.modified_value));
        entries.push(("eps_predicted", c.predicted));
    }
    out.summary = summary;
    out.tables.push(chain_table(&entries)?);
    out.result = serde_json::to_value(&r)?;
    Ok(out)
}

fn chain(flags: &Flags, started: Instant) -> Result<Outcome> {
    let cfg = scenario_config(flags, 1)?;
    let sc = cfg.build()?;
    let mut out = outcome(started, &cfg, Some(cfg.seed))?;
    let r = inequality_chain(&ChainInstance {
        model: sc.model,
        z: sc.z,
        y_spec: sc.y_spec,
        pre_date: sc.pre_date,
        rule_cap: sc.solver.rule_cap,
        tol: sc.solver.tol,
        description: cfg.name.clone(),
    })?;
    if !r.ordering_ok {
        out.breaches.push("value chain ordering violated".into());
    }
    let mut entries: Vec<(&str, f64)> = r.entries().to_vec();
    entries.push(("gap", r.gap));
    entries.push(("residual", r.residual));
    out.tables.push(chain_table(&entries)?);
    out.summary = r.summary();
    out.result = serde_json::to_value(&r)?;
    Ok(out)
}

/// A generated decomposition input: random tree and a mixture of two
/// (martingale measure, randomized stopping time) products.
fn random_decompose_input(seed: u64) -> Result<DecomposeInput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tree = random_tree(&mut rng, 4, 3, 600)?;
    let dates = all_dates(&tree);
    let mu = random_enlarged_measure(&mut rng, &tree, &dates)?;
    Ok(DecomposeInput {
        schema_version: SCENARIO_SCHEMA_VERSION,
        lattice: LatticeSource::Explicit {
            grid: TimeGrid::new(tree.dates.clone(), None)?,
            root: tree.to_nested(tree.root()),
        },
        measure: MeasureInput {
            theta_dates: mu.theta_dates,
            weights: mu.weights,
        },
        band: Default::default(),
        options: Default::default(),
        eps_floor: None,
        on_exhaustion: ExhaustionPolicy::Fail,
        random_tests: 100,
        seed,
        path_tests: Vec::new(),
        tol: 1e-9,
    })
}

fn decompose(flags: &Flags, started: Instant) -> Result<Outcome> {
    let mut input = match &flags.config {
        Some(path) => DecomposeInput::from_json(&read_input(path)?).with_context(|| format!("parsing {}", path.display()))?,
        None => random_decompose_input(flags.seed.unwrap_or(0))?,
    };
    if let Some(seed) = flags.seed {
        input.seed = seed;
    }
    if flags.eps.is_some() {
        input.eps_floor = flags.eps;
    }
    let tol = flags.tol.unwrap_or(1e-10);
    let mut out = outcome(started, &input, Some(input.seed))?;
    let (rep, tree) = input.run(None)?;
    if rep.max_reconstruction_error > tol {
        out.breaches.push(format!("reconstruction error {:e} exceeds {tol:e}", rep.max_reconstruction_error));
    }
    if rep.preservation.martingale_violations > 0 {
        out.breaches.push("extracted measure is not a martingale".into());
    }
    if let Some(t) = rep.path_tests.iter().find(|t| t.adapted && t.error > tol) {
        out.breaches.push(format!("adapted test '{}' breaks the identity by {:e}", t.name, t.error));
    }
    let mut summary = format!(
        "decomposition of an enlarged measure on {} paths\n  eps_applied          {}\n  max_reconstruction   {:.3e}\n  max_drift            {:.3e}\n  equivalent           {}\n",
        rep.num_paths,
        rep.eps_applied.map(|e| e.to_string()).unwrap_or_else(|| "none".into()),
        rep.max_reconstruction_error,
        rep.preservation.max_drift,
        rep.preservation.equivalent,
    );
    for t in &rep.path_tests {
        let verdict = match (t.adapted, t.expected_failure) {
            (true, _) if t.error <= tol => "holds",
            (true, _) => "VIOLATED",
            (false, true) => "violated (expected: not adapted)",
            (false, false) => "holds (not adapted)",
        };
        summary.push_str(&format!("  test {:<16} error {:.3e}  {verdict}\n", t.name, t.error));
    }
    out.summary = summary;
    out.tables.push(Table {
        file: "azema.csv",
        csv: to_csv(&azema_rows(&tree, &rep.azema))?,
    });
    out.result = serde_json::to_value(&rep)?;
    Ok(out)
}

fn integrate(flags: &Flags, started: Instant) -> Result<Outcome> {
    let mut cfg = match &flags.config {
        Some(path) => serde_json::from_str::<IntegrationConfig>(&read_input(path)?)
            .with_context(|| format!("parsing {}", path.display()))?,
        None => IntegrationConfig::default(),
    };
    if let Some(seed) = flags.seed {
        cfg.seed = seed;
    }
    if flags.strict_integration {
        cfg.strict = true;
    }
    let mut out = outcome(started, &cfg, Some(cfg.seed))?;
    let r = run_integration_suite(&cfg)?;
    let exact = flags.tol.unwrap_or(1e-10);
    if r.max_ito_residual > exact {
        out.breaches.push(format!("discrete Ito identity residual {:e}", r.max_ito_residual));
    }
    if r.max_telescoping_residual > exact {
        out.breaches.push(format!("telescoping residual {:e}", r.max_telescoping_residual));
    }
    out.summary = format!(
        "pathwise suite at level {} over {} seeds\n  max_ito_residual     {:.3e}\n  max_telescoping      {:.3e}\n  qv_mean              {:.6} (sigma^2 = {:.6}, rel. error {:.3})\n  converged            {}\n  zeroed               {}\n  smooth_qv_max        {:.3e}\n  smooth_beta          {:.3e}\n",
        cfg.level,
        cfg.num_seeds,
        r.max_ito_residual,
        r.max_telescoping_residual,
        r.qv_mean,
        cfg.sigma * cfg.sigma,
        r.qv_relative_error,
        r.converged,
        r.zeroed,
        r.smooth_qv_max,
        r.smooth_beta,
    );
    out.tables.push(Table {
        file: "convergence.csv",
        csv: to_csv(&r.convergence)?,
    });
    out.tables.push(Table {
        file: "beta_trace.csv",
        csv: to_csv(&r.beta_trace)?,
    });
    out.tables.push(Table {
        file: "residuals.csv",
        csv: to_csv(&r.residuals)?,
    });
    out.result = serde_json::to_value(&r)?;
    Ok(out)
}

//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit status
//! if any criterion fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robust_american::gap_demo::{run_gap_demo, GapDemoConfig};
use robust_american::instances::{
    random_enlarged_measure, random_instance, random_martingale_measure, random_payoff, random_tree, InstanceConfig,
    RandomInstance,
};
use robust_american::lattice::all_dates;
use robust_american::measures::{epsilon_modify, validate_martingale, Filtration};
use robust_american::pathwise::{run_integration_suite, Increments, IntegrationConfig};
use robust_american::payoff::AmericanPayoff;
use robust_american::solvers::{
    dual_superhedge_american, dual_superhedge_european, inequality_chain, primal_enlarged, robust_dpp, static_info_value,
    ChainInstance, HedgeOptions, PrimalOptions, CHAIN_TOL,
};
use robust_american::stopping::{enumerate_rules, extract_pair, rule_to_enlarged, verify_reconstruction, RandomizedStoppingTime};

const RULE_CAP: u128 = 600;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn failed(e: impl std::error::Error) -> Outcome {
    let mut msg = e.to_string();
    let mut cause = e.source();
    while let Some(c) = cause {
        msg.push_str(&format!(": {c}"));
        cause = c.source();
    }
    outcome(false, format!("error: {msg}"))
}

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn instances(seed: u64, count: usize, num_options: usize) -> Vec<RandomInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = InstanceConfig {
        num_options,
        max_rules: RULE_CAP,
        ..Default::default()
    };
    (0..count).map(|_| random_instance(&mut rng, &cfg).expect("instance")).collect()
}

fn gap_reproduction() -> Outcome {
    let t0 = Instant::now();
    let r = match run_gap_demo(&GapDemoConfig::default()) {
        Ok(r) => r,
        Err(e) => return failed(e),
    };
    let elapsed = t0.elapsed();
    let p = 0.05;
    let ds = (r.static_value - 1.5 * p).abs();
    let dl = (r.lifted_value - 1.75 * p).abs();
    outcome(
        ds <= 1e-7 && dl <= 1e-7 && elapsed < Duration::from_secs(10),
        format!(
            "static {:.10} (err {ds:.1e}), lifted {:.10} (err {dl:.1e}), {:.2} s",
            r.static_value,
            r.lifted_value,
            elapsed.as_secs_f64()
        ),
    )
}

fn discrete_american_duality(pool: &[RandomInstance]) -> Outcome {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for inst in pool {
        let (m, z) = (&inst.model, &inst.z);
        let run = || -> robust_american::Result<(f64, f64, f64)> {
            Ok((
                primal_enlarged(m, z, PrimalOptions::default())?.value,
                robust_dpp(m, z)?.value,
                static_info_value(m, z, RULE_CAP)?.value,
            ))
        };
        match run() {
            Ok((p, d, s)) => worst = worst.max((p - d).abs()).max((p - s).abs()),
            Err(e) => return failed(e),
        }
    }
    let elapsed = t0.elapsed();
    outcome(
        worst <= 1e-7 && elapsed < Duration::from_secs(300),
        format!("{} instances, max spread {worst:.2e}, {:.1} s", pool.len(), elapsed.as_secs_f64()),
    )
}

fn lp_strong_duality(pool: &[RandomInstance]) -> Outcome {
    let mut worst_eu: f64 = 0.0;
    let mut worst_am: f64 = 0.0;
    for inst in pool {
        let (m, z) = (&inst.model, &inst.z);
        let run = || -> robust_american::Result<(f64, f64)> {
            let f = z.terminal_values(&m.tree);
            let eu = AmericanPayoff::european(&m.tree, &f)?;
            let pe = primal_enlarged(m, &eu, PrimalOptions::default())?.value;
            let de = dual_superhedge_european(m, &f)?.value;
            let pa = primal_enlarged(m, z, PrimalOptions::default())?.value;
            let da = dual_superhedge_american(m, z, HedgeOptions::default())?.value;
            Ok((rel_diff(pe, de), rel_diff(pa, da)))
        };
        match run() {
            Ok((e, a)) => {
                worst_eu = worst_eu.max(e);
                worst_am = worst_am.max(a);
            }
            Err(e) => return failed(e),
        }
    }
    outcome(
        worst_eu <= 1e-8 && worst_am <= 1e-8,
        format!(
            "{} instances, max relative gap European {worst_eu:.2e}, American {worst_am:.2e}",
            pool.len()
        ),
    )
}

fn extraction_pipeline() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst_rec: f64 = 0.0;
    let mut drift_violations = 0usize;
    for _ in 0..200 {
        let run = |rng: &mut ChaCha8Rng| -> robust_american::Result<(f64, usize)> {
            let tree = random_tree(rng, 4, 3, RULE_CAP)?;
            let mu = random_enlarged_measure(rng, &tree, &all_dates(&tree))?;
            let eps = rng.gen_range(0.01..0.5);
            let mu = epsilon_modify(&mu, eps)?;
            let ex = extract_pair(&tree, &mu, Some(eps))?;
            let psis: Vec<Vec<f64>> = (0..100)
                .map(|_| (0..tree.vertices.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let err = verify_reconstruction(&tree, &mu, &ex.p, &ex.a, &psis)?;
            let viol = validate_martingale(&ex.p, &tree, Filtration::Base, 1e-9)?.len();
            Ok((err, viol))
        };
        match run(&mut rng) {
            Ok((e, v)) => {
                worst_rec = worst_rec.max(e);
                drift_violations += v;
            }
            Err(e) => return failed(e),
        }
    }
    let mut worst_round: f64 = 0.0;
    for _ in 0..200 {
        let run = |rng: &mut ChaCha8Rng| -> robust_american::Result<f64> {
            let tree = random_tree(rng, 4, 3, RULE_CAP)?;
            let rules = enumerate_rules(&tree, RULE_CAP)?;
            let rule = &rules[rng.gen_range(0..rules.len())];
            let p = random_martingale_measure(rng, &tree);
            let mu = rule_to_enlarged(&tree, &p, rule, &all_dates(&tree))?;
            let ex = extract_pair(&tree, &mu, None)?;
            let a = RandomizedStoppingTime::from_rule(&tree, rule);
            let mass = p.vertex_masses(&tree);
            let mut err: f64 = 0.0;
            for (x, y) in ex.p.weights.iter().zip(&p.weights) {
                err = err.max((x - y).abs());
            }
            for v in 0..tree.vertices.len() {
                if mass[v] > 0.0 {
                    err = err.max((ex.a.a[v] - a.a[v]).abs());
                }
            }
            Ok(err)
        };
        match run(&mut rng) {
            Ok(e) => worst_round = worst_round.max(e),
            Err(e) => return failed(e),
        }
    }
    outcome(
        worst_rec <= 1e-10 && drift_violations == 0 && worst_round <= 1e-12,
        format!(
            "200 measures x 100 tests: max reconstruction {worst_rec:.2e}, drift violations {drift_violations}; 200 rules: round-trip {worst_round:.2e}"
        ),
    )
}

fn chain_ordering() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut breaches = 0usize;
    let mut best_gap: f64 = 0.0;
    let mut worst_slack: f64 = 0.0;
    for i in 0..50 {
        let cfg = InstanceConfig {
            num_options: 1 + i % 2,
            max_depth: 3,
            max_rules: RULE_CAP,
            ..Default::default()
        };
        let inst = match random_instance(&mut rng, &cfg) {
            Ok(x) => x,
            Err(e) => return failed(e),
        };
        let r = match inequality_chain(&ChainInstance {
            model: inst.model,
            z: inst.z,
            y_spec: Default::default(),
            pre_date: -1.0,
            rule_cap: RULE_CAP,
            tol: CHAIN_TOL,
            description: format!("random chain {i}"),
        }) {
            Ok(r) => r,
            Err(e) => return failed(e),
        };
        if !r.ordering_ok {
            breaches += 1;
        }
        let slack = (r.pi_hat - r.pi_a)
            .max(r.lifted_primal - r.pi_hat)
            .max((r.lifted_primal - r.enlarged_primal).abs())
            .max(r.static_primal - r.lifted_primal);
        worst_slack = worst_slack.max(slack);
        best_gap = best_gap.max(r.gap);
    }
    let demo_gap = match run_gap_demo(&GapDemoConfig::default()) {
        Ok(r) => {
            if !r.chain.ordering_ok {
                breaches += 1;
            }
            r.gap
        }
        Err(e) => return failed(e),
    };
    outcome(
        breaches == 0 && best_gap.max(demo_gap) > 1e-3,
        format!(
            "50 instances, ordering breaches {breaches}, worst violation {worst_slack:.2e}, largest random gap {best_gap:.4}, demo gap {demo_gap:.4}, {:.1} s",
            t0.elapsed().as_secs_f64()
        ),
    )
}

fn no_continuation(pool: &[RandomInstance]) -> Outcome {
    let mut worst: f64 = 0.0;
    for inst in pool {
        let (m, z) = (&inst.model, &inst.z);
        let run = || -> robust_american::Result<f64> {
            let full = dual_superhedge_american(m, z, HedgeOptions::default())?.value;
            let frozen = dual_superhedge_american(
                m,
                z,
                HedgeOptions {
                    forbid_continuation: true,
                    ..Default::default()
                },
            )?
            .value;
            Ok((full - frozen).abs())
        };
        match run() {
            Ok(d) => worst = worst.max(d),
            Err(e) => return failed(e),
        }
    }
    outcome(
        worst <= 1e-7,
        format!("{} instances, max value change with continuation strategies removed {worst:.2e}", pool.len()),
    )
}

fn pathwise_suite() -> Outcome {
    let t0 = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for inc in [Increments::Rademacher, Increments::Gaussian] {
        let cfg = IntegrationConfig {
            level: 16,
            num_seeds: 100,
            increments: inc,
            ..Default::default()
        };
        let r = match run_integration_suite(&cfg) {
            Ok(r) => r,
            Err(e) => return failed(e),
        };
        pass &= r.max_ito_residual <= 1e-12
            && r.max_telescoping_residual <= 1e-14
            && r.qv_relative_error <= 0.05
            && r.smooth_beta <= 1e-3;
        parts.push(format!(
            "{inc:?}: ito {:.1e}, telescoping {:.1e}, <X>_1 {:.5} vs {:.5} ({:.2}%), smooth beta {:.1e}",
            r.max_ito_residual,
            r.max_telescoping_residual,
            r.qv_mean,
            cfg.sigma * cfg.sigma,
            100.0 * r.qv_relative_error,
            r.smooth_beta
        ));
    }
    parts.push(format!("{:.1} s", t0.elapsed().as_secs_f64()));
    outcome(pass, parts.join("; "))
}

fn epsilon_linearity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let run = |rng: &mut ChaCha8Rng| -> robust_american::Result<f64> {
            let tree = random_tree(rng, 4, 3, RULE_CAP)?;
            let dates = all_dates(&tree);
            let mu = random_enlarged_measure(rng, &tree, &dates)?;
            let z = random_payoff(rng, &tree)?;
            let eps = rng.gen_range(0.001..0.999);
            let zbar = z.enlarged_values(&tree, &dates);
            let terminal = z.terminal_values(&tree);
            let lhs = epsilon_modify(&mu, eps)?.expectation(&zbar);
            let rhs = (1.0 - eps) * mu.expectation(&zbar) + eps * mu.omega_marginal().expectation(&terminal);
            Ok((lhs - rhs).abs())
        };
        match run(&mut rng) {
            Ok(d) => worst = worst.max(d),
            Err(e) => return failed(e),
        }
    }
    outcome(worst <= 1e-12, format!("50 pairs, max deviation {worst:.2e}"))
}

fn monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let tol = 1e-9;
    let value = |m: &robust_american::measures::ModelClass, z: &AmericanPayoff| {
        primal_enlarged(m, z, PrimalOptions::default()).map(|r| r.value)
    };
    let (mut band_fail, mut z_fail, mut g_fail) = (0usize, 0usize, 0usize);
    let cfg = InstanceConfig {
        num_options: 2,
        max_rules: RULE_CAP,
        ..Default::default()
    };
    for _ in 0..50 {
        let run = |rng: &mut ChaCha8Rng| -> robust_american::Result<(bool, bool, bool)> {
            let inst = random_instance(rng, &cfg)?;
            let (m, z) = (&inst.model, &inst.z);
            let base = value(m, z)?;

            let wider = m.clone().with_band(m.band.widened(rng.gen_range(0.0..0.01), rng.gen_range(0.0..0.01)));
            let band_ok = value(&wider, z)? >= base - tol;

            let bumped = AmericanPayoff::new(z.values.iter().map(|v| v + rng.gen_range(0.0..0.05)).collect())?;
            let z_ok = value(m, &bumped)? >= base - tol;

            let one = m.clone().with_option_values(m.options[..1].to_vec())?;
            let none = m.clone().without_options();
            let v1 = value(&one, z)?;
            let v0 = value(&none, z)?;
            let g_ok = base <= v1 + tol && v1 <= v0 + tol;
            Ok((band_ok, z_ok, g_ok))
        };
        match run(&mut rng) {
            Ok((b, z, g)) => {
                band_fail += usize::from(!b);
                z_fail += usize::from(!z);
                g_fail += usize::from(!g);
            }
            Err(e) => return failed(e),
        }
    }
    outcome(
        band_fail + z_fail + g_fail == 0,
        format!("50 pairs each: band-widening failures {band_fail}, Z-increase failures {z_fail}, g-augmentation failures {g_fail}"),
    )
}

fn main() {
    let pool = instances(2024, 200, 0);
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("gap reproduction", Box::new(gap_reproduction)),
        ("primal = dpp = static", Box::new(|| discrete_american_duality(&pool))),
        ("LP strong duality", Box::new(|| lp_strong_duality(&pool))),
        ("extraction pipeline", Box::new(extraction_pipeline)),
        ("value chain ordering", Box::new(chain_ordering)),
        ("continuation strategies", Box::new(|| no_continuation(&pool))),
        ("pathwise suite", Box::new(pathwise_suite)),
        ("epsilon linearity", Box::new(epsilon_linearity)),
        ("monotonicity battery", Box::new(monotonicity)),
    ];
    let mut all = true;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        all &= o.pass;
        println!(
            "criterion {} [{name}]: {} - {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    if !all {
        std::process::exit(1);
    }
}

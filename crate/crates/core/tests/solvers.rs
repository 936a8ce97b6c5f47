use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robust_american::instances::{random_instance, InstanceConfig};
use robust_american::lattice::{build_lattice, LatticeSpec, StopStatus};
use robust_american::measures::{check_constraints, BandInterval, ModelClass, VolatilityBand};
use robust_american::payoff::{AmericanPayoff, PayoffSpec};
use robust_american::solvers::*;
use robust_american::stopping::extract_pair;

fn one_step_call() -> (ModelClass, AmericanPayoff) {
    let lat = build_lattice(&LatticeSpec::uniform(vec![0.0, 1.0], 1.0, vec![vec![0.2, -0.2]])).unwrap();
    let band = VolatilityBand::uniform(&lat.tree, 0.04, 0.04).unwrap();
    let z = PayoffSpec::EuropeanCall { strike: 1.0 }.build(&lat.tree).unwrap();
    (ModelClass::new(lat.tree, band).unwrap(), z)
}

fn trinomial() -> (ModelClass, Vec<f64>) {
    let lat = build_lattice(&LatticeSpec::uniform(vec![0.0, 1.0], 1.0, vec![vec![0.1, 0.0, -0.1]])).unwrap();
    let band = VolatilityBand::uniform(&lat.tree, 0.005, 0.02).unwrap();
    let f: Vec<f64> = lat
        .tree
        .leaves
        .iter()
        .map(|&l| (lat.tree.vertices[l].state[0] - 1.0).abs())
        .collect();
    (ModelClass::new(lat.tree, band).unwrap(), f)
}

#[test]
fn symmetric_one_step_call_is_worth_a_tenth() {
    let (model, z) = one_step_call();
    let r = primal_enlarged(&model, &z, PrimalOptions::default()).unwrap();
    assert!((r.value - 0.1).abs() < 1e-12);
    let f = z.terminal_values(&model.tree);
    let h = dual_superhedge_european(&model, &f).unwrap();
    assert!((h.value - 0.1).abs() < 1e-12);
    assert_eq!(h.plan.q.len(), 1);
    let q = h.plan.q[0].position[0];
    let mult: f64 = h.plan.multipliers.iter().map(|m| m.value).sum();
    // With a singleton band the delta and the variance multiplier are not
    // separately identified; the hedge must still be exact on both paths.
    assert!(h.plan.slack(&model, &z, &[1], &[0, 1]) > -1e-12);
    if mult == 0.0 {
        assert!((q - 0.5).abs() < 1e-12);
    }
}

#[test]
fn trinomial_band_value_with_slack_band() {
    let (model, f) = trinomial();
    let (v, p) = primal_paths(&model, &f).unwrap();
    assert!((v - 0.1).abs() < 1e-12);
    assert!((p.weights[0] - 0.5).abs() < 1e-12 && (p.weights[2] - 0.5).abs() < 1e-12);
    let h = dual_superhedge_european(&model, &f).unwrap();
    assert!((h.value - 0.1).abs() < 1e-12);
    // The optimal kernel has variance 0.01, strictly inside the band.
    assert!(h.plan.multipliers.iter().all(|m| m.value.abs() < 1e-12));
}

#[test]
fn trinomial_with_binding_upper_band() {
    let (model, f) = trinomial();
    let band = VolatilityBand::uniform(&model.tree, 0.005, 0.008).unwrap();
    let model = model.with_band(band);
    let (v, _) = primal_paths(&model, &f).unwrap();
    assert!((v - 0.08).abs() < 1e-12);
    let h = dual_superhedge_european(&model, &f).unwrap();
    assert!((h.value - 0.08).abs() < 1e-12);
    let upper: f64 = h
        .plan
        .multipliers
        .iter()
        .filter(|m| m.side == BandSide::Upper)
        .map(|m| m.value)
        .sum();
    assert!((upper - 10.0).abs() < 1e-9, "{:?}", h.plan.multipliers);
}

#[test]
fn trinomial_brute_force_over_the_kernel_family() {
    let (model, f) = trinomial();
    // Kernels (q, 1 - 2q, q) with variance 0.02 q in [0.005, 0.02].
    let mut best = f64::NEG_INFINITY;
    for i in 0..=1000 {
        let q = 0.25 + 0.25 * i as f64 / 1000.0;
        best = best.max(q * f[0] + (1.0 - 2.0 * q) * f[1] + q * f[2]);
    }
    let (v, _) = primal_paths(&model, &f).unwrap();
    assert!((v - best).abs() < 1e-12);
}

#[test]
fn constant_payoff_everywhere() {
    let (model, _) = one_step_call();
    let z = AmericanPayoff::constant(&model.tree, 0.7).unwrap();
    assert!((primal_enlarged(&model, &z, PrimalOptions::default()).unwrap().value - 0.7).abs() < 1e-12);
    assert!((robust_dpp(&model, &z).unwrap().value - 0.7).abs() < 1e-12);
    let h = dual_superhedge_american(&model, &z, HedgeOptions::default()).unwrap();
    assert!((h.value - 0.7).abs() < 1e-12);
    assert!(h.plan.q.iter().chain(&h.plan.q_tilde).all(|e| e.position.iter().all(|x| x.abs() < 1e-12)));
}

#[test]
fn decreasing_payoff_in_constant_model_stops_at_once() {
    let lat = build_lattice(&LatticeSpec::uniform(vec![0.0, 1.0, 2.0], 1.0, vec![vec![0.0], vec![0.0]])).unwrap();
    let band = VolatilityBand::uniform(&lat.tree, 0.0, 0.0).unwrap();
    let z = AmericanPayoff::from_fn(&lat.tree, |t, _| 1.0 - t as f64 * 0.3).unwrap();
    let model = ModelClass::new(lat.tree, band).unwrap();
    let r = robust_dpp(&model, &z).unwrap();
    assert_eq!(r.value, 1.0);
    assert!(r.stop[model.tree.root()]);
}

#[test]
fn european_sentinel_matches_path_primal() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let inst = random_instance(&mut rng, &InstanceConfig::default()).unwrap();
        let f = inst.z.terminal_values(&inst.model.tree);
        let eu = AmericanPayoff::european(&inst.model.tree, &f).unwrap();
        let (v, _) = primal_paths(&inst.model, &f).unwrap();
        let d = robust_dpp(&inst.model, &eu).unwrap().value;
        let e = primal_enlarged(&inst.model, &eu, PrimalOptions::default()).unwrap().value;
        assert!((v - d).abs() < 1e-7 && (v - e).abs() < 1e-7, "{v} {d} {e}");
    }
}

#[test]
fn random_instances_agree_across_solvers() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..25 {
        let inst = random_instance(&mut rng, &InstanceConfig::default()).unwrap();
        let (m, z) = (&inst.model, &inst.z);
        let primal = primal_enlarged(m, z, PrimalOptions::default()).unwrap();
        let dpp = robust_dpp(m, z).unwrap().value;
        let st = static_info_value(m, z, 600).unwrap();
        let asc = alternating_ascent(m, z, 50).unwrap();
        let am = dual_superhedge_american(m, z, HedgeOptions::default()).unwrap();
        let no_cont = dual_superhedge_american(
            m,
            z,
            HedgeOptions {
                forbid_continuation: true,
                ..Default::default()
            },
        )
        .unwrap();
        let v = primal.value;
        assert!((v - dpp).abs() < 1e-7, "primal {v} dpp {dpp}");
        assert!((v - st.value).abs() < 1e-7, "primal {v} static {}", st.value);
        assert!(asc.value <= st.value + 1e-9);
        assert!((v - am.value).abs() < 1e-7, "primal {v} hedge {}", am.value);
        assert!((v - no_cont.value).abs() < 1e-7, "primal {v} no-continuation {}", no_cont.value);
        let support: Vec<usize> = (0..m.tree.num_paths()).filter(|&p| am.support[p]).collect();
        assert!(am.plan.slack(m, z, &m.theta_dates, &support) > -1e-7);
        let rep = check_constraints(&primal.measure, m, 1e-7).unwrap();
        assert!(rep.all_ok(), "{:?}", rep.violations);
        extract_pair(&m.tree, &primal.measure, Some(1e-6)).unwrap();
    }
}

#[test]
fn weak_duality_with_options() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..15 {
        let cfg = InstanceConfig {
            num_options: 1,
            ..Default::default()
        };
        let inst = random_instance(&mut rng, &cfg).unwrap();
        let (m, z) = (&inst.model, &inst.z);
        let st = static_info_value(m, z, 600).unwrap();
        let am = dual_superhedge_american(m, z, HedgeOptions::default()).unwrap();
        let cal = primal_enlarged(m, z, PrimalOptions::default()).unwrap();
        assert!(am.value >= st.value - 1e-7);
        assert!((am.value - cal.value).abs() < 1e-7);
        let strict = dual_superhedge_american(
            m,
            z,
            HedgeOptions {
                no_band_multipliers: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(strict.value >= am.value - 1e-9);
    }
}

#[test]
fn eps_floor_restricts_the_primal() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let inst = random_instance(&mut rng, &InstanceConfig::default()).unwrap();
        let (m, z) = (&inst.model, &inst.z);
        let v0 = primal_enlarged(m, z, PrimalOptions::default()).unwrap().value;
        let eps = 0.1;
        let ve = primal_enlarged(m, z, PrimalOptions { eps_floor: Some(eps) }).unwrap().value;
        let inf_z = z.values.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(ve <= v0 + 1e-9);
        assert!(ve >= (1.0 - eps) * v0 + eps * inf_z - 1e-9);
    }
}

#[test]
fn chain_with_constant_payoff_is_flat() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let inst = random_instance(
        &mut rng,
        &InstanceConfig {
            num_options: 1,
            max_depth: 3,
            ..Default::default()
        },
    )
    .unwrap();
    let z = AmericanPayoff::constant(&inst.model.tree, 0.3).unwrap();
    let r = inequality_chain(&ChainInstance {
        model: inst.model,
        z,
        y_spec: Default::default(),
        pre_date: -1.0,
        rule_cap: 600,
        tol: CHAIN_TOL,
        description: "constant".into(),
    })
    .unwrap();
    for (name, v) in r.entries() {
        assert!((v - 0.3).abs() < 1e-9, "{name} = {v}");
    }
}

#[test]
fn band_interval_rows_follow_the_status() {
    let (model, _) = one_step_call();
    let band = VolatilityBand::from_fn(&model.tree, |_| Some(BandInterval::scalar(0.01, 0.03, 1))).unwrap();
    let model = model.with_band(band);
    let sys = build_system(&model, &model.theta_dates, &vec![true; model.tree.num_paths()]).unwrap();
    assert!(sys
        .rows
        .iter()
        .filter(|r| r.role.is_band())
        .all(|r| matches!(r.role.status(), Some(StopStatus::Alive) | Some(StopStatus::Stopped(0)))));
}

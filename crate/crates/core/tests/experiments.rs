use proptest::prelude::*;

use seqshield::adversary::{
    best_response, iterated_best_response, true_system_cost, worst_case_deviation, AttackConfig,
    BestResponseConfig,
};
use seqshield::coordinator::{default_theta_grid, tune_malicious, EvalTarget};
use seqshield::experiments::{
    run_case, run_cases, run_sweep, BaseScenarioConfig, CaseResult, ExperimentConfig, SweepParam,
    SweepSpec, ALL_CASES,
};
use seqshield::rules::RuleParams;
use seqshield::scenario::{generate_scenario, load_scenario, DeviationVector, GenParams};
use seqshield::schedule::solve_schedule;

fn sweep(param: SweepParam, values: Vec<f64>, reps: usize) -> Vec<CaseResult> {
    let spec = SweepSpec {
        base: BaseScenarioConfig::default(),
        param,
        values,
        reps,
        seed: 2024,
        cases: ALL_CASES.to_vec(),
    };
    run_sweep(&spec, &ExperimentConfig::default()).unwrap()
}

#[test]
fn zero_noise_sweep_collapses_truthful_cases() {
    let rows = sweep(SweepParam::Sigma, vec![0.0], 1);
    assert_eq!(rows.len(), 7);
    assert_eq!(rows[0].metrics, rows[1].metrics);
    assert_eq!(rows[0].metrics, rows[2].metrics);
}

#[test]
fn empty_untrusted_set_makes_every_case_baseline() {
    let rows = sweep(SweepParam::MSize, vec![0.0], 5);
    assert_eq!(rows.len(), 35);
    for cell in rows.chunks(7) {
        for r in cell {
            assert_eq!(
                r.metrics.cost_true, cell[0].metrics.cost_true,
                "case {}",
                r.case_id
            );
            assert_eq!(r.theta, RuleParams::BASELINE);
        }
    }
}

#[test]
fn worst_case_cost_grows_with_epsilon() {
    let rows = sweep(SweepParam::Epsilon, vec![0.1, 0.5], 20);
    let case6: Vec<f64> = rows
        .iter()
        .filter(|r| r.case_id == 6)
        .map(|r| r.metrics.cost_true)
        .collect();
    let (small, large) = case6.split_at(20);
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    assert!(
        mean(large) >= mean(small),
        "{} < {}",
        mean(large),
        mean(small)
    );
    // Paired cells share the true ETAs.
    let by_value: Vec<_> = rows
        .iter()
        .filter(|r| r.case_id == 1)
        .map(|r| r.scenario.seed)
        .collect();
    assert_eq!(by_value[..20], by_value[20..]);
}

#[test]
fn sweep_rows_are_ordered_by_value_rep_case() {
    let rows = sweep(SweepParam::N, vec![3.0, 2.0], 2);
    let keys: Vec<(usize, usize, u8)> = rows
        .iter()
        .map(|r| (r.scenario.n, r.rep, r.case_id))
        .collect();
    let mut expected = Vec::new();
    for n in [3, 2] {
        for rep in 0..2 {
            for c in ALL_CASES {
                expected.push((n, rep, c));
            }
        }
    }
    assert_eq!(keys, expected);
}

#[test]
fn security_benefit_on_generated_scenarios() {
    for seed in 0..6 {
        let s = generate_scenario(&GenParams {
            n: 6,
            horizon: 12.0,
            s_min: 2.0,
            sigma: 0.2,
            epsilon: 0.6,
            m_size: 2,
            seed,
        })
        .unwrap();
        let rows = run_cases(&s, &ALL_CASES, &ExperimentConfig::default(), 0).unwrap();
        let c = |k: usize| rows[k - 1].metrics.cost_true;
        assert!(c(5) <= c(4) + 1e-9);
        assert!(c(7) <= c(6) + 1e-9);
        let baseline = solve_schedule(&s.taus(), s.s_min).unwrap().objective;
        for r in &rows {
            let m = &r.metrics;
            assert!(m.cost_true >= baseline - 1e-9);
            assert!(m.kendall_tau <= 15);
            assert!((baseline - m.deviator_gain + m.bystander_harm - m.cost_true).abs() < 1e-9);
        }
    }
}

#[test]
fn proxy_evaluation_runs_all_cases() {
    let s = generate_scenario(&GenParams {
        n: 4,
        horizon: 8.0,
        s_min: 2.0,
        sigma: 0.3,
        epsilon: 0.5,
        m_size: 1,
        seed: 8,
    })
    .unwrap();
    let cfg = ExperimentConfig {
        eval: EvalTarget::SurveillanceProxy,
        ..ExperimentConfig::default()
    };
    let rows = run_cases(&s, &ALL_CASES, &cfg, 0).unwrap();
    assert_eq!(rows.len(), 7);
    assert!(rows.iter().all(|r| r.metrics.cost_true.is_finite()));
}

#[test]
fn single_case_entry_point() {
    let s = load_scenario(
        r#"{"s_min": 2, "sigma": 0, "seed": 0, "vehicles": [
        {"id": 1, "tau": 0, "surv_tau": 0, "epsilon": 0.5, "untrusted": false},
        {"id": 2, "tau": 1, "surv_tau": 1, "epsilon": 0.5, "untrusted": false},
        {"id": 3, "tau": 1.1, "surv_tau": 1.1, "epsilon": 0.5, "untrusted": true}]}"#,
    )
    .unwrap();
    let r = run_case(&s, 6, &ExperimentConfig::default()).unwrap();
    assert_eq!(r.case_id, 6);
    assert_eq!(r.metrics.kendall_tau, 1);
    assert!((r.metrics.cost_true - 4.8233).abs() < 1e-3);
}

fn small_scenario() -> impl Strategy<Value = GenParams> {
    (
        1usize..=5,
        0.5f64..3.0,
        0.05f64..1.0,
        0.0f64..=1.0,
        any::<u64>(),
    )
        .prop_flat_map(|(n, s_min, epsilon, sigma_frac, seed)| {
            (0..=n).prop_map(move |m_size| GenParams {
                n,
                horizon: n as f64 * s_min,
                s_min,
                sigma: epsilon * sigma_frac,
                epsilon,
                m_size,
                seed,
            })
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scenario_files_round_trip(p in small_scenario()) {
        let s = generate_scenario(&p).unwrap();
        prop_assert!(s.vehicles.iter().all(|v| (v.surv_tau - v.tau).abs() <= p.sigma));
        let back = load_scenario(&s.to_json()).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn best_response_never_worse_than_truth(p in small_scenario(), w in 0.0f64..=1.0, kappa in 0.0f64..=1.0) {
        let s = generate_scenario(&p).unwrap();
        let params = RuleParams { w, kappa };
        let zeros = DeviationVector::zeros(s.n());
        let truthful = solve_schedule(&seqshield::rules::effective_etas(&s.truthful_reports(), &s, params), s.s_min).unwrap();
        for id in s.untrusted_ids() {
            let br = best_response(&s, params, id, &zeros, 51).unwrap();
            let own_truth = (truthful.times[id - 1] - s.vehicles[id - 1].tau).powi(2);
            prop_assert!(br.delta_star.abs() <= s.vehicles[id - 1].epsilon);
            prop_assert!(br.own_cost <= own_truth + 1e-9);
        }
    }

    #[test]
    fn converged_fixed_points_are_best_responses(p in small_scenario()) {
        let s = generate_scenario(&p).unwrap();
        let cfg = BestResponseConfig { grid_points: 41, ..BestResponseConfig::default() };
        let fp = iterated_best_response(&s, RuleParams::BASELINE, &cfg).unwrap();
        s.apply_deviation(&fp.deltas).unwrap();
        if fp.converged {
            for id in s.untrusted_ids() {
                let br = best_response(&s, RuleParams::BASELINE, id, &fp.deltas, cfg.grid_points).unwrap();
                prop_assert!((br.delta_star - fp.deltas.delta[id - 1]).abs() <= cfg.tol);
            }
        }
    }

    #[test]
    fn worst_case_bounds_truthful_cost(p in small_scenario(), w in 0.0f64..=1.0, kappa in 0.0f64..=1.0) {
        let s = generate_scenario(&p).unwrap();
        let params = RuleParams { w, kappa };
        let cfg = AttackConfig { grid_points_per_dim: 7, refine_iters: 1 };
        let wc = worst_case_deviation(&s, params, &cfg).unwrap();
        s.apply_deviation(&wc.deltas).unwrap();
        let truthful = true_system_cost(&s, params, &vec![0.0; s.n()]);
        prop_assert!(wc.worst_cost >= truthful);
        prop_assert_eq!(wc.worst_cost, true_system_cost(&s, params, &wc.deltas.delta));
    }

    #[test]
    fn neutralized_attack_is_baseline(p in small_scenario()) {
        let mut p = p;
        p.sigma = 0.0;
        let s = generate_scenario(&p).unwrap();
        let wc = worst_case_deviation(&s, RuleParams { w: 1.0, kappa: 1.0 }, &AttackConfig::default()).unwrap();
        prop_assert_eq!(wc.worst_cost, solve_schedule(&s.taus(), s.s_min).unwrap().objective);
    }
}

#[test]
fn malicious_tuning_dominates_baseline_with_noise() {
    let s = generate_scenario(&GenParams {
        n: 5,
        horizon: 10.0,
        s_min: 2.0,
        sigma: 0.25,
        epsilon: 0.5,
        m_size: 2,
        seed: 31,
    })
    .unwrap();
    let r = tune_malicious(
        &s,
        &default_theta_grid(),
        &AttackConfig::default(),
        EvalTarget::TrueEta,
    )
    .unwrap();
    let base = r.per_theta.iter().find(|e| e.params.is_baseline()).unwrap();
    assert!(r.objective <= base.objective);
    assert_eq!(r.per_theta.len(), 44);
}

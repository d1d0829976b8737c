use std::collections::BTreeMap;

use proptest::prelude::*;
use repscen::cflp::{generate_instance, to_two_stage, CflpInstance, GeneratorConfig};
use repscen::eval::*;
use repscen::mip::SolverConfig;
use repscen::model::evaluate_ovf;

fn constant_instance() -> CflpInstance {
    let mut inst = generate_instance(&GeneratorConfig { n: 3, m: 4, ..Default::default() }, 5).unwrap();
    let row = inst.demand[0].clone();
    inst.demand = vec![row; 4];
    inst
}

#[test]
fn avg_equals_rnd_on_constant_demand() {
    let inst = constant_instance();
    for seed in 0..5 {
        assert_eq!(avg_scenario(&inst), rnd_scenario(&inst, seed));
    }
}

#[test]
fn single_scenario_exact_matches_surrogate() {
    let inst = generate_instance(&GeneratorConfig { n: 3, m: 1, ..Default::default() }, 9).unwrap();
    let ts = to_two_stage(&inst, Some(50.0)).unwrap();
    let ex = run_exact("a", &ts, &SolverConfig::exact()).unwrap();
    let avg = run_surrogate("a", Method::Avg, &ts, 3, &avg_scenario(&inst), &SolverConfig::exact(), 0.0, 0.0).unwrap();
    assert!((ex.result.objective - avg.objective).abs() < 1e-6);
    assert!(ex.gap <= 1e-9 + 1e-12);
}

#[test]
fn reported_objectives_are_recomputable_and_above_bound() {
    let cfg = GeneratorConfig { n: 3, m: 5, ..Default::default() };
    let sur = SolverConfig::exact();
    let mut results = Vec::new();
    let mut traj = BTreeMap::new();
    for k in 0..4u64 {
        let inst = generate_instance(&cfg, 40 + k).unwrap();
        let ts = to_two_stage(&inst, cfg.penalty()).unwrap();
        let id = format!("i{k}");
        let ex = run_exact(&id, &ts, &SolverConfig::default()).unwrap();
        assert!(ex.gap <= 0.02 + 1e-12);
        let avg = run_surrogate(&id, Method::Avg, &ts, 3, &avg_scenario(&inst), &sur, 0.0, 0.0).unwrap();
        let rnd = run_surrogate(&id, Method::Rnd, &ts, 3, &rnd_scenario(&inst, k), &sur, 0.0, 0.0).unwrap();
        for r in [&ex.result, &avg, &rnd] {
            assert!((evaluate_ovf(&ts, &r.x).unwrap() - r.objective).abs() < 1e-6);
            assert!(r.objective >= ex.best_bound - 1e-6);
        }
        traj.insert(id, ex.trajectory.clone());
        results.extend([ex.result, avg, rnd]);
    }
    let rep = build_report(&results, &traj).unwrap();
    assert_eq!(rep.instances, 4);
    assert!(rep.diff(Method::Grb).is_none());
    let mut reversed = results.clone();
    reversed.reverse();
    assert_eq!(build_report(&reversed, &traj).unwrap(), rep);
}

#[test]
fn report_files_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let r = |m, obj: f64, xi: Vec<f64>| MethodResult {
        method: m,
        instance_id: "a".into(),
        objective: obj,
        time_s: 0.1,
        feature_time_s: 0.0,
        predict_time_s: 0.0,
        solve_time_s: 0.1,
        x: vec![],
        scenario: xi,
        clamped: 0,
    };
    let results = vec![r(Method::Grb, 100.0, vec![]), r(Method::Lr, 101.0, vec![3.0, 27.0])];
    let rep = build_report(&results, &BTreeMap::from([("a".to_string(), vec![(0.05, 101.0)])])).unwrap();
    write_report(dir.path(), &rep, &results, &[vec![4.0, 12.0]], 10.0).unwrap();
    for f in ["table1_diff_ratio.csv", "table2_time.csv", "fig1_scatter.csv", "hist_LR.csv", "hist_RS.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let hist = std::fs::read_to_string(dir.path().join("hist_LR.csv")).unwrap();
    assert_eq!(hist.lines().count(), 1 + 3);
    assert_eq!(rep.time("GRB-L").unwrap().summary.median, 0.05);
}

proptest! {
    #[test]
    fn summary_is_permutation_invariant(mut v in prop::collection::vec(-1e3f64..1e3, 1..40), k in 0usize..40) {
        let a = summarize(&v).unwrap();
        let len = v.len();
        v.rotate_left(k % len);
        v.reverse();
        prop_assert_eq!(a, summarize(&v).unwrap());
        prop_assert!(a.min <= a.median && a.median <= a.max && a.std >= 0.0);
    }

    #[test]
    fn diff_ratio_of_self_is_zero(g in 1e-3f64..1e6) {
        prop_assert_eq!(diff_ratio(g, g).unwrap(), 0.0);
    }
}

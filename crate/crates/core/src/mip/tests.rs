use super::mps::{parse_mps, to_mps_string};
use super::simplex::LpStatus;
use super::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimum of `c x` over all basic feasible solutions of `rows` within the box
/// `0 <= x <= ub`, by enumerating every choice of n active constraints.
fn vertex_oracle(p: &MipProblem) -> Option<f64> {
    let n = p.num_vars();
    // active-constraint candidates: (coefficient row, rhs)
    let mut cands: Vec<(Vec<f64>, f64)> = Vec::new();
    for r in &p.rows {
        let mut a = vec![0.0; n];
        for &(j, v) in &r.coeffs {
            a[j] += v;
        }
        cands.push((a, r.rhs));
    }
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        cands.push((e.clone(), p.lower[j]));
        cands.push((e, p.upper[j]));
    }
    let k = cands.len();
    let mut best: Option<f64> = None;
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let a = DMatrix::from_fn(n, n, |r, c| cands[idx[r]].0[c]);
        let b = DVector::from_fn(n, |r, _| cands[idx[r]].1);
        if a.determinant().abs() > 1e-9 {
            if let Some(x) = a.lu().solve(&b) {
                let xs: Vec<f64> = x.iter().copied().collect();
                if p.max_violation(&xs) <= 1e-7 {
                    let v = p.objective_value(&xs);
                    best = Some(best.map_or(v, |b: f64| b.min(v)));
                }
            }
        }
        // next combination
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] < k - n + i {
                idx[i] += 1;
                for t in i + 1..n {
                    idx[t] = idx[t - 1] + 1;
                }
                break;
            }
        }
    }
}

fn random_lp(rng: &mut ChaCha8Rng) -> MipProblem {
    let n = rng.random_range(1..=8);
    let m = rng.random_range(1..=8);
    let c: Vec<f64> = (0..n).map(|_| rng.random_range(-10..=10) as f64).collect();
    let mut p = MipProblem::new(c);
    for j in 0..n {
        p.set_bounds(j, 0.0, rng.random_range(1..=6) as f64);
    }
    for _ in 0..m {
        let coeffs: Vec<(usize, f64)> =
            (0..n).map(|j| (j, rng.random_range(-5..=5) as f64)).filter(|&(_, a)| a != 0.0).collect();
        let sense = if rng.random_bool(0.5) { RowSense::Le } else { RowSense::Ge };
        let rhs = rng.random_range(-6..=12) as f64;
        p.add_row(coeffs, sense, rhs);
    }
    p
}

#[test]
fn lp_single_lower_bound_row() {
    let mut p = MipProblem::new(vec![1.0]);
    p.set_bounds(0, f64::NEG_INFINITY, f64::INFINITY);
    p.add_row(vec![(0, 1.0)], RowSense::Ge, 3.0);
    let s = solve_lp(&p).unwrap();
    assert_eq!(s.status, LpStatus::Optimal);
    assert!((s.objective - 3.0).abs() < 1e-9);
    assert!((s.x[0] - 3.0).abs() < 1e-9);
    assert!((s.duals[0] - 1.0).abs() < 1e-9);
}

#[test]
fn lp_textbook_two_variables() {
    let mut p = MipProblem::new(vec![-1.0, -1.0]);
    p.set_bounds(0, 0.0, 1.0);
    p.set_bounds(1, 0.0, 1.0);
    p.add_row(vec![(0, 1.0), (1, 1.0)], RowSense::Le, 1.0);
    let s = solve_lp(&p).unwrap();
    assert_eq!(s.status, LpStatus::Optimal);
    assert!((s.objective + 1.0).abs() < 1e-9);
}

#[test]
fn lp_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut feasible = 0;
    for case in 0..30 {
        let p = random_lp(&mut rng);
        let oracle = vertex_oracle(&p);
        let s = solve_lp(&p).unwrap();
        match oracle {
            Some(v) => {
                feasible += 1;
                assert_eq!(s.status, LpStatus::Optimal, "case {case}");
                assert!((s.objective - v).abs() <= 1e-6, "case {case}: {} vs {v}", s.objective);
                assert!(p.max_violation(&s.x) <= 1e-6);
            }
            None => assert_eq!(s.status, LpStatus::Infeasible, "case {case}"),
        }
    }
    assert!(feasible >= 10);
}

#[test]
fn lp_detects_unbounded_and_infeasible() {
    let mut p = MipProblem::new(vec![-1.0, 0.0]);
    p.add_row(vec![(0, 1.0), (1, -1.0)], RowSense::Le, 2.0);
    assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Unbounded);

    let mut q = MipProblem::new(vec![1.0, 1.0]);
    q.add_row(vec![(0, 1.0), (1, 1.0)], RowSense::Le, 1.0);
    q.add_row(vec![(0, 1.0), (1, 1.0)], RowSense::Ge, 2.0);
    assert_eq!(solve_lp(&q).unwrap().status, LpStatus::Infeasible);
}

#[test]
fn lp_with_free_variables() {
    // min x - y  s.t. x - y >= -4, x + y = 2, x,y free
    let mut p = MipProblem::new(vec![1.0, -1.0]);
    p.set_bounds(0, f64::NEG_INFINITY, f64::INFINITY);
    p.set_bounds(1, f64::NEG_INFINITY, f64::INFINITY);
    p.add_row(vec![(0, 1.0), (1, -1.0)], RowSense::Ge, -4.0);
    p.add_row(vec![(0, 1.0), (1, 1.0)], RowSense::Eq, 2.0);
    let s = solve_lp(&p).unwrap();
    assert_eq!(s.status, LpStatus::Optimal);
    assert!((s.objective + 4.0).abs() < 1e-9);
    assert!((s.x[0] + 1.0).abs() < 1e-9 && (s.x[1] - 3.0).abs() < 1e-9);
}

fn knapsack(values: &[f64], weights: &[f64], cap: f64) -> MipProblem {
    let mut p = MipProblem::new(values.iter().map(|v| -v).collect());
    for j in 0..values.len() {
        p.set_binary(j);
    }
    p.add_row(weights.iter().copied().enumerate().collect(), RowSense::Le, cap);
    p
}

fn enumerate_binary(p: &MipProblem) -> Option<f64> {
    let n = p.num_vars();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << n) {
        let x: Vec<f64> = (0..n).map(|j| ((mask >> j) & 1) as f64).collect();
        if p.max_violation(&x) <= 1e-9 {
            let v = p.objective_value(&x);
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    }
    best
}

#[test]
fn knapsack_matches_enumeration() {
    let values = [10.0, 13.0, 7.0, 8.0, 15.0, 4.0, 9.0, 11.0, 6.0, 12.0];
    let weights = [5.0, 7.0, 3.0, 4.0, 8.0, 2.0, 5.0, 6.0, 3.0, 7.0];
    let p = knapsack(&values, &weights, 23.0);
    let oracle = enumerate_binary(&p).unwrap();
    let s = solve_mip(&p, &SolverConfig::exact()).unwrap();
    assert_eq!(s.status, MipStatus::Optimal);
    assert!((s.best_objective - oracle).abs() < 1e-6);
    assert!(p.is_feasible(&s.x, FEAS_TOL, INT_TOL));
    assert!(s.gap <= 1e-6);
}

#[test]
fn transportation_is_solved_at_the_root() {
    // 3 supplies x 3 demands, integer flows; totally unimodular
    let supply = [20.0, 30.0, 25.0];
    let demand = [15.0, 35.0, 25.0];
    let cost = [[4.0, 6.0, 9.0], [5.0, 3.0, 8.0], [7.0, 4.0, 2.0]];
    let mut p = MipProblem::new(cost.iter().flatten().copied().collect());
    for j in 0..9 {
        p.integer[j] = true;
    }
    for i in 0..3 {
        p.add_row((0..3).map(|j| (3 * i + j, 1.0)).collect(), RowSense::Le, supply[i]);
    }
    for j in 0..3 {
        p.add_row((0..3).map(|i| (3 * i + j, 1.0)).collect(), RowSense::Eq, demand[j]);
    }
    let s = solve_mip(&p, &SolverConfig::exact()).unwrap();
    assert_eq!(s.status, MipStatus::Optimal);
    assert_eq!(s.branchings, 0);
    assert_eq!(s.nodes, 1);
}

#[test]
fn infeasible_and_unbounded_mips() {
    let mut p = MipProblem::new(vec![1.0]);
    p.set_binary(0);
    p.add_row(vec![(0, 2.0)], RowSense::Eq, 1.0);
    assert_eq!(solve_mip(&p, &SolverConfig::exact()).unwrap().status, MipStatus::Infeasible);

    let mut q = MipProblem::new(vec![1.0, 0.0]);
    q.integer[1] = true;
    q.set_bounds(0, f64::NEG_INFINITY, f64::INFINITY);
    q.add_row(vec![(0, 1.0), (1, 1.0)], RowSense::Le, 3.0);
    assert_eq!(solve_mip(&q, &SolverConfig::exact()).unwrap().status, MipStatus::Unbounded);
}

#[test]
fn general_integers_branch_correctly() {
    // max 5x + 4y s.t. 6x + 4y <= 24, x + 2y <= 6, x,y >= 0 integer -> 20 at (4, 0)
    let mut p = MipProblem::new(vec![-5.0, -4.0]);
    p.integer = vec![true, true];
    p.add_row(vec![(0, 6.0), (1, 4.0)], RowSense::Le, 24.0);
    p.add_row(vec![(0, 1.0), (1, 2.0)], RowSense::Le, 6.0);
    let s = solve_mip(&p, &SolverConfig::exact()).unwrap();
    assert!((s.best_objective + 20.0).abs() < 1e-9, "{}", s.best_objective);
}

#[test]
fn gap_limit_stops_early_with_consistent_gap() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 30;
    let values: Vec<f64> = (0..n).map(|_| rng.random_range(10..60) as f64).collect();
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(10..60) as f64).collect();
    let p = knapsack(&values, &weights, 400.0);
    let cfg = SolverConfig { gap_limit: 0.05, ..Default::default() };
    let s = solve_mip(&p, &cfg).unwrap();
    assert!(s.gap <= 0.05 + 1e-12);
    assert!(s.best_bound <= s.best_objective + 1e-9);
    let expected = (s.best_objective - s.best_bound).abs() / s.best_objective.abs().max(1e-10);
    assert!((s.gap - expected).abs() < 1e-12);
    for w in s.incumbent_trajectory.windows(2) {
        assert!(w[1].1 <= w[0].1 && w[1].0 >= w[0].0);
    }
}

#[test]
fn node_limit_reports_time_limit_status() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 40;
    let values: Vec<f64> = (0..n).map(|_| rng.random_range(10..60) as f64).collect();
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(10..60) as f64 + 0.5).collect();
    let p = knapsack(&values, &weights, 700.0);
    let cfg = SolverConfig { gap_limit: 0.0, node_limit: Some(3), ..Default::default() };
    let s = solve_mip(&p, &cfg).unwrap();
    assert_eq!(s.status, MipStatus::TimeLimit);
    assert!(s.nodes <= 3);
}

#[test]
fn identical_runs_are_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 25;
    let values: Vec<f64> = (0..n).map(|_| rng.random_range(10..60) as f64).collect();
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(10..60) as f64).collect();
    let p = knapsack(&values, &weights, 300.0);
    let a = solve_mip(&p, &SolverConfig::exact()).unwrap();
    let b = solve_mip(&p, &SolverConfig::exact()).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.nodes, b.nodes);
    assert_eq!(a.best_objective.to_bits(), b.best_objective.to_bits());
    assert_eq!(a.lp_iterations, b.lp_iterations);
}

#[test]
fn invalid_problems_are_rejected() {
    let p = MipProblem::new(vec![]);
    assert!(matches!(solve_mip(&p, &SolverConfig::default()), Err(MipError::Malformed(_))));
    let mut q = MipProblem::new(vec![1.0]);
    q.set_bounds(0, 2.0, 1.0);
    assert!(q.validate().is_err());
    let mut r = MipProblem::new(vec![1.0]);
    r.add_row(vec![(0, 1.0)], RowSense::Le, f64::INFINITY);
    assert!(r.validate().is_err());
    let bad_cfg = SolverConfig { time_limit: 0.0, ..Default::default() };
    assert!(solve_mip(&MipProblem::new(vec![1.0]), &bad_cfg).is_err());
}

#[test]
fn one_variable_mps_layout() {
    let mut p = MipProblem::new(vec![2.0]);
    p.integer[0] = true;
    p.set_bounds(0, 0.0, 5.0);
    p.add_row(vec![(0, 1.0)], RowSense::Ge, 1.5);
    let text = to_mps_string(&p, "ONE");
    let lines: Vec<&str> = text.lines().collect();
    for section in ["ROWS", "COLUMNS", "RHS", "BOUNDS", "ENDATA"] {
        assert!(lines.contains(&section), "missing {section}");
    }
    let markers: Vec<&&str> = lines.iter().filter(|l| l.contains("'MARKER'")).collect();
    assert_eq!(markers.len(), 2);
    assert!(markers[0].ends_with("'INTORG'") && markers[1].ends_with("'INTEND'"));
    let col_line = lines.iter().find(|l| l.contains("C0001") && l.contains("R0001")).unwrap();
    assert_eq!(&col_line[4..9], "C0001");
    assert_eq!(&col_line[14..19], "R0001");
    assert!(text.contains(" G  R0001"));
}

#[test]
fn mps_parse_errors_carry_position() {
    let text = "NAME X\nROWS\n N  COST\n L  R0001\nCOLUMNS\n    C0001  COST  abc\nENDATA\n";
    match parse_mps(text) {
        Err(MipError::Parse { line, column, .. }) => {
            assert_eq!(line, 6);
            assert_eq!(column, 18);
        }
        other => panic!("expected parse error, got {other:?}"),
    }
    let text = "NAME X\nROWS\n N  COST\nCOLUMNS\n    C0001  R0009  1\nENDATA\n";
    assert!(matches!(parse_mps(text), Err(MipError::Parse { line: 5, column: 12, .. })));
    assert!(matches!(parse_mps("NAME X\nROWS\n N  COST\n"), Err(MipError::Parse { .. })));
}

fn arb_problem() -> impl Strategy<Value = MipProblem> {
    (1usize..6, 0usize..5).prop_flat_map(|(n, m)| {
        let coef = prop_oneof![Just(0.0), -1e3..1e3f64, (-20i32..20).prop_map(f64::from)];
        (
            prop::collection::vec(coef.clone(), n),
            prop::collection::vec((prop::collection::vec(coef, n), 0u8..3, -1e4..1e4f64), m),
            prop::collection::vec((any::<bool>(), 0u8..4), n),
        )
            .prop_map(move |(c, rows, cols)| {
                let mut p = MipProblem::new(c);
                for (coeffs, s, rhs) in rows {
                    let coeffs: Vec<(usize, f64)> = coeffs.into_iter().enumerate().filter(|&(_, a)| a != 0.0).collect();
                    let sense = [RowSense::Le, RowSense::Ge, RowSense::Eq][s as usize];
                    p.add_row(coeffs, sense, rhs);
                }
                for (j, (int, b)) in cols.into_iter().enumerate() {
                    p.integer[j] = int;
                    let (lo, hi) = match b {
                        0 => (0.0, f64::INFINITY),
                        1 => (-3.5, 7.25),
                        2 => (f64::NEG_INFINITY, f64::INFINITY),
                        _ => (2.0, 2.0),
                    };
                    p.set_bounds(j, lo, hi);
                }
                p
            })
    })
}

proptest! {
    #[test]
    fn mps_round_trip_is_identity(p in arb_problem()) {
        let (q, names) = parse_mps(&to_mps_string(&p, "RT")).unwrap();
        prop_assert_eq!(names.len(), p.num_vars());
        prop_assert_eq!(q, p);
    }

    #[test]
    fn bnb_solutions_are_feasible_and_bounded(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = random_lp(&mut rng);
        for j in 0..p.num_vars() {
            p.integer[j] = rng.random_bool(0.6);
        }
        let s = solve_mip(&p, &SolverConfig::exact()).unwrap();
        if s.has_incumbent() {
            prop_assert!(p.is_feasible(&s.x, FEAS_TOL, INT_TOL));
            prop_assert!(s.best_bound <= s.best_objective + 1e-9);
            prop_assert!((p.objective_value(&s.x) - s.best_objective).abs() < 1e-9);
            prop_assert_eq!(s.status, MipStatus::Optimal);
        }
    }
}

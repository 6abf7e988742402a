use mgplan_optim::{
    solve_lp, solve_milp, Branching, MilpOptions, MixedIntegerProgram, Sense, SolveStatus, SolverError, Var,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exhaustive oracle for pure-binary programs.
fn enumerate(p: &MixedIntegerProgram<f64>) -> Option<(f64, Vec<f64>)> {
    let n = p.num_vars();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << n) {
        let x: Vec<f64> = (0..n).map(|j| ((mask >> j) & 1) as f64).collect();
        if p.max_violation(&x) > 1e-9 {
            continue;
        }
        let obj = p.objective_value(&x);
        if best.as_ref().map_or(true, |(b, _)| obj < *b) {
            best = Some((obj, x));
        }
    }
    best
}

fn assert_monotone(history: &[f64]) {
    for w in history.windows(2) {
        assert!(w[1] < w[0], "incumbent history not decreasing: {history:?}");
    }
}

#[test]
fn two_binaries_pick_the_heavier() {
    let mut p = MixedIntegerProgram::<f64>::new("ab");
    let a = p.add_binary("a");
    let b = p.add_binary("b");
    p.set_cost(a, -3.0);
    p.set_cost(b, -2.0);
    p.add_row("one", [(a, 1.0), (b, 1.0)], Sense::Le, 1.0);
    let out = solve_milp(&p, &MilpOptions::default()).unwrap();
    assert_eq!(out.status, SolveStatus::Optimal);
    assert_eq!(-out.objective, 3.0);
    assert_eq!(out.primal[0].round(), 1.0);
    assert_eq!(enumerate(&p).unwrap().0, -3.0);
}

#[test]
fn ten_item_knapsack_matches_enumeration() {
    let values = [23.0, 31.0, 29.0, 44.0, 53.0, 38.0, 63.0, 85.0, 89.0, 82.0];
    let weights = [92.0, 57.0, 49.0, 68.0, 60.0, 43.0, 67.0, 84.0, 87.0, 72.0];
    let mut p = MixedIntegerProgram::<f64>::new("knap");
    let vars: Vec<Var> = (0..10).map(|j| p.add_binary(format!("item{j}"))).collect();
    for (j, &v) in vars.iter().enumerate() {
        p.set_cost(v, -values[j]);
    }
    p.add_row("cap", vars.iter().zip(weights).map(|(&v, w)| (v, w)), Sense::Le, 269.0);
    let out = solve_milp(&p, &MilpOptions::default()).unwrap();
    let (best, _) = enumerate(&p).unwrap();
    assert_eq!(out.status, SolveStatus::Optimal);
    assert!((out.objective - best).abs() < 1e-9, "{} vs {best}", out.objective);
    assert_monotone(&out.stats.incumbent_history);
}

fn random_binary_program(rng: &mut ChaCha8Rng, idx: usize) -> MixedIntegerProgram<f64> {
    let n = rng.random_range(3..=12);
    let m = rng.random_range(1..=6);
    let mut p = MixedIntegerProgram::new(format!("rand{idx}"));
    let vars: Vec<Var> = (0..n).map(|j| p.add_binary(format!("b{j}"))).collect();
    for &v in &vars {
        p.set_cost(v, rng.random_range(-10..=6) as f64);
    }
    for i in 0..m {
        let mut coeffs: Vec<(Var, f64)> = Vec::new();
        for &v in &vars {
            if rng.random_bool(0.6) {
                coeffs.push((v, rng.random_range(-4..=8) as f64));
            }
        }
        let sense = match rng.random_range(0..5) {
            0 => Sense::Ge,
            1 => Sense::Eq,
            _ => Sense::Le,
        };
        let rhs = match sense {
            Sense::Eq => rng.random_range(0..=6) as f64,
            _ => rng.random_range(-2..=14) as f64,
        };
        p.add_row(format!("r{i}"), coeffs, sense, rhs);
    }
    p
}

#[test]
fn fifty_random_programs_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut feasible = 0;
    for idx in 0..50 {
        let p = random_binary_program(&mut rng, idx);
        let oracle = enumerate(&p);
        if oracle.is_some() {
            feasible += 1;
        }
        for branching in [Branching::MostFractional, Branching::Pseudocost] {
            let out = solve_milp(&p, &MilpOptions { branching, ..MilpOptions::default() }).unwrap();
            match &oracle {
                None => assert_eq!(out.status, SolveStatus::Infeasible, "program {idx}"),
                Some((best, _)) => {
                    assert_eq!(out.status, SolveStatus::Optimal, "program {idx}");
                    assert!(
                        (out.objective - best).abs() < 1e-9,
                        "program {idx} ({branching:?}): {} vs {best}",
                        out.objective
                    );
                    assert!(p.max_violation(&out.primal) <= 1e-7);
                    assert_monotone(&out.stats.incumbent_history);
                }
            }
        }
    }
    assert!(feasible >= 25, "only {feasible} feasible programs");
}

#[test]
fn integral_relaxation_returns_lp_optimum() {
    // Assignment polytope: LP vertices are integral.
    let mut p = MixedIntegerProgram::<f64>::new("assign");
    let cost = [[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]];
    let mut x = Vec::new();
    for (i, row) in cost.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            let v = p.add_binary(format!("x{i}{j}"));
            p.set_cost(v, c);
            x.push(v);
        }
    }
    for i in 0..3 {
        p.add_row(format!("r{i}"), (0..3).map(|j| (x[3 * i + j], 1.0)), Sense::Eq, 1.0);
        p.add_row(format!("c{i}"), (0..3).map(|j| (x[3 * j + i], 1.0)), Sense::Eq, 1.0);
    }
    let lp = solve_lp(&p).unwrap();
    let milp = solve_milp(&p, &MilpOptions::default()).unwrap();
    assert_eq!(milp.stats.nodes, 1);
    assert_eq!(lp.objective, milp.objective);
    assert_eq!(lp.primal, milp.primal);
}

#[test]
fn node_limit_without_incumbent_is_an_error() {
    let mut p = MixedIntegerProgram::<f64>::new("odd");
    let vars: Vec<Var> = (0..8).map(|j| p.add_binary(format!("b{j}"))).collect();
    for &v in &vars {
        p.set_cost(v, -1.0);
    }
    p.add_row("half", vars.iter().map(|&v| (v, 2.0)), Sense::Le, 7.0);
    let opts = MilpOptions { node_limit: 1, dive: false, ..MilpOptions::default() };
    assert!(matches!(solve_milp(&p, &opts), Err(SolverError::NodeLimitNoIncumbent(1))));
}

#[test]
fn node_limit_with_incumbent_reports_gap() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 30;
    let mut p = MixedIntegerProgram::<f64>::new("big");
    let vars: Vec<Var> = (0..n).map(|j| p.add_binary(format!("b{j}"))).collect();
    for &v in &vars {
        p.set_cost(v, -(rng.random_range(10..100) as f64));
    }
    for i in 0..3 {
        let coeffs: Vec<(Var, f64)> = vars.iter().map(|&v| (v, rng.random_range(5..60) as f64)).collect();
        p.add_row(format!("w{i}"), coeffs, Sense::Le, 400.0);
    }
    let opts = MilpOptions { node_limit: 60, ..MilpOptions::default() };
    let out = solve_milp(&p, &opts).unwrap();
    assert_eq!(out.status, SolveStatus::IterationLimit);
    assert!(out.gap > 0.0);
    assert!(p.max_violation(&out.primal) <= 1e-7);
    let full = solve_milp(&p, &MilpOptions::default()).unwrap();
    assert_eq!(full.status, SolveStatus::Optimal);
    assert!(full.objective <= out.objective + 1e-9);
    assert!(full.gap <= 1e-6);
    assert_monotone(&full.stats.incumbent_history);
}

#[test]
fn mixed_program_in_single_precision() {
    let mut p = MixedIntegerProgram::<f32>::new("f32");
    let a = p.add_binary("a");
    let y = p.add_var("y", 0.0, 10.0);
    p.set_cost(a, 5.0);
    p.set_cost(y, 1.0);
    p.add_row("need", [(a, 8.0), (y, 1.0)], Sense::Ge, 9.5);
    let out = solve_milp(&p, &MilpOptions::default()).unwrap();
    assert!((out.objective - 6.5).abs() < 1e-4, "{}", out.objective);
}

mod common;

use common::instances::{random_instance, Instance};
use common::{close, tight};
use ndarray::{array, Array2};
use pmcvar::formulations::*;
use pmcvar::market_data::{DistanceMatrix, ScenarioSet};
use pmcvar::model_ir::MilpStatus;
use pmcvar::simplex::{cvar_primal_oracle, solve_lp, SimplexOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn solve(m: &dyn MilpSolver, f: &Formulation) -> pmcvar::model_ir::MilpSolution {
    let sol = m.solve(&f.model, None).unwrap();
    assert_eq!(sol.status, MilpStatus::Optimal);
    sol
}

#[test]
fn models_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let bf = BruteForce::default();
    for k in 0..25 {
        let Instance { s, d, cfg } = random_instance(&mut rng, 8, 3, 10);
        let b = compute_bounds(&s, &d, &cfg, &tight()).unwrap();
        for f in [
            build_unified(&s, &d, &cfg, b.bounds.fp0).unwrap(),
            build_pmedian(&s, &d, &cfg).unwrap(),
            build_cvar_cc(&s, &cfg).unwrap(),
        ] {
            let a = solve(&tight(), &f);
            let e = solve(&bf, &f);
            assert!(
                close(a.objective, e.objective, 1e-8),
                "instance {k} {:?}: {} vs {}",
                f.layout.kind,
                a.objective,
                e.objective
            );
        }
    }
}

#[test]
fn slack_budget_matches_cardinality_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let Instance { s, d, mut cfg } = random_instance(&mut rng, 3, 1, 8);
        cfg.p = 1;
        let u = solve(&BruteForce::default(), &build_unified(&s, &d, &cfg, f64::INFINITY).unwrap());
        let c = solve(&BruteForce::default(), &build_cvar_cc(&s, &cfg).unwrap());
        assert!(close(u.objective, c.objective, 1e-10));
    }
}

#[test]
fn pure_cvar_duality_at_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let r = Array2::from_shape_fn((5, 3), |_| rng.gen_range(-0.05..0.05));
        let s = ScenarioSet::from_returns(r, None).unwrap();
        let beta = rng.gen_range(0.1..1.0);
        let cfg = ModelConfig::with_default_bounds(3, 1, beta, f64::NEG_INFINITY, 0.0);
        let f = build_pure_cvar(&s, &cfg).unwrap();
        let (sol, _) = solve_lp(&f.model, &SimplexOptions::default(), None).unwrap();
        let x = f.layout.weights(&sol.values);
        let oracle = cvar_primal_oracle(&s.portfolio_returns(x), s.probs.as_slice().unwrap(), beta).unwrap();
        assert!(close(sol.objective, oracle, 1e-8), "{} vs {oracle}", sol.objective);
    }
}

#[test]
fn extracted_portfolios_are_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 0..15 {
        let Instance { s, d, cfg } = random_instance(&mut rng, 9, 3, 12);
        let b = compute_bounds(&s, &d, &cfg, &tight()).unwrap();
        let u = solve_unified(&s, &d, &cfg, &b, b.bounds.fp0, &tight(), None).unwrap();
        let p = &u.portfolio;
        assert!(p.check(&cfg).is_empty(), "instance {k}: {:?}", p.check(&cfg));
        assert!(close(p.cvar_value, u.solution.objective, 1e-8), "instance {k}");
        let l = &u.formulation.layout;
        let read: f64 = (0..l.n)
            .flat_map(|i| (0..l.n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| d.get(i, j) * u.solution.values[l.z_off_index(i, j).unwrap()])
            .sum();
        assert!(p.fp_value <= read + 1e-8, "instance {k}: {} > {read}", p.fp_value);
        assert!(p.fp_value <= b.bounds.fp0 + 1e-8);
        assert!(p.mean_return >= cfg.mu0 - 1e-9);
        for &j in &p.representatives {
            assert!(p.weights[j] >= 1.0 / l.n as f64 - 1e-9);
        }
    }
}

#[test]
fn bounds_and_endpoints() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for k in 0..8 {
        let Instance { s, d, cfg } = random_instance(&mut rng, 8, 3, 12);
        let b = compute_bounds(&s, &d, &cfg, &tight()).unwrap();
        assert!(b.bounds.fp_lower <= b.bounds.fp_upper + 1e-9);
        assert!(close(b.pmedian.objective, evaluate_fp(&b.pmedian_reps, &d).unwrap(), 1e-8));
        let at_upper = solve(&tight(), &build_unified(&s, &d, &cfg, b.bounds.fp_upper).unwrap());
        assert!(close(at_upper.objective, b.cvar_cc.objective, 1e-8), "instance {k}");
        let at_lower = tight().solve(&build_unified(&s, &d, &cfg, b.bounds.fp_lower).unwrap().model, None).unwrap();
        assert_eq!(at_lower.status, MilpStatus::Optimal, "instance {k}");
        let pure = solve(&tight(), &build_pure_cvar(&s, &cfg).unwrap());
        assert!(pure.objective >= b.cvar_cc.objective - 1e-8);
        assert!(b.cvar_cc.objective >= at_lower.objective - 1e-8);
    }
}

#[test]
fn two_assets_both_held_is_boxed_cvar() {
    let s = ScenarioSet::from_returns(array![[0.03, -0.01]], None).unwrap();
    let d = DistanceMatrix::from_distances(array![[0.0, 1.2], [1.2, 0.0]]);
    let cfg = ModelConfig::with_default_bounds(2, 2, 0.05, f64::NEG_INFINITY, 1.0);
    let u = solve(&tight(), &build_unified(&s, &d, &cfg, 0.0).unwrap());
    // Both assets carry at least 1/2, so x = (1/2, 1/2).
    assert!(close(u.objective, 0.01, 1e-12));
}

#[test]
fn unreachable_floor_is_reported() {
    let s = ScenarioSet::from_returns(array![[0.01, 0.02, 0.0], [0.0, 0.01, 0.02]], None).unwrap();
    let d = DistanceMatrix::from_distances(Array2::from_shape_fn((3, 3), |(i, j)| if i == j { 0.0 } else { 1.0 }));
    let cfg = ModelConfig::with_default_bounds(3, 2, 0.5, 0.5, 0.5);
    assert_eq!(compute_bounds(&s, &d, &cfg, &tight()).unwrap_err(), FormulationError::InfeasibleAtMu0(0.5));
}

#[test]
fn time_limited_bounds_still_interpolate() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let Instance { s, d, cfg } = random_instance(&mut rng, 10, 3, 12);
    let quick = pmcvar::branch_bound::BnbOptions { node_limit: Some(1), ..tight() };
    let b = compute_bounds(&s, &d, &cfg, &quick).unwrap();
    assert!(b.bounds.fp_lower <= b.bounds.fp_upper + 1e-9);
    let u = solve_unified(&s, &d, &cfg, &b, b.bounds.fp0, &quick, None).unwrap();
    assert!(u.solution.has_solution());
    assert!(u.portfolio.check(&cfg).is_empty());
}

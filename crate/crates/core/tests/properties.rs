mod common;

use common::instances::random_instance;
use common::tight;
use ndarray::Array2;
use pmcvar::backtest::{make_windows, sharpe_ratio};
use pmcvar::branch_bound::{solve_milp, solve_milp_with_progress, BnbOptions, Progress};
use pmcvar::formulations::{build_cvar_cc, build_pmedian, build_unified, compute_bounds, MilpSolver};
use pmcvar::market_data::*;
use pmcvar::model_ir::{MilpModel, MilpStatus};
use pmcvar::simplex::{cvar_primal_oracle, solve_lp, SimplexOptions};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn price_panel() -> impl Strategy<Value = PricePanel> {
    (1usize..6, 2usize..20).prop_flat_map(|(n, t)| {
        proptest::collection::vec(-0.4f64..0.4, n * (t - 1)).prop_map(move |steps| {
            let mut p = Array2::zeros((t, n));
            for j in 0..n {
                p[[0, j]] = 10.0 + j as f64;
                for k in 1..t {
                    p[[k, j]] = p[[k - 1, j]] * (1.0 + steps[(k - 1) * n + j]);
                }
            }
            let dates = (0..t).map(|k| format!("2001-01-{:02}", k + 1)).collect();
            let ids = (0..n).map(|j| format!("A{j}")).collect();
            PricePanel::new(dates, p, ids).unwrap()
        })
    })
}

fn instance_model(seed: u64) -> MilpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inst = random_instance(&mut rng, 7, 3, 8);
    match seed % 3 {
        0 => build_pmedian(&inst.s, &inst.d, &inst.cfg).unwrap().model,
        1 => build_cvar_cc(&inst.s, &inst.cfg).unwrap().model,
        _ => {
            let b = compute_bounds(&inst.s, &inst.d, &inst.cfg, &tight()).unwrap();
            build_unified(&inst.s, &inst.d, &inst.cfg, b.bounds.fp0).unwrap().model
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn distance_matrix_invariants(panel in price_panel()) {
        prop_assume!(panel.n_obs() >= 3);
        let d = correlation_distances(&log_returns(&panel).unwrap()).unwrap();
        for i in 0..d.n() {
            prop_assert_eq!(d.get(i, i), 0.0);
            prop_assert_eq!(d.rho[[i, i]], 1.0);
            for j in 0..d.n() {
                prop_assert_eq!(d.get(i, j), d.get(j, i));
                prop_assert!((0.0..=2.0).contains(&d.get(i, j)));
                prop_assert!((d.get(i, j).powi(2) - 2.0 * (1.0 - d.rho[[i, j]])).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn simple_and_log_returns_agree_to_first_order(panel in price_panel()) {
        let r = simple_returns(&panel).unwrap();
        let l = log_returns(&panel).unwrap();
        prop_assert_eq!(r.n_periods(), panel.n_obs() - 1);
        for (a, b) in r.returns.iter().zip(l.returns.iter()) {
            prop_assert!(*a > -1.0);
            if a.abs() <= 0.5 {
                prop_assert!((a - b).abs() <= a * a, "{} {}", a, b);
            }
        }
    }

    #[test]
    fn scenario_means_are_weighted_column_means(panel in price_panel(), raw in proptest::collection::vec(0.1f64..1.0, 19)) {
        let r = simple_returns(&panel).unwrap();
        let t = r.n_periods();
        let sum: f64 = raw[..t].iter().sum();
        let probs: Vec<f64> = raw[..t].iter().map(|v| v / sum).collect();
        let s = scenario_set(&r, Some(&probs)).unwrap();
        prop_assert!((s.probs.sum() - 1.0).abs() <= 1e-12);
        for j in 0..s.n_assets() {
            let want: f64 = (0..t).map(|k| probs[k] * r.returns[[k, j]]).sum();
            prop_assert!((s.mu[j] - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn csv_round_trip(panel in price_panel()) {
        let mut buf = Vec::new();
        panel.write_csv(&mut buf).unwrap();
        let back = read_prices(buf.as_slice()).unwrap();
        prop_assert_eq!(back, panel);
    }

    #[test]
    fn cvar_lies_between_worst_case_and_mean(y in proptest::collection::vec(-0.2f64..0.2, 1..40), beta in 0.01f64..1.0) {
        let t = y.len();
        let probs = vec![1.0 / t as f64; t];
        let c = cvar_primal_oracle(&y, &probs, beta).unwrap();
        let mean = y.iter().sum::<f64>() / t as f64;
        let worst = y.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(c <= mean + 1e-12 && c >= worst - 1e-12);
        let wider = cvar_primal_oracle(&y, &probs, (beta + 0.1).min(1.0)).unwrap();
        prop_assert!(wider >= c - 1e-12);
    }

    #[test]
    fn windows_partition_the_out_sample(total in 3usize..400, in_len in 2usize..120, out_len in 1usize..60) {
        match make_windows(total, in_len, out_len) {
            Err(_) => prop_assert!(total < in_len + 1),
            Ok(w) => {
                prop_assert_eq!(w[0].in_end, in_len);
                prop_assert_eq!(w.last().unwrap().out_end, total);
                for pair in w.windows(2) {
                    prop_assert_eq!(pair[0].out_end, pair[1].in_end);
                    prop_assert_eq!(pair[1].in_start - pair[0].in_start, out_len);
                }
                for x in &w {
                    prop_assert!(x.out_end > x.in_end && x.out_len() <= out_len);
                    prop_assert_eq!(x.in_end - x.in_start, in_len);
                }
            }
        }
    }

    #[test]
    fn sharpe_is_scale_invariant(y in proptest::collection::vec(-0.1f64..0.1, 2..30), k in 0.1f64..10.0) {
        if let Ok(a) = sharpe_ratio(&y, 0.0) {
            let scaled: Vec<f64> = y.iter().map(|v| v * k).collect();
            let b = sharpe_ratio(&scaled, 0.0).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn model_text_round_trip(seed in 0u64..1000) {
        let m = instance_model(seed);
        let text = m.to_text();
        let back = MilpModel::from_text(&text).unwrap();
        prop_assert_eq!(back.to_text(), text);
    }

    #[test]
    fn fixing_binaries_never_beats_the_optimum(seed in 0u64..1000, mask in any::<u32>()) {
        let m = instance_model(seed);
        let opt = solve_milp(&m, &tight()).unwrap();
        prop_assume!(opt.status == MilpStatus::Optimal);
        let bins = m.binaries();
        let assignment: Vec<(usize, bool)> = bins.iter().enumerate().map(|(k, &j)| (j, mask >> (k % 32) & 1 == 1)).collect();
        let fixed = m.fix_binaries(&assignment).unwrap();
        let (lp, _) = solve_lp(&fixed, &SimplexOptions::default(), None).unwrap();
        if lp.status == pmcvar::model_ir::LpStatus::Optimal {
            let sign = m.sense.sign();
            prop_assert!(sign * lp.objective <= sign * opt.objective + 1e-9);
        }
    }

    #[test]
    fn progress_reports_are_anytime_valid(seed in 0u64..1000) {
        let m = instance_model(seed);
        let sign = m.sense.sign();
        let mut seen: Vec<Progress> = Vec::new();
        let sol = solve_milp_with_progress(&m, &tight(), &mut |p| seen.push(p.clone())).unwrap();
        prop_assert!(seen.len() >= 2);
        let mut last_bound = f64::INFINITY;
        for p in &seen {
            if let Some(inc) = p.incumbent {
                prop_assert!(sign * inc <= sign * p.bound + 1e-9);
            }
            prop_assert!(sign * p.bound <= last_bound + 1e-9);
            last_bound = sign * p.bound;
        }
        if sol.status == MilpStatus::Optimal {
            prop_assert_eq!(seen.last().unwrap().incumbent, Some(sol.objective));
        }
    }

    #[test]
    fn solves_are_deterministic(seed in 0u64..1000) {
        let m = instance_model(seed);
        let a = solve_milp(&m, &tight()).unwrap();
        let b = solve_milp(&m, &tight()).unwrap();
        prop_assert_eq!(a.node_count, b.node_count);
        prop_assert_eq!(a.values, b.values);
    }

    #[test]
    fn warm_start_matches_cold(seed in 0u64..1000) {
        let m = instance_model(seed);
        let cold = solve_milp(&m, &tight()).unwrap();
        prop_assume!(cold.status == MilpStatus::Optimal);
        let warm = tight().solve(&m, Some(cold.values.clone())).unwrap();
        prop_assert!((warm.objective - cold.objective).abs() <= 1e-8);
        prop_assert!(warm.node_count <= cold.node_count);
        prop_assert!(warm.warnings.is_empty());
    }
}

#[test]
fn pseudo_cost_option_is_exact_on_model_instances() {
    for seed in 0..12 {
        let m = instance_model(seed);
        let a = solve_milp(&m, &tight()).unwrap();
        let opts = BnbOptions { branching: pmcvar::branch_bound::Branching::PseudoCost, ..tight() };
        let b = solve_milp(&m, &opts).unwrap();
        assert!((a.objective - b.objective).abs() <= 1e-8, "seed {seed}");
    }
}

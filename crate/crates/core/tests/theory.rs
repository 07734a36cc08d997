use aqka::allocators::{aqka_run, delta_variance, kkt_targets, AqkaConfig, SensitivityMode, SimulatedBackend};
use aqka::harness::{generate_problem, planted_rbf};
use aqka::kernelgen::{rbf_kernel, InputDist};
use aqka::krr::{krr_fit, krr_gradient, krr_sensitivity};
use aqka::numerics::{norm2, psd_project, SymMatrix};
use aqka::pairs::{n_pairs, pair_list, strip_pairs};
use aqka::rng::{derive_rng, seeded};
use aqka::shotsim::{estimate, merge, multinomial, sample_shots, AllocationPlan, ShotLedger};
use aqka::theory::{
    bound_report, cs_ratio, plugin_inflation, remainder_bound, sparse_ceiling, svm_ceiling,
    BoundOptions, BoundReport, PluginConstant,
};
use aqka::AqkaError;
use proptest::prelude::*;
use rand::Rng as _;

fn rbf(n: usize, seed: u64, gamma: f64) -> SymMatrix {
    rbf_kernel(&InputDist::StdNormal { d: 4 }.sample(n, &mut seeded(seed)), gamma).unwrap()
}

fn uniform_ledger(k: &SymMatrix, per_pair: u64, seed: u64) -> ShotLedger {
    let m = n_pairs(k.n());
    let d = sample_shots(k, &AllocationPlan::new(vec![per_pair; m]), &mut seeded(seed)).unwrap();
    merge(&ShotLedger::new(k.n()), &d)
}

#[test]
fn ceiling_matches_pair_enumeration() {
    let set: Vec<usize> = (0..10).map(|i| 3 + 17 * i).collect();
    assert_eq!(strip_pairs(225, &set).len(), 2205);
    assert!((sparse_ceiling(10, 225).unwrap() - 2205.0 / 25425.0).abs() < 1e-15);
    for n in [20usize, 100, 225, 400] {
        for m in 1..=n {
            let set: Vec<usize> = (0..m).collect();
            let c = sparse_ceiling(m, n).unwrap();
            assert_eq!(c, strip_pairs(n, &set).len() as f64 / n_pairs(n) as f64);
            let upper = 2.0 * m as f64 / (n as f64 + 1.0);
            let lower = upper - (m * m) as f64 / (n * n) as f64;
            assert!(c <= upper + 1e-15 && c >= lower - 1e-15, "m={m} n={n}");
        }
    }
    assert!(matches!(sparse_ceiling(0, 5), Err(AqkaError::InvalidInput(_))));
    assert!(matches!(sparse_ceiling(6, 5), Err(AqkaError::InvalidInput(_))));
}

#[test]
fn planted_ratio_below_sparse_ceiling() {
    for m in [5usize, 10, 20] {
        for seed in 0..2 {
            let p = generate_problem(&planted_rbf(120, m), 0.01, &mut seeded(seed)).unwrap();
            let fit = krr_fit(&p.k, &p.y, 0.01).unwrap();
            let w = krr_sensitivity(&krr_gradient(&fit), &p.k, 0.01).weights;
            let rho = cs_ratio(&w).unwrap();
            let ceil = sparse_ceiling(m, 120).unwrap();
            assert!(rho <= ceil + 1e-12, "m={m} seed={seed}: {rho} > {ceil}");
        }
    }
}

#[test]
fn psd_projection_contracts_by_at_most_two() {
    let mut rng = seeded(404);
    for trial in 0..200 {
        let n = rng.random_range(4..25);
        let k = rbf(n, trial, rng.random_range(0.05..1.0));
        let shots = rng.random_range(1..8);
        let k_hat = estimate(&uniform_ledger(&k, shots, 1000 + trial), 0.0);
        let before = k_hat.sub(&k).op_norm().unwrap();
        let after = psd_project(&k_hat, 0.0).unwrap().sub(&k).op_norm().unwrap();
        assert!(after <= 2.0 * before + 1e-12, "trial {trial}: {after} vs {before}");
    }
}

#[test]
fn remainder_uniform_closed_form() {
    let (m, b, lam, c) = (120usize, 12_000u64, 0.05, 2.5);
    let s = vec![b / m as u64; m];
    let r = remainder_bound(&s, lam, c);
    let expect = c * (m as f64).powi(4) / (lam.powi(4) * (b as f64).powi(2));
    assert!(!r.divergent);
    assert!((r.value - expect).abs() <= 1e-12 * expect);
}

#[test]
fn remainder_finite_after_exploration() {
    let p = generate_problem(&planted_rbf(40, 4), 0.01, &mut seeded(3)).unwrap();
    let m = n_pairs(40) as u64;
    let backend = SimulatedBackend::new(p.k.clone()).unwrap();
    let r = aqka_run(&backend, &p.y, &AqkaConfig::with_budget(8 * m), SensitivityMode::Estimated, &mut seeded(8)).unwrap();
    assert_eq!(r.ledger.total_shots(), 8 * m);
    let frac = r.ledger.zero_shot_fraction();
    assert!(frac < (-0.2f64 * 8.0).exp() + 0.05, "zero fraction {frac}");
    let rb = remainder_bound(&r.ledger.shots, 0.01, 1.0);
    assert_eq!(rb.zero_shot_pairs, r.ledger.zero_shot_pairs());
    assert_eq!(rb.divergent, rb.zero_shot_pairs > 0);

    let pure = multinomial(m, &vec![1.0; m as usize], &mut seeded(9)).unwrap();
    let rb = remainder_bound(&pure, 0.01, 1.0);
    assert!(rb.divergent);
    assert!(rb.value.is_infinite());
}

#[test]
fn plugin_variance_within_bound() {
    let lam = 0.05;
    for seed in 0..6u64 {
        let n = 12;
        let k = rbf(n, seed, 0.05);
        let mut rng = seeded(50 + seed);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let off: Vec<usize> = pair_list(n)
            .into_iter()
            .enumerate()
            .filter(|(_, (i, j))| i != j)
            .map(|(p, _)| p)
            .collect();
        let weights = |kk: &SymMatrix| -> Vec<f64> {
            let fit = krr_fit(kk, &y, lam).unwrap();
            let w = krr_sensitivity(&krr_gradient(&fit), kk, lam).weights;
            off.iter().map(|&p| w[p]).collect()
        };
        let a = weights(&k);
        let a_min = a.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(a_min > 0.0);
        let kappa = 1.0;
        for per_pair in [200u64, 2000, 20000] {
            let k_w = psd_project(&estimate(&uniform_ledger(&k, per_pair, seed), 0.0), 1e-6).unwrap();
            let dw = k_w.sub(&k).op_norm().unwrap();
            let a_plug = weights(&k_w);
            let budget = 1000.0 * a.len() as f64;
            let s_plug = kkt_targets(&a_plug, budget).unwrap();
            let var_plug = delta_variance(&a, &s_plug);
            let z: f64 = a.iter().map(|v| v.sqrt()).sum();
            let var_star = z * z / budget;
            let factor = plugin_inflation(dw, lam, a_min, kappa, norm2(&y), PluginConstant::Stated).unwrap();
            assert!(var_star <= var_plug * (1.0 + 1e-12));
            assert!(a_plug.iter().all(|&v| v > 0.0));
            assert!(var_plug <= var_star * factor, "seed {seed}, s={per_pair}");
        }
    }
}

#[test]
fn warmup_error_scales_as_inverse_root_budget() {
    let k = rbf(40, 9, 0.2);
    let per = [4u64, 16, 64, 256];
    let mut pts = Vec::new();
    for &s in &per {
        let mut acc = 0.0;
        for rep in 0..5 {
            let k_w = psd_project(&estimate(&uniform_ledger(&k, s, 77 + rep), 0.0), 1e-6).unwrap();
            acc += k_w.sub(&k).op_norm().unwrap();
        }
        pts.push(((s as f64).ln(), (acc / 5.0).ln()));
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((-0.65..=-0.35).contains(&slope), "slope {slope}");
}

#[test]
fn bound_report_fields_and_json() {
    let p = (0..)
        .map(|s| generate_problem(&planted_rbf(30, 4), 0.01, &mut seeded(s)).unwrap())
        .find(|p| p.y.iter().any(|&v| v > 0.0) && p.y.iter().any(|&v| v < 0.0))
        .unwrap();
    let ledger = uniform_ledger(&p.k, 10, 4);
    let opts = BoundOptions {
        svm_c: Some(1.0),
        ..Default::default()
    };
    let r = bound_report(&p.k, &p.y, &ledger, Some(4), &opts).unwrap();
    let rho = r.rho.unwrap();
    assert!(rho > 0.0 && rho <= 1.0 + 1e-12);
    assert!(rho <= r.sparse_ceiling.unwrap() + 1e-12);
    let sv = r.svm_ceiling.unwrap();
    assert!(sv > 0.0 && sv <= 1.0);
    assert_eq!(sv, svm_ceiling(r.inputs_summary.m_sv.unwrap(), 30).unwrap());
    assert!(!r.remainder_bound.divergent);
    assert!(r.plugin_inflation.unwrap() >= 1.0);
    assert_eq!(r.inputs_summary.budget, 10 * n_pairs(30) as u64);
    assert_eq!(r.inputs_summary.m_pairs, n_pairs(30));
    let back: BoundReport = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(back, r);

    let empty = bound_report(&p.k, &p.y, &ShotLedger::new(30), None, &BoundOptions::default()).unwrap();
    assert!(empty.remainder_bound.divergent);
    assert_eq!(empty.remainder_bound.zero_shot_pairs, n_pairs(30));
    assert!(empty.plugin_inflation.is_none());
    assert!(bound_report(&p.k, &p.y, &ShotLedger::new(29), None, &BoundOptions::default()).is_err());
}

#[test]
fn loose_constant_is_three_times_stated() {
    let k = rbf(10, 1, 0.5);
    let y: Vec<f64> = (0..10).map(|i| (i as f64).sin()).collect();
    let ledger = uniform_ledger(&k, 30, 1);
    let stated = bound_report(&k, &y, &ledger, None, &BoundOptions::default()).unwrap();
    let loose = bound_report(
        &k,
        &y,
        &ledger,
        None,
        &BoundOptions {
            plugin_constant: PluginConstant::Loose,
            ..Default::default()
        },
    )
    .unwrap();
    let (s, l) = (stated.plugin_inflation.unwrap() - 1.0, loose.plugin_inflation.unwrap() - 1.0);
    assert!((l / s - 3.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kkt_over_uniform_equals_ratio(a in prop::collection::vec(0.0f64..10.0, 2..300), b in 10.0f64..1e7) {
        prop_assume!(a.iter().any(|&v| v > 0.0));
        let s = kkt_targets(&a, b).unwrap();
        let m = a.len() as f64;
        let pos: Vec<(f64, f64)> = a.iter().zip(&s).filter(|(w, _)| **w > 0.0).map(|(w, t)| (*w, *t)).collect();
        let var_opt: f64 = pos.iter().map(|(w, t)| w / t).sum();
        let var_unif: f64 = a.iter().map(|w| w / (b / m)).sum();
        let rho = cs_ratio(&a).unwrap();
        prop_assert!((var_opt / var_unif - rho).abs() <= 1e-10 * rho);
        prop_assert!(rho <= 1.0 + 1e-12);
    }

    #[test]
    fn exploration_floor_bounds_remainder(
        extra in prop::collection::vec(0u64..500, 10..200),
        eta in 0.05f64..1.0,
        b_per in 1u64..50,
        lam in 0.01f64..1.0,
    ) {
        let m = extra.len() as f64;
        let b = b_per as f64 * m;
        let floor = (eta * b / m).ceil() as u64;
        let s: Vec<u64> = extra.iter().map(|e| floor.max(1) + e).collect();
        let r = remainder_bound(&s, lam, 1.0);
        let cap = m.powi(4) / (eta * eta * lam.powi(4) * b * b);
        prop_assert!(r.value <= cap * (1.0 + 1e-12));
    }

    #[test]
    fn ratio_below_svm_ceiling_for_block_weights(n in 3usize..30, k in 1usize..30, seed in any::<u64>()) {
        let k = k.min(n);
        let mut rng = seeded(seed);
        let support: Vec<usize> = rand::seq::index::sample(&mut rng, n, k).into_vec();
        let mut on = vec![false; n];
        for &i in &support {
            on[i] = true;
        }
        let w: Vec<f64> = pair_list(n)
            .into_iter()
            .map(|(i, j)| if on[i] && on[j] { rng.random::<f64>() + 1e-3 } else { 0.0 })
            .collect();
        prop_assert!(cs_ratio(&w).unwrap() <= svm_ceiling(k, n).unwrap() + 1e-12);
    }
}

#[test]
fn derived_streams_are_independent_of_call_order() {
    let a = derive_rng(&["x", "1"]).random::<u64>();
    let _ = derive_rng(&["y"]).random::<u64>();
    assert_eq!(a, derive_rng(&["x", "1"]).random::<u64>());
}

use aqka::numerics::SymMatrix;
use aqka::pairs::{n_pairs, pair_index};
use aqka::rng::seeded;
use aqka::shotsim::{
    estimate, merge, multinomial, read_ledger_csv, sample_shots, write_ledger_csv,
    AllocationPlan, ShotLedger,
};
use proptest::prelude::*;

fn kernel3() -> SymMatrix {
    SymMatrix::from_rows(&[
        vec![1.0, 0.3, 0.0],
        vec![0.3, 1.0, 0.7],
        vec![0.0, 0.7, 1.0],
    ])
    .unwrap()
}

#[test]
fn degenerate_probabilities() {
    let k = kernel3();
    let plan = AllocationPlan::new(vec![50; 6]);
    let d = sample_shots(&k, &plan, &mut seeded(1)).unwrap();
    assert_eq!(d.successes[pair_index(3, 0, 2)], 0);
    assert_eq!(d.successes[pair_index(3, 1, 1)], 50);
    assert!(d.is_valid());
}

#[test]
fn half_probability_mean_and_batch_variance() {
    let k = SymMatrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
    let p = pair_index(2, 0, 1);
    let mut rng = seeded(7);
    let (batches, per) = (1000u64, 1000u64);
    let mut means = Vec::new();
    for _ in 0..batches {
        let mut deltas = vec![0; 3];
        deltas[p] = per;
        let d = sample_shots(&k, &AllocationPlan::new(deltas), &mut rng).unwrap();
        means.push(d.successes[p] as f64 / per as f64);
    }
    let mu = means.iter().sum::<f64>() / batches as f64;
    assert!((mu - 0.5).abs() < 0.002);
    let var = means.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / (batches - 1) as f64;
    let expect = 0.25 / per as f64;
    assert!((var / expect - 1.0).abs() < 0.1, "batch variance ratio {}", var / expect);
}

#[test]
fn estimate_examples() {
    let empty = ShotLedger::new(4);
    assert_eq!(estimate(&empty, 0.0), SymMatrix::zeros(4));
    let full = ShotLedger {
        n: 2,
        shots: vec![5, 3, 9],
        successes: vec![5, 3, 9],
    };
    assert_eq!(estimate(&full, 0.0).max_abs(), 1.0);
    assert!(estimate(&full, 0.0).as_slice().iter().all(|&v| v == 1.0));
}

#[test]
fn unbiased_and_variance_over_repetitions() {
    let k = kernel3();
    let mut rng = seeded(21);
    let reps = 10_000;
    let plan = AllocationPlan::new(vec![3, 5, 2, 4, 1, 6]);
    let mut sum = [0.0; 6];
    for _ in 0..reps {
        let e = estimate(&sample_shots(&k, &plan, &mut rng).unwrap(), 0.0);
        for (p, (i, j)) in aqka::pairs::pair_list(3).into_iter().enumerate() {
            sum[p] += e.get(i, j);
        }
    }
    for (p, (i, j)) in aqka::pairs::pair_list(3).into_iter().enumerate() {
        let kp = k.get(i, j);
        let se = (kp * (1.0 - kp) / plan.deltas[p] as f64 / reps as f64).sqrt();
        let mean = sum[p] / reps as f64;
        assert!((mean - kp).abs() <= 3.0 * se + 1e-15, "pair {p}: {mean} vs {kp}");
    }

    let k = SymMatrix::from_rows(&[vec![1.0, 0.3], vec![0.3, 1.0]]).unwrap();
    let mut vals = Vec::with_capacity(reps);
    for _ in 0..reps {
        let d = sample_shots(&k, &AllocationPlan::new(vec![0, 100, 0]), &mut rng).unwrap();
        vals.push(d.successes[1] as f64 / 100.0);
    }
    let mu = vals.iter().sum::<f64>() / reps as f64;
    let var = vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (reps - 1) as f64;
    assert!((var / (0.21 / 100.0) - 1.0).abs() < 0.1);
}

// Binomial counts against the sum of individual Bernoulli draws: both are
// compared to the exact Binomial(5, 0.3) pmf by a chi-square statistic.
#[test]
fn binomial_counts_pass_chi_square() {
    use rand::Rng as _;
    let k = SymMatrix::from_rows(&[vec![1.0, 0.3], vec![0.3, 1.0]]).unwrap();
    let mut rng = seeded(33);
    let reps = 20_000;
    let mut hist = [0u64; 6];
    let mut bern = [0u64; 6];
    for _ in 0..reps {
        let d = sample_shots(&k, &AllocationPlan::new(vec![0, 5, 0]), &mut rng).unwrap();
        hist[d.successes[1] as usize] += 1;
        let c = (0..5).filter(|_| rng.random::<f64>() < 0.3).count();
        bern[c] += 1;
    }
    let pmf: Vec<f64> = (0..6)
        .map(|c| {
            let binom = [1.0, 5.0, 10.0, 10.0, 5.0, 1.0][c];
            binom * 0.3f64.powi(c as i32) * 0.7f64.powi(5 - c as i32)
        })
        .collect();
    let chi = |h: &[u64; 6]| -> f64 {
        h.iter()
            .zip(&pmf)
            .map(|(&o, &p)| {
                let e = p * reps as f64;
                (o as f64 - e).powi(2) / e
            })
            .sum()
    };
    // 5 degrees of freedom, 0.999 quantile.
    assert!(chi(&hist) < 20.52, "chi-square {}", chi(&hist));
    assert!(chi(&bern) < 20.52);
}

#[test]
fn multinomial_one_hot_and_uniform_zero_fraction() {
    let mut w = vec![0.0; 30];
    w[7] = 2.5;
    let d = multinomial(500, &w, &mut seeded(2)).unwrap();
    assert_eq!(d[7], 500);
    assert_eq!(d.iter().sum::<u64>(), 500);
    assert!(multinomial(5, &[1.0, -1.0], &mut seeded(2)).is_err());
}

#[test]
fn ledger_round_trip() {
    let l = ShotLedger {
        n: 3,
        shots: vec![1, 2, 3, 4, 5, 6],
        successes: vec![0, 1, 2, 3, 4, 5],
    };
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("l.csv");
    write_ledger_csv(&p, &l).unwrap();
    assert_eq!(read_ledger_csv(&p, 3).unwrap(), l);
}

fn ledger_strategy(n: usize) -> impl Strategy<Value = ShotLedger> {
    let m = n_pairs(n);
    prop::collection::vec((0u64..50, 0u64..=100), m).prop_map(move |v| ShotLedger {
        n,
        shots: v.iter().map(|(s, _)| *s).collect(),
        successes: v.iter().map(|(s, f)| s * f / 100).collect(),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn merge_commutes_and_adds(a in ledger_strategy(5), b in ledger_strategy(5)) {
        let ab = merge(&a, &b);
        prop_assert_eq!(&ab, &merge(&b, &a));
        prop_assert_eq!(ab.total_shots(), a.total_shots() + b.total_shots());
        prop_assert!(ab.is_valid());
        prop_assert_eq!(merge(&a, &ShotLedger::new(5)), a.clone());
        let summed = ShotLedger {
            n: 5,
            shots: a.shots.iter().zip(&b.shots).map(|(x, y)| x + y).collect(),
            successes: a.successes.iter().zip(&b.successes).map(|(x, y)| x + y).collect(),
        };
        prop_assert_eq!(estimate(&ab, 0.0), estimate(&summed, 0.0));
    }

    #[test]
    fn rounds_accumulate_budget(budgets in prop::collection::vec(0u64..400, 1..6), seed in any::<u64>()) {
        let k = kernel3();
        let mut rng = seeded(seed);
        let mut ledger = ShotLedger::new(3);
        for &b in &budgets {
            let d = multinomial(b, &[1.0; 6], &mut rng).unwrap();
            ledger = merge(&ledger, &sample_shots(&k, &AllocationPlan::new(d), &mut rng).unwrap());
        }
        prop_assert_eq!(ledger.total_shots(), budgets.iter().sum::<u64>());
    }
}

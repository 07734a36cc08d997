//! Landmark allocators with Nyström completion of the unmeasured entries.

use nalgebra::DMatrix;
use rand::seq::index::sample_weighted;
use serde::{Deserialize, Serialize};

use crate::error::{AqkaError, Result};
use crate::krr::{krr_fit, krr_gradient, leverage_scores};
use crate::numerics::{psd_project, SymMatrix};
use crate::pairs::{n_pairs, pair_list, strip_pairs};
use crate::rng::Rng;
use crate::shotsim::{estimate, merge, AllocationPlan, ShotLedger};

use super::aqka::apply_floor;
use super::{
    random_subset, round_frac, spread_uniform, target_fill_over, uniform_draws, warmup_plan,
    AllocatorResult, AqkaConfig, ShotBackend, TargetMode, VarianceSource,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandmarkMode {
    Random,
    /// Sampled without replacement ∝ ridge leverage of a warm-up estimate.
    Leverage,
    /// Top rows by `Σ_j |g_ij|` of a warm-up estimate.
    SensitivityRows,
}

/// Replaces entries with neither index in `landmarks` by
/// `K̂_NL (K̂_LL + λI)⁻¹ K̂_LN`; entries touching a landmark are kept.
pub fn nystrom_reconstruct(k_hat: &SymMatrix, landmarks: &[usize], ridge: f64) -> Result<SymMatrix> {
    let n = k_hat.n();
    if landmarks.is_empty() || landmarks.iter().any(|&l| l >= n) {
        return Err(AqkaError::invalid("landmarks must be a non-empty subset of 0..N"));
    }
    let ml = landmarks.len();
    let mut is_l = vec![false; n];
    for &l in landmarks {
        is_l[l] = true;
    }
    if is_l.iter().all(|&b| b) {
        return Ok(k_hat.clone());
    }
    let knl = DMatrix::from_fn(n, ml, |i, a| k_hat.get(i, landmarks[a]));
    let kll = DMatrix::from_fn(ml, ml, |a, b| {
        k_hat.get(landmarks[a], landmarks[b]) + if a == b { ridge } else { 0.0 }
    });
    let lu = kll.lu();
    let sol = lu
        .solve(&knl.transpose())
        .ok_or_else(|| AqkaError::NotPositiveDefinite("landmark block is singular".into()))?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(AqkaError::NotPositiveDefinite("landmark block is singular".into()));
    }
    let rec = &knl * sol;
    Ok(SymMatrix::from_fn(n, |i, j| {
        if is_l[i] || is_l[j] {
            k_hat.get(i, j)
        } else {
            0.5 * (rec[(i, j)] + rec[(j, i)])
        }
    }))
}

/// Row sums `r_i = Σ_j |g_ij|` of a pair-indexed field.
pub fn row_sums(n: usize, g: &[f64]) -> Vec<f64> {
    let mut r = vec![0.0; n];
    for ((i, j), v) in pair_list(n).into_iter().zip(g) {
        r[i] += v.abs();
        if i != j {
            r[j] += v.abs();
        }
    }
    r
}

/// Indices of the `k` largest values; ties go to the lower index.
pub fn top_k(v: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    let mut out: Vec<usize> = order.into_iter().take(k).collect();
    out.sort_unstable();
    out
}

fn check_landmarks(n: usize, ml: usize) -> Result<()> {
    if ml == 0 || ml > n {
        return Err(AqkaError::invalid(format!("m_l = {ml} not in [1, {n}]")));
    }
    Ok(())
}

/// Spreads the budget over pairs touching `m_ℓ` landmarks and completes the
/// rest by Nyström reconstruction. Leverage and sensitivity landmark modes
/// spend `cfg.warm_frac` of the budget on a uniform warm-up first.
pub fn alloc_nystrom(
    backend: &dyn ShotBackend,
    y: &[f64],
    budget: u64,
    ml: usize,
    mode: LandmarkMode,
    cfg: &AqkaConfig,
    rng: &mut Rng,
) -> Result<AllocatorResult> {
    let n = backend.n();
    check_landmarks(n, ml)?;
    let m = n_pairs(n);
    let all: Vec<usize> = (0..m).collect();
    let mut ledger = ShotLedger::new(n);
    let mut plans = Vec::new();
    let mut spent = 0;
    let landmarks = match mode {
        LandmarkMode::Random => random_subset(n, ml, rng),
        LandmarkMode::Leverage | LandmarkMode::SensitivityRows => {
            let warm = round_frac(budget, cfg.warm_frac);
            let wplan = warmup_plan(cfg.warmup, warm, &all, m, rng);
            ledger = merge(&ledger, &backend.sample(&wplan, rng)?);
            plans.push(wplan);
            spent = warm;
            let k_psd = psd_project(&estimate(&ledger, cfg.placeholder), cfg.eig_floor)?;
            if mode == LandmarkMode::Leverage {
                let lev = leverage_scores(&k_psd, cfg.ridge)?;
                let mut v = sample_weighted(rng, n, |i| lev[i].max(1e-300), ml)
                    .map_err(|e| AqkaError::invalid(e.to_string()))?
                    .into_vec();
                v.sort_unstable();
                v
            } else {
                let g = krr_gradient(&krr_fit(&k_psd, y, cfg.ridge)?);
                top_k(&row_sums(n, &g), ml)
            }
        }
    };
    let strip = strip_pairs(n, &landmarks);
    let plan = AllocationPlan::new(spread_uniform(budget - spent, &strip, m));
    ledger = merge(&ledger, &backend.sample(&plan, rng)?);
    plans.push(plan);
    let final_estimate = nystrom_reconstruct(&estimate(&ledger, cfg.placeholder), &landmarks, cfg.ridge)?;
    let tag = match mode {
        LandmarkMode::Random => "nystrom",
        LandmarkMode::Leverage => "nystrom-leverage",
        LandmarkMode::SensitivityRows => "nystrom-sens",
    };
    Ok(AllocatorResult {
        final_estimate,
        ledger,
        per_round_plans: plans,
        method_tag: format!("{tag}@{ml}"),
        fallback_rounds: 0,
        landmarks: Some(landmarks),
    })
}

/// Warm-up, landmarks from gradient row sums, sensitivity-weighted fill with
/// exploration inside the landmark strip, then Nyström completion.
pub fn alloc_hybrid(
    backend: &dyn ShotBackend,
    y: &[f64],
    budget: u64,
    ml: usize,
    cfg: &AqkaConfig,
    rng: &mut Rng,
) -> Result<AllocatorResult> {
    cfg.validate()?;
    let n = backend.n();
    check_landmarks(n, ml)?;
    let m = n_pairs(n);
    let all: Vec<usize> = (0..m).collect();
    let warm = round_frac(budget, cfg.warm_frac);
    let wplan = warmup_plan(cfg.warmup, warm, &all, m, rng);
    let mut ledger = merge(&ShotLedger::new(n), &backend.sample(&wplan, rng)?);

    let k_hat = estimate(&ledger, cfg.placeholder);
    let k_psd = psd_project(&k_hat, cfg.eig_floor)?;
    let g = krr_gradient(&krr_fit(&k_psd, y, cfg.ridge)?);
    let rows = row_sums(n, &g);
    let mut fallback_rounds = 0;
    let landmarks = if rows.iter().all(|&r| r == 0.0) {
        fallback_rounds = 1;
        random_subset(n, ml, rng)
    } else {
        top_k(&rows, ml)
    };
    let strip = strip_pairs(n, &landmarks);

    let var_src = match cfg.variance_source {
        VarianceSource::Projected => &k_psd,
        VarianceSource::Raw => &k_hat,
    };
    let mut scores: Vec<f64> = pair_list(n)
        .into_iter()
        .zip(&g)
        .map(|((i, j), gv)| {
            let k = var_src.get(i, j).clamp(0.0, 1.0);
            gv.abs() * (k * (1.0 - k)).sqrt()
        })
        .collect();
    let rest = budget - warm;
    let explore = round_frac(rest, cfg.explore_frac);
    let exploit = rest - explore;
    let fill = if apply_floor(&mut scores, &strip, cfg.sens_floor_frac) {
        let scale = match cfg.target_mode {
            TargetMode::Cumulative => budget as f64,
            TargetMode::PerRound => rest as f64,
        };
        let z: f64 = scores.iter().sum();
        let s_star: Vec<f64> = scores.iter().map(|v| scale * v / z).collect();
        target_fill_over(&s_star, &ledger.shots, exploit, &strip)?
    } else {
        fallback_rounds += 1;
        AllocationPlan::new(spread_uniform(exploit, &strip, m))
    };
    let plan = fill.combine(&uniform_draws(explore, &strip, m, rng));
    ledger = merge(&ledger, &backend.sample(&plan, rng)?);
    let final_estimate = nystrom_reconstruct(&estimate(&ledger, cfg.placeholder), &landmarks, cfg.ridge)?;
    Ok(AllocatorResult {
        final_estimate,
        ledger,
        per_round_plans: vec![wplan, plan],
        method_tag: format!("hybrid@{ml}"),
        fallback_rounds,
        landmarks: Some(landmarks),
    })
}

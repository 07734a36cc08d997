//! The adaptive acquisition loop: warm-up, then rounds of
//! estimate → project → fit → score → fill + explore → sample.

use crate::error::{AqkaError, Result};
use crate::kernelgen::sign;
use crate::krr::{krr_fit, krr_gradient, leverage_scores};
use crate::numerics::{psd_project, SymMatrix};
use crate::pairs::{n_pairs, pair_list};
use crate::rng::Rng;
use crate::shotsim::{estimate_with_diagonal, merge, multinomial, AllocationPlan, ShotLedger};
use crate::svm::{svm_dual_solve, svm_envelope_gradient};

use super::{
    active_pairs, round_frac, spread_uniform, target_fill_over, uniform_draws, warmup_plan,
    AllocatorResult, AqkaConfig, FillRule, SensitivityMode, ShotBackend, TargetMode,
    VarianceSource,
};

/// Per-pair allocation scores `|g_p|·√(K_p(1−K_p))` (or the mode's analogue)
/// before flooring. `k_hat` is the raw estimate and `k_psd` its projection.
pub fn pair_scores(
    mode: SensitivityMode,
    k_hat: &SymMatrix,
    k_psd: &SymMatrix,
    exact: Option<&SymMatrix>,
    y: &[f64],
    cfg: &AqkaConfig,
) -> Result<Vec<f64>> {
    let n = k_hat.n();
    let var_src = match (mode, cfg.variance_source) {
        (SensitivityMode::Oracle, _) => exact.ok_or_else(|| {
            AqkaError::invalid("oracle sensitivity needs a backend with a known kernel")
        })?,
        (_, VarianceSource::Projected) => k_psd,
        (_, VarianceSource::Raw) => k_hat,
    };
    let weight: Vec<f64> = match mode {
        SensitivityMode::Estimated => krr_gradient(&krr_fit(k_psd, y, cfg.ridge)?)
            .into_iter()
            .map(f64::abs)
            .collect(),
        SensitivityMode::Oracle => krr_gradient(&krr_fit(var_src, y, cfg.ridge)?)
            .into_iter()
            .map(f64::abs)
            .collect(),
        SensitivityMode::Leverage => {
            let l = leverage_scores(k_psd, cfg.ridge)?;
            pair_list(n).into_iter().map(|(i, j)| l[i] + l[j]).collect()
        }
        SensitivityMode::Svm => {
            let labels: Vec<f64> = y.iter().map(|&v| sign(v)).collect();
            if !(labels.contains(&1.0) && labels.contains(&-1.0)) {
                return Err(AqkaError::DegenerateWeights);
            }
            let fit = match svm_dual_solve(k_psd, &labels, cfg.svm_c) {
                Ok(f) => f,
                Err(AqkaError::ConvergenceFailure { best, .. }) => *best,
                Err(e) => return Err(e),
            };
            svm_envelope_gradient(&fit, &labels)
                .into_iter()
                .map(f64::abs)
                .collect()
        }
        SensitivityMode::BernoulliOnly => vec![1.0; n_pairs(n)],
    };
    Ok(pair_list(n)
        .into_iter()
        .zip(weight)
        .map(|((i, j), w)| {
            let k = var_src.get(i, j).clamp(0.0, 1.0);
            w * (k * (1.0 - k)).sqrt()
        })
        .collect())
}

const ZERO_SCORE_REL: f64 = 1e-10;

/// Raises positive scores on `active` to at least `frac·max`. Scores at or
/// below `1e-10·max` count as zero and are cleared, as are scores off
/// `active`. Returns `false` when every active score is zero.
pub fn apply_floor(scores: &mut [f64], active: &[usize], frac: f64) -> bool {
    let mx = active.iter().fold(0.0f64, |m, &p| m.max(scores[p]));
    if !(mx > 0.0) || !mx.is_finite() {
        return false;
    }
    let lo = frac * mx;
    let mut keep = vec![false; scores.len()];
    for &p in active {
        keep[p] = true;
        scores[p] = if scores[p] > ZERO_SCORE_REL * mx {
            scores[p].max(lo)
        } else {
            0.0
        };
    }
    for (p, s) in scores.iter_mut().enumerate() {
        if !keep[p] {
            *s = 0.0;
        }
    }
    true
}

/// Full adaptive run against `backend` with regression targets `y`.
pub fn aqka_run(
    backend: &dyn ShotBackend,
    y: &[f64],
    cfg: &AqkaConfig,
    mode: SensitivityMode,
    rng: &mut Rng,
) -> Result<AllocatorResult> {
    cfg.validate()?;
    let n = backend.n();
    if y.len() != n {
        return Err(AqkaError::invalid("target length does not match backend"));
    }
    let m = n_pairs(n);
    let active = active_pairs(n, cfg.known_diagonal);
    let budget = cfg.budget;

    let warm = round_frac(budget, cfg.warm_frac);
    let wplan = warmup_plan(cfg.warmup, warm, &active, m, rng);
    let mut ledger = merge(&ShotLedger::new(n), &backend.sample(&wplan, rng)?);
    let mut plans = vec![wplan];

    let rest = budget - warm;
    let t_rounds = cfg.rounds as u64;
    let mut spent = warm;
    let mut fallback_rounds = 0;
    for t in 0..t_rounds {
        let b_t = rest / t_rounds + u64::from(t < rest % t_rounds);
        let k_hat = estimate_with_diagonal(&ledger, cfg.placeholder, cfg.known_diagonal);
        let k_psd = psd_project(&k_hat, cfg.eig_floor)?;
        let scores = match pair_scores(mode, &k_hat, &k_psd, backend.exact(), y, cfg) {
            Ok(s) => Some(s),
            Err(AqkaError::NotPositiveDefinite(_) | AqkaError::DegenerateWeights) => None,
            Err(e) => return Err(e),
        };
        let scores = scores.and_then(|mut s| {
            apply_floor(&mut s, &active, cfg.sens_floor_frac).then_some(s)
        });

        let explore = round_frac(b_t, cfg.explore_frac);
        let exploit = b_t - explore;
        let fill = match scores {
            None => {
                fallback_rounds += 1;
                AllocationPlan::new(spread_uniform(exploit, &active, m))
            }
            Some(s) => match cfg.fill_rule {
                FillRule::TargetFill => {
                    let scale = match cfg.target_mode {
                        TargetMode::Cumulative => (spent + b_t) as f64,
                        TargetMode::PerRound => b_t as f64,
                    };
                    let z: f64 = s.iter().sum();
                    let s_star: Vec<f64> = s.iter().map(|v| scale * v / z).collect();
                    target_fill_over(&s_star, &ledger.shots, exploit, &active)?
                }
                FillRule::Multinomial => AllocationPlan::new(multinomial(exploit, &s, rng)?),
            },
        };
        let plan = fill.combine(&uniform_draws(explore, &active, m, rng));
        ledger = merge(&ledger, &backend.sample(&plan, rng)?);
        plans.push(plan);
        spent += b_t;
    }

    Ok(AllocatorResult {
        final_estimate: estimate_with_diagonal(&ledger, cfg.placeholder, cfg.known_diagonal),
        ledger,
        per_round_plans: plans,
        method_tag: format!("aqka-{}", mode_tag(mode, cfg.fill_rule)),
        fallback_rounds,
        landmarks: None,
    })
}

fn mode_tag(mode: SensitivityMode, fill: FillRule) -> String {
    let m = match mode {
        SensitivityMode::Estimated => "est",
        SensitivityMode::Oracle => "oracle",
        SensitivityMode::Leverage => "leverage",
        SensitivityMode::Svm => "svm",
        SensitivityMode::BernoulliOnly => "bernoulli",
    };
    match fill {
        FillRule::TargetFill => format!("target-{m}"),
        FillRule::Multinomial => format!("multinomial-{m}"),
    }
}

//! Shot allocation: KKT targets, target-fill, baselines, the adaptive round
//! loop and the Nyström-based allocators.

mod aqka;
mod nystrom;

pub use aqka::{apply_floor, aqka_run, pair_scores};
pub use nystrom::{alloc_hybrid, alloc_nystrom, nystrom_reconstruct, row_sums, top_k, LandmarkMode};

use rand::seq::index::sample as sample_indices;
use serde::{Deserialize, Serialize};

use crate::error::{AqkaError, Result};
use crate::krr::krr_fit;
use crate::numerics::{psd_project, SymMatrix};
use crate::pairs::{block_pairs, n_pairs, pair_list};
use crate::rng::Rng;
use crate::shotsim::{
    estimate, merge, multinomial, pair_probabilities, sample_with_probs, AllocationPlan,
    LedgerDelta, ShotLedger,
};

/// Source of shots for a fixed ground-truth kernel.
pub trait ShotBackend {
    fn n(&self) -> usize;
    fn sample(&self, plan: &AllocationPlan, rng: &mut Rng) -> Result<LedgerDelta>;
    /// The noiseless kernel, when the backend knows it (oracle mode needs it).
    fn exact(&self) -> Option<&SymMatrix>;
}

/// Binomial shot simulation over a stored kernel.
#[derive(Debug, Clone)]
pub struct SimulatedBackend {
    k: SymMatrix,
    probs: Vec<f64>,
}

impl SimulatedBackend {
    pub fn new(k: SymMatrix) -> Result<Self> {
        let probs = pair_probabilities(&k)?;
        Ok(SimulatedBackend { k, probs })
    }
}

impl ShotBackend for SimulatedBackend {
    fn n(&self) -> usize {
        self.k.n()
    }

    fn sample(&self, plan: &AllocationPlan, rng: &mut Rng) -> Result<LedgerDelta> {
        sample_with_probs(self.k.n(), &self.probs, plan, rng)
    }

    fn exact(&self) -> Option<&SymMatrix> {
        Some(&self.k)
    }
}

/// How exploitation targets are scaled each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Targets are intended totals for all shots spent so far plus this round.
    #[default]
    Cumulative,
    /// Targets are scaled by the round budget alone.
    PerRound,
}

/// Which estimate supplies the Bernoulli variance factor `K̂(1−K̂)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VarianceSource {
    /// The PSD-projected estimate, clipped to [0, 1].
    #[default]
    Projected,
    /// The raw ratio estimate, so unsampled pairs contribute zero.
    Raw,
}

/// How the exploitation share of a round is turned into integer shots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FillRule {
    /// Deterministic top-up toward the targets.
    #[default]
    TargetFill,
    /// Categorical draws with probabilities ∝ score.
    Multinomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WarmupMode {
    /// Pair-shots drawn uniformly with replacement.
    #[default]
    Multinomial,
    /// Equal shots per pair with the residue spread evenly.
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AqkaConfig {
    pub budget: u64,
    pub rounds: usize,
    pub warm_frac: f64,
    pub explore_frac: f64,
    pub ridge: f64,
    pub sens_floor_frac: f64,
    pub placeholder: f64,
    pub known_diagonal: bool,
    pub eig_floor: f64,
    pub target_mode: TargetMode,
    pub variance_source: VarianceSource,
    pub fill_rule: FillRule,
    pub warmup: WarmupMode,
    /// Box constraint for SVM-driven sensitivity.
    pub svm_c: f64,
}

impl Default for AqkaConfig {
    fn default() -> Self {
        AqkaConfig {
            budget: 10_000,
            rounds: 4,
            warm_frac: 0.2,
            explore_frac: 0.2,
            ridge: 0.01,
            sens_floor_frac: 0.05,
            placeholder: 0.0,
            known_diagonal: false,
            eig_floor: 1e-6,
            target_mode: TargetMode::Cumulative,
            variance_source: VarianceSource::Projected,
            fill_rule: FillRule::TargetFill,
            warmup: WarmupMode::Multinomial,
            svm_c: 1.0,
        }
    }
}

impl AqkaConfig {
    pub fn with_budget(budget: u64) -> Self {
        AqkaConfig {
            budget,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget < 1 {
            return Err(AqkaError::invalid("budget must be at least 1"));
        }
        if self.rounds < 1 {
            return Err(AqkaError::invalid("rounds must be at least 1"));
        }
        if !(self.warm_frac > 0.0 && self.warm_frac < 1.0) {
            return Err(AqkaError::invalid("warm_frac must lie in (0, 1)"));
        }
        if !(self.explore_frac >= 0.0 && self.explore_frac <= 1.0) {
            return Err(AqkaError::invalid("explore_frac must lie in [0, 1]"));
        }
        if !(self.ridge > 0.0) {
            return Err(AqkaError::invalid("ridge must be positive"));
        }
        if !(self.sens_floor_frac >= 0.0 && self.sens_floor_frac <= 1.0) {
            return Err(AqkaError::invalid("sens_floor_frac must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Where the sensitivity used for allocation comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivityMode {
    /// KRR gradient from the PSD-projected running estimate.
    Estimated,
    /// KRR gradient and variance from the exact kernel.
    Oracle,
    /// `(ℓ_i + ℓ_j)` ridge leverage in place of `|g|`.
    Leverage,
    /// SVM envelope gradient from the running estimate.
    Svm,
    /// Constant gradient; only the Bernoulli variance shapes the targets.
    BernoulliOnly,
}

#[derive(Debug, Clone)]
pub struct AllocatorResult {
    pub final_estimate: SymMatrix,
    pub ledger: ShotLedger,
    pub per_round_plans: Vec<AllocationPlan>,
    pub method_tag: String,
    /// Rounds whose sensitivity was degenerate and fell back to uniform.
    pub fallback_rounds: usize,
    pub landmarks: Option<Vec<usize>>,
}

/// `s*_p = (B/Z)√a_p` with `Z = Σ√a`.
pub fn kkt_targets(a: &[f64], budget: f64) -> Result<Vec<f64>> {
    if a.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(AqkaError::invalid("weights must be finite and non-negative"));
    }
    let z: f64 = a.iter().map(|v| v.sqrt()).sum();
    if !(z > 0.0) {
        return Err(AqkaError::DegenerateWeights);
    }
    Ok(a.iter().map(|v| budget * v.sqrt() / z).collect())
}

/// Delta-method variance `Σ a_p/s_p`; pairs with zero weight are skipped and
/// a positive weight on a zero allocation gives infinity.
pub fn delta_variance(a: &[f64], s: &[f64]) -> f64 {
    a.iter()
        .zip(s)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, s)| if *s > 0.0 { w / s } else { f64::INFINITY })
        .sum()
}

/// Rounds non-negative reals summing to `total` into integers with the same
/// sum. Leftover units go to the largest fractional parts, ties to the lower
/// index.
pub fn largest_remainder(x: &[f64], total: u64) -> Vec<u64> {
    let mut out: Vec<u64> = x.iter().map(|v| v.max(0.0).floor() as u64).collect();
    let mut assigned: u64 = out.iter().sum();
    let frac = |k: usize| x[k].max(0.0) - x[k].max(0.0).floor();
    if assigned < total {
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.sort_by(|&a, &b| frac(b).total_cmp(&frac(a)).then(a.cmp(&b)));
        let need = (total - assigned) as usize;
        for k in 0..need {
            out[order[k % order.len()]] += 1;
        }
    } else if assigned > total {
        // Only reachable through floating-point excess in the input.
        let mut order: Vec<usize> = (0..x.len()).filter(|&k| out[k] > 0).collect();
        order.sort_by(|&a, &b| frac(a).total_cmp(&frac(b)).then(b.cmp(&a)));
        for &k in order.iter().cycle() {
            if assigned == total {
                break;
            }
            if out[k] > 0 {
                out[k] -= 1;
                assigned -= 1;
            }
        }
    }
    out
}

/// `floor(total/|over|)` on each listed pair plus the residue placed on
/// evenly strided entries of `over`.
pub fn spread_uniform(total: u64, over: &[usize], m: usize) -> Vec<u64> {
    let mut out = vec![0u64; m];
    if over.is_empty() || total == 0 {
        return out;
    }
    let len = over.len() as u64;
    let base = total / len;
    let r = total % len;
    for &p in over {
        out[p] = base;
    }
    for k in 0..r {
        out[over[(k * len / r) as usize]] += 1;
    }
    out
}

/// Uniform spread of `total` shots over `m` pairs.
pub fn alloc_uniform(m: usize, total: u64) -> AllocationPlan {
    let all: Vec<usize> = (0..m).collect();
    AllocationPlan::new(spread_uniform(total, &all, m))
}

/// `total` pair-shots drawn uniformly with replacement.
pub fn alloc_random(m: usize, total: u64, rng: &mut Rng) -> AllocationPlan {
    AllocationPlan::new(multinomial(total, &vec![1.0; m], rng).expect("uniform weights are valid"))
}

/// `total` categorical draws with probabilities ∝ `scores`.
pub fn alloc_multinomial(scores: &[f64], total: u64, rng: &mut Rng) -> Result<AllocationPlan> {
    if scores.iter().any(|s| *s < 0.0) {
        return Err(AqkaError::invalid("scores must be non-negative"));
    }
    Ok(AllocationPlan::new(multinomial(total, scores, rng)?))
}

/// Target-fill toward `s* ∝ √(K̂(1−K̂))` from zero shots.
pub fn alloc_bernoulli_only(k_hat: &SymMatrix, total: u64) -> Result<AllocationPlan> {
    let scores: Vec<f64> = pair_list(k_hat.n())
        .into_iter()
        .map(|(i, j)| {
            let k = k_hat.get(i, j).clamp(0.0, 1.0);
            (k * (1.0 - k)).sqrt()
        })
        .collect();
    let m = scores.len();
    match kkt_targets(&scores.iter().map(|s| s * s).collect::<Vec<_>>(), total as f64) {
        Ok(t) => target_fill(&t, &vec![0; m], total),
        Err(AqkaError::DegenerateWeights) => Ok(alloc_uniform(m, total)),
        Err(e) => Err(e),
    }
}

/// Allocates `round_budget` ∝ `max(0, s*_p − s_p)` with largest-remainder
/// rounding; with no deficits the budget is spread uniformly.
pub fn target_fill(s_star: &[f64], current: &[u64], round_budget: u64) -> Result<AllocationPlan> {
    let all: Vec<usize> = (0..s_star.len()).collect();
    target_fill_over(s_star, current, round_budget, &all)
}

pub(crate) fn target_fill_over(
    s_star: &[f64],
    current: &[u64],
    round_budget: u64,
    active: &[usize],
) -> Result<AllocationPlan> {
    if s_star.len() != current.len() {
        return Err(AqkaError::invalid("target and shot vectors differ in length"));
    }
    let m = s_star.len();
    let mut deficit = vec![0.0; m];
    let mut total = 0.0;
    for &p in active {
        let d = (s_star[p] - current[p] as f64).max(0.0);
        deficit[p] = d;
        total += d;
    }
    if !(total > 0.0) || !total.is_finite() {
        return Ok(AllocationPlan::new(spread_uniform(round_budget, active, m)));
    }
    let scaled: Vec<f64> = deficit
        .iter()
        .map(|d| d / total * round_budget as f64)
        .collect();
    Ok(AllocationPlan {
        deltas: largest_remainder(&scaled, round_budget),
        round_budget,
    })
}

/// Uniform warm-up over `active`.
pub(crate) fn warmup_plan(
    mode: WarmupMode,
    total: u64,
    active: &[usize],
    m: usize,
    rng: &mut Rng,
) -> AllocationPlan {
    match mode {
        WarmupMode::Balanced => AllocationPlan::new(spread_uniform(total, active, m)),
        WarmupMode::Multinomial => uniform_draws(total, active, m, rng),
    }
}

/// `total` draws uniform over `active` with replacement.
pub(crate) fn uniform_draws(total: u64, active: &[usize], m: usize, rng: &mut Rng) -> AllocationPlan {
    let mut deltas = vec![0u64; m];
    if !active.is_empty() && total > 0 {
        let d = multinomial(total, &vec![1.0; active.len()], rng).expect("uniform weights are valid");
        for (&p, v) in active.iter().zip(d) {
            deltas[p] = v;
        }
    }
    AllocationPlan::new(deltas)
}

pub(crate) fn round_frac(budget: u64, frac: f64) -> u64 {
    ((budget as f64 * frac).round() as u64).min(budget)
}

/// Two-phase support-restricted allocator: uniform warm-up, support
/// `{i : |α̂_i| > τ max|α̂|}` from a KRR fit, then the remainder spread
/// uniformly over support×support pairs.
pub fn alloc_shofar(
    backend: &dyn ShotBackend,
    y: &[f64],
    budget: u64,
    tau: f64,
    cfg: &AqkaConfig,
    rng: &mut Rng,
) -> Result<AllocatorResult> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(AqkaError::invalid("tau must lie in (0, 1)"));
    }
    let n = backend.n();
    let m = n_pairs(n);
    let all: Vec<usize> = (0..m).collect();
    let warm = round_frac(budget, cfg.warm_frac);
    let wplan = warmup_plan(cfg.warmup, warm, &all, m, rng);
    let mut ledger = merge(&ShotLedger::new(n), &backend.sample(&wplan, rng)?);
    let khat = psd_project(&estimate(&ledger, cfg.placeholder), cfg.eig_floor)?;
    let fit = krr_fit(&khat, y, cfg.ridge)?;
    let amax = fit.alpha.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let support: Vec<usize> = (0..n)
        .filter(|&i| amax > 0.0 && fit.alpha[i].abs() > tau * amax)
        .collect();
    let mut fallback_rounds = 0;
    let target = if support.is_empty() {
        fallback_rounds = 1;
        all
    } else {
        block_pairs(n, &support)
    };
    let rplan = AllocationPlan::new(spread_uniform(budget - warm, &target, m));
    ledger = merge(&ledger, &backend.sample(&rplan, rng)?);
    Ok(AllocatorResult {
        final_estimate: estimate(&ledger, cfg.placeholder),
        ledger,
        per_round_plans: vec![wplan, rplan],
        method_tag: format!("shofar@{tau}"),
        fallback_rounds,
        landmarks: Some(support),
    })
}

/// Runs a single non-adaptive plan and returns the estimate.
pub fn run_static(
    backend: &dyn ShotBackend,
    plan: AllocationPlan,
    placeholder: f64,
    known_diagonal: bool,
    tag: &str,
    rng: &mut Rng,
) -> Result<AllocatorResult> {
    let n = backend.n();
    let ledger = merge(&ShotLedger::new(n), &backend.sample(&plan, rng)?);
    Ok(AllocatorResult {
        final_estimate: crate::shotsim::estimate_with_diagonal(&ledger, placeholder, known_diagonal),
        ledger,
        per_round_plans: vec![plan],
        method_tag: tag.to_string(),
        fallback_rounds: 0,
        landmarks: None,
    })
}

/// Pair indices eligible for shots.
pub fn active_pairs(n: usize, known_diagonal: bool) -> Vec<usize> {
    pair_list(n)
        .into_iter()
        .enumerate()
        .filter(|(_, (i, j))| !(known_diagonal && i == j))
        .map(|(p, _)| p)
        .collect()
}

/// `m_ℓ` indices drawn uniformly without replacement, sorted.
pub(crate) fn random_subset(n: usize, k: usize, rng: &mut Rng) -> Vec<usize> {
    let mut v = sample_indices(rng, n, k.min(n)).into_vec();
    v.sort_unstable();
    v
}

//! Bernoulli shot simulation and the per-pair shot ledger.

use std::path::Path;

use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{AqkaError, Result};
use crate::numerics::SymMatrix;
use crate::pairs::{n_pairs, pair_index, pair_list};
use crate::rng::Rng;

/// Shot and success counts over the upper-triangular pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotLedger {
    pub n: usize,
    pub shots: Vec<u64>,
    pub successes: Vec<u64>,
}

/// Shots drawn in one batch; same layout as a ledger.
pub type LedgerDelta = ShotLedger;

/// Integer shot increments for one round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub deltas: Vec<u64>,
    pub round_budget: u64,
}

impl AllocationPlan {
    pub fn new(deltas: Vec<u64>) -> Self {
        let round_budget = deltas.iter().sum();
        AllocationPlan {
            deltas,
            round_budget,
        }
    }

    pub fn zeros(m: usize) -> Self {
        Self::new(vec![0; m])
    }

    pub fn total(&self) -> u64 {
        self.deltas.iter().sum()
    }

    /// Elementwise sum of two plans.
    pub fn combine(&self, other: &AllocationPlan) -> AllocationPlan {
        assert_eq!(self.deltas.len(), other.deltas.len());
        AllocationPlan::new(
            self.deltas
                .iter()
                .zip(&other.deltas)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }
}

impl ShotLedger {
    pub fn new(n: usize) -> Self {
        let m = n_pairs(n);
        ShotLedger {
            n,
            shots: vec![0; m],
            successes: vec![0; m],
        }
    }

    pub fn n_pairs(&self) -> usize {
        self.shots.len()
    }

    pub fn total_shots(&self) -> u64 {
        self.shots.iter().sum()
    }

    pub fn is_valid(&self) -> bool {
        self.shots.len() == n_pairs(self.n)
            && self.successes.len() == self.shots.len()
            && self.successes.iter().zip(&self.shots).all(|(c, s)| c <= s)
    }

    pub fn zero_shot_pairs(&self) -> usize {
        self.shots.iter().filter(|&&s| s == 0).count()
    }

    pub fn zero_shot_fraction(&self) -> f64 {
        self.zero_shot_pairs() as f64 / self.n_pairs() as f64
    }

    pub fn min_shots(&self) -> u64 {
        self.shots.iter().copied().min().unwrap_or(0)
    }

    pub fn shots_at(&self, i: usize, j: usize) -> u64 {
        self.shots[pair_index(self.n, i, j)]
    }
}

/// Upper-triangle entries of `k` in pair order, checked to lie in [0, 1].
pub fn pair_probabilities(k: &SymMatrix) -> Result<Vec<f64>> {
    let n = k.n();
    let mut out = Vec::with_capacity(n_pairs(n));
    for i in 0..n {
        for j in i..n {
            let v = k.get(i, j);
            if !(0.0..=1.0).contains(&v) {
                return Err(AqkaError::invalid(format!(
                    "kernel entry ({i},{j}) = {v} outside [0,1]"
                )));
            }
            out.push(v);
        }
    }
    Ok(out)
}

/// Draws `Binomial(deltas_p, K_p)` successes independently per pair.
pub fn sample_shots(k_true: &SymMatrix, plan: &AllocationPlan, rng: &mut Rng) -> Result<LedgerDelta> {
    let probs = pair_probabilities(k_true)?;
    sample_with_probs(k_true.n(), &probs, plan, rng)
}

/// As [`sample_shots`] with precomputed pair probabilities.
pub fn sample_with_probs(
    n: usize,
    probs: &[f64],
    plan: &AllocationPlan,
    rng: &mut Rng,
) -> Result<LedgerDelta> {
    if plan.deltas.len() != probs.len() {
        return Err(AqkaError::invalid("plan length does not match pair count"));
    }
    let mut successes = vec![0u64; probs.len()];
    for (p, (&d, &q)) in plan.deltas.iter().zip(probs).enumerate() {
        if d == 0 {
            continue;
        }
        successes[p] = if q <= 0.0 {
            0
        } else if q >= 1.0 {
            d
        } else {
            Binomial::new(d, q)
                .map_err(|e| AqkaError::invalid(e.to_string()))?
                .sample(rng)
        };
    }
    Ok(ShotLedger {
        n,
        shots: plan.deltas.clone(),
        successes,
    })
}

/// `K̂_p = c_p/s_p`, or `placeholder` for unsampled pairs.
pub fn estimate(ledger: &ShotLedger, placeholder: f64) -> SymMatrix {
    estimate_with_diagonal(ledger, placeholder, false)
}

/// As [`estimate`]; with `known_diagonal` the diagonal is pinned to 1.
pub fn estimate_with_diagonal(ledger: &ShotLedger, placeholder: f64, known_diagonal: bool) -> SymMatrix {
    let n = ledger.n;
    let mut k = SymMatrix::zeros(n);
    for (p, (i, j)) in pair_list(n).into_iter().enumerate() {
        let v = if known_diagonal && i == j {
            1.0
        } else if ledger.shots[p] > 0 {
            ledger.successes[p] as f64 / ledger.shots[p] as f64
        } else {
            placeholder
        };
        k.set(i, j, v);
    }
    k
}

/// Elementwise sum of two ledgers.
pub fn merge(a: &ShotLedger, b: &LedgerDelta) -> ShotLedger {
    assert_eq!(a.n, b.n, "ledger dimension mismatch");
    ShotLedger {
        n: a.n,
        shots: a.shots.iter().zip(&b.shots).map(|(x, y)| x + y).collect(),
        successes: a
            .successes
            .iter()
            .zip(&b.successes)
            .map(|(x, y)| x + y)
            .collect(),
    }
}

/// Distributes `total` draws over categories with probabilities ∝ `weights`
/// via sequential conditional binomials.
pub fn multinomial(total: u64, weights: &[f64], rng: &mut Rng) -> Result<Vec<u64>> {
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(AqkaError::invalid("multinomial weights must be finite and non-negative"));
    }
    let mut mass: f64 = weights.iter().sum();
    if total > 0 && !(mass > 0.0) {
        return Err(AqkaError::DegenerateWeights);
    }
    let mut left = total;
    let mut out = vec![0u64; weights.len()];
    let last = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
    for (k, &w) in weights.iter().enumerate() {
        if left == 0 {
            break;
        }
        if k == last {
            out[k] = left;
            break;
        }
        if w <= 0.0 {
            continue;
        }
        let p = (w / mass).clamp(0.0, 1.0);
        let draw = if p >= 1.0 {
            left
        } else {
            Binomial::new(left, p)
                .map_err(|e| AqkaError::invalid(e.to_string()))?
                .sample(rng)
        };
        out[k] = draw;
        left -= draw;
        mass -= w;
    }
    Ok(out)
}

/// Writes `i,j,shots,successes` for every pair with at least one shot.
pub fn write_ledger_csv(path: impl AsRef<Path>, ledger: &ShotLedger) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["i", "j", "shots", "successes"])?;
    for (p, (i, j)) in pair_list(ledger.n).into_iter().enumerate() {
        if ledger.shots[p] > 0 {
            w.write_record([
                i.to_string(),
                j.to_string(),
                ledger.shots[p].to_string(),
                ledger.successes[p].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a ledger file; `n` is the training-set size.
pub fn read_ledger_csv(path: impl AsRef<Path>, n: usize) -> Result<ShotLedger> {
    let mut rdr = csv::Reader::from_path(path.as_ref())?;
    let mut ledger = ShotLedger::new(n);
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| AqkaError::Parse {
            line,
            msg: e.to_string(),
        })?;
        let field = |c: usize| -> Result<u64> {
            rec.get(c)
                .ok_or_else(|| AqkaError::Parse {
                    line,
                    msg: "missing column".into(),
                })?
                .trim()
                .parse::<u64>()
                .map_err(|e| AqkaError::Parse {
                    line,
                    msg: e.to_string(),
                })
        };
        let (i, j) = (field(0)? as usize, field(1)? as usize);
        if i >= n || j >= n {
            return Err(AqkaError::Parse {
                line,
                msg: format!("pair ({i},{j}) out of range for N={n}"),
            });
        }
        let p = pair_index(n, i, j);
        ledger.shots[p] = field(2)?;
        ledger.successes[p] = field(3)?;
        if ledger.successes[p] > ledger.shots[p] {
            return Err(AqkaError::Parse {
                line,
                msg: "successes exceed shots".into(),
            });
        }
    }
    Ok(ledger)
}

/// Largest index `N` with `N(N+1)/2 <= m` pairs; used to infer `N` from files.
pub fn n_from_pairs(m: usize) -> Option<usize> {
    let n = (((8 * m + 1) as f64).sqrt() as usize).saturating_sub(1) / 2;
    (n.saturating_sub(1)..=n + 1).find(|&k| n_pairs(k) == m)
}

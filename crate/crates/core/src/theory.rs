//! Closed-form quantities: Cauchy–Schwarz ratio, sparse and SVM ceilings,
//! the higher-order remainder bound and the plug-in inflation factor.

use serde::{Deserialize, Serialize};

use crate::error::{AqkaError, Result};
use crate::kernelgen::sign;
use crate::krr::{krr_fit, krr_gradient, krr_sensitivity};
use crate::numerics::{norm2, psd_project, SymMatrix};
use crate::pairs::n_pairs;
use crate::shotsim::{estimate, ShotLedger};
use crate::svm::svm_dual_solve;

/// `ρ = Z² / (M Σa)` with `Z = Σ√a`.
pub fn cs_ratio(a: &[f64]) -> Result<f64> {
    if a.iter().any(|v| !(*v >= 0.0)) {
        return Err(AqkaError::invalid("weights must be non-negative"));
    }
    let sum: f64 = a.iter().sum();
    if !(sum > 0.0) {
        return Err(AqkaError::DegenerateWeights);
    }
    let z: f64 = a.iter().map(|v| v.sqrt()).sum();
    Ok(z * z / (a.len() as f64 * sum))
}

/// Fraction of pairs touching an `m`-point support: `m(2N−m+1)/2 ÷ N(N+1)/2`.
pub fn sparse_ceiling(m: usize, n: usize) -> Result<f64> {
    if m == 0 || m > n {
        return Err(AqkaError::invalid(format!("m = {m} not in [1, {n}]")));
    }
    let strip = m * (2 * n - m + 1) / 2;
    Ok(strip as f64 / n_pairs(n) as f64)
}

/// `m_sv(m_sv+1)/2 ÷ N(N+1)/2`.
pub fn svm_ceiling(m_sv: usize, n: usize) -> Result<f64> {
    if m_sv == 0 || m_sv > n {
        return Err(AqkaError::invalid(format!("m_sv = {m_sv} not in [1, {n}]")));
    }
    Ok(n_pairs(m_sv) as f64 / n_pairs(n) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemainderBound {
    /// `(C/λ⁴)(Σ1/s_p)²`; infinite when divergent.
    pub value: f64,
    pub divergent: bool,
    pub zero_shot_pairs: usize,
}

/// `(C/λ⁴)(Σ_p 1/s_p)²` over the given shot counts.
pub fn remainder_bound(shots: &[u64], ridge: f64, constant: f64) -> RemainderBound {
    let zero = shots.iter().filter(|&&s| s == 0).count();
    if zero > 0 {
        return RemainderBound {
            value: f64::INFINITY,
            divergent: true,
            zero_shot_pairs: zero,
        };
    }
    let inv: f64 = shots.iter().map(|&s| 1.0 / s as f64).sum();
    RemainderBound {
        value: constant / ridge.powi(4) * inv * inv,
        divergent: false,
        zero_shot_pairs: 0,
    }
}

/// Which constant multiplies the plug-in inflation term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PluginConstant {
    /// `C_K = 16(κ+λ)‖y‖²`.
    #[default]
    Stated,
    /// The looser `48(κ+λ)‖y‖²` from the unabsorbed proof bookkeeping.
    Loose,
}

impl PluginConstant {
    pub fn value(self, kappa: f64, ridge: f64, y_norm: f64) -> f64 {
        let c = match self {
            PluginConstant::Stated => 16.0,
            PluginConstant::Loose => 48.0,
        };
        c * (kappa + ridge) * y_norm * y_norm
    }
}

/// `1 + C_K Δ_w / (λ³ √a_min)`.
pub fn plugin_inflation(
    delta_w: f64,
    ridge: f64,
    a_min: f64,
    kappa: f64,
    y_norm: f64,
    constant: PluginConstant,
) -> Result<f64> {
    if !(a_min > 0.0) {
        return Err(AqkaError::RegularityViolation(format!(
            "a_min = {a_min} must be positive"
        )));
    }
    if !(delta_w >= 0.0) {
        return Err(AqkaError::invalid("delta_w must be non-negative"));
    }
    let ck = constant.value(kappa, ridge, y_norm);
    Ok(1.0 + ck * delta_w / (ridge.powi(3) * a_min.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub n: usize,
    pub m_pairs: usize,
    pub m: Option<usize>,
    pub m_sv: Option<usize>,
    pub ridge: f64,
    pub budget: u64,
    pub delta_w: Option<f64>,
    pub a_min: Option<f64>,
    pub kappa: f64,
    pub y_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub rho: Option<f64>,
    pub sparse_ceiling: Option<f64>,
    pub svm_ceiling: Option<f64>,
    pub remainder_bound: RemainderBound,
    pub plugin_inflation: Option<f64>,
    pub inputs_summary: BoundInputs,
}

impl BoundReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bound report serializes")
    }
}

/// Options for [`bound_report`].
#[derive(Debug, Clone, Copy)]
pub struct BoundOptions {
    pub ridge: f64,
    pub remainder_constant: f64,
    pub plugin_constant: PluginConstant,
    /// Solve an SVM with this box on the exact kernel to report `m_sv`.
    pub svm_c: Option<f64>,
    pub eig_floor: f64,
}

impl Default for BoundOptions {
    fn default() -> Self {
        BoundOptions {
            ridge: 0.01,
            remainder_constant: 1.0,
            plugin_constant: PluginConstant::Stated,
            svm_c: None,
            eig_floor: 1e-6,
        }
    }
}

/// Evaluates every bound for an exact kernel, targets and a shot ledger.
/// `Δ_w` is the operator-norm error of the projected ledger estimate and
/// `a_min` the smallest positive oracle weight.
pub fn bound_report(
    k: &SymMatrix,
    y: &[f64],
    ledger: &ShotLedger,
    anchors: Option<usize>,
    opts: &BoundOptions,
) -> Result<BoundReport> {
    let n = k.n();
    if ledger.n != n {
        return Err(AqkaError::invalid("ledger dimension does not match kernel"));
    }
    let fit = krr_fit(k, y, opts.ridge)?;
    let field = krr_sensitivity(&krr_gradient(&fit), k, opts.ridge);
    let rho = cs_ratio(&field.weights).ok();
    let a_min = field
        .weights
        .iter()
        .copied()
        .filter(|&a| a > 0.0)
        .fold(None, |m: Option<f64>, a| Some(m.map_or(a, |v| v.min(a))));
    let m_sv = match opts.svm_c {
        Some(c) => {
            let labels: Vec<f64> = y.iter().map(|&v| sign(v)).collect();
            let fit = match svm_dual_solve(k, &labels, c) {
                Ok(f) => f,
                Err(AqkaError::ConvergenceFailure { best, .. }) => *best,
                Err(e) => return Err(e),
            };
            Some(fit.support.len())
        }
        None => None,
    };
    let delta_w = if ledger.total_shots() > 0 {
        let k_psd = psd_project(&estimate(ledger, 0.0), opts.eig_floor)?;
        Some(k_psd.sub(k).op_norm()?)
    } else {
        None
    };
    let kappa = k.diagonal().into_iter().fold(0.0, f64::max);
    let y_norm = norm2(y);
    let plugin = match (delta_w, a_min) {
        (Some(d), Some(a)) => {
            Some(plugin_inflation(d, opts.ridge, a, kappa, y_norm, opts.plugin_constant)?)
        }
        _ => None,
    };
    Ok(BoundReport {
        rho,
        sparse_ceiling: anchors.map(|m| sparse_ceiling(m, n)).transpose()?,
        svm_ceiling: m_sv.filter(|&s| s > 0).map(|s| svm_ceiling(s, n)).transpose()?,
        remainder_bound: remainder_bound(&ledger.shots, opts.ridge, opts.remainder_constant),
        plugin_inflation: plugin,
        inputs_summary: BoundInputs {
            n,
            m_pairs: n_pairs(n),
            m: anchors,
            m_sv,
            ridge: opts.ridge,
            budget: ledger.total_shots(),
            delta_w,
            a_min,
            kappa,
            y_norm,
        },
    })
}

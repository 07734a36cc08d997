//! Kernel ridge regression: fit, training-loss gradient over kernel entries,
//! sensitivity weights, Gauss–Newton curvature, leverage scores and scoring.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{AqkaError, Result};
use crate::kernelgen::sign;
use crate::numerics::{dot, norm2, sym_eig, SpdFactor, SymMatrix};
use crate::pairs::{n_pairs, pair_list};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrrFit {
    /// `(K + λI)⁻¹ y`
    pub alpha: Vec<f64>,
    /// `(K + λI)⁻¹ α`
    pub beta: Vec<f64>,
    pub ridge: f64,
    /// Training loss `λ²‖α‖²`.
    pub loss: f64,
}

/// Per-pair gradient, allocation weights `g²K(1−K)` and proxy `g²/(4λ⁴)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityField {
    pub grad: Vec<f64>,
    pub weights: Vec<f64>,
    pub proxy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussNewtonDiag {
    /// Gauss–Newton curvature `2λ²‖A E_p α‖²`.
    pub h: Vec<f64>,
    /// Exact second derivative minus `h`.
    pub r: Vec<f64>,
}

pub fn krr_fit(k: &SymMatrix, y: &[f64], ridge: f64) -> Result<KrrFit> {
    if !(ridge > 0.0) {
        return Err(AqkaError::invalid("ridge must be positive"));
    }
    if y.len() != k.n() {
        return Err(AqkaError::invalid("label length does not match kernel"));
    }
    let f = SpdFactor::new(k, ridge)?;
    let alpha = f.solve(y);
    let beta = f.solve(&alpha);
    let loss = ridge * ridge * dot(&alpha, &alpha);
    Ok(KrrFit {
        alpha,
        beta,
        ridge,
        loss,
    })
}

/// `‖y − Kα‖²` evaluated directly.
pub fn residual_loss(k: &SymMatrix, y: &[f64], alpha: &[f64]) -> f64 {
    k.matvec(alpha)
        .iter()
        .zip(y)
        .map(|(p, t)| (t - p) * (t - p))
        .sum()
}

/// `∂L/∂K_ij` under the symmetric perturbation `K_ij = K_ji`; diagonal pairs
/// carry the factor ½.
pub fn krr_gradient(fit: &KrrFit) -> Vec<f64> {
    let n = fit.alpha.len();
    let (a, b) = (&fit.alpha, &fit.beta);
    let c = -2.0 * fit.ridge * fit.ridge;
    pair_list(n)
        .into_iter()
        .map(|(i, j)| {
            if i == j {
                c * b[i] * a[i]
            } else {
                c * (b[i] * a[j] + b[j] * a[i])
            }
        })
        .collect()
}

/// Weights `g_p² K̂_p(1−K̂_p)` with `K̂` clipped to [0, 1].
pub fn krr_sensitivity(grad: &[f64], k_hat: &SymMatrix, ridge: f64) -> SensitivityField {
    let n = k_hat.n();
    assert_eq!(grad.len(), n_pairs(n));
    let l4 = ridge.powi(4);
    let mut weights = Vec::with_capacity(grad.len());
    for ((i, j), &g) in pair_list(n).into_iter().zip(grad) {
        let kp = k_hat.get(i, j).clamp(0.0, 1.0);
        weights.push(g * g * kp * (1.0 - kp));
    }
    SensitivityField {
        grad: grad.to_vec(),
        weights,
        proxy: grad.iter().map(|g| g * g / (4.0 * l4)).collect(),
    }
}

/// Per-pair Gauss–Newton curvature and remainder of the training loss.
pub fn gauss_newton_diag(fit: &KrrFit, k: &SymMatrix) -> Result<GaussNewtonDiag> {
    let n = k.n();
    let a = SpdFactor::new(k, fit.ridge)?.inverse();
    let ad = a.to_dmatrix();
    let a2 = &ad * &ad;
    let (al, be) = (&fit.alpha, &fit.beta);
    let l2 = fit.ridge * fit.ridge;
    let mut h = Vec::with_capacity(n_pairs(n));
    let mut r = Vec::with_capacity(n_pairs(n));
    for (i, j) in pair_list(n) {
        if i == j {
            h.push(2.0 * l2 * al[i] * al[i] * a2[(i, i)]);
            r.push(4.0 * l2 * a.get(i, i) * be[i] * al[i]);
        } else {
            let q = al[j] * al[j] * a2[(i, i)]
                + al[i] * al[i] * a2[(j, j)]
                + 2.0 * al[i] * al[j] * a2[(i, j)];
            h.push(2.0 * l2 * q.max(0.0));
            r.push(
                4.0 * l2
                    * (a.get(i, j) * (be[i] * al[j] + be[j] * al[i])
                        + a.get(i, i) * be[j] * al[j]
                        + a.get(j, j) * be[i] * al[i]),
            );
        }
    }
    Ok(GaussNewtonDiag { h, r })
}

/// Upper bound `8‖y‖λ⁻¹(|α_i| + |α_j|)` on each remainder entry.
pub fn remainder_envelope(fit: &KrrFit, y_norm: f64) -> Vec<f64> {
    let n = fit.alpha.len();
    pair_list(n)
        .into_iter()
        .map(|(i, j)| {
            let s = if i == j {
                fit.alpha[i].abs()
            } else {
                fit.alpha[i].abs() + fit.alpha[j].abs()
            };
            8.0 * y_norm / fit.ridge * s
        })
        .collect()
}

/// `ℓ_i = [K(K+λI)⁻¹]_ii`.
pub fn leverage_scores(k: &SymMatrix, ridge: f64) -> Result<Vec<f64>> {
    if !(ridge > 0.0) {
        return Err(AqkaError::invalid("ridge must be positive"));
    }
    let e = sym_eig(k)?;
    let n = k.n();
    let shrink: Vec<f64> = e
        .values
        .iter()
        .map(|&w| {
            let w = w.max(0.0);
            w / (w + ridge)
        })
        .collect();
    Ok((0..n)
        .map(|i| {
            (0..n)
                .map(|c| e.vectors[(i, c)].powi(2) * shrink[c])
                .sum()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub accuracy: f64,
    pub mse: f64,
}

/// Predicts `K_test·α` and scores sign agreement (sign(0) = +1) and MSE
/// against `y_raw` (or the labels when no raw targets are given).
pub fn predict_and_score(
    k_test: &DMatrix<f64>,
    alpha: &[f64],
    y_test: &[f64],
    y_raw: Option<&[f64]>,
) -> Result<Score> {
    if k_test.ncols() != alpha.len() || k_test.nrows() != y_test.len() {
        return Err(AqkaError::invalid("test kernel dimensions do not match"));
    }
    if let Some(r) = y_raw {
        if r.len() != y_test.len() {
            return Err(AqkaError::invalid("raw target length mismatch"));
        }
    }
    let pred = k_test * DVector::from_column_slice(alpha);
    let t = y_test.len().max(1) as f64;
    let hits = pred
        .iter()
        .zip(y_test)
        .filter(|(p, y)| sign(**p) == **y)
        .count();
    let reference = y_raw.unwrap_or(y_test);
    let mse = pred
        .iter()
        .zip(reference)
        .map(|(p, y)| (p - y) * (p - y))
        .sum::<f64>()
        / t;
    Ok(Score {
        accuracy: hits as f64 / t,
        mse,
    })
}

/// `L_tr(K) = λ²‖(K+λI)⁻¹y‖²`.
pub fn training_loss(k: &SymMatrix, y: &[f64], ridge: f64) -> Result<f64> {
    let f = SpdFactor::new(k, ridge)?;
    let a = f.solve(y);
    Ok(ridge * ridge * norm2(&a).powi(2))
}

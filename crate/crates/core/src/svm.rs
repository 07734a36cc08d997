//! Box-constrained SVM dual solved by pairwise (SMO) coordinate ascent, and
//! the envelope gradient of the optimal dual value.
//!
//! The dual is `max 1ᵀη − ½ηᵀ(YKY)η` subject to `0 ≤ η ≤ C`, `yᵀη = 0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{AqkaError, Result};
use crate::numerics::SymMatrix;
use crate::pairs::pair_list;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmFit {
    pub eta: Vec<f64>,
    pub c: f64,
    pub dual_objective: f64,
    /// Indices with `η_i > 1e-8·C`.
    pub support: Vec<usize>,
    pub bias: f64,
    pub iterations: usize,
    /// Maximal KKT violation at termination.
    pub violation: f64,
    /// Dual objective after every iteration, when requested.
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct SmoOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub record_trace: bool,
}

impl Default for SmoOptions {
    fn default() -> Self {
        SmoOptions {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            record_trace: false,
        }
    }
}

pub fn svm_dual_solve(k: &SymMatrix, y: &[f64], c: f64) -> Result<SvmFit> {
    svm_dual_solve_with(k, y, c, SmoOptions::default())
}

fn check_labels(y: &[f64], n: usize) -> Result<()> {
    if y.len() != n {
        return Err(AqkaError::invalid("label length does not match kernel"));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(AqkaError::invalid("SVM labels must be ±1"));
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(AqkaError::invalid("SVM needs both classes"));
    }
    Ok(())
}

pub fn svm_dual_solve_with(k: &SymMatrix, y: &[f64], c: f64, opts: SmoOptions) -> Result<SvmFit> {
    let n = k.n();
    check_labels(y, n)?;
    if !(c > 0.0) || !c.is_finite() {
        return Err(AqkaError::invalid("box constraint C must be positive"));
    }
    let mut eta = vec![0.0; n];
    // Gradient of the minimization form ½ηᵀQη − 1ᵀη.
    let mut grad = vec![-1.0; n];
    let up = |e: f64, yt: f64| if yt > 0.0 { e < c } else { e > 0.0 };
    let low = |e: f64, yt: f64| if yt > 0.0 { e > 0.0 } else { e < c };
    let objective = |eta: &[f64], grad: &[f64]| -> f64 {
        -0.5 * eta.iter().zip(grad).map(|(e, g)| e * (g - 1.0)).sum::<f64>()
    };
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut violation;
    loop {
        let (mut i, mut gmax) = (usize::MAX, f64::NEG_INFINITY);
        let (mut j, mut gmin) = (usize::MAX, f64::INFINITY);
        for t in 0..n {
            let v = -y[t] * grad[t];
            if up(eta[t], y[t]) && v > gmax {
                gmax = v;
                i = t;
            }
            if low(eta[t], y[t]) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        violation = if i == usize::MAX || j == usize::MAX {
            0.0
        } else {
            gmax - gmin
        };
        if violation < opts.tol {
            break;
        }
        if iterations >= opts.max_iter {
            let best = finish(k, y, c, eta, &grad, iterations, violation, trace);
            return Err(AqkaError::ConvergenceFailure {
                iterations,
                violation,
                best: Box::new(best),
            });
        }
        iterations += 1;
        let curv = (k.get(i, i) + k.get(j, j) - 2.0 * k.get(i, j)).max(1e-12);
        let mut step = violation / curv;
        step = step.min(if y[i] > 0.0 { c - eta[i] } else { eta[i] });
        step = step.min(if y[j] > 0.0 { eta[j] } else { c - eta[j] });
        let di = y[i] * step;
        let dj = -y[j] * step;
        eta[i] = snap(eta[i] + di, c);
        eta[j] = snap(eta[j] + dj, c);
        let (ki, kj) = (k.row(i), k.row(j));
        for t in 0..n {
            grad[t] += y[t] * (y[i] * ki[t] * di + y[j] * kj[t] * dj);
        }
        if opts.record_trace {
            trace.push(objective(&eta, &grad));
        }
    }
    Ok(finish(k, y, c, eta, &grad, iterations, violation, trace))
}

fn snap(v: f64, c: f64) -> f64 {
    let tol = 1e-14 * c.max(1.0);
    if v < tol {
        0.0
    } else if v > c - tol {
        c
    } else {
        v
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    k: &SymMatrix,
    y: &[f64],
    c: f64,
    eta: Vec<f64>,
    grad: &[f64],
    iterations: usize,
    violation: f64,
    objective_trace: Vec<f64>,
) -> SvmFit {
    let _ = k;
    let dual_objective = -0.5 * eta.iter().zip(grad).map(|(e, g)| e * (g - 1.0)).sum::<f64>();
    let stol = 1e-8 * c;
    let support = (0..eta.len()).filter(|&t| eta[t] > stol).collect();
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut free_n) = (0.0, 0usize);
    for t in 0..eta.len() {
        let yg = y[t] * grad[t];
        if eta[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if eta[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free_sum += yg;
            free_n += 1;
        }
    }
    let rho = if free_n > 0 {
        free_sum / free_n as f64
    } else if ub.is_finite() && lb.is_finite() {
        0.5 * (ub + lb)
    } else {
        0.0
    };
    SvmFit {
        eta,
        c,
        dual_objective,
        support,
        bias: -rho,
        iterations,
        violation,
        objective_trace,
    }
}

/// `f(η; K) = 1ᵀη − ½ηᵀ(YKY)η` for a given `η`.
pub fn dual_objective(k: &SymMatrix, y: &[f64], eta: &[f64]) -> f64 {
    let v: Vec<f64> = eta.iter().zip(y).map(|(e, t)| e * t).collect();
    let kv = k.matvec(&v);
    eta.iter().sum::<f64>() - 0.5 * v.iter().zip(&kv).map(|(a, b)| a * b).sum::<f64>()
}

/// `∂f*/∂K_ij = −y_iy_jη_iη_j` off the diagonal, `−½η_i²` on it.
pub fn svm_envelope_gradient(fit: &SvmFit, y: &[f64]) -> Vec<f64> {
    let n = fit.eta.len();
    let e = &fit.eta;
    pair_list(n)
        .into_iter()
        .map(|(i, j)| {
            if i == j {
                -0.5 * e[i] * e[i]
            } else {
                -y[i] * y[j] * e[i] * e[j]
            }
        })
        .collect()
}

/// Decision values `Σ_t y_t η_t K(x, x_t) + b` for rows of `k_test`.
pub fn svm_decision(k_test: &DMatrix<f64>, fit: &SvmFit, y: &[f64]) -> Vec<f64> {
    let v = DVector::from_iterator(y.len(), fit.eta.iter().zip(y).map(|(e, t)| e * t));
    (k_test * v).iter().map(|d| d + fit.bias).collect()
}

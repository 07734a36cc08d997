//! Ground-truth kernels and labelled datasets.
//!
//! RBF kernels, exact statevector fidelity kernels for the ZZ feature map,
//! planted-sparse regression targets, Haar ad-hoc labels and a CSV loader.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Complex, DMatrix};
use rand::seq::index::sample as sample_indices;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AqkaError, Result};
use crate::numerics::SymMatrix;
use crate::rng::Rng;

pub type C64 = Complex<f64>;

/// Largest supported register (statevector dimension 4096).
pub const MAX_QUBITS: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub anchors: Option<Vec<usize>>,
    pub coeffs: Option<Vec<f64>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Entanglement {
    #[default]
    Linear,
}

/// ZZ feature map settings. Inputs are multiplied by `input_scale` before
/// the single-qubit phases `2x` and the pair phases `2(π−x_a)(π−x_b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMapConfig {
    pub n_qubits: usize,
    pub depth: usize,
    #[serde(default)]
    pub entanglement: Entanglement,
    #[serde(default = "one")]
    pub input_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl FeatureMapConfig {
    pub fn new(n_qubits: usize, depth: usize) -> Self {
        FeatureMapConfig {
            n_qubits,
            depth,
            entanglement: Entanglement::Linear,
            input_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 || self.n_qubits > MAX_QUBITS {
            return Err(AqkaError::invalid(format!(
                "n_qubits must be in [1, {MAX_QUBITS}], got {}",
                self.n_qubits
            )));
        }
        if self.depth == 0 {
            return Err(AqkaError::invalid("depth must be at least 1"));
        }
        Ok(())
    }
}

fn check_features(x: &[Vec<f64>]) -> Result<usize> {
    let d = x.first().map(|r| r.len()).unwrap_or(0);
    if x.iter().any(|r| r.len() != d) {
        return Err(AqkaError::invalid("ragged feature matrix"));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(AqkaError::invalid("non-finite feature"));
    }
    Ok(d)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `K[i][j] = exp(−γ‖x_i − x_j‖²)`.
pub fn rbf_kernel(x: &[Vec<f64>], gamma: f64) -> Result<SymMatrix> {
    if !(gamma > 0.0) {
        return Err(AqkaError::invalid("gamma must be positive"));
    }
    check_features(x)?;
    if x.is_empty() {
        return Err(AqkaError::invalid("empty feature matrix"));
    }
    Ok(SymMatrix::from_fn(x.len(), |i, j| {
        if i == j {
            1.0
        } else {
            (-gamma * sq_dist(&x[i], &x[j])).exp()
        }
    }))
}

/// Rectangular RBF kernel with rows from `xa` and columns from `xb`.
pub fn rbf_cross(xa: &[Vec<f64>], xb: &[Vec<f64>], gamma: f64) -> Result<DMatrix<f64>> {
    if !(gamma > 0.0) {
        return Err(AqkaError::invalid("gamma must be positive"));
    }
    let da = check_features(xa)?;
    let db = check_features(xb)?;
    if da != db {
        return Err(AqkaError::invalid("feature dimension mismatch"));
    }
    Ok(DMatrix::from_fn(xa.len(), xb.len(), |i, j| {
        (-gamma * sq_dist(&xa[i], &xb[j])).exp()
    }))
}

fn apply_hadamard(psi: &mut [C64], q: usize) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let bit = 1usize << q;
    for k in 0..psi.len() {
        if k & bit == 0 {
            let a = psi[k];
            let b = psi[k | bit];
            psi[k] = (a + b) * s;
            psi[k | bit] = (a - b) * s;
        }
    }
}

/// Statevector `U(x)|0…0⟩` of the ZZ feature map. Qubit `q` is bit `q` of the
/// basis index.
pub fn zz_state(x: &[f64], cfg: &FeatureMapConfig) -> Result<Vec<C64>> {
    cfg.validate()?;
    let n = cfg.n_qubits;
    if x.len() != n {
        return Err(AqkaError::invalid(format!(
            "feature dimension {} does not match {} qubits",
            x.len(),
            n
        )));
    }
    let x: Vec<f64> = x.iter().map(|v| v * cfg.input_scale).collect();
    let dim = 1usize << n;
    let phase: Vec<f64> = (0..dim)
        .map(|b| {
            let bit = |q: usize| ((b >> q) & 1) as f64;
            let mut ph = 0.0;
            for q in 0..n {
                ph += 2.0 * x[q] * bit(q);
            }
            for q in 0..n.saturating_sub(1) {
                let parity = ((b >> q) ^ (b >> (q + 1))) & 1;
                ph += 2.0 * (PI - x[q]) * (PI - x[q + 1]) * parity as f64;
            }
            ph
        })
        .collect();
    let mut psi = vec![C64::new(0.0, 0.0); dim];
    psi[0] = C64::new(1.0, 0.0);
    for _ in 0..cfg.depth {
        for q in 0..n {
            apply_hadamard(&mut psi, q);
        }
        for (amp, &ph) in psi.iter_mut().zip(&phase) {
            *amp *= C64::from_polar(1.0, ph);
        }
    }
    Ok(psi)
}

fn fidelity(a: &[C64], b: &[C64]) -> f64 {
    let ov: C64 = a.iter().zip(b).map(|(u, v)| v.conj() * u).sum();
    ov.norm_sqr().clamp(0.0, 1.0)
}

fn states(x: &[Vec<f64>], cfg: &FeatureMapConfig) -> Result<Vec<Vec<C64>>> {
    x.par_iter().map(|r| zz_state(r, cfg)).collect()
}

/// Fidelity kernel `|⟨0|U(x_b)†U(x_a)|0⟩|²` with rows from `xa`, columns from `xb`.
pub fn zz_fidelity_kernel(
    xa: &[Vec<f64>],
    xb: &[Vec<f64>],
    cfg: &FeatureMapConfig,
) -> Result<DMatrix<f64>> {
    let sa = states(xa, cfg)?;
    let sb = states(xb, cfg)?;
    Ok(DMatrix::from_fn(xa.len(), xb.len(), |i, j| {
        fidelity(&sa[i], &sb[j])
    }))
}

/// Symmetric training Gram matrix of the ZZ fidelity kernel.
pub fn zz_gram(x: &[Vec<f64>], cfg: &FeatureMapConfig) -> Result<SymMatrix> {
    if x.is_empty() {
        return Err(AqkaError::invalid("empty feature matrix"));
    }
    let s = states(x, cfg)?;
    Ok(SymMatrix::from_fn(x.len(), |i, j| {
        if i == j {
            1.0
        } else {
            fidelity(&s[i], &s[j])
        }
    }))
}

/// Regression target with coefficients supported on `anchors`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTarget {
    pub y: Vec<f64>,
    pub coeffs: Vec<f64>,
    pub anchors: Vec<usize>,
}

/// Draws `m` anchors, `c ~ N(0,1)` on them, and sets `y = (K + λI)c`.
pub fn planted_sparse_target(
    k: &SymMatrix,
    m: usize,
    ridge: f64,
    rng: &mut Rng,
) -> Result<PlantedTarget> {
    let n = k.n();
    if m == 0 || m > n {
        return Err(AqkaError::invalid(format!("anchor count {m} not in [1, {n}]")));
    }
    let mut anchors = sample_indices(rng, n, m).into_vec();
    anchors.sort_unstable();
    let mut coeffs = vec![0.0; n];
    for &a in &anchors {
        coeffs[a] = rng.sample(StandardNormal);
    }
    let y = k.add_diag(ridge).matvec(&coeffs);
    Ok(PlantedTarget { y, coeffs, anchors })
}

/// Input distribution for synthetic feature matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputDist {
    /// Standard normal, then each column rescaled to unit sample variance.
    StdNormal { d: usize },
    /// Independent uniform coordinates on `[lo, hi]`.
    Uniform { d: usize, lo: f64, hi: f64 },
}

impl InputDist {
    pub fn dim(&self) -> usize {
        match self {
            InputDist::StdNormal { d } | InputDist::Uniform { d, .. } => *d,
        }
    }

    pub fn sample(&self, rows: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
        match *self {
            InputDist::StdNormal { d } => {
                let mut x: Vec<Vec<f64>> = (0..rows)
                    .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
                    .collect();
                for c in 0..d {
                    let mean = x.iter().map(|r| r[c]).sum::<f64>() / rows as f64;
                    let var =
                        x.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / rows as f64;
                    let sd = var.sqrt();
                    if sd > 0.0 {
                        for r in x.iter_mut() {
                            r[c] /= sd;
                        }
                    }
                }
                x
            }
            InputDist::Uniform { d, lo, hi } => (0..rows)
                .map(|_| (0..d).map(|_| rng.random_range(lo..hi)).collect())
                .collect(),
        }
    }
}

/// Ground-truth kernel family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Rbf { gamma: f64 },
    Zz(FeatureMapConfig),
}

impl KernelSpec {
    pub fn gram(&self, x: &[Vec<f64>]) -> Result<SymMatrix> {
        match self {
            KernelSpec::Rbf { gamma } => rbf_kernel(x, *gamma),
            KernelSpec::Zz(cfg) => zz_gram(x, cfg),
        }
    }

    pub fn cross(&self, xa: &[Vec<f64>], xb: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        match self {
            KernelSpec::Rbf { gamma } => rbf_cross(xa, xb, *gamma),
            KernelSpec::Zz(cfg) => zz_fidelity_kernel(xa, xb, cfg),
        }
    }
}

/// A full train/test planted-sparse problem with exact kernels.
#[derive(Debug, Clone)]
pub struct PlantedInstance {
    pub x_train: Vec<Vec<f64>>,
    pub x_test: Vec<Vec<f64>>,
    pub k: SymMatrix,
    pub k_test: DMatrix<f64>,
    pub target: PlantedTarget,
    /// `K_test · c`.
    pub test_targets: Vec<f64>,
    /// `sign(K_test · c)` with sign(0) = +1.
    pub test_labels: Vec<f64>,
}

pub fn sign(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Draws train and test inputs, the exact kernels, and a planted target.
pub fn planted_instance(
    n: usize,
    n_test: usize,
    m: usize,
    ridge: f64,
    inputs: &InputDist,
    kernel: &KernelSpec,
    rng: &mut Rng,
) -> Result<PlantedInstance> {
    let mut x = inputs.sample(n + n_test, rng);
    let x_test = x.split_off(n);
    let x_train = x;
    let k = kernel.gram(&x_train)?;
    let k_test = kernel.cross(&x_test, &x_train)?;
    let target = planted_sparse_target(&k, m, ridge, rng)?;
    let c = nalgebra::DVector::from_column_slice(&target.coeffs);
    let test_targets: Vec<f64> = (&k_test * c).iter().copied().collect();
    let test_labels = test_targets.iter().map(|&v| sign(v)).collect();
    Ok(PlantedInstance {
        x_train,
        x_test,
        k,
        k_test,
        target,
        test_targets,
        test_labels,
    })
}

/// Haar-random unitary of dimension `dim` (QR of a complex Ginibre matrix
/// with the phases of `R`'s diagonal divided out).
pub fn haar_unitary(dim: usize, rng: &mut Rng) -> DMatrix<C64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let z = DMatrix::from_fn(dim, dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * s, im * s)
    });
    let qr = z.qr();
    let mut q = qr.q();
    let r = qr.r();
    for c in 0..dim {
        let d = r[(c, c)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for row in 0..dim {
            q[(row, c)] *= ph;
        }
    }
    q
}

#[derive(Debug, Clone)]
pub struct AdhocLabels {
    /// Labels of the kept points, in `kept` order.
    pub y: Vec<f64>,
    pub kept: Vec<usize>,
    pub tau: f64,
    pub probabilities: Vec<f64>,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Labels `sign(|⟨0|V U(x)|0⟩|² − τ)` with τ the sample median and a random
/// Haar `V`; points with `|p − τ| < margin_frac·std(p)` are dropped.
pub fn haar_adhoc_labels(
    x: &[Vec<f64>],
    cfg: &FeatureMapConfig,
    margin_frac: f64,
    rng: &mut Rng,
) -> Result<AdhocLabels> {
    if !(margin_frac >= 0.0) {
        return Err(AqkaError::invalid("margin_frac must be non-negative"));
    }
    cfg.validate()?;
    if x.is_empty() {
        return Err(AqkaError::EmptyDataset);
    }
    let v = haar_unitary(1usize << cfg.n_qubits, rng);
    let probabilities: Vec<f64> = x
        .iter()
        .map(|r| {
            let psi = zz_state(r, cfg)?;
            let amp: C64 = psi.iter().enumerate().map(|(k, a)| v[(0, k)] * a).sum();
            Ok(amp.norm_sqr())
        })
        .collect::<Result<_>>()?;
    let tau = median(&probabilities);
    let mean = probabilities.iter().sum::<f64>() / probabilities.len() as f64;
    let sd = (probabilities.iter().map(|p| (p - mean).powi(2)).sum::<f64>()
        / probabilities.len() as f64)
        .sqrt();
    let mut y = Vec::new();
    let mut kept = Vec::new();
    for (i, &p) in probabilities.iter().enumerate() {
        if margin_frac > 0.0 && (p - tau).abs() < margin_frac * sd {
            continue;
        }
        kept.push(i);
        y.push(sign(p - tau));
    }
    if kept.is_empty() {
        return Err(AqkaError::EmptyDataset);
    }
    Ok(AdhocLabels {
        y,
        kept,
        tau,
        probabilities,
    })
}

/// Reads `f0,…,fd,label` rows; two distinct labels map to −1 (smaller) and +1.
pub fn load_dataset_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())?;
    let width = rdr.headers()?.len();
    if width < 2 {
        return Err(AqkaError::Parse {
            line: 1,
            msg: "header needs at least one feature and a label".into(),
        });
    }
    let mut x = Vec::new();
    let mut raw = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| AqkaError::Parse {
            line,
            msg: e.to_string(),
        })?;
        if rec.len() != width {
            return Err(AqkaError::Parse {
                line,
                msg: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        let vals: Vec<f64> = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| AqkaError::Parse {
                line,
                msg: e.to_string(),
            })?;
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(AqkaError::Parse {
                line,
                msg: "non-finite value".into(),
            });
        }
        raw.push(vals[width - 1]);
        x.push(vals[..width - 1].to_vec());
    }
    if x.is_empty() {
        return Err(AqkaError::EmptyDataset);
    }
    let mut distinct = raw.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() > 2 {
        return Err(AqkaError::invalid(format!(
            "labels must be binary, found {} distinct values",
            distinct.len()
        )));
    }
    let hi = distinct[distinct.len() - 1];
    let y = raw
        .iter()
        .map(|&l| if distinct.len() == 2 && l < hi { -1.0 } else { 1.0 })
        .collect();
    Ok(Dataset {
        x,
        y,
        anchors: None,
        coeffs: None,
    })
}

/// Writes a dataset in the format read by [`load_dataset_csv`].
pub fn write_dataset_csv(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    let d = data.x.first().map(|r| r.len()).unwrap_or(0);
    let mut header: Vec<String> = (0..d).map(|k| format!("f{k}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for (r, l) in data.x.iter().zip(&data.y) {
        let mut row: Vec<String> = r.iter().map(|v| format!("{v:?}")).collect();
        row.push(format!("{l:?}"));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Draws `n` standard-normal vectors; handy for property tests.
pub fn gaussian_rows(n: usize, d: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}

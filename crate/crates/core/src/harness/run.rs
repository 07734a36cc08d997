use std::fs::{self, File};
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocators::{
    aqka_run, alloc_hybrid, alloc_nystrom, alloc_random, alloc_shofar, alloc_uniform,
    active_pairs, run_static, AllocatorResult, AqkaConfig, ShotBackend, SimulatedBackend,
};
use crate::error::{AqkaError, Result};
use crate::kernelgen::{
    haar_adhoc_labels, load_dataset_csv, planted_instance, sign, InputDist, KernelSpec,
};
use crate::krr::{krr_fit, predict_and_score, Score};
use crate::numerics::{psd_project, SymMatrix};
use crate::pairs::n_pairs;
use crate::rng::{derive_rng, Rng};
use crate::shotsim::{write_ledger_csv, ShotLedger};
use crate::svm::{svm_decision, svm_dual_solve};

use super::config::{DatasetSpec, ExperimentConfig, ModelKind, SweepKey};
use super::io::{write_plan_csv, write_vector};
use super::methods::Method;

/// Training kernel, targets and the exact test kernel for one seed.
#[derive(Debug, Clone)]
pub struct Problem {
    pub x_train: Vec<Vec<f64>>,
    pub k: SymMatrix,
    pub y: Vec<f64>,
    pub k_test: DMatrix<f64>,
    pub test_labels: Vec<f64>,
    pub test_targets: Option<Vec<f64>>,
    pub anchors: Option<Vec<usize>>,
}

impl Problem {
    pub fn n(&self) -> usize {
        self.k.n()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub method: String,
    pub budget: u64,
    pub seed: usize,
    pub sweep_value: Option<f64>,
    pub n: usize,
    pub test_accuracy: f64,
    pub test_mse: f64,
    pub op_norm_error: f64,
    pub total_shots: u64,
    pub zero_shot_pairs: usize,
    pub fallback_rounds: usize,
    /// Shots per round, `;`-separated.
    pub round_shots: String,
    pub wall_time: f64,
}

impl ExperimentRecord {
    /// Equality ignoring wall-clock time.
    pub fn same_outcome(&self, other: &ExperimentRecord) -> bool {
        let mut a = self.clone();
        a.wall_time = other.wall_time;
        &a == other
    }
}

/// Generates the data for one seed.
pub fn generate_problem(spec: &DatasetSpec, ridge: f64, rng: &mut Rng) -> Result<Problem> {
    match spec {
        DatasetSpec::Planted {
            n,
            n_test,
            m,
            inputs,
            kernel,
        } => {
            let inst = planted_instance(*n, *n_test, *m, ridge, inputs, kernel, rng)?;
            Ok(Problem {
                x_train: inst.x_train,
                k: inst.k,
                y: inst.target.y,
                k_test: inst.k_test,
                test_labels: inst.test_labels,
                test_targets: Some(inst.test_targets),
                anchors: Some(inst.target.anchors),
            })
        }
        DatasetSpec::HaarAdhoc {
            n,
            n_test,
            feature_map,
            margin_frac,
        } => {
            let d = feature_map.n_qubits;
            let dist = InputDist::Uniform {
                d,
                lo: 0.0,
                hi: 2.0 * std::f64::consts::PI,
            };
            // Oversample so that margin filtering still leaves enough points.
            let mut drawn = (n + n_test) * 2;
            loop {
                let x = dist.sample(drawn, rng);
                let lab = haar_adhoc_labels(&x, feature_map, *margin_frac, rng)?;
                if lab.kept.len() >= n + n_test {
                    let xs: Vec<Vec<f64>> = lab.kept.iter().map(|&i| x[i].clone()).collect();
                    let kernel = KernelSpec::Zz(feature_map.clone());
                    let (xtr, xte) = xs[..n + n_test].split_at(*n);
                    return Ok(Problem {
                        x_train: xtr.to_vec(),
                        k: kernel.gram(xtr)?,
                        y: lab.y[..*n].to_vec(),
                        k_test: kernel.cross(xte, xtr)?,
                        test_labels: lab.y[*n..n + n_test].to_vec(),
                        test_targets: None,
                        anchors: None,
                    });
                }
                drawn *= 2;
            }
        }
        DatasetSpec::Csv {
            path,
            kernel,
            test_frac,
        } => {
            let data = load_dataset_csv(path)?;
            let mut idx: Vec<usize> = (0..data.len()).collect();
            idx.shuffle(rng);
            let n_test = ((data.len() as f64) * test_frac).round() as usize;
            let n_train = data.len() - n_test;
            if n_train == 0 || n_test == 0 {
                return Err(AqkaError::Config("test_frac leaves an empty split".into()));
            }
            let pick = |s: &[usize]| -> (Vec<Vec<f64>>, Vec<f64>) {
                (
                    s.iter().map(|&i| data.x[i].clone()).collect(),
                    s.iter().map(|&i| data.y[i]).collect(),
                )
            };
            let (xtr, ytr) = pick(&idx[..n_train]);
            let (xte, yte) = pick(&idx[n_train..]);
            Ok(Problem {
                k: kernel.gram(&xtr)?,
                k_test: kernel.cross(&xte, &xtr)?,
                x_train: xtr,
                y: ytr,
                test_labels: yte,
                test_targets: None,
                anchors: None,
            })
        }
    }
}

/// Fits the configured model on the PSD-projected estimate and scores it on
/// the exact test kernel.
pub fn evaluate(
    k_hat: &SymMatrix,
    problem: &Problem,
    model: ModelKind,
    ridge: f64,
    svm_c: f64,
    eig_floor: f64,
) -> Result<Score> {
    let k_psd = psd_project(k_hat, eig_floor)?;
    match model {
        ModelKind::Krr => {
            let fit = krr_fit(&k_psd, &problem.y, ridge)?;
            predict_and_score(
                &problem.k_test,
                &fit.alpha,
                &problem.test_labels,
                problem.test_targets.as_deref(),
            )
        }
        ModelKind::Svm => {
            let labels: Vec<f64> = problem.y.iter().map(|&v| sign(v)).collect();
            let fit = match svm_dual_solve(&k_psd, &labels, svm_c) {
                Ok(f) => f,
                Err(AqkaError::ConvergenceFailure { best, .. }) => *best,
                Err(e) => return Err(e),
            };
            let dec = svm_decision(&problem.k_test, &fit, &labels);
            let t = dec.len().max(1) as f64;
            let hits = dec
                .iter()
                .zip(&problem.test_labels)
                .filter(|(d, l)| sign(**d) == **l)
                .count();
            let reference = problem.test_targets.as_deref().unwrap_or(&problem.test_labels);
            let mse = dec
                .iter()
                .zip(reference)
                .map(|(d, r)| (d - r) * (d - r))
                .sum::<f64>()
                / t;
            Ok(Score {
                accuracy: hits as f64 / t,
                mse,
            })
        }
    }
}

/// Settings that a cell needs beyond its method.
#[derive(Debug, Clone)]
pub struct CellParams {
    pub aqka: AqkaConfig,
    pub tau: f64,
    pub landmarks: usize,
}

/// Runs one allocator on one problem at one budget.
pub fn run_method(
    method: Method,
    backend: &dyn ShotBackend,
    problem: &Problem,
    budget: u64,
    params: &CellParams,
    rng: &mut Rng,
) -> Result<AllocatorResult> {
    let n = problem.n();
    let cfg = AqkaConfig {
        budget,
        ..params.aqka.clone()
    };
    let kd = cfg.known_diagonal;
    let active = active_pairs(n, kd);
    let m = n_pairs(n);
    let spread = |plan: crate::shotsim::AllocationPlan| {
        let mut deltas = vec![0u64; m];
        for (&p, v) in active.iter().zip(plan.deltas) {
            deltas[p] = v;
        }
        crate::shotsim::AllocationPlan::new(deltas)
    };
    match method {
        Method::Oracle => Ok(AllocatorResult {
            final_estimate: problem.k.clone(),
            ledger: ShotLedger::new(n),
            per_round_plans: vec![],
            method_tag: "oracle".into(),
            fallback_rounds: 0,
            landmarks: None,
        }),
        Method::Uniform => {
            let plan = spread(alloc_uniform(active.len(), budget));
            run_static(backend, plan, cfg.placeholder, kd, "uniform", rng)
        }
        Method::Random => {
            let plan = spread(alloc_random(active.len(), budget, rng));
            run_static(backend, plan, cfg.placeholder, kd, "random", rng)
        }
        Method::Aqka { mode, fill } => {
            let cfg = AqkaConfig {
                fill_rule: fill,
                ..cfg
            };
            aqka_run(backend, &problem.y, &cfg, mode, rng)
        }
        Method::Shofar { tau } => {
            alloc_shofar(backend, &problem.y, budget, tau.unwrap_or(params.tau), &cfg, rng)
        }
        Method::Nystrom { mode, landmarks } => alloc_nystrom(
            backend,
            &problem.y,
            budget,
            landmarks.unwrap_or(params.landmarks).min(n),
            mode,
            &cfg,
            rng,
        ),
        Method::Hybrid { landmarks } => alloc_hybrid(
            backend,
            &problem.y,
            budget,
            landmarks.unwrap_or(params.landmarks).min(n),
            &cfg,
            rng,
        ),
    }
}

struct Cell {
    seed: usize,
    sweep: Option<f64>,
    budget: u64,
    method: String,
}

fn data_key(cfg: &ExperimentConfig, seed: usize, sweep: Option<f64>) -> Vec<String> {
    let seed_label = match cfg.fixed_data_seed {
        Some(s) => format!("fixed{s}"),
        None => seed.to_string(),
    };
    let mut k = vec![
        cfg.master_seed.to_string(),
        cfg.name.clone(),
        "data".to_string(),
        seed_label,
    ];
    if let (Some(v), Some(s)) = (sweep, &cfg.sweep) {
        if matches!(s.key, SweepKey::M | SweepKey::N) {
            k.push(format!("{:?}={v}", s.key));
        }
    }
    k
}

/// The data a run would generate for `seed` (no sweep).
pub fn problem_for_seed(cfg: &ExperimentConfig, seed: usize) -> Result<Problem> {
    let key = data_key(cfg, seed, None);
    let refs: Vec<&str> = key.iter().map(String::as_str).collect();
    generate_problem(&cfg.dataset, cfg.ridge, &mut derive_rng(&refs))
}

fn dataset_for(cfg: &ExperimentConfig, sweep: Option<f64>) -> DatasetSpec {
    let mut spec = cfg.dataset.clone();
    if let (Some(v), Some(s)) = (sweep, &cfg.sweep) {
        match (&mut spec, s.key) {
            (DatasetSpec::Planted { m, .. }, SweepKey::M) => *m = v as usize,
            (DatasetSpec::Planted { n, .. }, SweepKey::N)
            | (DatasetSpec::HaarAdhoc { n, .. }, SweepKey::N) => *n = v as usize,
            _ => {}
        }
    }
    spec
}

fn params_for(cfg: &ExperimentConfig, n: usize, sweep: Option<f64>) -> CellParams {
    let mut p = CellParams {
        aqka: AqkaConfig {
            ridge: cfg.ridge,
            svm_c: cfg.svm_c,
            ..cfg.aqka.clone()
        },
        tau: cfg.tau,
        landmarks: cfg
            .landmarks
            .unwrap_or_else(|| (n as f64).sqrt().ceil() as usize),
    };
    if let (Some(v), Some(s)) = (sweep, &cfg.sweep) {
        match s.key {
            SweepKey::Tau => p.tau = v,
            SweepKey::Landmarks => p.landmarks = v as usize,
            _ => {}
        }
    }
    p
}

fn file_tag(method: &str) -> String {
    method.replace(['@', '/', ' '], "_")
}

/// Runs every (sweep value, seed, budget, method) cell. Records are appended
/// to `<out_dir>/records.csv` as they finish and returned in cell order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    cfg.validate()?;
    let sweeps = cfg.sweep_values();
    let mut problems = Vec::new();
    for &sw in &sweeps {
        let spec = dataset_for(cfg, sw);
        let per_seed: Vec<Result<Problem>> = (0..cfg.seeds)
            .into_par_iter()
            .map(|seed| {
                let key = data_key(cfg, seed, sw);
                let refs: Vec<&str> = key.iter().map(String::as_str).collect();
                generate_problem(&spec, cfg.ridge, &mut derive_rng(&refs))
            })
            .collect();
        problems.push(per_seed.into_iter().collect::<Result<Vec<_>>>()?);
    }

    let mut cells = Vec::new();
    for (si, &sw) in sweeps.iter().enumerate() {
        for seed in 0..cfg.seeds {
            let n = problems[si][seed].n();
            for budget in cfg.budgets_for(n) {
                for m in &cfg.methods {
                    cells.push((si, Cell {
                        seed,
                        sweep: sw,
                        budget,
                        method: m.clone(),
                    }));
                }
            }
        }
    }

    let appender = match &cfg.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("config.toml"), cfg.to_toml_string())?;
            if cfg.dump_plans {
                fs::create_dir_all(dir.join("plans"))?;
                for (si, ps) in problems.iter().enumerate() {
                    for (seed, p) in ps.iter().enumerate() {
                        if let Some(a) = &p.anchors {
                            let v: Vec<f64> = a.iter().map(|&i| i as f64).collect();
                            write_vector(dir.join(format!("plans/anchors_v{si}_s{seed}.csv")), &v)?;
                        }
                    }
                }
            }
            Some(Mutex::new(RecordAppender::create(&dir.join("records.csv"))?))
        }
        None => None,
    };

    let run_cells = || -> Vec<Result<ExperimentRecord>> {
        cells
            .par_iter()
            .map(|(si, cell)| {
                let problem = &problems[*si][cell.seed];
                let method = Method::parse(&cell.method)?;
                let params = params_for(cfg, problem.n(), cell.sweep);
                let sweep_label = cell.sweep.map(|v| v.to_string()).unwrap_or_default();
                let mut rng = derive_rng(&[
                    &cfg.master_seed.to_string(),
                    &cfg.name,
                    &cell.method,
                    &cell.budget.to_string(),
                    &cell.seed.to_string(),
                    &sweep_label,
                ]);
                let backend = SimulatedBackend::new(problem.k.clone())?;
                let start = Instant::now();
                let res = run_method(method, &backend, problem, cell.budget, &params, &mut rng)?;
                let score = evaluate(
                    &res.final_estimate,
                    problem,
                    cfg.model,
                    cfg.ridge,
                    cfg.svm_c,
                    params.aqka.eig_floor,
                )?;
                let op_norm_error = res.final_estimate.sub(&problem.k).op_norm()?;
                let record = ExperimentRecord {
                    method: cell.method.clone(),
                    budget: cell.budget,
                    seed: cell.seed,
                    sweep_value: cell.sweep,
                    n: problem.n(),
                    test_accuracy: score.accuracy,
                    test_mse: score.mse,
                    op_norm_error,
                    total_shots: res.ledger.total_shots(),
                    zero_shot_pairs: res.ledger.zero_shot_pairs(),
                    fallback_rounds: res.fallback_rounds,
                    round_shots: res
                        .per_round_plans
                        .iter()
                        .map(|p| p.total().to_string())
                        .collect::<Vec<_>>()
                        .join(";"),
                    wall_time: start.elapsed().as_secs_f64(),
                };
                if let (Some(dir), true) = (&cfg.out_dir, cfg.dump_plans) {
                    let stem = format!(
                        "{}_B{}_s{}_v{}",
                        file_tag(&cell.method),
                        cell.budget,
                        cell.seed,
                        si
                    );
                    write_plan_csv(
                        dir.join("plans").join(format!("{stem}.csv")),
                        problem.n(),
                        &res.per_round_plans,
                    )?;
                    write_ledger_csv(dir.join("plans").join(format!("{stem}.ledger.csv")), &res.ledger)?;
                }
                if let Some(app) = &appender {
                    app.lock().expect("appender lock").append(&record)?;
                }
                Ok(record)
            })
            .collect()
    };

    let results = if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| AqkaError::Config(e.to_string()))?
            .install(run_cells)
    } else {
        run_cells()
    };
    results.into_iter().collect()
}

/// Serializes records one at a time, flushing after each.
pub struct RecordAppender {
    writer: csv::Writer<File>,
}

impl RecordAppender {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(RecordAppender {
            writer: csv::Writer::from_path(path)?,
        })
    }

    pub fn append(&mut self, r: &ExperimentRecord) -> Result<()> {
        self.writer.serialize(r)?;
        self.writer.flush()?;
        Ok(())
    }
}

/// Reads a records file written by [`run_experiment`]. A final line without
/// a trailing newline that fails to parse is taken to be a record cut off
/// mid-write and dropped.
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<ExperimentRecord>> {
    let text = fs::read_to_string(path.as_ref())?;
    let truncated_tail = !text.is_empty() && !text.ends_with('\n');
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(text.as_bytes());
    let rows: Vec<_> = rdr.deserialize::<ExperimentRecord>().collect();
    let last = rows.len().saturating_sub(1);
    let mut out = Vec::with_capacity(rows.len());
    for (k, rec) in rows.into_iter().enumerate() {
        match rec {
            Ok(r) => out.push(r),
            Err(_) if truncated_tail && k == last => break,
            Err(e) => {
                return Err(AqkaError::Parse {
                    line: k + 2,
                    msg: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// Writes a records file in one go.
pub fn write_records(path: impl AsRef<Path>, records: &[ExperimentRecord]) -> Result<()> {
    let mut w = RecordAppender::create(path.as_ref())?;
    for r in records {
        w.append(r)?;
    }
    Ok(())
}

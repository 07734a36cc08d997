use std::path::Path;
use std::process::Command;

use aqka::harness::io::{
    read_kernel_csv, read_kernel_meta, read_plan_counts, read_vector, write_kernel_csv,
    write_kernel_meta, write_plan_csv, KernelMeta,
};
use aqka::harness::{
    planted_rbf, preset, read_records, report, run_experiment, summarize, write_records,
    DatasetSpec, ExperimentConfig, ExperimentRecord, ModelKind, RecordAppender, N_TEST,
};
use aqka::numerics::SymMatrix;
use aqka::pairs::n_pairs;
use aqka::shotsim::AllocationPlan;
use aqka::AqkaError;

fn small_config() -> ExperimentConfig {
    let mut c = preset("fig1").unwrap();
    c.name = "small".into();
    c.dataset = planted_rbf(24, 3);
    c.methods = vec!["oracle".into(), "uniform".into(), "target-est".into()];
    c.budgets = vec![600, 3000];
    c.seeds = 2;
    c
}

fn record(method: &str, budget: u64, seed: usize, acc: f64) -> ExperimentRecord {
    ExperimentRecord {
        method: method.into(),
        budget,
        seed,
        sweep_value: None,
        n: 10,
        test_accuracy: acc,
        test_mse: 1.0 - acc,
        op_norm_error: 0.5,
        total_shots: budget,
        zero_shot_pairs: 0,
        fallback_rounds: 0,
        round_shots: String::new(),
        wall_time: 0.01,
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aqka"))
}

fn exit_code(args: &[&str]) -> i32 {
    bin().args(args).output().unwrap().status.code().unwrap()
}

#[test]
fn runs_are_deterministic_and_complete() {
    let mut cfg = small_config();
    cfg.workers = 1;
    let a = run_experiment(&cfg).unwrap();
    cfg.workers = 4;
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a.len(), 3 * 2 * 2);
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert!(x.same_outcome(y), "{x:?} vs {y:?}");
    }
    for r in &a {
        assert!((0.0..=1.0).contains(&r.test_accuracy));
        assert!(r.total_shots <= r.budget);
        if r.method == "oracle" {
            assert_eq!(r.test_accuracy, 1.0);
            assert_eq!(r.total_shots, 0);
        } else {
            assert_eq!(r.total_shots, r.budget);
        }
    }
}

#[test]
fn unknown_method_rejected_before_running() {
    let mut cfg = small_config();
    cfg.methods.push("nonsense".into());
    let dir = tempfile::tempdir().unwrap();
    cfg.out_dir = Some(dir.path().join("out"));
    assert!(matches!(run_experiment(&cfg), Err(AqkaError::Config(_))));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn records_file_written_incrementally_and_parses() {
    let mut cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    cfg.out_dir = Some(dir.path().to_path_buf());
    let recs = run_experiment(&cfg).unwrap();
    let back = read_records(dir.path().join("records.csv")).unwrap();
    assert_eq!(back.len(), recs.len());
    for r in &recs {
        assert!(back.iter().any(|b| b.same_outcome(r)));
    }
    let again = ExperimentConfig::from_file(dir.path().join("config.toml")).unwrap();
    assert_eq!(again, cfg);
}

#[test]
fn truncated_tail_record_is_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.csv");
    let mut app = RecordAppender::create(&p).unwrap();
    app.append(&record("uniform", 100, 0, 0.5)).unwrap();
    app.append(&record("uniform", 100, 1, 0.7)).unwrap();
    drop(app);
    let mut text = std::fs::read_to_string(&p).unwrap();
    text.push_str("target-est,100,0,,10,0.8");
    std::fs::write(&p, &text).unwrap();
    assert_eq!(read_records(&p).unwrap().len(), 2);

    text.push('\n');
    std::fs::write(&p, &text).unwrap();
    assert!(matches!(read_records(&p), Err(AqkaError::Parse { line: 4, .. })));
}

#[test]
fn summary_matches_hand_computation() {
    let recs = vec![
        record("uniform", 100, 0, 0.5),
        record("uniform", 100, 1, 0.7),
        record("uniform", 100, 2, 0.9),
        record("target-est", 100, 0, 0.8),
    ];
    let rows = summarize(&recs);
    assert_eq!(rows.len(), 2);
    let u = &rows[0];
    assert_eq!(u.count, 3);
    assert!((u.mean_accuracy - 0.7).abs() < 1e-12);
    // Sample variance 0.04, SE = sqrt(0.04 / 3).
    assert!((u.se_accuracy - (0.04f64 / 3.0).sqrt()).abs() < 1e-12);
    assert_eq!(u.gap_vs_uniform, Some(0.0));
    let t = &rows[1];
    assert!(t.single_record);
    assert_eq!(t.se_accuracy, 0.0);
    assert!((t.gap_vs_uniform.unwrap() - 0.1).abs() < 1e-12);
}

#[test]
fn report_concatenates_and_rejects_bad_schema() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    write_records(&a, &[record("uniform", 100, 0, 0.5)]).unwrap();
    write_records(&b, &[record("uniform", 100, 1, 0.7)]).unwrap();
    let rows = report(&[&a, &b]).unwrap();
    assert_eq!(rows[0].count, 2);
    assert!((rows[0].mean_accuracy - 0.6).abs() < 1e-12);
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "x,y\n1,2\n3,4\n").unwrap();
    assert!(matches!(report(&[&a, &bad]), Err(AqkaError::Parse { .. })));
}

#[test]
fn presets_match_setup() {
    let c = preset("sparsity").unwrap();
    assert_eq!(c.sweep.unwrap().values, vec![5.0, 10.0, 20.0, 50.0, 100.0, 200.0]);
    let c = preset("fig1").unwrap();
    match &c.dataset {
        DatasetSpec::Planted { n, m, n_test, .. } => assert_eq!((*n, *m, *n_test), (225, 10, N_TEST)),
        _ => panic!("fig1 is planted"),
    }
    assert_eq!((c.seeds, c.ridge, c.model), (5, 0.01, ModelKind::Krr));
    assert_eq!(c.budgets, vec![3_000, 10_000, 30_000, 100_000, 300_000, 1_000_000]);
    let c = preset("hardware_stand_in").unwrap();
    assert_eq!(c.seeds, 20);
    assert_eq!(c.fixed_data_seed, Some(0));
    assert!(c.metadata.contains_key("stand_in"));
    let p = aqka::harness::problem_for_seed(&c, 0).unwrap();
    assert_eq!(p.n(), 50);
    assert_eq!(p.anchors.as_ref().unwrap().len(), 4);
    assert!(p.k.diagonal().iter().all(|&d| (d - 1.0).abs() < 1e-12));
    let mo = p.k.mean_off_diagonal();
    assert!((0.03..=0.15).contains(&mo), "stand-in mean off-diagonal {mo}");
    assert!(matches!(preset("fig99"), Err(AqkaError::Config(_))));
}

#[test]
fn budget_multipliers_resolve_against_pairs() {
    let c = preset("head-to-head").unwrap();
    assert_eq!(
        c.budgets_for(225),
        vec![7628, n_pairs(225) as u64, 3 * n_pairs(225) as u64]
    );
}

#[test]
fn kernel_file_and_sidecar_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("k.csv");
    let k = SymMatrix::from_rows(&[vec![1.0, 0.1 + 0.2, 1e-17], vec![0.30000000000000004, 1.0, 0.5], vec![1e-17, 0.5, 1.0]]).unwrap();
    write_kernel_csv(&p, &k).unwrap();
    assert_eq!(read_kernel_csv(&p).unwrap(), k);
    let text = std::fs::read_to_string(&p).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().all(|l| l.split(',').count() == 3));
    let meta = KernelMeta {
        n: 3,
        generator: "planted/rbf".into(),
        seed: 11,
    };
    write_kernel_meta(&p, &meta).unwrap();
    assert_eq!(read_kernel_meta(&p).unwrap(), meta);
    std::fs::write(&p, "1.0,0.5\n0.5,x\n").unwrap();
    assert!(matches!(read_kernel_csv(&p), Err(AqkaError::Parse { line: 2, .. })));
}

#[test]
fn plan_file_sums_rounds() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("plan.csv");
    let plans = vec![AllocationPlan::new(vec![1, 0, 2]), AllocationPlan::new(vec![3, 4, 0])];
    write_plan_csv(&p, 2, &plans).unwrap();
    let c = read_plan_counts(&p, 2).unwrap();
    assert_eq!((c.get(0, 0), c.get(0, 1), c.get(1, 1)), (4.0, 4.0, 2.0));
}

fn write_small_config(dir: &Path) -> std::path::PathBuf {
    let mut c = small_config();
    c.methods = vec!["uniform".into(), "target-oracle".into()];
    c.budgets = vec![];
    c.budget_multipliers = vec![10.0];
    c.seeds = 1;
    c.dump_plans = true;
    let p = dir.join("cfg.toml");
    std::fs::write(&p, c.to_toml_string()).unwrap();
    p
}

#[test]
fn cli_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_small_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let data = dir.path().join("data");
    let out = bin()
        .args(["gen-data", "--config", cfg, "--seed", "0", "--out", data.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["train.csv", "targets.csv", "anchors.csv", "kernel.csv", "kernel.meta.toml"] {
        assert!(data.join(f).exists(), "{f}");
    }
    assert_eq!(read_vector(data.join("anchors.csv")).unwrap().len(), 3);

    let out = bin().args(["theory", "--from", data.to_str().unwrap()]).output().unwrap();
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(json["rho"].as_f64().unwrap() <= json["sparse_ceiling"].as_f64().unwrap() + 1e-12);
    assert_eq!(json["remainder_bound"]["divergent"], serde_json::Value::Bool(true));

    let res = dir.path().join("res");
    let out = bin()
        .args(["run", "--config", cfg, "--workers", "2", "--out", res.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("target-oracle"));
    assert_eq!(read_records(res.join("records.csv")).unwrap().len(), 2);
    assert!(res.join("summary.csv").exists());

    let out = bin().args(["report", res.join("records.csv").to_str().unwrap()]).output().unwrap();
    assert!(out.status.success());

    let out = bin().args(["heatmap", "--result", res.to_str().unwrap()]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("anchor-block max"), "{text}");
    assert!(res.join("plans").read_dir().unwrap().any(|e| {
        e.unwrap().file_name().to_string_lossy().ends_with(".counts.csv")
    }));
}

#[test]
fn cli_exit_codes() {
    assert_eq!(exit_code(&["--help"]), 0);
    assert_eq!(exit_code(&["run", "--preset", "no-such-preset"]), 1);
    assert_eq!(exit_code(&["run", "--preset", "fig1", "--methods", "bogus"]), 1);
    assert_eq!(exit_code(&["run", "--bogus-flag"]), 1);
    assert_eq!(exit_code(&["run"]), 1);
    assert_eq!(exit_code(&["theory", "--from", "/nonexistent/dir"]), 2);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "x,y\n1,2\n").unwrap();
    assert_eq!(exit_code(&["report", bad.to_str().unwrap()]), 2);
}

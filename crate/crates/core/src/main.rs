use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use aqka::harness::io::{
    read_kernel_csv, read_plan_counts, read_vector, write_kernel_csv, write_kernel_meta,
    write_vector, KernelMeta,
};
use aqka::harness::{
    anchor_concentration, format_table, preset, problem_for_seed, report, run_experiment,
    summarize, write_summary_csv, DatasetSpec, ExperimentConfig,
};
use aqka::kernelgen::{sign, write_dataset_csv, Dataset};
use aqka::shotsim::{read_ledger_csv, ShotLedger};
use aqka::theory::{bound_report, BoundOptions, PluginConstant};
use aqka::AqkaError;

#[derive(Parser)]
#[command(name = "aqka", version, about = "Shot-budgeted quantum kernel acquisition")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Source {
    /// Named preset.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Source {
    fn load(&self) -> Result<ExperimentConfig, AqkaError> {
        match (&self.preset, &self.config) {
            (Some(p), None) => preset(p),
            (None, Some(c)) => ExperimentConfig::from_file(c).map_err(|e| match e {
                AqkaError::Io(io) => AqkaError::Config(format!("{}: {io}", c.display())),
                other => other,
            }),
            _ => Err(AqkaError::Config("give exactly one of --preset or --config".into())),
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Write the training data of one seed: features, targets, anchors and kernel.
    GenData {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 0)]
        seed: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the exact training kernel of one seed with a metadata sidecar.
    GenKernel {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 0)]
        seed: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a sweep and print the summary.
    Run {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        seeds: Option<usize>,
        /// Comma-separated multiples of the pair count.
        #[arg(long, value_delimiter = ',')]
        budget_multipliers: Option<Vec<f64>>,
        /// Comma-separated absolute budgets.
        #[arg(long, value_delimiter = ',', conflicts_with = "budget_multipliers")]
        budgets: Option<Vec<u64>>,
        /// Comma-separated method names.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the bounds for a data directory and a shot ledger.
    Theory {
        /// Directory with kernel.csv and targets.csv (as written by gen-data).
        #[arg(long)]
        from: PathBuf,
        /// Ledger file; defaults to <from>/ledger.csv when present.
        #[arg(long)]
        ledger: Option<PathBuf>,
        #[arg(long, default_value_t = 0.01)]
        lambda: f64,
        #[arg(long, default_value_t = 1.0)]
        remainder_constant: f64,
        /// Use the 48 constant instead of 16 in the inflation factor.
        #[arg(long)]
        loose: bool,
        /// Also solve an SVM with this box to report the SVM ceiling.
        #[arg(long)]
        svm_c: Option<f64>,
    },
    /// Summarize one or more records files.
    Report {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        /// Write the summary as CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Shot-count matrices and anchor concentration from dumped plans.
    Heatmap {
        #[arg(long)]
        result: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                AqkaError::Config(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<(), AqkaError> {
    match cmd {
        Cmd::GenData { source, seed, out } => gen_data(&source.load()?, seed, &out),
        Cmd::GenKernel { source, seed, out } => {
            let cfg = source.load()?;
            let p = problem_for_seed(&cfg, seed)?;
            write_kernel_csv(&out, &p.k)?;
            write_kernel_meta(
                &out,
                &KernelMeta {
                    n: p.n(),
                    generator: generator_name(&cfg.dataset),
                    seed: seed as u64,
                },
            )?;
            println!("wrote {} ({}x{})", out.display(), p.n(), p.n());
            Ok(())
        }
        Cmd::Run {
            source,
            seeds,
            budget_multipliers,
            budgets,
            methods,
            workers,
            out,
        } => {
            let mut cfg = source.load()?;
            if let Some(s) = seeds {
                cfg.seeds = s;
            }
            if let Some(b) = budget_multipliers {
                cfg.budget_multipliers = b;
            }
            if let Some(b) = budgets {
                cfg.budgets = b;
                cfg.budget_multipliers.clear();
            }
            if let Some(m) = methods {
                cfg.methods = m;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            if out.is_some() {
                cfg.out_dir = out;
            }
            let records = run_experiment(&cfg)?;
            let rows = summarize(&records);
            print!("{}", format_table(&rows));
            if let Some(dir) = &cfg.out_dir {
                write_summary_csv(dir.join("summary.csv"), &rows)?;
                println!("records: {}", dir.join("records.csv").display());
            }
            Ok(())
        }
        Cmd::Theory {
            from,
            ledger,
            lambda,
            remainder_constant,
            loose,
            svm_c,
        } => {
            let k = read_kernel_csv(from.join("kernel.csv"))?;
            let y = read_vector(from.join("targets.csv"))?;
            let anchors = from
                .join("anchors.csv")
                .exists()
                .then(|| read_vector(from.join("anchors.csv")))
                .transpose()?
                .map(|a| a.len());
            let ledger_path = ledger.or_else(|| {
                let p = from.join("ledger.csv");
                p.exists().then_some(p)
            });
            let ledger = match ledger_path {
                Some(p) => read_ledger_csv(p, k.n())?,
                None => ShotLedger::new(k.n()),
            };
            let opts = BoundOptions {
                ridge: lambda,
                remainder_constant,
                plugin_constant: if loose {
                    PluginConstant::Loose
                } else {
                    PluginConstant::Stated
                },
                svm_c,
                ..Default::default()
            };
            println!("{}", bound_report(&k, &y, &ledger, anchors, &opts)?.to_json());
            Ok(())
        }
        Cmd::Report { csv, out } => {
            let rows = report(&csv)?;
            print!("{}", format_table(&rows));
            if let Some(o) = out {
                write_summary_csv(o, &rows)?;
            }
            Ok(())
        }
        Cmd::Heatmap { result } => heatmap(&result),
    }
}

fn generator_name(d: &DatasetSpec) -> String {
    match d {
        DatasetSpec::Planted { kernel, .. } => format!("planted/{kernel:?}"),
        DatasetSpec::HaarAdhoc { .. } => "haar_adhoc".into(),
        DatasetSpec::Csv { path, .. } => format!("csv:{}", path.display()),
    }
}

fn gen_data(cfg: &ExperimentConfig, seed: usize, out: &Path) -> Result<(), AqkaError> {
    std::fs::create_dir_all(out)?;
    let p = problem_for_seed(cfg, seed)?;
    let data = Dataset {
        x: p.x_train.clone(),
        y: p.y.iter().map(|&v| sign(v)).collect(),
        anchors: p.anchors.clone(),
        coeffs: None,
    };
    write_dataset_csv(out.join("train.csv"), &data)?;
    write_vector(out.join("targets.csv"), &p.y)?;
    if let Some(a) = &p.anchors {
        let v: Vec<f64> = a.iter().map(|&i| i as f64).collect();
        write_vector(out.join("anchors.csv"), &v)?;
    }
    let kpath = out.join("kernel.csv");
    write_kernel_csv(&kpath, &p.k)?;
    write_kernel_meta(
        &kpath,
        &KernelMeta {
            n: p.n(),
            generator: generator_name(&cfg.dataset),
            seed: seed as u64,
        },
    )?;
    println!("wrote {} (N={})", out.display(), p.n());
    Ok(())
}

fn heatmap(dir: &Path) -> Result<(), AqkaError> {
    let cfg = ExperimentConfig::from_file(dir.join("config.toml"))?;
    let plans = dir.join("plans");
    let mut entries: Vec<PathBuf> = std::fs::read_dir(&plans)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|s| s.to_str()).unwrap_or("");
            name.ends_with(".csv")
                && !name.ends_with(".ledger.csv")
                && !name.ends_with(".counts.csv")
                && !name.starts_with("anchors_")
        })
        .collect();
    entries.sort();
    if entries.is_empty() {
        return Err(AqkaError::Config(format!(
            "no plan files under {}; run with dump_plans = true",
            plans.display()
        )));
    }
    for path in entries {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string();
        let (seed, version) = parse_stem(&stem)?;
        let n = match cfg.dataset.n_train() {
            Some(n) => n,
            None => return Err(AqkaError::Config("heatmap needs a generated dataset".into())),
        };
        let counts = read_plan_counts(&path, n)?;
        write_kernel_csv(plans.join(format!("{stem}.counts.csv")), &counts)?;
        let anchors_path = plans.join(format!("anchors_v{version}_s{seed}.csv"));
        if anchors_path.exists() {
            let anchors: Vec<usize> = read_vector(&anchors_path)?
                .into_iter()
                .map(|v| v as usize)
                .collect();
            let (mx, med, ratio) = anchor_concentration(&counts, &anchors);
            println!("{stem}: anchor-block max {mx} / off-anchor median {med} = {ratio:.1}x");
        } else {
            println!("{stem}: counts written (no anchors)");
        }
    }
    Ok(())
}

fn parse_stem(stem: &str) -> Result<(usize, usize), AqkaError> {
    let bad = || AqkaError::Config(format!("unexpected plan file name '{stem}'"));
    let mut parts = stem.rsplit('_');
    let v = parts.next().and_then(|p| p.strip_prefix('v')).ok_or_else(bad)?;
    let s = parts.next().and_then(|p| p.strip_prefix('s')).ok_or_else(bad)?;
    Ok((s.parse().map_err(|_| bad())?, v.parse().map_err(|_| bad())?))
}

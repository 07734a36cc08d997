use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::allocators::AqkaConfig;
use crate::error::{AqkaError, Result};
use crate::kernelgen::{FeatureMapConfig, InputDist, KernelSpec};

use super::config::{DatasetSpec, ExperimentConfig, ModelKind, Sweep, SweepKey};

pub const PRESET_NAMES: &[&str] = &[
    "fig1",
    "sparsity",
    "quantum",
    "multinomial",
    "head-to-head",
    "n-scaling",
    "tau-sweep",
    "ml-sweep",
    "hybrid",
    "heatmap",
    "hardware_stand_in",
];

/// RBF bandwidth used by the RBF presets.
pub const RBF_GAMMA: f64 = 0.05;
/// Test points per seed.
pub const N_TEST: usize = 500;

pub fn planted_rbf(n: usize, m: usize) -> DatasetSpec {
    DatasetSpec::Planted {
        n,
        n_test: N_TEST,
        m,
        inputs: InputDist::StdNormal { d: 8 },
        kernel: KernelSpec::Rbf { gamma: RBF_GAMMA },
    }
}

pub fn planted_zz(n: usize, m: usize) -> DatasetSpec {
    DatasetSpec::Planted {
        n,
        n_test: N_TEST,
        m,
        inputs: InputDist::Uniform {
            d: 4,
            lo: 0.0,
            hi: 2.0 * PI,
        },
        kernel: KernelSpec::Zz(FeatureMapConfig::new(4, 2)),
    }
}

fn base(name: &str, dataset: DatasetSpec, methods: &[&str], seeds: usize) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_string(),
        master_seed: 0,
        dataset,
        methods: methods.iter().map(|s| s.to_string()).collect(),
        budgets: vec![],
        budget_multipliers: vec![],
        seeds,
        model: ModelKind::Krr,
        ridge: 0.01,
        svm_c: 1.0,
        tau: 0.05,
        landmarks: None,
        aqka: AqkaConfig::default(),
        sweep: None,
        fixed_data_seed: None,
        out_dir: None,
        workers: 0,
        dump_plans: false,
        metadata: BTreeMap::new(),
    }
}

fn note(cfg: &mut ExperimentConfig, k: &str, v: &str) {
    cfg.metadata.insert(k.to_string(), v.to_string());
}

/// Desk-scale configuration for a named experiment family.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let fig1_budgets = vec![3_000, 10_000, 30_000, 100_000, 300_000, 1_000_000];
    let mut cfg = match name {
        "fig1" => {
            let mut c = base(
                name,
                planted_rbf(225, 10),
                &[
                    "oracle",
                    "uniform",
                    "random",
                    "bernoulli-only",
                    "leverage",
                    "target-est",
                    "target-oracle",
                ],
                5,
            );
            c.budgets = fig1_budgets;
            note(&mut c, "budget_grid", "assumed 3e3..1e6 grid");
            c
        }
        "sparsity" => {
            let mut c = base(name, planted_rbf(225, 10), &["uniform", "target-est", "target-oracle"], 5);
            c.budgets = vec![30_000, 100_000];
            c.sweep = Some(Sweep {
                key: SweepKey::M,
                values: vec![5.0, 10.0, 20.0, 50.0, 100.0, 200.0],
            });
            c
        }
        "quantum" => {
            let mut c = base(
                name,
                planted_zz(150, 10),
                &["oracle", "uniform", "random", "target-est", "target-oracle"],
                5,
            );
            c.budgets = vec![3_000, 10_000, 30_000, 100_000, 300_000];
            c
        }
        "multinomial" => {
            let mut c = base(
                name,
                planted_rbf(225, 10),
                &[
                    "uniform",
                    "target-est",
                    "multinomial-est",
                    "target-oracle",
                    "multinomial-oracle",
                ],
                5,
            );
            c.budgets = fig1_budgets;
            c
        }
        "head-to-head" => {
            let mut c = base(
                name,
                planted_rbf(225, 10),
                &["uniform", "random", "target-est", "leverage", "shofar", "nystrom", "hybrid"],
                5,
            );
            c.budget_multipliers = vec![0.3, 1.0, 3.0];
            c
        }
        "n-scaling" => {
            let mut c = base(name, planted_rbf(225, 10), &["uniform", "target-est"], 5);
            c.budget_multipliers = vec![0.3, 1.0, 3.0, 10.0, 30.0];
            c.sweep = Some(Sweep {
                key: SweepKey::N,
                values: vec![100.0, 225.0, 400.0],
            });
            note(&mut c, "desk_scale", "N grid reduced to 100..400");
            c
        }
        "tau-sweep" => {
            let mut c = base(name, planted_rbf(225, 10), &["uniform", "shofar", "target-est"], 5);
            c.budget_multipliers = vec![1.0];
            c.sweep = Some(Sweep {
                key: SweepKey::Tau,
                values: vec![0.01, 0.02, 0.05, 0.10, 0.20],
            });
            c
        }
        "ml-sweep" => {
            let mut c = base(
                name,
                planted_rbf(225, 10),
                &["uniform", "nystrom", "nystrom-leverage"],
                5,
            );
            c.budget_multipliers = vec![1.0];
            c.sweep = Some(Sweep {
                key: SweepKey::Landmarks,
                values: vec![15.0, 30.0, 60.0, 56.0, 112.0],
            });
            c
        }
        "hybrid" => {
            let mut c = base(
                name,
                planted_rbf(225, 10),
                &["uniform", "target-est", "nystrom", "hybrid"],
                5,
            );
            c.budget_multipliers = vec![0.3, 1.0, 3.0];
            c
        }
        "heatmap" => {
            let mut c = base(name, planted_rbf(30, 4), &["uniform", "target-oracle", "target-est"], 1);
            c.budget_multipliers = vec![10.0];
            c.dump_plans = true;
            c
        }
        "hardware_stand_in" => {
            let mut c = base(name, planted_zz(50, 4), &["uniform", "random", "target-est"], 20);
            c.budget_multipliers = vec![1.0, 3.0, 10.0];
            c.fixed_data_seed = Some(0);
            note(
                &mut c,
                "stand_in",
                "synthetic 4-qubit ZZ kernel replaces the device-estimated matrix; only shot noise varies across seeds",
            );
            c
        }
        _ => {
            return Err(AqkaError::Config(format!(
                "unknown preset '{name}'; known: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    cfg.name = name.to_string();
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_validate() {
        for p in PRESET_NAMES {
            preset(p).unwrap().validate().unwrap();
        }
        assert!(matches!(preset("nope"), Err(AqkaError::Config(_))));
    }

    #[test]
    fn fig1_shape() {
        let c = preset("fig1").unwrap();
        match c.dataset {
            DatasetSpec::Planted { n, m, .. } => assert_eq!((n, m), (225, 10)),
            _ => panic!(),
        }
        assert_eq!(c.seeds, 5);
        assert_eq!(c.ridge, 0.01);
    }

    #[test]
    fn sparsity_grid() {
        let c = preset("sparsity").unwrap();
        assert_eq!(c.sweep.unwrap().values, vec![5.0, 10.0, 20.0, 50.0, 100.0, 200.0]);
    }
}

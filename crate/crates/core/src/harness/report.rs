use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{AqkaError, Result};
use crate::numerics::SymMatrix;

use super::run::{read_records, ExperimentRecord};

/// Aggregate over seeds for one (method, budget, sweep value) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: String,
    pub budget: u64,
    pub sweep_value: Option<f64>,
    pub count: usize,
    pub mean_accuracy: f64,
    /// Standard error over seeds; 0 for a single record.
    pub se_accuracy: f64,
    pub single_record: bool,
    pub mean_mse: f64,
    pub mean_op_norm_error: f64,
    /// Mean accuracy minus uniform's at the same budget, when present.
    pub gap_vs_uniform: Option<f64>,
}

fn key(r: &ExperimentRecord) -> (String, u64, String) {
    (
        r.method.clone(),
        r.budget,
        r.sweep_value.map(|v| v.to_string()).unwrap_or_default(),
    )
}

/// Mean ± SE per cell with gaps against `uniform`.
pub fn summarize(records: &[ExperimentRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, u64, String), Vec<&ExperimentRecord>> = BTreeMap::new();
    let mut order: Vec<(String, u64, String)> = Vec::new();
    for r in records {
        let k = key(r);
        if !groups.contains_key(&k) {
            order.push(k.clone());
        }
        groups.entry(k).or_default().push(r);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mut rows: Vec<SummaryRow> = order
        .iter()
        .map(|k| {
            let g = &groups[k];
            let acc: Vec<f64> = g.iter().map(|r| r.test_accuracy).collect();
            let mu = mean(&acc);
            let se = if acc.len() > 1 {
                let var = acc.iter().map(|a| (a - mu).powi(2)).sum::<f64>() / (acc.len() - 1) as f64;
                (var / acc.len() as f64).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                method: k.0.clone(),
                budget: k.1,
                sweep_value: g[0].sweep_value,
                count: g.len(),
                mean_accuracy: mu,
                se_accuracy: se,
                single_record: g.len() == 1,
                mean_mse: mean(&g.iter().map(|r| r.test_mse).collect::<Vec<_>>()),
                mean_op_norm_error: mean(&g.iter().map(|r| r.op_norm_error).collect::<Vec<_>>()),
                gap_vs_uniform: None,
            }
        })
        .collect();
    let uniform: BTreeMap<(u64, String), f64> = rows
        .iter()
        .filter(|r| r.method == "uniform")
        .map(|r| {
            (
                (r.budget, r.sweep_value.map(|v| v.to_string()).unwrap_or_default()),
                r.mean_accuracy,
            )
        })
        .collect();
    for r in rows.iter_mut() {
        let k = (r.budget, r.sweep_value.map(|v| v.to_string()).unwrap_or_default());
        r.gap_vs_uniform = uniform.get(&k).map(|u| r.mean_accuracy - u);
    }
    rows
}

/// Loads and concatenates record files, which must share the schema.
pub fn report(paths: &[impl AsRef<Path>]) -> Result<Vec<SummaryRow>> {
    let mut all = Vec::new();
    for p in paths {
        all.extend(read_records(p).map_err(|e| match e {
            AqkaError::Parse { line, msg } => AqkaError::Parse {
                line,
                msg: format!("{}: {msg}", p.as_ref().display()),
            },
            other => other,
        })?);
    }
    Ok(summarize(&all))
}

pub fn write_summary_csv(path: impl AsRef<Path>, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Aligned plain-text table.
pub fn format_table(rows: &[SummaryRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<22} {:>10} {:>8} {:>4} {:>8} {:>7} {:>9} {:>9}",
        "method", "budget", "sweep", "n", "acc", "se", "gap", "op_err"
    );
    for r in rows {
        let sweep = r.sweep_value.map(|v| format!("{v}")).unwrap_or_else(|| "-".into());
        let gap = r
            .gap_vs_uniform
            .map(|g| format!("{:+.2}", 100.0 * g))
            .unwrap_or_else(|| "-".into());
        let se = if r.single_record {
            "n/a".to_string()
        } else {
            format!("{:.3}", r.se_accuracy)
        };
        let _ = writeln!(
            s,
            "{:<22} {:>10} {:>8} {:>4} {:>8.3} {:>7} {:>9} {:>9.3}",
            r.method, r.budget, sweep, r.count, r.mean_accuracy, se, gap, r.mean_op_norm_error
        );
    }
    s
}

/// Largest count on the anchor×anchor block, the median count over pairs
/// with no anchor index, and their ratio.
pub fn anchor_concentration(counts: &SymMatrix, anchors: &[usize]) -> (f64, f64, f64) {
    let n = counts.n();
    let mut is_a = vec![false; n];
    for &a in anchors {
        is_a[a] = true;
    }
    let mut block_max = 0.0f64;
    let mut off = Vec::new();
    for i in 0..n {
        for j in i..n {
            let c = counts.get(i, j);
            if is_a[i] && is_a[j] {
                block_max = block_max.max(c);
            } else if !is_a[i] && !is_a[j] {
                off.push(c);
            }
        }
    }
    off.sort_by(f64::total_cmp);
    let med = if off.is_empty() {
        0.0
    } else if off.len() % 2 == 1 {
        off[off.len() / 2]
    } else {
        0.5 * (off[off.len() / 2 - 1] + off[off.len() / 2])
    };
    let ratio = if med > 0.0 { block_max / med } else { f64::INFINITY };
    (block_max, med, ratio)
}

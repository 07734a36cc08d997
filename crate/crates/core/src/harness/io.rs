use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AqkaError, Result};
use crate::numerics::SymMatrix;
use crate::pairs::pair_list;
use crate::shotsim::AllocationPlan;

/// Sidecar describing a stored kernel matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelMeta {
    pub n: usize,
    pub generator: String,
    pub seed: u64,
}

/// N rows of N comma-separated decimals, no header.
pub fn write_kernel_csv(path: impl AsRef<Path>, k: &SymMatrix) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    for i in 0..k.n() {
        let row: Vec<String> = k.row(i).iter().map(|v| format!("{v:?}")).collect();
        writeln!(f, "{}", row.join(","))?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_kernel_csv(path: impl AsRef<Path>) -> Result<SymMatrix> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let rows: Vec<Vec<f64>> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            l.split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| AqkaError::Parse {
                    line: k + 1,
                    msg: e.to_string(),
                })
        })
        .collect::<Result<_>>()?;
    SymMatrix::from_rows(&rows)
}

pub fn meta_path(kernel_path: &Path) -> std::path::PathBuf {
    kernel_path.with_extension("meta.toml")
}

pub fn write_kernel_meta(kernel_path: &Path, meta: &KernelMeta) -> Result<()> {
    let text = toml::to_string(meta).map_err(|e| AqkaError::Config(e.to_string()))?;
    std::fs::write(meta_path(kernel_path), text)?;
    Ok(())
}

pub fn read_kernel_meta(kernel_path: &Path) -> Result<KernelMeta> {
    let text = std::fs::read_to_string(meta_path(kernel_path))?;
    toml::from_str(&text).map_err(|e| AqkaError::Config(e.to_string()))
}

/// One value per line.
pub fn write_vector(path: impl AsRef<Path>, v: &[f64]) -> Result<()> {
    let text: String = v.iter().map(|x| format!("{x:?}\n")).collect();
    std::fs::write(path.as_ref(), text)?;
    Ok(())
}

pub fn read_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    std::fs::read_to_string(path.as_ref())?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            l.trim().parse::<f64>().map_err(|e| AqkaError::Parse {
                line: k + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

/// `round,i,j,delta` for every positive increment.
pub fn write_plan_csv(path: impl AsRef<Path>, n: usize, plans: &[AllocationPlan]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["round", "i", "j", "delta"])?;
    let pairs = pair_list(n);
    for (r, plan) in plans.iter().enumerate() {
        for (&(i, j), &d) in pairs.iter().zip(&plan.deltas) {
            if d > 0 {
                w.write_record([r.to_string(), i.to_string(), j.to_string(), d.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Sums a plan file into an N×N count matrix.
pub fn read_plan_counts(path: impl AsRef<Path>, n: usize) -> Result<SymMatrix> {
    let mut rdr = csv::Reader::from_path(path.as_ref())?;
    let mut k = SymMatrix::zeros(n);
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |c: usize| -> Result<usize> {
            rec.get(c)
                .and_then(|v| v.trim().parse::<usize>().ok())
                .ok_or_else(|| AqkaError::Parse {
                    line: line + 2,
                    msg: format!("bad field {c}"),
                })
        };
        let (i, j, d) = (parse(1)?, parse(2)?, parse(3)?);
        if i >= n || j >= n {
            return Err(AqkaError::Parse {
                line: line + 2,
                msg: "pair out of range".into(),
            });
        }
        k.set(i, j, k.get(i, j) + d as f64);
    }
    Ok(k)
}

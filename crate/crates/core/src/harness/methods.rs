use crate::allocators::{FillRule, LandmarkMode, SensitivityMode};
use crate::error::{AqkaError, Result};

/// A registered allocator, parsed from `name` or `name@param`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Exact kernel, no shot noise.
    Oracle,
    Uniform,
    Random,
    Aqka { mode: SensitivityMode, fill: FillRule },
    Shofar { tau: Option<f64> },
    Nystrom { mode: LandmarkMode, landmarks: Option<usize> },
    Hybrid { landmarks: Option<usize> },
}

pub const METHOD_NAMES: &[&str] = &[
    "oracle",
    "uniform",
    "random",
    "bernoulli-only",
    "target-est",
    "target-oracle",
    "multinomial-est",
    "multinomial-oracle",
    "leverage",
    "svm",
    "shofar",
    "nystrom",
    "nystrom-leverage",
    "nystrom-sens",
    "hybrid",
];

impl Method {
    pub fn parse(s: &str) -> Result<Method> {
        let (name, param) = match s.split_once('@') {
            Some((a, b)) => (a.trim(), Some(b.trim())),
            None => (s.trim(), None),
        };
        let bad = || AqkaError::Config(format!("bad parameter in method '{s}'"));
        let float = |p: Option<&str>| -> Result<Option<f64>> {
            p.map(|v| v.parse::<f64>().map_err(|_| bad())).transpose()
        };
        let count = |p: Option<&str>| -> Result<Option<usize>> {
            p.map(|v| v.parse::<usize>().map_err(|_| bad())).transpose()
        };
        let aqka = |mode, fill| Method::Aqka { mode, fill };
        let m = match name {
            "oracle" => Method::Oracle,
            "uniform" => Method::Uniform,
            "random" => Method::Random,
            "bernoulli-only" => aqka(SensitivityMode::BernoulliOnly, FillRule::TargetFill),
            "target-est" => aqka(SensitivityMode::Estimated, FillRule::TargetFill),
            "target-oracle" => aqka(SensitivityMode::Oracle, FillRule::TargetFill),
            "multinomial-est" => aqka(SensitivityMode::Estimated, FillRule::Multinomial),
            "multinomial-oracle" => aqka(SensitivityMode::Oracle, FillRule::Multinomial),
            "leverage" => aqka(SensitivityMode::Leverage, FillRule::TargetFill),
            "svm" => aqka(SensitivityMode::Svm, FillRule::TargetFill),
            "shofar" => Method::Shofar { tau: float(param)? },
            "nystrom" => Method::Nystrom {
                mode: LandmarkMode::Random,
                landmarks: count(param)?,
            },
            "nystrom-leverage" => Method::Nystrom {
                mode: LandmarkMode::Leverage,
                landmarks: count(param)?,
            },
            "nystrom-sens" => Method::Nystrom {
                mode: LandmarkMode::SensitivityRows,
                landmarks: count(param)?,
            },
            "hybrid" => Method::Hybrid {
                landmarks: count(param)?,
            },
            _ => {
                return Err(AqkaError::Config(format!(
                    "unknown method '{s}'; known: {}",
                    METHOD_NAMES.join(", ")
                )))
            }
        };
        let takes_param = matches!(
            m,
            Method::Shofar { .. } | Method::Nystrom { .. } | Method::Hybrid { .. }
        );
        if param.is_some() && !takes_param {
            return Err(bad());
        }
        Ok(m)
    }
}

//! Growth of −log P{f(G) ≤ δ E f(G)} with the dimension.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gstats::exact_profile;
use crate::norms::NormSpec;

use super::exact::ln_exact_cdf;
use super::splitting::{splitting_of, SplittingConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Sup,
    Lp { p: f64 },
}

impl Family {
    pub fn spec(&self, n: usize) -> Result<NormSpec> {
        match *self {
            Family::Sup => NormSpec::sup(n),
            Family::Lp { p } => NormSpec::lp(n, p),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Family::Sup => "sup".into(),
            Family::Lp { p } => format!("l{p}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Exact,
    Splitting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub mean: f64,
    pub log_p: f64,
    pub log_p_hw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingStudy {
    pub delta: f64,
    pub engine: Engine,
    /// Least-squares slope of log(−log P) against log n.
    pub gamma_hat: f64,
    pub rows: Vec<ScalingRow>,
}

impl ScalingStudy {
    pub fn strictly_increasing(&self) -> bool {
        self.rows.windows(2).all(|w| -w[1].log_p > -w[0].log_p)
    }
}

/// Runs the study over `n_list` (at least four dyadic dimensions). The anchor
/// is the exact mean. On failure the error lists the completed rows.
pub fn scaling_study(
    family: Family,
    delta: f64,
    n_list: &[usize],
    engine: Engine,
    scfg: &SplittingConfig,
) -> Result<ScalingStudy> {
    if n_list.len() < 4 || n_list.iter().any(|n| !n.is_power_of_two()) {
        return Err(invalid("n_list needs at least four powers of two"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta must lie in (0, 1)"));
    }
    let mut rows: Vec<ScalingRow> = Vec::new();
    for &n in n_list {
        match row(family, delta, n, engine, scfg) {
            Ok(r) => rows.push(r),
            Err(e) => {
                let done: Vec<String> = rows.iter().map(|r| format!("n={} log_p={:.6}", r.n, r.log_p)).collect();
                return Err(Error::Estimator(format!(
                    "scaling study aborted at n={n}: {e}; completed rows: [{}]",
                    done.join(", ")
                )));
            }
        }
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| ((r.n as f64).ln(), (-r.log_p).ln())).collect();
    Ok(ScalingStudy { delta, engine, gamma_hat: ls_slope(&pts), rows })
}

fn row(family: Family, delta: f64, n: usize, engine: Engine, scfg: &SplittingConfig) -> Result<ScalingRow> {
    let spec = family.spec(n)?;
    let mean = exact_profile(&spec)
        .and_then(|p| p.mean)
        .ok_or_else(|| Error::OutOfRegime(format!("no exact mean for {}", family.name())))?;
    let t = delta * mean;
    let (log_p, log_p_hw) = match engine {
        Engine::Exact => {
            let lp = ln_exact_cdf(&spec, t).ok_or_else(|| Error::OutOfRegime("no exact oracle".into()))?;
            (lp, 0.0)
        }
        Engine::Splitting => {
            let r = splitting_of(&spec, t, scfg)?;
            (r.log_p, r.log_p_hw)
        }
    };
    if !(log_p < 0.0) {
        return Err(Error::Degenerate(format!("log P = {log_p} leaves log(−log P) undefined")));
    }
    Ok(ScalingRow { n, mean, log_p, log_p_hw })
}

pub fn ls_slope(pts: &[(f64, f64)]) -> f64 {
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    sxy / sxx
}

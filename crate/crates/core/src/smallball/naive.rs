use crate::error::{Error, Result};
use crate::mc::{self, McConfig};
use crate::norms::Functional;
use crate::special::Z95;

use super::{SmallBallQuery, SmallBallResult};

/// Plain frequency of the event with a Wilson interval moved to log scale.
pub fn mc_smallball(query: &SmallBallQuery, cfg: &McConfig) -> Result<SmallBallResult> {
    query.validate()?;
    freq_smallball(&query.spec, query.threshold(), cfg)
}

pub fn freq_smallball<F: Functional + ?Sized>(f: &F, threshold: f64, cfg: &McConfig) -> Result<SmallBallResult> {
    let stats = mc::gaussian_stats(cfg, 0x30, f.dim(), 1, None, true, |x, o| {
        o[0] = if f.value(x) <= threshold { 1.0 } else { 0.0 };
    })?;
    let n = stats.n_indep as f64;
    let p = stats.mean(0);
    if p == 0.0 {
        // One-sided 95% bound: (1 − p)^n = 0.05.
        let log_upper = (-(0.05f64.ln() / n).exp_m1()).ln();
        return Err(Error::NoHits { samples: stats.n_indep, log_upper });
    }
    let (lo, hi) = wilson(p, n);
    let lp = p.ln();
    Ok(SmallBallResult {
        log_p: lp,
        log_p_hw: (lp - lo.ln()).max(hi.ln() - lp),
        levels: Vec::new(),
        accept_rates: Vec::new(),
        samples: cfg.samples,
    })
}

fn wilson(p: f64, n: f64) -> (f64, f64) {
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(f64::MIN_POSITIVE), (centre + half).min(1.0))
}

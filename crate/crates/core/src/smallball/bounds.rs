//! Upper bounds on P{f(G) ≤ δ·anchor}, all evaluated with explicit constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gstats::ConcentrationProfile;
use crate::norms::NormSpec;
use crate::ou::beta_floors;

use super::exact::ln_exact_cdf;
use super::{Anchor, SmallBallQuery};

/// Points of the t-grid, e^{−t} = δ^{j/GRID} for j = 1..=GRID.
pub const GRID: usize = 200;

/// Exponent form (Cε)^{ck} of the Latała–Oleszkiewicz bound. Its constants are
/// not explicit, so only the pair (ε, k) is reported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoExponent {
    pub delta: f64,
    pub k: f64,
}

/// Every bound is a natural logarithm. `None` marks a bound outside its regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub delta: f64,
    pub anchor: Anchor,
    pub threshold: f64,
    /// Threshold relative to the mean.
    pub delta_mean: f64,
    /// exp(−(1−δ)²k/2) from Lipschitz concentration.
    pub log_classic: f64,
    pub lo_exponent: LoExponent,
    /// ½ ε^{(d−log 2)/log 2} with ε = threshold/median < 1/2.
    pub log_kv: Option<f64>,
    /// Semigroup bound through the gradient ratio β̃.
    pub log_hyper_sb: Option<f64>,
    pub hyper_t: Option<f64>,
    /// Semigroup bound through the variance ratio β.
    pub log_super_sb: Option<f64>,
    pub super_t: Option<f64>,
    pub log_exact: Option<f64>,
}

impl BoundReport {
    /// (name, log-bound) for every numeric bound that is in regime.
    pub fn bounds(&self) -> Vec<(&'static str, f64)> {
        let mut out = vec![("classic", self.log_classic)];
        for (name, v) in [("kv", self.log_kv), ("hyper_sb", self.log_hyper_sb), ("super_sb", self.log_super_sb)] {
            if let Some(v) = v {
                out.push((name, v));
            }
        }
        out
    }

    /// Names of bounds that fall below the exact log-probability by more than `tol`.
    pub fn violations(&self, tol: f64) -> Vec<&'static str> {
        match self.log_exact {
            Some(e) => self.bounds().into_iter().filter(|(_, b)| *b < e - tol).map(|(n, _)| n).collect(),
            None => Vec::new(),
        }
    }
}

/// d(f, δ) = min(n, −log P{f(G) ≤ δ·med f(G)}) for families with an exact CDF.
pub fn d_param(spec: &NormSpec, delta: f64) -> Option<f64> {
    let med = crate::gstats::exact_profile(spec)?.median?;
    let lp = ln_exact_cdf(spec, delta * med)?;
    Some(d_from_log_p(spec.dim(), lp))
}

pub fn d_from_log_p(n: usize, log_p: f64) -> f64 {
    (-log_p).min(n as f64)
}

pub fn bound_report(profile: &ConcentrationProfile, query: &SmallBallQuery, d_at_half: Option<f64>) -> Result<BoundReport> {
    query.validate()?;
    if profile.dim != query.spec.dim() {
        return Err(Error::DimensionMismatch { expected: query.spec.dim(), got: profile.dim });
    }
    let mean = profile.mean.value;
    let threshold = query.threshold();
    let delta_mean = threshold / mean;
    let k = profile.k.value;
    let log_classic = if delta_mean < 1.0 { -(1.0 - delta_mean).powi(2) * k / 2.0 } else { 0.0 };

    let log_kv = d_at_half.and_then(|d| log_kv(d, threshold / profile.median.value));

    let (bt, b, l) = (profile.beta_tilde.value, profile.beta.value, profile.l_ratio.value);
    let hyper = semigroup_bound(delta_mean, |t| Ok(beta_floors(bt, b, l, t)?.beta_tilde_floor))?;
    let superb = semigroup_bound(delta_mean, |t| Ok(beta_floors(bt, b, l, t)?.beta_floor / 100.0))?;

    Ok(BoundReport {
        delta: query.delta,
        anchor: query.anchor,
        threshold,
        delta_mean,
        log_classic,
        lo_exponent: LoExponent { delta: delta_mean, k },
        log_kv,
        log_hyper_sb: hyper.map(|h| h.0),
        hyper_t: hyper.map(|h| h.1),
        log_super_sb: superb.map(|h| h.0),
        super_t: superb.map(|h| h.1),
        log_exact: ln_exact_cdf(&query.spec, threshold),
    })
}

/// ln(½ ε^{(d − log 2)/log 2}), valid for ε ∈ (0, 1/2).
pub fn log_kv(d_at_half: f64, eps: f64) -> Option<f64> {
    if !(eps > 0.0 && eps < 0.5) {
        return None;
    }
    let ln2 = std::f64::consts::LN_2;
    Some(-ln2 + (d_at_half - ln2) / ln2 * eps.ln())
}

/// min over the t-grid of −ε(t)²·floor(t), where ε(t) = 1 − δe^{−t} − √(1−e^{−2t})
/// and floor(t) lower-bounds the reciprocal of the relevant ratio at time t.
///
/// If f(x) ≤ δ E f then by subadditivity P_t f(x) ≤ (1 − ε(t)) E P_t f, so any
/// lower-deviation inequality for P_t f applies.
fn semigroup_bound<F: Fn(f64) -> Result<f64>>(delta: f64, floor: F) -> Result<Option<(f64, f64)>> {
    if !(delta > 0.0 && delta < 0.5) {
        return Ok(None);
    }
    let mut best: Option<(f64, f64)> = None;
    for j in 1..=GRID {
        let e1 = delta.powf(j as f64 / GRID as f64);
        let t = -e1.ln();
        let eps = 1.0 - delta * e1 - (1.0 - e1 * e1).sqrt();
        if eps <= 0.0 {
            continue;
        }
        let v = -eps * eps * floor(t)?;
        if best.is_none_or(|(b, _)| v < b) {
            best = Some((v, t));
        }
    }
    Ok(best)
}

//! θ-balancing of Υ by coordinate exclusions, and the small-deviation
//! pipeline that feeds the balanced seminorm into the deviation inequality.

use serde::{Deserialize, Serialize};

use crate::constants::{BALANCE_CAP, SMALLDEV_C_TAU};
use crate::deform::upsilon::{harvest, ndelta_residual, profile_of, EventSet, Harvest, Upsilon, UpsilonParams};
use crate::error::{invalid, Error, Result};
use crate::gstats::ConcentrationProfile;
use crate::mc::{self, EstimateCI, McConfig};
use crate::norms::{unc_constant_lower, Functional, NormSpec};
use crate::smallball::{splitting_of, SplittingConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    /// Coordinate whose exclusion produced Υ_k; `None` for Υ₀.
    pub chosen: Option<usize>,
    pub mean: EstimateCI,
    pub variance: f64,
    pub max_partial: f64,
    pub argmax_partial: usize,
    pub functionals: usize,
    /// E Υ_{k−1}(G) − E Υ_k(G) under common random numbers.
    pub drop: Option<EstimateCI>,
    /// drop/(θ⁴ E Υ₀(G)), the measured decrement constant.
    pub margin_c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformationTrace {
    pub theta: f64,
    pub mean0: f64,
    pub rows: Vec<TraceRow>,
    /// Number of exclusions performed.
    pub m: usize,
    pub cap: usize,
    pub cap_reached: bool,
    /// θ⁵ ≥ n^{−δ/4}.
    pub precondition_holds: bool,
}

impl DeformationTrace {
    /// Expectations non-increasing in k up to `k_hw` half-widths of the drop.
    pub fn monotone(&self, k_hw: f64) -> bool {
        self.rows.iter().filter_map(|r| r.drop).all(|d| d.value + k_hw * d.half_width >= 0.0)
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("k,chosen,mean,mean_hw,variance,max_partial,argmax_partial,functionals,drop,drop_hw,margin_c\n");
        for r in &self.rows {
            let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.10e}"));
            s.push_str(&format!(
                "{},{},{:.10e},{:.10e},{:.10e},{:.10e},{},{},{},{},{}\n",
                r.k,
                r.chosen.map_or(String::new(), |c| c.to_string()),
                r.mean.value,
                r.mean.half_width,
                r.variance,
                r.max_partial,
                r.argmax_partial,
                r.functionals,
                opt(r.drop.map(|d| d.value)),
                opt(r.drop.map(|d| d.half_width)),
                opt(r.margin_c),
            ));
        }
        s
    }
}

pub struct BalanceOutcome<'a> {
    pub upsilon: Upsilon<'a>,
    pub events: EventSet,
    pub trace: DeformationTrace,
}

/// Owned result of a full run: the final kept-functional store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceSummary {
    pub store: Vec<Vec<f64>>,
    pub acceptance: Vec<f64>,
    pub events: EventSet,
    pub trace: DeformationTrace,
}

struct Pass {
    mean: EstimateCI,
    variance: f64,
    partials: Vec<f64>,
    drop: Option<EstimateCI>,
}

/// One MC pass: E Υ, Var Υ, E|∂_iΥ| for all i, and E(prev − Υ) if given.
/// Same seed every call, so successive passes share their Gaussian samples.
fn measure(u: &Upsilon, prev: Option<&Upsilon>, cfg: &McConfig) -> Result<Pass> {
    let n = u.dim;
    let stats = mc::gaussian_stats(cfg, 0x62, n, n + 3, None, true, |x, out| {
        let (head, tail) = out.split_at_mut(n);
        let v = u.value_grad(x, head);
        head.iter_mut().for_each(|g| *g = g.abs());
        tail[0] = v;
        tail[1] = v * v;
        tail[2] = prev.map_or(0.0, |p| p.value(x) - v);
    })?;
    let mean = stats.estimate(n);
    let m2 = stats.mean(n + 1);
    Ok(Pass {
        mean,
        variance: (m2 - mean.value * mean.value).max(0.0),
        partials: (0..n).map(|i| stats.mean(i)).collect(),
        drop: prev.map(|_| stats.estimate(n + 2)),
    })
}

/// Runs the balancing loop on an existing harvest.
pub fn balance_harvest<'a>(hv: &'a Harvest<'_>, params: &UpsilonParams, cfg: &McConfig) -> Result<BalanceOutcome<'a>> {
    let n = hv.dim;
    let theta = params.theta;
    let cap = (BALANCE_CAP * theta.powi(-4)).ceil() as usize;
    let mut events = EventSet::empty(hv.t_grid.len());
    let mut ups = hv.build(params.h, &events)?;
    let mut prev: Option<Upsilon<'a>> = None;
    let mut rows = Vec::new();
    let mut chosen = None;
    let mut mean0 = 0.0;
    let mut cap_reached = false;
    loop {
        let pass = measure(&ups, prev.as_ref(), cfg)?;
        let k = rows.len();
        if k == 0 {
            mean0 = pass.mean.value;
        }
        let (arg, max_partial) = pass
            .partials
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        let scale = theta.powi(4) * mean0;
        rows.push(TraceRow {
            k,
            chosen,
            mean: pass.mean,
            variance: pass.variance,
            max_partial,
            argmax_partial: arg,
            functionals: ups.len(),
            drop: pass.drop,
            margin_c: pass.drop.filter(|_| scale > 0.0).map(|d| d.value / scale),
        });
        if pass.mean.value <= 0.0 || max_partial < theta * mean0 {
            break;
        }
        if k >= cap {
            cap_reached = true;
            break;
        }
        events.add_everywhere(arg, theta / 4.0 * mean0)?;
        chosen = Some(arg);
        prev = Some(std::mem::replace(&mut ups, hv.build(params.h, &events)?));
    }
    let m = rows.len() - 1;
    Ok(BalanceOutcome {
        upsilon: ups,
        events,
        trace: DeformationTrace {
            theta,
            mean0,
            rows,
            m,
            cap,
            cap_reached,
            precondition_holds: theta.powi(5) >= (n as f64).powf(-params.delta / 4.0),
        },
    })
}

/// Harvests once and balances. Reaching the iteration cap is returned as a
/// flagged outcome, not an error.
pub fn balance_loop(spec: &NormSpec, params: &UpsilonParams, cfg: &McConfig) -> Result<BalanceSummary> {
    let profile = profile_of(spec, cfg)?;
    let hv = harvest(spec, &profile, params, cfg)?;
    let out = balance_harvest(&hv, params, cfg)?;
    Ok(BalanceSummary {
        store: out.upsilon.store_vecs(),
        acceptance: out.upsilon.acceptance.clone(),
        events: out.events,
        trace: out.trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmalldevConfig {
    pub sample_budget: usize,
    pub inner: usize,
    pub splitting: SplittingConfig,
}

impl Default for SmalldevConfig {
    fn default() -> Self {
        SmalldevConfig { sample_budget: 256, inner: 512, splitting: SplittingConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisFlags {
    /// Lower estimate of unc(f).
    pub unc_lower: f64,
    /// unc(f) ≤ n^{δ/64} on the lower estimate.
    pub unc_ok: bool,
    pub ndelta_residual: f64,
    pub ndelta_ok: bool,
    /// δ√(log n)·Lip(f) ≤ E f(G).
    pub lip_ok: bool,
}

impl HypothesisFlags {
    pub fn verified(&self) -> bool {
        self.unc_ok && self.ndelta_ok && self.lip_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmalldevReport {
    pub epsilon: f64,
    pub delta: f64,
    pub tau: f64,
    pub theta: f64,
    pub mean_f: f64,
    pub mean_upsilon: f64,
    pub var_upsilon: f64,
    /// 1 − (1−ε)E f/E Υ_m: the relative deviation of Υ_m below its own mean
    /// implied by f ≤ (1−ε)E f, since Υ_m ≤ f.
    pub epsilon_eff: f64,
    /// log of min(1, 2 exp(−ε_eff²(E Υ_m)²/(100 Var Υ_m))).
    pub log_bound: f64,
    /// Splitting estimate of log P{f(G) ≤ (1−ε)E f(G)}.
    pub log_empirical: f64,
    pub log_empirical_hw: f64,
    pub hypotheses: HypothesisFlags,
    pub trace: DeformationTrace,
}

impl SmalldevReport {
    pub fn verified(&self) -> bool {
        self.hypotheses.verified()
    }

    pub fn bound_holds(&self) -> bool {
        self.log_bound >= self.log_empirical - self.log_empirical_hw
    }
}

/// log min(1, 2 exp(−ε²(E Υ)²/(100 Var Υ))).
pub fn sdi_log_bound(epsilon: f64, mean: f64, var: f64) -> f64 {
    if epsilon <= 0.0 || mean <= 0.0 {
        return 0.0;
    }
    if var <= 0.0 {
        return f64::NEG_INFINITY;
    }
    (std::f64::consts::LN_2 - epsilon * epsilon * mean * mean / (100.0 * var)).min(0.0)
}

/// δ = log R(f)/log n capped at 1.
pub fn delta_of(profile: &ConcentrationProfile) -> f64 {
    (profile.r.value.ln() / (profile.dim as f64).ln()).clamp(f64::MIN_POSITIVE, 1.0)
}

/// τ = δ²ε/(2C), θ = n^{−δ/32}; balance; bound the lower deviation of f
/// through Υ_m ≤ f and compare with a splitting estimate.
pub fn smalldev_pipeline(spec: &NormSpec, epsilon: f64, sd: &SmalldevConfig, cfg: &McConfig) -> Result<SmalldevReport> {
    if !(epsilon > 0.0 && epsilon <= 0.5) {
        return Err(invalid("epsilon must lie in (0, 1/2]"));
    }
    let n = spec.dim();
    let profile = profile_of(spec, cfg)?;
    let delta = delta_of(&profile);
    let tau = delta * delta * epsilon / (2.0 * SMALLDEV_C_TAU);
    let lo = 1.0 / (n as f64).ln();
    if tau < lo || tau > 0.5 {
        return Err(Error::OutOfRegime(format!("tau = {tau:.4} outside [1/log n, 1/2] = [{lo:.4}, 0.5]")));
    }
    let theta = (n as f64).powf(-delta / 32.0);
    let unc_lower = if spec.is_seminorm() { f64::INFINITY } else { unc_constant_lower(spec, cfg)? };
    let mut params = UpsilonParams::new(tau, delta, unc_lower.max(1.0), theta);
    params.sample_budget = sd.sample_budget;
    params.inner = sd.inner;
    let hv = harvest(spec, &profile, &params, cfg)?;
    let out = balance_harvest(&hv, &params, cfg)?;
    let last = out.trace.rows.last().expect("at least one row");
    let (mean_u, var_u) = (last.mean.value, last.variance);
    let mean_f = profile.mean.value;
    let epsilon_eff = if mean_u > 0.0 { 1.0 - (1.0 - epsilon) * mean_f / mean_u } else { 0.0 };
    let log_bound = sdi_log_bound(epsilon_eff, mean_u, var_u);
    let mut scfg = sd.splitting;
    scfg.seed = cfg.seed;
    scfg.threads = cfg.streams;
    let split = splitting_of(spec, (1.0 - epsilon) * mean_f, &scfg)?;
    let residual = ndelta_residual(&profile, delta);
    let hypotheses = HypothesisFlags {
        unc_lower,
        unc_ok: unc_lower <= (n as f64).powf(delta / 64.0),
        ndelta_residual: residual,
        ndelta_ok: residual >= -1e-12,
        lip_ok: delta * (n as f64).ln().sqrt() * profile.lip.value <= mean_f,
    };
    Ok(SmalldevReport {
        epsilon,
        delta,
        tau,
        theta,
        mean_f,
        mean_upsilon: mean_u,
        var_upsilon: var_u,
        epsilon_eff,
        log_bound,
        log_empirical: split.log_p,
        log_empirical_hw: split.log_p_hw,
        hypotheses,
        trace: out.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_sup_stops_immediately() {
        let spec = NormSpec::sup(16).unwrap();
        let tau = 1.0 / 16f64.ln();
        let mut params = UpsilonParams::new(tau, 1.0, 1.0, 0.5);
        params.sample_budget = 64;
        params.inner = 64;
        let out = balance_loop(&spec, &params, &McConfig::new(4000, 2)).unwrap();
        assert_eq!(out.trace.m, 0);
        assert_eq!(out.trace.rows.len(), 1);
        assert!(!out.trace.cap_reached);
    }

    #[test]
    fn sdi_bound_is_monotone_in_epsilon() {
        let b: Vec<f64> = [0.1, 0.2, 0.3, 0.4].iter().map(|&e| sdi_log_bound(e, 3.0, 1e-4)).collect();
        assert!(b.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(sdi_log_bound(0.1, 3.0, 10.0), 0.0);
    }
}

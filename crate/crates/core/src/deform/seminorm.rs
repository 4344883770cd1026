//! Truncated-functional seminorm U, its F-transform W = F_{U,1}, and the
//! contracted seminorm T = W(D̃·) with a small balanced gradient.

use serde::{Deserialize, Serialize};

use crate::constants::{SEMINORM_C_PRIME, SEMINORM_T, SEMINORM_TAU};
use crate::deform::ftransform::{unc_eval, FTransform};
use crate::deform::upsilon::profile_of;
use crate::error::{invalid, Error, Result};
use crate::mc::{self, EstimateCI, McConfig};
use crate::norms::{Diagonal, Functional, FunctionalSet, NormSpec};
use crate::positions::{diagonal_contraction, ContractionParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeminormParams {
    pub delta: f64,
    pub c_prime: f64,
    /// Markov level t in the ℓ1 cap C'·δ·t·E f.
    pub t: f64,
    /// τ in L = τ E f/n.
    pub tau: f64,
    /// Number of sampled gradients standing in for the norming functionals
    /// of a non-polytope norm.
    pub harvest: usize,
    pub contraction: ContractionParams,
}

impl Default for SeminormParams {
    fn default() -> Self {
        SeminormParams {
            delta: 0.01,
            c_prime: SEMINORM_C_PRIME,
            t: SEMINORM_T,
            tau: SEMINORM_TAU,
            harvest: 256,
            contraction: ContractionParams { l: 0.0, h: 0.05, t_max: 10.0, tol_h: 1e-3 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeminormReport {
    pub mean_f: f64,
    /// Coordinates with E|∂_i f| ≥ C'δ/n·E f.
    pub large: Vec<usize>,
    /// |I| ≥ 2n/C': the alternative where f is itself small-ball bounded.
    pub large_branch: bool,
    pub source_functionals: usize,
    pub u_functionals: usize,
    pub u_retains_all: bool,
    /// U ≤ W ≤ 2U on every sample.
    pub sandwich_holds: bool,
    /// T ≤ 2f on every sample.
    pub t_le_2f: bool,
    /// E T(G)/E f(G).
    pub mean_ratio: EstimateCI,
    /// max_i E|∂_i T(G)|·n/E f(G).
    pub partial_constant: f64,
    pub d: Vec<f64>,
    pub zero_set: Vec<usize>,
    pub contraction_converged: bool,
}

impl SeminormReport {
    pub fn mean_ratio_ok(&self) -> bool {
        self.mean_ratio.value >= 0.25
    }
}

/// Norming functionals of `spec`, or gradients at sampled points if the
/// norm is not a polytope.
fn source_functionals(spec: &NormSpec, count: usize, cfg: &McConfig) -> Result<FunctionalSet> {
    if let Some(fs) = spec.functionals() {
        return Ok(fs);
    }
    let n = spec.dim();
    let vecs = mc::par_map(cfg.streams, cfg.seed, 0x70, count, |_, rng| {
        let y = mc::gaussian_vec(rng, n);
        let mut g = vec![0.0; n];
        spec.gradient(&y, &mut g);
        g
    });
    FunctionalSet::new(vecs, true)
}

pub fn mc_seminorm_build(spec: &NormSpec, params: &SeminormParams, cfg: &McConfig) -> Result<SeminormReport> {
    if !spec.is_unconditional() {
        return Err(invalid("the seminorm construction needs a 1-unconditional norm"));
    }
    if !(params.delta > 0.0 && params.c_prime > 0.0 && params.t >= 1.0 && params.tau > 0.0) {
        return Err(invalid("delta, C', tau must be positive and t at least 1"));
    }
    let n = spec.dim();
    let profile = profile_of(spec, cfg)?;
    let mean_f = profile.mean.value;
    let cut = params.c_prime * params.delta / n as f64 * mean_f;
    let large: Vec<usize> = (0..n).filter(|&i| profile.a_vec[i].value >= cut).collect();
    let fs = source_functionals(spec, params.harvest, cfg)?;
    let cap = params.c_prime * params.delta * params.t * mean_f;
    let mut kept = Vec::new();
    for v in fs.iter() {
        let mut r = v.to_vec();
        large.iter().for_each(|&i| r[i] = 0.0);
        let l1: f64 = r.iter().map(|x| x.abs()).sum();
        if l1 > 0.0 && l1 <= cap {
            kept.push(r);
        }
    }
    if kept.is_empty() {
        return Err(Error::Degenerate("no functional survives the l1 cap".into()));
    }
    let u_count = kept.len();
    let u = FunctionalSet::new(kept, true)?;
    let w = FTransform::new(u.clone(), 1.0)?;
    let mut cp = params.contraction;
    cp.l = params.tau / n as f64 * mean_f;
    let contraction = diagonal_contraction(&w, &cp, cfg)?;
    let t = Diagonal { inner: &w, lambda: &contraction.d };

    // U ≤ W ≤ 2U, T ≤ 2f, and the means, on one common sample.
    let stats = mc::gaussian_stats(cfg, 0x71, n, n + 4, None, true, |x, out| {
        let uv = unc_eval(&u, x);
        let wv = w.value(x);
        let (head, tail) = out.split_at_mut(n);
        let tv = t.value_grad(x, head);
        head.iter_mut().for_each(|g| *g = g.abs());
        let fv = spec.value(x);
        let tol = 1e-12 * (1.0 + fv);
        tail[0] = tv;
        tail[1] = fv;
        tail[2] = f64::from(uv <= wv + tol && wv <= 2.0 * uv + tol);
        tail[3] = f64::from(tv <= 2.0 * fv + tol);
    })?;
    let mean_ratio = stats.derived(|m| m[n] / m[n + 1]);
    let partial_constant =
        (0..n).map(|i| stats.mean(i)).fold(0.0, f64::max) * n as f64 / mean_f;
    Ok(SeminormReport {
        mean_f,
        large_branch: large.len() as f64 >= 2.0 * n as f64 / params.c_prime,
        large,
        source_functionals: fs.len(),
        u_functionals: u_count,
        u_retains_all: u_count == fs.len(),
        sandwich_holds: stats.mean(n + 2) > 1.0 - 1e-9,
        t_le_2f: stats.mean(n + 3) > 1.0 - 1e-9,
        mean_ratio,
        partial_constant,
        d: contraction.d,
        zero_set: contraction.zero_set,
        contraction_converged: contraction.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sup_keeps_every_functional() {
        let spec = NormSpec::sup(8).unwrap();
        let p = SeminormParams { delta: 1.0 / SEMINORM_C_PRIME, ..Default::default() };
        let r = mc_seminorm_build(&spec, &p, &McConfig::new(2000, 4)).unwrap();
        assert!(r.large.is_empty());
        assert!(r.u_retains_all);
        assert!(r.sandwich_holds && r.t_le_2f);
    }

    #[test]
    fn rejects_conditional_norms() {
        let inner = NormSpec::sup(2).unwrap();
        let spec = NormSpec::linear_image(vec![1.0, 1.0, -1.0, 1.0], inner, false).unwrap();
        assert!(mc_seminorm_build(&spec, &SeminormParams::default(), &McConfig::new(1000, 0)).is_err());
    }
}

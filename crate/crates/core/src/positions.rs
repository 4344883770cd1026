//! Diagonal positions of a norm: the w^{1,1} balancing map, minimal-M and
//! ℓ-position residual reports, and the diagonal contraction flow.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mc::{self, EstimateCI, McConfig};
use crate::norms::{Diagonal, Functional};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub a_vec: Vec<EstimateCI>,
    /// max_i |a_i/ā − 1|.
    pub spread: f64,
    /// E(G_i ∂_i f(G)) minus its average over i.
    pub m_residuals: Vec<EstimateCI>,
    /// E(G_i ∂_i f(G) f(G)) minus its average over i.
    pub ell_residuals: Vec<EstimateCI>,
    pub mean: EstimateCI,
    /// Σ_i E(G_i ∂_i f(G)) − E f(G), zero by Gaussian integration by parts.
    pub ibp_gap: EstimateCI,
}

pub fn balance_report<F: Functional + ?Sized>(f: &F, cfg: &McConfig) -> Result<BalanceReport> {
    let n = f.dim();
    // Slots: f, |∂_i f| (n), G_i ∂_i f (n), G_i ∂_i f · f (n).
    let stats = mc::gaussian_stats(cfg, 0x20, n, 1 + 3 * n, None, true, |x, out| {
        let (head, rest) = out.split_at_mut(1);
        let (a, rest) = rest.split_at_mut(n);
        let (m, l) = rest.split_at_mut(n);
        let v = f.value_grad(x, a);
        head[0] = v;
        for i in 0..n {
            m[i] = x[i] * a[i];
            l[i] = m[i] * v;
            a[i] = a[i].abs();
        }
    })?;
    let a_vec: Vec<EstimateCI> = (0..n).map(|i| stats.estimate(1 + i)).collect();
    let spread = spread_of(&a_vec.iter().map(|e| e.value).collect::<Vec<_>>());
    let centered = |base: usize| -> Vec<EstimateCI> {
        (0..n)
            .map(|i| {
                let mut c: Vec<(usize, f64)> = (0..n).map(|j| (base + j, -1.0 / n as f64)).collect();
                c[i].1 += 1.0;
                stats.linear(&c)
            })
            .collect()
    };
    let m_residuals = centered(1 + n);
    let ell_residuals = centered(1 + 2 * n);
    let mut ibp: Vec<(usize, f64)> = (0..n).map(|j| (1 + n + j, 1.0)).collect();
    ibp.push((0, -1.0));
    Ok(BalanceReport {
        a_vec,
        spread,
        m_residuals,
        ell_residuals,
        mean: stats.estimate(0),
        ibp_gap: stats.linear(&ibp),
    })
}

pub fn spread_of(a: &[f64]) -> f64 {
    let abar = a.iter().sum::<f64>() / a.len() as f64;
    a.iter().map(|ai| (ai / abar - 1.0).abs()).fold(0.0, f64::max)
}

/// Positive diagonal map normalized to unit geometric mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalMap {
    pub lambda: Vec<f64>,
}

impl DiagonalMap {
    pub fn identity(n: usize) -> Self {
        DiagonalMap { lambda: vec![1.0; n] }
    }

    pub fn normalized(mut lambda: Vec<f64>) -> Result<Self> {
        if lambda.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(invalid("diagonal entries must be positive"));
        }
        let g = (lambda.iter().map(|l| l.ln()).sum::<f64>() / lambda.len() as f64).exp();
        lambda.iter_mut().for_each(|l| *l /= g);
        Ok(DiagonalMap { lambda })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct W11Solution {
    pub map: DiagonalMap,
    pub iterations: usize,
    pub spread: f64,
}

/// Damped multiplicative fixed point λ_i ← λ_i (ā/a_i)^η for the w^{1,1}
/// position, with common random numbers across iterations. A step that
/// raises the spread is undone and η halved: for sums of blocks the
/// activation probabilities react sharply to λ and the plain iteration
/// oscillates.
pub fn w11_solve<F: Functional + ?Sized>(f: &F, cfg: &McConfig, tol: f64, max_iter: usize) -> Result<W11Solution> {
    if !(tol > 0.0 && tol < 0.5) {
        return Err(invalid("tol must lie in (0, 0.5)"));
    }
    let n = f.dim();
    let mut eta = 0.5;
    let mut lambda = DiagonalMap::identity(n);
    let mut a = a_vec_at(f, &lambda.lambda, cfg)?;
    let mut spread = spread_of(&a);
    let mut iterations = 0;
    loop {
        if spread <= tol {
            return Ok(W11Solution { map: lambda, iterations, spread });
        }
        if iterations >= max_iter {
            return Err(Error::Convergence { iterations, residual: spread });
        }
        if a.iter().any(|&ai| ai <= 0.0) {
            return Err(Error::Degenerate("a coordinate never carries the gradient".into()));
        }
        let abar = a.iter().sum::<f64>() / n as f64;
        let next = lambda.lambda.iter().zip(&a).map(|(l, ai)| l * (abar / ai).powf(eta)).collect();
        let next = DiagonalMap::normalized(next)?;
        let a_next = a_vec_at(f, &next.lambda, cfg)?;
        let s_next = spread_of(&a_next);
        iterations += 1;
        if s_next < spread || eta < 1.0 / 256.0 {
            lambda = next;
            a = a_next;
            spread = s_next;
        } else {
            eta *= 0.5;
        }
    }
}

/// E|∂_i (f∘Λ)(G)| with a fixed sample; same seed gives common random numbers.
pub fn a_vec_at<F: Functional + ?Sized>(f: &F, lambda: &[f64], cfg: &McConfig) -> Result<Vec<f64>> {
    let g = Diagonal { inner: f, lambda };
    let n = f.dim();
    let stats = mc::gaussian_stats(cfg, 0x21, n, n, None, true, |x, out| {
        g.gradient(x, out);
        out.iter_mut().for_each(|v| *v = v.abs());
    })?;
    Ok(stats.means())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionResult {
    /// Final diagonal, entries in {0} ∪ [1/2 − 2h, 1].
    pub d: Vec<f64>,
    pub zero_set: Vec<usize>,
    pub converged: bool,
    pub t_end: f64,
    /// (time, max_i |H_i|) per step.
    pub trace: Vec<(f64, f64)>,
    pub mean_v: f64,
    /// 2 E V(G)/(n L).
    pub zero_bound_stated: f64,
    pub within_stated_bound: bool,
    /// E V(G)/(L log 2), the bound that follows from d_i E(G_i ∂_iV(DG)) ≥ L
    /// at the moment an entry crosses 1/2.
    pub zero_bound_derived: f64,
    pub within_derived_bound: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContractionParams {
    pub l: f64,
    pub h: f64,
    pub t_max: f64,
    pub tol_h: f64,
}

impl Default for ContractionParams {
    fn default() -> Self {
        ContractionParams { l: 0.1, h: 0.05, t_max: 40.0, tol_h: 1e-3 }
    }
}

/// Explicit Euler for d_i' = −(E(G_i ∂_i[V(D·)](G)) − L)_+ − (1/4 − |d_i − 1/4|)_+
/// from D = I, clamped to [0, 1].
pub fn diagonal_contraction<F: Functional + ?Sized>(
    v: &F,
    params: &ContractionParams,
    cfg: &McConfig,
) -> Result<ContractionResult> {
    let ContractionParams { l, h, t_max, tol_h } = *params;
    if !(l > 0.0) {
        return Err(invalid("L must be positive"));
    }
    if !(h > 0.0 && h <= 0.05) {
        return Err(invalid("step h must lie in (0, 0.05]"));
    }
    let n = v.dim();
    let mut d = vec![1.0; n];
    let mut t = 0.0;
    let mut trace = Vec::new();
    let mut converged = false;
    while t < t_max - 1e-12 {
        let m = m_vec_at(v, &d, cfg)?;
        let hv: Vec<f64> = d
            .iter()
            .zip(&m)
            .map(|(di, mi)| -(mi - l).max(0.0) - (0.25 - (di - 0.25).abs()).max(0.0))
            .collect();
        let hmax = hv.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        trace.push((t, hmax));
        if hmax < tol_h {
            converged = true;
            break;
        }
        for (di, hi) in d.iter_mut().zip(&hv) {
            *di = (*di + h * hi).clamp(0.0, 1.0);
        }
        t += h;
    }
    // Below 1/2 the second term alone drives an entry to 0.
    for di in d.iter_mut() {
        if *di < 0.5 - 2.0 * h {
            *di = 0.0;
        }
    }
    let zero_set: Vec<usize> = (0..n).filter(|&i| d[i] == 0.0).collect();
    let mean_v = mc::gaussian_stats(cfg, 0x23, n, 1, None, true, |x, o| o[0] = v.value(x))?.mean(0);
    let zero_bound_stated = 2.0 * mean_v / (n as f64 * l);
    let zero_bound_derived = mean_v / (l * std::f64::consts::LN_2);
    let k = zero_set.len() as f64;
    Ok(ContractionResult {
        within_stated_bound: k <= zero_bound_stated + 1e-9,
        within_derived_bound: k <= zero_bound_derived + 1e-9,
        d,
        zero_set,
        converged,
        t_end: t,
        trace,
        mean_v,
        zero_bound_stated,
        zero_bound_derived,
    })
}

/// E(G_i ∂_i[V(D·)](G)) for all i.
fn m_vec_at<F: Functional + ?Sized>(v: &F, d: &[f64], cfg: &McConfig) -> Result<Vec<f64>> {
    let g = Diagonal { inner: v, lambda: d };
    let n = v.dim();
    let stats = mc::gaussian_stats(cfg, 0x22, n, n, None, true, |x, out| {
        g.gradient(x, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o *= xi;
        }
    })?;
    Ok(stats.means())
}

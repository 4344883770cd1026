//! The seminorm Υ assembled from semigroup-smoothed gradients g = P_t∇f(y)
//! of sampled points y that pass the F_t filter and avoid the events E_t.

use serde::{Deserialize, Serialize};

use crate::constants::UPSILON_INNER;
use crate::error::{invalid, Error, Result};
use crate::gstats::{estimate_profile, exact_concentration_profile, ConcentrationProfile};
use crate::mc::{self, McConfig};
use crate::norms::{Functional, NormSpec};
use crate::ou::mehler_coeffs;

/// Points in the default t grid.
pub const GRID_POINTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpsilonParams {
    pub tau: f64,
    pub delta: f64,
    pub h: f64,
    /// Sorted subset of [τ, 1/2]; empty selects the default geometric grid.
    #[serde(default)]
    pub t_grid: Vec<f64>,
    #[serde(default = "default_budget")]
    pub sample_budget: usize,
    pub theta: f64,
    #[serde(default = "default_inner")]
    pub inner: usize,
    /// Also offer the evaluation point itself as a candidate y.
    #[serde(default = "default_true")]
    pub self_candidate: bool,
}

fn default_true() -> bool {
    true
}

fn default_budget() -> usize {
    512
}

fn default_inner() -> usize {
    UPSILON_INNER
}

impl UpsilonParams {
    pub fn new(tau: f64, delta: f64, h: f64, theta: f64) -> Self {
        UpsilonParams {
            tau,
            delta,
            h,
            t_grid: Vec::new(),
            sample_budget: default_budget(),
            theta,
            inner: default_inner(),
            self_candidate: true,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let lo = 1.0 / (n as f64).ln();
        if !(self.tau >= lo - 1e-12 && self.tau <= 0.5) {
            return Err(Error::OutOfRegime(format!("tau = {} outside [1/log n, 1/2] = [{lo:.4}, 0.5]", self.tau)));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(invalid("delta must lie in (0, 1]"));
        }
        if !(self.h >= 1.0) {
            return Err(invalid("H must be at least 1"));
        }
        if !(self.theta > 0.0) {
            return Err(invalid("theta must be positive"));
        }
        if self.sample_budget == 0 || self.inner < 2 {
            return Err(invalid("sample_budget must be positive and inner at least 2"));
        }
        let grid = &self.t_grid;
        if grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("t_grid must be strictly increasing"));
        }
        if grid.iter().any(|&t| t < self.tau - 1e-12 || t > 0.5 + 1e-12) {
            return Err(invalid("t_grid must lie in [tau, 1/2]"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        if self.t_grid.is_empty() {
            default_t_grid(self.tau)
        } else {
            self.t_grid.clone()
        }
    }
}

/// Geometric grid of `GRID_POINTS` points on [τ, 1/2].
pub fn default_t_grid(tau: f64) -> Vec<f64> {
    if tau >= 0.5 {
        return vec![0.5];
    }
    let r = (0.5 / tau).ln() / (GRID_POINTS - 1) as f64;
    (0..GRID_POINTS).map(|j| if j + 1 == GRID_POINTS { 0.5 } else { tau * (r * j as f64).exp() }).collect()
}

/// Exclusion rules (i, threshold) per grid time: y is excluded at t when
/// |⟨e_i, P_t∇f(y)⟩| ≥ threshold for some rule. Rules are only ever added.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventSet {
    pub rules: Vec<Vec<(usize, f64)>>,
}

impl EventSet {
    pub fn empty(grid_len: usize) -> Self {
        EventSet { rules: vec![Vec::new(); grid_len] }
    }

    pub fn add_everywhere(&mut self, i: usize, threshold: f64) -> Result<()> {
        if !(threshold > 0.0) {
            return Err(invalid("event thresholds must be positive"));
        }
        self.rules.iter_mut().for_each(|r| r.push((i, threshold)));
        Ok(())
    }

    pub fn excludes(&self, t_idx: usize, g: &[f64]) -> bool {
        self.rules.get(t_idx).is_some_and(|r| r.iter().any(|&(i, thr)| g[i].abs() >= thr))
    }

    /// `self` contains every rule of `other`.
    pub fn contains(&self, other: &EventSet) -> bool {
        other.rules.len() == self.rules.len()
            && other.rules.iter().zip(&self.rules).all(|(o, s)| o.iter().all(|r| s.contains(r)))
    }
}

/// Shared inner Gaussians and filter constants: everything needed to
/// compute P_t∇f(y) on the grid and test y ∈ F_t.
struct Smoother<'a> {
    f: &'a dyn Functional,
    grid: Vec<f64>,
    coeffs: Vec<(f64, f64)>,
    /// Row-major (inner/2) × dim; used as antithetic pairs.
    z: Vec<f64>,
    mean_f: f64,
    grad_l2: f64,
    delta: f64,
}

impl Smoother<'_> {
    /// Writes P_t∇f(y) for every grid time into `out` (grid × dim) and the
    /// F_t membership into `pass`.
    fn run(&self, y: &[f64], out: &mut [f64], pass: &mut [bool]) {
        let n = y.len();
        let mut p = vec![0.0; n];
        let mut gbuf = vec![0.0; n];
        let pairs = self.z.len() / n;
        for (j, &(a, b)) in self.coeffs.iter().enumerate() {
            let acc = &mut out[j * n..(j + 1) * n];
            acc.fill(0.0);
            for zj in self.z.chunks_exact(n) {
                for s in [1.0, -1.0] {
                    for ((pi, yi), zi) in p.iter_mut().zip(y).zip(zj) {
                        *pi = a * yi + s * b * zi;
                    }
                    self.f.gradient(&p, &mut gbuf);
                    acc.iter_mut().zip(&gbuf).for_each(|(o, gi)| *o += gi);
                }
            }
            let scale = a / (2 * pairs) as f64;
            acc.iter_mut().for_each(|o| *o *= scale);
            let t = self.grid[j];
            let dot: f64 = acc.iter().zip(y).map(|(g, y)| g * y).sum();
            let norm = acc.iter().map(|g| g * g).sum::<f64>().sqrt();
            pass[j] = dot >= (1.0 - 4.0 * t) * self.mean_f
                && norm <= self.grad_l2 * (n as f64).powf(-self.delta * t / 8.0);
        }
    }
}

/// Smoothed gradients of all sampled points, computed once; rebuilding Υ
/// for new events only refilters.
pub struct Harvest<'a> {
    pub dim: usize,
    pub t_grid: Vec<f64>,
    pub points: usize,
    /// Row-major points × grid × dim.
    g: Vec<f64>,
    /// F_t membership, points × grid.
    in_f: Vec<bool>,
    pub mean_f: f64,
    pub grad_l2: f64,
    pub lip_f: f64,
    self_candidate: bool,
    smoother: Smoother<'a>,
}

impl<'a> Harvest<'a> {
    pub fn gradient(&self, k: usize, t_idx: usize) -> &[f64] {
        let off = (k * self.t_grid.len() + t_idx) * self.dim;
        &self.g[off..off + self.dim]
    }

    pub fn in_f(&self, k: usize, t_idx: usize) -> bool {
        self.in_f[k * self.t_grid.len() + t_idx]
    }

    /// Fraction of points passing the F_t filter, per grid time.
    pub fn filter_rates(&self) -> Vec<f64> {
        self.rates(|_, _| true)
    }

    fn rates<P: Fn(usize, usize) -> bool>(&self, extra: P) -> Vec<f64> {
        (0..self.t_grid.len())
            .map(|j| {
                let hit = (0..self.points).filter(|&k| self.in_f(k, j) && extra(k, j)).count();
                hit as f64 / self.points as f64
            })
            .collect()
    }

    pub fn build(&self, h: f64, events: &EventSet) -> Result<Upsilon<'_>> {
        if events.rules.len() != self.t_grid.len() {
            return Err(invalid("event set does not match the t grid"));
        }
        let keep = |k: usize, j: usize| !events.excludes(j, self.gradient(k, j));
        let mut store = Vec::new();
        for k in 0..self.points {
            for j in 0..self.t_grid.len() {
                if self.in_f(k, j) && keep(k, j) {
                    store.extend_from_slice(self.gradient(k, j));
                }
            }
        }
        Ok(Upsilon {
            dim: self.dim,
            h,
            store,
            acceptance: self.rates(keep),
            probe: self.self_candidate.then(|| Probe { smoother: &self.smoother, events: events.clone() }),
        })
    }
}

/// Samples `sample_budget` points y and estimates P_t∇f(y) for each grid
/// time from `inner` Mehler points. The same inner Gaussians (in antithetic
/// pairs) serve every (y, t).
pub fn harvest<'a>(
    f: &'a dyn Functional,
    profile: &ConcentrationProfile,
    params: &UpsilonParams,
    cfg: &McConfig,
) -> Result<Harvest<'a>> {
    let n = f.dim();
    params.validate(n)?;
    let grid = params.grid();
    let mut zrng = mc::substream(cfg.seed, 0x61, 0);
    let smoother = Smoother {
        f,
        coeffs: grid.iter().map(|&t| mehler_coeffs(t)).collect(),
        grid: grid.clone(),
        z: mc::gaussian_vec(&mut zrng, params.inner / 2 * n),
        mean_f: profile.mean.value,
        grad_l2: profile.grad_l2_sq.value.sqrt(),
        delta: params.delta,
    };
    let rows = mc::par_map(cfg.streams, cfg.seed, 0x60, params.sample_budget, |_, rng| {
        let y = mc::gaussian_vec(rng, n);
        let mut out = vec![0.0; grid.len() * n];
        let mut pass = vec![false; grid.len()];
        smoother.run(&y, &mut out, &mut pass);
        (out, pass)
    });
    let mut g = Vec::with_capacity(params.sample_budget * grid.len() * n);
    let mut in_f = Vec::with_capacity(params.sample_budget * grid.len());
    for (o, p) in rows {
        g.extend(o);
        in_f.extend(p);
    }
    Ok(Harvest {
        dim: n,
        t_grid: grid,
        points: params.sample_budget,
        g,
        in_f,
        mean_f: smoother.mean_f,
        grad_l2: smoother.grad_l2,
        lip_f: profile.lip.value,
        self_candidate: params.self_candidate,
        smoother,
    })
}

/// The evaluation point as its own candidate y.
struct Probe<'a> {
    smoother: &'a Smoother<'a>,
    events: EventSet,
}

/// Υ(x) = max(max_g |⟨x, g⟩|, (1/H) max_g Σ|g_i||x_i|) over the stored g.
/// With the self candidate, the evaluation point x also contributes
/// P_t∇f(x) whenever x ∈ F_t outside E_t; this is one more admissible y, so
/// every bound on the sampled store carries over. An empty store is the
/// degenerate seminorm Υ ≡ 0.
pub struct Upsilon<'a> {
    pub dim: usize,
    pub h: f64,
    store: Vec<f64>,
    /// Fraction of points kept per grid time (F_t filter and events).
    pub acceptance: Vec<f64>,
    probe: Option<Probe<'a>>,
}

impl Upsilon<'_> {
    pub fn len(&self) -> usize {
        self.store.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }

    pub fn degenerate(&self) -> bool {
        self.is_empty()
    }

    pub fn functionals(&self) -> impl Iterator<Item = &[f64]> {
        self.store.chunks_exact(self.dim)
    }

    /// max ‖g‖₂ over the store; an upper bound for Lip(Υ).
    pub fn lip_surrogate(&self) -> f64 {
        self.functionals().map(crate::norms::l2).fold(0.0, f64::max)
    }

    pub fn store_vecs(&self) -> Vec<Vec<f64>> {
        self.functionals().map(<[f64]>::to_vec).collect()
    }

    /// Admissible P_t∇f(x) for the self candidate, flattened.
    fn own(&self, x: &[f64]) -> Vec<f64> {
        let Some(p) = &self.probe else { return Vec::new() };
        let m = p.smoother.grid.len();
        let mut out = vec![0.0; m * self.dim];
        let mut pass = vec![false; m];
        p.smoother.run(x, &mut out, &mut pass);
        let mut kept = Vec::new();
        for (j, g) in out.chunks_exact(self.dim).enumerate() {
            if pass[j] && !p.events.excludes(j, g) {
                kept.extend_from_slice(g);
            }
        }
        kept
    }

    /// Value and the winning functional and branch (signed or symmetrized).
    fn argmax(&self, x: &[f64]) -> (f64, Vec<f64>, bool) {
        let own = self.own(x);
        let mut best = (0.0, usize::MAX, false);
        for (k, g) in self.functionals().chain(own.chunks_exact(self.dim)).enumerate() {
            let mut d = 0.0;
            let mut u = 0.0;
            for (gi, xi) in g.iter().zip(x) {
                d += gi * xi;
                u += (gi * xi).abs();
            }
            let d = d.abs();
            let u = u / self.h;
            if d > best.0 {
                best = (d, k, false);
            }
            if u > best.0 {
                best = (u, k, true);
            }
        }
        let (v, k, sym) = best;
        let w = if k == usize::MAX {
            Vec::new()
        } else if k < self.len() {
            self.store[k * self.dim..(k + 1) * self.dim].to_vec()
        } else {
            let j = k - self.len();
            own[j * self.dim..(j + 1) * self.dim].to_vec()
        };
        (v, w, sym)
    }
}

impl Functional for Upsilon<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.argmax(x).0
    }

    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        self.value_grad(x, g);
    }

    fn value_grad(&self, x: &[f64], g: &mut [f64]) -> f64 {
        let (v, w, sym) = self.argmax(x);
        if w.is_empty() {
            g.fill(0.0);
            return 0.0;
        }
        if sym {
            for ((o, wi), xi) in g.iter_mut().zip(w).zip(x) {
                *o = wi.abs() * xi.signum() / self.h;
            }
        } else {
            let d: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
            let s = d.signum();
            g.iter_mut().zip(&w).for_each(|(o, wi)| *o = s * wi);
        }
        v
    }

    fn lipschitz(&self) -> Option<f64> {
        // The self candidate obeys the same F_t norm cap as the store.
        self.probe.as_ref().map_or(Some(self.lip_surrogate()), |p| {
            let n = self.dim as f64;
            Some(p.smoother.grad_l2 * n.powf(-p.smoother.delta * p.smoother.grid[0] / 8.0))
        })
    }
}

/// Exact profile when available, Monte Carlo otherwise.
pub fn profile_of(spec: &NormSpec, cfg: &McConfig) -> Result<ConcentrationProfile> {
    match exact_concentration_profile(spec) {
        Some(p) => Ok(p),
        None => estimate_profile(spec, cfg),
    }
}

/// One-shot construction: harvest, filter by `events`, and return the
/// kept-functional store together with the per-t acceptance rates.
pub fn upsilon_build(
    spec: &NormSpec,
    params: &UpsilonParams,
    events: &EventSet,
    cfg: &McConfig,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let profile = profile_of(spec, cfg)?;
    let hv = harvest(spec, &profile, params, cfg)?;
    let u = hv.build(params.h, events)?;
    Ok((u.store_vecs(), u.acceptance.clone()))
}

/// Residual log R(f)/log n − δ of the hypothesis n^{−δ} ≥ 1/R(f);
/// nonnegative when it holds.
pub fn ndelta_residual(profile: &ConcentrationProfile, delta: f64) -> f64 {
    profile.r.value.ln() / (profile.dim as f64).ln() - delta
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sup_setup(n: usize, budget: usize) -> (NormSpec, ConcentrationProfile, UpsilonParams) {
        let spec = NormSpec::sup(n).unwrap();
        let profile = profile_of(&spec, &McConfig::default()).unwrap();
        let tau = 1.0 / (n as f64).ln();
        let mut params = UpsilonParams::new(tau, 1.0, 1.0, 0.5);
        params.sample_budget = budget;
        (spec, profile, params)
    }

    #[test]
    fn grid_spans_range() {
        let g = default_t_grid(0.2);
        assert_eq!(g.len(), GRID_POINTS);
        assert!((g[0] - 0.2).abs() < 1e-15 && g[GRID_POINTS - 1] == 0.5);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn dominated_by_f_with_single_time() {
        let (spec, profile, mut params) = sup_setup(16, 128);
        params.t_grid = vec![params.tau];
        let cfg = McConfig::new(1000, 3);
        let hv = harvest(&spec, &profile, &params, &cfg).unwrap();
        let ups = hv.build(1.0, &EventSet::empty(1)).unwrap();
        assert!(!ups.degenerate());
        let mut rng = mc::substream(5, 0, 0);
        for _ in 0..1000 {
            let x = mc::gaussian_vec(&mut rng, 16);
            assert!(ups.value(&x) <= spec.value(&x) * (1.0 + 1e-12));
        }
        let bound = profile.lip.value * 16f64.powf(-params.delta * params.tau / 8.0);
        assert!(ups.lip_surrogate() <= bound + 1e-12);
    }

    #[test]
    fn events_shrink_pointwise() {
        let (spec, profile, params) = sup_setup(16, 64);
        let hv = harvest(&spec, &profile, &params, &McConfig::new(1000, 1)).unwrap();
        let e0 = EventSet::empty(hv.t_grid.len());
        let mut e1 = e0.clone();
        e1.add_everywhere(2, 0.05).unwrap();
        assert!(e1.contains(&e0));
        let (u0, u1) = (hv.build(1.0, &e0).unwrap(), hv.build(1.0, &e1).unwrap());
        assert!(u1.len() < u0.len());
        let mut rng = mc::substream(7, 0, 0);
        for _ in 0..200 {
            let x = mc::gaussian_vec(&mut rng, 16);
            assert!(u1.value(&x) <= u0.value(&x));
        }
        for g in u1.functionals() {
            assert!(g[2].abs() < 0.05);
        }
    }

    #[test]
    fn everything_excluded_is_degenerate() {
        let (spec, profile, params) = sup_setup(8, 16);
        let hv = harvest(&spec, &profile, &params, &McConfig::new(1000, 1)).unwrap();
        let mut ev = EventSet::empty(hv.t_grid.len());
        for i in 0..8 {
            ev.add_everywhere(i, 1e-9).unwrap();
        }
        let u = hv.build(1.0, &ev).unwrap();
        assert!(u.degenerate());
        let mut g = vec![1.0; 8];
        assert_eq!(u.value_grad(&[1.0; 8], &mut g), 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_tau_outside_regime() {
        let p = UpsilonParams::new(0.1, 1.0, 1.0, 0.5);
        assert!(matches!(p.validate(16), Err(Error::OutOfRegime(_))));
    }
}

//! Deterministic parallel Monte Carlo.
//!
//! Work is cut into fixed batches. Batch `b` draws from ChaCha8 stream `b` of
//! a key derived from `(seed, domain)`, so the sample set never depends on how
//! many worker threads run. Batch results are reduced in batch order.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::Z95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub samples: usize,
    pub seed: u64,
    pub batch: usize,
    /// Worker threads. Never affects results.
    pub streams: usize,
    pub antithetic: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { samples: 100_000, seed: 0, batch: 64, streams: 1, antithetic: true }
    }
}

impl McConfig {
    pub fn new(samples: usize, seed: u64) -> Self {
        McConfig { samples, seed, ..Default::default() }
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_streams(mut self, streams: usize) -> Self {
        self.streams = streams;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.samples == 0 {
            return Err(Error::Config("samples and batch must be positive".into()));
        }
        if self.samples < self.batch {
            return Err(Error::Config(format!(
                "samples ({}) must be at least batch ({})",
                self.samples, self.batch
            )));
        }
        if self.batch < 2 {
            return Err(Error::Config("batch must hold at least two samples".into()));
        }
        Ok(())
    }

    pub fn n_batches(&self) -> usize {
        self.samples.div_ceil(self.batch)
    }

    fn batch_len(&self, b: usize) -> usize {
        let start = b * self.batch;
        (self.samples - start).min(self.batch)
    }
}

/// A point estimate with a 95% normal-theory half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateCI {
    pub value: f64,
    pub half_width: f64,
    pub n_eff: usize,
}

impl EstimateCI {
    pub fn exact(value: f64) -> Self {
        EstimateCI { value, half_width: 0.0, n_eff: 0 }
    }

    pub fn lo(&self) -> f64 {
        self.value - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.value + self.half_width
    }

    pub fn contains(&self, x: f64) -> bool {
        (self.value - x).abs() <= self.half_width
    }

    /// `self ≤ other` up to `k` combined half-widths.
    pub fn le(&self, other: &EstimateCI, k: f64) -> bool {
        self.value <= other.value + k * (self.half_width + other.half_width)
    }
}

/// Independent key for each (seed, domain) pair; splitmix64 finalizer.
pub fn derive_key(seed: u64, domain: u64) -> u64 {
    let mut z = seed ^ domain.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG for substream `stream` under `(seed, domain)`.
pub fn substream(seed: u64, domain: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_key(seed, domain));
    rng.set_stream(stream);
    rng
}

pub fn fill_gaussian<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

pub fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    fill_gaussian(rng, &mut v);
    v
}

fn pool(threads: usize) -> Arc<rayon::ThreadPool> {
    static POOLS: OnceLock<Mutex<HashMap<usize, Arc<rayon::ThreadPool>>>> = OnceLock::new();
    let threads = threads.max(1);
    let mut map = POOLS.get_or_init(Default::default).lock().unwrap();
    map.entry(threads)
        .or_insert_with(|| {
            Arc::new(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .expect("thread pool"),
            )
        })
        .clone()
}

/// Runs `f` on `threads` workers. Nested calls from inside a pool run inline.
pub fn install<T: Send, F: FnOnce() -> T + Send>(threads: usize, f: F) -> T {
    if rayon::current_thread_index().is_some() {
        return f();
    }
    pool(threads).install(f)
}

/// Maps `f(index, rng)` over `count` independent work items, one substream
/// each, collecting in index order.
pub fn par_map<T, F>(threads: usize, seed: u64, domain: u64, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> T + Sync + Send,
{
    install(threads, || {
        (0..count)
            .into_par_iter()
            .map(|i| {
                let mut rng = substream(seed, domain, i as u64);
                f(i, &mut rng)
            })
            .collect()
    })
}

/// Per-batch sums of `k` statistics, plus optionally the raw values of one
/// statistic kept for order statistics.
#[derive(Debug, Clone)]
pub struct BatchStats {
    k: usize,
    /// Row-major `n_batches × k` batch means.
    means: Vec<f64>,
    weights: Vec<f64>,
    pub total: usize,
    /// Number of independent draws (antithetic pairs count once).
    pub n_indep: usize,
    pub kept: Vec<f64>,
}

impl BatchStats {
    pub fn n_batches(&self) -> usize {
        self.weights.len()
    }

    pub fn batch_mean(&self, b: usize, j: usize) -> f64 {
        self.means[b * self.k + j]
    }

    pub fn mean(&self, j: usize) -> f64 {
        (0..self.n_batches()).map(|b| self.weights[b] * self.batch_mean(b, j)).sum()
    }

    pub fn means(&self) -> Vec<f64> {
        (0..self.k).map(|j| self.mean(j)).collect()
    }

    pub fn estimate(&self, j: usize) -> EstimateCI {
        let m = self.mean(j);
        let nb = self.n_batches();
        let s2: f64 = (0..nb).map(|b| (self.weights[b] * (self.batch_mean(b, j) - m)).powi(2)).sum();
        let var = if nb > 1 { s2 * nb as f64 / (nb - 1) as f64 } else { f64::INFINITY };
        EstimateCI { value: m, half_width: Z95 * var.sqrt(), n_eff: self.n_indep }
    }

    /// CI for a fixed linear combination Σ c_j m_j of statistic means.
    pub fn linear(&self, coeffs: &[(usize, f64)]) -> EstimateCI {
        let nb = self.n_batches();
        let value: f64 = coeffs.iter().map(|&(j, c)| c * self.mean(j)).sum();
        let s2: f64 = (0..nb)
            .map(|b| {
                let lb: f64 = coeffs.iter().map(|&(j, c)| c * self.batch_mean(b, j)).sum();
                (self.weights[b] * (lb - value)).powi(2)
            })
            .sum();
        let var = if nb > 1 { s2 * nb as f64 / (nb - 1) as f64 } else { f64::INFINITY };
        EstimateCI { value, half_width: Z95 * var.sqrt(), n_eff: self.n_indep }
    }

    /// Delta-method CI for a smooth function of the statistic means, with
    /// variance taken from the spread of the linearized batch values.
    pub fn derived<G: Fn(&[f64]) -> f64>(&self, g: G) -> EstimateCI {
        let m = self.means();
        let value = g(&m);
        let nb = self.n_batches();
        let grad: Vec<f64> = (0..self.k)
            .map(|j| {
                let h = 1e-6 * m[j].abs().max(1e-3);
                let mut up = m.clone();
                let mut dn = m.clone();
                up[j] += h;
                dn[j] -= h;
                (g(&up) - g(&dn)) / (2.0 * h)
            })
            .collect();
        let mut s2 = 0.0;
        for b in 0..nb {
            let lin: f64 = (0..self.k)
                .filter(|&j| grad[j] != 0.0)
                .map(|j| grad[j] * (self.batch_mean(b, j) - m[j]))
                .sum();
            s2 += (self.weights[b] * lin).powi(2);
        }
        let var = if nb > 1 { s2 * nb as f64 / (nb - 1) as f64 } else { f64::INFINITY };
        EstimateCI { value, half_width: Z95 * var.sqrt(), n_eff: self.n_indep }
    }
}

/// Generic batch runner. `body(rng, len, sums, kept)` draws `len` samples
/// from `rng`, adds `k` per-sample statistics into `sums`, optionally pushes
/// raw values into `kept`, and returns the number of independent draws.
pub fn run_batches<F>(cfg: &McConfig, domain: u64, k: usize, body: F) -> Result<BatchStats>
where
    F: Fn(&mut ChaCha8Rng, usize, &mut [f64], &mut Vec<f64>) -> usize + Sync + Send,
{
    cfg.validate()?;
    let nb = cfg.n_batches();
    let rows: Vec<(Vec<f64>, Vec<f64>, usize)> = par_map(cfg.streams, cfg.seed, domain, nb, |b, rng| {
        let len = cfg.batch_len(b);
        let mut sum = vec![0.0; k];
        let mut kept = Vec::new();
        let indep = body(rng, len, &mut sum, &mut kept);
        sum.iter_mut().for_each(|s| *s /= len as f64);
        (sum, kept, indep)
    });
    let mut means = Vec::with_capacity(nb * k);
    let mut weights = Vec::with_capacity(nb);
    let mut kept = Vec::new();
    let mut n_indep = 0;
    for (b, (m, kp, ind)) in rows.into_iter().enumerate() {
        means.extend(m);
        weights.push(cfg.batch_len(b) as f64 / cfg.samples as f64);
        kept.extend(kp);
        n_indep += ind;
    }
    Ok(BatchStats { k, means, weights, total: cfg.samples, n_indep, kept })
}

/// Evaluates `stat(x, out)` on `cfg.samples` standard Gaussian vectors in
/// `R^dim`, writing `k` statistics per sample.
///
/// With `cfg.antithetic`, samples come in pairs `(z, -z)`. When `even` is set
/// the caller promises every statistic is even in `x`, so `-z` reuses the
/// value computed at `z`.
pub fn gaussian_stats<F>(
    cfg: &McConfig,
    domain: u64,
    dim: usize,
    k: usize,
    keep: Option<usize>,
    even: bool,
    stat: F,
) -> Result<BatchStats>
where
    F: Fn(&[f64], &mut [f64]) + Sync + Send,
{
    run_batches(cfg, domain, k, |rng, len, sum, kept| {
        let mut x = vec![0.0; dim];
        let mut out = vec![0.0; k];
        let mut out2 = vec![0.0; k];
        let mut indep = 0;
        let mut done = 0;
        while done < len {
            fill_gaussian(rng, &mut x);
            stat(&x, &mut out);
            indep += 1;
            if cfg.antithetic && done + 1 < len {
                if even {
                    out2.copy_from_slice(&out);
                } else {
                    x.iter_mut().for_each(|v| *v = -*v);
                    stat(&x, &mut out2);
                }
                for j in 0..k {
                    sum[j] += out[j] + out2[j];
                }
                if let Some(c) = keep {
                    kept.push(out[c]);
                    kept.push(out2[c]);
                }
                done += 2;
            } else {
                for j in 0..k {
                    sum[j] += out[j];
                }
                if let Some(c) = keep {
                    kept.push(out[c]);
                }
                done += 1;
            }
        }
        indep
    })
}

/// Sample median with a distribution-free 95% CI from binomial rank bounds,
/// computed on `n_eff` independent draws.
pub fn median_ci(values: &mut [f64], n_eff: usize) -> EstimateCI {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    let med = if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    };
    // Rank offset in units of the pooled sample: z·√(n_eff)/2 ranks out of n_eff.
    let scale = n as f64 / n_eff.max(1) as f64;
    let off = (Z95 * (n_eff as f64).sqrt() / 2.0 * scale).ceil() as usize + 1;
    let lo = values[(n / 2).saturating_sub(off)];
    let hi = values[(n / 2 + off).min(n - 1)];
    EstimateCI { value: med, half_width: (med - lo).max(hi - med), n_eff }
}

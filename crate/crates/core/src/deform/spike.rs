//! Removing the functionals with a large i-th coordinate from a seminorm
//! w(x) = max_{y ∈ T} ⟨x, y⟩, and the resulting drop of E w(G).

use serde::{Deserialize, Serialize};

use crate::constants::SPIKE_DROP_C;
use crate::error::{invalid, Result};
use crate::mc::{self, EstimateCI, McConfig};
use crate::norms::{Functional, FunctionalSet};
use crate::special::{norm_cdf, norm_ppf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeRemoval {
    /// T_i; `None` when every functional was removed (w̃ ≡ 0).
    pub kept: Option<FunctionalSet>,
    pub removed: usize,
    /// (α/4)·√E‖∇w‖².
    pub threshold: f64,
}

impl SpikeRemoval {
    pub fn degenerate(&self) -> bool {
        self.kept.is_none()
    }
}

/// T_i = {y ∈ T : |y_i| ≤ (α/4)√grad_l2_sq}.
pub fn spike_removal(fs: &FunctionalSet, i: usize, alpha: f64, grad_l2_sq: f64) -> Result<SpikeRemoval> {
    if i >= fs.dim() {
        return Err(invalid("coordinate out of range"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha must lie in (0, 1)"));
    }
    if !(grad_l2_sq > 0.0) {
        return Err(invalid("grad_l2_sq must be positive"));
    }
    let threshold = alpha / 4.0 * grad_l2_sq.sqrt();
    let kept = fs.filter(|y| y[i].abs() <= threshold);
    let removed = fs.len() - kept.as_ref().map_or(0, |k| k.len());
    Ok(SpikeRemoval { kept, removed, threshold })
}

/// E|∂_i w(G)| and E‖∇w(G)‖².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeStats {
    pub a_i: f64,
    pub grad_l2_sq: f64,
    /// a_i/√grad_l2_sq.
    pub alpha: f64,
}

pub fn spike_stats(fs: &FunctionalSet, i: usize, cfg: &McConfig) -> Result<SpikeStats> {
    let n = fs.dim();
    let stats = mc::gaussian_stats(cfg, 0x50, n, 2, None, true, |x, out| {
        let mut g = vec![0.0; n];
        fs.gradient(x, &mut g);
        out[0] = g[i].abs();
        out[1] = g.iter().map(|v| v * v).sum();
    })?;
    let (a_i, grad_l2_sq) = (stats.mean(0), stats.mean(1));
    Ok(SpikeStats { a_i, grad_l2_sq, alpha: a_i / grad_l2_sq.sqrt() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeDrop {
    pub removal: SpikeRemoval,
    /// E w(G) − E w̃(G) with common random numbers.
    pub drop: EstimateCI,
    /// SPIKE_DROP_C·α³/√log(1/α)·√E‖∇w‖².
    pub predicted: f64,
}

/// Removal plus the measured and predicted drop of the expectation.
pub fn spike_drop(fs: &FunctionalSet, i: usize, alpha: f64, grad_l2_sq: f64, cfg: &McConfig) -> Result<SpikeDrop> {
    let removal = spike_removal(fs, i, alpha, grad_l2_sq)?;
    let kept = removal.kept.clone();
    let stats = mc::gaussian_stats(cfg, 0x51, fs.dim(), 1, None, true, |x, out| {
        out[0] = fs.eval(x) - kept.as_ref().map_or(0.0, |k| k.eval(x));
    })?;
    Ok(SpikeDrop { removal, drop: stats.estimate(0), predicted: predicted_drop(alpha, grad_l2_sq) })
}

pub fn predicted_drop(alpha: f64, grad_l2_sq: f64) -> f64 {
    SPIKE_DROP_C * alpha.powi(3) / (1.0 / alpha).ln().sqrt() * grad_l2_sq.sqrt()
}

/// Lower bound Φ(Φ⁻¹(p) − r) on the measure of a shift by r·e_i of a set of
/// measure p; equality for half-spaces {x_i ≥ a}.
pub fn kuelbs_li_lower(p: f64, r: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    norm_cdf(norm_ppf(p) - r)
}

/// Shift r₀ = (1/8)(−log(p/2))^{−1/2} that keeps at least a quarter of the mass.
pub fn kuelbs_li_r0(p: f64) -> f64 {
    0.125 / (-(p / 2.0).ln()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gstats::exact_profile;
    use crate::norms::NormSpec;

    fn sup_mean(n: usize) -> f64 {
        exact_profile(&NormSpec::sup(n).unwrap()).unwrap().mean.unwrap()
    }

    #[test]
    fn calibration_is_reproducible() {
        let c = (2..=64)
            .map(|n| {
                let a = 1.0 / n as f64;
                (sup_mean(n) - sup_mean(n - 1)) / (a.powi(3) / (1.0 / a).ln().sqrt())
            })
            .fold(f64::INFINITY, f64::min);
        assert!((c - SPIKE_DROP_C).abs() < 1e-9, "{c}");
    }

    #[test]
    fn nothing_to_remove() {
        let fs = FunctionalSet::coordinate(4);
        let r = spike_removal(&fs, 0, 0.99, 100.0).unwrap();
        assert_eq!(r.removed, 0);
        assert_eq!(r.kept.unwrap(), fs);
    }

    #[test]
    fn sup_drop_matches_order_statistics() {
        let n = 8;
        let fs = FunctionalSet::coordinate(n);
        let r = spike_drop(&fs, 3, 1.0 / n as f64, 1.0, &McConfig::new(400_000, 2)).unwrap();
        assert_eq!(r.removal.removed, 1);
        let exact = sup_mean(n) - sup_mean(n - 1);
        assert!(r.drop.contains(exact), "{:?} vs {exact}", r.drop);
        assert!(r.drop.value >= r.predicted);
    }

    #[test]
    fn half_space_equality() {
        for a in [-1.0, 0.0, 0.7, 2.0] {
            for r in [0.1, 0.5, 1.5] {
                let p = crate::special::norm_sf(a);
                let shifted = crate::special::norm_sf(a + r);
                assert!((kuelbs_li_lower(p, r) - shifted).abs() < 1e-12);
            }
            let p = crate::special::norm_sf(a).min(0.5);
            assert!(kuelbs_li_lower(p, kuelbs_li_r0(p)) >= p / 4.0);
        }
    }
}

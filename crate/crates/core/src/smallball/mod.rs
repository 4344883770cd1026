//! Small-ball probabilities: exact oracles, naive and rare-event Monte Carlo,
//! and the upper bounds they are compared against.

pub mod bounds;
pub mod exact;
pub mod naive;
pub mod scaling;
pub mod splitting;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gstats::{estimate_profile, exact_profile};
use crate::mc::McConfig;
use crate::norms::NormSpec;

pub use bounds::{bound_report, d_param, BoundReport};
pub use exact::{exact_smallball, ln_exact_cdf, lower_smalldev_exact_linf};
pub use naive::mc_smallball;
pub use scaling::{scaling_study, Engine, Family, ScalingStudy};
pub use splitting::{splitting_of, splitting_smallball, SplittingConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    #[default]
    Mean,
    Median,
}

/// The event {f(G) ≤ δ · anchor}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmallBallQuery {
    pub spec: NormSpec,
    pub delta: f64,
    #[serde(default)]
    pub anchor: Anchor,
    pub anchor_value: f64,
}

impl SmallBallQuery {
    /// Resolves the anchor from closed forms when available, else by Monte Carlo.
    pub fn new(spec: NormSpec, delta: f64, anchor: Anchor, cfg: &McConfig) -> Result<Self> {
        let exact = exact_profile(&spec);
        let pick = |e: &crate::gstats::ExactProfile| match anchor {
            Anchor::Mean => e.mean,
            Anchor::Median => e.median,
        };
        let value = match exact.as_ref().and_then(pick) {
            Some(v) => v,
            None => {
                let p = estimate_profile(&spec, cfg)?;
                match anchor {
                    Anchor::Mean => p.mean.value,
                    Anchor::Median => p.median.value,
                }
            }
        };
        SmallBallQuery::with_anchor(spec, delta, anchor, value)
    }

    pub fn with_anchor(spec: NormSpec, delta: f64, anchor: Anchor, anchor_value: f64) -> Result<Self> {
        let q = SmallBallQuery { spec, delta, anchor, anchor_value };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid("delta must lie in (0, 1)"));
        }
        if !(self.anchor_value > 0.0 && self.anchor_value.is_finite()) {
            return Err(invalid("anchor value must be positive"));
        }
        Ok(())
    }

    pub fn threshold(&self) -> f64 {
        self.delta * self.anchor_value
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallBallResult {
    pub log_p: f64,
    pub log_p_hw: f64,
    /// Splitting thresholds, strictly decreasing; empty for naive estimates.
    pub levels: Vec<f64>,
    pub accept_rates: Vec<f64>,
    pub samples: usize,
}

//! Frozen calibration values. The underlying inequalities carry unspecified
//! universal constants; these fix one admissible choice each.

/// c in E w − E w̃ ≥ c·α³/√log(1/α)·√E‖∇w‖². Calibrated as the minimum over
/// n ≥ 2 of the exact ℓ∞ drop (removing ±e_i, α = 1/n), which is attained at n = 2.
pub const SPIKE_DROP_C: f64 = 2.201_238_467_453_530_5;

/// τ = δ²ε/(2·SMALLDEV_C_TAU) in the small-deviation pipeline.
pub const SMALLDEV_C_TAU: f64 = 0.5;

/// Inner Monte Carlo budget for P_t∇f(y) in the Υ construction.
pub const UPSILON_INNER: usize = 512;

/// Acceptance threshold for E Υ(G)/E f(G).
pub const UPSILON_MEAN_RATIO: f64 = 0.5;

/// Coordinate-selection constant C' = 512/ε² at ε = 1/2.
pub const SEMINORM_C_PRIME: f64 = 2048.0;

/// Markov level t = 8/ε at ε = 1/2 for the ℓ1 cap of retained functionals.
pub const SEMINORM_T: f64 = 16.0;

/// τ in L = τ E‖G‖/n for the diagonal contraction.
pub const SEMINORM_TAU: f64 = 4.0;

/// Iteration cap factor: at most CAP·θ^{−4} rebuilds in the balance loop.
pub const BALANCE_CAP: f64 = 10.0;

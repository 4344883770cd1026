//! Seminorm deformations: the F-transform, spike removal, the Υ seminorm and
//! its coordinate balancing, and the small-deviation pipeline built on them.

pub mod ftransform;
pub mod spike;
pub mod upsilon;
pub mod balance;
pub mod seminorm;

pub use ftransform::{f_support_check, f_transform_eval, f_transform_exhaustive, FTransform, FValue, SupportCheck};
pub use spike::{kuelbs_li_lower, kuelbs_li_r0, spike_drop, spike_removal, spike_stats, SpikeDrop, SpikeRemoval};
pub use upsilon::{harvest, upsilon_build, EventSet, Harvest, Upsilon, UpsilonParams};
pub use balance::{balance_harvest, balance_loop, BalanceOutcome, BalanceSummary, smalldev_pipeline, DeformationTrace, SmalldevConfig, SmalldevReport, TraceRow};
pub use seminorm::{mc_seminorm_build, SeminormParams, SeminormReport};

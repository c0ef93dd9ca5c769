//! Path simulation, stopping rules and Monte Carlo estimators.

mod estimate;
mod path;
pub mod rng;
mod rules;

pub use estimate::{
    estimate_functional, estimate_g_power, estimate_prediction_error, estimate_prediction_errors,
    estimate_running_gain, estimate_terminal, Functional, MCEstimate, SimConfig,
};
pub use path::{
    bridge_dip_probability, bridge_passage_time, detect_zero_crossings, sample_increment, simulate_skeleton,
    AugmentedSkeleton, BridgeCtx, PathSkeleton, Segment, Walker,
};
pub use rules::{apply_rule, apply_rule_from, last_zero, BoundaryRule, StoppingOutcome, StoppingRule};

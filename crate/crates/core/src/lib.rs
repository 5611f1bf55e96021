//! Analytical performance model of tree-based speculative decoding.
//!
//! * [`config`]: model, hardware and deployment descriptions plus their
//!   `key = value` file format.
//! * [`workload`]: per-operator FLOP and memory accounting for one
//!   draft-and-verify cycle.
//! * [`roofline`]: arithmetic intensity, throughput curves and the tree-size
//!   planner.
//! * [`scaling`]: log-linear and inverse-square-root curve fitting.
//! * [`sim`]: token-level simulator over toy Markov models.

pub mod config;
pub mod roofline;
pub mod scaling;
pub mod sim;
pub mod workload;

pub use config::{
    load_deploy_config, load_hardware_spec, load_model_spec, ConfigError, DeployConfig, HardwareSpec, ModelSpec,
};
pub use roofline::{
    argmax_throughput, critical_intensity, intensity, interplay_sweep, plan_topk, roofline_point, saturating_acceptance,
    throughput_curve, AcceptanceModel, InterplayRow, PlanResult, PlanStatus, Regime, RooflinePoint,
};
pub use scaling::{fit, ingest_csv, DataSeries, FitError, LawForm, ScalingFit};
pub use workload::{cycle_workload, op_costs, pass_workload, OpCost, OpKind, PassKind, WorkloadBreakdown, WorkloadError};

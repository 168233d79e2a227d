//! Discrete-time vehicle-to-grid scheduling across multiple charging stations.
//!
//! The crate models a fleet of plug-in vehicles (charge-only, discharge-only
//! and bidirectional) that each pick one station on their way to work. Each
//! station prices energy in real time as an affine function of its load. The
//! online [`scheduler::run_greedy`] engine asks every station for a profit
//! quote ([`heuristics`]), admits the vehicle where the δ-weighted
//! vehicle/station profit is largest, then flattens the station load over the
//! service window ([`power_opt`]). [`scheduler::run_random`] is the baseline
//! and [`oracle`] an exhaustive reference for tiny instances.

pub mod error;
pub mod experiment;
pub mod heuristics;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod power_opt;
pub mod pricing;
pub mod rng;
pub mod scenario;
pub mod scheduler;

pub use error::{Error, Result};
pub use model::{
    CostParams, Ev, EvClass, EvStation, PricingParams, Scenario, ServicePlan, SlotWindow,
    StationConfig, StationState, TimeGrid,
};

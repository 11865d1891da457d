//! Simulation core for budget-constrained autoscaling of DAG workflows.

pub mod experiment;
pub mod metrics;
pub mod mip;
pub mod model;
pub mod pfa;
pub mod plan;
pub mod scalar;
pub mod scheduler;
pub mod sim;
pub mod workload;

/// Scalar used by the simulator hot path.
pub type Real = f64;
/// Scalar for reproducible exact arithmetic.
pub type Exact = num_rational::Ratio<i128>;

pub type Pfa = sim::PfaPolicy<Real>;
pub type ExactPfa = sim::PfaPolicy<Exact>;
pub type Elasticity = metrics::ElasticityReport<Real>;

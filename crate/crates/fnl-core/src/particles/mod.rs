//! Wealth particle systems under common and idiosyncratic noise, empirical
//! measures, averages, conditional means over the replication axis and the
//! one-dimensional Wasserstein-2 distance.

mod measure;
mod noise;
mod system;

pub use measure::{
    arithmetic_average, conditional_mean, conditional_mean_f0, geometric_average, wasserstein2,
    EmpiricalMeasure,
};
pub use noise::{generate_noise, generate_noise_with, NoiseBundle};
pub use system::{
    check_guard, euler_arithmetic, log_euler_geometric, step_arithmetic, step_geometric, Dynamics,
    ParticleSystem, StrategyContext, ARITHMETIC_GUARD, LOG_GUARD,
};

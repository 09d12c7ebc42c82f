use alloc::vec;
use alloc::vec::Vec;

use super::measure::EmpiricalMeasure;
use super::noise::NoiseBundle;
use crate::coeffs::{CoefficientValues, Population};
use crate::error::{domain, Error, Result};
use crate::math;

/// Bound on `|X|` for arithmetic dynamics.
pub const ARITHMETIC_GUARD: f64 = 1e12;
/// Bound on `|log X|` for geometric dynamics.
pub const LOG_GUARD: f64 = 50.0;

/// Whether `pi` is an amount (arithmetic) or a fraction of wealth (geometric).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dynamics {
    Arithmetic,
    Geometric,
}

/// Wealth of `n_agents` agents in `n_replications` replications of one
/// common-noise scenario, stored step-major: `wealth[k][r][a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSystem {
    pub n_agents: usize,
    pub n_replications: usize,
    pub dynamics: Dynamics,
    pub dt: f64,
    pub time_grid: Vec<f64>,
    pub factor_path: Vec<f64>,
    wealth: Vec<f64>,
}

/// What a law-independent strategy may look at.
#[derive(Clone, Copy, Debug)]
pub struct StrategyContext<'a> {
    pub replication: usize,
    pub agent: usize,
    pub wealth: f64,
    pub factor: f64,
    pub time: f64,
    pub values: &'a CoefficientValues,
}

impl ParticleSystem {
    /// A system with every replication started at `initial[a]` and steps not yet simulated.
    pub fn new(
        dynamics: Dynamics,
        initial: &[f64],
        n_replications: usize,
        steps: usize,
        dt: f64,
        factor_path: Vec<f64>,
    ) -> Result<Self> {
        let n_agents = initial.len();
        if n_agents == 0 || n_replications == 0 || steps == 0 || !(dt > 0.0) {
            return Err(domain("particle system needs agents, replications, steps >= 1 and dt > 0"));
        }
        if factor_path.len() != steps + 1 {
            return Err(Error::SizeMismatch { left: factor_path.len(), right: steps + 1 });
        }
        if dynamics == Dynamics::Geometric && initial.iter().any(|&x| !(x > 0.0)) {
            return Err(domain("geometric dynamics need positive initial wealth"));
        }
        let w = n_agents * n_replications;
        let mut wealth = vec![0.0; w * (steps + 1)];
        for r in 0..n_replications {
            wealth[r * n_agents..(r + 1) * n_agents].copy_from_slice(initial);
        }
        let time_grid = (0..=steps).map(|k| k as f64 * dt).collect();
        Ok(ParticleSystem { n_agents, n_replications, dynamics, dt, time_grid, factor_path, wealth })
    }

    pub fn steps(&self) -> usize {
        self.time_grid.len() - 1
    }

    pub fn wealth(&self, r: usize, a: usize, k: usize) -> f64 {
        self.wealth_step(k)[r * self.n_agents + a]
    }

    /// All wealth values at step `k`, replication-major.
    pub fn wealth_step(&self, k: usize) -> &[f64] {
        let w = self.n_agents * self.n_replications;
        &self.wealth[k * w..(k + 1) * w]
    }

    pub(crate) fn set_step(&mut self, k: usize, values: &[f64]) {
        let w = self.n_agents * self.n_replications;
        self.wealth[k * w..(k + 1) * w].copy_from_slice(values);
    }

    /// Wealth of the agents of replication `r` at step `k`.
    pub fn replication(&self, r: usize, k: usize) -> &[f64] {
        &self.wealth_step(k)[r * self.n_agents..(r + 1) * self.n_agents]
    }

    pub fn empirical_measure(&self, r: usize, k: usize) -> EmpiricalMeasure {
        EmpiricalMeasure::new(self.replication(r, k).to_vec()).expect("n_agents >= 1")
    }

    /// Advances every (replication, agent) from step `k` to `k + 1` with a
    /// strategy that does not depend on the population law.
    pub fn step_with<F>(&mut self, population: &Population, bundle: &NoiseBundle, k: usize, strategy: F) -> Result<()>
    where
        F: Fn(&StrategyContext) -> f64,
    {
        if k >= self.steps() || bundle.steps != self.steps() {
            return Err(domain("step index outside the grid"));
        }
        let (z, t, dt) = (self.factor_path[k], self.time_grid[k], self.dt);
        let dw0 = bundle.common[k];
        let dwi = bundle.idio_step(k);
        let mut next = Vec::with_capacity(dwi.len());
        for (j, &x) in self.wealth_step(k).iter().enumerate() {
            let (r, a) = (j / self.n_agents, j % self.n_agents);
            let values = population.sample(a, x, z, t)?;
            let ctx = StrategyContext { replication: r, agent: a, wealth: x, factor: z, time: t, values: &values };
            let pi = strategy(&ctx);
            let y = match self.dynamics {
                Dynamics::Arithmetic => euler_arithmetic(x, pi, &values, dwi[j], dw0, dt),
                Dynamics::Geometric => log_euler_geometric(x, pi, &values, dwi[j], dw0, dt),
            };
            check_guard(self.dynamics, y, k + 1)?;
            next.push(y);
        }
        self.set_step(k + 1, &next);
        Ok(())
    }
}

pub fn step_arithmetic<F>(system: &mut ParticleSystem, strategy: F, population: &Population, bundle: &NoiseBundle, k: usize) -> Result<()>
where
    F: Fn(&StrategyContext) -> f64,
{
    if system.dynamics != Dynamics::Arithmetic {
        return Err(domain("system does not have arithmetic dynamics"));
    }
    system.step_with(population, bundle, k, strategy)
}

pub fn step_geometric<F>(system: &mut ParticleSystem, strategy: F, population: &Population, bundle: &NoiseBundle, k: usize) -> Result<()>
where
    F: Fn(&StrategyContext) -> f64,
{
    if system.dynamics != Dynamics::Geometric {
        return Err(domain("system does not have geometric dynamics"));
    }
    system.step_with(population, bundle, k, strategy)
}

/// `X + pi (mu dt + nu dWⁱ + sigma dW⁰)`
pub fn euler_arithmetic(x: f64, pi: f64, v: &CoefficientValues, dwi: f64, dw0: f64, dt: f64) -> f64 {
    x + pi * (v.mu * dt + v.nu * dwi + v.sigma * dw0)
}

/// Exact lognormal step for a fraction `pi` held over the step.
pub fn log_euler_geometric(x: f64, pi: f64, v: &CoefficientValues, dwi: f64, dw0: f64, dt: f64) -> f64 {
    x * math::exp(pi * v.mu * dt - 0.5 * pi * pi * v.big_sigma * dt + pi * (v.nu * dwi + v.sigma * dw0))
}

pub fn check_guard(dynamics: Dynamics, x: f64, step: usize) -> Result<()> {
    let bad = match dynamics {
        Dynamics::Arithmetic => !(math::abs(x) <= ARITHMETIC_GUARD),
        Dynamics::Geometric => !(x > 0.0) || !(math::abs(math::ln(x)) <= LOG_GUARD),
    };
    if bad {
        Err(Error::NumericalBlowup { step, value: x })
    } else {
        Ok(())
    }
}

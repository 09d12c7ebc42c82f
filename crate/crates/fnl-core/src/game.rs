//! Simulation of a whole game: at every step, sample coefficients, estimate
//! equilibrium weights across the replication axis (or the particle cloud),
//! evaluate strategies and advance wealth. Correction processes are
//! integrated afterwards from the stored paths.

use alloc::vec;
use alloc::vec::Vec;

use crate::coeffs::{CoefficientValues, Population};
use crate::equilibrium::{
    cara_k_rate, crra_g_rate, crra_log_k_rate, realized_aggregates, weights, Aggregates, EquilibriumWeights, KVariant,
    Preference, StrategyClosure,
};
use crate::error::{domain, Error, Result};
use crate::exec::{map_chunks, Executor};
use crate::math;
use crate::measure_calc::is_log_branch;
use crate::particles::{
    check_guard, euler_arithmetic, generate_noise_with, log_euler_geometric, Dynamics, NoiseBundle, ParticleSystem,
};
use crate::rng::SeedLineage;

/// What a conditional expectation averages over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Averaging {
    /// n-agent game: one unit per replication, valued at the agents' average.
    Replications,
    /// Mean-field cloud: every particle is a unit.
    Particles,
}

/// Quadrature rule for the correction integrals.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quadrature {
    Left,
    Trapezoid,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GameSetup {
    pub preference: Preference,
    pub population: Population,
    pub initial_wealth: Vec<f64>,
    pub n_replications: usize,
    pub steps: usize,
    pub dt: f64,
    pub strategy: StrategyClosure,
    pub averaging: Averaging,
    pub lineage: SeedLineage,
}

impl GameSetup {
    pub fn n_agents(&self) -> usize {
        self.population.n_agents()
    }

    pub fn dynamics(&self) -> Dynamics {
        match self.preference {
            Preference::Cara => Dynamics::Arithmetic,
            Preference::Crra => Dynamics::Geometric,
        }
    }

    /// Number of consecutive values forming one averaging unit.
    pub fn unit(&self) -> usize {
        match self.averaging {
            Averaging::Replications => self.n_agents(),
            Averaging::Particles => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.population.ensure_valid()?;
        if self.initial_wealth.len() != self.n_agents() {
            return Err(Error::SizeMismatch { left: self.initial_wealth.len(), right: self.n_agents() });
        }
        if self.steps == 0 || self.n_replications == 0 || !(self.dt > 0.0) {
            return Err(domain("game needs steps, replications >= 1 and dt > 0"));
        }
        Ok(())
    }

    pub fn noise<E: Executor + ?Sized>(&self, exec: &E) -> Result<NoiseBundle> {
        generate_noise_with(exec, self.lineage, self.n_replications, self.n_agents(), self.steps, self.dt)
    }
}

/// Paths of a simulated game. Per-agent grids are step-major `[k][r][a]`
/// and cover the grid points `0..=steps`.
#[derive(Clone, Debug, PartialEq)]
pub struct GameRun {
    pub system: ParticleSystem,
    pub weights: Vec<Option<EquilibriumWeights>>,
    pub realized: Vec<Aggregates>,
    pub common: Vec<f64>,
    pi: Vec<f64>,
}

impl GameRun {
    pub fn pi_step(&self, k: usize) -> &[f64] {
        let w = self.system.n_agents * self.system.n_replications;
        &self.pi[k * w..(k + 1) * w]
    }

    pub fn pi(&self, r: usize, a: usize, k: usize) -> f64 {
        self.pi_step(k)[r * self.system.n_agents + a]
    }
}

/// Coefficient values of every (replication, agent) at grid point `k`.
pub fn values_step<E: Executor + ?Sized>(exec: &E, setup: &GameSetup, system: &ParticleSystem, k: usize) -> Result<Vec<CoefficientValues>> {
    let n = system.n_agents;
    let (z, t) = (system.factor_path[k], system.time_grid[k]);
    let x = system.wealth_step(k);
    let parts = map_chunks(exec, x.len(), 1, |range| {
        range.map(|j| setup.population.sample(j % n, x[j], z, t)).collect::<Result<Vec<_>>>()
    });
    let mut out = Vec::with_capacity(x.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Generates the scenario's noise and runs the game on it.
pub fn simulate<E: Executor + ?Sized>(exec: &E, setup: &GameSetup) -> Result<GameRun> {
    let bundle = setup.noise(exec)?;
    run_game(exec, setup, &bundle)
}

pub fn run_game<E: Executor + ?Sized>(exec: &E, setup: &GameSetup, bundle: &NoiseBundle) -> Result<GameRun> {
    setup.validate()?;
    let n = setup.n_agents();
    if bundle.n_agents != n || bundle.n_replications != setup.n_replications || bundle.steps != setup.steps {
        return Err(domain("noise bundle does not match the game dimensions"));
    }
    let steps = setup.steps;
    let dt = bundle.dt;
    let factor_path = setup.population.factor().path(&bundle.common, dt);
    let mut system = ParticleSystem::new(setup.dynamics(), &setup.initial_wealth, setup.n_replications, steps, dt, factor_path)?;
    let f0 = setup.population.is_f0_measurable();
    let unit = setup.unit();
    let width = n * setup.n_replications;
    let mut pi_grid = vec![0.0; width * (steps + 1)];
    let mut weights_path = Vec::with_capacity(steps + 1);
    let mut realized = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let vals = values_step(exec, setup, &system, k)?;
        let w = if setup.strategy.needs_weights() { Some(weights(setup.preference, &vals, unit, f0)?) } else { None };
        let x = system.wealth_step(k);
        let dwi = if k < steps { bundle.idio_step(k) } else { &[][..] };
        let dw0 = if k < steps { bundle.common[k] } else { 0.0 };
        let dynamics = system.dynamics;
        let parts = map_chunks(exec, width, 1, |range| -> Result<(Vec<f64>, Vec<f64>)> {
            let mut pis = Vec::with_capacity(range.len());
            let mut next = Vec::with_capacity(range.len());
            for j in range {
                let p = setup.strategy.evaluate(j % n, &vals[j], w.as_ref());
                pis.push(p);
                if k < steps {
                    let y = match dynamics {
                        Dynamics::Arithmetic => euler_arithmetic(x[j], p, &vals[j], dwi[j], dw0, dt),
                        Dynamics::Geometric => log_euler_geometric(x[j], p, &vals[j], dwi[j], dw0, dt),
                    };
                    check_guard(dynamics, y, k + 1)?;
                    next.push(y);
                }
            }
            Ok((pis, next))
        });
        let mut next_row = Vec::with_capacity(if k < steps { width } else { 0 });
        let row = &mut pi_grid[k * width..(k + 1) * width];
        let mut at = 0;
        for part in parts {
            let (pis, next) = part?;
            row[at..at + pis.len()].copy_from_slice(&pis);
            at += pis.len();
            next_row.extend(next);
        }
        realized.push(realized_aggregates(&vals, row, unit));
        weights_path.push(w);
        if k < steps {
            system.set_step(k + 1, &next_row);
        }
    }
    Ok(GameRun { system, weights: weights_path, realized, common: bundle.common.clone(), pi: pi_grid })
}

/// `K` (and `G` for log-utility agents) on the simulation grid, `[k][r][a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrectionProcess {
    pub preference: Preference,
    pub variant: Option<KVariant>,
    width: usize,
    k: Vec<f64>,
    g: Vec<f64>,
    k_rate: Vec<f64>,
    g_rate: Vec<f64>,
}

impl CorrectionProcess {
    pub fn k_step(&self, k: usize) -> &[f64] {
        &self.k[k * self.width..(k + 1) * self.width]
    }

    pub fn g_step(&self, k: usize) -> &[f64] {
        &self.g[k * self.width..(k + 1) * self.width]
    }

    /// `dK/dt` at grid point `k`.
    pub fn k_rate_step(&self, k: usize) -> &[f64] {
        &self.k_rate[k * self.width..(k + 1) * self.width]
    }

    pub fn g_rate_step(&self, k: usize) -> &[f64] {
        &self.g_rate[k * self.width..(k + 1) * self.width]
    }
}

/// Integrates the correction processes along a run, using the aggregates the
/// population actually realized at each step.
pub fn corrections<E: Executor + ?Sized>(
    exec: &E,
    setup: &GameSetup,
    run: &GameRun,
    variant: KVariant,
    quadrature: Quadrature,
) -> Result<CorrectionProcess> {
    let steps = setup.steps;
    let dt = run.system.dt;
    let width = run.system.n_agents * run.system.n_replications;
    // Log-rate of K (CRRA) or rate of K (CARA), and rate of G.
    let mut a_rate = vec![0.0; width * (steps + 1)];
    let mut g_rate = vec![0.0; width * (steps + 1)];
    let mut log_branch = Vec::new();
    for k in 0..=steps {
        let vals = values_step(exec, setup, &run.system, k)?;
        let agg = &run.realized[k];
        if k == 0 {
            log_branch = vals.iter().map(|v| is_log_branch(v.delta)).collect();
        }
        for (j, v) in vals.iter().enumerate() {
            let i = k * width + j;
            match setup.preference {
                Preference::Cara => a_rate[i] = cara_k_rate(v, agg),
                Preference::Crra => {
                    if is_log_branch(v.delta) != log_branch[j] {
                        return Err(domain("risk tolerance crosses the logarithmic branch"));
                    }
                    if log_branch[j] {
                        g_rate[i] = crra_g_rate(v, agg, variant);
                    } else {
                        a_rate[i] = crra_log_k_rate(v, agg, variant);
                    }
                }
            }
        }
    }
    let integrate = |rate: &[f64]| -> Vec<f64> {
        let mut acc = vec![0.0; width * (steps + 1)];
        for k in 0..steps {
            for j in 0..width {
                let (r0, r1) = (rate[k * width + j], rate[(k + 1) * width + j]);
                let inc = match quadrature {
                    Quadrature::Left => r0 * dt,
                    Quadrature::Trapezoid => 0.5 * (r0 + r1) * dt,
                };
                acc[(k + 1) * width + j] = acc[k * width + j] + inc;
            }
        }
        acc
    };
    let a = integrate(&a_rate);
    let g = integrate(&g_rate);
    let (k, k_rate) = match setup.preference {
        Preference::Cara => (a, a_rate),
        Preference::Crra => {
            let k: Vec<f64> = a.iter().map(|&l| math::exp(l)).collect();
            let kr = k.iter().zip(&a_rate).map(|(k, r)| k * r).collect();
            (k, kr)
        }
    };
    Ok(CorrectionProcess {
        preference: setup.preference,
        variant: (setup.preference == Preference::Crra).then_some(variant),
        width,
        k,
        g,
        k_rate,
        g_rate,
    })
}

/// Average wealth of replication `r` obtained by integrating the SDE of the
/// average (arithmetic or geometric) with the Euler scheme on the run's grid.
pub fn euler_average_path<E: Executor + ?Sized>(exec: &E, setup: &GameSetup, run: &GameRun, bundle: &NoiseBundle, r: usize) -> Result<Vec<f64>> {
    let n = run.system.n_agents;
    let dt = run.system.dt;
    let start = crate::particles::EmpiricalMeasure::new(run.system.replication(r, 0).to_vec())?;
    let mut y = match setup.dynamics() {
        Dynamics::Arithmetic => crate::particles::arithmetic_average(&start),
        Dynamics::Geometric => crate::particles::geometric_average(&start)?,
    };
    let mut path = Vec::with_capacity(setup.steps + 1);
    path.push(y);
    for k in 0..setup.steps {
        let vals = values_step(exec, setup, &run.system, k)?;
        let pis = &run.pi_step(k)[r * n..(r + 1) * n];
        let vals = &vals[r * n..(r + 1) * n];
        let dwi = &bundle.idio_step(k)[r * n..(r + 1) * n];
        let nf = n as f64;
        let mut s = [0.0; 5];
        let mut private = 0.0;
        for ((p, v), dw) in pis.iter().zip(vals).zip(dwi) {
            s[0] += p * v.mu;
            s[1] += p * v.sigma;
            s[2] += (p * v.nu) * (p * v.nu);
            s[3] += p * p * v.big_sigma;
            private += p * v.nu * dw;
        }
        let (pmu, psig, pnu2, p2s) = (s[0] / nf, s[1] / nf, s[2] / nf, s[3] / nf);
        let private = private / nf;
        y = match setup.dynamics() {
            Dynamics::Arithmetic => y + pmu * dt + private + psig * bundle.common[k],
            Dynamics::Geometric => {
                let eta = pmu + 0.5 * (psig * psig + pnu2 / nf - p2s);
                y * (1.0 + eta * dt + private + psig * bundle.common[k])
            }
        };
        path.push(y);
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::CoefficientModel;
    use crate::exec::Sequential;
    use crate::particles::{arithmetic_average, geometric_average};

    fn setup(pref: Preference, delta: f64, r: usize) -> GameSetup {
        let model = CoefficientModel::constant(0.1, 0.2, 0.3, delta, 0.5);
        GameSetup {
            preference: pref,
            population: Population::homogeneous(model, 4),
            initial_wealth: vec![1.0; 4],
            n_replications: r,
            steps: 16,
            dt: 1.0 / 16.0,
            strategy: StrategyClosure::equilibrium(pref),
            averaging: Averaging::Replications,
            lineage: SeedLineage::new(9, 0),
        }
    }

    #[test]
    fn constant_weights_are_time_constant() {
        let s = setup(Preference::Cara, 1.0, 8);
        let run = simulate(&Sequential, &s).unwrap();
        let w0 = run.weights[0].unwrap();
        for w in &run.weights {
            assert_eq!(w.unwrap(), w0);
        }
        assert_eq!(w0.phi_stderr, 0.0);
        assert!((run.pi(3, 2, 5) - 1.176_470_588_235_294).abs() < 1e-12);
    }

    #[test]
    fn cara_average_matches_its_sde() {
        let s = setup(Preference::Cara, 1.0, 3);
        let b = s.noise(&Sequential).unwrap();
        let run = run_game(&Sequential, &s, &b).unwrap();
        for r in 0..3 {
            let y = euler_average_path(&Sequential, &s, &run, &b, r).unwrap();
            for (k, yk) in y.iter().enumerate() {
                let direct = arithmetic_average(&run.system.empirical_measure(r, k));
                assert!((yk - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn crra_average_sde_is_close() {
        let s = setup(Preference::Crra, 2.0, 2);
        let b = s.noise(&Sequential).unwrap();
        let run = run_game(&Sequential, &s, &b).unwrap();
        let y = euler_average_path(&Sequential, &s, &run, &b, 0).unwrap();
        let direct = geometric_average(&run.system.empirical_measure(0, 16)).unwrap();
        assert!((y[16] / direct - 1.0).abs() < 0.05);
        assert!(run.system.wealth_step(16).iter().all(|&x| x > 0.0));
    }

    #[test]
    fn merton_corrections() {
        let mut s = setup(Preference::Cara, 1.0, 2);
        s.population = Population::homogeneous(CoefficientModel::constant(0.1, 0.2, 0.3, 1.0, 0.0), 4);
        let run = simulate(&Sequential, &s).unwrap();
        let c = corrections(&Sequential, &s, &run, KVariant::Half, Quadrature::Left).unwrap();
        assert_eq!(c.k_step(0)[0], 0.0);
        assert!((c.k_step(16)[5] - 0.01 / 0.26).abs() < 1e-14);

        let mut s = setup(Preference::Crra, 1.0, 2);
        s.population = Population::homogeneous(CoefficientModel::constant(0.1, 0.2, 0.3, 1.0, 0.0), 4);
        let run = simulate(&Sequential, &s).unwrap();
        let c = corrections(&Sequential, &s, &run, KVariant::Half, Quadrature::Trapezoid).unwrap();
        assert_eq!(c.k_step(16)[0], 1.0);
        assert!((c.g_step(16)[7] + 0.01 / 0.26).abs() < 1e-14);
    }

    #[test]
    fn singular_population_is_reported() {
        let mut s = setup(Preference::Cara, 1.0, 2);
        s.population = Population::homogeneous(CoefficientModel::constant(0.1, 0.0, 0.3, 1.0, 1.0), 4);
        assert!(matches!(simulate(&Sequential, &s), Err(Error::SingularEquilibrium { .. })));
        s.strategy = StrategyClosure::ConstantOverride(0.5);
        assert!(simulate(&Sequential, &s).is_ok());
    }
}

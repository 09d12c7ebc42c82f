use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{domain, Result};
use crate::exec::{Executor, Sequential};
use crate::math;
use crate::rng::{common_rng, stream_rng, SeedLineage, StreamKind};

/// Brownian increments for one common-noise scenario.
///
/// Private increments are stored step-major: `idio[k][r][a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseBundle {
    pub dt: f64,
    pub steps: usize,
    pub n_replications: usize,
    pub n_agents: usize,
    pub common: Vec<f64>,
    idio: Vec<f64>,
    pub lineage: SeedLineage,
}

impl NoiseBundle {
    /// Private increments of all replications and agents at step `k`.
    pub fn idio_step(&self, k: usize) -> &[f64] {
        let w = self.n_replications * self.n_agents;
        &self.idio[k * w..(k + 1) * w]
    }

    pub fn idio(&self, r: usize, a: usize, k: usize) -> f64 {
        self.idio_step(k)[r * self.n_agents + a]
    }

    /// Sums consecutive groups of `factor` increments, giving the same
    /// Brownian paths observed on a grid `factor` times coarser.
    pub fn coarsen(&self, factor: usize) -> Result<NoiseBundle> {
        if factor == 0 || self.steps % factor != 0 {
            return Err(domain("coarsening factor must divide the step count"));
        }
        let steps = self.steps / factor;
        let w = self.n_replications * self.n_agents;
        let common = self.common.chunks(factor).map(|c| c.iter().sum()).collect();
        let mut idio = vec![0.0; steps * w];
        for k in 0..steps {
            let row = &mut idio[k * w..(k + 1) * w];
            for j in 0..factor {
                for (o, v) in row.iter_mut().zip(self.idio_step(k * factor + j)) {
                    *o += v;
                }
            }
        }
        Ok(NoiseBundle {
            dt: self.dt * factor as f64,
            steps,
            n_replications: self.n_replications,
            n_agents: self.n_agents,
            common,
            idio,
            lineage: self.lineage,
        })
    }
}

pub fn generate_noise(
    master_seed: u64,
    scenario: u64,
    n_replications: usize,
    n_agents: usize,
    steps: usize,
    dt: f64,
) -> Result<NoiseBundle> {
    generate_noise_with(&Sequential, SeedLineage::new(master_seed, scenario), n_replications, n_agents, steps, dt)
}

/// Draws the common stream of the scenario and one private stream per
/// (replication, agent), each a sequence of `steps` N(0, dt) increments.
pub fn generate_noise_with<E: Executor + ?Sized>(
    exec: &E,
    lineage: SeedLineage,
    n_replications: usize,
    n_agents: usize,
    steps: usize,
    dt: f64,
) -> Result<NoiseBundle> {
    if steps == 0 || !(dt > 0.0) || n_replications == 0 || n_agents == 0 {
        return Err(domain("noise needs steps, replications, agents >= 1 and dt > 0"));
    }
    let sd = math::sqrt(dt);
    let mut rng = common_rng(lineage.master_seed, lineage.scenario);
    let common: Vec<f64> = (0..steps)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * sd
        })
        .collect();
    let w = n_replications * n_agents;
    let streams: Vec<Vec<f64>> = exec.map(w, |j| {
        let mut rng = stream_rng(lineage, StreamKind::Idiosyncratic, (j / n_agents) as u64, (j % n_agents) as u64);
        (0..steps)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * sd
            })
            .collect()
    });
    let mut idio = vec![0.0; steps * w];
    for (j, s) in streams.iter().enumerate() {
        for (k, v) in s.iter().enumerate() {
            idio[k * w + j] = *v;
        }
    }
    Ok(NoiseBundle { dt, steps, n_replications, n_agents, common, idio, lineage })
}

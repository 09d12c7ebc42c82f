//! Mean-field limit: a representative agent whose dynamics depend on its own
//! conditional law given the common noise, approximated by a particle cloud
//! driven by one common-noise path, and the n-agent to mean-field
//! convergence study.

use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;

use crate::coeffs::{CoefficientModel, CoefficientValues, Population};
use crate::equilibrium::{cara_strategy, crra_strategy, weights, EquilibriumWeights, KVariant, Preference, StrategyClosure};
use crate::error::{domain, Result};
use crate::exec::Executor;
use crate::game::{corrections, run_game, values_step, Averaging, CorrectionProcess, GameRun, GameSetup, Quadrature};
use crate::math;
use crate::particles::{wasserstein2, EmpiricalMeasure, NoiseBundle};
use crate::rng::{stream_rng, SeedLineage, StreamKind};

/// Population tag of reference clouds in convergence studies.
pub const REFERENCE_POPULATION: u64 = u64::MAX;

/// A simulated particle cloud: one replication whose particles are the
/// sample of the conditional law.
#[derive(Clone, Debug, PartialEq)]
pub struct MfCloud {
    pub n_particles: usize,
    pub run: GameRun,
}

impl MfCloud {
    pub fn wealth_step(&self, k: usize) -> &[f64] {
        self.run.system.wealth_step(k)
    }

    pub fn empirical_measure(&self, k: usize) -> EmpiricalMeasure {
        self.run.system.empirical_measure(0, k)
    }
}

/// Game setup of a particle cloud: one replication, particle averaging.
pub fn mkv_setup(
    preference: Preference,
    population: Population,
    initial_wealth: f64,
    steps: usize,
    dt: f64,
    strategy: StrategyClosure,
    lineage: SeedLineage,
) -> GameSetup {
    let n = population.n_agents();
    GameSetup {
        preference,
        population,
        initial_wealth: alloc::vec![initial_wealth; n],
        n_replications: 1,
        steps,
        dt,
        strategy,
        averaging: Averaging::Particles,
        lineage,
    }
}

fn check_mkv(setup: &GameSetup) -> Result<()> {
    if setup.averaging != Averaging::Particles || setup.n_replications != 1 {
        return Err(domain("a particle cloud needs particle averaging and a single replication"));
    }
    Ok(())
}

/// Euler steps of the cloud; law arguments are read off the current particles.
pub fn simulate_mkv<E: Executor + ?Sized>(exec: &E, setup: &GameSetup, bundle: &NoiseBundle) -> Result<MfCloud> {
    check_mkv(setup)?;
    let run = run_game(exec, setup, bundle)?;
    Ok(MfCloud { n_particles: setup.n_agents(), run })
}

fn mf_weights<E: Executor + ?Sized>(exec: &E, setup: &GameSetup, cloud: &MfCloud, k: usize, pref: Preference) -> Result<EquilibriumWeights> {
    check_mkv(setup)?;
    if k > setup.steps {
        return Err(domain("grid index out of range"));
    }
    let vals = values_step(exec, setup, &cloud.run.system, k)?;
    weights(pref, &vals, 1, setup.population.is_f0_measurable())
}

/// Weights at grid point `k`, with the cloud as the sample of `E¹`.
pub fn mf_weights_cara<E: Executor + ?Sized>(exec: &E, setup: &GameSetup, cloud: &MfCloud, k: usize) -> Result<EquilibriumWeights> {
    mf_weights(exec, setup, cloud, k, Preference::Cara)
}

pub fn mf_weights_crra<E: Executor + ?Sized>(exec: &E, setup: &GameSetup, cloud: &MfCloud, k: usize) -> Result<EquilibriumWeights> {
    mf_weights(exec, setup, cloud, k, Preference::Crra)
}

pub fn mf_strategy_cara(v: &CoefficientValues, w: &EquilibriumWeights) -> f64 {
    cara_strategy(v, w)
}

pub fn mf_strategy_crra(v: &CoefficientValues, w: &EquilibriumWeights) -> f64 {
    crra_strategy(v, w)
}

pub fn mf_corrections_cara<E: Executor + ?Sized>(exec: &E, setup: &GameSetup, cloud: &MfCloud, quadrature: Quadrature) -> Result<CorrectionProcess> {
    check_mkv(setup)?;
    corrections(exec, setup, &cloud.run, KVariant::Half, quadrature)
}

pub fn mf_corrections_crra<E: Executor + ?Sized>(
    exec: &E,
    setup: &GameSetup,
    cloud: &MfCloud,
    variant: KVariant,
    quadrature: Quadrature,
) -> Result<CorrectionProcess> {
    check_mkv(setup)?;
    corrections(exec, setup, &cloud.run, variant, quadrature)
}

/// I.i.d. agent types: `θ` and `δ` uniform on the given ranges, other
/// coefficients from `base`.
#[derive(Clone, Debug, PartialEq)]
pub struct TypeSampler {
    pub base: CoefficientModel,
    pub theta: (f64, f64),
    pub delta: (f64, f64),
}

impl TypeSampler {
    pub fn sample(&self, lineage: SeedLineage, n: usize) -> Result<Population> {
        let (tl, th) = self.theta;
        let (dl, dh) = self.delta;
        if !(tl <= th && dl <= dh) {
            return Err(domain("type ranges must be ordered"));
        }
        let mut rng = stream_rng(lineage, StreamKind::Types, n as u64, 0);
        let mut delta = Vec::with_capacity(n);
        let mut theta = Vec::with_capacity(n);
        for _ in 0..n {
            theta.push(if tl < th { rng.random_range(tl..th) } else { tl });
            delta.push(if dl < dh { rng.random_range(dl..dh) } else { dl });
        }
        let p = Population::Types { base: self.base.clone(), delta, theta };
        p.ensure_valid()?;
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceSpec {
    pub preference: Preference,
    pub sampler: TypeSampler,
    pub n_list: Vec<usize>,
    /// Independent common-noise scenarios the gaps are averaged over.
    pub repetitions: usize,
    pub steps: usize,
    pub dt: f64,
    pub initial_wealth: f64,
    pub master_seed: u64,
    /// Reference cloud size as a multiple of the largest `n`.
    pub reference_factor: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub phi_gap: f64,
    pub phi_gap_stderr: f64,
    pub psi_gap: f64,
    pub psi_gap_stderr: f64,
    pub w2_sup: f64,
    pub w2_sup_stderr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log |φ_n - φ_mf|` against `log n`.
    pub phi_slope: f64,
    pub psi_slope: f64,
}

impl ConvergenceTable {
    /// True when each `w2_sup` is at most the previous one plus two combined stderrs.
    pub fn w2_nonincreasing(&self) -> bool {
        self.rows.windows(2).all(|w| {
            let tol = 2.0 * math::sqrt(w[0].w2_sup_stderr * w[0].w2_sup_stderr + w[1].w2_sup_stderr * w[1].w2_sup_stderr);
            w[1].w2_sup <= w[0].w2_sup + tol
        })
    }
}

fn subsample(atoms: &[f64], idx: &[usize]) -> Result<EmpiricalMeasure> {
    EmpiricalMeasure::new(idx.iter().map(|&i| atoms[i]).collect())
}

/// Runs, per repetition, a reference cloud of `reference_factor · max n`
/// particles and an n-agent equilibrium for every `n`, all on the
/// repetition's common-noise path. Gaps are taken at `t = 0`; the `W₂`
/// column is the largest distance over the grid between the n-agent
/// empirical law and `n` reference particles drawn once per (repetition, n).
pub fn convergence_study<E: Executor + ?Sized>(exec: &E, spec: &ConvergenceSpec) -> Result<ConvergenceTable> {
    if spec.n_list.is_empty() || spec.n_list.windows(2).any(|w| w[0] >= w[1]) || spec.n_list[0] == 0 {
        return Err(domain("n_list must be nonempty and strictly increasing"));
    }
    if spec.repetitions < 2 || spec.reference_factor == 0 {
        return Err(domain("convergence study needs at least 2 repetitions"));
    }
    let n_max = *spec.n_list.last().unwrap_or(&0);
    let n_ref = spec.reference_factor * n_max;
    let strategy = StrategyClosure::equilibrium(spec.preference);
    let cols = spec.n_list.len();
    let mut phi = alloc::vec![Vec::with_capacity(spec.repetitions); cols];
    let mut psi = phi.clone();
    let mut w2 = phi.clone();
    for m in 0..spec.repetitions {
        let base = SeedLineage::new(spec.master_seed, m as u64);
        let ref_lineage = base.with_population(REFERENCE_POPULATION);
        let pop = spec.sampler.sample(ref_lineage, n_ref)?;
        let setup = mkv_setup(spec.preference, pop, spec.initial_wealth, spec.steps, spec.dt, strategy.clone(), ref_lineage);
        let cloud = simulate_mkv(exec, &setup, &setup.noise(exec)?)?;
        let w_mf = cloud.run.weights[0].ok_or_else(|| domain("equilibrium weights missing"))?;
        for (c, &n) in spec.n_list.iter().enumerate() {
            let lineage = base.with_population(n as u64);
            let pop = spec.sampler.sample(lineage, n)?;
            let game = GameSetup {
                averaging: Averaging::Replications,
                ..mkv_setup(spec.preference, pop, spec.initial_wealth, spec.steps, spec.dt, strategy.clone(), lineage)
            };
            let run = run_game(exec, &game, &game.noise(exec)?)?;
            let w_n = run.weights[0].ok_or_else(|| domain("equilibrium weights missing"))?;
            phi[c].push(math::abs(w_n.phi_sigma - w_mf.phi_sigma));
            psi[c].push(math::abs(w_n.psi_sigma - w_mf.psi_sigma));
            let mut rng = stream_rng(lineage, StreamKind::Subsample, 0, 0);
            let idx = index::sample(&mut rng, n_ref, n).into_vec();
            let mut sup = 0.0f64;
            for k in 0..=spec.steps {
                let d = wasserstein2(&run.system.empirical_measure(0, k), &subsample(cloud.wealth_step(k), &idx)?)?;
                sup = sup.max(d);
            }
            w2[c].push(sup);
        }
    }
    let rows: Vec<ConvergenceRow> = spec
        .n_list
        .iter()
        .enumerate()
        .map(|(c, &n)| {
            let (pg, pgs) = math::mean_stderr(&phi[c]);
            let (sg, sgs) = math::mean_stderr(&psi[c]);
            let (wg, wgs) = math::mean_stderr(&w2[c]);
            ConvergenceRow { n, phi_gap: pg, phi_gap_stderr: pgs, psi_gap: sg, psi_gap_stderr: sgs, w2_sup: wg, w2_sup_stderr: wgs }
        })
        .collect();
    let logn: Vec<f64> = rows.iter().map(|r| math::ln(r.n as f64)).collect();
    let slope = |f: fn(&ConvergenceRow) -> f64| {
        let y: Vec<f64> = rows.iter().map(|r| math::ln(f(r))).collect();
        if rows.len() < 2 {
            f64::NAN
        } else {
            math::ols_slope(&logn, &y)
        }
    };
    let phi_slope = slope(|r| r.phi_gap);
    let psi_slope = slope(|r| r.psi_gap);
    Ok(ConvergenceTable { rows, phi_slope, psi_slope })
}

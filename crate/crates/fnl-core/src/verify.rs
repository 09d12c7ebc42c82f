//! Monte Carlo tests of the (super)martingale property of the utility fields
//! along simulated paths.
//!
//! Within a scenario the common-noise path is fixed, so the raw increments of
//! `U` carry the common-noise term. Before averaging over replications that
//! term is removed exactly: for exponential and power fields the increment is
//! taken on `U · exp(-c ΔW⁰ + ½ c² Δt)`, where `c` is the loading of `log |U|`
//! on `W⁰`; for the log field the term `c ΔW⁰` is subtracted. Under the
//! Euler scheme with coefficients frozen over a step both corrections leave
//! the conditional mean of the increment equal to the drift of `U`.

use alloc::vec;
use alloc::vec::Vec;

use crate::coeffs::CoefficientValues;
use crate::equilibrium::{best_response, KVariant, Preference};
use crate::error::{domain, Error, Result};
use crate::exec::Executor;
use crate::game::{corrections, run_game, values_step, Averaging, CorrectionProcess, GameRun, GameSetup, Quadrature};
use crate::math;
use crate::measure_calc::{cara_utility, crra_utility, is_log_branch, Field};
use crate::particles::conditional_mean;

/// How the benchmark `λ(α_t)` is evaluated on simulated paths.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchmarkMode {
    /// From the conditional law across replications: the mean over
    /// replications of the average wealth (arithmetic), or the exponential of
    /// the mean over replications of the mean log wealth (geometric).
    Conditional,
    /// From the replication's own agents only.
    Pathwise,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IncrementForm {
    Multiplicative,
    Additive,
}

/// Utility values of selected agents, `[k][r][j]` with `j` indexing `agents`.
#[derive(Clone, Debug, PartialEq)]
pub struct UtilityPathEnsemble {
    pub field: Field,
    pub n_replications: usize,
    pub agents: Vec<usize>,
    pub steps: usize,
    pub dt: f64,
    u: Vec<f64>,
    loading: Vec<f64>,
    forms: Vec<IncrementForm>,
    common: Vec<f64>,
}

impl UtilityPathEnsemble {
    /// Builds an ensemble from raw grids. `loading` has one row per step,
    /// `forms` one entry per (replication, agent).
    pub fn from_parts(
        field: Field,
        n_replications: usize,
        n_agents: usize,
        dt: f64,
        u: Vec<f64>,
        loading: Vec<f64>,
        forms: Vec<IncrementForm>,
        common: Vec<f64>,
    ) -> Result<Self> {
        let w = n_replications * n_agents;
        let steps = common.len();
        if u.len() != w * (steps + 1) || loading.len() != w * steps || forms.len() != w {
            return Err(Error::SizeMismatch { left: u.len(), right: w * (steps + 1) });
        }
        Ok(UtilityPathEnsemble { field, n_replications, agents: (0..n_agents).collect(), steps, dt, u, loading, forms, common })
    }

    fn width(&self) -> usize {
        self.n_replications * self.agents.len()
    }

    pub fn u(&self, r: usize, j: usize, k: usize) -> f64 {
        self.u[k * self.width() + r * self.agents.len() + j]
    }

    pub fn u_step(&self, k: usize) -> &[f64] {
        &self.u[k * self.width()..(k + 1) * self.width()]
    }

    /// Treats each particle of a single cloud as its own replication.
    pub fn particles_as_replications(mut self) -> Self {
        self.n_replications *= self.agents.len();
        self.agents = vec![0];
        self
    }

    /// Per-replication mean over agents of the compensated increment, per unit time.
    pub fn compensated_increments(&self, k: usize) -> Vec<f64> {
        let (w, na) = (self.width(), self.agents.len());
        let dw0 = self.common[k];
        let dt = self.dt;
        (0..self.n_replications)
            .map(|r| {
                let mut s = 0.0;
                for j in r * na..(r + 1) * na {
                    let (u0, u1, c) = (self.u[k * w + j], self.u[(k + 1) * w + j], self.loading[k * w + j]);
                    s += match self.forms[j] {
                        IncrementForm::Multiplicative => u1 * math::exp(-c * dw0 + 0.5 * c * c * dt) - u0,
                        IncrementForm::Additive => u1 - u0 - c * dw0,
                    };
                }
                s / na as f64 / dt
            })
            .collect()
    }
}

/// Evaluates the utility of `agents` along the run.
pub fn evaluate_utility_paths<E: Executor + ?Sized>(
    exec: &E,
    setup: &GameSetup,
    run: &GameRun,
    corr: &CorrectionProcess,
    agents: &[usize],
    mode: BenchmarkMode,
) -> Result<UtilityPathEnsemble> {
    let sys = &run.system;
    let (n, reps, steps) = (sys.n_agents, sys.n_replications, setup.steps);
    if agents.is_empty() || agents.iter().any(|&a| a >= n) {
        return Err(domain("agent selection out of range"));
    }
    let field = match setup.preference {
        Preference::Cara => Field::Cara,
        Preference::Crra => Field::Crra,
    };
    let na = agents.len();
    let width = reps * na;
    let mut u = Vec::with_capacity(width * (steps + 1));
    let mut loading = Vec::with_capacity(width * steps);
    let mut forms = Vec::with_capacity(width);
    for k in 0..=steps {
        let x = sys.wealth_step(k);
        if field == Field::Crra && x.iter().any(|&v| !(v > 0.0)) {
            return Err(domain("CRRA utility needs positive wealth"));
        }
        let vals = values_step(exec, setup, sys, k)?;
        // Per-replication benchmark on the natural scale (mean or mean log).
        let rep_level: Vec<f64> = (0..reps)
            .map(|r| {
                let xs = sys.replication(r, k);
                match field {
                    Field::Cara => math::mean(xs),
                    Field::Crra => xs.iter().map(|&v| math::ln(v)).sum::<f64>() / n as f64,
                }
            })
            .collect();
        let pooled = math::mean(&rep_level);
        let rep_pi_sigma: Vec<f64> = if k < steps {
            let pis = run.pi_step(k);
            (0..reps)
                .map(|r| (r * n..(r + 1) * n).map(|j| pis[j] * vals[j].sigma).sum::<f64>() / n as f64)
                .collect()
        } else {
            Vec::new()
        };
        let (ks, gs) = (corr.k_step(k), corr.g_step(k));
        for r in 0..reps {
            let level = match mode {
                BenchmarkMode::Conditional => pooled,
                BenchmarkMode::Pathwise => rep_level[r],
            };
            let lambda = match field {
                Field::Cara => level,
                Field::Crra => math::exp(level),
            };
            for &a in agents {
                let j = r * n + a;
                let v = &vals[j];
                let value = match field {
                    Field::Cara => cara_utility(x[j], lambda, ks[j], v.delta, v.theta),
                    Field::Crra => crra_utility(x[j], lambda, ks[j], gs[j], v.delta, v.theta),
                };
                if !value.is_finite() {
                    return Err(domain("utility is not finite"));
                }
                u.push(value);
                if k == 0 {
                    forms.push(if field == Field::Crra && is_log_branch(v.delta) {
                        IncrementForm::Additive
                    } else {
                        IncrementForm::Multiplicative
                    });
                }
                if k < steps {
                    let m = match mode {
                        BenchmarkMode::Conditional => run.realized[k].e1_pi_sigma,
                        BenchmarkMode::Pathwise => rep_pi_sigma[r],
                    };
                    let expo = run.pi(r, a, k) * v.sigma - v.theta * m;
                    loading.push(match field {
                        Field::Cara => -expo / v.delta,
                        Field::Crra if is_log_branch(v.delta) => ks[j] * expo,
                        Field::Crra => (1.0 - 1.0 / v.delta) * expo,
                    });
                }
            }
        }
    }
    Ok(UtilityPathEnsemble {
        field,
        n_replications: reps,
        agents: agents.to_vec(),
        steps,
        dt: sys.dt,
        u,
        loading,
        forms,
        common: run.common.clone(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriftStep {
    pub step: usize,
    pub time: f64,
    pub drift: f64,
    pub stderr: f64,
    pub t_stat: f64,
    pub n_replications: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DriftReport {
    pub steps: Vec<DriftStep>,
    pub max_abs_t: f64,
    /// Fraction of steps with `t < -3`.
    pub frac_below_minus3: f64,
}

fn t_stat(est: f64, se: f64) -> f64 {
    if se > 0.0 {
        est / se
    } else if est == 0.0 {
        0.0
    } else {
        est * f64::INFINITY
    }
}

pub fn estimate_drift(ens: &UtilityPathEnsemble) -> Result<DriftReport> {
    let mut steps = Vec::with_capacity(ens.steps);
    for k in 0..ens.steps {
        let (drift, stderr) = conditional_mean(&ens.compensated_increments(k))?;
        steps.push(DriftStep {
            step: k,
            time: k as f64 * ens.dt,
            drift,
            stderr,
            t_stat: t_stat(drift, stderr),
            n_replications: ens.n_replications,
        });
    }
    let max_abs_t = steps.iter().map(|s| math::abs(s.t_stat)).fold(0.0, f64::max);
    let below = steps.iter().filter(|s| s.t_stat < -3.0).count();
    let frac = below as f64 / steps.len().max(1) as f64;
    Ok(DriftReport { steps, max_abs_t, frac_below_minus3: frac })
}

/// `Σ/(2δ²) U |π - π*|²`
pub fn predicted_drift_cara(v: &CoefficientValues, u: f64, pi: f64, pi_star: f64) -> f64 {
    let d = pi - pi_star;
    v.big_sigma / (2.0 * v.delta * v.delta) * u * d * d
}

/// `-(1 - 1/δ) Σ/(2δ) U |π - π*|²`, or `-½ Σ K |π - π*|²` when `δ = 1`.
pub fn predicted_drift_crra(v: &CoefficientValues, u: f64, k: f64, pi: f64, pi_star: f64) -> f64 {
    let d = pi - pi_star;
    if is_log_branch(v.delta) {
        -0.5 * v.big_sigma * k * d * d
    } else {
        -(1.0 - 1.0 / v.delta) * v.big_sigma / (2.0 * v.delta) * u * d * d
    }
}

/// Predicted drift at every point of the ensemble, `[k][r][j]` over the
/// steps. The reference strategy is the best response to the aggregates the
/// population realized.
pub fn predicted_paths<E: Executor + ?Sized>(
    exec: &E,
    setup: &GameSetup,
    run: &GameRun,
    corr: &CorrectionProcess,
    ens: &UtilityPathEnsemble,
) -> Result<Vec<f64>> {
    let n = run.system.n_agents;
    let mut out = Vec::with_capacity(ens.width() * ens.steps);
    for k in 0..ens.steps {
        let vals = values_step(exec, setup, &run.system, k)?;
        let m = run.realized[k].e1_pi_sigma;
        let ks = corr.k_step(k);
        for r in 0..ens.n_replications {
            for (jj, &a) in ens.agents.iter().enumerate() {
                let j = r * n + a;
                let v = &vals[j];
                let pi = run.pi(r, a, k);
                let star = best_response(setup.preference, v, m);
                let u = ens.u(r, jj, k);
                out.push(match setup.preference {
                    Preference::Cara => predicted_drift_cara(v, u, pi, star),
                    Preference::Crra => predicted_drift_crra(v, u, ks[j], pi, star),
                });
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComparisonStep {
    pub step: usize,
    pub time: f64,
    pub empirical: f64,
    pub empirical_stderr: f64,
    pub predicted: f64,
    pub residual: f64,
    pub residual_stderr: f64,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DriftComparison {
    pub steps: Vec<ComparisonStep>,
    pub max_abs_z: f64,
    /// Time averages of the per-step estimates.
    pub mean_empirical: f64,
    pub mean_predicted: f64,
}

/// Compares empirical and predicted drift per step, replication by
/// replication. With a `baseline` ensemble driven by the same noise (for
/// example the unperturbed equilibrium, whose drift is zero) its increments
/// are subtracted first, which removes most of the sampling noise.
pub fn compare_drift(ens: &UtilityPathEnsemble, predicted: &[f64], baseline: Option<&UtilityPathEnsemble>) -> Result<DriftComparison> {
    let w = ens.width();
    if predicted.len() != w * ens.steps {
        return Err(Error::SizeMismatch { left: predicted.len(), right: w * ens.steps });
    }
    if let Some(b) = baseline {
        if b.width() != w || b.steps != ens.steps {
            return Err(Error::SizeMismatch { left: b.width(), right: w });
        }
    }
    let na = ens.agents.len();
    let mut steps = Vec::with_capacity(ens.steps);
    for k in 0..ens.steps {
        let mut emp = ens.compensated_increments(k);
        if let Some(b) = baseline {
            for (e, z) in emp.iter_mut().zip(b.compensated_increments(k)) {
                *e -= z;
            }
        }
        let pred: Vec<f64> = (0..ens.n_replications)
            .map(|r| predicted[k * w + r * na..k * w + (r + 1) * na].iter().sum::<f64>() / na as f64)
            .collect();
        let resid: Vec<f64> = emp.iter().zip(&pred).map(|(e, p)| e - p).collect();
        let (e, es) = conditional_mean(&emp)?;
        let (p, _) = conditional_mean(&pred)?;
        let (rm, rs) = conditional_mean(&resid)?;
        steps.push(ComparisonStep {
            step: k,
            time: k as f64 * ens.dt,
            empirical: e,
            empirical_stderr: es,
            predicted: p,
            residual: rm,
            residual_stderr: rs,
            z: t_stat(rm, rs),
        });
    }
    let count = steps.len().max(1) as f64;
    Ok(DriftComparison {
        max_abs_z: steps.iter().map(|s| math::abs(s.z)).fold(0.0, f64::max),
        mean_empirical: steps.iter().map(|s| s.empirical).sum::<f64>() / count,
        mean_predicted: steps.iter().map(|s| s.predicted).sum::<f64>() / count,
        steps,
    })
}

/// Utility paths of all agents, with the particles of a mean-field cloud
/// treated as replications.
pub fn equilibrium_ensemble<E: Executor + ?Sized>(
    exec: &E,
    setup: &GameSetup,
    run: &GameRun,
    corr: &CorrectionProcess,
    mode: BenchmarkMode,
) -> Result<UtilityPathEnsemble> {
    let agents: Vec<usize> = (0..setup.n_agents()).collect();
    let ens = evaluate_utility_paths(exec, setup, run, corr, &agents, mode)?;
    Ok(match setup.averaging {
        Averaging::Particles => ens.particles_as_replications(),
        Averaging::Replications => ens,
    })
}

/// Simulates `setup` and returns the drift report of all agents' utilities.
pub fn martingale_report<E: Executor + ?Sized>(exec: &E, setup: &GameSetup, variant: KVariant, mode: BenchmarkMode) -> Result<DriftReport> {
    let bundle = setup.noise(exec)?;
    let run = run_game(exec, setup, &bundle)?;
    let corr = corrections(exec, setup, &run, variant, Quadrature::Left)?;
    estimate_drift(&equilibrium_ensemble(exec, setup, &run, &corr, mode)?)
}

/// Largest `max |t|` a variant may show and still count as passing.
pub const PASS_THRESHOLD: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Half,
    Full,
    Inconclusive,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Half => "half",
            Verdict::Full => "full",
            Verdict::Inconclusive => "inconclusive",
        }
    }

    pub fn variant(self) -> Option<KVariant> {
        match self {
            Verdict::Half => Some(KVariant::Half),
            Verdict::Full => Some(KVariant::Full),
            Verdict::Inconclusive => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adjudication {
    pub verdict: Verdict,
    pub half: DriftReport,
    pub full: DriftReport,
}

/// Runs the equilibrium martingale test of a CRRA game under both `K`
/// variants on one set of paths. The verdict names the variant that passes
/// (`max |t| <= PASS_THRESHOLD`) when exactly one does.
pub fn adjudicate_variant<E: Executor + ?Sized>(exec: &E, setup: &GameSetup, mode: BenchmarkMode) -> Result<Adjudication> {
    if setup.preference != Preference::Crra {
        return Err(domain("variant adjudication needs a CRRA game"));
    }
    let bundle = setup.noise(exec)?;
    let run = run_game(exec, setup, &bundle)?;
    let report = |variant| -> Result<DriftReport> {
        let corr = corrections(exec, setup, &run, variant, Quadrature::Left)?;
        estimate_drift(&equilibrium_ensemble(exec, setup, &run, &corr, mode)?)
    };
    let half = report(KVariant::Half)?;
    let full = report(KVariant::Full)?;
    let (hp, fp) = (half.max_abs_t <= PASS_THRESHOLD, full.max_abs_t <= PASS_THRESHOLD);
    let verdict = match (hp, fp) {
        (true, false) => Verdict::Half,
        (false, true) => Verdict::Full,
        _ => Verdict::Inconclusive,
    };
    Ok(Adjudication { verdict, half, full })
}

//! Subcommand pipelines.

use std::collections::BTreeMap;

use fnl_core::equilibrium::{best_response, weights, StrategyClosure};
use fnl_core::exec::Executor;
use fnl_core::game::{corrections, run_game, values_step, Averaging, GameRun, GameSetup};
use fnl_core::math;
use fnl_core::meanfield::{convergence_study, mkv_setup, ConvergenceSpec, TypeSampler};
use fnl_core::measure_calc::{fd_bundle_check, fd_lift_check, fd_second_order_check, random_check_point, Field, MeasureFunctional};
use fnl_core::rng::SeedLineage;
use fnl_core::verify::{
    adjudicate_variant, compare_drift, estimate_drift, evaluate_utility_paths, predicted_paths, DriftReport, UtilityPathEnsemble, Verdict,
};
use fnl_core::{Error, Result};
use serde_json::Value;

use crate::config::{ScenarioConfig, StrategySpec};
use crate::report::{Cell, Table};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subcommand {
    Simulate,
    Equilibrium,
    Verify,
    Adjudicate,
    Converge,
    DerivCheck,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Simulate => "simulate",
            Subcommand::Equilibrium => "equilibrium",
            Subcommand::Verify => "verify",
            Subcommand::Adjudicate => "adjudicate",
            Subcommand::Converge => "converge",
            Subcommand::DerivCheck => "deriv-check",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Options {
    pub dump_paths: bool,
    pub per_agent: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub table: Table,
    /// Additional tables keyed by a file-name suffix.
    pub extra: Vec<(String, Table)>,
    pub verdict: Option<Verdict>,
    pub summary: BTreeMap<String, Value>,
}

impl Outcome {
    fn new(table: Table) -> Self {
        Outcome { table, extra: Vec::new(), verdict: None, summary: BTreeMap::new() }
    }

    fn note(&mut self, key: &str, v: impl Into<Value>) {
        self.summary.insert(key.to_string(), v.into());
    }
}

fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

/// Game setup of scenario `s` under `strategy`.
pub fn scenario_setup(cfg: &ScenarioConfig, s: usize, strategy: StrategyClosure) -> GameSetup {
    let lineage = SeedLineage::new(cfg.master_seed, s as u64);
    let pref = cfg.game.preference();
    let base = mkv_setup(pref, cfg.population.clone(), cfg.initial_wealth, cfg.steps, cfg.dt, strategy, lineage);
    if cfg.game.is_mean_field() {
        base
    } else {
        GameSetup { n_replications: cfg.n_replications, initial_wealth: vec![cfg.initial_wealth; cfg.n_agents], averaging: Averaging::Replications, ..base }
    }
}

pub fn run<E: Executor + ?Sized>(exec: &E, cmd: Subcommand, cfg: &ScenarioConfig, opts: Options) -> Result<Outcome> {
    log::info!("{} with {} scenario(s)", cmd.name(), cfg.n_scenarios);
    for w in cfg.model.warnings() {
        log::warn!("{w}");
    }
    match cmd {
        Subcommand::Simulate => simulate(exec, cfg, opts),
        Subcommand::Equilibrium => equilibrium(exec, cfg, opts),
        Subcommand::Verify => verify(exec, cfg),
        Subcommand::Adjudicate => adjudicate(exec, cfg),
        Subcommand::Converge => converge(exec, cfg),
        Subcommand::DerivCheck => deriv_check(cfg),
    }
}

fn paths_table(out: &mut Table, s: usize, run: &GameRun) {
    let sys = &run.system;
    for r in 0..sys.n_replications {
        for a in 0..sys.n_agents {
            for k in 0..=sys.steps() {
                out.push(vec![s.into(), r.into(), a.into(), k.into(), sys.time_grid[k].into(), sys.wealth(r, a, k).into()]);
            }
        }
    }
}

fn simulate<E: Executor + ?Sized>(exec: &E, cfg: &ScenarioConfig, opts: Options) -> Result<Outcome> {
    let mut cols: Vec<String> = ["scenario", "step", "time", "mean_wealth", "mean_pi", "e1_pi_sigma", "phi_sigma", "psi_sigma"]
        .iter()
        .map(|c| c.to_string())
        .collect();
    if opts.per_agent {
        cols.extend((0..cfg.n_agents).map(|a| format!("wealth_{a}")));
    }
    let mut table = Table::new(cols);
    let mut paths = Table::new(["scenario", "replication", "agent", "step", "time", "wealth"]);
    for s in 0..cfg.n_scenarios {
        let setup = scenario_setup(cfg, s, cfg.closure());
        let run = run_game(exec, &setup, &setup.noise(exec)?)?;
        let sys = &run.system;
        for k in 0..=cfg.steps {
            let w = run.weights[k];
            let mut row = vec![
                s.into(),
                k.into(),
                sys.time_grid[k].into(),
                math::mean(sys.wealth_step(k)).into(),
                math::mean(run.pi_step(k)).into(),
                run.realized[k].e1_pi_sigma.into(),
                w.map(|w| w.phi_sigma).into(),
                w.map(|w| w.psi_sigma).into(),
            ];
            if opts.per_agent {
                row.extend((0..cfg.n_agents).map(|a| Cell::from(sys.wealth(0, a, k))));
            }
            table.push(row);
        }
        if opts.dump_paths {
            paths_table(&mut paths, s, &run);
        }
    }
    let mut out = Outcome::new(table);
    if opts.dump_paths {
        out.extra.push((String::from("paths"), paths));
    }
    Ok(out)
}

fn equilibrium<E: Executor + ?Sized>(exec: &E, cfg: &ScenarioConfig, opts: Options) -> Result<Outcome> {
    let mut cols: Vec<String> = ["scenario", "step", "time", "phi_sigma", "psi_sigma", "e1_pi_sigma", "e1_pi_mu", "e1_pi2_Sigma"]
        .iter()
        .map(|c| c.to_string())
        .collect();
    if opts.per_agent {
        cols.extend((0..cfg.n_agents).map(|a| format!("pi_star_{a}")));
    }
    let pref = cfg.game.preference();
    let mut table = Table::new(cols);
    for s in 0..cfg.n_scenarios {
        let setup = scenario_setup(cfg, s, cfg.closure());
        let run = run_game(exec, &setup, &setup.noise(exec)?)?;
        let f0 = setup.population.is_f0_measurable();
        for k in 0..=cfg.steps {
            let vals = values_step(exec, &setup, &run.system, k)?;
            let w = weights(pref, &vals, setup.unit(), f0)?;
            let mut row = vec![
                s.into(),
                k.into(),
                run.system.time_grid[k].into(),
                w.phi_sigma.into(),
                w.psi_sigma.into(),
                w.e1_pi_sigma.into(),
                w.e1_pi_mu.into(),
                w.e1_pi2_sigma.into(),
            ];
            if opts.per_agent {
                row.extend(vals[..cfg.n_agents].iter().map(|v| Cell::from(best_response(pref, v, w.e1_pi_sigma))));
            }
            table.push(row);
        }
    }
    Ok(Outcome::new(table))
}

fn reshape(setup: &GameSetup, ens: UtilityPathEnsemble) -> UtilityPathEnsemble {
    match setup.averaging {
        Averaging::Particles => ens.particles_as_replications(),
        Averaging::Replications => ens,
    }
}

fn verify<E: Executor + ?Sized>(exec: &E, cfg: &ScenarioConfig) -> Result<Outcome> {
    let mut table = Table::new([
        "scenario",
        "step",
        "time",
        "drift_estimate",
        "stderr",
        "t_stat",
        "drift_vs_baseline",
        "predicted_drift_mean",
        "residual",
        "residual_stderr",
        "z",
    ]);
    let perturbed = cfg.strategy != StrategySpec::Equilibrium;
    let agents: Vec<usize> = (0..cfg.n_agents).collect();
    let (mut max_t, mut max_z) = (0.0f64, 0.0f64);
    let (mut mean_emp, mut mean_pred) = (Vec::new(), Vec::new());
    for s in 0..cfg.n_scenarios {
        let setup = scenario_setup(cfg, s, cfg.closure());
        let bundle = setup.noise(exec)?;
        let run = run_game(exec, &setup, &bundle)?;
        let corr = corrections(exec, &setup, &run, cfg.variant, cfg.quadrature)?;
        let ens = evaluate_utility_paths(exec, &setup, &run, &corr, &agents, cfg.benchmark)?;
        let pred = predicted_paths(exec, &setup, &run, &corr, &ens)?;
        let ens = reshape(&setup, ens);
        let baseline = if perturbed {
            let b = scenario_setup(cfg, s, StrategyClosure::equilibrium(cfg.game.preference()));
            let brun = run_game(exec, &b, &bundle)?;
            let bcorr = corrections(exec, &b, &brun, cfg.variant, cfg.quadrature)?;
            Some(reshape(&b, evaluate_utility_paths(exec, &b, &brun, &bcorr, &agents, cfg.benchmark)?))
        } else {
            None
        };
        let report = estimate_drift(&ens)?;
        let cmp = compare_drift(&ens, &pred, baseline.as_ref())?;
        for (d, c) in report.steps.iter().zip(&cmp.steps) {
            table.push(vec![
                s.into(),
                d.step.into(),
                d.time.into(),
                d.drift.into(),
                d.stderr.into(),
                d.t_stat.into(),
                c.empirical.into(),
                c.predicted.into(),
                c.residual.into(),
                c.residual_stderr.into(),
                c.z.into(),
            ]);
        }
        max_t = max_t.max(report.max_abs_t);
        max_z = max_z.max(cmp.max_abs_z);
        mean_emp.push(num(cmp.mean_empirical));
        mean_pred.push(num(cmp.mean_predicted));
    }
    let mut out = Outcome::new(table);
    out.note("max_abs_t", num(max_t));
    out.note("max_abs_z", num(max_z));
    out.note("mean_drift_vs_baseline", mean_emp);
    out.note("mean_predicted", mean_pred);
    Ok(out)
}

fn push_report(table: &mut Table, s: usize, name: &str, r: &DriftReport) {
    for d in &r.steps {
        table.push(vec![s.into(), name.into(), d.step.into(), d.time.into(), d.drift.into(), d.stderr.into(), d.t_stat.into()]);
    }
}

fn adjudicate<E: Executor + ?Sized>(exec: &E, cfg: &ScenarioConfig) -> Result<Outcome> {
    let mut table = Table::new(["scenario", "variant", "step", "time", "drift_estimate", "stderr", "t_stat"]);
    let mut verdicts = Vec::new();
    let (mut half, mut full) = (Vec::new(), Vec::new());
    for s in 0..cfg.n_scenarios {
        let setup = scenario_setup(cfg, s, StrategyClosure::equilibrium(cfg.game.preference()));
        let a = adjudicate_variant(exec, &setup, cfg.benchmark)?;
        push_report(&mut table, s, "half", &a.half);
        push_report(&mut table, s, "full", &a.full);
        half.push(num(a.half.max_abs_t));
        full.push(num(a.full.max_abs_t));
        verdicts.push(a.verdict);
    }
    let verdict = match verdicts.first() {
        Some(&v) if verdicts.iter().all(|&w| w == v) => v,
        _ => Verdict::Inconclusive,
    };
    let mut out = Outcome::new(table);
    out.note("half_max_abs_t", half);
    out.note("full_max_abs_t", full);
    out.note("scenario_verdicts", verdicts.iter().map(|v| Value::from(v.name())).collect::<Vec<_>>());
    out.verdict = Some(verdict);
    Ok(out)
}

fn converge<E: Executor + ?Sized>(exec: &E, cfg: &ScenarioConfig) -> Result<Outcome> {
    let c = &cfg.converge;
    let spec = ConvergenceSpec {
        preference: cfg.game.preference(),
        sampler: TypeSampler { base: cfg.model.clone(), theta: c.theta, delta: c.delta },
        n_list: c.n_list.clone(),
        repetitions: c.repetitions,
        steps: cfg.steps,
        dt: cfg.dt,
        initial_wealth: cfg.initial_wealth,
        master_seed: cfg.master_seed,
        reference_factor: c.reference_factor,
    };
    let t = convergence_study(exec, &spec)?;
    let mut table = Table::new(["n", "phi_gap", "phi_gap_stderr", "psi_gap", "psi_gap_stderr", "w2_sup", "w2_sup_stderr"]);
    for r in &t.rows {
        table.push(vec![
            r.n.into(),
            r.phi_gap.into(),
            r.phi_gap_stderr.into(),
            r.psi_gap.into(),
            r.psi_gap_stderr.into(),
            r.w2_sup.into(),
            r.w2_sup_stderr.into(),
        ]);
    }
    let mut out = Outcome::new(table);
    out.note("phi_slope", num(t.phi_slope));
    out.note("psi_slope", num(t.psi_slope));
    out.note("w2_nonincreasing", t.w2_nonincreasing());
    Ok(out)
}

fn deriv_check(cfg: &ScenarioConfig) -> Result<Outcome> {
    let d = cfg.deriv;
    let mut table = Table::new(["point", "field", "entry", "analytic", "finite_diff", "rel_err"]);
    let (mut worst_bundle, mut worst_second, mut worst_identity) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..d.points {
        let p = random_check_point(cfg.master_seed, i as u64, d.atoms)?;
        let field = match p.field {
            Field::Cara => "cara",
            Field::Crra => "crra",
        };
        let f = p.field.functional();
        let fname = match f {
            MeasureFunctional::ArithMean => "arith_mean",
            MeasureFunctional::GeomMean => "geom_mean",
        };
        for e in fd_bundle_check(p.field, p.x, &p.atoms, &p.params, 0, 1, d.bump)? {
            worst_bundle = worst_bundle.max(e.check.rel_err);
            table.push(vec![i.into(), field.into(), e.name.into(), e.check.analytic.into(), e.check.finite_diff.into(), e.check.rel_err.into()]);
        }
        let n = p.atoms.len() as f64;
        let grad = f.empirical_projection_grad(&p.atoms, 0)?;
        let l = f.l_derivative(&p.atoms, 0)?;
        let id_err = math::rel_err(l, n * grad);
        worst_identity = worst_identity.max(id_err);
        table.push(vec![i.into(), fname.into(), "projection_identity".into(), (n * grad).into(), l.into(), id_err.into()]);
        let lift = fd_lift_check(f, &p.atoms, 0, d.bump)?;
        worst_bundle = worst_bundle.max(lift.rel_err);
        table.push(vec![i.into(), fname.into(), "projection_grad".into(), lift.analytic.into(), lift.finite_diff.into(), lift.rel_err.into()]);
        if f == MeasureFunctional::GeomMean {
            let c = fd_second_order_check(f, &p.atoms, 0, 1, d.bump)?;
            worst_second = worst_second.max(c.rel_err);
            table.push(vec![i.into(), fname.into(), "projection_hessian".into(), c.analytic.into(), c.finite_diff.into(), c.rel_err.into()]);
        }
    }
    let mut out = Outcome::new(table);
    out.note("max_rel_err_first_order_and_bundle", num(worst_bundle));
    out.note("max_rel_err_second_order", num(worst_second));
    out.note("max_rel_err_identity", num(worst_identity));
    Ok(out)
}

/// Rejects subcommands the configured game cannot run.
pub fn check_applicable(cmd: Subcommand, cfg: &ScenarioConfig) -> Result<()> {
    if cmd == Subcommand::Adjudicate && cfg.game.preference() != fnl_core::equilibrium::Preference::Crra {
        return Err(Error::Domain(String::from("adjudicate needs a CRRA game")));
    }
    Ok(())
}

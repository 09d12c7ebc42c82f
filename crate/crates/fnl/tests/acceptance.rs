//! Acceptance criteria, one test each. Every test prints a single
//! `criterion N: PASS|FAIL` line with the measured quantities.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use fnl_core::coeffs::{CoefficientModel, CoefficientValues, Population};
use fnl_core::equilibrium::{
    aggregate_response, best_response, fixed_point_solve, weights, Deviators, KVariant, Preference, StrategyClosure,
};
use fnl_core::exec::Sequential;
use fnl_core::game::{corrections, euler_average_path, run_game, Averaging, GameSetup, Quadrature};
use fnl_core::math;
use fnl_core::measure_calc::{fd_bundle_check, fd_second_order_check, random_check_point, MeasureFunctional};
use fnl_core::particles::geometric_average;
use fnl_core::rng::{stream_rng, SeedLineage, StreamKind};
use fnl_core::verify::{compare_drift, evaluate_utility_paths, martingale_report, predicted_paths, BenchmarkMode};
use fnl_core::Error;
use rand::Rng;

fn verdict(n: u32, title: &str, pass: bool, details: String) {
    println!("criterion {n}: {} {title}: {details}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {details}");
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn desk_game(pref: Preference, delta: f64, seed: u64, strategy: StrategyClosure) -> GameSetup {
    GameSetup {
        preference: pref,
        population: Population::homogeneous(CoefficientModel::constant(0.1, 0.2, 0.3, delta, 0.5), 8),
        initial_wealth: vec![1.0; 8],
        n_replications: 10_000,
        steps: 64,
        dt: 1.0 / 64.0,
        strategy,
        averaging: Averaging::Replications,
        lineage: SeedLineage::new(seed, 0),
    }
}

#[test]
fn criterion_01_fixed_point_matches_closed_form() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut used = 0;
    let mut draw = 0u64;
    while used < 20 {
        let pref = if used % 2 == 0 { Preference::Cara } else { Preference::Crra };
        let mut rng = stream_rng(SeedLineage::new(1, 0), StreamKind::Points, 1_000 + draw, 0);
        draw += 1;
        let vals: Vec<CoefficientValues> = (0..8)
            .map(|_| {
                CoefficientValues::new(
                    rng.random_range(0.02..0.3),
                    rng.random_range(0.05..0.4),
                    rng.random_range(0.05..0.5),
                    rng.random_range(0.3..3.0),
                    rng.random_range(0.0..1.0),
                )
            })
            .collect();
        let w = weights(pref, &vals, 8, true).unwrap();
        if !(w.psi_sigma.abs() < 0.9) {
            continue;
        }
        let closed = w.phi_sigma / (1.0 - w.psi_sigma);
        let fp = fixed_point_solve(aggregate_response(pref, &vals, 8), 0.0, 1e-15, 10_000).unwrap();
        worst = worst.max(math::rel_err(fp, closed)).max(math::rel_err(w.e1_pi_sigma, closed));
        used += 1;
    }
    let elapsed = start.elapsed();
    verdict(
        1,
        "fixed-point oracle",
        worst <= 1e-10 && elapsed < Duration::from_secs(1),
        format!("20 configurations, max rel err {worst:.2e}, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_02_reductions_are_exact() {
    let mut ok = true;
    for (mu, nu, sigma, delta) in [(0.1, 0.2, 0.3, 1.0), (0.07, 0.11, 0.42, 2.5), (0.3, 0.0, 0.2, 0.4)] {
        let v = CoefficientValues::new(mu, nu, sigma, delta, 0.0);
        for pref in [Preference::Cara, Preference::Crra] {
            let vals = vec![v; 4];
            let m = weights(pref, &vals, 4, true).unwrap().e1_pi_sigma;
            ok &= best_response(pref, &v, m) == v.mu * v.delta / v.big_sigma;
        }
        for theta in [0.0, 0.5, 1.0] {
            let v = CoefficientValues::new(mu, nu, sigma, 1.0, theta);
            ok &= best_response(Preference::Crra, &v, 0.37) == v.mu / v.big_sigma;
        }
        let v0 = CoefficientValues::new(mu, nu.max(0.1), 0.0, delta, 0.5);
        for pref in [Preference::Cara, Preference::Crra] {
            ok &= weights(pref, &[v0; 3], 3, true).unwrap().e1_pi_sigma == 0.0;
        }
    }
    verdict(2, "Merton and no-common-noise reductions", ok, String::from("exact equality in all cases"));
}

#[test]
fn criterion_03_singularity_guard() {
    let v = CoefficientValues::new(0.1, 0.0, 0.3, 1.0, 1.0);
    let direct = matches!(weights(Preference::Cara, &[v; 4], 4, true), Err(Error::SingularEquilibrium { .. }));
    let mut game = desk_game(Preference::Cara, 1.0, 1, StrategyClosure::CaraEquilibrium);
    game.population = Population::homogeneous(CoefficientModel::constant(0.1, 0.0, 0.3, 1.0, 1.0), 8);
    game.n_replications = 4;
    let sim = matches!(run_game(&Sequential, &game, &game.noise(&Sequential).unwrap()), Err(Error::SingularEquilibrium { .. }));
    verdict(3, "singularity guard", direct && sim, format!("weights: {direct}, simulation: {sim}"));
}

#[test]
fn criterion_04_cara_martingale() {
    let start = Instant::now();
    let mut ts = Vec::new();
    for seed in 1..=5 {
        let g = desk_game(Preference::Cara, 1.0, seed, StrategyClosure::CaraEquilibrium);
        ts.push(martingale_report(&Sequential, &g, KVariant::Half, BenchmarkMode::Conditional).unwrap().max_abs_t);
    }
    let passes = ts.iter().filter(|&&t| t <= 4.0).count();
    let per_run = start.elapsed() / 5;
    verdict(
        4,
        "CARA equilibrium martingale",
        passes >= 4 && per_run < Duration::from_secs(120),
        format!("max|t| per seed {ts:.2?}, {passes}/5 pass, {per_run:.2?} per experiment"),
    );
}

#[test]
fn criterion_05_drift_formula() {
    let base = desk_game(Preference::Cara, 1.0, 1, StrategyClosure::CaraEquilibrium);
    let bundle = base.noise(&Sequential).unwrap();
    let run0 = run_game(&Sequential, &base, &bundle).unwrap();
    let c0 = corrections(&Sequential, &base, &run0, KVariant::Half, Quadrature::Left).unwrap();
    let all: Vec<usize> = (0..8).collect();
    let e0 = evaluate_utility_paths(&Sequential, &base, &run0, &c0, &all, BenchmarkMode::Conditional).unwrap();
    let e0_single = evaluate_utility_paths(&Sequential, &base, &run0, &c0, &[0], BenchmarkMode::Conditional).unwrap();
    let (mut logc, mut logd) = (Vec::new(), Vec::new());
    let mut ok = true;
    let mut notes = Vec::new();
    for c in [0.25, 0.5, 1.0] {
        let s = GameSetup {
            strategy: StrategyClosure::PerturbedEquilibrium { base: Preference::Cara, offset: c, deviators: Deviators::All },
            ..base.clone()
        };
        let run = run_game(&Sequential, &s, &bundle).unwrap();
        let corr = corrections(&Sequential, &s, &run, KVariant::Half, Quadrature::Left).unwrap();
        let e = evaluate_utility_paths(&Sequential, &s, &run, &corr, &all, BenchmarkMode::Conditional).unwrap();
        let p = predicted_paths(&Sequential, &s, &run, &corr, &e).unwrap();
        let cmp = compare_drift(&e, &p, Some(&e0)).unwrap();
        let supermartingale = cmp.steps.iter().all(|st| st.predicted <= 0.0) && cmp.mean_empirical < 0.0;
        ok &= cmp.max_abs_z <= 3.0 && supermartingale;
        logc.push(c.ln());
        logd.push(cmp.mean_empirical.abs().ln());

        // Unilateral deviation of agent 0; reported, not part of the verdict.
        let s = GameSetup {
            strategy: StrategyClosure::PerturbedEquilibrium { base: Preference::Cara, offset: c, deviators: Deviators::Agent(0) },
            ..base.clone()
        };
        let run = run_game(&Sequential, &s, &bundle).unwrap();
        let corr = corrections(&Sequential, &s, &run, KVariant::Half, Quadrature::Left).unwrap();
        let e = evaluate_utility_paths(&Sequential, &s, &run, &corr, &[0], BenchmarkMode::Conditional).unwrap();
        let p = predicted_paths(&Sequential, &s, &run, &corr, &e).unwrap();
        let one = compare_drift(&e, &p, Some(&e0_single)).unwrap();
        notes.push(format!(
            "c={c}: max|z| {:.2}, drift {:.5} vs {:.5} (unilateral max|z| {:.2})",
            cmp.max_abs_z, cmp.mean_empirical, cmp.mean_predicted, one.max_abs_z
        ));
    }
    let slope = math::ols_slope(&logc, &logd);
    ok &= (1.8..=2.2).contains(&slope);
    verdict(5, "CARA supermartingale and drift formula", ok, format!("{}; slope {slope:.3}", notes.join("; ")));
}

fn manifest(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn criterion_06_variant_adjudication() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("adjudicate.csv");
    let status = Command::new(env!("CARGO_BIN_EXE_fnl"))
        .args(["adjudicate", "--config", configs().join("adjudicate_crra.ini").to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", "1"])
        .status()
        .unwrap();
    let m = manifest(&d.path().join("adjudicate.csv.manifest.json"));
    let v = m["verdict"].as_str().unwrap_or("missing").to_string();
    let half = m["summary"]["half_max_abs_t"][0].as_f64().unwrap();
    let full = m["summary"]["full_max_abs_t"][0].as_f64().unwrap();
    let (win, lose) = match v.as_str() {
        "half" => (half, full),
        "full" => (full, half),
        _ => (f64::NAN, f64::NAN),
    };
    let pass = status.code() == Some(0) && v != "inconclusive" && win <= 4.0 && lose >= 6.0;
    verdict(6, "K-variant adjudication", pass, format!("verdict {v}, half max|t| {half:.2}, full max|t| {full:.2}"));
}

#[test]
fn criterion_07_measure_calculus() {
    let start = Instant::now();
    let (mut identity_exact, mut worst, mut worst_second) = (true, 0.0f64, 0.0f64);
    for i in 0..100 {
        let p = random_check_point(2, i, 4).unwrap();
        for f in [MeasureFunctional::ArithMean, MeasureFunctional::GeomMean] {
            for a in 0..p.atoms.len() {
                identity_exact &= p.atoms.len() as f64 * f.empirical_projection_grad(&p.atoms, a).unwrap() == f.l_derivative(&p.atoms, a).unwrap();
            }
        }
        for e in fd_bundle_check(p.field, p.x, &p.atoms, &p.params, 0, 1, 1e-5).unwrap() {
            worst = worst.max(e.check.rel_err);
        }
        for (a, b) in [(0, 1), (0, 0), (2, 3)] {
            worst_second = worst_second.max(fd_second_order_check(MeasureFunctional::GeomMean, &p.atoms, a, b, 1e-5).unwrap().rel_err);
        }
    }
    let elapsed = start.elapsed();
    let pass = identity_exact && worst <= 1e-6 && worst_second <= 1e-4 && elapsed < Duration::from_secs(5);
    verdict(
        7,
        "measure calculus",
        pass,
        format!("identity exact {identity_exact}, bundle max rel {worst:.2e}, second order max rel {worst_second:.2e}, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_08_geometric_average_sde() {
    let reps = 200;
    let game = GameSetup { n_replications: reps, steps: 128, dt: 1.0 / 128.0, ..desk_game(Preference::Crra, 2.0, 1, StrategyClosure::CrraEquilibrium) };
    let fine = game.noise(&Sequential).unwrap();
    let mut errs = Vec::new();
    for factor in [4usize, 2, 1] {
        let bundle = fine.coarsen(factor).unwrap();
        let g = GameSetup { steps: 128 / factor, dt: factor as f64 / 128.0, ..game.clone() };
        let run = run_game(&Sequential, &g, &bundle).unwrap();
        let mut total = 0.0;
        for r in 0..reps {
            let path = euler_average_path(&Sequential, &g, &run, &bundle, r).unwrap();
            let mut sup = 0.0f64;
            for (k, y) in path.iter().enumerate() {
                sup = sup.max((geometric_average(&run.system.empirical_measure(r, k)).unwrap() - y).abs());
            }
            total += sup;
        }
        errs.push(total / reps as f64);
    }
    let ratios = [(errs[0] / errs[1]).log2(), (errs[1] / errs[2]).log2()];
    let pass = ratios.iter().all(|r| (0.6..=1.4).contains(r));
    verdict(8, "geometric-average SDE consistency", pass, format!("mean sup discrepancy {:.3e} {:.3e} {:.3e} at dt = 1/32, 1/64, 1/128; log2 ratios {ratios:.3?}", errs[0], errs[1], errs[2]));
}

#[test]
fn criterion_09_chaos_convergence() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("converge.csv");
    let start = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_fnl"))
        .args(["converge", "--config", configs().join("converge_cara.ini").to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", "1"])
        .status()
        .unwrap();
    let elapsed = start.elapsed();
    let m = manifest(&d.path().join("converge.csv.manifest.json"));
    let slope = m["summary"]["phi_slope"].as_f64().unwrap_or(f64::NAN);
    let mono = m["summary"]["w2_nonincreasing"].as_bool().unwrap_or(false);
    let pass = status.success() && (-0.7..=-0.3).contains(&slope) && mono && elapsed < Duration::from_secs(300);
    verdict(9, "propagation of chaos", pass, format!("phi slope {slope:.3}, W2 nonincreasing {mono}, {elapsed:.2?}"));
}

#[test]
fn criterion_10_thread_count_does_not_change_outputs() {
    let d = tempfile::tempdir().unwrap();
    let cases = [("equilibrium", "desk.ini"), ("verify", "martingale_cara.ini"), ("converge", "converge_cara.ini")];
    let mut same = Vec::new();
    for (cmd, cfg) in cases {
        let mut bytes = Vec::new();
        for threads in ["1", "8"] {
            let out = d.path().join(format!("{cmd}-{threads}.csv"));
            let status = Command::new(env!("CARGO_BIN_EXE_fnl"))
                .args([cmd, "--config", configs().join(cfg).to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", threads])
                .status()
                .unwrap();
            assert!(status.success());
            bytes.push(std::fs::read(&out).unwrap());
        }
        same.push((cmd, !bytes[0].is_empty() && bytes[0] == bytes[1]));
    }
    verdict(10, "determinism across thread counts", same.iter().all(|s| s.1), format!("{same:?}"));
}

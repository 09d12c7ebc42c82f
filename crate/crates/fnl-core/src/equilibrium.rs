//! Best responses, equilibrium weights, equilibrium strategies and the
//! correction processes `K` and `G`.
//!
//! Conditional expectations given the common noise are averages over a
//! sample of units. In the n-agent game a unit is one replication and its
//! value is the average over the replication's agents; for a mean-field cloud
//! every particle is a unit.

use alloc::vec::Vec;

use crate::coeffs::CoefficientValues;
use crate::error::{Error, Result};
use crate::math;
use crate::particles::conditional_mean_f0;

/// Weights are rejected once `psi >= 1 - SINGULARITY_EPS`.
pub const SINGULARITY_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preference {
    Cara,
    Crra,
}

/// Coefficient on the conditional mean of `π²Σ` in the CRRA `K` and `G`
/// equations: one half or one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KVariant {
    Half,
    Full,
}

impl KVariant {
    pub fn coefficient(self) -> f64 {
        match self {
            KVariant::Half => 0.5,
            KVariant::Full => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KVariant::Half => "half",
            KVariant::Full => "full",
        }
    }
}

/// Conditional means of the population's portfolio moments:
/// `E¹[π̄σ]`, `E¹[π̄μ]` and `E¹[π̄²Σ]`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Aggregates {
    pub e1_pi_sigma: f64,
    pub e1_pi_mu: f64,
    pub e1_pi2_sigma: f64,
}

/// Equilibrium weights at one time. `e1_pi2_sigma` is only defined for CRRA.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EquilibriumWeights {
    pub phi_sigma: f64,
    pub psi_sigma: f64,
    pub e1_pi_sigma: f64,
    pub e1_pi_mu: f64,
    pub e1_pi2_sigma: Option<f64>,
    pub phi_stderr: f64,
    pub psi_stderr: f64,
}

impl EquilibriumWeights {
    pub fn aggregates(&self) -> Aggregates {
        Aggregates {
            e1_pi_sigma: self.e1_pi_sigma,
            e1_pi_mu: self.e1_pi_mu,
            e1_pi2_sigma: self.e1_pi2_sigma.unwrap_or(0.0),
        }
    }
}

/// `(1/Σ)(μδ + θσ a)`
pub fn cara_best_response(v: &CoefficientValues, others_e1_pi_sigma: f64) -> f64 {
    (v.mu * v.delta + v.theta * v.sigma * others_e1_pi_sigma) / v.big_sigma
}

/// `(1/Σ)(μδ + (1-δ)θσ a)`
pub fn crra_best_response(v: &CoefficientValues, others_e1_pi_sigma: f64) -> f64 {
    (v.mu * v.delta + (1.0 - v.delta) * v.theta * v.sigma * others_e1_pi_sigma) / v.big_sigma
}

pub fn best_response(pref: Preference, v: &CoefficientValues, a: f64) -> f64 {
    match pref {
        Preference::Cara => cara_best_response(v, a),
        Preference::Crra => crra_best_response(v, a),
    }
}

pub fn cara_strategy(v: &CoefficientValues, w: &EquilibriumWeights) -> f64 {
    cara_best_response(v, w.e1_pi_sigma)
}

pub fn crra_strategy(v: &CoefficientValues, w: &EquilibriumWeights) -> f64 {
    crra_best_response(v, w.e1_pi_sigma)
}

/// Conditional mean over units of the within-unit average of `f`.
fn unit_mean<F: Fn(&CoefficientValues) -> f64>(values: &[CoefficientValues], unit: usize, f0: bool, f: F) -> Result<(f64, f64)> {
    if unit == 0 || values.is_empty() || values.len() % unit != 0 {
        return Err(Error::SizeMismatch { left: values.len(), right: unit });
    }
    let means: Vec<f64> = values.chunks(unit).map(|c| c.iter().map(&f).sum::<f64>() / unit as f64).collect();
    conditional_mean_f0(&means, f0)
}

/// Weights from per-agent values laid out unit by unit (`unit` values each).
/// `f0_measurable` allows a single unit when coefficients do not depend on
/// private noise.
pub fn weights(pref: Preference, values: &[CoefficientValues], unit: usize, f0_measurable: bool) -> Result<EquilibriumWeights> {
    let one_minus_delta = |v: &CoefficientValues| match pref {
        Preference::Cara => 1.0,
        Preference::Crra => 1.0 - v.delta,
    };
    let (phi, phi_se) = unit_mean(values, unit, f0_measurable, |v| v.mu * v.delta * v.sigma / v.big_sigma)?;
    let (psi, psi_se) = unit_mean(values, unit, f0_measurable, |v| one_minus_delta(v) * v.theta * v.sigma * v.sigma / v.big_sigma)?;
    if !(psi < 1.0 - SINGULARITY_EPS) {
        return Err(Error::SingularEquilibrium { psi });
    }
    let m = phi / (1.0 - psi);
    let (mu2, _) = unit_mean(values, unit, f0_measurable, |v| v.mu * v.mu * v.delta / v.big_sigma)?;
    let (cross, _) = unit_mean(values, unit, f0_measurable, |v| one_minus_delta(v) * v.mu * v.theta * v.sigma / v.big_sigma)?;
    let e1_pi2_sigma = match pref {
        Preference::Cara => None,
        Preference::Crra => {
            let (c, _) = unit_mean(values, unit, f0_measurable, |v| {
                let a = v.mu * v.delta + (1.0 - v.delta) * v.theta * v.sigma * m;
                a * a / v.big_sigma
            })?;
            Some(c)
        }
    };
    Ok(EquilibriumWeights {
        phi_sigma: phi,
        psi_sigma: psi,
        e1_pi_sigma: m,
        e1_pi_mu: mu2 + cross * m,
        e1_pi2_sigma,
        phi_stderr: phi_se,
        psi_stderr: psi_se,
    })
}

pub fn cara_weights(values: &[CoefficientValues], unit: usize, f0_measurable: bool) -> Result<EquilibriumWeights> {
    weights(Preference::Cara, values, unit, f0_measurable)
}

pub fn crra_weights(values: &[CoefficientValues], unit: usize, f0_measurable: bool) -> Result<EquilibriumWeights> {
    weights(Preference::Crra, values, unit, f0_measurable)
}

/// Realized aggregates of an arbitrary strategy profile `pi` (same layout as `values`).
pub fn realized_aggregates(values: &[CoefficientValues], pi: &[f64], unit: usize) -> Aggregates {
    let units = values.len() / unit;
    let mut s = [0.0; 3];
    for u in 0..units {
        let mut t = [0.0; 3];
        for j in u * unit..(u + 1) * unit {
            let (v, p) = (&values[j], pi[j]);
            t[0] += p * v.sigma;
            t[1] += p * v.mu;
            t[2] += p * p * v.big_sigma;
        }
        for (a, b) in s.iter_mut().zip(t) {
            *a += b / unit as f64;
        }
    }
    Aggregates { e1_pi_sigma: s[0] / units as f64, e1_pi_mu: s[1] / units as f64, e1_pi2_sigma: s[2] / units as f64 }
}

/// Conditional mean of `σ · best_response(a)`, the map whose fixed point is
/// the equilibrium `E¹[π̄σ]`.
pub fn aggregate_response(pref: Preference, values: &[CoefficientValues], unit: usize) -> impl Fn(f64) -> f64 + '_ {
    move |a| {
        let units = values.len() / unit;
        let mut s = 0.0;
        for c in values.chunks(unit) {
            s += c.iter().map(|v| v.sigma * best_response(pref, v, a)).sum::<f64>() / unit as f64;
        }
        s / units as f64
    }
}

/// Picard iteration `a ← map(a)` until `|Δa| <= tol`.
pub fn fixed_point_solve<F: FnMut(f64) -> f64>(mut map: F, initial: f64, tol: f64, max_iter: usize) -> Result<f64> {
    let mut a = initial;
    let mut change = f64::INFINITY;
    for _ in 0..max_iter {
        let next = map(a);
        change = math::abs(next - a);
        a = next;
        if !a.is_finite() {
            break;
        }
        if change <= tol {
            return Ok(a);
        }
    }
    Err(Error::NoConvergence { iterations: max_iter, last_change: change })
}

/// Drift rate of the CARA correction `K` given the aggregates the agent faces.
///
/// This is the value of `K'` that makes the drift of the utility vanish at
/// the best response: `(μδ + θσm)²/(2δ²Σ) - (θ/δ)B - θ²m²/(2δ²)` with
/// `m = E¹[π̄σ]` and `B = E¹[π̄μ]`.
pub fn cara_k_rate(v: &CoefficientValues, agg: &Aggregates) -> f64 {
    let (d, th, s) = (v.delta, v.theta, v.big_sigma);
    let m = agg.e1_pi_sigma;
    -(th / d * agg.e1_pi_mu + 0.5 * (th / d) * (th / d) * (v.nu * v.nu / s) * m * m
        - (th / d) * (v.mu * v.sigma / s) * m
        - v.mu * v.mu / (2.0 * s))
}

pub fn cara_k_increment(v: &CoefficientValues, agg: &Aggregates, dt: f64) -> f64 {
    cara_k_rate(v, agg) * dt
}

/// Rate of `log K` for CRRA with `δ ≠ 1`:
/// `p(θ(B - cC) - ½pθ²m² - A²/(2δΣ))` where `p = 1 - 1/δ`,
/// `A = μδ + (1-δ)θσm`, `C = E¹[π̄²Σ]` and `c` the variant coefficient.
pub fn crra_log_k_rate(v: &CoefficientValues, agg: &Aggregates, variant: KVariant) -> f64 {
    let (d, th, s) = (v.delta, v.theta, v.big_sigma);
    let p = 1.0 - 1.0 / d;
    let m = agg.e1_pi_sigma;
    let a = v.mu * d + (1.0 - d) * th * v.sigma * m;
    p * (th * (agg.e1_pi_mu - variant.coefficient() * agg.e1_pi2_sigma) - 0.5 * p * th * th * m * m - a * a / (2.0 * d * s))
}

pub fn crra_k_increment(v: &CoefficientValues, agg: &Aggregates, dt: f64, variant: KVariant) -> f64 {
    crra_log_k_rate(v, agg, variant) * dt
}

/// Rate of `G` for CRRA with `δ = 1`: `θ(B - cC) - μ²/(2Σ)`.
pub fn crra_g_rate(v: &CoefficientValues, agg: &Aggregates, variant: KVariant) -> f64 {
    v.theta * (agg.e1_pi_mu - variant.coefficient() * agg.e1_pi2_sigma) - v.mu * v.mu / (2.0 * v.big_sigma)
}

pub fn crra_g_increment(v: &CoefficientValues, agg: &Aggregates, dt: f64, variant: KVariant) -> f64 {
    crra_g_rate(v, agg, variant) * dt
}

/// Which agents deviate from equilibrium.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Deviators {
    All,
    Agent(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StrategyClosure {
    CaraEquilibrium,
    CrraEquilibrium,
    ConstantOverride(f64),
    /// Equilibrium position plus `offset` for the deviating agents.
    PerturbedEquilibrium { base: Preference, offset: f64, deviators: Deviators },
}

impl StrategyClosure {
    pub fn equilibrium(pref: Preference) -> Self {
        match pref {
            Preference::Cara => StrategyClosure::CaraEquilibrium,
            Preference::Crra => StrategyClosure::CrraEquilibrium,
        }
    }

    /// True when evaluation reads equilibrium weights.
    pub fn needs_weights(&self) -> bool {
        !matches!(self, StrategyClosure::ConstantOverride(_))
    }

    pub fn evaluate(&self, agent: usize, v: &CoefficientValues, w: Option<&EquilibriumWeights>) -> f64 {
        let eq = |pref| best_response(pref, v, w.expect("equilibrium strategy needs weights").e1_pi_sigma);
        match *self {
            StrategyClosure::CaraEquilibrium => eq(Preference::Cara),
            StrategyClosure::CrraEquilibrium => eq(Preference::Crra),
            StrategyClosure::ConstantOverride(p) => p,
            StrategyClosure::PerturbedEquilibrium { base, offset, deviators } => {
                let hit = match deviators {
                    Deviators::All => true,
                    Deviators::Agent(i) => i == agent,
                };
                eq(base) + if hit { offset } else { 0.0 }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn hom(delta: f64, theta: f64) -> CoefficientValues {
        CoefficientValues::new(0.1, 0.2, 0.3, delta, theta)
    }

    #[test]
    fn cara_homogeneous_example() {
        let vals = vec![hom(1.0, 0.5); 4];
        let w = cara_weights(&vals, 2, false).unwrap();
        // Oracle: hand evaluation of the displays.
        assert!((w.phi_sigma - 0.03 / 0.13).abs() < 1e-15);
        assert!((w.psi_sigma - 0.045 / 0.13).abs() < 1e-15);
        assert!((w.e1_pi_sigma - 0.352_941_176_470_588_2).abs() < 1e-12);
        assert_eq!(w.phi_stderr, 0.0);
        let pi = cara_strategy(&vals[0], &w);
        assert!((pi - 1.176_470_588_235_294).abs() < 1e-12);
        assert!(w.e1_pi2_sigma.is_none());
        let fp = fixed_point_solve(aggregate_response(Preference::Cara, &vals, 2), 0.0, 1e-14, 1000).unwrap();
        assert!(math::rel_err(fp, w.e1_pi_sigma) < 1e-12);
    }

    #[test]
    fn crra_homogeneous_example() {
        let vals = vec![hom(2.0, 0.5); 3];
        let w = crra_weights(&vals, 3, true).unwrap();
        assert!((w.psi_sigma + 0.045 / 0.13).abs() < 1e-15);
        assert!((w.e1_pi_sigma - 0.342_857_142_857_142_85).abs() < 1e-12);
        let pi = crra_strategy(&vals[0], &w);
        assert!((pi - 1.142_857_142_857_142_8).abs() < 1e-12);
        assert!((w.e1_pi2_sigma.unwrap() - pi * pi * 0.13).abs() < 1e-14);
    }

    #[test]
    fn reductions() {
        let v = hom(1.7, 0.0);
        let w = cara_weights(&[v, v], 1, false).unwrap();
        assert_eq!(cara_strategy(&v, &w), v.mu * v.delta / v.big_sigma);
        for theta in [0.0, 0.5, 1.0] {
            let v = hom(1.0, theta);
            let w = crra_weights(&[v, v], 1, false).unwrap();
            assert_eq!(crra_strategy(&v, &w), v.mu / v.big_sigma);
            assert_eq!(w.psi_sigma, 0.0);
            assert_eq!(w.e1_pi_sigma, w.phi_sigma);
        }
        let v = CoefficientValues::new(0.1, 0.2, 0.0, 1.0, 0.5);
        let w = cara_weights(&[v, v], 1, false).unwrap();
        assert_eq!((w.phi_sigma, w.psi_sigma, w.e1_pi_sigma), (0.0, 0.0, 0.0));
        assert_eq!(cara_strategy(&v, &w), v.mu * v.delta / v.big_sigma);
    }

    #[test]
    fn singular_case() {
        let v = CoefficientValues::new(0.1, 0.0, 0.3, 1.0, 1.0);
        assert!(matches!(cara_weights(&[v, v], 1, false), Err(Error::SingularEquilibrium { .. })));
        let r = fixed_point_solve(aggregate_response(Preference::Cara, &[v, v], 1), 0.0, 1e-12, 10_000);
        assert!(matches!(r, Err(Error::NoConvergence { .. })));
    }

    #[test]
    fn single_unit_needs_f0() {
        let v = hom(1.0, 0.5);
        assert!(cara_weights(&[v, v], 2, false).is_err());
        assert!(cara_weights(&[v, v], 2, true).is_ok());
    }

    #[test]
    fn k_rates_without_competition() {
        let v = hom(1.0, 0.0);
        let w = cara_weights(&[v, v], 1, false).unwrap();
        let k: f64 = (0..100).map(|_| cara_k_increment(&v, &w.aggregates(), 0.01)).sum();
        assert!((k - 0.01 / 0.26).abs() < 1e-14);
        let g: f64 = (0..100).map(|_| crra_g_increment(&v, &w.aggregates(), 0.01, KVariant::Full)).sum();
        assert!((g + 0.01 / 0.26).abs() < 1e-14);
        let v2 = hom(2.0, 0.0);
        let w2 = crra_weights(&[v2, v2], 1, false).unwrap();
        let half = crra_log_k_rate(&v2, &w2.aggregates(), KVariant::Half);
        let full = crra_log_k_rate(&v2, &w2.aggregates(), KVariant::Full);
        assert_eq!(half, full);
        assert!((half + 0.5 * 0.01 * 2.0 / 0.26).abs() < 1e-15);
        let zero = CoefficientValues::new(0.0, 0.2, 0.0, 1.0, 0.5);
        let wz = cara_weights(&[zero, zero], 1, false).unwrap();
        assert_eq!(cara_k_rate(&zero, &wz.aggregates()), 0.0);
        let log = hom(1.0 + 1e-9, 0.7);
        let wl = crra_weights(&[log, log], 1, false).unwrap();
        assert!(crra_log_k_rate(&log, &wl.aggregates(), KVariant::Full).abs() < 1e-8);
    }

    #[test]
    fn g_vanishes_for_log_agents_without_common_noise() {
        let v = CoefficientValues::new(0.1, 0.2, 0.0, 1.0, 1.0);
        let w = crra_weights(&[v, v], 1, false).unwrap();
        assert!(crra_g_rate(&v, &w.aggregates(), KVariant::Half).abs() < 1e-15);
    }

    #[test]
    fn closure_evaluation() {
        let v = hom(1.0, 0.5);
        let w = cara_weights(&[v, v], 1, false).unwrap();
        let eq = StrategyClosure::CaraEquilibrium.evaluate(0, &v, Some(&w));
        let p = StrategyClosure::PerturbedEquilibrium { base: Preference::Cara, offset: 0.25, deviators: Deviators::Agent(1) };
        assert_eq!(p.evaluate(0, &v, Some(&w)), eq);
        assert_eq!(p.evaluate(1, &v, Some(&w)), eq + 0.25);
        assert_eq!(StrategyClosure::ConstantOverride(0.3).evaluate(0, &v, None), 0.3);
    }

    #[test]
    fn realized_aggregates_of_equilibrium_match_weights() {
        let vals = vec![hom(1.0, 0.2), hom(2.0, 0.9), hom(0.7, 0.4), hom(1.3, 0.1)];
        for pref in [Preference::Cara, Preference::Crra] {
            let w = weights(pref, &vals, 2, false).unwrap();
            let pi: Vec<f64> = vals.iter().map(|v| best_response(pref, v, w.e1_pi_sigma)).collect();
            let r = realized_aggregates(&vals, &pi, 2);
            assert!(math::rel_err(r.e1_pi_sigma, w.e1_pi_sigma) < 1e-13);
            assert!(math::rel_err(r.e1_pi_mu, w.e1_pi_mu) < 1e-13);
            if let Some(c) = w.e1_pi2_sigma {
                assert!(math::rel_err(r.e1_pi2_sigma, c) < 1e-13);
            }
        }
    }

    fn agent() -> impl Strategy<Value = CoefficientValues> {
        (-0.2..0.3f64, 0.05..0.5f64, 0.0..0.5f64, 0.5..2.0f64, 0.0..1.0f64)
            .prop_map(|(mu, nu, sigma, delta, theta)| CoefficientValues::new(mu, nu, sigma, delta, theta))
    }

    proptest! {
        #[test]
        fn equilibrium_is_best_response(vals in proptest::collection::vec(agent(), 4)) {
            for pref in [Preference::Cara, Preference::Crra] {
                if let Ok(w) = weights(pref, &vals, 2, false) {
                    for v in &vals {
                        let s = match pref { Preference::Cara => cara_strategy(v, &w), Preference::Crra => crra_strategy(v, &w) };
                        prop_assert_eq!(s, best_response(pref, v, w.e1_pi_sigma));
                    }
                    prop_assert_eq!(w.e1_pi_sigma, w.phi_sigma / (1.0 - w.psi_sigma));
                }
            }
        }

        // Scaling (μ, ν, σ) by c leaves φ, ψ and E¹[π̄σ] unchanged and scales π* by 1/c.
        #[test]
        fn cara_scale_covariance(vals in proptest::collection::vec(agent(), 4), c in 0.2..5.0f64) {
            let scaled: Vec<_> = vals.iter().map(|v| CoefficientValues::new(c * v.mu, c * v.nu, c * v.sigma, v.delta, v.theta)).collect();
            if let (Ok(a), Ok(b)) = (cara_weights(&vals, 2, false), cara_weights(&scaled, 2, false)) {
                prop_assert!(math::abs(a.psi_sigma - b.psi_sigma) < 1e-12);
                prop_assert!(math::abs(a.phi_sigma - b.phi_sigma) < 1e-10 * (1.0 + math::abs(a.phi_sigma)));
                prop_assert!(math::abs(a.e1_pi_sigma - b.e1_pi_sigma) < 1e-10 * (1.0 + math::abs(a.e1_pi_sigma)));
                let pa = cara_strategy(&vals[0], &a);
                let pb = cara_strategy(&scaled[0], &b);
                prop_assert!(math::abs(pa / c - pb) < 1e-10 * (1.0 + math::abs(pa)));
            }
        }

        #[test]
        fn fixed_point_matches_closed_form(vals in proptest::collection::vec(agent(), 6)) {
            for pref in [Preference::Cara, Preference::Crra] {
                if let Ok(w) = weights(pref, &vals, 3, false) {
                    if math::abs(w.psi_sigma) < 0.9 {
                        let fp = fixed_point_solve(aggregate_response(pref, &vals, 3), 0.0, 1e-15, 10_000).unwrap();
                        prop_assert!(math::abs(fp - w.e1_pi_sigma) <= 1e-10 * math::abs(w.e1_pi_sigma).max(1e-3));
                    }
                }
            }
        }
    }
}

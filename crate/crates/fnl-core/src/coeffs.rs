//! Coefficient processes: excess return `mu`, idiosyncratic volatility `nu`,
//! common volatility `sigma`, risk tolerance `delta` and competition weight
//! `theta`.
//!
//! Each parameter has its own [`ParamSpec`]. Common-factor parameters read an
//! Ornstein-Uhlenbeck factor driven by the common noise only; state-dependent
//! parameters read the agent's own wealth through a clamped link.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{domain, Error, Result};
use crate::math;

/// Smallest admissible risk tolerance.
pub const DELTA_FLOOR: f64 = 1e-6;

/// Link from a scalar input `u` to a parameter value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Link {
    /// `scale * exp(rate * u)`
    Exp { scale: f64, rate: f64 },
    /// `intercept + slope * u`
    Affine { intercept: f64, slope: f64 },
}

impl Link {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            Link::Exp { scale, rate } => scale * math::exp(rate * u),
            Link::Affine { intercept, slope } => intercept + slope * u,
        }
    }

    /// Closure of the image of the real line.
    fn image(&self) -> (f64, f64) {
        match *self {
            Link::Exp { scale, rate } => {
                if rate == 0.0 || scale == 0.0 {
                    (scale, scale)
                } else if scale > 0.0 {
                    (0.0, f64::INFINITY)
                } else {
                    (f64::NEG_INFINITY, 0.0)
                }
            }
            Link::Affine { intercept, slope } => {
                if slope == 0.0 {
                    (intercept, intercept)
                } else {
                    (f64::NEG_INFINITY, f64::INFINITY)
                }
            }
        }
    }

    fn is_finite(&self) -> bool {
        match *self {
            Link::Exp { scale, rate } => scale.is_finite() && rate.is_finite(),
            Link::Affine { intercept, slope } => intercept.is_finite() && slope.is_finite(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Eq, Ord)]
pub enum ModelKind {
    Constant,
    DeterministicTime,
    CommonFactor,
    StateDependent,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ParamSpec {
    Constant(f64),
    /// `intercept + slope * t`
    DeterministicTime { intercept: f64, slope: f64 },
    /// `clamp(link(z), lo, hi)` with `z` the common factor.
    CommonFactor { link: Link, clamp_lo: f64, clamp_hi: f64 },
    /// `clamp(link(x), lo, hi)` with `x` the agent's wealth; both clamps finite.
    StateDependent { link: Link, clamp_lo: f64, clamp_hi: f64 },
}

impl ParamSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            ParamSpec::Constant(_) => ModelKind::Constant,
            ParamSpec::DeterministicTime { .. } => ModelKind::DeterministicTime,
            ParamSpec::CommonFactor { .. } => ModelKind::CommonFactor,
            ParamSpec::StateDependent { .. } => ModelKind::StateDependent,
        }
    }

    pub fn eval(&self, x: f64, z: f64, t: f64) -> f64 {
        match *self {
            ParamSpec::Constant(v) => v,
            ParamSpec::DeterministicTime { intercept, slope } => intercept + slope * t,
            ParamSpec::CommonFactor { link, clamp_lo, clamp_hi } => {
                clamp(link.eval(z), clamp_lo, clamp_hi)
            }
            ParamSpec::StateDependent { link, clamp_lo, clamp_hi } => {
                clamp(link.eval(x), clamp_lo, clamp_hi)
            }
        }
    }

    /// Closed interval containing every value the block can emit for
    /// `t` in `[0, horizon]`.
    pub fn range(&self, horizon: f64) -> (f64, f64) {
        match *self {
            ParamSpec::Constant(v) => (v, v),
            ParamSpec::DeterministicTime { intercept, slope } => {
                let end = if slope == 0.0 { intercept } else { intercept + slope * horizon };
                (intercept.min(end), intercept.max(end))
            }
            ParamSpec::CommonFactor { link, clamp_lo, clamp_hi }
            | ParamSpec::StateDependent { link, clamp_lo, clamp_hi } => {
                let (lo, hi) = link.image();
                (clamp(lo, clamp_lo, clamp_hi), clamp(hi, clamp_lo, clamp_hi))
            }
        }
    }

    fn finiteness_problem(&self) -> Option<&'static str> {
        match *self {
            ParamSpec::Constant(v) => (!v.is_finite()).then_some("value must be finite"),
            ParamSpec::DeterministicTime { intercept, slope } => (!intercept.is_finite()
                || !slope.is_finite())
            .then_some("intercept and slope must be finite"),
            ParamSpec::CommonFactor { link, clamp_lo, clamp_hi } => {
                if !link.is_finite() {
                    Some("link parameters must be finite")
                } else if clamp_lo.is_nan() || clamp_hi.is_nan() || clamp_lo > clamp_hi {
                    Some("clamp bounds must satisfy clamp_lo <= clamp_hi")
                } else {
                    None
                }
            }
            ParamSpec::StateDependent { link, clamp_lo, clamp_hi } => {
                if !link.is_finite() {
                    Some("link parameters must be finite")
                } else if !clamp_lo.is_finite() || !clamp_hi.is_finite() || clamp_lo > clamp_hi {
                    Some("state-dependent blocks need finite clamp_lo <= clamp_hi")
                } else {
                    None
                }
            }
        }
    }
}

fn clamp(v: f64, lo: f64, hi: f64) -> f64 {
    if v.is_nan() {
        return v;
    }
    v.max(lo).min(hi)
}

/// Mean-reverting factor `dz = kappa (level - z) dt + vol dW⁰`, started at `z0`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct FactorParams {
    pub kappa: f64,
    pub level: f64,
    pub vol: f64,
    pub z0: f64,
}

impl FactorParams {
    /// Euler path of the factor on the grid of `common` increments.
    pub fn path(&self, common: &[f64], dt: f64) -> Vec<f64> {
        let mut z = Vec::with_capacity(common.len() + 1);
        let mut cur = self.z0;
        z.push(cur);
        for dw in common {
            cur += self.kappa * (self.level - cur) * dt + self.vol * dw;
            z.push(cur);
        }
        z
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientModel {
    pub mu: ParamSpec,
    pub nu: ParamSpec,
    pub sigma: ParamSpec,
    pub delta: ParamSpec,
    pub theta: ParamSpec,
    pub factor: FactorParams,
    /// Time domain `[0, horizon]` over which validation checks ranges.
    pub horizon: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoefficientValues {
    pub mu: f64,
    pub nu: f64,
    pub sigma: f64,
    /// `nu² + sigma²`
    pub big_sigma: f64,
    pub delta: f64,
    pub theta: f64,
}

impl CoefficientValues {
    pub fn new(mu: f64, nu: f64, sigma: f64, delta: f64, theta: f64) -> Self {
        CoefficientValues { mu, nu, sigma, big_sigma: nu * nu + sigma * sigma, delta, theta }
    }

    fn check(&self) -> Result<()> {
        let ok = self.mu.is_finite()
            && self.nu >= 0.0
            && self.sigma >= 0.0
            && self.big_sigma > 0.0
            && self.big_sigma.is_finite()
            && self.delta >= DELTA_FLOOR
            && self.delta.is_finite()
            && (0.0..=1.0).contains(&self.theta);
        if ok {
            Ok(())
        } else {
            Err(domain(format!("coefficient values out of range: {self:?}")))
        }
    }
}

impl CoefficientModel {
    pub fn constant(mu: f64, nu: f64, sigma: f64, delta: f64, theta: f64) -> Self {
        CoefficientModel {
            mu: ParamSpec::Constant(mu),
            nu: ParamSpec::Constant(nu),
            sigma: ParamSpec::Constant(sigma),
            delta: ParamSpec::Constant(delta),
            theta: ParamSpec::Constant(theta),
            factor: FactorParams::default(),
            horizon: f64::INFINITY,
        }
    }

    fn specs(&self) -> [(&'static str, &ParamSpec); 5] {
        [
            ("mu", &self.mu),
            ("nu", &self.nu),
            ("sigma", &self.sigma),
            ("delta", &self.delta),
            ("theta", &self.theta),
        ]
    }

    /// The most general kind among the five blocks.
    pub fn kind(&self) -> ModelKind {
        self.specs().iter().map(|(_, s)| s.kind()).max().unwrap_or(ModelKind::Constant)
    }

    /// True when no block reads the agent's wealth.
    pub fn is_f0_measurable(&self) -> bool {
        self.kind() != ModelKind::StateDependent
    }

    /// Constraint violations; empty iff every block can only emit admissible values.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.horizon > 0.0) {
            out.push(String::from("horizon must be positive"));
        }
        for (name, spec) in self.specs() {
            if let Some(p) = spec.finiteness_problem() {
                out.push(format!("{name}: {p}"));
            }
        }
        let f = &self.factor;
        if !(f.kappa >= 0.0 && f.kappa.is_finite()) {
            out.push(String::from("factor kappa must be finite and nonnegative"));
        }
        if !(f.vol >= 0.0 && f.vol.is_finite()) {
            out.push(String::from("factor vol must be finite and nonnegative"));
        }
        if !f.level.is_finite() || !f.z0.is_finite() {
            out.push(String::from("factor level and z0 must be finite"));
        }
        if !out.is_empty() {
            return out;
        }
        let h = self.horizon;
        let (sig_lo, _) = self.sigma.range(h);
        let (nu_lo, _) = self.nu.range(h);
        if sig_lo < 0.0 {
            out.push(String::from("sigma must be nonnegative"));
        }
        if nu_lo < 0.0 {
            out.push(String::from("nu must be nonnegative"));
        }
        let s0 = sig_lo.max(0.0);
        let n0 = nu_lo.max(0.0);
        if s0 * s0 + n0 * n0 <= 0.0 {
            out.push(String::from("Sigma must be strictly positive"));
        }
        let (d_lo, _) = self.delta.range(h);
        if d_lo < DELTA_FLOOR {
            out.push(String::from("delta below floor 1e-6"));
        }
        let (t_lo, t_hi) = self.theta.range(h);
        if t_lo < 0.0 || t_hi > 1.0 {
            out.push(String::from("theta out of [0,1]"));
        }
        out
    }

    /// Non-fatal remarks about the model.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.mu.range(self.horizon).0 <= 0.0 {
            out.push(String::from("mu can be nonpositive"));
        }
        out
    }

    pub fn sample(&self, x: f64, z: f64, t: f64) -> Result<CoefficientValues> {
        let v = CoefficientValues::new(
            self.mu.eval(x, z, t),
            self.nu.eval(x, z, t),
            self.sigma.eval(x, z, t),
            self.delta.eval(x, z, t),
            self.theta.eval(x, z, t),
        );
        v.check()?;
        Ok(v)
    }
}

/// Agents and the coefficient model each of them uses.
#[derive(Clone, Debug, PartialEq)]
pub enum Population {
    /// Agent `i` uses `models[assignment[i]]`.
    Classes { models: Vec<CoefficientModel>, assignment: Vec<usize> },
    /// Agent `i` uses `base` with `delta` and `theta` replaced by its own type.
    Types { base: CoefficientModel, delta: Vec<f64>, theta: Vec<f64> },
}

impl Population {
    pub fn homogeneous(model: CoefficientModel, n_agents: usize) -> Self {
        Population::Classes { models: alloc::vec![model], assignment: alloc::vec![0; n_agents] }
    }

    pub fn n_agents(&self) -> usize {
        match self {
            Population::Classes { assignment, .. } => assignment.len(),
            Population::Types { delta, .. } => delta.len(),
        }
    }

    /// Factor shared by all agents.
    pub fn factor(&self) -> FactorParams {
        match self {
            Population::Classes { models, .. } => models.first().map(|m| m.factor).unwrap_or_default(),
            Population::Types { base, .. } => base.factor,
        }
    }

    pub fn is_f0_measurable(&self) -> bool {
        match self {
            Population::Classes { models, .. } => models.iter().all(|m| m.is_f0_measurable()),
            Population::Types { base, .. } => base.is_f0_measurable(),
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            Population::Classes { models, assignment } => {
                if models.is_empty() || assignment.is_empty() {
                    out.push(String::from("population is empty"));
                }
                if assignment.iter().any(|&c| c >= models.len()) {
                    out.push(String::from("agent assigned to unknown class"));
                }
                for (i, m) in models.iter().enumerate() {
                    out.extend(m.validate().into_iter().map(|v| format!("class {i}: {v}")));
                }
                if models.iter().any(|m| m.factor != models[0].factor) {
                    out.push(String::from("classes disagree on factor parameters"));
                }
            }
            Population::Types { base, delta, theta } => {
                if delta.is_empty() {
                    out.push(String::from("population is empty"));
                }
                if delta.len() != theta.len() {
                    out.push(String::from("delta and theta type lists differ in length"));
                }
                if delta.iter().any(|&d| !(d >= DELTA_FLOOR && d.is_finite())) {
                    out.push(String::from("delta below floor 1e-6"));
                }
                if theta.iter().any(|t| !(0.0..=1.0).contains(t)) {
                    out.push(String::from("theta out of [0,1]"));
                }
                out.extend(base.validate());
            }
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(v))
        }
    }

    pub fn sample(&self, agent: usize, x: f64, z: f64, t: f64) -> Result<CoefficientValues> {
        match self {
            Population::Classes { models, assignment } => models[assignment[agent]].sample(x, z, t),
            Population::Types { base, delta, theta } => {
                let b = base.sample(x, z, t)?;
                let v = CoefficientValues { delta: delta[agent], theta: theta[agent], ..b };
                v.check()?;
                Ok(v)
            }
        }
    }
}

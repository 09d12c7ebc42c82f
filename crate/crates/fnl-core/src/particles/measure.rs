use alloc::vec::Vec;

use crate::error::{domain, Error, Result};
use crate::math;

/// Uniform empirical measure on a finite list of atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMeasure {
    atoms: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(atoms: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(domain("empirical measure needs at least one atom"));
        }
        Ok(EmpiricalMeasure { atoms })
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.atoms.len() as f64
    }
}

pub fn arithmetic_average(m: &EmpiricalMeasure) -> f64 {
    math::mean(&m.atoms)
}

pub fn geometric_average(m: &EmpiricalMeasure) -> Result<f64> {
    if m.atoms.iter().any(|&a| !(a > 0.0)) {
        return Err(domain("geometric average needs positive atoms"));
    }
    let s: f64 = m.atoms.iter().map(|&a| math::ln(a)).sum();
    Ok(math::exp(s / m.atoms.len() as f64))
}

/// Mean and standard error across replications of one scenario.
pub fn conditional_mean(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::InsufficientReplications { needed: 2, got: values.len() });
    }
    Ok(math::mean_stderr(values))
}

/// As [`conditional_mean`], but a single replication is accepted when the
/// integrand is known to be a function of the common noise only.
pub fn conditional_mean_f0(values: &[f64], f0_measurable: bool) -> Result<(f64, f64)> {
    if values.len() == 1 && f0_measurable {
        return Ok((values[0], 0.0));
    }
    conditional_mean(values)
}

/// Wasserstein-2 distance between equal-size uniform measures (sorted coupling).
pub fn wasserstein2(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch { left: a.len(), right: b.len() });
    }
    let mut x = a.atoms.clone();
    let mut y = b.atoms.clone();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let ss: f64 = x.iter().zip(&y).map(|(p, q)| (p - q) * (p - q)).sum();
    Ok(math::sqrt(ss / x.len() as f64))
}

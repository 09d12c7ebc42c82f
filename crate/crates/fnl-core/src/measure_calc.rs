//! Calculus on uniform empirical measures.
//!
//! A function `u` of a measure restricted to `N`-atom empirical measures is an
//! ordinary function `u⁽ᴺ⁾(x_1, ..., x_N)`, and
//! `N ∂u⁽ᴺ⁾/∂x_i = ∂_μ u(m_N)(x_i)`. This module evaluates the two
//! benchmark functionals (arithmetic and geometric mean), their derivatives,
//! the CARA/CRRA utility fields with their full derivative bundles, and
//! finite-difference checks of all of them.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{domain, Result};
use crate::math;
use crate::rng::{stream_rng, SeedLineage, StreamKind};

/// Benchmark functional `λ` of the population law.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeasureFunctional {
    /// `∫ x dμ`
    ArithMean,
    /// `exp ∫ log x dμ`
    GeomMean,
}

fn check_atoms(f: MeasureFunctional, atoms: &[f64]) -> Result<()> {
    if atoms.is_empty() {
        return Err(domain("measure needs at least one atom"));
    }
    if f == MeasureFunctional::GeomMean && atoms.iter().any(|&a| !(a > 0.0)) {
        return Err(domain("geometric mean needs positive atoms"));
    }
    Ok(())
}

impl MeasureFunctional {
    pub fn evaluate(self, atoms: &[f64]) -> Result<f64> {
        check_atoms(self, atoms)?;
        let n = atoms.len() as f64;
        Ok(match self {
            MeasureFunctional::ArithMean => atoms.iter().sum::<f64>() / n,
            MeasureFunctional::GeomMean => math::exp(atoms.iter().map(|&a| math::ln(a)).sum::<f64>() / n),
        })
    }

    /// `∂u⁽ᴺ⁾/∂x_i`.
    pub fn empirical_projection_grad(self, atoms: &[f64], i: usize) -> Result<f64> {
        let n = atoms.len() as f64;
        Ok(match self {
            MeasureFunctional::ArithMean => {
                check_atoms(self, atoms)?;
                1.0 / n
            }
            MeasureFunctional::GeomMean => self.evaluate(atoms)? / (n * atoms[i]),
        })
    }

    /// `∂_μ u(m_N)(x_i)`, obtained from the projection as `N ∂u⁽ᴺ⁾/∂x_i`.
    pub fn l_derivative(self, atoms: &[f64], i: usize) -> Result<f64> {
        Ok(atoms.len() as f64 * self.empirical_projection_grad(atoms, i)?)
    }

    /// `∂_μ u(m_N)(v)` at an arbitrary point `v`.
    pub fn l_derivative_at(self, atoms: &[f64], v: f64) -> Result<f64> {
        match self {
            MeasureFunctional::ArithMean => {
                check_atoms(self, atoms)?;
                Ok(1.0)
            }
            MeasureFunctional::GeomMean => {
                if !(v > 0.0) {
                    return Err(domain("geometric mean derivative needs v > 0"));
                }
                Ok(self.evaluate(atoms)? / v)
            }
        }
    }

    /// `∂_v ∂_μ u(m_N)(v)`.
    pub fn d_v_dmu(self, atoms: &[f64], v: f64) -> Result<f64> {
        Ok(match self {
            MeasureFunctional::ArithMean => 0.0,
            MeasureFunctional::GeomMean => -self.l_derivative_at(atoms, v)? / v,
        })
    }

    /// `∂²_μ u(m_N)(v, w)`.
    pub fn d_mumu(self, atoms: &[f64], v: f64, w: f64) -> Result<f64> {
        Ok(match self {
            MeasureFunctional::ArithMean => 0.0,
            MeasureFunctional::GeomMean => self.l_derivative_at(atoms, v)? / w,
        })
    }

    /// `∂²u⁽ᴺ⁾/∂x_i∂x_j` assembled from the measure derivatives:
    /// `(1/N) ∂_v∂_μ u(x_i) 1{i=j} + (1/N²) ∂²_μ u(x_i, x_j)`.
    pub fn projection_hessian(self, atoms: &[f64], i: usize, j: usize) -> Result<f64> {
        let n = atoms.len() as f64;
        let diag = if i == j { self.d_v_dmu(atoms, atoms[i])? / n } else { 0.0 };
        Ok(diag + self.d_mumu(atoms, atoms[i], atoms[j])? / (n * n))
    }
}

/// Analytic value, finite-difference value and their relative error
/// (absolute when the analytic value is zero).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdCheck {
    pub analytic: f64,
    pub finite_diff: f64,
    pub rel_err: f64,
}

impl FdCheck {
    pub fn new(analytic: f64, finite_diff: f64) -> Self {
        FdCheck { analytic, finite_diff, rel_err: math::rel_err(finite_diff, analytic) }
    }
}

fn bumped(atoms: &[f64], i: usize, h: f64) -> Vec<f64> {
    let mut a = atoms.to_vec();
    a[i] += h;
    a
}

/// Central difference of `u⁽ᴺ⁾` in `x_i` against the analytic gradient.
pub fn fd_lift_check(f: MeasureFunctional, atoms: &[f64], i: usize, bump: f64) -> Result<FdCheck> {
    if !(bump > 0.0) {
        return Err(domain("bump must be positive"));
    }
    let up = f.evaluate(&bumped(atoms, i, bump))?;
    let dn = f.evaluate(&bumped(atoms, i, -bump))?;
    Ok(FdCheck::new(f.empirical_projection_grad(atoms, i)?, (up - dn) / (2.0 * bump)))
}

/// Second central difference of `u⁽ᴺ⁾` in `(x_i, x_j)` against the
/// measure-derivative decomposition.
pub fn fd_second_order_check(f: MeasureFunctional, atoms: &[f64], i: usize, j: usize, bump: f64) -> Result<FdCheck> {
    let h = bump;
    let fd = if i == j {
        let up = f.evaluate(&bumped(atoms, i, h))?;
        let mid = f.evaluate(atoms)?;
        let dn = f.evaluate(&bumped(atoms, i, -h))?;
        (up - 2.0 * mid + dn) / (h * h)
    } else {
        let e = |si: f64, sj: f64| f.evaluate(&bumped(&bumped(atoms, i, si * h), j, sj * h));
        (e(1.0, 1.0)? - e(1.0, -1.0)? - e(-1.0, 1.0)? + e(-1.0, -1.0)?) / (4.0 * h * h)
    };
    Ok(FdCheck::new(f.projection_hessian(atoms, i, j)?, fd))
}

/// Utility family.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    /// `-exp(-(x - θλ)/δ + K)` with `λ` the arithmetic mean.
    Cara,
    /// `(1/p)(x λ^{-θ})^p K` with `p = 1 - 1/δ`, or `log(x λ^{-θ}) K + G`
    /// when `δ = 1`; `λ` is the geometric mean.
    Crra,
}

impl Field {
    pub fn functional(self) -> MeasureFunctional {
        match self {
            Field::Cara => MeasureFunctional::ArithMean,
            Field::Crra => MeasureFunctional::GeomMean,
        }
    }
}

/// Preference parameters and correction state at one time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldParams {
    pub delta: f64,
    pub theta: f64,
    pub k: f64,
    pub dk_dt: f64,
    pub g: f64,
    pub dg_dt: f64,
}

/// Whether `delta` selects the logarithmic CRRA branch.
pub fn is_log_branch(delta: f64) -> bool {
    math::abs(delta - 1.0) <= 1e-12
}

pub fn cara_utility(x: f64, lambda: f64, k: f64, delta: f64, theta: f64) -> f64 {
    -math::exp(-(x - theta * lambda) / delta + k)
}

pub fn crra_utility(x: f64, lambda: f64, k: f64, g: f64, delta: f64, theta: f64) -> f64 {
    let rel = x * math::powf(lambda, -theta);
    if is_log_branch(delta) {
        math::ln(rel) * k + g
    } else {
        let p = 1.0 - 1.0 / delta;
        math::powf(rel, p) * k / p
    }
}

/// Value of the field at `(x, λ)`.
pub fn utility(field: Field, x: f64, lambda: f64, p: &FieldParams) -> f64 {
    match field {
        Field::Cara => cara_utility(x, lambda, p.k, p.delta, p.theta),
        Field::Crra => crra_utility(x, lambda, p.k, p.g, p.delta, p.theta),
    }
}

/// Time, space and measure derivatives of a utility field at one point.
///
/// The measure derivatives are `c` (CARA) or `c / v`, `c / v²`, `c / (v w)`
/// (CRRA) in the point arguments; the coefficients are stored.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivativeBundle {
    pub field: Field,
    pub d_t: f64,
    pub d_x: f64,
    pub d_xx: f64,
    c_mu: f64,
    c_v_mu: f64,
    c_mumu: f64,
    c_x_mu: f64,
}

impl DerivativeBundle {
    pub fn d_mu(&self, v: f64) -> f64 {
        match self.field {
            Field::Cara => self.c_mu,
            Field::Crra => self.c_mu / v,
        }
    }

    pub fn d_v_dmu(&self, v: f64) -> f64 {
        match self.field {
            Field::Cara => self.c_v_mu,
            Field::Crra => self.c_v_mu / (v * v),
        }
    }

    pub fn d_mumu(&self, v: f64, w: f64) -> f64 {
        match self.field {
            Field::Cara => self.c_mumu,
            Field::Crra => self.c_mumu / (v * w),
        }
    }

    pub fn d_x_dmu(&self, v: f64) -> f64 {
        match self.field {
            Field::Cara => self.c_x_mu,
            Field::Crra => self.c_x_mu / v,
        }
    }
}

pub fn cara_derivatives(x: f64, atoms: &[f64], p: &FieldParams) -> Result<DerivativeBundle> {
    if !(p.delta > 0.0) || !(0.0..=1.0).contains(&p.theta) {
        return Err(domain("CARA field needs delta > 0 and theta in [0,1]"));
    }
    let lambda = MeasureFunctional::ArithMean.evaluate(atoms)?;
    let u = cara_utility(x, lambda, p.k, p.delta, p.theta);
    let (d, th) = (p.delta, p.theta);
    Ok(DerivativeBundle {
        field: Field::Cara,
        d_t: p.dk_dt * u,
        d_x: -u / d,
        d_xx: u / (d * d),
        c_mu: th / d * u,
        c_v_mu: 0.0,
        c_mumu: (th / d) * (th / d) * u,
        c_x_mu: -th / (d * d) * u,
    })
}

pub fn crra_derivatives(x: f64, atoms: &[f64], p: &FieldParams) -> Result<DerivativeBundle> {
    if !(x > 0.0) {
        return Err(domain("CRRA field needs positive wealth"));
    }
    if !(p.delta > 0.0) || !(0.0..=1.0).contains(&p.theta) {
        return Err(domain("CRRA field needs delta > 0 and theta in [0,1]"));
    }
    let lambda = MeasureFunctional::GeomMean.evaluate(atoms)?;
    let th = p.theta;
    if is_log_branch(p.delta) {
        let rel = math::ln(x) - th * math::ln(lambda);
        return Ok(DerivativeBundle {
            field: Field::Crra,
            d_t: p.dk_dt * rel + p.dg_dt,
            d_x: p.k / x,
            d_xx: -p.k / (x * x),
            c_mu: -th * p.k,
            c_v_mu: th * p.k,
            c_mumu: 0.0,
            c_x_mu: 0.0,
        });
    }
    let q = 1.0 - 1.0 / p.delta;
    let u = crra_utility(x, lambda, p.k, p.g, p.delta, th);
    Ok(DerivativeBundle {
        field: Field::Crra,
        d_t: u * p.dk_dt / p.k,
        d_x: q * u / x,
        d_xx: q * (q - 1.0) * u / (x * x),
        c_mu: -th * q * u,
        c_v_mu: th * q * u,
        c_mumu: th * th * q * q * u,
        c_x_mu: -th * q * q * u / x,
    })
}

pub fn derivatives(field: Field, x: f64, atoms: &[f64], p: &FieldParams) -> Result<DerivativeBundle> {
    match field {
        Field::Cara => cara_derivatives(x, atoms, p),
        Field::Crra => crra_derivatives(x, atoms, p),
    }
}

/// One entry of a bundle check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BundleEntry {
    pub name: &'static str,
    pub check: FdCheck,
}

/// Checks every entry of the bundle at `(x, m_N(atoms))` by central
/// differences with step `bump`.
///
/// First-order entries difference the field itself, with the measure
/// derivative taken through the empirical projection at atom `j`. Second-order
/// entries difference the corresponding first-order derivative in its
/// remaining argument: `d_xx` and `d_x_dmu` in `x`, `d_v_dmu` in the point
/// `v = x_j`, and `d_mumu` in atom `k` (scaled by `N`).
pub fn fd_bundle_check(field: Field, x: f64, atoms: &[f64], p: &FieldParams, j: usize, k: usize, bump: f64) -> Result<Vec<BundleEntry>> {
    if j == k || j >= atoms.len() || k >= atoms.len() {
        return Err(domain("bundle check needs two distinct atom indices"));
    }
    let h = bump;
    let n = atoms.len() as f64;
    let f = field.functional();
    let u_at = |x: f64, atoms: &[f64], p: &FieldParams| -> Result<f64> { Ok(utility(field, x, f.evaluate(atoms)?, p)) };
    let b = derivatives(field, x, atoms, p)?;
    let (vj, vk) = (atoms[j], atoms[k]);

    let later = FieldParams { k: p.k + p.dk_dt * h, g: p.g + p.dg_dt * h, ..*p };
    let earlier = FieldParams { k: p.k - p.dk_dt * h, g: p.g - p.dg_dt * h, ..*p };
    let d_t = (u_at(x, atoms, &later)? - u_at(x, atoms, &earlier)?) / (2.0 * h);
    let d_x = (u_at(x + h, atoms, p)? - u_at(x - h, atoms, p)?) / (2.0 * h);
    let d_mu = n * (u_at(x, &bumped(atoms, j, h), p)? - u_at(x, &bumped(atoms, j, -h), p)?) / (2.0 * h);

    let bx = |x: f64| derivatives(field, x, atoms, p);
    let d_xx = (bx(x + h)?.d_x - bx(x - h)?.d_x) / (2.0 * h);
    let d_x_dmu = (bx(x + h)?.d_mu(vj) - bx(x - h)?.d_mu(vj)) / (2.0 * h);
    let d_v_dmu = (b.d_mu(vj + h) - b.d_mu(vj - h)) / (2.0 * h);
    let bk = |s: f64| derivatives(field, x, &bumped(atoms, k, s * h), p);
    let d_mumu = n * (bk(1.0)?.d_mu(vj) - bk(-1.0)?.d_mu(vj)) / (2.0 * h);

    Ok(vec![
        BundleEntry { name: "d_t", check: FdCheck::new(b.d_t, d_t) },
        BundleEntry { name: "d_x", check: FdCheck::new(b.d_x, d_x) },
        BundleEntry { name: "d_xx", check: FdCheck::new(b.d_xx, d_xx) },
        BundleEntry { name: "d_mu", check: FdCheck::new(b.d_mu(vj), d_mu) },
        BundleEntry { name: "d_v_dmu", check: FdCheck::new(b.d_v_dmu(vj), d_v_dmu) },
        BundleEntry { name: "d_mumu", check: FdCheck::new(b.d_mumu(vj, vk), d_mumu) },
        BundleEntry { name: "d_x_dmu", check: FdCheck::new(b.d_x_dmu(vj), d_x_dmu) },
    ])
}

/// A randomized smooth point for derivative checks.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckPoint {
    pub field: Field,
    pub x: f64,
    pub atoms: Vec<f64>,
    pub params: FieldParams,
}

/// Point `index` of the check sequence of `master_seed`. Fields alternate;
/// `θ` is exactly 0 on every tenth point and CRRA points use the log branch
/// on every fifth, otherwise `θ ∈ [0.1, 1]` and `δ ∈ [0.5, 0.9] ∪ [1.1, 3]`.
/// Wealth and atoms lie in `[0.5, 2]`.
pub fn random_check_point(master_seed: u64, index: u64, n_atoms: usize) -> Result<CheckPoint> {
    if n_atoms < 2 {
        return Err(domain("check points need at least two atoms"));
    }
    let mut rng = stream_rng(SeedLineage::new(master_seed, 0), StreamKind::Points, index, 0);
    let field = if index % 2 == 0 { Field::Cara } else { Field::Crra };
    let x = rng.random_range(0.5..2.0);
    let atoms = (0..n_atoms).map(|_| rng.random_range(0.5..2.0)).collect();
    let theta = if index % 10 == 9 { 0.0 } else { rng.random_range(0.1..1.0) };
    let delta = if field == Field::Crra && index % 5 == 1 {
        1.0
    } else if rng.random_bool(0.2) {
        rng.random_range(0.5..0.9)
    } else {
        rng.random_range(1.1..3.0)
    };
    let k = match field {
        Field::Cara => rng.random_range(-0.5..0.5),
        Field::Crra => rng.random_range(0.5..1.5),
    };
    let params = FieldParams {
        delta,
        theta,
        k,
        dk_dt: rng.random_range(-0.5..0.5),
        g: rng.random_range(-0.5..0.5),
        dg_dt: rng.random_range(-0.5..0.5),
    };
    Ok(CheckPoint { field, x, atoms, params })
}

//! Gaussian kernel, heat semigroup, Gaussian smoothing of measures and the
//! representation identities for the compensator.

use alloc::vec::Vec;

use crate::convex_model::{laplacian, ConvexFunction, ScalarMeasure, TestFunction};
use crate::error::{check_dim, invalid, Error, Result};
use crate::math;
use crate::quadrature::{adaptive_simpson, gaussian_expectation, interval_nodes, tensor_integrate, GaussRule, NodeSet};

/// Default Gauss–Hermite order for semigroup evaluations.
pub const SEMIGROUP_ORDER: usize = 32;
/// Absolute tolerance of the adaptive time integrals.
pub const TIME_TOL: f64 = 1e-8;

/// Arguments of the transition density `p_s(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelQuery {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: f64,
}

/// `(2πs)^{-d/2} exp(−‖x − y‖² / 2s)`.
pub fn heat_kernel_density(q: &KernelQuery) -> Result<f64> {
    heat_kernel(&q.x, &q.y, q.s)
}

pub fn heat_kernel(x: &[f64], y: &[f64], s: f64) -> Result<f64> {
    check_dim(x.len(), y.len())?;
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Domain("heat kernel time must be finite and > 0".into()));
    }
    Ok(radial_kernel(math::dist(x, y), x.len(), s))
}

fn radial_kernel(r: f64, d: usize, s: f64) -> f64 {
    math::powf(2.0 * core::f64::consts::PI * s, -(d as f64) / 2.0) * math::exp(-r * r / (2.0 * s))
}

/// `p_s h(x) = E h(x + W_s)` by tensor Gauss–Hermite of the given order.
pub fn semigroup_apply(h: impl Fn(&[f64]) -> f64, s: f64, x: &[f64], order: usize) -> Result<f64> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::Domain("semigroup time must be finite and >= 0".into()));
    }
    if s == 0.0 {
        return Ok(h(x));
    }
    let rule = GaussRule::hermite_normal(order)?;
    gaussian_expectation(&rule, x, math::sqrt(s), "semigroup_apply", h)
}

/// `∫ ψ_T(x − y) μ(dy)` with `ψ_T(z) = T^d ψ(Tz)` and `ψ` the standard
/// normal density: the density part is `E q(x + Z/T)`, atoms contribute
/// `w ψ_T(x − y_k)`.
pub fn gaussian_smooth_measure(mu: &ScalarMeasure, big_t: f64, x: &[f64], order: usize) -> Result<f64> {
    check_dim(mu.dim, x.len())?;
    if !(big_t > 0.0) || !big_t.is_finite() {
        return Err(invalid("T", "must be finite and > 0"));
    }
    let rule = GaussRule::hermite_normal(order)?;
    let density = gaussian_expectation(&rule, x, 1.0 / big_t, "gaussian_smooth_measure", |y| {
        mu.density_at(y)
    })?;
    let s = 1.0 / (big_t * big_t);
    let atoms: f64 = mu
        .atoms
        .iter()
        .map(|(loc, w)| w * radial_kernel(math::dist(x, loc), x.len(), s))
        .sum();
    Ok(density + atoms)
}

/// `(1/t) ∫_0^t ∫ p_s(x, y) v(dy) ds`, the mean compensator over `t` for a
/// Revuz measure `v`.
///
/// The time integral is taken in `u = √s`, which removes the `s^{-1/2}`
/// singularity of a one-dimensional atom at `x`. In two or more dimensions
/// an atom at `x` itself makes the integral diverge.
pub fn expected_a_over_t(va: &ScalarMeasure, x: &[f64], t: f64) -> Result<f64> {
    check_dim(va.dim, x.len())?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(invalid("t", "must be finite and > 0"));
    }
    let d = x.len();
    let root = math::sqrt(t);
    let rule = GaussRule::hermite_normal(SEMIGROUP_ORDER)?;
    let mut failure = None;
    let density_part = adaptive_simpson(
        |u| {
            if u == 0.0 {
                return 0.0;
            }
            match gaussian_expectation(&rule, x, u, "expected_a_over_t", |y| va.density_at(y)) {
                Ok(v) => 2.0 * u * v,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        },
        0.0,
        root,
        TIME_TOL * t,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    let mut atom_part = 0.0;
    for (loc, w) in &va.atoms {
        let r = math::dist(x, loc);
        if r == 0.0 && d >= 2 {
            return Err(Error::NonIntegrable(alloc::format!(
                "point {x:?} carries an atom; ∫ p_s(x, x) ds diverges for d = {d}"
            )));
        }
        let integral = adaptive_simpson(
            |u| {
                if u == 0.0 {
                    // the d = 1, r = 0 limit; otherwise the integrand vanishes
                    return if d == 1 && r == 0.0 { 2.0 * math::INV_SQRT_2PI } else { 0.0 };
                }
                2.0 * u * radial_kernel(r, d, u * u)
            },
            0.0,
            root,
            TIME_TOL * t,
        )?;
        atom_part += w * integral;
    }
    Ok((density_part + atom_part) / t)
}

/// Both sides of `∫ h E^x[A_t] dx = ∫_0^t ⟨v_A, p_s h⟩ ds`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepresentationCheck {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
}

impl RepresentationCheck {
    pub fn gap(&self) -> f64 {
        math::abs(self.lhs - self.rhs)
    }
}

const TIME_NODES: usize = 16;
const SPACE_NODES: usize = 32;
const INNER_HERMITE: usize = 20;

/// Evaluates both sides of the representation identity for a C² function
/// `f` (so `v_A = ½Δf dx`) and a compactly supported `h ≥ 0`.
///
/// The left side applies the semigroup to `½Δf` by Gauss–Hermite; the right
/// side smooths `h` instead, using its closed-form heat evolution when it has
/// one, and integrates over the support box widened by `10√s`.
pub fn representation_check(f: &dyn ConvexFunction, h: &dyn TestFunction, t: f64) -> Result<RepresentationCheck> {
    check_dim(f.dim(), h.dim())?;
    if !f.is_smooth() {
        return Err(Error::Precondition(
            "representation_check needs a C² function; mollify it first".into(),
        ));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(invalid("t", "must be finite and >= 0"));
    }
    let bx = h.support_box().ok_or(Error::UnboundedSupport)?;
    if bx.len() > 3 {
        return Err(Error::Precondition("tensor quadrature supports d <= 3".into()));
    }
    if t == 0.0 {
        return Ok(RepresentationCheck { t, lhs: 0.0, rhs: 0.0 });
    }
    let half_lap = |y: &[f64]| laplacian(f, y, 0.0).map(|v| 0.5 * v).unwrap_or(f64::NAN);
    let time = GaussRule::legendre(TIME_NODES)?.on_interval(0.0, t);
    let space = GaussRule::legendre(SPACE_NODES)?;
    let inner = GaussRule::hermite_normal(INNER_HERMITE)?;

    let x_axes: Vec<NodeSet> = bx.iter().map(|&(a, b)| space.on_interval(a, b)).collect();
    let mut inner_err = None;
    let lhs = tensor_integrate(&x_axes, "representation lhs", |x| {
        let hx = h.value(x);
        if hx == 0.0 {
            return 0.0;
        }
        let mut acc = 0.0;
        for (s, w) in time.points.iter().zip(&time.weights) {
            match gaussian_expectation(&inner, x, math::sqrt(*s), "representation lhs", half_lap) {
                Ok(v) => acc += w * v,
                Err(e) => {
                    inner_err.get_or_insert(e);
                }
            }
        }
        hx * acc
    })?;
    if let Some(e) = inner_err {
        return Err(e);
    }

    let mut rhs = 0.0;
    for (s, w) in time.points.iter().zip(&time.weights) {
        let pad = 10.0 * math::sqrt(*s);
        let y_axes: Vec<NodeSet> = bx
            .iter()
            .map(|&(a, b)| interval_nodes(a - pad, b + pad, &[a, b], &space))
            .collect();
        let smoothed = |y: &[f64]| match h.heat(*s, y) {
            Some(v) => v,
            None => semigroup_apply(|z| h.value(z), *s, y, SEMIGROUP_ORDER).unwrap_or(f64::NAN),
        };
        rhs += w * tensor_integrate(&y_axes, "representation rhs", |y| {
            let ph = smoothed(y);
            if ph == 0.0 {
                0.0
            } else {
                half_lap(y) * ph
            }
        })?;
    }
    Ok(RepresentationCheck { t, lhs, rhs })
}

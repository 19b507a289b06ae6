//! Energy functional, gradient, residual, and Hessian of the discrete
//! anisotropic problem.
//!
//! For a state `u` with differences `d(i) = Δu(i) = u(i+1) - u(i)`,
//!
//! ```text
//! Φ(u) = Σ_{i=0}^{T}  |d(i)|^{p(i)} / p(i)
//! Ψ(u) = Σ_{k=1}^{T}  F_k(u(k))
//! J_λ  = Φ - λ Ψ
//! ```
//!
//! Critical points of `J_λ` are exactly the solutions of the difference
//! equation; the two first-order views implemented here — the weak gradient
//! `⟨J_λ'(u), e_k⟩` computed by pairing against basis directions, and the
//! strong residual computed from the difference form of the equation — are
//! deliberately independent code paths so that each can check the other.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::run_batch;
use crate::problem::{forward_difference, ProblemInstance, StateVector};
use crate::wide::WideFloat;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("Hessian is singular at difference index {index}: p = {p} < 2 and |Δu| = {diff}")]
    SingularHessian { index: usize, p: f64, diff: f64 },
    #[error("coercivity check needs radius > 1, got {0}")]
    BadRadius(f64),
}

/// `φ_p(s) = |s|^{p-2} s`, with the removable singularity closed by
/// `φ_p(0) = 0` (required for exponents `p < 2`).
pub fn phi_p(s: f64, p: f64) -> f64 {
    if s == 0.0 {
        0.0
    } else {
        s.signum() * s.abs().powf(p - 1.0)
    }
}

/// The three energy values of a state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub phi: f64,
    pub psi: f64,
    pub j_lambda: f64,
}

/// Evaluate `Φ`, `Ψ`, and `J_λ = Φ - λΨ` at `u`.
pub fn phi_psi(instance: &ProblemInstance, u: &StateVector) -> EnergyBreakdown {
    let d = forward_difference(u);
    let mut phi = 0.0;
    for (i, &di) in d.iter().enumerate() {
        let p = instance.exponents.get(i);
        if di != 0.0 {
            phi += di.abs().powf(p) / p;
        }
    }
    let mut psi = 0.0;
    for k in 1..=instance.t {
        psi += instance.nonlinearity.big_f(k, u.get(k));
    }
    EnergyBreakdown {
        phi,
        psi,
        j_lambda: phi - instance.lambda * psi,
    }
}

/// `Φ(u)` in exact wide-range arithmetic.
///
/// Every term `|d(i)|^{p(i)} / p(i)` is carried as a [`WideFloat`], so the
/// value survives scales where f64 underflows (sup norms like `2^-720`).
pub fn phi_wide(instance: &ProblemInstance, u: &StateVector) -> WideFloat {
    let d = forward_difference(u);
    let mut phi = WideFloat::zero();
    for (i, &di) in d.iter().enumerate() {
        if di == 0.0 {
            continue;
        }
        let p = instance.exponents.get(i);
        let term = WideFloat::from_f64(di.abs()).powf(p).div_f64(p);
        phi = phi.add(&term);
    }
    phi
}

/// `J_λ(u)` in exact wide-range arithmetic, available when the nonlinearity
/// carries the wide antiderivative hook.
pub fn j_wide(instance: &ProblemInstance, u: &StateVector) -> Option<WideFloat> {
    let mut psi = WideFloat::zero();
    for k in 1..=instance.t {
        let uk = u.get(k);
        if uk == 0.0 {
            continue; // F_k(0) = 0 exactly
        }
        let term = instance
            .nonlinearity
            .big_f_wide(k, &WideFloat::from_f64(uk))?;
        psi = psi.add(&term);
    }
    Some(phi_wide(instance, u).sub(&psi.mul_f64(instance.lambda)))
}

/// Weak gradient: component `k` is `⟨J_λ'(u), e_k⟩` obtained by pairing the
/// difference terms against the basis direction `e_k` literally,
///
/// ```text
/// ⟨J_λ'(u), e_k⟩ = Σ_{i=0}^{T} φ_{p(i)}(d(i)) · Δe_k(i)  -  λ f_k(u(k))
/// ```
///
/// where `Δe_k(i) = [i = k-1] - [i = k]`. The sum is evaluated as written;
/// the strong residual below never shares this code.
pub fn weak_gradient(instance: &ProblemInstance, u: &StateVector) -> Vec<f64> {
    let d = forward_difference(u);
    let phi_vals: Vec<f64> = d
        .iter()
        .enumerate()
        .map(|(i, &di)| phi_p(di, instance.exponents.get(i)))
        .collect();
    (1..=instance.t)
        .map(|k| {
            let mut pairing = 0.0;
            for (i, &pv) in phi_vals.iter().enumerate() {
                let de = f64::from(i == k - 1) - f64::from(i == k);
                pairing += pv * de;
            }
            pairing - instance.lambda * instance.nonlinearity.f(k, u.get(k))
        })
        .collect()
}

/// Strong residual of the difference equation at the interior nodes,
///
/// ```text
/// r(k) = φ_{p(k-1)}(Δu(k-1)) - φ_{p(k)}(Δu(k)) - λ f_k(u(k)),  k = 1..=T,
/// ```
///
/// computed directly from the difference form. A solution has `r ≡ 0`.
pub fn strong_residual(instance: &ProblemInstance, u: &StateVector) -> Vec<f64> {
    let d = forward_difference(u);
    (1..=instance.t)
        .map(|k| {
            let left = phi_p(d[k - 1], instance.exponents.get(k - 1));
            let right = phi_p(d[k], instance.exponents.get(k));
            left - right - instance.lambda * instance.nonlinearity.f(k, u.get(k))
        })
        .collect()
}

/// Symmetric tridiagonal matrix: `diag` has length `T`, `off` length `T-1`,
/// with `off[i]` coupling interior nodes `i+1` and `i+2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct HessianOptions {
    /// Replace `|Δu|` by `max(|Δu|, eps_h)` in the singular weights
    /// (`p < 2` only; for `p >= 2` the weights are already finite).
    pub regularize: bool,
    pub eps_h: f64,
}

impl Default for HessianOptions {
    fn default() -> Self {
        HessianOptions {
            regularize: true,
            eps_h: 1e-10,
        }
    }
}

/// Second derivative of `J_λ` at `u` as a symmetric tridiagonal matrix:
///
/// ```text
/// H[k][k]   = (p(k-1)-1)|d(k-1)|^{p(k-1)-2} + (p(k)-1)|d(k)|^{p(k)-2} - λ f_k'(u(k))
/// H[k][k+1] = -(p(k)-1)|d(k)|^{p(k)-2}
/// ```
///
/// For `p(i) < 2` the weight `|d|^{p-2}` blows up as `d → 0`; with
/// `regularize` set the magnitude is clamped below by `eps_h`, otherwise a
/// vanishing difference is reported as [`EnergyError::SingularHessian`].
pub fn hessian(
    instance: &ProblemInstance,
    u: &StateVector,
    options: &HessianOptions,
) -> Result<Tridiagonal, EnergyError> {
    let t = instance.t;
    let d = forward_difference(u);
    let mut weights = Vec::with_capacity(t + 1);
    for (i, &di) in d.iter().enumerate() {
        let p = instance.exponents.get(i);
        let mut mag = di.abs();
        if p < 2.0 && mag < options.eps_h {
            if !options.regularize {
                return Err(EnergyError::SingularHessian {
                    index: i,
                    p,
                    diff: mag,
                });
            }
            mag = options.eps_h;
        }
        let w = if p == 2.0 {
            1.0
        } else if mag == 0.0 {
            0.0 // p > 2: |d|^{p-2} → 0
        } else {
            mag.powf(p - 2.0)
        };
        weights.push((p - 1.0) * w);
    }
    let mut diag = Vec::with_capacity(t);
    for k in 1..=t {
        let curvature = weights[k - 1] + weights[k];
        let df = instance.nonlinearity.df(k, u.get(k));
        diag.push(curvature - instance.lambda * df);
    }
    let off = (1..t).map(|k| -weights[k]).collect();
    Ok(Tridiagonal { diag, off })
}

/// Report of the sampled coercivity check: along random directions the map
/// `t ↦ Φ(t·dir)` must be nondecreasing on `[1, radius]` and strictly larger
/// at `radius` than at `1`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoercivityReport {
    pub radius: f64,
    pub samples: usize,
    pub grid_points: usize,
    pub monotone_failures: usize,
    pub growth_failures: usize,
    pub min_phi_at_radius: f64,
    pub max_phi_at_unit: f64,
    pub passed: bool,
}

/// Sample `Φ` along random unit directions (in the difference norm) and
/// check radial growth between `t = 1` and `t = radius`.
pub fn verify_coercivity(
    instance: &ProblemInstance,
    radius: f64,
    samples: usize,
    seed: u64,
    parallel: bool,
) -> Result<CoercivityReport, EnergyError> {
    if !(radius > 1.0) || !radius.is_finite() {
        return Err(EnergyError::BadRadius(radius));
    }
    let grid_points = 16usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut directions = Vec::with_capacity(samples);
    while directions.len() < samples {
        let raw: Vec<f64> = (0..instance.t).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dir = StateVector::from_interior(&raw);
        let h = dir.h_norm();
        if h > 1e-8 {
            let unit: Vec<f64> = raw.iter().map(|x| x / h).collect();
            directions.push(StateVector::from_interior(&unit));
        }
    }
    let ratio = radius.powf(1.0 / (grid_points - 1) as f64);
    let per_direction = run_batch(parallel, directions, move |dir| {
        let mut prev = f64::NEG_INFINITY;
        let mut monotone_ok = true;
        let mut phi_unit = 0.0;
        let mut phi_radius = 0.0;
        for g in 0..grid_points {
            let tval = ratio.powi(g as i32);
            let phi = phi_psi(instance, &dir.add_scaled(tval - 1.0, dir.interior())).phi;
            // add_scaled(t-1, dir) = t·dir since the state itself is dir
            if g == 0 {
                phi_unit = phi;
            }
            if g == grid_points - 1 {
                phi_radius = phi;
            }
            if phi + 1e-12 * phi.abs().max(1.0) < prev {
                monotone_ok = false;
            }
            prev = phi;
        }
        (monotone_ok, phi_unit, phi_radius)
    });
    let mut monotone_failures = 0;
    let mut growth_failures = 0;
    let mut min_phi_at_radius = f64::INFINITY;
    let mut max_phi_at_unit: f64 = 0.0;
    for (ok, unit, at_radius) in per_direction {
        if !ok {
            monotone_failures += 1;
        }
        if at_radius <= unit {
            growth_failures += 1;
        }
        min_phi_at_radius = min_phi_at_radius.min(at_radius);
        max_phi_at_unit = max_phi_at_unit.max(unit);
    }
    let passed = monotone_failures == 0 && growth_failures == 0;
    Ok(CoercivityReport {
        radius,
        samples,
        grid_points,
        monotone_failures,
        growth_failures,
        min_phi_at_radius,
        max_phi_at_unit,
        passed,
    })
}

//! Root finding for the discrete Dirichlet system: damped Newton iteration
//! with a pivoted tridiagonal solve, Farrell-style deflation for recovering
//! multiple roots, a small-height negativity probe, the shrinking-height
//! cascade that certifies infinitely-many-solution behavior level by level,
//! and seeded multistart/sweep drivers.
//!
//! Everything downstream of the random starts is deterministic: starts are
//! drawn sequentially from a seeded generator before any parallel dispatch,
//! and all merges preserve a total order, so reports are byte-identical for
//! a fixed seed whether or not the parallel feature is active.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{
    hessian, j_wide, phi_psi, phi_wide, strong_residual, weak_gradient, HessianOptions,
    Tridiagonal,
};
use crate::exec::run_batch;
use crate::problem::{same_root, ProblemError, ProblemInstance, StateVector};
use crate::theory::{self, TheoryError};
use crate::wide::WideFloat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::cmp::Ordering;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("no convergence after {iterations} iterations (residual sup {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("iteration stalled: {0}")]
    Stalled(String),
    #[error("probe height must be finite and positive, got {0}")]
    BadProbe(f64),
    #[error("negativity probes require a height below 1, got {0}")]
    ProbeTooLarge(f64),
    #[error("wide-precision evaluation requires a family with an exact antiderivative hook")]
    UnsupportedWide,
    #[error("cascade heights must be positive and strictly decreasing (index {index})")]
    BadSequence { index: usize },
    #[error("invalid options: {0}")]
    BadOptions(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
}

/// Controls for the damped Newton iteration.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonOptions {
    /// Acceptance threshold for both the strong residual and the weak
    /// gradient, in sup norm.
    pub tol: f64,
    pub max_iter: usize,
    pub max_backtracks: usize,
    /// Armijo slope parameter for the squared-gradient merit.
    pub armijo_c: f64,
    /// Regularize singular Hessian weights (`p < 2` at a vanishing
    /// difference) instead of falling back to gradient steps.
    pub regularize: bool,
    pub eps_h: f64,
    /// For `p⁻ < 2` and small positive iterates, cap the first step length
    /// so the iterate cannot jump across the singular origin.
    pub step_cap_near_zero: bool,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-10,
            max_iter: 100,
            max_backtracks: 60,
            armijo_c: 1e-4,
            regularize: true,
            eps_h: 1e-10,
            step_cap_near_zero: true,
        }
    }
}

/// A converged root with its certificates. `residual_sup` and
/// `gradient_sup` come from two independently coded routes (pointwise
/// operator residual vs. basis pairings of the energy differential) and are
/// stored separately on purpose.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolutionRecord {
    /// Full node values including the zero boundary entries.
    pub values: Vec<f64>,
    pub sup_norm: f64,
    pub h_norm: f64,
    pub residual_sup: f64,
    pub gradient_sup: f64,
    pub phi: f64,
    pub psi: f64,
    pub j_lambda: f64,
    /// Exact sign of `J_λ` from wide-range arithmetic, when the family
    /// carries the hook (`-1`, `0`, `1`).
    pub j_wide_sign: Option<i8>,
    /// Exact `log₂|J_λ|` when available and nonzero.
    pub j_wide_log2_abs: Option<f64>,
    pub iterations: usize,
    /// Number of previously found roots deflated away during the solve.
    pub deflated_against: usize,
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Solve the symmetric tridiagonal system `A x = rhs` by LU elimination
/// with partial pivoting (row swaps introduce a second superdiagonal).
/// Returns `None` when the matrix is numerically singular or the data is
/// not finite.
pub fn tridiag_solve(tri: &Tridiagonal, rhs: &[f64]) -> Option<Vec<f64>> {
    let n = tri.diag.len();
    if n == 0 || rhs.len() != n || tri.off.len() + 1 != n {
        return None;
    }
    let mut diag = tri.diag.clone();
    let mut sup1 = tri.off.clone();
    sup1.push(0.0);
    let mut sup2 = vec![0.0; n];
    let mut sub = tri.off.clone();
    let mut x = rhs.to_vec();
    for i in 0..n - 1 {
        if !(diag[i].is_finite() && sub[i].is_finite()) {
            return None;
        }
        if sub[i].abs() > diag[i].abs() {
            // Swap rows i and i+1 over columns i, i+1, i+2.
            let tmp = diag[i];
            diag[i] = sub[i];
            sub[i] = tmp;
            let tmp = sup1[i];
            sup1[i] = diag[i + 1];
            diag[i + 1] = tmp;
            let tmp = sup2[i];
            sup2[i] = sup1[i + 1];
            sup1[i + 1] = tmp;
            x.swap(i, i + 1);
        }
        if diag[i] == 0.0 {
            return None;
        }
        let m = sub[i] / diag[i];
        diag[i + 1] -= m * sup1[i];
        sup1[i + 1] -= m * sup2[i];
        x[i + 1] -= m * x[i];
    }
    if diag[n - 1] == 0.0 || !diag[n - 1].is_finite() {
        return None;
    }
    for i in (0..n).rev() {
        let mut acc = x[i];
        if i + 1 < n {
            acc -= sup1[i] * x[i + 1];
        }
        if i + 2 < n {
            acc -= sup2[i] * x[i + 2];
        }
        x[i] = acc / diag[i];
        if !x[i].is_finite() {
            return None;
        }
    }
    Some(x)
}

/// Shifted deflation factor `M(u) = Π_i (1/d_i^q + σ)` with `d_i` the
/// H-norm distance from `u` to the i-th known root. Empty root list gives 1;
/// the factor diverges as `u` approaches a known root.
pub fn deflate(previous: &[StateVector], u: &StateVector, q: f64, sigma: f64) -> f64 {
    previous
        .iter()
        .map(|r| {
            let d = u.minus(r).h_norm();
            if d == 0.0 {
                f64::INFINITY
            } else {
                d.powf(-q) + sigma
            }
        })
        .product()
}

const DEFLATION_Q: f64 = 2.0;
const DEFLATION_SIGMA: f64 = 1.0;

/// Sup-norm floor below which a converged state counts as the zero
/// solution: an absolute residual tolerance has no resolution there.
const ZERO_SUP: f64 = 1e-8;

/// `ln M(u)` in overflow-safe form: `Σ_i [ln(1 + σ d_i^q) - q ln d_i]`.
fn log_deflation(previous: &[StateVector], u: &StateVector) -> f64 {
    let mut acc = 0.0;
    for r in previous {
        let d = u.minus(r).h_norm();
        if d == 0.0 {
            return f64::INFINITY;
        }
        acc += (DEFLATION_SIGMA * d.powf(DEFLATION_Q)).ln_1p() - DEFLATION_Q * d.ln();
    }
    acc
}

/// `ln ‖g‖₂` without overflow.
fn log_l2(g: &[f64]) -> f64 {
    let m = sup(g);
    if m == 0.0 {
        return f64::NEG_INFINITY;
    }
    if !m.is_finite() {
        return f64::INFINITY;
    }
    let scaled: f64 = g.iter().map(|x| (x / m) * (x / m)).sum();
    m.ln() + 0.5 * scaled.ln()
}

/// `ln(M(u)²·‖g(u)‖₂²)` — the line-search merit in logarithmic form.
fn log_merit(previous: &[StateVector], u: &StateVector, g: &[f64]) -> f64 {
    2.0 * log_deflation(previous, u) + 2.0 * log_l2(g)
}

/// H inner product of two interior vectors (zero boundary implied).
fn h_inner(t: usize, a: &[f64], b: &[f64]) -> f64 {
    let get = |v: &[f64], i: usize| if i == 0 || i > t { 0.0 } else { v[i - 1] };
    (0..=t)
        .map(|i| (get(a, i + 1) - get(a, i)) * (get(b, i + 1) - get(b, i)))
        .sum()
}

/// Farrell step scaling for the deflated system: the Newton step `δ` of the
/// undeflated residual maps to `τ·δ` with `τ = 1/(1 - ∇ln M·δ)`.
fn deflation_scale(previous: &[StateVector], u: &StateVector, delta: &[f64]) -> f64 {
    if previous.is_empty() {
        return 1.0;
    }
    let t = u.t();
    let mut rho = 0.0;
    for r in previous {
        let w = u.minus(r);
        let d = w.h_norm();
        if d == 0.0 {
            return 1.0; // merit is infinite here anyway; leave δ alone
        }
        let inner = h_inner(t, w.interior(), delta);
        rho -= DEFLATION_Q * inner / (d * d * (1.0 + DEFLATION_SIGMA * d.powf(DEFLATION_Q)));
    }
    if !rho.is_finite() {
        return 1.0;
    }
    let denom = 1.0 - rho;
    let tau = if denom.abs() < 1e-12 {
        1e3
    } else {
        1.0 / denom
    };
    tau.clamp(-1e3, 1e3)
}

struct Converged {
    state: StateVector,
    iterations: usize,
}

/// Damped Newton iteration on the residual with an Armijo line search on
/// the (deflated) squared-gradient merit, evaluated in log space. With
/// `sublevel` set, candidate iterates must keep `Φ` strictly below the given
/// exact radius. Convergence is checked before stepping, so an exact root is
/// accepted at iteration 0.
fn newton_core(
    instance: &ProblemInstance,
    start: &StateVector,
    opts: &NewtonOptions,
    roots: &[StateVector],
    sublevel: Option<&WideFloat>,
) -> Result<Converged, SolverError> {
    let hopts = HessianOptions {
        regularize: opts.regularize,
        eps_h: opts.eps_h,
    };
    let mut u = start.clone();
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None; // (interior, gradient)
    let mut iterations = 0usize;
    loop {
        let g = weak_gradient(instance, &u);
        let r = strong_residual(instance, &u);
        if sup(&r) <= opts.tol && sup(&g) <= opts.tol {
            if roots.iter().any(|p| same_root(&u, p, 1e-8)) {
                return Err(SolverError::Stalled(
                    "converged onto an already-deflated root".into(),
                ));
            }
            return Ok(Converged {
                state: u,
                iterations,
            });
        }
        if iterations >= opts.max_iter {
            return Err(SolverError::NoConvergence {
                iterations,
                residual: sup(&r),
            });
        }

        // Newton direction; on failure a (Barzilai-Borwein scaled) gradient
        // direction.
        let neg_g: Vec<f64> = g.iter().map(|x| -x).collect();
        let newton_dir = hessian(instance, &u, &hopts)
            .ok()
            .and_then(|tri| tridiag_solve(&tri, &neg_g))
            .map(|mut d| {
                let tau = deflation_scale(roots, &u, &d);
                d.iter_mut().for_each(|x| *x *= tau);
                d
            })
            .filter(|d| d.iter().all(|x| x.is_finite()) && sup(d) > 0.0);
        let bb_dir = || -> Option<Vec<f64>> {
            let gamma = match &prev {
                Some((pu, pg)) => {
                    let s: Vec<f64> = u
                        .interior()
                        .iter()
                        .zip(pu)
                        .map(|(a, b)| a - b)
                        .collect();
                    let y: Vec<f64> = g.iter().zip(pg).map(|(a, b)| a - b).collect();
                    let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
                    let yy: f64 = y.iter().map(|a| a * a).sum();
                    if sy > 0.0 && yy > 0.0 {
                        (sy / yy).clamp(1e-12, 1e12)
                    } else {
                        1.0 / sup(&g).max(1.0)
                    }
                }
                None => 1.0 / sup(&g).max(1.0),
            };
            let d: Vec<f64> = neg_g.iter().map(|x| x * gamma).collect();
            (d.iter().all(|x| x.is_finite()) && sup(&d) > 0.0).then_some(d)
        };

        let m0 = log_merit(roots, &u, &g);
        let mut accepted: Option<StateVector> = None;
        'dirs: for dir in [newton_dir, bb_dir()].into_iter().flatten() {
            // Step cap near the singular origin for exponents below 2.
            let mut alpha = 1.0;
            if opts.step_cap_near_zero && instance.p_minus() < 2.0 {
                let s = u.sup_norm();
                if s > 0.0 && s < 1.0 {
                    alpha = (0.5 * s / sup(&dir)).min(1.0);
                }
            }
            for _ in 0..=opts.max_backtracks {
                let cand = u.add_scaled(alpha, &dir);
                if cand.values().iter().all(|x| x.is_finite()) {
                    let inside = match sublevel {
                        Some(radius) => {
                            phi_wide(instance, &cand).cmp_value(radius) == Ordering::Less
                        }
                        None => true,
                    };
                    if inside {
                        let g_new = weak_gradient(instance, &cand);
                        let m_new = log_merit(roots, &cand, &g_new);
                        if m_new <= m0 + (-2.0 * opts.armijo_c * alpha).ln_1p() {
                            accepted = Some(cand);
                            break 'dirs;
                        }
                    }
                }
                alpha *= 0.5;
            }
        }
        match accepted {
            Some(next) => {
                prev = Some((u.interior().to_vec(), g));
                u = next;
                iterations += 1;
            }
            None => {
                return Err(SolverError::Stalled(format!(
                    "no direction produced merit decrease at iteration {iterations}"
                )))
            }
        }
    }
}

fn make_record(
    instance: &ProblemInstance,
    u: &StateVector,
    iterations: usize,
    deflated_against: usize,
) -> SolutionRecord {
    let r = strong_residual(instance, u);
    let g = weak_gradient(instance, u);
    let parts = phi_psi(instance, u);
    let (j_wide_sign, j_wide_log2_abs) = match j_wide(instance, u) {
        Some(j) => {
            let s = j.sign();
            let l = if s == 0 { None } else { Some(j.abs().log2()) };
            (Some(s), l)
        }
        None => (None, None),
    };
    SolutionRecord {
        values: u.values().to_vec(),
        sup_norm: u.sup_norm(),
        h_norm: u.h_norm(),
        residual_sup: sup(&r),
        gradient_sup: sup(&g),
        phi: parts.phi,
        psi: parts.psi,
        j_lambda: parts.j_lambda,
        j_wide_sign,
        j_wide_log2_abs,
        iterations,
        deflated_against,
    }
}

/// Newton solve from a given start.
pub fn newton_solve(
    instance: &ProblemInstance,
    start: &StateVector,
    opts: &NewtonOptions,
) -> Result<SolutionRecord, SolverError> {
    let c = newton_core(instance, start, opts, &[], None)?;
    Ok(make_record(instance, &c.state, c.iterations, 0))
}

/// Newton solve with the listed roots deflated away, so the iteration is
/// repelled from them and can only converge to a new root.
pub fn newton_solve_deflated(
    instance: &ProblemInstance,
    start: &StateVector,
    opts: &NewtonOptions,
    roots: &[StateVector],
) -> Result<SolutionRecord, SolverError> {
    let c = newton_core(instance, start, opts, roots, None)?;
    Ok(make_record(instance, &c.state, c.iterations, roots.len()))
}

/// Exact-arithmetic certificate for a constant-profile energy probe.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeCertificate {
    /// Probe height (f64 projection; 0.0 when only the wide value exists).
    pub b: f64,
    pub log2_b: f64,
    /// Whether the certificate was computed in wide-range arithmetic.
    pub wide: bool,
    pub j_sign: i8,
    pub log2_abs_j: Option<f64>,
    pub j_f64: f64,
    /// The closed-form upper bound `(2/p⁻)·b^{p⁻} − λ·Σ_k F_k(b)` that the
    /// probe energy must not exceed.
    pub bound_sign: i8,
    pub log2_abs_bound: Option<f64>,
    pub bound_f64: f64,
    pub negative: bool,
    pub bound_holds: bool,
}

fn sign_log2(v: &WideFloat) -> (i8, Option<f64>, f64) {
    let s = v.sign();
    let l = if s == 0 { None } else { Some(v.abs().log2()) };
    (s, l, v.to_f64())
}

/// Evaluate `J_λ` on the constant interior profile of height `b ∈ (0, 1)`
/// and certify its sign, in wide-range arithmetic when the family carries
/// the exact antiderivative hook and in f64 otherwise.
pub fn probe_negativity(
    instance: &ProblemInstance,
    b: f64,
) -> Result<ProbeCertificate, SolverError> {
    if !b.is_finite() || b <= 0.0 {
        return Err(SolverError::BadProbe(b));
    }
    if b >= 1.0 {
        return Err(SolverError::ProbeTooLarge(b));
    }
    if instance.nonlinearity.has_wide() {
        let mut cert = probe_negativity_wide(instance, &WideFloat::from_f64(b))?;
        cert.b = b;
        return Ok(cert);
    }
    let state = StateVector::constant(instance.t, b);
    let parts = phi_psi(instance, &state);
    let p_minus = instance.p_minus();
    let psi_at_b: f64 = (1..=instance.t)
        .map(|k| instance.nonlinearity.big_f(k, b))
        .sum();
    let bound = (2.0 / p_minus) * b.powf(p_minus) - instance.lambda * psi_at_b;
    let j = parts.j_lambda;
    Ok(ProbeCertificate {
        b,
        log2_b: b.log2(),
        wide: false,
        j_sign: if j > 0.0 {
            1
        } else if j < 0.0 {
            -1
        } else {
            0
        },
        log2_abs_j: (j != 0.0).then(|| j.abs().log2()),
        j_f64: j,
        bound_sign: if bound > 0.0 {
            1
        } else if bound < 0.0 {
            -1
        } else {
            0
        },
        log2_abs_bound: (bound != 0.0).then(|| bound.abs().log2()),
        bound_f64: bound,
        negative: j < 0.0,
        bound_holds: j <= bound,
    })
}

/// Wide-range version of [`probe_negativity`] for heights far below f64
/// (`b` need not be representable). Requires the exact antiderivative hook.
pub fn probe_negativity_wide(
    instance: &ProblemInstance,
    b: &WideFloat,
) -> Result<ProbeCertificate, SolverError> {
    if !instance.nonlinearity.has_wide() {
        return Err(SolverError::UnsupportedWide);
    }
    if b.sign() <= 0 {
        return Err(SolverError::BadProbe(b.to_f64()));
    }
    if b.cmp_value(&WideFloat::one()) != Ordering::Less {
        return Err(SolverError::ProbeTooLarge(b.to_f64()));
    }
    let t = instance.t;
    // The constant profile has only two nonzero differences, b and -b.
    let p0 = instance.exponents.get(0);
    let pt = instance.exponents.get(t);
    let phi = b
        .powf(p0)
        .div_f64(p0)
        .add(&b.powf(pt).div_f64(pt));
    let mut psi = WideFloat::zero();
    for k in 1..=t {
        let term = instance
            .nonlinearity
            .big_f_wide(k, b)
            .ok_or(SolverError::UnsupportedWide)?;
        psi = psi.add(&term);
    }
    let j = phi.sub(&psi.mul_f64(instance.lambda));
    let p_minus = instance.p_minus();
    let bound = b
        .powf(p_minus)
        .mul_f64(2.0 / p_minus)
        .sub(&psi.mul_f64(instance.lambda));
    let (j_sign, log2_abs_j, j_f64) = sign_log2(&j);
    let (bound_sign, log2_abs_bound, bound_f64) = sign_log2(&bound);
    Ok(ProbeCertificate {
        b: b.to_f64(),
        log2_b: b.log2(),
        wide: true,
        j_sign,
        log2_abs_j,
        j_f64,
        bound_sign,
        log2_abs_bound,
        bound_f64,
        negative: j_sign < 0,
        bound_holds: j.cmp_value(&bound) != Ordering::Greater,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CascadeOptions {
    pub newton: NewtonOptions,
    /// Maximum number of probe halvings per level.
    pub scan_budget: u32,
    /// Relative tolerance below which two roots count as the same.
    pub rtol_distinct: f64,
}

impl Default for CascadeOptions {
    fn default() -> Self {
        CascadeOptions {
            newton: NewtonOptions::default(),
            scan_budget: 2048,
            rtol_distinct: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LevelStatus {
    Converged,
    Stalled { reason: String },
    InvalidC { reason: String },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CascadeLevel {
    pub index: usize,
    pub c: f64,
    pub log2_c: f64,
    /// Exact `log₂` of the sublevel radius for this height.
    pub log2_r: f64,
    pub probe: Option<ProbeCertificate>,
    pub scan_halvings: Option<u32>,
    pub status: LevelStatus,
    /// Index into the report's `solutions` for a converged level.
    pub solution: Option<usize>,
}

/// Cascade outcome. `converged` demands the full chain: every level found
/// a distinct root inside its own sublevel set, sup norms strictly
/// decreased, energies were strictly ordered in exact arithmetic, and every
/// root kept a certified negative energy.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CascadeReport {
    pub levels: Vec<CascadeLevel>,
    pub solutions: Vec<SolutionRecord>,
    pub sup_norms: Vec<f64>,
    /// Exact `log₂ Φ` per accepted solution when the state is nonzero.
    pub phi_log2: Vec<f64>,
    pub sup_strictly_decreasing: bool,
    pub phi_strictly_decreasing: bool,
    pub all_energies_negative: bool,
    pub converged: bool,
}

/// Run the shrinking-height cascade over a strictly decreasing sequence of
/// heights `cs`. Each level scans the constant profiles `b = c/2^i` for the
/// first one that sits inside the level's sublevel set with certified
/// negative energy, then polishes it by Newton iteration constrained to
/// that sublevel set.
pub fn cascade(
    instance: &ProblemInstance,
    cs: &[f64],
    opts: &CascadeOptions,
) -> Result<CascadeReport, SolverError> {
    if cs.is_empty() {
        return Err(SolverError::BadOptions("empty cascade height list".into()));
    }
    for (i, w) in cs.windows(2).enumerate() {
        if w[0] > 0.0 && w[1] > 0.0 && w[1] >= w[0] {
            return Err(SolverError::BadSequence { index: i + 1 });
        }
    }
    let mut levels = Vec::with_capacity(cs.len());
    let mut solutions: Vec<SolutionRecord> = Vec::new();
    let mut states: Vec<StateVector> = Vec::new();
    let mut phi_wides: Vec<WideFloat> = Vec::new();

    for (index, &c) in cs.iter().enumerate() {
        let mut level = CascadeLevel {
            index,
            c,
            log2_c: if c > 0.0 { c.log2() } else { f64::NAN },
            log2_r: f64::NAN,
            probe: None,
            scan_halvings: None,
            status: LevelStatus::Converged,
            solution: None,
        };
        if !c.is_finite() || c <= 0.0 {
            level.status = LevelStatus::InvalidC {
                reason: format!("height must be finite and positive, got {c}"),
            };
            levels.push(level);
            continue;
        }
        let r_wide = match theory::sublevel_bound(instance, c) {
            Ok(bound) => {
                level.log2_r = bound.log2_r;
                theory::sublevel_r_wide(instance, c)
            }
            Err(e) => {
                level.status = LevelStatus::InvalidC {
                    reason: e.to_string(),
                };
                levels.push(level);
                continue;
            }
        };

        // Probe scan: first halving whose constant profile is inside the
        // sublevel set with certified negative energy.
        let mut found: Option<(f64, u32)> = None;
        let mut b = c;
        for i in 0..=opts.scan_budget {
            if b <= 0.0 {
                break;
            }
            let state = StateVector::constant(instance.t, b);
            let inside = phi_wide(instance, &state).cmp_value(&r_wide) == Ordering::Less;
            if inside {
                let cert = probe_negativity(instance, b)?;
                let negative = cert.negative;
                level.probe = Some(cert);
                if negative {
                    found = Some((b, i));
                    break;
                }
            }
            b *= 0.5;
        }
        let Some((b_star, halvings)) = found else {
            level.status = LevelStatus::Stalled {
                reason: format!(
                    "no negative-energy probe inside the sublevel set within {} halvings",
                    opts.scan_budget
                ),
            };
            levels.push(level);
            continue;
        };
        level.scan_halvings = Some(halvings);

        let start = StateVector::constant(instance.t, b_star);
        match newton_core(instance, &start, &opts.newton, &[], Some(&r_wide)) {
            Ok(conv) => {
                if states
                    .iter()
                    .any(|s| same_root(&conv.state, s, opts.rtol_distinct))
                {
                    level.status = LevelStatus::Stalled {
                        reason: "converged to a root already found at an earlier level".into(),
                    };
                } else {
                    let record = make_record(instance, &conv.state, conv.iterations, 0);
                    phi_wides.push(phi_wide(instance, &conv.state));
                    states.push(conv.state);
                    level.solution = Some(solutions.len());
                    solutions.push(record);
                }
            }
            Err(e) => {
                level.status = LevelStatus::Stalled {
                    reason: e.to_string(),
                };
            }
        }
        levels.push(level);
    }

    let sup_norms: Vec<f64> = solutions.iter().map(|s| s.sup_norm).collect();
    let sup_strictly_decreasing = sup_norms.windows(2).all(|w| w[1] < w[0]);
    let phi_strictly_decreasing = phi_wides
        .windows(2)
        .all(|w| w[1].cmp_value(&w[0]) == Ordering::Less);
    let phi_log2 = phi_wides.iter().map(|p| p.log2()).collect();
    let all_energies_negative = solutions.iter().all(|s| match s.j_wide_sign {
        Some(sign) => sign < 0,
        None => s.j_lambda < 0.0,
    });
    let all_levels_ok = levels
        .iter()
        .all(|l| matches!(l.status, LevelStatus::Converged));
    let converged = all_levels_ok
        && solutions.len() == cs.len()
        && sup_strictly_decreasing
        && phi_strictly_decreasing
        && all_energies_negative;
    Ok(CascadeReport {
        levels,
        solutions,
        sup_norms,
        phi_log2,
        sup_strictly_decreasing,
        phi_strictly_decreasing,
        all_energies_negative,
        converged,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultistartOptions {
    pub starts: usize,
    /// Starts are drawn uniformly from `[-radius, radius]` per node.
    pub radius: f64,
    pub newton: NewtonOptions,
    pub rtol_distinct: f64,
}

impl Default for MultistartOptions {
    fn default() -> Self {
        MultistartOptions {
            starts: 64,
            radius: 1.0,
            newton: NewtonOptions::default(),
            rtol_distinct: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MultistartReport {
    pub starts: usize,
    pub converged: usize,
    pub failed: usize,
    pub distinct: usize,
    /// Distinct roots with sup norm above 1e-8. When the zero state is an
    /// exact root (every `f_k(0) = 0`), converged states below that floor
    /// are snapped to it: an absolute residual tolerance cannot tell them
    /// apart from zero, so counting them separately would inflate
    /// `distinct` with duplicates of the trivial solution.
    pub nonzero: usize,
    pub solutions: Vec<SolutionRecord>,
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Seeded multistart search: Newton from `starts` random initial states.
/// Roots are merged up to the distinctness tolerance and reported sorted by
/// `(J_λ, sup norm, values)`, so the output is a deterministic function of
/// the seed, independent of the parallel flag.
pub fn multistart(
    instance: &ProblemInstance,
    opts: &MultistartOptions,
    seed: u64,
    parallel: bool,
) -> Result<MultistartReport, SolverError> {
    if opts.starts == 0 {
        return Err(SolverError::BadOptions("starts must be positive".into()));
    }
    if !(opts.radius > 0.0) || !opts.radius.is_finite() {
        return Err(SolverError::BadOptions(format!(
            "radius must be finite and positive, got {}",
            opts.radius
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = Vec::with_capacity(opts.starts);
    for _ in 0..opts.starts {
        let interior: Vec<f64> = (0..instance.t)
            .map(|_| rng.gen_range(-opts.radius..=opts.radius))
            .collect();
        starts.push(StateVector::from_interior(&interior));
    }
    let newton = opts.newton.clone();
    let inst = instance.clone();
    let outcomes = run_batch(parallel, starts, move |s| {
        newton_core(&inst, &s, &newton, &[], None).map(|c| (c.state, c.iterations))
    });
    let mut converged = 0usize;
    let mut found: Vec<(StateVector, usize)> = Vec::new();
    for outcome in outcomes {
        if let Ok(pair) = outcome {
            converged += 1;
            found.push(pair);
        }
    }
    let zero_is_root = (1..=instance.t).all(|k| instance.nonlinearity.f(k, 0.0) == 0.0);
    let mut records: Vec<(StateVector, SolutionRecord)> = found
        .into_iter()
        .map(|(state, iters)| {
            let state = if zero_is_root && state.sup_norm() <= ZERO_SUP {
                StateVector::constant(instance.t, 0.0)
            } else {
                state
            };
            let rec = make_record(instance, &state, iters, 0);
            (state, rec)
        })
        .collect();
    records.sort_by(|a, b| {
        a.1.j_lambda
            .total_cmp(&b.1.j_lambda)
            .then_with(|| a.1.sup_norm.total_cmp(&b.1.sup_norm))
            .then_with(|| lex_cmp(&a.1.values, &b.1.values))
    });
    // Merge up to the relative tolerance, with an absolute floor of a few
    // Newton tolerances: two converged copies of one root can differ by
    // that much, which at small root scales exceeds any relative margin.
    let abs_floor = 10.0 * opts.newton.tol;
    let mut kept: Vec<(StateVector, SolutionRecord)> = Vec::new();
    for (state, rec) in records {
        if !kept.iter().any(|(s, _)| {
            same_root(&state, s, opts.rtol_distinct) || state.minus(s).sup_norm() <= abs_floor
        }) {
            kept.push((state, rec));
        }
    }
    let solutions: Vec<SolutionRecord> = kept.into_iter().map(|(_, r)| r).collect();
    let nonzero = solutions.iter().filter(|s| s.sup_norm > ZERO_SUP).count();
    Ok(MultistartReport {
        starts: opts.starts,
        converged,
        failed: opts.starts - converged,
        distinct: solutions.len(),
        nonzero,
        solutions,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub seed: u64,
    pub converged: usize,
    pub distinct: usize,
    pub nonzero: usize,
    pub negative_energy: usize,
    pub best_j: Option<f64>,
    pub best_sup: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

/// Multistart at every λ in the list. Each λ gets its own deterministic
/// sub-seed; the outer loop is the parallel one, so inner searches run
/// sequentially and results stay reproducible.
pub fn sweep(
    instance: &ProblemInstance,
    lambdas: &[f64],
    opts: &MultistartOptions,
    seed: u64,
    parallel: bool,
) -> Result<SweepReport, SolverError> {
    if lambdas.is_empty() {
        return Err(SolverError::BadOptions("empty lambda list".into()));
    }
    if let Some(bad) = lambdas.iter().find(|l| !l.is_finite()) {
        return Err(SolverError::BadOptions(format!(
            "lambda values must be finite, got {bad}"
        )));
    }
    let items: Vec<(usize, f64)> = lambdas.iter().copied().enumerate().collect();
    let base = instance.clone();
    let ms = opts.clone();
    let rows = run_batch(parallel, items, move |(i, lambda)| {
        let sub_seed = seed.wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let outcome = (|| -> Result<MultistartReport, SolverError> {
            let inst = base.with_lambda(lambda)?;
            multistart(&inst, &ms, sub_seed, false)
        })();
        match outcome {
            Ok(report) => {
                let negative_energy = report
                    .solutions
                    .iter()
                    .filter(|s| match s.j_wide_sign {
                        Some(sign) => sign < 0,
                        None => s.j_lambda < 0.0,
                    })
                    .count();
                let best = report.solutions.first();
                SweepRow {
                    lambda,
                    seed: sub_seed,
                    converged: report.converged,
                    distinct: report.distinct,
                    nonzero: report.nonzero,
                    negative_energy,
                    best_j: best.map(|s| s.j_lambda),
                    best_sup: best.map(|s| s.sup_norm),
                }
            }
            Err(_) => SweepRow {
                lambda,
                seed: sub_seed,
                converged: 0,
                distinct: 0,
                nonzero: 0,
                negative_energy: 0,
                best_j: None,
                best_sup: None,
            },
        }
    });
    Ok(SweepReport { rows })
}

//! Problem instances: mesh states, exponent maps, nonlinearity families.
//!
//! A state `u` lives on the integer mesh `0..=T+1` with hard Dirichlet
//! boundary `u(0) = u(T+1) = 0`; only the `T` interior values are degrees of
//! freedom. The variable exponent `p(k) > 1` is stored per index, and the
//! nonlinearity is a family of pairs `(f_k, F_k)` with `F_k(t) = ∫₀ᵗ f_k`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wide::WideFloat;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("mesh size T must be at least 1, got {0}")]
    BadT(usize),
    #[error("exponent map needs T+2 = {expected} entries, got {got}")]
    ExponentLength { expected: usize, got: usize },
    #[error("exponent p({index}) = {value} must be finite and > 1")]
    ExponentRange { index: usize, value: f64 },
    #[error("state vector needs T+2 = {expected} entries, got {got}")]
    StateLength { expected: usize, got: usize },
    #[error("state boundary entries must be zero, got u(0) = {left}, u(T+1) = {right}")]
    BoundaryNotZero { left: f64, right: f64 },
    #[error("state entries must be finite")]
    NonFiniteState,
    #[error("lambda must be finite and positive, got {0}")]
    BadLambda(f64),
    #[error("power-law exponent q must be finite and > 1, got {0}")]
    BadPowerExponent(f64),
}

/// A mesh function on `0..=T+1` with both boundary values pinned to zero.
///
/// The boundary entries are stored explicitly so that forward differences
/// `Δu(k) = u(k+1) - u(k)` can be taken uniformly for `k = 0..=T` without
/// special-casing the ends.
#[derive(Clone, PartialEq)]
pub struct StateVector {
    values: Vec<f64>,
}

impl StateVector {
    /// The zero state on a mesh with `t` interior points.
    pub fn zeros(t: usize) -> Self {
        StateVector {
            values: vec![0.0; t + 2],
        }
    }

    /// Build from the `T` interior values; boundaries are added as zeros.
    pub fn from_interior(interior: &[f64]) -> Self {
        let mut values = Vec::with_capacity(interior.len() + 2);
        values.push(0.0);
        values.extend_from_slice(interior);
        values.push(0.0);
        StateVector { values }
    }

    /// Build from all `T+2` values, checking the boundary and finiteness.
    pub fn from_full(values: Vec<f64>) -> Result<Self, ProblemError> {
        if values.len() < 3 {
            return Err(ProblemError::StateLength {
                expected: 3,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ProblemError::NonFiniteState);
        }
        let (left, right) = (values[0], *values.last().unwrap());
        if left != 0.0 || right != 0.0 {
            return Err(ProblemError::BoundaryNotZero { left, right });
        }
        Ok(StateVector { values })
    }

    /// Constant value `b` at every interior node.
    pub fn constant(t: usize, b: f64) -> Self {
        let mut values = vec![b; t + 2];
        values[0] = 0.0;
        values[t + 1] = 0.0;
        StateVector { values }
    }

    /// Number of interior points `T`.
    pub fn t(&self) -> usize {
        self.values.len() - 2
    }

    /// All `T+2` values including the zero boundary.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The `T` interior values.
    pub fn interior(&self) -> &[f64] {
        &self.values[1..self.values.len() - 1]
    }

    /// `u(k)` for `k = 0..=T+1`.
    pub fn get(&self, k: usize) -> f64 {
        self.values[k]
    }

    /// `self + alpha * step` on the interior (`step` has length `T`).
    pub fn add_scaled(&self, alpha: f64, step: &[f64]) -> Self {
        assert_eq!(step.len(), self.t(), "step length must match interior");
        let mut values = self.values.clone();
        for (v, s) in values[1..].iter_mut().zip(step) {
            *v += alpha * s;
        }
        StateVector { values }
    }

    /// Interior-wise difference `self - other`.
    pub fn minus(&self, other: &Self) -> Self {
        assert_eq!(self.t(), other.t());
        let mut values = self.values.clone();
        for (v, o) in values.iter_mut().zip(&other.values) {
            *v -= o;
        }
        StateVector { values }
    }

    /// Sup norm over the interior, `max_k |u(k)|`.
    pub fn sup_norm(&self) -> f64 {
        self.interior().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// The difference-energy norm `(Σ_{k=1}^{T+1} |Δu(k-1)|²)^{1/2}`.
    pub fn h_norm(&self) -> f64 {
        forward_difference(self)
            .iter()
            .map(|d| d * d)
            .sum::<f64>()
            .sqrt()
    }
}

impl fmt::Debug for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StateVector({:?})", self.values)
    }
}

/// Forward differences `d[i] = u(i+1) - u(i)` for `i = 0..=T` (length `T+1`).
pub fn forward_difference(u: &StateVector) -> Vec<f64> {
    u.values().windows(2).map(|w| w[1] - w[0]).collect()
}

/// Both norms of a state in one pass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub h_norm: f64,
    pub sup_norm: f64,
}

pub fn norms(u: &StateVector) -> Norms {
    Norms {
        h_norm: u.h_norm(),
        sup_norm: u.sup_norm(),
    }
}

/// Per-index variable exponent `p : {0, …, T+1} → (1, ∞)`.
///
/// All `T+2` indices are stored. The extremes `p⁻`/`p⁺` are taken over the
/// indices `0..=T` that actually enter the energy and the difference
/// equation (`Φ` uses `p(0..=T)`; index `T+1` is carried for config
/// symmetry only).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentMap {
    values: Vec<f64>,
    p_minus: f64,
    p_plus: f64,
    constant: Option<f64>,
}

impl ExponentMap {
    pub fn from_constant(p: f64, t: usize) -> Result<Self, ProblemError> {
        Self::from_values(vec![p; t + 2], t)
    }

    pub fn from_values(values: Vec<f64>, t: usize) -> Result<Self, ProblemError> {
        if values.len() != t + 2 {
            return Err(ProblemError::ExponentLength {
                expected: t + 2,
                got: values.len(),
            });
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() || value <= 1.0 {
                return Err(ProblemError::ExponentRange { index, value });
            }
        }
        let used = &values[..=t];
        let p_minus = used.iter().cloned().fold(f64::INFINITY, f64::min);
        let p_plus = used.iter().cloned().fold(0.0, f64::max);
        // Constancy is detected by exact equality: a map is "constant p"
        // only when every stored entry is bit-identical.
        let first = values[0];
        let constant = values.iter().all(|&v| v == first).then_some(first);
        Ok(ExponentMap {
            values,
            p_minus,
            p_plus,
            constant,
        })
    }

    /// `p(k)` for `k = 0..=T+1`.
    pub fn get(&self, k: usize) -> f64 {
        self.values[k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn p_minus(&self) -> f64 {
        self.p_minus
    }

    pub fn p_plus(&self) -> f64 {
        self.p_plus
    }

    /// `Some(p)` when the map is exactly constant.
    pub fn constant(&self) -> Option<f64> {
        self.constant
    }
}

/// One nonlinearity `f_k` together with its antiderivative `F_k`.
///
/// Implementations must satisfy `F_k(0) = 0` and `F_k' = f_k`. The optional
/// hooks feed the exact wide-range evaluation paths and the envelope
/// shortcut; default implementations are conservative.
pub trait Potential: Send + Sync {
    /// `f_k(t)`; `k` is the 1-based node index in `1..=T`.
    fn f(&self, k: usize, t: f64) -> f64;

    /// `F_k(t) = ∫₀ᵗ f_k(s) ds`.
    fn big_f(&self, k: usize, t: f64) -> f64;

    /// Closed-form `f_k'(t)` where available.
    fn df(&self, _k: usize, _t: f64) -> Option<f64> {
        None
    }

    /// True when every `f_k` is nonnegative on all of ℝ, which makes each
    /// `F_k` nondecreasing and collapses `max_{|ξ|≤t} F_k(ξ)` to `F_k(t)`.
    fn nonneg(&self) -> bool {
        false
    }

    /// Exact wide-range antiderivative, for families whose scales leave f64.
    fn big_f_wide(&self, _k: usize, _t: &WideFloat) -> Option<WideFloat> {
        None
    }
}

/// Serializable description of a nonlinearity family, used both as the
/// config-file schema and as the self-describing instance block in reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FamilyDescriptor {
    /// `f_k(t) = c` constant forcing.
    Linear { c: f64 },
    /// `f_k(t) = |t|^{q-2} t`.
    Power { q: f64 },
    /// `f_k(t) = Σ_i coeffs[i] t^i`.
    Poly { coeffs: Vec<f64> },
    /// Oscillating factorial-scale family, indexed by its growth exponent.
    ExampleEsempio { gamma: f64 },
    /// A caller-supplied nonnegative forcing term (polynomial coefficients).
    TheoremIntro { coeffs: Vec<f64> },
    /// Closure-backed family injected through the library API.
    Custom { name: String },
}

/// A family `(f_k, F_k)_{k=1..T}` behind a shared handle.
#[derive(Clone)]
pub struct NonlinearityFamily {
    inner: Arc<dyn Potential>,
    descriptor: FamilyDescriptor,
}

/// Step used by the central-difference fallback for `f_k'`.
fn fd_step(t: f64) -> f64 {
    1e-7 * t.abs().max(1.0)
}

impl NonlinearityFamily {
    pub fn new(inner: Arc<dyn Potential>, descriptor: FamilyDescriptor) -> Self {
        NonlinearityFamily { inner, descriptor }
    }

    /// Wrap plain closures (same `f`/`F` at every node).
    pub fn from_closures<F, G>(name: &str, f: F, big_f: G) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        struct Closures<F, G> {
            f: F,
            big_f: G,
        }
        impl<F, G> Potential for Closures<F, G>
        where
            F: Fn(f64) -> f64 + Send + Sync,
            G: Fn(f64) -> f64 + Send + Sync,
        {
            fn f(&self, _k: usize, t: f64) -> f64 {
                (self.f)(t)
            }
            fn big_f(&self, _k: usize, t: f64) -> f64 {
                (self.big_f)(t)
            }
        }
        NonlinearityFamily {
            inner: Arc::new(Closures { f, big_f }),
            descriptor: FamilyDescriptor::Custom {
                name: name.to_string(),
            },
        }
    }

    /// Wrap a bare `f` with an adaptive-quadrature antiderivative
    /// (relative tolerance `tol`, default 1e-12 when given 0).
    pub fn from_f_quadrature<F>(name: &str, f: F, tol: f64) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        struct Quad<F> {
            f: F,
            tol: f64,
        }
        impl<F> Potential for Quad<F>
        where
            F: Fn(f64) -> f64 + Send + Sync,
        {
            fn f(&self, _k: usize, t: f64) -> f64 {
                (self.f)(t)
            }
            fn big_f(&self, _k: usize, t: f64) -> f64 {
                adaptive_simpson(&self.f, 0.0, t, self.tol)
            }
        }
        let tol = if tol > 0.0 { tol } else { 1e-12 };
        NonlinearityFamily {
            inner: Arc::new(Quad { f, tol }),
            descriptor: FamilyDescriptor::Custom {
                name: name.to_string(),
            },
        }
    }

    pub fn descriptor(&self) -> &FamilyDescriptor {
        &self.descriptor
    }

    pub fn f(&self, k: usize, t: f64) -> f64 {
        self.inner.f(k, t)
    }

    pub fn big_f(&self, k: usize, t: f64) -> f64 {
        self.inner.big_f(k, t)
    }

    /// `f_k'(t)`: closed form when the family has one, otherwise a central
    /// difference with step `1e-7 · max(1, |t|)`.
    pub fn df(&self, k: usize, t: f64) -> f64 {
        if let Some(d) = self.inner.df(k, t) {
            return d;
        }
        let h = fd_step(t);
        (self.inner.f(k, t + h) - self.inner.f(k, t - h)) / (2.0 * h)
    }

    pub fn nonneg(&self) -> bool {
        self.inner.nonneg()
    }

    pub fn big_f_wide(&self, k: usize, t: &WideFloat) -> Option<WideFloat> {
        self.inner.big_f_wide(k, t)
    }

    /// Whether the family carries the exact wide-range hook.
    pub fn has_wide(&self) -> bool {
        self.inner.big_f_wide(1, &WideFloat::one()).is_some()
    }
}

impl fmt::Debug for NonlinearityFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NonlinearityFamily({:?})", self.descriptor)
    }
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` (signed), splitting
/// until the local Richardson error estimate meets `tol` relative to the
/// running magnitude.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, m: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
    }
    #[allow(clippy::too_many_arguments)]
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        whole: f64,
        tol: f64,
        scale: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let left = simpson(f, a, 0.5 * (a + m), m);
        let right = simpson(f, m, 0.5 * (m + b), b);
        let err = left + right - whole;
        if depth == 0 || err.abs() <= 15.0 * tol * scale.max(1e-300) {
            return left + right + err / 15.0;
        }
        rec(f, a, m, left, 0.5 * tol, scale, depth - 1)
            + rec(f, m, b, right, 0.5 * tol, scale, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let whole = simpson(f, a, m, b);
    let scale = whole.abs().max((b - a).abs());
    rec(f, a, b, whole, tol, scale, 48)
}

/// A full instance of the Dirichlet problem: mesh size, exponents,
/// nonlinearity, and the parameter `λ > 0`.
#[derive(Clone, Debug)]
pub struct ProblemInstance {
    pub t: usize,
    pub lambda: f64,
    pub exponents: ExponentMap,
    pub nonlinearity: NonlinearityFamily,
}

impl ProblemInstance {
    pub fn new(
        t: usize,
        lambda: f64,
        exponents: ExponentMap,
        nonlinearity: NonlinearityFamily,
    ) -> Result<Self, ProblemError> {
        if t < 1 {
            return Err(ProblemError::BadT(t));
        }
        if exponents.values().len() != t + 2 {
            return Err(ProblemError::ExponentLength {
                expected: t + 2,
                got: exponents.values().len(),
            });
        }
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(ProblemError::BadLambda(lambda));
        }
        Ok(ProblemInstance {
            t,
            lambda,
            exponents,
            nonlinearity,
        })
    }

    /// Same instance at a different parameter value.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self, ProblemError> {
        Self::new(
            self.t,
            lambda,
            self.exponents.clone(),
            self.nonlinearity.clone(),
        )
    }

    pub fn p_minus(&self) -> f64 {
        self.exponents.p_minus()
    }

    pub fn p_plus(&self) -> f64 {
        self.exponents.p_plus()
    }
}

/// One finding from [`validate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub code: String,
    pub message: String,
}

/// Diagnostic validation result; never fails, lists everything it found.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub violations: Vec<Finding>,
    pub warnings: Vec<Finding>,
}

impl ValidationReport {
    fn violation(&mut self, code: &str, message: String) {
        self.violations.push(Finding {
            code: code.to_string(),
            message,
        });
    }
    fn warning(&mut self, code: &str, message: String) {
        self.warnings.push(Finding {
            code: code.to_string(),
            message,
        });
    }
}

/// Check an instance against the model's standing assumptions.
///
/// Violations are hard errors (the operators' contracts assume they hold);
/// warnings flag usable-but-unusual setups, e.g. `T = 1`, which the theory
/// behind the solution-multiplicity machinery does not cover.
pub fn validate(instance: &ProblemInstance) -> ValidationReport {
    let mut report = ValidationReport {
        valid: true,
        ..Default::default()
    };
    if instance.t < 1 {
        report.violation("bad_t", format!("T = {} must be >= 1", instance.t));
    } else if instance.t == 1 {
        report.warning(
            "t_outside_scope",
            "T = 1 runs, but the multiplicity theory assumes T >= 2".to_string(),
        );
    }
    let exps = instance.exponents.values();
    if exps.len() != instance.t + 2 {
        report.violation(
            "exponent_length",
            format!("exponent map has {} entries, needs {}", exps.len(), instance.t + 2),
        );
    }
    for (k, &p) in exps.iter().enumerate() {
        if !p.is_finite() || p <= 1.0 {
            report.violation("exponent_range", format!("p({k}) = {p} is not > 1"));
        }
    }
    if !instance.lambda.is_finite() || instance.lambda <= 0.0 {
        report.violation(
            "bad_lambda",
            format!("lambda = {} must be positive", instance.lambda),
        );
    }
    // Spot checks on the nonlinearity: F_k(0) = 0 and finite values near 0.
    for k in 1..=instance.t.max(1) {
        let f0 = instance.nonlinearity.big_f(k, 0.0);
        if f0.abs() > 1e-12 {
            report.violation("antiderivative_origin", format!("F_{k}(0) = {f0}, must be 0"));
        }
        for t in [-0.5, 0.25, 1.0] {
            let v = instance.nonlinearity.f(k, t);
            let big = instance.nonlinearity.big_f(k, t);
            if !v.is_finite() || !big.is_finite() {
                report.violation(
                    "nonfinite_nonlinearity",
                    format!("f_{k} or F_{k} is not finite at t = {t}"),
                );
                break;
            }
        }
    }
    // A declared-nonnegative family is sampled for sign violations.
    if instance.nonlinearity.nonneg() {
        for i in 0..64 {
            let t = -4.0 + 8.05 * (i as f64) / 64.0;
            let v = instance.nonlinearity.f(1, t);
            if v < 0.0 {
                report.violation(
                    "nonneg_violated",
                    format!("family declared nonnegative but f_1({t}) = {v}"),
                );
                break;
            }
        }
    }
    report.valid = report.violations.is_empty();
    report
}

/// Relative same-root test used for deduplication and cascade distinctness:
/// `‖u - v‖_∞ ≤ rtol · max(‖u‖_∞, ‖v‖_∞)`.
///
/// The scale is the larger sup norm of the two candidates, not `max(1, ·)`:
/// solution cascades produce genuinely distinct roots at sup norms far below
/// any absolute floor, and an absolute tolerance would conflate them.
pub fn same_root(u: &StateVector, v: &StateVector, rtol: f64) -> bool {
    let scale = u.sup_norm().max(v.sup_norm());
    if scale == 0.0 {
        return true; // both exactly zero
    }
    u.minus(v).sup_norm() <= rtol * scale
}

//! Built-in nonlinearity families, including the oscillating
//! factorial-scale family whose small-scale quotients exhibit extreme
//! separation between the envelope and value readings.
//!
//! The centerpiece is a piecewise-constant density `g ≥ 0` built on the
//! geometric stages
//!
//! ```text
//! s_m = 2^{-m!/2},   t_m = 2^{-2·m!},   δ_m = 2^{-(m!)²},
//! ```
//!
//! with plateau value `ε_m = 2^{-(γ-1)·m!}` on `[s_{m+1}, s_m - δ_m]`, a
//! linear ramp of width `δ_{m+1}` joining consecutive plateaus just below
//! each `s_{m+1}`, the constant `ε_ν` above the first stage, and `0` for
//! arguments `≤ 0`. Its antiderivative `G` is integrated exactly, piece by
//! piece, in wide-range arithmetic: the quotients that matter live at scales
//! like `2^{-720}` and below, far outside f64.

use std::cmp::Ordering;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problem::{
    ExponentMap, FamilyDescriptor, NonlinearityFamily, Potential, ProblemError, ProblemInstance,
};
use crate::wide::WideFloat;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GalleryError {
    #[error("factorial {m}! exceeds the exact integer range")]
    FactorialOverflow { m: u32 },
    #[error("construction exhausted its exact range: {0}")]
    PrecisionExhausted(String),
    #[error("growth exponent gamma must be finite and > 2, got {0}")]
    BadGamma(f64),
    #[error("power-law exponent q must be finite and > 1, got {0}")]
    BadPowerExponent(f64),
    #[error("family declared nonnegative but f({at}) = {value}")]
    NotNonnegative { at: f64, value: f64 },
    #[error("stage window [{m_lo}, {m_hi}] is outside the built range")]
    BadWindow { m_lo: u32, m_hi: u32 },
    #[error("this descriptor cannot be constructed from configuration")]
    UnsupportedDescriptor,
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// `m!` as an exact 128-bit integer.
pub fn factorial(m: u32) -> Result<i128, GalleryError> {
    let mut acc: i128 = 1;
    for i in 2..=m as i128 {
        acc = acc
            .checked_mul(i)
            .ok_or(GalleryError::FactorialOverflow { m })?;
    }
    Ok(acc)
}

/// The three stage scales at index `m`, kept as exact log₂ exponents.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FactorialSequences {
    pub m: u32,
    pub log2_s: i128,
    pub log2_t: i128,
    pub log2_delta: i128,
}

impl FactorialSequences {
    pub fn new(m: u32) -> Result<Self, GalleryError> {
        if m < 2 {
            return Err(GalleryError::PrecisionExhausted(format!(
                "stage index m = {m} must be at least 2 (m!/2 must be an integer)"
            )));
        }
        let f = factorial(m)?;
        let sq = f
            .checked_mul(f)
            .ok_or(GalleryError::FactorialOverflow { m })?;
        Ok(FactorialSequences {
            m,
            log2_s: -(f / 2),
            log2_t: -2 * f,
            log2_delta: -sq,
        })
    }

    pub fn s(&self) -> WideFloat {
        WideFloat::pow2(self.log2_s)
    }

    pub fn t_seq(&self) -> WideFloat {
        WideFloat::pow2(self.log2_t)
    }

    pub fn delta(&self) -> WideFloat {
        WideFloat::pow2(self.log2_delta)
    }
}

/// The least stage index `ν` from which the construction is consistent:
/// for every `m ≥ ν` the next stage must start strictly below `t_m`
/// (`s_{m+1} < t_m`, i.e. `(m+1)!/2 > 2·m!`, which holds exactly for
/// `m+1 > 4` and is monotone in `m`) and each plateau `[s_{m+1}, s_m - δ_m]`
/// must be nonempty and contain `t_m`. The integer criterion plus an exact
/// spot check over a window of stages pins the answer.
pub fn minimal_nu() -> u32 {
    for nu in 2..=10u32 {
        let mut ok = true;
        for m in nu..nu + 4 {
            let fm = factorial(m).expect("small factorial");
            let fm1 = factorial(m + 1).expect("small factorial");
            if fm1 / 2 <= 2 * fm {
                ok = false;
                break;
            }
            let seq = FactorialSequences::new(m).expect("small stage");
            let seq1 = FactorialSequences::new(m + 1).expect("small stage");
            let top = seq.s().sub(&seq.delta());
            if seq1.s().cmp_value(&top) != Ordering::Less {
                ok = false;
                break;
            }
            if seq.t_seq().cmp_value(&top) == Ordering::Greater
                || seq.t_seq().cmp_value(&seq1.s()) == Ordering::Less
            {
                ok = false;
                break;
            }
        }
        if ok {
            return nu;
        }
    }
    unreachable!("the stage inequalities hold from a small index on")
}

/// One plateau stage with its exact integral data.
#[derive(Clone, Debug)]
struct Stage {
    /// Stage index `m`.
    m: u32,
    s: WideFloat,
    delta: WideFloat,
    eps: WideFloat,
    s_next: WideFloat,
    delta_next: WideFloat,
    eps_next: WideFloat,
    /// Positive exponent of `1/δ_{m+1}` for exact ramp division.
    ramp_scale_log2: i128,
    /// `G(s_{m+1} - δ_{m+1})` — everything below the ramp.
    g_at_ramp_bottom: WideFloat,
    /// `G(s_{m+1})`.
    g_at_s_next: WideFloat,
    /// `G(s_m - δ_m)` — the top of this plateau.
    g_at_top: WideFloat,
}

/// The factorial-scale density `g` and its exact antiderivative `G`.
///
/// Stages are materialized for `m ∈ [ν, deepest]`; the integral tail below
/// `s_{deepest+1} - δ_{deepest+1}` is truncated to zero, which is below the
/// retained precision of every value the struct can return (the omitted mass
/// is at most `ε_{deepest+1}·s_{deepest+1}`, smaller by a factor around
/// `2^{-(γ-1)·deepest·deepest!}` than the smallest evaluation the window
/// admits). Evaluations below the built window report
/// [`GalleryError::PrecisionExhausted`].
#[derive(Clone, Debug)]
pub struct ExampleG {
    gamma: f64,
    nu: u32,
    deepest: u32,
    stages: Vec<Stage>,
}

impl ExampleG {
    /// Build with stages deep enough to evaluate quotient tables up to
    /// `table_max_m` (at least stage `ν+5` regardless).
    pub fn new(gamma: f64, table_max_m: u32) -> Result<Self, GalleryError> {
        if !gamma.is_finite() || gamma <= 2.0 {
            return Err(GalleryError::BadGamma(gamma));
        }
        let nu = minimal_nu();
        let deepest = (table_max_m + 2).max(nu + 5);
        if deepest > 18 {
            return Err(GalleryError::BadWindow {
                m_lo: nu,
                m_hi: table_max_m,
            });
        }
        // ε_m = 2^{-(γ-1)·m!}, exact for integer γ, correctly rounded wide
        // power otherwise.
        let eps = |m: u32| -> Result<WideFloat, GalleryError> {
            let f = factorial(m)?;
            Ok(WideFloat::pow2(-f).powf(gamma - 1.0))
        };
        let mut stages: Vec<Stage> = Vec::with_capacity((deepest - nu + 1) as usize);
        // Build bottom-up so each stage can reuse the exact integral below it.
        let mut below = WideFloat::zero(); // G at the ramp bottom of the deepest stage
        for m in (nu..=deepest).rev() {
            let seq = FactorialSequences::new(m)?;
            let seq_next = FactorialSequences::new(m + 1)?;
            let e = eps(m)?;
            let e_next = eps(m + 1)?;
            let s = seq.s();
            let delta = seq.delta();
            let s_next = seq_next.s();
            let delta_next = seq_next.delta();
            // Ramp below s_{m+1}: exact trapezoid δ·(ε_m + ε_{m+1})/2.
            let ramp = e
                .add(&e_next)
                .mul(&delta_next)
                .div_f64(2.0);
            let g_at_s_next = below.add(&ramp);
            // Plateau [s_{m+1}, s_m - δ_m] contributes (width)·ε_m.
            let width = s.sub(&delta).sub(&s_next);
            let g_at_top = g_at_s_next.add(&width.mul(&e));
            stages.push(Stage {
                m,
                s,
                delta,
                eps: e,
                s_next,
                delta_next,
                eps_next: e_next,
                ramp_scale_log2: -seq_next.log2_delta,
                g_at_ramp_bottom: below.clone(),
                g_at_s_next,
                g_at_top: g_at_top.clone(),
            });
            below = g_at_top;
        }
        stages.reverse(); // index 0 = stage ν
        Ok(ExampleG {
            gamma,
            nu,
            deepest,
            stages,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn nu(&self) -> u32 {
        self.nu
    }

    pub fn deepest(&self) -> u32 {
        self.deepest
    }

    fn stage(&self, m: u32) -> &Stage {
        let st = &self.stages[(m - self.nu) as usize];
        debug_assert_eq!(st.m, m, "stages must be stored consecutively from nu");
        st
    }

    /// Where a positive argument falls in the stage geometry.
    fn locate(&self, w: &WideFloat) -> Result<Region<'_>, GalleryError> {
        let top_stage = &self.stages[0];
        let top_edge = top_stage.s.sub(&top_stage.delta);
        if w.cmp_value(&top_edge) == Ordering::Greater {
            return Ok(Region::Above(top_stage));
        }
        for st in &self.stages {
            if w.cmp_value(&st.s_next) != Ordering::Less {
                return Ok(Region::Plateau(st));
            }
            let ramp_bottom = st.s_next.sub(&st.delta_next);
            if w.cmp_value(&ramp_bottom) == Ordering::Greater {
                return Ok(Region::Ramp(st));
            }
        }
        Err(GalleryError::PrecisionExhausted(format!(
            "argument below the built stage window (deepest stage {})",
            self.deepest
        )))
    }

    /// Exact `g(w)`.
    pub fn eval_g_wide(&self, w: &WideFloat) -> Result<WideFloat, GalleryError> {
        if w.sign() <= 0 {
            return Ok(WideFloat::zero());
        }
        Ok(match self.locate(w)? {
            Region::Above(st) | Region::Plateau(st) => st.eps.clone(),
            Region::Ramp(st) => {
                let x = w.sub(&st.s_next.sub(&st.delta_next));
                // frac = x/δ_{m+1}: exact, δ is a pure power of two.
                let frac = x.mul(&WideFloat::pow2(st.ramp_scale_log2));
                st.eps_next
                    .add(&st.eps.sub(&st.eps_next).mul(&frac))
            }
        })
    }

    /// Exact `G(w) = ∫₀ʷ g`.
    pub fn eval_big_g_wide(&self, w: &WideFloat) -> Result<WideFloat, GalleryError> {
        if w.sign() <= 0 {
            return Ok(WideFloat::zero());
        }
        Ok(match self.locate(w)? {
            Region::Above(st) => {
                let edge = st.s.sub(&st.delta);
                st.g_at_top.add(&w.sub(&edge).mul(&st.eps))
            }
            Region::Plateau(st) => st.g_at_s_next.add(&w.sub(&st.s_next).mul(&st.eps)),
            Region::Ramp(st) => {
                let bottom = st.s_next.sub(&st.delta_next);
                let x = w.sub(&bottom);
                let g_here = {
                    let frac = x.mul(&WideFloat::pow2(st.ramp_scale_log2));
                    st.eps_next
                        .add(&st.eps.sub(&st.eps_next).mul(&frac))
                };
                // Trapezoid from the ramp bottom to w.
                st.g_at_ramp_bottom
                    .add(&x.mul(&st.eps_next.add(&g_here)).div_f64(2.0))
            }
        })
    }

    /// Exact slope of `g` at `w` (zero except on the ramps).
    fn eval_slope_wide(&self, w: &WideFloat) -> Result<WideFloat, GalleryError> {
        if w.sign() <= 0 {
            return Ok(WideFloat::zero());
        }
        Ok(match self.locate(w)? {
            Region::Above(_) | Region::Plateau(_) => WideFloat::zero(),
            Region::Ramp(st) => st
                .eps
                .sub(&st.eps_next)
                .mul(&WideFloat::pow2(st.ramp_scale_log2)),
        })
    }
}

enum Region<'a> {
    Above(&'a Stage),
    Plateau(&'a Stage),
    Ramp(&'a Stage),
}

/// One row of a quotient table, with the exact `log₂` of the probe and of
/// the quotient (and, for quotients just below 1, the exact `log₂(1-q)`,
/// which is where the interesting digits live).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuotientRow {
    pub m: u32,
    pub log2_probe: f64,
    pub log2_quotient: f64,
    pub log2_one_minus_q: Option<f64>,
}

/// Quotient tables along the stage probes, with exact monotonicity
/// certificates: `upper` holds `G(s_m)/s_m^γ` (must fall strictly), `lower`
/// holds `G(t_m)/t_m^{γ-1}` (must rise strictly). The display-bound flags
/// certify the two closed-form estimates the quotient analysis rests on,
/// `G(s_m) ≤ ε_m s_m + g(s_m) δ_m` and `G(t_m) ≥ ε_m (t_m - s_{m+1})`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuotientTables {
    pub gamma: f64,
    pub nu: u32,
    pub m_lo: u32,
    pub m_hi: u32,
    pub upper: Vec<QuotientRow>,
    pub lower: Vec<QuotientRow>,
    pub upper_strictly_decreasing: bool,
    pub lower_strictly_increasing: bool,
    pub upper_display_bound_ok: bool,
    pub lower_display_bound_ok: bool,
}

impl ExampleG {
    pub fn quotient_tables(&self, m_lo: u32, m_hi: u32) -> Result<QuotientTables, GalleryError> {
        if m_lo < self.nu || m_hi < m_lo || m_hi + 2 > self.deepest {
            return Err(GalleryError::BadWindow { m_lo, m_hi });
        }
        let gamma = self.gamma;
        let log2_of = |f: i128| f as f64;

        // (value at probe, probe^exponent, log2 data) per row, exact.
        let mut upper = Vec::new();
        let mut upper_exact: Vec<(WideFloat, WideFloat)> = Vec::new(); // (G(s_m), s_m^γ)
        let mut lower = Vec::new();
        let mut lower_exact: Vec<(WideFloat, WideFloat)> = Vec::new(); // (G(t_m), t_m^{γ-1})
        let mut upper_display_bound_ok = true;
        let mut lower_display_bound_ok = true;

        for m in m_lo..=m_hi {
            let seq = FactorialSequences::new(m)?;
            let st = self.stage(m);
            // Upper row at s_m.
            let s = seq.s();
            let g_at_s = self.eval_big_g_wide(&s)?;
            let s_pow = s.powf(gamma);
            let log2_q = g_at_s.log2() - gamma * log2_of(seq.log2_s);
            upper.push(QuotientRow {
                m,
                log2_probe: log2_of(seq.log2_s),
                log2_quotient: log2_q,
                log2_one_minus_q: one_minus_log2(&g_at_s, &s_pow, log2_of(seq.log2_s) * gamma),
            });
            // Display bound: G(s_m) ≤ ε_m s_m + g(s_m) δ_m.
            let rhs = st.eps.mul(&s).add(&self.eval_g_wide(&s)?.mul(&st.delta));
            if g_at_s.cmp_value(&rhs) == Ordering::Greater {
                upper_display_bound_ok = false;
            }
            upper_exact.push((g_at_s, s_pow));

            // Lower row at t_m.
            let tm = seq.t_seq();
            let g_at_t = self.eval_big_g_wide(&tm)?;
            let t_pow = tm.powf(gamma - 1.0);
            let log2_q = g_at_t.log2() - (gamma - 1.0) * log2_of(seq.log2_t);
            lower.push(QuotientRow {
                m,
                log2_probe: log2_of(seq.log2_t),
                log2_quotient: log2_q,
                log2_one_minus_q: one_minus_log2(
                    &g_at_t,
                    &t_pow,
                    log2_of(seq.log2_t) * (gamma - 1.0),
                ),
            });
            // Display bound: G(t_m) ≥ ε_m (t_m - s_{m+1}).
            let rhs = st.eps.mul(&tm.sub(&st.s_next));
            if g_at_t.cmp_value(&rhs) == Ordering::Less {
                lower_display_bound_ok = false;
            }
            lower_exact.push((g_at_t, t_pow));
        }

        // Exact strict monotonicity via cross-multiplication: for positive
        // quantities, G_m/D_m > G_{m+1}/D_{m+1} ⟺ G_m·D_{m+1} > G_{m+1}·D_m.
        let upper_strictly_decreasing = upper_exact.windows(2).all(|w| {
            let (ref g0, ref d0) = w[0];
            let (ref g1, ref d1) = w[1];
            g0.mul(d1).cmp_value(&g1.mul(d0)) == Ordering::Greater
        });
        let lower_strictly_increasing = lower_exact.windows(2).all(|w| {
            let (ref g0, ref d0) = w[0];
            let (ref g1, ref d1) = w[1];
            g0.mul(d1).cmp_value(&g1.mul(d0)) == Ordering::Less
        });

        Ok(QuotientTables {
            gamma,
            nu: self.nu,
            m_lo,
            m_hi,
            upper,
            lower,
            upper_strictly_decreasing,
            lower_strictly_increasing,
            upper_display_bound_ok,
            lower_display_bound_ok,
        })
    }

    /// Probe list for the small-scale envelope quotient: the stage points
    /// `s_m`, kept while both the probe and its quotient stay inside f64.
    /// (Assumes the canonical alternating exponent profile, `p⁺ = γ`.)
    pub fn recommended_a0_probes(&self) -> Vec<f64> {
        let mut probes = Vec::new();
        for m in self.nu..=self.deepest.saturating_sub(2) {
            let Ok(seq) = FactorialSequences::new(m) else {
                break;
            };
            let s = seq.s().to_f64();
            if s == 0.0 {
                break;
            }
            let num = self
                .eval_big_g_wide(&seq.s())
                .map(|g| g.to_f64())
                .unwrap_or(0.0);
            let den = s.powf(self.gamma);
            if num == 0.0 || den == 0.0 {
                break;
            }
            probes.push(s);
        }
        probes
    }

    /// Probe list for the small-scale value quotient: the points `2·s_{m+1}`
    /// just above each stage edge, where the plateau mass concentrates.
    pub fn recommended_b0_probes(&self) -> Vec<f64> {
        let mut probes = Vec::new();
        for m in self.nu..=self.deepest.saturating_sub(2) {
            let Ok(seq_next) = FactorialSequences::new(m + 1) else {
                break;
            };
            let t = WideFloat::pow2(seq_next.log2_s + 1).to_f64();
            if t == 0.0 {
                break;
            }
            let num = self
                .eval_big_g_wide(&WideFloat::from_f64(t))
                .map(|g| g.to_f64())
                .unwrap_or(0.0);
            let den = t.powf(self.gamma - 1.0);
            if num == 0.0 || den == 0.0 {
                break;
            }
            probes.push(t);
        }
        probes
    }
}

/// Exact `log₂(1 - num/den)` when `0 < num < den` and the ratio is close
/// enough to 1 to make the complement the interesting quantity.
fn one_minus_log2(num: &WideFloat, den: &WideFloat, log2_den: f64) -> Option<f64> {
    let diff = den.sub(num);
    if diff.sign() <= 0 || num.sign() <= 0 {
        return None;
    }
    // Only report when q > 1/2 (log2 q > -1), i.e. the complement carries
    // the information.
    let log2_q = num.log2() - log2_den;
    if log2_q <= -1.0 {
        return None;
    }
    Some(diff.log2() - log2_den)
}

struct GalleryPotential {
    g: ExampleG,
}

impl Potential for GalleryPotential {
    fn f(&self, _k: usize, t: f64) -> f64 {
        if !t.is_finite() {
            return f64::NAN;
        }
        if t <= 0.0 {
            return 0.0;
        }
        match self.g.eval_g_wide(&WideFloat::from_f64(t)) {
            Ok(v) => v.to_f64(),
            // Below the built window every plateau value underflows f64
            // (the construction keeps at least ν+5 stages), so 0.0 is the
            // exactly rounded answer.
            Err(_) => 0.0,
        }
    }

    fn big_f(&self, _k: usize, t: f64) -> f64 {
        if !t.is_finite() {
            return f64::NAN;
        }
        if t <= 0.0 {
            return 0.0;
        }
        match self.g.eval_big_g_wide(&WideFloat::from_f64(t)) {
            Ok(v) => v.to_f64(),
            Err(_) => 0.0,
        }
    }

    fn df(&self, _k: usize, t: f64) -> Option<f64> {
        if !t.is_finite() {
            return Some(f64::NAN);
        }
        if t <= 0.0 {
            return Some(0.0);
        }
        match self.g.eval_slope_wide(&WideFloat::from_f64(t)) {
            Ok(v) => Some(v.to_f64()),
            Err(_) => Some(0.0),
        }
    }

    fn nonneg(&self) -> bool {
        true
    }

    fn big_f_wide(&self, _k: usize, t: &WideFloat) -> Option<WideFloat> {
        if t.sign() <= 0 {
            return Some(WideFloat::zero());
        }
        self.g.eval_big_g_wide(t).ok()
    }
}

/// Constant forcing `f ≡ c`, `F(t) = c·t`.
pub fn linear(c: f64) -> NonlinearityFamily {
    struct Linear {
        c: f64,
    }
    impl Potential for Linear {
        fn f(&self, _k: usize, _t: f64) -> f64 {
            self.c
        }
        fn big_f(&self, _k: usize, t: f64) -> f64 {
            self.c * t
        }
        fn df(&self, _k: usize, _t: f64) -> Option<f64> {
            Some(0.0)
        }
        fn nonneg(&self) -> bool {
            self.c >= 0.0
        }
    }
    NonlinearityFamily::new(Arc::new(Linear { c }), FamilyDescriptor::Linear { c })
}

/// Power law `f(t) = |t|^{q-2} t`, `F(t) = |t|^q / q`; requires `q > 1`.
pub fn power(q: f64) -> NonlinearityFamily {
    assert!(
        q.is_finite() && q > 1.0,
        "power family needs q > 1, got {q}"
    );
    struct Power {
        q: f64,
    }
    impl Potential for Power {
        fn f(&self, _k: usize, t: f64) -> f64 {
            if t == 0.0 {
                0.0
            } else {
                t.signum() * t.abs().powf(self.q - 1.0)
            }
        }
        fn big_f(&self, _k: usize, t: f64) -> f64 {
            t.abs().powf(self.q) / self.q
        }
        fn df(&self, _k: usize, t: f64) -> Option<f64> {
            Some(if t == 0.0 {
                match self.q {
                    q if q > 2.0 => 0.0,
                    q if q == 2.0 => 1.0,
                    _ => f64::INFINITY,
                }
            } else {
                (self.q - 1.0) * t.abs().powf(self.q - 2.0)
            })
        }
    }
    NonlinearityFamily::new(Arc::new(Power { q }), FamilyDescriptor::Power { q })
}

/// Polynomial forcing `f(t) = Σ coeffs[i]·tⁱ`.
pub fn poly(coeffs: &[f64]) -> NonlinearityFamily {
    struct Poly {
        coeffs: Vec<f64>,
    }
    impl Poly {
        fn horner(&self, t: f64) -> f64 {
            self.coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
        }
    }
    impl Potential for Poly {
        fn f(&self, _k: usize, t: f64) -> f64 {
            self.horner(t)
        }
        fn big_f(&self, _k: usize, t: f64) -> f64 {
            self.coeffs
                .iter()
                .enumerate()
                .rev()
                .fold(0.0, |acc, (i, c)| acc * t + c / (i as f64 + 1.0))
                * t
        }
        fn df(&self, _k: usize, t: f64) -> Option<f64> {
            Some(
                self.coeffs
                    .iter()
                    .enumerate()
                    .skip(1)
                    .rev()
                    .fold(0.0, |acc, (i, c)| acc * t + c * i as f64),
            )
        }
    }
    NonlinearityFamily::new(
        Arc::new(Poly {
            coeffs: coeffs.to_vec(),
        }),
        FamilyDescriptor::Poly {
            coeffs: coeffs.to_vec(),
        },
    )
}

/// Polynomial forcing that promises `f ≥ 0`; the promise is sampled over a
/// sign-check grid and refused if violated.
pub fn nonneg_poly(coeffs: &[f64]) -> Result<NonlinearityFamily, GalleryError> {
    let plain = poly(coeffs);
    for i in 0..=4096 {
        let t = -16.0 + 32.0 * (i as f64) / 4096.0;
        let v = plain.f(1, t);
        if v < 0.0 {
            return Err(GalleryError::NotNonnegative { at: t, value: v });
        }
    }
    struct NonnegPoly {
        inner: NonlinearityFamily,
    }
    impl Potential for NonnegPoly {
        fn f(&self, k: usize, t: f64) -> f64 {
            self.inner.f(k, t)
        }
        fn big_f(&self, k: usize, t: f64) -> f64 {
            self.inner.big_f(k, t)
        }
        fn df(&self, k: usize, t: f64) -> Option<f64> {
            Some(self.inner.df(k, t))
        }
        fn nonneg(&self) -> bool {
            true
        }
    }
    let descriptor = FamilyDescriptor::TheoremIntro {
        coeffs: coeffs.to_vec(),
    };
    Ok(NonlinearityFamily::new(
        Arc::new(NonnegPoly { inner: plain }),
        descriptor,
    ))
}

/// The oscillating factorial-scale family with growth exponent `γ > 2`.
pub fn example_family(gamma: f64) -> Result<NonlinearityFamily, GalleryError> {
    example_family_with_depth(gamma, 7)
}

/// Same, with stages built deep enough for quotient tables up to `table_max_m`.
pub fn example_family_with_depth(
    gamma: f64,
    table_max_m: u32,
) -> Result<NonlinearityFamily, GalleryError> {
    let g = ExampleG::new(gamma, table_max_m)?;
    Ok(NonlinearityFamily::new(
        Arc::new(GalleryPotential { g }),
        FamilyDescriptor::ExampleEsempio { gamma },
    ))
}

/// Construct a family from its serializable descriptor (the config path).
pub fn from_descriptor(desc: &FamilyDescriptor) -> Result<NonlinearityFamily, GalleryError> {
    match desc {
        FamilyDescriptor::Linear { c } => Ok(linear(*c)),
        FamilyDescriptor::Power { q } => {
            if !q.is_finite() || *q <= 1.0 {
                return Err(GalleryError::BadPowerExponent(*q));
            }
            Ok(power(*q))
        }
        FamilyDescriptor::Poly { coeffs } => Ok(poly(coeffs)),
        FamilyDescriptor::ExampleEsempio { gamma } => example_family(*gamma),
        FamilyDescriptor::TheoremIntro { coeffs } => nonneg_poly(coeffs),
        FamilyDescriptor::Custom { .. } => Err(GalleryError::UnsupportedDescriptor),
    }
}

/// Names accepted by the config schema's `family` key.
pub fn catalog() -> &'static [&'static str] {
    &["linear", "power", "poly", "example_esempio", "theorem_intro"]
}

/// The canonical alternating exponent profile for the factorial-scale
/// family: `p(k) = γ` for even `k`, `γ-1` for odd `k` (so `p⁺ = γ`,
/// `p⁻ = γ-1`).
pub fn alternating_profile(gamma: f64, t: usize) -> Result<ExponentMap, ProblemError> {
    let values = (0..t + 2)
        .map(|k| if k % 2 == 0 { gamma } else { gamma - 1.0 })
        .collect();
    ExponentMap::from_values(values, t)
}

/// The fully assembled factorial-scale instance on `T` interior nodes.
pub fn example_instance(
    gamma: f64,
    t: usize,
    lambda: f64,
) -> Result<ProblemInstance, GalleryError> {
    let family = example_family(gamma)?;
    let exponents = alternating_profile(gamma, t)?;
    Ok(ProblemInstance::new(t, lambda, exponents, family)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_stage_index_is_four() {
        assert_eq!(minimal_nu(), 4);
    }

    #[test]
    fn factorial_values_and_overflow() {
        assert_eq!(factorial(0).unwrap(), 1);
        assert_eq!(factorial(4).unwrap(), 24);
        assert_eq!(factorial(6).unwrap(), 720);
        assert_eq!(factorial(33).unwrap() % 1000, 0);
        assert!(factorial(34).is_err());
    }

    #[test]
    fn stage_scales_match_hand_values() {
        let s4 = FactorialSequences::new(4).unwrap();
        assert_eq!((s4.log2_s, s4.log2_t, s4.log2_delta), (-12, -48, -576));
        let s6 = FactorialSequences::new(6).unwrap();
        assert_eq!((s6.log2_s, s6.log2_t, s6.log2_delta), (-360, -1440, -518400));
        assert!(FactorialSequences::new(1).is_err());
    }

    #[test]
    fn density_takes_exact_plateau_and_ramp_values() {
        let g = ExampleG::new(3.0, 7).unwrap();
        // Plateau 4 value ε₄ = 2^-48 at the flagship solution height 2^-24.
        let w = WideFloat::pow2(-24);
        let v = g.eval_g_wide(&w).unwrap();
        assert_eq!(v.cmp_value(&WideFloat::pow2(-48)), Ordering::Equal);
        // Bottom edge of plateau 4 (s₅ is included).
        let v = g.eval_g_wide(&WideFloat::pow2(-60)).unwrap();
        assert_eq!(v.cmp_value(&WideFloat::pow2(-48)), Ordering::Equal);
        // Just below s₅ but above the ramp: plateau 5.
        let w = WideFloat::pow2(-60).sub(&WideFloat::pow2(-90));
        let v = g.eval_g_wide(&w).unwrap();
        assert_eq!(v.cmp_value(&WideFloat::pow2(-240)), Ordering::Equal);
        // Ramp midpoint below s₅: the average (ε₄ + ε₅)/2.
        let w = WideFloat::pow2(-60).sub(&WideFloat::pow2(-14401));
        let v = g.eval_g_wide(&w).unwrap();
        let mid = WideFloat::pow2(-48).add(&WideFloat::pow2(-240)).div_f64(2.0);
        assert_eq!(v.cmp_value(&mid), Ordering::Equal);
        // Above the first stage: constant ε₄; at and below zero: 0.
        let v = g.eval_g_wide(&WideFloat::from_f64(0.5)).unwrap();
        assert_eq!(v.cmp_value(&WideFloat::pow2(-48)), Ordering::Equal);
        assert!(g.eval_g_wide(&WideFloat::zero()).unwrap().is_zero());
        assert!(g
            .eval_g_wide(&WideFloat::from_f64(-3.0))
            .unwrap()
            .is_zero());
    }

    #[test]
    fn antiderivative_is_exactly_sandwiched() {
        let g = ExampleG::new(3.0, 7).unwrap();
        let s4 = FactorialSequences::new(4).unwrap().s();
        let s5 = FactorialSequences::new(5).unwrap().s();
        let big = g.eval_big_g_wide(&s4).unwrap();
        // ε₄·(s₄ - s₅) ≤ G(s₄) < ε₄·s₄ — the plateau dominates everything.
        let eps4 = WideFloat::pow2(-48);
        assert_eq!(
            big.cmp_value(&eps4.mul(&s4.sub(&s5))),
            Ordering::Greater
        );
        assert_eq!(big.cmp_value(&eps4.mul(&s4)), Ordering::Less);
        assert!((big.log2() - (-60.0)).abs() < 1e-9, "{}", big.log2());
        // Deep evaluation: G(2^-720) ≈ 2^-2160 — three stages down, exact in
        // wide arithmetic, zero in f64.
        let deep = g.eval_big_g_wide(&WideFloat::pow2(-720)).unwrap();
        assert!((deep.log2() - (-2160.0)).abs() < 1e-9, "{}", deep.log2());
        assert_eq!(deep.to_f64(), 0.0);
    }

    #[test]
    fn f64_interface_matches_wide_projections() {
        let fam = example_family(3.0).unwrap();
        // On plateau 4 the density is exactly 2^-48.
        assert_eq!(fam.f(1, 2f64.powi(-24)), 2f64.powi(-48));
        assert_eq!(fam.f(1, 0.5), 2f64.powi(-48));
        assert_eq!(fam.f(1, 0.0), 0.0);
        assert_eq!(fam.f(1, -1.0), 0.0);
        // Below every f64-visible stage the value rounds to exactly 0.
        assert_eq!(fam.f(1, 5e-324), 0.0);
        assert_eq!(fam.big_f(1, 5e-324), 0.0);
        assert!(fam.nonneg());
        assert!(fam.has_wide());
        // The wide hook agrees with the direct evaluation.
        let via_hook = fam.big_f_wide(1, &WideFloat::pow2(-24)).unwrap();
        let direct = ExampleG::new(3.0, 7)
            .unwrap()
            .eval_big_g_wide(&WideFloat::pow2(-24))
            .unwrap();
        assert_eq!(via_hook.cmp_value(&direct), Ordering::Equal);
    }

    #[test]
    fn quotient_tables_certify_monotonicity() {
        let g = ExampleG::new(3.0, 7).unwrap();
        let tables = g.quotient_tables(4, 7).unwrap();
        assert!(tables.upper_strictly_decreasing);
        assert!(tables.lower_strictly_increasing);
        assert!(tables.upper_display_bound_ok);
        assert!(tables.lower_display_bound_ok);
        let upper_log2: Vec<f64> = tables.upper.iter().map(|r| r.log2_quotient).collect();
        for (got, want) in upper_log2.iter().zip([-24.0, -120.0, -720.0, -5040.0]) {
            assert!((got - want).abs() < 1e-6, "upper {got} vs {want}");
        }
        // The lower quotients approach 1 from below; their complements
        // 1 - q ≈ 2^{-((m+1)!/2 - 2·m!)} carry the strictness.
        let complements: Vec<f64> = tables
            .lower
            .iter()
            .map(|r| r.log2_one_minus_q.expect("q just below 1"))
            .collect();
        for (got, want) in complements.iter().zip([-12.0, -120.0, -1080.0, -10080.0]) {
            assert!((got - want).abs() < 1e-6, "complement {got} vs {want}");
        }
        // Window validation.
        assert!(g.quotient_tables(2, 7).is_err());
        assert!(g.quotient_tables(4, 16).is_err());
    }

    #[test]
    fn recommended_probes_are_f64_and_decreasing() {
        let g = ExampleG::new(3.0, 7).unwrap();
        let a = g.recommended_a0_probes();
        assert_eq!(a, vec![2f64.powi(-12), 2f64.powi(-60)]);
        let b = g.recommended_b0_probes();
        assert_eq!(b, vec![2f64.powi(-59), 2f64.powi(-359)]);
    }

    #[test]
    fn gallery_estimates_feed_the_interval() {
        use crate::theory;
        let inst = example_instance(3.0, 2, 1.0).unwrap();
        assert_eq!((inst.p_minus(), inst.p_plus()), (2.0, 3.0));
        let g = ExampleG::new(3.0, 7).unwrap();
        let a0 = theory::estimate_a0(&inst, &g.recommended_a0_probes()).unwrap();
        assert!(!a0.infinite);
        assert!(a0.value <= 2f64.powi(-118), "A0 = {}", a0.value);
        let b0 = theory::estimate_b0(&inst, &g.recommended_b0_probes()).unwrap();
        assert!(b0.infinite, "{b0:?}");
        // First value quotient: 2·G(2^-59)/2^-118 = 2^11 up to the deeper
        // stage corrections.
        let q0 = b0.quotients[0].q;
        assert!((q0 / 2f64.powi(11) - 1.0).abs() < 1e-6, "q0 = {q0}");
        let interval =
            theory::interval_main(a0.value, b0.value, inst.p_minus(), inst.p_plus(), inst.t)
                .unwrap();
        assert!(interval.nonempty && interval.hypothesis_holds);
        assert_eq!(interval.lower, 0.0);
        assert!(interval.upper > 1.0); // λ = 1 is admissible
    }

    #[test]
    fn poly_families_evaluate_closed_forms() {
        let f = poly(&[1.0, 0.0, 3.0]); // 1 + 3t²
        assert_eq!(f.f(1, 2.0), 13.0);
        assert_eq!(f.big_f(1, 2.0), 2.0 + 8.0); // t + t³
        assert_eq!(f.df(1, 2.0), 12.0);
        let lin = linear(2.5);
        assert_eq!(lin.f(1, -3.0), 2.5);
        assert_eq!(lin.big_f(1, -3.0), -7.5);
        assert!(lin.nonneg());
        assert!(!linear(-1.0).nonneg());
        let pw = power(3.0);
        assert_eq!(pw.f(1, -2.0), -4.0);
        assert_eq!(pw.big_f(1, -2.0), 8.0 / 3.0);
        assert_eq!(pw.df(1, -2.0), 4.0);
        assert_eq!(pw.f(1, 0.0), 0.0);
    }

    #[test]
    fn nonneg_poly_checks_its_promise() {
        assert!(nonneg_poly(&[1.0, 0.0, 1.0]).is_ok()); // 1 + t² ≥ 0
        let err = nonneg_poly(&[0.0, 1.0]).unwrap_err(); // t changes sign
        assert!(matches!(err, GalleryError::NotNonnegative { .. }));
        let fam = nonneg_poly(&[1.0, 0.0, 1.0]).unwrap();
        assert!(fam.nonneg());
    }

    #[test]
    fn descriptor_round_trip() {
        for desc in [
            FamilyDescriptor::Linear { c: 2.0 },
            FamilyDescriptor::Power { q: 2.5 },
            FamilyDescriptor::Poly {
                coeffs: vec![1.0, -1.0],
            },
            FamilyDescriptor::ExampleEsempio { gamma: 3.0 },
            FamilyDescriptor::TheoremIntro {
                coeffs: vec![1.0, 0.0, 1.0],
            },
        ] {
            let fam = from_descriptor(&desc).unwrap();
            assert_eq!(fam.descriptor(), &desc);
        }
        assert!(from_descriptor(&FamilyDescriptor::Power { q: 0.5 }).is_err());
        assert!(from_descriptor(&FamilyDescriptor::ExampleEsempio { gamma: 1.5 }).is_err());
        assert!(from_descriptor(&FamilyDescriptor::Custom {
            name: "x".into()
        })
        .is_err());
    }

    #[test]
    fn alternating_profile_shapes() {
        let m = alternating_profile(3.0, 2).unwrap();
        assert_eq!(m.values(), &[3.0, 2.0, 3.0, 2.0]);
        assert_eq!((m.p_minus(), m.p_plus()), (2.0, 3.0));
        assert!(alternating_profile(2.0, 2).is_err()); // γ-1 = 1 not allowed
    }
}

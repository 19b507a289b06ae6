//! Wide-exponent arithmetic for quantities far outside `f64` range.
//!
//! The factorial-scale instance families in [`crate::gallery`] produce
//! quantities like `2^-(m!)²` whose exponents overflow `f64` (|exponent| can
//! reach millions) and whose *comparisons* must resolve differences far below
//! one `f64` ulp — e.g. certifying `1 - 2^-1080 < 1 - 2^-10080` strictly.
//! A single `(sign, log2)` pair cannot do this: the log of either side rounds
//! to `-0.0`. Instead a [`WideFloat`] stores a value exactly as a short sum
//!
//! ```text
//!   value = Σ_i  mantissa_i · 2^{exp_i}
//! ```
//!
//! with integer exponents (`i128`) sorted in strictly descending order,
//! mantissas in `±[1, 2)`, and adjacent exponents more than 52 bits apart.
//! Terms closer than 52 bits are combined with one `f64` rounding (relative
//! error ≤ 2⁻⁵²); terms farther apart never interact, so sums and products of
//! exact powers of two stay exact at any scale. Comparisons subtract term
//! lists and inspect the leading sign, which makes order decisions exact
//! whenever the operands differ by more than one part in 2⁵² of any shared
//! term — ample for the certificates this crate produces.
//!
//! Conversions: [`WideFloat::from_f64`] is exact (subnormals included);
//! [`WideFloat::to_f64`] rounds into `f64` with ordinary overflow/underflow;
//! [`WideFloat::log2`] projects to an `f64` logarithm for reporting.

use std::cmp::Ordering;
use std::fmt;

/// Exponent gap (in bits) beyond which terms are kept separate exactly.
const GAP_BITS: i128 = 52;

/// Maximum retained terms; the smallest are dropped past this, which only
/// discards contributions below 2^-(52·MAX_TERMS) of the leading term.
const MAX_TERMS: usize = 48;

#[derive(Clone, Copy, Debug, PartialEq)]
struct Term {
    exp: i128,
    /// Signed mantissa, |man| in [1, 2); never zero, NaN, or infinite.
    man: f64,
}

/// An extended-range real number; see the module docs.
#[derive(Clone, PartialEq)]
pub struct WideFloat {
    /// Canonical: sorted by strictly descending `exp`, adjacent gaps > 52.
    /// Empty list encodes zero.
    terms: Vec<Term>,
}

/// Split a finite nonzero `f64` into `(exp, man)` with `x = man · 2^exp`
/// and `|man| ∈ [1, 2)`. Exact.
fn split_f64(x: f64) -> (i128, f64) {
    debug_assert!(x.is_finite() && x != 0.0);
    let bits = x.to_bits();
    let exp_field = ((bits >> 52) & 0x7ff) as i64;
    if exp_field == 0 {
        // Subnormal: rescale into the normal range first (exact).
        let (e, m) = split_f64(x * f64::powi(2.0, 64));
        return (e - 64, m);
    }
    let man = f64::from_bits((bits & !(0x7ffu64 << 52)) | (1023u64 << 52));
    (exp_field as i128 - 1023, man)
}

/// `man · 2^exp` rounded to `f64`, saturating to ±inf / ±0 outside range.
fn assemble_f64(exp: i128, man: f64) -> f64 {
    if exp > 1100 {
        return if man > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY };
    }
    if exp < -1150 {
        return if man > 0.0 { 0.0 } else { -0.0 };
    }
    let e = exp as i32;
    if e >= -1021 {
        man * f64::powi(2.0, e)
    } else {
        // Land in the subnormal range with a single rounding at the end.
        (man * f64::powi(2.0, -1021)) * f64::powi(2.0, e + 1021)
    }
}

impl WideFloat {
    pub fn zero() -> Self {
        WideFloat { terms: Vec::new() }
    }

    pub fn one() -> Self {
        Self::pow2(0)
    }

    /// Exactly `2^exp`.
    pub fn pow2(exp: i128) -> Self {
        WideFloat {
            terms: vec![Term { exp, man: 1.0 }],
        }
    }

    /// Exact conversion; panics on NaN or infinity.
    pub fn from_f64(x: f64) -> Self {
        assert!(x.is_finite(), "WideFloat::from_f64 needs a finite value");
        if x == 0.0 {
            return Self::zero();
        }
        let (exp, man) = split_f64(x);
        WideFloat {
            terms: vec![Term { exp, man }],
        }
    }

    /// `man · 2^exp` for arbitrary finite `man` (normalized internally).
    pub fn from_parts(man: f64, exp: i128) -> Self {
        assert!(man.is_finite());
        if man == 0.0 {
            return Self::zero();
        }
        let (e2, m2) = split_f64(man);
        WideFloat {
            terms: vec![Term {
                exp: exp.checked_add(e2).expect("WideFloat exponent overflow"),
                man: m2,
            }],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// -1, 0, or +1.
    pub fn sign(&self) -> i8 {
        match self.terms.first() {
            None => 0,
            Some(t) if t.man > 0.0 => 1,
            _ => -1,
        }
    }

    pub fn neg(&self) -> Self {
        WideFloat {
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    exp: t.exp,
                    man: -t.man,
                })
                .collect(),
        }
    }

    pub fn abs(&self) -> Self {
        if self.sign() < 0 {
            self.neg()
        } else {
            self.clone()
        }
    }

    fn normalize(mut raw: Vec<Term>) -> Self {
        // Bring every mantissa into ±[1,2), drop zeros.
        let mut i = 0;
        while i < raw.len() {
            let m = raw[i].man;
            debug_assert!(m.is_finite());
            if m == 0.0 {
                raw.swap_remove(i);
                continue;
            }
            if !(1.0..2.0).contains(&m.abs()) {
                let (e2, m2) = split_f64(m);
                raw[i].exp = raw[i]
                    .exp
                    .checked_add(e2)
                    .expect("WideFloat exponent overflow");
                raw[i].man = m2;
            }
            i += 1;
        }
        // Combine close terms until stable. Each pass merges at least one
        // pair or terminates, so this runs O(n) passes on O(n log n) sorts.
        loop {
            raw.sort_by(|a, b| b.exp.cmp(&a.exp));
            let mut out: Vec<Term> = Vec::with_capacity(raw.len());
            let mut merged = false;
            for t in raw.iter().copied() {
                match out.last_mut() {
                    Some(acc) if acc.exp - t.exp <= GAP_BITS => {
                        // Gap ≤ 52: combine with a single f64 rounding.
                        let shifted = t.man * f64::powi(2.0, -((acc.exp - t.exp) as i32));
                        let sum = acc.man + shifted;
                        merged = true;
                        if sum == 0.0 {
                            out.pop();
                        } else {
                            let (e2, m2) = split_f64(sum);
                            acc.exp = acc
                                .exp
                                .checked_add(e2)
                                .expect("WideFloat exponent overflow");
                            acc.man = m2;
                        }
                    }
                    _ => out.push(t),
                }
            }
            raw = out;
            if !merged {
                break;
            }
        }
        raw.truncate(MAX_TERMS);
        WideFloat { terms: raw }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut raw = self.terms.clone();
        raw.extend_from_slice(&other.terms);
        Self::normalize(raw)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut raw = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                raw.push(Term {
                    exp: a
                        .exp
                        .checked_add(b.exp)
                        .expect("WideFloat exponent overflow"),
                    man: a.man * b.man,
                });
            }
        }
        Self::normalize(raw)
    }

    pub fn mul_f64(&self, x: f64) -> Self {
        self.mul(&Self::from_f64(x))
    }

    /// Divide by a finite nonzero `f64` (one rounding via the reciprocal,
    /// exact when `x` is a power of two).
    pub fn div_f64(&self, x: f64) -> Self {
        assert!(x.is_finite() && x != 0.0);
        self.mul_f64(x.recip())
    }

    /// Integer power by repeated squaring.
    pub fn powi(&self, n: u32) -> Self {
        let mut acc = Self::one();
        let mut base = self.clone();
        let mut k = n;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul(&base);
            }
            base = base.mul(&base);
            k >>= 1;
        }
        acc
    }

    /// `self^p` for positive `self` and finite `p`, through the wide log.
    ///
    /// Exponents are carried as exact integer + compensated fraction, so the
    /// relative error stays near f64 ulp even when `p · log2(self)` is in the
    /// millions. Falls back to [`powi`](Self::powi) when `p` is a small
    /// nonnegative integer (exact for power-of-two inputs).
    pub fn powf(&self, p: f64) -> Self {
        assert!(self.sign() > 0, "WideFloat::powf needs a positive base");
        if p == 0.0 {
            return Self::one();
        }
        if p.fract() == 0.0 && (0.0..=64.0).contains(&p) {
            return self.powi(p as u32);
        }
        let (e, lm) = self.log2_split();
        debug_assert!(e.abs() < (1i128 << 53), "logarithm exponent too large");
        let e_f = e as f64; // exact: |e| < 2^53
        // p·e with an exact FMA residual, plus the small fractional log part.
        let hi = p * e_f;
        let lo = p.mul_add(e_f, -hi) + p * lm;
        let int_part = hi.floor();
        let frac = (hi - int_part) + lo; // hi - floor(hi) is exact
        let extra = frac.floor();
        let man = f64::exp2(frac - extra);
        Self::from_parts(man, int_part as i128 + extra as i128)
    }

    /// `(leading exponent, log2 of the residual mantissa)`; the value is
    /// `2^(exp + frac)` with `frac ∈ (-1, 1)`. Panics on zero or negative.
    fn log2_split(&self) -> (i128, f64) {
        assert!(self.sign() > 0, "log2 of a non-positive WideFloat");
        let lead = self.terms[0];
        // Residual ratio of the tail against the leading term; each tail term
        // is below 2^-52 of the lead, so f64 accumulation is ample.
        let mut r = 0.0;
        for t in &self.terms[1..] {
            let gap = lead.exp - t.exp;
            if gap > 1100 {
                break;
            }
            r += (t.man / lead.man) * f64::powi(2.0, -(gap as i32));
        }
        (lead.exp, (lead.man * (1.0 + r)).log2())
    }

    /// log2 of |self| as `f64` (±huge exponents round; zero gives -inf).
    pub fn log2(&self) -> f64 {
        if self.is_zero() {
            return f64::NEG_INFINITY;
        }
        let (e, lm) = self.abs().log2_split();
        e as f64 + lm
    }

    /// Round to `f64` (overflowing to ±inf, underflowing through subnormals).
    pub fn to_f64(&self) -> f64 {
        let mut acc = 0.0;
        for t in &self.terms {
            acc += assemble_f64(t.exp, t.man);
        }
        acc
    }

    pub fn cmp_value(&self, other: &Self) -> Ordering {
        match self.sub(other).sign() {
            1 => Ordering::Greater,
            -1 => Ordering::Less,
            _ => Ordering::Equal,
        }
    }

    /// Leading binary exponent, or `None` for zero.
    pub fn leading_exp(&self) -> Option<i128> {
        self.terms.first().map(|t| t.exp)
    }
}

impl PartialOrd for WideFloat {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp_value(other))
    }
}

impl From<f64> for WideFloat {
    fn from(x: f64) -> Self {
        Self::from_f64(x)
    }
}

impl fmt::Debug for WideFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "WideFloat(0)");
        }
        write!(f, "WideFloat(")?;
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{}*2^{}", t.man, t.exp)?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for WideFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sign() {
            0 => write!(f, "0"),
            s => {
                let v = self.to_f64();
                if v != 0.0 && v.is_finite() {
                    write!(f, "{v}")
                } else {
                    write!(f, "{}2^{:.6}", if s < 0 { "-" } else { "" }, self.abs().log2())
                }
            }
        }
    }
}

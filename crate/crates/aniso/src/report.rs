//! Report assembly and serialization.
//!
//! Every tool output is wrapped in a [`Document`]: a small `meta` block
//! (schema version, tool id, optional wall-clock timestamp) and a `body`
//! holding the command name, the seed actually used, the instance summary,
//! and the command-specific results. The body is a pure function of the
//! inputs and the seed — timestamps never leak into it — so two runs with
//! the same seed serialize to byte-identical bodies.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{verify_coercivity, CoercivityReport, EnergyError};
use crate::gallery::QuotientTables;
use crate::problem::{FamilyDescriptor, ProblemInstance, ValidationReport};
use crate::solver::{CascadeReport, LevelStatus, MultistartReport, SolutionRecord, SweepReport};
use crate::theory::{
    self, LimitEstimate, ParameterInterval, SublevelBound, SublevelCheck, TheoryError,
};

pub const SCHEMA_VERSION: &str = "1";

/// Serialize extended reals: finite values as JSON numbers, infinities as
/// the strings `"inf"` / `"-inf"` (JSON has no literal for them). The
/// deserializer accepts either representation.
pub mod ext_real {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else if *v == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(s) => match s.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!(
                    "expected a number or \"inf\"/\"-inf\"/\"nan\", got {other:?}"
                ))),
            },
        }
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error("report serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Meta {
    pub schema_version: String,
    pub tool: String,
    /// Wall-clock seconds since the Unix epoch; deliberately outside the
    /// body so report bodies stay reproducible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_unix: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Body<R> {
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<InstanceBlock>,
    pub results: R,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Document<R> {
    pub meta: Meta,
    pub body: Body<R>,
}

impl<R: Serialize> Document<R> {
    pub fn new(
        command: &str,
        seed: Option<u64>,
        instance: Option<InstanceBlock>,
        results: R,
        generated_unix: Option<u64>,
    ) -> Self {
        Document {
            meta: Meta {
                schema_version: SCHEMA_VERSION.to_string(),
                tool: format!("aniso {}", env!("CARGO_PKG_VERSION")),
                generated_unix,
            },
            body: Body {
                command: command.to_string(),
                seed,
                instance,
                results,
            },
        }
    }

    pub fn to_json(&self) -> Result<String, ReportError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Summary of the instance a report was produced for.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstanceBlock {
    pub t: usize,
    pub lambda: f64,
    pub p_minus: f64,
    pub p_plus: f64,
    pub exponents: Vec<f64>,
    pub nonlinearity: FamilyDescriptor,
    /// Whether the family carries the exact wide-range antiderivative hook.
    pub exact_hook: bool,
}

impl InstanceBlock {
    pub fn from_instance(instance: &ProblemInstance) -> Self {
        InstanceBlock {
            t: instance.t,
            lambda: instance.lambda,
            p_minus: instance.p_minus(),
            p_plus: instance.p_plus(),
            exponents: instance.exponents.values().to_vec(),
            nonlinearity: instance.nonlinearity.descriptor().clone(),
            exact_hook: instance.nonlinearity.has_wide(),
        }
    }
}

/// What the `theory` report should compute beyond the constants and the
/// admissible interval.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryOptions {
    /// Number of default geometric probes when explicit lists are absent.
    pub probes: usize,
    pub a0_probes: Option<Vec<f64>>,
    pub b0_probes: Option<Vec<f64>>,
    /// Sup height for the sublevel bound block (skipped when absent).
    pub sublevel_c: Option<f64>,
    /// Random membership samples for the sublevel inclusion check
    /// (0 skips the check).
    pub sublevel_samples: usize,
    /// Radius for the sampled coercivity check (skipped when absent).
    pub coercivity_radius: Option<f64>,
    pub coercivity_samples: usize,
}

impl Default for TheoryOptions {
    fn default() -> Self {
        TheoryOptions {
            probes: 12,
            a0_probes: None,
            b0_probes: None,
            sublevel_c: None,
            sublevel_samples: 200,
            coercivity_radius: None,
            coercivity_samples: 64,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConstantsBlock {
    pub t: usize,
    pub p_minus: f64,
    pub p_plus: f64,
    pub kappa: f64,
    /// Sup-norm embedding constant `(T+1)^{(p-1)/p}/2` at `p = p⁺`.
    pub embedding_basic: f64,
    /// Refined embedding constant `1/c₁` at `p = p⁺`.
    pub embedding_refined: f64,
    /// Minimum of the node-profile function θ at `p = p⁺`.
    pub theta_min: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChecksBlock {
    /// `A₀ < κ·B⁰` on the estimated values.
    pub hypothesis_main: bool,
    pub lambda_in_interval: bool,
    /// Constant exponent only: the interval's upper endpoint must equal
    /// `1/(p·A₀·embedding_basic^p)` exactly (up to roundoff).
    pub upper_equals_reciprocal_embedding_form: Option<bool>,
    /// Constant exponent and even `T` only: the refined upper endpoint is
    /// never below the basic one.
    pub even_t_upper_not_below_const_p: Option<bool>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TheoryReport {
    pub constants: ConstantsBlock,
    pub a0: LimitEstimate,
    pub b0: LimitEstimate,
    pub interval: ParameterInterval,
    pub interval_const_p: Option<ParameterInterval>,
    pub interval_even_t: Option<ParameterInterval>,
    pub sublevel: Option<SublevelBound>,
    pub sublevel_check: Option<SublevelCheck>,
    pub coercivity: Option<CoercivityReport>,
    pub checks: ChecksBlock,
    pub notes: Vec<String>,
}

/// Assemble the theory block for an instance: constants, limit estimates,
/// admissible intervals, and the optional sublevel/coercivity checks.
pub fn theory_report(
    instance: &ProblemInstance,
    opts: &TheoryOptions,
    seed: u64,
    parallel: bool,
) -> Result<TheoryReport, ReportError> {
    let t = instance.t;
    let p_minus = instance.p_minus();
    let p_plus = instance.p_plus();
    let constants = ConstantsBlock {
        t,
        p_minus,
        p_plus,
        kappa: theory::kappa(p_minus, p_plus, t),
        embedding_basic: theory::embedding_bound_basic(t, p_plus),
        embedding_refined: theory::embedding_bound_refined(t, p_plus),
        theta_min: theory::theta_min(t, p_plus),
    };
    // Probe selection: explicit options win; otherwise a family that knows
    // its own interesting scales supplies them (the oscillating gallery
    // family concentrates its liminf/limsup along factorial scales that a
    // dyadic ladder never visits); otherwise the dyadic default ladder.
    let recommended = match instance.nonlinearity.descriptor() {
        FamilyDescriptor::ExampleEsempio { gamma } => crate::gallery::ExampleG::new(*gamma, 7)
            .ok()
            .map(|g| (g.recommended_a0_probes(), g.recommended_b0_probes())),
        _ => None,
    };
    let used_recommended =
        recommended.is_some() && (opts.a0_probes.is_none() || opts.b0_probes.is_none());
    let default_ladder = theory::default_probes(opts.probes.max(2));
    let (rec_a0, rec_b0) = recommended.unzip();
    let a0_probes = opts
        .a0_probes
        .clone()
        .or(rec_a0)
        .unwrap_or_else(|| default_ladder.clone());
    let b0_probes = opts.b0_probes.clone().or(rec_b0).unwrap_or(default_ladder);
    let a0 = theory::estimate_a0(instance, &a0_probes)?;
    let b0 = theory::estimate_b0(instance, &b0_probes)?;
    let interval = theory::interval_main(a0.value, b0.value, p_minus, p_plus, t)?;

    let constant_p = instance.exponents.constant();
    let interval_const_p = match constant_p {
        Some(p) => Some(theory::interval_const_p(a0.value, b0.value, p, t)?),
        None => None,
    };
    let interval_even_t = match constant_p {
        Some(p) if t % 2 == 0 => Some(theory::interval_even_t(a0.value, b0.value, p, t)?),
        _ => None,
    };

    let sublevel = match opts.sublevel_c {
        Some(c) => Some(theory::sublevel_bound(instance, c)?),
        None => None,
    };
    let sublevel_check = match opts.sublevel_c {
        Some(c) if opts.sublevel_samples > 0 => Some(theory::check_sublevel_inclusion(
            instance,
            c,
            opts.sublevel_samples,
            seed,
        )?),
        _ => None,
    };
    let coercivity = match opts.coercivity_radius {
        Some(radius) => Some(verify_coercivity(
            instance,
            radius,
            opts.coercivity_samples,
            seed,
            parallel,
        )?),
        None => None,
    };

    // Constant-p remark: the upper endpoint rewrites as the reciprocal of
    // `p·A₀·(basic embedding)^p`.
    let upper_equals_reciprocal_embedding_form = match (constant_p, &interval_const_p) {
        (Some(p), Some(iv)) if a0.value.is_finite() && a0.value > 0.0 => {
            let basic = theory::embedding_bound_basic(t, p);
            let reciprocal = 1.0 / (p * a0.value * basic.powf(p));
            Some((iv.upper - reciprocal).abs() <= 1e-12 * reciprocal.abs().max(1e-300))
        }
        _ => None,
    };
    let even_t_upper_not_below_const_p = match (&interval_const_p, &interval_even_t) {
        (Some(base), Some(refined)) => Some(refined.upper >= base.upper * (1.0 - 1e-12)),
        _ => None,
    };

    let mut notes = vec![format!(
        "limit estimates aggregate the tail of {} retained quotient(s); a0 trend {:?}, b0 trend {:?}",
        a0.quotients.len(),
        a0.trend,
        b0.trend
    )];
    if used_recommended {
        notes.push(
            "probes default to the family's recommended factorial scales; pass explicit \
             probe lists to override"
                .to_string(),
        );
    }
    notes.push(
        "a0 is aggregated as an upper (limsup-style) reading of the envelope quotient; a \
         decreasing trend means the true small-scale limit may be smaller"
            .to_string(),
    );
    if b0.infinite {
        notes.push(
            "the value quotient diverges along the probes; the admissible interval's lower \
             endpoint is reported as 0"
                .to_string(),
        );
    }

    let checks = ChecksBlock {
        hypothesis_main: interval.hypothesis_holds,
        lambda_in_interval: interval.lower < instance.lambda && instance.lambda < interval.upper,
        upper_equals_reciprocal_embedding_form,
        even_t_upper_not_below_const_p,
    };

    Ok(TheoryReport {
        constants,
        a0,
        b0,
        interval,
        interval_const_p,
        interval_even_t,
        sublevel,
        sublevel_check,
        coercivity,
        checks,
        notes,
    })
}

/// Quote a CSV field when it contains a delimiter, quote, or newline.
pub fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else if v == f64::INFINITY {
        "inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        "nan".to_string()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

pub fn multistart_csv(report: &MultistartReport) -> String {
    let mut out = String::from(
        "index,j_lambda,sup_norm,h_norm,residual_sup,gradient_sup,iterations,j_wide_sign,values\n",
    );
    for (i, s) in report.solutions.iter().enumerate() {
        let values = s
            .values
            .iter()
            .map(|v| fmt_num(*v))
            .collect::<Vec<_>>()
            .join(";");
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            i,
            fmt_num(s.j_lambda),
            fmt_num(s.sup_norm),
            fmt_num(s.h_norm),
            fmt_num(s.residual_sup),
            fmt_num(s.gradient_sup),
            s.iterations,
            s.j_wide_sign.map(|v| v.to_string()).unwrap_or_default(),
            csv_field(&values)
        ));
    }
    out
}

/// One-row table for a single solve, same columns as [`multistart_csv`].
pub fn solution_csv(record: &SolutionRecord) -> String {
    let mut out = String::from(
        "index,j_lambda,sup_norm,h_norm,residual_sup,gradient_sup,iterations,j_wide_sign,values\n",
    );
    let values = record
        .values
        .iter()
        .map(|v| fmt_num(*v))
        .collect::<Vec<_>>()
        .join(";");
    out.push_str(&format!(
        "0,{},{},{},{},{},{},{},{}\n",
        fmt_num(record.j_lambda),
        fmt_num(record.sup_norm),
        fmt_num(record.h_norm),
        fmt_num(record.residual_sup),
        fmt_num(record.gradient_sup),
        record.iterations,
        record.j_wide_sign.map(|v| v.to_string()).unwrap_or_default(),
        csv_field(&values)
    ));
    out
}

pub fn cascade_csv(report: &CascadeReport) -> String {
    let mut out = String::from(
        "level,c,log2_c,log2_r,status,detail,scan_halvings,sup_norm,j_lambda,log2_phi\n",
    );
    for level in &report.levels {
        let (status, detail) = match &level.status {
            LevelStatus::Converged => ("converged", String::new()),
            LevelStatus::Stalled { reason } => ("stalled", reason.clone()),
            LevelStatus::InvalidC { reason } => ("invalid_c", reason.clone()),
        };
        let (sup, j, phi) = match level.solution {
            Some(i) => (
                fmt_num(report.solutions[i].sup_norm),
                fmt_num(report.solutions[i].j_lambda),
                fmt_num(report.phi_log2[i]),
            ),
            None => (String::new(), String::new(), String::new()),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            level.index,
            fmt_num(level.c),
            fmt_num(level.log2_c),
            fmt_num(level.log2_r),
            status,
            csv_field(&detail),
            level
                .scan_halvings
                .map(|v| v.to_string())
                .unwrap_or_default(),
            sup,
            j,
            phi
        ));
    }
    out
}

pub fn sweep_csv(report: &SweepReport) -> String {
    let mut out = String::from(
        "lambda,seed,converged,distinct,nonzero,negative_energy,best_j,best_sup\n",
    );
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            fmt_num(row.lambda),
            row.seed,
            row.converged,
            row.distinct,
            row.nonzero,
            row.negative_energy,
            fmt_opt(row.best_j),
            fmt_opt(row.best_sup)
        ));
    }
    out
}

pub fn quotients_csv(tables: &QuotientTables) -> String {
    let mut out = String::from("table,m,log2_probe,log2_quotient,log2_one_minus_q\n");
    for (name, rows) in [("upper", &tables.upper), ("lower", &tables.lower)] {
        for r in rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                name,
                r.m,
                fmt_num(r.log2_probe),
                fmt_num(r.log2_quotient),
                fmt_opt(r.log2_one_minus_q)
            ));
        }
    }
    out
}

pub fn theory_csv(report: &TheoryReport) -> String {
    let mut rows: Vec<(String, String)> = vec![
        ("t".into(), report.constants.t.to_string()),
        ("p_minus".into(), fmt_num(report.constants.p_minus)),
        ("p_plus".into(), fmt_num(report.constants.p_plus)),
        ("kappa".into(), fmt_num(report.constants.kappa)),
        (
            "embedding_basic".into(),
            fmt_num(report.constants.embedding_basic),
        ),
        (
            "embedding_refined".into(),
            fmt_num(report.constants.embedding_refined),
        ),
        ("theta_min".into(), fmt_num(report.constants.theta_min)),
        ("a0".into(), fmt_num(report.a0.value)),
        ("a0_infinite".into(), report.a0.infinite.to_string()),
        ("b0".into(), fmt_num(report.b0.value)),
        ("b0_infinite".into(), report.b0.infinite.to_string()),
        ("interval_lower".into(), fmt_num(report.interval.lower)),
        ("interval_upper".into(), fmt_num(report.interval.upper)),
        (
            "interval_nonempty".into(),
            report.interval.nonempty.to_string(),
        ),
        (
            "hypothesis_main".into(),
            report.checks.hypothesis_main.to_string(),
        ),
        (
            "lambda_in_interval".into(),
            report.checks.lambda_in_interval.to_string(),
        ),
    ];
    if let Some(iv) = &report.interval_const_p {
        rows.push(("interval_const_p_lower".into(), fmt_num(iv.lower)));
        rows.push(("interval_const_p_upper".into(), fmt_num(iv.upper)));
    }
    if let Some(iv) = &report.interval_even_t {
        rows.push(("interval_even_t_lower".into(), fmt_num(iv.lower)));
        rows.push(("interval_even_t_upper".into(), fmt_num(iv.upper)));
    }
    if let Some(s) = &report.sublevel {
        rows.push(("sublevel_c".into(), fmt_num(s.c)));
        rows.push(("sublevel_log2_r".into(), fmt_num(s.log2_r)));
        rows.push(("sublevel_ratio".into(), fmt_num(s.ratio)));
    }
    if let Some(ch) = &report.sublevel_check {
        rows.push(("sublevel_check_ok".into(), ch.ok.to_string()));
        rows.push((
            "sublevel_check_max_sup_ratio".into(),
            fmt_num(ch.max_sup_ratio),
        ));
    }
    if let Some(c) = &report.coercivity {
        rows.push(("coercivity_passed".into(), c.passed.to_string()));
    }
    let mut out = String::from("key,value\n");
    for (k, v) in rows {
        out.push_str(&format!("{},{}\n", csv_field(&k), csv_field(&v)));
    }
    out
}

pub fn validate_csv(report: &ValidationReport) -> String {
    let mut out = String::from("severity,code,message\n");
    for f in &report.violations {
        out.push_str(&format!(
            "violation,{},{}\n",
            csv_field(&f.code),
            csv_field(&f.message)
        ));
    }
    for f in &report.warnings {
        out.push_str(&format!(
            "warning,{},{}\n",
            csv_field(&f.code),
            csv_field(&f.message)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery;
    use crate::problem::ExponentMap;

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    struct Wrap {
        #[serde(with = "ext_real")]
        x: f64,
    }

    #[test]
    fn extended_reals_round_trip() {
        for (v, text) in [
            (1.5, "1.5"),
            (f64::INFINITY, "\"inf\""),
            (f64::NEG_INFINITY, "\"-inf\""),
        ] {
            let json = serde_json::to_string(&Wrap { x: v }).unwrap();
            assert_eq!(json, format!("{{\"x\":{text}}}"));
            let back: Wrap = serde_json::from_str(&json).unwrap();
            assert_eq!(back.x, v);
        }
        let back: Wrap = serde_json::from_str("{\"x\":\"nan\"}").unwrap();
        assert!(back.x.is_nan());
        assert!(serde_json::from_str::<Wrap>("{\"x\":\"wat\"}").is_err());
        // An interval with an unbounded endpoint survives the round trip.
        let iv = ParameterInterval {
            lower: 0.0,
            upper: f64::INFINITY,
            nonempty: true,
            hypothesis_holds: true,
        };
        let json = serde_json::to_string(&iv).unwrap();
        assert!(json.contains("\"upper\":\"inf\""));
        let back: ParameterInterval = serde_json::from_str(&json).unwrap();
        assert_eq!(back.upper, f64::INFINITY);
    }

    #[test]
    fn document_envelope_separates_meta_from_body() {
        let doc = Document::new("theory", Some(42), None, vec![1.0, 2.0], Some(1_700_000_000));
        let json = doc.to_json().unwrap();
        assert!(json.contains("\"schema_version\": \"1\""));
        assert!(json.contains("\"generated_unix\": 1700000000"));
        assert!(json.contains("\"command\": \"theory\""));
        // Same body without the timestamp: the body block is unchanged.
        let doc2 = Document::new("theory", Some(42), None, vec![1.0, 2.0], None);
        let json2 = doc2.to_json().unwrap();
        assert!(!json2.contains("generated_unix"));
        let v1: serde_json::Value = serde_json::from_str(&json).unwrap();
        let v2: serde_json::Value = serde_json::from_str(&json2).unwrap();
        assert_eq!(v1["body"], v2["body"]);
    }

    #[test]
    fn theory_report_checks_the_constant_p_identity() {
        // Constant p = 2, T = 9, f(t) = t: A₀ = B⁰ = T/2 exactly, so the
        // embedding-form identity for the upper endpoint is testable.
        let inst = ProblemInstance::new(
            9,
            0.1,
            ExponentMap::from_constant(2.0, 9).unwrap(),
            gallery::power(2.0),
        )
        .unwrap();
        let report = theory_report(&inst, &TheoryOptions::default(), 1, false).unwrap();
        assert!((report.a0.value - 4.5).abs() < 1e-12);
        assert!((report.b0.value - 4.5).abs() < 1e-12);
        assert_eq!(report.checks.upper_equals_reciprocal_embedding_form, Some(true));
        assert!(report.interval_even_t.is_none()); // T odd
        // Hypothesis A₀ < κB⁰ fails here (κ = 0.2 < 1): reported, not hidden.
        assert!(!report.checks.hypothesis_main);
        assert!(!report.interval.nonempty);
        // Constants block sanity.
        assert!((report.constants.kappa - 0.2).abs() < 1e-15);
        assert!((report.constants.embedding_basic - 10f64.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn theory_report_on_even_t_adds_the_refined_interval() {
        let inst = ProblemInstance::new(
            4,
            0.1,
            ExponentMap::from_constant(2.0, 4).unwrap(),
            gallery::power(2.0),
        )
        .unwrap();
        let opts = TheoryOptions {
            sublevel_c: Some(0.1),
            sublevel_samples: 50,
            coercivity_radius: Some(10.0),
            coercivity_samples: 16,
            ..TheoryOptions::default()
        };
        let report = theory_report(&inst, &opts, 1, false).unwrap();
        let even = report.interval_even_t.expect("T = 4 is even");
        let base = report.interval_const_p.expect("constant exponent");
        assert!(even.upper >= base.upper);
        assert_eq!(report.checks.even_t_upper_not_below_const_p, Some(true));
        assert!(report.sublevel.is_some());
        assert!(report.sublevel_check.unwrap().ok);
        assert!(report.coercivity.unwrap().passed);
    }

    #[test]
    fn theory_report_flags_divergent_value_quotients() {
        let inst = gallery::example_instance(3.0, 2, 1.0).unwrap();
        let g = gallery::ExampleG::new(3.0, 7).unwrap();
        let opts = TheoryOptions {
            a0_probes: Some(g.recommended_a0_probes()),
            b0_probes: Some(g.recommended_b0_probes()),
            ..TheoryOptions::default()
        };
        let report = theory_report(&inst, &opts, 1, false).unwrap();
        assert!(report.b0.infinite);
        assert_eq!(report.interval.lower, 0.0);
        assert!(report.checks.hypothesis_main);
        assert!(report.checks.lambda_in_interval); // λ = 1 admissible
        assert!(report.notes.iter().any(|n| n.contains("diverges")));
        // With no explicit probes the family's recommended scales are used,
        // so the default report reaches the same conclusion (a dyadic ladder
        // would miss the factorial scales entirely).
        let by_default = theory_report(&inst, &TheoryOptions::default(), 1, false).unwrap();
        assert_eq!(by_default.interval.lower, report.interval.lower);
        assert_eq!(by_default.interval.upper, report.interval.upper);
        assert!(by_default.checks.hypothesis_main);
        assert!(by_default.notes.iter().any(|n| n.contains("recommended")));
        // JSON serialization of the whole document, infinities included.
        let doc = Document::new(
            "theory",
            Some(1),
            Some(InstanceBlock::from_instance(&inst)),
            &report,
            None,
        );
        let json = doc.to_json().unwrap();
        assert!(json.contains("\"value\": \"inf\""));
        assert!(json.contains("\"exact_hook\": true"));
    }

    #[test]
    fn csv_quoting_and_emitters() {
        assert_eq!(csv_field("plain"), "plain");
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
        let inst = gallery::example_instance(3.0, 2, 1.0).unwrap();
        let report = crate::solver::cascade(
            &inst,
            &[2f64.powi(-12)],
            &crate::solver::CascadeOptions::default(),
        )
        .unwrap();
        let csv = cascade_csv(&report);
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("level,c,"));
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.lines().nth(1).unwrap().contains("converged"));
        let tables = gallery::ExampleG::new(3.0, 7)
            .unwrap()
            .quotient_tables(4, 6)
            .unwrap();
        let csv = quotients_csv(&tables);
        assert_eq!(csv.lines().count(), 1 + 6); // header + 3 upper + 3 lower
    }
}

//! TOML run configuration.
//!
//! A config file describes one problem instance plus optional per-command
//! sections. Unknown keys are rejected everywhere, so typos fail loudly
//! instead of silently running with defaults:
//!
//! ```toml
//! t = 2
//! lambda = 1.0
//!
//! [exponents]
//! constant = 2.0          # or: values = [2.0, 3.0, 2.0, 3.0]
//!
//! [nonlinearity]
//! family = "power"        # linear | power | poly | example_esempio | theorem_intro
//! q = 3.0
//!
//! [solver]
//! tol = 1e-10
//!
//! [multistart]
//! starts = 64
//! radius = 1.0
//!
//! [cascade]
//! c_log2 = [-12, -60, -360]   # or: heights = [0.1, 0.01]
//!
//! [theory]
//! probes = 12
//!
//! [sweep]
//! lo = 0.05
//! hi = 0.5
//! count = 9
//! ```
//!
//! For the `example_esempio` family, `[exponents]` and `[cascade]` heights
//! may be omitted; the alternating `γ, γ-1` profile and the canonical
//! cascade heights are filled in.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::gallery::{self, GalleryError};
use crate::problem::{
    validate, ExponentMap, FamilyDescriptor, ProblemError, ProblemInstance,
};
use crate::report::TheoryOptions;
use crate::solver::{CascadeOptions, MultistartOptions, NewtonOptions};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("nonlinearity config: {0}")]
    Family(String),
    #[error("exponents config: {0}")]
    Exponents(String),
    #[error("missing config key: {0}")]
    Missing(String),
    #[error("sweep config: {0}")]
    Sweep(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Gallery(#[from] GalleryError),
}

/// Exponent map source: exactly one of `constant` / `values`.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExponentsSpec {
    pub constant: Option<f64>,
    pub values: Option<Vec<f64>>,
}

impl ExponentsSpec {
    fn build(&self, t: usize) -> Result<ExponentMap, ConfigError> {
        match (self.constant, &self.values) {
            (Some(_), Some(_)) => Err(ConfigError::Exponents(
                "give either `constant` or `values`, not both".to_string(),
            )),
            (Some(p), None) => Ok(ExponentMap::from_constant(p, t)?),
            (None, Some(values)) => Ok(ExponentMap::from_values(values.clone(), t)?),
            (None, None) => Err(ConfigError::Exponents(
                "give one of `constant` or `values`".to_string(),
            )),
        }
    }
}

/// Nonlinearity family selector plus its parameters, flat so that a TOML
/// table reads naturally (`family = "power"`, `q = 3.0`).
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub family: String,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub q: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub coeffs: Option<Vec<f64>>,
}

impl FamilySpec {
    /// Check the parameter set matches the family and fold it into a
    /// [`FamilyDescriptor`]. Range checks (q > 1, γ > 2, nonnegativity)
    /// happen later, when the descriptor is instantiated.
    pub fn descriptor(&self) -> Result<FamilyDescriptor, ConfigError> {
        let fam = self.family.as_str();
        if !gallery::catalog().contains(&fam) {
            return Err(ConfigError::Family(format!(
                "unknown family {fam:?}; available: {}",
                gallery::catalog().join(", ")
            )));
        }
        self.reject_foreign_params(fam)?;
        let missing = |key: &str| {
            ConfigError::Family(format!("family {fam:?} needs the `{key}` parameter"))
        };
        match fam {
            "linear" => {
                let c = self.c.ok_or_else(|| missing("c"))?;
                Ok(FamilyDescriptor::Linear { c })
            }
            "power" => {
                let q = self.q.ok_or_else(|| missing("q"))?;
                Ok(FamilyDescriptor::Power { q })
            }
            "poly" => {
                let coeffs = self.nonempty_coeffs(fam)?;
                Ok(FamilyDescriptor::Poly { coeffs })
            }
            "theorem_intro" => {
                let coeffs = self.nonempty_coeffs(fam)?;
                Ok(FamilyDescriptor::TheoremIntro { coeffs })
            }
            "example_esempio" => {
                let gamma = self.gamma.ok_or_else(|| missing("gamma"))?;
                Ok(FamilyDescriptor::ExampleEsempio { gamma })
            }
            _ => unreachable!("catalog is exhaustive"),
        }
    }

    fn nonempty_coeffs(&self, fam: &str) -> Result<Vec<f64>, ConfigError> {
        match &self.coeffs {
            Some(v) if !v.is_empty() => Ok(v.clone()),
            _ => Err(ConfigError::Family(format!(
                "family {fam:?} needs a nonempty `coeffs` list"
            ))),
        }
    }

    fn reject_foreign_params(&self, fam: &str) -> Result<(), ConfigError> {
        let allowed: &[&str] = match fam {
            "linear" => &["c"],
            "power" => &["q"],
            "poly" | "theorem_intro" => &["coeffs"],
            "example_esempio" => &["gamma"],
            _ => &[],
        };
        let provided = [
            ("c", self.c.is_some()),
            ("q", self.q.is_some()),
            ("gamma", self.gamma.is_some()),
            ("coeffs", self.coeffs.is_some()),
        ];
        for (key, present) in provided {
            if present && !allowed.contains(&key) {
                return Err(ConfigError::Family(format!(
                    "parameter `{key}` does not apply to family {fam:?}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultistartSection {
    pub starts: usize,
    pub radius: f64,
    pub rtol_distinct: f64,
}

impl Default for MultistartSection {
    fn default() -> Self {
        let base = MultistartOptions::default();
        MultistartSection {
            starts: base.starts,
            radius: base.radius,
            rtol_distinct: base.rtol_distinct,
        }
    }
}

impl MultistartSection {
    pub fn options(&self, newton: &NewtonOptions) -> MultistartOptions {
        MultistartOptions {
            starts: self.starts,
            radius: self.radius,
            newton: newton.clone(),
            rtol_distinct: self.rtol_distinct,
        }
    }
}

/// Cascade heights: exactly one of `c_log2` (powers of two, exact in f64)
/// or `heights` (literal values). The `example_esempio` family defaults to
/// the canonical `2^-12, 2^-60, 2^-360` chain when both are omitted.
#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CascadeSection {
    pub c_log2: Option<Vec<i32>>,
    pub heights: Option<Vec<f64>>,
    pub scan_budget: u32,
    pub rtol_distinct: f64,
}

impl Default for CascadeSection {
    fn default() -> Self {
        let base = CascadeOptions::default();
        CascadeSection {
            c_log2: None,
            heights: None,
            scan_budget: base.scan_budget,
            rtol_distinct: base.rtol_distinct,
        }
    }
}

/// Default `c_log2` chain used when an `example_esempio` config omits
/// cascade heights.
pub const EXAMPLE_C_LOG2: [i32; 3] = [-12, -60, -360];

impl CascadeSection {
    pub fn options(&self, newton: &NewtonOptions) -> CascadeOptions {
        CascadeOptions {
            newton: newton.clone(),
            scan_budget: self.scan_budget,
            rtol_distinct: self.rtol_distinct,
        }
    }

    /// Resolve the level heights, largest first as given.
    pub fn resolve_heights(&self, family: &FamilyDescriptor) -> Result<Vec<f64>, ConfigError> {
        match (&self.c_log2, &self.heights) {
            (Some(_), Some(_)) => Err(ConfigError::Missing(
                "give either `cascade.c_log2` or `cascade.heights`, not both".to_string(),
            )),
            (Some(exps), None) => Ok(exps.iter().map(|&i| 2f64.powi(i)).collect()),
            (None, Some(hs)) => Ok(hs.clone()),
            (None, None) => match family {
                FamilyDescriptor::ExampleEsempio { .. } => {
                    Ok(EXAMPLE_C_LOG2.iter().map(|&i| 2f64.powi(i)).collect())
                }
                _ => Err(ConfigError::Missing(
                    "cascade heights: set `cascade.c_log2` or `cascade.heights`".to_string(),
                )),
            },
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Explicit λ grid; overrides everything else.
    pub lambdas: Option<Vec<f64>>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub count: usize,
    pub log_spaced: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            lambdas: None,
            lo: None,
            hi: None,
            count: 9,
            log_spaced: true,
        }
    }
}

impl SweepSection {
    /// Resolve the λ grid. `hint` is an admissible open interval
    /// `(lower, upper)` from the theory estimates, when one is available;
    /// either end may be infinite or degenerate and the grid then backs
    /// off to a decade around the finite end (or `[0.01, 1]` with no
    /// usable hint at all).
    pub fn resolve_lambdas(&self, hint: Option<(f64, f64)>) -> Result<Vec<f64>, ConfigError> {
        if let Some(lambdas) = &self.lambdas {
            if lambdas.is_empty() {
                return Err(ConfigError::Sweep("`lambdas` must be nonempty".to_string()));
            }
            for &l in lambdas {
                if !l.is_finite() || l <= 0.0 {
                    return Err(ConfigError::Sweep(format!(
                        "`lambdas` entries must be positive and finite, got {l}"
                    )));
                }
            }
            return Ok(lambdas.clone());
        }
        if self.count < 1 {
            return Err(ConfigError::Sweep("`count` must be at least 1".to_string()));
        }
        let (lo, hi) = match (self.lo, self.hi) {
            (Some(lo), Some(hi)) => (lo, hi),
            (Some(_), None) | (None, Some(_)) => {
                return Err(ConfigError::Sweep(
                    "give both `lo` and `hi`, or neither".to_string(),
                ))
            }
            (None, None) => Self::grid_from_hint(hint),
        };
        if !lo.is_finite() || !hi.is_finite() || lo <= 0.0 || hi <= lo {
            return Err(ConfigError::Sweep(format!(
                "need 0 < lo < hi with both finite, got lo = {lo}, hi = {hi}"
            )));
        }
        if self.count == 1 {
            return Ok(vec![lo]);
        }
        let n = self.count;
        let grid = (0..n)
            .map(|i| {
                // Endpoints exact; exp(ln x) alone drifts by an ulp.
                if i == 0 {
                    return lo;
                }
                if i == n - 1 {
                    return hi;
                }
                let s = i as f64 / (n - 1) as f64;
                if self.log_spaced {
                    (lo.ln() + s * (hi.ln() - lo.ln())).exp()
                } else {
                    lo + s * (hi - lo)
                }
            })
            .collect();
        Ok(grid)
    }

    /// Back off from an open interval to a closed grid strictly inside it.
    fn grid_from_hint(hint: Option<(f64, f64)>) -> (f64, f64) {
        const INSET: f64 = 0.01;
        match hint {
            Some((lower, upper)) => {
                let lower_usable = lower.is_finite() && lower > 0.0;
                let upper_usable = upper.is_finite() && upper > 0.0;
                match (lower_usable, upper_usable) {
                    (true, true) => ((1.0 + INSET) * lower, (1.0 - INSET) * upper),
                    (false, true) => (upper / 1000.0, (1.0 - INSET) * upper),
                    (true, false) => ((1.0 + INSET) * lower, 1000.0 * lower),
                    (false, false) => (0.01, 1.0),
                }
            }
            None => (0.01, 1.0),
        }
    }
}

/// One fully parsed run configuration.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub t: usize,
    pub lambda: f64,
    /// Optional only for `example_esempio`, which has a canonical
    /// alternating profile.
    #[serde(default)]
    pub exponents: Option<ExponentsSpec>,
    pub nonlinearity: FamilySpec,
    #[serde(default)]
    pub solver: NewtonOptions,
    #[serde(default)]
    pub multistart: MultistartSection,
    #[serde(default)]
    pub cascade: CascadeSection,
    #[serde(default)]
    pub theory: TheoryOptions,
    #[serde(default)]
    pub sweep: SweepSection,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Instantiate the problem this config describes.
    pub fn build_instance(&self) -> Result<ProblemInstance, ConfigError> {
        let descriptor = self.nonlinearity.descriptor()?;
        let nonlinearity = gallery::from_descriptor(&descriptor)?;
        let exponents = self.build_exponents(&descriptor)?;
        Ok(ProblemInstance::new(
            self.t,
            self.lambda,
            exponents,
            nonlinearity,
        )?)
    }

    fn build_exponents(&self, descriptor: &FamilyDescriptor) -> Result<ExponentMap, ConfigError> {
        match (&self.exponents, descriptor) {
            (Some(spec), _) => spec.build(self.t),
            (None, FamilyDescriptor::ExampleEsempio { gamma }) => {
                Ok(gallery::alternating_profile(*gamma, self.t)?)
            }
            (None, _) => Err(ConfigError::Missing(
                "an [exponents] table (only `example_esempio` has a default profile)".to_string(),
            )),
        }
    }

    pub fn multistart_options(&self) -> MultistartOptions {
        self.multistart.options(&self.solver)
    }

    pub fn cascade_options(&self) -> CascadeOptions {
        self.cascade.options(&self.solver)
    }

    /// Cascade heights resolved against the configured family.
    pub fn cascade_heights(&self) -> Result<Vec<f64>, ConfigError> {
        self.cascade.resolve_heights(&self.nonlinearity.descriptor()?)
    }
}

pub fn load_run_config(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    RunConfig::from_toml_str(&text)
}

/// Load a config file and build its instance, returning validation
/// warnings (`code: message`) alongside. Hard violations surface as
/// construction errors; warnings flag instances that run but sit outside
/// what the multiplicity theory covers.
pub fn load_instance(path: impl AsRef<Path>) -> Result<(ProblemInstance, Vec<String>), ConfigError> {
    let config = load_run_config(path)?;
    let instance = config.build_instance()?;
    let report = validate(&instance);
    let warnings = report
        .warnings
        .iter()
        .map(|w| format!("{}: {}", w.code, w.message))
        .collect();
    Ok((instance, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
        t = 2
        lambda = 1.0

        [exponents]
        values = [3.0, 2.0, 3.0, 2.0]

        [nonlinearity]
        family = "example_esempio"
        gamma = 3.0

        [solver]
        tol = 1e-9
        max_iter = 50

        [multistart]
        starts = 16
        radius = 0.5

        [cascade]
        c_log2 = [-12, -60]

        [theory]
        probes = 8

        [sweep]
        lo = 0.1
        hi = 0.9
        count = 3
        log_spaced = false
    "#;

    #[test]
    fn full_config_parses_and_builds() {
        let config = RunConfig::from_toml_str(FULL).unwrap();
        assert_eq!(config.t, 2);
        assert_eq!(config.solver.tol, 1e-9);
        assert_eq!(config.solver.max_iter, 50);
        // Unset solver keys keep their defaults.
        assert_eq!(config.solver.max_backtracks, NewtonOptions::default().max_backtracks);
        assert_eq!(config.multistart.starts, 16);
        assert_eq!(config.theory.probes, 8);

        let instance = config.build_instance().unwrap();
        assert_eq!(instance.t, 2);
        assert_eq!(instance.exponents.values(), &[3.0, 2.0, 3.0, 2.0]);
        assert_eq!(instance.p_minus(), 2.0);
        assert_eq!(instance.p_plus(), 3.0);

        let heights = config.cascade_heights().unwrap();
        assert_eq!(heights, vec![2f64.powi(-12), 2f64.powi(-60)]);

        let lambdas = config.sweep.resolve_lambdas(None).unwrap();
        assert_eq!(lambdas, vec![0.1, 0.5, 0.9]);

        let ms = config.multistart_options();
        assert_eq!(ms.starts, 16);
        assert_eq!(ms.newton.tol, 1e-9);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let top = "t = 2\nlambda = 1.0\nbogus = 3\n\n[nonlinearity]\nfamily = \"linear\"\nc = 1.0\n";
        assert!(matches!(
            RunConfig::from_toml_str(top),
            Err(ConfigError::Parse(_))
        ));

        let nested = r#"
            t = 2
            lambda = 1.0
            [nonlinearity]
            family = "linear"
            c = 1.0
            [solver]
            tolerance = 1e-8
        "#;
        assert!(matches!(
            RunConfig::from_toml_str(nested),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn family_parameter_mismatches() {
        let spec = FamilySpec {
            family: "linear".to_string(),
            c: Some(1.0),
            q: Some(3.0),
            gamma: None,
            coeffs: None,
        };
        let err = spec.descriptor().unwrap_err();
        assert!(err.to_string().contains("`q` does not apply"));

        let spec = FamilySpec {
            family: "power".to_string(),
            c: None,
            q: None,
            gamma: None,
            coeffs: None,
        };
        let err = spec.descriptor().unwrap_err();
        assert!(err.to_string().contains("needs the `q` parameter"));

        let spec = FamilySpec {
            family: "warp".to_string(),
            c: None,
            q: None,
            gamma: None,
            coeffs: None,
        };
        let err = spec.descriptor().unwrap_err();
        assert!(err.to_string().contains("available: linear, power"));

        let spec = FamilySpec {
            family: "poly".to_string(),
            c: None,
            q: None,
            gamma: None,
            coeffs: Some(vec![]),
        };
        assert!(spec.descriptor().is_err());
    }

    #[test]
    fn exponents_spec_must_be_exactly_one() {
        let both = ExponentsSpec {
            constant: Some(2.0),
            values: Some(vec![2.0; 4]),
        };
        assert!(matches!(both.build(2), Err(ConfigError::Exponents(_))));

        let neither = ExponentsSpec::default();
        assert!(matches!(neither.build(2), Err(ConfigError::Exponents(_))));

        let wrong_len = ExponentsSpec {
            constant: None,
            values: Some(vec![2.0; 3]),
        };
        assert!(matches!(wrong_len.build(2), Err(ConfigError::Problem(_))));
    }

    #[test]
    fn exponents_default_only_for_example_family() {
        let toml = r#"
            t = 2
            lambda = 1.0
            [nonlinearity]
            family = "example_esempio"
            gamma = 3.0
        "#;
        let config = RunConfig::from_toml_str(toml).unwrap();
        let instance = config.build_instance().unwrap();
        assert_eq!(instance.exponents.values(), &[3.0, 2.0, 3.0, 2.0]);
        // Heights also default for this family.
        let heights = config.cascade_heights().unwrap();
        assert_eq!(
            heights,
            vec![2f64.powi(-12), 2f64.powi(-60), 2f64.powi(-360)]
        );

        let toml = r#"
            t = 2
            lambda = 1.0
            [nonlinearity]
            family = "power"
            q = 3.0
        "#;
        let config = RunConfig::from_toml_str(toml).unwrap();
        assert!(matches!(
            config.build_instance(),
            Err(ConfigError::Missing(_))
        ));
        assert!(matches!(
            config.cascade_heights(),
            Err(ConfigError::Missing(_))
        ));
    }

    #[test]
    fn out_of_range_family_parameters_fail_at_build() {
        let toml = r#"
            t = 2
            lambda = 1.0
            [exponents]
            constant = 2.0
            [nonlinearity]
            family = "power"
            q = 0.5
        "#;
        let config = RunConfig::from_toml_str(toml).unwrap();
        assert!(matches!(
            config.build_instance(),
            Err(ConfigError::Gallery(_))
        ));

        let toml = r#"
            t = 2
            lambda = 1.0
            [nonlinearity]
            family = "example_esempio"
            gamma = 1.5
        "#;
        let config = RunConfig::from_toml_str(toml).unwrap();
        assert!(config.build_instance().is_err());
    }

    #[test]
    fn cascade_heights_exclusive() {
        let mut section = CascadeSection::default();
        section.c_log2 = Some(vec![-4]);
        section.heights = Some(vec![0.25]);
        let desc = FamilyDescriptor::Linear { c: 1.0 };
        assert!(section.resolve_heights(&desc).is_err());

        section.c_log2 = None;
        assert_eq!(section.resolve_heights(&desc).unwrap(), vec![0.25]);
    }

    #[test]
    fn sweep_resolution_rules() {
        // Explicit grid wins.
        let explicit = SweepSection {
            lambdas: Some(vec![0.3, 0.1]),
            ..Default::default()
        };
        assert_eq!(
            explicit.resolve_lambdas(Some((0.0, 1.0))).unwrap(),
            vec![0.3, 0.1]
        );

        let bad = SweepSection {
            lambdas: Some(vec![0.3, -0.1]),
            ..Default::default()
        };
        assert!(bad.resolve_lambdas(None).is_err());

        // Finite two-sided hint: grid strictly inside the open interval.
        let section = SweepSection {
            count: 5,
            ..Default::default()
        };
        let grid = section.resolve_lambdas(Some((0.2, 2.0))).unwrap();
        assert_eq!(grid.len(), 5);
        assert!(grid[0] > 0.2 && grid[4] < 2.0);
        assert!(grid.windows(2).all(|w| w[0] < w[1]));

        // Lower end unusable: back off three decades from the upper end.
        let grid = section.resolve_lambdas(Some((0.0, 2.0))).unwrap();
        assert!((grid[0] - 2e-3).abs() < 1e-12);
        assert!(grid[4] < 2.0);

        // Upper end infinite: one-sided decade expansion.
        let grid = section
            .resolve_lambdas(Some((0.5, f64::INFINITY)))
            .unwrap();
        assert!(grid[0] > 0.5);
        assert!((grid[4] - 500.0).abs() < 1e-9);

        // No usable hint at all.
        let grid = section.resolve_lambdas(None).unwrap();
        assert_eq!(grid[0], 0.01);
        assert_eq!(grid[4], 1.0);

        // Log spacing: equal ratios.
        let r1 = grid[1] / grid[0];
        let r2 = grid[2] / grid[1];
        assert!((r1 - r2).abs() < 1e-12 * r1);

        // count = 1 pins the low end.
        let single = SweepSection {
            count: 1,
            ..Default::default()
        };
        assert_eq!(single.resolve_lambdas(None).unwrap(), vec![0.01]);

        // lo without hi is an error.
        let half = SweepSection {
            lo: Some(0.1),
            ..Default::default()
        };
        assert!(half.resolve_lambdas(None).is_err());
    }

    #[test]
    fn file_round_trip_and_warnings() {
        let path = std::env::temp_dir().join(format!(
            "aniso-config-test-{}.toml",
            std::process::id()
        ));
        let toml = r#"
            t = 1
            lambda = 0.5
            [exponents]
            constant = 2.0
            [nonlinearity]
            family = "linear"
            c = 1.0
        "#;
        fs::write(&path, toml).unwrap();
        let (instance, warnings) = load_instance(&path).unwrap();
        fs::remove_file(&path).unwrap();
        assert_eq!(instance.t, 1);
        assert_eq!(instance.lambda, 0.5);
        assert!(warnings.iter().any(|w| w.starts_with("t_outside_scope:")));

        let missing = load_run_config("/nonexistent/aniso.toml");
        assert!(matches!(missing, Err(ConfigError::Io { .. })));
    }
}

//! Problem parameters: the damping coefficient, the predicted rates and the
//! run configuration shared by every pipeline.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::discretization::MassScheme;
use crate::error::{Error, Result};
use crate::evolution::InitialKind;
use crate::resolvent::{Sampling, Spacing};

/// Damping coefficient `b(x)`: zero on `[-1, 0]`, `x^alpha` on `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampingProfile {
    alpha: f64,
}

impl DampingProfile {
    /// Left end of the damped region.
    pub const SUPPORT_START: f64 = 0.0;
    /// Spatial domain of the string.
    pub const DOMAIN: (f64, f64) = (-1.0, 1.0);

    pub fn new(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `b(x)`, rejecting points outside `[-1, 1]`.
    pub fn value(&self, x: f64) -> Result<f64> {
        let (lo, hi) = Self::DOMAIN;
        if !(lo..=hi).contains(&x) {
            return Err(Error::invalid(format!("x={x} outside [-1,1]")));
        }
        Ok(self.value_unchecked(x))
    }

    pub(crate) fn value_unchecked(&self, x: f64) -> f64 {
        if x <= Self::SUPPORT_START {
            0.0
        } else {
            x.powf(self.alpha)
        }
    }
}

pub fn damping_value(profile: &DampingProfile, x: f64) -> Result<f64> {
    profile.value(x)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && (0.0..1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::invalid(format!("alpha out of [0,1) (got {alpha})")))
    }
}

/// Closed-form exponents for a given `alpha`.
///
/// `theta` is the growth exponent of the resolvent norm along the imaginary
/// axis, `decay_order = 1/theta` the polynomial decay order of the norm of
/// solutions with data in the generator's domain, and `prior_order` the
/// order of the previously best known estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePrediction {
    pub theta: f64,
    pub decay_order: f64,
    pub prior_order: f64,
}

pub fn predict_rates(alpha: f64) -> Result<RatePrediction> {
    check_alpha(alpha)?;
    Ok(RatePrediction {
        theta: (1.0 - alpha) / (2.0 - alpha),
        decay_order: (2.0 - alpha) / (1.0 - alpha),
        prior_order: (3.0 - alpha) / (2.0 * (1.0 - alpha)),
    })
}

/// One violated configuration invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl ConfigError {
    fn new(field: &'static str, message: impl Into<String>) -> Self {
        Self {
            field,
            message: message.into(),
        }
    }
}

/// Fully resolved run configuration.
///
/// Serialized field names are the keys accepted in JSON config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub alpha: f64,
    pub n_elements: usize,
    pub grading: f64,
    pub dt: f64,
    pub t_final: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub omega_points: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub mass: MassScheme,
    /// `omega_cap = n_elements / cap_factor`.
    pub cap_factor: f64,
    pub spacing: Spacing,
    pub sampling: Sampling,
    /// Grid step used when locating resonance peaks.
    pub resolution: f64,
    pub initial: InitialKind,
    pub sample_every: usize,
    pub t_lo: f64,
    pub t_hi: Option<f64>,
}

/// Partially specified configuration, as read from a config file or the
/// command line. [`validate_config`] turns it into a [`RunConfig`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub alpha: Option<f64>,
    pub n_elements: Option<usize>,
    pub grading: Option<f64>,
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
    pub omega_min: Option<f64>,
    pub omega_max: Option<f64>,
    pub omega_points: Option<usize>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub mass: Option<MassScheme>,
    pub cap_factor: Option<f64>,
    pub spacing: Option<Spacing>,
    pub sampling: Option<Sampling>,
    pub resolution: Option<f64>,
    pub initial: Option<InitialKind>,
    pub sample_every: Option<usize>,
    pub t_lo: Option<f64>,
    pub t_hi: Option<f64>,
}

macro_rules! merge_fields {
    ($base:ident, $top:ident; $($f:ident),*) => {
        ConfigOverrides { $($f: $top.$f.or($base.$f)),* }
    };
}

impl ConfigOverrides {
    /// Values in `top` win over values in `self`.
    pub fn merged_with(self, top: ConfigOverrides) -> ConfigOverrides {
        let base = self;
        merge_fields!(base, top; alpha, n_elements, grading, dt, t_final, omega_min,
            omega_max, omega_points, seed, output_dir, mass, cap_factor, spacing,
            sampling, resolution, initial, sample_every, t_lo, t_hi)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub const DEFAULT_CAP_FACTOR: f64 = 10.0;

/// Fill defaults and check every invariant of [`RunConfig`].
///
/// `required` names fields that have no default for the caller (for example
/// `alpha` for the simulation pipelines). All violations are collected.
pub fn validate_config(
    partial: &ConfigOverrides,
    required: &[&'static str],
) -> std::result::Result<RunConfig, Vec<ConfigError>> {
    let mut errors = Vec::new();
    let present = |name: &str| -> bool {
        match name {
            "alpha" => partial.alpha.is_some(),
            "n_elements" => partial.n_elements.is_some(),
            "dt" => partial.dt.is_some(),
            "t_final" => partial.t_final.is_some(),
            "omega_min" => partial.omega_min.is_some(),
            "omega_max" => partial.omega_max.is_some(),
            "omega_points" => partial.omega_points.is_some(),
            "output_dir" => partial.output_dir.is_some(),
            _ => true,
        }
    };
    for &name in required {
        if !present(name) {
            errors.push(ConfigError::new(name, format!("missing required field `{name}`")));
        }
    }

    let n_elements = partial.n_elements.unwrap_or(256);
    let cap_factor = partial.cap_factor.unwrap_or(DEFAULT_CAP_FACTOR);
    let omega_max = partial
        .omega_max
        .unwrap_or_else(|| (n_elements as f64 / cap_factor).min(100.0));
    // Coarse meshes have a cap below the usual lower end of 10.
    let omega_min = partial
        .omega_min
        .unwrap_or(if omega_max > 10.0 { 10.0 } else { omega_max / 10.0 });
    let config = RunConfig {
        alpha: partial.alpha.unwrap_or(0.0),
        n_elements,
        grading: partial.grading.unwrap_or(1.0),
        dt: partial.dt.unwrap_or(1e-3),
        t_final: partial.t_final.unwrap_or(100.0),
        omega_min,
        omega_max,
        omega_points: partial.omega_points.unwrap_or(100),
        seed: partial.seed.unwrap_or(0),
        output_dir: partial.output_dir.clone().unwrap_or_else(|| PathBuf::from("out")),
        mass: partial.mass.unwrap_or_default(),
        cap_factor,
        spacing: partial.spacing.unwrap_or_default(),
        sampling: partial.sampling.unwrap_or_default(),
        resolution: partial.resolution.unwrap_or(0.25),
        initial: partial.initial.unwrap_or(InitialKind::GraphNormalized),
        sample_every: partial.sample_every.unwrap_or(100),
        t_lo: partial.t_lo.unwrap_or(10.0),
        t_hi: partial.t_hi,
    };
    if let Err(mut more) = config.validate() {
        errors.append(&mut more);
    }
    if errors.is_empty() {
        Ok(config)
    } else {
        Err(errors)
    }
}

fn positive(value: f64) -> bool {
    value.is_finite() && value > 0.0
}

impl RunConfig {
    pub fn validate(&self) -> std::result::Result<(), Vec<ConfigError>> {
        let mut errors = Vec::new();
        let mut check = |ok: bool, field: &'static str, message: String| {
            if !ok {
                errors.push(ConfigError::new(field, message));
            }
        };
        check(
            self.alpha.is_finite() && (0.0..1.0).contains(&self.alpha),
            "alpha",
            format!("alpha out of [0,1) (got {})", self.alpha),
        );
        check(
            self.n_elements >= 2,
            "n_elements",
            format!("n_elements must be at least 2 (got {})", self.n_elements),
        );
        check(
            self.n_elements % 2 == 0,
            "n_elements",
            format!("n_elements must be even (got {})", self.n_elements),
        );
        check(
            self.grading.is_finite() && self.grading >= 1.0,
            "grading",
            format!("grading must be >= 1 (got {})", self.grading),
        );
        check(positive(self.dt), "dt", format!("dt must be > 0 (got {})", self.dt));
        check(
            positive(self.t_final),
            "t_final",
            format!("t_final must be > 0 (got {})", self.t_final),
        );
        check(
            positive(self.omega_min),
            "omega_min",
            format!("omega_min must be > 0 (got {})", self.omega_min),
        );
        check(
            positive(self.omega_max),
            "omega_max",
            format!("omega_max must be > 0 (got {})", self.omega_max),
        );
        check(
            self.omega_min < self.omega_max,
            "omega_max",
            format!(
                "omega_min must be < omega_max (got {} >= {})",
                self.omega_min, self.omega_max
            ),
        );
        check(
            self.omega_points >= 1,
            "omega_points",
            "omega_points must be positive".to_string(),
        );
        check(
            positive(self.cap_factor),
            "cap_factor",
            format!("cap_factor must be > 0 (got {})", self.cap_factor),
        );
        check(
            positive(self.resolution),
            "resolution",
            format!("resolution must be > 0 (got {})", self.resolution),
        );
        check(
            self.sample_every >= 1,
            "sample_every",
            "sample_every must be positive".to_string(),
        );
        check(
            positive(self.t_lo),
            "t_lo",
            format!("t_lo must be > 0 (got {})", self.t_lo),
        );
        if let Some(t_hi) = self.t_hi {
            check(
                t_hi.is_finite() && t_hi > self.t_lo,
                "t_hi",
                format!("t_hi must exceed t_lo (got {t_hi} <= {})", self.t_lo),
            );
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }

    pub fn profile(&self) -> Result<DampingProfile> {
        DampingProfile::new(self.alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn damping_values() {
        let p = DampingProfile::new(0.5).unwrap();
        assert_abs_diff_eq!(damping_value(&p, 0.25).unwrap(), 0.5, epsilon = 1e-15);
        let p = DampingProfile::new(0.7).unwrap();
        assert_eq!(damping_value(&p, -0.5).unwrap(), 0.0);
        assert_eq!(damping_value(&p, 0.0).unwrap(), 0.0);
        let p = DampingProfile::new(0.0).unwrap();
        assert_eq!(damping_value(&p, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn damping_domain_violation() {
        let p = DampingProfile::new(0.5).unwrap();
        assert!(matches!(p.value(1.5), Err(Error::InvalidInput(_))));
        assert!(matches!(p.value(-1.01), Err(Error::InvalidInput(_))));
        assert!(p.value(1.0).is_ok());
        assert!(p.value(-1.0).is_ok());
    }

    #[test]
    fn alpha_range() {
        assert!(DampingProfile::new(1.0).is_err());
        assert!(DampingProfile::new(-0.1).is_err());
        assert!(DampingProfile::new(f64::NAN).is_err());
        assert!(predict_rates(1.0).is_err());
    }

    #[test]
    fn rate_examples() {
        let r = predict_rates(0.0).unwrap();
        assert_abs_diff_eq!(r.theta, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r.decay_order, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.prior_order, 1.5, epsilon = 1e-15);

        let r = predict_rates(0.5).unwrap();
        assert_abs_diff_eq!(r.theta, 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.decay_order, 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.prior_order, 2.5, epsilon = 1e-15);

        let r = predict_rates(0.75).unwrap();
        assert_abs_diff_eq!(r.theta, 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(r.decay_order, 5.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r.prior_order, 4.5, epsilon = 1e-14);
    }

    #[test]
    fn rate_grid_properties() {
        for i in 0..100 {
            let alpha = i as f64 / 100.0;
            let r = predict_rates(alpha).unwrap();
            assert!(r.decay_order > r.prior_order);
            assert_abs_diff_eq!(r.decay_order - r.prior_order, 0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(r.theta * r.decay_order, 1.0, epsilon = 1e-15);
        }
        let near_one = predict_rates(1.0 - 1e-9).unwrap();
        assert!(near_one.decay_order > 1e8);
    }

    #[test]
    fn damping_is_monotone_on_right_half() {
        for &alpha in &[0.0, 0.1, 0.5, 0.99] {
            let p = DampingProfile::new(alpha).unwrap();
            let mut prev = 0.0;
            for i in 0..=1000 {
                let v = p.value(i as f64 / 1000.0).unwrap();
                assert!(v >= prev && v <= 1.0);
                prev = v;
            }
        }
    }

    fn well_formed() -> ConfigOverrides {
        ConfigOverrides {
            alpha: Some(0.5),
            n_elements: Some(128),
            ..Default::default()
        }
    }

    #[test]
    fn config_accepts_well_formed_and_fills_defaults() {
        let c = validate_config(&well_formed(), &["alpha", "n_elements"]).unwrap();
        assert_eq!(c.grading, 1.0);
        assert_eq!(c.seed, 0);
        assert_eq!(c.n_elements, 128);
        assert_eq!(c.omega_max, 12.8);
    }

    #[test]
    fn config_rejects_alpha_one() {
        let mut p = well_formed();
        p.alpha = Some(1.0);
        let errs = validate_config(&p, &[]).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].field, "alpha");
        assert!(errs[0].message.contains("alpha out of [0,1)"));
    }

    #[test]
    fn config_rejects_odd_elements() {
        let mut p = well_formed();
        p.n_elements = Some(7);
        let errs = validate_config(&p, &[]).unwrap_err();
        assert!(errs.iter().any(|e| e.message.contains("n_elements must be even")));
    }

    #[test]
    fn config_collects_every_violation() {
        let p = ConfigOverrides {
            alpha: Some(2.0),
            n_elements: Some(7),
            dt: Some(-1.0),
            omega_min: Some(50.0),
            omega_max: Some(20.0),
            ..Default::default()
        };
        let errs = validate_config(&p, &[]).unwrap_err();
        let fields: Vec<_> = errs.iter().map(|e| e.field).collect();
        assert!(fields.contains(&"alpha"));
        assert!(fields.contains(&"n_elements"));
        assert!(fields.contains(&"dt"));
        assert!(fields.contains(&"omega_max"));
    }

    #[test]
    fn config_missing_required() {
        let errs = validate_config(&ConfigOverrides::default(), &["alpha"]).unwrap_err();
        assert_eq!(errs[0].field, "alpha");
        assert!(errs[0].message.contains("missing"));
    }

    #[test]
    fn overrides_merge_and_parse() {
        let file = ConfigOverrides::from_json(r#"{"alpha": 0.25, "n_elements": 64}"#).unwrap();
        let flags = ConfigOverrides {
            n_elements: Some(32),
            ..Default::default()
        };
        let merged = file.merged_with(flags);
        assert_eq!(merged.alpha, Some(0.25));
        assert_eq!(merged.n_elements, Some(32));
        assert!(ConfigOverrides::from_json(r#"{"alpah": 0.25}"#).is_err());
    }
}

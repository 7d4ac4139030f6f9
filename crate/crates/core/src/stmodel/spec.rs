use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Smoothness triple (α_t, α_s, α_e) = (1, 0, 2).
    #[serde(alias = "separable")]
    Separable102,
    /// Smoothness triple (α_t, α_s, α_e) = (1, 2, 1).
    #[serde(alias = "nonseparable", alias = "non_separable")]
    NonSeparable121,
}

impl ModelKind {
    pub fn alpha(self) -> (f64, f64, f64) {
        match self {
            ModelKind::Separable102 => (1.0, 0.0, 2.0),
            ModelKind::NonSeparable121 => (1.0, 2.0, 1.0),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Separable102 => "separable",
            ModelKind::NonSeparable121 => "nonseparable",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "separable" | "separable102" | "sep" => Ok(ModelKind::Separable102),
            "nonseparable" | "non_separable" | "nonseparable121" | "nonsep" => {
                Ok(ModelKind::NonSeparable121)
            }
            other => Err(Error::InvalidParameter(format!(
                "unknown model kind '{other}'"
            ))),
        }
    }
}

/// How the temporal range of the separable model maps to a correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalRangeConvention {
    /// Corr(h) = exp(−h/r_t), so the lag-1 correlation is exp(−1/r_t).
    #[default]
    Exponential,
    /// Corr(h) = exp(−γ h) with the √(8ν_t) range convention, i.e. exp(−2h/r_t).
    Matern,
}

impl TemporalRangeConvention {
    pub fn correlation(self, lag: f64, range_t: f64) -> f64 {
        match self {
            TemporalRangeConvention::Exponential => (-lag.abs() / range_t).exp(),
            TemporalRangeConvention::Matern => (-2.0 * lag.abs() / range_t).exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Stationary marginal variance averaged over the window nodes.
    pub sigma2: f64,
    pub range_s: f64,
    pub range_t: f64,
    pub tau_eps: f64,
    #[serde(default)]
    pub convention: TemporalRangeConvention,
}

impl ModelSpec {
    pub fn new(
        kind: ModelKind,
        sigma2: f64,
        range_s: f64,
        range_t: f64,
        tau_eps: f64,
    ) -> Result<Self> {
        let m = Self {
            kind,
            sigma2,
            range_s,
            range_t,
            tau_eps,
            convention: TemporalRangeConvention::default(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma2", self.sigma2),
            ("range_s", self.range_s),
            ("range_t", self.range_t),
            ("tau_eps", self.tau_eps),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn alpha(&self) -> (f64, f64, f64) {
        self.kind.alpha()
    }

    /// Log-scale hyperparameter vector (σ², r_s, r_t, τ_ε).
    pub fn theta(&self) -> [f64; 4] {
        [
            self.sigma2.ln(),
            self.range_s.ln(),
            self.range_t.ln(),
            self.tau_eps.ln(),
        ]
    }

    pub fn with_theta(&self, theta: &[f64; 4]) -> Self {
        Self {
            sigma2: theta[0].exp(),
            range_s: theta[1].exp(),
            range_t: theta[2].exp(),
            tau_eps: theta[3].exp(),
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams {
    pub gamma_s: f64,
    pub gamma_t: f64,
    /// Continuum value from the variance identity; the discrete builders
    /// normalise the variance numerically instead.
    pub gamma_e: f64,
}

/// Overall smoothness α = α_e + α_s(α_t − ½).
pub fn total_smoothness(alpha: (f64, f64, f64)) -> f64 {
    let (at, as_, ae) = alpha;
    ae + as_ * (at - 0.5)
}

/// Spatial smoothness ν_s = α − d/2.
pub fn spatial_smoothness(alpha: (f64, f64, f64), d: usize) -> f64 {
    total_smoothness(alpha) - d as f64 / 2.0
}

fn gamma_fn(x: f64) -> f64 {
    libm::tgamma(x)
}

pub fn to_scale_params(m: &ModelSpec, d: usize) -> ScaleParams {
    let alpha = m.alpha();
    let (at, as_, _) = alpha;
    let a = total_smoothness(alpha);
    let nu_s = a - d as f64 / 2.0;
    let gamma_s = (8.0 * nu_s).sqrt() / m.range_s;
    let gamma_t = m.range_t * gamma_s.powf(as_) / (8.0 * (at - 0.5)).sqrt();
    let c_t = gamma_fn(at - 0.5) / (gamma_fn(at) * (4.0 * PI).sqrt());
    let c_s = gamma_fn(a - d as f64 / 2.0) / (gamma_fn(a) * (4.0 * PI).powf(d as f64 / 2.0));
    let gamma_e = (c_t * c_s / (m.sigma2 * gamma_t * gamma_s.powf(2.0 * a - d as f64))).sqrt();
    ScaleParams {
        gamma_s,
        gamma_t,
        gamma_e,
    }
}

/// β_s = 1 − α_e / (ν_s + d/2).
pub fn nonseparability_beta(alpha: (f64, f64, f64), d: usize) -> f64 {
    let nu_s = spatial_smoothness(alpha, d);
    1.0 - alpha.2 / (nu_s + d as f64 / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spatial_scale() {
        let m = ModelSpec::new(ModelKind::Separable102, 0.25, 0.2, 1.0, 1.0).unwrap();
        let s = to_scale_params(&m, 2);
        assert!((s.gamma_s - 14.142135623730951).abs() < 1e-12);
        assert!((s.gamma_t - 0.5).abs() < 1e-15);
    }

    #[test]
    fn nonseparable_temporal_scale() {
        let r_s = 8f64.sqrt() / 200f64.sqrt();
        let m = ModelSpec::new(ModelKind::NonSeparable121, 0.25, r_s, 2.0, 1.0).unwrap();
        let s = to_scale_params(&m, 2);
        assert!((s.gamma_s * s.gamma_s - 200.0).abs() < 1e-9);
        assert!((s.gamma_t - 200.0).abs() < 1e-9);
    }

    #[test]
    fn both_kinds_share_spatial_smoothness() {
        assert_eq!(spatial_smoothness(ModelKind::Separable102.alpha(), 2), 1.0);
        assert_eq!(
            spatial_smoothness(ModelKind::NonSeparable121.alpha(), 2),
            1.0
        );
    }

    #[test]
    fn beta_values() {
        assert_eq!(
            nonseparability_beta(ModelKind::Separable102.alpha(), 2),
            0.0
        );
        assert_eq!(
            nonseparability_beta(ModelKind::NonSeparable121.alpha(), 2),
            0.5
        );
        assert_eq!(nonseparability_beta((1.0, 2.0, 0.0), 2), 1.0);
    }

    #[test]
    fn analytic_noise_scale_is_positive() {
        let m = ModelSpec::new(ModelKind::NonSeparable121, 0.25, 0.2, 6.0, 1.0).unwrap();
        let s = to_scale_params(&m, 2);
        let implied = 0.5 / (4.0 * PI) / (s.gamma_e.powi(2) * s.gamma_t * s.gamma_s.powi(2));
        assert!((implied - 0.25).abs() < 1e-12);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!(
            ModelKind::parse("separable").unwrap(),
            ModelKind::Separable102
        );
        assert_eq!(
            ModelKind::parse("non-separable").unwrap(),
            ModelKind::NonSeparable121
        );
        assert!(ModelKind::parse("x").is_err());
    }

    #[test]
    fn invalid_spec() {
        assert!(ModelSpec::new(ModelKind::Separable102, -1.0, 0.2, 1.0, 1.0).is_err());
        assert!(ModelSpec::new(ModelKind::Separable102, 1.0, 0.2, f64::NAN, 1.0).is_err());
    }
}

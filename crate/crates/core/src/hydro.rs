//! Analytical pumping-rate limits of a well doublet (TAP formulas).
//!
//! All functions are pure and operate in SI units.

use serde::{Deserialize, Serialize};

use crate::error::ValidationError;

/// Coefficient of the drawdown threshold rate, `q_d = C · K · B²`.
pub const DRAWDOWN_COEFF: f64 = 0.195;
/// Exponent on aquifer thickness in the upconing threshold rate.
pub const UPCONING_THICKNESS_EXP: f64 = 0.798;
/// Gradient factor inside the exponential of the upconing threshold rate.
pub const UPCONING_GRADIENT_FACTOR: f64 = 29.9;
/// Divisor of π in the breakthrough parameter, `α = (π / D) · v_D · B`.
pub const BREAKTHROUGH_DIVISOR: f64 = 1.96;

const UNIT_NORM_TOL: f64 = 1e-9;

/// Groundwater parameters at one location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HydroSample {
    /// Hydraulic conductivity, m/s.
    pub conductivity: f64,
    /// Saturated aquifer thickness, m.
    pub thickness: f64,
    /// Natural groundwater level, m.
    pub natural_level: f64,
    /// Maximum allowed groundwater level, m.
    pub max_level: f64,
    /// Hydraulic gradient (dimensionless).
    pub gradient: f64,
    /// Darcy velocity, m/s. Derived from Darcy's law when absent.
    pub darcy_velocity: Option<f64>,
    /// Unit vector pointing downstream.
    pub flow_dir: [f64; 2],
}

impl HydroSample {
    pub fn validate(&self) -> Result<(), ValidationError> {
        let finite = [
            self.conductivity,
            self.thickness,
            self.natural_level,
            self.max_level,
            self.gradient,
            self.flow_dir[0],
            self.flow_dir[1],
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite || self.darcy_velocity.is_some_and(|v| !v.is_finite()) {
            return Err(ValidationError::new("all parameters must be finite"));
        }
        if self.conductivity < 0.0 {
            return Err(ValidationError::new("K must be >= 0"));
        }
        if self.thickness < 0.0 {
            return Err(ValidationError::new("B must be >= 0"));
        }
        if self.gradient < 0.0 {
            return Err(ValidationError::new("grad_h must be >= 0"));
        }
        if self.darcy_velocity.is_some_and(|v| v < 0.0) {
            return Err(ValidationError::new("v_D must be >= 0"));
        }
        let norm = self.flow_dir[0].hypot(self.flow_dir[1]);
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(ValidationError::new(format!(
                "flow direction must be a unit vector (norm {norm})"
            )));
        }
        Ok(())
    }

    /// Darcy velocity, falling back to `K · grad_h`.
    pub fn darcy_velocity(&self) -> f64 {
        self.darcy_velocity.unwrap_or(self.conductivity * self.gradient)
    }

    /// Available rise of the groundwater level, never negative.
    pub fn headroom(&self) -> f64 {
        (self.max_level - self.natural_level).max(0.0)
    }
}

/// Threshold rates and breakthrough parameter of one candidate well.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TapLimits {
    /// Pumping rate at the drawdown threshold, m³/s.
    pub q_d: f64,
    /// Injection rate at the upconing threshold, m³/s.
    pub q_f: f64,
    /// Hydraulic breakthrough parameter, m²/s.
    pub alpha: f64,
}

impl TapLimits {
    pub fn evaluate(s: &HydroSample) -> Self {
        TapLimits {
            q_d: drawdown_limit(s),
            q_f: upconing_limit(s),
            alpha: breakthrough_param(s),
        }
    }
}

/// Pumping rate at which drawdown reaches the threshold: `0.195 · K · B²`.
pub fn drawdown_limit(s: &HydroSample) -> f64 {
    DRAWDOWN_COEFF * s.conductivity * s.thickness * s.thickness
}

/// Injection rate at the upconing threshold:
/// `(h_max − h_n) · K · B^0.798 · exp(29.9 · ∇h)`, zero when there is no headroom.
pub fn upconing_limit(s: &HydroSample) -> f64 {
    s.headroom()
        * s.conductivity
        * s.thickness.powf(UPCONING_THICKNESS_EXP)
        * (UPCONING_GRADIENT_FACTOR * s.gradient).exp()
}

/// Breakthrough parameter `α = (π / 1.96) · v_D · B`.
pub fn breakthrough_param(s: &HydroSample) -> f64 {
    std::f64::consts::PI / BREAKTHROUGH_DIVISOR * s.darcy_velocity() * s.thickness
}

/// Largest rate that avoids internal hydraulic breakthrough for wells
/// `internal_distance` metres apart.
pub fn breakthrough_limit(alpha: f64, internal_distance: f64) -> f64 {
    alpha * internal_distance
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(k: f64, b: f64, headroom: f64, grad: f64) -> HydroSample {
        HydroSample {
            conductivity: k,
            thickness: b,
            natural_level: 500.0,
            max_level: 500.0 + headroom,
            gradient: grad,
            darcy_velocity: None,
            flow_dir: [1.0, 0.0],
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        if b == 0.0 {
            a.abs()
        } else {
            ((a - b) / b).abs()
        }
    }

    // Reference values below come from a 30-digit evaluation of the formulas.

    #[test]
    fn drawdown_examples() {
        assert_eq!(drawdown_limit(&sample(0.0, 10.0, 1.0, 0.001)), 0.0);
        assert!(rel(drawdown_limit(&sample(2e-3, 10.0, 1.0, 0.001)), 0.039) < 1e-12);
        assert!(rel(drawdown_limit(&sample(1e-4, 5.0, 1.0, 0.001)), 4.875e-4) < 1e-12);
    }

    #[test]
    fn upconing_examples() {
        assert_eq!(upconing_limit(&sample(1e-3, 10.0, 0.0, 0.001)), 0.0);
        let q = upconing_limit(&sample(1e-3, 10.0, 1.0, 0.001));
        assert!(rel(q, 6.471_208_681_040_656e-3) < 1e-12, "{q}");
        assert_eq!(upconing_limit(&sample(1e-3, 10.0, -0.5, 0.001)), 0.0);
        assert_eq!(upconing_limit(&sample(5e-3, 20.0, -0.5, 0.01)), 0.0);
    }

    #[test]
    fn breakthrough_param_examples() {
        let mut s = sample(1e-3, 10.0, 1.0, 0.0);
        assert_eq!(breakthrough_param(&s), 0.0);
        s.gradient = 0.001;
        let derived = breakthrough_param(&s);
        assert!(rel(derived, 1.602_853_394_688_67e-5) < 1e-12);
        s.darcy_velocity = Some(1e-6);
        assert!(rel(breakthrough_param(&s), derived) < 1e-12);
    }

    #[test]
    fn breakthrough_limit_examples() {
        assert_eq!(breakthrough_limit(1.603e-5, 0.0), 0.0);
        assert!(rel(breakthrough_limit(5e-4, 20.0), 0.01) < 1e-12);
        let alpha = 1.602_853_394_688_67e-5;
        assert!(rel(breakthrough_limit(alpha, 50.0), 8.014_266_973_443_35e-4) < 1e-12);
    }

    #[test]
    fn validation_rejects_bad_samples() {
        assert!(sample(1e-3, 10.0, 1.0, 0.001).validate().is_ok());
        assert!(sample(-1e-3, 10.0, 1.0, 0.001).validate().is_err());
        assert!(sample(1e-3, -1.0, 1.0, 0.001).validate().is_err());
        assert!(sample(1e-3, 10.0, 1.0, -0.001).validate().is_err());
        let mut s = sample(1e-3, 10.0, 1.0, 0.001);
        s.flow_dir = [1.0, 1.0];
        assert!(s.validate().is_err());
        s.flow_dir = [0.6, 0.8];
        assert!(s.validate().is_ok());
        s.darcy_velocity = Some(-1.0);
        assert!(s.validate().is_err());
    }

    proptest! {
        #[test]
        fn drawdown_monotone(k in 0.0..5e-3f64, dk in 0.0..1e-3f64, b in 0.0..30.0f64, db in 0.0..5.0f64) {
            let base = drawdown_limit(&sample(k, b, 1.0, 0.001));
            prop_assert!(drawdown_limit(&sample(k + dk, b, 1.0, 0.001)) >= base);
            prop_assert!(drawdown_limit(&sample(k, b + db, 1.0, 0.001)) >= base);
        }

        #[test]
        fn upconing_monotone_and_non_negative(h in -3.0..3.0f64, dh in 0.0..2.0f64, k in 0.0..5e-3f64,
                                              b in 0.0..30.0f64, g in 0.0..5e-3f64) {
            let lo = upconing_limit(&sample(k, b, h, g));
            let hi = upconing_limit(&sample(k, b, h + dh, g));
            prop_assert!(lo >= 0.0);
            prop_assert!(hi >= lo);
        }

        #[test]
        fn breakthrough_limit_additive(alpha in 0.0..1e-3f64, a in 0.0..100.0f64, b in 0.0..100.0f64) {
            let whole = breakthrough_limit(alpha, a + b);
            let parts = breakthrough_limit(alpha, a) + breakthrough_limit(alpha, b);
            prop_assert!((whole - parts).abs() <= 1e-12 * whole.abs().max(f64::MIN_POSITIVE));
        }

        #[test]
        fn explicit_darcy_matches_derived(k in 1e-5..5e-3f64, g in 1e-5..5e-3f64, b in 0.1..30.0f64) {
            let mut s = sample(k, b, 1.0, g);
            let derived = breakthrough_param(&s);
            s.darcy_velocity = Some(k * g);
            prop_assert!(rel(breakthrough_param(&s), derived) <= 1e-12);
        }
    }
}

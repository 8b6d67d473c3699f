//! Sigmoidal RF-to-DC energy-harvesting model and its exact inverse.
//!
//! The harvested DC power is
//!
//! ```text
//! dc(p) = X / (1 + exp(-a (p - b))) - Y,   X = M (1 + e^{ab}) / e^{ab},   Y = M / e^{ab}
//! ```
//!
//! so that `dc(0) = 0` and `dc(p) -> M` as `p -> inf`. Received powers in
//! practice sit many orders of magnitude below `b`, where the naive formula
//! loses most of its digits to the `- Y` cancellation. Both directions are
//! therefore evaluated in forms that never subtract nearly equal numbers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Circuit constants of one energy receiver plus the derived sigmoid offsets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EhParams {
    /// Sigmoid slope, 1/W.
    pub a: f64,
    /// Sigmoid center, W.
    pub b: f64,
    /// Saturation power `M`, W.
    pub m: f64,
    /// `X = M (1 + e^{ab}) / e^{ab}`, W.
    pub x: f64,
    /// `Y = M / e^{ab}`, W.
    pub y: f64,
}

impl EhParams {
    /// Builds the parameter set, deriving `X` and `Y`.
    pub fn derive_constants(a: f64, b: f64, m: f64) -> Result<Self> {
        for (name, v) in [("a", a), ("b", b), ("m", m)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "EH parameter {name} must be positive and finite, got {v}"
                )));
            }
        }
        let y = m * (-a * b).exp();
        // x - y = m holds exactly in exact arithmetic; building x from it keeps
        // the identity to the last ulp instead of recomputing (1 + e^{ab}) / e^{ab}.
        let x = m + y;
        Ok(Self { a, b, m, x, y })
    }

    /// `e^{ab}`, the value of the slack `z` at zero received power.
    pub fn z0(&self) -> f64 {
        (self.a * self.b).exp()
    }

    /// Harvested DC power for received RF power `p_rf` (W).
    pub fn dc_power(&self, p_rf: f64) -> Result<f64> {
        if !(p_rf >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "received RF power must be nonnegative, got {p_rf}"
            )));
        }
        Ok(self.dc_power_unchecked(p_rf))
    }

    /// [`Self::dc_power`] without the sign check; negative inputs extrapolate
    /// the sigmoid.
    pub fn dc_power_unchecked(&self, p_rf: f64) -> f64 {
        // X/(1+z) - X/(1+z0) = X (z0 - z) / ((1+z)(1+z0)) with z = z0 e^{-a p}.
        let z0 = self.z0();
        let t = -self.a * p_rf;
        let z = z0 * t.exp();
        let v = -self.x * z0 * t.exp_m1() / ((1.0 + z) * (1.0 + z0));
        // Rounding can land on M itself deep in saturation.
        v.min(self.m.next_down())
    }

    /// Harvested DC power expressed through the slack `z = exp(-a (p - b))`.
    pub fn dc_from_slack(&self, z: f64) -> f64 {
        self.x / (1.0 + z) - self.y
    }

    /// Received RF power needed to harvest `phi` watts of DC power; the exact
    /// inverse of [`Self::dc_power`].
    pub fn required_rf_power(&self, phi: f64) -> Result<f64> {
        if !(phi >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "DC target must be nonnegative, got {phi}"
            )));
        }
        if phi >= self.m {
            return Err(Error::InfeasibleTarget {
                target: phi,
                saturation: self.m,
            });
        }
        // b - ln(X/(phi+Y) - 1)/a, with X/(phi+Y) - 1 = (M - phi)/(phi + Y)
        // and ln(M/Y) = ab.
        Ok(((phi / self.y).ln_1p() - (-phi / self.m).ln_1p()) / self.a)
    }

    /// First derivative of [`Self::dc_power`] at `p_rf`.
    pub fn dc_slope(&self, p_rf: f64) -> f64 {
        let z = (-self.a * (p_rf - self.b)).exp();
        self.x * self.a * z / ((1.0 + z) * (1.0 + z))
    }
}

/// The receiver circuit used throughout the reference setup
/// (a = 150 /W, b = 0.014 W, M = 0.024 W).
impl Default for EhParams {
    fn default() -> Self {
        Self::derive_constants(150.0, 0.014, 0.024).expect("default EH constants are valid")
    }
}

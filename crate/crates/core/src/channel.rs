//! Fiber channel: polarization transformation, loss and excess noise.
//!
//! Excess noise is referred to the channel output and realized at Bob's
//! detector as additive Gaussian noise of variance `(eta T / 2) xi` in
//! measured shot-noise units (see [`crate::receiver::measure`]). This keeps
//! `V_B = (eta T / 2)(V_A + xi) + 1 + eps` exact in expectation.

use crate::encoding::AliceEncoding;
use crate::error::{ensure, Result};
use crate::polarization::{transformed_quadratures_closed_form, DualPolState, PolarizationParams};

pub const DEFAULT_ALPHA_DB_PER_KM: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    /// Link transmission in `(0, 1]`.
    pub t: f64,
    /// Excess noise, channel input referred, in SNU.
    pub xi: f64,
    /// Modulation variance in SNU.
    pub v_a: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            t: 1.0,
            xi: 0.0328,
            v_a: 1.16,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.t > 0.0 && self.t <= 1.0, || {
            format!("transmission t must lie in (0, 1], got {}", self.t)
        })?;
        ensure(self.xi >= 0.0 && self.xi.is_finite(), || {
            format!("excess noise xi must be non-negative, got {}", self.xi)
        })?;
        ensure(self.v_a > 0.0 && self.v_a.is_finite(), || {
            format!("modulation variance v_a must be positive, got {}", self.v_a)
        })
    }
}

/// What reaches Bob's receiver for one pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelOutput {
    /// Noiseless transformed quadratures before loss.
    pub ideal: DualPolState,
    /// `sqrt(t) * ideal`.
    pub attenuated: DualPolState,
    pub t: f64,
    pub xi: f64,
}

impl ChannelOutput {
    /// Excess-noise variance as seen in measured SNU for a detector of
    /// efficiency `eta`.
    pub fn measured_excess_variance(&self, eta: f64) -> f64 {
        eta * self.t / 2.0 * self.xi
    }
}

pub fn propagate(
    enc: &AliceEncoding,
    params: PolarizationParams,
    cfg: &ChannelConfig,
) -> Result<ChannelOutput> {
    cfg.validate()?;
    ensure(params.is_finite(), || format!("non-finite polarization parameters {params:?}"))?;
    Ok(propagate_unchecked(enc, params, cfg))
}

pub(crate) fn propagate_unchecked(
    enc: &AliceEncoding,
    params: PolarizationParams,
    cfg: &ChannelConfig,
) -> ChannelOutput {
    let ideal = transformed_quadratures_closed_form(params, enc);
    ChannelOutput {
        ideal,
        attenuated: ideal.scaled(cfg.t.sqrt()),
        t: cfg.t,
        xi: cfg.xi,
    }
}

/// `T = 10^(-alpha L / 10)`.
pub fn transmission_from_distance(length_km: f64, alpha_db_per_km: f64) -> Result<f64> {
    ensure(length_km >= 0.0 && length_km.is_finite(), || {
        format!("fiber length must be non-negative, got {length_km}")
    })?;
    ensure(alpha_db_per_km > 0.0 && alpha_db_per_km.is_finite(), || {
        format!("attenuation must be positive, got {alpha_db_per_km}")
    })?;
    Ok(10f64.powf(-alpha_db_per_km * length_km / 10.0))
}

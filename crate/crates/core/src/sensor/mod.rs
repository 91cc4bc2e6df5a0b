//! Photoreceptor physics and the forward event simulator.
//!
//! Illuminance drives the photocurrent, the photocurrent sets the front-end
//! cutoff frequency, and the log-intensity seen by the change detector is the
//! output of a first-order low-pass filter with that cutoff. At low light the
//! filter is slow, so a single brightness step produces a trail of events
//! with growing intervals.

mod field;
mod scene;
mod simulate;

use std::f64::consts::PI;

use thiserror::Error;

pub use field::{inverse_square, IlluminanceField, LightSource};
pub use scene::{Pattern, SceneSpec};
pub use simulate::{generate_events, PixelState};

use crate::event::EventError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensorError {
    #[error("parameter `{name}` must be strictly positive and finite, got {value}")]
    NonPositiveParam { name: &'static str, value: f64 },
    #[error("illuminance must be non-negative, got {0} lux")]
    NegativeIlluminance(f64),
    #[error("photocurrent must be non-negative, got {0} A")]
    NegativePhotocurrent(f64),
    #[error("luminous flux must be non-negative, got {0} lm")]
    NegativeFlux(f64),
    #[error("distance to light source must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("step magnitude must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("time constant {tau_s} s is not reachable above the cutoff clamp")]
    UnreachableTimeConstant { tau_s: f64 },
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error(transparent)]
    Event(#[from] EventError),
}

/// Sensor front-end constants.
///
/// `responsivity * active_area * lux_to_irradiance` acts as a single gain
/// from lux to amps; the defaults put 10 lux at a 1 kHz cutoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotoreceptorParams {
    /// Photodiode responsivity, A/W.
    pub responsivity: f64,
    /// Photodiode active area, m².
    pub active_area: f64,
    /// Irradiance per lux, W/m² per lx.
    pub lux_to_irradiance: f64,
    /// Gate-drain capacitance of the feedback transistor, F.
    pub feedback_capacitance: f64,
    /// Thermal voltage, V.
    pub thermal_voltage: f64,
    /// Log-intensity change that triggers an event (natural log).
    pub contrast_threshold: f64,
    /// Lower clamp on the cutoff frequency, Hz.
    pub min_cutoff_hz: f64,
}

impl Default for PhotoreceptorParams {
    fn default() -> Self {
        Self {
            responsivity: 0.5,
            active_area: 1e-10,
            lux_to_irradiance: PI * 1e-3,
            feedback_capacitance: 10e-15,
            thermal_voltage: 0.025,
            contrast_threshold: 0.3,
            min_cutoff_hz: 0.1,
        }
    }
}

impl PhotoreceptorParams {
    pub fn validate(&self) -> Result<(), SensorError> {
        let fields = [
            ("responsivity", self.responsivity),
            ("active_area", self.active_area),
            ("lux_to_irradiance", self.lux_to_irradiance),
            ("feedback_capacitance", self.feedback_capacitance),
            ("thermal_voltage", self.thermal_voltage),
            ("contrast_threshold", self.contrast_threshold),
            ("min_cutoff_hz", self.min_cutoff_hz),
        ];
        for (name, value) in fields {
            if !(value > 0.0 && value.is_finite()) {
                return Err(SensorError::NonPositiveParam { name, value });
            }
        }
        Ok(())
    }

    /// Amps per lux.
    #[inline]
    pub fn gain(&self) -> f64 {
        self.responsivity * self.active_area * self.lux_to_irradiance
    }

    /// Cutoff frequency at a given illuminance.
    pub fn cutoff_at(&self, lux: f64) -> Result<f64, SensorError> {
        cutoff_frequency(photocurrent(lux, self)?, self)
    }

    /// Low-pass time constant at a given illuminance, seconds.
    pub fn time_constant_at(&self, lux: f64) -> Result<f64, SensorError> {
        Ok(time_constant(self.cutoff_at(lux)?))
    }

    /// Illuminance whose cutoff yields time constant `tau_s`.
    pub fn lux_for_time_constant(&self, tau_s: f64) -> Result<f64, SensorError> {
        if !(tau_s > 0.0 && tau_s.is_finite()) {
            return Err(SensorError::NonPositiveParam { name: "tau", value: tau_s });
        }
        let f = 1.0 / (2.0 * PI * tau_s);
        if f < self.min_cutoff_hz {
            return Err(SensorError::UnreachableTimeConstant { tau_s });
        }
        let i_ph = f * 2.0 * PI * self.feedback_capacitance * self.thermal_voltage;
        Ok(i_ph / self.gain())
    }
}

/// Photodiode current for illuminance `lux`: `R * A * (k * E)`.
pub fn photocurrent(lux: f64, params: &PhotoreceptorParams) -> Result<f64, SensorError> {
    if lux < 0.0 || lux.is_nan() {
        return Err(SensorError::NegativeIlluminance(lux));
    }
    Ok(params.responsivity * params.active_area * (params.lux_to_irradiance * lux))
}

/// Front-end bandwidth `I / (2π C U_t)`, clamped below at `min_cutoff_hz`.
pub fn cutoff_frequency(i_ph: f64, params: &PhotoreceptorParams) -> Result<f64, SensorError> {
    if i_ph < 0.0 || i_ph.is_nan() {
        return Err(SensorError::NegativePhotocurrent(i_ph));
    }
    let f = i_ph / (2.0 * PI * params.feedback_capacitance * params.thermal_voltage);
    Ok(f.max(params.min_cutoff_hz))
}

/// RC time constant of a first-order filter with cutoff `f_3db`, seconds.
#[inline]
pub fn time_constant(f_3db: f64) -> f64 {
    1.0 / (2.0 * PI * f_3db)
}

/// Closed-form crossing times (µs, unquantized) of a first-order step
/// response of height `delta_log` against threshold `c`: the k-th level is
/// reached at `-tau * ln(1 - k c / delta_log)`.
///
/// Levels that are only reached asymptotically (`k c == delta_log`) are not
/// listed.
pub fn analytic_trail_times(delta_log: f64, c: f64, tau_s: f64) -> Result<Vec<f64>, SensorError> {
    if !(delta_log > 0.0) {
        return Err(SensorError::NonPositiveStep(delta_log));
    }
    if !(c > 0.0) {
        return Err(SensorError::NonPositiveParam { name: "contrast_threshold", value: c });
    }
    if !(tau_s > 0.0) {
        return Err(SensorError::NonPositiveParam { name: "tau", value: tau_s });
    }
    let tau_us = tau_s * 1e6;
    Ok((1..).map(|k| k as f64 * c / delta_log).take_while(|&r| r < 1.0).map(|r| -tau_us * (1.0 - r).ln()).collect())
}

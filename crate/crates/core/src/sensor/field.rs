use std::f64::consts::PI;

use super::SensorError;
use crate::event::{Pixel, SensorGeometry};

/// Isotropic point light in scene coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightSource {
    pub position: [f64; 3],
    pub flux_lm: f64,
}

/// Illuminance of an isotropic source with flux `flux_lm` at `distance`.
pub fn inverse_square(flux_lm: f64, distance: f64) -> Result<f64, SensorError> {
    if flux_lm < 0.0 || flux_lm.is_nan() {
        return Err(SensorError::NegativeFlux(flux_lm));
    }
    if !(distance > 0.0) {
        return Err(SensorError::NonPositiveDistance(distance));
    }
    Ok(flux_lm / (4.0 * PI * distance * distance))
}

/// Per-pixel scene illuminance: ambient plus inverse-square source terms.
#[derive(Debug, Clone, PartialEq)]
pub struct IlluminanceField {
    geometry: SensorGeometry,
    lux: Vec<f64>,
    sources: Vec<LightSource>,
    ambient: f64,
}

impl IlluminanceField {
    pub fn uniform(geometry: SensorGeometry, ambient: f64) -> Result<Self, SensorError> {
        Self::from_sources(geometry, ambient, Vec::new(), |_, _| 1.0)
    }

    /// Builds the field from an arbitrary pixel-to-source distance map.
    pub fn from_sources(
        geometry: SensorGeometry,
        ambient: f64,
        sources: Vec<LightSource>,
        distance: impl Fn(Pixel, &LightSource) -> f64,
    ) -> Result<Self, SensorError> {
        if ambient < 0.0 || ambient.is_nan() {
            return Err(SensorError::NegativeIlluminance(ambient));
        }
        let mut lux = vec![ambient; geometry.len()];
        for (i, value) in lux.iter_mut().enumerate() {
            let px = geometry.pixel_at(i);
            for s in &sources {
                *value += inverse_square(s.flux_lm, distance(px, s))?;
            }
        }
        Ok(Self { geometry, lux, sources, ambient })
    }

    /// Pixel `(x, y)` images the scene point `((x + ½)·pitch, (y + ½)·pitch, 0)`.
    pub fn planar(
        geometry: SensorGeometry,
        ambient: f64,
        sources: Vec<LightSource>,
        pixel_pitch: f64,
    ) -> Result<Self, SensorError> {
        Self::from_sources(geometry, ambient, sources, |px, s| {
            let sx = (px.x as f64 + 0.5) * pixel_pitch - s.position[0];
            let sy = (px.y as f64 + 0.5) * pixel_pitch - s.position[1];
            let sz = s.position[2];
            (sx * sx + sy * sy + sz * sz).sqrt()
        })
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn sources(&self) -> &[LightSource] {
        &self.sources
    }

    pub fn ambient(&self) -> f64 {
        self.ambient
    }

    pub fn values(&self) -> &[f64] {
        &self.lux
    }

    #[inline]
    pub fn lux(&self, x: u16, y: u16) -> f64 {
        self.lux[self.geometry.index(x, y)]
    }
}

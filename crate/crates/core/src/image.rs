use thiserror::Error;

use crate::event::SensorGeometry;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImageError {
    #[error("expected {expected} values for geometry, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("pixel {index} has value {value}, outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
}

/// Single-channel image with intensities in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    geometry: SensorGeometry,
    values: Vec<f64>,
}

impl GrayImage {
    pub fn new(geometry: SensorGeometry, values: Vec<f64>) -> Result<Self, ImageError> {
        if values.len() != geometry.len() {
            return Err(ImageError::LengthMismatch { expected: geometry.len(), actual: values.len() });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(ImageError::OutOfRange { index, value });
        }
        Ok(Self { geometry, values })
    }

    pub fn filled(geometry: SensorGeometry, value: f64) -> Result<Self, ImageError> {
        Self::new(geometry, vec![value; geometry.len()])
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: u16, y: u16) -> f64 {
        self.values[self.geometry.index(x, y)]
    }

    /// Applies `f` to every pixel; the result must stay in `[0, 1]`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self, ImageError> {
        Self::new(self.geometry, self.values.iter().map(|&v| f(v)).collect())
    }
}

use std::path::Path;

use super::{IlluminanceField, LightSource, SensorError};
use crate::event::SensorGeometry;
use crate::evio::{self, ConfigError, KeyValues};
use crate::image::GrayImage;

/// Smallest illuminance fed to the log stage, in lux.
pub(crate) const MIN_LUX: f64 = 1e-9;

/// Scene reflectance over time. Values are reflectances in `(0, 1]` that
/// multiply the illuminance field.
#[derive(Debug, Clone, PartialEq)]
pub enum Pattern {
    /// Columns `x >= edge_x` switch from `before` to `after` at `time_us`;
    /// the switch is an exact discontinuity, not interpolated.
    Step { time_us: u64, edge_x: u16, before: f64, after: f64 },
    /// Bright vertical bar entering from the left at the scene velocity,
    /// rendered with exact area coverage.
    MovingBar { bar_width: f64, low: f64, high: f64 },
    /// Checkerboard translating along +x at the scene velocity.
    Checkerboard { square: f64, low: f64, high: f64 },
    /// Explicit frames at `frame_rate` spacing starting at t = 0.
    Frames(Vec<GrayImage>),
}

impl Pattern {
    /// Whether the pattern is sampled at the frame rate and interpolated.
    pub(crate) fn is_sampled(&self) -> bool {
        !matches!(self, Pattern::Step { .. })
    }

    /// Reflectance at pixel `(x, y)` and time `t_s` seconds.
    pub(crate) fn reflectance(&self, x: u16, y: u16, t_s: f64, scene: &SceneSpec) -> f64 {
        match self {
            Pattern::Step { time_us, edge_x, before, after } => {
                if x >= *edge_x && t_s * 1e6 >= *time_us as f64 {
                    *after
                } else {
                    *before
                }
            }
            Pattern::MovingBar { bar_width, low, high } => {
                let left = -bar_width + scene.velocity_px_s * t_s;
                let right = left + bar_width;
                let px0 = x as f64;
                let cover = (right.min(px0 + 1.0) - left.max(px0)).clamp(0.0, 1.0);
                low + (high - low) * cover
            }
            Pattern::Checkerboard { square, low, high } => {
                let u = ((x as f64 + 0.5 - scene.velocity_px_s * t_s) / square).floor() as i64;
                let v = ((y as f64 + 0.5) / square).floor() as i64;
                if (u + v).rem_euclid(2) == 0 {
                    *high
                } else {
                    *low
                }
            }
            Pattern::Frames(frames) => {
                let k = (t_s * scene.frame_rate_hz).floor().max(0.0) as usize;
                frames[k.min(frames.len() - 1)].get(x, y)
            }
        }
    }
}

/// Everything needed to render a synthetic event recording.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub geometry: SensorGeometry,
    pub pattern: Pattern,
    /// Pattern velocity along +x, pixels per second.
    pub velocity_px_s: f64,
    pub duration_us: u64,
    /// Pattern sampling rate, Hz.
    pub frame_rate_hz: f64,
    pub ambient_lux: f64,
    pub sources: Vec<LightSource>,
    /// Scene units per pixel on the z = 0 plane.
    pub pixel_pitch: f64,
    /// Low-pass integration grid, µs.
    pub grid_us: u64,
    /// Uniform background-activity rate per pixel; 0 disables injection.
    pub noise_rate_hz: f64,
    pub seed: u64,
}

impl SceneSpec {
    /// Uniformly lit scene with a single step at `time_us` on every pixel.
    pub fn uniform_step(
        geometry: SensorGeometry,
        ambient_lux: f64,
        before: f64,
        after: f64,
        time_us: u64,
        duration_us: u64,
    ) -> Self {
        Self {
            geometry,
            pattern: Pattern::Step { time_us, edge_x: 0, before, after },
            velocity_px_s: 0.0,
            duration_us,
            frame_rate_hz: 1000.0,
            ambient_lux,
            sources: Vec::new(),
            pixel_pitch: 1.0,
            grid_us: 1,
            noise_rate_hz: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SensorError> {
        let bad = |msg: String| Err(SensorError::InvalidScene(msg));
        if self.duration_us == 0 {
            return bad("duration must be positive".into());
        }
        if !(self.frame_rate_hz > 0.0 && self.frame_rate_hz.is_finite()) {
            return bad(format!("frame rate must be positive, got {}", self.frame_rate_hz));
        }
        if self.grid_us == 0 {
            return bad("grid must be at least 1 us".into());
        }
        if !self.velocity_px_s.is_finite() {
            return bad("velocity must be finite".into());
        }
        if !(self.pixel_pitch > 0.0 && self.pixel_pitch.is_finite()) {
            return bad("pixel pitch must be positive".into());
        }
        if !(self.noise_rate_hz >= 0.0 && self.noise_rate_hz.is_finite()) {
            return bad("noise rate must be non-negative".into());
        }
        let reflectances: Vec<f64> = match &self.pattern {
            Pattern::Step { before, after, .. } => vec![*before, *after],
            Pattern::MovingBar { bar_width, low, high } => {
                if !(*bar_width > 0.0) {
                    return bad("bar width must be positive".into());
                }
                vec![*low, *high]
            }
            Pattern::Checkerboard { square, low, high } => {
                if !(*square > 0.0) {
                    return bad("checker square must be positive".into());
                }
                vec![*low, *high]
            }
            Pattern::Frames(frames) => {
                if frames.is_empty() {
                    return bad("frame sequence is empty".into());
                }
                if let Some(f) = frames.iter().find(|f| f.geometry() != self.geometry) {
                    return bad(format!(
                        "frame geometry {}x{} differs from scene {}x{}",
                        f.geometry().width(),
                        f.geometry().height(),
                        self.geometry.width(),
                        self.geometry.height()
                    ));
                }
                Vec::new()
            }
        };
        if let Some(r) = reflectances.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return bad(format!("reflectance must lie in (0, 1], got {r}"));
        }
        Ok(())
    }

    pub fn illuminance_field(&self) -> Result<IlluminanceField, SensorError> {
        IlluminanceField::planar(self.geometry, self.ambient_lux, self.sources.clone(), self.pixel_pitch)
    }

    /// The same scene with ambient light and every source scaled by `factor`.
    pub fn with_illuminance_scale(&self, factor: f64) -> Self {
        let mut s = self.clone();
        s.ambient_lux *= factor;
        for src in &mut s.sources {
            src.flux_lm *= factor;
        }
        s
    }

    /// Parses a key=value scene description. Relative frame paths resolve
    /// against `base_dir`.
    pub fn from_key_values(kv: &KeyValues, base_dir: &Path) -> Result<Self, ConfigError> {
        kv.check_known(SCENE_KEYS)?;
        let width: u16 = kv.require("width")?;
        let height: u16 = kv.require("height")?;
        let geometry = SensorGeometry::new(width, height).map_err(|e| ConfigError::invalid("width", e.to_string()))?;
        let low: f64 = kv.parse_or("low", 0.1)?;
        let high: f64 = kv.parse_or("high", 1.0)?;
        let pattern_name: String = kv.require("pattern")?;
        let pattern = match pattern_name.as_str() {
            "step" => Pattern::Step {
                time_us: kv.parse_or("step_time_us", 0)?,
                edge_x: kv.parse_or("edge_x", 0)?,
                before: kv.parse_or("step_before", low)?,
                after: kv.parse_or("step_after", high)?,
            },
            "moving_bar" => Pattern::MovingBar { bar_width: kv.parse_or("bar_width", 4.0)?, low, high },
            "checkerboard" => Pattern::Checkerboard { square: kv.parse_or("square", 4.0)?, low, high },
            "frames" => {
                let list: String = kv.require("frames")?;
                let mut frames = Vec::new();
                for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    let path = base_dir.join(item);
                    let img = evio::read_pgm(&path).map_err(|e| ConfigError::invalid("frames", e.to_string()))?;
                    frames.push(img);
                }
                Pattern::Frames(frames)
            }
            other => {
                return Err(ConfigError::invalid(
                    "pattern",
                    format!("unknown pattern `{other}` (step, moving_bar, checkerboard, frames)"),
                ))
            }
        };
        let mut sources = Vec::new();
        for value in kv.get_all("source") {
            sources.push(parse_source(value)?);
        }
        let spec = Self {
            geometry,
            pattern,
            velocity_px_s: kv.parse_or("velocity", 0.0)?,
            duration_us: kv.require("duration_us")?,
            frame_rate_hz: kv.parse_or("frame_rate", 1000.0)?,
            ambient_lux: kv.parse_or("ambient_lux", 10.0)?,
            sources,
            pixel_pitch: kv.parse_or("pixel_pitch", 1.0)?,
            grid_us: kv.parse_or("grid_us", 1)?,
            noise_rate_hz: kv.parse_or("noise_rate_hz", 0.0)?,
            seed: kv.parse_or("seed", 0)?,
        };
        spec.validate().map_err(|e| ConfigError::invalid("scene", e.to_string()))?;
        Ok(spec)
    }
}

/// Keys accepted in a scene file.
pub const SCENE_KEYS: &[&str] = &[
    "width",
    "height",
    "pattern",
    "duration_us",
    "frame_rate",
    "velocity",
    "ambient_lux",
    "source",
    "pixel_pitch",
    "low",
    "high",
    "step_time_us",
    "edge_x",
    "step_before",
    "step_after",
    "bar_width",
    "square",
    "frames",
    "grid_us",
    "noise_rate_hz",
    "seed",
];

fn parse_source(value: &str) -> Result<LightSource, ConfigError> {
    let parts: Result<Vec<f64>, _> = value.split(',').map(|s| s.trim().parse::<f64>()).collect();
    match parts {
        Ok(p) if p.len() == 4 => Ok(LightSource { position: [p[0], p[1], p[2]], flux_lm: p[3] }),
        _ => Err(ConfigError::invalid("source", format!("expected `x,y,z,flux`, got `{value}`"))),
    }
}

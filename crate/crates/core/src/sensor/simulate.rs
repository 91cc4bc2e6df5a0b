use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use super::scene::MIN_LUX;
use super::{time_constant, PhotoreceptorParams, SceneSpec, SensorError};
use crate::event::{Event, EventStream, Polarity};

/// Low-pass photoreceptor state of one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelState {
    /// Filtered log intensity.
    pub v_log: f64,
    /// Log intensity at the last emitted event.
    pub v_ref: f64,
    /// Time of the last state update, µs.
    pub last_t: u64,
}

impl PixelState {
    pub fn at_rest(v_log: f64, t: u64) -> Self {
        Self { v_log, v_ref: v_log, last_t: t }
    }

    /// Exact first-order response to an input held at `target_log` since
    /// `last_t`.
    pub fn lowpass_update(self, target_log: f64, t_now: u64, f_3db: f64) -> Self {
        debug_assert!(t_now >= self.last_t);
        let dt_s = t_now.saturating_sub(self.last_t) as f64 * 1e-6;
        let decay = (-dt_s / time_constant(f_3db)).exp();
        Self { v_log: target_log + (self.v_log - target_log) * decay, ..self }.with_time(t_now)
    }

    fn with_time(self, t: u64) -> Self {
        Self { last_t: t, ..self }
    }
}

/// Renders a scene into a canonical event stream.
///
/// Each pixel integrates the first-order low-pass ODE exactly on a grid of
/// `scene.grid_us`, holding the target log intensity constant over each grid
/// step. Threshold crossings inside a step are solved in closed form and
/// floored to whole microseconds.
pub fn generate_events(scene: &SceneSpec, params: &PhotoreceptorParams) -> Result<EventStream, SensorError> {
    scene.validate()?;
    params.validate()?;
    let field = scene.illuminance_field()?;
    let geometry = scene.geometry;

    let per_pixel: Vec<Vec<Event>> = (0..geometry.len())
        .into_par_iter()
        .map(|index| {
            let px = geometry.pixel_at(index);
            let lux = field.lux(px.x, px.y);
            let mut events = simulate_pixel(scene, params, px.x, px.y, lux);
            if scene.noise_rate_hz > 0.0 {
                inject_noise(&mut events, scene, px.x, px.y, index as u64);
            }
            events
        })
        .collect();

    let mut events: Vec<Event> = per_pixel.into_iter().flatten().collect();
    events.sort_unstable_by_key(Event::canonical_key);
    Ok(EventStream::new(geometry, events))
}

/// Log-intensity target of one pixel as a function of grid time.
struct PixelTarget<'a> {
    scene: &'a SceneSpec,
    x: u16,
    y: u16,
    lux: f64,
    /// Per-frame log targets for sampled patterns.
    frames: Vec<f64>,
}

impl<'a> PixelTarget<'a> {
    fn new(scene: &'a SceneSpec, x: u16, y: u16, lux: f64) -> Self {
        let mut frames = Vec::new();
        if scene.pattern.is_sampled() {
            let n = (scene.duration_us as f64 * 1e-6 * scene.frame_rate_hz).ceil() as usize + 1;
            frames = (0..n)
                .map(|k| {
                    let t_s = k as f64 / scene.frame_rate_hz;
                    log_intensity(lux * scene.pattern.reflectance(x, y, t_s, scene))
                })
                .collect();
        }
        Self { scene, x, y, lux, frames }
    }

    fn at(&self, t_us: u64) -> f64 {
        if self.frames.is_empty() {
            let r = self.scene.pattern.reflectance(self.x, self.y, t_us as f64 * 1e-6, self.scene);
            return log_intensity(self.lux * r);
        }
        let pos = t_us as f64 * 1e-6 * self.scene.frame_rate_hz;
        let k = pos.floor() as usize;
        if k + 1 >= self.frames.len() {
            return *self.frames.last().unwrap();
        }
        let w = pos - k as f64;
        if w == 0.0 {
            self.frames[k]
        } else {
            self.frames[k] * (1.0 - w) + self.frames[k + 1] * w
        }
    }
}

#[inline]
fn log_intensity(lux: f64) -> f64 {
    lux.max(MIN_LUX).ln()
}

fn simulate_pixel(scene: &SceneSpec, params: &PhotoreceptorParams, x: u16, y: u16, lux: f64) -> Vec<Event> {
    let target = PixelTarget::new(scene, x, y, lux);
    let c = params.contrast_threshold;
    let mut state = PixelState::at_rest(target.at(0), 0);
    let mut last_event: Option<u64> = None;
    let mut events = Vec::new();

    let grid = scene.grid_us;
    let end = scene.duration_us;
    let mut seg_start = 0u64;
    let mut seg_target = target.at(0);
    let mut g = grid;
    loop {
        // Extend the segment while the held target is unchanged.
        let next_target = if g < end { Some(target.at(g)) } else { None };
        if next_target == Some(seg_target) {
            g += grid;
            continue;
        }
        let seg_end = g.min(end);
        let lux_here = seg_target.exp();
        // Cutoff is driven by the photocurrent of the held input.
        let f_3db = params.cutoff_at(lux_here).unwrap_or(params.min_cutoff_hz);
        let tau_us = time_constant(f_3db) * 1e6;
        let dur = (seg_end - seg_start) as f64;

        let v0 = state.v_log;
        let mut v = v0;
        let mut s_cur = 0.0f64;
        loop {
            let up = state.v_ref + c;
            let down = state.v_ref - c;
            let (level, p, s) = if v >= up {
                (up, Polarity::On, s_cur)
            } else if v <= down {
                (down, Polarity::Off, s_cur)
            } else if seg_target > up {
                (up, Polarity::On, crossing_time(v0, seg_target, up, tau_us))
            } else if seg_target < down {
                (down, Polarity::Off, crossing_time(v0, seg_target, down, tau_us))
            } else {
                break;
            };
            let s = s.max(s_cur);
            if s >= dur {
                break;
            }
            let mut t = seg_start + s.floor() as u64;
            if let Some(last) = last_event {
                t = t.max(last + 1);
            }
            events.push(Event::new(t, x, y, p));
            last_event = Some(t);
            state.v_ref = level;
            v = level;
            s_cur = s;
        }
        state = state.lowpass_update(seg_target, seg_end, f_3db);

        match next_target {
            Some(t) => {
                seg_start = seg_end;
                seg_target = t;
                g += grid;
            }
            None => break,
        }
    }
    events
}

/// Time (µs from segment start) at which `v0 -> target` reaches `level`.
#[inline]
fn crossing_time(v0: f64, target: f64, level: f64, tau_us: f64) -> f64 {
    let ratio = (v0 - target) / (level - target);
    if ratio <= 1.0 {
        0.0
    } else {
        tau_us * ratio.ln()
    }
}

fn inject_noise(events: &mut Vec<Event>, scene: &SceneSpec, x: u16, y: u16, stream_id: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
    rng.set_stream(stream_id);
    let gap = Exp::new(scene.noise_rate_hz).expect("rate checked positive");
    let mut t_s = 0.0f64;
    let mut noise = Vec::new();
    loop {
        t_s += gap.sample(&mut rng);
        let t = (t_s * 1e6).floor();
        if t >= scene.duration_us as f64 {
            break;
        }
        let p = if rng.random::<bool>() { Polarity::On } else { Polarity::Off };
        noise.push(Event::new(t as u64, x, y, p));
    }
    if noise.is_empty() {
        return;
    }
    events.extend(noise);
    // Signal events win ties; the sort is stable.
    events.sort_by_key(|e| e.t);
    events.dedup_by_key(|e| e.t);
}

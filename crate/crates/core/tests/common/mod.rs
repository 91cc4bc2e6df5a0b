#![allow(dead_code)]

use evlume_core::sensor::{Pattern, PhotoreceptorParams, SceneSpec};
use evlume_core::{Event, EventStream, Polarity, SensorGeometry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Step-edge scene: columns `x >= edge_x` change log intensity by
/// `m * C` at `step_us`, settling at an illuminance whose time constant is
/// `tau_s`. Runs for `step_us + tail_taus * tau`.
pub fn step_scene(
    geometry: SensorGeometry,
    edge_x: u16,
    m: f64,
    tau_s: f64,
    on: bool,
    step_us: u64,
    tail_taus: f64,
) -> SceneSpec {
    let p = PhotoreceptorParams::default();
    let lux_after = p.lux_for_time_constant(tau_s).unwrap();
    let ratio = (m * p.contrast_threshold).exp();
    let (before, after) = if on { (1.0 / ratio, 1.0) } else { (1.0, 1.0 / ratio) };
    let mut scene = SceneSpec::uniform_step(
        geometry,
        lux_after / after,
        before,
        after,
        step_us,
        step_us + (tail_taus * tau_s * 1e6).ceil() as u64,
    );
    scene.pattern = Pattern::Step { time_us: step_us, edge_x, before, after };
    scene
}

/// Random valid canonical stream; roughly `n` events (duplicates of a
/// `(t, pixel)` key are dropped).
pub fn random_stream(rng: &mut ChaCha8Rng, geometry: SensorGeometry, n: usize, t_max: u64) -> EventStream {
    let mut events: Vec<Event> = (0..n)
        .map(|_| {
            let p = if rng.random_bool(0.5) { Polarity::On } else { Polarity::Off };
            Event::new(
                rng.random_range(0..=t_max),
                rng.random_range(0..geometry.width()),
                rng.random_range(0..geometry.height()),
                p,
            )
        })
        .collect();
    events.sort_unstable_by_key(Event::canonical_key);
    events.dedup_by_key(|e| e.canonical_key());
    EventStream::new(geometry, events)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Naive triangular-kernel voxelization: every event visits every bin.
pub fn naive_voxels(stream: &EventStream, t0: u64, t1: u64, bins: usize) -> Vec<f64> {
    let g = stream.geometry();
    let mut out = vec![0.0; bins * g.len()];
    for e in stream.events() {
        if e.t < t0 || e.t > t1 {
            continue;
        }
        let u = (e.t - t0) as f64 / (t1 - t0) as f64 * (bins - 1) as f64;
        for b in 0..bins {
            let w = (1.0 - (b as f64 - u).abs()).max(0.0);
            out[b * g.len() + g.index(e.x, e.y)] += e.p.sign() * w;
        }
    }
    out
}

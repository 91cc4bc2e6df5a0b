mod common;

use evlume_core::ets::{self, EtsConfig};
use evlume_core::evio::{self, KeyValues};
use evlume_core::sensor::{generate_events, PhotoreceptorParams, SceneSpec};
use evlume_core::voxel::{
    ets_voxel_labels, voxelize_bilinear, voxelize_bilinear_with, voxelize_weighted, TimeNormalization, WeightTable,
};
use evlume_core::SensorGeometry;
use proptest::prelude::*;

use common::{random_stream, rng, step_scene};

fn cfg() -> EtsConfig {
    EtsConfig::new(20_000, 3, 1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // Simulator chains end at the end of the recording, so a second pass
    // finds nothing left to move.
    #[test]
    fn suppress_is_idempotent_on_step_scenes(
        m in 1.2f64..7.8,
        tau_ms in 0.2f64..5.0,
        on in any::<bool>(),
        edge in 0u16..4,
    ) {
        let g = SensorGeometry::new(4, 2).unwrap();
        let raw = generate_events(&step_scene(g, edge, m, tau_ms * 1e-3, on, 300, 5.0), &PhotoreceptorParams::default()).unwrap();
        let (once, _) = ets::suppress(&raw, &cfg());
        let (twice, summary) = ets::suppress(&once, &cfg());
        prop_assert_eq!(summary.timestamps_changed, 0);
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn bilinear_table_tracks_kernel_within_quantization(
        seed in any::<u64>(),
        bins in 1usize..12,
        resolution in 2usize..300,
    ) {
        let mut r = rng(seed);
        let g = SensorGeometry::new(5, 4).unwrap();
        let stream = random_stream(&mut r, g, 300, 10_000);
        let table = WeightTable::bilinear(resolution, bins).unwrap();
        let (exact, _) = voxelize_bilinear(&stream, 0, 10_000, bins).unwrap();
        let (approx, _) = voxelize_weighted(&stream, 0, 10_000, &table).unwrap();
        // Nearest-row lookup moves u by at most half a row, i.e. at most
        // (B - 1) / (2 (res - 1)) bins; the kernel is 1-Lipschitz.
        let per_event = (bins - 1) as f64 / (2.0 * (resolution - 1) as f64) + 1e-12;
        let counts = stream.density_map(0, 10_001).unwrap();
        for y in 0..4 {
            for x in 0..5 {
                let n = counts.count(x, y) as f64;
                for b in 0..bins {
                    prop_assert!((exact.get(b, x, y) - approx.get(b, x, y)).abs() <= n * per_event);
                }
            }
        }
    }
}

#[test]
fn two_bin_table_meets_one_over_resolution() {
    let mut r = rng(9);
    let g = SensorGeometry::new(3, 3).unwrap();
    let stream = random_stream(&mut r, g, 2_000, 50_000);
    let counts = stream.density_map(0, 50_001).unwrap();
    for res in [2usize, 16, 256, 1024] {
        let table = WeightTable::bilinear(res, 2).unwrap();
        let (exact, _) = voxelize_bilinear(&stream, 0, 50_000, 2).unwrap();
        let (approx, _) = voxelize_weighted(&stream, 0, 50_000, &table).unwrap();
        for y in 0..3 {
            for x in 0..3 {
                let bound = counts.count(x, y) as f64 / res as f64;
                for b in 0..2 {
                    assert!((exact.get(b, x, y) - approx.get(b, x, y)).abs() <= bound);
                }
            }
        }
    }
}

#[test]
fn labels_concentrate_trails() {
    let g = SensorGeometry::new(6, 2).unwrap();
    let scene = step_scene(g, 2, 4.4, 2e-3, true, 500, 5.0);
    let raw = generate_events(&scene, &PhotoreceptorParams::default()).unwrap();
    let (labels, _) = ets_voxel_labels(&raw, &cfg(), 0, scene.duration_us, 8).unwrap();
    let (plain, _) = voxelize_bilinear(&raw, 0, scene.duration_us, 8).unwrap();
    for x in 0..6 {
        match (labels.temporal_spread(x, 0), plain.temporal_spread(x, 0)) {
            (Some(a), Some(b)) => assert!(a < b, "x={x}: {a} vs {b}"),
            (None, None) => assert!(x < 2),
            other => panic!("x={x}: {other:?}"),
        }
    }
    assert_eq!(labels.total(), plain.total());
}

#[test]
fn event_span_normalization_uses_first_and_last_event() {
    let g = SensorGeometry::new(1, 1).unwrap();
    let scene = step_scene(g, 0, 3.5, 1e-3, true, 1_000, 5.0);
    let raw = generate_events(&scene, &PhotoreceptorParams::default()).unwrap();
    let (grid, _) = voxelize_bilinear_with(&raw, 0, scene.duration_us, 3, TimeNormalization::EventSpan).unwrap();
    let bins = grid.pixel_bins(0, 0);
    // First event lands on bin 0, last on bin 2.
    assert!(bins[0] >= 1.0 && bins[2] >= 1.0);
    assert!((bins.iter().sum::<f64>() - 3.0).abs() < 1e-12);
}

#[test]
fn simulated_stream_survives_evt1_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let g = SensorGeometry::new(10, 4).unwrap();
    let mut scene = step_scene(g, 3, 5.3, 0.7e-3, false, 200, 6.0);
    scene.noise_rate_hz = 50.0;
    scene.seed = 3;
    let raw = generate_events(&scene, &PhotoreceptorParams::default()).unwrap();
    let path = dir.path().join("raw.evt");
    evio::write_events(&path, &raw).unwrap();
    assert_eq!(evio::read_events(&path).unwrap(), raw);
}

#[test]
fn scene_config_with_sources() {
    let dir = tempfile::tempdir().unwrap();
    let text = "\
# dim desk scene, one lamp
width = 8
height = 6
pattern = checkerboard
square = 2
velocity = 400
duration_us = 20000
ambient_lux = 0.5
source = 4, 3, 10, 800
pixel_pitch = 1
seed = 1
";
    let kv = KeyValues::parse(text).unwrap();
    let scene = SceneSpec::from_key_values(&kv, dir.path()).unwrap();
    let field = scene.illuminance_field().unwrap();
    // Pixels nearer the lamp's foot are brighter.
    assert!(field.lux(4, 3) > field.lux(0, 0));
    let events = generate_events(&scene, &PhotoreceptorParams::default()).unwrap();
    assert!(!events.is_empty());
    events.validate().unwrap();
}

#[test]
fn frames_scene_reads_pgm() {
    let dir = tempfile::tempdir().unwrap();
    let g = SensorGeometry::new(4, 4).unwrap();
    let dark = evlume_core::GrayImage::filled(g, 0.05).unwrap();
    let bright = evlume_core::GrayImage::filled(g, 0.9).unwrap();
    evio::write_pgm(dir.path().join("a.pgm"), &dark).unwrap();
    evio::write_pgm(dir.path().join("b.pgm"), &bright).unwrap();
    let kv = KeyValues::parse(
        "width=4\nheight=4\npattern=frames\nframes=a.pgm, b.pgm\nframe_rate=200\nduration_us=30000\nambient_lux=200\n",
    )
    .unwrap();
    let scene = SceneSpec::from_key_values(&kv, dir.path()).unwrap();
    let s = generate_events(&scene, &PhotoreceptorParams::default()).unwrap();
    assert!(!s.is_empty());
    assert!(s.events().iter().all(|e| e.p == evlume_core::Polarity::On));
}

use std::fmt::Write as _;
use std::path::Path;

use evlume_core::ets::{self, EtsConfig};
use evlume_core::event::DensityMap;
use evlume_core::evio::{self, KeyValues};
use evlume_core::metrics;
use evlume_core::sensor::{generate_events, PhotoreceptorParams, SceneSpec};
use evlume_core::voxel::{self, TimeNormalization, VoxelGrid};
use evlume_core::{EventStream, GrayImage};

use crate::error::CliError;
use crate::{DensityArgs, EtsArgs, MetricsArgs, SimulateArgs, VoxelizeArgs};

pub fn load_scene(path: &Path, grid_us: Option<u64>, seed: Option<u64>) -> Result<SceneSpec, CliError> {
    let kv = KeyValues::read(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut scene =
        SceneSpec::from_key_values(&kv, base).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if let Some(g) = grid_us {
        scene.grid_us = g;
    }
    if let Some(s) = seed {
        scene.seed = s;
    }
    Ok(scene)
}

pub fn sensor_params(threshold: Option<f64>) -> PhotoreceptorParams {
    let mut p = PhotoreceptorParams::default();
    if let Some(c) = threshold {
        p.contrast_threshold = c;
    }
    p
}

pub fn render(scene: &SceneSpec, params: &PhotoreceptorParams) -> Result<EventStream, CliError> {
    generate_events(scene, params).map_err(CliError::usage)
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let scene = load_scene(&a.scene, a.grid_us, a.seed)?;
    let stream = render(&scene, &sensor_params(a.threshold))?;
    evio::write_events(&a.out, &stream)?;
    Ok(())
}

pub fn ets_config(max_interval_us: u64, min_chain: usize, realign_us: u64) -> Result<EtsConfig, CliError> {
    EtsConfig::new(max_interval_us, min_chain, realign_us).map_err(CliError::usage)
}

pub fn ets(a: &EtsArgs) -> Result<(), CliError> {
    let cfg = ets_config(a.max_interval_us, a.min_chain, a.realign_us)?;
    let input = evio::read_events(&a.input)?;
    let (out, stats) = ets::suppress_with_statistics(&input, &cfg);
    evio::write_events(&a.out, &out)?;
    if let Some(path) = &a.report {
        write_text(path, &stats.to_report())?;
    }
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub struct VoxelOptions<'a> {
    pub t0: u64,
    pub t1: u64,
    pub bins: usize,
    pub weights: Option<&'a Path>,
    pub strict_eq5: bool,
}

pub fn voxelize_stream(stream: &EventStream, o: &VoxelOptions) -> Result<VoxelGrid, CliError> {
    let mode = if o.strict_eq5 { TimeNormalization::EventSpan } else { TimeNormalization::Window };
    let result = match o.weights {
        Some(path) => {
            let table = evio::read_weights(path)?;
            voxel::voxelize_weighted_with(stream, o.t0, o.t1, &table, mode)
        }
        None => voxel::voxelize_bilinear_with(stream, o.t0, o.t1, o.bins, mode),
    };
    result.map(|(grid, _)| grid).map_err(CliError::usage)
}

pub fn voxelize(a: &VoxelizeArgs) -> Result<(), CliError> {
    let stream = evio::read_events(&a.input)?;
    let grid = voxelize_stream(
        &stream,
        &VoxelOptions { t0: a.t0, t1: a.t1, bins: a.bins, weights: a.weights.as_deref(), strict_eq5: a.strict_eq5 },
    )?;
    evio::write_voxels(&a.out, &grid)?;
    Ok(())
}

pub fn density_image(stream: &EventStream, t0: u64, t1: u64) -> Result<GrayImage, CliError> {
    let map: DensityMap = stream.density_map(t0, t1).map_err(CliError::usage)?;
    GrayImage::new(map.geometry, map.normalized).map_err(CliError::usage)
}

pub fn density(a: &DensityArgs) -> Result<(), CliError> {
    let stream = evio::read_events(&a.input)?;
    let image = density_image(&stream, a.t0, a.t1)?;
    evio::write_pgm(&a.out, &image)?;
    Ok(())
}

pub fn metrics(a: &MetricsArgs) -> Result<(), CliError> {
    let ra = evio::read_pgm(&a.a)?;
    let rb = evio::read_pgm(&a.b)?;
    let all = !(a.mse || a.ssim || a.loe);
    let mut out = String::new();
    if all || a.mse {
        let _ = writeln!(out, "mse={}", metrics::mse(&ra, &rb).map_err(CliError::usage)?);
    }
    if all || a.ssim {
        let _ = writeln!(out, "ssim={}", metrics::ssim(&ra, &rb).map_err(CliError::usage)?);
    }
    if all || a.loe {
        let _ = writeln!(out, "loe={}", metrics::loe(&ra, &rb, a.loe_grid).map_err(CliError::usage)?);
    }
    print!("{out}");
    Ok(())
}

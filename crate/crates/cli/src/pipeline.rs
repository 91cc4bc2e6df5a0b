//! Config-driven stage chains with a replayable manifest.
//!
//! ```text
//! seed = 7
//! out_dir = run
//! stages = simulate, ets, voxelize
//! simulate.scene = step.scene
//! ets.max_interval_us = 20000
//! voxelize.bins = 5
//! ```
//!
//! Paths are relative to the config file. Stage `k` writes
//! `NN_<stage>.<ext>` into `out_dir`, and `manifest.txt` records every
//! parameter plus the SHA-256 of each input and output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use evlume_core::ets;
use evlume_core::evio::{self, KeyValues};
use evlume_core::EventStream;
use sha2::{Digest, Sha256};

use crate::commands::{self, VoxelOptions};
use crate::error::CliError;

const KNOWN_KEYS: &[&str] = &[
    "seed",
    "out_dir",
    "stages",
    "input",
    "simulate.scene",
    "simulate.threshold",
    "simulate.grid_us",
    "ets.max_interval_us",
    "ets.min_chain",
    "ets.realign_us",
    "ets.report",
    "voxelize.t0",
    "voxelize.t1",
    "voxelize.bins",
    "voxelize.weights",
    "voxelize.strict_eq5",
    "density.t0",
    "density.t1",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Simulate,
    Ets,
    Voxelize,
    Density,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Data {
    Events,
    Voxels,
    Image,
}

impl Data {
    fn describe(self) -> &'static str {
        match self {
            Data::Events => "an event stream",
            Data::Voxels => "a voxel grid",
            Data::Image => "an image",
        }
    }
}

impl Stage {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "simulate" => Stage::Simulate,
            "ets" => Stage::Ets,
            "voxelize" => Stage::Voxelize,
            "density" => Stage::Density,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Ets => "ets",
            Stage::Voxelize => "voxelize",
            Stage::Density => "density",
        }
    }

    fn input(self) -> Option<Data> {
        match self {
            Stage::Simulate => None,
            _ => Some(Data::Events),
        }
    }

    fn output(self) -> Data {
        match self {
            Stage::Simulate | Stage::Ets => Data::Events,
            Stage::Voxelize => Data::Voxels,
            Stage::Density => Data::Image,
        }
    }

    fn extension(self) -> &'static str {
        match self.output() {
            Data::Events => "evt1",
            Data::Voxels => "vox1",
            Data::Image => "pgm",
        }
    }
}

/// Checks that each stage consumes what the previous one produces.
fn check_chain(stages: &[Stage], has_input: bool) -> Result<(), CliError> {
    if stages.is_empty() {
        return Err(CliError::Usage("`stages` lists no stages".into()));
    }
    let mut current = has_input.then_some(Data::Events);
    let mut previous = "input";
    for (i, stage) in stages.iter().enumerate() {
        match (stage.input(), current) {
            (None, None) => {}
            (None, Some(_)) => {
                let reason = if i == 0 { "conflicts with `input`" } else { "must be the first stage" };
                return Err(CliError::Usage(format!("stage {} `{}` {reason}", i + 1, stage.name())));
            }
            (Some(need), Some(have)) if need == have => {}
            (Some(need), have) => {
                let got = match have {
                    Some(d) => format!("`{previous}` produces {}", d.describe()),
                    None => "nothing precedes it and no `input` is set".into(),
                };
                return Err(CliError::Usage(format!(
                    "stage {} `{}` needs {} but {got}",
                    i + 1,
                    stage.name(),
                    need.describe()
                )));
            }
        }
        current = Some(stage.output());
        previous = stage.name();
    }
    Ok(())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn bad_config(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}

struct Manifest {
    text: String,
}

impl Manifest {
    fn file(&mut self, kind: &str, name: &str, bytes: &[u8]) {
        let _ = writeln!(self.text, "{kind} {name} sha256={}", sha256_hex(bytes));
    }
}

pub fn run(config_path: &Path) -> Result<(), CliError> {
    let config_bytes = read_bytes(config_path)?;
    let text = String::from_utf8(config_bytes.clone()).map_err(|_| bad_config(config_path, "not valid UTF-8"))?;
    let kv = KeyValues::parse(&text).map_err(|e| bad_config(config_path, e))?;
    kv.check_known(KNOWN_KEYS).map_err(|e| bad_config(config_path, e))?;
    let base = config_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let resolve = |p: &str| -> PathBuf { base.join(p) };
    let cfg_err = |e| bad_config(config_path, e);

    let stage_list: String = kv.require("stages").map_err(cfg_err)?;
    let mut stages = Vec::new();
    for (i, name) in stage_list.split(',').map(str::trim).filter(|s| !s.is_empty()).enumerate() {
        let stage = Stage::parse(name).ok_or_else(|| {
            CliError::Usage(format!("stage {} `{name}` is unknown (simulate, ets, voxelize, density)", i + 1))
        })?;
        stages.push(stage);
    }
    let input = kv.get("input").map(str::to_string);
    check_chain(&stages, input.is_some())?;

    // Parse every stage's parameters before running anything.
    let seed: Option<u64> = kv.get("seed").map(|_| kv.require("seed")).transpose().map_err(cfg_err)?;
    let threshold: Option<f64> =
        kv.get("simulate.threshold").map(|_| kv.require("simulate.threshold")).transpose().map_err(cfg_err)?;
    let grid_us: Option<u64> =
        kv.get("simulate.grid_us").map(|_| kv.require("simulate.grid_us")).transpose().map_err(cfg_err)?;
    let ets_cfg = commands::ets_config(
        kv.parse_or("ets.max_interval_us", 1000).map_err(cfg_err)?,
        kv.parse_or("ets.min_chain", 3).map_err(cfg_err)?,
        kv.parse_or("ets.realign_us", 1).map_err(cfg_err)?,
    )
    .map_err(|e| CliError::Usage(format!("stage `ets`: {e}")))?;
    let ets_report: bool = kv.parse_or("ets.report", false).map_err(cfg_err)?;
    let vox_t0: u64 = kv.parse_or("voxelize.t0", 0).map_err(cfg_err)?;
    let vox_t1: Option<u64> = kv.get("voxelize.t1").map(|_| kv.require("voxelize.t1")).transpose().map_err(cfg_err)?;
    let vox_bins: usize = kv.parse_or("voxelize.bins", 5).map_err(cfg_err)?;
    let vox_weights = kv.get("voxelize.weights").map(str::to_string);
    let vox_strict: bool = kv.parse_or("voxelize.strict_eq5", false).map_err(cfg_err)?;
    let den_t0: u64 = kv.parse_or("density.t0", 0).map_err(cfg_err)?;
    let den_t1: Option<u64> = kv.get("density.t1").map(|_| kv.require("density.t1")).transpose().map_err(cfg_err)?;

    let out_dir = resolve(kv.get("out_dir").unwrap_or("."));
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;

    let mut manifest = Manifest { text: String::new() };
    manifest.text.push_str("# evlume pipeline manifest\n");
    let _ = writeln!(manifest.text, "manifest_version=1");
    let _ = writeln!(manifest.text, "evlume_version={}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(manifest.text, "formats=EVT1,VOX1,WGT1,PGM-P5");
    let config_name = config_path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
    manifest.file("config", &config_name, &config_bytes);
    let mut keys: Vec<&str> = kv.keys().collect();
    keys.sort_unstable();
    keys.dedup();
    for k in keys {
        let _ = writeln!(manifest.text, "param {k}={}", kv.get(k).unwrap_or(""));
    }
    let _ = writeln!(manifest.text, "param ets.effective={:?}", ets_cfg);

    let mut events: Option<EventStream> = None;
    let mut duration: Option<u64> = None;
    if let Some(p) = &input {
        let path = resolve(p);
        let bytes = read_bytes(&path)?;
        manifest.file("input", p, &bytes);
        events = Some(evio::decode_events(&bytes).map_err(|e| e.in_file(&path))?);
    }

    for (i, stage) in stages.iter().enumerate() {
        let out_name = format!("{:02}_{}.{}", i + 1, stage.name(), stage.extension());
        let out_path = out_dir.join(&out_name);
        let stage_err = |e: CliError| match e {
            CliError::Usage(m) => CliError::Usage(format!("stage {} `{}`: {m}", i + 1, stage.name())),
            io => io,
        };
        let bytes = match stage {
            Stage::Simulate => {
                let scene_key: String = kv.require("simulate.scene").map_err(cfg_err).map_err(stage_err)?;
                let scene_path = resolve(&scene_key);
                manifest.file("input", &scene_key, &read_bytes(&scene_path)?);
                let scene = commands::load_scene(&scene_path, grid_us, seed).map_err(stage_err)?;
                let stream = commands::render(&scene, &commands::sensor_params(threshold)).map_err(stage_err)?;
                duration = Some(scene.duration_us);
                let bytes = evio::encode_events(&stream)?;
                events = Some(stream);
                bytes
            }
            Stage::Ets => {
                let stream = events.take().expect("chain checked");
                let (out, stats) = ets::suppress_with_statistics(&stream, &ets_cfg);
                if ets_report {
                    let name = format!("{:02}_ets.report.txt", i + 1);
                    let report = stats.to_report();
                    write_bytes(&out_dir.join(&name), report.as_bytes())?;
                    manifest.file("output", &name, report.as_bytes());
                }
                let bytes = evio::encode_events(&out)?;
                events = Some(out);
                bytes
            }
            Stage::Voxelize => {
                let stream = events.as_ref().expect("chain checked");
                let t1 = vox_t1.unwrap_or_else(|| default_end(stream, duration));
                let weights = match &vox_weights {
                    Some(w) => {
                        let p = resolve(w);
                        manifest.file("input", w, &read_bytes(&p)?);
                        Some(p)
                    }
                    None => None,
                };
                let opts = VoxelOptions {
                    t0: vox_t0,
                    t1,
                    bins: vox_bins,
                    weights: weights.as_deref(),
                    strict_eq5: vox_strict,
                };
                let grid = commands::voxelize_stream(stream, &opts).map_err(stage_err)?;
                evio::encode_voxels(&grid)?
            }
            Stage::Density => {
                let stream = events.as_ref().expect("chain checked");
                let t1 = den_t1.unwrap_or_else(|| default_end(stream, duration) + 1);
                let image = commands::density_image(stream, den_t0, t1).map_err(stage_err)?;
                evio::encode_pgm(&image)
            }
        };
        write_bytes(&out_path, &bytes)?;
        let _ = writeln!(manifest.text, "stage {} {}", i + 1, stage.name());
        manifest.file("output", &out_name, &bytes);
    }
    write_bytes(&out_dir.join("manifest.txt"), manifest.text.as_bytes())
}

/// Window end when none is configured: the scene duration if a scene was
/// rendered, else the last event time.
fn default_end(stream: &EventStream, duration: Option<u64>) -> u64 {
    duration.unwrap_or_else(|| stream.events().last().map_or(1, |e| e.t.max(1)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_checks() {
        use Stage::*;
        assert!(check_chain(&[Simulate, Ets, Voxelize], false).is_ok());
        assert!(check_chain(&[Ets, Density], true).is_ok());
        let msg = |s: &[Stage], input| match check_chain(s, input) {
            Err(CliError::Usage(m)) => m,
            other => panic!("{other:?}"),
        };
        assert!(msg(&[Simulate, Voxelize, Ets], false).contains("stage 3 `ets`"));
        assert!(msg(&[Ets], false).contains("stage 1 `ets`"));
        assert!(msg(&[Simulate, Simulate], false).contains("stage 2 `simulate`"));
        assert!(msg(&[Simulate], true).contains("conflicts"));
        assert!(msg(&[], false).contains("no stages"));
    }
}

//! Event-camera toolkit for low and non-uniform illumination.
//!
//! - [`sensor`]: photoreceptor physics and a forward event simulator with
//!   illumination-dependent trailing.
//! - [`ets`]: detection and timestamp realignment of trailing-event chains.
//! - [`voxel`]: bilinear and table-driven voxel grids, plus trail-free label
//!   grids.
//! - [`metrics`]: MSE, SSIM, lightness-order error and interval histograms.
//! - [`evio`]: EVT1 / VOX1 / WGT1 / PGM codecs and key=value configs.

// Parameter checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ets;
pub mod event;
pub mod evio;
pub mod image;
pub mod metrics;
pub mod sensor;
pub mod voxel;

pub use ets::{suppress, EtsConfig, TrailChain};
pub use event::{Event, EventStream, Pixel, Polarity, SensorGeometry};
pub use image::GrayImage;
pub use sensor::{generate_events, PhotoreceptorParams, SceneSpec};
pub use voxel::{voxelize_bilinear, voxelize_weighted, VoxelGrid, WeightTable};

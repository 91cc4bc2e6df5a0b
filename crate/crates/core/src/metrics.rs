//! Image quality metrics and event-interval diagnostics.

use rayon::prelude::*;
use thiserror::Error;

use crate::event::EventStream;
pub use crate::image::GrayImage;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("image geometries differ: {0}x{1} vs {2}x{3}")]
    GeometryMismatch(u16, u16, u16, u16),
    #[error("image {width}x{height} is smaller than the {window}x{window} SSIM window")]
    ImageTooSmall { width: u16, height: u16, window: usize },
    #[error("LOE sample grid must be at least 2, got {0}")]
    GridTooSmall(usize),
    #[error("bucket edges must be strictly increasing with at least two entries")]
    UnsortedEdges,
}

/// SSIM window side, pixels.
pub const SSIM_WINDOW: usize = 8;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Default LOE down-sampling grid.
pub const DEFAULT_LOE_GRID: usize = 100;

fn same_geometry(a: &GrayImage, b: &GrayImage) -> Result<(), MetricError> {
    let (ga, gb) = (a.geometry(), b.geometry());
    if ga != gb {
        return Err(MetricError::GeometryMismatch(ga.width(), ga.height(), gb.width(), gb.height()));
    }
    Ok(())
}

/// Mean squared error.
pub fn mse(a: &GrayImage, b: &GrayImage) -> Result<f64, MetricError> {
    same_geometry(a, b)?;
    let sum: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.values().len() as f64)
}

/// Structural similarity over non-overlapping 8x8 windows with uniform
/// weights, averaged over all complete windows. Partial windows at the right
/// and bottom edges are ignored.
pub fn ssim(a: &GrayImage, b: &GrayImage) -> Result<f64, MetricError> {
    same_geometry(a, b)?;
    let g = a.geometry();
    let (w, h) = (g.width() as usize, g.height() as usize);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(MetricError::ImageTooSmall { width: g.width(), height: g.height(), window: SSIM_WINDOW });
    }
    let (nx, ny) = (w / SSIM_WINDOW, h / SSIM_WINDOW);
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let mut total = 0.0;
    for wy in 0..ny {
        for wx in 0..nx {
            let (mut sa, mut sb) = (0.0, 0.0);
            let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
            for y in wy * SSIM_WINDOW..(wy + 1) * SSIM_WINDOW {
                for x in wx * SSIM_WINDOW..(wx + 1) * SSIM_WINDOW {
                    let (va, vb) = (a.values()[y * w + x], b.values()[y * w + x]);
                    sa += va;
                    sb += vb;
                    saa += va * va;
                    sbb += vb * vb;
                    sab += va * vb;
                }
            }
            let (ma, mb) = (sa / n, sb / n);
            let var_a = (saa / n - ma * ma).max(0.0);
            let var_b = (sbb / n - mb * mb).max(0.0);
            let cov = sab / n - ma * mb;
            let num = (2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2);
            let den = (ma * ma + mb * mb + SSIM_C1) * (var_a + var_b + SSIM_C2);
            total += num / den;
        }
    }
    Ok(total / (nx * ny) as f64)
}

/// Nearest-neighbour sample positions along one axis.
fn sample_axis(len: usize, grid: usize) -> Vec<usize> {
    let n = len.min(grid);
    (0..n).map(|i| i * len / n).collect()
}

/// Lightness-order error: the number of strictly inverted ordered pairs
/// between `reference` and `test`, divided by the number of sampled
/// positions. Both images are sampled on at most `grid x grid` positions.
/// Ties are never inversions.
pub fn loe(reference: &GrayImage, test: &GrayImage, grid: usize) -> Result<f64, MetricError> {
    same_geometry(reference, test)?;
    if grid < 2 {
        return Err(MetricError::GridTooSmall(grid));
    }
    let g = reference.geometry();
    let xs = sample_axis(g.width() as usize, grid);
    let ys = sample_axis(g.height() as usize, grid);
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            pairs.push((reference.get(x as u16, y as u16), test.get(x as u16, y as u16)));
        }
    }
    let m = pairs.len();
    let inversions: u64 = pairs
        .par_iter()
        .map(|&(ra, ta)| pairs.iter().filter(|&&(rb, tb)| (ra < rb && ta > tb) || (ra > rb && ta < tb)).count() as u64)
        .sum();
    Ok(inversions as f64 / m as f64)
}

/// Histogram over `[edges[i], edges[i+1])` buckets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalHistogram {
    pub edges: Vec<u64>,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl IntervalHistogram {
    pub fn new(edges: &[u64]) -> Result<Self, MetricError> {
        if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MetricError::UnsortedEdges);
        }
        Ok(Self { edges: edges.to_vec(), counts: vec![0; edges.len() - 1], underflow: 0, overflow: 0 })
    }

    pub fn add(&mut self, value: u64) {
        if value < self.edges[0] {
            self.underflow += 1;
        } else if value >= *self.edges.last().unwrap() {
            self.overflow += 1;
        } else {
            let i = self.edges.partition_point(|&e| e <= value) - 1;
            self.counts[i] += 1;
        }
    }

    /// Everything counted, including out-of-range values.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }
}

/// Histogram of per-pixel consecutive-event intervals.
pub fn interval_histogram(stream: &EventStream, edges: &[u64]) -> Result<IntervalHistogram, MetricError> {
    let mut h = IntervalHistogram::new(edges)?;
    for dt in stream.pixel_intervals() {
        h.add(dt);
    }
    Ok(h)
}

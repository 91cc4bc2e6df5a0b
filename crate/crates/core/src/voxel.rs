//! Voxel-grid event representations.
//!
//! [`voxelize_bilinear`] spreads each event over the two temporally nearest
//! bins with a triangular kernel. [`voxelize_weighted`] looks up a full row of
//! bin weights per normalized timestamp from a [`WeightTable`], which is how
//! learned timestamp weightings are deployed.

use thiserror::Error;

use crate::ets::{self, EtsConfig};
use crate::event::{EventStream, SensorGeometry};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VoxelError {
    #[error("empty or reversed window: t0 = {t0}, t1 = {t1}")]
    InvalidWindow { t0: u64, t1: u64 },
    #[error("bin count must be at least 1")]
    NoBins,
    #[error("weight table needs at least one row and one bin, got {resolution}x{bins}")]
    EmptyTable { resolution: usize, bins: usize },
    #[error("weight table has {actual} values, expected {expected}")]
    TableShape { expected: usize, actual: usize },
    #[error("weight table row {row} sums to {sum}, expected 1 +/- 1e-4")]
    RowSum { row: usize, sum: f64 },
    #[error("weight table has {table} bins but {requested} were requested")]
    BinMismatch { table: usize, requested: usize },
}

/// Normalization of event time inside the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimeNormalization {
    /// Position relative to the requested window `[t0, t1]`.
    #[default]
    Window,
    /// Position relative to the first and last event inside the window.
    EventSpan,
}

/// Dense `bins x height x width` tensor of signed event mass.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    bins: usize,
    geometry: SensorGeometry,
    window: (u64, u64),
    data: Vec<f64>,
}

impl VoxelGrid {
    pub fn zeros(bins: usize, geometry: SensorGeometry, window: (u64, u64)) -> Self {
        Self { bins, geometry, window, data: vec![0.0; bins * geometry.len()] }
    }

    /// Wraps raw `(bin, row, col)`-ordered values.
    pub fn from_data(bins: usize, geometry: SensorGeometry, window: (u64, u64), data: Vec<f64>) -> Option<Self> {
        (data.len() == bins * geometry.len()).then_some(Self { bins, geometry, window, data })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn window(&self) -> (u64, u64) {
        self.window
    }

    /// Values in `(bin, row, col)` order.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, bin: usize, x: u16, y: u16) -> f64 {
        self.data[bin * self.geometry.len() + self.geometry.index(x, y)]
    }

    #[inline]
    fn add(&mut self, bin: usize, pixel: usize, value: f64) {
        self.data[bin * self.geometry.len() + pixel] += value;
    }

    /// Bin profile at one pixel.
    pub fn pixel_bins(&self, x: u16, y: u16) -> Vec<f64> {
        (0..self.bins).map(|k| self.get(k, x, y)).collect()
    }

    /// Sum of all values.
    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Mass-weighted variance of the bin index at one pixel, using `|value|`
    /// as mass. `None` when the pixel holds no mass.
    pub fn temporal_spread(&self, x: u16, y: u16) -> Option<f64> {
        let mass: Vec<f64> = self.pixel_bins(x, y).into_iter().map(f64::abs).collect();
        let total: f64 = mass.iter().sum();
        if total == 0.0 {
            return None;
        }
        let mean = mass.iter().enumerate().map(|(k, m)| k as f64 * m).sum::<f64>() / total;
        Some(mass.iter().enumerate().map(|(k, m)| m * (k as f64 - mean).powi(2)).sum::<f64>() / total)
    }
}

/// Events dropped during voxelization.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VoxelReport {
    pub used: usize,
    pub outside_window: usize,
}

/// Validated `resolution x bins` table of per-timestamp bin weights.
///
/// Row `r` applies to normalized time `r / (resolution - 1)`; lookup picks
/// the nearest row.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    resolution: usize,
    bins: usize,
    weights: Vec<f64>,
}

/// Allowed deviation of a row sum from 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-4;

/// Default number of table rows.
pub const DEFAULT_RESOLUTION: usize = 256;

/// Default bin count.
pub const DEFAULT_BINS: usize = 5;

impl WeightTable {
    pub fn new(resolution: usize, bins: usize, weights: Vec<f64>) -> Result<Self, VoxelError> {
        if resolution == 0 || bins == 0 {
            return Err(VoxelError::EmptyTable { resolution, bins });
        }
        if weights.len() != resolution * bins {
            return Err(VoxelError::TableShape { expected: resolution * bins, actual: weights.len() });
        }
        for (row, chunk) in weights.chunks(bins).enumerate() {
            let sum: f64 = chunk.iter().sum();
            if !((sum - 1.0).abs() <= ROW_SUM_TOLERANCE) {
                return Err(VoxelError::RowSum { row, sum });
            }
        }
        Ok(Self { resolution, bins, weights })
    }

    /// Rows sampled from the triangular kernel; reproduces bilinear
    /// voxelization up to row quantization.
    pub fn bilinear(resolution: usize, bins: usize) -> Result<Self, VoxelError> {
        if resolution == 0 || bins == 0 {
            return Err(VoxelError::EmptyTable { resolution, bins });
        }
        let mut weights = vec![0.0; resolution * bins];
        for r in 0..resolution {
            let u = Self::row_position(r, resolution) * (bins - 1) as f64;
            let (k0, frac) = split(u, bins);
            weights[r * bins + k0] += 1.0 - frac;
            if frac > 0.0 {
                weights[r * bins + k0 + 1] += frac;
            }
        }
        Self::new(resolution, bins, weights)
    }

    pub fn uniform(resolution: usize, bins: usize) -> Result<Self, VoxelError> {
        Self::new(resolution, bins, vec![1.0 / bins as f64; resolution * bins])
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.weights[r * self.bins..(r + 1) * self.bins]
    }

    fn row_position(r: usize, resolution: usize) -> f64 {
        if resolution == 1 {
            0.0
        } else {
            r as f64 / (resolution - 1) as f64
        }
    }

    /// Row for normalized time `u` in `[0, 1]`.
    pub fn lookup(&self, u: f64) -> &[f64] {
        let r = (u * (self.resolution - 1) as f64).round().clamp(0.0, (self.resolution - 1) as f64);
        self.row(r as usize)
    }
}

/// Splits a bin coordinate into its lower bin and fractional weight, keeping
/// the upper bin in range.
#[inline]
fn split(u: f64, bins: usize) -> (usize, f64) {
    let k0 = u.floor();
    let k0u = k0 as usize;
    if k0u + 1 >= bins {
        (bins - 1, 0.0)
    } else {
        (k0u, u - k0)
    }
}

struct Normalizer {
    t0: f64,
    span: f64,
}

impl Normalizer {
    fn new(stream: &EventStream, t0: u64, t1: u64, mode: TimeNormalization) -> Self {
        match mode {
            TimeNormalization::Window => Self { t0: t0 as f64, span: (t1 - t0) as f64 },
            TimeNormalization::EventSpan => {
                let mut inside = stream.events().iter().filter(|e| e.t >= t0 && e.t <= t1);
                let first = inside.next().map(|e| e.t);
                let last = inside.next_back().map(|e| e.t).or(first);
                match (first, last) {
                    (Some(a), Some(b)) => Self { t0: a as f64, span: (b - a) as f64 },
                    _ => Self { t0: t0 as f64, span: (t1 - t0) as f64 },
                }
            }
        }
    }

    /// Normalized time in `[0, 1]`; a zero span maps everything to 0.
    #[inline]
    fn unit(&self, t: u64) -> f64 {
        if self.span == 0.0 {
            0.0
        } else {
            (t as f64 - self.t0) / self.span
        }
    }
}

fn check_window(t0: u64, t1: u64) -> Result<(), VoxelError> {
    if t0 >= t1 {
        return Err(VoxelError::InvalidWindow { t0, t1 });
    }
    Ok(())
}

/// Triangular-kernel voxelization of events with `t` in `[t0, t1]`.
pub fn voxelize_bilinear(
    stream: &EventStream,
    t0: u64,
    t1: u64,
    bins: usize,
) -> Result<(VoxelGrid, VoxelReport), VoxelError> {
    voxelize_bilinear_with(stream, t0, t1, bins, TimeNormalization::Window)
}

pub fn voxelize_bilinear_with(
    stream: &EventStream,
    t0: u64,
    t1: u64,
    bins: usize,
    mode: TimeNormalization,
) -> Result<(VoxelGrid, VoxelReport), VoxelError> {
    check_window(t0, t1)?;
    if bins == 0 {
        return Err(VoxelError::NoBins);
    }
    let geometry = stream.geometry();
    let norm = Normalizer::new(stream, t0, t1, mode);
    let scale = (bins - 1) as f64;
    let mut grid = VoxelGrid::zeros(bins, geometry, (t0, t1));
    let mut report = VoxelReport::default();
    for e in stream.events() {
        if e.t < t0 || e.t > t1 {
            report.outside_window += 1;
            continue;
        }
        report.used += 1;
        let (k0, frac) = split(norm.unit(e.t) * scale, bins);
        let px = geometry.index(e.x, e.y);
        let p = e.p.sign();
        grid.add(k0, px, p * (1.0 - frac));
        if frac > 0.0 {
            grid.add(k0 + 1, px, p * frac);
        }
    }
    Ok((grid, report))
}

/// Table-driven voxelization: each event adds `p * row(u)` across all bins.
pub fn voxelize_weighted(
    stream: &EventStream,
    t0: u64,
    t1: u64,
    table: &WeightTable,
) -> Result<(VoxelGrid, VoxelReport), VoxelError> {
    voxelize_weighted_with(stream, t0, t1, table, TimeNormalization::Window)
}

pub fn voxelize_weighted_with(
    stream: &EventStream,
    t0: u64,
    t1: u64,
    table: &WeightTable,
    mode: TimeNormalization,
) -> Result<(VoxelGrid, VoxelReport), VoxelError> {
    check_window(t0, t1)?;
    let geometry = stream.geometry();
    let norm = Normalizer::new(stream, t0, t1, mode);
    let mut grid = VoxelGrid::zeros(table.bins(), geometry, (t0, t1));
    let mut report = VoxelReport::default();
    for e in stream.events() {
        if e.t < t0 || e.t > t1 {
            report.outside_window += 1;
            continue;
        }
        report.used += 1;
        let px = geometry.index(e.x, e.y);
        let p = e.p.sign();
        for (k, w) in table.lookup(norm.unit(e.t)).iter().enumerate() {
            if *w != 0.0 {
                grid.add(k, px, p * w);
            }
        }
    }
    Ok((grid, report))
}

/// Bilinear voxel grid of the trail-suppressed stream: the training target
/// for learned timestamp weighting.
pub fn ets_voxel_labels(
    stream: &EventStream,
    config: &EtsConfig,
    t0: u64,
    t1: u64,
    bins: usize,
) -> Result<(VoxelGrid, VoxelReport), VoxelError> {
    let (clean, _) = ets::suppress(stream, config);
    voxelize_bilinear(&clean, t0, t1, bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{Event, Polarity};
    use proptest::prelude::*;

    fn geo() -> SensorGeometry {
        SensorGeometry::new(2, 1).unwrap()
    }

    fn one(t: u64, p: Polarity) -> EventStream {
        EventStream::new(geo(), vec![Event::new(t, 0, 0, p)])
    }

    #[test]
    fn kernel_peak_and_split() {
        // Window [0, 1000], B = 5: u = t / 250.
        let (g, _) = voxelize_bilinear(&one(500, Polarity::On), 0, 1000, 5).unwrap();
        assert_eq!(g.pixel_bins(0, 0), vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        let (g, _) = voxelize_bilinear(&one(575, Polarity::On), 0, 1000, 5).unwrap();
        let b = g.pixel_bins(0, 0);
        assert!((b[2] - 0.7).abs() < 1e-12 && (b[3] - 0.3).abs() < 1e-12);
        assert_eq!(b[0] + b[1] + b[4], 0.0);
    }

    #[test]
    fn window_end_goes_to_last_bin() {
        let (g, r) = voxelize_bilinear(&one(1000, Polarity::Off), 0, 1000, 5).unwrap();
        assert_eq!(g.get(4, 0, 0), -1.0);
        assert_eq!(r.used, 1);
        let (g, _) = voxelize_bilinear(&one(700, Polarity::On), 0, 1000, 1).unwrap();
        assert_eq!(g.pixel_bins(0, 0), vec![1.0]);
    }

    #[test]
    fn polarity_cancels() {
        let g = SensorGeometry::new(1, 1).unwrap();
        // Two events at one pixel and the same normalized time cannot coexist
        // in a valid stream, but accumulation does not care.
        let s = EventStream::new(g, vec![Event::new(300, 0, 0, Polarity::On), Event::new(300, 0, 0, Polarity::Off)]);
        let (v, _) = voxelize_bilinear(&s, 0, 1000, 5).unwrap();
        assert!(v.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn outside_events_are_reported() {
        let s = EventStream::new(
            geo(),
            vec![
                Event::new(5, 0, 0, Polarity::On),
                Event::new(50, 1, 0, Polarity::On),
                Event::new(500, 0, 0, Polarity::On),
            ],
        );
        let (g, r) = voxelize_bilinear(&s, 10, 100, 3).unwrap();
        assert_eq!(r, VoxelReport { used: 1, outside_window: 2 });
        assert!((g.total() - 1.0).abs() < 1e-12);
        assert!(voxelize_bilinear(&s, 10, 10, 3).is_err());
        assert!(voxelize_bilinear(&s, 0, 10, 0).is_err());
    }

    #[test]
    fn empty_stream_gives_zero_grid() {
        let s = EventStream::empty(geo());
        let (g, _) = voxelize_bilinear(&s, 0, 10, 4).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
        let t = WeightTable::uniform(16, 4).unwrap();
        let (g, _) = voxelize_weighted(&s, 0, 10, &t).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn event_span_mode() {
        let s = EventStream::new(geo(), vec![Event::new(100, 0, 0, Polarity::On), Event::new(300, 1, 0, Polarity::On)]);
        let (g, _) = voxelize_bilinear_with(&s, 0, 1000, 3, TimeNormalization::EventSpan).unwrap();
        assert_eq!(g.get(0, 0, 0), 1.0);
        assert_eq!(g.get(2, 1, 0), 1.0);
        let single = one(40, Polarity::On);
        let (g, _) = voxelize_bilinear_with(&single, 0, 1000, 3, TimeNormalization::EventSpan).unwrap();
        assert_eq!(g.get(0, 0, 0), 1.0);
    }

    #[test]
    fn uniform_table_spreads_count() {
        let g = SensorGeometry::new(1, 1).unwrap();
        let s = EventStream::new(
            g,
            vec![
                Event::new(1, 0, 0, Polarity::On),
                Event::new(5, 0, 0, Polarity::On),
                Event::new(9, 0, 0, Polarity::On),
                Event::new(10, 0, 0, Polarity::Off),
            ],
        );
        let t = WeightTable::uniform(32, 4).unwrap();
        let (v, _) = voxelize_weighted(&s, 0, 10, &t).unwrap();
        for k in 0..4 {
            assert!((v.get(k, 0, 0) - 2.0 / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn table_validation() {
        assert!(matches!(WeightTable::new(2, 2, vec![0.5, 0.5, 0.6, 0.5]), Err(VoxelError::RowSum { row: 1, .. })));
        assert!(WeightTable::new(2, 2, vec![0.5, 0.5]).is_err());
        assert!(WeightTable::new(0, 2, vec![]).is_err());
        assert!(WeightTable::new(1, 2, vec![0.5, 0.50005]).is_ok());
        let b = WeightTable::bilinear(5, 3).unwrap();
        assert_eq!(b.row(0), &[1.0, 0.0, 0.0]);
        assert_eq!(b.row(2), &[0.0, 1.0, 0.0]);
        assert_eq!(b.row(4), &[0.0, 0.0, 1.0]);
        assert_eq!(b.row(1), &[0.5, 0.5, 0.0]);
    }

    #[test]
    fn spread_prefers_concentrated_mass() {
        let g = SensorGeometry::new(1, 1).unwrap();
        let sharp = VoxelGrid::from_data(5, g, (0, 1), vec![0.0, 3.0, 0.0, 0.0, 0.0]).unwrap();
        let wide = VoxelGrid::from_data(5, g, (0, 1), vec![1.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(sharp.temporal_spread(0, 0), Some(0.0));
        assert!(wide.temporal_spread(0, 0).unwrap() > 0.0);
        let empty = VoxelGrid::zeros(5, g, (0, 1));
        assert_eq!(empty.temporal_spread(0, 0), None);
    }

    proptest! {
        #[test]
        fn single_event_mass_is_one(t in 0u64..=10_000, bins in 1usize..20) {
            let (g, _) = voxelize_bilinear(&one(t, Polarity::On), 0, 10_000, bins).unwrap();
            let mass: f64 = g.pixel_bins(0, 0).iter().map(|v| v.abs()).sum();
            prop_assert_eq!(mass, 1.0);
        }

        #[test]
        fn polarity_flip_negates(ts in proptest::collection::btree_set(0u64..5000, 0..40), bins in 1usize..8) {
            let g = SensorGeometry::new(1, 1).unwrap();
            let ev: Vec<Event> = ts.iter().enumerate()
                .map(|(i, &t)| Event::new(t, 0, 0, if i % 3 == 0 { Polarity::Off } else { Polarity::On }))
                .collect();
            let flipped: Vec<Event> = ev.iter().map(|e| Event { p: e.p.flipped(), ..*e }).collect();
            let (a, _) = voxelize_bilinear(&EventStream::new(g, ev), 0, 5000, bins).unwrap();
            let (b, _) = voxelize_bilinear(&EventStream::new(g, flipped), 0, 5000, bins).unwrap();
            for (x, y) in a.data().iter().zip(b.data()) {
                prop_assert_eq!(*x, -*y);
            }
        }

        #[test]
        fn linear_over_disjoint_streams(
            a in proptest::collection::vec((0u64..2000, 0u16..2, any::<bool>()), 0..40),
            b in proptest::collection::vec((0u64..2000, 0u16..2, any::<bool>()), 0..40),
        ) {
            let mk = |raw: &[(u64, u16, bool)]| -> Vec<Event> {
                raw.iter().map(|&(t, x, on)| Event::new(t, x, 0, if on { Polarity::On } else { Polarity::Off })).collect()
            };
            let (ea, eb) = (mk(&a), mk(&b));
            let mut all = ea.clone();
            all.extend(eb.iter().copied());
            let (va, _) = voxelize_bilinear(&EventStream::new(geo(), ea), 0, 2000, 5).unwrap();
            let (vb, _) = voxelize_bilinear(&EventStream::new(geo(), eb), 0, 2000, 5).unwrap();
            let (vall, _) = voxelize_bilinear(&EventStream::new(geo(), all), 0, 2000, 5).unwrap();
            for i in 0..vall.data().len() {
                prop_assert!((vall.data()[i] - va.data()[i] - vb.data()[i]).abs() < 1e-9);
            }
        }
    }
}

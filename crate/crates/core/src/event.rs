//! Event data model: events, streams, validation, slicing, per-pixel grouping
//! and density maps.

use std::fmt;

use thiserror::Error;

/// Errors raised by event-stream utilities.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EventError {
    #[error("sensor geometry must be at least 1x1, got {width}x{height}")]
    EmptyGeometry { width: u16, height: u16 },
    #[error("invalid time window: t0 = {t0} > t1 = {t1}")]
    InvalidWindow { t0: u64, t1: u64 },
    #[error("polarity must be +1 or -1, got {0}")]
    InvalidPolarity(i64),
}

/// Sign of a brightness change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Off,
    On,
}

impl Polarity {
    pub fn from_sign(sign: i64) -> Result<Self, EventError> {
        match sign {
            1 => Ok(Polarity::On),
            -1 => Ok(Polarity::Off),
            other => Err(EventError::InvalidPolarity(other)),
        }
    }

    #[inline]
    pub fn as_i8(self) -> i8 {
        match self {
            Polarity::On => 1,
            Polarity::Off => -1,
        }
    }

    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Polarity::On => 1.0,
            Polarity::Off => -1.0,
        }
    }

    #[inline]
    pub fn flipped(self) -> Self {
        match self {
            Polarity::On => Polarity::Off,
            Polarity::Off => Polarity::On,
        }
    }
}

/// A single pixel activation. Timestamps are integer microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub p: Polarity,
}

impl Event {
    pub fn new(t: u64, x: u16, y: u16, p: Polarity) -> Self {
        Self { t, x, y, p }
    }

    /// Canonical ordering key: time, then row, then column.
    #[inline]
    pub fn canonical_key(&self) -> (u64, u16, u16) {
        (self.t, self.y, self.x)
    }

    #[inline]
    pub fn pixel(&self) -> Pixel {
        Pixel { x: self.x, y: self.y }
    }
}

/// Pixel coordinate. Ordered row-major, i.e. by `(y, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Pixel {
    pub x: u16,
    pub y: u16,
}

impl Ord for Pixel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.y, self.x).cmp(&(other.y, other.x))
    }
}

impl PartialOrd for Pixel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Sensor resolution in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SensorGeometry {
    width: u16,
    height: u16,
}

impl SensorGeometry {
    pub fn new(width: u16, height: u16) -> Result<Self, EventError> {
        if width == 0 || height == 0 {
            return Err(EventError::EmptyGeometry { width, height });
        }
        Ok(Self { width, height })
    }

    #[inline]
    pub fn width(&self) -> u16 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u16 {
        self.height
    }

    /// Number of pixels.
    #[inline]
    pub fn len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn contains(&self, x: u16, y: u16) -> bool {
        x < self.width && y < self.height
    }

    /// Row-major linear index of a pixel.
    #[inline]
    pub fn index(&self, x: u16, y: u16) -> usize {
        y as usize * self.width as usize + x as usize
    }

    #[inline]
    pub fn pixel_at(&self, index: usize) -> Pixel {
        let w = self.width as usize;
        Pixel { x: (index % w) as u16, y: (index / w) as u16 }
    }
}

/// The reason a stream failed validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    OutOfBounds,
    /// Global timestamps decreased.
    NonDecreasing,
    /// Two events at one pixel without a strictly increasing timestamp.
    PixelStrictlyIncreasing,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ViolationKind::OutOfBounds => "pixel outside sensor geometry",
            ViolationKind::NonDecreasing => "timestamps must be non-decreasing",
            ViolationKind::PixelStrictlyIncreasing => "per-pixel strictly increasing",
        };
        f.write_str(s)
    }
}

/// First violated stream invariant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub index: usize,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "event {}: {}", self.index, self.kind)
    }
}

/// An ordered sequence of events on a sensor.
///
/// Construction does not validate; call [`EventStream::validate`] before
/// handing a stream of unknown provenance to the per-pixel algorithms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    geometry: SensorGeometry,
    events: Vec<Event>,
}

impl EventStream {
    pub fn new(geometry: SensorGeometry, events: Vec<Event>) -> Self {
        Self { geometry, events }
    }

    pub fn empty(geometry: SensorGeometry) -> Self {
        Self { geometry, events: Vec::new() }
    }

    #[inline]
    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    #[inline]
    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.events.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Checks every stream invariant and reports the first violation.
    pub fn validate(&self) -> Result<(), Violation> {
        let mut last_at_pixel: Vec<Option<u64>> = vec![None; self.geometry.len()];
        let mut prev_t = 0u64;
        for (index, e) in self.events.iter().enumerate() {
            if !self.geometry.contains(e.x, e.y) {
                return Err(Violation { index, kind: ViolationKind::OutOfBounds });
            }
            if index > 0 && e.t < prev_t {
                return Err(Violation { index, kind: ViolationKind::NonDecreasing });
            }
            let slot = &mut last_at_pixel[self.geometry.index(e.x, e.y)];
            if matches!(*slot, Some(last) if e.t <= last) {
                return Err(Violation { index, kind: ViolationKind::PixelStrictlyIncreasing });
            }
            *slot = Some(e.t);
            prev_t = e.t;
        }
        Ok(())
    }

    /// True when events are strictly ordered by `(t, y, x)`.
    pub fn is_canonical(&self) -> bool {
        self.events.windows(2).all(|w| w[0].canonical_key() < w[1].canonical_key())
    }

    /// Sorts into canonical `(t, y, x)` order. Valid streams have unique keys,
    /// so the result does not depend on the input order of ties.
    pub fn canonicalize(&mut self) {
        if !self.is_canonical() {
            self.events.sort_by_key(Event::canonical_key);
        }
    }

    /// Events with `t` in `[t0, t1)`, original order preserved.
    pub fn slice_time(&self, t0: u64, t1: u64) -> Result<EventStream, EventError> {
        if t0 > t1 {
            return Err(EventError::InvalidWindow { t0, t1 });
        }
        let events = self.events.iter().filter(|e| e.t >= t0 && e.t < t1).copied().collect();
        Ok(EventStream { geometry: self.geometry, events })
    }

    /// Groups event indices by pixel; each group keeps stream order.
    pub fn group_by_pixel(&self) -> PixelGroups {
        PixelGroups::build(self)
    }

    /// Per-pixel event counts over `[t0, t1)`.
    pub fn density_map(&self, t0: u64, t1: u64) -> Result<DensityMap, EventError> {
        if t0 > t1 {
            return Err(EventError::InvalidWindow { t0, t1 });
        }
        let mut counts = vec![0u32; self.geometry.len()];
        for e in self.events.iter().filter(|e| e.t >= t0 && e.t < t1) {
            counts[self.geometry.index(e.x, e.y)] += 1;
        }
        let max = counts.iter().copied().max().unwrap_or(0);
        let normalized =
            if max == 0 { vec![0.0; counts.len()] } else { counts.iter().map(|&c| c as f64 / max as f64).collect() };
        Ok(DensityMap { geometry: self.geometry, window: (t0, t1), counts, normalized })
    }

    /// Consecutive-event intervals at each pixel, in microseconds.
    pub fn pixel_intervals(&self) -> Vec<u64> {
        let groups = self.group_by_pixel();
        let mut out = Vec::with_capacity(self.events.len());
        for (_, idx) in groups.iter() {
            out.extend(idx.windows(2).map(|w| self.events[w[1]].t - self.events[w[0]].t));
        }
        out
    }
}

/// Event indices grouped by pixel, stored contiguously (CSR layout).
///
/// Pixels are visited in row-major order; within a pixel, indices follow the
/// stream order.
#[derive(Debug, Clone)]
pub struct PixelGroups {
    pixels: Vec<Pixel>,
    offsets: Vec<usize>,
    indices: Vec<usize>,
}

impl PixelGroups {
    fn build(stream: &EventStream) -> Self {
        let geometry = stream.geometry;
        let events = &stream.events;
        let n_pixels = geometry.len();
        // Counting sort when the pixel table is not much larger than the stream.
        if n_pixels <= (1 << 22).max(events.len().saturating_mul(4)) {
            let mut counts = vec![0usize; n_pixels + 1];
            for e in events {
                counts[geometry.index(e.x, e.y) + 1] += 1;
            }
            for i in 1..counts.len() {
                counts[i] += counts[i - 1];
            }
            let mut cursor = counts.clone();
            let mut sorted = vec![0usize; events.len()];
            for (i, e) in events.iter().enumerate() {
                let slot = &mut cursor[geometry.index(e.x, e.y)];
                sorted[*slot] = i;
                *slot += 1;
            }
            let mut pixels = Vec::new();
            let mut offsets = vec![0usize];
            for p in 0..n_pixels {
                if counts[p + 1] > counts[p] {
                    pixels.push(geometry.pixel_at(p));
                    offsets.push(counts[p + 1]);
                }
            }
            Self { pixels, offsets, indices: sorted }
        } else {
            let mut sorted: Vec<usize> = (0..events.len()).collect();
            sorted.sort_by_key(|&i| geometry.index(events[i].x, events[i].y));
            let mut pixels = Vec::new();
            let mut offsets = vec![0usize];
            for (pos, &i) in sorted.iter().enumerate() {
                let px = events[i].pixel();
                if pixels.last() != Some(&px) {
                    if !pixels.is_empty() {
                        offsets.push(pos);
                    }
                    pixels.push(px);
                }
            }
            if !pixels.is_empty() {
                offsets.push(sorted.len());
            }
            Self { pixels, offsets, indices: sorted }
        }
    }

    /// Number of distinct pixels with at least one event.
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn get(&self, pixel: Pixel) -> Option<&[usize]> {
        let g = self.pixels.binary_search(&pixel).ok()?;
        Some(&self.indices[self.offsets[g]..self.offsets[g + 1]])
    }

    pub fn iter(&self) -> impl Iterator<Item = (Pixel, &[usize])> + '_ {
        self.pixels.iter().enumerate().map(move |(g, &px)| (px, &self.indices[self.offsets[g]..self.offsets[g + 1]]))
    }

    /// All indices, concatenated group by group.
    pub fn flat_indices(&self) -> &[usize] {
        &self.indices
    }
}

/// Per-pixel event counts over a window, with a max-normalized view.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMap {
    pub geometry: SensorGeometry,
    pub window: (u64, u64),
    pub counts: Vec<u32>,
    pub normalized: Vec<f64>,
}

impl DensityMap {
    pub fn count(&self, x: u16, y: u16) -> u32 {
        self.counts[self.geometry.index(x, y)]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn geo(w: u16, h: u16) -> SensorGeometry {
        SensorGeometry::new(w, h).unwrap()
    }

    fn ev(t: u64, x: u16, y: u16) -> Event {
        Event::new(t, x, y, Polarity::On)
    }

    #[test]
    fn empty_stream_is_valid() {
        assert_eq!(EventStream::empty(geo(4, 4)).validate(), Ok(()));
    }

    #[test]
    fn equal_time_same_pixel_is_violation() {
        let s = EventStream::new(geo(4, 4), vec![ev(5, 1, 1), ev(5, 1, 1)]);
        let v = s.validate().unwrap_err();
        assert_eq!(v.index, 1);
        assert_eq!(v.kind, ViolationKind::PixelStrictlyIncreasing);
        assert_eq!(v.kind.to_string(), "per-pixel strictly increasing");
    }

    #[test]
    fn decreasing_time_is_violation() {
        let s = EventStream::new(geo(4, 4), vec![ev(5, 0, 0), ev(3, 1, 0)]);
        assert_eq!(s.validate().unwrap_err().kind, ViolationKind::NonDecreasing);
    }

    #[test]
    fn out_of_bounds_is_violation() {
        let s = EventStream::new(geo(4, 4), vec![ev(1, 4, 0)]);
        assert_eq!(s.validate().unwrap_err().kind, ViolationKind::OutOfBounds);
    }

    #[test]
    fn equal_time_distinct_pixels_ok() {
        let s = EventStream::new(geo(4, 4), vec![ev(5, 0, 0), ev(5, 1, 0)]);
        assert!(s.validate().is_ok());
    }

    #[test]
    fn zero_geometry_rejected() {
        assert!(SensorGeometry::new(0, 3).is_err());
    }

    #[test]
    fn polarity_from_sign() {
        assert_eq!(Polarity::from_sign(1).unwrap(), Polarity::On);
        assert_eq!(Polarity::from_sign(-1).unwrap(), Polarity::Off);
        assert!(Polarity::from_sign(0).is_err());
    }

    #[test]
    fn slice_examples() {
        let s = EventStream::new(geo(4, 1), vec![ev(1, 0, 0), ev(4, 1, 0), ev(9, 2, 0)]);
        assert_eq!(s.slice_time(0, 10).unwrap(), s);
        assert!(s.slice_time(4, 4).unwrap().is_empty());
        let sl = s.slice_time(2, 9).unwrap();
        assert_eq!(sl.events().iter().map(|e| e.t).collect::<Vec<_>>(), vec![4]);
        assert!(s.slice_time(3, 2).is_err());
    }

    #[test]
    fn group_examples() {
        let single = EventStream::new(geo(2, 2), vec![ev(1, 1, 1), ev(2, 1, 1), ev(7, 1, 1)]);
        let g = single.group_by_pixel();
        assert_eq!(g.len(), 1);
        assert_eq!(g.get(Pixel { x: 1, y: 1 }).unwrap(), &[0, 1, 2]);

        let inter = EventStream::new(geo(2, 2), vec![ev(1, 0, 0), ev(2, 1, 0), ev(3, 0, 0), ev(4, 1, 0), ev(5, 0, 1)]);
        let g = inter.group_by_pixel();
        assert_eq!(g.len(), 3);
        assert_eq!(g.get(Pixel { x: 0, y: 0 }).unwrap(), &[0, 2]);
        assert_eq!(g.get(Pixel { x: 1, y: 0 }).unwrap(), &[1, 3]);
        assert!(g.get(Pixel { x: 1, y: 1 }).is_none());
    }

    #[test]
    fn density_examples() {
        let g = geo(2, 1);
        let empty = EventStream::empty(g).density_map(0, 10).unwrap();
        assert!(empty.normalized.iter().all(|&v| v == 0.0));

        let s = EventStream::new(g, vec![ev(1, 0, 0), ev(2, 0, 0), ev(3, 1, 0), ev(4, 0, 0)]);
        let d = s.density_map(0, 10).unwrap();
        assert_eq!(d.counts, vec![3, 1]);
        assert_eq!(d.normalized, vec![1.0, 1.0 / 3.0]);

        let uniform = EventStream::new(g, vec![ev(1, 0, 0), ev(1, 1, 0)]);
        assert_eq!(uniform.density_map(0, 2).unwrap().normalized, vec![1.0, 1.0]);
        assert!(s.density_map(5, 1).is_err());
    }

    #[test]
    fn intervals_per_pixel() {
        let s = EventStream::new(geo(2, 1), vec![ev(0, 0, 0), ev(5, 1, 0), ev(100, 0, 0), ev(105, 1, 0)]);
        let mut iv = s.pixel_intervals();
        iv.sort();
        assert_eq!(iv, vec![100, 100]);
    }

    fn arb_stream() -> impl Strategy<Value = EventStream> {
        (1u16..6, 1u16..6).prop_flat_map(|(w, h)| {
            proptest::collection::vec((0u64..40, 0..w, 0..h, any::<bool>()), 0..60).prop_map(move |raw| {
                let mut events: Vec<Event> = raw
                    .into_iter()
                    .map(|(t, x, y, on)| Event::new(t, x, y, if on { Polarity::On } else { Polarity::Off }))
                    .collect();
                events.sort_by_key(Event::canonical_key);
                events.dedup_by_key(|e| (e.t, e.x, e.y));
                EventStream::new(geo(w, h), events)
            })
        })
    }

    proptest! {
        #[test]
        fn slice_concatenation(s in arb_stream(), a in 0u64..50, b in 0u64..50, c in 0u64..50) {
            let mut ts = [a, b, c];
            ts.sort();
            let whole = s.slice_time(ts[0], ts[2]).unwrap();
            let mut joined = s.slice_time(ts[0], ts[1]).unwrap().into_events();
            joined.extend(s.slice_time(ts[1], ts[2]).unwrap().into_events());
            prop_assert_eq!(whole.events(), &joined[..]);
        }

        #[test]
        fn density_total_matches_slice(s in arb_stream(), a in 0u64..50, b in 0u64..50) {
            let (t0, t1) = (a.min(b), a.max(b));
            let d = s.density_map(t0, t1).unwrap();
            prop_assert_eq!(d.total() as usize, s.slice_time(t0, t1).unwrap().len());
            prop_assert!(d.normalized.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }

        #[test]
        fn group_then_merge_is_valid_permutation(s in arb_stream()) {
            prop_assert!(s.validate().is_ok());
            let g = s.group_by_pixel();
            let mut flat = g.flat_indices().to_vec();
            for (_, idx) in g.iter() {
                prop_assert!(idx.windows(2).all(|w| s.events()[w[0]].t < s.events()[w[1]].t));
            }
            let mut merged: Vec<Event> = flat.iter().map(|&i| s.events()[i]).collect();
            merged.sort_by_key(|e| e.t);
            let merged = EventStream::new(s.geometry(), merged);
            prop_assert!(merged.validate().is_ok());
            flat.sort();
            prop_assert_eq!(flat, (0..s.len()).collect::<Vec<_>>());
        }
    }
}

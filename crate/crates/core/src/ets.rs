//! Event trail suppression.
//!
//! At low illuminance a single brightness change produces a run of
//! same-polarity events at one pixel whose spacing grows, the discrete
//! signature of a slow first-order photoreceptor. A run qualifies as a trail
//! when
//!
//! 1. all events share one polarity,
//! 2. consecutive intervals never shrink, and
//! 3. the largest interval stays below `max_interval_us`.
//!
//! Trails are found greedily left to right at each pixel. The head keeps its
//! timestamp and the j-th follower is moved to `head + j * realign_interval_us`.
//! Nothing is deleted and no polarity changes.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::ops::Range;

use rayon::prelude::*;
use thiserror::Error;

use crate::event::{Event, EventStream, Pixel, Polarity};
use crate::metrics::{interval_histogram, IntervalHistogram};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EtsError {
    #[error("realign interval must be at least 1 us, got {0}")]
    RealignTooSmall(u64),
    #[error("max interval ({max}) must be >= realign interval ({realign})")]
    MaxBelowRealign { max: u64, realign: u64 },
    #[error("minimum chain length must be at least 2, got {0}")]
    ChainTooShort(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EtsConfig {
    /// Exclusive upper bound on any interval inside a trail, µs.
    pub max_interval_us: u64,
    pub min_chain_len: usize,
    /// Spacing of corrected timestamps, µs.
    pub realign_interval_us: u64,
}

impl Default for EtsConfig {
    fn default() -> Self {
        Self { max_interval_us: 1000, min_chain_len: 3, realign_interval_us: 1 }
    }
}

impl EtsConfig {
    pub fn new(max_interval_us: u64, min_chain_len: usize, realign_interval_us: u64) -> Result<Self, EtsError> {
        let c = Self { max_interval_us, min_chain_len, realign_interval_us };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), EtsError> {
        if self.realign_interval_us < 1 {
            return Err(EtsError::RealignTooSmall(self.realign_interval_us));
        }
        if self.max_interval_us < self.realign_interval_us {
            return Err(EtsError::MaxBelowRealign { max: self.max_interval_us, realign: self.realign_interval_us });
        }
        if self.min_chain_len < 2 {
            return Err(EtsError::ChainTooShort(self.min_chain_len));
        }
        Ok(())
    }
}

/// A detected trail: a contiguous run of one pixel's event sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrailChain {
    pub pixel: Pixel,
    /// Positions within the per-pixel sequence.
    pub indices: Range<usize>,
    pub polarity: Polarity,
}

impl TrailChain {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Re-checks the three trail conditions against `pixel_events`.
    pub fn satisfies(&self, pixel_events: &[Event], config: &EtsConfig) -> bool {
        let run = &pixel_events[self.indices.clone()];
        if run.len() < config.min_chain_len || run.iter().any(|e| e.p != self.polarity) {
            return false;
        }
        let gaps: Vec<u64> = run.windows(2).map(|w| w[1].t - w[0].t).collect();
        gaps.windows(2).all(|g| g[1] >= g[0]) && gaps.iter().all(|&g| g < config.max_interval_us)
    }
}

/// Greedy trail detection on one pixel's strictly increasing events.
pub fn detect_trails(pixel_events: &[Event], config: &EtsConfig) -> Vec<TrailChain> {
    let mut chains = Vec::new();
    for_each_trail(pixel_events, config, |range| {
        chains.push(TrailChain {
            pixel: pixel_events[range.start].pixel(),
            polarity: pixel_events[range.start].p,
            indices: range,
        });
    });
    chains
}

fn for_each_trail(events: &[Event], config: &EtsConfig, mut found: impl FnMut(Range<usize>)) {
    let n = events.len();
    let mut start = 0;
    while start < n {
        let p = events[start].p;
        let mut end = start + 1;
        let mut prev_gap = 0u64;
        while end < n {
            let e = events[end];
            let gap = e.t - events[end - 1].t;
            if e.p != p || gap >= config.max_interval_us || gap < prev_gap {
                break;
            }
            prev_gap = gap;
            end += 1;
        }
        if end - start >= config.min_chain_len {
            found(start..end);
        }
        // Resume at the event that broke the run.
        start = end;
    }
}

/// Counters produced by [`suppress`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CorrectionSummary {
    pub events: usize,
    pub chains: usize,
    /// Events belonging to a chain, heads included.
    pub events_realigned: usize,
    /// Events whose timestamp actually changed.
    pub timestamps_changed: usize,
    /// Corrected timestamps bumped forward to avoid a same-pixel collision.
    pub collisions_resolved: usize,
}

impl std::ops::AddAssign for CorrectionSummary {
    fn add_assign(&mut self, o: Self) {
        self.events += o.events;
        self.chains += o.chains;
        self.events_realigned += o.events_realigned;
        self.timestamps_changed += o.timestamps_changed;
        self.collisions_resolved += o.collisions_resolved;
    }
}

/// Rewrites the timestamps of one pixel's events in place.
fn suppress_pixel(events: &mut [Event], config: &EtsConfig) -> CorrectionSummary {
    let mut chains: Vec<Range<usize>> = Vec::new();
    for_each_trail(events, config, |r| chains.push(r));
    let mut summary = CorrectionSummary { events: events.len(), ..Default::default() };
    if chains.is_empty() {
        return summary;
    }
    let step = config.realign_interval_us;
    // With a 1 µs grid the corrected times never pass the originals, so
    // they cannot land on another event of this pixel.
    let mut occupied: Option<HashSet<u64>> = (step > 1).then(|| {
        let mut fixed: HashSet<u64> = events.iter().map(|e| e.t).collect();
        for r in &chains {
            for e in &events[r.start + 1..r.end] {
                fixed.remove(&e.t);
            }
        }
        fixed
    });
    for r in chains {
        summary.chains += 1;
        summary.events_realigned += r.len();
        let head = events[r.start].t;
        for (j, i) in (r.start + 1..r.end).enumerate() {
            let mut t = head + (j as u64 + 1) * step;
            if let Some(occ) = occupied.as_mut() {
                while occ.contains(&t) {
                    t += 1;
                    summary.collisions_resolved += 1;
                }
                occ.insert(t);
            }
            if events[i].t != t {
                summary.timestamps_changed += 1;
                events[i].t = t;
            }
        }
    }
    summary
}

/// Gathers each pixel's events into a contiguous buffer, pixel by pixel.
fn gather(stream: &EventStream) -> (Vec<Event>, Vec<usize>) {
    let groups = stream.group_by_pixel();
    let mut offsets = Vec::with_capacity(groups.len() + 1);
    offsets.push(0);
    let mut buf = Vec::with_capacity(stream.len());
    for (_, idx) in groups.iter() {
        buf.extend(idx.iter().map(|&i| stream.events()[i]));
        offsets.push(buf.len());
    }
    (buf, offsets)
}

fn finish(stream: &EventStream, mut buf: Vec<Event>, summary: &CorrectionSummary) -> EventStream {
    if summary.timestamps_changed == 0 {
        return stream.clone();
    }
    buf.sort_unstable_by_key(Event::canonical_key);
    EventStream::new(stream.geometry(), buf)
}

/// Realigns every detected trail in a valid stream. The output is canonical
/// `(t, y, x)` order; a stream without trails is returned unchanged.
///
/// A second pass is a no-op when every chain ended at a polarity change, a
/// gap of at least `max_interval_us`, or the end of the pixel's events, as in
/// simulated step responses. It is not in general: `[0, 100, 300, 700, 750]`
/// becomes `[0, 1, 2, 3, 750]`, and the next pass pulls 750 into a new chain.
///
/// With `realign_interval_us > 1` corrected times may pass later events of
/// the same pixel; same-pixel collisions are bumped forward by 1 µs.
pub fn suppress(stream: &EventStream, config: &EtsConfig) -> (EventStream, CorrectionSummary) {
    let (mut buf, offsets) = gather(stream);
    let mut summary = CorrectionSummary::default();
    for w in offsets.windows(2) {
        summary += suppress_pixel(&mut buf[w[0]..w[1]], config);
    }
    let out = finish(stream, buf, &summary);
    (out, summary)
}

/// Parallel [`suppress`]; the result is identical to the sequential one.
pub fn suppress_par(stream: &EventStream, config: &EtsConfig) -> (EventStream, CorrectionSummary) {
    let (mut buf, offsets) = gather(stream);
    let mut slices: Vec<&mut [Event]> = Vec::with_capacity(offsets.len());
    let mut rest = buf.as_mut_slice();
    for w in offsets.windows(2) {
        let (head, tail) = rest.split_at_mut(w[1] - w[0]);
        slices.push(head);
        rest = tail;
    }
    let summary =
        slices.into_par_iter().map(|s| suppress_pixel(s, config)).reduce(CorrectionSummary::default, |mut a, b| {
            a += b;
            a
        });
    let out = finish(stream, buf, &summary);
    (out, summary)
}

/// Default interval histogram bucket edges, µs.
pub const DEFAULT_BUCKET_EDGES: &[u64] =
    &[0, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10_000, 100_000, 1_000_000];

/// Trail diagnostics for one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct TrailStatistics {
    pub config: EtsConfig,
    pub summary: CorrectionSummary,
    pub before: IntervalHistogram,
    pub after: IntervalHistogram,
}

impl TrailStatistics {
    /// Plain-text `key=value` report.
    pub fn to_report(&self) -> String {
        let mut s = String::new();
        s.push_str("# event trail suppression summary\n");
        s.push_str("# hist_* buckets are [lo,hi) in microseconds over per-pixel consecutive-event intervals\n");
        s.push_str("# hist_*_under / hist_*_over count intervals below the first / at or above the last edge\n");
        let c = &self.config;
        let m = &self.summary;
        let _ = writeln!(s, "max_interval_us={}", c.max_interval_us);
        let _ = writeln!(s, "min_chain_len={}", c.min_chain_len);
        let _ = writeln!(s, "realign_interval_us={}", c.realign_interval_us);
        let _ = writeln!(s, "events={}", m.events);
        let _ = writeln!(s, "chains={}", m.chains);
        let _ = writeln!(s, "events_realigned={}", m.events_realigned);
        let _ = writeln!(s, "timestamps_changed={}", m.timestamps_changed);
        let _ = writeln!(s, "collisions_resolved={}", m.collisions_resolved);
        for (name, h) in [("before", &self.before), ("after", &self.after)] {
            for (i, count) in h.counts.iter().enumerate() {
                let _ = writeln!(s, "hist_{name}[{},{})={count}", h.edges[i], h.edges[i + 1]);
            }
            let _ = writeln!(s, "hist_{name}_under={}", h.underflow);
            let _ = writeln!(s, "hist_{name}_over={}", h.overflow);
        }
        s
    }
}

pub fn trail_statistics(stream: &EventStream, config: &EtsConfig) -> TrailStatistics {
    trail_statistics_with_edges(stream, config, DEFAULT_BUCKET_EDGES)
}

pub fn trail_statistics_with_edges(stream: &EventStream, config: &EtsConfig, edges: &[u64]) -> TrailStatistics {
    let (out, summary) = suppress(stream, config);
    stats_from(stream, &out, summary, config, edges)
}

pub(crate) fn stats_from(
    input: &EventStream,
    output: &EventStream,
    summary: CorrectionSummary,
    config: &EtsConfig,
    edges: &[u64],
) -> TrailStatistics {
    let before = interval_histogram(input, edges).expect("bucket edges sorted");
    let after = interval_histogram(output, edges).expect("bucket edges sorted");
    TrailStatistics { config: *config, summary, before, after }
}

/// [`suppress`] plus its diagnostics, computed in one pass.
pub fn suppress_with_statistics(stream: &EventStream, config: &EtsConfig) -> (EventStream, TrailStatistics) {
    let (out, summary) = suppress(stream, config);
    let stats = stats_from(stream, &out, summary, config, DEFAULT_BUCKET_EDGES);
    (out, stats)
}

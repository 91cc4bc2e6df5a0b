//! On-disk formats.
//!
//! | format | header | payload |
//! |--------|--------|---------|
//! | EVT1 | `"EVT1"`, width u16, height u16, count u64 (16 bytes) | count × 16-byte records: t u64, x u16, y u16, p i8, 3 zero bytes |
//! | VOX1 | `"VOX1"`, B u16, H u16, W u16, 0u16, t0 u64, t1 u64 (28 bytes) | B·H·W f32, `(bin, row, col)` order |
//! | WGT1 | `"WGT1"`, resolution u16, B u16 (8 bytes) | resolution·B f32, row-major |
//!
//! All integers and floats are little-endian. Images are binary PGM (P5).
//! The codecs work on byte slices; the `read_*`/`write_*` helpers wrap them
//! with file I/O.

mod config;
mod pgm;

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{ConfigError, KeyValues};
pub use pgm::{decode_pgm, encode_pgm};

use crate::event::{Event, EventStream, Polarity, SensorGeometry};
use crate::image::GrayImage;
use crate::voxel::{VoxelGrid, WeightTable};

pub const EVT1_MAGIC: &[u8; 4] = b"EVT1";
pub const VOX1_MAGIC: &[u8; 4] = b"VOX1";
pub const WGT1_MAGIC: &[u8; 4] = b"WGT1";
pub const EVT1_HEADER_LEN: usize = 16;
pub const EVT1_RECORD_LEN: usize = 16;
pub const VOX1_HEADER_LEN: usize = 28;
pub const WGT1_HEADER_LEN: usize = 8;

#[derive(Debug, Error)]
pub enum EvioError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad magic at offset 0: expected {expected:?}")]
    BadMagic { expected: &'static str },
    #[error("truncated at offset {offset}: need {needed} bytes, have {available}")]
    Truncated { offset: usize, needed: usize, available: usize },
    #[error("{extra} unexpected trailing bytes at offset {offset}")]
    TrailingBytes { offset: usize, extra: usize },
    #[error("invalid data at offset {offset}: {reason}")]
    Invalid { offset: usize, reason: String },
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("stream cannot be written: {0}")]
    InvalidStream(String),
    #[error("dimension {value} of {what} does not fit in u16")]
    TooLarge { what: &'static str, value: usize },
    #[error("{path}: {source}")]
    InFile { path: PathBuf, source: Box<EvioError> },
}

impl EvioError {
    /// Attaches a path to a decode error.
    pub fn in_file(self, path: &Path) -> EvioError {
        match self {
            e @ (EvioError::Io { .. } | EvioError::InFile { .. }) => e,
            other => EvioError::InFile { path: path.to_path_buf(), source: Box::new(other) },
        }
    }

    /// Whether the error came from the filesystem rather than file content.
    pub fn is_io(&self) -> bool {
        matches!(self, EvioError::Io { .. })
    }

    /// The underlying content error, without file context.
    pub fn content(&self) -> &EvioError {
        match self {
            EvioError::InFile { source, .. } => source.content(),
            other => other,
        }
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, EvioError> {
    fs::read(path).map_err(|source| EvioError::Io { path: path.to_path_buf(), source })
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), EvioError> {
    fs::write(path, bytes).map_err(|source| EvioError::Io { path: path.to_path_buf(), source })
}

fn need(bytes: &[u8], offset: usize, len: usize) -> Result<(), EvioError> {
    if bytes.len() < offset + len {
        return Err(EvioError::Truncated { offset, needed: len, available: bytes.len().saturating_sub(offset) });
    }
    Ok(())
}

#[inline]
fn u16_at(b: &[u8], o: usize) -> u16 {
    u16::from_le_bytes([b[o], b[o + 1]])
}

#[inline]
fn u64_at(b: &[u8], o: usize) -> u64 {
    u64::from_le_bytes(b[o..o + 8].try_into().unwrap())
}

#[inline]
fn f32_at(b: &[u8], o: usize) -> f32 {
    f32::from_le_bytes(b[o..o + 4].try_into().unwrap())
}

fn check_magic(bytes: &[u8], magic: &'static [u8; 4]) -> Result<(), EvioError> {
    need(bytes, 0, 4)?;
    if &bytes[..4] != magic {
        return Err(EvioError::BadMagic { expected: std::str::from_utf8(magic).unwrap() });
    }
    Ok(())
}

fn to_u16(what: &'static str, value: usize) -> Result<u16, EvioError> {
    u16::try_from(value).map_err(|_| EvioError::TooLarge { what, value })
}

// ---- events

/// Serializes a valid stream. Records are written in canonical `(t, y, x)`
/// order regardless of the tie order in memory.
pub fn encode_events(stream: &EventStream) -> Result<Vec<u8>, EvioError> {
    stream.validate().map_err(|v| EvioError::InvalidStream(v.to_string()))?;
    let g = stream.geometry();
    let mut events = std::borrow::Cow::Borrowed(stream.events());
    if !stream.is_canonical() {
        events.to_mut().sort_by_key(Event::canonical_key);
    }
    let mut out = Vec::with_capacity(EVT1_HEADER_LEN + events.len() * EVT1_RECORD_LEN);
    out.extend_from_slice(EVT1_MAGIC);
    out.extend_from_slice(&g.width().to_le_bytes());
    out.extend_from_slice(&g.height().to_le_bytes());
    out.extend_from_slice(&(events.len() as u64).to_le_bytes());
    for e in events.iter() {
        out.extend_from_slice(&e.t.to_le_bytes());
        out.extend_from_slice(&e.x.to_le_bytes());
        out.extend_from_slice(&e.y.to_le_bytes());
        out.push(e.p.as_i8() as u8);
        out.extend_from_slice(&[0, 0, 0]);
    }
    Ok(out)
}

pub fn decode_events(bytes: &[u8]) -> Result<EventStream, EvioError> {
    check_magic(bytes, EVT1_MAGIC)?;
    need(bytes, 0, EVT1_HEADER_LEN)?;
    let (width, height) = (u16_at(bytes, 4), u16_at(bytes, 6));
    let geometry =
        SensorGeometry::new(width, height).map_err(|e| EvioError::Invalid { offset: 4, reason: e.to_string() })?;
    let count = u64_at(bytes, 8);
    let payload = usize::try_from(count)
        .ok()
        .and_then(|c| c.checked_mul(EVT1_RECORD_LEN))
        .ok_or_else(|| EvioError::Invalid { offset: 8, reason: format!("record count {count} too large") })?;
    need(bytes, EVT1_HEADER_LEN, payload)?;
    let end = EVT1_HEADER_LEN + payload;
    if bytes.len() > end {
        return Err(EvioError::TrailingBytes { offset: end, extra: bytes.len() - end });
    }
    let mut events = Vec::with_capacity(count as usize);
    let mut prev: Option<(u64, u16, u16)> = None;
    for (i, rec) in bytes[EVT1_HEADER_LEN..end].chunks_exact(EVT1_RECORD_LEN).enumerate() {
        let offset = EVT1_HEADER_LEN + i * EVT1_RECORD_LEN;
        let invalid = |reason: String| EvioError::Invalid { offset, reason };
        let t = u64_at(rec, 0);
        let x = u16_at(rec, 8);
        let y = u16_at(rec, 10);
        let p = Polarity::from_sign(rec[12] as i8 as i64).map_err(|e| invalid(e.to_string()))?;
        if rec[13..16] != [0, 0, 0] {
            return Err(invalid("non-zero pad bytes".into()));
        }
        if !geometry.contains(x, y) {
            return Err(invalid(format!("pixel ({x}, {y}) outside {width}x{height}")));
        }
        let key = (t, y, x);
        if let Some(pk) = prev {
            if key <= pk {
                return Err(invalid("records not strictly ordered by (t, y, x)".into()));
            }
        }
        prev = Some(key);
        events.push(Event::new(t, x, y, p));
    }
    Ok(EventStream::new(geometry, events))
}

pub fn read_events(path: impl AsRef<Path>) -> Result<EventStream, EvioError> {
    let path = path.as_ref();
    decode_events(&read_file(path)?).map_err(|e| e.in_file(path))
}

pub fn write_events(path: impl AsRef<Path>, stream: &EventStream) -> Result<(), EvioError> {
    write_file(path.as_ref(), &encode_events(stream)?)
}

// ---- voxel grids

pub fn encode_voxels(grid: &VoxelGrid) -> Result<Vec<u8>, EvioError> {
    let g = grid.geometry();
    let (t0, t1) = grid.window();
    let mut out = Vec::with_capacity(VOX1_HEADER_LEN + grid.data().len() * 4);
    out.extend_from_slice(VOX1_MAGIC);
    out.extend_from_slice(&to_u16("bins", grid.bins())?.to_le_bytes());
    out.extend_from_slice(&g.height().to_le_bytes());
    out.extend_from_slice(&g.width().to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&t0.to_le_bytes());
    out.extend_from_slice(&t1.to_le_bytes());
    for &v in grid.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_voxels(bytes: &[u8]) -> Result<VoxelGrid, EvioError> {
    check_magic(bytes, VOX1_MAGIC)?;
    need(bytes, 0, VOX1_HEADER_LEN)?;
    let bins = u16_at(bytes, 4) as usize;
    let (height, width) = (u16_at(bytes, 6), u16_at(bytes, 8));
    if u16_at(bytes, 10) != 0 {
        return Err(EvioError::Invalid { offset: 10, reason: "non-zero pad".into() });
    }
    let geometry =
        SensorGeometry::new(width, height).map_err(|e| EvioError::Invalid { offset: 6, reason: e.to_string() })?;
    if bins == 0 {
        return Err(EvioError::Invalid { offset: 4, reason: "zero bins".into() });
    }
    let (t0, t1) = (u64_at(bytes, 12), u64_at(bytes, 20));
    let n = bins * geometry.len();
    need(bytes, VOX1_HEADER_LEN, n * 4)?;
    let end = VOX1_HEADER_LEN + n * 4;
    if bytes.len() > end {
        return Err(EvioError::TrailingBytes { offset: end, extra: bytes.len() - end });
    }
    let data = bytes[VOX1_HEADER_LEN..end].chunks_exact(4).map(|c| f32_at(c, 0) as f64).collect();
    Ok(VoxelGrid::from_data(bins, geometry, (t0, t1), data).expect("length checked"))
}

pub fn read_voxels(path: impl AsRef<Path>) -> Result<VoxelGrid, EvioError> {
    let path = path.as_ref();
    decode_voxels(&read_file(path)?).map_err(|e| e.in_file(path))
}

pub fn write_voxels(path: impl AsRef<Path>, grid: &VoxelGrid) -> Result<(), EvioError> {
    write_file(path.as_ref(), &encode_voxels(grid)?)
}

// ---- weight tables

pub fn encode_weights(table: &WeightTable) -> Result<Vec<u8>, EvioError> {
    let mut out = Vec::with_capacity(WGT1_HEADER_LEN + table.weights().len() * 4);
    out.extend_from_slice(WGT1_MAGIC);
    out.extend_from_slice(&to_u16("resolution", table.resolution())?.to_le_bytes());
    out.extend_from_slice(&to_u16("bins", table.bins())?.to_le_bytes());
    for &w in table.weights() {
        out.extend_from_slice(&(w as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_weights(bytes: &[u8]) -> Result<WeightTable, EvioError> {
    check_magic(bytes, WGT1_MAGIC)?;
    need(bytes, 0, WGT1_HEADER_LEN)?;
    let (resolution, bins) = (u16_at(bytes, 4) as usize, u16_at(bytes, 6) as usize);
    let n = resolution * bins;
    need(bytes, WGT1_HEADER_LEN, n * 4)?;
    let end = WGT1_HEADER_LEN + n * 4;
    if bytes.len() > end {
        return Err(EvioError::TrailingBytes { offset: end, extra: bytes.len() - end });
    }
    let weights: Vec<f64> = bytes[WGT1_HEADER_LEN..end].chunks_exact(4).map(|c| f32_at(c, 0) as f64).collect();
    WeightTable::new(resolution, bins, weights).map_err(|e| {
        let offset = match e {
            crate::voxel::VoxelError::RowSum { row, .. } => WGT1_HEADER_LEN + row * bins * 4,
            _ => 4,
        };
        EvioError::Invalid { offset, reason: e.to_string() }
    })
}

pub fn read_weights(path: impl AsRef<Path>) -> Result<WeightTable, EvioError> {
    let path = path.as_ref();
    decode_weights(&read_file(path)?).map_err(|e| e.in_file(path))
}

pub fn write_weights(path: impl AsRef<Path>, table: &WeightTable) -> Result<(), EvioError> {
    write_file(path.as_ref(), &encode_weights(table)?)
}

// ---- images

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage, EvioError> {
    let path = path.as_ref();
    decode_pgm(&read_file(path)?).map_err(|e| e.in_file(path))
}

pub fn write_pgm(path: impl AsRef<Path>, image: &GrayImage) -> Result<(), EvioError> {
    write_file(path.as_ref(), &encode_pgm(image))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stream() -> EventStream {
        let g = SensorGeometry::new(3, 2).unwrap();
        EventStream::new(
            g,
            vec![
                Event::new(1, 2, 0, Polarity::On),
                Event::new(1, 0, 1, Polarity::Off),
                Event::new(70_000_000_000, 1, 1, Polarity::On),
            ],
        )
    }

    #[test]
    fn empty_stream_is_header_only() {
        let g = SensorGeometry::new(640, 480).unwrap();
        let bytes = encode_events(&EventStream::empty(g)).unwrap();
        assert_eq!(bytes.len(), 16);
        assert_eq!(&bytes[..4], b"EVT1");
        assert_eq!(u16_at(&bytes, 4), 640);
        assert_eq!(u16_at(&bytes, 6), 480);
        assert_eq!(u64_at(&bytes, 8), 0);
    }

    #[test]
    fn record_layout() {
        let bytes = encode_events(&stream()).unwrap();
        assert_eq!(bytes.len(), 16 + 3 * 16);
        let r = &bytes[16 + 16..16 + 32];
        assert_eq!(u64_at(r, 0), 1);
        assert_eq!((u16_at(r, 8), u16_at(r, 10)), (0, 1));
        assert_eq!(r[12], 0xFF);
        assert_eq!(&r[13..], &[0, 0, 0]);
    }

    #[test]
    fn zero_polarity_names_offset() {
        let mut bytes = encode_events(&stream()).unwrap();
        bytes[16 + 16 + 12] = 0;
        match decode_events(&bytes).unwrap_err() {
            EvioError::Invalid { offset, .. } => assert_eq!(offset, 32),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn rejects_bad_files() {
        let good = encode_events(&stream()).unwrap();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_events(&bad), Err(EvioError::BadMagic { .. })));
        assert!(matches!(decode_events(&good[..good.len() - 1]), Err(EvioError::Truncated { offset: 16, .. })));
        let mut long = good.clone();
        long.push(0);
        assert!(matches!(decode_events(&long), Err(EvioError::TrailingBytes { offset: 64, extra: 1 })));
        let mut pad = good.clone();
        pad[16 + 14] = 1;
        assert!(matches!(decode_events(&pad), Err(EvioError::Invalid { offset: 16, .. })));
        let mut oob = good.clone();
        oob[16 + 8] = 9;
        assert!(matches!(decode_events(&oob), Err(EvioError::Invalid { offset: 16, .. })));
        // Swap the first two records: (1, y=1) before (1, y=0) breaks ordering.
        let mut swapped = good.clone();
        let (a, b) = swapped[16..48].split_at_mut(16);
        a.swap_with_slice(b);
        assert!(matches!(decode_events(&swapped), Err(EvioError::Invalid { offset: 32, .. })));
    }

    #[test]
    fn writer_canonicalizes_ties() {
        let g = SensorGeometry::new(3, 2).unwrap();
        let a = EventStream::new(g, vec![Event::new(5, 0, 1, Polarity::On), Event::new(5, 2, 0, Polarity::On)]);
        let b = EventStream::new(g, vec![Event::new(5, 2, 0, Polarity::On), Event::new(5, 0, 1, Polarity::On)]);
        assert_eq!(encode_events(&a).unwrap(), encode_events(&b).unwrap());
    }

    #[test]
    fn invalid_stream_not_written() {
        let g = SensorGeometry::new(1, 1).unwrap();
        let s = EventStream::new(g, vec![Event::new(5, 0, 0, Polarity::On), Event::new(5, 0, 0, Polarity::On)]);
        assert!(matches!(encode_events(&s), Err(EvioError::InvalidStream(_))));
    }

    #[test]
    fn voxel_layout_and_roundtrip() {
        let g = SensorGeometry::new(3, 2).unwrap();
        let data: Vec<f64> = (0..12).map(|i| i as f64 * 0.5 - 1.0).collect();
        let grid = VoxelGrid::from_data(2, g, (10, 2000), data).unwrap();
        let bytes = encode_voxels(&grid).unwrap();
        assert_eq!(bytes.len(), 28 + 12 * 4);
        assert_eq!((u16_at(&bytes, 4), u16_at(&bytes, 6), u16_at(&bytes, 8)), (2, 2, 3));
        assert_eq!((u64_at(&bytes, 12), u64_at(&bytes, 20)), (10, 2000));
        assert_eq!(decode_voxels(&bytes).unwrap(), grid);
        assert!(decode_voxels(&bytes[..bytes.len() - 4]).is_err());
        let mut pad = bytes.clone();
        pad[10] = 1;
        assert!(matches!(decode_voxels(&pad), Err(EvioError::Invalid { offset: 10, .. })));
    }

    #[test]
    fn weight_layout_and_validation() {
        let t = WeightTable::bilinear(256, 5).unwrap();
        let bytes = encode_weights(&t).unwrap();
        assert_eq!(bytes.len(), 8 + 256 * 5 * 4);
        let back = decode_weights(&bytes).unwrap();
        assert_eq!(back.resolution(), 256);
        let mut bad = bytes.clone();
        // Row 3, bin 0 -> 2.0
        bad[8 + 3 * 20..8 + 3 * 20 + 4].copy_from_slice(&2.0f32.to_le_bytes());
        assert!(matches!(decode_weights(&bad), Err(EvioError::Invalid { offset: 68, .. })));
    }

    #[test]
    fn file_helpers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.evt1");
        write_events(&p, &stream()).unwrap();
        assert_eq!(read_events(&p).unwrap(), stream());
        let missing = read_events(dir.path().join("nope.evt1")).unwrap_err();
        assert!(missing.is_io());
        assert!(missing.to_string().contains("nope.evt1"));
        std::fs::write(&p, b"EVT1").unwrap();
        let corrupt = read_events(&p).unwrap_err();
        assert!(!corrupt.is_io());
        assert!(corrupt.to_string().contains("s.evt1"));
    }

    fn arb_stream() -> impl Strategy<Value = EventStream> {
        (1u16..300, 1u16..300).prop_flat_map(|(w, h)| {
            proptest::collection::vec((any::<u64>(), 0..w, 0..h, any::<bool>()), 0..50).prop_map(move |raw| {
                let mut ev: Vec<Event> = raw
                    .into_iter()
                    .map(|(t, x, y, on)| Event::new(t, x, y, if on { Polarity::On } else { Polarity::Off }))
                    .collect();
                ev.sort_by_key(Event::canonical_key);
                ev.dedup_by_key(|e| e.canonical_key());
                EventStream::new(SensorGeometry::new(w, h).unwrap(), ev)
            })
        })
    }

    proptest! {
        #[test]
        fn events_roundtrip(s in arb_stream()) {
            let bytes = encode_events(&s).unwrap();
            prop_assert_eq!(bytes.len(), 16 + 16 * s.len());
            let back = decode_events(&bytes).unwrap();
            prop_assert_eq!(&encode_events(&back).unwrap(), &bytes);
            prop_assert_eq!(back, s);
        }
    }
}

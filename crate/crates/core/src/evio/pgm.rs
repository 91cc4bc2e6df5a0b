//! Binary (P5) PGM. Reads maxval 255 and 65535; always writes 65535.

use super::EvioError;
use crate::event::SensorGeometry;
use crate::image::GrayImage;

struct Header {
    width: usize,
    height: usize,
    maxval: u32,
    data_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, EvioError> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(EvioError::UnsupportedFormat("not a PGM file".into()));
    }
    if bytes[1] != b'5' {
        return Err(EvioError::UnsupportedFormat(format!(
            "PGM variant P{} (only binary P5 is supported)",
            bytes[1] as char
        )));
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        // Whitespace and comments between header tokens.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(EvioError::Invalid { offset: pos, reason: "expected a header number".into() });
        }
        let text = std::str::from_utf8(&bytes[start..pos]).unwrap();
        *field = text.parse().map_err(|_| EvioError::Invalid {
            offset: start,
            reason: format!("header number `{text}` out of range"),
        })?;
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(EvioError::Invalid { offset: pos, reason: "missing whitespace after maxval".into() }),
    }
    let [width, height, maxval] = fields;
    if maxval != 255 && maxval != 65535 {
        return Err(EvioError::UnsupportedFormat(format!("maxval {maxval} (expected 255 or 65535)")));
    }
    Ok(Header { width: width as usize, height: height as usize, maxval, data_offset: pos })
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, EvioError> {
    let h = parse_header(bytes)?;
    let (w, ht) = (
        u16::try_from(h.width).map_err(|_| EvioError::TooLarge { what: "width", value: h.width })?,
        u16::try_from(h.height).map_err(|_| EvioError::TooLarge { what: "height", value: h.height })?,
    );
    let geometry = SensorGeometry::new(w, ht).map_err(|e| EvioError::Invalid { offset: 3, reason: e.to_string() })?;
    let sample = if h.maxval == 255 { 1 } else { 2 };
    let n = geometry.len() * sample;
    let available = bytes.len() - h.data_offset;
    if available < n {
        return Err(EvioError::Truncated { offset: h.data_offset, needed: n, available });
    }
    if available > n {
        return Err(EvioError::TrailingBytes { offset: h.data_offset + n, extra: available - n });
    }
    let raster = &bytes[h.data_offset..];
    let maxval = h.maxval as f64;
    let values: Vec<f64> = if sample == 1 {
        raster.iter().map(|&b| b as f64 / maxval).collect()
    } else {
        raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / maxval).collect()
    };
    Ok(GrayImage::new(geometry, values).expect("values within [0, 1]"))
}

pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let g = image.geometry();
    let mut out = format!("P5\n{} {}\n65535\n", g.width(), g.height()).into_bytes();
    out.reserve(image.values().len() * 2);
    for &v in image.values() {
        let q = (v * 65535.0).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

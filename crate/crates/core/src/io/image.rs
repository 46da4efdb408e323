//! Depth snapshots as PFM (single channel, little-endian, bottom row first)
//! and frames as binary PGM.

use crate::error::{Error, Result};

/// Row-major image of camera-space depths; `+∞` marks background.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl DepthImage {
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }
}

pub fn encode_pfm(img: &DepthImage) -> Vec<u8> {
    let mut out = format!("Pf\n{} {}\n-1.0\n", img.width, img.height).into_bytes();
    out.reserve(4 * img.data.len());
    for y in (0..img.height).rev() {
        for x in 0..img.width {
            out.extend_from_slice(&img.get(x, y).to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8]) -> Result<DepthImage> {
    let err = |d: &str| Error::format("pfm", d.to_string());
    // Header: three whitespace-terminated tokens after the magic line.
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos || pos >= bytes.len() {
            return Err(err("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| err("non-ascii header"))?);
    }
    pos += 1; // single whitespace byte before the raster
    if fields[0] != "Pf" {
        return Err(err("only single-channel `Pf` files are supported"));
    }
    let width: usize = fields[1].parse().map_err(|_| err("bad width"))?;
    let height: usize = fields[2].parse().map_err(|_| err("bad height"))?;
    let scale: f64 = fields[3].parse().map_err(|_| err("bad scale"))?;
    if !(scale < 0.0) {
        return Err(err("big-endian PFM not supported"));
    }
    let n = width.checked_mul(height).ok_or_else(|| err("size overflow"))?;
    let raster = &bytes[pos.min(bytes.len())..];
    if n.checked_mul(4) != Some(raster.len()) {
        return Err(err("raster size does not match header"));
    }
    let mut data = vec![0.0f32; n];
    for (i, chunk) in raster.chunks_exact(4).enumerate() {
        let (row_from_bottom, x) = (i / width, i % width);
        let y = height - 1 - row_from_bottom;
        data[y * width + x] = f32::from_le_bytes(chunk.try_into().unwrap());
    }
    Ok(DepthImage { width, height, data })
}

pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_round_trip_keeps_infinity_and_orientation() {
        let img = DepthImage {
            width: 3,
            height: 2,
            data: vec![1.0, 2.0, f32::INFINITY, 4.0, 5.0, 6.0],
        };
        let bytes = encode_pfm(&img);
        // Bottom row is stored first.
        let raster = &bytes[bytes.len() - 24..];
        assert_eq!(f32::from_le_bytes(raster[0..4].try_into().unwrap()), 4.0);
        assert_eq!(decode_pfm(&bytes).unwrap(), img);
    }

    #[test]
    fn pfm_rejects_short_raster() {
        let mut bytes = encode_pfm(&DepthImage {
            width: 2,
            height: 2,
            data: vec![0.0; 4],
        });
        bytes.truncate(bytes.len() - 1);
        assert!(decode_pfm(&bytes).is_err());
        assert!(decode_pfm(b"Pf\n").is_err());
    }
}

//! Raster file formats.
//!
//! Binary grids are read from PGM or PNG (any nonzero gray level is
//! foreground) and written as binary PGM with 0/255 levels. Probability
//! maps use the `TGF1` container: the magic bytes `TGF1`, then `channels`,
//! `height`, `width` as little-endian `u32`, then `channels * height *
//! width` little-endian `f32` values, channel-major and row-major.

use std::io::Cursor;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder};

use crate::error::{Error, Result};
use crate::imagegrid::{BinaryGrid, ProbabilityMap};

pub const TGF1_MAGIC: &[u8; 4] = b"TGF1";

/// 8-bit gray raster as read from disk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn to_binary(&self) -> Result<BinaryGrid> {
        BinaryGrid::from_vec(self.height, self.width, self.pixels.clone())
    }
}

pub fn decode_gray(bytes: &[u8]) -> Result<GrayImage> {
    let img = image::load_from_memory(bytes)?.to_luma8();
    let (w, h) = img.dimensions();
    if w == 0 || h == 0 {
        return Err(Error::Parse("empty image".into()));
    }
    Ok(GrayImage {
        height: h as usize,
        width: w as usize,
        pixels: img.into_raw(),
    })
}

pub fn read_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    decode_gray(&std::fs::read(path)?)
}

pub fn read_binary_grid(path: impl AsRef<Path>) -> Result<BinaryGrid> {
    read_gray(path)?.to_binary()
}

/// Binary PGM (`P5`, maxval 255) bytes for a gray raster.
pub fn encode_pgm(height: usize, width: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    assert_eq!(pixels.len(), height * width);
    let mut out = Vec::new();
    PnmEncoder::new(Cursor::new(&mut out))
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(pixels, width as u32, height as u32, ExtendedColorType::L8)?;
    Ok(out)
}

/// Foreground as 255, background as 0.
pub fn encode_binary_pgm(grid: &BinaryGrid) -> Result<Vec<u8>> {
    let pixels: Vec<u8> = grid.as_slice().iter().map(|&b| b * 255).collect();
    encode_pgm(grid.height(), grid.width(), &pixels)
}

pub fn encode_tgf1(map: &ProbabilityMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * map.values().len());
    out.extend_from_slice(TGF1_MAGIC);
    for dim in [map.channels(), map.height(), map.width()] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for v in map.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_tgf1(bytes: &[u8]) -> Result<ProbabilityMap> {
    if bytes.len() < 16 || &bytes[..4] != TGF1_MAGIC {
        return Err(Error::Parse("missing TGF1 magic".into()));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (channels, height, width) = (dim(0), dim(1), dim(2));
    let count = channels
        .checked_mul(height)
        .and_then(|n| n.checked_mul(width))
        .ok_or_else(|| Error::Parse("TGF1 shape overflows".into()))?;
    let body = &bytes[16..];
    if Some(body.len()) != count.checked_mul(4) {
        return Err(Error::Parse(format!(
            "TGF1 body holds {} bytes, expected {} values",
            body.len(),
            count
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ProbabilityMap::new(channels, height, width, values)
}

pub fn read_tgf1(path: impl AsRef<Path>) -> Result<ProbabilityMap> {
    decode_tgf1(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_layout() {
        let g = BinaryGrid::from_ascii("#. .#").unwrap();
        let bytes = encode_binary_pgm(&g).unwrap();
        assert!(bytes.starts_with(b"P5"));
        assert!(bytes.ends_with(&[255, 0, 0, 255]));
        let back = decode_gray(&bytes).unwrap().to_binary().unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn tgf1_layout() {
        let m = ProbabilityMap::new(2, 1, 2, vec![0.25, 1.0, 0.75, 0.0]).unwrap();
        let bytes = encode_tgf1(&m);
        assert_eq!(&bytes[..4], b"TGF1");
        assert_eq!(&bytes[4..16], &[2, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(&bytes[16..20], &0.25f32.to_le_bytes());
        assert_eq!(decode_tgf1(&bytes).unwrap(), m);
    }

    #[test]
    fn tgf1_rejects_bad_input() {
        let m = ProbabilityMap::single(2, 2, vec![0.1; 4]).unwrap();
        let mut bytes = encode_tgf1(&m);
        bytes.pop();
        assert!(matches!(decode_tgf1(&bytes), Err(Error::Parse(_))));
        let mut bad = encode_tgf1(&m);
        bad[0] = b'X';
        assert!(matches!(decode_tgf1(&bad), Err(Error::Parse(_))));
        assert!(decode_tgf1(b"TGF").is_err());
    }
}

//! Binary PPM (P6) output of the central slice of each plane.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::plane::PlaneAxis;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB triples.
    pub pixels: Vec<u8>,
}

impl RgbImage {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn decode(bytes: &[u8]) -> Result<RgbImage> {
        let bad = |m: &str| Error::MalformedHeader(format!("ppm: {m}"));
        let mut fields = Vec::with_capacity(4);
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
        }
        if fields[0] != "P6" || fields[3] != "255" {
            return Err(bad("expected P6 with maxval 255"));
        }
        let width: usize = fields[1].parse().map_err(|_| bad("width"))?;
        let height: usize = fields[2].parse().map_err(|_| bad("height"))?;
        let pixels = bytes.get(pos + 1..).ok_or_else(|| bad("missing pixels"))?.to_vec();
        if pixels.len() != width * height * 3 {
            return Err(bad("pixel count"));
        }
        Ok(RgbImage {
            width,
            height,
            pixels,
        })
    }
}

fn to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Central slice of a `[D, H, W, 3]` projection on the given plane. Rows
/// and columns follow the plane's in-slice order: HW → `(h, w)`, DW →
/// `(d, w)`, DH → `(d, h)`.
pub fn central_slice(projection: &Tensor, axis: PlaneAxis) -> Result<RgbImage> {
    let [d, h, w, k] = *projection.dims() else {
        return Err(Error::ShapeMismatch(format!(
            "projection must be [D, H, W, 3], got {:?}",
            projection.dims()
        )));
    };
    if k != 3 {
        return Err(Error::ShapeMismatch(format!("{k} channels, need 3 for RGB")));
    }
    let (slices, rows, cols) = axis.plane_extents((d, h, w));
    let mid = slices / 2;
    let mut pixels = Vec::with_capacity(rows * cols * 3);
    for r in 0..rows {
        for c in 0..cols {
            let (i, j, l) = match axis {
                PlaneAxis::D => (mid, r, c),
                PlaneAxis::H => (r, mid, c),
                PlaneAxis::W => (r, c, mid),
            };
            let base = ((i * h + j) * w + l) * 3;
            pixels.extend(projection.data()[base..base + 3].iter().map(|&v| to_byte(v)));
        }
    }
    Ok(RgbImage {
        width: cols,
        height: rows,
        pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_decode_round_trip() {
        let img = RgbImage {
            width: 2,
            height: 1,
            pixels: vec![0, 128, 255, 1, 2, 3],
        };
        let bytes = img.encode();
        assert!(bytes.starts_with(b"P6\n2 1\n255\n"));
        assert_eq!(RgbImage::decode(&bytes).unwrap(), img);
        assert!(RgbImage::decode(b"P3\n1 1\n255\n000").is_err());
    }

    #[test]
    fn central_slices_have_plane_extents() {
        let proj = Tensor::from_fn([2, 3, 4, 3], |i| (i % 7) as f32 / 6.0).unwrap();
        let hw = central_slice(&proj, PlaneAxis::D).unwrap();
        assert_eq!((hw.width, hw.height), (4, 3));
        let dw = central_slice(&proj, PlaneAxis::H).unwrap();
        assert_eq!((dw.width, dw.height), (4, 2));
        let dh = central_slice(&proj, PlaneAxis::W).unwrap();
        assert_eq!((dh.width, dh.height), (3, 2));

        // HW slice d=1, pixel (h=0, w=0) is voxel (1, 0, 0)
        let base = (12) * 3;
        let want: Vec<u8> = proj.data()[base..base + 3].iter().map(|&v| to_byte(v)).collect();
        assert_eq!(&hw.pixels[..3], want.as_slice());
    }
}

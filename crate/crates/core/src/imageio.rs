//! Color images and their on-disk formats: binary PPM (P6, 8-bit) for
//! color and little-endian PFM for depth.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::geometry::DepthMap;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("malformed {format} data: {detail}")]
    Format { format: &'static str, detail: String },
    #[error("image shapes differ: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize, usize), (usize, usize, usize)),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_err(format: &'static str, detail: impl Into<String>) -> ImageError {
    ImageError::Format {
        format,
        detail: detail.into(),
    }
}

/// Channel-major float image (`channels × height × width`), nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(channels: usize, width: usize, height: usize) -> Self {
        Self {
            channels,
            width,
            height,
            data: vec![0.0; channels * width * height],
        }
    }

    pub fn filled(channels: usize, width: usize, height: usize, value: f32) -> Self {
        Self {
            channels,
            width,
            height,
            data: vec![value; channels * width * height],
        }
    }

    pub fn from_data(channels: usize, width: usize, height: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), channels * width * height);
        Self {
            channels,
            width,
            height,
            data,
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, x: usize, y: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    /// Mean over channels, as a single-channel image.
    pub fn luma(&self) -> Image {
        let n = self.width * self.height;
        let mut out = Image::new(1, self.width, self.height);
        for c in 0..self.channels {
            for (o, v) in out.data.iter_mut().zip(&self.data[c * n..(c + 1) * n]) {
                *o += v / self.channels as f32;
            }
        }
        out
    }

    /// Block-mean downsampling by an integer factor.
    pub fn downsample(&self, factor: usize) -> Image {
        assert!(factor >= 1 && self.width % factor == 0 && self.height % factor == 0);
        let (w, h) = (self.width / factor, self.height / factor);
        let mut out = Image::new(self.channels, w, h);
        let norm = (factor * factor) as f64;
        for c in 0..self.channels {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0f64;
                    for dy in 0..factor {
                        for dx in 0..factor {
                            acc += self.get(c, x * factor + dx, y * factor + dy) as f64;
                        }
                    }
                    out.set(c, x, y, (acc / norm) as f32);
                }
            }
        }
        out
    }

    /// Shifts content by whole pixels, filling uncovered pixels with `fill`.
    pub fn shifted(&self, dx: isize, dy: isize, fill: f32) -> Image {
        let mut out = Image::filled(self.channels, self.width, self.height, fill);
        for c in 0..self.channels {
            for y in 0..self.height {
                for x in 0..self.width {
                    let (sx, sy) = (x as isize - dx, y as isize - dy);
                    if sx >= 0 && sy >= 0 && (sx as usize) < self.width && (sy as usize) < self.height {
                        out.set(c, x, y, self.get(c, sx as usize, sy as usize));
                    }
                }
            }
        }
        out
    }
}

pub fn write_ppm<W: Write>(img: &Image, mut w: W) -> Result<(), ImageError> {
    if img.channels != 3 {
        return Err(format_err("PPM", format!("{} channels, expected 3", img.channels)));
    }
    write!(w, "P6\n{} {}\n255\n", img.width, img.height)?;
    let mut bytes = Vec::with_capacity(img.width * img.height * 3);
    for y in 0..img.height {
        for x in 0..img.width {
            for c in 0..3 {
                bytes.push((img.get(c, x, y).clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    w.write_all(&bytes)?;
    Ok(())
}

fn header_tokens<R: BufRead>(r: &mut R, count: usize, format: &'static str) -> Result<Vec<String>, ImageError> {
    let mut tokens = Vec::new();
    let mut token = String::new();
    let mut byte = [0u8; 1];
    while tokens.len() < count {
        r.read_exact(&mut byte)?;
        let ch = byte[0] as char;
        if ch == '#' && token.is_empty() {
            let mut skip = String::new();
            r.read_line(&mut skip)?;
            continue;
        }
        if ch.is_ascii_whitespace() {
            if !token.is_empty() {
                tokens.push(std::mem::take(&mut token));
            }
        } else {
            token.push(ch);
        }
        if token.len() > 32 {
            return Err(format_err(format, "header token too long"));
        }
    }
    Ok(tokens)
}

pub fn read_ppm<R: Read>(r: R) -> Result<Image, ImageError> {
    let mut r = BufReader::new(r);
    let t = header_tokens(&mut r, 4, "PPM")?;
    if t[0] != "P6" {
        return Err(format_err("PPM", format!("magic {}", t[0])));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|e| format_err("PPM", e.to_string()));
    let (w, h, max) = (parse(&t[1])?, parse(&t[2])?, parse(&t[3])?);
    if max != 255 {
        return Err(format_err("PPM", format!("maxval {max}")));
    }
    let mut bytes = vec![0u8; w * h * 3];
    r.read_exact(&mut bytes)?;
    let mut img = Image::new(3, w, h);
    for (i, px) in bytes.chunks_exact(3).enumerate() {
        let (x, y) = (i % w, i / w);
        for c in 0..3 {
            img.set(c, x, y, px[c] as f32 / 255.0);
        }
    }
    Ok(img)
}

/// Writes a single-channel PFM (scale −1, little-endian, bottom row first).
/// Invalid pixels are stored as `+inf`.
pub fn write_pfm<W: Write>(depth: &DepthMap, mut w: W) -> Result<(), ImageError> {
    write!(w, "Pf\n{} {}\n-1.0\n", depth.width, depth.height)?;
    let mut bytes = Vec::with_capacity(depth.width * depth.height * 4);
    for y in (0..depth.height).rev() {
        for x in 0..depth.width {
            let v = depth.get(x, y).map(|v| v as f32).unwrap_or(f32::INFINITY);
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&bytes)?;
    Ok(())
}

/// Reads a single-channel PFM; non-finite values become invalid pixels.
pub fn read_pfm<R: Read>(r: R) -> Result<DepthMap, ImageError> {
    let mut r = BufReader::new(r);
    let t = header_tokens(&mut r, 4, "PFM")?;
    if t[0] != "Pf" {
        return Err(format_err("PFM", format!("magic {} (only single-channel Pf supported)", t[0])));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|e| format_err("PFM", e.to_string()));
    let (w, h) = (parse(&t[1])?, parse(&t[2])?);
    let scale: f32 = t[3].parse().map_err(|_| format_err("PFM", format!("scale {}", t[3])))?;
    let little = scale < 0.0;
    let mut bytes = vec![0u8; w * h * 4];
    r.read_exact(&mut bytes)?;
    let mut depth = DepthMap::new(w, h);
    for (i, b) in bytes.chunks_exact(4).enumerate() {
        let raw = [b[0], b[1], b[2], b[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (x, y) = (i % w, h - 1 - i / w);
        depth.set(x, y, v.is_finite().then_some(v));
    }
    Ok(depth)
}

pub fn write_ppm_file(img: &Image, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_ppm(img, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_ppm_file(path: impl AsRef<Path>) -> Result<Image, ImageError> {
    read_ppm(File::open(path)?)
}

pub fn write_pfm_file(depth: &DepthMap, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_pfm(depth, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_pfm_file(path: impl AsRef<Path>) -> Result<DepthMap, ImageError> {
    read_pfm(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_round_trip_keeps_mask_and_orientation() {
        let mut d = DepthMap::new(3, 2);
        d.set(0, 0, Some(1.25));
        d.set(2, 1, Some(-0.5));
        let mut buf = Vec::new();
        write_pfm(&d, &mut buf).unwrap();
        assert!(buf.starts_with(b"Pf\n3 2\n-1.0\n"));
        // first stored row is the bottom image row
        let payload = &buf[b"Pf\n3 2\n-1.0\n".len()..];
        assert_eq!(f32::from_le_bytes(payload[8..12].try_into().unwrap()), -0.5);
        assert_eq!(read_pfm(&buf[..]).unwrap(), d);
    }

    #[test]
    fn ppm_round_trip_quantizes() {
        let mut img = Image::new(3, 2, 2);
        img.set(0, 1, 0, 1.0);
        img.set(2, 0, 1, 0.5);
        let mut buf = Vec::new();
        write_ppm(&img, &mut buf).unwrap();
        let back = read_ppm(&buf[..]).unwrap();
        assert_eq!(back.get(0, 1, 0), 1.0);
        assert!((back.get(2, 0, 1) - 0.5).abs() <= 0.5 / 255.0 + 1e-6);
        assert!(read_ppm(&b"P5\n1 1\n255\n\0"[..]).is_err());
    }

    #[test]
    fn downsample_averages_blocks() {
        let img = Image::from_data(1, 2, 2, vec![1.0, 1.0, 3.0, 3.0]);
        assert_eq!(img.downsample(2).data, vec![2.0]);
    }

    #[test]
    fn shift_moves_content() {
        let img = Image::from_data(1, 3, 1, vec![1.0, 2.0, 3.0]);
        assert_eq!(img.shifted(1, 0, 0.0).data, vec![0.0, 1.0, 2.0]);
    }
}

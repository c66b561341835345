//! Raster grids and their file formats.
//!
//! `ScalarMap` is a single-channel row-major f64 grid, `ColorImage` a
//! three-channel one. Scalar data is exchanged in the FMAP format
//! (magic `FMAP`, little-endian u32 width/height/channels, then f32
//! values row-major); color images as binary PPM (P6, maxval 255).

use crate::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    pub width: usize,
    pub height: usize,
    /// Row-major, interleaved RGB.
    pub data: Vec<f64>,
}

impl ScalarMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height] }
    }

    pub fn constant(width: usize, height: usize, v: f64) -> Self {
        Self { width, height, data: vec![v; width * height] }
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::Dimension(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn clamped01(&self) -> Self {
        self.map(|v| v.clamp(0.0, 1.0))
    }
}

impl ColorImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height * 3] }
    }

    pub fn constant(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self { width, height, data }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::Dimension(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    /// One channel as a ScalarMap.
    pub fn channel(&self, c: usize) -> ScalarMap {
        ScalarMap {
            width: self.width,
            height: self.height,
            data: self.data.iter().skip(c).step_by(3).copied().collect(),
        }
    }
}

// ---------------------------------------------------------------- FMAP

pub fn write_fmap(path: &Path, width: usize, height: usize, channels: usize, data: &[f64]) -> Result<()> {
    if data.len() != width * height * channels {
        return Err(Error::Dimension(format!(
            "fmap payload {} != {}x{}x{}",
            data.len(),
            width,
            height,
            channels
        )));
    }
    let mut buf = Vec::with_capacity(16 + data.len() * 4);
    buf.extend_from_slice(b"FMAP");
    buf.extend_from_slice(&(width as u32).to_le_bytes());
    buf.extend_from_slice(&(height as u32).to_le_bytes());
    buf.extend_from_slice(&(channels as u32).to_le_bytes());
    for &v in data {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_fmap(path: &Path) -> Result<(usize, usize, usize, Vec<f64>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[0..4] != b"FMAP" {
        return Err(Error::Invalid(format!("{}: not an FMAP file", path.display())));
    }
    let rd = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let (w, h, c) = (rd(4), rd(8), rd(12));
    let n = w * h * c;
    if bytes.len() != 16 + n * 4 {
        return Err(Error::Invalid(format!(
            "{}: payload size {} != expected {}",
            path.display(),
            bytes.len() - 16,
            n * 4
        )));
    }
    let data = bytes[16..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    Ok((w, h, c, data))
}

pub fn write_scalar_fmap(path: &Path, map: &ScalarMap) -> Result<()> {
    write_fmap(path, map.width, map.height, 1, &map.data)
}

pub fn read_scalar_fmap(path: &Path) -> Result<ScalarMap> {
    let (w, h, c, data) = read_fmap(path)?;
    if c != 1 {
        return Err(Error::Invalid(format!("{}: expected 1 channel, got {c}", path.display())));
    }
    Ok(ScalarMap { width: w, height: h, data })
}

// ----------------------------------------------------------------- PPM

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

pub fn write_ppm(path: &Path, img: &ColorImage) -> Result<()> {
    let mut buf = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    buf.extend(img.data.iter().map(|&v| quantize(v)));
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

/// Writes a 0/255 grayscale PPM from a binary map.
pub fn write_mask_ppm(path: &Path, mask: &ScalarMap) -> Result<()> {
    let mut buf = format!("P6\n{} {}\n255\n", mask.width, mask.height).into_bytes();
    for &v in &mask.data {
        let b = if v > 0.5 { 255u8 } else { 0u8 };
        buf.extend_from_slice(&[b, b, b]);
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_ppm(path: &Path) -> Result<ColorImage> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let mut token = || -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
        }
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Invalid("truncated PPM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P6" {
        return Err(Error::Invalid(format!("{}: not a P6 PPM", path.display())));
    }
    let w: usize = token()?.parse().map_err(|_| Error::Invalid("bad width".into()))?;
    let h: usize = token()?.parse().map_err(|_| Error::Invalid("bad height".into()))?;
    let maxval: usize = token()?.parse().map_err(|_| Error::Invalid("bad maxval".into()))?;
    if maxval != 255 {
        return Err(Error::Invalid("only maxval 255 PPM supported".into()));
    }
    pos += 1; // single whitespace after maxval
    if bytes.len() < pos + w * h * 3 {
        return Err(Error::Invalid("truncated PPM payload".into()));
    }
    let data = bytes[pos..pos + w * h * 3]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    Ok(ColorImage { width: w, height: h, data })
}

//! Float RGB images and binary foreground masks.
//!
//! Pixel values live in `[0, 1]`; 8-bit conversion only happens at the PNG
//! boundary.

use std::path::Path;

use crate::error::{Error, Result};

pub type Rgb = [f64; 3];

pub const WHITE: Rgb = [1.0, 1.0, 1.0];
pub const BLACK: Rgb = [0.0, 0.0, 0.0];

/// Row-major, channel-interleaved RGB image.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, BLACK)
    }

    pub fn filled(width: usize, height: usize, color: Rgb) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&color);
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::ShapeMismatch {
                what: "image buffer",
                expected: width * height * 3,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_raw(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Rgb {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: Rgb) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&c);
    }

    /// Extracts one channel as a row-major plane.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(3).copied().collect()
    }

    pub fn from_channels(width: usize, height: usize, planes: [&[f64]; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for i in 0..width * height {
            data.push(planes[0][i]);
            data.push(planes[1][i]);
            data.push(planes[2][i]);
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn ensure_same_dims(&self, other: &Image) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                left: self.dims(),
                right: other.dims(),
            });
        }
        Ok(())
    }

    pub fn clamped(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }

    pub fn to_rgb8(&self) -> ::image::RgbImage {
        let bytes = self.data.iter().map(|&v| to_u8(v)).collect();
        ::image::RgbImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer length matches dimensions")
    }

    pub fn from_rgb8(img: &::image::RgbImage) -> Self {
        Self {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.as_raw().iter().map(|&b| b as f64 / 255.0).collect(),
        }
    }

    /// Writes an 8-bit PNG, creating the parent directory if needed.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        ensure_parent(path)?;
        self.to_rgb8()
            .save_with_format(path, ::image::ImageFormat::Png)
            .map_err(|e| Error::from(e).at(path))
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = ::image::open(path).map_err(|e| Error::from(e).at(path))?;
        Ok(Self::from_rgb8(&img.to_rgb8()))
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            std::fs::create_dir_all(dir).map_err(|e| Error::from(e).at(dir))
        }
        _ => Ok(()),
    }
}

#[inline]
fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Foreground flag per pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    /// Foreground threshold applied to alpha / matte values.
    pub const THRESHOLD: f64 = 0.5;

    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, false)
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Thresholds a row-major alpha plane at [`Mask::THRESHOLD`].
    pub fn from_alpha(width: usize, height: usize, alpha: &[f64]) -> Result<Self> {
        if alpha.len() != width * height {
            return Err(Error::ShapeMismatch {
                what: "alpha plane",
                expected: width * height,
                got: alpha.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data: alpha.iter().map(|&a| a >= Self::THRESHOLD).collect(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&v| v)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        ensure_parent(path)?;
        let bytes = self.data.iter().map(|&v| if v { 255 } else { 0 }).collect();
        let img = ::image::GrayImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer length matches dimensions");
        img.save_with_format(path, ::image::ImageFormat::Png)
            .map_err(|e| Error::from(e).at(path))
    }

    /// Loads a grayscale (or RGB/RGBA, using luma) PNG and thresholds it.
    pub fn load_png(path: &Path) -> Result<Self> {
        let img = ::image::open(path).map_err(|e| Error::from(e).at(path))?;
        let gray = img.to_luma8();
        let (w, h) = (gray.width() as usize, gray.height() as usize);
        let alpha: Vec<f64> = gray.as_raw().iter().map(|&b| b as f64 / 255.0).collect();
        Self::from_alpha(w, h, &alpha)
    }
}

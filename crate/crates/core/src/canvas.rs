//! RGB canvases with values in `[0, 1]`.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};

/// An `H x W x 3` image, row-major, channels interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct CanvasImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl CanvasImage {
    /// A black canvas.
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: usize, height: usize, color: [f64; 3]) -> Self {
        assert!(
            width > 0 && height > 0,
            "canvas dimensions must be positive"
        );
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&color);
        }
        CanvasImage {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [f64; 3]) -> Self {
        let mut img = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                img.set_pixel(x, y, f(x, y));
            }
        }
        img
    }

    /// Wraps interleaved RGB data; values are clamped into `[0, 1]`.
    pub fn from_data(width: usize, height: usize, mut data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height * 3 {
            return Err(Error::dims(
                format!("{width}x{height}x3 values"),
                format!("{} values", data.len()),
            ));
        }
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Ok(CanvasImage {
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        for c in 0..3 {
            self.data[i + c] = rgb[c].clamp(0.0, 1.0);
        }
    }

    pub fn from_rgb8(img: &RgbImage) -> Self {
        let (w, h) = img.dimensions();
        let data = img.as_raw().iter().map(|&v| v as f64 / 255.0).collect();
        CanvasImage {
            width: w as usize,
            height: h as usize,
            data,
        }
    }

    pub fn to_rgb8(&self) -> RgbImage {
        RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let p = self.pixel(x as usize, y as usize);
            Rgb(p.map(quantize))
        })
    }

    /// Interleaved RGBA bytes, alpha fully opaque.
    pub fn to_rgba8_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.width * self.height * 4);
        for px in self.data.chunks_exact(3) {
            out.extend(px.iter().map(|&v| quantize(v)));
            out.push(255);
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path.as_ref())?.to_rgb8();
        Ok(Self::from_rgb8(&img))
    }

    /// Writes an 8-bit PNG (format chosen from the extension).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_rgb8().save(path.as_ref())?;
        Ok(())
    }

    /// Bilinear resize with half-pixel centers and edge clamping. Same-size
    /// requests return an exact copy.
    pub fn resize(&self, width: usize, height: usize) -> Self {
        if (width, height) == (self.width, self.height) {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let mut out = Self::new(width, height);
        for y in 0..height {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let ty = fy - y0 as f64;
            for x in 0..width {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let tx = fx - x0 as f64;
                let (a, b) = (self.pixel(x0, y0), self.pixel(x1, y0));
                let (c, d) = (self.pixel(x0, y1), self.pixel(x1, y1));
                let mut px = [0.0; 3];
                for ch in 0..3 {
                    let top = a[ch] + (b[ch] - a[ch]) * tx;
                    let bottom = c[ch] + (d[ch] - c[ch]) * tx;
                    px[ch] = top + (bottom - top) * ty;
                }
                out.set_pixel(x, y, px);
            }
        }
        out
    }

    /// Pads on the right and bottom by replicating the last column and row.
    pub fn pad_edge(&self, width: usize, height: usize) -> Result<Self> {
        if width < self.width || height < self.height {
            return Err(Error::dims(
                format!("at least {}x{}", self.width, self.height),
                format!("{width}x{height}"),
            ));
        }
        Ok(Self::from_fn(width, height, |x, y| {
            self.pixel(x.min(self.width - 1), y.min(self.height - 1))
        }))
    }

    /// Top-left `width x height` window.
    pub fn crop(&self, width: usize, height: usize) -> Result<Self> {
        self.region(0, 0, width, height)
    }

    pub fn region(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 || x0 + width > self.width || y0 + height > self.height {
            return Err(Error::dims(
                format!("window inside {}x{}", self.width, self.height),
                format!("{width}x{height} at ({x0}, {y0})"),
            ));
        }
        let mut out = Self::new(width, height);
        for y in 0..height {
            let src = ((y0 + y) * self.width + x0) * 3;
            let dst = y * width * 3;
            out.data[dst..dst + width * 3].copy_from_slice(&self.data[src..src + width * 3]);
        }
        Ok(out)
    }

    pub fn paste(&mut self, patch: &CanvasImage, x0: usize, y0: usize) -> Result<()> {
        if x0 + patch.width > self.width || y0 + patch.height > self.height {
            return Err(Error::dims(
                format!("patch inside {}x{}", self.width, self.height),
                format!("{}x{} at ({x0}, {y0})", patch.width, patch.height),
            ));
        }
        for y in 0..patch.height {
            let dst = ((y0 + y) * self.width + x0) * 3;
            let src = y * patch.width * 3;
            self.data[dst..dst + patch.width * 3]
                .copy_from_slice(&patch.data[src..src + patch.width * 3]);
        }
        Ok(())
    }

    pub fn ensure_same_dims(&self, other: &CanvasImage) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::dims(
                format!("{}x{}", self.width, self.height),
                format!("{}x{}", other.width, other.height),
            ));
        }
        Ok(())
    }

    /// Mean absolute difference over all pixels and channels.
    pub fn mean_abs_diff(&self, other: &CanvasImage) -> Result<f64> {
        self.ensure_same_dims(other)?;
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .sum();
        Ok(sum / self.data.len() as f64)
    }

    /// Rounds every value to the nearest 8-bit level.
    pub fn quantized(&self) -> Self {
        let data = self
            .data
            .iter()
            .map(|&v| quantize(v) as f64 / 255.0)
            .collect();
        CanvasImage {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

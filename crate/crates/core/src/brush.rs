//! Brush primitives: a grayscale texture plus an alpha mask.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_BRUSH_SIZE: usize = 64;

const OIL_SEED: u64 = 0x0b1_5eed;

#[derive(Debug, Clone, PartialEq)]
pub struct BrushPrimitive {
    name: String,
    width: usize,
    height: usize,
    texture: Vec<f64>,
    alpha: Vec<f64>,
}

impl BrushPrimitive {
    pub fn new(
        name: impl Into<String>,
        width: usize,
        height: usize,
        texture: Vec<f64>,
        alpha: Vec<f64>,
    ) -> Result<Self> {
        let n = width * height;
        if width == 0 || height == 0 || texture.len() != n || alpha.len() != n {
            return Err(Error::dims(
                format!("{width}x{height} texture and alpha"),
                format!("{} / {} values", texture.len(), alpha.len()),
            ));
        }
        let ok = texture
            .iter()
            .chain(&alpha)
            .all(|v| (0.0..=1.0).contains(v));
        if !ok {
            return Err(Error::InvalidConfig(
                "brush values must lie in [0, 1]".into(),
            ));
        }
        Ok(BrushPrimitive {
            name: name.into(),
            width,
            height,
            texture,
            alpha,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn texture(&self) -> &[f64] {
        &self.texture
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Loads a custom brush from an 8-bit gray+alpha image: gray becomes the
    /// texture, alpha the coverage mask.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path.as_ref())?.to_luma_alpha8();
        let (w, h) = img.dimensions();
        let mut texture = Vec::with_capacity((w * h) as usize);
        let mut alpha = Vec::with_capacity((w * h) as usize);
        for px in img.pixels() {
            texture.push(px.0[0] as f64 / 255.0);
            alpha.push(px.0[1] as f64 / 255.0);
        }
        Self::new("custom", w as usize, h as usize, texture, alpha)
    }

    /// Resolves a brush by name, or loads it from `image` when given.
    pub fn resolve(kind: &str, image: Option<&Path>) -> Result<Self> {
        match image {
            Some(path) => Self::load(path),
            None => generate_brush(kind, DEFAULT_BRUSH_SIZE, DEFAULT_BRUSH_SIZE),
        }
    }
}

/// Builds one of the procedural brushes: `rectangle`, `circle` or `oil`.
pub fn generate_brush(kind: &str, width: usize, height: usize) -> Result<BrushPrimitive> {
    if width < 8 || height < 8 {
        return Err(Error::InvalidConfig(format!(
            "brush must be at least 8x8, got {width}x{height}"
        )));
    }
    let n = width * height;
    match kind {
        "rectangle" => BrushPrimitive::new(kind, width, height, vec![1.0; n], vec![1.0; n]),
        "circle" => {
            let (rx, ry) = (width as f64 / 2.0, height as f64 / 2.0);
            let soft = rx.min(ry);
            let mut alpha = Vec::with_capacity(n);
            for y in 0..height {
                for x in 0..width {
                    let dx = (x as f64 + 0.5 - rx) / rx;
                    let dy = (y as f64 + 0.5 - ry) / ry;
                    let d = (dx * dx + dy * dy).sqrt();
                    alpha.push((0.5 + (1.0 - d) * soft).clamp(0.0, 1.0));
                }
            }
            BrushPrimitive::new(kind, width, height, vec![1.0; n], alpha)
        }
        "oil" => Ok(oil_brush(width, height)),
        other => Err(Error::UnknownBrush(other.to_string())),
    }
}

/// Rectangle with bristle streaks running along the stroke's length and
/// ragged, tapered ends.
fn oil_brush(width: usize, height: usize) -> BrushPrimitive {
    let mut rng = ChaCha8Rng::seed_from_u64(OIL_SEED);
    let raw: Vec<f64> = (0..height).map(|_| rng.random::<f64>()).collect();
    let streak: Vec<f64> = (0..height)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(height - 1);
            (raw[lo] + 2.0 * raw[i] + raw[hi]) / 4.0
        })
        .collect();
    let max_taper = (width as f64 * 0.12).max(1.0);
    let tapers: Vec<(f64, f64)> = (0..height)
        .map(|_| {
            (
                rng.random_range(0.25..1.0) * max_taper,
                rng.random_range(0.25..1.0) * max_taper,
            )
        })
        .collect();

    let mut texture = Vec::with_capacity(width * height);
    let mut alpha = Vec::with_capacity(width * height);
    for y in 0..height {
        let (head, tail) = tapers[y];
        for x in 0..width {
            let from_left = x as f64 + 0.5;
            let from_right = width as f64 - x as f64 - 0.5;
            let taper = (from_left / head).min(from_right / tail).min(1.0);
            let along = 0.92 + 0.08 * ((x as f64 / width as f64) * std::f64::consts::PI).sin();
            texture.push((0.55 + 0.45 * streak[y]) * along);
            alpha.push(taper * (0.8 + 0.2 * streak[y]));
        }
    }
    BrushPrimitive {
        name: "oil".into(),
        width,
        height,
        texture,
        alpha,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangle_is_fully_opaque() {
        let b = generate_brush("rectangle", 32, 32).unwrap();
        assert!(b.alpha().iter().all(|&a| a == 1.0));
    }

    #[test]
    fn circle_center_and_corner() {
        let b = generate_brush("circle", 32, 32).unwrap();
        assert_eq!(b.alpha()[16 * 32 + 16], 1.0);
        assert_eq!(b.alpha()[0], 0.0);
        assert_eq!(b.alpha()[32 * 32 - 1], 0.0);
    }

    #[test]
    fn oil_is_deterministic_and_in_range() {
        let a = generate_brush("oil", 32, 32).unwrap();
        let b = generate_brush("oil", 32, 32).unwrap();
        assert_eq!(a, b);
        assert!(a
            .texture()
            .iter()
            .chain(a.alpha())
            .all(|v| (0.0..=1.0).contains(v)));
        // interior coverage is mostly opaque
        assert!(a.alpha()[16 * 32 + 16] > 0.75);
    }

    #[test]
    fn unknown_and_small_brushes_fail() {
        assert!(matches!(
            generate_brush("crayon", 32, 32),
            Err(Error::UnknownBrush(_))
        ));
        assert!(generate_brush("rectangle", 4, 32).is_err());
    }

    #[test]
    fn custom_brush_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("brush.png");
        let img = image::GrayAlphaImage::from_fn(9, 10, |x, y| {
            image::LumaA([(x * 20) as u8, (y * 25) as u8])
        });
        img.save(&path).unwrap();
        let b = BrushPrimitive::load(&path).unwrap();
        assert_eq!((b.width(), b.height(), b.name()), (9, 10, "custom"));
        assert_eq!(b.texture()[3], 60.0 / 255.0);
        assert_eq!(b.alpha()[9 * 2], 50.0 / 255.0);
    }
}

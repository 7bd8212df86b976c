//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Strokes cross the boundary as flat `Float64Array`s, eight numbers per
//! stroke in `[x, y, h, w, theta, r, g, b]` order. Images come back as RGBA
//! bytes ready for `ImageData`.

use brushwork::brush::{generate_brush, BrushPrimitive};
use brushwork::canvas::CanvasImage;
use brushwork::datagen::{make_training_sample, SynthConfig};
use brushwork::matcher::hungarian_solve;
use brushwork::render::render_stroke_set;
use brushwork::stroke::{l1_param_distance, stroke_wasserstein, Stroke, PARAM_COUNT};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

/// Texture resolution of the demo brushes.
const BRUSH_SIZE: usize = 64;

fn brush(kind: &str) -> Result<BrushPrimitive, String> {
    generate_brush(kind, BRUSH_SIZE, BRUSH_SIZE).map_err(|e| e.to_string())
}

fn strokes_from_flat(flat: &[f64]) -> Result<Vec<Stroke>, String> {
    if flat.len() % PARAM_COUNT != 0 {
        return Err(format!(
            "{} values is not a multiple of {PARAM_COUNT}",
            flat.len()
        ));
    }
    Ok(flat
        .chunks_exact(PARAM_COUNT)
        .map(|c| Stroke::from_array(std::array::from_fn(|i| c[i])).with_min_size())
        .collect())
}

/// Paints `strokes` in order on a `size x size` canvas of one color.
pub fn render_rgba(
    strokes: &[f64],
    size: usize,
    background: [f64; 3],
    kind: &str,
) -> Result<Vec<u8>, String> {
    if size == 0 || size > 1024 {
        return Err(format!("canvas size {size} outside 1..=1024"));
    }
    let strokes = strokes_from_flat(strokes)?;
    let canvas = CanvasImage::filled(size, size, background);
    Ok(render_stroke_set(&canvas, &strokes, &brush(kind)?).to_rgba8_bytes())
}

/// `[D_L1, D_W]` between two strokes.
pub fn distances(a: &[f64], b: &[f64]) -> Result<Vec<f64>, String> {
    let (a, b) = match (
        strokes_from_flat(a)?.as_slice(),
        strokes_from_flat(b)?.as_slice(),
    ) {
        ([a], [b]) => (*a, *b),
        _ => return Err("expected exactly one stroke on each side".into()),
    };
    let w = stroke_wasserstein(&a, &b).map_err(|e| e.to_string())?;
    Ok(vec![l1_param_distance(&a, &b), w])
}

/// Optimal assignment of `a` onto `b` under `D_L1 + D_W`: entry `i` is the
/// index in `b` matched to stroke `i` of `a`.
pub fn assignment(a: &[f64], b: &[f64]) -> Result<Vec<u32>, String> {
    let (a, b) = (strokes_from_flat(a)?, strokes_from_flat(b)?);
    if a.len() != b.len() {
        return Err(format!("set sizes differ: {} vs {}", a.len(), b.len()));
    }
    let cost = a
        .iter()
        .map(|u| {
            b.iter()
                .map(|v| Ok(l1_param_distance(u, v) + stroke_wasserstein(u, v)?))
                .collect::<brushwork::Result<Vec<f64>>>()
        })
        .collect::<brushwork::Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    let m = hungarian_solve(&cost).map_err(|e| e.to_string())?;
    let mut out = vec![0u32; a.len()];
    for (i, j) in m.pairs {
        out[i] = j as u32;
    }
    Ok(out)
}

/// One synthetic training pair: the canvas, the target and the labelled
/// foreground strokes.
#[wasm_bindgen]
pub struct Sample {
    size: usize,
    canvas: Vec<u8>,
    target: Vec<u8>,
    strokes: Vec<f64>,
    labels: Vec<u8>,
}

#[wasm_bindgen]
impl Sample {
    #[wasm_bindgen(getter)]
    pub fn size(&self) -> usize {
        self.size
    }

    #[wasm_bindgen(getter)]
    pub fn canvas(&self) -> Vec<u8> {
        self.canvas.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn target(&self) -> Vec<u8> {
        self.target.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn strokes(&self) -> Vec<f64> {
        self.strokes.clone()
    }

    /// 1 for strokes that count as targets, 0 for buried ones.
    #[wasm_bindgen(getter)]
    pub fn labels(&self) -> Vec<u8> {
        self.labels.clone()
    }
}

pub fn synth(seed: u64, patch: usize, strokes: usize, kind: &str) -> Result<Sample, String> {
    let cfg = SynthConfig::for_patch(patch, strokes);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = make_training_sample(&cfg, &brush(kind)?, &mut rng)
        .map_err(|e| e.to_string())?
        .into_iter()
        .next()
        .ok_or("generator returned no samples")?;
    Ok(Sample {
        size: patch,
        canvas: sample.canvas.to_rgba8_bytes(),
        target: sample.target.to_rgba8_bytes(),
        strokes: sample
            .truth
            .strokes
            .iter()
            .flat_map(Stroke::to_array)
            .collect(),
        labels: sample.truth.labels.iter().map(|&l| l as u8).collect(),
    })
}

#[wasm_bindgen(js_name = renderStrokes)]
pub fn render_strokes_js(
    strokes: &[f64],
    size: usize,
    r: f64,
    g: f64,
    b: f64,
    kind: &str,
) -> Result<Vec<u8>, JsError> {
    render_rgba(strokes, size, [r, g, b], kind).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = strokeDistances)]
pub fn stroke_distances_js(a: &[f64], b: &[f64]) -> Result<Vec<f64>, JsError> {
    distances(a, b).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = matchStrokes)]
pub fn match_strokes_js(a: &[f64], b: &[f64]) -> Result<Vec<u32>, JsError> {
    assignment(a, b).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = synthSample)]
pub fn synth_sample_js(
    seed: u32,
    patch: usize,
    strokes: usize,
    kind: &str,
) -> Result<Sample, JsError> {
    synth(u64::from(seed), patch, strokes, kind).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_canvas_stroke_paints_every_pixel() {
        let rgba = render_rgba(
            &[0.5, 0.5, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0],
            16,
            [0.0; 3],
            "rectangle",
        )
        .unwrap();
        assert_eq!(rgba.len(), 16 * 16 * 4);
        assert!(rgba.chunks(4).all(|p| p == [255, 0, 0, 255]));
    }

    #[test]
    fn rejects_ragged_input() {
        assert!(render_rgba(&[0.5; 7], 16, [0.0; 3], "oil").is_err());
        assert!(distances(&[0.5; 8], &[0.5; 16]).is_err());
        assert!(
            render_rgba(&[], 16, [0.0; 3], "charcoal").is_err(),
            "unknown brush"
        );
        assert!(render_rgba(&[], 0, [0.0; 3], "oil").is_err());
    }

    #[test]
    fn translation_distance() {
        let a = [0.1, 0.1, 0.2, 0.3, 0.25, 0.0, 0.0, 0.0];
        let b = [0.4, 0.5, 0.2, 0.3, 0.25, 0.0, 0.0, 0.0];
        let d = distances(&a, &b).unwrap();
        assert!((d[1] - 0.25).abs() < 1e-9);
        assert!((d[0] - 0.7).abs() < 1e-9);
    }

    #[test]
    fn assignment_recovers_a_permutation() {
        let a = [
            0.2, 0.2, 0.3, 0.3, 0.0, 1.0, 0.0, 0.0, //
            0.8, 0.8, 0.2, 0.4, 0.5, 0.0, 1.0, 0.0, //
            0.5, 0.2, 0.1, 0.6, 0.9, 0.0, 0.0, 1.0,
        ];
        let mut b = Vec::new();
        for i in [2, 0, 1] {
            b.extend_from_slice(&a[i * 8..i * 8 + 8]);
        }
        assert_eq!(assignment(&a, &b).unwrap(), vec![1, 2, 0]);
    }

    #[test]
    fn synth_is_seeded() {
        let a = synth(3, 32, 8, "oil").unwrap();
        let b = synth(3, 32, 8, "oil").unwrap();
        assert_eq!(a.target, b.target);
        assert_eq!(a.strokes.len(), 64);
        assert_eq!(a.labels.len(), 8);
        assert_eq!(a.canvas.len(), 32 * 32 * 4);
    }
}

//! Parameter-free stroke renderer.
//!
//! Each canvas pixel is mapped through the inverse stroke transform
//! (translate, rotate, scale) into brush coordinates and the brush is sampled
//! bilinearly. Alpha is zero outside the brush; the texture is edge-clamped.
//! Strokes are layered with `out = alpha * color + (1 - alpha) * canvas`.
//!
//! [`render_stroke_set_backward`] propagates an image-space gradient back to
//! all eight stroke parameters and to per-stroke gate values.

use std::f64::consts::PI;

use crate::brush::BrushPrimitive;
use crate::canvas::CanvasImage;
use crate::error::{Error, Result};
use crate::stroke::{
    Stroke, EPS_SIZE, IDX_B, IDX_G, IDX_H, IDX_R, IDX_THETA, IDX_W, IDX_X, IDX_Y, PARAM_COUNT,
};

/// How sampled coverage is turned into alpha.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlphaMode {
    /// Continuous coverage; required for gradients.
    #[default]
    Continuous,
    /// Coverage thresholded at 0.5, for crisp exports.
    Binary,
}

impl AlphaMode {
    fn apply(self, a: f64) -> f64 {
        match self {
            AlphaMode::Continuous => a,
            AlphaMode::Binary => {
                if a >= 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// The transformed, colorized brush and its coverage on a full canvas grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedStroke {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB.
    pub color: Vec<f64>,
    pub alpha: Vec<f64>,
}

/// Bilinear sample and its partial derivatives with respect to the sample position.
#[derive(Debug, Clone, Copy)]
struct Sample {
    value: f64,
    d_u: f64,
    d_v: f64,
}

fn sample_zero_padded(values: &[f64], bw: usize, bh: usize, u: f64, v: f64) -> Sample {
    let zero = Sample {
        value: 0.0,
        d_u: 0.0,
        d_v: 0.0,
    };
    if !(u > -1.0 && u < bw as f64 && v > -1.0 && v < bh as f64) {
        return zero;
    }
    let (x0, y0) = (u.floor(), v.floor());
    let (fx, fy) = (u - x0, v - y0);
    let (x0, y0) = (x0 as i64, y0 as i64);
    let at = |x: i64, y: i64| -> f64 {
        if x < 0 || y < 0 || x >= bw as i64 || y >= bh as i64 {
            0.0
        } else {
            values[y as usize * bw + x as usize]
        }
    };
    let (v00, v10) = (at(x0, y0), at(x0 + 1, y0));
    let (v01, v11) = (at(x0, y0 + 1), at(x0 + 1, y0 + 1));
    Sample {
        value: (1.0 - fx) * (1.0 - fy) * v00
            + fx * (1.0 - fy) * v10
            + (1.0 - fx) * fy * v01
            + fx * fy * v11,
        d_u: (1.0 - fy) * (v10 - v00) + fy * (v11 - v01),
        d_v: (1.0 - fx) * (v01 - v00) + fx * (v11 - v10),
    }
}

fn sample_clamped(values: &[f64], bw: usize, bh: usize, u: f64, v: f64) -> Sample {
    let (max_u, max_v) = ((bw - 1) as f64, (bh - 1) as f64);
    let (cu, cv) = (u.clamp(0.0, max_u), v.clamp(0.0, max_v));
    let (x0, y0) = (cu.floor() as usize, cv.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(bw - 1), (y0 + 1).min(bh - 1));
    let (fx, fy) = (cu - x0 as f64, cv - y0 as f64);
    let (v00, v10) = (values[y0 * bw + x0], values[y0 * bw + x1]);
    let (v01, v11) = (values[y1 * bw + x0], values[y1 * bw + x1]);
    let inside_u = u > 0.0 && u < max_u;
    let inside_v = v > 0.0 && v < max_v;
    Sample {
        value: (1.0 - fx) * (1.0 - fy) * v00
            + fx * (1.0 - fy) * v10
            + (1.0 - fx) * fy * v01
            + fx * fy * v11,
        d_u: if inside_u {
            (1.0 - fy) * (v10 - v00) + fy * (v11 - v01)
        } else {
            0.0
        },
        d_v: if inside_v {
            (1.0 - fx) * (v01 - v00) + fx * (v11 - v10)
        } else {
            0.0
        },
    }
}

/// Stroke placement on a particular canvas grid.
struct Placement {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    cos: f64,
    sin: f64,
    canvas_w: usize,
    canvas_h: usize,
    brush_w: f64,
    brush_h: f64,
}

/// Brush-space position of one canvas pixel, with partials of both brush
/// coordinates with respect to `[x, y, h, w, theta]` (indexed like [`Stroke`]).
struct Mapped {
    u: f64,
    v: f64,
    du: [f64; 5],
    dv: [f64; 5],
}

impl Placement {
    fn new(s: &Stroke, brush: &BrushPrimitive, canvas_w: usize, canvas_h: usize) -> Self {
        let (sin, cos) = s.angle_radians().sin_cos();
        Placement {
            x: s.x,
            y: s.y,
            w: s.w.max(EPS_SIZE),
            h: s.h.max(EPS_SIZE),
            cos,
            sin,
            canvas_w,
            canvas_h,
            brush_w: brush.width() as f64,
            brush_h: brush.height() as f64,
        }
    }

    fn map(&self, px: usize, py: usize) -> Mapped {
        let gx = (px as f64 + 0.5) / self.canvas_w as f64;
        let gy = (py as f64 + 0.5) / self.canvas_h as f64;
        let (dx, dy) = (gx - self.x, gy - self.y);
        // rotate by -theta
        let along = self.cos * dx + self.sin * dy;
        let across = -self.sin * dx + self.cos * dy;
        let su = self.brush_w / self.w;
        let sv = self.brush_h / self.h;
        let u = along * su + self.brush_w / 2.0 - 0.5;
        let v = across * sv + self.brush_h / 2.0 - 0.5;
        let mut du = [0.0; 5];
        let mut dv = [0.0; 5];
        du[IDX_X] = -self.cos * su;
        du[IDX_Y] = -self.sin * su;
        du[IDX_W] = -along * su / self.w;
        du[IDX_THETA] = PI * across * su;
        dv[IDX_X] = self.sin * sv;
        dv[IDX_Y] = -self.cos * sv;
        dv[IDX_H] = -across * sv / self.h;
        dv[IDX_THETA] = -PI * along * sv;
        Mapped { u, v, du, dv }
    }

    /// Conservative pixel window outside of which alpha is exactly zero.
    fn bounds(&self) -> (usize, usize, usize, usize) {
        let ext_w = self.w * (0.5 + 0.5 / self.brush_w);
        let ext_h = self.h * (0.5 + 0.5 / self.brush_h);
        let half_x = self.cos.abs() * ext_w + self.sin.abs() * ext_h;
        let half_y = self.sin.abs() * ext_w + self.cos.abs() * ext_h;
        let span = |center: f64, half: f64, n: usize| {
            let lo = ((center - half) * n as f64 - 0.5).floor() - 1.0;
            let hi = ((center + half) * n as f64 - 0.5).ceil() + 2.0;
            let lo = lo.max(0.0).min(n as f64) as usize;
            let hi = hi.max(0.0).min(n as f64) as usize;
            (lo, hi)
        };
        let (x0, x1) = span(self.x, half_x, self.canvas_w);
        let (y0, y1) = span(self.y, half_y, self.canvas_h);
        (x0, x1, y0, y1)
    }
}

/// Renders one stroke onto an empty grid of `width x height` pixels.
pub fn render_single_stroke(
    s: &Stroke,
    brush: &BrushPrimitive,
    width: usize,
    height: usize,
) -> RenderedStroke {
    render_single_stroke_with(s, brush, width, height, AlphaMode::Continuous)
}

pub fn render_single_stroke_with(
    s: &Stroke,
    brush: &BrushPrimitive,
    width: usize,
    height: usize,
    mode: AlphaMode,
) -> RenderedStroke {
    let mut out = RenderedStroke {
        width,
        height,
        color: vec![0.0; width * height * 3],
        alpha: vec![0.0; width * height],
    };
    let place = Placement::new(s, brush, width, height);
    let rgb = s.color();
    let (x0, x1, y0, y1) = place.bounds();
    for py in y0..y1 {
        for px in x0..x1 {
            let m = place.map(px, py);
            let a = sample_zero_padded(brush.alpha(), brush.width(), brush.height(), m.u, m.v);
            let t = sample_clamped(brush.texture(), brush.width(), brush.height(), m.u, m.v);
            let i = py * width + px;
            out.alpha[i] = mode.apply(a.value.clamp(0.0, 1.0));
            for c in 0..3 {
                out.color[i * 3 + c] = (t.value * rgb[c]).clamp(0.0, 1.0);
            }
        }
    }
    out
}

/// `out = alpha * color + (1 - alpha) * canvas`.
pub fn composite(canvas: &CanvasImage, rendered: &RenderedStroke) -> Result<CanvasImage> {
    if canvas.dims() != (rendered.width, rendered.height) {
        return Err(Error::dims(
            format!("{}x{}", canvas.width(), canvas.height()),
            format!("{}x{}", rendered.width, rendered.height),
        ));
    }
    let mut out = canvas.clone();
    for (i, &a) in rendered.alpha.iter().enumerate() {
        let px = &mut out.data_mut()[i * 3..i * 3 + 3];
        for c in 0..3 {
            px[c] = blend(a, rendered.color[i * 3 + c], px[c]);
        }
    }
    Ok(out)
}

#[inline]
fn blend(alpha: f64, color: f64, under: f64) -> f64 {
    alpha * color + (1.0 - alpha) * under
}

/// Composites one stroke in place, touching only pixels it can cover.
/// Produces exactly the same values as [`composite`] of [`render_single_stroke_with`].
pub fn paint_stroke(canvas: &mut CanvasImage, s: &Stroke, brush: &BrushPrimitive, mode: AlphaMode) {
    let (width, height) = canvas.dims();
    let place = Placement::new(s, brush, width, height);
    let rgb = s.color();
    let (x0, x1, y0, y1) = place.bounds();
    let data = canvas.data_mut();
    for py in y0..y1 {
        for px in x0..x1 {
            let m = place.map(px, py);
            let a = sample_zero_padded(brush.alpha(), brush.width(), brush.height(), m.u, m.v);
            let t = sample_clamped(brush.texture(), brush.width(), brush.height(), m.u, m.v);
            let alpha = mode.apply(a.value.clamp(0.0, 1.0));
            let i = (py * width + px) * 3;
            for c in 0..3 {
                let color = (t.value * rgb[c]).clamp(0.0, 1.0);
                data[i + c] = blend(alpha, color, data[i + c]);
            }
        }
    }
}

/// Paints `strokes` in order onto a copy of `canvas`.
pub fn render_stroke_set(
    canvas: &CanvasImage,
    strokes: &[Stroke],
    brush: &BrushPrimitive,
) -> CanvasImage {
    render_stroke_set_with(canvas, strokes, brush, AlphaMode::Continuous)
}

pub fn render_stroke_set_with(
    canvas: &CanvasImage,
    strokes: &[Stroke],
    brush: &BrushPrimitive,
    mode: AlphaMode,
) -> CanvasImage {
    let mut out = canvas.clone();
    for s in strokes {
        paint_stroke(&mut out, s, brush, mode);
    }
    out
}

/// Renders strokes gated by hard decisions (`false` strokes are skipped).
pub fn render_gated(
    canvas: &CanvasImage,
    strokes: &[Stroke],
    gates: &[bool],
    brush: &BrushPrimitive,
) -> CanvasImage {
    let mut out = canvas.clone();
    for (s, _) in strokes.iter().zip(gates).filter(|(_, &g)| g) {
        paint_stroke(&mut out, s, brush, AlphaMode::Continuous);
    }
    out
}

/// Gradients from [`render_stroke_set_backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct RenderGrad {
    pub strokes: Vec<[f64; PARAM_COUNT]>,
    /// Gradient with respect to each stroke's multiplicative alpha gate.
    pub gates: Vec<f64>,
    /// Gradient with respect to the input canvas.
    pub canvas: Vec<f64>,
}

/// Reverse-mode pass through gated compositing. `gates[i]` scales stroke
/// `i`'s alpha (0 or 1 in training); `grad_out` is `dL/d(output image)`.
pub fn render_stroke_set_backward(
    canvas: &CanvasImage,
    strokes: &[Stroke],
    gates: &[bool],
    brush: &BrushPrimitive,
    grad_out: &[f64],
) -> Result<RenderGrad> {
    let (width, height) = canvas.dims();
    if grad_out.len() != width * height * 3 || gates.len() != strokes.len() {
        return Err(Error::dims(
            format!(
                "{} gradient values and {} gates",
                width * height * 3,
                strokes.len()
            ),
            format!("{} / {}", grad_out.len(), gates.len()),
        ));
    }
    // canvases before each stroke
    let mut history = Vec::with_capacity(strokes.len());
    let mut current = canvas.clone();
    for (s, &g) in strokes.iter().zip(gates) {
        history.push(current.clone());
        if g {
            paint_stroke(&mut current, s, brush, AlphaMode::Continuous);
        }
    }

    let mut grad = grad_out.to_vec();
    let mut grad_strokes = vec![[0.0; PARAM_COUNT]; strokes.len()];
    let mut grad_gates = vec![0.0; strokes.len()];
    for i in (0..strokes.len()).rev() {
        let s = &strokes[i];
        let gate = if gates[i] { 1.0 } else { 0.0 };
        let before = history[i].data();
        let place = Placement::new(s, brush, width, height);
        let rgb = s.color();
        let (x0, x1, y0, y1) = place.bounds();
        let gs = &mut grad_strokes[i];
        for py in y0..y1 {
            for px in x0..x1 {
                let m = place.map(px, py);
                let a = sample_zero_padded(brush.alpha(), brush.width(), brush.height(), m.u, m.v);
                let t = sample_clamped(brush.texture(), brush.width(), brush.height(), m.u, m.v);
                let alpha = a.value.clamp(0.0, 1.0);
                let k = (py * width + px) * 3;
                let g = [grad[k], grad[k + 1], grad[k + 2]];
                if g == [0.0; 3] {
                    continue;
                }
                let mut s_diff = 0.0;
                let mut rgb_dot = 0.0;
                for c in 0..3 {
                    let color = t.value * rgb[c];
                    s_diff += (color - before[k + c]) * g[c];
                    rgb_dot += rgb[c] * g[c];
                }
                grad_gates[i] += alpha * s_diff;
                if gate != 0.0 {
                    let d_alpha = s_diff;
                    let d_tex = alpha * rgb_dot;
                    gs[IDX_R] += alpha * t.value * g[0];
                    gs[IDX_G] += alpha * t.value * g[1];
                    gs[IDX_B] += alpha * t.value * g[2];
                    let d_u = d_alpha * a.d_u + d_tex * t.d_u;
                    let d_v = d_alpha * a.d_v + d_tex * t.d_v;
                    for p in [IDX_X, IDX_Y, IDX_H, IDX_W, IDX_THETA] {
                        gs[p] += d_u * m.du[p] + d_v * m.dv[p];
                    }
                    for c in 0..3 {
                        grad[k + c] *= 1.0 - alpha;
                    }
                }
            }
        }
    }
    Ok(RenderGrad {
        strokes: grad_strokes,
        gates: grad_gates,
        canvas: grad,
    })
}

/// Mean absolute difference between the gated rendering and `target`, with
/// gradients for every stroke parameter and gate.
pub fn pixel_l1_with_grad(
    canvas: &CanvasImage,
    strokes: &[Stroke],
    gates: &[bool],
    brush: &BrushPrimitive,
    target: &CanvasImage,
) -> Result<(f64, CanvasImage, RenderGrad)> {
    canvas.ensure_same_dims(target)?;
    let rendered = render_gated(canvas, strokes, gates, brush);
    let n = rendered.data().len() as f64;
    let mut loss = 0.0;
    let grad_out: Vec<f64> = rendered
        .data()
        .iter()
        .zip(target.data())
        .map(|(r, t)| {
            let d = r - t;
            loss += d.abs();
            if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    let grad = render_stroke_set_backward(canvas, strokes, gates, brush, &grad_out)?;
    Ok((loss / n, rendered, grad))
}

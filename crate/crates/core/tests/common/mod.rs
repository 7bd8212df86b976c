//! Oracles shared by the gradient and acceptance suites.
#![allow(dead_code)]

use brushwork::brush::generate_brush;
use brushwork::canvas::CanvasImage;
use brushwork::render::pixel_l1_with_grad;
use brushwork::stroke::{stroke_wasserstein, stroke_wasserstein_grad, Stroke, PARAM_COUNT};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `|a - b| / max(|a|, |b|)` over whole vectors; 0 when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

fn central_diff(
    p: [f64; PARAM_COUNT],
    idx: &[usize],
    step: f64,
    f: impl Fn(&Stroke) -> f64,
) -> Vec<f64> {
    idx.iter()
        .map(|&i| {
            let (mut hi, mut lo) = (p, p);
            hi[i] += step;
            lo[i] -= step;
            (f(&Stroke::from_array(hi)) - f(&Stroke::from_array(lo))) / (2.0 * step)
        })
        .collect()
}

/// A stroke away from the clamping bounds of every parameter.
pub fn interior_stroke(rng: &mut ChaCha8Rng) -> Stroke {
    Stroke::new(
        rng.random_range(0.2..0.8),
        rng.random_range(0.2..0.8),
        rng.random_range(0.15..0.7),
        rng.random_range(0.15..0.7),
        rng.random_range(0.05..0.95),
        rng.random_range(0.05..0.95),
        rng.random_range(0.05..0.95),
        rng.random_range(0.05..0.95),
    )
}

/// Stroke whose rotated box stays at least 3 pixels inside a 32 pixel canvas.
fn framed_stroke(rng: &mut ChaCha8Rng) -> Stroke {
    Stroke::new(
        rng.random_range(0.35..0.65),
        rng.random_range(0.35..0.65),
        rng.random_range(0.1..0.35),
        rng.random_range(0.1..0.35),
        rng.random_range(0.0..1.0),
        rng.random_range(0.05..0.95),
        rng.random_range(0.05..0.95),
        rng.random_range(0.05..0.95),
    )
}

/// Relative error between the analytic gradient of the pixel L1 loss for one
/// stroke and central differences, at `points` random configurations.
pub fn renderer_gradient_errors(points: usize, step: f64, seed: u64) -> Vec<f64> {
    let brush = generate_brush("oil", 64, 64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = 32;
    (0..points)
        .map(|_| {
            let mut noise = || {
                let data = (0..size * size * 3).map(|_| rng.random()).collect();
                CanvasImage::from_data(size, size, data).unwrap()
            };
            let canvas = noise();
            let target = noise();
            let s = framed_stroke(&mut rng);
            let loss = |s: &Stroke| {
                pixel_l1_with_grad(&canvas, &[*s], &[true], &brush, &target)
                    .unwrap()
                    .0
            };
            let (_, _, g) = pixel_l1_with_grad(&canvas, &[s], &[true], &brush, &target).unwrap();
            let all: Vec<usize> = (0..PARAM_COUNT).collect();
            let fd = central_diff(s.to_array(), &all, step, loss);
            rel_err(&g.strokes[0], &fd)
        })
        .collect()
}

/// Relative error of the Wasserstein gradient with respect to the five shape
/// parameters of both strokes.
pub fn wasserstein_gradient_errors(points: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = [0, 1, 2, 3, 4];
    (0..points)
        .map(|_| {
            let u = interior_stroke(&mut rng);
            let v = interior_stroke(&mut rng);
            let (_, gu, gv) = stroke_wasserstein_grad(&u, &v).unwrap();
            let fu = central_diff(u.to_array(), &shape, 1e-4, |s| {
                stroke_wasserstein(s, &v).unwrap()
            });
            let fv = central_diff(v.to_array(), &shape, 1e-4, |s| {
                stroke_wasserstein(&u, s).unwrap()
            });
            let analytic: Vec<f64> = shape
                .iter()
                .map(|&i| gu[i])
                .chain(shape.iter().map(|&i| gv[i]))
                .collect();
            let numeric: Vec<f64> = fu.into_iter().chain(fv).collect();
            rel_err(&analytic, &numeric)
        })
        .collect()
}

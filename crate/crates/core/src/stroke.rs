//! Stroke parameterization and stroke-level distances.
//!
//! A stroke is eight normalized numbers `[x, y, h, w, theta, r, g, b]`. The
//! shape part `[x, y, h, w, theta]` is embedded as a 2-D Gaussian so that
//! strokes of different scale can be compared with the closed-form
//! Wasserstein-2 distance between Gaussians.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum stroke extent accepted by the Gaussian embedding.
pub const EPS_SIZE: f64 = 1e-4;

/// Trace arguments this far below zero are clamped instead of rejected.
const TRACE_TOLERANCE: f64 = 1e-7;

pub const PARAM_COUNT: usize = 8;
pub const IDX_X: usize = 0;
pub const IDX_Y: usize = 1;
pub const IDX_H: usize = 2;
pub const IDX_W: usize = 3;
pub const IDX_THETA: usize = 4;
pub const IDX_R: usize = 5;
pub const IDX_G: usize = 6;
pub const IDX_B: usize = 7;

/// One painting action. All fields live in `[0, 1]`; `theta` maps linearly
/// onto `[0, pi)` radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    pub x: f64,
    pub y: f64,
    pub h: f64,
    pub w: f64,
    pub theta: f64,
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

fn clamp01(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

impl Stroke {
    /// Builds a stroke, clamping every field into `[0, 1]`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(x: f64, y: f64, h: f64, w: f64, theta: f64, r: f64, g: f64, b: f64) -> Self {
        Self::from_array([x, y, h, w, theta, r, g, b])
    }

    pub fn from_array(p: [f64; PARAM_COUNT]) -> Self {
        Stroke {
            x: clamp01(p[IDX_X]),
            y: clamp01(p[IDX_Y]),
            h: clamp01(p[IDX_H]),
            w: clamp01(p[IDX_W]),
            theta: clamp01(p[IDX_THETA]),
            r: clamp01(p[IDX_R]),
            g: clamp01(p[IDX_G]),
            b: clamp01(p[IDX_B]),
        }
    }

    pub fn to_array(&self) -> [f64; PARAM_COUNT] {
        [
            self.x, self.y, self.h, self.w, self.theta, self.r, self.g, self.b,
        ]
    }

    /// Raises `w` and `h` to at least [`EPS_SIZE`].
    pub fn with_min_size(mut self) -> Self {
        self.w = self.w.max(EPS_SIZE);
        self.h = self.h.max(EPS_SIZE);
        self
    }

    pub fn angle_radians(&self) -> f64 {
        self.theta * PI
    }

    pub fn color(&self) -> [f64; 3] {
        [self.r, self.g, self.b]
    }
}

/// Weights of the stroke-level objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Recall weight on positive-label confidence terms.
    pub lambda_r: f64,
    pub lambda_l1: f64,
    pub lambda_w: f64,
    pub lambda_bce: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_r: 8.0,
            lambda_l1: 1.0,
            lambda_w: 10.0,
            lambda_bce: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda_r,
            self.lambda_l1,
            self.lambda_w,
            self.lambda_bce,
        ];
        if all.iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "loss weights must be finite and nonnegative: {self:?}"
            )))
        }
    }
}

/// Symmetric 2x2 matrix stored as `[[a, b], [b, c]]`.
pub type Mat2 = [[f64; 2]; 2];

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn trace(m: &Mat2) -> f64 {
    m[0][0] + m[1][1]
}

fn det(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// Principal square root of a positive-semidefinite 2x2 matrix:
/// `(M + sqrt(det M) I) / sqrt(tr M + 2 sqrt(det M))`.
pub fn sqrtm_psd_2x2(m: &Mat2) -> Mat2 {
    let s = det(m).max(0.0).sqrt();
    let t = (trace(m) + 2.0 * s).max(0.0).sqrt();
    if t == 0.0 {
        return [[0.0; 2]; 2];
    }
    [
        [(m[0][0] + s) / t, m[0][1] / t],
        [m[1][0] / t, (m[1][1] + s) / t],
    ]
}

/// Gaussian embedding of a stroke's shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrokeGaussian {
    pub mu: [f64; 2],
    pub sigma: Mat2,
    pub sigma_sqrt: Mat2,
}

/// `mu = (x, y)`, `sigma^(1/2) = R diag(w/2, h/2) R^T`.
pub fn stroke_to_gaussian(s: &Stroke) -> Result<StrokeGaussian> {
    if !(s.w >= EPS_SIZE && s.h >= EPS_SIZE) {
        return Err(Error::DegenerateStroke {
            w: s.w,
            h: s.h,
            min: EPS_SIZE,
        });
    }
    let (sin, cos) = s.angle_radians().sin_cos();
    let (a, b) = (s.w / 2.0, s.h / 2.0);
    let off = (a - b) * cos * sin;
    let sigma_sqrt = [
        [a * cos * cos + b * sin * sin, off],
        [off, a * sin * sin + b * cos * cos],
    ];
    Ok(StrokeGaussian {
        mu: [s.x, s.y],
        sigma: mat_mul(&sigma_sqrt, &sigma_sqrt),
        sigma_sqrt,
    })
}

/// Parameter-wise L1 distance over all eight fields.
pub fn l1_param_distance(u: &Stroke, v: &Stroke) -> f64 {
    u.to_array()
        .iter()
        .zip(v.to_array())
        .map(|(a, b)| (a - b).abs())
        .sum()
}

/// Gradient of [`l1_param_distance`] with respect to `u`. Ties get zero.
pub fn l1_param_distance_grad(u: &Stroke, v: &Stroke) -> [f64; PARAM_COUNT] {
    let (a, b) = (u.to_array(), v.to_array());
    std::array::from_fn(|i| sign(a[i] - b[i]))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Wasserstein-2 distance (squared) between two Gaussians:
/// `|mu_u - mu_v|^2 + Tr(S_u + S_v - 2 (S_u^(1/2) S_v S_u^(1/2))^(1/2))`.
pub fn wasserstein_distance(gu: &StrokeGaussian, gv: &StrokeGaussian) -> Result<f64> {
    let dx = gu.mu[0] - gv.mu[0];
    let dy = gu.mu[1] - gv.mu[1];
    let inner = mat_mul(&mat_mul(&gu.sigma_sqrt, &gv.sigma), &gu.sigma_sqrt);
    let cross = sqrtm_psd_2x2(&inner);
    let tr = trace(&gu.sigma) + trace(&gv.sigma) - 2.0 * trace(&cross);
    if tr < -TRACE_TOLERANCE || !tr.is_finite() {
        return Err(Error::Numeric(format!(
            "negative Wasserstein trace term {tr:e}"
        )));
    }
    Ok(dx * dx + dy * dy + tr.max(0.0))
}

/// Wasserstein distance between the shape parts of two strokes.
pub fn stroke_wasserstein(u: &Stroke, v: &Stroke) -> Result<f64> {
    wasserstein_distance(&stroke_to_gaussian(u)?, &stroke_to_gaussian(v)?)
}

/// Value and gradients of [`stroke_wasserstein`] with respect to both strokes.
///
/// Uses the trace identity `Tr((A S_v A)^(1/2)) = sqrt(Tr(S_u S_v) + 2 sqrt(det S_u det S_v))`
/// with `S = R diag(w^2/4, h^2/4) R^T`, so only the relative angle enters the
/// cross term. Color entries of the gradients are zero.
pub fn stroke_wasserstein_grad(
    u: &Stroke,
    v: &Stroke,
) -> Result<(f64, [f64; PARAM_COUNT], [f64; PARAM_COUNT])> {
    for s in [u, v] {
        if !(s.w >= EPS_SIZE && s.h >= EPS_SIZE) {
            return Err(Error::DegenerateStroke {
                w: s.w,
                h: s.h,
                min: EPS_SIZE,
            });
        }
    }
    let (p1, p2) = (u.w * u.w / 4.0, u.h * u.h / 4.0);
    let (q1, q2) = (v.w * v.w / 4.0, v.h * v.h / 4.0);
    let phi = (v.theta - u.theta) * PI;
    let (sin, cos) = phi.sin_cos();
    let (c2, s2) = (cos * cos, sin * sin);

    let t = (p1 * q1 + p2 * q2) * c2 + (p1 * q2 + p2 * q1) * s2;
    let s = u.w * u.h * v.w * v.h / 8.0;
    let z = t + s;
    let root = z.sqrt();
    let dx = u.x - v.x;
    let dy = u.y - v.y;
    let value = (dx * dx + dy * dy + p1 + p2 + q1 + q2 - 2.0 * root).max(0.0);

    // d(-2 sqrt z)/dz
    let dz = if root > 0.0 { -1.0 / root } else { 0.0 };
    let dt_dp1 = q1 * c2 + q2 * s2;
    let dt_dp2 = q2 * c2 + q1 * s2;
    let dt_dq1 = p1 * c2 + p2 * s2;
    let dt_dq2 = p2 * c2 + p1 * s2;
    let dt_dphi = (2.0 * phi).sin() * (p1 - p2) * (q2 - q1);

    let mut gu = [0.0; PARAM_COUNT];
    let mut gv = [0.0; PARAM_COUNT];
    gu[IDX_X] = 2.0 * dx;
    gu[IDX_Y] = 2.0 * dy;
    gv[IDX_X] = -2.0 * dx;
    gv[IDX_Y] = -2.0 * dy;
    // p1 = w^2/4 -> dp1/dw = w/2
    gu[IDX_W] = u.w / 2.0 + dz * (dt_dp1 * u.w / 2.0 + u.h * v.w * v.h / 8.0);
    gu[IDX_H] = u.h / 2.0 + dz * (dt_dp2 * u.h / 2.0 + u.w * v.w * v.h / 8.0);
    gv[IDX_W] = v.w / 2.0 + dz * (dt_dq1 * v.w / 2.0 + u.w * u.h * v.h / 8.0);
    gv[IDX_H] = v.h / 2.0 + dz * (dt_dq2 * v.h / 2.0 + u.w * u.h * v.w / 8.0);
    gu[IDX_THETA] = dz * dt_dphi * -PI;
    gv[IDX_THETA] = dz * dt_dphi * PI;
    Ok((value, gu, gv))
}

/// `log(1 + exp(x))` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Recall-weighted binary cross entropy between a confidence logit and a
/// validity label: `-lambda_r g ln s(c) - (1 - g) ln(1 - s(c))`.
pub fn confidence_bce(c: f64, label: bool, weights: &LossWeights) -> f64 {
    if label {
        weights.lambda_r * softplus(-c)
    } else {
        softplus(c)
    }
}

/// Derivative of [`confidence_bce`] with respect to `c`.
pub fn confidence_bce_grad(c: f64, label: bool, weights: &LossWeights) -> f64 {
    if label {
        -weights.lambda_r * sigmoid(-c)
    } else {
        sigmoid(c)
    }
}

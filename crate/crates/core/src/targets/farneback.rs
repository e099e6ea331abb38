//! Dense optical flow by polynomial expansion (Farneback's two-frame
//! method): each neighborhood is approximated by a quadratic polynomial
//! under Gaussian weighting, and displacement is solved from the change in
//! expansion coefficients, coarse-to-fine over a Gaussian pyramid.

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::data_model::Frame;
use crate::error::{Error, Result};
use crate::targets::{FlowEstimator, FlowField};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct FarnebackParams {
    /// Pyramid layers, each half the previous; clipped so the coarsest
    /// level keeps at least 16 pixels per side.
    pub levels: usize,
    /// Box-averaging window for the displacement equations.
    pub winsize: usize,
    /// Displacement refinements per pyramid level.
    pub iterations: usize,
    /// Odd neighborhood size for the polynomial expansion.
    pub poly_n: usize,
    /// Gaussian weight sigma for the expansion.
    pub poly_sigma: f32,
}

impl Default for FarnebackParams {
    fn default() -> Self {
        FarnebackParams {
            levels: 4,
            winsize: 15,
            iterations: 3,
            poly_n: 7,
            poly_sigma: 1.5,
        }
    }
}

/// The default dense flow estimator.
#[derive(Debug, Clone, Default)]
pub struct FarnebackEstimator {
    pub params: FarnebackParams,
}

impl FarnebackEstimator {
    pub fn new(params: FarnebackParams) -> Self {
        FarnebackEstimator { params }
    }
}

impl FlowEstimator for FarnebackEstimator {
    fn flow(&self, prev: &Frame, curr: &Frame) -> Result<FlowField> {
        if prev.pixels.shape() != curr.pixels.shape() {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", prev.pixels.shape()),
                got: format!("{:?}", curr.pixels.shape()),
            });
        }
        Ok(estimate(&prev.luma(), &curr.luma(), &self.params))
    }
}

/// Estimate flow between two grayscale images of equal shape.
pub fn estimate(prev: &Array2<f32>, curr: &Array2<f32>, params: &FarnebackParams) -> FlowField {
    let (h, w) = prev.dim();
    let pyr_prev = gaussian_pyramid(prev, params.levels);
    let pyr_curr = gaussian_pyramid(curr, params.levels);
    let levels = pyr_prev.len().min(pyr_curr.len());

    let coarsest = pyr_prev[levels - 1].dim();
    let mut flow = FlowField::zeros(coarsest.0, coarsest.1);
    for level in (0..levels).rev() {
        let (lh, lw) = pyr_prev[level].dim();
        if flow.dim() != (lh, lw) {
            // Carry the coarser estimate up: resize and double.
            flow = FlowField {
                u: upsample(&flow.u, lh, lw, 2.0),
                v: upsample(&flow.v, lh, lw, 2.0),
            };
        }
        let r1 = poly_expansion(&pyr_prev[level], params.poly_n, params.poly_sigma);
        let r2 = poly_expansion(&pyr_curr[level], params.poly_n, params.poly_sigma);
        for _ in 0..params.iterations {
            flow = update_flow(&r1, &r2, &flow, params.winsize);
        }
    }
    debug_assert_eq!(flow.dim(), (h, w));
    flow
}

fn gaussian_pyramid(img: &Array2<f32>, levels: usize) -> Vec<Array2<f32>> {
    let mut pyramid = vec![img.clone()];
    for _ in 1..levels.max(1) {
        let prev = pyramid.last().unwrap();
        let (h, w) = prev.dim();
        if h / 2 < 16 || w / 2 < 16 {
            break;
        }
        let blurred = blur5(prev);
        let (nh, nw) = (h.div_ceil(2), w.div_ceil(2));
        let next = Array2::from_shape_fn((nh, nw), |(y, x)| blurred[[y * 2, x * 2]]);
        pyramid.push(next);
    }
    pyramid
}

// Separable 5-tap binomial blur with edge replication.
fn blur5(img: &Array2<f32>) -> Array2<f32> {
    const K: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    let (h, w) = img.dim();
    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;
    let mut rows = Array2::<f32>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (t, k) in K.iter().enumerate() {
                acc += k * img[[y, clamp(x as isize + t as isize - 2, w)]];
            }
            rows[[y, x]] = acc;
        }
    }
    let mut out = Array2::<f32>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (t, k) in K.iter().enumerate() {
                acc += k * rows[[clamp(y as isize + t as isize - 2, h), x]];
            }
            out[[y, x]] = acc;
        }
    }
    out
}

fn upsample(src: &Array2<f32>, out_h: usize, out_w: usize, gain: f32) -> Array2<f32> {
    let (h, w) = src.dim();
    let sy = h as f32 / out_h as f32;
    let sx = w as f32 / out_w as f32;
    Array2::from_shape_fn((out_h, out_w), |(oy, ox)| {
        let fy = ((oy as f32 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f32);
        let fx = ((ox as f32 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f32);
        let (y0, x0) = (fy.floor() as usize, fx.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
        let (ty, tx) = (fy - y0 as f32, fx - x0 as f32);
        let top = src[[y0, x0]] + tx * (src[[y0, x1]] - src[[y0, x0]]);
        let bot = src[[y1, x0]] + tx * (src[[y1, x1]] - src[[y1, x0]]);
        gain * (top + ty * (bot - top))
    })
}

/// Quadratic expansion coefficients per pixel, channels
/// `(bx, by, axx, ayy, axy)` for `f ~ c + b.x + x'Ax`.
fn poly_expansion(img: &Array2<f32>, poly_n: usize, sigma: f32) -> Array3<f32> {
    let radius = (poly_n.max(3) / 2) as isize;
    let taps = (2 * radius + 1) as usize;
    let mut g = vec![0.0f64; taps];
    for (t, gv) in g.iter_mut().enumerate() {
        let i = t as isize - radius;
        *gv = (-((i * i) as f64) / (2.0 * f64::from(sigma) * f64::from(sigma))).exp();
    }
    let sum: f64 = g.iter().sum();
    for gv in g.iter_mut() {
        *gv /= sum;
    }
    let mu2: f64 = g
        .iter()
        .enumerate()
        .map(|(t, gv)| {
            let i = (t as isize - radius) as f64;
            i * i * gv
        })
        .sum();
    let mu4: f64 = g
        .iter()
        .enumerate()
        .map(|(t, gv)| {
            let i = (t as isize - radius) as f64;
            i * i * i * i * gv
        })
        .sum();

    // Inverse of the (constant, x^2, y^2) block of the normal matrix; the
    // Gaussian weights are position-independent, so it is shared by all
    // pixels.
    let inv3 = invert3([
        [1.0, mu2, mu2],
        [mu2, mu4, mu2 * mu2],
        [mu2, mu2 * mu2, mu4],
    ]);
    let ig11 = 1.0 / mu2;
    let ig55 = 1.0 / (mu2 * mu2);

    let (h, w) = img.dim();
    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;

    // Vertical pass: Gaussian-weighted y-moments of order 0..2.
    let mut t0 = Array2::<f32>::zeros((h, w));
    let mut t1 = Array2::<f32>::zeros((h, w));
    let mut t2 = Array2::<f32>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let (mut s0, mut s1, mut s2) = (0.0f64, 0.0f64, 0.0f64);
            for (t, gv) in g.iter().enumerate() {
                let k = t as isize - radius;
                let f = f64::from(img[[clamp(y as isize + k, h), x]]);
                let gf = gv * f;
                s0 += gf;
                s1 += k as f64 * gf;
                s2 += (k * k) as f64 * gf;
            }
            t0[[y, x]] = s0 as f32;
            t1[[y, x]] = s1 as f32;
            t2[[y, x]] = s2 as f32;
        }
    }

    // Horizontal pass combines into the five coefficients.
    let mut coeffs = Array3::<f32>::zeros((5, h, w));
    for y in 0..h {
        for x in 0..w {
            let (mut m00, mut m10, mut m01, mut m20, mut m02, mut m11) =
                (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
            for (t, gv) in g.iter().enumerate() {
                let j = t as isize - radius;
                let xx = clamp(x as isize + j, w);
                let a0 = f64::from(t0[[y, xx]]);
                let a1 = f64::from(t1[[y, xx]]);
                let a2 = f64::from(t2[[y, xx]]);
                m00 += gv * a0;
                m10 += j as f64 * gv * a0;
                m01 += gv * a1;
                m20 += (j * j) as f64 * gv * a0;
                m02 += gv * a2;
                m11 += j as f64 * gv * a1;
            }
            coeffs[[0, y, x]] = (ig11 * m10) as f32;
            coeffs[[1, y, x]] = (ig11 * m01) as f32;
            coeffs[[2, y, x]] = (inv3[1][0] * m00 + inv3[1][1] * m20 + inv3[1][2] * m02) as f32;
            coeffs[[3, y, x]] = (inv3[1][0] * m00 + inv3[1][2] * m20 + inv3[1][1] * m02) as f32;
            coeffs[[4, y, x]] = (ig55 * m11) as f32;
        }
    }
    coeffs
}

fn invert3(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let mut inv = [[0.0f64; 3]; 3];
    let cof = |r1: usize, c1: usize, r2: usize, c2: usize| m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1];
    inv[0][0] = cof(1, 1, 2, 2) / det;
    inv[0][1] = -cof(0, 1, 2, 2) / det;
    inv[0][2] = cof(0, 1, 1, 2) / det;
    inv[1][0] = -cof(1, 0, 2, 2) / det;
    inv[1][1] = cof(0, 0, 2, 2) / det;
    inv[1][2] = -cof(0, 0, 1, 2) / det;
    inv[2][0] = cof(1, 0, 2, 1) / det;
    inv[2][1] = -cof(0, 0, 2, 1) / det;
    inv[2][2] = cof(0, 0, 1, 1) / det;
    inv
}

fn sample_coeffs(r: &Array3<f32>, y: f32, x: f32) -> [f32; 5] {
    let (_, h, w) = r.dim();
    let fy = y.clamp(0.0, (h - 1) as f32);
    let fx = x.clamp(0.0, (w - 1) as f32);
    let (y0, x0) = (fy.floor() as usize, fx.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (ty, tx) = (fy - y0 as f32, fx - x0 as f32);
    let mut out = [0.0f32; 5];
    for (c, o) in out.iter_mut().enumerate() {
        let top = r[[c, y0, x0]] + tx * (r[[c, y0, x1]] - r[[c, y0, x0]]);
        let bot = r[[c, y1, x0]] + tx * (r[[c, y1, x1]] - r[[c, y1, x0]]);
        *o = top + ty * (bot - top);
    }
    out
}

fn update_flow(r1: &Array3<f32>, r2: &Array3<f32>, flow: &FlowField, winsize: usize) -> FlowField {
    let (_, h, w) = r1.dim();
    // Per-pixel normal equations A'A d = A'db, then box-averaged.
    let mut m11 = Array2::<f32>::zeros((h, w));
    let mut m12 = Array2::<f32>::zeros((h, w));
    let mut m22 = Array2::<f32>::zeros((h, w));
    let mut v1 = Array2::<f32>::zeros((h, w));
    let mut v2 = Array2::<f32>::zeros((h, w));

    for y in 0..h {
        for x in 0..w {
            let dx = flow.u[[y, x]];
            let dy = flow.v[[y, x]];
            let c2 = sample_coeffs(r2, y as f32 + dy, x as f32 + dx);
            let b1x = r1[[0, y, x]];
            let b1y = r1[[1, y, x]];
            let axx = 0.5 * (r1[[2, y, x]] + c2[2]);
            let ayy = 0.5 * (r1[[3, y, x]] + c2[3]);
            let axy = 0.25 * (r1[[4, y, x]] + c2[4]); // off-diagonal term of A
            let dbx = -0.5 * (c2[0] - b1x) + axx * dx + axy * dy;
            let dby = -0.5 * (c2[1] - b1y) + axy * dx + ayy * dy;
            m11[[y, x]] = axx * axx + axy * axy;
            m12[[y, x]] = axy * (axx + ayy);
            m22[[y, x]] = ayy * ayy + axy * axy;
            v1[[y, x]] = axx * dbx + axy * dby;
            v2[[y, x]] = axy * dbx + ayy * dby;
        }
    }

    for plane in [&mut m11, &mut m12, &mut m22, &mut v1, &mut v2] {
        box_blur(plane, winsize);
    }

    let mut out = FlowField::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            let det = f64::from(m11[[y, x]]) * f64::from(m22[[y, x]])
                - f64::from(m12[[y, x]]) * f64::from(m12[[y, x]]);
            if det.abs() > 1e-12 {
                let a = f64::from(m11[[y, x]]);
                let b = f64::from(m12[[y, x]]);
                let c = f64::from(m22[[y, x]]);
                let p = f64::from(v1[[y, x]]);
                let q = f64::from(v2[[y, x]]);
                out.u[[y, x]] = ((c * p - b * q) / det) as f32;
                out.v[[y, x]] = ((a * q - b * p) / det) as f32;
            } else {
                // Ill-conditioned neighborhood: keep the prior estimate.
                out.u[[y, x]] = flow.u[[y, x]];
                out.v[[y, x]] = flow.v[[y, x]];
            }
        }
    }
    out
}

// Mean filter via prefix sums; windows shrink at the borders.
fn box_blur(plane: &mut Array2<f32>, winsize: usize) {
    let radius = winsize / 2;
    if radius == 0 {
        return;
    }
    let (h, w) = plane.dim();
    let mut tmp = Array2::<f32>::zeros((h, w));
    let mut prefix = vec![0.0f64; w + 1];
    for y in 0..h {
        for x in 0..w {
            prefix[x + 1] = prefix[x] + f64::from(plane[[y, x]]);
        }
        for x in 0..w {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(w - 1);
            tmp[[y, x]] = ((prefix[hi + 1] - prefix[lo]) / (hi - lo + 1) as f64) as f32;
        }
    }
    let mut col_prefix = vec![0.0f64; h + 1];
    for x in 0..w {
        for y in 0..h {
            col_prefix[y + 1] = col_prefix[y] + f64::from(tmp[[y, x]]);
        }
        for y in 0..h {
            let lo = y.saturating_sub(radius);
            let hi = (y + radius).min(h - 1);
            plane[[y, x]] = ((col_prefix[hi + 1] - col_prefix[lo]) / (hi - lo + 1) as f64) as f32;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shaded_disc(h: usize, w: usize, cy: f32, cx: f32, r: f32) -> Array2<f32> {
        Array2::from_shape_fn((h, w), |(y, x)| {
            let d2 = (y as f32 - cy).powi(2) + (x as f32 - cx).powi(2);
            if d2 <= r * r {
                0.3 + 0.6 * (1.0 - 0.5 * d2 / (r * r))
            } else {
                0.3
            }
        })
    }

    #[test]
    fn identical_frames_give_zero_flow() {
        let img = shaded_disc(96, 96, 48.0, 48.0, 12.0);
        let flow = estimate(&img, &img, &FarnebackParams::default());
        for (&u, &v) in flow.u.iter().zip(flow.v.iter()) {
            assert!(u.abs() <= 1e-3 && v.abs() <= 1e-3, "u={u} v={v}");
        }
    }

    #[test]
    fn translated_disc_recovers_displacement() {
        let prev = shaded_disc(128, 128, 60.0, 50.0, 14.0);
        let curr = shaded_disc(128, 128, 60.0, 53.0, 14.0);
        let flow = estimate(&prev, &curr, &FarnebackParams::default());
        // Mean displacement over the disc interior.
        let (mut su, mut sv, mut n) = (0.0f64, 0.0f64, 0);
        for y in 0..128 {
            for x in 0..128 {
                let d2 = (y as f32 - 60.0).powi(2) + (x as f32 - 51.5).powi(2);
                if d2 <= 10.0 * 10.0 {
                    su += f64::from(flow.u[[y, x]]);
                    sv += f64::from(flow.v[[y, x]]);
                    n += 1;
                }
            }
        }
        let mean_u = su / n as f64;
        let mean_v = sv / n as f64;
        assert!((mean_u - 3.0).abs() < 0.5, "mean u {mean_u}");
        assert!(mean_v.abs() < 0.5, "mean v {mean_v}");
    }

    #[test]
    fn pyramid_halves_dimensions() {
        let img = Array2::<f32>::zeros((224, 224));
        let pyr = gaussian_pyramid(&img, 4);
        assert_eq!(pyr.len(), 4);
        assert_eq!(pyr[1].dim(), (112, 112));
        assert_eq!(pyr[3].dim(), (28, 28));
    }

    #[test]
    fn invert3_inverts() {
        let m = [[1.0, 0.5, 0.5], [0.5, 2.0, 0.25], [0.5, 0.25, 2.0]];
        let inv = invert3(m);
        for r in 0..3 {
            for c in 0..3 {
                let mut acc = 0.0;
                for k in 0..3 {
                    acc += m[r][k] * inv[k][c];
                }
                let expect = if r == c { 1.0 } else { 0.0 };
                assert!((acc - expect).abs() < 1e-12);
            }
        }
    }
}

//! Two-frame dense optical flow by polynomial expansion.
//!
//! Coarse-to-fine over an image pyramid. At each level both images are
//! expanded into local quadratics; every refinement pass builds the per-pixel
//! normal equations from the current displacement estimate, box-averages them
//! over the window and solves the 2x2 system for a new displacement.

use std::time::{Duration, Instant};

use super::image::{gaussian_blur, linear_taps, resize_bilinear, GrayImage};
use super::poly::{polynomial_expansion, PolyExpansion};
use super::{FlowError, FlowField, FlowParams};
use crate::par;

/// Smallest pyramid level side kept, in pixels.
pub const MIN_LEVEL_SIDE: usize = 16;

/// Edge attenuation of the data term for the outermost five pixels.
const BORDER_WEIGHTS: [f32; 5] = [0.14, 0.14, 0.4472, 0.4472, 0.4472];

/// Wall-clock split of one flow computation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FlowTimings {
    pub pyramid: Duration,
    pub poly_expansion: Duration,
    pub solve: Duration,
}

impl FlowTimings {
    pub fn total(&self) -> Duration {
        self.pyramid + self.poly_expansion + self.solve
    }
}

/// Level sizes from finest to coarsest, rounded down, stopping before any
/// side would drop below [`MIN_LEVEL_SIDE`].
pub fn pyramid_sizes(width: usize, height: usize, params: &FlowParams) -> Vec<(usize, usize)> {
    let mut sizes = Vec::new();
    let mut scale = 1.0f64;
    for _ in 0..params.levels {
        let w = (width as f64 * scale).floor() as usize;
        let h = (height as f64 * scale).floor() as usize;
        if w < MIN_LEVEL_SIDE || h < MIN_LEVEL_SIDE {
            break;
        }
        sizes.push((w, h));
        scale *= params.pyr_scale;
    }
    sizes
}

/// One pyramid level of `img`: anti-alias blur then bilinear downscale.
fn level_image(img: &GrayImage, scale: f64, size: (usize, usize)) -> GrayImage {
    if size == img.dims() {
        return img.clone();
    }
    let sigma = (1.0 / scale - 1.0) * 0.5;
    let ksize = (((sigma * 5.0).round() as usize) | 1).max(3);
    resize_bilinear(&gaussian_blur(img, ksize, sigma), size.0, size.1)
}

/// Per-pixel normal-equation terms `[gxx, gxy, gyy, hx, hy]`.
type Moments = [f32; 5];

fn border_scale(i: usize, n: usize) -> f32 {
    let lo = if i < BORDER_WEIGHTS.len() {
        BORDER_WEIGHTS[i]
    } else {
        1.0
    };
    let hi = if i + BORDER_WEIGHTS.len() >= n {
        BORDER_WEIGHTS[n - 1 - i]
    } else {
        1.0
    };
    lo * hi
}

fn update_moments(r0: &PolyExpansion, r1: &PolyExpansion, flow: &FlowField, m: &mut [Moments]) {
    let (w, h) = (r0.width, r0.height);
    par::for_each_row(m, w, |y, out| {
        let ys = border_scale(y, h);
        for (x, mo) in out.iter_mut().enumerate() {
            let i = y * w + x;
            let (dx, dy) = (flow.dx[i], flow.dy[i]);
            let p0 = r0.coeffs[i];
            let fx = x as f32 + dx;
            let fy = y as f32 + dy;
            let x1 = fx.floor();
            let y1 = fy.floor();
            let (ax, ay) = (fx - x1, fy - y1);

            let (b1x, b1y, axx, ayy, axy);
            if x1 >= 0.0 && y1 >= 0.0 && fx <= (w - 1) as f32 && fy <= (h - 1) as f32 {
                let (xi, yi) = (x1 as usize, y1 as usize);
                let (xn, yn) = ((xi + 1).min(w - 1), (yi + 1).min(h - 1));
                let c00 = r1.at(xi, yi);
                let c01 = r1.at(xn, yi);
                let c10 = r1.at(xi, yn);
                let c11 = r1.at(xn, yn);
                let (w00, w01, w10, w11) = (
                    (1.0 - ax) * (1.0 - ay),
                    ax * (1.0 - ay),
                    (1.0 - ax) * ay,
                    ax * ay,
                );
                let lerp = |f: fn(&super::poly::PolyCoeffs) -> f32| {
                    w00 * f(c00) + w01 * f(c01) + w10 * f(c10) + w11 * f(c11)
                };
                b1x = lerp(|c| c.bx);
                b1y = lerp(|c| c.by);
                axx = (p0.axx + lerp(|c| c.axx)) * 0.5;
                ayy = (p0.ayy + lerp(|c| c.ayy)) * 0.5;
                axy = (p0.axy + lerp(|c| c.axy)) * 0.5;
            } else {
                b1x = 0.0;
                b1y = 0.0;
                axx = p0.axx;
                ayy = p0.ayy;
                axy = p0.axy;
            }

            // Right-hand side: -Δb/2 plus the prior displacement A·d.
            let mut hx = (p0.bx - b1x) * 0.5 + axx * dx + axy * dy;
            let mut hy = (p0.by - b1y) * 0.5 + axy * dx + ayy * dy;
            let (mut axx, mut ayy, mut axy) = (axx, ayy, axy);

            let s = ys * border_scale(x, w);
            if s != 1.0 {
                hx *= s;
                hy *= s;
                axx *= s;
                ayy *= s;
                axy *= s;
            }

            *mo = [
                axx * axx + axy * axy,
                axy * (axx + ayy),
                ayy * ayy + axy * axy,
                axx * hx + axy * hy,
                axy * hx + ayy * hy,
            ];
        }
    });
}

/// Mean of `m` over a `winsize x winsize` window, replicate borders.
fn box_average(m: &[Moments], w: usize, h: usize, winsize: usize) -> Vec<Moments> {
    let r = (winsize / 2) as isize;
    let norm = 1.0 / (winsize * winsize) as f64;
    let mut vert = vec![[0.0f32; 5]; w * h];
    par::for_each_row(&mut vert, w, |y, out| {
        let mut acc = vec![[0.0f64; 5]; w];
        for t in -r..=r {
            let sy = (y as isize + t).clamp(0, h as isize - 1) as usize;
            for (a, v) in acc.iter_mut().zip(&m[sy * w..(sy + 1) * w]) {
                for c in 0..5 {
                    a[c] += v[c] as f64;
                }
            }
        }
        for (o, a) in out.iter_mut().zip(acc) {
            for c in 0..5 {
                o[c] = a[c] as f32;
            }
        }
    });
    let mut out = vec![[0.0f32; 5]; w * h];
    par::for_each_row(&mut out, w, |y, row| {
        let line = &vert[y * w..(y + 1) * w];
        for (x, o) in row.iter_mut().enumerate() {
            let mut a = [0.0f64; 5];
            for t in -r..=r {
                let sx = (x as isize + t).clamp(0, w as isize - 1) as usize;
                for c in 0..5 {
                    a[c] += line[sx][c] as f64;
                }
            }
            for c in 0..5 {
                o[c] = (a[c] * norm) as f32;
            }
        }
    });
    out
}

fn solve(m: &[Moments], flow: &mut FlowField) {
    let w = flow.width;
    let mut packed: Vec<(f32, f32)> = vec![(0.0, 0.0); m.len()];
    par::for_each_row(&mut packed, w, |y, row| {
        for (x, d) in row.iter_mut().enumerate() {
            let [gxx, gxy, gyy, hx, hy] = m[y * w + x];
            let (gxx, gxy, gyy, hx, hy) =
                (gxx as f64, gxy as f64, gyy as f64, hx as f64, hy as f64);
            let idet = 1.0 / (gxx * gyy - gxy * gxy + 1e-3);
            *d = (
                ((gyy * hx - gxy * hy) * idet) as f32,
                ((gxx * hy - gxy * hx) * idet) as f32,
            );
        }
    });
    for (i, (dx, dy)) in packed.into_iter().enumerate() {
        flow.dx[i] = dx;
        flow.dy[i] = dy;
    }
}

/// Bilinear upsampling of a coarse flow, rescaled to the finer grid.
fn upsample_flow(coarse: &FlowField, width: usize, height: usize, gain: f32) -> FlowField {
    let xt = linear_taps(coarse.width, width);
    let yt = linear_taps(coarse.height, height);
    let sample = |field: &[f32], x: usize, y: usize| {
        let (x0, x1, fx) = xt[x];
        let (y0, y1, fy) = yt[y];
        let cw = coarse.width;
        let top = field[y0 * cw + x0] + (field[y0 * cw + x1] - field[y0 * cw + x0]) * fx;
        let bot = field[y1 * cw + x0] + (field[y1 * cw + x1] - field[y1 * cw + x0]) * fx;
        (top + (bot - top) * fy) * gain
    };
    let mut dx = Vec::with_capacity(width * height);
    let mut dy = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            dx.push(sample(&coarse.dx, x, y));
            dy.push(sample(&coarse.dy, x, y));
        }
    }
    FlowField {
        width,
        height,
        dx,
        dy,
    }
}

/// Dense flow from `prev` to `cur`: `prev(p) ≈ cur(p + flow(p))`.
pub fn farneback_flow(
    prev: &GrayImage,
    cur: &GrayImage,
    params: &FlowParams,
) -> Result<FlowField, FlowError> {
    farneback_flow_timed(prev, cur, params).map(|(f, _)| f)
}

pub fn farneback_flow_timed(
    prev: &GrayImage,
    cur: &GrayImage,
    params: &FlowParams,
) -> Result<(FlowField, FlowTimings), FlowError> {
    params.validate()?;
    if prev.dims() != cur.dims() {
        return Err(FlowError::DimensionMismatch {
            left: prev.dims(),
            right: cur.dims(),
        });
    }
    let (w0, h0) = prev.dims();
    let sizes = pyramid_sizes(w0, h0, params);
    if sizes.is_empty() {
        return Err(FlowError::ImageTooSmall {
            width: w0,
            height: h0,
        });
    }

    let mut timings = FlowTimings::default();
    let mut flow: Option<FlowField> = None;
    for (level, &(w, h)) in sizes.iter().enumerate().rev() {
        let scale = params.pyr_scale.powi(level as i32);

        let t = Instant::now();
        let i0 = level_image(prev, scale, (w, h));
        let i1 = level_image(cur, scale, (w, h));
        let mut f = match flow.take() {
            Some(coarse) => upsample_flow(&coarse, w, h, (1.0 / params.pyr_scale) as f32),
            None => FlowField::zeros(w, h),
        };
        timings.pyramid += t.elapsed();

        let t = Instant::now();
        let r0 = polynomial_expansion(&i0, params.poly_n, params.poly_sigma);
        let r1 = polynomial_expansion(&i1, params.poly_n, params.poly_sigma);
        timings.poly_expansion += t.elapsed();

        let t = Instant::now();
        let mut m = vec![[0.0f32; 5]; w * h];
        update_moments(&r0, &r1, &f, &mut m);
        for it in 0..params.iterations {
            let avg = box_average(&m, w, h, params.winsize);
            solve(&avg, &mut f);
            if it + 1 < params.iterations {
                update_moments(&r0, &r1, &f, &mut m);
            }
        }
        timings.solve += t.elapsed();
        flow = Some(f);
    }
    Ok((flow.expect("at least one level"), timings))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_pyramid_for_flow_resolution() {
        let sizes = pyramid_sizes(480, 270, &FlowParams::default());
        assert_eq!(sizes, vec![(480, 270), (240, 135), (120, 67)]);
    }

    #[test]
    fn small_images_drop_levels() {
        let sizes = pyramid_sizes(40, 40, &FlowParams::default());
        assert_eq!(sizes, vec![(40, 40), (20, 20)]);
        assert!(pyramid_sizes(10, 40, &FlowParams::default()).is_empty());
    }

    #[test]
    fn border_weights_symmetric() {
        assert_eq!(border_scale(0, 100), 0.14);
        assert_eq!(border_scale(99, 100), 0.14);
        assert_eq!(border_scale(4, 100), 0.4472);
        assert_eq!(border_scale(5, 100), 1.0);
        assert_eq!(border_scale(94, 100), 1.0);
    }

    #[test]
    fn mismatched_inputs_rejected() {
        let a = GrayImage::filled(32, 32, 0.0);
        let b = GrayImage::filled(33, 32, 0.0);
        assert!(matches!(
            farneback_flow(&a, &b, &FlowParams::default()),
            Err(FlowError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn box_average_of_constant() {
        let m = vec![[1.0, 2.0, 3.0, 4.0, 5.0]; 20 * 10];
        let avg = box_average(&m, 20, 10, 15);
        for v in avg {
            for (c, want) in v.iter().zip([1.0, 2.0, 3.0, 4.0, 5.0]) {
                assert!((c - want).abs() < 1e-5);
            }
        }
    }
}

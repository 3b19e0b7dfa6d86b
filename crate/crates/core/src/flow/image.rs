//! Single-channel float images and the resampling/filtering they need.

use crate::model::{ColorMode, Frame};
use crate::par;

/// Row-major single-channel image with intensities on the 0..=255 scale.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), width * height, "gray buffer size");
        Self {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// BT.601 luma rounded to the nearest integer level.
pub fn luma(frame: &Frame) -> GrayImage {
    let px = frame.pixels();
    let data = match frame.mode() {
        ColorMode::Nir => px.iter().map(|&v| v as f32).collect(),
        ColorMode::Rgb => px
            .chunks_exact(3)
            .map(|c| {
                (0.299 * c[0] as f64 + 0.587 * c[1] as f64 + 0.114 * c[2] as f64).round() as f32
            })
            .collect(),
    };
    GrayImage::new(frame.width(), frame.height(), data)
}

/// Grayscale conversion followed by a bilinear resize to `width x height`.
pub fn to_grayscale_downsampled(frame: &Frame, width: usize, height: usize) -> GrayImage {
    resize_bilinear(&luma(frame), width, height)
}

/// Source sample positions for one output axis, half-pixel-centre mapping.
pub(crate) fn linear_taps(src: usize, dst: usize) -> Vec<(usize, usize, f32)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, (s - i0 as f64) as f32)
        })
        .collect()
}

pub fn resize_bilinear(src: &GrayImage, width: usize, height: usize) -> GrayImage {
    if src.dims() == (width, height) {
        return src.clone();
    }
    let xt = linear_taps(src.width, width);
    let yt = linear_taps(src.height, height);
    let mut data = vec![0.0f32; width * height];
    par::for_each_row(&mut data, width, |y, row| {
        let (y0, y1, fy) = yt[y];
        let r0 = &src.data[y0 * src.width..(y0 + 1) * src.width];
        let r1 = &src.data[y1 * src.width..(y1 + 1) * src.width];
        for (out, &(x0, x1, fx)) in row.iter_mut().zip(&xt) {
            let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
            let bot = r1[x0] + (r1[x1] - r1[x0]) * fx;
            *out = top + (bot - top) * fy;
        }
    });
    GrayImage::new(width, height, data)
}

fn gaussian_kernel(ksize: usize, sigma: f64) -> Vec<f32> {
    let r = (ksize / 2) as i64;
    let raw: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| (v / s) as f32).collect()
}

/// Separable Gaussian blur, replicate borders.
pub fn gaussian_blur(src: &GrayImage, ksize: usize, sigma: f64) -> GrayImage {
    let k = gaussian_kernel(ksize, sigma);
    let r = (ksize / 2) as isize;
    let (w, h) = src.dims();
    let mut tmp = vec![0.0f32; w * h];
    par::for_each_row(&mut tmp, w, |y, row| {
        for (x, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0f32;
            for (i, &kv) in k.iter().enumerate() {
                let sy = (y as isize + i as isize - r).clamp(0, h as isize - 1) as usize;
                acc += kv * src.data[sy * w + x];
            }
            *out = acc;
        }
    });
    let mut data = vec![0.0f32; w * h];
    par::for_each_row(&mut data, w, |y, row| {
        let line = &tmp[y * w..(y + 1) * w];
        for (x, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0f32;
            for (i, &kv) in k.iter().enumerate() {
                let sx = (x as isize + i as isize - r).clamp(0, w as isize - 1) as usize;
                acc += kv * line[sx];
            }
            *out = acc;
        }
    });
    GrayImage::new(w, h, data)
}

//! Dense optical flow and per-region motion aggregation.

mod farneback;
mod image;
mod poly;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::RoiMask;

pub use farneback::{
    farneback_flow, farneback_flow_timed, pyramid_sizes, FlowTimings, MIN_LEVEL_SIDE,
};
pub(crate) use image::linear_taps;
pub use image::{gaussian_blur, luma, resize_bilinear, to_grayscale_downsampled, GrayImage};
pub use poly::{polynomial_expansion, PolyCoeffs, PolyExpansion};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("image sizes differ: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("region mask is empty")]
    EmptyMask,
    #[error("invalid flow parameters: {0}")]
    InvalidParams(String),
    #[error("{width}x{height} image is too small for any pyramid level")]
    ImageTooSmall { width: usize, height: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowParams {
    pub pyr_scale: f64,
    pub levels: usize,
    pub winsize: usize,
    pub iterations: usize,
    /// Half-width of the polynomial-expansion neighbourhood.
    pub poly_n: usize,
    pub poly_sigma: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            pyr_scale: 0.5,
            levels: 3,
            winsize: 15,
            iterations: 3,
            poly_n: 5,
            poly_sigma: 1.2,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<(), FlowError> {
        let bad = |m: &str| Err(FlowError::InvalidParams(m.to_owned()));
        if !(self.pyr_scale > 0.0 && self.pyr_scale < 1.0) {
            return bad("pyr_scale must lie in (0, 1)");
        }
        if self.levels < 1 {
            return bad("levels must be >= 1");
        }
        if self.winsize.is_multiple_of(2) {
            return bad("winsize must be odd");
        }
        if self.poly_n.is_multiple_of(2) {
            return bad("poly_n must be odd");
        }
        if self.iterations < 1 {
            return bad("iterations must be >= 1");
        }
        if self.poly_sigma.is_nan() || self.poly_sigma < 0.0 {
            return bad("poly_sigma must be >= 0");
        }
        Ok(())
    }
}

/// How per-pixel vectors are reduced to one number per region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionAggregation {
    /// Mean of per-pixel magnitudes.
    #[default]
    MeanMagnitude,
    /// Magnitude of the mean vector; opposing motions cancel.
    MagnitudeOfMean,
}

/// Per-pixel displacement in px/frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub dx: Vec<f32>,
    pub dy: Vec<f32>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, dx: Vec<f32>, dy: Vec<f32>) -> Self {
        assert_eq!(dx.len(), width * height);
        assert_eq!(dy.len(), width * height);
        Self {
            width,
            height,
            dx,
            dy,
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::uniform(width, height, 0.0, 0.0)
    }

    pub fn uniform(width: usize, height: usize, dx: f32, dy: f32) -> Self {
        Self::new(
            width,
            height,
            vec![dx; width * height],
            vec![dy; width * height],
        )
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn is_finite(&self) -> bool {
        self.dx.iter().chain(&self.dy).all(|v| v.is_finite())
    }

    /// Mean `(dx, dy)` over the rectangle `[x0, x1) x [y0, y1)`.
    pub fn mean_in(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> (f64, f64) {
        let (mut sx, mut sy) = (0.0f64, 0.0f64);
        for y in y0..y1 {
            for x in x0..x1 {
                let i = y * self.width + x;
                sx += self.dx[i] as f64;
                sy += self.dy[i] as f64;
            }
        }
        let n = ((x1 - x0) * (y1 - y0)) as f64;
        (sx / n, sy / n)
    }

    pub fn mean_magnitude(&self) -> f64 {
        self.dx
            .iter()
            .zip(&self.dy)
            .map(|(&x, &y)| (x as f64).hypot(y as f64))
            .sum::<f64>()
            / self.dx.len() as f64
    }
}

/// Motion over the pixels selected by `mask`.
pub fn roi_motion(
    flow: &FlowField,
    mask: &RoiMask,
    aggregation: MotionAggregation,
) -> Result<f64, FlowError> {
    if flow.dims() != mask.dims() {
        return Err(FlowError::DimensionMismatch {
            left: flow.dims(),
            right: mask.dims(),
        });
    }
    let (mut n, mut sum_mag, mut sx, mut sy) = (0usize, 0.0f64, 0.0f64, 0.0f64);
    for y in 0..flow.height {
        for x in 0..flow.width {
            if mask.get(x, y) {
                let i = y * flow.width + x;
                let (dx, dy) = (flow.dx[i] as f64, flow.dy[i] as f64);
                n += 1;
                sum_mag += (dx * dx + dy * dy).sqrt();
                sx += dx;
                sy += dy;
            }
        }
    }
    if n == 0 {
        return Err(FlowError::EmptyMask);
    }
    let n = n as f64;
    Ok(match aggregation {
        MotionAggregation::MeanMagnitude => sum_mag / n,
        MotionAggregation::MagnitudeOfMean => (sx / n).hypot(sy / n),
    })
}

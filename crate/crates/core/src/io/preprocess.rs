//! Fixed-resolution resizes feeding analysis, detection and flow.

use crate::flow::{linear_taps, to_grayscale_downsampled, GrayImage};
use crate::model::{Frame, PipelineConfig};
use crate::par;

use super::IoError;

pub const DETECTOR_SIZE: (usize, usize) = (608, 608);
pub const MIN_INPUT_SIDE: usize = 64;
/// Catmull-Rom.
pub const BICUBIC_A: f64 = -0.5;

/// Which outputs to produce. The flow image is always produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Targets {
    pub analysis: bool,
    pub detector: bool,
}

impl Targets {
    pub const ALL: Targets = Targets {
        analysis: true,
        detector: true,
    };
    pub const FLOW_ONLY: Targets = Targets {
        analysis: false,
        detector: false,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    pub analysis: Option<Frame>,
    pub detector: Option<Frame>,
    pub flow: GrayImage,
}

pub fn check_input(frame: &Frame) -> Result<(), IoError> {
    if frame.width() < MIN_INPUT_SIDE || frame.height() < MIN_INPUT_SIDE {
        return Err(IoError::TooSmallInput {
            width: frame.width(),
            height: frame.height(),
        });
    }
    Ok(())
}

/// Direct resizes, no letterboxing: bilinear to the analysis size, bicubic
/// to the detector size, grayscale bilinear to the flow size.
pub fn preprocess(
    frame: &Frame,
    cfg: &PipelineConfig,
    targets: Targets,
) -> Result<Preprocessed, IoError> {
    check_input(frame)?;
    let (aw, ah) = cfg.analysis_dims();
    let (fw, fh) = cfg.flow_dims();
    Ok(Preprocessed {
        analysis: targets
            .analysis
            .then(|| resize_frame_bilinear(frame, aw, ah)),
        detector: targets
            .detector
            .then(|| resize_frame_bicubic(frame, DETECTOR_SIZE.0, DETECTOR_SIZE.1)),
        flow: to_grayscale_downsampled(frame, fw, fh),
    })
}

/// Per-output-sample source indices and weights along one axis.
type Taps = Vec<Vec<(usize, f32)>>;

fn bilinear_taps(src: usize, dst: usize) -> Taps {
    linear_taps(src, dst)
        .into_iter()
        .map(|(i0, i1, f)| vec![(i0, 1.0 - f), (i1, f)])
        .collect()
}

fn cubic_weight(x: f64) -> f64 {
    let a = BICUBIC_A;
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

fn bicubic_taps(src: usize, dst: usize) -> Taps {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let s = (d as f64 + 0.5) * scale - 0.5;
            let i = s.floor();
            let t = s - i;
            (-1..=2)
                .map(|k| {
                    let idx = (i as i64 + k).clamp(0, src as i64 - 1) as usize;
                    (idx, cubic_weight(t - k as f64) as f32)
                })
                .collect()
        })
        .collect()
}

fn resize_with(frame: &Frame, width: usize, height: usize, xt: Taps, yt: Taps) -> Frame {
    let c = frame.channels();
    let (sw, sh) = (frame.width(), frame.height());
    let src = frame.pixels();
    let mut tmp = vec![0.0f32; sh * width * c];
    par::for_each_row(&mut tmp, width * c, |y, row| {
        let line = &src[y * sw * c..(y + 1) * sw * c];
        for (x, taps) in xt.iter().enumerate() {
            for ch in 0..c {
                row[x * c + ch] = taps.iter().map(|&(i, w)| w * line[i * c + ch] as f32).sum();
            }
        }
    });
    let mut out = vec![0u8; width * height * c];
    par::for_each_row(&mut out, width * c, |y, row| {
        for (i, v) in row.iter_mut().enumerate() {
            let acc: f32 = yt[y]
                .iter()
                .map(|&(sy, w)| w * tmp[sy * width * c + i])
                .sum();
            *v = acc.round().clamp(0.0, 255.0) as u8;
        }
    });
    Frame::new(
        frame.session_id().clone(),
        frame.ts(),
        width,
        height,
        frame.mode(),
        out,
    )
    .expect("resize keeps channel layout")
}

pub fn resize_frame_bilinear(frame: &Frame, width: usize, height: usize) -> Frame {
    if (frame.width(), frame.height()) == (width, height) {
        return frame.clone();
    }
    let xt = bilinear_taps(frame.width(), width);
    let yt = bilinear_taps(frame.height(), height);
    resize_with(frame, width, height, xt, yt)
}

pub fn resize_frame_bicubic(frame: &Frame, width: usize, height: usize) -> Frame {
    if (frame.width(), frame.height()) == (width, height) {
        return frame.clone();
    }
    let xt = bicubic_taps(frame.width(), width);
    let yt = bicubic_taps(frame.height(), height);
    resize_with(frame, width, height, xt, yt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ColorMode;

    fn frame(w: usize, h: usize, f: impl Fn(usize, usize) -> u8) -> Frame {
        let mut px = Vec::with_capacity(w * h * 3);
        for y in 0..h {
            for x in 0..w {
                let v = f(x, y);
                px.extend_from_slice(&[v, v / 2, 255 - v]);
            }
        }
        Frame::new("p".into(), 0, w, h, ColorMode::Rgb, px).unwrap()
    }

    #[test]
    fn full_hd_to_fixed_sizes() {
        let f = frame(1920, 1080, |x, y| ((x * 7 + y * 3) % 256) as u8);
        let out = preprocess(&f, &PipelineConfig::default(), Targets::ALL).unwrap();
        let a = out.analysis.unwrap();
        let d = out.detector.unwrap();
        assert_eq!((a.width(), a.height()), (1088, 612));
        assert_eq!((d.width(), d.height()), (608, 608));
        assert_eq!(out.flow.dims(), (480, 270));
    }

    #[test]
    fn analysis_identity_is_bit_exact() {
        let f = frame(1088, 612, |x, y| ((x ^ y) % 256) as u8);
        let out = preprocess(&f, &PipelineConfig::default(), Targets::ALL).unwrap();
        assert_eq!(out.analysis.unwrap(), f);
    }

    #[test]
    fn constant_frame_stays_constant() {
        let f = frame(333, 211, |_, _| 200);
        let out = preprocess(&f, &PipelineConfig::default(), Targets::ALL).unwrap();
        for fr in [out.analysis.unwrap(), out.detector.unwrap()] {
            for px in fr.pixels().chunks(3) {
                assert!((px[0] as i32 - 200).abs() <= 1);
                assert!((px[1] as i32 - 100).abs() <= 1);
                assert!((px[2] as i32 - 55).abs() <= 1);
            }
        }
        let luma = (0.299 * 200.0 + 0.587 * 100.0 + 0.114 * 55.0f64).round() as f32;
        assert!(out.flow.data.iter().all(|&v| (v - luma).abs() <= 1.0));
    }

    #[test]
    fn tiny_input_rejected() {
        let f = frame(63, 100, |_, _| 0);
        assert!(matches!(
            preprocess(&f, &PipelineConfig::default(), Targets::ALL),
            Err(IoError::TooSmallInput {
                width: 63,
                height: 100
            })
        ));
    }

    #[test]
    fn cubic_weights_partition_unity() {
        for t in [0.0, 0.25, 0.5, 0.9] {
            let s: f64 = (-1..=2).map(|k| cubic_weight(t - k as f64)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert_eq!(cubic_weight(0.0), 1.0);
        assert_eq!(cubic_weight(1.0), 0.0);
    }
}

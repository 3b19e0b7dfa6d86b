//! Per-pixel quadratic polynomial expansion.
//!
//! Each pixel's neighbourhood is fitted, in the Gaussian-weighted least
//! squares sense, by `f(u) = uᵀ A u + bᵀ u + c` with `u = (x, y)` relative to
//! the pixel. The fit is computed with separable correlations and a
//! closed-form inverse of the (sparse) normal matrix.

use super::image::GrayImage;
use crate::par;

/// Quadratic fit around one pixel. `A = [[axx, axy], [axy, ayy]]`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PolyCoeffs {
    pub c: f32,
    pub bx: f32,
    pub by: f32,
    pub axx: f32,
    pub ayy: f32,
    pub axy: f32,
}

#[derive(Debug, Clone)]
pub struct PolyExpansion {
    pub width: usize,
    pub height: usize,
    pub coeffs: Vec<PolyCoeffs>,
}

impl PolyExpansion {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> &PolyCoeffs {
        &self.coeffs[y * self.width + x]
    }
}

/// Applicability kernel and the normal-matrix inverse entries it induces.
struct Kernel {
    g: Vec<f32>,
    xg: Vec<f32>,
    xxg: Vec<f32>,
    ig00: f64,
    ig03: f64,
    ig11: f64,
    ig33: f64,
    ig55: f64,
}

impl Kernel {
    /// Taps `-n..=n`, Gaussian with standard deviation `sigma`.
    fn new(n: usize, sigma: f64) -> Self {
        let sigma = if sigma < f32::EPSILON as f64 {
            n as f64 * 0.3
        } else {
            sigma
        };
        let ni = n as i64;
        let raw: Vec<f64> = (0..=ni)
            .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
            .collect();
        let total = raw[0] + 2.0 * raw[1..].iter().sum::<f64>();
        let g: Vec<f32> = raw.iter().map(|v| (v / total) as f32).collect();
        let xg: Vec<f32> = g.iter().enumerate().map(|(x, &v)| x as f32 * v).collect();
        let xxg: Vec<f32> = g
            .iter()
            .enumerate()
            .map(|(x, &v)| (x * x) as f32 * v)
            .collect();

        // Normal matrix over the basis (1, x, y, x², y², xy).
        let tap = |i: i64| g[i.unsigned_abs() as usize] as f64;
        let mut gm = [[0.0f64; 6]; 6];
        for y in -ni..=ni {
            for x in -ni..=ni {
                let w = tap(x) * tap(y);
                let (xf, yf) = (x as f64, y as f64);
                gm[0][0] += w;
                gm[1][1] += w * xf * xf;
                gm[3][3] += w * xf.powi(4);
                gm[5][5] += w * xf * xf * yf * yf;
            }
        }
        gm[2][2] = gm[1][1];
        gm[0][3] = gm[1][1];
        gm[0][4] = gm[1][1];
        gm[3][0] = gm[1][1];
        gm[4][0] = gm[1][1];
        gm[4][4] = gm[3][3];
        gm[3][4] = gm[5][5];
        gm[4][3] = gm[5][5];
        let inv = invert6(gm);
        Self {
            g,
            xg,
            xxg,
            ig00: inv[0][0],
            ig03: inv[0][3],
            ig11: inv[1][1],
            ig33: inv[3][3],
            ig55: inv[5][5],
        }
    }
}

/// Gauss-Jordan inverse with partial pivoting. The normal matrix is SPD, so
/// this cannot hit a zero pivot for a valid kernel.
fn invert6(mut a: [[f64; 6]; 6]) -> [[f64; 6]; 6] {
    let mut inv = [[0.0f64; 6]; 6];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..6 {
        let pivot = (col..6)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col];
        for k in 0..6 {
            a[col][k] /= p;
            inv[col][k] /= p;
        }
        for r in 0..6 {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    for k in 0..6 {
                        a[r][k] -= f * a[col][k];
                        inv[r][k] -= f * inv[col][k];
                    }
                }
            }
        }
    }
    inv
}

/// Fits the quadratic model at every pixel. The neighbourhood spans
/// `-poly_n..=poly_n` in each direction; samples beyond the image replicate
/// the nearest border pixel.
pub fn polynomial_expansion(src: &GrayImage, poly_n: usize, poly_sigma: f64) -> PolyExpansion {
    let k = Kernel::new(poly_n, poly_sigma);
    let (w, h) = src.dims();
    let n = poly_n;
    let mut coeffs = vec![PolyCoeffs::default(); w * h];
    par::for_each_row(&mut coeffs, w, |y, out| {
        // Vertical pass into a padded row buffer: (Σg·I, Σk·g·I, Σk²·g·I).
        let mut v = vec![[0.0f32; 3]; w + 2 * n];
        let row = |yy: isize| {
            let yy = yy.clamp(0, h as isize - 1) as usize;
            &src.data[yy * w..(yy + 1) * w]
        };
        let centre = row(y as isize);
        for x in 0..w {
            v[n + x] = [centre[x] * k.g[0], 0.0, 0.0];
        }
        for t in 1..=n {
            let up = row(y as isize - t as isize);
            let dn = row(y as isize + t as isize);
            let (g0, g1, g2) = (k.g[t], k.xg[t], k.xxg[t]);
            for x in 0..w {
                let p = up[x] + dn[x];
                let acc = &mut v[n + x];
                acc[0] += g0 * p;
                acc[1] += g1 * (dn[x] - up[x]);
                acc[2] += g2 * p;
            }
        }
        for i in 0..n {
            v[i] = v[n];
            v[n + w + i] = v[n + w - 1];
        }

        for (x, dst) in out.iter_mut().enumerate() {
            let c = n + x;
            let g0 = k.g[0] as f64;
            let mut s1 = v[c][0] as f64 * g0;
            let mut sx = 0.0f64;
            let mut sy = v[c][1] as f64 * g0;
            let mut sxx = 0.0f64;
            let mut syy = v[c][2] as f64 * g0;
            let mut sxy = 0.0f64;
            for t in 1..=n {
                let (l, r) = (v[c - t], v[c + t]);
                let (g, xg, xxg) = (k.g[t] as f64, k.xg[t] as f64, k.xxg[t] as f64);
                let even0 = (r[0] + l[0]) as f64;
                s1 += even0 * g;
                sxx += even0 * xxg;
                sx += (r[0] - l[0]) as f64 * xg;
                sy += (r[1] + l[1]) as f64 * g;
                sxy += (r[1] - l[1]) as f64 * xg;
                syy += (r[2] + l[2]) as f64 * g;
            }
            *dst = PolyCoeffs {
                c: (k.ig00 * s1 + k.ig03 * (sxx + syy)) as f32,
                bx: (k.ig11 * sx) as f32,
                by: (k.ig11 * sy) as f32,
                axx: (k.ig03 * s1 + k.ig33 * sxx) as f32,
                ayy: (k.ig03 * s1 + k.ig33 * syy) as f32,
                axy: (0.5 * k.ig55 * sxy) as f32,
            };
        }
    });
    PolyExpansion {
        width: w,
        height: h,
        coeffs,
    }
}

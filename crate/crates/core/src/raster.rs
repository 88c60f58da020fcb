//! Image-space primitives: bilinear sampling and warping, pyramids,
//! gradients, census codes, SSIM, structure tensors and histograms.
//!
//! Border policy: sampling clamps to the border and reports it; census and
//! SSIM are evaluated everywhere with replicated borders, and consumers drop
//! the outermost pixel ring from their statistics.

use crate::error::Result;
use crate::types::{FlowField, Image, MAX_LEVEL};

/// Soft-sign constant of the ternary census code.
pub const CENSUS_SOFTSIGN: f64 = 0.81;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// 3x3 neighbor offsets in census order; offset `k` is opposite `7 - k`.
pub const CENSUS_OFFSETS: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// Interpolation footprint of one bilinear lookup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilinearTaps {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
    pub fx: f64,
    pub fy: f64,
    /// Whether the x (resp. y) coordinate was clamped to the border.
    pub clamped_x: bool,
    pub clamped_y: bool,
}

impl BilinearTaps {
    pub fn new(width: usize, height: usize, x: f64, y: f64) -> Self {
        let (x0, x1, fx, clamped_x) = axis_taps(width, x);
        let (y0, y1, fy, clamped_y) = axis_taps(height, y);
        Self {
            x0,
            x1,
            y0,
            y1,
            fx,
            fy,
            clamped_x,
            clamped_y,
        }
    }

    pub fn out_of_bounds(&self) -> bool {
        self.clamped_x || self.clamped_y
    }

    /// Interpolate a scalar grid given by `at(x, y)`.
    #[inline]
    pub fn interpolate(&self, at: impl Fn(usize, usize) -> f64) -> f64 {
        let top = (1.0 - self.fx) * at(self.x0, self.y0) + self.fx * at(self.x1, self.y0);
        let bottom = (1.0 - self.fx) * at(self.x0, self.y1) + self.fx * at(self.x1, self.y1);
        (1.0 - self.fy) * top + self.fy * bottom
    }

    /// Exact partial derivatives of the interpolant with respect to the
    /// sample coordinates. Zero along a clamped axis.
    #[inline]
    pub fn derivatives(&self, at: impl Fn(usize, usize) -> f64) -> (f64, f64) {
        let (a, b, c, d) = (
            at(self.x0, self.y0),
            at(self.x1, self.y0),
            at(self.x0, self.y1),
            at(self.x1, self.y1),
        );
        let dx = if self.clamped_x || self.x0 == self.x1 {
            0.0
        } else {
            (1.0 - self.fy) * (b - a) + self.fy * (d - c)
        };
        let dy = if self.clamped_y || self.y0 == self.y1 {
            0.0
        } else {
            (1.0 - self.fx) * (c - a) + self.fx * (d - b)
        };
        (dx, dy)
    }
}

fn axis_taps(len: usize, t: f64) -> (usize, usize, f64, bool) {
    let max = (len - 1) as f64;
    let clamped = !(0.0..=max).contains(&t);
    if len == 1 {
        return (0, 0, 0.0, clamped);
    }
    let c = t.clamp(0.0, max);
    let i0 = (c.floor() as usize).min(len - 2);
    (i0, i0 + 1, c - i0 as f64, clamped)
}

/// Result of a bilinear lookup: up to three channel values and the
/// out-of-bounds flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sampled {
    pub values: [f64; 3],
    pub channels: usize,
    pub out_of_bounds: bool,
}

impl Sampled {
    pub fn channel(&self, c: usize) -> f64 {
        self.values[c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values[..self.channels]
    }
}

/// Bilinear interpolation at `(x, y)`; coordinates outside the image are
/// clamped to the border and flagged.
pub fn bilinear_sample(img: &Image, x: f64, y: f64) -> Sampled {
    let taps = BilinearTaps::new(img.width(), img.height(), x, y);
    let mut values = [0.0; 3];
    for (c, v) in values.iter_mut().enumerate().take(img.channels()) {
        *v = taps.interpolate(|px, py| img.get(px, py, c));
    }
    Sampled {
        values,
        channels: img.channels(),
        out_of_bounds: taps.out_of_bounds(),
    }
}

/// `target` resampled at `p + flow(p)` with per-pixel out-of-bounds flags.
#[derive(Debug, Clone)]
pub struct Warped {
    pub image: Image,
    pub out_of_bounds: Vec<bool>,
}

/// Backward warp: `out(p) = target(p + flow(p))`.
pub fn warp_image(target: &Image, flow: &FlowField) -> Result<Warped> {
    flow.ensure_dims(target.dims())?;
    let (w, h) = target.dims();
    let ch = target.channels();
    let mut data = Vec::with_capacity(w * h * ch);
    let mut oob = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let [u, v] = flow.get(x, y);
            let s = bilinear_sample(target, x as f64 + u, y as f64 + v);
            data.extend_from_slice(s.as_slice());
            oob.push(s.out_of_bounds);
        }
    }
    Ok(Warped {
        image: Image::new(w, h, ch, data)?,
        out_of_bounds: oob,
    })
}

/// 2x2 mean pooling to ceiling dimensions; edge cells average the pixels
/// that exist.
pub fn downsample2(img: &Image) -> Image {
    let (w, h) = img.dims();
    let (nw, nh) = (w.div_ceil(2), h.div_ceil(2));
    let ch = img.channels();
    Image::from_fn(nw, nh, ch, |x, y, c| {
        let mut sum = 0.0;
        let mut n = 0.0;
        for sy in 2 * y..(2 * y + 2).min(h) {
            for sx in 2 * x..(2 * x + 2).min(w) {
                sum += img.get(sx, sy, c);
                n += 1.0;
            }
        }
        sum / n
    })
}

/// Images for levels `0..=max_level`, each a 2x downsampling of the previous.
#[derive(Debug, Clone)]
pub struct ImagePyramid {
    levels: Vec<Image>,
}

impl ImagePyramid {
    pub fn build(base: &Image, max_level: usize) -> Self {
        let max_level = max_level.min(MAX_LEVEL);
        let mut levels = Vec::with_capacity(max_level + 1);
        levels.push(base.clone());
        for l in 1..=max_level {
            let next = downsample2(&levels[l - 1]);
            levels.push(next);
        }
        Self { levels }
    }

    pub fn level(&self, l: usize) -> &Image {
        &self.levels[l]
    }

    pub fn max_level(&self) -> usize {
        self.levels.len() - 1
    }
}

/// Per-channel spatial derivatives with the image's memory layout.
#[derive(Debug, Clone)]
pub struct ImageGradient {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
}

impl ImageGradient {
    #[inline]
    pub fn at(&self, x: usize, y: usize, c: usize) -> (f64, f64) {
        let i = (y * self.width + x) * self.channels + c;
        (self.dx[i], self.dy[i])
    }

    /// `(sum_c |dI_c/dx|, sum_c |dI_c/dy|)` at a pixel.
    pub fn l1_at(&self, x: usize, y: usize) -> (f64, f64) {
        let i = (y * self.width + x) * self.channels;
        let gx = self.dx[i..i + self.channels].iter().map(|v| v.abs()).sum();
        let gy = self.dy[i..i + self.channels].iter().map(|v| v.abs()).sum();
        (gx, gy)
    }
}

/// Difference along one axis: central inside, one-sided at the ends, zero
/// when the axis has a single sample.
#[inline]
pub(crate) fn axis_diff(len: usize, i: usize, at: impl Fn(usize) -> f64) -> f64 {
    if len < 2 {
        0.0
    } else if i == 0 {
        at(1) - at(0)
    } else if i == len - 1 {
        at(len - 1) - at(len - 2)
    } else {
        0.5 * (at(i + 1) - at(i - 1))
    }
}

pub fn image_gradient(img: &Image) -> ImageGradient {
    let (w, h) = img.dims();
    let ch = img.channels();
    let mut dx = Vec::with_capacity(w * h * ch);
    let mut dy = Vec::with_capacity(w * h * ch);
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                dx.push(axis_diff(w, x, |i| img.get(i, y, c)));
                dy.push(axis_diff(h, y, |j| img.get(x, j, c)));
            }
        }
    }
    ImageGradient {
        width: w,
        height: h,
        channels: ch,
        dx,
        dy,
    }
}

/// Soft ternary census codes of the grayscale image, one 8-vector per pixel.
#[derive(Debug, Clone)]
pub struct Census {
    pub width: usize,
    pub height: usize,
    pub codes: Vec<[f64; 8]>,
}

impl Census {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> &[f64; 8] {
        &self.codes[y * self.width + x]
    }
}

/// Census transform on the channel mean; borders use replicated neighbors.
pub fn census_transform(img: &Image) -> Census {
    let gray = img.gray();
    let (w, h) = gray.dims();
    let at = |x: isize, y: isize| {
        let cx = x.clamp(0, w as isize - 1) as usize;
        let cy = y.clamp(0, h as isize - 1) as usize;
        gray.get(cx, cy, 0)
    };
    let mut codes = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let center = at(x, y);
            let mut code = [0.0; 8];
            for (k, (ox, oy)) in CENSUS_OFFSETS.iter().enumerate() {
                let d = at(x + ox, y + oy) - center;
                code[k] = d / (CENSUS_SOFTSIGN + d * d).sqrt();
            }
            codes.push(code);
        }
    }
    Census {
        width: w,
        height: h,
        codes,
    }
}

/// Soft Hamming distance between two census codes.
#[inline]
pub fn census_distance(a: &[f64; 8], b: &[f64; 8]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| {
            let d = p - q;
            let d2 = d * d;
            d2 / (0.1 + d2)
        })
        .sum()
}

/// Per-pixel SSIM (channel mean) over 3x3 windows with replicated borders.
pub fn ssim_map(a: &Image, b: &Image) -> Result<Vec<f64>> {
    a.ensure_same_dims(b)?;
    if a.channels() != b.channels() {
        return Err(crate::error::Error::InvalidImage(format!(
            "channel mismatch {} vs {}",
            a.channels(),
            b.channels()
        )));
    }
    let (w, h) = a.dims();
    let ch = a.channels();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut total = 0.0;
            for c in 0..ch {
                let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for oy in -1..=1 {
                    for ox in -1..=1 {
                        let px = (x + ox).clamp(0, w as isize - 1) as usize;
                        let py = (y + oy).clamp(0, h as isize - 1) as usize;
                        let va = a.get(px, py, c);
                        let vb = b.get(px, py, c);
                        sa += va;
                        sb += vb;
                        saa += va * va;
                        sbb += vb * vb;
                        sab += va * vb;
                    }
                }
                let n = 9.0;
                let (ma, mb) = (sa / n, sb / n);
                let va = saa / n - ma * ma;
                let vb = sbb / n - mb * mb;
                let cov = sab / n - ma * mb;
                let num = (2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2);
                let den = (ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2);
                total += num / den;
            }
            out.push((total / ch as f64).clamp(-1.0, 1.0));
        }
    }
    Ok(out)
}

/// Mean over `window`x`window` tiles (step `stride`) of the smaller
/// eigenvalue of the summed gradient outer products. Images smaller than a
/// window are treated as a single tile.
pub fn structure_tensor_min_eig(img: &Image, window: usize, stride: usize) -> f64 {
    let gray = img.gray();
    let grad = image_gradient(&gray);
    let (w, h) = gray.dims();
    let starts = |len: usize| -> Vec<usize> {
        if len <= window {
            vec![0]
        } else {
            (0..=len - window).step_by(stride.max(1)).collect()
        }
    };
    let xs = starts(w);
    let ys = starts(h);
    let mut total = 0.0;
    for &y0 in &ys {
        for &x0 in &xs {
            let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
            for y in y0..(y0 + window).min(h) {
                for x in x0..(x0 + window).min(w) {
                    let (gx, gy) = grad.at(x, y, 0);
                    sxx += gx * gx;
                    sxy += gx * gy;
                    syy += gy * gy;
                }
            }
            let half_trace = 0.5 * (sxx + syy);
            let disc = (0.25 * (sxx - syy) * (sxx - syy) + sxy * sxy).sqrt();
            total += (half_trace - disc).max(0.0);
        }
    }
    total / (xs.len() * ys.len()) as f64
}

fn channel_cdf(img: &Image, c: usize) -> [f64; 256] {
    let mut hist = [0usize; 256];
    for y in 0..img.height() {
        for x in 0..img.width() {
            let bin = (img.get(x, y, c) * 255.0).round() as usize;
            hist[bin.min(255)] += 1;
        }
    }
    let n = (img.width() * img.height()) as f64;
    let mut cdf = [0.0; 256];
    let mut acc = 0usize;
    for (i, count) in hist.iter().enumerate() {
        acc += count;
        cdf[i] = acc as f64 / n;
    }
    cdf
}

/// Mean over channels of the mean absolute gap between 256-bin CDFs.
pub fn histogram_cdf_distance(a: &Image, b: &Image) -> Result<f64> {
    if a.channels() != b.channels() {
        return Err(crate::error::Error::InvalidImage(format!(
            "channel mismatch {} vs {}",
            a.channels(),
            b.channels()
        )));
    }
    let mut total = 0.0;
    for c in 0..a.channels() {
        let ca = channel_cdf(a, c);
        let cb = channel_cdf(b, c);
        total += ca.iter().zip(&cb).map(|(p, q)| (p - q).abs()).sum::<f64>() / 256.0;
    }
    Ok(total / a.channels() as f64)
}

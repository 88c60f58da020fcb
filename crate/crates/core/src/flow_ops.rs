//! Flow-space primitives: pooling and upsampling of flow fields, flow
//! pyramids, the forward-backward occlusion check and flow gradients.

use crate::error::Result;
use crate::raster::{axis_diff, BilinearTaps};
use crate::types::{FlowField, LossConfig, OcclusionMask, MAX_LEVEL};

/// Valid fraction a pooled cell needs to stay valid.
pub const VALID_POOL_THRESHOLD: f64 = 0.5;

/// 2x2 mean pooling of vectors followed by halving (coordinate rescale).
///
/// When the field carries a validity mask only valid members are averaged,
/// and the pooled pixel stays valid if at least half of its members were.
pub fn downsample_flow(flow: &FlowField) -> FlowField {
    let (w, h) = flow.dims();
    let (nw, nh) = (w.div_ceil(2), h.div_ceil(2));
    let mut uv = Vec::with_capacity(2 * nw * nh);
    let mut valid = Vec::with_capacity(nw * nh);
    for y in 0..nh {
        for x in 0..nw {
            let (mut su, mut sv, mut n_valid, mut n) = (0.0, 0.0, 0usize, 0usize);
            for sy in 2 * y..(2 * y + 2).min(h) {
                for sx in 2 * x..(2 * x + 2).min(w) {
                    n += 1;
                    if flow.is_valid(sx, sy) {
                        let [u, v] = flow.get(sx, sy);
                        su += u;
                        sv += v;
                        n_valid += 1;
                    }
                }
            }
            if n_valid > 0 {
                uv.push(0.5 * su / n_valid as f64);
                uv.push(0.5 * sv / n_valid as f64);
            } else {
                uv.push(0.0);
                uv.push(0.0);
            }
            valid.push(n_valid as f64 / n as f64 >= VALID_POOL_THRESHOLD);
        }
    }
    let mask = flow.valid_mask().map(|_| valid);
    FlowField::new(nw, nh, uv, mask).expect("pooled field is well formed")
}

/// Bilinear 2x upsampling into a `width`x`height` grid, vectors doubled.
///
/// Pixel centers are aligned, so the target may be `2w` or `2w - 1` wide
/// to match ceiling-division pyramids.
pub fn upsample_flow_to(flow: &FlowField, width: usize, height: usize) -> FlowField {
    let (w, h) = flow.dims();
    FlowField::from_fn(width, height, |x, y| {
        let sx = (x as f64 + 0.5) * 0.5 - 0.5;
        let sy = (y as f64 + 0.5) * 0.5 - 0.5;
        let taps = BilinearTaps::new(w, h, sx, sy);
        let u = taps.interpolate(|px, py| flow.get(px, py)[0]);
        let v = taps.interpolate(|px, py| flow.get(px, py)[1]);
        [2.0 * u, 2.0 * v]
    })
}

pub fn upsample_flow2(flow: &FlowField) -> FlowField {
    upsample_flow_to(flow, 2 * flow.width(), 2 * flow.height())
}

/// Flow fields for levels `0..=max_level`; level `l` vectors are scaled by
/// `2^-l` relative to the base.
#[derive(Debug, Clone)]
pub struct FlowPyramid {
    levels: Vec<FlowField>,
}

impl FlowPyramid {
    pub fn build(base: &FlowField, max_level: usize) -> Self {
        let max_level = max_level.min(MAX_LEVEL);
        let mut levels = Vec::with_capacity(max_level + 1);
        levels.push(base.clone());
        for l in 1..=max_level {
            let next = downsample_flow(&levels[l - 1]);
            levels.push(next);
        }
        Self { levels }
    }

    /// Wrap explicit per-level fields; index `i` is level `i`.
    pub fn from_levels(levels: Vec<FlowField>) -> Self {
        assert!(!levels.is_empty());
        Self { levels }
    }

    pub fn level(&self, l: usize) -> &FlowField {
        &self.levels[l]
    }

    pub fn level_mut(&mut self, l: usize) -> &mut FlowField {
        &mut self.levels[l]
    }

    pub fn max_level(&self) -> usize {
        self.levels.len() - 1
    }
}

/// Forward-backward consistency check.
///
/// A pixel is occluded when its forward target leaves the frame, or when the
/// forward vector and the backward vector sampled at the target fail
/// `|f + b|^2 <= a1 (|f|^2 + |b|^2) + a2`.
pub fn fb_occlusion(forward: &FlowField, backward: &FlowField, cfg: &LossConfig) -> Result<OcclusionMask> {
    backward.ensure_dims(forward.dims())?;
    let (w, h) = forward.dims();
    let mut occluded = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let [fu, fv] = forward.get(x, y);
            let taps = BilinearTaps::new(w, h, x as f64 + fu, y as f64 + fv);
            if taps.out_of_bounds() {
                occluded.push(true);
                continue;
            }
            let bu = taps.interpolate(|px, py| backward.get(px, py)[0]);
            let bv = taps.interpolate(|px, py| backward.get(px, py)[1]);
            let sum2 = (fu + bu).powi(2) + (fv + bv).powi(2);
            let mag2 = fu * fu + fv * fv + bu * bu + bv * bv;
            occluded.push(sum2 > cfg.occ_alpha1 * mag2 + cfg.occ_alpha2);
        }
    }
    OcclusionMask::new(w, h, occluded)
}

/// Occlusion masks for every level of a forward/backward pyramid pair.
pub fn occlusion_pyramid(
    forward: &FlowPyramid,
    backward: &FlowPyramid,
    cfg: &LossConfig,
) -> Result<Vec<OcclusionMask>> {
    (0..=forward.max_level().min(backward.max_level()))
        .map(|l| fb_occlusion(forward.level(l), backward.level(l), cfg))
        .collect()
}

/// Mean Frobenius norm of the flow Jacobian.
pub fn flow_gradient_magnitude(flow: &FlowField) -> f64 {
    let (w, h) = flow.dims();
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            let mut sq = 0.0;
            for c in 0..2 {
                let dx = axis_diff(w, x, |i| flow.get(i, y)[c]);
                let dy = axis_diff(h, y, |j| flow.get(x, j)[c]);
                sq += dx * dx + dy * dy;
            }
            total += sq.sqrt();
        }
    }
    total / (w * h) as f64
}

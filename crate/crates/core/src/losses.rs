//! Semi-supervised loss stack: occlusion-aware photometric distances
//! (L1, SSIM, census), edge-aware second-order smoothness, the multi-scale
//! robust supervised loss and their per-sample / per-dataset combination.
//!
//! Every term is a mean over the pixels it is evaluated on, so levels of
//! different size stay comparable. A level with no usable pixel contributes 0.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow_ops::{occlusion_pyramid, FlowPyramid};
use crate::raster::{census_distance, census_transform, image_gradient, ssim_map, warp_image, ImagePyramid};
use crate::types::{Dataset, FlowField, Image, LossConfig, OcclusionMask, Sample, LOSS_LEVELS, MAX_LEVEL};

/// The three photometric distances of one level, before weighting.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhotometricTerms {
    pub l1: f64,
    pub ssim: f64,
    pub census: f64,
}

impl PhotometricTerms {
    pub fn weighted(&self, c: &[f64; 3]) -> f64 {
        c[0] * self.l1 + c[1] * self.ssim + c[2] * self.census
    }
}

fn check_level_dims(i1: &Image, i2: &Image, flow: &FlowField, occ: &OcclusionMask) -> Result<()> {
    i1.ensure_same_dims(i2)?;
    flow.ensure_dims(i1.dims())?;
    if occ.dims() != i1.dims() {
        return Err(Error::DimensionMismatch {
            expected: i1.dims(),
            actual: occ.dims(),
        });
    }
    Ok(())
}

/// Photometric distances between `i1` and `i2` warped by `flow`, over
/// non-occluded pixels. Distances whose weight in `c` is zero are skipped
/// (reported as 0).
pub fn photometric_terms(
    i1: &Image,
    i2: &Image,
    flow: &FlowField,
    occ: &OcclusionMask,
    c: &[f64; 3],
) -> Result<PhotometricTerms> {
    check_level_dims(i1, i2, flow, occ)?;
    let (w, h) = i1.dims();
    let warped = warp_image(i2, flow)?.image;
    let interior = |x: usize, y: usize| x > 0 && y > 0 && x + 1 < w && y + 1 < h;

    let mut terms = PhotometricTerms::default();
    let visible = w * h - occ.count();
    if visible == 0 {
        return Ok(terms);
    }

    if c[0] != 0.0 {
        let ch = i1.channels() as f64;
        let mut sum = 0.0;
        for y in 0..h {
            for x in 0..w {
                if occ.is_occluded(x, y) {
                    continue;
                }
                let d: f64 = i1.pixel(x, y).iter().zip(warped.pixel(x, y)).map(|(a, b)| (a - b).abs()).sum();
                sum += d / ch;
            }
        }
        terms.l1 = sum / visible as f64;
    }

    let visible_interior = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| interior(x, y) && !occ.is_occluded(x, y))
        .count();
    if visible_interior > 0 {
        if c[1] != 0.0 {
            let ssim = ssim_map(i1, &warped)?;
            let mut sum = 0.0;
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    if !occ.is_occluded(x, y) {
                        sum += 0.5 * (1.0 - ssim[y * w + x]);
                    }
                }
            }
            terms.ssim = sum / visible_interior as f64;
        }
        if c[2] != 0.0 {
            let ca = census_transform(i1);
            let cb = census_transform(&warped);
            let mut sum = 0.0;
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    if !occ.is_occluded(x, y) {
                        sum += census_distance(ca.at(x, y), cb.at(x, y));
                    }
                }
            }
            terms.census = sum / visible_interior as f64;
        }
    }
    Ok(terms)
}

/// Occlusion-aware photometric loss of one level: `sum_i c_i rho_i`.
pub fn photometric_level(
    i1: &Image,
    i2: &Image,
    flow: &FlowField,
    occ: &OcclusionMask,
    cfg: &LossConfig,
) -> Result<f64> {
    Ok(photometric_terms(i1, i2, flow, occ, &cfg.census_weights)?.weighted(&cfg.census_weights))
}

/// Per-level photometric values for levels 2..=6 (unweighted).
pub fn photometric_levels(
    i1: &ImagePyramid,
    i2: &ImagePyramid,
    flow: &FlowPyramid,
    occ: &[OcclusionMask],
    cfg: &LossConfig,
) -> Result<[f64; 5]> {
    let mut out = [0.0; 5];
    for (k, &l) in LOSS_LEVELS.iter().enumerate() {
        if cfg.w_ph[k] != 0.0 {
            out[k] = photometric_level(i1.level(l), i2.level(l), flow.level(l), &occ[l], cfg)?;
        }
    }
    Ok(out)
}

/// `sum_l w_ph[l] * photometric_level(l)` over levels 2..=6.
pub fn photometric_loss(
    i1: &ImagePyramid,
    i2: &ImagePyramid,
    flow: &FlowPyramid,
    occ: &[OcclusionMask],
    cfg: &LossConfig,
) -> Result<f64> {
    let levels = photometric_levels(i1, i2, flow, occ, cfg)?;
    Ok(weighted_sum(&cfg.w_ph, &levels))
}

fn weighted_sum(w: &[f64; 5], v: &[f64; 5]) -> f64 {
    w.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Edge weights `exp(-delta |dI/dz|_1)` for z = x and z = y, per pixel.
pub fn edge_weights(img: &Image, delta: f64) -> (Vec<f64>, Vec<f64>) {
    let g = image_gradient(img);
    let (w, h) = img.dims();
    let mut wx = Vec::with_capacity(w * h);
    let mut wy = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (gx, gy) = g.l1_at(x, y);
            wx.push((-delta * gx).exp());
            wy.push((-delta * gy).exp());
        }
    }
    (wx, wy)
}

/// Edge-aware second-order smoothness with precomputed edge weights.
pub fn smoothness_with_weights(flow: &FlowField, wx: &[f64], wy: &[f64]) -> f64 {
    let (w, h) = flow.dims();
    let mut sum = 0.0;
    for y in 0..h {
        for x in 1..w.saturating_sub(1) {
            let (a, b, c) = (flow.get(x - 1, y), flow.get(x, y), flow.get(x + 1, y));
            let d2 = (a[0] - 2.0 * b[0] + c[0]).abs() + (a[1] - 2.0 * b[1] + c[1]).abs();
            sum += d2 * wx[y * w + x];
        }
    }
    for y in 1..h.saturating_sub(1) {
        for x in 0..w {
            let (a, b, c) = (flow.get(x, y - 1), flow.get(x, y), flow.get(x, y + 1));
            let d2 = (a[0] - 2.0 * b[0] + c[0]).abs() + (a[1] - 2.0 * b[1] + c[1]).abs();
            sum += d2 * wy[y * w + x];
        }
    }
    sum / (2.0 * (w * h) as f64)
}

/// Smoothness of one level, weighted by edges of `i1` at the same level.
pub fn smoothness_level(flow: &FlowField, i1: &Image, cfg: &LossConfig) -> Result<f64> {
    flow.ensure_dims(i1.dims())?;
    let (wx, wy) = edge_weights(i1, cfg.delta);
    Ok(smoothness_with_weights(flow, &wx, &wy))
}

pub fn smoothness_levels(flow: &FlowPyramid, i1: &ImagePyramid, cfg: &LossConfig) -> Result<[f64; 5]> {
    let mut out = [0.0; 5];
    for (k, &l) in LOSS_LEVELS.iter().enumerate() {
        if cfg.w_sm[k] != 0.0 {
            out[k] = smoothness_level(flow.level(l), i1.level(l), cfg)?;
        }
    }
    Ok(out)
}

pub fn smoothness_loss(flow: &FlowPyramid, i1: &ImagePyramid, cfg: &LossConfig) -> Result<f64> {
    Ok(weighted_sum(&cfg.w_sm, &smoothness_levels(flow, i1, cfg)?))
}

/// Robust per-pixel penalty `(|d|_1 + eps)^q`.
#[inline]
pub fn robust_l1(du: f64, dv: f64, eps: f64, q: f64) -> f64 {
    (du.abs() + dv.abs() + eps).powf(q)
}

/// Per-level supervised values (unweighted means over valid pixels).
pub fn supervised_levels(flow: &FlowPyramid, gt: &FlowField, cfg: &LossConfig) -> Result<[f64; 5]> {
    flow.level(0).ensure_dims(gt.dims())?;
    let gt_pyr = FlowPyramid::build(gt, MAX_LEVEL);
    let mut out = [0.0; 5];
    for (k, &l) in LOSS_LEVELS.iter().enumerate() {
        let (est, truth) = (flow.level(l), gt_pyr.level(l));
        est.ensure_dims(truth.dims())?;
        let mut sum = 0.0;
        let mut n = 0usize;
        for y in 0..truth.height() {
            for x in 0..truth.width() {
                if truth.is_valid(x, y) {
                    let (a, b) = (est.get(x, y), truth.get(x, y));
                    sum += robust_l1(a[0] - b[0], a[1] - b[1], cfg.eps, cfg.q);
                    n += 1;
                }
            }
        }
        out[k] = if n > 0 { sum / n as f64 } else { 0.0 };
    }
    Ok(out)
}

/// Multi-scale robust supervised loss `sum_l w_sup[l] * mean_p (|U^ - U|_1 + eps)^q`.
///
/// The ground truth (and its validity mask) is pooled per level; `flow`
/// must hold the estimate for every level up to 6.
pub fn supervised_loss(flow: &FlowPyramid, gt: &FlowField, cfg: &LossConfig) -> Result<f64> {
    Ok(weighted_sum(&cfg.w_sup, &supervised_levels(flow, gt, cfg)?))
}

/// Forward and backward base-resolution flow estimates of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowEstimate {
    pub forward: FlowField,
    pub backward: FlowField,
}

/// Per-level values of each term.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LevelTerms {
    pub photometric: [f64; 5],
    pub smoothness: [f64; 5],
    pub supervised: [f64; 5],
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub photometric: f64,
    pub smoothness: f64,
    pub supervised: f64,
    pub total: f64,
    pub per_level: LevelTerms,
}

/// Pyramids needed to evaluate the unsupervised loss of one sample.
#[derive(Debug, Clone)]
pub struct LossInputs {
    pub frame1: ImagePyramid,
    pub frame2: ImagePyramid,
    pub forward: FlowPyramid,
    pub backward: FlowPyramid,
    pub occ_forward: Vec<OcclusionMask>,
    pub occ_backward: Vec<OcclusionMask>,
}

impl LossInputs {
    pub fn build(sample: &Sample, est: &FlowEstimate, cfg: &LossConfig) -> Result<Self> {
        est.forward.ensure_dims(sample.dims())?;
        est.backward.ensure_dims(sample.dims())?;
        let forward = FlowPyramid::build(&est.forward, MAX_LEVEL);
        let backward = FlowPyramid::build(&est.backward, MAX_LEVEL);
        let occ_forward = occlusion_pyramid(&forward, &backward, cfg)?;
        let occ_backward = occlusion_pyramid(&backward, &forward, cfg)?;
        Ok(Self {
            frame1: ImagePyramid::build(&sample.frame1, MAX_LEVEL),
            frame2: ImagePyramid::build(&sample.frame2, MAX_LEVEL),
            forward,
            backward,
            occ_forward,
            occ_backward,
        })
    }
}

/// Bidirectional unsupervised loss: photometric and smoothness terms are
/// averaged over the two temporal directions; the augmentation term is 0.
pub fn unsupervised_loss(inputs: &LossInputs, cfg: &LossConfig) -> Result<LossBreakdown> {
    let pf = photometric_levels(&inputs.frame1, &inputs.frame2, &inputs.forward, &inputs.occ_forward, cfg)?;
    let pb = photometric_levels(&inputs.frame2, &inputs.frame1, &inputs.backward, &inputs.occ_backward, cfg)?;
    let sf = smoothness_levels(&inputs.forward, &inputs.frame1, cfg)?;
    let sb = smoothness_levels(&inputs.backward, &inputs.frame2, cfg)?;
    let mut per_level = LevelTerms::default();
    for k in 0..5 {
        per_level.photometric[k] = 0.5 * (pf[k] + pb[k]);
        per_level.smoothness[k] = 0.5 * (sf[k] + sb[k]);
    }
    let photometric = 0.5 * (weighted_sum(&cfg.w_ph, &pf) + weighted_sum(&cfg.w_ph, &pb));
    let smoothness = 0.5 * (weighted_sum(&cfg.w_sm, &sf) + weighted_sum(&cfg.w_sm, &sb));
    Ok(LossBreakdown {
        photometric,
        smoothness,
        supervised: 0.0,
        total: photometric + cfg.lambda_sm * smoothness,
        per_level,
    })
}

/// Per-sample semi-supervised loss: `alpha * supervised` for labeled
/// samples, the unsupervised total otherwise.
pub fn semi_supervised_sample_loss(sample: &Sample, est: &FlowEstimate, cfg: &LossConfig) -> Result<LossBreakdown> {
    match &sample.label {
        Some(gt) => {
            let pyr = FlowPyramid::build(&est.forward, MAX_LEVEL);
            let levels = supervised_levels(&pyr, gt, cfg)?;
            let supervised = weighted_sum(&cfg.w_sup, &levels);
            Ok(LossBreakdown {
                supervised,
                total: cfg.alpha * supervised,
                per_level: LevelTerms {
                    supervised: levels,
                    ..LevelTerms::default()
                },
                ..LossBreakdown::default()
            })
        }
        None => unsupervised_loss(&LossInputs::build(sample, est, cfg)?, cfg),
    }
}

/// Sum of per-sample semi-supervised losses; `estimates[i]` belongs to the
/// i-th sample.
///
/// Unlabeled and labeled samples are summed separately (each in dataset
/// order) and then added, so splitting a dataset into its unlabeled and
/// labeled parts reproduces the total bit for bit.
pub fn dataset_loss(dataset: &Dataset, estimates: &[FlowEstimate], cfg: &LossConfig) -> Result<f64> {
    if estimates.len() != dataset.len() {
        return Err(Error::RecordMismatch(format!(
            "{} estimates for {} samples",
            estimates.len(),
            dataset.len()
        )));
    }
    let per_sample: Vec<f64> = dataset
        .samples()
        .par_iter()
        .zip(estimates)
        .map(|(s, e)| semi_supervised_sample_loss(s, e, cfg).map(|b| b.total))
        .collect::<Result<_>>()?;
    let (mut unlabeled, mut labeled) = (0.0, 0.0);
    for (s, v) in dataset.samples().iter().zip(per_sample) {
        if s.is_labeled() {
            labeled += v;
        } else {
            unlabeled += v;
        }
    }
    Ok(unlabeled + labeled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(w, h, 3, |_, _, _| rng.gen::<f64>())
    }

    fn smooth_texture(w: usize, h: usize, shift: f64) -> Image {
        Image::from_fn(w, h, 3, |x, y, c| {
            let (x, y) = (x as f64 - shift, y as f64);
            0.5 + 0.2 * (0.7 * x + 0.3 * c as f64).sin() * (0.5 * y).cos() + 0.15 * (0.31 * x + 0.83 * y).sin()
        })
    }

    #[test]
    fn photometric_identity_and_unit_gap() {
        let a = noise(8, 8, 1);
        let z = FlowField::zeros(8, 8);
        let none = OcclusionMask::none(8, 8);
        let t = photometric_terms(&a, &a, &z, &none, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(t.l1, 0.0);
        assert!(t.ssim.abs() < 1e-12);
        assert_eq!(t.census, 0.0);

        let mut cfg = LossConfig::default();
        cfg.census_weights = [1.0, 0.0, 0.0];
        let zero = Image::constant(8, 8, 3, 0.0);
        let one = Image::constant(8, 8, 3, 1.0);
        assert_eq!(photometric_level(&zero, &one, &z, &none, &cfg).unwrap(), 1.0);
    }

    #[test]
    fn photometric_all_occluded_is_zero() {
        let a = noise(6, 6, 2);
        let b = noise(6, 6, 3);
        let occ = OcclusionMask::new(6, 6, vec![true; 36]).unwrap();
        let cfg = LossConfig::l1_ssim_phase();
        assert_eq!(photometric_level(&a, &b, &FlowField::zeros(6, 6), &occ, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn census_prefers_true_shift() {
        let d = 2.0;
        let i1 = smooth_texture(24, 16, 0.0);
        let i2 = smooth_texture(24, 16, d);
        let cfg = LossConfig::default();
        let none = OcclusionMask::none(24, 16);
        // exclude out-of-frame targets for the true flow
        let occ = OcclusionMask::new(24, 16, (0..16).flat_map(|_| (0..24).map(|x| x >= 21)).collect()).unwrap();
        let good = photometric_level(&i1, &i2, &FlowField::constant(24, 16, [d, 0.0]), &occ, &cfg).unwrap();
        let bad = photometric_level(&i1, &i2, &FlowField::zeros(24, 16), &none, &cfg).unwrap();
        assert!(good < 1e-12, "{good}");
        assert!(good < bad);
    }

    #[test]
    fn photometric_ignores_occluded_content() {
        let i1 = noise(10, 10, 4);
        let mut i2 = noise(10, 10, 5);
        let flow = FlowField::zeros(10, 10);
        let flags: Vec<bool> = (0..100).map(|i| i % 10 >= 7).collect();
        let occ = OcclusionMask::new(10, 10, flags).unwrap();
        let mut cfg = LossConfig::default();
        cfg.census_weights = [1.0, 0.0, 0.0];
        let before = photometric_level(&i1, &i2, &flow, &occ, &cfg).unwrap();
        i2 = Image::from_fn(10, 10, 3, |x, y, c| if x >= 7 { 0.0 } else { i2.get(x, y, c) });
        let after = photometric_level(&i1, &i2, &flow, &occ, &cfg).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn smoothness_cases() {
        let cfg = LossConfig::default();
        let img = noise(9, 7, 6);
        let affine = FlowField::from_fn(9, 7, |x, y| [0.5 * x as f64 - 0.2 * y as f64 + 3.0, 0.1 * y as f64 - 1.0]);
        assert!(smoothness_level(&affine, &img, &cfg).unwrap().abs() < 1e-12);

        // u = x^2 on a constant 1-row strip: W - 2 interior second differences of 2
        let w = 10;
        let quad = FlowField::from_fn(w, 1, |x, _| [(x * x) as f64, 0.0]);
        let flat = Image::constant(w, 1, 3, 0.5);
        let expect = 2.0 * (w - 2) as f64 / (2.0 * w as f64);
        assert!((smoothness_level(&quad, &flat, &cfg).unwrap() - expect).abs() < 1e-12);

        let edges = Image::from_fn(w, 1, 3, |x, _, _| x as f64 / (w - 1) as f64);
        assert!(smoothness_level(&quad, &edges, &cfg).unwrap() < expect);
    }

    #[test]
    fn supervised_scalar_cases() {
        let cfg = LossConfig::default();
        let gt = FlowField::from_fn(64, 64, |x, y| [(x as f64 * 0.1).sin(), (y as f64 * 0.2).cos()]);
        let exact = FlowPyramid::build(&gt, 6);
        let expect = (0.32 + 0.08 + 0.02 + 0.01 + 0.005) * 0.01f64.powf(0.4);
        assert!((supervised_loss(&exact, &gt, &cfg).unwrap() - expect).abs() < 1e-12);

        let mut only2 = cfg.clone();
        only2.w_sup = [0.32, 0.0, 0.0, 0.0, 0.0];
        let mut off = exact.clone();
        for v in off.level_mut(2).uv_mut().chunks_exact_mut(2) {
            v[0] += 3.0;
            v[1] += 4.0;
        }
        let expect = 0.32 * 7.01f64.powf(0.4);
        assert!((supervised_loss(&off, &gt, &only2).unwrap() - expect).abs() < 1e-12);

        let mut l1 = only2.clone();
        l1.q = 1.0;
        l1.eps = 1e-12;
        let v = supervised_loss(&off, &gt, &l1).unwrap();
        assert!((v - 0.32 * 7.0).abs() < 1e-9);
    }

    #[test]
    fn supervised_respects_validity() {
        let cfg = LossConfig::default();
        let valid: Vec<bool> = (0..64 * 64).map(|i| (i / 64) < 32).collect();
        let gt = FlowField::zeros(64, 64).with_valid(valid).unwrap();
        // garbage in the invalid half must not matter
        let est = FlowField::from_fn(64, 64, |_, y| if y < 32 { [0.0, 0.0] } else { [50.0, -9.0] });
        let pyr = FlowPyramid::build(&est, 6);
        let v = supervised_levels(&pyr, &gt, &cfg).unwrap();
        for (k, lv) in v.iter().enumerate().take(4) {
            assert!((lv - 0.01f64.powf(0.4)).abs() < 1e-12, "level {}", k + 2);
        }
    }

    fn sample(seed: u64, labeled: bool) -> (Sample, FlowEstimate) {
        let i1 = noise(32, 32, seed);
        let i2 = noise(32, 32, seed + 100);
        let gt = FlowField::constant(32, 32, [1.0, 0.5]);
        let s = Sample::new(format!("s{seed}"), i1, i2, labeled.then_some(gt), "g").unwrap();
        let est = FlowEstimate {
            forward: FlowField::from_fn(32, 32, |x, _| [0.05 * x as f64, 0.2]),
            backward: FlowField::constant(32, 32, [-0.3, 0.1]),
        };
        (s, est)
    }

    #[test]
    fn unsupervised_identity_sample_is_zero() {
        let img = noise(32, 32, 7);
        let s = Sample::new("id", img.clone(), img, None, "g").unwrap();
        let z = FlowEstimate {
            forward: FlowField::zeros(32, 32),
            backward: FlowField::zeros(32, 32),
        };
        let b = semi_supervised_sample_loss(&s, &z, &LossConfig::default()).unwrap();
        assert_eq!(b.total, 0.0);
    }

    #[test]
    fn unsupervised_recombines_components() {
        let cfg = LossConfig::default();
        let (s, est) = sample(1, false);
        let inputs = LossInputs::build(&s, &est, &cfg).unwrap();
        let b = unsupervised_loss(&inputs, &cfg).unwrap();
        let pf = photometric_loss(&inputs.frame1, &inputs.frame2, &inputs.forward, &inputs.occ_forward, &cfg).unwrap();
        let pb = photometric_loss(&inputs.frame2, &inputs.frame1, &inputs.backward, &inputs.occ_backward, &cfg).unwrap();
        let sf = smoothness_loss(&inputs.forward, &inputs.frame1, &cfg).unwrap();
        let sb = smoothness_loss(&inputs.backward, &inputs.frame2, &cfg).unwrap();
        let manual = (pf + pb) / 2.0 + cfg.lambda_sm * (sf + sb) / 2.0;
        assert!((b.total - manual).abs() < 1e-12);
        assert!(b.smoothness > 0.0);

        let mut double = cfg.clone();
        double.lambda_sm *= 2.0;
        let b2 = unsupervised_loss(&inputs, &double).unwrap();
        assert_eq!(b2.total - b2.photometric, 2.0 * (b.total - b.photometric));

        // levels recomputed one by one
        let mut sum = 0.0;
        for (k, &l) in LOSS_LEVELS.iter().enumerate() {
            sum += cfg.w_ph[k]
                * photometric_level(
                    inputs.frame1.level(l),
                    inputs.frame2.level(l),
                    inputs.forward.level(l),
                    &inputs.occ_forward[l],
                    &cfg,
                )
                .unwrap();
        }
        assert!((sum - pf).abs() < 1e-12);

        let mut single = cfg.clone();
        single.w_ph = [0.0, 0.0, 1.0, 0.0, 0.0];
        let iso = photometric_loss(&inputs.frame1, &inputs.frame2, &inputs.forward, &inputs.occ_forward, &single).unwrap();
        let direct = photometric_level(
            inputs.frame1.level(4),
            inputs.frame2.level(4),
            inputs.forward.level(4),
            &inputs.occ_forward[4],
            &cfg,
        )
        .unwrap();
        assert_eq!(iso, direct);
    }

    #[test]
    fn labeled_sample_uses_scaled_supervised() {
        let cfg = LossConfig::default();
        let (s, est) = sample(2, true);
        let pyr = FlowPyramid::build(&est.forward, 6);
        let sup = supervised_loss(&pyr, s.label.as_ref().unwrap(), &cfg).unwrap();
        let b = semi_supervised_sample_loss(&s, &est, &cfg).unwrap();
        assert_eq!(b.total, sup);
        let mut a2 = cfg.clone();
        a2.alpha = 2.0;
        assert_eq!(semi_supervised_sample_loss(&s, &est, &a2).unwrap().total, 2.0 * sup);
    }

    #[test]
    fn dataset_loss_cases() {
        let cfg = LossConfig::default();
        assert_eq!(dataset_loss(&Dataset::default(), &[], &cfg).unwrap(), 0.0);

        let pairs: Vec<_> = (0..4).map(|i| sample(10 + i, i >= 2)).collect();
        let (samples, ests): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let ds = Dataset::new(samples.clone()).unwrap();
        let total = dataset_loss(&ds, &ests, &cfg).unwrap();
        let hand: f64 = samples
            .iter()
            .zip(&ests)
            .map(|(s, e)| semi_supervised_sample_loss(s, e, &cfg).unwrap().total)
            .sum();
        assert!((total - hand).abs() < 1e-12);
        assert!(dataset_loss(&ds, &ests[..3], &cfg).is_err());
    }
}

//! Synthetic frame pairs with exact ground-truth flow and occlusion.
//!
//! Frames are sampled from a procedural value-noise texture defined on the
//! whole plane, so the second frame is an exact resampling of the first
//! through the inverse motion and no content has to be invented at the
//! borders. An optional rectangular occluder carries its own texture and
//! translation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::bilinear_sample;
use crate::types::{Dataset, FlowField, Image, OcclusionMask, Sample};

pub const MIN_DIM: usize = 32;
/// Occluder area fraction at difficulty 1.
pub const MAX_OCCLUDER_FRACTION: f64 = 0.3;
pub const MIN_MOTION: f64 = 1.0;
pub const MAX_MOTION: f64 = 8.0;

/// Background motion model. Affine maps `p -> A p + t` with
/// `matrix = [[a11, a12, tx], [a21, a22, ty]]` in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motion {
    Translate { dx: f64, dy: f64 },
    Affine { matrix: [[f64; 3]; 2] },
}

impl Motion {
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        match *self {
            Motion::Translate { dx, dy } => (x + dx, y + dy),
            Motion::Affine { matrix: m } => (
                m[0][0] * x + m[0][1] * y + m[0][2],
                m[1][0] * x + m[1][1] * y + m[1][2],
            ),
        }
    }

    pub fn inverse(&self, x: f64, y: f64) -> (f64, f64) {
        match *self {
            Motion::Translate { dx, dy } => (x - dx, y - dy),
            Motion::Affine { matrix: m } => {
                let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                let (bx, by) = (x - m[0][2], y - m[1][2]);
                ((m[1][1] * bx - m[0][1] * by) / det, (-m[1][0] * bx + m[0][0] * by) / det)
            }
        }
    }

    fn is_invertible(&self) -> bool {
        match *self {
            Motion::Translate { .. } => true,
            Motion::Affine { matrix: m } => (m[0][0] * m[1][1] - m[0][1] * m[1][0]).abs() > 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl Rect {
    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x && x < self.x + self.width && y >= self.y && y < self.y + self.height
    }

    fn shifted(&self, d: [f64; 2]) -> Rect {
        Rect {
            x: self.x + d[0],
            y: self.y + d[1],
            ..*self
        }
    }
}

/// Textured rectangle translating independently of the background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Occluder {
    pub rect: Rect,
    pub motion: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    /// Period in pixels of the coarsest noise octave.
    pub texture_scale: f64,
    pub motion: Motion,
    pub occluder: Option<Occluder>,
    pub difficulty: f64,
    pub seed: u64,
    pub group: String,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width < MIN_DIM || self.height < MIN_DIM {
            return Err(Error::InvalidConfig(format!(
                "synthetic frames must be at least {MIN_DIM}x{MIN_DIM}, got {}x{}",
                self.width, self.height
            )));
        }
        if !(0.0..=1.0).contains(&self.difficulty) {
            return Err(Error::InvalidConfig(format!("difficulty {} outside [0, 1]", self.difficulty)));
        }
        if !(self.texture_scale >= 1.0) {
            return Err(Error::InvalidConfig("texture_scale must be >= 1".into()));
        }
        if !self.motion.is_invertible() {
            return Err(Error::InvalidConfig("affine motion is singular".into()));
        }
        let limit = self.width as f64 / 4.0;
        let (w, h) = ((self.width - 1) as f64, (self.height - 1) as f64);
        for (x, y) in [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)] {
            let (tx, ty) = self.motion.apply(x, y);
            if (tx - x).hypot(ty - y) > limit {
                return Err(Error::InvalidConfig(format!("motion exceeds width/4 = {limit} px")));
            }
        }
        if let Some(o) = &self.occluder {
            if o.motion[0].hypot(o.motion[1]) > limit {
                return Err(Error::InvalidConfig(format!("occluder motion exceeds width/4 = {limit} px")));
            }
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `index`-th sample derived from a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Multi-octave value noise over the plane, three channels in `[0, 1]`.
#[derive(Debug, Clone, Copy)]
struct ValueNoise {
    seed: u64,
    scale: f64,
}

impl ValueNoise {
    const OCTAVES: u32 = 3;

    fn lattice(&self, ix: i64, iy: i64, octave: u32, channel: usize) -> f64 {
        let mut h = self.seed ^ (octave as u64) << 56 ^ (channel as u64) << 60;
        h = splitmix64(h ^ ix as u64);
        h = splitmix64(h ^ (iy as u64).wrapping_mul(0x9E37_79B9));
        (h >> 11) as f64 / (1u64 << 53) as f64
    }

    fn octave(&self, x: f64, y: f64, octave: u32, channel: usize) -> f64 {
        let fade = |t: f64| t * t * t * (t * (t * 6.0 - 15.0) + 10.0);
        let (x0, y0) = (x.floor(), y.floor());
        let (tx, ty) = (fade(x - x0), fade(y - y0));
        let (ix, iy) = (x0 as i64, y0 as i64);
        let v00 = self.lattice(ix, iy, octave, channel);
        let v10 = self.lattice(ix + 1, iy, octave, channel);
        let v01 = self.lattice(ix, iy + 1, octave, channel);
        let v11 = self.lattice(ix + 1, iy + 1, octave, channel);
        let top = v00 + tx * (v10 - v00);
        let bottom = v01 + tx * (v11 - v01);
        top + ty * (bottom - top)
    }

    fn scalar(&self, x: f64, y: f64, channel: usize) -> f64 {
        let mut sum = 0.0;
        let mut norm = 0.0;
        let mut amp = 1.0;
        let mut period = self.scale;
        for o in 0..Self::OCTAVES {
            sum += amp * self.octave(x / period, y / period, o, channel);
            norm += amp;
            amp *= 0.5;
            period = (period * 0.5).max(2.0);
        }
        // stretch the mid-range contrast of the averaged octaves
        (0.5 + 1.8 * (sum / norm - 0.5)).clamp(0.0, 1.0)
    }

    fn rgb(&self, x: f64, y: f64) -> [f64; 3] {
        let lum = self.scalar(x, y, 3);
        [0, 1, 2].map(|c| 0.7 * lum + 0.3 * self.scalar(x, y, c))
    }
}

/// A generated sample together with its full ground truth.
#[derive(Debug, Clone)]
pub struct SynthSample {
    /// Carries the forward ground truth as its label.
    pub sample: Sample,
    pub gt_forward: FlowField,
    pub gt_backward: FlowField,
    /// Frame-1 pixels whose content is not visible in frame 2: covered by
    /// the occluder in frame 2 only, or moved out of the frame.
    pub gt_occlusion: OcclusionMask,
    pub difficulty: f64,
}

impl SynthSample {
    /// The sample with its label removed.
    pub fn unlabeled(&self) -> Sample {
        Sample {
            label: None,
            ..self.sample.clone()
        }
    }
}

pub fn gen_sample(id: &str, spec: &SynthSpec) -> Result<SynthSample> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let background = ValueNoise {
        seed: derive_seed(spec.seed, 1),
        scale: spec.texture_scale,
    };
    let patch = ValueNoise {
        seed: derive_seed(spec.seed, 2),
        scale: (spec.texture_scale * 0.5).max(2.0),
    };
    let occ_rect = spec.occluder.map(|o| o.rect);
    let occ_rect2 = spec.occluder.map(|o| o.rect.shifted(o.motion));
    let occ_motion = spec.occluder.map_or([0.0, 0.0], |o| o.motion);
    let in_rect = |r: Option<Rect>, x: f64, y: f64| r.is_some_and(|r| r.contains(x, y));

    // frame 2 and backward flow are rendered from the texture directly
    let mut f2 = Vec::with_capacity(w * h * 3);
    let mut bwd = Vec::with_capacity(2 * w * h);
    for y in 0..h {
        for x in 0..w {
            let (px, py) = (x as f64, y as f64);
            let (rgb2, back) = if in_rect(occ_rect2, px, py) {
                let r = occ_rect.unwrap();
                let (sx, sy) = (px - occ_motion[0], py - occ_motion[1]);
                (patch.rgb(sx - r.x, sy - r.y), [-occ_motion[0], -occ_motion[1]])
            } else {
                let (sx, sy) = spec.motion.inverse(px, py);
                (background.rgb(sx, sy), [sx - px, sy - py])
            };
            f2.extend_from_slice(&rgb2);
            bwd.extend_from_slice(&back);
        }
    }
    let frame2 = Image::new(w, h, 3, f2)?;

    // frame 1 resamples frame 2 wherever its content stays visible, so the
    // ground truth warp carries no interpolation error
    let mut f1 = Vec::with_capacity(w * h * 3);
    let mut fwd = Vec::with_capacity(2 * w * h);
    let mut occluded = Vec::with_capacity(w * h);
    let (max_x, max_y) = ((w - 1) as f64, (h - 1) as f64);
    for y in 0..h {
        for x in 0..w {
            let (px, py) = (x as f64, y as f64);
            let on_patch = in_rect(occ_rect, px, py);
            let flow = if on_patch {
                occ_motion
            } else {
                let (tx, ty) = spec.motion.apply(px, py);
                [tx - px, ty - py]
            };
            fwd.extend_from_slice(&flow);
            let (tx, ty) = (px + flow[0], py + flow[1]);
            let leaves = !(0.0..=max_x).contains(&tx) || !(0.0..=max_y).contains(&ty);
            let covered = !on_patch && in_rect(occ_rect2, tx, ty);
            occluded.push(leaves || covered);
            let rgb1 = if leaves || covered {
                if on_patch {
                    let r = occ_rect.unwrap();
                    patch.rgb(px - r.x, py - r.y)
                } else {
                    background.rgb(px, py)
                }
            } else {
                let v = bilinear_sample(&frame2, tx, ty);
                [v.channel(0), v.channel(1), v.channel(2)]
            };
            f1.extend_from_slice(&rgb1);
        }
    }

    let frame1 = Image::new(w, h, 3, f1)?;
    let gt_forward = FlowField::new(w, h, fwd, None)?;
    let gt_backward = FlowField::new(w, h, bwd, None)?;
    Ok(SynthSample {
        sample: Sample::new(id, frame1, frame2, Some(gt_forward.clone()), spec.group.clone())?,
        gt_forward,
        gt_backward,
        gt_occlusion: OcclusionMask::new(w, h, occluded)?,
        difficulty: spec.difficulty,
    })
}

/// How per-sample difficulty is drawn across a generated dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifficultyCurve {
    /// Independent uniform draws in `[0, 1]`.
    Uniform,
    /// Evenly spaced from 0 to 1 in sample order.
    Linear,
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub count: usize,
    pub width: usize,
    pub height: usize,
    pub texture_scale: f64,
    pub difficulty: DifficultyCurve,
    /// Consecutive samples sharing a group key.
    pub group_size: usize,
    pub master_seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            count: 50,
            width: 64,
            height: 64,
            texture_scale: 12.0,
            difficulty: DifficultyCurve::Uniform,
            group_size: 1,
            master_seed: 0,
        }
    }
}

/// Sample spec for a given difficulty: motion magnitude grows linearly from
/// 1 to 8 px (capped at an eighth of the smaller side) and the occluder
/// area from 0 to 30% of the frame.
pub fn spec_for_difficulty(
    width: usize,
    height: usize,
    texture_scale: f64,
    difficulty: f64,
    seed: u64,
    group: String,
) -> SynthSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
    let max_motion = MAX_MOTION.min(width.min(height) as f64 / 8.0).max(MIN_MOTION);
    let magnitude = MIN_MOTION + (max_motion - MIN_MOTION) * difficulty;
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
    let (dx, dy) = (magnitude * angle.cos(), magnitude * angle.sin());

    // mild rotation and zoom about the frame center, growing with difficulty
    let theta = rng.gen_range(-1.0..1.0) * 0.02 * difficulty;
    let zoom = 1.0 + rng.gen_range(-1.0..1.0) * 0.02 * difficulty;
    let (cx, cy) = ((width - 1) as f64 / 2.0, (height - 1) as f64 / 2.0);
    let (a, b) = (zoom * theta.cos(), zoom * theta.sin());
    let matrix = [
        [a, -b, cx - a * cx + b * cy + dx],
        [b, a, cy - b * cx - a * cy + dy],
    ];

    let area = MAX_OCCLUDER_FRACTION * difficulty * (width * height) as f64;
    let occluder = (area >= 4.0).then(|| {
        let aspect = rng.gen_range(0.6..1.6);
        let ow = (area * aspect).sqrt().min(width as f64 - 2.0);
        let oh = (area / ow).min(height as f64 - 2.0);
        let ox = rng.gen_range(0.0..(width as f64 - ow)).floor();
        let oy = rng.gen_range(0.0..(height as f64 - oh)).floor();
        let turn = angle + std::f64::consts::PI + rng.gen_range(-0.5..0.5) * std::f64::consts::PI;
        Occluder {
            rect: Rect {
                x: ox,
                y: oy,
                width: ow.round(),
                height: oh.round(),
            },
            motion: [magnitude * turn.cos(), magnitude * turn.sin()],
        }
    });

    SynthSpec {
        width,
        height,
        texture_scale,
        motion: Motion::Affine { matrix },
        occluder,
        difficulty,
        seed,
        group,
    }
}

/// Per-sample specs of a dataset; sample `i` uses seed `derive_seed(master, i)`.
pub fn dataset_specs(spec: &DatasetSpec) -> Vec<(String, SynthSpec)> {
    let n = spec.count;
    (0..n)
        .map(|i| {
            let seed = derive_seed(spec.master_seed, i as u64);
            let difficulty = match spec.difficulty {
                DifficultyCurve::Uniform => ChaCha8Rng::seed_from_u64(seed).gen_range(0.0..=1.0),
                DifficultyCurve::Linear if n > 1 => i as f64 / (n - 1) as f64,
                DifficultyCurve::Linear => 0.0,
                DifficultyCurve::Constant(d) => d,
            };
            let group = format!("g{:04}", i / spec.group_size.max(1));
            let id = format!("s{i:04}");
            let s = spec_for_difficulty(spec.width, spec.height, spec.texture_scale, difficulty, seed, group);
            (id, s)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub samples: Vec<SynthSample>,
}

impl SynthDataset {
    /// Dataset with every label stripped.
    pub fn unlabeled(&self) -> Dataset {
        Dataset::new(self.samples.iter().map(SynthSample::unlabeled).collect()).expect("ids are unique")
    }

    /// Dataset with every sample labeled.
    pub fn labeled(&self) -> Dataset {
        Dataset::new(self.samples.iter().map(|s| s.sample.clone()).collect()).expect("ids are unique")
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Generate a dataset; bit-reproducible for a fixed master seed and
/// independent of the thread count.
pub fn gen_dataset(spec: &DatasetSpec) -> Result<SynthDataset> {
    if spec.count == 0 {
        return Err(Error::InvalidConfig("dataset count must be > 0".into()));
    }
    let samples = dataset_specs(spec)
        .par_iter()
        .map(|(id, s)| gen_sample(id, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthDataset { samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::warp_image;

    fn base_spec(motion: Motion, occluder: Option<Occluder>) -> SynthSpec {
        SynthSpec {
            width: 48,
            height: 40,
            texture_scale: 12.0,
            motion,
            occluder,
            difficulty: 0.5,
            seed: 3,
            group: "g".into(),
        }
    }

    #[test]
    fn zero_motion_gives_identical_frames() {
        let s = gen_sample("a", &base_spec(Motion::Translate { dx: 0.0, dy: 0.0 }, None)).unwrap();
        assert_eq!(s.sample.frame1, s.sample.frame2);
        assert!(s.gt_forward.uv().iter().all(|v| *v == 0.0));
        assert_eq!(s.gt_occlusion.count(), 0);
    }

    #[test]
    fn translation_flow_is_constant() {
        let s = gen_sample("a", &base_spec(Motion::Translate { dx: 3.0, dy: 0.0 }, None)).unwrap();
        for y in 0..40 {
            for x in 0..48 {
                assert_eq!(s.gt_forward.get(x, y), [3.0, 0.0]);
                assert_eq!(s.gt_backward.get(x, y), [-3.0, 0.0]);
            }
        }
        // the three rightmost columns leave the frame
        assert_eq!(s.gt_occlusion.count(), 3 * 40);
    }

    #[test]
    fn occluder_coverage_matches_construction() {
        let occ = Occluder {
            rect: Rect {
                x: 20.0,
                y: 12.0,
                width: 10.0,
                height: 8.0,
            },
            motion: [3.0, 0.0],
        };
        let s = gen_sample("a", &base_spec(Motion::Translate { dx: 0.0, dy: 0.0 }, Some(occ))).unwrap();
        let n = (48 * 40) as f64;
        // static background: the occluder newly covers a 3x8 strip
        let expected = 3.0 * 8.0 / n;
        assert!((s.gt_occlusion.ratio() - expected).abs() <= 2.0 / n);
        assert_eq!(s.gt_forward.get(22, 15), [3.0, 0.0]);
        assert_eq!(s.gt_forward.get(5, 5), [0.0, 0.0]);
    }

    fn warp_mae(s: &SynthSample) -> f64 {
        let warped = warp_image(&s.sample.frame2, &s.gt_forward).unwrap().image;
        let (w, h) = s.sample.dims();
        let mut sum = 0.0;
        let mut n = 0usize;
        for y in 0..h {
            for x in 0..w {
                if s.gt_occlusion.is_occluded(x, y) {
                    continue;
                }
                for c in 0..3 {
                    sum += (warped.get(x, y, c) - s.sample.frame1.get(x, y, c)).abs();
                }
                n += 3;
            }
        }
        sum / n as f64
    }

    #[test]
    fn gt_warp_reproduces_frame1() {
        for motion in [
            Motion::Translate { dx: 3.0, dy: -2.0 },
            Motion::Translate { dx: 2.5, dy: 1.25 },
            Motion::Affine {
                matrix: [[1.01, -0.01, 1.3], [0.01, 1.01, -0.7]],
            },
        ] {
            let s = gen_sample("a", &base_spec(motion, None)).unwrap();
            assert!(warp_mae(&s) < 1e-3);
        }
        let ds = gen_dataset(&DatasetSpec {
            count: 6,
            ..DatasetSpec::default()
        })
        .unwrap();
        for s in &ds.samples {
            let mae = warp_mae(s);
            assert!(mae < 1e-3, "{}: mae {mae}", s.sample.id);
        }
    }

    #[test]
    fn dataset_is_reproducible() {
        let spec = DatasetSpec {
            count: 5,
            ..DatasetSpec::default()
        };
        let a = gen_dataset(&spec).unwrap();
        let b = gen_dataset(&spec).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!(x.sample.frame1, y.sample.frame1);
            assert_eq!(x.sample.frame2, y.sample.frame2);
            assert_eq!(x.gt_forward, y.gt_forward);
        }
        let c = gen_dataset(&DatasetSpec {
            master_seed: 1,
            ..spec
        })
        .unwrap();
        assert_ne!(a.samples[0].sample.frame1, c.samples[0].sample.frame1);
    }

    #[test]
    fn spec_validation() {
        let mut s = base_spec(Motion::Translate { dx: 13.0, dy: 0.0 }, None);
        assert!(s.validate().is_err());
        s.motion = Motion::Translate { dx: 2.0, dy: 0.0 };
        s.width = 16;
        assert!(s.validate().is_err());
    }
}

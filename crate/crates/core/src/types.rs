//! Domain types shared by every other module: rasters, flow fields,
//! occlusion masks, samples and the loss configuration.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Deepest pyramid level used anywhere in the loss stack.
pub const MAX_LEVEL: usize = 6;

/// Levels that carry loss weights, finest first.
pub const LOSS_LEVELS: [usize; 5] = [2, 3, 4, 5, 6];

/// Dimensions of pyramid level `level` for a base of `width`x`height`
/// (ceiling division per halving).
pub fn level_dims(width: usize, height: usize, level: usize) -> (usize, usize) {
    let mut w = width;
    let mut h = height;
    for _ in 0..level {
        w = w.div_ceil(2);
        h = h.div_ceil(2);
    }
    (w, h)
}

/// All pixel coordinates `(x, y)` of pyramid level `level`, row-major.
pub fn pixel_domain(width: usize, height: usize, level: usize) -> Result<Vec<(usize, usize)>> {
    if level > MAX_LEVEL {
        return Err(Error::LevelOutOfRange(level));
    }
    let (w, h) = level_dims(width, height, level);
    Ok((0..h).flat_map(|y| (0..w).map(move |x| (x, y))).collect())
}

/// Dense float raster with 1 or 3 interleaved channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("empty image {width}x{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!("{channels} channels, expected 1 or 3")));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidImage(format!(
                "data length {} != {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::InvalidImage(format!("intensity {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Build from a per-pixel function; values are clamped into `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        assert!(width > 0 && height > 0 && (channels == 1 || channels == 3));
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    let v = f(x, y, c);
                    data.push(if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 });
                }
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn constant(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Self::from_fn(width, height, channels, |_, _, _| value)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Channel values of one pixel.
    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Single-channel image holding the channel mean.
    pub fn gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let inv = 1.0 / self.channels as f64;
        let data = self
            .data
            .chunks_exact(self.channels)
            .map(|px| px.iter().sum::<f64>() * inv)
            .collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    pub fn ensure_same_dims(&self, other: &Image) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }
}

/// Dense per-pixel displacement field in pixels, with an optional validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    uv: Vec<f64>,
    valid: Option<Vec<bool>>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, uv: Vec<f64>, valid: Option<Vec<bool>>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidFlow(format!("empty field {width}x{height}")));
        }
        if uv.len() != 2 * width * height {
            return Err(Error::InvalidFlow(format!(
                "uv length {} != 2x{}x{}",
                uv.len(),
                width,
                height
            )));
        }
        if uv.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidFlow("non-finite displacement".into()));
        }
        if let Some(mask) = &valid {
            if mask.len() != width * height {
                return Err(Error::InvalidFlow(format!(
                    "valid mask length {} != {}",
                    mask.len(),
                    width * height
                )));
            }
        }
        Ok(Self {
            width,
            height,
            uv,
            valid,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::constant(width, height, [0.0, 0.0])
    }

    pub fn constant(width: usize, height: usize, d: [f64; 2]) -> Self {
        Self::from_fn(width, height, |_, _| d)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 2]) -> Self {
        assert!(width > 0 && height > 0);
        let mut uv = Vec::with_capacity(2 * width * height);
        for y in 0..height {
            for x in 0..width {
                let [u, v] = f(x, y);
                assert!(u.is_finite() && v.is_finite(), "non-finite flow at ({x}, {y})");
                uv.push(u);
                uv.push(v);
            }
        }
        Self {
            width,
            height,
            uv,
            valid: None,
        }
    }

    pub fn with_valid(mut self, valid: Vec<bool>) -> Result<Self> {
        if valid.len() != self.width * self.height {
            return Err(Error::InvalidFlow("valid mask length mismatch".into()));
        }
        self.valid = Some(valid);
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn uv(&self) -> &[f64] {
        &self.uv
    }

    pub fn uv_mut(&mut self) -> &mut [f64] {
        &mut self.uv
    }

    pub fn valid_mask(&self) -> Option<&[bool]> {
        self.valid.as_deref()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 2] {
        let i = 2 * (y * self.width + x);
        [self.uv[i], self.uv[i + 1]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, d: [f64; 2]) {
        let i = 2 * (y * self.width + x);
        self.uv[i] = d[0];
        self.uv[i + 1] = d[1];
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid
            .as_ref()
            .is_none_or(|m| m[y * self.width + x])
    }

    /// Number of pixels that count as valid.
    pub fn valid_count(&self) -> usize {
        match &self.valid {
            Some(m) => m.iter().filter(|v| **v).count(),
            None => self.len(),
        }
    }

    pub fn ensure_dims(&self, dims: (usize, usize)) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual: self.dims(),
            });
        }
        Ok(())
    }
}

/// Per-pixel occlusion flags produced by the forward-backward check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OcclusionMask {
    width: usize,
    height: usize,
    occluded: Vec<bool>,
}

impl OcclusionMask {
    pub fn new(width: usize, height: usize, occluded: Vec<bool>) -> Result<Self> {
        if occluded.len() != width * height {
            return Err(Error::InvalidFlow(format!(
                "occlusion mask length {} != {}x{}",
                occluded.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            occluded,
        })
    }

    pub fn none(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            occluded: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn flags(&self) -> &[bool] {
        &self.occluded
    }

    #[inline]
    pub fn is_occluded(&self, x: usize, y: usize) -> bool {
        self.occluded[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.occluded.iter().filter(|o| **o).count()
    }

    /// Occluded fraction of the frame.
    pub fn ratio(&self) -> f64 {
        self.count() as f64 / self.occluded.len() as f64
    }

    /// Intersection over union of the occluded sets; 1 when both are empty.
    pub fn iou(&self, other: &OcclusionMask) -> f64 {
        let mut inter = 0usize;
        let mut union = 0usize;
        for (a, b) in self.occluded.iter().zip(&other.occluded) {
            inter += (*a && *b) as usize;
            union += (*a || *b) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// Two frames, an optional ground-truth forward flow and a group key.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub frame1: Image,
    pub frame2: Image,
    pub label: Option<FlowField>,
    pub group: String,
}

impl Sample {
    pub fn new(
        id: impl Into<String>,
        frame1: Image,
        frame2: Image,
        label: Option<FlowField>,
        group: impl Into<String>,
    ) -> Result<Self> {
        frame1.ensure_same_dims(&frame2)?;
        if let Some(l) = &label {
            l.ensure_dims(frame1.dims())?;
        }
        Ok(Self {
            id: id.into(),
            frame1,
            frame2,
            label,
            group: group.into(),
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frame1.dims()
    }

    pub fn is_labeled(&self) -> bool {
        self.label.is_some()
    }
}

/// Ordered collection of samples with unique ids.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in &samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::InvalidConfig(format!("duplicate sample id `{}`", s.id)));
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.samples.iter().map(|s| s.id.as_str())
    }

    /// Fraction of samples that carry a label.
    pub fn label_ratio(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().filter(|s| s.is_labeled()).count() as f64 / self.samples.len() as f64
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }
}

/// Weights and constants of the loss stack. Defaults are the census-phase
/// training setting; [`LossConfig::l1_ssim_phase`] gives the early-phase
/// distance weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub alpha: f64,
    pub lambda_sm: f64,
    /// Carried for completeness; the augmentation pass is not implemented and
    /// this must stay 0.
    pub lambda_aug: f64,
    pub census_weights: [f64; 3],
    pub w_ph: [f64; 5],
    pub w_sm: [f64; 5],
    pub w_sup: [f64; 5],
    pub delta: f64,
    pub eps: f64,
    pub q: f64,
    pub occ_alpha1: f64,
    pub occ_alpha2: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            lambda_sm: 50.0,
            lambda_aug: 0.0,
            census_weights: [0.0, 0.0, 1.0],
            w_ph: [1.0, 1.0, 1.0, 1.0, 0.0],
            w_sm: [1.0, 0.0, 0.0, 0.0, 0.0],
            w_sup: [0.32, 0.08, 0.02, 0.01, 0.005],
            delta: 10.0,
            eps: 0.01,
            q: 0.4,
            occ_alpha1: 0.01,
            occ_alpha2: 0.5,
        }
    }
}

impl LossConfig {
    /// Distance weights of the first training phase (L1 + SSIM).
    pub fn l1_ssim_phase() -> Self {
        Self {
            census_weights: [0.15, 0.85, 0.0],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.alpha > 0.0) {
            return bad(format!("alpha must be > 0, got {}", self.alpha));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return bad(format!("q must be in (0, 1], got {}", self.q));
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps must be > 0, got {}", self.eps));
        }
        if self.lambda_aug != 0.0 {
            return bad("lambda_aug must be 0: the augmentation term is not supported".into());
        }
        let weights = self
            .census_weights
            .iter()
            .chain(&self.w_ph)
            .chain(&self.w_sm)
            .chain(&self.w_sup)
            .chain([&self.lambda_sm, &self.delta, &self.occ_alpha1, &self.occ_alpha2]);
        for w in weights {
            if !(w.is_finite() && *w >= 0.0) {
                return bad(format!("weights must be finite and >= 0, got {w}"));
            }
        }
        Ok(())
    }
}

/// Label ratio `r`: fraction of the candidate set that receives labels.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Budget(f64);

impl Budget {
    pub fn new(ratio: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&ratio) {
            return Err(Error::InvalidConfig(format!("label ratio {ratio} outside [0, 1]")));
        }
        Ok(Self(ratio))
    }

    pub fn ratio(self) -> f64 {
        self.0
    }

    /// Number of samples to label out of `n`, rounding halves up.
    pub fn count(self, n: usize) -> usize {
        let k = (self.0 * n as f64 + 0.5 + 1e-9).floor() as usize;
        k.min(n)
    }
}

impl TryFrom<f64> for Budget {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        Budget::new(v)
    }
}

impl From<Budget> for f64 {
    fn from(b: Budget) -> f64 {
        b.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pixel_domain_sizes() {
        assert_eq!(pixel_domain(8, 4, 0).unwrap().len(), 32);
        assert_eq!(pixel_domain(8, 4, 1).unwrap().len(), 8);
        // ceil(5/2) = 3 in both directions
        let d = pixel_domain(5, 5, 1).unwrap();
        assert_eq!(d.len(), 9);
        assert!(d.contains(&(2, 2)));
        assert!(!d.contains(&(3, 0)));
        assert!(matches!(pixel_domain(8, 8, 7), Err(Error::LevelOutOfRange(7))));
    }

    #[test]
    fn level_dims_follow_ceiling_halving() {
        for (w, h) in [(64, 48), (37, 19), (1, 1), (100, 3)] {
            for l in 0..MAX_LEVEL {
                let (wl, hl) = level_dims(w, h, l);
                assert_eq!(level_dims(w, h, l + 1), (wl.div_ceil(2), hl.div_ceil(2)));
                let n = wl * hl;
                let n1 = pixel_domain(w, h, l + 1).unwrap().len();
                // the extra row/column from ceiling is the perimeter slack
                assert!(n1 <= n.div_ceil(4) + wl.div_ceil(2) + hl.div_ceil(2));
            }
        }
    }

    #[test]
    fn loss_config_defaults_round_trip_exactly() {
        let json = serde_json::to_string(&LossConfig::default()).unwrap();
        let back: LossConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back.alpha.to_bits(), 1.0f64.to_bits());
        assert_eq!(back.lambda_sm.to_bits(), 50.0f64.to_bits());
        assert_eq!(back.census_weights, [0.0, 0.0, 1.0]);
        assert_eq!(back.w_sup, [0.32, 0.08, 0.02, 0.01, 0.005]);
        assert_eq!(back.w_ph, [1.0, 1.0, 1.0, 1.0, 0.0]);
        assert_eq!(back.w_sm, [1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(back.delta.to_bits(), 10.0f64.to_bits());
        assert_eq!(back.eps.to_bits(), 0.01f64.to_bits());
        assert_eq!(back.q.to_bits(), 0.4f64.to_bits());
        assert_eq!(back, LossConfig::default());
        // absent keys take the defaults, unknown keys are rejected
        let partial: LossConfig = serde_json::from_str(r#"{"alpha": 2.0}"#).unwrap();
        assert_eq!(partial.lambda_sm, 50.0);
        assert!(serde_json::from_str::<LossConfig>(r#"{"alpah": 2.0}"#).is_err());
    }

    #[test]
    fn loss_config_validation() {
        assert!(LossConfig::default().validate().is_ok());
        assert!(LossConfig::l1_ssim_phase().validate().is_ok());
        let mut c = LossConfig::default();
        c.q = 0.0;
        assert!(c.validate().is_err());
        c = LossConfig::default();
        c.lambda_aug = 0.2;
        assert!(c.validate().is_err());
        c = LossConfig::default();
        c.w_sup[2] = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn budget_counts_round_half_up() {
        assert_eq!(Budget::new(0.5).unwrap().count(4), 2);
        assert_eq!(Budget::new(0.5).unwrap().count(3), 2);
        assert_eq!(Budget::new(0.2).unwrap().count(50), 10);
        assert_eq!(Budget::new(0.0).unwrap().count(7), 0);
        assert_eq!(Budget::new(1.0).unwrap().count(7), 7);
        assert!(Budget::new(1.5).is_err());
        assert!(serde_json::from_str::<Budget>("-0.1").is_err());
    }

    #[test]
    fn image_and_flow_validation() {
        assert!(Image::new(2, 1, 1, vec![0.0, 1.0]).is_ok());
        assert!(Image::new(2, 1, 1, vec![0.0, 1.5]).is_err());
        assert!(Image::new(2, 1, 2, vec![0.0; 4]).is_err());
        assert!(FlowField::new(1, 1, vec![f64::NAN, 0.0], None).is_err());
        assert!(FlowField::new(2, 1, vec![0.0; 3], None).is_err());
        let f = FlowField::zeros(3, 2).with_valid(vec![true, false, true, true, true, true]).unwrap();
        assert_eq!(f.valid_count(), 5);
        assert!(!f.is_valid(1, 0));
    }

    #[test]
    fn sample_requires_matching_dims() {
        let a = Image::constant(4, 4, 3, 0.5);
        let b = Image::constant(4, 3, 3, 0.5);
        assert!(Sample::new("s", a.clone(), b, None, "g").is_err());
        assert!(Sample::new("s", a.clone(), a.clone(), Some(FlowField::zeros(3, 3)), "g").is_err());
        let s = Sample::new("s", a.clone(), a.clone(), None, "g").unwrap();
        assert!(Dataset::new(vec![s.clone(), s]).is_err());
    }
}

//! Direct coarse-to-fine flow optimizer.
//!
//! Stands in for a trained network: the flow field itself is the variable
//! and is fitted by gradient descent on a per-level objective built from
//! the same terms as the training losses (Charbonnier photometric residual,
//! edge-aware second-order smoothness, robust supervised penalty).
//! Gradients are analytic; [`gradcheck`] verifies them against central
//! finite differences.

pub mod gradcheck;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow_ops::{fb_occlusion, upsample_flow_to, FlowPyramid};
use crate::losses::{edge_weights, robust_l1, smoothness_with_weights, FlowEstimate};
use crate::raster::{BilinearTaps, ImagePyramid};
use crate::types::{level_dims, FlowField, Image, LossConfig, OcclusionMask, Sample};

/// Smoothness weight of the optimizer objective. The training-loss weight
/// (50) pins plain gradient descent at the zero-flow kink of the L1
/// second-difference term.
pub const DEFAULT_LAMBDA_SM: f64 = 0.3;

/// Halvings tried before a level is declared converged.
pub const MAX_HALVINGS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub coarsest_level: usize,
    pub finest_level: usize,
    pub iters_per_level: usize,
    /// Initial gradient step, applied to per-pixel gradients (pixels per
    /// unit of per-pixel objective slope).
    pub step: f64,
    pub charbonnier_eps: f64,
    pub lambda_sm: f64,
    pub supervised_weight: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::from_loss(&LossConfig::default())
    }
}

impl OptimizerConfig {
    /// Defaults with the supervised weight taken from `loss`.
    pub fn from_loss(loss: &LossConfig) -> Self {
        Self {
            coarsest_level: 4,
            finest_level: 0,
            iters_per_level: 200,
            step: 2.0,
            charbonnier_eps: 1e-3,
            lambda_sm: DEFAULT_LAMBDA_SM,
            supervised_weight: loss.alpha,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.coarsest_level < self.finest_level || self.coarsest_level > crate::types::MAX_LEVEL {
            return Err(Error::InvalidConfig(format!(
                "need 6 >= coarsest_level ({}) >= finest_level ({})",
                self.coarsest_level, self.finest_level
            )));
        }
        if self.iters_per_level == 0 {
            return Err(Error::InvalidConfig("iters_per_level must be > 0".into()));
        }
        if !(self.step > 0.0) || !(self.charbonnier_eps > 0.0) {
            return Err(Error::InvalidConfig("step and charbonnier_eps must be > 0".into()));
        }
        if !(self.lambda_sm >= 0.0) || !(self.supervised_weight >= 0.0) {
            return Err(Error::InvalidConfig("term weights must be >= 0".into()));
        }
        Ok(())
    }
}

#[inline]
fn charbonnier(x: f64, eps: f64) -> f64 {
    (x * x + eps * eps).sqrt()
}

#[inline]
fn charbonnier_grad(x: f64, eps: f64) -> f64 {
    x / (x * x + eps * eps).sqrt()
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Unweighted values of the three objective terms.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ObjectiveParts {
    pub photometric: f64,
    pub smoothness: f64,
    pub supervised: f64,
}

/// Relative weights of the terms; a zero weight disables a term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermWeights {
    pub photometric: f64,
    pub smoothness: f64,
    pub supervised: f64,
}

impl ObjectiveParts {
    pub fn combine(&self, w: &TermWeights) -> f64 {
        w.photometric * self.photometric + w.smoothness * self.smoothness + w.supervised * self.supervised
    }
}

/// Everything the objective of one pyramid level depends on, with the
/// occlusion mask and edge weights frozen.
#[derive(Debug, Clone)]
pub struct LevelProblem {
    i1: Image,
    i2: Image,
    visible: Vec<bool>,
    edge_x: Vec<f64>,
    edge_y: Vec<f64>,
    label: Option<FlowField>,
    charbonnier_eps: f64,
    sup_eps: f64,
    q: f64,
    weights: TermWeights,
}

impl LevelProblem {
    /// `label` switches on the supervised term.
    pub fn new(
        i1: Image,
        i2: Image,
        occ: Option<&OcclusionMask>,
        label: Option<FlowField>,
        opt: &OptimizerConfig,
        loss: &LossConfig,
    ) -> Result<Self> {
        i1.ensure_same_dims(&i2)?;
        let (w, h) = i1.dims();
        let visible = match occ {
            Some(o) => {
                if o.dims() != (w, h) {
                    return Err(Error::DimensionMismatch {
                        expected: (w, h),
                        actual: o.dims(),
                    });
                }
                o.flags().iter().map(|f| !f).collect()
            }
            None => vec![true; w * h],
        };
        if let Some(l) = &label {
            l.ensure_dims((w, h))?;
        }
        let (edge_x, edge_y) = edge_weights(&i1, loss.delta);
        let weights = TermWeights {
            photometric: 1.0,
            smoothness: opt.lambda_sm,
            supervised: if label.is_some() { opt.supervised_weight } else { 0.0 },
        };
        Ok(Self {
            i1,
            i2,
            visible,
            edge_x,
            edge_y,
            label,
            charbonnier_eps: opt.charbonnier_eps,
            sup_eps: loss.eps,
            q: loss.q,
            weights,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.i1.dims()
    }

    pub fn weights(&self) -> TermWeights {
        self.weights
    }

    pub fn set_weights(&mut self, weights: TermWeights) {
        self.weights = weights;
    }

    pub fn is_labeled(&self) -> bool {
        self.label.is_some()
    }

    fn pixel_count(&self) -> f64 {
        let (w, h) = self.dims();
        (w * h) as f64
    }

    pub fn parts(&self, flow: &FlowField) -> ObjectiveParts {
        let (w, h) = self.dims();
        let ch = self.i1.channels();
        let n = self.pixel_count();

        let mut photometric = 0.0;
        if self.weights.photometric != 0.0 {
            for y in 0..h {
                for x in 0..w {
                    if !self.visible[y * w + x] {
                        continue;
                    }
                    let [u, v] = flow.get(x, y);
                    let taps = BilinearTaps::new(w, h, x as f64 + u, y as f64 + v);
                    for c in 0..ch {
                        let s = taps.interpolate(|px, py| self.i2.get(px, py, c));
                        photometric += charbonnier(self.i1.get(x, y, c) - s, self.charbonnier_eps);
                    }
                }
            }
            photometric /= n;
        }

        let smoothness = if self.weights.smoothness != 0.0 {
            smoothness_with_weights(flow, &self.edge_x, &self.edge_y)
        } else {
            0.0
        };

        let mut supervised = 0.0;
        if let (Some(label), true) = (&self.label, self.weights.supervised != 0.0) {
            for y in 0..h {
                for x in 0..w {
                    if label.is_valid(x, y) {
                        let (a, b) = (flow.get(x, y), label.get(x, y));
                        supervised += robust_l1(a[0] - b[0], a[1] - b[1], self.sup_eps, self.q);
                    }
                }
            }
            supervised /= n;
        }

        ObjectiveParts {
            photometric,
            smoothness,
            supervised,
        }
    }

    /// Weighted objective value.
    pub fn objective(&self, flow: &FlowField) -> f64 {
        self.parts(flow).combine(&self.weights)
    }

    /// Gradients of the three unweighted terms, each `2 * w * h` long in
    /// `(u, v)` interleaved order. Disabled terms yield zeros.
    pub fn part_gradients(&self, flow: &FlowField) -> [Vec<f64>; 3] {
        let (w, h) = self.dims();
        let ch = self.i1.channels();
        let n = self.pixel_count();
        let mut gp = vec![0.0; 2 * w * h];
        let mut gs = vec![0.0; 2 * w * h];
        let mut gq = vec![0.0; 2 * w * h];

        if self.weights.photometric != 0.0 {
            for y in 0..h {
                for x in 0..w {
                    let i = y * w + x;
                    if !self.visible[i] {
                        continue;
                    }
                    let [u, v] = flow.get(x, y);
                    let taps = BilinearTaps::new(w, h, x as f64 + u, y as f64 + v);
                    let (mut du, mut dv) = (0.0, 0.0);
                    for c in 0..ch {
                        let at = |px: usize, py: usize| self.i2.get(px, py, c);
                        let s = taps.interpolate(at);
                        let (sx, sy) = taps.derivatives(at);
                        let r = charbonnier_grad(self.i1.get(x, y, c) - s, self.charbonnier_eps);
                        du -= r * sx;
                        dv -= r * sy;
                    }
                    gp[2 * i] = du / n;
                    gp[2 * i + 1] = dv / n;
                }
            }
        }

        if self.weights.smoothness != 0.0 {
            let scale = 1.0 / (2.0 * n);
            let mut stencil = |a: usize, b: usize, c: usize, weight: f64| {
                for k in 0..2 {
                    let d2 = flow.uv()[2 * a + k] - 2.0 * flow.uv()[2 * b + k] + flow.uv()[2 * c + k];
                    let g = sign(d2) * weight * scale;
                    gs[2 * a + k] += g;
                    gs[2 * b + k] -= 2.0 * g;
                    gs[2 * c + k] += g;
                }
            };
            for y in 0..h {
                for x in 1..w.saturating_sub(1) {
                    let i = y * w + x;
                    stencil(i - 1, i, i + 1, self.edge_x[i]);
                }
            }
            for y in 1..h.saturating_sub(1) {
                for x in 0..w {
                    let i = y * w + x;
                    stencil(i - w, i, i + w, self.edge_y[i]);
                }
            }
        }

        if let (Some(label), true) = (&self.label, self.weights.supervised != 0.0) {
            for y in 0..h {
                for x in 0..w {
                    if !label.is_valid(x, y) {
                        continue;
                    }
                    let i = y * w + x;
                    let (a, b) = (flow.get(x, y), label.get(x, y));
                    let (du, dv) = (a[0] - b[0], a[1] - b[1]);
                    let g = self.q * (du.abs() + dv.abs() + self.sup_eps).powf(self.q - 1.0) / n;
                    gq[2 * i] = g * sign(du);
                    gq[2 * i + 1] = g * sign(dv);
                }
            }
        }
        [gp, gs, gq]
    }

    /// Gradient of the weighted objective.
    pub fn gradient(&self, flow: &FlowField) -> Vec<f64> {
        let [gp, gs, gq] = self.part_gradients(flow);
        let w = self.weights;
        gp.iter()
            .zip(&gs)
            .zip(&gq)
            .map(|((p, s), q)| w.photometric * p + w.smoothness * s + w.supervised * q)
            .collect()
    }
}

/// Trace of one level's descent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DescentTrace {
    /// Objective after initialization and after every accepted step.
    pub values: Vec<f64>,
    pub halvings: usize,
}

/// Fixed-step gradient descent; the step halves whenever a step fails to
/// decrease the objective and the level ends after [`MAX_HALVINGS`]
/// failures in one iteration or after `iters` accepted steps. Every
/// iteration starts again from the full step.
pub fn descend(problem: &LevelProblem, init: FlowField, opt: &OptimizerConfig) -> (FlowField, DescentTrace) {
    let mut flow = init;
    let mut value = problem.objective(&flow);
    let mut trace = DescentTrace {
        values: vec![value],
        halvings: 0,
    };
    // steps act on per-pixel slopes
    let scale = opt.step * problem.pixel_count();
    for _ in 0..opt.iters_per_level {
        let grad = problem.gradient(&flow);
        let mut step = scale;
        let mut accepted = false;
        for attempt in 0..=MAX_HALVINGS {
            let mut cand = flow.clone();
            for (c, g) in cand.uv_mut().iter_mut().zip(&grad) {
                *c -= step * g;
            }
            let v = problem.objective(&cand);
            if v < value {
                flow = cand;
                value = v;
                trace.values.push(v);
                accepted = true;
                break;
            }
            if attempt < MAX_HALVINGS {
                step *= 0.5;
                trace.halvings += 1;
            }
        }
        if !accepted {
            break;
        }
    }
    (flow, trace)
}

/// Coarse-to-fine estimate of forward and backward flow for one sample.
///
/// With `labeled` set and a label present, the forward problem adds the
/// supervised term; the backward direction is always unsupervised.
pub fn optimize_flow(sample: &Sample, labeled: bool, opt: &OptimizerConfig, loss: &LossConfig) -> Result<FlowEstimate> {
    opt.validate()?;
    let (w, h) = sample.dims();
    let min = 1usize << opt.coarsest_level;
    if w < min || h < min {
        return Err(Error::TooSmall {
            width: w,
            height: h,
            level: opt.coarsest_level,
        });
    }
    let p1 = ImagePyramid::build(&sample.frame1, opt.coarsest_level);
    let p2 = ImagePyramid::build(&sample.frame2, opt.coarsest_level);
    let labels = match (&sample.label, labeled) {
        (Some(l), true) => Some(FlowPyramid::build(l, opt.coarsest_level)),
        _ => None,
    };

    let (cw, ch) = level_dims(w, h, opt.coarsest_level);
    let mut fwd = FlowField::zeros(cw, ch);
    let mut bwd = FlowField::zeros(cw, ch);
    for l in (opt.finest_level..=opt.coarsest_level).rev() {
        let (lw, lh) = level_dims(w, h, l);
        if l < opt.coarsest_level {
            fwd = upsample_flow_to(&fwd, lw, lh);
            bwd = upsample_flow_to(&bwd, lw, lh);
        }
        let occ_f = fb_occlusion(&fwd, &bwd, loss)?;
        let occ_b = fb_occlusion(&bwd, &fwd, loss)?;
        let label = labels.as_ref().map(|p| p.level(l).clone());
        let pf = LevelProblem::new(p1.level(l).clone(), p2.level(l).clone(), Some(&occ_f), label, opt, loss)?;
        let pb = LevelProblem::new(p2.level(l).clone(), p1.level(l).clone(), Some(&occ_b), None, opt, loss)?;
        fwd = descend(&pf, fwd, opt).0;
        bwd = descend(&pb, bwd, opt).0;
    }
    for l in (0..opt.finest_level).rev() {
        let (lw, lh) = level_dims(w, h, l);
        fwd = upsample_flow_to(&fwd, lw, lh);
        bwd = upsample_flow_to(&bwd, lw, lh);
    }
    Ok(FlowEstimate {
        forward: fwd,
        backward: bwd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_sample, Motion, SynthSpec};

    fn textured(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, 3, |x, y, c| {
            0.5 + 0.2 * ((x as f64 * 0.7 + c as f64).sin() + (y as f64 * 0.45).cos())
        })
    }

    fn problem(i1: Image, i2: Image, label: Option<FlowField>, lambda_sm: f64) -> LevelProblem {
        let loss = LossConfig::default();
        let opt = OptimizerConfig {
            lambda_sm,
            ..OptimizerConfig::from_loss(&loss)
        };
        LevelProblem::new(i1, i2, None, label, &opt, &loss).unwrap()
    }

    fn mean_epe(a: &FlowField, b: &FlowField, margin: usize) -> f64 {
        let (w, h) = a.dims();
        let mut s = 0.0;
        let mut n = 0.0;
        for y in margin..h - margin {
            for x in margin..w - margin {
                let (p, q) = (a.get(x, y), b.get(x, y));
                s += (p[0] - q[0]).hypot(p[1] - q[1]);
                n += 1.0;
            }
        }
        s / n
    }

    #[test]
    fn zero_residual_closed_form() {
        let img = Image::constant(8, 8, 3, 0.4);
        let p = problem(img.clone(), img, None, 0.3);
        let flow = FlowField::zeros(8, 8);
        let parts = p.parts(&flow);
        assert!((parts.photometric - 3.0 * 1e-3).abs() < 1e-15);
        assert_eq!(parts.smoothness, 0.0);
        assert!(p.gradient(&flow).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn affine_flow_has_no_smoothness() {
        let p = problem(textured(12, 10), textured(12, 10), None, 1.0);
        let flow = FlowField::from_fn(12, 10, |x, y| [0.1 * x as f64 - 0.05 * y as f64 + 0.3, 0.02 * x as f64 + 0.2]);
        assert!(p.parts(&flow).smoothness.abs() < 1e-12);
    }

    #[test]
    fn labeled_at_truth_adds_eps_power() {
        let flow = FlowField::from_fn(10, 10, |x, y| [0.3 * (x as f64).sin(), 0.1 * y as f64]);
        let unlabeled = problem(textured(10, 10), textured(10, 10), None, 0.3);
        let labeled = problem(textured(10, 10), textured(10, 10), Some(flow.clone()), 0.3);
        let loss = LossConfig::default();
        let extra = loss.alpha * loss.eps.powf(loss.q);
        assert!((labeled.objective(&flow) - unlabeled.objective(&flow) - extra).abs() < 1e-12);
    }

    #[test]
    fn doubling_lambda_doubles_smoothness_part() {
        let flow = FlowField::from_fn(9, 9, |x, y| [((x * y) as f64).sqrt(), (x as f64).cos()]);
        let a = problem(textured(9, 9), textured(9, 9), None, 0.3);
        let b = problem(textured(9, 9), textured(9, 9), None, 0.6);
        let (pa, pb) = (a.parts(&flow), b.parts(&flow));
        let da = a.objective(&flow) - pa.photometric;
        let db = b.objective(&flow) - pb.photometric;
        assert!((db - 2.0 * da).abs() < 1e-12);
    }

    #[test]
    fn supervised_gradient_scalar() {
        let (w, h) = (6, 5);
        let label = FlowField::zeros(w, h);
        let mut p = problem(textured(w, h), textured(w, h), Some(label), 0.3);
        p.set_weights(TermWeights {
            photometric: 0.0,
            smoothness: 0.0,
            supervised: 1.0,
        });
        let g = p.gradient(&FlowField::constant(w, h, [1.0, 0.0]));
        let expect = 0.4 * 1.01f64.powf(-0.6) / (w * h) as f64;
        for px in g.chunks(2) {
            assert!((px[0] - expect).abs() < 1e-15);
            assert_eq!(px[1], 0.0);
        }
    }

    #[test]
    fn gradient_oracle() {
        let report = gradcheck::gradient_check(0, 10).unwrap();
        assert_eq!(report.instances.len(), 10);
        assert!(report.passed(), "max relative error {}", report.max_error());
    }

    #[test]
    fn descent_never_increases() {
        let i1 = textured(16, 16);
        let i2 = Image::from_fn(16, 16, 3, |x, y, c| i1.get((x + 1).min(15), y, c));
        let p = problem(i1, i2, None, 0.3);
        let opt = OptimizerConfig::default();
        let (_, trace) = descend(&p, FlowField::zeros(16, 16), &opt);
        assert!(trace.values.len() > 1);
        assert!(trace.values.windows(2).all(|v| v[1] <= v[0]));
    }

    fn translate(dx: f64) -> Sample {
        let spec = SynthSpec {
            width: 64,
            height: 64,
            texture_scale: 12.0,
            motion: Motion::Translate { dx, dy: 0.0 },
            occluder: None,
            difficulty: 0.0,
            seed: 7,
            group: "g".into(),
        };
        gen_sample("t", &spec).unwrap().sample
    }

    #[test]
    fn identical_frames_stay_still() {
        let s = translate(0.0);
        let loss = LossConfig::default();
        let est = optimize_flow(&s, false, &OptimizerConfig::default(), &loss).unwrap();
        assert!(mean_epe(&est.forward, &FlowField::zeros(64, 64), 0) < 0.1);
    }

    #[test]
    fn recovers_constant_shift() {
        let s = translate(3.0);
        let loss = LossConfig::default();
        let opt = OptimizerConfig::default();
        let est = optimize_flow(&s, false, &opt, &loss).unwrap();
        let gt = FlowField::constant(64, 64, [3.0, 0.0]);
        assert!(mean_epe(&est.forward, &gt, 8) < 0.5);

        let strong = OptimizerConfig {
            supervised_weight: 10.0,
            ..opt.clone()
        };
        let labeled = optimize_flow(&s, true, &strong, &loss).unwrap();
        assert!(mean_epe(&labeled.forward, &gt, 0) < mean_epe(&est.forward, &gt, 0));

        let again = optimize_flow(&s, false, &opt, &loss).unwrap();
        assert_eq!(again, est);
    }

    #[test]
    fn rejects_small_and_bad_config() {
        let s = Sample::new("a", textured(8, 8), textured(8, 8), None, "g").unwrap();
        let loss = LossConfig::default();
        assert!(matches!(
            optimize_flow(&s, false, &OptimizerConfig::default(), &loss),
            Err(Error::TooSmall { .. })
        ));
        let bad = OptimizerConfig {
            finest_level: 5,
            ..OptimizerConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = OptimizerConfig {
            iters_per_level: 0,
            ..OptimizerConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}

//! Finite-difference oracle for [`LevelProblem`] gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LevelProblem, OptimizerConfig, TermWeights};
use crate::error::Result;
use crate::raster::BilinearTaps;
use crate::synth::derive_seed;
use crate::types::{FlowField, Image, LossConfig, OcclusionMask};

pub const FD_STEP: f64 = 1e-3;
pub const TOLERANCE: f64 = 1e-4;
pub const INSTANCE_SIZE: usize = 16;

/// Minimum distance kept from every non-differentiable point, so that a
/// central difference of width `2 * FD_STEP` never straddles one.
const KINK_MARGIN: f64 = 0.02;
const MIN_RESIDUAL: f64 = 0.02;
const MIN_LABEL_DIFF: f64 = 0.1;
const MAX_REPAIR_ROUNDS: usize = 10_000;

/// Max relative error per term and for the joint objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceReport {
    pub seed: u64,
    pub photometric: f64,
    pub smoothness: f64,
    pub supervised: f64,
    pub joint: f64,
}

impl InstanceReport {
    pub fn max(&self) -> f64 {
        self.photometric.max(self.smoothness).max(self.supervised).max(self.joint)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub instances: Vec<InstanceReport>,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.instances.iter().map(InstanceReport::max).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_error() < TOLERANCE
    }
}

/// `|g_analytic - g_fd|_inf / |g_fd|_inf`, central differences of width `h`.
pub fn relative_error(problem: &LevelProblem, flow: &FlowField, h: f64) -> f64 {
    let analytic = problem.gradient(flow);
    let mut probe = flow.clone();
    let mut diff: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for k in 0..analytic.len() {
        let orig = probe.uv()[k];
        probe.uv_mut()[k] = orig + h;
        let plus = problem.objective(&probe);
        probe.uv_mut()[k] = orig - h;
        let minus = problem.objective(&probe);
        probe.uv_mut()[k] = orig;
        let fd = (plus - minus) / (2.0 * h);
        diff = diff.max((analytic[k] - fd).abs());
        scale = scale.max(fd.abs());
    }
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Random labeled 16x16 problem with a flow kept away from every kink of
/// the objective (bilinear cell edges, zero residuals, zero second
/// differences, zero label differences).
pub fn random_instance(seed: u64) -> Result<(LevelProblem, FlowField)> {
    let n = INSTANCE_SIZE;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let i1 = Image::from_fn(n, n, 3, |_, _, _| rng.gen_range(0.0..1.0));
    let i2 = Image::from_fn(n, n, 3, |_, _, _| rng.gen_range(0.0..1.0));
    let occ = OcclusionMask::new(n, n, (0..n * n).map(|_| rng.gen_bool(0.1)).collect())?;
    let mut flow = FlowField::from_fn(n, n, |_, _| [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]);
    let mut label = flow.clone();

    for _ in 0..MAX_REPAIR_ROUNDS {
        let bad = violations(&i1, &i2, &flow, &label);
        if bad.is_empty() {
            break;
        }
        for (x, y) in bad {
            flow.set(x, y, [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]);
            let [u, v] = flow.get(x, y);
            label.set(x, y, [u + offset(&mut rng), v + offset(&mut rng)]);
        }
    }
    for y in 0..n {
        for x in 0..n {
            let [u, v] = flow.get(x, y);
            if label.get(x, y) == [u, v] {
                label.set(x, y, [u + offset(&mut rng), v + offset(&mut rng)]);
            }
        }
    }

    let loss = LossConfig::default();
    let opt = OptimizerConfig::from_loss(&loss);
    let problem = LevelProblem::new(i1, i2, Some(&occ), Some(label), &opt, &loss)?;
    Ok((problem, flow))
}

fn offset(rng: &mut ChaCha8Rng) -> f64 {
    let m = rng.gen_range(MIN_LABEL_DIFF..1.0);
    if rng.gen_bool(0.5) {
        m
    } else {
        -m
    }
}

fn near_knot(t: f64, len: usize) -> bool {
    let frac = t - t.floor();
    t < KINK_MARGIN || t > (len - 1) as f64 - KINK_MARGIN || frac < KINK_MARGIN || frac > 1.0 - KINK_MARGIN
}

fn violations(i1: &Image, i2: &Image, flow: &FlowField, label: &FlowField) -> Vec<(usize, usize)> {
    let (w, h) = flow.dims();
    let mut bad = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let [u, v] = flow.get(x, y);
            let (sx, sy) = (x as f64 + u, y as f64 + v);
            let mut flag = near_knot(sx, w) || near_knot(sy, h);
            if !flag {
                let taps = BilinearTaps::new(w, h, sx, sy);
                flag = (0..i1.channels())
                    .any(|c| (i1.get(x, y, c) - taps.interpolate(|px, py| i2.get(px, py, c))).abs() < MIN_RESIDUAL);
            }
            let [a, b] = label.get(x, y);
            flag |= (u - a).abs() < MIN_LABEL_DIFF || (v - b).abs() < MIN_LABEL_DIFF;
            bad[y * w + x] = flag;
        }
    }
    let d2_small = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| {
        (0..2).any(|k| (a[k] - 2.0 * b[k] + c[k]).abs() < KINK_MARGIN)
    };
    for y in 0..h {
        for x in 1..w - 1 {
            if d2_small(flow.get(x - 1, y), flow.get(x, y), flow.get(x + 1, y)) {
                bad[y * w + x] = true;
            }
        }
    }
    for y in 1..h - 1 {
        for x in 0..w {
            if d2_small(flow.get(x, y - 1), flow.get(x, y), flow.get(x, y + 1)) {
                bad[y * w + x] = true;
            }
        }
    }
    (0..w * h).filter(|&i| bad[i]).map(|i| (i % w, i / w)).collect()
}

/// Check one instance: each term alone, then the weighted sum.
pub fn check_instance(seed: u64) -> Result<InstanceReport> {
    let (mut problem, flow) = random_instance(seed)?;
    let joint_weights = problem.weights();
    let mut err = |w: TermWeights| {
        problem.set_weights(w);
        relative_error(&problem, &flow, FD_STEP)
    };
    let photometric = err(TermWeights {
        photometric: 1.0,
        smoothness: 0.0,
        supervised: 0.0,
    });
    let smoothness = err(TermWeights {
        photometric: 0.0,
        smoothness: 1.0,
        supervised: 0.0,
    });
    let supervised = err(TermWeights {
        photometric: 0.0,
        smoothness: 0.0,
        supervised: 1.0,
    });
    let joint = err(joint_weights);
    Ok(InstanceReport {
        seed,
        photometric,
        smoothness,
        supervised,
        joint,
    })
}

/// Run `count` instances with seeds derived from `seed`.
pub fn gradient_check(seed: u64, count: usize) -> Result<GradCheckReport> {
    let instances = (0..count)
        .map(|i| check_instance(derive_seed(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(GradCheckReport { instances })
}

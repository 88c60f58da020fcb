//! Frame-level uncertainty scores and budget-constrained label selection.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow_ops::{fb_occlusion, flow_gradient_magnitude};
use crate::losses::{photometric_loss, FlowEstimate, LossInputs};
use crate::raster::{histogram_cdf_distance, image_gradient, structure_tensor_min_eig};
use crate::types::{Budget, Dataset, LossConfig, Sample};

pub const TEXTURE_WINDOW: usize = 16;
pub const TEXTURE_STRIDE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    PhotoLoss,
    OccRatio,
    FlowGradNorm,
    FlowNorm,
    ImgGradNorm,
    TextureScore,
    ColorChange,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::PhotoLoss,
        Metric::OccRatio,
        Metric::FlowGradNorm,
        Metric::FlowNorm,
        Metric::ImgGradNorm,
        Metric::TextureScore,
        Metric::ColorChange,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::PhotoLoss => "photo_loss",
            Metric::OccRatio => "occ_ratio",
            Metric::FlowGradNorm => "flow_grad_norm",
            Metric::FlowNorm => "flow_norm",
            Metric::ImgGradNorm => "img_grad_norm",
            Metric::TextureScore => "texture_score",
            Metric::ColorChange => "color_change",
        }
    }

    /// Whether the score depends on the flow estimate.
    pub fn needs_flow(self) -> bool {
        matches!(
            self,
            Metric::PhotoLoss | Metric::OccRatio | Metric::FlowGradNorm | Metric::FlowNorm
        )
    }

    /// Ranking key: higher means more uncertain. Rich texture and strong
    /// image gradients make flow easier, so those two are negated.
    pub fn ranking_value(self, raw: f64) -> f64 {
        match self {
            Metric::ImgGradNorm | Metric::TextureScore => -raw,
            _ => raw,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown metric `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub sample_id: String,
    pub metric: Metric,
    pub value: f64,
}

/// Raw score of one sample.
pub fn score(sample: &Sample, est: &FlowEstimate, metric: Metric, cfg: &LossConfig) -> Result<ScoreRecord> {
    let dims = sample.dims();
    est.forward.ensure_dims(dims)?;
    est.backward.ensure_dims(dims)?;
    let value = match metric {
        Metric::PhotoLoss => {
            let inputs = LossInputs::build(sample, est, cfg)?;
            photometric_loss(&inputs.frame1, &inputs.frame2, &inputs.forward, &inputs.occ_forward, cfg)?
        }
        Metric::OccRatio => fb_occlusion(&est.forward, &est.backward, cfg)?.ratio(),
        Metric::FlowGradNorm => flow_gradient_magnitude(&est.forward),
        Metric::FlowNorm => {
            let uv = est.forward.uv();
            uv.chunks(2).map(|d| d[0].hypot(d[1])).sum::<f64>() / (uv.len() / 2) as f64
        }
        Metric::ImgGradNorm => {
            let g = image_gradient(&sample.frame1.gray());
            let (w, h) = dims;
            let mut sum = 0.0;
            for y in 0..h {
                for x in 0..w {
                    let (dx, dy) = g.at(x, y, 0);
                    sum += dx.hypot(dy);
                }
            }
            sum / (w * h) as f64
        }
        Metric::TextureScore => structure_tensor_min_eig(&sample.frame1, TEXTURE_WINDOW, TEXTURE_STRIDE),
        Metric::ColorChange => histogram_cdf_distance(&sample.frame1, &sample.frame2)?,
    };
    if !value.is_finite() {
        return Err(Error::InvalidFlow(format!("{metric} score of `{}` is not finite", sample.id)));
    }
    Ok(ScoreRecord {
        sample_id: sample.id.clone(),
        metric,
        value,
    })
}

/// Scores every sample for each metric. `estimates[i]` belongs to sample i.
pub fn score_dataset(
    dataset: &Dataset,
    estimates: &[FlowEstimate],
    metrics: &[Metric],
    cfg: &LossConfig,
) -> Result<Vec<ScoreRecord>> {
    use rayon::prelude::*;
    if estimates.len() != dataset.len() {
        return Err(Error::RecordMismatch(format!(
            "{} estimates for {} samples",
            estimates.len(),
            dataset.len()
        )));
    }
    let per_sample = dataset
        .samples()
        .par_iter()
        .zip(estimates)
        .map(|(s, e)| metrics.iter().map(|&m| score(s, e, m, cfg)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    // metric-major order
    Ok(metrics
        .iter()
        .enumerate()
        .flat_map(|(k, _)| per_sample.iter().map(move |rs| rs[k].clone()))
        .collect())
}

pub fn write_scores_csv(records: &[ScoreRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sample_id", "metric", "value"])?;
    for r in records {
        w.write_record([r.sample_id.as_str(), r.metric.name(), &r.value.to_string()])?;
    }
    w.into_inner().map_err(|e| Error::io("<memory>", e.into_error()))
}

pub fn read_scores_csv(bytes: &[u8]) -> Result<Vec<ScoreRecord>> {
    let mut r = csv::Reader::from_reader(bytes);
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["sample_id", "metric", "value"] {
        return Err(Error::RecordMismatch(format!("scores header {header:?}")));
    }
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        let value: f64 = row[2]
            .parse()
            .map_err(|_| Error::RecordMismatch(format!("bad score value `{}`", &row[2])))?;
        if !value.is_finite() {
            return Err(Error::RecordMismatch(format!("non-finite score for `{}`", &row[0])));
        }
        out.push(ScoreRecord {
            sample_id: row[0].to_string(),
            metric: row[1].parse()?,
            value,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    Topk,
    Occ2x,
    GroupedTopk,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Random, Strategy::Topk, Strategy::Occ2x, Strategy::GroupedTopk];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Topk => "topk",
            Strategy::Occ2x => "occ2x",
            Strategy::GroupedTopk => "grouped_topk",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown strategy `{s}`")))
    }
}

/// Sample identity as seen by selection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Member {
    pub id: String,
    pub group: String,
}

impl Member {
    pub fn new(id: impl Into<String>, group: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            group: group.into(),
        }
    }
}

pub fn members(dataset: &Dataset) -> Vec<Member> {
    dataset.samples().iter().map(|s| Member::new(&s.id, &s.group)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Selection {
    pub strategy: Strategy,
    pub ratio: Budget,
    pub seed: u64,
    pub chosen: Vec<String>,
}

impl Selection {
    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec_pretty(self)?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let s: Selection = serde_json::from_slice(bytes)?;
        let mut seen = HashSet::new();
        if let Some(d) = s.chosen.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::RecordMismatch(format!("`{d}` chosen twice")));
        }
        Ok(s)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.chosen.iter().any(|c| c == id)
    }
}

/// Indices of `members` ordered from most to least uncertain; ties go to
/// the smaller id.
fn ranking(values: &[f64], members: &[Member]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then_with(|| members[a].id.cmp(&members[b].id)));
    order
}

/// Ranking values aligned with `members`, checked one-to-one against the
/// records of a single metric.
fn aligned_values(records: &[ScoreRecord], members: &[Member]) -> Result<Vec<f64>> {
    let mut by_id: HashMap<&str, &ScoreRecord> = HashMap::new();
    for r in records {
        if by_id.insert(r.sample_id.as_str(), r).is_some() {
            return Err(Error::RecordMismatch(format!("two records for `{}`", r.sample_id)));
        }
    }
    if let Some(first) = records.first() {
        if let Some(r) = records.iter().find(|r| r.metric != first.metric) {
            return Err(Error::RecordMismatch(format!("mixed metrics {} and {}", first.metric, r.metric)));
        }
    }
    if records.len() != members.len() {
        return Err(Error::RecordMismatch(format!(
            "{} records for {} samples",
            records.len(),
            members.len()
        )));
    }
    members
        .iter()
        .map(|m| {
            by_id
                .get(m.id.as_str())
                .map(|r| r.metric.ranking_value(r.value))
                .ok_or_else(|| Error::RecordMismatch(format!("no score for `{}`", m.id)))
        })
        .collect()
}

/// Choose samples to label. `records` hold one metric's scores, one per
/// member; random selection ignores their values but still checks them.
pub fn select(
    records: &[ScoreRecord],
    members: &[Member],
    budget: Budget,
    strategy: Strategy,
    seed: u64,
) -> Result<Selection> {
    let values = aligned_values(records, members)?;
    let n = members.len();
    let k = budget.count(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: Vec<usize> = match strategy {
        Strategy::Random => {
            let mut idx = index::sample(&mut rng, n, k).into_vec();
            idx.sort_unstable();
            idx
        }
        Strategy::Topk => ranking(&values, members).into_iter().take(k).collect(),
        Strategy::Occ2x => {
            let pool: Vec<usize> = ranking(&values, members).into_iter().take((2 * k).min(n)).collect();
            let mut pos = index::sample(&mut rng, pool.len(), k).into_vec();
            pos.sort_unstable();
            pos.into_iter().map(|p| pool[p]).collect()
        }
        Strategy::GroupedTopk => grouped(&values, members, k),
    };
    Ok(Selection {
        strategy,
        ratio: budget,
        seed,
        chosen: picked.into_iter().map(|i| members[i].id.clone()).collect(),
    })
}

/// Whole groups by descending max member score (ties by group name) until
/// the next group would overshoot `k`.
fn grouped(values: &[f64], members: &[Member], k: usize) -> Vec<usize> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for i in ranking(values, members) {
        groups.entry(members[i].group.as_str()).or_default().push(i);
    }
    let mut order: Vec<(&str, Vec<usize>)> = groups.into_iter().collect();
    // members are already in rank order, so the first holds the max
    order.sort_by(|a, b| values[b.1[0]].total_cmp(&values[a.1[0]]).then_with(|| a.0.cmp(b.0)));
    let mut out = Vec::with_capacity(k);
    for (_, g) in order {
        if out.len() + g.len() > k {
            break;
        }
        out.extend(g);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{FlowField, Image};

    fn records(scores: &[(&str, f64)]) -> (Vec<ScoreRecord>, Vec<Member>) {
        let recs = scores
            .iter()
            .map(|&(id, v)| ScoreRecord {
                sample_id: id.into(),
                metric: Metric::OccRatio,
                value: v,
            })
            .collect();
        let mem = scores.iter().map(|&(id, _)| Member::new(id, id)).collect();
        (recs, mem)
    }

    fn sample(frame: Image) -> Sample {
        Sample::new("s", frame.clone(), frame, None, "g").unwrap()
    }

    fn textured() -> Image {
        Image::from_fn(20, 12, 3, |x, y, c| ((x * 7 + y * 3 + c) % 11) as f64 / 10.0)
    }

    #[test]
    fn consistent_zero_flow_scores_zero() {
        let s = sample(textured());
        let est = FlowEstimate {
            forward: FlowField::zeros(20, 12),
            backward: FlowField::zeros(20, 12),
        };
        let cfg = LossConfig::default();
        for m in [Metric::OccRatio, Metric::PhotoLoss, Metric::FlowGradNorm, Metric::FlowNorm] {
            assert_eq!(score(&s, &est, m, &cfg).unwrap().value, 0.0, "{m}");
        }
        assert_eq!(score(&s, &est, Metric::ColorChange, &cfg).unwrap().value, 0.0);
    }

    #[test]
    fn constant_shift_occ_ratio() {
        let s = sample(textured());
        let est = FlowEstimate {
            forward: FlowField::constant(20, 12, [5.0, 0.0]),
            backward: FlowField::constant(20, 12, [-5.0, 0.0]),
        };
        let r = score(&s, &est, Metric::OccRatio, &LossConfig::default()).unwrap();
        assert_eq!(r.value, 0.25);
    }

    #[test]
    fn unit_jacobian_grad_norm() {
        let s = sample(textured());
        let est = FlowEstimate {
            forward: FlowField::from_fn(20, 12, |x, _| [x as f64, 0.0]),
            backward: FlowField::zeros(20, 12),
        };
        let r = score(&s, &est, Metric::FlowGradNorm, &LossConfig::default()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dims_checked() {
        let s = sample(textured());
        let est = FlowEstimate {
            forward: FlowField::zeros(4, 4),
            backward: FlowField::zeros(20, 12),
        };
        assert!(score(&s, &est, Metric::FlowNorm, &LossConfig::default()).is_err());
    }

    #[test]
    fn topk_example() {
        let (r, m) = records(&[("a", 0.9), ("b", 0.5), ("c", 0.7), ("d", 0.1)]);
        let sel = select(&r, &m, Budget::new(0.5).unwrap(), Strategy::Topk, 0).unwrap();
        assert_eq!(sel.chosen, ["a", "c"]);
    }

    #[test]
    fn full_budget_takes_everything() {
        let (r, m) = records(&[("a", 0.9), ("b", 0.5), ("c", 0.7), ("d", 0.1)]);
        for s in Strategy::ALL {
            let mut sel = select(&r, &m, Budget::new(1.0).unwrap(), s, 3).unwrap().chosen;
            sel.sort();
            assert_eq!(sel, ["a", "b", "c", "d"], "{s}");
        }
    }

    #[test]
    fn occ2x_pool() {
        let (r, m) = records(&[("a", 0.9), ("b", 0.5), ("c", 0.7), ("d", 0.1)]);
        let budget = Budget::new(0.5).unwrap();
        let sel = select(&r, &m, budget, Strategy::Occ2x, 11).unwrap();
        assert_eq!(sel.chosen.len(), 2);
        // k = 2, pool = top min(4, 4): every id is eligible
        assert!(sel.chosen.iter().all(|c| ["a", "b", "c", "d"].contains(&c.as_str())));
        assert_eq!(select(&r, &m, budget, Strategy::Occ2x, 11).unwrap(), sel);

        let (r, m) = records(&[("a", 0.9), ("b", 0.5), ("c", 0.7), ("d", 0.1), ("e", 0.0), ("f", 0.2)]);
        for seed in 0..20 {
            let sel = select(&r, &m, Budget::new(0.2).unwrap(), Strategy::Occ2x, seed).unwrap();
            assert_eq!(sel.chosen.len(), 1);
            assert!(["a", "c"].contains(&sel.chosen[0].as_str()));
        }
    }

    #[test]
    fn ties_and_negated_metrics() {
        let (r, m) = records(&[("b", 0.5), ("a", 0.5), ("c", 0.1)]);
        let sel = select(&r, &m, Budget::new(0.34).unwrap(), Strategy::Topk, 0).unwrap();
        assert_eq!(sel.chosen, ["a"]);

        let recs: Vec<ScoreRecord> = [("a", 5.0), ("b", 1.0)]
            .iter()
            .map(|&(id, v)| ScoreRecord {
                sample_id: id.into(),
                metric: Metric::TextureScore,
                value: v,
            })
            .collect();
        let mem = vec![Member::new("a", "a"), Member::new("b", "b")];
        let sel = select(&recs, &mem, Budget::new(0.5).unwrap(), Strategy::Topk, 0).unwrap();
        assert_eq!(sel.chosen, ["b"]);
    }

    #[test]
    fn grouped_keeps_groups_whole() {
        let recs: Vec<ScoreRecord> = [("a1", 0.9), ("a2", 0.1), ("b1", 0.8), ("c1", 0.7), ("c2", 0.6)]
            .iter()
            .map(|&(id, v)| ScoreRecord {
                sample_id: id.into(),
                metric: Metric::PhotoLoss,
                value: v,
            })
            .collect();
        let mem: Vec<Member> = ["a1", "a2", "b1", "c1", "c2"]
            .iter()
            .map(|id| Member::new(*id, &id[..1]))
            .collect();
        let pick = |r: f64| select(&recs, &mem, Budget::new(r).unwrap(), Strategy::GroupedTopk, 0).unwrap().chosen;
        assert_eq!(pick(0.6), ["a1", "a2", "b1"]);
        // k = 2: group a fits, b would overshoot
        assert_eq!(pick(0.4), ["a1", "a2"]);
        assert!(pick(0.2).is_empty());
    }

    #[test]
    fn mismatch_errors() {
        let (r, m) = records(&[("a", 0.9), ("b", 0.5)]);
        let b = Budget::new(0.5).unwrap();
        assert!(matches!(select(&r[..1], &m, b, Strategy::Topk, 0), Err(Error::RecordMismatch(_))));
        let mut other = m.clone();
        other[1].id = "z".into();
        assert!(matches!(select(&r, &other, b, Strategy::Topk, 0), Err(Error::RecordMismatch(_))));
        let mut mixed = r.clone();
        mixed[1].metric = Metric::FlowNorm;
        assert!(matches!(select(&mixed, &m, b, Strategy::Topk, 0), Err(Error::RecordMismatch(_))));
    }

    #[test]
    fn csv_and_json_round_trip() {
        let (r, m) = records(&[("a", 0.1 + 0.2), ("b", 1e-300), ("c", -7.25)]);
        let bytes = write_scores_csv(&r).unwrap();
        assert!(bytes.starts_with(b"sample_id,metric,value\n"));
        assert_eq!(read_scores_csv(&bytes).unwrap(), r);

        let sel = select(&r, &m, Budget::new(0.5).unwrap(), Strategy::Random, 9).unwrap();
        let json = sel.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_slice(&json).unwrap();
        assert_eq!(v["strategy"], "random");
        assert_eq!(v["ratio"], 0.5);
        assert_eq!(v["seed"], 9);
        assert_eq!(Selection::from_json(&json).unwrap(), sel);
    }
}

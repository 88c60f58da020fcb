//! Pipeline commands behind the `alflow` binary.
//!
//! Every command is a plain function over paths so it can be driven from
//! tests and examples as well as the CLI. Output files are written in a
//! fixed order with full-precision numbers; results do not depend on the
//! number of worker threads.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    corr_matrix, epe, fixtures, fl_rate, write_curve_csv, write_metrics_csv, CorrMatrix, CurvePoint, SampleMetrics,
};
use crate::error::{Error, Result};
use crate::estimator::{gradcheck, optimize_flow, OptimizerConfig};
use crate::io::{load_flow, save_flow, save_image, write_file, write_manifest, LoadedManifest, Manifest, ManifestEntry};
use crate::losses::FlowEstimate;
use crate::synth::{gen_dataset, DatasetSpec};
use crate::types::{Budget, Dataset, LossConfig, Sample};
use crate::uncertainty::{
    members, read_scores_csv, score_dataset, select, write_scores_csv, Member, Metric, ScoreRecord, Selection,
    Strategy,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Synth(DatasetSpec),
    Manifest(PathBuf),
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synth(DatasetSpec::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    /// Leading share of the dataset that is scored and may be labeled.
    pub candidate_fraction: f64,
    /// Remaining share; with per-sample optimization it only stays unseen.
    pub non_candidate_fraction: f64,
    pub budgets: Vec<Budget>,
    pub strategies: Vec<Strategy>,
    pub metrics: Vec<Metric>,
    pub seeds: Vec<u64>,
    pub loss: LossConfig,
    pub optimizer: OptimizerConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let budget = |r| Budget::new(r).expect("static budget");
        Self {
            dataset: DatasetSource::default(),
            candidate_fraction: 1.0,
            non_candidate_fraction: 0.0,
            budgets: vec![budget(0.0), budget(0.25), budget(0.5), budget(1.0)],
            strategies: vec![Strategy::Random],
            metrics: vec![Metric::PhotoLoss, Metric::OccRatio, Metric::FlowGradNorm],
            seeds: vec![0, 1, 2],
            loss: LossConfig::default(),
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let (c, nc) = (self.candidate_fraction, self.non_candidate_fraction);
        if !(0.0..=1.0).contains(&c) || !(0.0..=1.0).contains(&nc) || (c + nc - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "split fractions must lie in [0, 1] and sum to 1, got {c} + {nc}"
            )));
        }
        if self.budgets.is_empty() || self.seeds.is_empty() || self.strategies.is_empty() {
            return Err(Error::InvalidConfig("budgets, strategies and seeds must be non-empty".into()));
        }
        if self.metrics.is_empty() && self.strategies.iter().any(|&s| s != Strategy::Random) {
            return Err(Error::InvalidConfig("score-based strategies need at least one metric".into()));
        }
        self.loss.validate()?;
        self.optimizer.validate()
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let cfg: Self = serde_json::from_slice(bytes)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    /// Load the configured dataset; synthetic sets come with labels for
    /// every sample.
    pub fn dataset(&self) -> Result<Dataset> {
        match &self.dataset {
            DatasetSource::Synth(spec) => Ok(gen_dataset(spec)?.labeled()),
            DatasetSource::Manifest(path) => LoadedManifest::load(path)?.load_dataset(),
        }
    }
}

/// Run `f` on a dedicated pool of `threads` workers (0 = rayon default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(f)
}

/// Optimize every sample; `labeled(sample)` switches on the supervised term.
pub fn optimize_all(
    samples: &[Sample],
    labeled: impl Fn(&Sample) -> bool + Sync,
    opt: &OptimizerConfig,
    loss: &LossConfig,
) -> Result<Vec<FlowEstimate>> {
    samples
        .par_iter()
        .map(|s| optimize_flow(s, labeled(s) && s.is_labeled(), opt, loss))
        .collect()
}

/// EPE and Fl of each labeled sample against its ground truth.
pub fn evaluate_all(samples: &[Sample], forward: &[&crate::types::FlowField]) -> Result<Vec<SampleMetrics>> {
    samples
        .par_iter()
        .zip(forward)
        .filter_map(|(s, f)| {
            s.label.as_ref().map(|gt| {
                Ok(SampleMetrics {
                    sample_id: s.id.clone(),
                    epe: epe(f, gt)?,
                    fl: fl_rate(f, gt)?,
                })
            })
        })
        .collect()
}

fn frame_name(id: &str, k: usize) -> String {
    format!("frames/{id}_{k}.png")
}

fn backward_name(id: &str) -> String {
    format!("{id}_bwd.flo")
}

/// Write a synthetic dataset as PNG frames, `.flo` ground truth and a
/// manifest.
pub fn cmd_gen(config: &ExperimentConfig, out_dir: &Path) -> Result<PathBuf> {
    let DatasetSource::Synth(spec) = &config.dataset else {
        return Err(Error::InvalidConfig("gen needs a synth dataset".into()));
    };
    let ds = gen_dataset(spec)?;
    ds.samples.par_iter().try_for_each(|s| {
        let id = &s.sample.id;
        save_image(&out_dir.join(frame_name(id, 1)), &s.sample.frame1)?;
        save_image(&out_dir.join(frame_name(id, 2)), &s.sample.frame2)?;
        save_flow(&out_dir.join(format!("gt/{id}.flo")), &s.gt_forward)
    })?;
    let manifest = Manifest {
        samples: ds
            .samples
            .iter()
            .map(|s| ManifestEntry {
                id: s.sample.id.clone(),
                frame1: frame_name(&s.sample.id, 1),
                frame2: frame_name(&s.sample.id, 2),
                gt: Some(format!("gt/{}.flo", s.sample.id)),
                group: s.sample.group.clone(),
            })
            .collect(),
    };
    let path = out_dir.join("manifest.json");
    write_file(&path, &write_manifest(&manifest)?)?;
    Ok(path)
}

/// Estimate flow for every manifest sample. Samples named in `selection`
/// use their ground truth as labels. Writes `<id>.flo` and `<id>_bwd.flo`.
pub fn cmd_optimize(
    manifest: &Path,
    selection: Option<&Path>,
    config: &ExperimentConfig,
    out_dir: &Path,
) -> Result<()> {
    let loaded = LoadedManifest::load(manifest)?;
    let ds = loaded.load_dataset()?;
    let selection = selection
        .map(|p| Selection::from_json(&fs::read(p).map_err(|e| Error::io(p, e))?))
        .transpose()?;
    let labeled = |s: &Sample| selection.as_ref().is_some_and(|sel| sel.contains(&s.id));
    let est = optimize_all(ds.samples(), labeled, &config.optimizer, &config.loss)?;
    ds.samples().par_iter().zip(&est).try_for_each(|(s, e)| {
        save_flow(&out_dir.join(format!("{}.flo", s.id)), &e.forward)?;
        save_flow(&out_dir.join(backward_name(&s.id)), &e.backward)
    })
}

fn load_estimates(ds: &Dataset, flows_dir: &Path) -> Result<Vec<FlowEstimate>> {
    ds.samples()
        .par_iter()
        .map(|s| {
            Ok(FlowEstimate {
                forward: load_flow(&flows_dir.join(format!("{}.flo", s.id)))?,
                backward: load_flow(&flows_dir.join(backward_name(&s.id)))?,
            })
        })
        .collect()
}

/// Score every manifest sample with `metrics`, reading estimates written by
/// [`cmd_optimize`].
pub fn cmd_score(
    manifest: &Path,
    flows_dir: &Path,
    metrics: &[Metric],
    loss: &LossConfig,
    out_csv: &Path,
) -> Result<Vec<ScoreRecord>> {
    let ds = LoadedManifest::load(manifest)?.load_dataset()?;
    let est = load_estimates(&ds, flows_dir)?;
    let records = score_dataset(&ds, &est, metrics, loss)?;
    write_file(out_csv, &write_scores_csv(&records)?)?;
    Ok(records)
}

fn manifest_members(m: &Manifest) -> Vec<Member> {
    m.samples.iter().map(|e| Member::new(&e.id, &e.group)).collect()
}

fn read_scores(path: &Path) -> Result<Vec<ScoreRecord>> {
    read_scores_csv(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Records of one metric; `metric` may be omitted when the file holds one.
fn records_for(records: Vec<ScoreRecord>, metric: Option<Metric>) -> Result<Vec<ScoreRecord>> {
    let present: BTreeSet<Metric> = records.iter().map(|r| r.metric).collect();
    let metric = match metric {
        Some(m) => m,
        None if present.len() == 1 => *present.iter().next().expect("one metric"),
        None => {
            return Err(Error::InvalidConfig(format!(
                "scores hold {} metrics; pick one with --metric",
                present.len()
            )))
        }
    };
    Ok(records.into_iter().filter(|r| r.metric == metric).collect())
}

pub fn cmd_select(
    scores_csv: &Path,
    metric: Option<Metric>,
    budget: Budget,
    strategy: Strategy,
    seed: u64,
    manifest: &Path,
    out_json: &Path,
) -> Result<Selection> {
    let loaded = LoadedManifest::load(manifest)?;
    let records = records_for(read_scores(scores_csv)?, metric)?;
    let sel = select(&records, &manifest_members(&loaded.manifest), budget, strategy, seed)?;
    write_file(out_json, &sel.to_json()?)?;
    Ok(sel)
}

/// Per-sample EPE and Fl of the forward estimates in `est_dir`.
pub fn cmd_evaluate(est_dir: &Path, manifest: &Path, out_csv: &Path) -> Result<Vec<SampleMetrics>> {
    let ds = LoadedManifest::load(manifest)?.load_dataset()?;
    let forward = ds
        .samples()
        .par_iter()
        .map(|s| load_flow(&est_dir.join(format!("{}.flo", s.id))))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<_> = forward.iter().collect();
    let rows = evaluate_all(ds.samples(), &refs)?;
    write_file(out_csv, &write_metrics_csv(&rows)?)?;
    Ok(rows)
}

/// Correlation matrix over score metrics and per-sample EPE, aligned by id.
pub fn correlation(records: &[ScoreRecord], metrics: &[SampleMetrics]) -> Result<CorrMatrix> {
    let epe_by_id: BTreeMap<&str, f64> = metrics.iter().map(|m| (m.sample_id.as_str(), m.epe)).collect();
    let mut per_metric: BTreeMap<Metric, BTreeMap<&str, f64>> = BTreeMap::new();
    for r in records {
        if per_metric.entry(r.metric).or_default().insert(&r.sample_id, r.value).is_some() {
            return Err(Error::RecordMismatch(format!("two {} scores for `{}`", r.metric, r.sample_id)));
        }
    }
    let ids: Vec<&str> = epe_by_id.keys().copied().collect();
    let mut series = Vec::new();
    for (metric, values) in &per_metric {
        let col = ids
            .iter()
            .map(|id| {
                values
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::RecordMismatch(format!("no {metric} score for `{id}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != ids.len() {
            return Err(Error::RecordMismatch(format!("{metric} scores a sample without metrics")));
        }
        series.push((metric.name().to_string(), col));
    }
    series.push(("epe".to_string(), ids.iter().map(|id| epe_by_id[id]).collect()));
    corr_matrix(&series)
}

pub fn cmd_corr(scores_csvs: &[PathBuf], metrics_csv: &Path, out_csv: &Path) -> Result<CorrMatrix> {
    let mut records = Vec::new();
    for p in scores_csvs {
        records.extend(read_scores(p)?);
    }
    let metrics = crate::analysis::read_metrics_csv(&fs::read(metrics_csv).map_err(|e| Error::io(metrics_csv, e))?)?;
    let m = correlation(&records, &metrics)?;
    write_file(out_csv, &m.to_csv()?)?;
    Ok(m)
}

pub fn cmd_curves(fixture: &str, out_csv: &Path) -> Result<Vec<CurvePoint>> {
    let bytes = fixtures::fixture_csv(fixture)?;
    write_file(out_csv, &bytes)?;
    fixtures::curve_fixture(fixture)
}

pub fn cmd_gradcheck(seed: u64) -> Result<gradcheck::GradCheckReport> {
    let report = gradcheck::gradient_check(seed, 10)?;
    if !report.passed() {
        return Err(Error::GradientCheck(format!(
            "max relative error {:e} >= {:e}",
            report.max_error(),
            gradcheck::TOLERANCE
        )));
    }
    Ok(report)
}

/// One (strategy, metric, budget, seed) arm of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub strategy: Strategy,
    /// `None` for random selection.
    pub metric: Option<Metric>,
    pub ratio: Budget,
    pub seed: u64,
    pub labeled: usize,
    pub epe: f64,
    pub fl: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    /// Candidate-set scores computed on the unlabeled estimates.
    pub scores: Vec<ScoreRecord>,
    /// Candidate-set errors of the unlabeled estimates.
    pub unlabeled: Vec<SampleMetrics>,
    pub corr: CorrMatrix,
    pub runs: Vec<RunResult>,
    /// Curve name to points (`epe` and `fl` averaged over seeds).
    pub curves: BTreeMap<String, Vec<CurvePoint>>,
}

impl ExperimentReport {
    /// Mean EPE of the runs of one arm, in seed order.
    pub fn arm_epe(&self, strategy: Strategy, metric: Option<Metric>, ratio: f64) -> Vec<f64> {
        self.runs
            .iter()
            .filter(|r| r.strategy == strategy && r.metric == metric && r.ratio.ratio() == ratio)
            .map(|r| r.epe)
            .collect()
    }
}

fn curve_name(strategy: Strategy, metric: Option<Metric>) -> String {
    match metric {
        Some(m) => format!("{strategy}_{m}"),
        None => strategy.to_string(),
    }
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Generate (or load), optimize the candidate set without labels, score,
/// select per (strategy, metric, budget, seed), re-optimize the selected
/// samples with labels and evaluate the candidate set.
///
/// Per-sample optimization is independent across samples, so each sample's
/// unlabeled and labeled estimates are computed once and shared by every
/// arm that needs them.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let ds = cfg.dataset()?;
    let n_candidates = Budget::new(cfg.candidate_fraction)?.count(ds.len());
    let candidates = &ds.samples()[..n_candidates];
    if candidates.len() < 2 {
        return Err(Error::InvalidConfig("candidate set needs at least 2 samples".into()));
    }
    if let Some(s) = candidates.iter().find(|s| !s.is_labeled()) {
        return Err(Error::InvalidConfig(format!("candidate `{}` has no ground truth", s.id)));
    }
    let candidate_set = Dataset::new(candidates.to_vec())?;
    let members = members(&candidate_set);

    let unlabeled = optimize_all(candidates, |_| false, &cfg.optimizer, &cfg.loss)?;
    let scores = score_dataset(&candidate_set, &unlabeled, &cfg.metrics, &cfg.loss)?;
    let unlabeled_fwd: Vec<_> = unlabeled.iter().map(|e| &e.forward).collect();
    let unlabeled_metrics = evaluate_all(candidates, &unlabeled_fwd)?;
    let corr = correlation(&scores, &unlabeled_metrics)?;

    let mut arms: Vec<(Strategy, Option<Metric>)> = Vec::new();
    for &s in &cfg.strategies {
        if s == Strategy::Random {
            arms.push((s, None));
        } else {
            arms.extend(cfg.metrics.iter().map(|&m| (s, Some(m))));
        }
    }
    let mut selections = Vec::new();
    for &(strategy, metric) in &arms {
        let metric_for_records = metric.unwrap_or(cfg.metrics.first().copied().unwrap_or(Metric::OccRatio));
        let records: Vec<ScoreRecord> = if cfg.metrics.contains(&metric_for_records) {
            scores.iter().filter(|r| r.metric == metric_for_records).cloned().collect()
        } else {
            members
                .iter()
                .map(|m| ScoreRecord {
                    sample_id: m.id.clone(),
                    metric: metric_for_records,
                    value: 0.0,
                })
                .collect()
        };
        for &budget in &cfg.budgets {
            for &seed in &cfg.seeds {
                let sel = select(&records, &members, budget, strategy, seed)?;
                selections.push((strategy, metric, budget, seed, sel));
            }
        }
    }

    let wanted: BTreeSet<&str> = selections.iter().flat_map(|s| s.4.chosen.iter().map(String::as_str)).collect();
    let labeled_est: Vec<Option<FlowEstimate>> = candidates
        .par_iter()
        .map(|s| {
            wanted
                .contains(s.id.as_str())
                .then(|| optimize_flow(s, true, &cfg.optimizer, &cfg.loss))
                .transpose()
        })
        .collect::<Result<_>>()?;
    let labeled_metrics: Vec<Option<SampleMetrics>> = candidates
        .par_iter()
        .zip(&labeled_est)
        .map(|(s, e)| {
            e.as_ref()
                .map(|e| {
                    let gt = s.label.as_ref().expect("candidates are labeled");
                    Ok(SampleMetrics {
                        sample_id: s.id.clone(),
                        epe: epe(&e.forward, gt)?,
                        fl: fl_rate(&e.forward, gt)?,
                    })
                })
                .transpose()
        })
        .collect::<Result<_>>()?;

    let index: BTreeMap<&str, usize> = candidates.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
    let runs: Vec<RunResult> = selections
        .iter()
        .map(|(strategy, metric, budget, seed, sel)| {
            let mut chosen = vec![false; candidates.len()];
            for id in &sel.chosen {
                chosen[index[id.as_str()]] = true;
            }
            let per_sample = (0..candidates.len()).map(|i| {
                if chosen[i] {
                    labeled_metrics[i].as_ref().expect("labeled estimate computed")
                } else {
                    &unlabeled_metrics[i]
                }
            });
            let (epes, fls): (Vec<f64>, Vec<f64>) = per_sample.map(|m| (m.epe, m.fl)).unzip();
            RunResult {
                strategy: *strategy,
                metric: *metric,
                ratio: *budget,
                seed: *seed,
                labeled: sel.chosen.len(),
                epe: mean(epes),
                fl: mean(fls),
            }
        })
        .collect();

    let mut curves = BTreeMap::new();
    for &(strategy, metric) in &arms {
        let mut pts = Vec::new();
        for &budget in &cfg.budgets {
            let arm: Vec<&RunResult> = runs
                .iter()
                .filter(|r| r.strategy == strategy && r.metric == metric && r.ratio == budget)
                .collect();
            for (name, value) in [
                ("epe", mean(arm.iter().map(|r| r.epe))),
                ("fl", mean(arm.iter().map(|r| r.fl))),
            ] {
                pts.push(CurvePoint {
                    ratio: budget.ratio(),
                    metric: name.to_string(),
                    value,
                });
            }
        }
        curves.insert(curve_name(strategy, metric), pts);
    }

    Ok(ExperimentReport {
        scores,
        unlabeled: unlabeled_metrics,
        corr,
        runs,
        curves,
    })
}

fn runs_csv(runs: &[RunResult]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["strategy", "metric", "ratio", "seed", "labeled", "epe", "fl"])?;
    for r in runs {
        w.write_record([
            r.strategy.to_string(),
            r.metric.map(|m| m.to_string()).unwrap_or_default(),
            r.ratio.ratio().to_string(),
            r.seed.to_string(),
            r.labeled.to_string(),
            r.epe.to_string(),
            r.fl.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::io("<memory>", e.into_error()))
}

/// Run the experiment and write `scores.csv`, `unlabeled_metrics.csv`,
/// `corr.csv`, `runs.csv` and one `curve_<name>.csv` per arm. Returns the
/// written paths.
pub fn cmd_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let report = run_experiment(cfg)?;
    let mut files: Vec<(PathBuf, Vec<u8>)> = vec![
        (out_dir.join("scores.csv"), write_scores_csv(&report.scores)?),
        (out_dir.join("unlabeled_metrics.csv"), write_metrics_csv(&report.unlabeled)?),
        (out_dir.join("corr.csv"), report.corr.to_csv()?),
        (out_dir.join("runs.csv"), runs_csv(&report.runs)?),
    ];
    for (name, pts) in &report.curves {
        files.push((out_dir.join(format!("curve_{name}.csv")), write_curve_csv(pts, None)?));
    }
    for (path, bytes) in &files {
        write_file(path, bytes)?;
    }
    Ok(files.into_iter().map(|f| f.0).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(budgets: &[f64]) -> ExperimentConfig {
        ExperimentConfig {
            dataset: DatasetSource::Synth(DatasetSpec {
                count: 6,
                width: 32,
                height: 32,
                texture_scale: 8.0,
                ..DatasetSpec::default()
            }),
            budgets: budgets.iter().map(|&r| Budget::new(r).unwrap()).collect(),
            seeds: vec![0],
            optimizer: OptimizerConfig {
                coarsest_level: 2,
                iters_per_level: 30,
                ..OptimizerConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn config_json_strict() {
        let cfg = ExperimentConfig::default();
        let json = serde_json::to_vec(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&json).unwrap(), cfg);
        assert!(ExperimentConfig::from_json(br#"{"budgetz":[0.5]}"#).is_err());
        assert!(ExperimentConfig::from_json(br#"{"budgets":[1.5]}"#).is_err());
        assert!(matches!(
            ExperimentConfig::from_json(br#"{"candidate_fraction":0.7,"non_candidate_fraction":0.2}"#),
            Err(Error::InvalidConfig(_))
        ));
        let cfg = ExperimentConfig::from_json(br#"{"dataset":{"synth":{"count":4}},"seeds":[7]}"#).unwrap();
        assert_eq!(cfg.seeds, [7]);
        assert!(matches!(cfg.dataset, DatasetSource::Synth(DatasetSpec { count: 4, .. })));
    }

    #[test]
    fn two_budgets_two_points_per_metric() {
        let report = run_experiment(&small(&[0.0, 1.0])).unwrap();
        let curve = &report.curves["random"];
        assert_eq!(curve.iter().filter(|p| p.metric == "epe").count(), 2);
        assert_eq!(curve.iter().filter(|p| p.metric == "fl").count(), 2);
        let (r0, r1) = (report.arm_epe(Strategy::Random, None, 0.0), report.arm_epe(Strategy::Random, None, 1.0));
        assert!(r1[0] <= r0[0]);
    }

    #[test]
    fn experiment_files_repeat_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(&[0.0, 0.5]);
        cfg.strategies = vec![Strategy::Random, Strategy::Topk];
        let a = with_threads(1, || cmd_experiment(&cfg, &dir.path().join("a"))).unwrap();
        let b = with_threads(3, || cmd_experiment(&cfg, &dir.path().join("b"))).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{}", x.display());
        }
    }

    #[test]
    fn file_pipeline() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        let cfg = small(&[0.5]);
        let manifest = cmd_gen(&cfg, &d.join("data")).unwrap();
        cmd_optimize(&manifest, None, &cfg, &d.join("flows")).unwrap();
        let scores = cmd_score(&manifest, &d.join("flows"), &[Metric::OccRatio], &cfg.loss, &d.join("scores.csv")).unwrap();
        assert_eq!(scores.len(), 6);
        let sel = cmd_select(
            &d.join("scores.csv"),
            None,
            Budget::new(0.5).unwrap(),
            Strategy::Topk,
            0,
            &manifest,
            &d.join("sel.json"),
        )
        .unwrap();
        assert_eq!(sel.chosen.len(), 3);
        cmd_optimize(&manifest, Some(&d.join("sel.json")), &cfg, &d.join("flows2")).unwrap();
        let before = cmd_evaluate(&d.join("flows"), &manifest, &d.join("m1.csv")).unwrap();
        let after = cmd_evaluate(&d.join("flows2"), &manifest, &d.join("m2.csv")).unwrap();
        assert_eq!(before.len(), 6);
        let mean = |v: &[SampleMetrics]| v.iter().map(|m| m.epe).sum::<f64>() / v.len() as f64;
        assert!(mean(&after) <= mean(&before));
        let m = cmd_corr(&[d.join("scores.csv")], &d.join("m1.csv"), &d.join("corr.csv")).unwrap();
        assert_eq!(m.names, ["occ_ratio", "epe"]);
    }

    #[test]
    fn curves_and_gradcheck_commands() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("c.csv");
        cmd_curves("kitti-2015-fl", &out).unwrap();
        let text = fs::read_to_string(&out).unwrap();
        assert!(text.contains("\n0,fl,12.742\n") && text.ends_with("\n1,fl,9.448\n"));
        assert!(matches!(cmd_curves("nope", &out), Err(Error::UnknownFixture(_))));
        assert!(cmd_gradcheck(1).unwrap().passed());
    }
}

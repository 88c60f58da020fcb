//! Error metrics, score/error correlation and label-ratio curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::FlowField;

pub mod fixtures;

/// KITTI outlier rule: error above 3 px and above 5% of the true magnitude.
pub const FL_ABS_PX: f64 = 3.0;
pub const FL_REL: f64 = 0.05;

fn valid_pairs<'a>(est: &'a FlowField, gt: &'a FlowField) -> Result<impl Iterator<Item = ([f64; 2], [f64; 2])> + 'a> {
    est.ensure_dims(gt.dims())?;
    let (w, h) = gt.dims();
    Ok((0..h)
        .flat_map(move |y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| gt.is_valid(x, y))
        .map(|(x, y)| (est.get(x, y), gt.get(x, y))))
}

/// Mean end-point error over valid ground-truth pixels; 0 if none are valid.
pub fn epe(est: &FlowField, gt: &FlowField) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (e, g) in valid_pairs(est, gt)? {
        sum += (e[0] - g[0]).hypot(e[1] - g[1]);
        n += 1;
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Percentage of valid pixels that are outliers.
pub fn fl_rate(est: &FlowField, gt: &FlowField) -> Result<f64> {
    let mut bad = 0usize;
    let mut n = 0usize;
    for (e, g) in valid_pairs(est, gt)? {
        let err = (e[0] - g[0]).hypot(e[1] - g[1]);
        if err > FL_ABS_PX && err > FL_REL * g[0].hypot(g[1]) {
            bad += 1;
        }
        n += 1;
    }
    Ok(if n == 0 { 0.0 } else { 100.0 * bad as f64 / n as f64 })
}

/// Pearson correlation via running co-moments. A constant series has no
/// defined correlation; 0 is returned.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::RecordMismatch(format!("{} vs {} values", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(Error::RecordMismatch("correlation needs at least 2 values".into()));
    }
    let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, (&x, &y)) in xs.iter().zip(ys).enumerate() {
        let n = (i + 1) as f64;
        let dx = x - mx;
        let dy = y - my;
        mx += dx / n;
        my += dy / n;
        sxx += dx * (x - mx);
        syy += dy * (y - my);
        sxy += dx * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Ok(0.0);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrMatrix {
    pub names: Vec<String>,
    /// Row-major, `names.len()` squared.
    pub values: Vec<f64>,
}

impl CorrMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.names.len() + j]
    }

    pub fn by_name(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        Some(self.get(i, j))
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![String::new()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (i, name) in self.names.iter().enumerate() {
            let mut row = vec![name.clone()];
            row.extend((0..self.names.len()).map(|j| self.get(i, j).to_string()));
            w.write_record(&row)?;
        }
        w.into_inner().map_err(|e| Error::io("<memory>", e.into_error()))
    }
}

/// Symmetric correlation matrix of named, equally long series; the
/// diagonal is 1.
pub fn corr_matrix(series: &[(String, Vec<f64>)]) -> Result<CorrMatrix> {
    let n = series.len();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        values[i * n + i] = 1.0;
        for j in i + 1..n {
            let r = pearson(&series[i].1, &series[j].1)?;
            values[i * n + j] = r;
            values[j * n + i] = r;
        }
    }
    Ok(CorrMatrix {
        names: series.iter().map(|s| s.0.clone()).collect(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub sample_id: String,
    pub epe: f64,
    pub fl: f64,
}

pub fn write_metrics_csv(rows: &[SampleMetrics]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sample_id", "epe", "fl"])?;
    for r in rows {
        w.write_record([r.sample_id.as_str(), &r.epe.to_string(), &r.fl.to_string()])?;
    }
    w.into_inner().map_err(|e| Error::io("<memory>", e.into_error()))
}

pub fn read_metrics_csv(bytes: &[u8]) -> Result<Vec<SampleMetrics>> {
    let mut r = csv::Reader::from_reader(bytes);
    if r.headers()?.iter().collect::<Vec<_>>() != ["sample_id", "epe", "fl"] {
        return Err(Error::RecordMismatch("metrics header must be sample_id,epe,fl".into()));
    }
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub ratio: f64,
    pub metric: String,
    pub value: f64,
}

/// Curve CSV; `decimals` fixes the precision of the value column, `None`
/// writes the shortest exact representation.
pub fn write_curve_csv(points: &[CurvePoint], decimals: Option<usize>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["ratio", "metric", "value"])?;
    for p in points {
        let value = match decimals {
            Some(d) => format!("{:.*}", d, p.value),
            None => p.value.to_string(),
        };
        w.write_record([p.ratio.to_string(), p.metric.clone(), value])?;
    }
    w.into_inner().map_err(|e| Error::io("<memory>", e.into_error()))
}

pub fn read_curve_csv(bytes: &[u8]) -> Result<Vec<CurvePoint>> {
    let mut r = csv::Reader::from_reader(bytes);
    if r.headers()?.iter().collect::<Vec<_>>() != ["ratio", "metric", "value"] {
        return Err(Error::RecordMismatch("curve header must be ratio,metric,value".into()));
    }
    let mut out = Vec::new();
    for row in r.deserialize() {
        let p: CurvePoint = row?;
        if !(0.0..=1.0).contains(&p.ratio) {
            return Err(Error::RecordMismatch(format!("ratio {} outside [0, 1]", p.ratio)));
        }
        out.push(p);
    }
    Ok(out)
}

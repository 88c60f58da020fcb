//! Published validation curves, stored verbatim.
//!
//! Semi-supervised curves give the error of a model trained with a random
//! fraction `r` of labeled samples. Active-learning curves add, at
//! `r` = 0.05, 0.1 and 0.2, one point per selection method; the `r` = 0 and
//! `r` = 1 endpoints are labelled `none`.

use super::{write_curve_csv, CurvePoint};
use crate::error::{Error, Result};

/// All stored values have three decimals.
pub const DECIMALS: usize = 3;

const RATIOS: [f64; 8] = [0.0, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0];

struct SemiSupervised {
    name: &'static str,
    metric: &'static str,
    values: [f64; 8],
}

const SEMI_SUPERVISED: [SemiSupervised; 6] = [
    SemiSupervised {
        name: "flyingchairs",
        metric: "epe",
        values: [3.066, 2.369, 2.091, 1.803, 1.653, 1.560, 1.550, 1.439],
    },
    SemiSupervised {
        name: "sintel-clean",
        metric: "epe",
        values: [1.906, 1.850, 1.776, 1.691, 1.643, 1.625, 1.581, 1.651],
    },
    SemiSupervised {
        name: "sintel-final",
        metric: "epe",
        values: [2.933, 2.828, 2.710, 2.598, 2.349, 2.281, 2.281, 2.290],
    },
    SemiSupervised {
        name: "flyingthings3d",
        metric: "epe",
        values: [12.037, 10.588, 10.205, 9.584, 8.395, 8.296, 7.833, 7.876],
    },
    SemiSupervised {
        name: "kitti-2012-fl",
        metric: "fl",
        values: [5.827, 5.525, 5.325, 5.137, 4.899, 4.973, 4.709, 4.562],
    },
    SemiSupervised {
        name: "kitti-2015-fl",
        metric: "fl",
        values: [12.742, 11.462, 11.030, 10.357, 10.109, 9.947, 9.784, 9.448],
    },
];

pub const AL_METHODS: [&str; 4] = ["random", "photo_loss", "occ_ratio", "flow_grad_norm"];
const AL_RATIOS: [f64; 3] = [0.05, 0.1, 0.2];

struct ActiveLearning {
    name: &'static str,
    r0: f64,
    /// Rows follow `AL_RATIOS`, columns `AL_METHODS`.
    grid: [[f64; 4]; 3],
    r1: f64,
}

const ACTIVE_LEARNING: [ActiveLearning; 4] = [
    ActiveLearning {
        name: "al-sintel-clean",
        r0: 1.906,
        grid: [
            [1.850, 1.807, 1.767, 1.797],
            [1.776, 1.706, 1.686, 1.696],
            [1.691, 1.639, 1.643, 1.631],
        ],
        r1: 1.651,
    },
    ActiveLearning {
        name: "al-sintel-final",
        r0: 2.933,
        grid: [
            [2.828, 2.731, 2.693, 2.770],
            [2.710, 2.541, 2.515, 2.545],
            [2.598, 2.383, 2.373, 2.299],
        ],
        r1: 2.290,
    },
    ActiveLearning {
        name: "al-kitti-2012",
        r0: 5.573,
        grid: [
            [5.363, 5.477, 5.256, 5.353],
            [5.273, 5.175, 5.170, 5.159],
            [5.021, 4.934, 4.929, 4.837],
        ],
        r1: 4.446,
    },
    ActiveLearning {
        name: "al-kitti-2015",
        r0: 12.062,
        grid: [
            [11.456, 11.705, 10.689, 10.994],
            [10.480, 10.441, 10.148, 10.880],
            [9.962, 9.759, 9.736, 9.731],
        ],
        r1: 8.545,
    },
];

pub fn names() -> Vec<&'static str> {
    SEMI_SUPERVISED
        .iter()
        .map(|f| f.name)
        .chain(ACTIVE_LEARNING.iter().map(|f| f.name))
        .collect()
}

pub fn curve_fixture(name: &str) -> Result<Vec<CurvePoint>> {
    if let Some(f) = SEMI_SUPERVISED.iter().find(|f| f.name == name) {
        return Ok(RATIOS
            .iter()
            .zip(f.values)
            .map(|(&ratio, value)| CurvePoint {
                ratio,
                metric: f.metric.to_string(),
                value,
            })
            .collect());
    }
    if let Some(f) = ACTIVE_LEARNING.iter().find(|f| f.name == name) {
        let point = |ratio: f64, metric: &str, value: f64| CurvePoint {
            ratio,
            metric: metric.to_string(),
            value,
        };
        let mut out = vec![point(0.0, "none", f.r0)];
        for (&ratio, row) in AL_RATIOS.iter().zip(&f.grid) {
            out.extend(AL_METHODS.iter().zip(row).map(|(m, &v)| point(ratio, m, v)));
        }
        out.push(point(1.0, "none", f.r1));
        return Ok(out);
    }
    Err(Error::UnknownFixture(name.to_string()))
}

pub fn fixture_csv(name: &str) -> Result<Vec<u8>> {
    write_curve_csv(&curve_fixture(name)?, Some(DECIMALS))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::read_curve_csv;

    fn value(name: &str, ratio: f64, metric: &str) -> f64 {
        curve_fixture(name)
            .unwrap()
            .into_iter()
            .find(|p| p.ratio == ratio && p.metric == metric)
            .unwrap()
            .value
    }

    #[test]
    fn spot_values() {
        assert_eq!(value("sintel-clean", 0.0, "epe"), 1.906);
        assert_eq!(value("kitti-2015-fl", 0.0, "fl"), 12.742);
        assert_eq!(value("kitti-2015-fl", 1.0, "fl"), 9.448);
        assert_eq!(value("al-sintel-clean", 0.05, "occ_ratio"), 1.767);
        assert_eq!(value("al-kitti-2012", 0.0, "none"), 5.573);
        assert_eq!(value("kitti-2012-fl", 0.0, "fl"), 5.827);
        assert!(matches!(curve_fixture("sintel"), Err(Error::UnknownFixture(_))));
    }

    #[test]
    fn csv_digits() {
        let text = String::from_utf8(fixture_csv("sintel-clean").unwrap()).unwrap();
        assert_eq!(
            text,
            "ratio,metric,value\n0,epe,1.906\n0.05,epe,1.850\n0.1,epe,1.776\n0.2,epe,1.691\n\
             0.4,epe,1.643\n0.6,epe,1.625\n0.8,epe,1.581\n1,epe,1.651\n"
        );
        for name in names() {
            let pts = curve_fixture(name).unwrap();
            assert_eq!(read_curve_csv(&fixture_csv(name).unwrap()).unwrap(), pts);
        }
        assert_eq!(curve_fixture("al-kitti-2015").unwrap().len(), 14);
    }

    #[test]
    fn monotone_except_known_exceptions() {
        let known = [
            ("sintel-clean", 1.0),
            ("sintel-final", 1.0),
            ("flyingthings3d", 1.0),
            ("kitti-2012-fl", 0.6),
        ];
        for f in &SEMI_SUPERVISED {
            for k in 1..RATIOS.len() {
                if f.values[k] > f.values[k - 1] {
                    assert!(known.contains(&(f.name, RATIOS[k])), "{} at r={}", f.name, RATIOS[k]);
                }
            }
        }
    }
}

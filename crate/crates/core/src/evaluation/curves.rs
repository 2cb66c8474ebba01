//! Tables derived from selection traces and feature matrices.

use std::io::Write;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierSpec;
use crate::encoding::FeatureTable;
use crate::error::{Error, Result};
use crate::selection::{repeated_cv_accuracy, CvConfig, SelectionTrace};

fn csv_err(e: csv::Error) -> Error {
    Error::data(format!("csv: {e}"))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetRow {
    pub size: usize,
    pub feature_name: String,
    pub accuracy: f64,
}

/// Accuracy against subset size, one row per accepted step.
pub fn subset_size_curve(trace: &SelectionTrace) -> Vec<SubsetRow> {
    trace
        .steps
        .iter()
        .enumerate()
        .map(|(k, s)| SubsetRow {
            size: k + 1,
            feature_name: s.name.clone(),
            accuracy: s.mean_accuracy,
        })
        .collect()
}

/// `size,feature_name,mean_cv_accuracy`
pub fn write_subset_csv<W: Write>(rows: &[SubsetRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["size", "feature_name", "mean_cv_accuracy"]).map_err(csv_err)?;
    for r in rows {
        wr.write_record([r.size.to_string(), r.feature_name.clone(), r.accuracy.to_string()])
            .map_err(csv_err)?;
    }
    wr.flush().map_err(|e| Error::data(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub ratio: f64,
    pub accuracy: f64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

/// Repeated CV at each training ratio, with validation fraction `1 − ratio`.
pub fn training_ratio_curve(
    x: ArrayView2<'_, f64>,
    labels: &[u8],
    ratios: &[f64],
    cfg: &CvConfig,
    spec: &ClassifierSpec,
) -> Result<Vec<RatioRow>> {
    if ratios.is_empty() {
        return Err(Error::config("training ratios: empty list"));
    }
    ratios
        .iter()
        .map(|&ratio| {
            if !(ratio > 0.0 && ratio < 1.0) {
                return Err(Error::config(format!("training ratio {ratio} outside (0, 1)")));
            }
            let cv = CvConfig {
                validation_fraction: 1.0 - ratio,
                ..*cfg
            };
            let o = repeated_cv_accuracy(x, labels, &cv, spec)?;
            Ok(RatioRow {
                ratio,
                accuracy: o.mean_accuracy,
                sensitivity: o.mean_sensitivity,
                specificity: o.mean_specificity,
            })
        })
        .collect()
}

/// `ratio,accuracy,sensitivity,specificity`; undefined rates are left empty.
pub fn write_ratio_csv<W: Write>(rows: &[RatioRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["ratio", "accuracy", "sensitivity", "specificity"]).map_err(csv_err)?;
    for r in rows {
        wr.write_record([
            r.ratio.to_string(),
            r.accuracy.to_string(),
            opt(r.sensitivity),
            opt(r.specificity),
        ])
        .map_err(csv_err)?;
    }
    wr.flush().map_err(|e| Error::data(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastRow {
    pub name: String,
    pub mean_control: f64,
    pub mean_mtbi: f64,
    /// mTBI mean minus control mean.
    pub difference: f64,
}

/// Per-column cohort means and their difference.
pub fn cohort_histogram_contrast(table: &FeatureTable) -> Result<Vec<ContrastRow>> {
    let n1 = table.labels.iter().filter(|&&l| l == 1).count();
    let n0 = table.labels.len() - n1;
    if n0 == 0 || n1 == 0 {
        return Err(Error::data("histogram contrast: both cohorts must be present"));
    }
    Ok(table
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let (mut s0, mut s1) = (0.0, 0.0);
            for (i, &l) in table.labels.iter().enumerate() {
                if l == 1 {
                    s1 += table.values[[i, j]];
                } else {
                    s0 += table.values[[i, j]];
                }
            }
            let (m0, m1) = (s0 / n0 as f64, s1 / n1 as f64);
            ContrastRow {
                name: name.clone(),
                mean_control: m0,
                mean_mtbi: m1,
                difference: m1 - m0,
            }
        })
        .collect())
}

/// `feature_name,mean_control,mean_mtbi,difference`
pub fn write_contrast_csv<W: Write>(rows: &[ContrastRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["feature_name", "mean_control", "mean_mtbi", "difference"]).map_err(csv_err)?;
    for r in rows {
        wr.write_record([
            r.name.clone(),
            r.mean_control.to_string(),
            r.mean_mtbi.to_string(),
            r.difference.to_string(),
        ])
        .map_err(csv_err)?;
    }
    wr.flush().map_err(|e| Error::data(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::Hyper;
    use crate::selection::{greedy_forward_select, FeatureSource};
    use ndarray::{array, Array2};

    fn table(values: Array2<f64>, labels: Vec<u8>) -> FeatureTable {
        let n = labels.len();
        let names = (0..values.ncols()).map(|j| format!("f{j}")).collect();
        FeatureTable::new((0..n).map(|i| format!("s{i}")).collect(), labels, names, values).unwrap()
    }

    #[test]
    fn contrast_single_subject_per_cohort() {
        let t = table(array![[1.0, 2.0], [4.0, -1.0]], vec![0, 1]);
        let rows = cohort_histogram_contrast(&t).unwrap();
        assert_eq!(rows[0].mean_control, 1.0);
        assert_eq!(rows[0].mean_mtbi, 4.0);
        assert_eq!(rows[1].difference, -3.0);
    }

    #[test]
    fn contrast_identical_cohorts_is_zero() {
        let t = table(array![[0.3, 0.7], [0.3, 0.7], [0.3, 0.7], [0.3, 0.7]], vec![0, 1, 0, 1]);
        assert!(cohort_histogram_contrast(&t).unwrap().iter().all(|r| r.difference == 0.0));
        let t = table(array![[0.3], [0.4]], vec![1, 1]);
        assert!(cohort_histogram_contrast(&t).is_err());
    }

    #[test]
    fn ratio_point_eight_equals_default_cv() {
        let y: Vec<u8> = (0..20).map(|i| u8::from(i % 2 == 0)).collect();
        let x = Array2::from_shape_fn((20, 2), |(i, j)| ((i * 13 + j * 7) % 9) as f64 + y[i] as f64);
        let spec = ClassifierSpec { hyper: Hyper::Fixed { c: 1.0, gamma: 0.5 }, ..Default::default() };
        let cfg = CvConfig { repeats: 5, ..Default::default() };
        let rows = training_ratio_curve(x.view(), &y, &[0.8], &cfg, &spec).unwrap();
        assert_eq!(rows.len(), 1);
        let direct = repeated_cv_accuracy(x.view(), &y, &cfg, &spec).unwrap();
        assert_eq!(rows[0].accuracy, direct.mean_accuracy);
        assert!(training_ratio_curve(x.view(), &y, &[1.0], &cfg, &spec).is_err());
    }

    #[test]
    fn subset_curve_regenerates_from_json() {
        let y: Vec<u8> = (0..20).map(|i| u8::from(i >= 10)).collect();
        let x = Array2::from_shape_fn((20, 3), |(i, j)| if j == 1 { y[i] as f64 } else { ((i * 7 + j) % 5) as f64 });
        let spec = ClassifierSpec { hyper: Hyper::Fixed { c: 1.0, gamma: 0.5 }, ..Default::default() };
        let names: Vec<String> = (0..3).map(|j| format!("f{j}")).collect();
        let cfg = CvConfig { repeats: 3, ..Default::default() };
        let trace = greedy_forward_select(FeatureSource::Shared(x.view()), &y, &cfg, 2, &spec, &names).unwrap();
        let back = SelectionTrace::from_json(&trace.to_json().unwrap()).unwrap();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        write_subset_csv(&subset_size_curve(&trace), &mut a).unwrap();
        write_subset_csv(&subset_size_curve(&back), &mut b).unwrap();
        assert_eq!(a, b);
        let rows = subset_size_curve(&trace);
        assert!(rows.windows(2).all(|w| w[1].accuracy > w[0].accuracy));
    }
}

//! RBF-kernel support vector classification.

mod model;
mod scaler;
pub mod smo;

pub use model::{rbf_gram, rbf_kernel, signs, svm_train, SvmModel, TrainReport};
pub use scaler::Scaler;
pub use smo::{DualSolution, SmoParams};

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selection::{evaluate_pairs, make_splits, CvConfig, CvOutcome, FeatureSource};

/// Hyperparameter grid. γ is expressed as `gamma_scale / d`, d the feature count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub c: Vec<f64>,
    pub gamma_scale: Vec<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            c: vec![0.1, 1.0, 10.0, 100.0],
            gamma_scale: vec![0.25, 0.5, 1.0, 2.0, 4.0],
        }
    }
}

fn sorted_positive(name: &str, vals: &[f64]) -> Result<Vec<f64>> {
    if vals.is_empty() {
        return Err(Error::config(format!("grid: {name} list is empty")));
    }
    if vals.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::config(format!("grid: {name} values must be finite and positive")));
    }
    let mut v = vals.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    Ok(v)
}

impl GridConfig {
    /// (C, γ) pairs for `d` features, ordered by C then γ ascending, so the
    /// first maximum breaks ties toward smaller C and then smaller γ.
    pub fn pairs(&self, d: usize) -> Result<Vec<(f64, f64)>> {
        if d == 0 {
            return Err(Error::config("grid: feature count must be positive"));
        }
        let cs = sorted_positive("c", &self.c)?;
        let gs = sorted_positive("gamma_scale", &self.gamma_scale)?;
        Ok(cs
            .iter()
            .flat_map(|&c| gs.iter().map(move |&g| (c, g / d as f64)))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Hyper {
    Fixed { c: f64, gamma: f64 },
    Grid(GridConfig),
}

/// How the SVM is parameterized during cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub hyper: Hyper,
    pub smo: SmoParams,
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        ClassifierSpec {
            hyper: Hyper::Grid(GridConfig::default()),
            smo: SmoParams::default(),
        }
    }
}

impl ClassifierSpec {
    pub fn pairs(&self, d: usize) -> Result<Vec<(f64, f64)>> {
        match &self.hyper {
            Hyper::Fixed { c, gamma } => {
                if !(c.is_finite() && *c > 0.0 && gamma.is_finite() && *gamma > 0.0) {
                    return Err(Error::config("classifier: C and gamma must be finite and positive"));
                }
                Ok(vec![(*c, *gamma)])
            }
            Hyper::Grid(g) => g.pairs(d),
        }
    }
}

/// Score every grid pair by repeated CV on all columns of `x`.
/// Returns the table in grid order together with the index of the winner.
pub fn grid_search(
    x: ArrayView2<'_, f64>,
    labels: &[u8],
    grid: &GridConfig,
    cv: &CvConfig,
    smo: &SmoParams,
) -> Result<(Vec<CvOutcome>, usize)> {
    let splits = make_splits(labels, cv)?;
    let cols: Vec<usize> = (0..x.ncols()).collect();
    let pairs = grid.pairs(cols.len())?;
    let table = evaluate_pairs(FeatureSource::Shared(x), labels, &splits, &cols, &pairs, smo)?;
    let best = crate::selection::best_index(&table);
    Ok((table, best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn grid_pairs_sorted_and_scaled() {
        let g = GridConfig {
            c: vec![10.0, 1.0, 10.0],
            gamma_scale: vec![2.0, 1.0],
        };
        assert_eq!(
            g.pairs(4).unwrap(),
            vec![(1.0, 0.25), (1.0, 0.5), (10.0, 0.25), (10.0, 0.5)]
        );
        assert!(GridConfig { c: vec![], ..g.clone() }.pairs(2).is_err());
        assert!(GridConfig { c: vec![-1.0], ..g }.pairs(2).is_err());
    }

    #[test]
    fn grid_search_ties_prefer_small_c() {
        // Perfectly separable: many pairs reach accuracy 1, the first must win.
        let labels: Vec<u8> = (0..20).map(|i| u8::from(i >= 10)).collect();
        let x = Array2::from_shape_fn((20, 1), |(i, _)| if i >= 10 { 5.0 + i as f64 * 0.01 } else { i as f64 * 0.01 });
        let (table, best) = grid_search(
            x.view(),
            &labels,
            &GridConfig::default(),
            &CvConfig { repeats: 4, ..Default::default() },
            &SmoParams::default(),
        )
        .unwrap();
        assert_eq!(table.len(), 20);
        let top = table.iter().map(|o| o.mean_accuracy).fold(f64::MIN, f64::max);
        let first = table.iter().position(|o| o.mean_accuracy == top).unwrap();
        assert_eq!(best, first);
    }

    #[test]
    fn fixed_spec_validates() {
        let s = ClassifierSpec { hyper: Hyper::Fixed { c: 0.0, gamma: 1.0 }, smo: SmoParams::default() };
        assert!(s.pairs(3).is_err());
    }
}

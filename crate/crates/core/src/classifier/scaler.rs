use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-column z-score transform fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    /// Population standard deviation; 1 for constant columns.
    pub sd: Vec<f64>,
}

impl Scaler {
    pub fn fit(train: ArrayView2<'_, f64>) -> Result<Scaler> {
        let n = train.nrows();
        if n < 2 {
            return Err(Error::data(format!(
                "scaler needs at least 2 training rows, got {n}"
            )));
        }
        let mut mean = Vec::with_capacity(train.ncols());
        let mut sd = Vec::with_capacity(train.ncols());
        for col in train.axis_iter(Axis(1)) {
            let first = col[0];
            if col.iter().all(|&v| v == first) {
                mean.push(first);
                sd.push(1.0);
                continue;
            }
            let m = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
            let s = var.sqrt();
            mean.push(m);
            sd.push(if s > 1e-12 * m.abs().max(1.0) { s } else { 1.0 });
        }
        Ok(Scaler { mean, sd })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::data(format!(
                "scaler fitted on {} columns, got {}",
                self.dim(),
                x.ncols()
            )));
        }
        let mut out = x.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.mean[j], self.sd[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
        Ok(out)
    }

    pub fn apply_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::data("scaler: row dimension mismatch"));
        }
        Ok(x.iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn two_point_column() {
        let x = array![[1.0], [3.0]];
        let s = Scaler::fit(x.view()).unwrap();
        assert_eq!(s.apply(x.view()).unwrap(), array![[-1.0], [1.0]]);
    }

    #[test]
    fn constant_column_passes_through_centered() {
        let x = array![[0.7, 1.0], [0.7, 2.0], [0.7, 4.0]];
        let s = Scaler::fit(x.view()).unwrap();
        assert_eq!(s.sd[0], 1.0);
        let t = s.apply(x.view()).unwrap();
        assert!(t.column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn needs_two_rows() {
        assert!(Scaler::fit(array![[1.0, 2.0]].view()).is_err());
    }

    proptest! {
        #[test]
        fn standardized_columns(seed in any::<u64>(), n in 2usize..30, d in 1usize..6) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-50.0..50.0));
            let s = Scaler::fit(x.view()).unwrap();
            let t = s.apply(x.view()).unwrap();
            for col in t.axis_iter(Axis(1)) {
                let m = col.sum() / n as f64;
                let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
                prop_assert!(m.abs() < 1e-10);
                prop_assert!((sd - 1.0).abs() < 1e-10);
            }
            // Idempotent: a second fit/apply changes nothing.
            let t2 = Scaler::fit(t.view()).unwrap().apply(t.view()).unwrap();
            for (a, b) in t.iter().zip(t2.iter()) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }
    }
}

use std::path::Path;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::smo::{solve, DualSolution, SmoParams};
use crate::error::{Error, Result};

/// exp(−γ‖x−y‖²)
#[inline]
pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

/// Trained RBF-kernel C-SVC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmModel {
    pub gamma: f64,
    pub c: f64,
    pub bias: f64,
    /// αᵢ·yᵢ for each support vector.
    pub dual_coefs: Vec<f64>,
    pub support_vectors: Vec<Vec<f64>>,
}

/// Convergence and feasibility figures from one training run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub iterations: usize,
    pub objective: f64,
    pub kkt_gap: f64,
    pub equality_residual: f64,
    pub box_violation: f64,
    pub converged: bool,
}

impl TrainReport {
    pub fn from_solution(sol: &DualSolution, y: &[f64], c: f64) -> TrainReport {
        TrainReport {
            iterations: sol.iterations,
            objective: sol.objective,
            kkt_gap: sol.kkt_gap,
            equality_residual: sol.equality_residual(y),
            box_violation: sol.box_violation(c),
            converged: sol.converged,
        }
    }
}

/// Convert {0,1} labels (1 = mTBI) to SVM signs.
pub fn signs(labels: &[u8]) -> Vec<f64> {
    labels
        .iter()
        .map(|&l| if l == 1 { 1.0 } else { -1.0 })
        .collect()
}

pub fn rbf_gram(x: ArrayView2<'_, f64>, gamma: f64) -> Vec<f64> {
    let n = x.nrows();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        k[i * n + i] = 1.0;
        let xi = x.row(i);
        for j in 0..i {
            let d2: f64 = xi
                .iter()
                .zip(x.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let v = (-gamma * d2).exp();
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

/// Train on standardized rows `x` with labels `y ∈ {−1,+1}`.
pub fn svm_train(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    c: f64,
    gamma: f64,
    params: &SmoParams,
) -> Result<(SvmModel, TrainReport)> {
    if x.nrows() != y.len() {
        return Err(Error::data("svm_train: row and label counts differ"));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::config("svm_train: gamma must be finite and positive"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("svm_train: non-finite feature value"));
    }
    let k = rbf_gram(x, gamma);
    let sol = solve(&k, y, c, params)?;
    let report = TrainReport::from_solution(&sol, y, c);
    let mut dual_coefs = Vec::new();
    let mut support_vectors = Vec::new();
    for (i, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            dual_coefs.push(a * y[i]);
            support_vectors.push(x.row(i).to_vec());
        }
    }
    Ok((
        SvmModel {
            gamma,
            c,
            bias: sol.bias,
            dual_coefs,
            support_vectors,
        },
        report,
    ))
}

impl SvmModel {
    pub fn dim(&self) -> Option<usize> {
        self.support_vectors.first().map(|v| v.len())
    }

    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if let Some(d) = self.dim() {
            if d != x.len() {
                return Err(Error::data(format!(
                    "svm_predict: model expects {d} features, got {}",
                    x.len()
                )));
            }
        }
        Ok(self
            .dual_coefs
            .iter()
            .zip(&self.support_vectors)
            .map(|(c, sv)| c * rbf_kernel(sv, x, self.gamma))
            .sum::<f64>()
            + self.bias)
    }

    /// Predicted sign and decision value; an exact zero maps to +1.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        let d = self.decision_value(x)?;
        Ok((if d >= 0.0 { 1.0 } else { -1.0 }, d))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite() && self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::data("svm model: gamma and C must be finite and positive"));
        }
        if !self.bias.is_finite() {
            return Err(Error::data("svm model: bias must be finite"));
        }
        if self.dual_coefs.len() != self.support_vectors.len() {
            return Err(Error::data("svm model: coefficient and support vector counts differ"));
        }
        let d = self.dim().unwrap_or(0);
        if self
            .support_vectors
            .iter()
            .any(|v| v.len() != d || v.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::data("svm model: ragged or non-finite support vectors"));
        }
        if self
            .dual_coefs
            .iter()
            .any(|a| !a.is_finite() || a.abs() > self.c * (1.0 + 1e-12))
        {
            return Err(Error::data("svm model: dual coefficient outside [-C, C]"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        serde_json::to_vec_pretty(self).map_err(|e| Error::data(e.to_string()))
    }

    pub fn from_json(bytes: &[u8]) -> Result<SvmModel> {
        let m: SvmModel =
            serde_json::from_slice(bytes).map_err(|e| Error::data(format!("bad model file: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<SvmModel> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        SvmModel::from_json(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn kernel_basics() {
        assert_eq!(rbf_kernel(&[1.0, 2.0], &[1.0, 2.0], 0.3), 1.0);
        let g = 0.25;
        // ‖x−y‖² = 4 = 1/γ
        let v = rbf_kernel(&[0.0, 0.0], &[2.0, 0.0], g);
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(rbf_kernel(&[0.3, -1.0], &[2.0, 5.0], 0.7), rbf_kernel(&[2.0, 5.0], &[0.3, -1.0], 0.7));
    }

    #[test]
    fn separable_pair_has_margin_and_symmetric_center() {
        let x = array![[-1.0, -1.0], [1.0, 1.0]];
        let y = [-1.0, 1.0];
        let (m, rep) = svm_train(x.view(), &y, 10.0, 0.5, &SmoParams::default()).unwrap();
        assert!(rep.converged);
        let (s0, d0) = m.predict(&[-1.0, -1.0]).unwrap();
        let (s1, d1) = m.predict(&[1.0, 1.0]).unwrap();
        assert_eq!((s0, s1), (-1.0, 1.0));
        assert!(d0 <= -1.0 + 1e-3 && d1 >= 1.0 - 1e-3);
        assert!(m.decision_value(&[0.0, 0.0]).unwrap().abs() < 1e-12);
        // Exact zero decision maps to the positive class.
        assert_eq!(m.predict(&[0.0, 0.0]).unwrap().0, 1.0);
        assert!(m.predict(&[0.0]).is_err());
    }

    #[test]
    fn free_support_vectors_sit_on_margin() {
        let x = array![[0.0], [0.4], [1.0], [3.0], [3.3], [4.0]];
        let y = [-1.0, -1.0, -1.0, 1.0, 1.0, 1.0];
        let c = 100.0;
        let params = SmoParams::default();
        let (m, _) = svm_train(x.view(), &y, c, 0.5, &params).unwrap();
        for (a, sv) in m.dual_coefs.iter().zip(&m.support_vectors) {
            if a.abs() < c {
                let d = m.decision_value(sv).unwrap();
                assert!(d.abs() >= 1.0 - params.tol, "{d}");
            }
        }
        for (i, row) in x.rows().into_iter().enumerate() {
            assert_eq!(m.predict(row.as_slice().unwrap()).unwrap().0, y[i]);
        }
    }

    #[test]
    fn model_json_round_trip_and_validation() {
        let x = array![[0.0, 1.0], [1.0, 0.0], [2.0, 2.0]];
        let (m, _) = svm_train(x.view(), &[1.0, -1.0, 1.0], 1.0, 0.5, &SmoParams::default()).unwrap();
        let back = SvmModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let bad = br#"{"gamma":-1,"c":1,"bias":0,"dual_coefs":[],"support_vectors":[]}"#;
        assert!(SvmModel::from_json(bad).is_err());
        let bad = br#"{"gamma":1,"c":1,"bias":0,"dual_coefs":[5.0],"support_vectors":[[0.0]]}"#;
        assert!(SvmModel::from_json(bad).is_err());
    }
}

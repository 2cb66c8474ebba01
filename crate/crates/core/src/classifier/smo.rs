//! Sequential minimal optimization for the C-SVC dual
//!
//!   max  Σα − ½ Σ αᵢαⱼ yᵢyⱼ Kᵢⱼ   s.t. 0 ≤ αᵢ ≤ C,  Σ αᵢyᵢ = 0
//!
//! on a dense, precomputed kernel matrix. Working pairs are chosen by the
//! maximal-violating index followed by the second-order gain rule; the loop
//! ends once the KKT gap `max_{I_up} −yG − min_{I_low} −yG` falls below `tol`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoParams {
    /// KKT violation tolerance.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SmoParams {
    fn default() -> Self {
        SmoParams {
            tol: 1e-3,
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    /// Σα − ½ αᵀQα at return.
    pub objective: f64,
    pub iterations: usize,
    /// Final KKT gap (≤ tol when converged).
    pub kkt_gap: f64,
    pub converged: bool,
}

impl DualSolution {
    /// |Σ αᵢyᵢ|.
    pub fn equality_residual(&self, y: &[f64]) -> f64 {
        self.alpha.iter().zip(y).map(|(a, y)| a * y).sum::<f64>().abs()
    }

    /// Largest distance of any αᵢ outside [0, C].
    pub fn box_violation(&self, c: f64) -> f64 {
        self.alpha
            .iter()
            .map(|&a| (-a).max(a - c).max(0.0))
            .fold(0.0, f64::max)
    }
}

/// Dual objective Σα − ½ αᵀQα with Qᵢⱼ = yᵢyⱼKᵢⱼ.
pub fn dual_objective(kernel: &[f64], y: &[f64], alpha: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        let row = &kernel[i * n..(i + 1) * n];
        let mut s = 0.0;
        for j in 0..n {
            s += alpha[j] * y[j] * row[j];
        }
        quad += alpha[i] * y[i] * s;
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

#[inline]
fn in_up(a: f64, y: f64, c: f64) -> bool {
    (y > 0.0 && a < c) || (y < 0.0 && a > 0.0)
}

#[inline]
fn in_low(a: f64, y: f64, c: f64) -> bool {
    (y > 0.0 && a > 0.0) || (y < 0.0 && a < c)
}

/// Solve the dual for labels `y ∈ {−1,+1}` and row-major `n×n` kernel.
pub fn solve(kernel: &[f64], y: &[f64], c: f64, params: &SmoParams) -> Result<DualSolution> {
    let n = y.len();
    if kernel.len() != n * n {
        return Err(Error::data("smo: kernel matrix is not n×n"));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::config("smo: C must be finite and positive"));
    }
    if params.tol.is_nan() || params.tol <= 0.0 {
        return Err(Error::config("smo: tol must be positive"));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::data("smo: labels must be -1 or +1"));
    }
    if !(y.iter().any(|&v| v > 0.0) && y.iter().any(|&v| v < 0.0)) {
        return Err(Error::data("smo: training set needs both classes"));
    }
    let k = |i: usize, j: usize| kernel[i * n + j];
    let mut alpha = vec![0.0; n];
    // Gradient of ½αᵀQα − eᵀα.
    let mut grad = vec![-1.0; n];
    let mut iterations = 0;
    let mut objective = 0.0f64;
    let (kkt_gap, converged) = loop {
        // Maximal violating index in I_up.
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            if in_up(alpha[t], y[t], c) {
                let v = -y[t] * grad[t];
                if v > gmax {
                    gmax = v;
                    i_sel = t;
                }
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j_sel = usize::MAX;
        let mut best_gain = f64::INFINITY;
        for t in 0..n {
            if !in_low(alpha[t], y[t], c) {
                continue;
            }
            let v = -y[t] * grad[t];
            if v < gmin {
                gmin = v;
            }
            if i_sel == usize::MAX {
                continue;
            }
            let b = gmax - v;
            if b > 0.0 {
                let mut a = k(i_sel, i_sel) + k(t, t) - 2.0 * k(i_sel, t);
                if a <= 0.0 {
                    a = TAU;
                }
                let gain = -(b * b) / a;
                if gain < best_gain {
                    best_gain = gain;
                    j_sel = t;
                }
            }
        }
        let gap = gmax - gmin;
        if i_sel == usize::MAX || j_sel == usize::MAX || gap < params.tol {
            break (gap.max(0.0), true);
        }
        if iterations >= params.max_iter {
            break (gap, false);
        }
        iterations += 1;

        let (i, j) = (i_sel, j_sel);
        let (old_ai, old_aj) = (alpha[i], alpha[j]);
        let mut quad = k(i, i) + k(j, j) - 2.0 * k(i, j);
        if quad <= 0.0 {
            quad = TAU;
        }
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_ai, alpha[j] - old_aj);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * k(t, i) * di + y[j] * k(t, j) * dj);
        }

        if cfg!(debug_assertions) {
            let new_obj = -0.5 * alpha
                .iter()
                .zip(&grad)
                .map(|(a, g)| a * (g - 1.0))
                .sum::<f64>();
            debug_assert!(
                new_obj >= objective - 1e-9 * objective.abs().max(1.0),
                "dual objective decreased: {objective} -> {new_obj}"
            );
            objective = new_obj;
        }
    };

    // Bias from free vectors, else the midpoint of the feasible interval.
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut n_free = 0usize;
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            free_sum += yg;
        }
    }
    let rho = if n_free > 0 {
        free_sum / n_free as f64
    } else {
        (ub + lb) / 2.0
    };
    let objective = -0.5
        * alpha
            .iter()
            .zip(&grad)
            .map(|(a, g)| a * (g - 1.0))
            .sum::<f64>();
    Ok(DualSolution {
        alpha,
        bias: -rho,
        objective,
        iterations,
        kkt_gap,
        converged,
    })
}

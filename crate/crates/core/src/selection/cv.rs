//! Repeated random-split cross-validation.
//!
//! Every repeat draws its split from its own stream keyed by (seed, repeat),
//! so all candidates scored with the same `CvConfig` see identical splits.
//! Within a repeat the scaler is fitted on the training rows only, and one
//! squared-distance matrix is shared by every (C, γ) pair of the grid.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{smo, ClassifierSpec, Scaler, SmoParams, TrainReport};
use crate::error::{Error, Result};
use crate::evaluation::{sensitivity, specificity, ConfusionCounts};
use crate::rng::{stream, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub validation_fraction: f64,
    pub repeats: usize,
    pub stratified: bool,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            validation_fraction: 0.2,
            repeats: 50,
            stratified: true,
            seed: 0,
        }
    }
}

impl CvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::config("cv: validation_fraction must lie in (0, 1)"));
        }
        if self.repeats == 0 {
            return Err(Error::config("cv: repeats must be at least 1"));
        }
        Ok(())
    }
}

/// Row indices of one train/validation partition, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// `floor(fraction · n)`, tolerant of representation error so that a
/// fraction computed as `1 − 0.8` floors like `0.2`.
fn validation_count(fraction: f64, n: usize) -> usize {
    (fraction * n as f64 + 1e-9).floor() as usize
}

/// Draw `cfg.repeats` splits. Stratified mode puts `floor(fraction · n_c)`
/// rows of each class into validation; the remainder trains.
pub fn make_splits(labels: &[u8], cfg: &CvConfig) -> Result<Vec<Split>> {
    cfg.validate()?;
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::data("cv: labels must be 0 or 1"));
    }
    let by_class: [Vec<usize>; 2] = [0u8, 1].map(|c| {
        labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == c)
            .map(|(i, _)| i)
            .collect()
    });
    if by_class.iter().any(|v| v.is_empty()) {
        return Err(Error::data("cv: both classes must be present"));
    }
    (0..cfg.repeats)
        .map(|r| {
            let mut rng = stream(cfg.seed, Domain::CvSplit, r as u64);
            let mut train = Vec::new();
            let mut validation = Vec::new();
            if cfg.stratified {
                for class in &by_class {
                    let mut idx = class.clone();
                    idx.shuffle(&mut rng);
                    let n_val = validation_count(cfg.validation_fraction, idx.len());
                    validation.extend_from_slice(&idx[..n_val]);
                    train.extend_from_slice(&idx[n_val..]);
                }
            } else {
                let mut idx: Vec<usize> = (0..labels.len()).collect();
                idx.shuffle(&mut rng);
                let n_val = validation_count(cfg.validation_fraction, idx.len());
                validation.extend_from_slice(&idx[..n_val]);
                train.extend_from_slice(&idx[n_val..]);
            }
            train.sort_unstable();
            validation.sort_unstable();
            if validation.is_empty() {
                return Err(Error::data(format!(
                    "cv: degenerate split in repeat {r}: empty validation set"
                )));
            }
            for c in 0..2u8 {
                if !train.iter().any(|&i| labels[i] == c) {
                    return Err(Error::data(format!(
                        "cv: degenerate split in repeat {r}: class {c} absent from training"
                    )));
                }
            }
            if train.len() < 2 {
                return Err(Error::data(format!("cv: repeat {r} has fewer than 2 training rows")));
            }
            Ok(Split { train, validation })
        })
        .collect()
}

/// Features used by the CV loop: one matrix for all repeats, or one per repeat
/// (codebooks re-learned inside each split).
#[derive(Debug, Clone, Copy)]
pub enum FeatureSource<'a> {
    Shared(ArrayView2<'a, f64>),
    PerSplit(&'a [Array2<f64>]),
}

impl<'a> FeatureSource<'a> {
    pub fn matrix(&self, repeat: usize) -> ArrayView2<'a, f64> {
        match *self {
            FeatureSource::Shared(x) => x,
            FeatureSource::PerSplit(ms) => ms[repeat].view(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.matrix(0).ncols()
    }

    fn check(&self, n_rows: usize, repeats: usize) -> Result<()> {
        match self {
            FeatureSource::Shared(x) => {
                if x.nrows() != n_rows {
                    return Err(Error::data("cv: feature rows differ from label count"));
                }
            }
            FeatureSource::PerSplit(ms) => {
                if ms.len() != repeats {
                    return Err(Error::data(format!(
                        "cv: {} per-split matrices for {repeats} repeats",
                        ms.len()
                    )));
                }
                let cols = ms[0].ncols();
                if ms.iter().any(|m| m.nrows() != n_rows || m.ncols() != cols) {
                    return Err(Error::data("cv: per-split matrices disagree in shape"));
                }
            }
        }
        Ok(())
    }
}

/// Aggregated solver health over every model trained during an evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainDiagnostics {
    pub models: usize,
    pub unconverged: usize,
    pub max_kkt_gap: f64,
    pub max_equality_residual: f64,
    pub max_box_violation: f64,
}

impl TrainDiagnostics {
    pub fn absorb(&mut self, r: &TrainReport) {
        self.models += 1;
        if !r.converged {
            self.unconverged += 1;
        }
        self.max_kkt_gap = self.max_kkt_gap.max(r.kkt_gap);
        self.max_equality_residual = self.max_equality_residual.max(r.equality_residual);
        self.max_box_violation = self.max_box_violation.max(r.box_violation);
    }

    pub fn merge(&mut self, o: &TrainDiagnostics) {
        self.models += o.models;
        self.unconverged += o.unconverged;
        self.max_kkt_gap = self.max_kkt_gap.max(o.max_kkt_gap);
        self.max_equality_residual = self.max_equality_residual.max(o.max_equality_residual);
        self.max_box_violation = self.max_box_violation.max(o.max_box_violation);
    }

    /// Every model converged with the KKT gap under `tol`, |Σαy| ≤ 1e-8 and no box violation.
    pub fn invariants_hold(&self, tol: f64) -> bool {
        self.unconverged == 0
            && self.max_kkt_gap < tol
            && self.max_equality_residual <= 1e-8
            && self.max_box_violation == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepeatOutcome {
    pub accuracy: f64,
    pub confusion: ConfusionCounts,
}

/// Result of repeated CV for one (C, γ) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub c: f64,
    pub gamma: f64,
    pub mean_accuracy: f64,
    /// Mean of per-repeat sensitivities, over repeats where it is defined.
    pub mean_sensitivity: Option<f64>,
    pub mean_specificity: Option<f64>,
    pub repeats: Vec<RepeatOutcome>,
    pub diagnostics: TrainDiagnostics,
}

fn mean_defined(vals: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (s, n) = vals.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn gather(x: ArrayView2<'_, f64>, rows: &[usize], cols: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| x[[rows[i], cols[j]]])
}

fn sq_dists(a: &Array2<f64>, b: &Array2<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.nrows() * b.nrows());
    for ra in a.rows() {
        for rb in b.rows() {
            out.push(ra.iter().zip(rb.iter()).map(|(p, q)| (p - q) * (p - q)).sum());
        }
    }
    out
}

struct PairRun {
    outcome: RepeatOutcome,
    report: TrainReport,
}

fn run_repeat(
    x: ArrayView2<'_, f64>,
    labels: &[u8],
    split: &Split,
    cols: &[usize],
    pairs: &[(f64, f64)],
    params: &SmoParams,
) -> Result<Vec<PairRun>> {
    let xtr = gather(x, &split.train, cols);
    let xva = gather(x, &split.validation, cols);
    let scaler = Scaler::fit(xtr.view())?;
    let ztr = scaler.apply(xtr.view())?;
    let zva = scaler.apply(xva.view())?;
    let d_tr = sq_dists(&ztr, &ztr);
    let d_va = sq_dists(&zva, &ztr);
    let y_tr: Vec<f64> = split
        .train
        .iter()
        .map(|&i| if labels[i] == 1 { 1.0 } else { -1.0 })
        .collect();
    let n_tr = split.train.len();

    let mut out = Vec::with_capacity(pairs.len());
    let mut cached: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    for &(c, gamma) in pairs {
        if cached.as_ref().is_none_or(|(g, _, _)| *g != gamma) {
            let k_tr: Vec<f64> = d_tr.iter().map(|d| (-gamma * d).exp()).collect();
            let k_va: Vec<f64> = d_va.iter().map(|d| (-gamma * d).exp()).collect();
            cached = Some((gamma, k_tr, k_va));
        }
        let (_, k_tr, k_va) = cached.as_ref().expect("kernel cache");
        let sol = smo::solve(k_tr, &y_tr, c, params)?;
        let report = TrainReport::from_solution(&sol, &y_tr, c);
        let coef: Vec<f64> = sol.alpha.iter().zip(&y_tr).map(|(a, y)| a * y).collect();
        let mut conf = ConfusionCounts::default();
        for (v, &row) in split.validation.iter().enumerate() {
            let kv = &k_va[v * n_tr..(v + 1) * n_tr];
            let dec: f64 = coef.iter().zip(kv).map(|(a, k)| a * k).sum::<f64>() + sol.bias;
            conf.record(u8::from(dec >= 0.0), labels[row]);
        }
        let accuracy = (conf.tp + conf.tn) as f64 / conf.total() as f64;
        out.push(PairRun {
            outcome: RepeatOutcome {
                accuracy,
                confusion: conf,
            },
            report,
        });
    }
    Ok(out)
}

/// Repeated CV of the feature subset `cols` for every (C, γ) pair, in order.
pub fn evaluate_pairs(
    source: FeatureSource<'_>,
    labels: &[u8],
    splits: &[Split],
    cols: &[usize],
    pairs: &[(f64, f64)],
    params: &SmoParams,
) -> Result<Vec<CvOutcome>> {
    source.check(labels.len(), splits.len())?;
    if cols.is_empty() {
        return Err(Error::data("cv: empty feature subset"));
    }
    if let Some(&bad) = cols.iter().find(|&&c| c >= source.n_features()) {
        return Err(Error::data(format!("cv: feature index {bad} out of range")));
    }
    if pairs.is_empty() {
        return Err(Error::config("cv: empty hyperparameter grid"));
    }
    // Sorting by gamma lets a repeat reuse one kernel per gamma.
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| pairs[a].1.total_cmp(&pairs[b].1).then(a.cmp(&b)));
    let sorted: Vec<(f64, f64)> = order.iter().map(|&i| pairs[i]).collect();

    let per_repeat: Vec<Vec<PairRun>> = splits
        .par_iter()
        .enumerate()
        .map(|(r, split)| run_repeat(source.matrix(r), labels, split, cols, &sorted, params))
        .collect::<Result<_>>()?;

    let mut outcomes: Vec<Option<CvOutcome>> = vec![None; pairs.len()];
    for (slot, &orig) in order.iter().enumerate() {
        let (c, gamma) = pairs[orig];
        let mut diagnostics = TrainDiagnostics::default();
        let repeats: Vec<RepeatOutcome> = per_repeat
            .iter()
            .map(|runs| {
                diagnostics.absorb(&runs[slot].report);
                runs[slot].outcome
            })
            .collect();
        let mean_accuracy = repeats.iter().map(|r| r.accuracy).sum::<f64>() / repeats.len() as f64;
        outcomes[orig] = Some(CvOutcome {
            c,
            gamma,
            mean_accuracy,
            mean_sensitivity: mean_defined(repeats.iter().map(|r| sensitivity(&r.confusion))),
            mean_specificity: mean_defined(repeats.iter().map(|r| specificity(&r.confusion))),
            repeats,
            diagnostics,
        });
    }
    Ok(outcomes.into_iter().map(|o| o.expect("filled")).collect())
}

/// Index of the best outcome: highest mean accuracy, first in grid order on ties.
pub fn best_index(outcomes: &[CvOutcome]) -> usize {
    let mut best = 0;
    for (i, o) in outcomes.iter().enumerate().skip(1) {
        if o.mean_accuracy > outcomes[best].mean_accuracy {
            best = i;
        }
    }
    best
}

/// Repeated CV of a feature subset under a classifier spec. With a grid, the
/// returned outcome is the best pair, and its diagnostics cover every model
/// fitted during the search.
pub fn evaluate_subset(
    source: FeatureSource<'_>,
    labels: &[u8],
    splits: &[Split],
    cols: &[usize],
    spec: &ClassifierSpec,
) -> Result<CvOutcome> {
    let pairs = spec.pairs(cols.len())?;
    let outcomes = evaluate_pairs(source, labels, splits, cols, &pairs, &spec.smo)?;
    let mut diag = TrainDiagnostics::default();
    for o in &outcomes {
        diag.merge(&o.diagnostics);
    }
    let mut best = outcomes[best_index(&outcomes)].clone();
    best.diagnostics = diag;
    Ok(best)
}

/// Mean repeated-CV accuracy of all columns of `x`.
pub fn repeated_cv_accuracy(
    x: ArrayView2<'_, f64>,
    labels: &[u8],
    cfg: &CvConfig,
    spec: &ClassifierSpec,
) -> Result<CvOutcome> {
    let splits = make_splits(labels, cfg)?;
    let cols: Vec<usize> = (0..x.ncols()).collect();
    evaluate_subset(FeatureSource::Shared(x), labels, &splits, &cols, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::Hyper;

    fn labels(n0: usize, n1: usize) -> Vec<u8> {
        let mut v = vec![0; n0];
        v.extend(vec![1; n1]);
        v
    }

    #[test]
    fn stratified_counts_are_floored() {
        let y = labels(40, 69);
        let cfg = CvConfig { repeats: 5, ..CvConfig::default() };
        for s in make_splits(&y, &cfg).unwrap() {
            let v1 = s.validation.iter().filter(|&&i| y[i] == 1).count();
            let v0 = s.validation.len() - v1;
            assert_eq!((v0, v1), (8, 13));
            assert_eq!(s.train.len() + s.validation.len(), 109);
        }
    }

    #[test]
    fn splits_are_reproducible() {
        let y = labels(10, 12);
        let cfg = CvConfig { repeats: 4, seed: 3, ..CvConfig::default() };
        assert_eq!(make_splits(&y, &cfg).unwrap(), make_splits(&y, &cfg).unwrap());
        let other = CvConfig { seed: 4, ..cfg };
        assert_ne!(make_splits(&y, &cfg).unwrap(), make_splits(&y, &other).unwrap());
    }

    #[test]
    fn degenerate_inputs_rejected() {
        assert!(make_splits(&[1, 1, 1], &CvConfig::default()).is_err());
        // 20% of two samples per class floors to an empty validation set.
        assert!(make_splits(&labels(2, 2), &CvConfig::default()).is_err());
        let bad = CvConfig { validation_fraction: 1.0, ..CvConfig::default() };
        assert!(make_splits(&labels(5, 5), &bad).is_err());
    }

    #[test]
    fn unstratified_mode_draws_plain_fraction() {
        let y = labels(25, 25);
        let cfg = CvConfig { stratified: false, repeats: 3, ..CvConfig::default() };
        for s in make_splits(&y, &cfg).unwrap() {
            assert_eq!(s.validation.len(), 10);
        }
    }

    #[test]
    fn separable_data_scores_one() {
        let y = labels(15, 15);
        let x = Array2::from_shape_fn((30, 2), |(i, j)| {
            let base = if y[i] == 1 { 3.0 } else { -3.0 };
            base + 0.1 * ((i * 7 + j * 3) % 5) as f64
        });
        let spec = ClassifierSpec::default();
        let out = repeated_cv_accuracy(x.view(), &y, &CvConfig { repeats: 10, ..Default::default() }, &spec).unwrap();
        assert_eq!(out.mean_accuracy, 1.0);
        assert_eq!(out.mean_sensitivity, Some(1.0));
        assert!(out.diagnostics.invariants_hold(spec.smo.tol));
        assert_eq!(out.diagnostics.models, 10 * 20);
    }

    #[test]
    fn fixed_pairs_and_determinism() {
        let y = labels(12, 12);
        let x = Array2::from_shape_fn((24, 3), |(i, j)| ((i * 31 + j * 17) % 11) as f64);
        let spec = ClassifierSpec {
            hyper: Hyper::Fixed { c: 1.0, gamma: 0.3 },
            ..ClassifierSpec::default()
        };
        let cfg = CvConfig { repeats: 6, seed: 9, ..Default::default() };
        let a = repeated_cv_accuracy(x.view(), &y, &cfg, &spec).unwrap();
        let b = repeated_cv_accuracy(x.view(), &y, &cfg, &spec).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.c, a.gamma), (1.0, 0.3));
        assert_eq!(a.repeats.len(), 6);
    }

    #[test]
    fn per_split_source_shape_checked() {
        let y = labels(5, 5);
        let ms = vec![Array2::zeros((10, 2)); 2];
        let splits = make_splits(&y, &CvConfig { repeats: 3, validation_fraction: 0.4, ..Default::default() }).unwrap();
        let err = evaluate_pairs(FeatureSource::PerSplit(&ms), &y, &splits, &[0], &[(1.0, 1.0)], &SmoParams::default());
        assert!(err.is_err());
    }
}

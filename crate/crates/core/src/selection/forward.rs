//! Greedy forward feature selection.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cv::{evaluate_subset, make_splits, CvConfig, CvOutcome, FeatureSource, RepeatOutcome, TrainDiagnostics};
use crate::classifier::ClassifierSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxSize,
    NoImprovement,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::MaxSize => "max_size",
            StopReason::NoImprovement => "no_improvement",
        }
    }
}

/// One accepted selection step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub feature: usize,
    pub name: String,
    pub mean_accuracy: f64,
    pub c: f64,
    pub gamma: f64,
    pub mean_sensitivity: Option<f64>,
    pub mean_specificity: Option<f64>,
    pub repeats: Vec<RepeatOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub steps: Vec<SelectionStep>,
    pub stop_reason: StopReason,
    /// Solver health over every model fitted during the search.
    pub diagnostics: TrainDiagnostics,
}

impl SelectionTrace {
    pub fn features(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.feature).collect()
    }

    pub fn accuracies(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.mean_accuracy).collect()
    }

    pub fn final_step(&self) -> Option<&SelectionStep> {
        self.steps.last()
    }

    /// Distinct indices and strictly increasing accuracies.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.steps {
            if !seen.insert(s.feature) {
                return Err(Error::data(format!("selection trace repeats feature {}", s.feature)));
            }
        }
        if self.steps.windows(2).any(|w| w[1].mean_accuracy <= w[0].mean_accuracy) {
            return Err(Error::data("selection trace accuracies are not strictly increasing"));
        }
        Ok(())
    }

    /// `step,feature_name,mean_cv_accuracy`
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::data(format!("selection csv: {e}"));
        wr.write_record(["step", "feature_name", "mean_cv_accuracy"]).map_err(err)?;
        for (k, s) in self.steps.iter().enumerate() {
            wr.write_record([(k + 1).to_string(), s.name.clone(), s.mean_accuracy.to_string()])
                .map_err(err)?;
        }
        wr.flush().map_err(|e| Error::data(format!("selection csv: {e}")))?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        serde_json::to_vec_pretty(self).map_err(|e| Error::data(e.to_string()))
    }

    pub fn from_json(bytes: &[u8]) -> Result<SelectionTrace> {
        let t: SelectionTrace = serde_json::from_slice(bytes)
            .map_err(|e| Error::data(format!("bad selection trace: {e}")))?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<SelectionTrace> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        SelectionTrace::from_json(&bytes)
    }
}

fn step_from(feature: usize, name: &str, o: CvOutcome) -> SelectionStep {
    SelectionStep {
        feature,
        name: name.to_string(),
        mean_accuracy: o.mean_accuracy,
        c: o.c,
        gamma: o.gamma,
        mean_sensitivity: o.mean_sensitivity,
        mean_specificity: o.mean_specificity,
        repeats: o.repeats,
    }
}

/// Grow a subset one feature at a time, always adding the candidate with the
/// best mean CV accuracy (lowest index on ties). All candidates share one set
/// of splits. The search stops at `max_size` or when the best candidate fails
/// to strictly improve on the current subset.
pub fn greedy_forward_select(
    source: FeatureSource<'_>,
    labels: &[u8],
    cfg: &CvConfig,
    max_size: usize,
    spec: &ClassifierSpec,
    names: &[String],
) -> Result<SelectionTrace> {
    let p = source.n_features();
    if names.len() != p {
        return Err(Error::data(format!("selection: {} names for {p} features", names.len())));
    }
    if max_size > p {
        return Err(Error::config(format!(
            "selection: max_size {max_size} exceeds feature count {p}"
        )));
    }
    let mut trace = SelectionTrace {
        steps: Vec::new(),
        stop_reason: StopReason::MaxSize,
        diagnostics: TrainDiagnostics::default(),
    };
    if max_size == 0 {
        return Ok(trace);
    }
    let splits = make_splits(labels, cfg)?;
    let mut selected: Vec<usize> = Vec::new();
    while selected.len() < max_size {
        let candidates: Vec<usize> = (0..p).filter(|f| !selected.contains(f)).collect();
        let outcomes: Vec<CvOutcome> = candidates
            .par_iter()
            .map(|&f| {
                let mut cols = selected.clone();
                cols.push(f);
                evaluate_subset(source, labels, &splits, &cols, spec)
            })
            .collect::<Result<_>>()?;
        let mut best = 0;
        for (i, o) in outcomes.iter().enumerate() {
            trace.diagnostics.merge(&o.diagnostics);
            if o.mean_accuracy > outcomes[best].mean_accuracy {
                best = i;
            }
        }
        if let Some(last) = trace.steps.last() {
            if outcomes[best].mean_accuracy <= last.mean_accuracy {
                trace.stop_reason = StopReason::NoImprovement;
                return Ok(trace);
            }
        }
        let f = candidates[best];
        let chosen = outcomes.into_iter().nth(best).expect("best candidate");
        trace.steps.push(step_from(f, &names[f], chosen));
        selected.push(f);
    }
    Ok(trace)
}

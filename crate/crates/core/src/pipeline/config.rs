//! The run configuration: one TOML file that fixes every stage parameter.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::{ClassifierSpec, GridConfig, Hyper, SmoParams};
use crate::codebook::KMeansConfig;
use crate::data::RegionId;
use crate::encoding::HistogramNorm;
use crate::error::{Error, Result};
use crate::patching::PatchConfig;
use crate::selection::CvConfig;
use crate::synth::SynthConfig;

/// Which feature family the pipeline classifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Bow,
    MeanBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    /// When false the classifier is evaluated on the full feature vector.
    pub enabled: bool,
    pub max_size: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            enabled: true,
            max_size: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub training_ratios: Vec<f64>,
    pub render_words: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            training_ratios: vec![0.5, 0.6, 0.7, 0.8, 0.9],
            render_words: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Input dataset directory. Defaults to `<out>/dataset`.
    pub dataset: Option<PathBuf>,
    pub out: PathBuf,
    /// Master seed; every stage derives its streams from it.
    pub seed: u64,
    /// Worker threads; 0 uses every available core. Results do not depend on it.
    #[serde(skip_serializing)]
    pub workers: usize,
    pub mode: Mode,
    /// Learn codebooks inside each CV split from its training subjects only.
    pub honest_codebooks: bool,
    pub norm: HistogramNorm,
    /// Regions for the mean-value features. Defaults to every dataset region.
    pub baseline_regions: Option<Vec<RegionId>>,
    pub synth: Option<SynthConfig>,
    pub patch: PatchConfig,
    pub kmeans: KMeansConfig,
    pub cv: CvConfig,
    pub grid: GridConfig,
    pub smo: SmoParams,
    pub selection: SelectionConfig,
    pub evaluation: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            out: PathBuf::from("out"),
            seed: 0,
            workers: 0,
            mode: Mode::Bow,
            honest_codebooks: false,
            norm: HistogramNorm::Relative,
            baseline_regions: None,
            synth: None,
            patch: PatchConfig::default(),
            kmeans: KMeansConfig::default(),
            cv: CvConfig::default(),
            grid: GridConfig::default(),
            smo: SmoParams::default(),
            selection: SelectionConfig::default(),
            evaluation: EvalConfig::default(),
        }
    }
}

const SEEDED_SECTIONS: [&str; 3] = ["synth", "kmeans", "cv"];

impl RunConfig {
    /// Parse TOML. Seeds are set once at the top level; a `seed` key inside a
    /// stage section is rejected so that no stage can silently diverge.
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let table: toml::Table =
            toml::from_str(text).map_err(|e| Error::config(format!("config: {}", e.message())))?;
        for s in SEEDED_SECTIONS {
            if let Some(toml::Value::Table(t)) = table.get(s) {
                if t.contains_key("seed") {
                    return Err(Error::config(format!(
                        "config: [{s}] may not set seed; use the top-level seed"
                    )));
                }
            }
        }
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::config(format!("config: {}", e.message())))?;
        cfg.resolved()
    }

    /// Accepts a TOML run configuration or a `run.json` provenance record.
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("config: cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            let v: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| Error::config(format!("config: {e}")))?;
            let c = v
                .get("config")
                .ok_or_else(|| Error::config("config: run record has no config field"))?;
            let cfg: RunConfig = serde_json::from_value(c.clone())
                .map_err(|e| Error::config(format!("config: {e}")))?;
            cfg.resolved()
        } else {
            RunConfig::from_toml(&text)
        }
    }

    /// Propagate the master seed into the stage sections and validate.
    pub fn resolved(mut self) -> Result<RunConfig> {
        self.set_seed(self.seed);
        self.validate()?;
        Ok(self)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        if let Some(s) = self.synth.as_mut() {
            s.seed = seed;
        }
        self.kmeans.seed = seed;
        self.cv.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(s) = &self.synth {
            s.validate()?;
        }
        self.patch.validate()?;
        self.kmeans.validate()?;
        self.cv.validate()?;
        self.grid.pairs(1)?;
        if self.smo.tol.is_nan() || self.smo.tol <= 0.0 || self.smo.max_iter == 0 {
            return Err(Error::config("smo: tol and max_iter must be positive"));
        }
        if self.selection.enabled && self.selection.max_size == 0 {
            return Err(Error::config("selection: max_size must be positive when enabled"));
        }
        if self.evaluation.training_ratios.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
            return Err(Error::config("evaluation: training ratios must lie in (0, 1)"));
        }
        if self.out.as_os_str().is_empty() {
            return Err(Error::config("out: output directory must be set"));
        }
        Ok(())
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.dataset.clone().unwrap_or_else(|| self.out.join("dataset"))
    }

    pub fn classifier(&self) -> ClassifierSpec {
        ClassifierSpec {
            hyper: Hyper::Grid(self.grid.clone()),
            smo: self.smo,
        }
    }

    /// Codebook words per key: k control words and k mTBI words.
    pub fn words_per_key(&self) -> usize {
        2 * self.kmeans.k
    }
}

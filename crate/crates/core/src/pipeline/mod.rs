//! End-to-end stages: synthesize, extract, learn codebooks, encode, select, evaluate.
//!
//! Every stage reads its inputs from the output directory of earlier stages,
//! writes its own artifacts there and refreshes `run.json`.
//!
//! Output layout under `out`:
//!
//! ```text
//! dataset/                         synthetic dataset (when no input dataset is given)
//! patches/patches.csv              every extracted patch
//! codebooks/<METRIC>_<Region>.codebook.json, codebooks/index.json
//! features.csv                     subject_id,label,<feature columns>
//! selection.csv, selection.json    greedy trace (when selection is enabled)
//! model.json                       scaler + SVM trained on all subjects
//! metrics.json                     repeated-CV accuracy, sensitivity, specificity
//! eval/                            curves (CSV + SVG) and word images
//! run.json                         config, seed and SHA-256 of every artifact
//! ```

mod config;
mod provenance;

pub use config::{EvalConfig, Mode, RunConfig, SelectionConfig};
pub use provenance::{artifact_hashes, hash_file, sha256_hex, write_run_record, RunRecord, RUN_RECORD};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{signs, svm_train, Scaler, SvmModel};
use crate::codebook::{learn_codebook, Codebook, KMeansConfig};
use crate::data::{load_dataset, write_dataset, Dataset, FeatureKey, Manifest, MANIFEST_FILE};
use crate::encoding::{
    assemble_features, encode_histogram, mean_baseline_features, subject_patches, FeatureLayout,
    FeatureTable, HistogramNorm,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    cohort_histogram_contrast, render_words, subset_size_curve, svg, training_ratio_curve,
    write_contrast_csv, write_ratio_csv, write_subset_csv,
};
use crate::patching::{write_patch_csv, Patch, PatchConfig};
use crate::rng::mix;
use crate::selection::{
    evaluate_subset, greedy_forward_select, make_splits, FeatureSource, SelectionTrace, Split,
    StopReason, TrainDiagnostics,
};
use crate::synth::generate;

pub const FEATURES_FILE: &str = "features.csv";
pub const SELECTION_CSV: &str = "selection.csv";
pub const SELECTION_JSON: &str = "selection.json";
pub const MODEL_FILE: &str = "model.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const CODEBOOK_INDEX: &str = "index.json";

/// Seed domain for codebooks learned inside CV splits.
const HONEST_DOMAIN: u64 = 0x484f_4e45_5354;

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let bytes = serde_json::to_vec_pretty(v).map_err(|e| Error::data(e.to_string()))?;
    write_bytes(path, &bytes)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::data(format!("bad {what}: {e}")))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn remove_if_exists(path: &Path) -> Result<()> {
    match std::fs::remove_file(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(Error::io(path, e)),
        _ => Ok(()),
    }
}

/// Run `f` on a pool with `workers` threads (0: all cores).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Codebook keys of a dataset: corpus callosum then thalamus, metrics in canonical order.
pub fn bow_layout(ds: &Dataset, words_per_key: usize) -> Result<FeatureLayout> {
    let mut keys: Vec<FeatureKey> = ds.keys().iter().copied().filter(|k| k.region.supports_bow()).collect();
    if keys.is_empty() {
        return Err(Error::data("dataset has no corpus callosum or thalamus channels"));
    }
    keys.sort_by_key(|k| (k.region, k.metric));
    FeatureLayout::new(keys, words_per_key)
}

/// Patches per subject, per key.
pub type PatchBank = Vec<BTreeMap<FeatureKey, Vec<Patch>>>;

pub fn build_patch_bank(ds: &Dataset, keys: &[FeatureKey], cfg: &PatchConfig) -> Result<PatchBank> {
    ds.subjects()
        .par_iter()
        .map(|s| {
            keys.iter()
                .map(|&k| Ok((k, subject_patches(s, k, cfg)?)))
                .collect::<Result<BTreeMap<_, _>>>()
        })
        .collect()
}

/// Learn one merged codebook per layout key from the subjects in `subset`.
pub fn learn_codebooks(
    ds: &Dataset,
    bank: &PatchBank,
    subset: &[usize],
    layout: &FeatureLayout,
    kmeans: &KMeansConfig,
) -> Result<BTreeMap<FeatureKey, Codebook>> {
    let labels = ds.labels();
    layout
        .keys
        .par_iter()
        .map(|&key| {
            let gather = |label: u8| -> Vec<Patch> {
                subset
                    .iter()
                    .filter(|&&i| labels[i] == label)
                    .flat_map(|&i| bank[i][&key].iter().cloned())
                    .collect()
            };
            let cb = learn_codebook(&gather(0), &gather(1), key, kmeans.k, kmeans)?;
            Ok((key, cb))
        })
        .collect()
}

/// Histograms of every subject against `codebooks`, assembled in layout order.
pub fn encode_bank(
    ds: &Dataset,
    bank: &PatchBank,
    codebooks: &BTreeMap<FeatureKey, Codebook>,
    layout: &FeatureLayout,
    norm: HistogramNorm,
) -> Result<FeatureTable> {
    let rows = ds
        .subjects()
        .par_iter()
        .zip(bank.par_iter())
        .map(|(s, patches)| {
            let mut hists = BTreeMap::new();
            for k in &layout.keys {
                let cb = codebooks
                    .get(k)
                    .ok_or_else(|| Error::data(format!("no codebook for {k}")))?;
                let h = encode_histogram(&patches[k], cb, norm)
                    .map_err(|e| Error::data(format!("subject {:?}: {e}", s.id())))?;
                hists.insert(*k, h);
            }
            assemble_features(&hists, &s.clinical, layout)
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureTable::from_vectors(rows)
}

/// One feature matrix per split, with codebooks learned on that split's training subjects.
pub fn honest_split_matrices(
    ds: &Dataset,
    bank: &PatchBank,
    splits: &[Split],
    layout: &FeatureLayout,
    kmeans: &KMeansConfig,
    norm: HistogramNorm,
) -> Result<Vec<Array2<f64>>> {
    splits
        .par_iter()
        .enumerate()
        .map(|(r, split)| {
            let km = KMeansConfig {
                seed: mix(&[kmeans.seed, HONEST_DOMAIN, r as u64]),
                ..*kmeans
            };
            let cbs = learn_codebooks(ds, bank, &split.train, layout, &km)?;
            Ok(encode_bank(ds, bank, &cbs, layout, norm)?.values)
        })
        .collect()
}

fn clean_dir(path: &Path) -> Result<()> {
    match std::fs::remove_dir_all(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(Error::io(path, e)),
        _ => Ok(()),
    }
}

/// Generate the configured synthetic dataset into the dataset directory.
pub fn cmd_synth(cfg: &RunConfig) -> Result<PathBuf> {
    with_workers(cfg.workers, || {
        let sc = cfg
            .synth
            .as_ref()
            .ok_or_else(|| Error::config("synth: the config has no [synth] section"))?;
        let ds = generate(sc)?;
        let dir = cfg.dataset_dir();
        clean_dir(&dir)?;
        write_dataset(&ds, &dir)?;
        write_run_record(cfg, "synth")?;
        Ok(dir)
    })?
}

fn load_input(cfg: &RunConfig) -> Result<Dataset> {
    let dir = cfg.dataset_dir();
    if !dir.join(MANIFEST_FILE).is_file() {
        return Err(Error::config(format!(
            "dataset directory {} has no {MANIFEST_FILE}; set `dataset` or run synth first",
            dir.display()
        )));
    }
    load_dataset(&dir)
}

fn extract(cfg: &RunConfig, ds: &Dataset) -> Result<usize> {
    let keys = ds.keys().to_vec();
    let bank = build_patch_bank(ds, &keys, &cfg.patch)?;
    let all: Vec<Patch> = bank.into_iter().flat_map(|m| m.into_values().flatten()).collect();
    let bytes = csv_bytes(|b| write_patch_csv(&all, cfg.patch.dim(), b))?;
    write_bytes(&cfg.out.join("patches").join("patches.csv"), &bytes)?;
    Ok(all.len())
}

/// Dump every patch of every subject and channel to `patches/patches.csv`.
pub fn cmd_extract(cfg: &RunConfig) -> Result<usize> {
    with_workers(cfg.workers, || {
        let ds = load_input(cfg)?;
        let n = extract(cfg, &ds)?;
        write_run_record(cfg, "extract")?;
        Ok(n)
    })?
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CodebookIndex {
    fingerprint: String,
    files: BTreeMap<String, String>,
}

/// Hash of everything the codebooks depend on: dataset content, patch and
/// k-means parameters, and the key layout.
fn codebook_fingerprint(cfg: &RunConfig, layout: &FeatureLayout) -> Result<String> {
    let dir = cfg.dataset_dir();
    let mpath = dir.join(MANIFEST_FILE);
    let mbytes = std::fs::read(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest = Manifest::parse(&mbytes)?;
    let mut files = BTreeMap::new();
    files.insert(MANIFEST_FILE.to_string(), sha256_hex(&mbytes));
    for f in &manifest.files {
        files.insert(f.clone(), hash_file(&dir.join(f))?);
    }
    let v = serde_json::json!({
        "dataset": files,
        "patch": cfg.patch,
        "kmeans": cfg.kmeans,
        "keys": layout.keys,
    });
    Ok(sha256_hex(&serde_json::to_vec(&v).map_err(|e| Error::data(e.to_string()))?))
}

fn codebook_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out.join("codebooks")
}

fn learn_and_save_codebooks(
    cfg: &RunConfig,
    ds: &Dataset,
    bank: &PatchBank,
    layout: &FeatureLayout,
) -> Result<BTreeMap<FeatureKey, Codebook>> {
    let all: Vec<usize> = (0..ds.len()).collect();
    let cbs = learn_codebooks(ds, bank, &all, layout, &cfg.kmeans)?;
    let dir = codebook_dir(cfg);
    clean_dir(&dir)?;
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut files = BTreeMap::new();
    for cb in cbs.values() {
        let path = cb.save(&dir)?;
        files.insert(cb.file_name(), hash_file(&path)?);
    }
    let index = CodebookIndex {
        fingerprint: codebook_fingerprint(cfg, layout)?,
        files,
    };
    write_json(&dir.join(CODEBOOK_INDEX), &index)?;
    Ok(cbs)
}

/// Codebooks on disk, if their index matches the current inputs and every file is intact.
fn reusable_codebooks(cfg: &RunConfig, layout: &FeatureLayout) -> Result<Option<BTreeMap<FeatureKey, Codebook>>> {
    let dir = codebook_dir(cfg);
    let Ok(index) = read_json::<CodebookIndex>(&dir.join(CODEBOOK_INDEX), "codebook index") else {
        return Ok(None);
    };
    if index.fingerprint != codebook_fingerprint(cfg, layout)? {
        return Ok(None);
    }
    let mut out = BTreeMap::new();
    for key in &layout.keys {
        let name = crate::codebook::codebook_file_name(*key);
        let path = dir.join(&name);
        match (index.files.get(&name), hash_file(&path)) {
            (Some(h), Ok(actual)) if *h == actual => {
                out.insert(*key, Codebook::load(&path)?);
            }
            _ => return Ok(None),
        }
    }
    Ok(Some(out))
}

/// Learn codebooks on all subjects and write them with an input fingerprint.
pub fn cmd_codebook(cfg: &RunConfig) -> Result<usize> {
    with_workers(cfg.workers, || {
        let ds = load_input(cfg)?;
        let layout = bow_layout(&ds, cfg.words_per_key())?;
        let bank = build_patch_bank(&ds, &layout.keys, &cfg.patch)?;
        let cbs = learn_and_save_codebooks(cfg, &ds, &bank, &layout)?;
        write_run_record(cfg, "codebook")?;
        Ok(cbs.len())
    })?
}

/// Features for the configured mode. Bag-of-words encoding reuses codebooks
/// whose fingerprint matches and learns them otherwise.
fn encode(cfg: &RunConfig, ds: &Dataset) -> Result<FeatureTable> {
    let table = match cfg.mode {
        Mode::Bow => {
            let layout = bow_layout(ds, cfg.words_per_key())?;
            let bank = build_patch_bank(ds, &layout.keys, &cfg.patch)?;
            let cbs = match reusable_codebooks(cfg, &layout)? {
                Some(c) => c,
                None => learn_and_save_codebooks(cfg, ds, &bank, &layout)?,
            };
            encode_bank(ds, &bank, &cbs, &layout, cfg.norm)?
        }
        Mode::MeanBaseline => {
            let regions = match &cfg.baseline_regions {
                Some(r) => r.clone(),
                None => {
                    let mut r: Vec<_> = ds.keys().iter().map(|k| k.region).collect();
                    r.sort();
                    r.dedup();
                    r
                }
            };
            mean_baseline_features(ds, &regions)?
        }
    };
    table.save(cfg.out.join(FEATURES_FILE))?;
    Ok(table)
}

/// Write `features.csv` for the configured mode.
pub fn cmd_encode(cfg: &RunConfig) -> Result<FeatureTable> {
    with_workers(cfg.workers, || {
        let ds = load_input(cfg)?;
        let t = encode(cfg, &ds)?;
        write_run_record(cfg, "encode")?;
        Ok(t)
    })?
}

/// SVM trained on all subjects with the selected columns and chosen (C, γ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBundle {
    pub feature_names: Vec<String>,
    pub scaler: Scaler,
    pub svm: SvmModel,
}

impl ModelBundle {
    /// Predicted label (1 = mTBI) and decision value for one raw feature row.
    pub fn predict(&self, row: &[f64]) -> Result<(u8, f64)> {
        let z = self.scaler.apply_row(row)?;
        let (s, d) = self.svm.predict(&z)?;
        Ok((u8::from(s > 0.0), d))
    }
}

/// Headline figures of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub mode: Mode,
    pub honest_codebooks: bool,
    pub n_subjects: usize,
    pub n_features: usize,
    pub selected_features: Vec<String>,
    pub stop_reason: Option<StopReason>,
    pub accuracy: f64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub c: f64,
    pub gamma: f64,
    pub cv_repeats: usize,
    pub diagnostics: TrainDiagnostics,
}

impl RunMetrics {
    pub fn load(path: impl AsRef<Path>) -> Result<RunMetrics> {
        read_json(path.as_ref(), "metrics file")
    }
}

fn select(cfg: &RunConfig, ds: Option<&Dataset>, table: &FeatureTable) -> Result<RunMetrics> {
    let labels = &table.labels;
    let spec = cfg.classifier();
    let splits = make_splits(labels, &cfg.cv)?;
    let honest = cfg.honest_codebooks && cfg.mode == Mode::Bow;
    let per_split;
    let source = if honest {
        let ds = ds.ok_or_else(|| Error::config("select: honest codebooks need the dataset"))?;
        let ids: Vec<&str> = ds.subjects().iter().map(|s| s.id()).collect();
        if ids.iter().ne(table.subject_ids.iter()) {
            return Err(Error::data("select: features.csv rows do not match the dataset"));
        }
        let layout = bow_layout(ds, cfg.words_per_key())?;
        if layout.names() != table.names {
            return Err(Error::data("select: features.csv columns do not match the layout"));
        }
        let bank = build_patch_bank(ds, &layout.keys, &cfg.patch)?;
        per_split = honest_split_matrices(ds, &bank, &splits, &layout, &cfg.kmeans, cfg.norm)?;
        FeatureSource::PerSplit(&per_split)
    } else {
        FeatureSource::Shared(table.values.view())
    };

    let csv_path = cfg.out.join(SELECTION_CSV);
    let json_path = cfg.out.join(SELECTION_JSON);
    let (cols, outcome, diagnostics, stop_reason) = if cfg.selection.enabled {
        let trace = greedy_forward_select(source, labels, &cfg.cv, cfg.selection.max_size, &spec, &table.names)?;
        write_bytes(&csv_path, &csv_bytes(|b| trace.write_csv(b))?)?;
        write_bytes(&json_path, &trace.to_json()?)?;
        let last = trace
            .final_step()
            .ok_or_else(|| Error::numeric("select: empty selection trace"))?;
        let outcome = (last.mean_accuracy, last.mean_sensitivity, last.mean_specificity, last.c, last.gamma);
        (trace.features(), outcome, trace.diagnostics, Some(trace.stop_reason))
    } else {
        remove_if_exists(&csv_path)?;
        remove_if_exists(&json_path)?;
        let cols: Vec<usize> = (0..table.n_features()).collect();
        let o = evaluate_subset(source, labels, &splits, &cols, &spec)?;
        let outcome = (o.mean_accuracy, o.mean_sensitivity, o.mean_specificity, o.c, o.gamma);
        (cols, outcome, o.diagnostics, None)
    };
    let (accuracy, sensitivity, specificity, c, gamma) = outcome;
    let mut diagnostics = diagnostics;

    let x = table.values.select(Axis(1), &cols);
    let scaler = Scaler::fit(x.view())?;
    let z = scaler.apply(x.view())?;
    let (svm, report) = svm_train(z.view(), &signs(labels), c, gamma, &cfg.smo)?;
    diagnostics.absorb(&report);
    let selected_features: Vec<String> = cols.iter().map(|&j| table.names[j].clone()).collect();
    write_json(
        &cfg.out.join(MODEL_FILE),
        &ModelBundle {
            feature_names: selected_features.clone(),
            scaler,
            svm,
        },
    )?;
    let metrics = RunMetrics {
        mode: cfg.mode,
        honest_codebooks: honest,
        n_subjects: table.subject_ids.len(),
        n_features: table.n_features(),
        selected_features,
        stop_reason,
        accuracy,
        sensitivity,
        specificity,
        c,
        gamma,
        cv_repeats: cfg.cv.repeats,
        diagnostics,
    };
    write_json(&cfg.out.join(METRICS_FILE), &metrics)?;
    Ok(metrics)
}

fn load_features(cfg: &RunConfig) -> Result<FeatureTable> {
    let path = cfg.out.join(FEATURES_FILE);
    if !path.is_file() {
        return Err(Error::config(format!("{} is missing; run encode first", path.display())));
    }
    FeatureTable::load(path)
}

/// Repeated-CV selection (or full-vector evaluation) and the final model.
pub fn cmd_select(cfg: &RunConfig) -> Result<RunMetrics> {
    with_workers(cfg.workers, || {
        let table = load_features(cfg)?;
        let ds = if cfg.honest_codebooks && cfg.mode == Mode::Bow {
            Some(load_input(cfg)?)
        } else {
            None
        };
        let m = select(cfg, ds.as_ref(), &table)?;
        write_run_record(cfg, "select")?;
        Ok(m)
    })?
}

fn evaluate(cfg: &RunConfig, table: &FeatureTable, metrics: &RunMetrics) -> Result<()> {
    let dir = cfg.out.join("eval");
    clean_dir(&dir)?;
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let trace_path = cfg.out.join(SELECTION_JSON);
    if cfg.selection.enabled {
        let trace = SelectionTrace::load(&trace_path)?;
        let rows = subset_size_curve(&trace);
        write_bytes(&dir.join("subset_size.csv"), &csv_bytes(|b| write_subset_csv(&rows, b))?)?;
        let pts = rows.iter().map(|r| (r.size as f64, r.accuracy)).collect();
        let plot = svg::line_plot(
            "Accuracy by selected subset size",
            "subset size",
            "mean CV accuracy",
            &[svg::Series { label: "accuracy", points: pts }],
        );
        write_bytes(&dir.join("subset_size.svg"), plot.as_bytes())?;
    }

    let cols: Vec<usize> = metrics
        .selected_features
        .iter()
        .map(|n| {
            table
                .names
                .iter()
                .position(|t| t == n)
                .ok_or_else(|| Error::data(format!("evaluate: feature {n:?} not in features.csv")))
        })
        .collect::<Result<_>>()?;
    if !cfg.evaluation.training_ratios.is_empty() {
        let x = table.values.select(Axis(1), &cols);
        let rows = training_ratio_curve(
            x.view(),
            &table.labels,
            &cfg.evaluation.training_ratios,
            &cfg.cv,
            &cfg.classifier(),
        )?;
        write_bytes(&dir.join("training_ratio.csv"), &csv_bytes(|b| write_ratio_csv(&rows, b))?)?;
        let series = |label, f: &dyn Fn(&crate::evaluation::RatioRow) -> Option<f64>| svg::Series {
            label,
            points: rows.iter().filter_map(|r| f(r).map(|v| (r.ratio, v))).collect(),
        };
        let plot = svg::line_plot(
            "Cross-validation by training ratio",
            "training ratio",
            "rate",
            &[
                series("accuracy", &|r| Some(r.accuracy)),
                series("sensitivity", &|r| r.sensitivity),
                series("specificity", &|r| r.specificity),
            ],
        );
        write_bytes(&dir.join("training_ratio.svg"), plot.as_bytes())?;
    }

    let contrast = cohort_histogram_contrast(table)?;
    write_bytes(&dir.join("contrast.csv"), &csv_bytes(|b| write_contrast_csv(&contrast, b))?)?;
    let hist_cols: Vec<usize> = (0..contrast.len())
        .filter(|&j| !contrast[j].name.starts_with("clin."))
        .collect();
    let mk = |label, f: fn(&crate::evaluation::ContrastRow) -> f64| svg::Series {
        label,
        points: hist_cols.iter().map(|&j| (j as f64, f(&contrast[j]))).collect(),
    };
    let plot = svg::line_plot(
        "Cohort mean features",
        "feature index",
        "mean value",
        &[
            mk("control", |r| r.mean_control),
            mk("mTBI", |r| r.mean_mtbi),
            mk("mTBI minus control", |r| r.difference),
        ],
    );
    write_bytes(&dir.join("contrast.svg"), plot.as_bytes())?;

    if cfg.mode == Mode::Bow && cfg.evaluation.render_words {
        let cb_dir = codebook_dir(cfg);
        let index: CodebookIndex = read_json(&cb_dir.join(CODEBOOK_INDEX), "codebook index")?;
        for name in index.files.keys() {
            let cb = Codebook::load(cb_dir.join(name))?;
            render_words(&cb, dir.join("words"))?;
        }
    }
    Ok(())
}

/// Curves, cohort contrast and word images from the persisted artifacts.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<()> {
    with_workers(cfg.workers, || {
        let table = load_features(cfg)?;
        let metrics = RunMetrics::load(cfg.out.join(METRICS_FILE))?;
        evaluate(cfg, &table, &metrics)?;
        write_run_record(cfg, "evaluate")?;
        Ok(())
    })?
}

/// All stages in order. A `[synth]` section regenerates the dataset first.
pub fn cmd_pipeline(cfg: &RunConfig) -> Result<(RunMetrics, RunRecord)> {
    with_workers(cfg.workers, || {
        if let Some(sc) = &cfg.synth {
            let dir = cfg.dataset_dir();
            clean_dir(&dir)?;
            write_dataset(&generate(sc)?, &dir)?;
        }
        let ds = load_input(cfg)?;
        extract(cfg, &ds)?;
        let table = encode(cfg, &ds)?;
        let metrics = select(cfg, Some(&ds), &table)?;
        evaluate(cfg, &table, &metrics)?;
        let rec = write_run_record(cfg, "pipeline")?;
        Ok((metrics, rec))
    })?
}

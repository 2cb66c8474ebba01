//! End-to-end use of the public library API: generate, persist, reload,
//! patch, learn codebooks, encode and classify.

use voxbow::classifier::{signs, svm_train, Scaler, SmoParams, SvmModel};
use voxbow::codebook::{learn_codebook, nearest_word, Codebook, KMeansConfig};
use voxbow::data::{load_dataset, write_dataset, Cohort, MetricId, Subject};
use voxbow::encoding::{encode_histogram, HistogramNorm};
use voxbow::patching::{extract_patches, Patch, PatchConfig};
use voxbow::synth::{generate, SynthConfig};

fn small() -> SynthConfig {
    SynthConfig {
        n_control: 4,
        n_mtbi: 4,
        dims: [1, 32, 32],
        metrics: vec![MetricId::Fa],
        seed: 11,
        ..SynthConfig::default()
    }
}

fn patches_of(subjects: &[&Subject], cfg: &PatchConfig) -> Vec<Vec<Patch>> {
    subjects
        .iter()
        .map(|s| {
            let (_, ch) = s.channels.iter().next().expect("one channel");
            extract_patches(&ch.volume, &ch.mask, cfg).unwrap()
        })
        .collect()
}

#[test]
fn dataset_survives_disk_round_trip() {
    let ds = generate(&small()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&ds, dir.path()).unwrap();
    let back = load_dataset(dir.path()).unwrap();
    assert_eq!(back.len(), ds.len());
    assert_eq!(back.keys(), ds.keys());
    assert_eq!(back.labels(), ds.labels());
    for (a, b) in ds.subjects().iter().zip(back.subjects()) {
        assert_eq!(a.clinical, b.clinical);
        for (k, ca) in &a.channels {
            let cb = &b.channels[k];
            assert_eq!(*ca.volume, *cb.volume);
            assert_eq!(*ca.mask, *cb.mask);
        }
    }
}

#[test]
fn synthetic_generation_is_seeded() {
    let a = generate(&small()).unwrap();
    let b = generate(&small()).unwrap();
    let c = generate(&SynthConfig { seed: 12, ..small() }).unwrap();
    let first = |d: &voxbow::data::Dataset| {
        d.subjects()[0].channels.values().next().unwrap().volume.voxels().to_vec()
    };
    assert_eq!(first(&a), first(&b));
    assert_ne!(first(&a), first(&c));
}

#[test]
fn codebook_encoding_and_classifier_compose() {
    let ds = generate(&small()).unwrap();
    let pcfg = PatchConfig::default();
    let controls: Vec<&Subject> =
        ds.subjects().iter().filter(|s| s.cohort() == Cohort::Control).collect();
    let mtbi: Vec<&Subject> =
        ds.subjects().iter().filter(|s| s.cohort() == Cohort::Mtbi).collect();
    let pc: Vec<Patch> = patches_of(&controls, &pcfg).concat();
    let pm: Vec<Patch> = patches_of(&mtbi, &pcfg).concat();
    let key = ds.keys()[0];
    let kcfg = KMeansConfig { k: 2, n_restarts: 2, ..KMeansConfig::default() };
    let cb = learn_codebook(&pc, &pm, key, 2, &kcfg).unwrap();
    assert_eq!(cb.k_total(), 4);
    assert_eq!(Codebook::from_json(&cb.to_json().unwrap()).unwrap(), cb);
    for w in &cb.words {
        assert_eq!(nearest_word(w, &cb).unwrap(), cb.words.iter().position(|x| x == w).unwrap());
    }

    let rows: Vec<Vec<f64>> = patches_of(&ds.subjects().iter().collect::<Vec<_>>(), &pcfg)
        .iter()
        .map(|p| encode_histogram(p, &cb, HistogramNorm::Relative).unwrap())
        .collect();
    for h in &rows {
        assert_eq!(h.len(), 4);
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    let x = ndarray::Array2::from_shape_fn((rows.len(), 4), |(i, j)| rows[i][j]);
    let y = signs(&ds.labels());
    let scaler = Scaler::fit(x.view()).unwrap();
    let xs = scaler.apply(x.view()).unwrap();
    let (model, report) = svm_train(xs.view(), &y, 1.0, 0.25, &SmoParams::default()).unwrap();
    assert!(report.converged);
    let again = SvmModel::from_json(&model.to_json().unwrap()).unwrap();
    for row in xs.rows() {
        let r = row.to_vec();
        assert_eq!(again.decision_value(&r).unwrap(), model.decision_value(&r).unwrap());
    }
}

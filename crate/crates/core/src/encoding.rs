//! Bag-of-words histograms, full feature vectors, and mean-value baseline features.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codebook::{nearest_word, Codebook};
use crate::data::{
    ClinicalRecord, Dataset, FeatureKey, MetricId, RegionId, Subject, COVARIATE_NAMES,
};
use crate::error::{Error, Result};
use crate::patching::{extract_patches, Patch, PatchConfig};

/// How histogram counts are scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistogramNorm {
    /// Relative frequencies summing to one.
    #[default]
    Relative,
    /// Raw assignment counts.
    Counts,
}

/// Histogram of nearest-word assignments over the codebook.
pub fn encode_histogram(patches: &[Patch], cb: &Codebook, norm: HistogramNorm) -> Result<Vec<f64>> {
    if patches.is_empty() {
        return Err(Error::data(format!("no patches for key {}", cb.key)));
    }
    let mut counts = vec![0.0; cb.k_total()];
    for p in patches {
        if p.key != cb.key {
            return Err(Error::data(format!(
                "patch for {} encoded with codebook {}",
                p.key, cb.key
            )));
        }
        counts[nearest_word(&p.values, cb)?] += 1.0;
    }
    if norm == HistogramNorm::Relative {
        let n = patches.len() as f64;
        counts.iter_mut().for_each(|c| *c /= n);
    }
    Ok(counts)
}

/// Ordered codebook keys plus the clinical covariates appended after them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub keys: Vec<FeatureKey>,
    pub words_per_key: usize,
    pub clinical: Vec<String>,
}

impl FeatureLayout {
    /// Nine metrics in the corpus callosum, then FA, MD, AK, MK, RK in the thalamus.
    pub fn standard(words_per_key: usize) -> FeatureLayout {
        let mut keys: Vec<FeatureKey> = MetricId::ALL
            .iter()
            .map(|&m| FeatureKey::new(m, RegionId::CorpusCallosum))
            .collect();
        keys.extend(
            MetricId::THALAMUS
                .iter()
                .map(|&m| FeatureKey::new(m, RegionId::Thalamus)),
        );
        FeatureLayout {
            keys,
            words_per_key,
            clinical: COVARIATE_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Layout over an explicit key list, validated for bag-of-words use.
    pub fn new(keys: Vec<FeatureKey>, words_per_key: usize) -> Result<FeatureLayout> {
        let l = FeatureLayout {
            keys,
            words_per_key,
            clinical: COVARIATE_NAMES.iter().map(|s| s.to_string()).collect(),
        };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        if self.words_per_key == 0 {
            return Err(Error::config("layout: words_per_key must be positive"));
        }
        let mut seen = HashSet::new();
        for k in &self.keys {
            if !k.region.supports_bow() {
                return Err(Error::config(format!(
                    "layout: bag-of-words features are only defined for corpus callosum and \
                     thalamus, got {}",
                    k.region
                )));
            }
            if !seen.insert(*k) {
                return Err(Error::config(format!("layout: duplicate key {k}")));
            }
        }
        if self.clinical.iter().ne(COVARIATE_NAMES.iter()) {
            return Err(Error::config("layout: clinical covariates must be the six standard ones"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.keys.len() * self.words_per_key + self.clinical.len()
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim());
        for k in &self.keys {
            for w in 0..self.words_per_key {
                names.push(format!("{}.{}.word{w:02}", k.region.short(), k.metric));
            }
        }
        names.extend(self.clinical.iter().map(|c| format!("clin.{c}")));
        names
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectFeatureVector {
    pub subject_id: String,
    pub values: Vec<f64>,
    pub names: Vec<String>,
    pub label: u8,
}

/// Concatenate histograms in layout order and append the clinical covariates.
pub fn assemble_features(
    histograms: &BTreeMap<FeatureKey, Vec<f64>>,
    clinical: &ClinicalRecord,
    layout: &FeatureLayout,
) -> Result<SubjectFeatureVector> {
    layout.validate()?;
    if let Some(extra) = histograms.keys().find(|k| !layout.keys.contains(k)) {
        return Err(Error::data(format!("histogram for {extra} is not in the layout")));
    }
    let mut values = Vec::with_capacity(layout.dim());
    for k in &layout.keys {
        let h = histograms
            .get(k)
            .ok_or_else(|| Error::data(format!("missing histogram for {k}")))?;
        if h.len() != layout.words_per_key {
            return Err(Error::data(format!(
                "histogram for {k} has {} bins, layout expects {}",
                h.len(),
                layout.words_per_key
            )));
        }
        values.extend_from_slice(h);
    }
    values.extend(clinical.covariates());
    Ok(SubjectFeatureVector {
        subject_id: clinical.subject_id.clone(),
        values,
        names: layout.names(),
        label: clinical.label(),
    })
}

/// Subjects × features, with names and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub subject_ids: Vec<String>,
    pub labels: Vec<u8>,
    pub names: Vec<String>,
    pub values: Array2<f64>,
}

impl FeatureTable {
    pub fn from_vectors(rows: Vec<SubjectFeatureVector>) -> Result<FeatureTable> {
        let names = rows.first().map(|r| r.names.clone()).unwrap_or_default();
        let d = names.len();
        let mut flat = Vec::with_capacity(rows.len() * d);
        let mut ids = Vec::with_capacity(rows.len());
        let mut labels = Vec::with_capacity(rows.len());
        for r in rows {
            if r.names != names || r.values.len() != d {
                return Err(Error::data("feature vectors do not share a layout"));
            }
            flat.extend(r.values);
            ids.push(r.subject_id);
            labels.push(r.label);
        }
        let values = Array2::from_shape_vec((ids.len(), d), flat)
            .map_err(|e| Error::data(e.to_string()))?;
        FeatureTable::new(ids, labels, names, values)
    }

    pub fn new(
        subject_ids: Vec<String>,
        labels: Vec<u8>,
        names: Vec<String>,
        values: Array2<f64>,
    ) -> Result<FeatureTable> {
        if values.nrows() != subject_ids.len() || labels.len() != subject_ids.len() {
            return Err(Error::data("feature table: row counts disagree"));
        }
        if values.ncols() != names.len() {
            return Err(Error::data("feature table: column counts disagree"));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::data(format!("feature table: duplicate column {dup:?}")));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::data("feature table: labels must be 0 or 1"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("feature table: non-finite value"));
        }
        Ok(FeatureTable {
            subject_ids,
            labels,
            names,
            values,
        })
    }

    pub fn n_features(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> SubjectFeatureVector {
        SubjectFeatureVector {
            subject_id: self.subject_ids[i].clone(),
            values: self.values.row(i).to_vec(),
            names: self.names.clone(),
            label: self.labels[i],
        }
    }

    /// CSV with header `subject_id,label,<names...>`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::data(format!("feature csv: {e}"));
        let mut header = vec!["subject_id".to_string(), "label".to_string()];
        header.extend(self.names.iter().cloned());
        wtr.write_record(&header).map_err(err)?;
        for (i, id) in self.subject_ids.iter().enumerate() {
            let mut rec = vec![id.clone(), self.labels[i].to_string()];
            rec.extend(self.values.row(i).iter().map(|v| v.to_string()));
            wtr.write_record(&rec).map_err(err)?;
        }
        wtr.flush().map_err(|e| Error::data(e.to_string()))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<FeatureTable> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let err = |e: csv::Error| Error::data(format!("feature csv: {e}"));
        let header = rdr.headers().map_err(err)?.clone();
        if header.len() < 2 || &header[0] != "subject_id" || &header[1] != "label" {
            return Err(Error::data("feature csv: header must start with subject_id,label"));
        }
        let names: Vec<String> = header.iter().skip(2).map(|s| s.to_string()).collect();
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        let mut flat = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(err)?;
            ids.push(rec[0].to_string());
            labels.push(match &rec[1] {
                "0" => 0,
                "1" => 1,
                other => return Err(Error::data(format!("feature csv: bad label {other:?}"))),
            });
            for v in rec.iter().skip(2) {
                flat.push(
                    v.parse::<f64>()
                        .map_err(|_| Error::data(format!("feature csv: bad number {v:?}")))?,
                );
            }
        }
        let values = Array2::from_shape_vec((ids.len(), names.len()), flat)
            .map_err(|e| Error::data(e.to_string()))?;
        FeatureTable::new(ids, labels, names, values)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<FeatureTable> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        FeatureTable::read_csv(std::io::BufReader::new(f))
    }
}

/// All patches of one subject for one key.
pub fn subject_patches(s: &Subject, key: FeatureKey, cfg: &PatchConfig) -> Result<Vec<Patch>> {
    let ch = s
        .channels
        .get(&key)
        .ok_or_else(|| Error::data(format!("subject {:?} has no channel {key}", s.id())))?;
    extract_patches(&ch.volume, &ch.mask, cfg)
}

/// Encode `subjects` of `ds` (by index) against per-key codebooks.
pub fn encode_subjects(
    ds: &Dataset,
    subjects: &[usize],
    codebooks: &BTreeMap<FeatureKey, Codebook>,
    layout: &FeatureLayout,
    patch_cfg: &PatchConfig,
    norm: HistogramNorm,
) -> Result<FeatureTable> {
    layout.validate()?;
    for k in &layout.keys {
        let cb = codebooks
            .get(k)
            .ok_or_else(|| Error::data(format!("no codebook for {k}")))?;
        if cb.k_total() != layout.words_per_key {
            return Err(Error::data(format!(
                "codebook {k} has {} words, layout expects {}",
                cb.k_total(),
                layout.words_per_key
            )));
        }
    }
    let rows = subjects
        .par_iter()
        .map(|&i| {
            let s = &ds.subjects()[i];
            let mut hists = BTreeMap::new();
            for k in &layout.keys {
                let patches = subject_patches(s, *k, patch_cfg)?;
                let h = encode_histogram(&patches, &codebooks[k], norm).map_err(|e| {
                    Error::data(format!("subject {:?}: {e}", s.id()))
                })?;
                hists.insert(*k, h);
            }
            assemble_features(&hists, &s.clinical, layout)
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureTable::from_vectors(rows)
}

/// Arithmetic mean of the masked voxels.
pub fn masked_mean(voxels: &[f64], mask: &[bool]) -> Option<f64> {
    let (sum, n) = voxels
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Per-(metric, region) ROI means for every dataset key whose region is listed,
/// followed by the clinical covariates. Columns are ordered by `regions`, then
/// by metric.
pub fn mean_baseline_features(ds: &Dataset, regions: &[RegionId]) -> Result<FeatureTable> {
    let mut keys = Vec::new();
    for &r in regions {
        let mut ks: Vec<FeatureKey> = ds.keys().iter().copied().filter(|k| k.region == r).collect();
        if ks.is_empty() {
            return Err(Error::data(format!("dataset has no channels in region {r}")));
        }
        ks.sort_by_key(|k| k.metric);
        keys.extend(ks);
    }
    let mut names: Vec<String> = keys
        .iter()
        .map(|k| format!("mean.{}.{}", k.region.short(), k.metric))
        .collect();
    names.extend(COVARIATE_NAMES.iter().map(|c| format!("clin.{c}")));
    let rows = ds
        .subjects()
        .iter()
        .map(|s| {
            let mut values = Vec::with_capacity(names.len());
            for k in &keys {
                let ch = &s.channels[k];
                let m = masked_mean(ch.volume.voxels(), ch.mask.bits()).ok_or_else(|| {
                    Error::data(format!("subject {:?}: empty mask for {k}", s.id()))
                })?;
                values.push(m);
            }
            values.extend(s.clinical.covariates());
            Ok(SubjectFeatureVector {
                subject_id: s.id().to_string(),
                values,
                names: names.clone(),
                label: s.clinical.label(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureTable::from_vectors(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Channel, Cohort, Dims, MetricVolume, RoiMask};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn record(id: &str, label: u8) -> ClinicalRecord {
        ClinicalRecord {
            subject_id: id.into(),
            age: 40.0,
            sex: 0,
            stroop: 1.0,
            sdmt: 2.0,
            cvlt: 3.0,
            fss: 4.0,
            cohort: Cohort::from_label(label).unwrap(),
        }
    }

    fn cb3(key: FeatureKey) -> Codebook {
        Codebook::new(
            key,
            1,
            vec![vec![0.0], vec![10.0], vec![20.0]],
            vec![Cohort::Control, Cohort::Control, Cohort::Mtbi],
        )
        .unwrap()
    }

    fn patch(v: f64, key: FeatureKey) -> Patch {
        Patch {
            values: vec![v],
            origin: (0, 0, 0),
            key,
            subject_id: "s".into(),
        }
    }

    #[test]
    fn histogram_examples() {
        let key = FeatureKey::new(MetricId::Fa, RegionId::Thalamus);
        let cb = cb3(key);
        // Nearest-word assignments by hand: 1 -> 0, -4 -> 0, 9 -> 1, 16 -> 2.
        let ps: Vec<_> = [1.0, -4.0, 9.0, 16.0].iter().map(|&v| patch(v, key)).collect();
        assert_eq!(encode_histogram(&ps, &cb, HistogramNorm::Relative).unwrap(), vec![0.5, 0.25, 0.25]);
        assert_eq!(encode_histogram(&ps, &cb, HistogramNorm::Counts).unwrap(), vec![2.0, 1.0, 1.0]);
        let all0: Vec<_> = (0..5).map(|_| patch(0.1, key)).collect();
        assert_eq!(encode_histogram(&all0, &cb, HistogramNorm::Relative).unwrap(), vec![1.0, 0.0, 0.0]);
        let err = encode_histogram(&[], &cb, HistogramNorm::Relative).unwrap_err();
        assert!(err.to_string().contains("no patches for key"));
    }

    #[test]
    fn default_layout_is_286() {
        let l = FeatureLayout::standard(20);
        assert_eq!(l.dim(), 286);
        let names = l.names();
        assert_eq!(names.len(), 286);
        assert_eq!(names[7], "CC.AWF.word07");
        assert_eq!(names[180], "Thal.FA.word00");
        assert_eq!(names[285], "clin.fss");
        let uniq: HashSet<_> = names.iter().collect();
        assert_eq!(uniq.len(), 286);
    }

    #[test]
    fn layout_rejects_baseline_regions() {
        let k = FeatureKey::new(MetricId::Fa, RegionId::CcBody);
        assert!(FeatureLayout::new(vec![k], 20).is_err());
    }

    #[test]
    fn single_key_assembly() {
        let key = FeatureKey::new(MetricId::Md, RegionId::CorpusCallosum);
        let l = FeatureLayout::new(vec![key], 20).unwrap();
        let mut h = BTreeMap::new();
        h.insert(key, vec![0.05; 20]);
        let v = assemble_features(&h, &record("s", 1), &l).unwrap();
        assert_eq!(v.values.len(), 26);
        assert_eq!(v.names.len(), 26);
        assert_eq!(&v.values[20..], &[40.0, 0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn assembly_is_order_independent_and_strict() {
        let a = FeatureKey::new(MetricId::Fa, RegionId::CorpusCallosum);
        let b = FeatureKey::new(MetricId::Awf, RegionId::CorpusCallosum);
        let l = FeatureLayout::new(vec![a, b], 2).unwrap();
        let mut h1 = BTreeMap::new();
        h1.insert(a, vec![1.0, 0.0]);
        h1.insert(b, vec![0.0, 1.0]);
        let mut h2 = BTreeMap::new();
        h2.insert(b, vec![0.0, 1.0]);
        h2.insert(a, vec![1.0, 0.0]);
        let r = record("s", 0);
        let v1 = assemble_features(&h1, &r, &l).unwrap();
        assert_eq!(v1, assemble_features(&h2, &r, &l).unwrap());
        assert_eq!(&v1.values[..4], &[1.0, 0.0, 0.0, 1.0]);
        h2.remove(&a);
        assert!(assemble_features(&h2, &r, &l).is_err());
        h1.insert(FeatureKey::new(MetricId::Md, RegionId::Thalamus), vec![1.0, 0.0]);
        assert!(assemble_features(&h1, &r, &l).is_err());
    }

    fn tiny_dataset(values: &[f64], bits: &[bool]) -> Dataset {
        let d = Dims::new(1, 1, values.len()).unwrap();
        let key = FeatureKey::new(MetricId::Awf, RegionId::CcBody);
        let ch = Channel {
            volume: Arc::new(MetricVolume::new("s", key.metric, d, values.to_vec()).unwrap()),
            mask: Arc::new(RoiMask::new(key.region, d, bits.to_vec()).unwrap()),
        };
        Dataset::new(vec![Subject {
            clinical: record("s", 1),
            channels: [(key, ch)].into_iter().collect(),
        }])
        .unwrap()
    }

    #[test]
    fn mean_baseline_examples() {
        let ds = tiny_dataset(&[1.0, 5.0, 3.0], &[true, false, true]);
        let t = mean_baseline_features(&ds, &[RegionId::CcBody]).unwrap();
        assert_eq!(t.names[0], "mean.CCBody.AWF");
        assert_eq!(t.values[[0, 0]], 2.0);
        assert_eq!(t.n_features(), 7);
        let ds = tiny_dataset(&[4.25; 3], &[true; 3]);
        let t = mean_baseline_features(&ds, &[RegionId::CcBody]).unwrap();
        assert_eq!(t.values[[0, 0]], 4.25);
        let ds = tiny_dataset(&[4.25; 3], &[false; 3]);
        assert!(mean_baseline_features(&ds, &[RegionId::CcBody]).is_err());
        let ds = tiny_dataset(&[4.25; 3], &[true; 3]);
        assert!(mean_baseline_features(&ds, &[RegionId::Thalamus]).is_err());
    }

    #[test]
    fn feature_csv_round_trip() {
        let names = vec!["a".to_string(), "b".to_string()];
        let values = Array2::from_shape_vec((2, 2), vec![0.1, 1.0 / 3.0, -7.25, 1e-300]).unwrap();
        let t = FeatureTable::new(vec!["x".into(), "y".into()], vec![0, 1], names, values).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"subject_id,label,a,b\n"));
        assert_eq!(FeatureTable::read_csv(buf.as_slice()).unwrap(), t);
    }

    proptest! {
        #[test]
        fn masked_mean_matches_reverse_summation(
            vals in proptest::collection::vec(-1e3f64..1e3, 1..200),
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut bits: Vec<bool> = (0..vals.len()).map(|_| rng.random()).collect();
            bits[0] = true;
            let got = masked_mean(&vals, &bits).unwrap();
            let mut sum = 0.0;
            let mut n = 0.0;
            for i in (0..vals.len()).rev() {
                if bits[i] { sum += vals[i]; n += 1.0; }
            }
            prop_assert!((got - sum / n).abs() <= 1e-12 * (1.0 + got.abs()));
        }

        #[test]
        fn histogram_sums_to_one_and_ignores_order(
            vals in proptest::collection::vec(-5.0f64..25.0, 1..50),
        ) {
            let key = FeatureKey::new(MetricId::Fa, RegionId::Thalamus);
            let cb = cb3(key);
            let ps: Vec<_> = vals.iter().map(|&v| patch(v, key)).collect();
            let h = encode_histogram(&ps, &cb, HistogramNorm::Relative).unwrap();
            prop_assert!((h.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(h.iter().all(|&x| x >= 0.0));
            let mut rev = ps.clone();
            rev.reverse();
            prop_assert_eq!(h, encode_histogram(&rev, &cb, HistogramNorm::Relative).unwrap());
        }
    }
}

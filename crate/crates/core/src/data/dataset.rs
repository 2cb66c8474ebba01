//! Subject collections and the dataset directory layout.
//!
//! A dataset directory holds `clinical.csv`, volume and mask file pairs, and a
//! `manifest.json` that maps every subject's (metric, region) channel to the
//! volume and mask stems it uses. Volumes shared between regions are written
//! once.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::clinical::{load_clinical, write_clinical, ClinicalRecord};
use super::ids::{Cohort, FeatureKey};
use super::volume::{load_mask, load_volume, write_mask, write_volume, MetricVolume, RoiMask};
use crate::error::{Error, Result};

/// A volume paired with the mask selecting one region in it.
#[derive(Debug, Clone)]
pub struct Channel {
    pub volume: Arc<MetricVolume>,
    pub mask: Arc<RoiMask>,
}

#[derive(Debug, Clone)]
pub struct Subject {
    pub clinical: ClinicalRecord,
    pub channels: BTreeMap<FeatureKey, Channel>,
}

impl Subject {
    pub fn id(&self) -> &str {
        &self.clinical.subject_id
    }

    pub fn cohort(&self) -> Cohort {
        self.clinical.cohort
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    subjects: Vec<Subject>,
    keys: Vec<FeatureKey>,
}

impl Dataset {
    pub fn new(subjects: Vec<Subject>) -> Result<Dataset> {
        let mut ids = HashSet::new();
        for s in &subjects {
            if !ids.insert(s.id().to_string()) {
                return Err(Error::data(format!("duplicate subject {:?}", s.id())));
            }
        }
        let keys: Vec<FeatureKey> = subjects
            .first()
            .map(|s| s.channels.keys().copied().collect())
            .unwrap_or_default();
        for s in &subjects {
            if !s.channels.keys().eq(keys.iter()) {
                let have: BTreeSet<_> = s.channels.keys().collect();
                let missing: Vec<String> = keys
                    .iter()
                    .filter(|k| !have.contains(k))
                    .map(|k| k.to_string())
                    .collect();
                return Err(Error::data(format!(
                    "subject {:?} does not provide the common channel set (missing {:?})",
                    s.id(),
                    missing
                )));
            }
            for (key, ch) in &s.channels {
                if ch.volume.dims() != ch.mask.dims() {
                    return Err(Error::data(format!(
                        "subject {:?} {key}: mask dims differ from volume dims",
                        s.id()
                    )));
                }
                if ch.volume.metric() != key.metric || ch.mask.region() != key.region {
                    return Err(Error::data(format!(
                        "subject {:?} {key}: channel metric/region mismatch",
                        s.id()
                    )));
                }
                if ch.volume.subject_id() != s.id() {
                    return Err(Error::data(format!(
                        "subject {:?} {key}: volume belongs to {:?}",
                        s.id(),
                        ch.volume.subject_id()
                    )));
                }
            }
            s.clinical.validate()?;
        }
        Ok(Dataset { subjects, keys })
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn keys(&self) -> &[FeatureKey] {
        &self.keys
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.subjects.iter().map(|s| s.clinical.label()).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ManifestChannel {
    #[serde(flatten)]
    pub key: FeatureKey,
    pub volume: String,
    pub mask: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ManifestSubject {
    pub subject_id: String,
    pub channels: Vec<ManifestChannel>,
}

/// `manifest.json` describing a dataset directory.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub clinical: String,
    pub keys: Vec<FeatureKey>,
    pub subjects: Vec<ManifestSubject>,
    /// Every file in the dataset, relative to the directory.
    pub files: Vec<String>,
}

impl Manifest {
    pub fn parse(bytes: &[u8]) -> Result<Manifest> {
        let m: Manifest = serde_json::from_slice(bytes)
            .map_err(|e| Error::data(format!("bad manifest: {e}")))?;
        for name in m
            .subjects
            .iter()
            .flat_map(|s| s.channels.iter().flat_map(|c| [&c.volume, &c.mask]))
            .chain(std::iter::once(&m.clinical))
        {
            check_relative(name)?;
        }
        Ok(m)
    }
}

fn check_relative(name: &str) -> Result<()> {
    let p = Path::new(name);
    let ok = !name.is_empty()
        && p.components()
            .all(|c| matches!(c, std::path::Component::Normal(_)));
    if ok {
        Ok(())
    } else {
        Err(Error::data(format!(
            "manifest path {name:?} must be relative and stay inside the dataset"
        )))
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CLINICAL_FILE: &str = "clinical.csv";

/// Write `ds` into `dir` (created if needed) and return the manifest.
pub fn write_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<Manifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let records: Vec<ClinicalRecord> = ds.subjects.iter().map(|s| s.clinical.clone()).collect();
    write_clinical(&records, dir.join(CLINICAL_FILE))?;

    let mut files = vec![CLINICAL_FILE.to_string()];
    let mut subjects = Vec::with_capacity(ds.len());
    for s in &ds.subjects {
        let mut written_vols: Vec<(Arc<MetricVolume>, String)> = Vec::new();
        let mut written_masks: Vec<(Arc<RoiMask>, String)> = Vec::new();
        let mut channels = Vec::new();
        for (key, ch) in &s.channels {
            let vol_stem = match written_vols.iter().find(|(v, _)| Arc::ptr_eq(v, &ch.volume)) {
                Some((_, stem)) => stem.clone(),
                None => {
                    let mut stem = format!("{}_{}", s.id(), key.metric);
                    if written_vols.iter().any(|(_, st)| *st == stem) {
                        stem = format!("{}_{}", s.id(), key.stem());
                    }
                    write_volume(&ch.volume, dir.join(&stem))?;
                    files.push(format!("{stem}.vol.json"));
                    files.push(format!("{stem}.vol.raw"));
                    written_vols.push((ch.volume.clone(), stem.clone()));
                    stem
                }
            };
            let mask_stem = match written_masks.iter().find(|(m, _)| Arc::ptr_eq(m, &ch.mask)) {
                Some((_, stem)) => stem.clone(),
                None => {
                    let mut stem = format!("{}_{}", s.id(), key.region);
                    if written_masks.iter().any(|(_, st)| *st == stem) {
                        stem = format!("{}_{}", s.id(), key.stem());
                    }
                    write_mask(&ch.mask, dir.join(&stem))?;
                    files.push(format!("{stem}.mask.json"));
                    files.push(format!("{stem}.mask.raw"));
                    written_masks.push((ch.mask.clone(), stem.clone()));
                    stem
                }
            };
            channels.push(ManifestChannel {
                key: *key,
                volume: vol_stem,
                mask: mask_stem,
            });
        }
        subjects.push(ManifestSubject {
            subject_id: s.id().to_string(),
            channels,
        });
    }
    files.push(MANIFEST_FILE.to_string());
    let manifest = Manifest {
        clinical: CLINICAL_FILE.to_string(),
        keys: ds.keys.clone(),
        subjects,
        files,
    };
    let path = dir.join(MANIFEST_FILE);
    let bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::data(e.to_string()))?;
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Load a dataset directory written by [`write_dataset`] (or by hand).
///
/// Subjects keep the order of the manifest.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let mpath = dir.join(MANIFEST_FILE);
    let bytes = std::fs::read(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest = Manifest::parse(&bytes)?;
    let mut clinical: HashMap<String, ClinicalRecord> = load_clinical(dir.join(&manifest.clinical))?
        .into_iter()
        .map(|r| (r.subject_id.clone(), r))
        .collect();

    let mut vols: HashMap<String, Arc<MetricVolume>> = HashMap::new();
    let mut masks: HashMap<String, Arc<RoiMask>> = HashMap::new();
    let mut subjects = Vec::with_capacity(manifest.subjects.len());
    for ms in &manifest.subjects {
        let rec = clinical.remove(&ms.subject_id).ok_or_else(|| {
            Error::data(format!("subject {:?} has no clinical record", ms.subject_id))
        })?;
        let mut channels = BTreeMap::new();
        for c in &ms.channels {
            let volume = match vols.get(&c.volume) {
                Some(v) => v.clone(),
                None => {
                    let v = Arc::new(load_volume(dir.join(&c.volume))?);
                    vols.insert(c.volume.clone(), v.clone());
                    v
                }
            };
            let mask = match masks.get(&c.mask) {
                Some(m) => m.clone(),
                None => {
                    let m = Arc::new(load_mask(dir.join(&c.mask))?);
                    masks.insert(c.mask.clone(), m.clone());
                    m
                }
            };
            if channels.insert(c.key, Channel { volume, mask }).is_some() {
                return Err(Error::data(format!(
                    "subject {:?} lists channel {} twice",
                    ms.subject_id, c.key
                )));
            }
        }
        subjects.push(Subject {
            clinical: rec,
            channels,
        });
    }
    if let Some(extra) = clinical.keys().next() {
        return Err(Error::data(format!(
            "clinical record {extra:?} not listed in manifest"
        )));
    }
    let ds = Dataset::new(subjects)?;
    if ds.keys != manifest.keys {
        return Err(Error::data("manifest key list disagrees with subject channels"));
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ids::{MetricId, RegionId};
    use crate::data::volume::Dims;

    fn subject(id: &str, keys: &[FeatureKey]) -> Subject {
        let dims = Dims::new(1, 2, 2).unwrap();
        let channels = keys
            .iter()
            .map(|&k| {
                let v = MetricVolume::new(id, k.metric, dims, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
                let m = RoiMask::new(k.region, dims, vec![true, false, true, true]).unwrap();
                (
                    k,
                    Channel {
                        volume: Arc::new(v),
                        mask: Arc::new(m),
                    },
                )
            })
            .collect();
        Subject {
            clinical: ClinicalRecord {
                subject_id: id.into(),
                age: 30.0,
                sex: 1,
                stroop: 1.0,
                sdmt: 2.0,
                cvlt: 3.0,
                fss: 4.0,
                cohort: Cohort::Control,
            },
            channels,
        }
    }

    #[test]
    fn rejects_missing_channel() {
        let a = FeatureKey::new(MetricId::Fa, RegionId::Thalamus);
        let b = FeatureKey::new(MetricId::Md, RegionId::Thalamus);
        let err = Dataset::new(vec![subject("s1", &[a, b]), subject("s2", &[a])]).unwrap_err();
        assert!(err.to_string().contains("common channel set"));
    }

    #[test]
    fn rejects_duplicate_ids() {
        let a = FeatureKey::new(MetricId::Fa, RegionId::Thalamus);
        assert!(Dataset::new(vec![subject("s1", &[a]), subject("s1", &[a])]).is_err());
    }

    #[test]
    fn directory_round_trip() {
        let a = FeatureKey::new(MetricId::Fa, RegionId::Thalamus);
        let b = FeatureKey::new(MetricId::Fa, RegionId::CorpusCallosum);
        let ds = Dataset::new(vec![subject("s1", &[a, b]), subject("s2", &[a, b])]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_dataset(&ds, dir.path()).unwrap();
        for f in &manifest.files {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.keys(), ds.keys());
        for (x, y) in back.subjects().iter().zip(ds.subjects()) {
            assert_eq!(x.clinical, y.clinical);
            for (k, ch) in &x.channels {
                assert_eq!(*ch.volume, *y.channels[k].volume);
                assert_eq!(*ch.mask, *y.channels[k].mask);
            }
        }
    }

    #[test]
    fn manifest_rejects_escaping_paths() {
        let m = br#"{"clinical":"../clinical.csv","keys":[],"subjects":[],"files":[]}"#;
        assert!(Manifest::parse(m).is_err());
        let m = br#"{"clinical":"/etc/passwd","keys":[],"subjects":[],"files":[]}"#;
        assert!(Manifest::parse(m).is_err());
    }
}

//! Synthetic two-cohort datasets with mean-preserving texture differences.
//!
//! Each volume is split into horizontal bands of 16×16 tiles, one band per
//! anatomical group (corpus callosum and its subregions, thalamus, prefrontal
//! white matter). Inside a subject's ROI every tile is filled with one pattern
//! from a small bank of zero-mean oriented gratings, scaled by a random
//! amplitude, plus white noise. Controls and mTBI subjects draw the pattern
//! index from different mixtures; `texture_contrast` interpolates the mTBI
//! mixture from the control one (0) to a disjoint-emphasis one (1). Because
//! every pattern has zero mean, the ROI mean does not depend on the cohort
//! unless `mean_shift` is non-zero.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    Channel, ClinicalRecord, Cohort, Dataset, Dims, FeatureKey, MetricId, MetricVolume, RegionId,
    RoiMask, Subject,
};
use crate::error::{Error, Result};
use crate::rng::{mix, stream, Domain};

/// Edge length of one texture tile.
pub const TILE: usize = 16;
const BANK: usize = 4;
const CONTROL_MIX: [f64; BANK] = [0.4, 0.4, 0.1, 0.1];
const ALT_MIX: [f64; BANK] = [0.1, 0.1, 0.4, 0.4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_control: usize,
    pub n_mtbi: usize,
    pub dims: [usize; 3],
    pub metrics: Vec<MetricId>,
    pub regions: Vec<RegionId>,
    pub texture_contrast: f64,
    /// Cohort difference of ROI means, in units of the metric scale.
    pub mean_shift: f64,
    pub noise_sigma: f64,
    /// Cohort shift of the neurocognitive scores, in units of their sd.
    pub clinical_shift: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_control: 30,
            n_mtbi: 30,
            dims: [2, 64, 64],
            metrics: MetricId::ALL.to_vec(),
            regions: vec![RegionId::CorpusCallosum, RegionId::Thalamus],
            texture_contrast: 1.0,
            mean_shift: 0.0,
            noise_sigma: 1.0,
            clinical_shift: 0.0,
            seed: 0,
        }
    }
}

/// Typical value and variation scale per metric. Only magnitudes matter.
fn metric_scale(m: MetricId) -> (f64, f64) {
    match m {
        MetricId::Awf => (0.45, 0.05),
        MetricId::Da => (1.0, 0.1),
        MetricId::DePar => (2.0, 0.2),
        MetricId::DePerp => (0.8, 0.1),
        MetricId::Fa => (0.5, 0.05),
        MetricId::Md => (0.8, 0.08),
        MetricId::Ak => (1.0, 0.1),
        MetricId::Mk => (1.1, 0.1),
        MetricId::Rk => (1.2, 0.12),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Band {
    Callosal,
    Thalamic,
    Prefrontal,
}

fn band_of(r: RegionId) -> Band {
    match r {
        RegionId::CorpusCallosum | RegionId::CcGenu | RegionId::CcBody | RegionId::CcSplenium => {
            Band::Callosal
        }
        RegionId::Thalamus => Band::Thalamic,
        RegionId::PrefrontalWm => Band::Prefrontal,
    }
}

/// Column third occupied by a callosal subregion, if any.
fn callosal_third(r: RegionId) -> Option<usize> {
    match r {
        RegionId::CcGenu => Some(0),
        RegionId::CcBody => Some(1),
        RegionId::CcSplenium => Some(2),
        _ => None,
    }
}

impl SynthConfig {
    /// Channel keys the generator will emit: every metric in every region,
    /// except that the thalamus only carries FA, MD, AK, MK and RK.
    pub fn keys(&self) -> Vec<FeatureKey> {
        let mut keys = Vec::new();
        for &r in &self.regions {
            for &m in &self.metrics {
                if r != RegionId::Thalamus || MetricId::THALAMUS.contains(&m) {
                    keys.push(FeatureKey::new(m, r));
                }
            }
        }
        keys.sort();
        keys
    }

    fn bands(&self) -> Vec<Band> {
        let mut b: Vec<Band> = self.regions.iter().map(|&r| band_of(r)).collect();
        b.sort();
        b.dedup();
        b
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_control < 2 || self.n_mtbi < 2 {
            return Err(Error::config("synth: need at least 2 subjects per cohort"));
        }
        if !(0.0..=1.0).contains(&self.texture_contrast) {
            return Err(Error::config("synth: texture_contrast must lie in [0,1]"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma > 0.0) {
            return Err(Error::config("synth: noise_sigma must be finite and > 0"));
        }
        if !self.mean_shift.is_finite() || !self.clinical_shift.is_finite() {
            return Err(Error::config("synth: shifts must be finite"));
        }
        if self.metrics.is_empty() || self.regions.is_empty() {
            return Err(Error::config("synth: metrics and regions must be non-empty"));
        }
        let mut m = self.metrics.clone();
        m.sort();
        m.dedup();
        let mut r = self.regions.clone();
        r.sort();
        r.dedup();
        if m.len() != self.metrics.len() || r.len() != self.regions.len() {
            return Err(Error::config("synth: duplicate metric or region"));
        }
        if self.keys().is_empty() {
            return Err(Error::config("synth: no (metric, region) channel is available"));
        }
        let [nz, ny, nx] = self.dims;
        Dims::new(nz, ny, nx)?;
        let tile_rows = ny / TILE;
        let tile_cols = nx / TILE;
        let need_cols = if self.regions.iter().any(|r| callosal_third(*r).is_some()) {
            3
        } else {
            1
        };
        if tile_rows < self.bands().len() || tile_cols < need_cols {
            return Err(Error::data(format!(
                "synth: dims {:?} too small to contain one {TILE}x{TILE} patch in a masked slice \
                 for every region",
                self.dims
            )));
        }
        Ok(())
    }
}

/// A zero-mean, unit-RMS TILE×TILE pattern.
type Pattern = Vec<f64>;

fn pattern_bank(seed: u64, metric: MetricId, band: Band) -> Vec<Pattern> {
    let mut rng = stream(
        seed,
        Domain::SynthPattern,
        mix(&[metric as u64, band as u64]),
    );
    (0..BANK)
        .map(|j| {
            // Distinct orientations per bank slot keep the patterns separable.
            let theta = PI * (j as f64 / BANK as f64) + rng.random_range(-0.2..0.2);
            let freq = rng.random_range(1.0..3.0);
            let phase = rng.random_range(0.0..2.0 * PI);
            let mut p: Vec<f64> = (0..TILE * TILE)
                .map(|i| {
                    let (y, x) = ((i / TILE) as f64, (i % TILE) as f64);
                    let u = y * theta.cos() + x * theta.sin();
                    (2.0 * PI * freq * u / TILE as f64 + phase).cos()
                })
                .collect();
            let mean = p.iter().sum::<f64>() / p.len() as f64;
            p.iter_mut().for_each(|v| *v -= mean);
            let rms = (p.iter().map(|v| v * v).sum::<f64>() / p.len() as f64).sqrt();
            p.iter_mut().for_each(|v| *v /= rms);
            p
        })
        .collect()
}

fn mixture(cohort: Cohort, contrast: f64) -> [f64; BANK] {
    match cohort {
        Cohort::Control => CONTROL_MIX,
        Cohort::Mtbi => {
            let mut w = [0.0; BANK];
            for j in 0..BANK {
                w[j] = (1.0 - contrast) * CONTROL_MIX[j] + contrast * ALT_MIX[j];
            }
            w
        }
    }
}

fn draw_index<R: Rng>(rng: &mut R, w: &[f64; BANK]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, &wj) in w.iter().enumerate() {
        acc += wj;
        if u < acc {
            return j;
        }
    }
    BANK - 1
}

/// Per-subject ROI extent in tile units for one band: (first tile row, rows, first col, cols).
#[derive(Debug, Clone, Copy)]
struct Extent {
    row0: usize,
    rows: usize,
    col0: usize,
    cols: usize,
}

struct Layout {
    bands: Vec<Band>,
    tile_rows: usize,
    tile_cols: usize,
}

impl Layout {
    fn band_rows(&self, band: Band) -> (usize, usize) {
        let per = self.tile_rows / self.bands.len();
        let i = self.bands.iter().position(|&b| b == band).expect("band");
        (i * per, per)
    }
}

fn generate_subject(
    cfg: &SynthConfig,
    layout: &Layout,
    banks: &BTreeMap<(MetricId, Band), Vec<Pattern>>,
    index: usize,
    cohort: Cohort,
    subject_id: String,
) -> Result<Subject> {
    let mut rng = stream(cfg.seed, Domain::SynthSubject, index as u64);
    let [nz, ny, nx] = cfg.dims;
    let dims = Dims::new(nz, ny, nx)?;
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    // ROI extents, drawn once per band so all metrics see the same anatomy.
    let mut extents: BTreeMap<Band, Extent> = BTreeMap::new();
    for &band in &layout.bands {
        let (row0, rows) = layout.band_rows(band);
        let min_cols = if band == Band::Callosal
            && cfg.regions.iter().any(|r| callosal_third(*r).is_some())
        {
            layout.tile_cols.max(3)
        } else {
            (layout.tile_cols * 3).div_ceil(4).max(1)
        };
        let cols = rng.random_range(min_cols..=layout.tile_cols);
        let col0 = rng.random_range(0..=layout.tile_cols - cols);
        extents.insert(
            band,
            Extent {
                row0,
                rows,
                col0,
                cols,
            },
        );
    }

    let mut masks: BTreeMap<RegionId, Arc<RoiMask>> = BTreeMap::new();
    for &region in &cfg.regions {
        let e = extents[&band_of(region)];
        let (c0, cn) = match callosal_third(region) {
            Some(t) => {
                let third = e.cols / 3;
                let start = e.col0 + t * third;
                let n = if t == 2 { e.cols - 2 * third } else { third };
                (start, n)
            }
            None => (e.col0, e.cols),
        };
        let mut bits = vec![false; dims.len()];
        for z in 0..nz {
            for y in e.row0 * TILE..(e.row0 + e.rows) * TILE {
                for x in c0 * TILE..(c0 + cn) * TILE {
                    bits[dims.index(z, y, x)] = true;
                }
            }
        }
        masks.insert(region, Arc::new(RoiMask::new(region, dims, bits)?));
    }

    let keys = cfg.keys();
    let mut volumes: BTreeMap<MetricId, Arc<MetricVolume>> = BTreeMap::new();
    let weights = mixture(cohort, cfg.texture_contrast);
    let amp = Uniform::new(0.75, 1.25).expect("amplitude range");
    let shift = if cohort == Cohort::Mtbi {
        cfg.mean_shift
    } else {
        0.0
    };
    for &metric in &cfg.metrics {
        let (base, scale) = metric_scale(metric);
        let offset = 0.2 * std_normal.sample(&mut rng);
        let mut vox: Vec<f64> = (0..dims.len())
            .map(|_| cfg.noise_sigma * std_normal.sample(&mut rng))
            .collect();
        // Texture every band that carries at least one channel of this metric.
        for &band in &layout.bands {
            let carried = keys
                .iter()
                .any(|k| k.metric == metric && band_of(k.region) == band);
            if !carried {
                continue;
            }
            let bank = &banks[&(metric, band)];
            let e = extents[&band];
            for z in 0..nz {
                for tr in e.row0..e.row0 + e.rows {
                    for tc in e.col0..e.col0 + e.cols {
                        let p = &bank[draw_index(&mut rng, &weights)];
                        let a = amp.sample(&mut rng);
                        for dy in 0..TILE {
                            for dx in 0..TILE {
                                let i = dims.index(z, tr * TILE + dy, tc * TILE + dx);
                                vox[i] += a * p[dy * TILE + dx] + shift;
                            }
                        }
                    }
                }
            }
        }
        let vox = vox
            .into_iter()
            .map(|v| (base + scale * (offset + v)) as f32 as f64)
            .collect();
        volumes.insert(
            metric,
            Arc::new(MetricVolume::new(subject_id.clone(), metric, dims, vox)?),
        );
    }

    let channels = keys
        .iter()
        .map(|&k| {
            (
                k,
                Channel {
                    volume: volumes[&k.metric].clone(),
                    mask: masks[&k.region].clone(),
                },
            )
        })
        .collect();

    let s = if cohort == Cohort::Mtbi {
        cfg.clinical_shift
    } else {
        0.0
    };
    let mut score = |mean: f64, sd: f64, dir: f64| -> f64 {
        let v = mean + sd * (std_normal.sample(&mut rng) + dir * s);
        (v as f32) as f64
    };
    let stroop = score(50.0, 10.0, -1.0);
    let sdmt = score(55.0, 10.0, -1.0);
    let cvlt = score(60.0, 10.0, -1.0);
    let fss = score(3.5, 1.0, 1.0);
    let age = (rng.random_range(18.0f64..64.0) * 10.0).round() / 10.0;
    let sex = rng.random_range(0u8..=1);
    Ok(Subject {
        clinical: ClinicalRecord {
            subject_id,
            age,
            sex,
            stroop,
            sdmt,
            cvlt,
            fss,
            cohort,
        },
        channels,
    })
}

/// Generate a dataset. Controls come first (`c001`, ...), then mTBI (`m001`, ...).
pub fn generate(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let layout = Layout {
        bands: cfg.bands(),
        tile_rows: cfg.dims[1] / TILE,
        tile_cols: cfg.dims[2] / TILE,
    };
    let mut banks = BTreeMap::new();
    for &m in &cfg.metrics {
        for &b in &layout.bands {
            banks.insert((m, b), pattern_bank(cfg.seed, m, b));
        }
    }
    let roster: Vec<(Cohort, String)> = (0..cfg.n_control)
        .map(|i| (Cohort::Control, format!("c{:03}", i + 1)))
        .chain((0..cfg.n_mtbi).map(|i| (Cohort::Mtbi, format!("m{:03}", i + 1))))
        .collect();
    let subjects = roster
        .into_par_iter()
        .enumerate()
        .map(|(i, (cohort, id))| generate_subject(cfg, &layout, &banks, i, cohort, id))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(subjects)
}

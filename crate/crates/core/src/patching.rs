//! Fixed-size 2-D patches from masked regions of metric volumes.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{FeatureKey, MetricVolume, RoiMask};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    /// `size * size` values, row-major.
    pub values: Vec<f64>,
    /// (slice, row, col) of the window's top-left voxel.
    pub origin: (usize, usize, usize),
    pub key: FeatureKey,
    pub subject_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatchConfig {
    pub size: usize,
    pub stride: usize,
    /// Minimum fraction of in-mask voxels for a window to be kept.
    pub coverage_threshold: f64,
}

impl Default for PatchConfig {
    fn default() -> Self {
        PatchConfig {
            size: 16,
            stride: 16,
            coverage_threshold: 0.5,
        }
    }
}

impl PatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size < 2 {
            return Err(Error::config("patch size must be at least 2"));
        }
        if self.stride < 1 {
            return Err(Error::config("patch stride must be at least 1"));
        }
        if !(self.coverage_threshold > 0.0 && self.coverage_threshold <= 1.0) {
            return Err(Error::config("coverage_threshold must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.size * self.size
    }
}

/// Walk the axial slices of `vol` on a stride grid and keep every window whose
/// mask coverage reaches the threshold. Output order is (z, y, x).
pub fn extract_patches(vol: &MetricVolume, mask: &RoiMask, cfg: &PatchConfig) -> Result<Vec<Patch>> {
    cfg.validate()?;
    let d = vol.dims();
    if d != mask.dims() {
        return Err(Error::data(format!(
            "subject {:?}: mask dims {:?} differ from volume dims {:?}",
            vol.subject_id(),
            <[usize; 3]>::from(mask.dims()),
            <[usize; 3]>::from(d)
        )));
    }
    let p = cfg.size;
    let key = FeatureKey::new(vol.metric(), mask.region());
    let mut out = Vec::new();
    if d.ny < p || d.nx < p {
        return Ok(out);
    }
    let need = cfg.coverage_threshold * (p * p) as f64;
    for z in 0..d.nz {
        for y in (0..=d.ny - p).step_by(cfg.stride) {
            for x in (0..=d.nx - p).step_by(cfg.stride) {
                let mut covered = 0usize;
                for dy in 0..p {
                    let row = d.index(z, y + dy, x);
                    covered += mask.bits()[row..row + p].iter().filter(|&&b| b).count();
                }
                if (covered as f64) < need {
                    continue;
                }
                let mut values = Vec::with_capacity(p * p);
                for dy in 0..p {
                    let row = d.index(z, y + dy, x);
                    values.extend_from_slice(&vol.voxels()[row..row + p]);
                }
                out.push(Patch {
                    values,
                    origin: (z, y, x),
                    key,
                    subject_id: vol.subject_id().to_string(),
                });
            }
        }
    }
    Ok(out)
}

/// Write patches as CSV: `subject_id,metric,region,z,y,x,v0..v{p²-1}`.
pub fn write_patch_csv<W: Write>(patches: &[Patch], dim: usize, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::data(format!("patch csv: {e}"));
    let mut header: Vec<String> = ["subject_id", "metric", "region", "z", "y", "x"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..dim).map(|i| format!("v{i}")));
    wtr.write_record(&header).map_err(err)?;
    for p in patches {
        if p.values.len() != dim {
            return Err(Error::data("patch length does not match the dump width"));
        }
        let mut rec = vec![
            p.subject_id.clone(),
            p.key.metric.to_string(),
            p.key.region.to_string(),
            p.origin.0.to_string(),
            p.origin.1.to_string(),
            p.origin.2.to_string(),
        ];
        // Voxels are stored as f32, so the shortest f32 rendering is lossless.
        rec.extend(p.values.iter().map(|&v| {
            let f = v as f32;
            if f as f64 == v {
                f.to_string()
            } else {
                v.to_string()
            }
        }));
        wtr.write_record(&rec).map_err(err)?;
    }
    wtr.flush().map_err(|e| Error::data(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dims, MetricId, RegionId};
    use proptest::prelude::*;

    fn ramp(d: Dims) -> MetricVolume {
        let v = (0..d.len()).map(|i| i as f64).collect();
        MetricVolume::new("s", MetricId::Fa, d, v).unwrap()
    }

    fn mask(d: Dims, bits: Vec<bool>) -> RoiMask {
        RoiMask::new(RegionId::CorpusCallosum, d, bits).unwrap()
    }

    #[test]
    fn all_false_mask_gives_nothing() {
        let d = Dims::new(2, 32, 32).unwrap();
        let ps = extract_patches(&ramp(d), &mask(d, vec![false; d.len()]), &PatchConfig::default())
            .unwrap();
        assert!(ps.is_empty());
    }

    #[test]
    fn single_window_equals_slice() {
        let d = Dims::new(1, 16, 16).unwrap();
        let v = ramp(d);
        let ps = extract_patches(&v, &mask(d, vec![true; d.len()]), &PatchConfig::default()).unwrap();
        assert_eq!(ps.len(), 1);
        assert_eq!(ps[0].values, v.voxels());
        assert_eq!(ps[0].origin, (0, 0, 0));
    }

    #[test]
    fn four_windows_in_grid_order() {
        let d = Dims::new(1, 32, 32).unwrap();
        let ps = extract_patches(&ramp(d), &mask(d, vec![true; d.len()]), &PatchConfig::default())
            .unwrap();
        let origins: Vec<_> = ps.iter().map(|p| (p.origin.1, p.origin.2)).collect();
        assert_eq!(origins, vec![(0, 0), (0, 16), (16, 0), (16, 16)]);
        // Second window's first row is voxels 16..32 of slice row 0.
        assert_eq!(ps[1].values[..16], (16..32).map(|i| i as f64).collect::<Vec<_>>()[..]);
    }

    #[test]
    fn dims_mismatch_rejected() {
        let d = Dims::new(1, 16, 16).unwrap();
        let e = Dims::new(1, 16, 17).unwrap();
        assert!(extract_patches(&ramp(d), &mask(e, vec![true; e.len()]), &PatchConfig::default()).is_err());
    }

    #[test]
    fn coverage_threshold_is_inclusive() {
        let d = Dims::new(1, 4, 4).unwrap();
        let cfg = PatchConfig { size: 4, stride: 4, coverage_threshold: 0.5 };
        let mut bits = vec![false; 16];
        bits[..8].iter_mut().for_each(|b| *b = true);
        assert_eq!(extract_patches(&ramp(d), &mask(d, bits.clone()), &cfg).unwrap().len(), 1);
        bits[7] = false;
        assert_eq!(extract_patches(&ramp(d), &mask(d, bits), &cfg).unwrap().len(), 0);
    }

    #[test]
    fn patch_csv_layout() {
        let d = Dims::new(1, 2, 2).unwrap();
        let cfg = PatchConfig { size: 2, stride: 1, coverage_threshold: 1.0 };
        let ps = extract_patches(&ramp(d), &mask(d, vec![true; 4]), &cfg).unwrap();
        let mut buf = Vec::new();
        write_patch_csv(&ps, 4, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(
            s,
            "subject_id,metric,region,z,y,x,v0,v1,v2,v3\ns,FA,CorpusCallosum,0,0,0,0,1,2,3\n"
        );
    }

    /// Independent enumeration: every in-bounds grid window, counted voxel by voxel.
    fn brute_force(vol: &MetricVolume, m: &RoiMask, cfg: &PatchConfig) -> Vec<(usize, usize, usize)> {
        let d = vol.dims();
        let p = cfg.size;
        let mut out = Vec::new();
        for z in 0..d.nz {
            let mut y = 0;
            while y + p <= d.ny {
                let mut x = 0;
                while x + p <= d.nx {
                    let mut c = 0;
                    for yy in y..y + p {
                        for xx in x..x + p {
                            if m.at(z, yy, xx) {
                                c += 1;
                            }
                        }
                    }
                    if c as f64 / (p * p) as f64 >= cfg.coverage_threshold {
                        out.push((z, y, x));
                    }
                    x += cfg.stride;
                }
                y += cfg.stride;
            }
        }
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn matches_brute_force(
            nz in 1usize..=4, ny in 1usize..=64, nx in 1usize..=64,
            size in 2usize..=16, stride in 1usize..=16,
            thr in 0.05f64..=1.0, density in 0.0f64..=1.0, seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let d = Dims::new(nz, ny, nx).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let bits = (0..d.len()).map(|_| rng.random::<f64>() < density).collect();
            let m = mask(d, bits);
            let v = ramp(d);
            let cfg = PatchConfig { size, stride, coverage_threshold: thr };
            let got: Vec<_> = extract_patches(&v, &m, &cfg).unwrap().iter().map(|p| p.origin).collect();
            prop_assert_eq!(got, brute_force(&v, &m, &cfg));
        }
    }
}

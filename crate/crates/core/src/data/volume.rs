//! Scalar volumes and region masks, plus their on-disk format.
//!
//! A volume is stored as a pair of files: `<name>.vol.json` holding
//! `{"subject_id":..,"metric":..,"dims":[nz,ny,nx]}` and `<name>.vol.raw`
//! holding `nz*ny*nx` little-endian `f32` values in (slice, row, col) order.
//! Masks use `<name>.mask.json` (`{"region":..,"dims":[..]}`) and
//! `<name>.mask.raw` with one byte (0 or 1) per voxel.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ids::{MetricId, RegionId};
use crate::error::{Error, Result};

/// Grid extent as (slices, rows, cols).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "[usize; 3]", try_from = "[usize; 3]")]
pub struct Dims {
    pub nz: usize,
    pub ny: usize,
    pub nx: usize,
}

impl Dims {
    pub fn new(nz: usize, ny: usize, nx: usize) -> Result<Dims> {
        if nz == 0 || ny == 0 || nx == 0 {
            return Err(Error::data(format!(
                "dims must be positive, got ({nz},{ny},{nx})"
            )));
        }
        nz.checked_mul(ny)
            .and_then(|v| v.checked_mul(nx))
            .filter(|&n| n <= isize::MAX as usize / 8)
            .ok_or_else(|| Error::data(format!("dims ({nz},{ny},{nx}) overflow")))?;
        Ok(Dims { nz, ny, nx })
    }

    pub fn len(&self) -> usize {
        self.nz * self.ny * self.nx
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.ny + y) * self.nx + x
    }
}

impl From<Dims> for [usize; 3] {
    fn from(d: Dims) -> Self {
        [d.nz, d.ny, d.nx]
    }
}

impl TryFrom<[usize; 3]> for Dims {
    type Error = Error;

    fn try_from(v: [usize; 3]) -> Result<Self> {
        Dims::new(v[0], v[1], v[2])
    }
}

/// One scalar 3-D image for one (subject, metric) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricVolume {
    subject_id: String,
    metric: MetricId,
    dims: Dims,
    voxels: Vec<f64>,
}

impl MetricVolume {
    pub fn new(
        subject_id: impl Into<String>,
        metric: MetricId,
        dims: Dims,
        voxels: Vec<f64>,
    ) -> Result<Self> {
        if voxels.len() != dims.len() {
            return Err(Error::data(format!(
                "voxel count mismatch: dims {:?} need {} values, got {}",
                <[usize; 3]>::from(dims),
                dims.len(),
                voxels.len()
            )));
        }
        if let Some(i) = voxels.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!("non-finite voxel at index {i}")));
        }
        Ok(MetricVolume {
            subject_id: subject_id.into(),
            metric,
            dims,
            voxels,
        })
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn metric(&self) -> MetricId {
        self.metric
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn voxels(&self) -> &[f64] {
        &self.voxels
    }

    #[inline]
    pub fn at(&self, z: usize, y: usize, x: usize) -> f64 {
        self.voxels[self.dims.index(z, y, x)]
    }
}

/// Boolean region-of-interest mask with the same layout as a volume.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoiMask {
    region: RegionId,
    dims: Dims,
    bits: Vec<bool>,
}

impl RoiMask {
    pub fn new(region: RegionId, dims: Dims, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != dims.len() {
            return Err(Error::data(format!(
                "mask voxel count mismatch: dims need {}, got {}",
                dims.len(),
                bits.len()
            )));
        }
        Ok(RoiMask { region, dims, bits })
    }

    pub fn region(&self) -> RegionId {
        self.region
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn at(&self, z: usize, y: usize, x: usize) -> bool {
        self.bits[self.dims.index(z, y, x)]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VolumeHeader {
    subject_id: String,
    metric: MetricId,
    dims: Dims,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskHeader {
    region: RegionId,
    dims: Dims,
}

/// Decode a volume from its header JSON and raw payload bytes.
pub fn decode_volume(header: &[u8], raw: &[u8]) -> Result<MetricVolume> {
    let h: VolumeHeader = serde_json::from_slice(header)
        .map_err(|e| Error::data(format!("bad volume header: {e}")))?;
    if !raw.len().is_multiple_of(4) {
        return Err(Error::data(format!(
            "voxel count mismatch: payload of {} bytes is not a whole number of float32",
            raw.len()
        )));
    }
    let voxels: Vec<f64> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    MetricVolume::new(h.subject_id, h.metric, h.dims, voxels)
}

/// Encode a volume into (header JSON, raw payload). Voxels are narrowed to `f32`.
pub fn encode_volume(v: &MetricVolume) -> Result<(Vec<u8>, Vec<u8>)> {
    if let Some(i) = v.voxels.iter().position(|x| !x.is_finite()) {
        return Err(Error::data(format!("non-finite voxel at index {i}")));
    }
    let header = serde_json::to_vec(&VolumeHeader {
        subject_id: v.subject_id.clone(),
        metric: v.metric,
        dims: v.dims,
    })
    .map_err(|e| Error::data(e.to_string()))?;
    let mut raw = Vec::with_capacity(v.voxels.len() * 4);
    for &x in &v.voxels {
        raw.extend_from_slice(&(x as f32).to_le_bytes());
    }
    Ok((header, raw))
}

pub fn decode_mask(header: &[u8], raw: &[u8]) -> Result<RoiMask> {
    let h: MaskHeader = serde_json::from_slice(header)
        .map_err(|e| Error::data(format!("bad mask header: {e}")))?;
    let mut bits = Vec::with_capacity(raw.len());
    for (i, &b) in raw.iter().enumerate() {
        match b {
            0 => bits.push(false),
            1 => bits.push(true),
            other => {
                return Err(Error::data(format!(
                    "mask byte {other} at index {i} is not 0 or 1"
                )))
            }
        }
    }
    RoiMask::new(h.region, h.dims, bits)
}

pub fn encode_mask(m: &RoiMask) -> Result<(Vec<u8>, Vec<u8>)> {
    let header = serde_json::to_vec(&MaskHeader {
        region: m.region,
        dims: m.dims,
    })
    .map_err(|e| Error::data(e.to_string()))?;
    let raw = m.bits.iter().map(|&b| b as u8).collect();
    Ok((header, raw))
}

/// Resolve `<stem>` or `<stem>.<kind>.json` into the header and payload paths.
fn file_pair(path: &Path, kind: &str) -> (PathBuf, PathBuf) {
    let s = path.to_string_lossy();
    let json_suffix = format!(".{kind}.json");
    let stem = s.strip_suffix(&json_suffix).unwrap_or(&s).to_string();
    (
        PathBuf::from(format!("{stem}.{kind}.json")),
        PathBuf::from(format!("{stem}.{kind}.raw")),
    )
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Load a volume given either its stem or its `.vol.json` header path.
pub fn load_volume(path: impl AsRef<Path>) -> Result<MetricVolume> {
    let (h, r) = file_pair(path.as_ref(), "vol");
    decode_volume(&read(&h)?, &read(&r)?)
}

pub fn write_volume(v: &MetricVolume, path: impl AsRef<Path>) -> Result<()> {
    let (h, r) = file_pair(path.as_ref(), "vol");
    let (hb, rb) = encode_volume(v)?;
    write(&h, &hb)?;
    write(&r, &rb)
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<RoiMask> {
    let (h, r) = file_pair(path.as_ref(), "mask");
    decode_mask(&read(&h)?, &read(&r)?)
}

pub fn write_mask(m: &RoiMask, path: impl AsRef<Path>) -> Result<()> {
    let (h, r) = file_pair(path.as_ref(), "mask");
    let (hb, rb) = encode_mask(m)?;
    write(&h, &hb)?;
    write(&r, &rb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dims(nz: usize, ny: usize, nx: usize) -> Dims {
        Dims::new(nz, ny, nx).unwrap()
    }

    #[test]
    fn decodes_identity_payload() {
        let header = br#"{"subject_id":"s1","metric":"FA","dims":[1,2,2]}"#;
        let raw: Vec<u8> = [0f32, 1.0, 2.0, 3.0]
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect();
        let v = decode_volume(header, &raw).unwrap();
        assert_eq!(v.voxels(), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(v.dims(), dims(1, 2, 2));
        assert_eq!(v.metric(), MetricId::Fa);
    }

    #[test]
    fn short_payload_is_rejected() {
        let header = br#"{"subject_id":"s1","metric":"FA","dims":[1,2,2]}"#;
        let raw: Vec<u8> = [0f32, 1.0, 2.0].iter().flat_map(|v| v.to_le_bytes()).collect();
        let err = decode_volume(header, &raw).unwrap_err().to_string();
        assert!(err.contains("voxel count mismatch"), "{err}");
    }

    #[test]
    fn non_finite_payload_names_index() {
        let header = br#"{"subject_id":"s1","metric":"MD","dims":[1,1,3]}"#;
        let raw: Vec<u8> = [0f32, f32::INFINITY, 2.0]
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect();
        let err = decode_volume(header, &raw).unwrap_err().to_string();
        assert!(err.contains("index 1"), "{err}");
    }

    #[test]
    fn zero_dims_rejected() {
        let header = br#"{"subject_id":"s1","metric":"MD","dims":[0,1,3]}"#;
        assert!(decode_volume(header, &[]).is_err());
    }

    #[test]
    fn nan_volume_write_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut v = MetricVolume::new("s", MetricId::Fa, dims(1, 1, 2), vec![0.0, 1.0]).unwrap();
        v.voxels[1] = f64::NAN;
        assert!(write_volume(&v, dir.path().join("s_FA")).is_err());
    }

    #[test]
    fn missing_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_volume(dir.path().join("absent")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn all_false_mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = RoiMask::new(RegionId::Thalamus, dims(2, 3, 4), vec![false; 24]).unwrap();
        let p = dir.path().join("m");
        write_mask(&m, &p).unwrap();
        let back = load_mask(dir.path().join("m.mask.json")).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.count(), 0);
    }

    #[test]
    fn mask_rejects_non_binary_bytes() {
        let header = br#"{"region":"Thalamus","dims":[1,1,2]}"#;
        assert!(decode_mask(header, &[0, 2]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn volume_round_trip_is_bit_exact(
            nz in 1usize..4, ny in 1usize..6, nx in 1usize..6,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let d = dims(nz, ny, nx);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let voxels: Vec<f64> = (0..d.len())
                .map(|_| rng.random_range(-1e6f32..1e6f32) as f64)
                .collect();
            let v = MetricVolume::new("subj", MetricId::Rk, d, voxels).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("v");
            write_volume(&v, &p).unwrap();
            let (h1, r1) = encode_volume(&v).unwrap();
            let back = load_volume(&p).unwrap();
            let (h2, r2) = encode_volume(&back).unwrap();
            prop_assert_eq!(&back, &v);
            prop_assert_eq!(h1, h2);
            prop_assert_eq!(r1, r2);
        }

        #[test]
        fn mask_round_trip(bits in proptest::collection::vec(any::<bool>(), 1..64)) {
            let d = dims(1, 1, bits.len());
            let m = RoiMask::new(RegionId::CcBody, d, bits).unwrap();
            let (h, r) = encode_mask(&m).unwrap();
            prop_assert_eq!(decode_mask(&h, &r).unwrap(), m);
        }
    }
}

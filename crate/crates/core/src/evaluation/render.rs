//! Codebook words as 8-bit binary PGM images.
//!
//! Each word is min-max scaled to 0..=255 on its own. The value range is kept
//! in a header comment (`# range <min> <max>`) so images can be mapped back
//! to word values within one quantization step.

use std::path::{Path, PathBuf};

use crate::codebook::Codebook;
use crate::data::Cohort;
use crate::error::{Error, Result};

/// Grey level used when a word is constant.
pub const MID_GRAY: u8 = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
    /// Value range recorded in the header comment, when present.
    pub range: Option<(f64, f64)>,
}

impl Pgm {
    /// Map pixels back to values through the recorded range.
    pub fn values(&self) -> Option<Vec<f64>> {
        let (lo, hi) = self.range?;
        Some(
            self.pixels
                .iter()
                .map(|&p| {
                    if hi > lo {
                        lo + p as f64 / 255.0 * (hi - lo)
                    } else {
                        lo
                    }
                })
                .collect(),
        )
    }
}

/// Encode a `side × side` word.
pub fn encode_word_pgm(word: &[f64], side: usize) -> Result<Vec<u8>> {
    if side == 0 || word.len() != side * side {
        return Err(Error::data(format!(
            "render: word has {} values, expected {side}²",
            word.len()
        )));
    }
    if word.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("render: non-finite word value"));
    }
    let lo = word.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = word.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = format!("P5\n# range {lo:e} {hi:e}\n{side} {side}\n255\n").into_bytes();
    out.extend(word.iter().map(|&v| {
        if hi > lo {
            ((v - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            MID_GRAY
        }
    }));
    Ok(out)
}

fn bad(msg: &str) -> Error {
    Error::data(format!("pgm: {msg}"))
}

/// Decode a binary (P5) PGM with maxval ≤ 255.
pub fn decode_pgm(bytes: &[u8]) -> Result<Pgm> {
    let mut pos = 0usize;
    let mut range = None;
    let mut tokens: Vec<usize> = Vec::with_capacity(3);
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(bad("missing P5 magic"));
    }
    pos += 2;
    while tokens.len() < 3 {
        let c = *bytes.get(pos).ok_or_else(|| bad("truncated header"))?;
        if c.is_ascii_whitespace() {
            pos += 1;
        } else if c == b'#' {
            let end = bytes[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .map(|e| pos + e)
                .ok_or_else(|| bad("unterminated comment"))?;
            let line = std::str::from_utf8(&bytes[pos + 1..end]).unwrap_or("");
            let mut it = line.split_whitespace();
            if it.next() == Some("range") {
                let lo = it.next().and_then(|s| s.parse::<f64>().ok());
                let hi = it.next().and_then(|s| s.parse::<f64>().ok());
                if let (Some(lo), Some(hi)) = (lo, hi) {
                    if lo.is_finite() && hi.is_finite() && lo <= hi {
                        range = Some((lo, hi));
                    }
                }
            }
            pos = end + 1;
        } else if c.is_ascii_digit() {
            let start = pos;
            while pos < bytes.len() && bytes[pos].is_ascii_digit() {
                pos += 1;
            }
            let s = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
            tokens.push(s.parse().map_err(|_| bad("header number out of range"))?);
        } else {
            return Err(bad("unexpected header byte"));
        }
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(pos) {
        Some(c) if c.is_ascii_whitespace() => pos += 1,
        _ => return Err(bad("missing raster separator")),
    }
    let (width, height, maxval) = (tokens[0], tokens[1], tokens[2]);
    if width == 0 || height == 0 {
        return Err(bad("zero dimension"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(bad("only 8-bit maxval is supported"));
    }
    let n = width.checked_mul(height).ok_or_else(|| bad("dimensions overflow"))?;
    let raster = &bytes[pos..];
    if raster.len() != n {
        return Err(bad("raster length mismatch"));
    }
    if raster.iter().any(|&p| p as usize > maxval) {
        return Err(bad("pixel exceeds maxval"));
    }
    Ok(Pgm {
        width,
        height,
        pixels: raster.to_vec(),
        range,
    })
}

fn cohort_tag(c: Cohort) -> &'static str {
    match c {
        Cohort::Control => "control",
        Cohort::Mtbi => "mtbi",
    }
}

/// `<METRIC>_<Region>_word<ii>_<cohort>.pgm`
pub fn word_file_name(cb: &Codebook, index: usize) -> String {
    format!(
        "{}_word{index:02}_{}.pgm",
        cb.key.stem(),
        cohort_tag(cb.provenance[index])
    )
}

/// Write one image per word of `cb` into `dir`; returns the paths in word order.
pub fn render_words(cb: &Codebook, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    cb.validate()?;
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    cb.words
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let path = dir.join(word_file_name(cb, i));
            let bytes = encode_word_pgm(w, cb.patch_size)?;
            std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureKey, MetricId, RegionId};
    use proptest::prelude::*;

    #[test]
    fn constant_word_is_mid_gray() {
        let img = decode_pgm(&encode_word_pgm(&[3.5; 4], 2).unwrap()).unwrap();
        assert_eq!(img.pixels, vec![MID_GRAY; 4]);
        assert_eq!(img.values().unwrap(), vec![3.5; 4]);
    }

    #[test]
    fn extremes_map_to_black_and_white() {
        let img = decode_pgm(&encode_word_pgm(&[-1.0, 0.0, 0.5, 1.0], 2).unwrap()).unwrap();
        assert_eq!((img.width, img.height), (2, 2));
        assert_eq!(img.pixels[0], 0);
        assert_eq!(img.pixels[3], 255);
    }

    #[test]
    fn decoder_rejects_malformed() {
        assert!(decode_pgm(b"P2\n1 1\n255\n\0").is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\0").is_err());
        assert!(decode_pgm(b"P5\n1 1\n1000\n\0").is_err());
        assert!(decode_pgm(b"P5\n1 1\n10\n\x20").is_err());
        assert!(decode_pgm(b"P5\n0 1\n255\n").is_err());
        assert!(decode_pgm(b"P5 # c").is_err());
        assert!(decode_pgm(b"P5\n1 1\n255\n\x07").is_ok());
    }

    #[test]
    fn one_file_per_word() {
        let dir = tempfile::tempdir().unwrap();
        let key = FeatureKey::new(MetricId::Fa, RegionId::Thalamus);
        let cb = Codebook::new(
            key,
            2,
            vec![vec![0.0, 1.0, 2.0, 3.0], vec![1.0; 4], vec![3.0, 2.0, 1.0, 0.0]],
            vec![Cohort::Control, Cohort::Control, Cohort::Mtbi],
        )
        .unwrap();
        let paths = render_words(&cb, dir.path()).unwrap();
        assert_eq!(paths.len(), cb.k_total());
        assert!(paths[2].ends_with("FA_Thalamus_word02_mtbi.pgm"));
        let back = decode_pgm(&std::fs::read(&paths[0]).unwrap()).unwrap();
        assert_eq!(back.pixels, vec![0, 85, 170, 255]);
    }

    proptest! {
        #[test]
        fn word_round_trips_within_quantization(vals in prop::collection::vec(-100.0f64..100.0, 9)) {
            let img = decode_pgm(&encode_word_pgm(&vals, 3).unwrap()).unwrap();
            let back = img.values().unwrap();
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let step = (hi - lo) / 255.0;
            for (a, b) in vals.iter().zip(&back) {
                prop_assert!((a - b).abs() <= 0.5 * step + 1e-9 * hi.abs().max(lo.abs()).max(1.0));
            }
        }
    }
}

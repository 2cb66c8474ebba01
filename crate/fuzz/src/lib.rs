//! Fuzz target bodies. Each accepts arbitrary bytes, must never panic, and
//! reports whether the input parsed.
//! Whatever parses is re-serialized and parsed again, and the second
//! serialization must match the first.

use voxbow::classifier::SvmModel;
use voxbow::codebook::Codebook;
use voxbow::data::{
    decode_mask, decode_volume, encode_mask, encode_volume, format_clinical, parse_clinical,
    Manifest,
};
use voxbow::encoding::FeatureTable;
use voxbow::evaluation::decode_pgm;
use voxbow::pipeline::RunConfig;
use voxbow::selection::SelectionTrace;

/// Header and payload travel in one input, separated by the first NUL byte.
fn split_header(data: &[u8]) -> (&[u8], &[u8]) {
    match data.iter().position(|&b| b == 0) {
        Some(i) => (&data[..i], &data[i + 1..]),
        None => (data, &[]),
    }
}

pub fn volume_decode(data: &[u8]) -> bool {
    let (header, raw) = split_header(data);
    let Ok(v) = decode_volume(header, raw) else { return false };
    assert_eq!(v.voxels().len(), v.dims().len());
    // Non-finite payloads decode but are refused on write.
    if let Ok((h, r)) = encode_volume(&v) {
        let again = decode_volume(&h, &r).expect("re-decode volume");
        assert_eq!(encode_volume(&again).expect("re-encode volume"), (h, r));
    }
    true
}

pub fn mask_decode(data: &[u8]) -> bool {
    let (header, raw) = split_header(data);
    let Ok(m) = decode_mask(header, raw) else { return false };
    assert_eq!(m.bits().len(), m.dims().len());
    let (h, r) = encode_mask(&m).expect("encode mask");
    assert_eq!(decode_mask(&h, &r).expect("re-decode mask"), m);
    true
}

pub fn manifest_parse(data: &[u8]) -> bool {
    let Ok(m) = Manifest::parse(data) else { return false };
    let bytes = serde_json::to_vec(&m).expect("serialize manifest");
    assert_eq!(Manifest::parse(&bytes).expect("re-parse manifest"), m);
    true
}

pub fn clinical_csv(data: &[u8]) -> bool {
    let Ok(rows) = parse_clinical(data) else { return false };
    let mut first = Vec::new();
    format_clinical(&rows, &mut first).expect("format clinical");
    let again = parse_clinical(first.as_slice()).expect("re-parse clinical");
    let mut second = Vec::new();
    format_clinical(&again, &mut second).expect("re-format clinical");
    assert_eq!(first, second);
    true
}

pub fn run_config_toml(data: &[u8]) -> bool {
    let Ok(text) = std::str::from_utf8(data) else { return false };
    let Ok(cfg) = RunConfig::from_toml(text) else { return false };
    cfg.validate().expect("parsed config validates");
    let json = serde_json::to_value(&cfg).expect("serialize config");
    let back: RunConfig = serde_json::from_value(json.clone()).expect("deserialize config");
    assert_eq!(serde_json::to_value(back.resolved().expect("resolve")).unwrap(), json);
    true
}

pub fn codebook_json(data: &[u8]) -> bool {
    let Ok(cb) = Codebook::from_json(data) else { return false };
    let bytes = cb.to_json().expect("serialize codebook");
    let again = Codebook::from_json(&bytes).expect("re-parse codebook");
    assert_eq!(again.to_json().expect("re-serialize codebook"), bytes);
    true
}

pub fn svm_model_json(data: &[u8]) -> bool {
    let Ok(m) = SvmModel::from_json(data) else { return false };
    let bytes = m.to_json().expect("serialize model");
    let again = SvmModel::from_json(&bytes).expect("re-parse model");
    assert_eq!(again.to_json().expect("re-serialize model"), bytes);
    true
}

pub fn selection_trace_json(data: &[u8]) -> bool {
    let Ok(t) = SelectionTrace::from_json(data) else { return false };
    t.validate().expect("parsed trace validates");
    let bytes = t.to_json().expect("serialize trace");
    let again = SelectionTrace::from_json(&bytes).expect("re-parse trace");
    assert_eq!(again.to_json().expect("re-serialize trace"), bytes);
    true
}

pub fn feature_csv(data: &[u8]) -> bool {
    let Ok(t) = FeatureTable::read_csv(data) else { return false };
    let mut first = Vec::new();
    t.write_csv(&mut first).expect("write features");
    let again = FeatureTable::read_csv(first.as_slice()).expect("re-read features");
    let mut second = Vec::new();
    again.write_csv(&mut second).expect("re-write features");
    assert_eq!(first, second);
    true
}

pub fn pgm_decode(data: &[u8]) -> bool {
    let Ok(img) = decode_pgm(data) else { return false };
    assert_eq!(img.pixels.len(), img.width * img.height);
    if let Some(v) = img.values() {
        assert_eq!(v.len(), img.pixels.len());
        assert!(v.iter().all(|x| x.is_finite()));
    }
    true
}

/// A target body: returns whether the input parsed.
pub type Target = fn(&[u8]) -> bool;

pub const TARGETS: &[(&str, Target)] = &[
    ("volume_decode", volume_decode),
    ("mask_decode", mask_decode),
    ("manifest_parse", manifest_parse),
    ("clinical_csv", clinical_csv),
    ("run_config_toml", run_config_toml),
    ("codebook_json", codebook_json),
    ("svm_model_json", svm_model_json),
    ("selection_trace_json", selection_trace_json),
    ("feature_csv", feature_csv),
    ("pgm_decode", pgm_decode),
];

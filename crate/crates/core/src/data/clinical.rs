//! Demographic and neurocognitive covariates.
//!
//! CSV contract, header exact: `subject_id,age,sex,stroop,sdmt,cvlt,fss,label`.
//! `sex` is 0 = female, 1 = male. `label` is 0 = control, 1 = mTBI.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use super::ids::Cohort;
use crate::error::{Error, Result};

pub const CLINICAL_HEADER: [&str; 8] = [
    "subject_id",
    "age",
    "sex",
    "stroop",
    "sdmt",
    "cvlt",
    "fss",
    "label",
];

/// Names of the six covariates, in feature order.
pub const COVARIATE_NAMES: [&str; 6] = ["age", "sex", "stroop", "sdmt", "cvlt", "fss"];

#[derive(Debug, Clone, PartialEq)]
pub struct ClinicalRecord {
    pub subject_id: String,
    pub age: f64,
    pub sex: u8,
    pub stroop: f64,
    pub sdmt: f64,
    pub cvlt: f64,
    pub fss: f64,
    pub cohort: Cohort,
}

impl ClinicalRecord {
    pub fn covariates(&self) -> [f64; 6] {
        [
            self.age,
            self.sex as f64,
            self.stroop,
            self.sdmt,
            self.cvlt,
            self.fss,
        ]
    }

    pub fn label(&self) -> u8 {
        self.cohort.label()
    }

    pub fn validate(&self) -> Result<()> {
        if self.subject_id.is_empty() {
            return Err(Error::data("empty subject_id"));
        }
        if !(self.age.is_finite() && self.age > 0.0) {
            return Err(Error::data(format!(
                "subject {}: age must be finite and positive",
                self.subject_id
            )));
        }
        if self.sex > 1 {
            return Err(Error::data(format!(
                "subject {}: sex must be 0 or 1",
                self.subject_id
            )));
        }
        for (name, v) in COVARIATE_NAMES.iter().zip(self.covariates()) {
            if !v.is_finite() {
                return Err(Error::data(format!(
                    "subject {}: {name} is not finite",
                    self.subject_id
                )));
            }
        }
        Ok(())
    }
}

fn field(row: &csv::StringRecord, i: usize, line: u64) -> Result<&str> {
    row.get(i)
        .ok_or_else(|| Error::data(format!("line {line}: missing column {}", CLINICAL_HEADER[i])))
}

fn number(row: &csv::StringRecord, i: usize, line: u64) -> Result<f64> {
    let s = field(row, i, line)?;
    s.trim().parse::<f64>().map_err(|_| {
        Error::data(format!(
            "line {line}: unparsable number {s:?} in column {}",
            CLINICAL_HEADER[i]
        ))
    })
}

fn binary(row: &csv::StringRecord, i: usize, line: u64) -> Result<u8> {
    let s = field(row, i, line)?;
    match s.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        _ => Err(Error::data(format!(
            "line {line}: {} must be 0 or 1, got {s:?}",
            CLINICAL_HEADER[i]
        ))),
    }
}

/// Parse the clinical CSV from any reader.
pub fn parse_clinical<R: Read>(reader: R) -> Result<Vec<ClinicalRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::data(format!("clinical header: {e}")))?;
    if header.iter().ne(CLINICAL_HEADER.iter().copied()) {
        return Err(Error::data(format!(
            "clinical header must be exactly {:?}",
            CLINICAL_HEADER.join(",")
        )));
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::data(format!("clinical csv: {e}")))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let subject_id = field(&row, 0, line)?.to_string();
        if !seen.insert(subject_id.clone()) {
            return Err(Error::data(format!("duplicate subject {subject_id:?}")));
        }
        let label = binary(&row, 7, line)?;
        let rec = ClinicalRecord {
            subject_id,
            age: number(&row, 1, line)?,
            sex: binary(&row, 2, line)?,
            stroop: number(&row, 3, line)?,
            sdmt: number(&row, 4, line)?,
            cvlt: number(&row, 5, line)?,
            fss: number(&row, 6, line)?,
            cohort: Cohort::from_label(label).expect("binary label"),
        };
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}

pub fn load_clinical(path: impl AsRef<Path>) -> Result<Vec<ClinicalRecord>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_clinical(std::io::BufReader::new(f))
}

pub fn format_clinical<W: Write>(records: &[ClinicalRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::data(format!("clinical csv write: {e}"));
    wtr.write_record(CLINICAL_HEADER).map_err(err)?;
    for r in records {
        wtr.write_record([
            r.subject_id.clone(),
            r.age.to_string(),
            r.sex.to_string(),
            r.stroop.to_string(),
            r.sdmt.to_string(),
            r.cvlt.to_string(),
            r.fss.to_string(),
            r.label().to_string(),
        ])
        .map_err(err)?;
    }
    wtr.flush().map_err(|e| Error::data(e.to_string()))
}

pub fn write_clinical(records: &[ClinicalRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    format_clinical(records, std::io::BufWriter::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "subject_id,age,sex,stroop,sdmt,cvlt,fss,label\n";

    #[test]
    fn parses_single_row() {
        let csv = format!("{HEADER}s1,25,1,50,40,55,3.5,1\n");
        let recs = parse_clinical(csv.as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].age, 25.0);
        assert_eq!(recs[0].label(), 1);
        assert_eq!(recs[0].fss, 3.5);
        assert_eq!(recs[0].cohort, Cohort::Mtbi);
    }

    #[test]
    fn duplicate_subject_rejected() {
        let csv = format!("{HEADER}s1,25,1,50,40,55,3.5,1\ns1,30,0,50,40,55,3.5,0\n");
        let err = parse_clinical(csv.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("duplicate subject"), "{err}");
    }

    #[test]
    fn empty_body_is_empty_list() {
        assert!(parse_clinical(HEADER.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn bad_label_and_number_rejected() {
        let bad_label = format!("{HEADER}s1,25,1,50,40,55,3.5,2\n");
        assert!(parse_clinical(bad_label.as_bytes()).is_err());
        let bad_num = format!("{HEADER}s1,2x5,1,50,40,55,3.5,1\n");
        let err = parse_clinical(bad_num.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("unparsable"), "{err}");
        let bad_age = format!("{HEADER}s1,-3,1,50,40,55,3.5,1\n");
        assert!(parse_clinical(bad_age.as_bytes()).is_err());
    }

    #[test]
    fn header_must_match_exactly() {
        let csv = "subject_id,age,sex,stroop,sdmt,cvlt,label,fss\n";
        assert!(parse_clinical(csv.as_bytes()).is_err());
    }

    #[test]
    fn write_then_parse() {
        let recs = vec![ClinicalRecord {
            subject_id: "c01".into(),
            age: 33.25,
            sex: 0,
            stroop: 48.0,
            sdmt: 51.5,
            cvlt: 60.125,
            fss: 2.75,
            cohort: Cohort::Control,
        }];
        let mut buf = Vec::new();
        format_clinical(&recs, &mut buf).unwrap();
        assert_eq!(parse_clinical(buf.as_slice()).unwrap(), recs);
    }
}

//! Trial and drug tables (TSV) and model checkpoints.
//!
//! Trials: `trial_id  date  drug_id  smiles  icd_codes`, codes separated by
//! `;`. Drugs: `drug_id  smiles  first_tested_date`. Dates are ISO-8601.

mod checkpoint;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, schema_hash, write_checkpoint, CHECKPOINT_VERSION,
};

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use thiserror::Error;

use crate::ontology::DiseaseCode;

pub const TRIALS_HEADER: [&str; 5] = ["trial_id", "date", "drug_id", "smiles", "icd_codes"];
pub const DRUGS_HEADER: [&str; 3] = ["drug_id", "smiles", "first_tested_date"];
const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("FileNotFound: {0}")]
    FileNotFound(String),
    #[error("MalformedRow: row {row}: {reason}")]
    MalformedRow { row: u64, reason: String },
    #[error("DuplicateTrialId: row {row}: {id}")]
    DuplicateTrialId { row: u64, id: String },
    #[error("DuplicateDrugId: row {row}: {id}")]
    DuplicateDrugId { row: u64, id: String },
    #[error("InvalidCodeFormat: row {row}: {text:?} is not an ICD-10 code")]
    InvalidCodeFormat { row: u64, text: String },
    #[error("UnparseableDate: row {row}: {text:?} is not YYYY-MM-DD")]
    UnparseableDate { row: u64, text: String },
    #[error("UnsupportedVersion: checkpoint format {found:?} (this build reads version {supported})")]
    UnsupportedVersion { found: String, supported: u32 },
    #[error("CorruptCheckpoint: line {line}: {reason}")]
    CorruptCheckpoint { line: usize, reason: String },
    #[error("checkpoint was written with a different atom/bond featurization")]
    SchemaMismatch,
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

pub(crate) fn open(path: &Path) -> Result<File, DataError> {
    File::open(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => DataError::FileNotFound(path.display().to_string()),
        _ => DataError::Io(e),
    })
}

pub fn parse_date(text: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(text.trim(), DATE_FORMAT).ok()
}

pub fn format_date(date: NaiveDate) -> String {
    date.format(DATE_FORMAT).to_string()
}

/// One clinical trial: a drug tested against a set of disease codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialRecord {
    pub trial_id: String,
    pub date: NaiveDate,
    pub drug_id: String,
    pub smiles: String,
    /// Sorted, deduplicated, non-empty.
    pub codes: Vec<DiseaseCode>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DrugRecord {
    pub drug_id: String,
    pub smiles: String,
    pub first_tested: NaiveDate,
}

/// Drugs in file order, addressable by id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DrugTable {
    records: Vec<DrugRecord>,
    index: HashMap<String, usize>,
}

impl DrugTable {
    pub fn new(records: Vec<DrugRecord>) -> Result<DrugTable, DataError> {
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if index.insert(r.drug_id.clone(), i).is_some() {
                return Err(DataError::DuplicateDrugId { row: i as u64 + 2, id: r.drug_id.clone() });
            }
        }
        Ok(DrugTable { records, index })
    }

    pub fn get(&self, drug_id: &str) -> Option<&DrugRecord> {
        self.index.get(drug_id).map(|&i| &self.records[i])
    }

    pub fn records(&self) -> &[DrugRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

fn tsv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .flexible(true)
        .quoting(false)
        .from_reader(reader)
}

fn tsv_writer<W: Write>(writer: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().delimiter(b'\t').quote_style(csv::QuoteStyle::Never).from_writer(writer)
}

/// Yields `(row, fields)` for every data row after checking the header.
fn read_rows<R: Read>(reader: R, header: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>, DataError> {
    let mut rows = Vec::new();
    let mut saw_header = false;
    for result in tsv_reader(reader).records() {
        let record = result.map_err(|e| DataError::MalformedRow {
            row: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let row = record.position().map(|p| p.line()).unwrap_or(0);
        if !saw_header {
            saw_header = true;
            let found: Vec<&str> = record.iter().map(str::trim).collect();
            if found != header {
                return Err(DataError::MalformedRow {
                    row,
                    reason: format!("expected header {:?}, found {:?}", header.join("\\t"), found.join("\\t")),
                });
            }
            continue;
        }
        if record.len() != header.len() {
            return Err(DataError::MalformedRow {
                row,
                reason: format!("expected {} columns, found {}", header.len(), record.len()),
            });
        }
        rows.push((row, record));
    }
    if !saw_header {
        return Err(DataError::MalformedRow { row: 1, reason: "missing header".into() });
    }
    Ok(rows)
}

fn required<'a>(row: u64, record: &'a csv::StringRecord, i: usize, name: &str) -> Result<&'a str, DataError> {
    let v = record[i].trim();
    if v.is_empty() {
        return Err(DataError::MalformedRow { row, reason: format!("empty {name}") });
    }
    Ok(v)
}

fn date_field(row: u64, text: &str) -> Result<NaiveDate, DataError> {
    parse_date(text).ok_or_else(|| DataError::UnparseableDate { row, text: text.to_string() })
}

/// Parses `a;b;c` into a sorted, deduplicated code list.
pub fn parse_code_list(text: &str) -> Result<Vec<DiseaseCode>, String> {
    let mut codes = BTreeSet::new();
    for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        codes.insert(DiseaseCode::normalize(part).map_err(|_| part.to_string())?);
    }
    Ok(codes.into_iter().collect())
}

pub fn load_trials(path: impl AsRef<Path>) -> Result<Vec<TrialRecord>, DataError> {
    read_trials(open(path.as_ref())?)
}

pub fn read_trials<R: Read>(reader: R) -> Result<Vec<TrialRecord>, DataError> {
    let mut seen = HashSet::new();
    let mut trials = Vec::new();
    for (row, rec) in read_rows(reader, &TRIALS_HEADER)? {
        let trial_id = required(row, &rec, 0, "trial_id")?.to_string();
        let date = date_field(row, &rec[1])?;
        let drug_id = required(row, &rec, 2, "drug_id")?.to_string();
        let smiles = required(row, &rec, 3, "smiles")?.to_string();
        let codes = parse_code_list(&rec[4]).map_err(|text| DataError::InvalidCodeFormat { row, text })?;
        if codes.is_empty() {
            return Err(DataError::MalformedRow { row, reason: "empty icd_codes".into() });
        }
        if !seen.insert(trial_id.clone()) {
            return Err(DataError::DuplicateTrialId { row, id: trial_id });
        }
        trials.push(TrialRecord { trial_id, date, drug_id, smiles, codes });
    }
    Ok(trials)
}

pub fn load_drug_db(path: impl AsRef<Path>) -> Result<DrugTable, DataError> {
    read_drug_db(open(path.as_ref())?)
}

pub fn read_drug_db<R: Read>(reader: R) -> Result<DrugTable, DataError> {
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (row, rec) in read_rows(reader, &DRUGS_HEADER)? {
        let drug_id = required(row, &rec, 0, "drug_id")?.to_string();
        let smiles = required(row, &rec, 1, "smiles")?.to_string();
        let first_tested = date_field(row, &rec[2])?;
        if !seen.insert(drug_id.clone()) {
            return Err(DataError::DuplicateDrugId { row, id: drug_id });
        }
        records.push(DrugRecord { drug_id, smiles, first_tested });
    }
    DrugTable::new(records)
}

pub fn write_trials<W: Write>(writer: W, trials: &[TrialRecord]) -> Result<(), DataError> {
    let mut w = tsv_writer(writer);
    w.write_record(TRIALS_HEADER).map_err(csv_io)?;
    for t in trials {
        let codes: Vec<String> = t.codes.iter().map(DiseaseCode::display).collect();
        w.write_record([&t.trial_id, &format_date(t.date), &t.drug_id, &t.smiles, &codes.join(";")])
            .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_drug_db<W: Write>(writer: W, drugs: &[DrugRecord]) -> Result<(), DataError> {
    let mut w = tsv_writer(writer);
    w.write_record(DRUGS_HEADER).map_err(csv_io)?;
    for d in drugs {
        w.write_record([&d.drug_id, &d.smiles, &format_date(d.first_tested)]).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> DataError {
    DataError::Io(io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEAD: &str = "trial_id\tdate\tdrug_id\tsmiles\ticd_codes\n";

    fn trials(body: &str) -> Result<Vec<TrialRecord>, DataError> {
        read_trials(format!("{HEAD}{body}").as_bytes())
    }

    #[test]
    fn single_trial_row() {
        let t = trials("NCT001\t2015-06-01\tDB01\tCCO\tG44.311\n").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].trial_id, "NCT001");
        assert_eq!(t[0].date, NaiveDate::from_ymd_opt(2015, 6, 1).unwrap());
        assert_eq!(t[0].codes.len(), 1);
        assert_eq!(t[0].codes[0].canonical(), "G44311");
    }

    #[test]
    fn codes_are_sorted_and_deduplicated() {
        let t = trials("T1\t2015-06-01\tDB01\tCCO\tI10; c34.91 ;I10\n").unwrap();
        let c: Vec<&str> = t[0].codes.iter().map(|c| c.canonical()).collect();
        assert_eq!(c, ["C3491", "I10"]);
    }

    #[test]
    fn trial_errors_carry_rows() {
        let err = trials("NCT001\t2015-06-01\tDB01\tCCO\t\n").unwrap_err();
        assert!(matches!(err, DataError::MalformedRow { row: 2, .. }), "{err}");
        let err = trials("NCT001\t2015-06-01\tDB01\tCCO\tI10\nNCT001\t2016-01-01\tDB02\tC\tI10\n").unwrap_err();
        assert!(matches!(err, DataError::DuplicateTrialId { row: 3, .. }), "{err}");
        let err = trials("NCT001\t2015-13-01\tDB01\tCCO\tI10\n").unwrap_err();
        assert!(matches!(err, DataError::UnparseableDate { row: 2, .. }), "{err}");
        let err = trials("NCT001\t2015-01-01\tDB01\tCCO\t4471\n").unwrap_err();
        assert!(matches!(err, DataError::InvalidCodeFormat { row: 2, .. }), "{err}");
        let err = trials("NCT001\t2015-01-01\tDB01\tCCO\n").unwrap_err();
        assert!(matches!(err, DataError::MalformedRow { row: 2, .. }), "{err}");
        let err = read_trials("id\tdate\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::MalformedRow { row: 1, .. }), "{err}");
        assert!(matches!(load_trials("/nonexistent/t.tsv"), Err(DataError::FileNotFound(_))));
    }

    #[test]
    fn drug_table() {
        let head = "drug_id\tsmiles\tfirst_tested_date\n";
        let db = read_drug_db(format!("{head}DB01\tCCO\t2001-01-01\nDB02\tc1ccccc1\t2003-05-06\n").as_bytes())
            .unwrap();
        assert_eq!(db.len(), 2);
        assert_eq!(db.get("DB02").unwrap().smiles, "c1ccccc1");
        let err = read_drug_db(format!("{head}DB01\tCCO\t2001-01-01\nDB01\tC\t2001-01-01\n").as_bytes())
            .unwrap_err();
        assert!(matches!(err, DataError::DuplicateDrugId { row: 3, .. }), "{err}");
        let err = read_drug_db(format!("{head}DB01\tCCO\n").as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::MalformedRow { row: 2, .. }), "{err}");
    }

    #[test]
    fn write_then_read_round_trip() {
        let t = trials("A\t2015-06-01\tDB01\tCC(=O)O\tG44.311;I10\nB\t2019-02-03\tDB02\tC#N\tD41.20\n").unwrap();
        let mut buf = Vec::new();
        write_trials(&mut buf, &t).unwrap();
        assert_eq!(read_trials(buf.as_slice()).unwrap(), t);

        let drugs = vec![DrugRecord {
            drug_id: "DB01".into(),
            smiles: "CC(=O)O".into(),
            first_tested: NaiveDate::from_ymd_opt(2015, 6, 1).unwrap(),
        }];
        let mut buf = Vec::new();
        write_drug_db(&mut buf, &drugs).unwrap();
        assert_eq!(read_drug_db(buf.as_slice()).unwrap().records(), drugs.as_slice());
    }
}

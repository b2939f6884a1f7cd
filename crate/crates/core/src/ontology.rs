//! ICD-10-CM codes and their prefix hierarchy.
//!
//! Codes are stored in canonical form: uppercase, without the dot. The
//! first three characters are the category. A code's ancestors are its
//! category and its immediate parent (the code without its last character).

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{self, Read};
use std::path::Path;

use thiserror::Error;

const CATEGORY_LEN: usize = 3;
const MAX_CODE_LEN: usize = 7;

#[derive(Debug, Error)]
pub enum OntologyError {
    #[error("InvalidCodeFormat: {text:?} is not an ICD-10 code")]
    InvalidCodeFormat { text: String },
    #[error("InvalidCodeFormat: row {row}: {text:?} is not an ICD-10 code")]
    InvalidCodeFormatAt { row: u64, text: String },
    #[error("FileNotFound: {0}")]
    FileNotFound(String),
    #[error("MalformedRow: row {row}: {reason}")]
    MalformedRow { row: u64, reason: String },
    #[error("UnknownCode: {0} is not in the ontology")]
    UnknownCode(String),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DiseaseCode {
    canonical: String,
}

impl DiseaseCode {
    /// Strips a dot after the category, uppercases and validates.
    pub fn normalize(text: &str) -> Result<DiseaseCode, OntologyError> {
        let invalid = || OntologyError::InvalidCodeFormat { text: text.to_string() };
        let trimmed = text.trim();
        let canonical = match trimmed.find('.') {
            None => trimmed.to_ascii_uppercase(),
            Some(CATEGORY_LEN) if trimmed.len() > CATEGORY_LEN + 1 => {
                let (head, tail) = trimmed.split_at(CATEGORY_LEN);
                format!("{head}{}", &tail[1..]).to_ascii_uppercase()
            }
            Some(_) => return Err(invalid()),
        };
        if is_valid_canonical(&canonical) {
            Ok(DiseaseCode { canonical })
        } else {
            Err(invalid())
        }
    }

    pub fn canonical(&self) -> &str {
        &self.canonical
    }

    /// Dotted form, e.g. `G44.311`.
    pub fn display(&self) -> String {
        if self.canonical.len() > CATEGORY_LEN {
            format!("{}.{}", &self.canonical[..CATEGORY_LEN], &self.canonical[CATEGORY_LEN..])
        } else {
            self.canonical.clone()
        }
    }

    pub fn category(&self) -> DiseaseCode {
        DiseaseCode { canonical: self.canonical[..CATEGORY_LEN].to_string() }
    }

    /// The category and the immediate parent (the code minus its last
    /// character), shortest first; a category has no ancestors.
    ///
    /// `G44.311` yields `[G44, G44.31]`, `D41.20` yields `[D41, D41.2]`.
    pub fn ancestors(&self) -> Vec<DiseaseCode> {
        let len = self.canonical.len();
        let mut out = Vec::with_capacity(2);
        if len > CATEGORY_LEN {
            out.push(self.category());
        }
        if len > CATEGORY_LEN + 1 {
            out.push(DiseaseCode { canonical: self.canonical[..len - 1].to_string() });
        }
        out
    }
}

impl fmt::Display for DiseaseCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display())
    }
}

fn is_valid_canonical(s: &str) -> bool {
    let b = s.as_bytes();
    (CATEGORY_LEN..=MAX_CODE_LEN).contains(&b.len())
        && b[0].is_ascii_uppercase()
        && b[1].is_ascii_digit()
        && (b[2].is_ascii_digit() || b[2].is_ascii_uppercase())
        && b[3..].iter().all(|c| c.is_ascii_digit() || c.is_ascii_uppercase())
}

/// Transitive ancestors: following parents down to the category reaches
/// every proper prefix of length ≥ 3.
fn closure_of(code: &DiseaseCode) -> Vec<DiseaseCode> {
    (CATEGORY_LEN..code.canonical.len())
        .map(|len| DiseaseCode { canonical: code.canonical[..len].to_string() })
        .collect()
}

/// Free-function form of [`DiseaseCode::normalize`].
pub fn normalize(text: &str) -> Result<DiseaseCode, OntologyError> {
    DiseaseCode::normalize(text)
}

/// Free-function form of [`DiseaseCode::ancestors`].
pub fn ancestors(code: &DiseaseCode) -> Vec<DiseaseCode> {
    code.ancestors()
}

/// A set of codes closed under ancestors, with dense ids in canonical order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Ontology {
    codes: Vec<DiseaseCode>,
    descriptions: Vec<String>,
    index: BTreeMap<DiseaseCode, usize>,
}

impl Ontology {
    /// Builds the ancestor closure of `entries` (code, description).
    ///
    /// When a code appears twice the first non-empty description is kept.
    pub fn from_entries<I>(entries: I) -> Ontology
    where
        I: IntoIterator<Item = (DiseaseCode, String)>,
    {
        let mut map: BTreeMap<DiseaseCode, String> = BTreeMap::new();
        for (code, desc) in entries {
            for anc in closure_of(&code) {
                map.entry(anc).or_default();
            }
            let slot = map.entry(code).or_default();
            if slot.is_empty() {
                *slot = desc;
            }
        }
        Ontology::from_closed_map(map)
    }

    pub fn from_codes<I>(codes: I) -> Ontology
    where
        I: IntoIterator<Item = DiseaseCode>,
    {
        Ontology::from_entries(codes.into_iter().map(|c| (c, String::new())))
    }

    fn from_closed_map(map: BTreeMap<DiseaseCode, String>) -> Ontology {
        let mut codes = Vec::with_capacity(map.len());
        let mut descriptions = Vec::with_capacity(map.len());
        let mut index = BTreeMap::new();
        for (i, (code, desc)) in map.into_iter().enumerate() {
            index.insert(code.clone(), i);
            codes.push(code);
            descriptions.push(desc);
        }
        Ontology { codes, descriptions, index }
    }

    /// Adds codes (and their ancestors) that are not yet present, logging
    /// a warning for each, then reassigns ids in canonical order.
    ///
    /// Returns the newly inserted codes. Must only be called before a
    /// model is bound to the ids.
    pub fn insert_missing<'a, I>(&mut self, codes: I) -> Vec<DiseaseCode>
    where
        I: IntoIterator<Item = &'a DiseaseCode>,
    {
        let mut map: BTreeMap<DiseaseCode, String> = self
            .codes
            .drain(..)
            .zip(self.descriptions.drain(..))
            .collect();
        let mut inserted = Vec::new();
        for code in codes {
            for c in closure_of(code).into_iter().chain(std::iter::once(code.clone())) {
                if !map.contains_key(&c) {
                    log::warn!("code {} not in code table; inserted with empty description", c);
                    map.insert(c.clone(), String::new());
                    inserted.push(c);
                }
            }
        }
        *self = Ontology::from_closed_map(map);
        inserted
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn id(&self, code: &DiseaseCode) -> Option<usize> {
        self.index.get(code).copied()
    }

    pub fn require_id(&self, code: &DiseaseCode) -> Result<usize, OntologyError> {
        self.id(code).ok_or_else(|| OntologyError::UnknownCode(code.display()))
    }

    pub fn contains(&self, code: &DiseaseCode) -> bool {
        self.index.contains_key(code)
    }

    pub fn code(&self, id: usize) -> Option<&DiseaseCode> {
        self.codes.get(id)
    }

    pub fn description(&self, code: &DiseaseCode) -> Option<&str> {
        self.id(code).map(|i| self.descriptions[i].as_str())
    }

    /// Codes in id order.
    pub fn codes(&self) -> &[DiseaseCode] {
        &self.codes
    }

    /// Ids of `Ancestors(code) ∪ {code}`, ancestors first.
    pub fn lineage_ids(&self, code: &DiseaseCode) -> Result<Vec<usize>, OntologyError> {
        let own = self.require_id(code)?;
        let mut ids = Vec::with_capacity(3);
        for anc in code.ancestors() {
            ids.push(self.require_id(&anc)?);
        }
        ids.push(own);
        Ok(ids)
    }
}

/// Loads a `code,description` CSV (RFC 4180 quoting).
pub fn load_code_table(path: impl AsRef<Path>) -> Result<Ontology, OntologyError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => OntologyError::FileNotFound(path.display().to_string()),
        _ => OntologyError::Io(e),
    })?;
    read_code_table(file)
}

pub fn read_code_table<R: Read>(reader: R) -> Result<Ontology, OntologyError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut entries = Vec::new();
    let mut saw_header = false;
    for result in rdr.records() {
        let record = result.map_err(|e| {
            let row = e.position().map(|p| p.line()).unwrap_or(0);
            OntologyError::MalformedRow { row, reason: e.to_string() }
        })?;
        let row = record.position().map(|p| p.line()).unwrap_or(0);
        if !saw_header {
            saw_header = true;
            let header: Vec<&str> = record.iter().map(str::trim).collect();
            if header != ["code", "description"] {
                return Err(OntologyError::MalformedRow {
                    row,
                    reason: format!("expected header `code,description`, found {:?}", header.join(",")),
                });
            }
            continue;
        }
        if record.len() != 2 {
            return Err(OntologyError::MalformedRow {
                row,
                reason: format!("expected 2 columns, found {}", record.len()),
            });
        }
        let code = DiseaseCode::normalize(&record[0])
            .map_err(|_| OntologyError::InvalidCodeFormatAt { row, text: record[0].to_string() })?;
        entries.push((code, record[1].to_string()));
    }
    if !saw_header {
        return Err(OntologyError::MalformedRow { row: 1, reason: "missing header".into() });
    }
    Ok(Ontology::from_entries(entries))
}

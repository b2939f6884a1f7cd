//! Versioned text checkpoints.
//!
//! ```text
//! drugclip-checkpoint 1
//! config dim=32 depth=2 readout=sum seed=42
//! schema <sha-256 of the featurization schema>
//! codes <n>
//! <one canonical code per line, in id order>
//! params <n>
//! param <name> <kind> <rows>x<cols> | <len>
//! <values separated by spaces>
//! end
//! ```
//!
//! Floats are written in shortest round-trip form, so loading restores
//! every array bit for bit.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{open, DataError};
use crate::diffcore::{ParamKind, Parameter, ParameterStore, Shape};
use crate::drugclip::DrugClipModel;
use crate::encoders::{EncoderConfig, Readout};
use crate::molgraph::FEATURE_SCHEMA;
use crate::ontology::{DiseaseCode, Ontology};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "drugclip-checkpoint";

/// Hex SHA-256 of the atom/bond featurization schema.
pub fn schema_hash() -> String {
    hex::encode(Sha256::digest(FEATURE_SCHEMA.as_bytes()))
}

pub fn save_checkpoint(model: &DrugClipModel, path: impl AsRef<Path>) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, model)?;
    w.flush()?;
    Ok(())
}

pub fn write_checkpoint<W: Write>(mut w: W, model: &DrugClipModel) -> Result<(), DataError> {
    let cfg = model.config();
    writeln!(w, "{MAGIC} {CHECKPOINT_VERSION}")?;
    writeln!(w, "config dim={} depth={} readout={} seed={}", cfg.dim, cfg.depth, cfg.readout, model.seed())?;
    writeln!(w, "schema {}", schema_hash())?;
    let codes = model.ontology().codes();
    writeln!(w, "codes {}", codes.len())?;
    for c in codes {
        writeln!(w, "{}", c.canonical())?;
    }
    let params = model.params();
    writeln!(w, "params {}", params.len())?;
    let mut line = String::new();
    for p in params.iter() {
        let shape = match p.shape {
            Shape::Vector(n) => n.to_string(),
            Shape::Matrix(r, c) => format!("{r}x{c}"),
        };
        writeln!(w, "param {} {} {shape}", p.name, p.kind.as_str())?;
        line.clear();
        for (i, v) in p.values.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            write!(line, "{v}").expect("writing to a String cannot fail");
        }
        writeln!(w, "{line}")?;
    }
    writeln!(w, "end")?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<DrugClipModel, DataError> {
    read_checkpoint(open(path.as_ref())?)
}

struct Lines<R> {
    inner: std::io::Lines<BufReader<R>>,
    line: usize,
}

impl<R: Read> Lines<R> {
    fn next(&mut self, what: &str) -> Result<String, DataError> {
        self.line += 1;
        match self.inner.next() {
            Some(l) => Ok(l?),
            None => Err(self.corrupt(format!("file ends before {what}"))),
        }
    }

    fn corrupt(&self, reason: impl Into<String>) -> DataError {
        DataError::CorruptCheckpoint { line: self.line, reason: reason.into() }
    }

    /// `<key> <count>` line.
    fn counted(&mut self, key: &str) -> Result<usize, DataError> {
        let l = self.next(key)?;
        l.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(' '))
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| self.corrupt(format!("expected `{key} <count>`, found {l:?}")))
    }
}

pub fn read_checkpoint<R: Read>(reader: R) -> Result<DrugClipModel, DataError> {
    let mut lines = Lines { inner: BufReader::new(reader).lines(), line: 0 };

    let head = lines.next("the header")?;
    match head.split_once(' ') {
        Some((MAGIC, v)) if v == CHECKPOINT_VERSION.to_string() => {}
        Some((MAGIC, v)) => {
            return Err(DataError::UnsupportedVersion { found: v.to_string(), supported: CHECKPOINT_VERSION })
        }
        _ => return Err(lines.corrupt(format!("not a checkpoint header: {head:?}"))),
    }

    let config_line = lines.next("the config line")?;
    let (cfg, seed) = parse_config(&config_line).ok_or_else(|| lines.corrupt(format!("bad config line {config_line:?}")))?;

    let schema = lines.next("the schema line")?;
    match schema.strip_prefix("schema ") {
        Some(h) if h == schema_hash() => {}
        Some(_) => return Err(DataError::SchemaMismatch),
        None => return Err(lines.corrupt(format!("expected `schema <hash>`, found {schema:?}"))),
    }

    let n_codes = lines.counted("codes")?;
    let mut codes = Vec::with_capacity(n_codes);
    for _ in 0..n_codes {
        let l = lines.next("the code list ends")?;
        codes.push(DiseaseCode::normalize(&l).map_err(|_| lines.corrupt(format!("bad code {l:?}")))?);
    }
    let ontology = Ontology::from_codes(codes.iter().cloned());
    if ontology.codes() != codes.as_slice() {
        return Err(lines.corrupt("code list is not sorted and closed under ancestors"));
    }

    let n_params = lines.counted("params")?;
    let mut params = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        let l = lines.next("the parameter list ends")?;
        let fields: Vec<&str> = l.split(' ').collect();
        let (name, kind, shape) = match fields.as_slice() {
            ["param", name, kind, shape] => (*name, *kind, *shape),
            _ => return Err(lines.corrupt(format!("expected `param <name> <kind> <shape>`, found {l:?}"))),
        };
        let kind = ParamKind::parse(kind).ok_or_else(|| lines.corrupt(format!("unknown kind {kind:?}")))?;
        let shape = parse_shape(shape).ok_or_else(|| lines.corrupt(format!("bad shape {shape:?}")))?;
        let body = lines.next("parameter values")?;
        let values = if body.is_empty() {
            Vec::new()
        } else {
            body.split(' ')
                .map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| lines.corrupt(format!("non-numeric value in {name}")))?
        };
        if values.len() != shape.len() {
            return Err(lines.corrupt(format!("{name}: shape {shape} needs {} values, found {}", shape.len(), values.len())));
        }
        params.push(Parameter { name: name.to_string(), shape, kind, values });
    }
    let end = lines.next("`end`")?;
    if end != "end" {
        return Err(lines.corrupt(format!("expected `end`, found {end:?}")));
    }

    let store = ParameterStore::import(params, Some(seed)).map_err(|e| lines.corrupt(e.to_string()))?;
    DrugClipModel::from_parts(cfg, seed, ontology, store).map_err(|e| lines.corrupt(e.to_string()))
}

fn parse_config(line: &str) -> Option<(EncoderConfig, u64)> {
    let rest = line.strip_prefix("config ")?;
    let (mut dim, mut depth, mut readout, mut seed) = (None, None, None, None);
    for kv in rest.split(' ') {
        let (k, v) = kv.split_once('=')?;
        match k {
            "dim" => dim = v.parse().ok(),
            "depth" => depth = v.parse().ok(),
            "readout" => readout = v.parse::<Readout>().ok(),
            "seed" => seed = v.parse().ok(),
            _ => return None,
        }
    }
    let cfg = EncoderConfig { dim: dim?, depth: depth?, readout: readout? };
    cfg.validate().ok()?;
    Some((cfg, seed?))
}

fn parse_shape(s: &str) -> Option<Shape> {
    match s.split_once('x') {
        Some((r, c)) => Some(Shape::Matrix(r.parse().ok()?, c.parse().ok()?)),
        None => Some(Shape::Vector(s.parse().ok()?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> DrugClipModel {
        let onto = Ontology::from_codes(["G44.311", "I10"].map(|c| DiseaseCode::normalize(c).unwrap()));
        DrugClipModel::new(EncoderConfig::new(4, 2), onto, 17).unwrap()
    }

    fn to_text(m: &DrugClipModel) -> String {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, m).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let m = model();
        let back = read_checkpoint(to_text(&m).as_bytes()).unwrap();
        assert_eq!(back.config(), m.config());
        assert_eq!(back.seed(), 17);
        assert_eq!(back.ontology().codes(), m.ontology().codes());
        for (a, b) in m.params().iter().zip(back.params().iter()) {
            assert_eq!(a.name, b.name);
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.values), bits(&b.values));
        }
        assert_eq!(to_text(&back), to_text(&m));
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let text = to_text(&model());
        for cut in [text.len() / 3, text.len() - 4] {
            let err = read_checkpoint(&text.as_bytes()[..cut]).unwrap_err();
            assert!(matches!(err, DataError::CorruptCheckpoint { .. }), "{err}");
        }
    }

    #[test]
    fn newer_version_is_rejected() {
        let text = to_text(&model()).replacen("drugclip-checkpoint 1", "drugclip-checkpoint 2", 1);
        let err = read_checkpoint(text.as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::UnsupportedVersion { .. }), "{err}");
    }

    #[test]
    fn schema_and_shape_checks() {
        let text = to_text(&model());
        let bad_schema = text.replacen(&schema_hash(), &"0".repeat(64), 1);
        assert!(matches!(read_checkpoint(bad_schema.as_bytes()), Err(DataError::SchemaMismatch)));
        let bad_shape = text.replacen("param atom_proj.b bias 4", "param atom_proj.b bias 5", 1);
        assert!(matches!(read_checkpoint(bad_shape.as_bytes()), Err(DataError::CorruptCheckpoint { .. })));
        assert!(matches!(load_checkpoint("/nonexistent/model.ckpt"), Err(DataError::FileNotFound(_))));
    }
}

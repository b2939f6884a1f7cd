use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DiffError, Shape};

/// Initialization family of a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    /// Glorot-uniform.
    Weight,
    /// Zero.
    Bias,
    /// Uniform in ±0.1.
    Embedding,
}

impl ParamKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamKind::Weight => "weight",
            ParamKind::Bias => "bias",
            ParamKind::Embedding => "embedding",
        }
    }

    pub fn parse(s: &str) -> Option<ParamKind> {
        match s {
            "weight" => Some(ParamKind::Weight),
            "bias" => Some(ParamKind::Bias),
            "embedding" => Some(ParamKind::Embedding),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub shape: Shape,
    pub kind: ParamKind,
    pub values: Vec<f64>,
}

/// Named parameters in registration order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterStore {
    params: Vec<Parameter>,
    index: BTreeMap<String, usize>,
    seed: Option<u64>,
}

const EMBEDDING_INIT_RANGE: f64 = 0.1;

impl ParameterStore {
    pub fn new() -> ParameterStore {
        ParameterStore::default()
    }

    /// Registers a zero-filled parameter.
    pub fn register(&mut self, name: &str, shape: Shape, kind: ParamKind) -> Result<usize, DiffError> {
        if self.index.contains_key(name) {
            return Err(DiffError::DuplicateParameter(name.to_string()));
        }
        let idx = self.params.len();
        self.params.push(Parameter {
            name: name.to_string(),
            shape,
            kind,
            values: vec![0.0; shape.len()],
        });
        self.index.insert(name.to_string(), idx);
        Ok(idx)
    }

    /// Draws every parameter from its own ChaCha stream: the seed picks the
    /// key and a hash of the parameter name picks the stream, so values do
    /// not depend on registration order.
    pub fn glorot_init(&mut self, seed: u64) {
        for p in &mut self.params {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(fnv1a(p.name.as_bytes()));
            match p.kind {
                ParamKind::Bias => p.values.iter_mut().for_each(|v| *v = 0.0),
                ParamKind::Embedding => {
                    for v in &mut p.values {
                        *v = rng.gen_range(-EMBEDDING_INIT_RANGE..=EMBEDDING_INIT_RANGE);
                    }
                }
                ParamKind::Weight => {
                    let bound = glorot_bound(p.shape);
                    for v in &mut p.values {
                        *v = rng.gen_range(-bound..=bound);
                    }
                }
            }
        }
        self.seed = Some(seed);
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.values.len()).sum()
    }

    pub fn index_of(&self, name: &str) -> Result<usize, DiffError> {
        self.index.get(name).copied().ok_or_else(|| DiffError::UnknownParameter(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Result<&Parameter, DiffError> {
        Ok(&self.params[self.index_of(name)?])
    }

    pub fn by_index(&self, idx: usize) -> &Parameter {
        &self.params[idx]
    }

    pub(crate) fn values_mut(&mut self, idx: usize) -> &mut [f64] {
        &mut self.params[idx].values
    }

    pub fn set_values(&mut self, name: &str, values: &[f64]) -> Result<(), DiffError> {
        let idx = self.index_of(name)?;
        let p = &mut self.params[idx];
        if p.values.len() != values.len() {
            return Err(DiffError::shape(
                "set_values",
                format!("{name}: expected {} values, got {}", p.values.len(), values.len()),
            ));
        }
        p.values.copy_from_slice(values);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    /// Named arrays in registration order.
    pub fn export(&self) -> Vec<Parameter> {
        self.params.clone()
    }

    /// Rebuilds a store from exported arrays.
    pub fn import(params: Vec<Parameter>, seed: Option<u64>) -> Result<ParameterStore, DiffError> {
        let mut store = ParameterStore::new();
        for p in params {
            if p.values.len() != p.shape.len() {
                return Err(DiffError::shape(
                    "import",
                    format!("{}: shape {} but {} values", p.name, p.shape, p.values.len()),
                ));
            }
            let idx = store.register(&p.name, p.shape, p.kind)?;
            store.params[idx].values = p.values;
        }
        store.seed = seed;
        Ok(store)
    }
}

fn glorot_bound(shape: Shape) -> f64 {
    let (fan_out, fan_in) = shape.dims();
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParameterStore {
        let mut s = ParameterStore::new();
        s.register("w", Shape::Matrix(4, 4), ParamKind::Weight).unwrap();
        s.register("b", Shape::Vector(4), ParamKind::Bias).unwrap();
        s.register("emb", Shape::Matrix(10, 4), ParamKind::Embedding).unwrap();
        s
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let mut a = store();
        let mut b = store();
        a.glorot_init(7);
        b.glorot_init(7);
        assert_eq!(a, b);
        let mut c = store();
        c.glorot_init(8);
        assert_ne!(a.get("w").unwrap().values, c.get("w").unwrap().values);
    }

    #[test]
    fn init_ranges() {
        let mut s = store();
        s.glorot_init(3);
        assert!(s.get("b").unwrap().values.iter().all(|v| *v == 0.0));
        let bound = (6.0f64 / 8.0).sqrt();
        let w = &s.get("w").unwrap().values;
        assert!(w.iter().all(|v| v.abs() <= bound));
        assert!(w.iter().any(|v| v.abs() > 0.5 * bound));
        assert!(s.get("emb").unwrap().values.iter().all(|v| v.abs() <= 0.1));
    }

    #[test]
    fn init_independent_of_registration_order() {
        let mut a = store();
        let mut b = ParameterStore::new();
        b.register("emb", Shape::Matrix(10, 4), ParamKind::Embedding).unwrap();
        b.register("w", Shape::Matrix(4, 4), ParamKind::Weight).unwrap();
        a.glorot_init(11);
        b.glorot_init(11);
        assert_eq!(a.get("w").unwrap().values, b.get("w").unwrap().values);
        assert_eq!(a.get("emb").unwrap().values, b.get("emb").unwrap().values);
    }

    #[test]
    fn lookup_errors() {
        let mut s = store();
        assert_eq!(s.get("nope").unwrap_err(), DiffError::UnknownParameter("nope".into()));
        assert!(matches!(
            s.register("w", Shape::Vector(1), ParamKind::Bias),
            Err(DiffError::DuplicateParameter(_))
        ));
        assert!(s.set_values("b", &[1.0]).is_err());
    }

    #[test]
    fn export_import_round_trip() {
        let mut s = store();
        s.glorot_init(5);
        let back = ParameterStore::import(s.export(), s.seed()).unwrap();
        assert_eq!(back, s);
    }
}

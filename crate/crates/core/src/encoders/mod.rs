//! The drug encoder (message passing over the molecular graph) and the
//! disease encoder (attention over each code's ICD-10 lineage).

pub mod gram;
pub mod mpnn;

pub use gram::{encode_disease_set, gram_attention, gram_encode, GramAttention};
pub use mpnn::{mpnn_encode, mpnn_node_embeddings};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::diffcore::{DiffError, ParamKind, ParameterStore, Shape, Tape, Var};
use crate::molgraph::{ATOM_FEATURE_LEN, BOND_FEATURE_LEN};

pub const DEFAULT_DIM: usize = 64;
pub const DEFAULT_DEPTH: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EncodeError {
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("UnknownCode: {0} is not in the model's ontology")]
    UnknownCode(String),
    #[error("EmptyDiseaseSet: a disease set needs at least one code")]
    EmptyDiseaseSet,
    #[error("embedding table has {table} rows but the ontology has {ontology} codes")]
    TableMismatch { table: usize, ontology: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Readout {
    #[default]
    Sum,
    Mean,
}

impl fmt::Display for Readout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Readout::Sum => "sum",
            Readout::Mean => "mean",
        })
    }
}

impl FromStr for Readout {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sum" => Ok(Readout::Sum),
            "mean" => Ok(Readout::Mean),
            other => Err(format!("unknown readout {other:?} (expected sum or mean)")),
        }
    }
}

/// Architecture shared by both encoders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EncoderConfig {
    /// Embedding width `d`.
    pub dim: usize,
    /// Message-passing rounds `L`.
    pub depth: usize,
    pub readout: Readout,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig { dim: DEFAULT_DIM, depth: DEFAULT_DEPTH, readout: Readout::Sum }
    }
}

impl EncoderConfig {
    pub fn new(dim: usize, depth: usize) -> EncoderConfig {
        EncoderConfig { dim, depth, readout: Readout::Sum }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.dim == 0 {
            return Err("embedding dimension must be ≥ 1".into());
        }
        if self.depth == 0 {
            return Err("message-passing depth must be ≥ 1".into());
        }
        Ok(())
    }
}

pub(crate) mod names {
    pub const ATOM_PROJ_W: &str = "atom_proj.w";
    pub const ATOM_PROJ_B: &str = "atom_proj.b";
    pub const DISEASE_EMB: &str = "disease.emb";
}

/// Registers every parameter of both encoders for an ontology of
/// `n_codes` codes.
pub fn register_parameters(
    store: &mut ParameterStore,
    cfg: &EncoderConfig,
    n_codes: usize,
) -> Result<(), DiffError> {
    let d = cfg.dim;
    store.register(names::ATOM_PROJ_W, Shape::Matrix(d, ATOM_FEATURE_LEN), ParamKind::Weight)?;
    store.register(names::ATOM_PROJ_B, Shape::Vector(d), ParamKind::Bias)?;
    // f1: e_u ⊕ e_uv ⊕ Σ m → d
    register_mlp(store, "f1", d + BOND_FEATURE_LEN + d, d, d)?;
    // f2: e_u ⊕ Σ m → d
    register_mlp(store, "f2", 2 * d, d, d)?;
    // φ: e_j ⊕ e_i → scalar
    register_mlp(store, "phi", 2 * d, d, 1)?;
    store.register(names::DISEASE_EMB, Shape::Matrix(n_codes, d), ParamKind::Embedding)?;
    Ok(())
}

fn register_mlp(
    store: &mut ParameterStore,
    prefix: &str,
    input: usize,
    hidden: usize,
    output: usize,
) -> Result<(), DiffError> {
    store.register(&format!("{prefix}.w1"), Shape::Matrix(hidden, input), ParamKind::Weight)?;
    store.register(&format!("{prefix}.b1"), Shape::Vector(hidden), ParamKind::Bias)?;
    store.register(&format!("{prefix}.w2"), Shape::Matrix(output, hidden), ParamKind::Weight)?;
    store.register(&format!("{prefix}.b2"), Shape::Vector(output), ParamKind::Bias)?;
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Hidden {
    Relu,
    Tanh,
}

/// Parameter leaves of a one-hidden-layer perceptron.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Mlp {
    w1: Var,
    b1: Var,
    w2: Var,
    b2: Var,
    hidden: Hidden,
}

impl Mlp {
    pub(crate) fn bind(tape: &mut Tape, store: &ParameterStore, prefix: &str, hidden: Hidden) -> Result<Mlp, DiffError> {
        Ok(Mlp {
            w1: tape.param(store, &format!("{prefix}.w1"))?,
            b1: tape.param(store, &format!("{prefix}.b1"))?,
            w2: tape.param(store, &format!("{prefix}.w2"))?,
            b2: tape.param(store, &format!("{prefix}.b2"))?,
            hidden,
        })
    }

    pub(crate) fn apply(&self, tape: &mut Tape, x: Var) -> Result<Var, DiffError> {
        let h = tape.linear(self.w1, self.b1, x)?;
        let h = match self.hidden {
            Hidden::Relu => tape.relu(h)?,
            Hidden::Tanh => tape.tanh(h)?,
        };
        tape.linear(self.w2, self.b2, h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_shapes() {
        let mut store = ParameterStore::new();
        register_parameters(&mut store, &EncoderConfig::new(8, 2), 5).unwrap();
        assert_eq!(store.get("f1.w1").unwrap().shape, Shape::Matrix(8, 20));
        assert_eq!(store.get("f2.w1").unwrap().shape, Shape::Matrix(8, 16));
        assert_eq!(store.get("phi.w2").unwrap().shape, Shape::Matrix(1, 8));
        assert_eq!(store.get(names::DISEASE_EMB).unwrap().shape, Shape::Matrix(5, 8));
        assert_eq!(store.get(names::ATOM_PROJ_W).unwrap().shape, Shape::Matrix(8, 24));
    }

    #[test]
    fn config_validation_and_readout_parsing() {
        assert!(EncoderConfig::new(0, 1).validate().is_err());
        assert!(EncoderConfig::new(4, 0).validate().is_err());
        assert!(EncoderConfig::default().validate().is_ok());
        assert_eq!("mean".parse::<Readout>().unwrap(), Readout::Mean);
        assert!("max".parse::<Readout>().is_err());
    }
}

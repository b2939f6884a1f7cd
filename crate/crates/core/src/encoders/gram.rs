//! Attention over a code's ICD-10 lineage.
//!
//! `h_i = Σ_j α_ji e_j` over `j ∈ Ancestors(i) ∪ {i}`, with
//! `α_·i = softmax_j φ(e_j ⊕ e_i)`.

use std::collections::BTreeSet;

use super::{names, EncodeError, Hidden, Mlp};
use crate::diffcore::{ParameterStore, Tape, Var};
use crate::ontology::{DiseaseCode, Ontology};

/// One code's attention result.
#[derive(Debug, Clone)]
pub struct GramAttention {
    /// `h_i`, length `d`.
    pub embedding: Var,
    /// `α`, aligned with `lineage`.
    pub weights: Var,
    /// Ontology ids attended over: ancestors first, the code itself last.
    pub lineage: Vec<usize>,
}

fn embedding_table(tape: &mut Tape, store: &ParameterStore, ontology: &Ontology) -> Result<Var, EncodeError> {
    let table = tape.param(store, names::DISEASE_EMB)?;
    let rows = tape.shape(table).dims().0;
    if rows != ontology.len() {
        return Err(EncodeError::TableMismatch { table: rows, ontology: ontology.len() });
    }
    Ok(table)
}

fn attend(
    tape: &mut Tape,
    table: Var,
    phi: &Mlp,
    ontology: &Ontology,
    code: &DiseaseCode,
) -> Result<GramAttention, EncodeError> {
    let lineage = ontology
        .lineage_ids(code)
        .map_err(|_| EncodeError::UnknownCode(code.display()))?;
    let own = tape.row(table, *lineage.last().expect("lineage ends with the code"))?;
    let mut rows = Vec::with_capacity(lineage.len());
    let mut scores = Vec::with_capacity(lineage.len());
    for &j in &lineage {
        let e_j = tape.row(table, j)?;
        let key = tape.concat(&[e_j, own])?;
        scores.push(phi.apply(tape, key)?);
        rows.push(e_j);
    }
    let scores = tape.concat(&scores)?;
    let weights = tape.softmax(scores)?;
    let embedding = tape.weighted_sum(weights, &rows)?;
    Ok(GramAttention { embedding, weights, lineage })
}

/// Attention weights and embedding for a single code.
pub fn gram_attention(
    tape: &mut Tape,
    store: &ParameterStore,
    ontology: &Ontology,
    code: &DiseaseCode,
) -> Result<GramAttention, EncodeError> {
    let table = embedding_table(tape, store, ontology)?;
    let phi = Mlp::bind(tape, store, "phi", Hidden::Tanh)?;
    attend(tape, table, &phi, ontology, code)
}

/// Disease-code embedding `h_i`.
pub fn gram_encode(
    tape: &mut Tape,
    store: &ParameterStore,
    ontology: &Ontology,
    code: &DiseaseCode,
) -> Result<Var, EncodeError> {
    Ok(gram_attention(tape, store, ontology, code)?.embedding)
}

/// Mean of `gram_encode` over the distinct codes of a set.
pub fn encode_disease_set(
    tape: &mut Tape,
    store: &ParameterStore,
    ontology: &Ontology,
    codes: &[DiseaseCode],
) -> Result<Var, EncodeError> {
    let distinct: BTreeSet<&DiseaseCode> = codes.iter().collect();
    if distinct.is_empty() {
        return Err(EncodeError::EmptyDiseaseSet);
    }
    let table = embedding_table(tape, store, ontology)?;
    let phi = Mlp::bind(tape, store, "phi", Hidden::Tanh)?;
    let mut parts = Vec::with_capacity(distinct.len());
    for code in distinct {
        parts.push(attend(tape, table, &phi, ontology, code)?.embedding);
    }
    Ok(tape.mean(&parts)?)
}

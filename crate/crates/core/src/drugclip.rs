//! The contrastive objective and its training loop.
//!
//! A batch of B trials yields B drug embeddings and B disease-set
//! embeddings; `S[i][j]` is their cosine similarity and the loss is the
//! mean binary cross-entropy of `σ(S)` against the label matrix `Y`.
//! `Y[i][j] = 1` when drug i was tested on disease set j in any training
//! trial, so the diagonal is always 1 and other in-batch pairs are
//! negatives.

use std::collections::HashSet;
use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataio::TrialRecord;
use crate::diffcore::{adam_step, AdamConfig, AdamState, DiffError, ParameterStore, Shape, Tape, Var};
use crate::encoders::{self, encode_disease_set, mpnn_encode, register_parameters, EncodeError, EncoderConfig};
use crate::molgraph::{parse_smiles, MolGraph};
use crate::ontology::{DiseaseCode, Ontology};

pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_EPOCHS: usize = 20;
pub const DEFAULT_SEED: u64 = 42;
/// Stream of the shuffling generator; parameter streams are name hashes.
const SHUFFLE_STREAM: u64 = 0x5eed;

#[derive(Debug, Error)]
pub enum DrugClipError {
    #[error("EmptyDataset: no trainable trials")]
    EmptyDataset,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("trial {trial_id}: {source}")]
    Trial {
        trial_id: String,
        #[source]
        source: EncodeError,
    },
    #[error("epoch {epoch}, batch {batch}: {source}")]
    Batch {
        epoch: usize,
        batch: usize,
        #[source]
        source: Box<DrugClipError>,
    },
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

impl DrugClipError {
    /// True when the failure is a non-finite value rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            DrugClipError::Trial { source, .. } | DrugClipError::Encode(source) => {
                matches!(source, EncodeError::Diff(DiffError::NumericalError { .. }))
            }
            DrugClipError::Batch { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

impl From<DiffError> for DrugClipError {
    fn from(e: DiffError) -> Self {
        DrugClipError::Encode(EncodeError::Diff(e))
    }
}

/// Order-independent key of a disease set: sorted distinct canonical codes
/// joined by `;`.
pub fn disease_set_key(codes: &[DiseaseCode]) -> String {
    let mut canon: Vec<&str> = codes.iter().map(DiseaseCode::canonical).collect();
    canon.sort_unstable();
    canon.dedup();
    canon.join(";")
}

/// Known (drug, disease set) treatment pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PositiveIndex {
    pairs: HashSet<(String, String)>,
}

impl PositiveIndex {
    pub fn new() -> PositiveIndex {
        PositiveIndex::default()
    }

    pub fn from_examples(examples: &[Example]) -> PositiveIndex {
        let mut index = PositiveIndex::new();
        for e in examples {
            index.insert(&e.drug_id, &e.key);
        }
        index
    }

    pub fn insert(&mut self, drug_id: &str, key: &str) {
        self.pairs.insert((drug_id.to_string(), key.to_string()));
    }

    pub fn contains(&self, drug_id: &str, key: &str) -> bool {
        self.pairs.contains(&(drug_id.to_string(), key.to_string()))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// A trial with its molecule parsed.
#[derive(Debug, Clone)]
pub struct Example {
    pub trial_id: String,
    pub drug_id: String,
    pub graph: MolGraph,
    pub codes: Vec<DiseaseCode>,
    pub key: String,
}

/// Parses every trial's SMILES; trials that fail are dropped with a warning.
pub fn build_examples(trials: &[TrialRecord]) -> Vec<Example> {
    let mut out = Vec::with_capacity(trials.len());
    for t in trials {
        match parse_smiles(&t.smiles) {
            Ok(graph) => out.push(Example {
                trial_id: t.trial_id.clone(),
                drug_id: t.drug_id.clone(),
                graph,
                codes: t.codes.clone(),
                key: disease_set_key(&t.codes),
            }),
            Err(e) => log::warn!("trial {}: dropping drug {}: {}", t.trial_id, t.drug_id, e),
        }
    }
    out
}

/// `S[i][j] = cosine(drug_i, disease_j)` as a B×B matrix.
pub fn similarity_matrix(tape: &mut Tape, drugs: &[Var], diseases: &[Var]) -> Result<Var, DiffError> {
    let b = drugs.len();
    if b == 0 || diseases.len() != b {
        return Err(DiffError::ShapeMismatch {
            op: "similarity_matrix",
            detail: format!("{} drugs vs {} disease sets", b, diseases.len()),
        });
    }
    let mut entries = Vec::with_capacity(b * b);
    for &m in drugs {
        for &d in diseases {
            entries.push(tape.cosine(m, d)?);
        }
    }
    let flat = tape.concat(&entries)?;
    tape.reshape(flat, Shape::Matrix(b, b))
}

/// Mean over all entries of the cross-entropy of `σ(S)` against `Y`.
pub fn bce_loss(tape: &mut Tape, similarity: Var, labels: &[f64]) -> Result<Var, DiffError> {
    tape.bce_mean(similarity, labels)
}

/// Row-major `Y` for a batch.
pub fn label_matrix(examples: &[&Example], index: &PositiveIndex) -> Vec<f64> {
    let b = examples.len();
    let mut y = vec![0.0; b * b];
    for (i, ei) in examples.iter().enumerate() {
        for (j, ej) in examples.iter().enumerate() {
            if i == j || index.contains(&ei.drug_id, &ej.key) {
                y[i * b + j] = 1.0;
            }
        }
    }
    y
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub trial_ids: Vec<String>,
    pub drug_embeddings: Vec<Var>,
    pub disease_embeddings: Vec<Var>,
    pub similarity: Var,
    /// Row-major B×B.
    pub labels: Vec<f64>,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.trial_ids.len()
    }

    pub fn loss(&self, tape: &mut Tape) -> Result<Var, DiffError> {
        bce_loss(tape, self.similarity, &self.labels)
    }
}

/// Encodes a batch onto `tape` and builds its labels.
pub fn build_batch(
    tape: &mut Tape,
    model: &DrugClipModel,
    examples: &[&Example],
    index: &PositiveIndex,
) -> Result<Batch, DrugClipError> {
    let mut drugs = Vec::with_capacity(examples.len());
    let mut diseases = Vec::with_capacity(examples.len());
    for e in examples {
        let wrap = |source| DrugClipError::Trial { trial_id: e.trial_id.clone(), source };
        drugs.push(mpnn_encode(tape, &model.params, &e.graph, &model.config).map_err(wrap)?);
        diseases.push(encode_disease_set(tape, &model.params, &model.ontology, &e.codes).map_err(wrap)?);
    }
    let similarity = similarity_matrix(tape, &drugs, &diseases)?;
    Ok(Batch {
        trial_ids: examples.iter().map(|e| e.trial_id.clone()).collect(),
        drug_embeddings: drugs,
        disease_embeddings: diseases,
        similarity,
        labels: label_matrix(examples, index),
    })
}

/// Encoder configuration, parameters and the code ontology they are bound to.
#[derive(Debug, Clone, PartialEq)]
pub struct DrugClipModel {
    config: EncoderConfig,
    seed: u64,
    ontology: Ontology,
    params: ParameterStore,
}

impl DrugClipModel {
    /// Freshly initialized parameters.
    pub fn new(config: EncoderConfig, ontology: Ontology, seed: u64) -> Result<DrugClipModel, DrugClipError> {
        config.validate().map_err(DrugClipError::InvalidConfig)?;
        let mut params = ParameterStore::new();
        register_parameters(&mut params, &config, ontology.len())?;
        params.glorot_init(seed);
        Ok(DrugClipModel { config, seed, ontology, params })
    }

    /// Wraps existing parameters after checking they match the layout the
    /// configuration and ontology require.
    pub fn from_parts(
        config: EncoderConfig,
        seed: u64,
        ontology: Ontology,
        params: ParameterStore,
    ) -> Result<DrugClipModel, DrugClipError> {
        config.validate().map_err(DrugClipError::InvalidConfig)?;
        let mut expected = ParameterStore::new();
        register_parameters(&mut expected, &config, ontology.len())?;
        let layout = |s: &ParameterStore| s.iter().map(|p| (p.name.clone(), p.shape, p.kind)).collect::<Vec<_>>();
        if layout(&expected) != layout(&params) {
            return Err(DrugClipError::InvalidConfig(
                "parameter layout does not match the configuration and ontology".into(),
            ));
        }
        Ok(DrugClipModel { config, seed, ontology, params })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn ontology(&self) -> &Ontology {
        &self.ontology
    }

    pub fn params(&self) -> &ParameterStore {
        &self.params
    }

    pub fn encode_drug(&self, graph: &MolGraph) -> Result<Vec<f64>, EncodeError> {
        let mut tape = Tape::inference();
        let v = mpnn_encode(&mut tape, &self.params, graph, &self.config)?;
        Ok(tape.value(v).to_vec())
    }

    pub fn encode_disease_set(&self, codes: &[DiseaseCode]) -> Result<Vec<f64>, EncodeError> {
        let mut tape = Tape::inference();
        let v = encoders::encode_disease_set(&mut tape, &self.params, &self.ontology, codes)?;
        Ok(tape.value(v).to_vec())
    }

    /// Cosine similarity of a molecule and a disease set.
    pub fn score(&self, graph: &MolGraph, codes: &[DiseaseCode]) -> Result<f64, EncodeError> {
        Ok(crate::diffcore::cosine(&self.encode_drug(graph)?, &self.encode_disease_set(codes)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub encoder: EncoderConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            lr: AdamConfig::default().lr,
            seed: DEFAULT_SEED,
            encoder: EncoderConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.encoder.validate()?;
        if self.batch_size == 0 {
            return Err("batch size must be ≥ 1".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(format!("learning rate must be positive, got {}", self.lr));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: DrugClipModel,
    /// Mean batch loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Initializes a model over `ontology` and trains it on `examples`.
pub fn train(examples: &[Example], ontology: Ontology, cfg: &TrainConfig) -> Result<TrainOutcome, DrugClipError> {
    cfg.validate().map_err(DrugClipError::InvalidConfig)?;
    let mut model = DrugClipModel::new(cfg.encoder, ontology, cfg.seed)?;
    let epoch_losses = fit(&mut model, examples, cfg)?;
    Ok(TrainOutcome { model, epoch_losses })
}

/// Runs `cfg.epochs` epochs of Adam on an existing model.
pub fn fit(model: &mut DrugClipModel, examples: &[Example], cfg: &TrainConfig) -> Result<Vec<f64>, DrugClipError> {
    cfg.validate().map_err(DrugClipError::InvalidConfig)?;
    if examples.is_empty() {
        return Err(DrugClipError::EmptyDataset);
    }
    let index = PositiveIndex::from_examples(examples);
    let adam = AdamConfig { lr: cfg.lr, ..AdamConfig::default() };
    let mut state = AdamState::new(&model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch_err = |source: DrugClipError| DrugClipError::Batch { epoch, batch: b, source: Box::new(source) };
            let members: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
            let loss = train_step(model, &members, &index, &adam, &mut state).map_err(batch_err)?;
            total += loss;
            batches += 1;
        }
        let mean = total / batches as f64;
        log::info!("epoch {epoch}: mean loss {mean:.6}");
        history.push(mean);
    }
    Ok(history)
}

fn train_step(
    model: &mut DrugClipModel,
    members: &[&Example],
    index: &PositiveIndex,
    adam: &AdamConfig,
    state: &mut AdamState,
) -> Result<f64, DrugClipError> {
    let mut tape = Tape::new();
    let batch = build_batch(&mut tape, model, members, index)?;
    let loss = batch.loss(&mut tape)?;
    let grads = tape.backward(loss, &model.params)?;
    adam_step(&mut model.params, &grads, state, adam)?;
    Ok(tape.scalar(loss))
}

/// `epoch,mean_loss` rows, epochs numbered from 1.
pub fn write_loss_csv<W: Write>(mut w: W, losses: &[f64]) -> io::Result<()> {
    writeln!(w, "epoch,mean_loss")?;
    for (i, l) in losses.iter().enumerate() {
        writeln!(w, "{},{}", i + 1, l)?;
    }
    Ok(())
}

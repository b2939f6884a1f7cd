//! Temporal splits, full-database ranking and hit@k%.
//!
//! A test query is a trial's disease set; every drug in the database is
//! scored and the trial's own drug is ranked pessimistically (ties count
//! against it). `hit@k%` holds when that rank is within the first
//! `ceil(k·N/100)` positions.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, Write};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::dataio::{DrugTable, TrialRecord};
use crate::drugclip::DrugClipModel;
use crate::encoders::EncodeError;
use crate::molgraph::{parse_smiles, SmilesError};
use crate::ontology::DiseaseCode;

/// Caps the number of evaluation threads when set.
pub const THREADS_ENV: &str = "DRUGCLIP_THREADS";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("InvalidDateRange: cutoff {cutoff} is not before window end {end}")]
    InvalidDateRange { cutoff: NaiveDate, end: NaiveDate },
    #[error("InvalidK: {0} (k must be a percentage in (0, 100])")]
    InvalidK(f64),
    #[error("EmptyTestSet: no test trials remain after the repurposing filter")]
    EmptyTestSet,
    #[error("EmptyDrugDb: the drug database is empty")]
    EmptyDrugDb,
    #[error("trial {trial_id}: drug {drug_id} is not in the drug database")]
    UnknownDrug { trial_id: String, drug_id: String },
    #[error("drug {drug_id}: {source}")]
    InvalidSmiles {
        drug_id: String,
        #[source]
        source: SmilesError,
    },
    #[error("{context}: {source}")]
    Encode {
        context: String,
        #[source]
        source: EncodeError,
    },
    #[error("invalid {THREADS_ENV}: {0}")]
    Threads(String),
}

/// A drug that can be ranked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DrugEntry {
    pub drug_id: String,
    pub smiles: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemporalSplit {
    /// Trials dated before the cutoff.
    pub train: Vec<TrialRecord>,
    /// Trials in `[cutoff, cutoff_end)` whose drug is in `drug_db`.
    pub test: Vec<TrialRecord>,
    /// Drugs of the training trials, sorted by id.
    pub drug_db: Vec<DrugEntry>,
    /// Test-window trials removed because their drug was never tested before
    /// the cutoff.
    pub dropped: Vec<String>,
}

/// Partitions trials by date and applies the repurposing filter.
///
/// A drug's SMILES is taken from its earliest training trial.
pub fn temporal_split(
    trials: &[TrialRecord],
    cutoff: NaiveDate,
    cutoff_end: NaiveDate,
) -> Result<TemporalSplit, EvalError> {
    if cutoff >= cutoff_end {
        return Err(EvalError::InvalidDateRange { cutoff, end: cutoff_end });
    }
    let train: Vec<TrialRecord> = trials.iter().filter(|t| t.date < cutoff).cloned().collect();
    let mut first_seen: BTreeMap<&str, &TrialRecord> = BTreeMap::new();
    for t in &train {
        let e = first_seen.entry(&t.drug_id).or_insert(t);
        if t.date < e.date {
            *e = t;
        }
    }
    let drug_db: Vec<DrugEntry> = first_seen
        .iter()
        .map(|(id, t)| DrugEntry { drug_id: id.to_string(), smiles: t.smiles.clone() })
        .collect();
    let mut test = Vec::new();
    let mut dropped = Vec::new();
    for t in trials.iter().filter(|t| t.date >= cutoff && t.date < cutoff_end) {
        if first_seen.contains_key(t.drug_id.as_str()) {
            test.push(t.clone());
        } else {
            dropped.push(t.trial_id.clone());
        }
    }
    Ok(TemporalSplit { train, test, drug_db, dropped })
}

impl TemporalSplit {
    /// Replaces SMILES with the drug table's where the table lists the drug.
    pub fn use_drug_table(&mut self, table: &DrugTable) {
        for d in &mut self.drug_db {
            if let Some(r) = table.get(&d.drug_id) {
                d.smiles.clone_from(&r.smiles);
            }
        }
    }

    /// Removes drugs whose SMILES do not parse, and the test trials that
    /// point at them. Returns the removed drug ids.
    pub fn drop_unparseable_drugs(&mut self) -> Vec<String> {
        let mut removed = Vec::new();
        self.drug_db.retain(|d| match parse_smiles(&d.smiles) {
            Ok(_) => true,
            Err(e) => {
                log::warn!("drug {}: removed from the database: {}", d.drug_id, e);
                removed.push(d.drug_id.clone());
                false
            }
        });
        if !removed.is_empty() {
            self.test.retain(|t| !removed.contains(&t.drug_id));
        }
        removed
    }
}

/// `1 + #{scores > s_gt} + #{scores == s_gt, other drugs}`.
pub fn pessimistic_rank(scores: &[f64], ground_truth: usize) -> usize {
    let s = scores[ground_truth];
    1 + scores.iter().enumerate().filter(|&(i, &x)| x > s || (x == s && i != ground_truth)).count()
}

fn check_k(k_percent: f64) -> Result<(), EvalError> {
    if k_percent > 0.0 && k_percent <= 100.0 {
        Ok(())
    } else {
        Err(EvalError::InvalidK(k_percent))
    }
}

/// Number of leading positions that count as a hit.
pub fn hit_threshold(n: usize, k_percent: f64) -> Result<usize, EvalError> {
    check_k(k_percent)?;
    Ok(((k_percent * n as f64) / 100.0).ceil() as usize)
}

pub fn hit_at_k(rank: usize, n: usize, k_percent: f64) -> Result<bool, EvalError> {
    Ok(rank <= hit_threshold(n, k_percent)?)
}

/// Scores every drug of the database the scorer was built for.
pub trait Scorer: Sync {
    fn name(&self) -> &str;

    /// One score per database drug, in database order.
    fn scores(&self, query: &TrialRecord) -> Result<Vec<f64>, EvalError>;
}

/// Cosine similarity under a trained model; drug embeddings are computed
/// once at construction.
pub struct ModelScorer<'a> {
    model: &'a DrugClipModel,
    drug_ids: Vec<String>,
    drug_embeddings: Vec<Vec<f64>>,
}

impl<'a> ModelScorer<'a> {
    pub fn new(model: &'a DrugClipModel, db: &[DrugEntry]) -> Result<ModelScorer<'a>, EvalError> {
        let drug_embeddings = with_threads(|| {
            db.par_iter()
                .map(|d| {
                    let g = parse_smiles(&d.smiles)
                        .map_err(|source| EvalError::InvalidSmiles { drug_id: d.drug_id.clone(), source })?;
                    model
                        .encode_drug(&g)
                        .map_err(|source| EvalError::Encode { context: format!("drug {}", d.drug_id), source })
                })
                .collect::<Result<Vec<_>, _>>()
        })??;
        Ok(ModelScorer { model, drug_ids: db.iter().map(|d| d.drug_id.clone()).collect(), drug_embeddings })
    }

    pub fn score_codes(&self, codes: &[DiseaseCode]) -> Result<Vec<f64>, EncodeError> {
        let q = self.model.encode_disease_set(codes)?;
        Ok(self.drug_embeddings.iter().map(|e| crate::diffcore::cosine(e, &q)).collect())
    }

    /// All drugs by descending score, ties broken by drug id.
    pub fn rank(&self, codes: &[DiseaseCode]) -> Result<Vec<(String, f64)>, EncodeError> {
        let scores = self.score_codes(codes)?;
        let mut out: Vec<(String, f64)> = self.drug_ids.iter().cloned().zip(scores).collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(out)
    }
}

impl Scorer for ModelScorer<'_> {
    fn name(&self) -> &str {
        "model"
    }

    fn scores(&self, query: &TrialRecord) -> Result<Vec<f64>, EvalError> {
        self.score_codes(&query.codes)
            .map_err(|source| EvalError::Encode { context: format!("trial {}", query.trial_id), source })
    }
}

/// Uniform scores from a generator keyed by the seed and the trial id, so
/// results do not depend on query order.
pub struct RandomScorer {
    seed: u64,
    n: usize,
}

impl RandomScorer {
    pub fn new(seed: u64, db: &[DrugEntry]) -> RandomScorer {
        RandomScorer { seed, n: db.len() }
    }
}

impl Scorer for RandomScorer {
    fn name(&self) -> &str {
        "random"
    }

    fn scores(&self, query: &TrialRecord) -> Result<Vec<f64>, EvalError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream_of(&query.trial_id));
        Ok((0..self.n).map(|_| rng.gen::<f64>()).collect())
    }
}

fn stream_of(id: &str) -> u64 {
    id.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Training-trial count per drug, the same for every query.
pub struct PopularityScorer {
    scores: Vec<f64>,
}

impl PopularityScorer {
    pub fn new(train: &[TrialRecord], db: &[DrugEntry]) -> PopularityScorer {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in train {
            *counts.entry(&t.drug_id).or_default() += 1;
        }
        let scores = db.iter().map(|d| counts.get(d.drug_id.as_str()).copied().unwrap_or(0) as f64).collect();
        PopularityScorer { scores }
    }
}

impl Scorer for PopularityScorer {
    fn name(&self) -> &str {
        "popularity"
    }

    fn scores(&self, _query: &TrialRecord) -> Result<Vec<f64>, EvalError> {
        Ok(self.scores.clone())
    }
}

/// One ranked query.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedResult {
    pub trial_id: String,
    pub ground_truth: String,
    pub scores: Vec<f64>,
    pub rank: usize,
    pub db_size: usize,
}

pub fn rank_query(scorer: &dyn Scorer, query: &TrialRecord, db: &[DrugEntry]) -> Result<RankedResult, EvalError> {
    if db.is_empty() {
        return Err(EvalError::EmptyDrugDb);
    }
    let gt = db.iter().position(|d| d.drug_id == query.drug_id).ok_or_else(|| EvalError::UnknownDrug {
        trial_id: query.trial_id.clone(),
        drug_id: query.drug_id.clone(),
    })?;
    let scores = scorer.scores(query)?;
    assert_eq!(scores.len(), db.len(), "scorer {} built for a different database", scorer.name());
    let rank = pessimistic_rank(&scores, gt);
    Ok(RankedResult {
        trial_id: query.trial_id.clone(),
        ground_truth: query.drug_id.clone(),
        scores,
        rank,
        db_size: db.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub k_percent: f64,
    pub hit_rate: f64,
    pub n_queries: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialRank {
    pub trial_id: String,
    pub rank: usize,
    pub db_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub metrics: Vec<MetricRow>,
    /// In test-set order.
    pub ranks: Vec<TrialRank>,
}

impl EvalReport {
    pub fn hit_rate(&self, k_percent: f64) -> Option<f64> {
        self.metrics.iter().find(|m| m.k_percent == k_percent).map(|m| m.hit_rate)
    }

    pub fn mean_rank(&self) -> f64 {
        self.ranks.iter().map(|r| r.rank as f64).sum::<f64>() / self.ranks.len() as f64
    }

    /// `k_percent,hit_rate,n_queries`.
    pub fn write_metrics_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "k_percent,hit_rate,n_queries")?;
        for m in &self.metrics {
            writeln!(w, "{},{},{}", m.k_percent, m.hit_rate, m.n_queries)?;
        }
        Ok(())
    }

    /// `trial_id,rank,db_size`.
    pub fn write_audit_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "trial_id,rank,db_size")?;
        for r in &self.ranks {
            writeln!(w, "{},{},{}", r.trial_id, r.rank, r.db_size)?;
        }
        Ok(())
    }
}

/// Ranks every test trial's drug and reports the hit rate at each k.
pub fn evaluate(
    scorer: &dyn Scorer,
    test: &[TrialRecord],
    db: &[DrugEntry],
    ks: &[f64],
) -> Result<EvalReport, EvalError> {
    for &k in ks {
        check_k(k)?;
    }
    if test.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    if db.is_empty() {
        return Err(EvalError::EmptyDrugDb);
    }
    let ranks: Vec<TrialRank> = with_threads(|| {
        test.par_iter()
            .map(|q| {
                rank_query(scorer, q, db).map(|r| TrialRank { trial_id: r.trial_id, rank: r.rank, db_size: r.db_size })
            })
            .collect::<Result<Vec<_>, _>>()
    })??;
    let n = db.len();
    let mut metrics = Vec::with_capacity(ks.len());
    for &k in ks {
        let threshold = hit_threshold(n, k)?;
        let hits = ranks.iter().filter(|r| r.rank <= threshold).count();
        metrics.push(MetricRow { k_percent: k, hit_rate: hits as f64 / ranks.len() as f64, n_queries: ranks.len() });
    }
    Ok(EvalReport { metrics, ranks })
}

/// Runs `f` on a pool capped by `DRUGCLIP_THREADS`, or the global pool.
fn with_threads<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T, EvalError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => {
            let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| EvalError::Threads(v.clone()))?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| EvalError::Threads(e.to_string()))?;
            Ok(pool.install(f))
        }
        _ => Ok(f()),
    }
}

//! `drugclip`: train, evaluate and query dual-encoder drug repurposing models.
//!
//! Exit codes: 0 success, 2 bad input or usage, 3 numerical failure,
//! 4 empty test set.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Parser, Subcommand, ValueEnum};

use drugclip_core::dataio::{self, load_checkpoint, load_drug_db, load_trials, save_checkpoint, DrugTable, TrialRecord};
use drugclip_core::drugclip::{build_examples, train, write_loss_csv, TrainConfig, DEFAULT_BATCH_SIZE, DEFAULT_EPOCHS};
use drugclip_core::encoders::{EncoderConfig, Readout, DEFAULT_DEPTH, DEFAULT_DIM};
use drugclip_core::evalrank::{
    evaluate, temporal_split, DrugEntry, EvalError, ModelScorer, PopularityScorer, RandomScorer, Scorer,
};
use drugclip_core::molgraph::parse_smiles;
use drugclip_core::ontology::{load_code_table, DiseaseCode};
use drugclip_core::synthetic::{generate, SyntheticConfig};

const DEFAULT_SEED: u64 = 42;

#[derive(Parser)]
#[command(name = "drugclip", version, about = "Dual-encoder drug repurposing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint plus a `<out>.loss.csv` history.
    Train(TrainArgs),
    /// Rank the drug database for every test-window trial and report hit@k%.
    Eval(EvalArgs),
    /// Print the drugs that best match a set of disease codes.
    Rank(RankArgs),
    /// Print the molecular graph parsed from a SMILES string.
    ParseSmiles {
        smiles: String,
    },
    /// Write a synthetic trials/drugs/ICD dataset with planted structure.
    GenSynthetic(GenArgs),
}

#[derive(clap::Args)]
struct TrainArgs {
    /// Trials TSV.
    #[arg(long)]
    trials: PathBuf,
    /// Drug TSV; its SMILES replace the trials' where listed.
    #[arg(long)]
    drugs: PathBuf,
    /// ICD-10 code table CSV.
    #[arg(long)]
    icd: PathBuf,
    #[arg(long, default_value_t = DEFAULT_DIM)]
    dim: usize,
    #[arg(long, default_value_t = DEFAULT_DEPTH)]
    depth: usize,
    #[arg(long, value_enum, default_value_t = ReadoutArg::Sum)]
    readout: ReadoutArg,
    #[arg(long, default_value_t = DEFAULT_EPOCHS)]
    epochs: usize,
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Defaults to 42.
    #[arg(long)]
    seed: Option<u64>,
    /// Train only on trials dated before this day (YYYY-MM-DD).
    #[arg(long, value_parser = parse_date_arg)]
    cutoff: Option<NaiveDate>,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReadoutArg {
    Sum,
    Mean,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScorerArg {
    Model,
    Random,
    Popularity,
}

#[derive(clap::Args)]
struct EvalArgs {
    /// Checkpoint written by `train`. Needed for the model scorer.
    #[arg(long, required_if_eq("scorer", "model"))]
    model: Option<PathBuf>,
    #[arg(long)]
    trials: PathBuf,
    #[arg(long)]
    drugs: PathBuf,
    /// ICD-10 code table; checked for validity only, the model carries its own codes.
    #[arg(long)]
    icd: Option<PathBuf>,
    #[arg(long, value_parser = parse_date_arg)]
    cutoff: NaiveDate,
    #[arg(long = "cutoff-end", value_parser = parse_date_arg)]
    cutoff_end: NaiveDate,
    /// Comma-separated percentages.
    #[arg(long, value_delimiter = ',', default_value = "10,30")]
    k: Vec<f64>,
    #[arg(long, value_enum, default_value_t = ScorerArg::Model)]
    scorer: ScorerArg,
    /// Seed of the random scorer; defaults to 42.
    #[arg(long)]
    seed: Option<u64>,
    /// Metrics CSV; per-trial ranks go to `<out>.audit.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct RankArgs {
    #[arg(long)]
    model: PathBuf,
    /// Semicolon-separated ICD-10 codes.
    #[arg(long)]
    codes: String,
    #[arg(long)]
    drugs: PathBuf,
    #[arg(long, default_value_t = 20)]
    top: usize,
}

#[derive(clap::Args)]
struct GenArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 800)]
    trials: usize,
}

fn parse_date_arg(s: &str) -> Result<NaiveDate, String> {
    dataio::parse_date(s).ok_or_else(|| format!("{s:?} is not a YYYY-MM-DD date"))
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Numerical(String),
    EmptyTestSet(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::EmptyTestSet(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Numerical(m) | Failure::EmptyTestSet(m) => m,
        }
    }
}

fn input(e: impl std::fmt::Display) -> Failure {
    Failure::Input(e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Rank(a) => cmd_rank(a),
        Command::ParseSmiles { smiles } => cmd_parse_smiles(&smiles),
        Command::GenSynthetic(a) => cmd_gen_synthetic(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(suffix)
}

fn seed_or_default(seed: Option<u64>) -> u64 {
    let seed = seed.unwrap_or(DEFAULT_SEED);
    println!("seed: {seed}");
    seed
}

/// Uses the drug table's SMILES for every trial whose drug it lists.
fn apply_drug_table(trials: &mut [TrialRecord], table: &DrugTable) {
    for t in trials {
        if let Some(d) = table.get(&t.drug_id) {
            t.smiles.clone_from(&d.smiles);
        }
    }
}

fn cmd_train(a: TrainArgs) -> Result<(), Failure> {
    let encoder = EncoderConfig {
        dim: a.dim,
        depth: a.depth,
        readout: match a.readout {
            ReadoutArg::Sum => Readout::Sum,
            ReadoutArg::Mean => Readout::Mean,
        },
    };
    let cfg = TrainConfig { epochs: a.epochs, batch_size: a.batch, lr: a.lr, seed: DEFAULT_SEED, encoder };
    cfg.validate().map_err(input)?;
    let seed = seed_or_default(a.seed);
    let cfg = TrainConfig { seed, ..cfg };

    let mut trials = load_trials(&a.trials).map_err(input)?;
    let table = load_drug_db(&a.drugs).map_err(input)?;
    apply_drug_table(&mut trials, &table);
    let mut ontology = load_code_table(&a.icd).map_err(input)?;
    ontology.insert_missing(trials.iter().flat_map(|t| t.codes.iter()));

    let train_trials: Vec<TrialRecord> = match a.cutoff {
        Some(c) => trials.into_iter().filter(|t| t.date < c).collect(),
        None => trials,
    };
    let examples = build_examples(&train_trials);
    println!(
        "training on {} trials ({} dropped), {} codes, dim {} depth {} readout {}",
        examples.len(),
        train_trials.len() - examples.len(),
        ontology.len(),
        encoder.dim,
        encoder.depth,
        encoder.readout
    );
    let outcome = train(&examples, ontology, &cfg).map_err(|e| {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            input(e)
        }
    })?;

    save_checkpoint(&outcome.model, &a.out).map_err(input)?;
    let loss_path = sibling(&a.out, "loss.csv");
    let mut w = create(&loss_path)?;
    write_loss_csv(&mut w, &outcome.epoch_losses).and_then(|_| w.flush()).map_err(input)?;
    if let Some(last) = outcome.epoch_losses.last() {
        println!("final epoch loss: {last:.6}");
    }
    println!("checkpoint: {}", a.out.display());
    println!("loss history: {}", loss_path.display());
    Ok(())
}

fn eval_failure(e: EvalError) -> Failure {
    match e {
        EvalError::EmptyTestSet => Failure::EmptyTestSet(e.to_string()),
        other => input(other),
    }
}

fn cmd_eval(a: EvalArgs) -> Result<(), Failure> {
    for &k in &a.k {
        drugclip_core::evalrank::hit_threshold(1, k).map_err(eval_failure)?;
    }
    let mut trials = load_trials(&a.trials).map_err(input)?;
    let table = load_drug_db(&a.drugs).map_err(input)?;
    apply_drug_table(&mut trials, &table);
    if let Some(icd) = &a.icd {
        load_code_table(icd).map_err(input)?;
    }
    let model = a.model.as_ref().map(load_checkpoint).transpose().map_err(input)?;

    let mut split = temporal_split(&trials, a.cutoff, a.cutoff_end).map_err(eval_failure)?;
    split.use_drug_table(&table);
    split.drop_unparseable_drugs();
    if let Some(m) = &model {
        let onto = m.ontology();
        split.test.retain(|t| {
            let known = t.codes.iter().all(|c| onto.contains(c));
            if !known {
                log::warn!("trial {}: codes outside the model's ontology; skipped", t.trial_id);
            }
            known
        });
    }
    println!(
        "train trials: {}  test trials: {}  dropped (unseen drug): {}  drug db: {}",
        split.train.len(),
        split.test.len(),
        split.dropped.len(),
        split.drug_db.len()
    );
    if split.test.is_empty() {
        return Err(eval_failure(EvalError::EmptyTestSet));
    }

    let scorer: Box<dyn Scorer + '_> = match a.scorer {
        ScorerArg::Model => {
            let m = model.as_ref().ok_or_else(|| input("--model is required for the model scorer"))?;
            Box::new(ModelScorer::new(m, &split.drug_db).map_err(eval_failure)?)
        }
        ScorerArg::Random => Box::new(RandomScorer::new(seed_or_default(a.seed), &split.drug_db)),
        ScorerArg::Popularity => Box::new(PopularityScorer::new(&split.train, &split.drug_db)),
    };
    let report = evaluate(scorer.as_ref(), &split.test, &split.drug_db, &a.k).map_err(eval_failure)?;

    let mut w = create(&a.out)?;
    report.write_metrics_csv(&mut w).and_then(|_| w.flush()).map_err(input)?;
    let audit_path = sibling(&a.out, "audit.csv");
    let mut w = create(&audit_path)?;
    report.write_audit_csv(&mut w).and_then(|_| w.flush()).map_err(input)?;

    println!("scorer: {}", scorer.name());
    println!("{:>8}  {:>9}  {:>9}", "k%", "hit_rate", "n_queries");
    for m in &report.metrics {
        println!("{:>8}  {:>9.4}  {:>9}", m.k_percent, m.hit_rate, m.n_queries);
    }
    println!("mean rank: {:.2} of {}", report.mean_rank(), split.drug_db.len());
    println!("metrics: {}", a.out.display());
    println!("audit: {}", audit_path.display());
    Ok(())
}

fn cmd_rank(a: RankArgs) -> Result<(), Failure> {
    let codes: Vec<DiseaseCode> = dataio::parse_code_list(&a.codes)
        .map_err(|bad| input(format!("InvalidCodeFormat: {bad:?} is not an ICD-10 code")))?;
    if codes.is_empty() {
        return Err(input("EmptyDiseaseSet: --codes lists no codes"));
    }
    let model = load_checkpoint(&a.model).map_err(input)?;
    let table = load_drug_db(&a.drugs).map_err(input)?;
    let mut db: Vec<DrugEntry> = Vec::with_capacity(table.len());
    for d in table.records() {
        match parse_smiles(&d.smiles) {
            Ok(_) => db.push(DrugEntry { drug_id: d.drug_id.clone(), smiles: d.smiles.clone() }),
            Err(e) => log::warn!("drug {}: skipped: {}", d.drug_id, e),
        }
    }
    if db.is_empty() {
        return Err(eval_failure(EvalError::EmptyDrugDb));
    }
    let scorer = ModelScorer::new(&model, &db).map_err(eval_failure)?;
    let ranked = scorer.rank(&codes).map_err(input)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let write = |out: &mut io::StdoutLock<'_>| -> io::Result<()> {
        writeln!(out, "rank\tdrug_id\tscore")?;
        for (i, (id, score)) in ranked.iter().take(a.top).enumerate() {
            writeln!(out, "{}\t{}\t{:.6}", i + 1, id, score)?;
        }
        Ok(())
    };
    write(&mut out).map_err(input)
}

fn cmd_parse_smiles(smiles: &str) -> Result<(), Failure> {
    let g = parse_smiles(smiles).map_err(input)?;
    print!("{g}");
    Ok(())
}

fn cmd_gen_synthetic(a: GenArgs) -> Result<(), Failure> {
    let seed = seed_or_default(a.seed);
    let world = generate(&SyntheticConfig { seed, trials: a.trials, ..SyntheticConfig::default() }).map_err(input)?;
    let files = world.write_to(&a.out).map_err(input)?;
    println!(
        "{} trials, {} drugs, {} codes",
        world.trials.len(),
        world.drugs.len(),
        world.code_table.len()
    );
    for p in [&files.trials, &files.drugs, &files.icd] {
        println!("wrote {}", p.display());
    }
    Ok(())
}

//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. Run with `cargo test --test acceptance`.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use drugclip_core::dataio::TrialRecord;
use drugclip_core::diffcore::{check_gradients, ParameterStore, Tape};
use drugclip_core::drugclip::{
    bce_loss, build_batch, build_examples, train, DrugClipError, DrugClipModel, Example, PositiveIndex,
    TrainConfig, TrainOutcome,
};
use drugclip_core::encoders::{gram_attention, EncoderConfig};
use drugclip_core::evalrank::{
    evaluate, temporal_split, EvalError, ModelScorer, PopularityScorer, RandomScorer, Scorer, TemporalSplit,
};
use drugclip_core::molgraph::parse_smiles;
use drugclip_core::ontology::{DiseaseCode, Ontology};
use drugclip_core::synthetic::{generate, SyntheticConfig, SyntheticWorld};

const CORPUS: &str = include_str!("../../core/tests/fixtures/smiles_corpus.tsv");

type Outcome = Result<String, String>;

fn date(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

fn code(s: &str) -> DiseaseCode {
    DiseaseCode::normalize(s).unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let trials: Vec<TrialRecord> = [
        ("CCO", "G44.311"),
        ("c1ccccc1", "D41.20"),
        ("CC(=O)N", "I10"),
        ("C1CCC1", "E11.9;I10"),
    ]
    .iter()
    .enumerate()
    .map(|(i, (smiles, codes))| TrialRecord {
        trial_id: format!("T{i}"),
        date: date("2020-01-01"),
        drug_id: format!("D{i}"),
        smiles: smiles.to_string(),
        codes: codes.split(';').map(code).collect(),
    })
    .collect();
    let examples = build_examples(&trials);
    if examples.len() != 4 || examples.iter().any(|e| e.graph.atom_count() > 6) {
        return Err("fixture batch is not four molecules of at most six atoms".into());
    }
    let ontology = Ontology::from_codes(trials.iter().flat_map(|t| t.codes.iter().cloned()));
    let cfg = EncoderConfig::new(8, 2);
    let model = DrugClipModel::new(cfg, ontology.clone(), 11).map_err(|e| e.to_string())?;
    let refs: Vec<&Example> = examples.iter().collect();
    let index = PositiveIndex::from_examples(&examples);
    let report = check_gradients(model.params(), 1e-4, |t: &mut Tape, s: &ParameterStore| {
        let m = DrugClipModel::from_parts(cfg, 11, ontology.clone(), s.clone())?;
        let batch = build_batch(t, &m, &refs, &index)?;
        Ok::<_, DrugClipError>(batch.loss(t)?)
    })
    .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    check(
        report.max_rel_error < 1e-3 && elapsed < Duration::from_secs(60),
        format!(
            "{} coordinates, max rel error {:.2e} at {:?}, {:.1}s",
            report.coordinates,
            report.max_rel_error,
            report.worst,
            elapsed.as_secs_f64()
        ),
    )
}

fn random_code(rng: &mut ChaCha8Rng) -> DiseaseCode {
    const ALNUM: &[u8] = b"0123456789ABCDEFGHJKLMNPQRSTUVWXYZ";
    let mut s = String::new();
    s.push(rng.gen_range(b'A'..=b'Z') as char);
    s.push(rng.gen_range(b'0'..=b'9') as char);
    s.push(rng.gen_range(b'0'..=b'9') as char);
    for _ in 0..rng.gen_range(0..=4) {
        s.push(ALNUM[rng.gen_range(0..ALNUM.len())] as char);
    }
    code(&s)
}

fn gram_normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let codes: Vec<DiseaseCode> = (0..1000).map(|_| random_code(&mut rng)).collect();
    let ontology = Ontology::from_codes(codes.iter().cloned());
    let model = DrugClipModel::new(EncoderConfig::new(16, 1), ontology.clone(), 5).map_err(|e| e.to_string())?;
    let mut tape = Tape::inference();
    let mut worst = 0.0f64;
    for c in &codes {
        let att = gram_attention(&mut tape, model.params(), &ontology, c).map_err(|e| e.to_string())?;
        let sum: f64 = tape.value(att.weights).iter().sum();
        worst = worst.max((sum - 1.0).abs());
    }
    check(worst <= 1e-12, format!("1000 codes, max |sum - 1| = {worst:.2e}"))
}

fn corpus() -> Vec<Vec<&'static str>> {
    CORPUS.lines().skip(1).filter(|l| !l.is_empty()).map(|l| l.split('\t').collect()).collect()
}

fn permutation_invariance() -> Outcome {
    let world = generate(&SyntheticConfig::default()).map_err(|e| e.to_string())?;
    let smiles: Vec<String> = corpus()
        .iter()
        .map(|r| r[1].to_string())
        .chain(world.drugs.iter().take(50).map(|d| d.smiles.clone()))
        .collect();
    let model = DrugClipModel::new(EncoderConfig::new(32, 2), Ontology::default(), 42).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for s in &smiles {
        let g = parse_smiles(s).map_err(|e| format!("{s}: {e}"))?;
        let base = model.encode_drug(&g).map_err(|e| e.to_string())?;
        for _ in 0..5 {
            let mut perm: Vec<usize> = (0..g.atom_count()).collect();
            perm.shuffle(&mut rng);
            let v = model.encode_drug(&g.permuted(&perm)).map_err(|e| e.to_string())?;
            let d = base.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst = worst.max(d);
        }
    }
    check(worst < 1e-6, format!("{} molecules x 5 relabelings, max inf-norm {worst:.2e}", smiles.len()))
}

fn ancestor_semantics() -> Outcome {
    let got = |c: &str| code(c).ancestors().iter().map(|a| a.canonical().to_string()).collect::<Vec<_>>();
    let a = got("G44311");
    let b = got("D4120");
    check(a == ["G44", "G4431"] && b == ["D41", "D412"], format!("G44311 -> {a:?}, D4120 -> {b:?}"))
}

fn smiles_corpus() -> Outcome {
    let rows = corpus();
    let mut mismatches = Vec::new();
    for r in &rows {
        let n = |i: usize| r[i].parse::<usize>().unwrap();
        let expected = (n(2), n(3), [n(4), n(5), n(6), n(7)]);
        match parse_smiles(r[1]) {
            Ok(g) => {
                let h = g.bond_code_histogram();
                let got = (g.atom_count(), g.bond_count(), [h[1], h[2], h[3], h[4]]);
                if got != expected {
                    mismatches.push(format!("{}: {got:?} != {expected:?}", r[0]));
                }
            }
            Err(e) => mismatches.push(format!("{}: {e}", r[0])),
        }
    }
    check(
        rows.len() == 50 && mismatches.is_empty(),
        format!("{} molecules, {} mismatches {:?}", rows.len(), mismatches.len(), mismatches),
    )
}

struct Synthetic {
    world: SyntheticWorld,
    split: TemporalSplit,
    outcome: TrainOutcome,
    train_time: Duration,
}

const CUTOFF: &str = "2021-01-01";
const WINDOW_END: &str = "2024-01-01";

fn synthetic_run() -> Result<Synthetic, String> {
    let world = generate(&SyntheticConfig::default()).map_err(|e| e.to_string())?;
    let split = temporal_split(&world.trials, date(CUTOFF), date(WINDOW_END)).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        epochs: 50,
        batch_size: 2,
        lr: 3e-4,
        seed: 42,
        encoder: EncoderConfig::new(32, 2),
    };
    let start = Instant::now();
    let outcome = train(&build_examples(&split.train), world.ontology(), &cfg).map_err(|e| e.to_string())?;
    Ok(Synthetic { world, split, outcome, train_time: start.elapsed() })
}

fn hit10(scorer: &dyn Scorer, split: &TemporalSplit) -> Result<f64, String> {
    let report = evaluate(scorer, &split.test, &split.drug_db, &[10.0]).map_err(|e| e.to_string())?;
    Ok(report.hit_rate(10.0).unwrap())
}

fn synthetic_recoverability(run: &Synthetic) -> Outcome {
    let split = &run.split;
    let model = ModelScorer::new(&run.outcome.model, &split.drug_db).map_err(|e| e.to_string())?;
    let model_hit = hit10(&model, split)?;
    let seeds: Vec<u64> = (1..=20).collect();
    let mut random_hits = Vec::new();
    for &s in &seeds {
        random_hits.push(hit10(&RandomScorer::new(s, &split.drug_db), split)?);
    }
    let random_mean = random_hits.iter().sum::<f64>() / random_hits.len() as f64;
    let pop_hit = hit10(&PopularityScorer::new(&split.train, &split.drug_db), split)?;
    let ok = run.world.drugs.len() == 200
        && run.world.disease_sets.len() == 200
        && run.world.trials.len() == 800
        && model_hit >= 0.90
        && (random_mean - 0.10).abs() <= 0.03
        && model_hit - pop_hit >= 0.20
        && run.train_time < Duration::from_secs(300);
    check(
        ok,
        format!(
            "{} queries over {} drugs: model {:.3}, random {:.3} (mean of {} seeds, seed 1 {:.3}), popularity {:.3}, training {:.1}s",
            split.test.len(),
            split.drug_db.len(),
            model_hit,
            random_mean,
            seeds.len(),
            random_hits[0],
            pop_hit,
            run.train_time.as_secs_f64()
        ),
    )
}

fn loss_behavior(run: &Synthetic) -> Outcome {
    let losses = &run.outcome.epoch_losses;
    if losses.len() < 5 {
        return Err(format!("only {} epochs recorded", losses.len()));
    }
    let mut worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for b in [1usize, 4, 32] {
        let labels: Vec<f64> = (0..b * b).map(|_| f64::from(rng.gen_range(0..2u8))).collect();
        let mut tape = Tape::new();
        let s = tape
            .constant(vec![0.0; b * b], drugclip_core::diffcore::Shape::Matrix(b, b))
            .map_err(|e| e.to_string())?;
        let l = bce_loss(&mut tape, s, &labels).map_err(|e| e.to_string())?;
        worst = worst.max((tape.scalar(l) - std::f64::consts::LN_2).abs());
    }
    check(
        losses[4] < losses[0] && worst <= 1e-9,
        format!("epoch 1 {:.6}, epoch 5 {:.6}; zero-similarity loss off ln 2 by {worst:.1e}", losses[0], losses[4]),
    )
}

struct Constant(usize);

impl Scorer for Constant {
    fn name(&self) -> &str {
        "constant"
    }

    fn scores(&self, _query: &TrialRecord) -> Result<Vec<f64>, EvalError> {
        Ok(vec![0.5; self.0])
    }
}

fn tie_floor(run: &Synthetic) -> Outcome {
    let split = &run.split;
    let n = split.drug_db.len();
    let report = evaluate(&Constant(n), &split.test, &split.drug_db, &[10.0, 100.0]).map_err(|e| e.to_string())?;
    let (h10, h100) = (report.hit_rate(10.0).unwrap(), report.hit_rate(100.0).unwrap());
    check(n > 1 && h10 == 0.0 && h100 == 1.0, format!("N = {n}: hit@10% = {h10}, hit@100% = {h100}"))
}

fn cli(args: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_drugclip")).args(args).output().map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!("drugclip {}: {}", args[0], String::from_utf8_lossy(&o.stderr).trim()))
    }
}

fn pipeline(dir: &Path) -> Result<Vec<Vec<u8>>, String> {
    let s = |name: &str| dir.join(name).to_str().unwrap().to_string();
    cli(&["gen-synthetic", "--out", &s(""), "--seed", "7"])?;
    cli(&[
        "train", "--trials", &s("trials.tsv"), "--drugs", &s("drugs.tsv"), "--icd", &s("icd.csv"), "--dim", "16",
        "--epochs", "3", "--batch", "8", "--cutoff", CUTOFF, "--seed", "7", "--out", &s("model.ckpt"),
    ])?;
    cli(&[
        "eval", "--model", &s("model.ckpt"), "--trials", &s("trials.tsv"), "--drugs", &s("drugs.tsv"), "--cutoff",
        CUTOFF, "--cutoff-end", WINDOW_END, "--out", &s("metrics.csv"),
    ])?;
    ["model.ckpt", "model.loss.csv", "metrics.csv", "metrics.audit.csv"]
        .iter()
        .map(|f| std::fs::read(dir.join(f)).map_err(|e| format!("{f}: {e}")))
        .collect()
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = pipeline(a.path())?;
    let second = pipeline(b.path())?;
    let same: Vec<bool> = first.iter().zip(&second).map(|(x, y)| x == y).collect();
    check(
        same.iter().all(|&s| s),
        format!("checkpoint, loss history, metrics, audit identical: {same:?} ({} checkpoint bytes)", first[0].len()),
    )
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |id: usize, name: &str, outcome: Outcome| {
        match &outcome {
            Ok(detail) => println!("AC{id} PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("AC{id} FAIL {name}: {detail}");
            }
        }
    };

    report(1, "gradient oracle", gradient_oracle());
    report(2, "attention normalization", gram_normalization());
    report(3, "permutation invariance", permutation_invariance());
    report(4, "ancestor semantics", ancestor_semantics());
    report(5, "SMILES oracle corpus", smiles_corpus());
    let run = synthetic_run();
    let with_run = |f: fn(&Synthetic) -> Outcome| match &run {
        Ok(r) => f(r),
        Err(e) => Err(format!("synthetic training failed: {e}")),
    };
    report(6, "synthetic recoverability", with_run(synthetic_recoverability));
    report(7, "loss behavior", with_run(loss_behavior));
    report(8, "determinism", determinism());
    report(9, "tie-handling floor", with_run(tie_floor));

    if failed == 0 {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use drugclip_core::dataio::load_checkpoint;
use drugclip_core::drugclip::DrugClipModel;
use tempfile::TempDir;

fn drugclip(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drugclip")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct World {
    _dir: TempDir,
    root: PathBuf,
}

impl World {
    fn new(trials: usize) -> World {
        let dir = TempDir::new().unwrap();
        let root = dir.path().to_path_buf();
        let o = drugclip(&["gen-synthetic", "--out", p(&root), "--trials", &trials.to_string()]);
        assert!(o.status.success(), "{}", stderr(&o));
        World { _dir: dir, root }
    }

    fn file(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn train(&self, extra: &[&str]) -> (Output, PathBuf) {
        let out = self.file("model.ckpt");
        let mut args: Vec<&str> = Vec::new();
        let trials = self.file("trials.tsv");
        let drugs = self.file("drugs.tsv");
        let icd = self.file("icd.csv");
        args.extend(["train", "--trials", p(&trials), "--drugs", p(&drugs), "--icd", p(&icd), "--out", p(&out)]);
        args.extend(extra);
        (drugclip(&args), out)
    }
}

#[test]
fn parse_smiles_prints_graph() {
    let o = drugclip(&["parse-smiles", "C=O"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("atoms: 2"));
    assert!(stdout(&o).contains("(0,1,2)"));

    let o = drugclip(&["parse-smiles", "c1ccccc1"]);
    assert_eq!(o.status.code(), Some(0));
    let aromatic = stdout(&o).lines().filter(|l| l.trim_start().starts_with('(') && l.ends_with(",4)")).count();
    assert_eq!(aromatic, 6);
}

#[test]
fn parse_smiles_reports_errors() {
    let o = drugclip(&["parse-smiles", "C1CC"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("UnclosedRing"), "{}", stderr(&o));
}

#[test]
fn missing_argument_is_usage_error() {
    let o = drugclip(&["train", "--drugs", "d.tsv", "--icd", "i.csv", "--out", "m.ckpt"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--trials"));
}

#[test]
fn missing_file_is_input_error() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.tsv");
    let o = drugclip(&[
        "train", "--trials", p(&missing), "--drugs", p(&missing), "--icd", p(&missing), "--out",
        p(&dir.path().join("m.ckpt")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("FileNotFound") || stderr(&o).contains("not found"), "{}", stderr(&o));
}

#[test]
fn zero_epochs_writes_initial_model() {
    let w = World::new(100);
    let (o, ckpt) = w.train(&["--epochs", "0", "--dim", "8", "--depth", "1", "--seed", "9"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("seed: 9"));
    let loaded = load_checkpoint(&ckpt).unwrap();
    let fresh = DrugClipModel::new(*loaded.config(), loaded.ontology().clone(), 9).unwrap();
    assert_eq!(loaded.params(), fresh.params());
    let losses = std::fs::read_to_string(ckpt.with_extension("loss.csv")).unwrap();
    assert_eq!(losses.trim(), "epoch,mean_loss");
}

#[test]
fn eval_validates_k_and_window() {
    let w = World::new(200);
    let (o, ckpt) = w.train(&["--epochs", "1", "--dim", "8", "--depth", "1", "--cutoff", "2021-01-01"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let trials = w.file("trials.tsv");
    let drugs = w.file("drugs.tsv");
    let metrics = w.file("metrics.csv");
    let eval = |cutoff: &str, end: &str, k: &str| {
        drugclip(&[
            "eval", "--model", p(&ckpt), "--trials", p(&trials), "--drugs", p(&drugs), "--cutoff", cutoff,
            "--cutoff-end", end, "--k", k, "--out", p(&metrics),
        ])
    };

    let o = eval("2021-01-01", "2024-01-01", "0");
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = eval("2021-01-01", "2024-01-01", "101");
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let o = eval("2030-01-01", "2031-01-01", "10");
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));

    let o = eval("2021-01-01", "2020-01-01", "10");
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let o = eval("2021-01-01", "2024-01-01", "10,30");
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&metrics).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k_percent,hit_rate,n_queries"));
    assert_eq!(lines.count(), 2);
    assert!(metrics.with_extension("audit.csv").exists());
}

#[test]
fn eval_baselines_need_no_model() {
    let w = World::new(200);
    let trials = w.file("trials.tsv");
    let drugs = w.file("drugs.tsv");
    let metrics = w.file("pop.csv");
    for scorer in ["random", "popularity"] {
        let o = drugclip(&[
            "eval", "--scorer", scorer, "--trials", p(&trials), "--drugs", p(&drugs), "--cutoff", "2021-01-01",
            "--cutoff-end", "2024-01-01", "--out", p(&metrics),
        ]);
        assert!(o.status.success(), "{scorer}: {}", stderr(&o));
        assert!(stdout(&o).contains(&format!("scorer: {scorer}")), "{}", stdout(&o));
    }
    let o = drugclip(&[
        "eval", "--trials", p(&trials), "--drugs", p(&drugs), "--cutoff", "2021-01-01", "--cutoff-end",
        "2024-01-01", "--out", p(&metrics),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn rank_lists_top_drugs() {
    let w = World::new(100);
    let (o, ckpt) = w.train(&["--epochs", "1", "--dim", "8", "--depth", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let drugs = w.file("drugs.tsv");
    let n_drugs = std::fs::read_to_string(&drugs).unwrap().lines().count() - 1;

    let o = drugclip(&["rank", "--model", p(&ckpt), "--drugs", p(&drugs), "--codes", "C10", "--top", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows[0], "rank\tdrug_id\tscore");
    assert_eq!(rows.len(), 6);
    let scores: Vec<f64> = rows[1..].iter().map(|r| r.split('\t').nth(2).unwrap().parse().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));

    let o = drugclip(&["rank", "--model", p(&ckpt), "--drugs", p(&drugs), "--codes", "C10", "--top", "100000"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), n_drugs + 1);

    let o = drugclip(&["rank", "--model", p(&ckpt), "--drugs", p(&drugs), "--codes", "not-a-code"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("InvalidCodeFormat"), "{}", stderr(&o));
}

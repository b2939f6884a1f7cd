//! A small synthetic world with planted drug–disease structure.
//!
//! Each latent class owns one ring scaffold and two ICD categories, and is
//! split into subgroups. A subgroup's drugs share a linker between a carbon
//! chain and the scaffold; its disease codes share the fourth character.
//! Every trial pairs a drug and a disease set from the same subgroup.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataio::{write_drug_db, write_trials, DataError, DrugRecord, TrialRecord};
use crate::drugclip::disease_set_key;
use crate::ontology::{DiseaseCode, Ontology};

const SCAFFOLDS: [&str; 8] =
    ["c1ccccc1", "c1ccncc1", "C1CCCCC1", "c1ccsc1", "C1CCNCC1", "c1ccoc1", "C1CCC(=O)C1", "c1cnc[nH]1"];
const LINKERS: [&str; 5] = ["C(=O)", "N", "O", "S", "C(F)(F)"];
const CATEGORY_LETTERS: [char; 8] = ['C', 'D', 'E', 'F', 'G', 'I', 'J', 'K'];
pub const MAX_CLASSES: usize = SCAFFOLDS.len();
pub const SUBGROUPS: usize = LINKERS.len();

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub classes: usize,
    pub drugs_per_class: usize,
    pub sets_per_class: usize,
    pub trials: usize,
    pub start: NaiveDate,
    /// Exclusive.
    pub end: NaiveDate,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            classes: 8,
            drugs_per_class: 25,
            sets_per_class: 25,
            trials: 800,
            start: NaiveDate::from_ymd_opt(2010, 1, 1).expect("valid date"),
            end: NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date"),
            seed: 42,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.classes == 0 || self.classes > MAX_CLASSES {
            return Err(format!("classes must be in 1..={MAX_CLASSES}"));
        }
        if self.drugs_per_class < SUBGROUPS || self.sets_per_class < SUBGROUPS {
            return Err(format!("each class needs at least {SUBGROUPS} drugs and {SUBGROUPS} disease sets"));
        }
        // 20 codes per subgroup give 210 distinct sets of one or two codes
        if self.sets_per_class.div_ceil(SUBGROUPS) > 210 {
            return Err("too many disease sets per class".into());
        }
        if self.start >= self.end {
            return Err("start date must precede end date".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDrug {
    pub drug_id: String,
    pub smiles: String,
    pub class: usize,
    pub subgroup: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSet {
    pub codes: Vec<DiseaseCode>,
    pub class: usize,
    pub subgroup: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub drugs: Vec<SyntheticDrug>,
    pub disease_sets: Vec<SyntheticSet>,
    pub trials: Vec<TrialRecord>,
    /// Every code used, with its ancestors, and a description.
    pub code_table: Vec<(DiseaseCode, String)>,
}

fn code(text: &str) -> DiseaseCode {
    DiseaseCode::normalize(text).expect("generated codes are well formed")
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticWorld, String> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut drugs = Vec::new();
    for (class, scaffold) in SCAFFOLDS.iter().enumerate().take(cfg.classes) {
        for i in 0..cfg.drugs_per_class {
            let subgroup = i % SUBGROUPS;
            let chain = "C".repeat(i / SUBGROUPS + 1);
            drugs.push(SyntheticDrug {
                drug_id: format!("SD{:03}", drugs.len() + 1),
                smiles: format!("{chain}{}{scaffold}", LINKERS[subgroup]),
                class,
                subgroup,
            });
        }
    }

    let mut disease_sets = Vec::new();
    let mut keys = HashSet::new();
    for (class, &letter) in CATEGORY_LETTERS.iter().enumerate().take(cfg.classes) {
        for i in 0..cfg.sets_per_class {
            let subgroup = i % SUBGROUPS;
            loop {
                let size = rng.gen_range(1..=2);
                let codes: BTreeSet<DiseaseCode> = (0..size)
                    .map(|_| {
                        let category = rng.gen_range(1..=2);
                        let leaf = rng.gen_range(0..10);
                        code(&format!("{letter}{category}0.{subgroup}{leaf}"))
                    })
                    .collect();
                let codes: Vec<DiseaseCode> = codes.into_iter().collect();
                if keys.insert(disease_set_key(&codes)) {
                    disease_sets.push(SyntheticSet { codes, class, subgroup });
                    break;
                }
            }
        }
    }

    let mut by_group: BTreeMap<(usize, usize), (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, d) in drugs.iter().enumerate() {
        by_group.entry((d.class, d.subgroup)).or_default().0.push(i);
    }
    for (i, s) in disease_sets.iter().enumerate() {
        by_group.entry((s.class, s.subgroup)).or_default().1.push(i);
    }

    let span = (cfg.end - cfg.start).num_days();
    let mut trials = Vec::with_capacity(cfg.trials);
    for n in 0..cfg.trials {
        let class = rng.gen_range(0..cfg.classes);
        let subgroup = rng.gen_range(0..SUBGROUPS);
        let (group_drugs, group_sets) = &by_group[&(class, subgroup)];
        let drug = &drugs[*group_drugs.choose(&mut rng).expect("every subgroup has drugs")];
        let set = &disease_sets[*group_sets.choose(&mut rng).expect("every subgroup has disease sets")];
        let date = cfg.start + Duration::days(rng.gen_range(0..span));
        trials.push(TrialRecord {
            trial_id: format!("SYN{:05}", n + 1),
            date,
            drug_id: drug.drug_id.clone(),
            smiles: drug.smiles.clone(),
            codes: set.codes.clone(),
        });
    }

    let ontology = Ontology::from_codes(disease_sets.iter().flat_map(|s| s.codes.iter().cloned()));
    let code_table = ontology
        .codes()
        .iter()
        .map(|c| {
            let class = CATEGORY_LETTERS.iter().position(|&l| c.canonical().starts_with(l)).unwrap_or(0);
            let desc = match c.canonical().len() {
                3 => format!("class {class} category {}", c.display()),
                4 => format!("class {class} subgroup {}", &c.canonical()[3..4]),
                _ => format!("class {class} condition {}", c.display()),
            };
            (c.clone(), desc)
        })
        .collect();

    Ok(SyntheticWorld { drugs, disease_sets, trials, code_table })
}

/// Paths written by [`SyntheticWorld::write_to`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticFiles {
    pub trials: PathBuf,
    pub drugs: PathBuf,
    pub icd: PathBuf,
}

impl SyntheticWorld {
    pub fn ontology(&self) -> Ontology {
        Ontology::from_entries(self.code_table.iter().cloned())
    }

    /// Drug table; a drug's first-tested date is its earliest trial, or the
    /// earliest trial date overall when it has none.
    pub fn drug_records(&self) -> Vec<DrugRecord> {
        let fallback = self.trials.iter().map(|t| t.date).min().unwrap_or(NaiveDate::MIN);
        self.drugs
            .iter()
            .map(|d| DrugRecord {
                drug_id: d.drug_id.clone(),
                smiles: d.smiles.clone(),
                first_tested: self
                    .trials
                    .iter()
                    .filter(|t| t.drug_id == d.drug_id)
                    .map(|t| t.date)
                    .min()
                    .unwrap_or(fallback),
            })
            .collect()
    }

    /// Writes `trials.tsv`, `drugs.tsv` and `icd.csv` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<SyntheticFiles, DataError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let files = SyntheticFiles {
            trials: dir.join("trials.tsv"),
            drugs: dir.join("drugs.tsv"),
            icd: dir.join("icd.csv"),
        };
        write_trials(BufWriter::new(File::create(&files.trials)?), &self.trials)?;
        write_drug_db(BufWriter::new(File::create(&files.drugs)?), &self.drug_records())?;

        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&files.icd)?));
        let io = |e: csv::Error| DataError::Io(std::io::Error::other(e));
        w.write_record(["code", "description"]).map_err(io)?;
        for (c, desc) in &self.code_table {
            w.write_record([c.display().as_str(), desc.as_str()]).map_err(io)?;
        }
        w.flush()?;
        Ok(files)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::parse_smiles;

    #[test]
    fn default_world_shape() {
        let w = generate(&SyntheticConfig::default()).unwrap();
        assert_eq!(w.drugs.len(), 200);
        assert_eq!(w.disease_sets.len(), 200);
        assert_eq!(w.trials.len(), 800);
        let smiles: HashSet<&str> = w.drugs.iter().map(|d| d.smiles.as_str()).collect();
        assert_eq!(smiles.len(), 200);
        for d in &w.drugs {
            assert!(parse_smiles(&d.smiles).is_ok(), "{}", d.smiles);
        }
        let onto = w.ontology();
        for s in &w.disease_sets {
            for c in &s.codes {
                assert!(onto.contains(c));
                assert!(c.canonical().starts_with(CATEGORY_LETTERS[s.class]));
                assert_eq!(c.canonical().as_bytes()[3] - b'0', s.subgroup as u8);
            }
        }
        let cfg = SyntheticConfig::default();
        assert!(w.trials.iter().all(|t| t.date >= cfg.start && t.date < cfg.end));
    }

    #[test]
    fn trials_pair_within_subgroups() {
        let w = generate(&SyntheticConfig::default()).unwrap();
        let drug: BTreeMap<&str, &SyntheticDrug> = w.drugs.iter().map(|d| (d.drug_id.as_str(), d)).collect();
        for t in &w.trials {
            let d = drug[t.drug_id.as_str()];
            let s = w.disease_sets.iter().find(|s| s.codes == t.codes).unwrap();
            assert_eq!((d.class, d.subgroup), (s.class, s.subgroup));
        }
    }

    #[test]
    fn generation_is_seeded() {
        let a = generate(&SyntheticConfig::default()).unwrap();
        assert_eq!(a, generate(&SyntheticConfig::default()).unwrap());
        let b = generate(&SyntheticConfig { seed: 7, ..SyntheticConfig::default() }).unwrap();
        assert_ne!(a.trials, b.trials);
    }

    #[test]
    fn invalid_configs() {
        assert!(generate(&SyntheticConfig { classes: 9, ..SyntheticConfig::default() }).is_err());
        assert!(generate(&SyntheticConfig { drugs_per_class: 2, ..SyntheticConfig::default() }).is_err());
    }
}

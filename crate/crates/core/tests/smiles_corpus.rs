//! Parses a corpus of drug-like SMILES and compares atom counts, bond counts
//! and bond-order histograms with values computed by RDKit (unsanitized).
//! Regenerate with `python3 tests/fixtures/gen_smiles_corpus.py`.

use drugclip_core::molgraph::parse_smiles;

const CORPUS: &str = include_str!("fixtures/smiles_corpus.tsv");

struct Row<'a> {
    name: &'a str,
    smiles: &'a str,
    atoms: usize,
    bonds: usize,
    /// single, double, triple, aromatic
    orders: [usize; 4],
}

fn rows() -> Vec<Row<'static>> {
    CORPUS
        .lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            assert_eq!(f.len(), 8, "bad corpus row {l:?}");
            let n = |i: usize| f[i].parse::<usize>().unwrap();
            Row { name: f[0], smiles: f[1], atoms: n(2), bonds: n(3), orders: [n(4), n(5), n(6), n(7)] }
        })
        .collect()
}

#[test]
fn corpus_has_fifty_molecules() {
    assert_eq!(rows().len(), 50);
}

#[test]
fn counts_match_reference() {
    let mut failures = Vec::new();
    for r in rows() {
        match parse_smiles(r.smiles) {
            Ok(g) => {
                let h = g.bond_code_histogram();
                let got = (g.atom_count(), g.bond_count(), [h[1], h[2], h[3], h[4]]);
                if got != (r.atoms, r.bonds, r.orders) {
                    failures.push(format!(
                        "{} {}: got {got:?}, expected {:?}",
                        r.name,
                        r.smiles,
                        (r.atoms, r.bonds, r.orders)
                    ));
                }
            }
            Err(e) => failures.push(format!("{} {}: {e}", r.name, r.smiles)),
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

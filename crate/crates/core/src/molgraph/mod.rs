//! Molecular graphs built from SMILES text.
//!
//! Nodes are heavy atoms (plus any hydrogens written as bracket atoms);
//! edges carry an integer bond code: 1 single, 2 double, 3 triple,
//! 4 aromatic. Code 0 means "no bond" and never appears in a bond list.

mod features;
mod smiles;

pub use features::{
    atom_features, bond_feature, InvalidBondCode, ATOM_FEATURE_LEN, BOND_FEATURE_LEN, FEATURE_SCHEMA,
};
pub use smiles::parse_smiles;

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmilesError {
    #[error("EmptyInput: SMILES text is empty")]
    EmptyInput,
    #[error("UnknownToken: unexpected {token:?} at position {pos}")]
    UnknownToken { token: String, pos: usize },
    #[error("UnclosedRing: ring bond {label} opened at position {pos} is never closed")]
    UnclosedRing { label: u32, pos: usize },
    #[error("UnbalancedParen: unmatched parenthesis at position {pos}")]
    UnbalancedParen { pos: usize },
    #[error("MultiFragment: '.' at position {pos}; only single-fragment molecules are accepted")]
    MultiFragment { pos: usize },
    #[error("InvalidRingClosure: ring bond {label} at position {pos} {reason}")]
    InvalidRingClosure { label: u32, pos: usize, reason: &'static str },
    #[error("DanglingBond: bond symbol at position {pos} has no atom to bind")]
    DanglingBond { pos: usize },
}

impl SmilesError {
    /// Short variant name, as printed by the command-line tool.
    pub fn kind(&self) -> &'static str {
        match self {
            SmilesError::EmptyInput => "EmptyInput",
            SmilesError::UnknownToken { .. } => "UnknownToken",
            SmilesError::UnclosedRing { .. } => "UnclosedRing",
            SmilesError::UnbalancedParen { .. } => "UnbalancedParen",
            SmilesError::MultiFragment { .. } => "MultiFragment",
            SmilesError::InvalidRingClosure { .. } => "InvalidRingClosure",
            SmilesError::DanglingBond { .. } => "DanglingBond",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Element {
    B,
    C,
    N,
    O,
    P,
    S,
    F,
    Cl,
    Br,
    I,
    H,
    Other,
}

impl Element {
    /// Feature-slot order for the element one-hot.
    pub const ALL: [Element; 12] = [
        Element::B,
        Element::C,
        Element::N,
        Element::O,
        Element::P,
        Element::S,
        Element::F,
        Element::Cl,
        Element::Br,
        Element::I,
        Element::H,
        Element::Other,
    ];

    pub fn from_symbol(symbol: &str) -> Element {
        match symbol {
            "B" | "b" => Element::B,
            "C" | "c" => Element::C,
            "N" | "n" => Element::N,
            "O" | "o" => Element::O,
            "P" | "p" => Element::P,
            "S" | "s" => Element::S,
            "F" => Element::F,
            "Cl" => Element::Cl,
            "Br" => Element::Br,
            "I" => Element::I,
            "H" => Element::H,
            _ => Element::Other,
        }
    }

    pub fn slot(self) -> usize {
        self as usize
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Element::B => "B",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::P => "P",
            Element::S => "S",
            Element::F => "F",
            Element::Cl => "Cl",
            Element::Br => "Br",
            Element::I => "I",
            Element::H => "H",
            Element::Other => "*",
        }
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Atom {
    pub element: Element,
    pub aromatic: bool,
    /// Clamped to `[-2, 2]`.
    pub formal_charge: i8,
    pub degree: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bond {
    pub begin: usize,
    pub end: usize,
    pub code: u8,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.begin == atom {
            self.end
        } else {
            self.begin
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MolGraph {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    source: String,
}

impl MolGraph {
    pub(crate) fn from_parts(atoms: Vec<Atom>, bonds: Vec<Bond>, source: String) -> MolGraph {
        MolGraph { atoms, bonds, source }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    /// Bond counts indexed by code; slot 0 is always zero.
    pub fn bond_code_histogram(&self) -> [usize; 5] {
        let mut hist = [0; 5];
        for b in &self.bonds {
            hist[b.code as usize] += 1;
        }
        hist
    }

    /// Relabels atoms so that old atom `i` becomes new atom `perm[i]`.
    ///
    /// Bond order is kept; the result describes the same molecule.
    ///
    /// # Panics
    ///
    /// Panics if `perm` is not a permutation of `0..atom_count()`.
    pub fn permuted(&self, perm: &[usize]) -> MolGraph {
        assert_eq!(perm.len(), self.atoms.len(), "permutation length mismatch");
        let mut seen = vec![false; perm.len()];
        for &p in perm {
            assert!(p < perm.len() && !seen[p], "not a permutation");
            seen[p] = true;
        }
        let mut atoms = self.atoms.clone();
        for (old, &new) in perm.iter().enumerate() {
            atoms[new] = self.atoms[old];
        }
        let bonds = self
            .bonds
            .iter()
            .map(|b| Bond { begin: perm[b.begin], end: perm[b.end], code: b.code })
            .collect();
        MolGraph { atoms, bonds, source: self.source.clone() }
    }
}

impl fmt::Display for MolGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "smiles: {}", self.source)?;
        writeln!(f, "atoms: {}", self.atoms.len())?;
        for (i, a) in self.atoms.iter().enumerate() {
            writeln!(
                f,
                "  {i}\t{}\taromatic={}\tcharge={:+}\tdegree={}",
                a.element, a.aromatic, a.formal_charge, a.degree
            )?;
        }
        writeln!(f, "bonds: {}", self.bonds.len())?;
        for b in &self.bonds {
            writeln!(f, "  ({},{},{})", b.begin, b.end, b.code)?;
        }
        Ok(())
    }
}

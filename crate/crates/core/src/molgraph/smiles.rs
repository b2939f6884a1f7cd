//! SMILES reader.
//!
//! Supported: organic-subset atoms, bracket atoms (isotope, chirality,
//! hydrogen count, charge and atom class are read; only the charge is
//! kept), the bond symbols `- = # :`, branches, ring-closure digits and
//! `%nn` labels. Stereo bond marks `/` and `\` are consumed and ignored.

use std::collections::BTreeMap;

use super::{Atom, Bond, Element, MolGraph, SmilesError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BondSymbol {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondSymbol {
    fn code(self) -> u8 {
        match self {
            BondSymbol::Single => 1,
            BondSymbol::Double => 2,
            BondSymbol::Triple => 3,
            BondSymbol::Aromatic => 4,
        }
    }
}

struct OpenRing {
    atom: usize,
    symbol: Option<BondSymbol>,
    pos: usize,
}

struct Parser<'a> {
    text: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    branches: Vec<(usize, usize)>,
    prev: Option<usize>,
    pending: Option<(BondSymbol, usize)>,
    // stereo-only bond marks still require a following atom
    pending_stereo: Option<usize>,
    rings: BTreeMap<u32, OpenRing>,
}

/// Parses a single-fragment SMILES string into a [`MolGraph`].
pub fn parse_smiles(text: &str) -> Result<MolGraph, SmilesError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(SmilesError::EmptyInput);
    }
    let mut p = Parser {
        text: trimmed.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        bonds: Vec::new(),
        branches: Vec::new(),
        prev: None,
        pending: None,
        pending_stereo: None,
        rings: BTreeMap::new(),
    };
    p.run()?;
    let Parser { mut atoms, bonds, .. } = p;
    for b in &bonds {
        atoms[b.begin].degree += 1;
        atoms[b.end].degree += 1;
    }
    Ok(MolGraph::from_parts(atoms, bonds, trimmed.to_string()))
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<u8> {
        self.text.get(self.pos).copied()
    }

    fn peek_at(&self, offset: usize) -> Option<u8> {
        self.text.get(self.pos + offset).copied()
    }

    fn unknown(&self, at: usize) -> SmilesError {
        let token = match std::str::from_utf8(&self.text[at..]) {
            Ok(rest) => rest.chars().next().map(String::from).unwrap_or_default(),
            Err(_) => format!("\\x{:02x}", self.text[at]),
        };
        SmilesError::UnknownToken { token, pos: at }
    }

    fn run(&mut self) -> Result<(), SmilesError> {
        while let Some(c) = self.peek() {
            let start = self.pos;
            match c {
                b'(' => {
                    let Some(prev) = self.prev else {
                        return Err(SmilesError::UnbalancedParen { pos: start });
                    };
                    if self.pending.is_some() || self.pending_stereo.is_some() {
                        return Err(self.unknown(start));
                    }
                    self.branches.push((prev, start));
                    self.pos += 1;
                }
                b')' => {
                    let Some((atom, _)) = self.branches.pop() else {
                        return Err(SmilesError::UnbalancedParen { pos: start });
                    };
                    if let Some((_, pos)) = self.pending {
                        return Err(SmilesError::DanglingBond { pos });
                    }
                    if let Some(pos) = self.pending_stereo {
                        return Err(SmilesError::DanglingBond { pos });
                    }
                    self.prev = Some(atom);
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' => {
                    let symbol = match c {
                        b'-' => BondSymbol::Single,
                        b'=' => BondSymbol::Double,
                        b'#' => BondSymbol::Triple,
                        _ => BondSymbol::Aromatic,
                    };
                    if self.prev.is_none() || self.pending.is_some() {
                        return Err(self.unknown(start));
                    }
                    self.pending = Some((symbol, start));
                    self.pos += 1;
                }
                b'/' | b'\\' => {
                    if self.prev.is_none() {
                        return Err(self.unknown(start));
                    }
                    self.pending_stereo = Some(start);
                    self.pos += 1;
                }
                b'.' => return Err(SmilesError::MultiFragment { pos: start }),
                b'0'..=b'9' => {
                    let label = u32::from(c - b'0');
                    self.pos += 1;
                    self.ring_bond(label, start)?;
                }
                b'%' => {
                    let (Some(d1), Some(d2)) = (self.peek_at(1), self.peek_at(2)) else {
                        return Err(self.unknown(start));
                    };
                    if !d1.is_ascii_digit() || !d2.is_ascii_digit() {
                        return Err(self.unknown(start));
                    }
                    let label = u32::from(d1 - b'0') * 10 + u32::from(d2 - b'0');
                    self.pos += 3;
                    self.ring_bond(label, start)?;
                }
                b'[' => {
                    let atom = self.bracket_atom()?;
                    self.add_atom(atom);
                }
                _ => {
                    let atom = self.organic_atom()?;
                    self.add_atom(atom);
                }
            }
        }
        if let Some((_, pos)) = self.pending {
            return Err(SmilesError::DanglingBond { pos });
        }
        if let Some(pos) = self.pending_stereo {
            return Err(SmilesError::DanglingBond { pos });
        }
        if let Some((_, pos)) = self.branches.last() {
            return Err(SmilesError::UnbalancedParen { pos: *pos });
        }
        if let Some((&label, ring)) = self.rings.iter().next() {
            return Err(SmilesError::UnclosedRing { label, pos: ring.pos });
        }
        Ok(())
    }

    fn add_atom(&mut self, atom: Atom) {
        let idx = self.atoms.len();
        self.atoms.push(atom);
        if let Some(prev) = self.prev {
            let code = self.resolve_code(self.pending.map(|(s, _)| s), prev, idx);
            self.bonds.push(Bond { begin: prev, end: idx, code });
        }
        self.pending = None;
        self.pending_stereo = None;
        self.prev = Some(idx);
    }

    fn resolve_code(&self, symbol: Option<BondSymbol>, a: usize, b: usize) -> u8 {
        match symbol {
            Some(s) => s.code(),
            None if self.atoms[a].aromatic && self.atoms[b].aromatic => 4,
            None => 1,
        }
    }

    fn ring_bond(&mut self, label: u32, pos: usize) -> Result<(), SmilesError> {
        let Some(current) = self.prev else {
            return Err(self.unknown(pos));
        };
        let symbol = self.pending.take().map(|(s, _)| s);
        self.pending_stereo = None;
        match self.rings.remove(&label) {
            None => {
                self.rings.insert(label, OpenRing { atom: current, symbol, pos });
            }
            Some(open) => {
                let symbol = match (open.symbol, symbol) {
                    (Some(a), Some(b)) if a != b => {
                        return Err(SmilesError::InvalidRingClosure {
                            label,
                            pos,
                            reason: "has conflicting bond symbols",
                        })
                    }
                    (a, b) => a.or(b),
                };
                if open.atom == current {
                    return Err(SmilesError::InvalidRingClosure {
                        label,
                        pos,
                        reason: "bonds an atom to itself",
                    });
                }
                let exists = self.bonds.iter().any(|b| {
                    (b.begin == open.atom && b.end == current)
                        || (b.begin == current && b.end == open.atom)
                });
                if exists {
                    return Err(SmilesError::InvalidRingClosure {
                        label,
                        pos,
                        reason: "duplicates an existing bond",
                    });
                }
                let code = self.resolve_code(symbol, open.atom, current);
                self.bonds.push(Bond { begin: open.atom, end: current, code });
            }
        }
        Ok(())
    }

    fn organic_atom(&mut self) -> Result<Atom, SmilesError> {
        let start = self.pos;
        let c = self.peek().ok_or_else(|| self.unknown(start))?;
        let (symbol, aromatic, width) = match (c, self.peek_at(1)) {
            (b'C', Some(b'l')) => ("Cl", false, 2),
            (b'B', Some(b'r')) => ("Br", false, 2),
            (b'B', _) => ("B", false, 1),
            (b'C', _) => ("C", false, 1),
            (b'N', _) => ("N", false, 1),
            (b'O', _) => ("O", false, 1),
            (b'P', _) => ("P", false, 1),
            (b'S', _) => ("S", false, 1),
            (b'F', _) => ("F", false, 1),
            (b'I', _) => ("I", false, 1),
            (b'*', _) => ("*", false, 1),
            (b'b', _) => ("b", true, 1),
            (b'c', _) => ("c", true, 1),
            (b'n', _) => ("n", true, 1),
            (b'o', _) => ("o", true, 1),
            (b'p', _) => ("p", true, 1),
            (b's', _) => ("s", true, 1),
            _ => return Err(self.unknown(start)),
        };
        self.pos += width;
        Ok(Atom { element: Element::from_symbol(symbol), aromatic, formal_charge: 0, degree: 0 })
    }

    fn bracket_atom(&mut self) -> Result<Atom, SmilesError> {
        let open = self.pos;
        self.pos += 1;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        let sym_start = self.pos;
        let first = self.peek().ok_or(SmilesError::UnknownToken { token: "[".into(), pos: open })?;
        let aromatic = first.is_ascii_lowercase();
        if first == b'*' {
            self.pos += 1;
        } else if first.is_ascii_alphabetic() {
            self.pos += 1;
            if matches!(self.peek(), Some(b'a'..=b'z')) {
                self.pos += 1;
            }
        } else {
            return Err(self.unknown(sym_start));
        }
        let symbol = std::str::from_utf8(&self.text[sym_start..self.pos]).unwrap_or("*");
        let element = if aromatic {
            match symbol {
                "b" | "c" | "n" | "o" | "p" | "s" => Element::from_symbol(symbol),
                "se" | "as" | "te" => Element::Other,
                _ => return Err(self.unknown(sym_start)),
            }
        } else {
            Element::from_symbol(symbol)
        };

        // chirality: @, @@, @TH1, @SP2, @OH12, ...
        if self.peek() == Some(b'@') {
            self.pos += 1;
            if self.peek() == Some(b'@') {
                self.pos += 1;
            }
            while matches!(self.peek(), Some(b'A'..=b'Z')) && self.peek() != Some(b'H') {
                self.pos += 1;
            }
            while matches!(self.peek(), Some(b'0'..=b'9')) {
                self.pos += 1;
            }
        }
        // explicit hydrogen count is read and discarded
        if self.peek() == Some(b'H') {
            self.pos += 1;
            while matches!(self.peek(), Some(b'0'..=b'9')) {
                self.pos += 1;
            }
        }
        let mut charge: i32 = 0;
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            let unit = if sign == b'+' { 1 } else { -1 };
            self.pos += 1;
            let digits_start = self.pos;
            while matches!(self.peek(), Some(b'0'..=b'9')) {
                self.pos += 1;
            }
            if self.pos > digits_start {
                let n: i32 = std::str::from_utf8(&self.text[digits_start..self.pos])
                    .ok()
                    .and_then(|s| s.parse().ok())
                    .unwrap_or(i32::MAX);
                charge = unit * n.min(99);
            } else {
                charge = unit;
                while self.peek() == Some(sign) {
                    charge += unit;
                    self.pos += 1;
                }
            }
        }
        if self.peek() == Some(b':') {
            self.pos += 1;
            while matches!(self.peek(), Some(b'0'..=b'9')) {
                self.pos += 1;
            }
        }
        match self.peek() {
            Some(b']') => self.pos += 1,
            Some(_) => return Err(self.unknown(self.pos)),
            None => return Err(SmilesError::UnknownToken { token: "[".into(), pos: open }),
        }
        Ok(Atom { element, aromatic, formal_charge: charge.clamp(-2, 2) as i8, degree: 0 })
    }
}

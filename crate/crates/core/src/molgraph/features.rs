use super::{Atom, Element};

pub const ATOM_FEATURE_LEN: usize = 24;
pub const BOND_FEATURE_LEN: usize = 4;

const CHARGE_OFFSET: usize = 13;
const DEGREE_OFFSET: usize = 18;
const MAX_DEGREE_SLOT: usize = 5;

/// Layout descriptor hashed into checkpoints; bump it whenever the
/// featurization below changes.
pub const FEATURE_SCHEMA: &str =
    "atom:v1:element[B,C,N,O,P,S,F,Cl,Br,I,H,other]+aromatic+charge[-2..2]+degree[0..5];bond:v1:onehot[1..4]";

/// One-hot element (12) ++ aromatic flag (1) ++ charge in `[-2, 2]` (5)
/// ++ degree capped at 5 (6).
pub fn atom_features(atom: &Atom) -> [f64; ATOM_FEATURE_LEN] {
    let mut f = [0.0; ATOM_FEATURE_LEN];
    f[atom.element.slot()] = 1.0;
    debug_assert!(atom.element.slot() < Element::ALL.len());
    if atom.aromatic {
        f[12] = 1.0;
    }
    let charge = i32::from(atom.formal_charge).clamp(-2, 2);
    f[CHARGE_OFFSET + (charge + 2) as usize] = 1.0;
    f[DEGREE_OFFSET + atom.degree.min(MAX_DEGREE_SLOT)] = 1.0;
    f
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("InvalidBondCode: {0} is not one of 1, 2, 3, 4")]
pub struct InvalidBondCode(pub u8);

pub fn bond_feature(code: u8) -> Result<[f64; BOND_FEATURE_LEN], InvalidBondCode> {
    if !(1..=4).contains(&code) {
        return Err(InvalidBondCode(code));
    }
    let mut f = [0.0; BOND_FEATURE_LEN];
    f[usize::from(code) - 1] = 1.0;
    Ok(f)
}

//! Small reverse-mode differentiation engine over dense `f64` vectors and
//! matrices.
//!
//! A [`Tape`] records every op executed through it. Parameters enter the
//! tape as leaves via [`Tape::param`]; after a scalar loss is built,
//! [`Tape::backward`] walks the record in reverse and returns a
//! [`Gradients`] map aligned with the [`ParameterStore`].
//!
//! ```
//! use drugclip_core::diffcore::{ParamKind, ParameterStore, Shape, Tape};
//!
//! let mut store = ParameterStore::new();
//! store.register("w", Shape::Vector(3), ParamKind::Bias).unwrap();
//! store.set_values("w", &[1.0, -2.0, 0.5]).unwrap();
//!
//! let mut tape = Tape::new();
//! let w = tape.param(&store, "w").unwrap();
//! let loss = tape.sum_elements(w).unwrap();
//! let grads = tape.backward(loss, &store).unwrap();
//! assert_eq!(grads.get("w").unwrap(), &[1.0, 1.0, 1.0]);
//! ```

mod adam;
mod gradcheck;
mod params;
mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{check_gradients, GradCheckReport};
pub use params::{ParamKind, Parameter, ParameterStore};
pub use tape::{Gradients, Tape, Var};

use std::fmt;

use thiserror::Error;

/// Norms below this are floored inside cosine similarity.
pub const COSINE_NORM_FLOOR: f64 = 1e-12;
/// Arguments of `log` in the cross-entropy are floored at this value.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shape {
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    pub fn len(self) -> usize {
        match self {
            Shape::Vector(n) => n,
            Shape::Matrix(r, c) => r * c,
        }
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }

    pub fn is_vector(self) -> bool {
        matches!(self, Shape::Vector(_))
    }

    pub fn is_scalar(self) -> bool {
        self == Shape::Vector(1)
    }

    /// `(rows, cols)`; a vector of length n is `(n, 1)`.
    pub fn dims(self) -> (usize, usize) {
        match self {
            Shape::Vector(n) => (n, 1),
            Shape::Matrix(r, c) => (r, c),
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Vector(n) => write!(f, "({n},)"),
            Shape::Matrix(r, c) => write!(f, "({r}, {c})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiffError {
    #[error("ShapeMismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("NumericalError: {op} produced a non-finite value")]
    NumericalError { op: &'static str },
    #[error("NoTape: gradients were not recorded on this tape")]
    NoTape,
    #[error("backward requires a scalar loss, got shape {0}")]
    NonScalarLoss(Shape),
    #[error("unknown parameter {0:?}")]
    UnknownParameter(String),
    #[error("parameter {0:?} registered twice")]
    DuplicateParameter(String),
}

impl DiffError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> DiffError {
        DiffError::ShapeMismatch { op, detail: detail.into() }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Cosine similarity with both norms floored at [`COSINE_NORM_FLOOR`].
pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = norm(u).max(COSINE_NORM_FLOOR);
    let nv = norm(v).max(COSINE_NORM_FLOOR);
    dot / (nu * nv)
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Per-element binary cross-entropy on a logit, logs floored at [`LOG_FLOOR`].
pub fn bce_term(logit: f64, target: f64) -> f64 {
    let p = sigmoid(logit);
    -(target * p.max(LOG_FLOOR).ln() + (1.0 - target) * (1.0 - p).max(LOG_FLOOR).ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
    }

    #[test]
    fn cosine_values() {
        assert!((cosine(&[3.0, 4.0], &[3.0, 4.0]) - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 2.0]), 0.0);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]), 0.0);
    }

    #[test]
    fn bce_term_is_finite_at_extremes() {
        assert!((bce_term(0.0, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
        let big = bce_term(1e6, 0.0);
        assert!(big.is_finite());
        assert!((big + LOG_FLOOR.ln()).abs() < 1e-9);
    }
}

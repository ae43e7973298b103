//! Truncated Taylor-jet arithmetic (order <= 4) and a recording tape whose
//! reverse pass yields exact parameter gradients of any jet coefficient.
//!
//! Jets carry Taylor-normalized coefficients (`coeff[k] = f^(k)/k!`), so the
//! truncated Cauchy product needs no binomial factors. The engine is strictly
//! univariate-directional: one seeded direction per jet, which is all the beam
//! residual needs (pure-t order 2 and pure-x order 4).

mod jet;
mod tape;

pub use jet::{Jet, MAX_ORDER};
pub use tape::{NodeId, ParamId, Tape};

/// Errors from jet construction and tape evaluation.
#[derive(Debug, thiserror::Error)]
pub enum AdError {
    #[error("unsupported jet order {0} (expected 0, 1, 2, or 4)")]
    UnsupportedOrder(usize),
    #[error("cannot seed a jet of order 0")]
    SeedOrderZero,
    #[error("jet order mismatch: {0} vs {1}")]
    OrderMismatch(usize, usize),
    #[error("dangling node id {0}")]
    DanglingNode(usize),
    #[error("coefficient index {index} exceeds node order {order}")]
    CoeffOutOfRange { index: usize, order: usize },
    #[error("derivative order {index} exceeds jet order {order}")]
    DerivativeOutOfRange { index: usize, order: usize },
    #[error("parameter id {0} out of range ({1} parameters registered)")]
    ParamOutOfRange(usize, usize),
}

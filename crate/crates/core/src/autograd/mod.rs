//! Reverse-mode automatic differentiation over scalar computation graphs.
//!
//! A [`Tape`] records every scalar operation together with its local partial
//! derivatives. [`Tape::backward`] runs one reverse sweep over the recorded
//! nodes. Model code is written against the [`Graph`] trait so the same
//! function can be evaluated eagerly with [`Eval`] or recorded on a tape.
//!
//! ```
//! use tailflow::autograd::{Graph, Tape};
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(3.0);
//! let y = tape.square(x);
//! assert_eq!(tape.backward(y).wrt(x), 6.0);
//! ```

mod graph;
mod mlp;
pub mod special;
mod tape;

use thiserror::Error;

pub use graph::{softplus, softplus_inverse, Eval, Graph};
pub use mlp::{Activation, Mlp, MlpParams};
pub use special::{digamma, erf, erfc, lgamma};
pub use tape::{Gradients, NodeId, Op, Tape};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutogradError {
    #[error("{function} is undefined at {arg}")]
    Domain { function: &'static str, arg: f64 },
    #[error("{op:?} cannot take {got} inputs")]
    Arity { op: Op, got: usize },
    #[error("node {0} is not on this tape")]
    UnknownNode(NodeId),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

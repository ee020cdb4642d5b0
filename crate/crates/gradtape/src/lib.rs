//! Reverse-mode automatic differentiation over dense real matrices.
//!
//! Complex quantities are carried as a pair of real nodes ([`CVar`]), so the
//! gradients are plain real gradients of a real loss. A [`Tape`] is built per
//! forward pass; parameters live outside it as [`Tensor`]s and are updated by
//! [`Adam`].
//!
//! ```
//! use isac_gradtape::{Tape, Tensor};
//!
//! let tape = Tape::new();
//! let w = tape.param(Tensor::scalar(3.0));
//! let loss = w.square();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.wrt(w).item(), 6.0);
//! ```

mod adam;
mod complex;
mod error;
pub mod finite_diff;
pub mod linalg;
pub mod selfcheck;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use complex::CVar;
pub use error::{GradError, Result};
pub use tape::{sigmoid, Gradients, Tape, Var};
pub use tensor::Tensor;

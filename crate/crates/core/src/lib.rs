//! Tubal and quasitubal tensor algebra.
//!
//! Tubes are multiplied in a transform domain: a finite tube of length `n` is
//! mapped through an invertible `n × n` matrix, multiplied elementwise, and
//! mapped back. Quasitubes are the bounded multipliers of an infinite tube
//! space; in the transform domain they are bounded sequences over `ℤ`. This
//! crate represents them as eventually-constant sequences ([`EcSeq`]) and
//! builds quasitubal tensors ([`QtTensor`]) on top: frontal slices over a
//! finite band plus one constant tail slice.
//!
//! On top of the algebra sit the quasitubal SVD ([`decomp::qsvd`]), the rank
//! truncations with their optimality guarantees, and a streaming extractor
//! ([`stream::extract_top_q`]) that finds the leading rank-one components of
//! a lazily evaluated tensor with a per-stage energy certificate.

pub mod decomp;
pub mod error;
pub mod io;
pub mod linalg;
pub mod quasitube;
pub mod stream;
pub mod synth;
pub mod tensor;
pub mod transform;
pub mod verify;

pub use decomp::{Component, ComponentList, Provenance, QSvd, Rank};
pub use error::{Error, Result};
pub use linalg::{CMat, C64};
pub use quasitube::{EcSeq, HNorm, SpectrumDesc};
pub use tensor::{FiniteTubalTensor, QtTensor, TubeArray};
pub use transform::{Direction, FiniteTube, TransformKind, TransformSpec};

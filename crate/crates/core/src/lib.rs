//! Integer-only MLP training over residue number systems.
//!
//! Every value the trainer touches on the "ciphertext side" goes through the
//! guarded evaluation layer in [`gadget`]: linear operations and table lookups
//! on values that never leave the unsigned 8-bit range, with operation
//! counters standing in for a cost model. On top of that sit the RNS/MRNS
//! number-system layer ([`ring`]), the overflow-free matrix multiplications
//! ([`matmul`]), the approximate block-scaling gadgets ([`scale`]), the
//! integer cross-entropy derivative ([`loss`]) and the sign-based training
//! loop ([`nn`]). [`reference`] holds an unconstrained integer clone of the
//! trainer used to cross-check that the guarded circuit is semantics
//! preserving, and [`data`] turns raw CSV tables into low-bitwidth integer
//! datasets.

pub mod data;
pub mod error;
pub mod gadget;
pub mod loss;
pub mod matmul;
pub mod matrix;
pub mod model;
pub mod nn;
pub mod reference;
pub mod report;
pub mod ring;
pub mod scale;

pub use error::{Error, Result};
pub use gadget::{GadgetValue, OpStats};
pub use matrix::IntMatrix;

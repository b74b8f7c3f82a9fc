//! Multiparty stateful assertions embedded into Hennessy-Milner logic.
//!
//! The crate compiles local session types annotated with predicates and
//! state updates into HML formulae, checks processes with virtual state
//! against them, and provides the interleaving, recursion-automata and
//! store-encoding constructions around that embedding.

pub mod automata;
pub mod cli;
pub mod embedding;
pub mod kernel;
pub mod lts;
pub mod predicates;
pub mod pure;
pub mod satisfaction;
pub mod shuffle;
pub mod typing;

pub use kernel::*;

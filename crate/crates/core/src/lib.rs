//! Word-level surprisal from a recurrent language model, and the
//! mixed-effects machinery used to test whether surprisal reproduces
//! published N400 effect patterns.
//!
//! The crate is `no_std` and only needs `alloc`. File IO, the command line
//! and the on-disk formats live in the `n400` companion crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analysis;
pub mod corpus;
pub mod lm;
pub mod stats;

pub(crate) mod float;

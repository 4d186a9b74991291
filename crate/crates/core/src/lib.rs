//! Non-emitting Markov mixture models for discrete sequences.
//!
//! The crate implements a family of order-`n` sequence models over a finite
//! alphabet: basic Markov models, interpolated mixtures whose order weights
//! are state-conditional, and non-emitting mixtures in which the descent to a
//! lower-order state consumes no symbol and is permanent until the next
//! emission. It also carries the machinery around them: context counting with
//! leave-one-block-out views, parameter tying, forward/backward EM estimation
//! in extended-exponent arithmetic, backoff variants, and entropy/occupancy
//! evaluation.
//!
//! The crate is `no_std` (with `alloc`); file IO, model files, and the
//! command-line front end live in the companion `nelm` crate.

#![no_std]

extern crate alloc;

pub mod analysis;
pub mod backoff;
pub mod corpus;
pub mod counts;
pub mod estimation;
pub mod models;
pub mod numeric;
pub mod tying;

pub use corpus::{Alphabet, Corpus, Unit};
pub use counts::{CountStore, CountView};
pub use models::MixtureModel;
pub use numeric::ExtScalar;
pub use tying::{TyingKind, TyingScheme};

//! Core of the deepj music model.
//!
//! Everything here is pure computation over in-memory values: the MIDI
//! codec works on byte slices, the tensor engine records a tape for
//! reverse-mode gradients, and the model, trainer and sampler are built on
//! top of it. File IO and the command-line surface live in `deepj-cli`.
//!
//! The crate is `no_std` with `alloc`. The default `std` feature only turns
//! on runtime SIMD dispatch inside the matrix kernels.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod generate;
pub mod midi;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod train;

pub use midi::{NoteEvent, NoteRoll, PitchWindow, QuantGrid};
pub use model::{Model, ModelConfig, StyleCatalog, StyleVector};
pub use tensor::{ParamStore, Real, Tape, Tensor, Var};

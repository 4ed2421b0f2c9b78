//! Constraint generation for 2D CAD sketches, aligned with verifiable
//! feedback from a geometric constraint solver.
//!
//! The crate is organized bottom-up:
//!
//! - [`sketch`]: primitives, constraints, dimensions, parameter packing.
//! - [`solver`]: Levenberg-Marquardt solving, Jacobian rank analysis and
//!   the fully/under/over-constrained, not-solvable and stability diagnosis.
//! - [`tokenizer`]: geometry and constraint token streams plus the decoding grammar.
//! - [`policy`]: encoder-decoder pointer network with reverse-mode gradients.
//! - [`alignment`]: solver rewards and the SFT, ExIt, DPO, ReMax, RLOO and GRPO procedures.
//! - [`datagen`]: synthetic sketch corpus, degradation, dedup and preprocessing.
//! - [`eval`]: metrics, Weisfeiler-Lehman hashing, diversity and SVG rendering.
//! - [`cli`]: the command-line surface.

pub mod alignment;
pub mod cli;
pub mod datagen;
pub mod error;
mod par;
pub mod eval;
pub mod policy;
pub mod sketch;
pub mod solver;
pub mod tokenizer;

pub use error::{Error, Result};

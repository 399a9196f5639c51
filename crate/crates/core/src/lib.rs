//! Learned tactic generation and automated proof search, end to end:
//! terms and proof states, a fixed tactic grammar, a tree-structured
//! encoder and grammar-constrained decoder with reverse-mode autodiff,
//! teacher-forced training, depth-first proof search, a toy proof kernel
//! (in-process and served over a wire protocol), and the data-pipeline
//! algorithms that turn proof traces into trees and synthetic proofs.

pub mod decoder;
pub mod encoder;
pub mod env;
pub mod grammar;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod rng;
pub mod search;
pub mod sexp;
pub mod term;
pub mod toy;
pub mod training;
pub mod wire;

//! Combinatorial bandit for composited ad creative selection.
//!
//! Creatives are assembled by choosing one element per ingredient of a
//! rooted ingredient tree. Expected CTR is linear in the chosen elements and
//! the chosen element pairs along tree edges, so the best creative among an
//! exponentially large space is found by dynamic programming in time linear
//! in the element graph, and Thompson sampling over the model weights turns
//! that into an exploration policy (`aes`). Classical bandit baselines, a
//! synthetic/replayed simulation harness, and benchmark instrumentation
//! round out the crate.

pub mod dp;
pub mod error;
pub mod features;
pub mod graph;
pub mod graph_file;
pub mod model;
pub mod policies;
pub mod sim;

pub use error::{Error, Result};

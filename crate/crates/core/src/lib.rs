//! Geometric deep learning for RNA inverse folding over conformational ensembles.

pub mod cli;
pub mod design;
pub mod error;
pub mod featurizer;
pub mod fitness;
pub mod model;
pub mod rna_io;
pub mod seeds;
pub mod synth;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};

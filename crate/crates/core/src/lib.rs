//! Cell-graph construction from nuclear instance maps and a hierarchical
//! graph convolutional classifier for tissue grading.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`features`] turns a labeled nucleus map and an intensity image into
//!    per-nucleus appearance and shape descriptors.
//! 2. [`graph`] samples representative nuclei, connects spatial neighbours,
//!    and builds the re-weighted propagation operator.
//! 3. [`model`] runs stacked adaptive graph convolutions with differentiable
//!    clustering and a max readout at every stage.
//! 4. [`train`] fits the model with Adam on a staged learning-rate schedule.
//!
//! Everything is differentiated by the small dense tape in [`autodiff`].

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod features;
pub mod graph;
pub mod model;
pub mod optim;
pub mod pnm;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod viz;

pub use error::{Error, Result};
pub use tensor::Tensor;

//! Left-ventricle quantification workbench.
//!
//! Two first-level estimators (a direct regression CNN and a
//! segmentation-then-measure pipeline) are combined by a per-index linear
//! ensemble. Training and evaluation run on synthetic short-axis phantoms
//! whose ground truth comes from an exact mask geometry oracle.

pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod indices;
pub mod models;
pub mod phantom;
pub mod pgm;
pub mod phase;
pub mod seeds;

pub use cardioquant_tensor as tensor;

pub use error::{Error, Result};
pub use geometry::LabelMask;
pub use indices::{IndexGroup, IndexVector, INDEX_COUNT, INDEX_NAMES};
pub use phantom::{Frame, PhantomSpec, Subject};
pub use phase::PhaseSequence;

/// Storage scalar of every network in the workbench.
pub type Real = f32;
pub type Tensor = cardioquant_tensor::Tensor<Real>;
pub type Graph = cardioquant_tensor::Graph<Real>;
pub type ParamStore = cardioquant_tensor::ParamStore<Real>;
pub type AdamState = cardioquant_tensor::AdamState<Real>;

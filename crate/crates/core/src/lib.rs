//! Universal label spaces for training one segmentation model on several
//! datasets with incompatible taxonomies.
//!
//! - [`taxonomy`]: classes as concept sets and compilation of the universal taxonomy
//! - [`label_space`]: baseline training taxonomies, mapping matrices and dataset scores
//! - [`loss`]: NLL+, NLL-max and the boundary-aware modulated loss with analytic gradients
//! - [`gradcheck`]: finite-difference validation of those gradients
//! - [`metrics`]: confusion matrices and IoU with void predictions as false negatives
//! - [`trainer`]: synthetic data, a linear softmax model, Adam and the unlabeled-concept experiment

pub mod gradcheck;
pub mod label_space;
pub mod loss;
pub mod metrics;
pub mod seed;
pub mod taxonomy;
pub mod trainer;

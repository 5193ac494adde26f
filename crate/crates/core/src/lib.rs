//! Discovery of parametric partial differential equations from gridded data.
//!
//! The pipeline is: simulate or load a [`fields::Field1D`] / [`fields::Field2D`],
//! build a grouped block system of candidate terms with [`features`], fit
//! group-sparse models with [`solvers`], and pick the best model from a
//! hyperparameter sweep with [`select`].

pub mod differentiate;
pub mod error;
pub mod features;
pub mod fields;
mod linalg;
pub mod select;
pub mod simulate;
pub mod solvers;

pub use differentiate::{DiffMethod, Sampling};
pub use error::{Error, Result};
pub use features::{Axis, BlockSystem, Deriv, LibrarySpec, TermDescriptor};
pub use fields::{Field1D, Field2D, Grid1D, Grid2D, NoiseSpec, Region, SampledSet};
pub use select::{Method, SweepResult};
pub use solvers::{GlassoParams, ParametricModel, SgtrParams};

// SPDX-License-Identifier: Apache-2.0

//! Training engine for physics-informed networks with dynamic mesh-based
//! importance sampling of the residual collocation points.

pub mod ad;
pub mod error;
pub mod mesh;
pub mod metrics;
pub mod mlp;
pub mod pde;
pub mod reference;
pub mod sampler;
pub mod trainer;

pub use error::{Error, Result};
pub use mlp::MlpParams;

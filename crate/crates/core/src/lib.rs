//! Causal-graph-informed forecasting of multivariate time-series panels, with
//! similarity-based transfer for panels whose attributes lack history.
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches the
//! filesystem, threads or a command line lives in the `cdf-cold` companion
//! crate.
//!
//! Module map:
//!
//! | module       | contents                                                   |
//! |--------------|------------------------------------------------------------|
//! | [`data`]       | attribute schema, panels with observation masks, fleets   |
//! | [`preprocess`] | trailing rolling median, differencing, z-score, pipeline  |
//! | [`causal`]     | VAR fit, DirectLiNGAM, lagged effects, propagation matrix |
//! | [`nn`]         | dense / LSTM / graph layers with analytic gradients       |
//! | [`model`]      | the forecasting network, windows, training, prediction    |
//! | [`similarity`] | panel features, diagonal GMM, Eros, Manhattan distance    |
//! | [`coldstart`]  | donor ranking and the five cold-start strategies          |
//! | [`synth`]      | synthetic data-center fleets and SVAR panels              |
//! | [`eval`]       | metrics, experiment harness, k sweeps                     |

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod causal;
pub mod coldstart;
pub mod data;
pub mod eval;
pub mod linalg;
pub mod model;
pub mod nn;
pub mod preprocess;
pub mod rng;
pub mod similarity;
pub mod synth;

pub(crate) mod fmath;

pub use data::{AttributeSchema, Fleet, Panel, Role};
pub use linalg::Matrix;

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

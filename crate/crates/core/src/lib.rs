// `!(x > 0.0)` is the NaN-rejecting form throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod gibbs;
pub mod io;
pub mod metrics;
pub mod mrf;
pub mod pca;
pub mod stiefel;
pub mod vmf;

pub use error::{Error, IdxError, Result};

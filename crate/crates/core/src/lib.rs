//! Numerics for q-pushTASEP, periodic geometric last passage percolation and
//! the Meixner ensemble.

pub mod bigfloat;
pub mod concentration;
pub mod error;
pub mod laplace;
pub mod lpp;
pub mod meixner;
pub mod precision;
pub mod pushtasep;
pub mod qspecial;
pub mod qwhittaker;
pub mod real;
pub mod sampling;
pub mod stats;

pub use error::{Error, Result};
pub use precision::{Arithmetic, Certified, PrecisionContext};

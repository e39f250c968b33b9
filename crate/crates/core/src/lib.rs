#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::excessive_precision
)]

pub mod device;
pub mod error;
pub mod grape;
pub mod hamiltonian;
pub mod io;
pub mod lindblad;
pub mod numerics;
pub mod pulse;
pub mod spectral;

pub use error::{Error, Result};

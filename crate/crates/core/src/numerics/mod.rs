//! Small dense linear algebra shared by the rest of the crate.

mod dft;
mod eigen;
mod expm;
mod gls;
mod matrix;
mod simplex;

pub use dft::{dft, dft_real_half, DftMatrix};
pub use eigen::{eig_hermitian, EigenDecomposition, HERMITIAN_TOL};
pub use expm::{expm_general, expm_hermitian, solve};
pub use gls::{gls_solve, GlsFactor, LeastSquares, MAX_DESIGN_CONDITION};
pub use matrix::{ComplexMatrix, RealMatrix, C64, I, ONE, ZERO};
pub use simplex::{nelder_mead, numerical_hessian, spd_inverse, SimplexOptions, SimplexResult};

pub(crate) use eigen::fix_phase;

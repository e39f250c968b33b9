//! Transition frequencies from occupation records, and eigenvalue
//! reconstruction from them.

mod fit;
mod reconstruct;
mod spectrum;

pub use fit::{gls_refine, FitOptions, SpectralResult};
pub use reconstruct::{
    candidate_spectrum, candidates, distinct_gaps, gap_chi2, reconstruct_eigenvalues, Candidate, Degeneracy,
    Reconstruction,
};
pub use spectrum::{find_peaks, hann, noise_floor, power_spectrum, PowerSpectrum};

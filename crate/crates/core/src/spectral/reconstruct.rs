//! Eigenvalues of a 4×4 Hamiltonian with one degenerate pair from the
//! largest gaps of `H'` and `H'³`, where `H' = H + s·I`.
//!
//! With `α = λ₃ − λ₀` and `β = λ₃³ − λ₀³`, `λ₀ = −α/2 ± √(β/3α − α²/12)`.
//! The trace fixes the remaining pair once the degeneracy is placed.

use serde::{Deserialize, Serialize};

use super::fit::SpectralResult;
use crate::error::{invalid, Error, Result};

const DISC_REL_TOL: f64 = 1e-12;
const ORDER_TOL: f64 = 1e-9;
const TIE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneracy {
    /// `λ₁ = λ₀`
    Lower,
    /// `λ₁ = λ₂`
    Middle,
    /// `λ₂ = λ₃`
    Upper,
}

const CASES: [Degeneracy; 3] = [Degeneracy::Lower, Degeneracy::Middle, Degeneracy::Upper];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    #[serde(rename = "lambda_MeV")]
    pub lambda: [f64; 4],
    pub lambda_err: [f64; 4],
    pub case_id: String,
    pub alpha: f64,
    pub beta: f64,
}

/// Sign of the square root and placement of the degenerate pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Candidate {
    pub branch: i8,
    pub case: Degeneracy,
}

impl Candidate {
    pub fn id(&self) -> String {
        let b = if self.branch > 0 { "plus" } else { "minus" };
        let c = match self.case {
            Degeneracy::Lower => "lower",
            Degeneracy::Middle => "middle",
            Degeneracy::Upper => "upper",
        };
        format!("{b}_{c}")
    }
}

pub fn candidates() -> Vec<Candidate> {
    let mut out = Vec::new();
    for branch in [1i8, -1] {
        for case in CASES {
            out.push(Candidate { branch, case });
        }
    }
    out
}

fn discriminant(alpha: f64, beta: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite() && beta.is_finite()) {
        return Err(Error::InconsistentInput(format!(
            "largest gaps must be positive and finite (alpha {alpha}, beta {beta})"
        )));
    }
    let a = beta / (3.0 * alpha);
    let b = alpha * alpha / 12.0;
    let d = a - b;
    if d < 0.0 {
        if d >= -DISC_REL_TOL * (a.abs() + b) {
            return Ok(0.0);
        }
        return Err(Error::InconsistentInput(format!(
            "beta/(3 alpha) - alpha^2/12 = {d:.3e} is negative (alpha {alpha}, beta {beta})"
        )));
    }
    Ok(d)
}

/// Shifted eigenvalues for one candidate, unchecked for ordering.
pub fn candidate_spectrum(alpha: f64, beta: f64, trace: f64, c: Candidate) -> Result<[f64; 4]> {
    let d = discriminant(alpha, beta)?;
    let l0 = -alpha / 2.0 + f64::from(c.branch) * d.sqrt();
    let l3 = l0 + alpha;
    let (l1, l2) = match c.case {
        Degeneracy::Lower => (l0, trace - 2.0 * l0 - l3),
        Degeneracy::Middle => {
            let m = (trace - l0 - l3) / 2.0;
            (m, m)
        }
        Degeneracy::Upper => (trace - l0 - 2.0 * l3, l3),
    };
    Ok([l0, l1, l2, l3])
}

fn is_ordered(l: &[f64; 4], alpha: f64) -> bool {
    let tol = ORDER_TOL * (1.0 + alpha);
    l.windows(2).all(|w| w[1] >= w[0] - tol)
}

/// Distinct positive gaps of a spectrum with one degenerate pair.
pub fn distinct_gaps(l: &[f64; 4]) -> Vec<f64> {
    let mut levels: Vec<f64> = Vec::new();
    let scale = l.iter().map(|v| v.abs()).fold(1.0, f64::max);
    for &v in l {
        if levels.iter().all(|u| (u - v).abs() > 1e-9 * scale) {
            levels.push(v);
        }
    }
    let mut gaps = Vec::new();
    for i in 0..levels.len() {
        for j in i + 1..levels.len() {
            gaps.push((levels[j] - levels[i]).abs());
        }
    }
    gaps.sort_by(f64::total_cmp);
    gaps
}

/// Symmetric nearest-neighbour χ² between predicted and observed gaps.
pub fn gap_chi2(predicted: &[f64], observed: &[f64], errors: &[f64], floor: f64) -> f64 {
    let sig = |i: usize| {
        errors
            .get(i)
            .copied()
            .filter(|e| e.is_finite() && *e > 0.0)
            .unwrap_or(floor)
            .max(floor)
    };
    let mut chi2 = 0.0;
    for (i, o) in observed.iter().enumerate() {
        let best = predicted.iter().map(|p| (o - p).abs()).fold(f64::INFINITY, f64::min);
        chi2 += (best / sig(i)).powi(2);
    }
    for p in predicted {
        let (i, best) = observed
            .iter()
            .enumerate()
            .map(|(i, o)| (i, (o - p).abs()))
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        chi2 += (best / sig(i)).powi(2);
    }
    chi2
}

/// Reconstructs the unshifted eigenvalues of `H` from fits of the `H'` and
/// `H'³` records. `shifted_trace` is `Tr H'`.
pub fn reconstruct_eigenvalues(
    power1: &SpectralResult,
    power3: &SpectralResult,
    trace_shift: f64,
    shifted_trace: f64,
) -> Result<Reconstruction> {
    let Some((alpha, alpha_err)) = power1.max_omega() else {
        return invalid("power-1 fit has no frequencies");
    };
    let Some((beta, beta_err)) = power3.max_omega() else {
        return invalid("power-3 fit has no frequencies");
    };
    if !shifted_trace.is_finite() || !trace_shift.is_finite() {
        return invalid("trace and shift must be finite");
    }
    discriminant(alpha, beta)?;

    let floor = 1e-12 * alpha;
    let mut scored: Vec<(Candidate, [f64; 4], f64)> = Vec::new();
    for c in candidates() {
        let l = candidate_spectrum(alpha, beta, shifted_trace, c)?;
        if !is_ordered(&l, alpha) {
            continue;
        }
        let chi2 = gap_chi2(&distinct_gaps(&l), &power1.omega, &power1.omega_err, floor);
        scored.push((c, l, chi2));
    }
    if scored.is_empty() {
        return Err(Error::SelectionFailure(format!(
            "no ordered candidate spectrum for alpha {alpha}, beta {beta}, trace {shifted_trace}"
        )));
    }
    let best = scored.iter().map(|s| s.2).fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return Err(Error::SelectionFailure("candidate scores are not finite".into()));
    }
    // first within tolerance of the minimum, in enumeration order
    let (cand, lambda, _) = *scored
        .iter()
        .find(|s| s.2 <= best + TIE_TOL * (1.0 + best))
        .expect("minimum exists");

    let h_a = 1e-6 * alpha;
    let h_b = 1e-6 * beta.abs().max(alpha);
    let diff = |da: f64, db: f64| candidate_spectrum(alpha + da, beta + db, shifted_trace, cand);
    let (ap, am) = (diff(h_a, 0.0), diff(-h_a, 0.0));
    let (bp, bm) = (diff(0.0, h_b), diff(0.0, -h_b));
    let mut lambda_err = [f64::NAN; 4];
    if let (Ok(ap), Ok(am), Ok(bp), Ok(bm)) = (ap, am, bp, bm) {
        for k in 0..4 {
            let dl_da = (ap[k] - am[k]) / (2.0 * h_a);
            let dl_db = (bp[k] - bm[k]) / (2.0 * h_b);
            lambda_err[k] = ((dl_da * alpha_err).powi(2) + (dl_db * beta_err).powi(2)).sqrt();
        }
    }
    Ok(Reconstruction {
        lambda: lambda.map(|v| v - trace_shift),
        lambda_err,
        case_id: cand.id(),
        alpha,
        beta,
    })
}

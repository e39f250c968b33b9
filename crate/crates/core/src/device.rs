//! Multi-level transmon in the rotating frame of its 0→1 transition.
//!
//! Time is in μs and angular frequency in rad/μs, so a linear frequency in
//! MHz enters the Hamiltonian multiplied by 2π.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numerics::{ComplexMatrix, C64, ZERO};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransmonSpec {
    pub n_levels: usize,
    /// Anharmonicity (MHz).
    pub anharmonicity: f64,
    /// Relaxation time (μs). `f64::INFINITY` disables relaxation.
    pub t1: f64,
    /// Pure dephasing time (μs). `f64::INFINITY` disables dephasing.
    pub t_phi: f64,
}

impl Default for TransmonSpec {
    fn default() -> Self {
        Self {
            n_levels: 6,
            anharmonicity: 200.0,
            t1: 30.0,
            t_phi: 50.0,
        }
    }
}

impl TransmonSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_levels < 4 {
            return invalid(format!("transmon needs at least 4 levels, got {}", self.n_levels));
        }
        if !(self.anharmonicity > 0.0 && self.anharmonicity.is_finite()) {
            return invalid(format!("anharmonicity must be positive, got {}", self.anharmonicity));
        }
        if !(self.t1 > 0.0) || !(self.t_phi > 0.0) {
            return invalid("T1 and T_phi must be positive");
        }
        Ok(())
    }

    /// Same device without relaxation or dephasing.
    pub fn noiseless(&self) -> Self {
        Self {
            t1: f64::INFINITY,
            t_phi: f64::INFINITY,
            ..*self
        }
    }
}

/// A collapse operator `c`, entering the dissipator as `D[c]`.
#[derive(Clone, Debug)]
pub struct CollapseOperator {
    pub label: &'static str,
    /// Rate (1/μs) already folded into `op` as its square root.
    pub rate: f64,
    pub op: ComplexMatrix,
}

#[derive(Clone, Debug)]
pub struct DeviceOperators {
    pub drift: ComplexMatrix,
    pub quad_i: ComplexMatrix,
    pub quad_q: ComplexMatrix,
    pub collapse: Vec<CollapseOperator>,
}

impl DeviceOperators {
    pub fn new(spec: &TransmonSpec) -> Result<Self> {
        spec.validate()?;
        let (quad_i, quad_q) = control_operators(spec.n_levels);
        Ok(Self {
            drift: drift_hamiltonian(spec),
            quad_i,
            quad_q,
            collapse: collapse_operators(spec),
        })
    }

    pub fn dim(&self) -> usize {
        self.drift.rows()
    }

    /// `drift + 2π (ε_I quad_I + ε_Q quad_Q)` with amplitudes in MHz.
    pub fn hamiltonian(&self, eps_i: f64, eps_q: f64) -> ComplexMatrix {
        let mut h = self.drift.clone();
        h.axpy(C64::new(2.0 * PI * eps_i, 0.0), &self.quad_i);
        h.axpy(C64::new(2.0 * PI * eps_q, 0.0), &self.quad_q);
        h
    }
}

/// Truncated annihilation operator.
pub fn annihilation(n: usize) -> ComplexMatrix {
    let mut a = ComplexMatrix::zeros(n, n);
    for k in 1..n {
        a[(k - 1, k)] = C64::new((k as f64).sqrt(), 0.0);
    }
    a
}

/// `−π α n(n−1)` on the diagonal (rad/μs).
pub fn drift_hamiltonian(spec: &TransmonSpec) -> ComplexMatrix {
    let d: Vec<f64> = (0..spec.n_levels)
        .map(|n| -PI * spec.anharmonicity * (n * n.saturating_sub(1)) as f64)
        .collect();
    ComplexMatrix::from_real_diag(&d)
}

/// `(a + a†, i(a† − a))`
pub fn control_operators(n: usize) -> (ComplexMatrix, ComplexMatrix) {
    let a = annihilation(n);
    let ad = a.adjoint();
    let quad_i = &a + &ad;
    let quad_q = (&ad - &a).scale(C64::new(0.0, 1.0));
    (quad_i, quad_q)
}

/// `√(1/T1) a` and `√(1/Tφ) a†a`; infinite times drop the operator.
pub fn collapse_operators(spec: &TransmonSpec) -> Vec<CollapseOperator> {
    let n = spec.n_levels;
    let a = annihilation(n);
    let num = ComplexMatrix::from_real_diag(&(0..n).map(|k| k as f64).collect::<Vec<_>>());
    let mut out = Vec::new();
    if spec.t1.is_finite() {
        let rate = 1.0 / spec.t1;
        out.push(CollapseOperator {
            label: "relaxation",
            rate,
            op: a.scale_real(rate.sqrt()),
        });
    }
    if spec.t_phi.is_finite() {
        let rate = 1.0 / spec.t_phi;
        out.push(CollapseOperator {
            label: "dephasing",
            rate,
            op: num.scale_real(rate.sqrt()),
        });
    }
    out
}

/// Places `u4` in the top-left block of an `n×n` matrix and returns it with
/// the projector onto levels 0..3.
pub fn embed_target(u4: &ComplexMatrix, n: usize) -> Result<(ComplexMatrix, ComplexMatrix)> {
    if u4.rows() != 4 || u4.cols() != 4 {
        return invalid("target must be 4x4");
    }
    if n < 4 {
        return invalid(format!("device has {n} levels, need at least 4"));
    }
    let err = u4.unitarity_error();
    if err > 1e-8 {
        return invalid(format!("target is not unitary (deviation {err:.3e})"));
    }
    let target = ComplexMatrix::from_fn(n, n, |i, j| if i < 4 && j < 4 { u4[(i, j)] } else { ZERO });
    let projector = projector(n);
    Ok((target, projector))
}

pub fn projector(n: usize) -> ComplexMatrix {
    ComplexMatrix::from_real_diag(&(0..n).map(|k| if k < 4 { 1.0 } else { 0.0 }).collect::<Vec<_>>())
}

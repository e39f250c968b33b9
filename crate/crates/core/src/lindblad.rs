//! Markovian open-system evolution.
//!
//! Density matrices are vectorised row-major, `vec(ρ)[i n + j] = ρ_ij`, so
//! `vec(A ρ B) = (A ⊗ Bᵀ) vec(ρ)`.

use serde::{Deserialize, Serialize};

use crate::device::{annihilation, DeviceOperators};
use crate::error::{invalid, Error, Result};
use crate::hamiltonian::SpinHamiltonian;
use crate::io::{check_header, fmt_f64, format_error, parse_f64};
use crate::numerics::{eig_hermitian, expm_general, ComplexMatrix, C64, ONE, ZERO};
use crate::pulse::ControlPulse;

pub const RECORD_CSV_COLUMNS: [&str; 6] = ["step", "time_MeV_inv", "P0", "P1", "P2", "P3"];

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    /// `|k⟩⟨k|` on `n` levels.
    pub fn basis_state(n: usize, k: usize) -> Result<Self> {
        if k >= n {
            return invalid(format!("level {k} outside {n}-level space"));
        }
        let mut m = ComplexMatrix::zeros(n, n);
        m[(k, k)] = ONE;
        Ok(Self { matrix: m })
    }

    /// `|ψ⟩⟨ψ|` for a normalised `ψ`.
    pub fn pure(psi: &[C64]) -> Result<Self> {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-9 {
            return invalid(format!("state vector has norm² {norm}"));
        }
        let n = psi.len();
        Ok(Self {
            matrix: ComplexMatrix::from_fn(n, n, |i, j| psi[i] * psi[j].conj()),
        })
    }

    pub fn from_matrix(matrix: ComplexMatrix) -> Result<Self> {
        let rho = Self { matrix };
        rho.validate()?;
        Ok(rho)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.matrix.is_square() {
            return invalid("density matrix must be square");
        }
        if self.hermiticity_error() > 1e-10 {
            return invalid("density matrix is not Hermitian");
        }
        if (self.trace() - 1.0).abs() > 1e-9 {
            return invalid(format!("density matrix has trace {}", self.trace()));
        }
        if self.min_eigenvalue()? < -1e-9 {
            return invalid("density matrix is not positive semidefinite");
        }
        Ok(())
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn trace_error(&self) -> f64 {
        let t = self.matrix.trace();
        (t - ONE).norm()
    }

    pub fn hermiticity_error(&self) -> f64 {
        self.matrix.hermiticity_error()
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let m = &self.matrix;
        let h = ComplexMatrix::from_fn(m.rows(), m.cols(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)].conj()));
        Ok(eig_hermitian(&h)?.values[0])
    }

    /// Diagonal entries on levels 0..3.
    pub fn computational_populations(&self) -> [f64; 4] {
        let mut p = [0.0; 4];
        for (k, v) in p.iter_mut().enumerate() {
            *v = self.matrix[(k, k)].re;
        }
        p
    }

    fn to_vec(&self) -> Vec<C64> {
        self.matrix.as_slice().to_vec()
    }

    fn from_vec(n: usize, v: Vec<C64>) -> Self {
        Self {
            matrix: ComplexMatrix::from_row_major(n, n, v).expect("square"),
        }
    }
}

/// `L = −i(H⊗1 − 1⊗Hᵀ) + Σ_c [c⊗c̄ − ½ c†c⊗1 − ½ 1⊗(c†c)ᵀ]`
pub fn lindbladian(h: &ComplexMatrix, collapse: &[ComplexMatrix]) -> ComplexMatrix {
    let n = h.rows();
    let id = ComplexMatrix::identity(n);
    let mi = C64::new(0.0, -1.0);
    let mut l = h.kron(&id).scale(mi);
    l.axpy(-mi, &id.kron(&h.transpose()));
    for c in collapse {
        let cdc = c.adjoint().matmul(c);
        l.axpy(ONE, &c.kron(&c.conj()));
        l.axpy(C64::new(-0.5, 0.0), &cdc.kron(&id));
        l.axpy(C64::new(-0.5, 0.0), &id.kron(&cdc.transpose()));
    }
    l
}

/// Right-hand side `−i[H, ρ] + Σ_c (c ρ c† − ½{c†c, ρ})`.
fn lindblad_rhs(
    rho: &ComplexMatrix,
    h: &ComplexMatrix,
    collapse: &[ComplexMatrix],
    damp: &ComplexMatrix,
) -> ComplexMatrix {
    let mi = C64::new(0.0, -1.0);
    let mut out = h.commutator(rho).scale(mi);
    for c in collapse {
        out = &out + &c.matmul(rho).matmul_adjoint(c);
    }
    let anti = &damp.matmul(rho) + &rho.matmul(damp);
    out.axpy(C64::new(-0.5, 0.0), &anti);
    out
}

/// Controls for the adaptive RK4 step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepControl {
    /// Accepted max-abs difference between one full step and two half steps.
    pub tolerance: f64,
    /// Maximum bisection depth before giving up.
    pub max_depth: u32,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            max_depth: 16,
        }
    }
}

fn rk4(
    rho: &ComplexMatrix,
    h: &ComplexMatrix,
    collapse: &[ComplexMatrix],
    damp: &ComplexMatrix,
    dt: f64,
) -> ComplexMatrix {
    let f = |r: &ComplexMatrix| lindblad_rhs(r, h, collapse, damp);
    let half = C64::new(0.5 * dt, 0.0);
    let k1 = f(rho);
    let mut y = rho.clone();
    y.axpy(half, &k1);
    let k2 = f(&y);
    let mut y = rho.clone();
    y.axpy(half, &k2);
    let k3 = f(&y);
    let mut y = rho.clone();
    y.axpy(C64::new(dt, 0.0), &k3);
    let k4 = f(&y);
    let mut out = rho.clone();
    let w = dt / 6.0;
    out.axpy(C64::new(w, 0.0), &k1);
    out.axpy(C64::new(2.0 * w, 0.0), &k2);
    out.axpy(C64::new(2.0 * w, 0.0), &k3);
    out.axpy(C64::new(w, 0.0), &k4);
    out
}

/// One RK4 step with a half-step error probe; on probe failure the interval
/// is bisected, up to `control.max_depth` levels.
pub fn lindblad_step(
    rho: &DensityMatrix,
    h_of_t: impl Fn(f64) -> ComplexMatrix,
    collapse: &[ComplexMatrix],
    t: f64,
    dt: f64,
    control: StepControl,
) -> Result<DensityMatrix> {
    if !(dt > 0.0 && dt.is_finite()) {
        return invalid(format!("step must be positive, got {dt}"));
    }
    let damp = collapse
        .iter()
        .fold(ComplexMatrix::zeros(rho.dim(), rho.dim()), |acc, c| {
            &acc + &c.adjoint().matmul(c)
        });
    let out = advance(rho.matrix(), &h_of_t, collapse, &damp, t, dt, control, 0)?;
    Ok(DensityMatrix { matrix: out })
}

#[allow(clippy::too_many_arguments)]
fn advance(
    rho: &ComplexMatrix,
    h_of_t: &impl Fn(f64) -> ComplexMatrix,
    collapse: &[ComplexMatrix],
    damp: &ComplexMatrix,
    t: f64,
    dt: f64,
    control: StepControl,
    depth: u32,
) -> Result<ComplexMatrix> {
    // piecewise-constant drive: sample at the midpoint of the interval
    let h = h_of_t(t + 0.5 * dt);
    let full = rk4(rho, &h, collapse, damp, dt);
    let h1 = h_of_t(t + 0.25 * dt);
    let h2 = h_of_t(t + 0.75 * dt);
    let mid = rk4(rho, &h1, collapse, damp, 0.5 * dt);
    let two = rk4(&mid, &h2, collapse, damp, 0.5 * dt);
    let err = full.max_abs_diff(&two);
    if err <= control.tolerance {
        // Richardson: two + (two − full)/15
        let mut out = two.clone();
        out.axpy(C64::new(1.0 / 15.0, 0.0), &(&two - &full));
        return Ok(out);
    }
    if depth >= control.max_depth {
        return Err(Error::Integration(format!(
            "step of {dt:.3e} rejected after {depth} refinements (error probe {err:.3e})"
        )));
    }
    let first = advance(rho, h_of_t, collapse, damp, t, 0.5 * dt, control, depth + 1)?;
    advance(
        &first,
        h_of_t,
        collapse,
        damp,
        t + 0.5 * dt,
        0.5 * dt,
        control,
        depth + 1,
    )
}

/// How the gate's piecewise-constant generators are integrated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateIntegrator {
    /// Product of exact slice exponentials of the Lindbladian.
    #[default]
    Exact,
    /// Adaptive RK4 at the sample grid.
    Rk4,
}

/// Linear map of one full pulse acting on `vec(ρ)`.
#[derive(Clone, Debug)]
pub struct GateChannel {
    dim: usize,
    superop: ComplexMatrix,
}

impl GateChannel {
    pub fn build(pulse: &ControlPulse, ops: &DeviceOperators, integrator: GateIntegrator) -> Result<Self> {
        use rayon::prelude::*;
        pulse.validate()?;
        let n = ops.dim();
        let cs: Vec<ComplexMatrix> = ops.collapse.iter().map(|c| c.op.clone()).collect();
        let dt = pulse.dt_us();
        let superop = match integrator {
            GateIntegrator::Exact => {
                let slices: Vec<ComplexMatrix> = (0..pulse.len())
                    .into_par_iter()
                    .map(|k| {
                        let l = lindbladian(&ops.hamiltonian(pulse.eps_i[k], pulse.eps_q[k]), &cs);
                        expm_general(&l.scale_real(dt))
                    })
                    .collect::<Result<_>>()?;
                slices
                    .iter()
                    .fold(ComplexMatrix::identity(n * n), |acc, s| s.matmul(&acc))
            }
            GateIntegrator::Rk4 => {
                // propagate each basis operator |i⟩⟨j| through the pulse
                let cols: Vec<Vec<C64>> = (0..n * n)
                    .into_par_iter()
                    .map(|col| {
                        let mut rho = ComplexMatrix::zeros(n, n);
                        rho[(col / n, col % n)] = ONE;
                        let damp = cs
                            .iter()
                            .fold(ComplexMatrix::zeros(n, n), |acc, c| &acc + &c.adjoint().matmul(c));
                        for k in 0..pulse.len() {
                            let h = ops.hamiltonian(pulse.eps_i[k], pulse.eps_q[k]);
                            rho = advance(&rho, &|_| h.clone(), &cs, &damp, 0.0, dt, StepControl::default(), 0)?;
                        }
                        Ok(rho.into_vec())
                    })
                    .collect::<Result<_>>()?;
                let mut s = ComplexMatrix::zeros(n * n, n * n);
                for (j, c) in cols.iter().enumerate() {
                    s.set_column(j, c);
                }
                s
            }
        };
        Ok(Self { dim: n, superop })
    }

    /// Channel of `exp(L t)` for a constant generator.
    pub fn from_generator(h: &ComplexMatrix, collapse: &[ComplexMatrix], t: f64) -> Result<Self> {
        let n = h.rows();
        let l = lindbladian(h, collapse);
        Ok(Self {
            dim: n,
            superop: expm_general(&l.scale_real(t))?,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn superoperator(&self) -> &ComplexMatrix {
        &self.superop
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.dim() != self.dim {
            return invalid(format!("state has {} levels, channel {}", rho.dim(), self.dim));
        }
        Ok(DensityMatrix::from_vec(self.dim, self.superop.mul_vec(&rho.to_vec())))
    }

    /// Applies the channel `n_steps` times, calling `observe` on every state including the first.
    pub fn iterate(
        &self,
        rho0: &DensityMatrix,
        n_steps: usize,
        mut observe: impl FnMut(usize, &DensityMatrix),
    ) -> Result<DensityMatrix> {
        let mut rho = rho0.clone();
        observe(0, &rho);
        for k in 1..=n_steps {
            rho = self.apply(&rho)?;
            if !rho
                .matrix
                .as_slice()
                .iter()
                .all(|z| z.re.is_finite() && z.im.is_finite())
            {
                return Err(Error::Integration(format!("non-finite state after {k} gates")));
            }
            observe(k, &rho);
        }
        Ok(rho)
    }
}

pub fn evolve_gate(rho0: &DensityMatrix, pulse: &ControlPulse, ops: &DeviceOperators) -> Result<DensityMatrix> {
    GateChannel::build(pulse, ops, GateIntegrator::Exact)?.apply(rho0)
}

/// Per-gate occupation probabilities of levels 0..3, rows `k = 0..=n_steps`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupationRecord {
    /// Nuclear time per step (MeV⁻¹).
    pub dt: f64,
    pub probabilities: Vec<[f64; 4]>,
}

impl OccupationRecord {
    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn series(&self, m: usize) -> Vec<f64> {
        self.probabilities.iter().map(|p| p[m]).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = RECORD_CSV_COLUMNS.join(",");
        out.push('\n');
        for (k, p) in self.probabilities.iter().enumerate() {
            out.push_str(&format!(
                "{k},{},{},{},{},{}\n",
                fmt_f64(k as f64 * self.dt),
                fmt_f64(p[0]),
                fmt_f64(p[1]),
                fmt_f64(p[2]),
                fmt_f64(p[3])
            ));
        }
        out
    }

    pub fn from_csv(text: &str, path: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        check_header(&mut rdr, &RECORD_CSV_COLUMNS, path)?;
        let mut probabilities = Vec::new();
        let mut times = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 6 {
                return Err(format_error(path, format!("row {row}: expected 6 fields")));
            }
            let step: usize = rec[0]
                .trim()
                .parse()
                .map_err(|_| format_error(path, format!("row {row}: bad step index")))?;
            if step != row {
                return Err(format_error(path, format!("row {row}: step {step} out of order")));
            }
            times.push(parse_f64(&rec[1], path, row)?);
            let mut p = [0.0; 4];
            for m in 0..4 {
                p[m] = parse_f64(&rec[2 + m], path, row)?;
            }
            probabilities.push(p);
        }
        if probabilities.is_empty() {
            return Err(format_error(path, "record has no rows"));
        }
        // time column holds k·dt as written, so row 1 carries dt exactly
        let dt = if times.len() > 1 { times[1] } else { 0.0 };
        for (k, t) in times.iter().enumerate() {
            if (t - k as f64 * dt).abs() > 1e-9 * (k as f64 * dt).abs().max(1e-300) {
                return Err(format_error(path, format!("row {k}: time column is not uniform")));
            }
        }
        Ok(Self { dt, probabilities })
    }
}

/// Repeated applications of one gate, starting from Fock `initial_level`.
pub fn repeated_gate_trajectory(
    rho0: &DensityMatrix,
    pulse: &ControlPulse,
    ops: &DeviceOperators,
    n_steps: usize,
    nuclear_dt: f64,
) -> Result<OccupationRecord> {
    let channel = GateChannel::build(pulse, ops, GateIntegrator::Exact)?;
    record_from_channel(&channel, rho0, n_steps, nuclear_dt)
}

pub fn record_from_channel(
    channel: &GateChannel,
    rho0: &DensityMatrix,
    n_steps: usize,
    nuclear_dt: f64,
) -> Result<OccupationRecord> {
    let mut probabilities = Vec::with_capacity(n_steps + 1);
    channel.iterate(rho0, n_steps, |_, rho| {
        probabilities.push(rho.computational_populations())
    })?;
    Ok(OccupationRecord {
        dt: nuclear_dt,
        probabilities,
    })
}

/// Device noise mapped onto nuclear time: one gate of wall time `tau_pulse`
/// realises one nuclear step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseScaling {
    /// μs
    pub tau_pulse: f64,
    /// μs
    pub t1: f64,
    /// μs
    pub t_phi: f64,
}

impl NoiseScaling {
    /// `(Γ₁, Γ_φ)` in MeV for nuclear step `dt`.
    pub fn rates(&self, dt: f64) -> (f64, f64) {
        let g = |t: f64| if t.is_finite() { self.tau_pulse / t / dt } else { 0.0 };
        (g(self.t1), g(self.t_phi))
    }
}

/// Lindblad evolution on the 4-level spin space with device-equivalent noise.
pub fn reference_spin_trajectory(
    h: &SpinHamiltonian,
    dt: f64,
    n_steps: usize,
    noise: Option<NoiseScaling>,
    initial_level: usize,
) -> Result<OccupationRecord> {
    if !(dt > 0.0 && dt.is_finite()) {
        return invalid(format!("nuclear time step must be positive, got {dt}"));
    }
    let mut collapse = Vec::new();
    if let Some(ns) = noise {
        let (g1, gphi) = ns.rates(dt);
        let a = annihilation(4);
        let num = ComplexMatrix::from_real_diag(&[0.0, 1.0, 2.0, 3.0]);
        if g1 > 0.0 {
            collapse.push(a.scale_real(g1.sqrt()));
        }
        if gphi > 0.0 {
            collapse.push(num.scale_real(gphi.sqrt()));
        }
    }
    let channel = GateChannel::from_generator(h.matrix(), &collapse, dt)?;
    let rho0 = DensityMatrix::basis_state(4, initial_level)?;
    record_from_channel(&channel, &rho0, n_steps, dt)
}

/// Closed-form noiseless probabilities `|Σ_j ⟨m|φ_j⟩⟨φ_j|ψ₀⟩ e^{−iλ_j^p t}|²`.
pub fn ideal_record(
    h: &SpinHamiltonian,
    dt: f64,
    power: u32,
    n_steps: usize,
    initial_level: usize,
) -> Result<OccupationRecord> {
    if initial_level >= 4 {
        return invalid("initial level must be in 0..4");
    }
    let e = eig_hermitian(h.matrix())?;
    let v = &e.vectors;
    let mut probabilities = Vec::with_capacity(n_steps + 1);
    for k in 0..=n_steps {
        let t = k as f64 * dt;
        let mut p = [0.0; 4];
        for (m, pm) in p.iter_mut().enumerate() {
            let amp: C64 = (0..4)
                .map(|j| {
                    v[(m, j)] * v[(initial_level, j)].conj() * C64::from_polar(1.0, -e.values[j].powi(power as i32) * t)
                })
                .fold(ZERO, |a, b| a + b);
            *pm = amp.norm_sqr();
        }
        probabilities.push(p);
    }
    Ok(OccupationRecord { dt, probabilities })
}

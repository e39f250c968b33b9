//! Spin-dependent two-neutron interaction at leading chiral order.
//!
//! Energies are in MeV, lengths in fm, nuclear time in MeV⁻¹ (ħ = 1).
//! The two-spin basis is ordered (↓↓, ↓↑, ↑↓, ↑↑), which is also the Fock
//! ordering 0..3 on the device.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{eig_hermitian, fix_phase, ComplexMatrix, C64, ONE, ZERO};

/// Γ(3/4)
pub const GAMMA_3_4: f64 = 1.225_416_702_465_177_6;

/// Calibrated scalar coupling (MeV) reproducing the reference eigenvalue gaps.
pub const CALIBRATED_A: f64 = -0.355_40;
/// Calibrated tensor strength (MeV) reproducing the reference eigenvalue gaps.
pub const CALIBRATED_B: f64 = -0.986_75;

/// Basis labels in matrix order.
pub const SPIN_BASIS: [&str; 4] = ["dd", "du", "ud", "uu"];

/// Chiral-EFT constants. `c1` has no conventional value and must be supplied.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EftParams {
    /// Spin-dependent contact coupling (MeV fm³).
    pub c1: f64,
    /// Regulator length (fm).
    pub r0: f64,
    /// Pion mass (MeV).
    pub m_pi: f64,
    /// Axial-vector coupling.
    pub g_a: f64,
    /// Pion decay constant (MeV).
    pub f_pi: f64,
    /// ħc (MeV fm).
    pub hbar_c: f64,
}

impl EftParams {
    /// Conventional constants with the given contact coupling.
    pub fn with_c1(c1: f64) -> Self {
        Self {
            c1,
            r0: 1.0,
            m_pi: 138.04,
            g_a: 1.29,
            f_pi: 92.4,
            hbar_c: 197.327,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("r0", self.r0),
            ("m_pi", self.m_pi),
            ("f_pi", self.f_pi),
            ("hbar_c", self.hbar_c),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return invalid(format!("{name} must be positive, got {v}"));
            }
        }
        if !self.c1.is_finite() || !self.g_a.is_finite() {
            return invalid("c1 and g_a must be finite");
        }
        Ok(())
    }
}

/// Relative position of the two neutrons.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    /// Separation (fm).
    pub r: f64,
    /// Cosine of the polar angle of r̂.
    pub x: f64,
    /// Azimuth of r̂ (rad).
    pub phi: f64,
}

impl Geometry {
    pub fn new(r: f64, x: f64, phi: f64) -> Result<Self> {
        let g = Self { r, x, phi };
        g.validate()?;
        Ok(g)
    }

    /// r = 3.5 fm, x = 0.382, φ = 2.71°.
    pub fn reference() -> Self {
        Self {
            r: 3.5,
            x: 0.382,
            phi: 2.71f64.to_radians(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r.is_finite()) {
            return invalid(format!("separation must be positive, got {}", self.r));
        }
        if !(self.x.abs() <= 1.0) {
            return invalid(format!("direction cosine must lie in [-1, 1], got {}", self.x));
        }
        if !self.phi.is_finite() {
            return invalid("azimuth must be finite");
        }
        Ok(())
    }

    pub fn unit_vector(&self) -> [f64; 3] {
        let s = (1.0 - self.x * self.x).max(0.0).sqrt();
        [s * self.phi.cos(), s * self.phi.sin(), self.x]
    }
}

/// Scalar (`a`) and tensor (`b`) strengths of the spin interaction, MeV.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinCoefficients {
    pub a: f64,
    pub b: f64,
}

impl SpinCoefficients {
    pub fn calibrated() -> Self {
        Self {
            a: CALIBRATED_A,
            b: CALIBRATED_B,
        }
    }

    /// Closed-form spectrum `{a+2b, a+2b, -3a, a-4b}` sorted ascending.
    pub fn closed_form_spectrum(&self) -> [f64; 4] {
        let mut v = [
            -3.0 * self.a,
            self.a - 4.0 * self.b,
            self.a + 2.0 * self.b,
            self.a + 2.0 * self.b,
        ];
        v.sort_by(f64::total_cmp);
        v
    }
}

/// A 4×4 Hermitian spin Hamiltonian (MeV) in the (↓↓, ↓↑, ↑↓, ↑↑) basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinHamiltonian {
    matrix: ComplexMatrix,
}

impl SpinHamiltonian {
    pub fn from_matrix(matrix: ComplexMatrix) -> Result<Self> {
        if matrix.rows() != 4 || matrix.cols() != 4 {
            return invalid("spin Hamiltonian must be 4x4");
        }
        if !matrix.is_hermitian(1e-12 * matrix.max_abs().max(1.0)) {
            return invalid("spin Hamiltonian must be Hermitian");
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    /// `H + shift·1`
    pub fn shifted(&self, shift: f64) -> Self {
        let mut m = self.matrix.clone();
        for i in 0..4 {
            m[(i, i)] += shift;
        }
        Self { matrix: m }
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }
}

/// Regulated contact density `exp(-r/R0) / (π Γ(3/4) R0³)` in fm⁻³.
pub fn regulated_delta(r: f64, r0: f64) -> Result<f64> {
    if !(r0 > 0.0) {
        return invalid(format!("regulator length must be positive, got {r0}"));
    }
    if !(r >= 0.0) {
        return invalid(format!("separation must be non-negative, got {r}"));
    }
    Ok((-r / r0).exp() / (PI * GAMMA_3_4 * r0.powi(3)))
}

fn pion_argument(r: f64, p: &EftParams) -> Result<f64> {
    if r == 0.0 {
        return Err(Error::Singularity(
            "one-pion exchange radial functions diverge at r = 0".into(),
        ));
    }
    if !(r > 0.0) {
        return invalid(format!("separation must be positive, got {r}"));
    }
    Ok(p.m_pi * r / p.hbar_c)
}

/// Yukawa radial function of one-pion exchange (MeV).
pub fn yukawa_y(r: f64, p: &EftParams) -> Result<f64> {
    let x = pion_argument(r, p)?;
    let coupling = p.g_a / (2.0 * p.f_pi);
    Ok(p.m_pi.powi(3) / (12.0 * PI) * coupling * coupling * (-x).exp() / x)
}

/// Tensor radial function of one-pion exchange (MeV).
pub fn tensor_t(r: f64, p: &EftParams) -> Result<f64> {
    let x = pion_argument(r, p)?;
    Ok((1.0 + 3.0 / x + 3.0 / (x * x)) * yukawa_y(r, p)?)
}

fn short_range_cutoff(r: f64, r0: f64) -> f64 {
    1.0 - (-(r / r0).powi(4)).exp()
}

/// `a` and `b` at the given separation; independent of direction.
pub fn spin_coefficients(g: &Geometry, p: &EftParams) -> Result<SpinCoefficients> {
    g.validate()?;
    p.validate()?;
    let cut = short_range_cutoff(g.r, p.r0);
    let a = p.c1 * regulated_delta(g.r, p.r0)? - yukawa_y(g.r, p)? * cut;
    let b = tensor_t(g.r, p)? * cut;
    Ok(SpinCoefficients { a, b })
}

/// Pauli matrices in the single-spin basis (↓, ↑).
pub fn pauli() -> [ComplexMatrix; 3] {
    let i = C64::new(0.0, 1.0);
    let sx = ComplexMatrix::from_row_major(2, 2, vec![ZERO, ONE, ONE, ZERO]).unwrap();
    let sy = ComplexMatrix::from_row_major(2, 2, vec![ZERO, i, -i, ZERO]).unwrap();
    let sz = ComplexMatrix::from_real_diag(&[-1.0, 1.0]);
    [sx, sy, sz]
}

/// `a σ¹·σ² + b Σ_αβ σ¹_α (3 r̂_α r̂_β − δ_αβ) σ²_β`
pub fn build_vsd(coeffs: &SpinCoefficients, g: &Geometry) -> SpinHamiltonian {
    let s = pauli();
    let n = g.unit_vector();
    let mut m = ComplexMatrix::zeros(4, 4);
    for alpha in 0..3 {
        for beta in 0..3 {
            let delta = if alpha == beta { 1.0 } else { 0.0 };
            let w = coeffs.a * delta + coeffs.b * (3.0 * n[alpha] * n[beta] - delta);
            if w != 0.0 {
                m.axpy(C64::new(w, 0.0), &s[alpha].kron(&s[beta]));
            }
        }
    }
    // exact Hermitian symmetrisation of rounding noise
    let m = ComplexMatrix::from_fn(4, 4, |i, j| 0.5 * (m[(i, j)] + m[(j, i)].conj()));
    SpinHamiltonian { matrix: m }
}

/// Spectrum and eigenvectors with a reproducible basis inside degenerate subspaces.
#[derive(Clone, Debug)]
pub struct SpinEigensystem {
    pub values: [f64; 4],
    /// Columns are eigenvectors.
    pub vectors: ComplexMatrix,
}

impl SpinEigensystem {
    pub fn vector(&self, k: usize) -> Vec<C64> {
        self.vectors.column(k)
    }
}

/// Diagonalises `h` and checks the result against the closed-form spectrum of `coeffs`.
pub fn exact_eigensystem(h: &SpinHamiltonian, coeffs: &SpinCoefficients) -> Result<SpinEigensystem> {
    let eig = eig_hermitian(h.matrix())?;
    let expected = coeffs.closed_form_spectrum();
    let scale = 1.0 + coeffs.a.abs() + coeffs.b.abs();
    for (got, want) in eig.values.iter().zip(expected) {
        if (got - want).abs() > 1e-10 * scale {
            return Err(Error::InternalConsistency(format!(
                "numerical spectrum {:?} differs from closed form {:?}",
                eig.values, expected
            )));
        }
    }
    let values = [eig.values[0], eig.values[1], eig.values[2], eig.values[3]];
    let vectors = canonical_degenerate_basis(&values, &eig.vectors, 1e-8 * scale);
    Ok(SpinEigensystem { values, vectors })
}

/// Replaces each degenerate block by the Gram-Schmidt orthonormalisation of the
/// projections of basis vectors e₀, e₁, … onto that block.
fn canonical_degenerate_basis(values: &[f64], vectors: &ComplexMatrix, tol: f64) -> ComplexMatrix {
    let n = values.len();
    let mut out = vectors.clone();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (values[end] - values[start]).abs() <= tol {
            end += 1;
        }
        if end - start > 1 {
            let cols: Vec<Vec<C64>> = (start..end).map(|k| vectors.column(k)).collect();
            let mut basis: Vec<Vec<C64>> = Vec::new();
            for e in 0..n {
                if basis.len() == cols.len() {
                    break;
                }
                // projection of e onto the block
                let mut w = vec![ZERO; n];
                for c in &cols {
                    let coef = c[e].conj();
                    for (wi, ci) in w.iter_mut().zip(c) {
                        *wi += coef * ci;
                    }
                }
                for b in &basis {
                    let dot: C64 = b.iter().zip(&w).map(|(x, y)| x.conj() * y).sum();
                    for (wi, bi) in w.iter_mut().zip(b) {
                        *wi -= dot * bi;
                    }
                }
                let norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if norm > 1e-6 {
                    for wi in w.iter_mut() {
                        *wi /= norm;
                    }
                    fix_phase(&mut w);
                    basis.push(w);
                }
            }
            for (k, b) in basis.iter().enumerate() {
                out.set_column(start + k, b);
            }
        }
        start = end;
    }
    out
}

/// Closed-form amplitudes ⟨↓↑|φ⟩ for the eigenstates ordered
/// (−3a, a−4b, (a+2b)₁, (a+2b)₂).
pub fn initial_overlaps(g: &Geometry) -> Result<[C64; 4]> {
    if !(g.x.abs() <= 1.0) {
        return invalid(format!("direction cosine must lie in [-1, 1], got {}", g.x));
    }
    let x = g.x;
    let s2 = std::f64::consts::FRAC_1_SQRT_2;
    let ph = C64::from_polar(1.0, g.phi);
    let ratio = ((1.0 - x * x) / (1.0 + x * x)).sqrt();
    Ok([
        C64::new(-s2, 0.0),
        -ph * (x * s2),
        C64::new(s2 * ratio, 0.0),
        ph * (x * s2 * ratio),
    ])
}

/// `exp(-i H^power dt)` with `power` ∈ {1, 3}.
pub fn target_propagator(h: &SpinHamiltonian, dt: f64, power: u32) -> Result<ComplexMatrix> {
    if power != 1 && power != 3 {
        return invalid(format!("unsupported Hamiltonian power {power}; expected 1 or 3"));
    }
    if !(dt >= 0.0 && dt.is_finite()) {
        return invalid(format!("time step must be non-negative, got {dt}"));
    }
    let eig = eig_hermitian(h.matrix())?;
    Ok(eig.map_spectrum(|l| C64::from_polar(1.0, -l.powi(power as i32) * dt)))
}

/// `H^power` sharing eigenvectors with `H`.
pub fn hamiltonian_power(h: &SpinHamiltonian, power: u32) -> Result<SpinHamiltonian> {
    if power == 0 {
        return invalid("power must be positive");
    }
    let eig = eig_hermitian(h.matrix())?;
    let m = eig.map_spectrum(|l| C64::new(l.powi(power as i32), 0.0));
    let m = ComplexMatrix::from_fn(4, 4, |i, j| 0.5 * (m[(i, j)] + m[(j, i)].conj()));
    Ok(SpinHamiltonian { matrix: m })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> EftParams {
        EftParams::with_c1(-5.0)
    }

    #[test]
    fn regulated_delta_at_origin() {
        // 1/(π Γ(3/4)), 50-digit evaluation
        let v = regulated_delta(0.0, 1.0).unwrap();
        assert!((v - 0.259_756_444_924_771_2).abs() < 1e-15);
    }

    #[test]
    fn regulated_delta_decay_and_scaling() {
        assert!(regulated_delta(800.0, 1.0).unwrap() < 1e-300);
        for r in [0.0, 0.4, 1.3, 2.9] {
            let lhs = regulated_delta(2.0 * r, 2.0).unwrap();
            let rhs = regulated_delta(r, 1.0).unwrap() / 8.0;
            assert!((lhs - rhs).abs() < 1e-15);
        }
        assert!(regulated_delta(1.0, 0.0).is_err());
        assert!(regulated_delta(1.0, -1.0).is_err());
    }

    #[test]
    fn yukawa_matches_extended_precision() {
        // mpmath, 50 digits, m_π = 138.04, g_a = 1.29, f_π = 92.4, ħc = 197.327
        let cases = [
            (0.5, 6.851_182_543_268_795_9, 233.613_667_014_564_22),
            (1.0, 2.414_517_203_724_014_2, 27.570_917_506_196_523),
            (3.5, 0.120_015_147_622_526_92, 0.327_126_979_601_515_73),
        ];
        let p = params();
        for (r, y, t) in cases {
            let yv = yukawa_y(r, &p).unwrap();
            let tv = tensor_t(r, &p).unwrap();
            assert!(((yv - y) / y).abs() < 1e-12, "Y({r}) = {yv}");
            assert!(((tv - t) / t).abs() < 1e-12, "T({r}) = {tv}");
        }
    }

    #[test]
    fn yukawa_doubling_identity() {
        let p = params();
        for r in [0.3, 1.0, 2.2] {
            let x = p.m_pi * r / p.hbar_c;
            let ratio = yukawa_y(2.0 * r, &p).unwrap() / yukawa_y(r, &p).unwrap();
            assert!((ratio - (-x).exp() / 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn yukawa_monotone_and_singular_at_origin() {
        let p = params();
        let mut prev = f64::INFINITY;
        for k in 1..=1000 {
            let y = yukawa_y(k as f64 * 0.01, &p).unwrap();
            assert!(y < prev);
            prev = y;
        }
        assert!(matches!(yukawa_y(0.0, &p), Err(Error::Singularity(_))));
        assert!(matches!(tensor_t(0.0, &p), Err(Error::Singularity(_))));
    }

    #[test]
    fn tensor_ratio_limits() {
        let p = params();
        let r1 = p.hbar_c / p.m_pi;
        let ratio = tensor_t(r1, &p).unwrap() / yukawa_y(r1, &p).unwrap();
        assert!((ratio - 7.0).abs() < 1e-12);
        let far = tensor_t(500.0, &p).unwrap() / yukawa_y(500.0, &p).unwrap();
        assert!((far - 1.0).abs() < 1e-2);
        for r in [0.1, 1.0, 5.0, 20.0] {
            assert!(tensor_t(r, &p).unwrap() > yukawa_y(r, &p).unwrap());
        }
    }

    #[test]
    fn spin_coefficients_regimes() {
        let mut p = params();
        p.c1 = 0.0;
        let g = Geometry::new(6.0, 0.2, 0.3).unwrap();
        let c = spin_coefficients(&g, &p).unwrap();
        assert!((c.a + yukawa_y(6.0, &p).unwrap()).abs() < 1e-15);
        assert!((c.b - tensor_t(6.0, &p).unwrap()).abs() < 1e-15);

        let p = params();
        let g = Geometry::new(1e-8, 0.2, 0.3).unwrap();
        let c = spin_coefficients(&g, &p).unwrap();
        assert!((c.a - p.c1 * regulated_delta(0.0, p.r0).unwrap()).abs() < 1e-3);
        assert!(c.b.abs() < 1e-6);
    }

    #[test]
    fn spin_coefficients_extended_precision() {
        // mpmath with C1 = -5 MeV fm³, R0 = 1 fm
        let p = params();
        let cases = [
            (3.5, -0.159_234_972_441_585_3, 0.327_126_979_601_515_73),
            (1.2, -1.920_621_945_174_181_4, 13.506_309_958_441_899),
        ];
        for (r, a, b) in cases {
            let c = spin_coefficients(&Geometry::new(r, 0.1, 0.0).unwrap(), &p).unwrap();
            assert!(((c.a - a) / a).abs() < 1e-12);
            assert!(((c.b - b) / b).abs() < 1e-12);
        }
    }

    #[test]
    fn calibrated_coefficients_reproduce_reference_spectrum() {
        let s = SpinCoefficients::calibrated().closed_form_spectrum();
        let expect = [-2.329, -2.329, 1.066, 3.592];
        for (l, e) in s.iter().zip(expect) {
            assert!((l - e).abs() < 1e-3, "{s:?}");
        }
    }

    #[test]
    fn pure_exchange_spectrum() {
        let g = Geometry::reference();
        let h = build_vsd(&SpinCoefficients { a: 1.0, b: 0.0 }, &g);
        let e = eig_hermitian(h.matrix()).unwrap();
        for (l, x) in e.values.iter().zip([-3.0, 1.0, 1.0, 1.0]) {
            assert!((l - x).abs() < 1e-12);
        }
    }

    #[test]
    fn z_axis_decouples_blocks() {
        let g = Geometry::new(3.5, 1.0, 0.0).unwrap();
        let h = build_vsd(&SpinCoefficients { a: 0.7, b: -1.1 }, &g);
        let m = h.matrix();
        for (i, j) in [(0, 1), (0, 2), (3, 1), (3, 2)] {
            assert!(m[(i, j)].norm() < 1e-15 && m[(j, i)].norm() < 1e-15);
        }
    }

    #[test]
    fn vsd_is_hermitian_traceless_and_time_reversal_even() {
        let g = Geometry::reference();
        let h = build_vsd(&SpinCoefficients::calibrated(), &g);
        assert!(h.matrix().hermiticity_error() < 1e-12);
        assert!(h.trace().abs() < 1e-10);
        // (σy⊗σy) H* (σy⊗σy) = H, and [H, SWAP] = 0
        let [_, sy, _] = pauli();
        let yy = sy.kron(&sy);
        let tr = yy.matmul(&h.matrix().conj()).matmul(&yy);
        assert!(tr.max_abs_diff(h.matrix()) < 1e-12);
        let mut swap = ComplexMatrix::zeros(4, 4);
        for (i, j) in [(0, 0), (1, 2), (2, 1), (3, 3)] {
            swap[(i, j)] = ONE;
        }
        assert!(h.matrix().commutator(&swap).max_abs() < 1e-12);
    }

    #[test]
    fn exact_eigensystem_cases() {
        let g = Geometry::reference();
        let c = SpinCoefficients { a: 1.0, b: 0.0 };
        let e = exact_eigensystem(&build_vsd(&c, &g), &c).unwrap();
        assert_eq!(e.values.map(|v| (v * 1e9).round() / 1e9), [-3.0, 1.0, 1.0, 1.0]);

        let c = SpinCoefficients { a: 0.0, b: 1.0 };
        let e = exact_eigensystem(&build_vsd(&c, &g), &c).unwrap();
        for (l, x) in e.values.iter().zip([-4.0, 0.0, 2.0, 2.0]) {
            assert!((l - x).abs() < 1e-10);
        }
        assert!(e.vectors.unitarity_error() < 1e-10);
    }

    #[test]
    fn exact_eigensystem_flags_mismatch() {
        let g = Geometry::reference();
        let h = build_vsd(&SpinCoefficients { a: 1.0, b: 0.5 }, &g);
        let wrong = SpinCoefficients { a: 1.0, b: 0.6 };
        assert!(matches!(
            exact_eigensystem(&h, &wrong),
            Err(Error::InternalConsistency(_))
        ));
    }

    #[test]
    fn degenerate_basis_is_deterministic() {
        let g = Geometry::reference();
        let c = SpinCoefficients::calibrated();
        let h = build_vsd(&c, &g);
        let e1 = exact_eigensystem(&h, &c).unwrap();
        // same operator assembled through a different rounding path
        let h2 = SpinHamiltonian::from_matrix(h.shifted(0.25).shifted(-0.25).matrix().clone()).unwrap();
        let e2 = exact_eigensystem(&h2, &c).unwrap();
        assert!(e1.vectors.max_abs_diff(&e2.vectors) < 1e-9);
    }

    #[test]
    fn overlaps_closed_form() {
        let o = initial_overlaps(&Geometry::new(1.0, 0.0, 0.4).unwrap()).unwrap();
        let s2 = std::f64::consts::FRAC_1_SQRT_2;
        let expect = [-s2, 0.0, s2, 0.0];
        for (z, e) in o.iter().zip(expect) {
            assert!((z - C64::new(e, 0.0)).norm() < 1e-15);
        }
        let o = initial_overlaps(&Geometry::reference()).unwrap();
        let p: Vec<f64> = o.iter().map(|z| z.norm_sqr()).collect();
        let expect = [0.5000, 0.0730, 0.3727, 0.0544];
        for (a, b) in p.iter().zip(expect) {
            assert!((a - b).abs() < 1e-4, "{p:?}");
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let bad = Geometry {
            r: 1.0,
            x: 1.2,
            phi: 0.0,
        };
        assert!(initial_overlaps(&bad).is_err());
    }

    #[test]
    fn overlaps_agree_with_numeric_eigenvectors() {
        let g = Geometry::reference();
        let c = SpinCoefficients::calibrated();
        let e = exact_eigensystem(&build_vsd(&c, &g), &c).unwrap();
        let closed = initial_overlaps(&g).unwrap();
        // weights per distinct eigenvalue; the split inside the degenerate pair is basis dependent
        let w = |k: usize| e.vectors[(1, k)].norm_sqr();
        let degenerate = w(0) + w(1);
        let singlet = w(2); // -3a = 1.066
        let tensor = w(3); // a - 4b = 3.592
        assert!((singlet - closed[0].norm_sqr()).abs() < 1e-10);
        assert!((tensor - closed[1].norm_sqr()).abs() < 1e-10);
        assert!((degenerate - closed[2].norm_sqr() - closed[3].norm_sqr()).abs() < 1e-10);
    }

    #[test]
    fn propagator_basics() {
        let g = Geometry::reference();
        let c = SpinCoefficients::calibrated();
        let h = build_vsd(&c, &g);
        let u0 = target_propagator(&h, 0.0, 1).unwrap();
        assert!(u0.max_abs_diff(&ComplexMatrix::identity(4)) < 1e-14);
        assert!(target_propagator(&h, 0.3, 2).is_err());
        assert!(target_propagator(&h, -0.3, 1).is_err());

        let e = exact_eigensystem(&h, &c).unwrap();
        for power in [1u32, 3] {
            let u = target_propagator(&h, 0.3, power).unwrap();
            assert!(u.unitarity_error() < 1e-10);
            for k in 0..4 {
                let v = e.vector(k);
                let uv = u.mul_vec(&v);
                let phase = C64::from_polar(1.0, -e.values[k].powi(power as i32) * 0.3);
                for (a, b) in uv.iter().zip(&v) {
                    assert!((a - phase * b).norm() < 1e-10);
                }
            }
        }
    }
}

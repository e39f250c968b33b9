//! Hermitian eigensolver (cyclic complex Jacobi).
//!
//! Matrices here are at most a few dozen rows, so Jacobi's quadratic
//! convergence and orthogonality to machine precision are worth the extra
//! flops over a tridiagonal QR.

use super::matrix::{ComplexMatrix, C64, ZERO};
use crate::error::{invalid, Error, Result};

/// Relative tolerance used to accept a matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

const MAX_SWEEPS: usize = 64;

#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, in the order of `values`.
    pub vectors: ComplexMatrix,
}

impl EigenDecomposition {
    /// `V diag(f(λ)) V†`
    pub fn map_spectrum(&self, f: impl Fn(f64) -> C64) -> ComplexMatrix {
        let n = self.values.len();
        let v = &self.vectors;
        let fl: Vec<C64> = self.values.iter().map(|&l| f(l)).collect();
        ComplexMatrix::from_fn(n, n, |i, j| (0..n).map(|k| v[(i, k)] * fl[k] * v[(j, k)].conj()).sum())
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.map_spectrum(|l| C64::new(l, 0.0))
    }
}

pub(crate) fn check_hermitian(h: &ComplexMatrix) -> Result<()> {
    if !h.is_square() {
        return invalid(format!("expected square matrix, got {}x{}", h.rows(), h.cols()));
    }
    let scale = h.max_abs().max(1.0);
    let err = h.hermiticity_error();
    if err > HERMITIAN_TOL * scale {
        return invalid(format!("matrix is not Hermitian (deviation {err:.3e})"));
    }
    Ok(())
}

/// Eigen-decomposition of a Hermitian matrix.
///
/// Each eigenvector's phase is fixed so that its largest-magnitude entry
/// (lowest index on ties) is real and positive.
pub fn eig_hermitian(h: &ComplexMatrix) -> Result<EigenDecomposition> {
    check_hermitian(h)?;
    let n = h.rows();
    let mut a = ComplexMatrix::from_fn(n, n, |i, j| 0.5 * (h[(i, j)] + h[(j, i)].conj()));
    let mut v = ComplexMatrix::identity(n);

    let total: f64 = a.frobenius_norm().powi(2);
    let mut converged = n < 2 || total == 0.0;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].norm_sqr())
            .sum();
        if off <= 1e-32 * total {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }
    if !converged {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].norm_sqr())
            .sum();
        if off > 1e-24 * total {
            return Err(Error::NumericalFailure {
                what: "Jacobi eigensolver did not converge".into(),
                condition: (off / total).sqrt(),
            });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values: Vec<f64> = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut vectors = ComplexMatrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        let mut vec = v.column(src);
        fix_phase(&mut vec);
        vectors.set_column(col, &vec);
    }
    Ok(EigenDecomposition { values, vectors })
}

fn rotate(a: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    let r = apq.norm();
    if r == 0.0 {
        return;
    }
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    if r < 1e-300 || r <= f64::EPSILON * 1e-3 * (app.abs() + aqq.abs()) {
        a[(p, q)] = ZERO;
        a[(q, p)] = ZERO;
        return;
    }
    let phase = apq / r;
    let theta = (aqq - app) / (2.0 * r);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    // J = diag(1, conj(phase)) * [[c, s], [-s, c]]
    let jpp = C64::new(c, 0.0);
    let jpq = C64::new(s, 0.0);
    let jqp = -s * phase.conj();
    let jqq = c * phase.conj();

    let n = a.rows();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * jpp + akq * jqp;
        a[(k, q)] = akp * jpq + akq * jqq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = jpp.conj() * apk + jqp.conj() * aqk;
        a[(q, k)] = jpq.conj() * apk + jqq.conj() * aqk;
    }
    a[(p, q)] = ZERO;
    a[(q, p)] = ZERO;
    a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
    a[(q, q)] = C64::new(a[(q, q)].re, 0.0);

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * jpp + vkq * jqp;
        v[(k, q)] = vkp * jpq + vkq * jqq;
    }
}

pub(crate) fn fix_phase(vec: &mut [C64]) {
    let max = vec.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let pivot = vec.iter().position(|z| z.norm() >= max * (1.0 - 1e-9)).unwrap_or(0);
    let ph = vec[pivot].conj() / vec[pivot].norm();
    for z in vec.iter_mut() {
        *z *= ph;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pauli_z_x_identity() -> ComplexMatrix {
        let z = ComplexMatrix::from_real_diag(&[1.0, -1.0]);
        z.kron(&ComplexMatrix::identity(2))
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let e = eig_hermitian(&ComplexMatrix::identity(5)).unwrap();
        assert!(e.values.iter().all(|&l| (l - 1.0).abs() < 1e-14));
    }

    #[test]
    fn pauli_z_tensor_identity_spectrum() {
        let e = eig_hermitian(&pauli_z_x_identity()).unwrap();
        let expect = [-1.0, -1.0, 1.0, 1.0];
        for (l, x) in e.values.iter().zip(expect) {
            assert!((l - x).abs() < 1e-14);
        }
    }

    #[test]
    fn complex_two_by_two() {
        // [[1, i], [-i, 1]] has eigenvalues 0 and 2
        let h = ComplexMatrix::from_fn(2, 2, |i, j| match (i, j) {
            (0, 1) => C64::new(0.0, 1.0),
            (1, 0) => C64::new(0.0, -1.0),
            _ => C64::new(1.0, 0.0),
        });
        let e = eig_hermitian(&h).unwrap();
        assert!((e.values[0]).abs() < 1e-14);
        assert!((e.values[1] - 2.0).abs() < 1e-14);
        assert!(e.reconstruct().max_abs_diff(&h) < 1e-14);
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert!(matches!(eig_hermitian(&m), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn phase_convention_makes_pivot_real_positive() {
        let h = ComplexMatrix::from_fn(3, 3, |i, j| C64::new((i + j) as f64, i as f64 - j as f64));
        let e = eig_hermitian(&h).unwrap();
        for k in 0..3 {
            let col = e.vectors.column(k);
            let max = col.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let pivot = col.iter().find(|z| z.norm() >= max * (1.0 - 1e-9)).unwrap();
            assert!(pivot.im.abs() < 1e-14 && pivot.re > 0.0);
        }
    }
}

//! Matrix exponentials.
//!
//! Hermitian generators go through the eigenbasis; everything else (Lindblad
//! superoperators in particular) uses scaling and squaring with a diagonal
//! Padé approximant, following Higham's 2005 degree selection.

use super::eigen::{check_hermitian, eig_hermitian};
use super::matrix::{ComplexMatrix, C64, ONE, ZERO};
use crate::error::{invalid, Error, Result};

/// `exp(-i * scale * h)` for Hermitian `h`.
pub fn expm_hermitian(h: &ComplexMatrix, scale: f64) -> Result<ComplexMatrix> {
    check_hermitian(h)?;
    let e = eig_hermitian(h)?;
    Ok(e.map_spectrum(|l| C64::from_polar(1.0, -scale * l)))
}

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152e0;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// `exp(m)` for a general square complex matrix.
pub fn expm_general(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !m.is_square() {
        return invalid(format!(
            "matrix exponential needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        ));
    }
    let n = m.rows();
    let norm = m.one_norm();
    if !norm.is_finite() {
        return invalid("matrix contains non-finite entries");
    }
    if norm == 0.0 {
        return Ok(ComplexMatrix::identity(n));
    }

    for (deg, theta) in THETA {
        if norm <= theta {
            let coeffs: &[f64] = match deg {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            let (u, v) = pade_low(m, coeffs);
            return pade_quotient(&u, &v);
        }
    }

    let s = ((norm / THETA_13).log2().ceil()).max(0.0) as i32;
    let a = m.scale_real(0.5f64.powi(s));
    let (u, v) = pade_13(&a);
    let mut x = pade_quotient(&u, &v)?;
    for _ in 0..s {
        x = x.matmul(&x);
    }
    Ok(x)
}

fn pade_low(a: &ComplexMatrix, b: &[f64]) -> (ComplexMatrix, ComplexMatrix) {
    let n = a.rows();
    let a2 = a.matmul(a);
    let m = b.len() - 1;
    // powers of a^2
    let mut pows = vec![ComplexMatrix::identity(n), a2.clone()];
    while pows.len() <= m / 2 {
        let next = pows.last().unwrap().matmul(&a2);
        pows.push(next);
    }
    let mut u_inner = ComplexMatrix::zeros(n, n);
    let mut v = ComplexMatrix::zeros(n, n);
    for (k, p) in pows.iter().enumerate() {
        if 2 * k < m {
            u_inner.axpy(C64::new(b[2 * k + 1], 0.0), p);
        }
        if 2 * k <= m {
            v.axpy(C64::new(b[2 * k], 0.0), p);
        }
    }
    (a.matmul(&u_inner), v)
}

fn pade_13(a: &ComplexMatrix) -> (ComplexMatrix, ComplexMatrix) {
    let n = a.rows();
    let b = &B13;
    let id = ComplexMatrix::identity(n);
    let a2 = a.matmul(a);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);
    let c = |x: f64| C64::new(x, 0.0);

    let mut w1 = a6.scale_real(b[13]);
    w1.axpy(c(b[11]), &a4);
    w1.axpy(c(b[9]), &a2);
    let mut u_inner = a6.matmul(&w1);
    u_inner.axpy(c(b[7]), &a6);
    u_inner.axpy(c(b[5]), &a4);
    u_inner.axpy(c(b[3]), &a2);
    u_inner.axpy(c(b[1]), &id);
    let u = a.matmul(&u_inner);

    let mut z1 = a6.scale_real(b[12]);
    z1.axpy(c(b[10]), &a4);
    z1.axpy(c(b[8]), &a2);
    let mut v = a6.matmul(&z1);
    v.axpy(c(b[6]), &a6);
    v.axpy(c(b[4]), &a4);
    v.axpy(c(b[2]), &a2);
    v.axpy(c(b[0]), &id);
    (u, v)
}

fn pade_quotient(u: &ComplexMatrix, v: &ComplexMatrix) -> Result<ComplexMatrix> {
    let p = v + u;
    let q = v - u;
    solve(&q, &p)
}

/// Solves `a x = b` by LU with partial pivoting.
pub fn solve(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !a.is_square() || a.rows() != b.rows() {
        return invalid("solve: incompatible shapes");
    }
    let n = a.rows();
    let m = b.cols();
    let mut lu = a.clone();
    let mut x = b.clone();
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    let mut min_pivot = f64::INFINITY;
    for k in 0..n {
        let (piv, pmag) = (k..n)
            .map(|i| (i, lu[(i, k)].norm()))
            .fold((k, -1.0), |acc, c| if c.1 > acc.1 { c } else { acc });
        min_pivot = min_pivot.min(pmag);
        if pmag <= 1e-300 || pmag <= f64::EPSILON * 1e-4 * scale {
            return Err(Error::NumericalFailure {
                what: "singular matrix in LU solve".into(),
                condition: scale / pmag.max(f64::MIN_POSITIVE),
            });
        }
        if piv != k {
            for j in 0..n {
                let t = lu[(k, j)];
                lu[(k, j)] = lu[(piv, j)];
                lu[(piv, j)] = t;
            }
            for j in 0..m {
                let t = x[(k, j)];
                x[(k, j)] = x[(piv, j)];
                x[(piv, j)] = t;
            }
        }
        let inv = ONE / lu[(k, k)];
        for i in k + 1..n {
            let f = lu[(i, k)] * inv;
            if f == ZERO {
                continue;
            }
            lu[(i, k)] = f;
            for j in k + 1..n {
                let t = lu[(k, j)];
                lu[(i, j)] -= f * t;
            }
            for j in 0..m {
                let t = x[(k, j)];
                x[(i, j)] -= f * t;
            }
        }
    }
    for k in (0..n).rev() {
        let inv = ONE / lu[(k, k)];
        for j in 0..m {
            let mut s = x[(k, j)];
            for c in k + 1..n {
                s -= lu[(k, c)] * x[(c, j)];
            }
            x[(k, j)] = s * inv;
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn zero_generator_gives_identity() {
        let z = ComplexMatrix::zeros(4, 4);
        assert_eq!(expm_general(&z).unwrap(), ComplexMatrix::identity(4));
        let u = expm_hermitian(&z, 1.7).unwrap();
        assert!(u.max_abs_diff(&ComplexMatrix::identity(4)) < 1e-15);
    }

    #[test]
    fn diagonal_hermitian_case() {
        let h = ComplexMatrix::from_real_diag(&[1.0, 2.0, 3.0, 4.0]);
        let u = expm_hermitian(&h, PI).unwrap();
        for k in 0..4 {
            let expect = C64::from_polar(1.0, -PI * (k + 1) as f64);
            assert!((u[(k, k)] - expect).norm() < 1e-14);
        }
    }

    #[test]
    fn nilpotent_truncates_exactly() {
        let mut m = ComplexMatrix::zeros(3, 3);
        m[(0, 2)] = C64::new(0.7, -0.3);
        let mut expect = ComplexMatrix::identity(3);
        expect[(0, 2)] = m[(0, 2)];
        assert!(expm_general(&m).unwrap().max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn large_norm_uses_squaring() {
        // exp(diag(10, -10 + 3i))
        let m = ComplexMatrix::from_diag(&[C64::new(10.0, 0.0), C64::new(-10.0, 3.0)]);
        let e = expm_general(&m).unwrap();
        let e0 = 10f64.exp();
        assert!((e[(0, 0)].re - e0).abs() / e0 < 1e-13);
        let e1 = C64::new(-10.0, 3.0).exp();
        assert!((e[(1, 1)] - e1).norm() / e1.norm() < 1e-12);
    }

    #[test]
    fn rejects_non_square_and_non_hermitian() {
        assert!(expm_general(&ComplexMatrix::zeros(2, 3)).is_err());
        let m = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert!(matches!(expm_hermitian(&m, 1.0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn solve_detects_singularity() {
        let a = ComplexMatrix::from_real_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        let b = ComplexMatrix::identity(2);
        assert!(matches!(solve(&a, &b), Err(Error::NumericalFailure { .. })));
    }
}

use std::f64::consts::TAU;

use super::matrix::{ComplexMatrix, C64};

/// Unitary DFT matrix, `F[j][k] = exp(-2πi jk/n) / √n`.
#[derive(Clone, Debug)]
pub struct DftMatrix {
    matrix: ComplexMatrix,
}

impl DftMatrix {
    pub fn new(n: usize) -> Self {
        let tw = twiddles(n);
        let norm = 1.0 / (n as f64).sqrt();
        let matrix = ComplexMatrix::from_fn(n, n, |j, k| tw[(j * k) % n] * norm);
        Self { matrix }
    }

    pub fn size(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        self.matrix.mul_vec(x)
    }

    pub fn apply_real(&self, x: &[f64]) -> Vec<C64> {
        let n = self.size();
        assert_eq!(x.len(), n);
        (0..n)
            .map(|j| (0..n).map(|k| self.matrix[(j, k)] * x[k]).sum())
            .collect()
    }
}

fn twiddles(n: usize) -> Vec<C64> {
    (0..n)
        .map(|k| C64::from_polar(1.0, -TAU * k as f64 / n as f64))
        .collect()
}

/// Unitary DFT of `x` without materialising the matrix.
pub fn dft(x: &[C64]) -> Vec<C64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let tw = twiddles(n);
    let norm = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|j| {
            let mut acc = C64::new(0.0, 0.0);
            let mut idx = 0usize;
            for xk in x {
                acc += tw[idx] * xk;
                idx += j;
                if idx >= n {
                    idx -= n;
                }
            }
            acc * norm
        })
        .collect()
}

/// Unitary DFT of a real series, bins `0..=n/2` only.
pub fn dft_real_half(x: &[f64]) -> Vec<C64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let tw = twiddles(n);
    let norm = 1.0 / (n as f64).sqrt();
    (0..=n / 2)
        .map(|j| {
            let mut acc = C64::new(0.0, 0.0);
            let mut idx = 0usize;
            for &xk in x {
                acc += tw[idx] * xk;
                idx += j;
                if idx >= n {
                    idx -= n;
                }
            }
            acc * norm
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dft_matrix_is_unitary() {
        for n in [1, 2, 7, 16] {
            let f = DftMatrix::new(n);
            let err = f
                .matrix()
                .matmul_adjoint(f.matrix())
                .max_abs_diff(&ComplexMatrix::identity(n));
            assert!(err < 1e-10, "n = {n}: {err}");
        }
    }

    #[test]
    fn cosine_on_bin_has_two_bins() {
        let n = 32;
        let f = 5;
        let x: Vec<f64> = (0..n).map(|k| (TAU * f as f64 * k as f64 / n as f64).cos()).collect();
        let y = DftMatrix::new(n).apply_real(&x);
        for (j, z) in y.iter().enumerate() {
            if j == f || j == n - f {
                assert!((z.norm() - (n as f64).sqrt() / 2.0).abs() < 1e-12);
            } else {
                assert!(z.norm() < 1e-12, "bin {j}: {}", z.norm());
            }
        }
    }

    #[test]
    fn fast_paths_agree_with_matrix() {
        let x: Vec<f64> = (0..13).map(|k| ((k * k) as f64 * 0.37).sin()).collect();
        let xc: Vec<C64> = x.iter().map(|&v| C64::new(v, 0.0)).collect();
        let m = DftMatrix::new(13).apply(&xc);
        let d = dft(&xc);
        let h = dft_real_half(&x);
        for j in 0..13 {
            assert!((m[j] - d[j]).norm() < 1e-12);
        }
        for j in 0..=6 {
            assert!((m[j] - h[j]).norm() < 1e-12);
        }
    }
}

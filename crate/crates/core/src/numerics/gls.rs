//! Generalized least squares.
//!
//! The covariance is Cholesky-factored once (`Σ = L Lᵀ`); design and
//! observations are whitened with `L⁻¹` and the resulting ordinary least
//! squares problem is solved by Householder QR.

use super::matrix::RealMatrix;
use crate::error::{invalid, Error, Result};

/// Condition estimate above which the whitened design is treated as rank deficient.
pub const MAX_DESIGN_CONDITION: f64 = 1e12;

/// Cholesky factor of a symmetric positive-definite covariance.
#[derive(Clone, Debug)]
pub struct GlsFactor {
    lower: RealMatrix,
}

impl GlsFactor {
    pub fn new(cov: &RealMatrix) -> Result<Self> {
        let n = cov.rows();
        if cov.cols() != n {
            return invalid("covariance must be square");
        }
        let mut l = RealMatrix::zeros(n, n);
        let mut dmax = 0.0f64;
        for j in 0..n {
            let mut d = cov[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            dmax = dmax.max(cov[(j, j)].abs());
            if !(d > 1e-15 * dmax.max(f64::MIN_POSITIVE)) {
                return Err(Error::NumericalFailure {
                    what: format!("covariance is not positive definite (pivot {j})"),
                    condition: if d > 0.0 { dmax / d } else { f64::INFINITY },
                });
            }
            let ljj = d.sqrt();
            l[(j, j)] = ljj;
            for i in j + 1..n {
                let mut s = cov[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Self { lower: l })
    }

    pub fn dim(&self) -> usize {
        self.lower.rows()
    }

    /// `L⁻¹ y`
    pub fn whiten(&self, y: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x = y.to_vec();
        for i in 0..n {
            let mut s = x[i];
            let row = self.lower.row(i);
            for k in 0..i {
                s -= row[k] * x[k];
            }
            x[i] = s / row[i];
        }
        x
    }

    pub fn whiten_columns(&self, design: &RealMatrix) -> RealMatrix {
        let (n, p) = (design.rows(), design.cols());
        let mut out = RealMatrix::zeros(n, p);
        for j in 0..p {
            let col: Vec<f64> = (0..n).map(|i| design[(i, j)]).collect();
            for (i, v) in self.whiten(&col).into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        out
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.lower[(i, i)].ln()).sum::<f64>()
    }
}

/// Householder QR of a tall matrix, used for least squares.
#[derive(Clone, Debug)]
pub struct LeastSquares {
    qr: RealMatrix,
    betas: Vec<f64>,
    rdiag: Vec<f64>,
    condition: f64,
}

impl LeastSquares {
    pub fn new(a: &RealMatrix) -> Result<Self> {
        let (m, n) = (a.rows(), a.cols());
        if m < n {
            return Err(Error::NumericalFailure {
                what: format!("design has fewer rows ({m}) than columns ({n})"),
                condition: f64::INFINITY,
            });
        }
        let mut qr = a.clone();
        let mut betas = vec![0.0; n];
        let mut rdiag = vec![0.0; n];
        for k in 0..n {
            let norm: f64 = (k..m).map(|i| qr[(i, k)] * qr[(i, k)]).sum::<f64>().sqrt();
            if norm == 0.0 {
                rdiag[k] = 0.0;
                continue;
            }
            let alpha = if qr[(k, k)] > 0.0 { -norm } else { norm };
            qr[(k, k)] -= alpha;
            let vnorm2: f64 = (k..m).map(|i| qr[(i, k)] * qr[(i, k)]).sum();
            let beta = if vnorm2 > 0.0 { 2.0 / vnorm2 } else { 0.0 };
            betas[k] = beta;
            for j in k + 1..n {
                let dot: f64 = (k..m).map(|i| qr[(i, k)] * qr[(i, j)]).sum();
                let f = beta * dot;
                for i in k..m {
                    let t = qr[(i, k)];
                    qr[(i, j)] -= f * t;
                }
            }
            rdiag[k] = alpha;
        }
        let rmax = rdiag.iter().map(|r| r.abs()).fold(0.0, f64::max);
        let rmin = rdiag.iter().map(|r| r.abs()).fold(f64::INFINITY, f64::min);
        let condition = if rmin > 0.0 { rmax / rmin } else { f64::INFINITY };
        if !(condition <= MAX_DESIGN_CONDITION) {
            return Err(Error::NumericalFailure {
                what: "design matrix is rank deficient".into(),
                condition,
            });
        }
        Ok(Self {
            qr,
            betas,
            rdiag,
            condition,
        })
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn solve(&self, y: &[f64]) -> Vec<f64> {
        let (m, n) = (self.qr.rows(), self.qr.cols());
        assert_eq!(y.len(), m);
        let mut b = y.to_vec();
        for k in 0..n {
            let dot: f64 = (k..m).map(|i| self.qr[(i, k)] * b[i]).sum();
            let f = self.betas[k] * dot;
            for i in k..m {
                b[i] -= f * self.qr[(i, k)];
            }
        }
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in k + 1..n {
                s -= self.qr[(k, j)] * x[j];
            }
            x[k] = s / self.rdiag[k];
        }
        x
    }
}

/// `argmin (y − Xd)ᵀ Σ⁻¹ (y − Xd)`.
pub fn gls_solve(design: &RealMatrix, y: &[f64], cov: &RealMatrix) -> Result<Vec<f64>> {
    if design.rows() != y.len() || cov.rows() != y.len() {
        return invalid(format!(
            "gls: design has {} rows, observations {}, covariance {}",
            design.rows(),
            y.len(),
            cov.rows()
        ));
    }
    let factor = GlsFactor::new(cov)?;
    let ls = LeastSquares::new(&factor.whiten_columns(design))?;
    Ok(ls.solve(&factor.whiten(y)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design_poly(n: usize) -> RealMatrix {
        RealMatrix::from_fn(n, 3, |i, j| (i as f64 / n as f64).powi(j as i32))
    }

    #[test]
    fn identity_covariance_reduces_to_ols() {
        let x = design_poly(10);
        let y: Vec<f64> = (0..10).map(|i| (i as f64 * 0.3).sin()).collect();
        let d = gls_solve(&x, &y, &RealMatrix::identity(10)).unwrap();
        // normal equations oracle
        let xt = x.transpose();
        let xtx = xt.matmul(&x);
        let xty = xt.mul_vec(&y);
        let r = xtx.mul_vec(&d);
        for (a, b) in r.iter().zip(&xty) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn identity_design_returns_observations() {
        let y = [1.0, -2.0, 0.5, 3.0];
        let cov = RealMatrix::from_fn(4, 4, |i, j| if i == j { 2.0 } else { 0.3 });
        let d = gls_solve(&RealMatrix::identity(4), &y, &cov).unwrap();
        for (a, b) in d.iter().zip(y) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_covariance_is_reported() {
        let cov = RealMatrix::from_fn(3, 3, |_, _| 1.0);
        let err = gls_solve(&design_poly(3), &[1.0, 2.0, 3.0], &cov).unwrap_err();
        assert!(matches!(err, Error::NumericalFailure { .. }));
    }

    #[test]
    fn rank_deficient_design_is_reported() {
        let x = RealMatrix::from_fn(6, 2, |i, _| i as f64);
        let err = gls_solve(&x, &[0.0; 6], &RealMatrix::identity(6)).unwrap_err();
        match err {
            Error::NumericalFailure { condition, .. } => assert!(condition > MAX_DESIGN_CONDITION),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn log_det_of_diagonal() {
        let cov = RealMatrix::from_fn(3, 3, |i, j| if i == j { (i + 1) as f64 } else { 0.0 });
        let f = GlsFactor::new(&cov).unwrap();
        assert!((f.log_det() - 6f64.ln()).abs() < 1e-14);
    }
}

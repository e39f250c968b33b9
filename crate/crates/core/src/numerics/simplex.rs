//! Derivative-free minimisation and finite-difference curvature.

/// Nelder–Mead settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimplexOptions {
    pub max_evaluations: usize,
    /// Converged once the spread of simplex values falls below `f_tol·(1 + |f_best|)`
    pub f_tol: f64,
    /// and every vertex is within `x_tol` of the best vertex in every coordinate.
    pub x_tol: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_evaluations: 4000,
            f_tol: 1e-12,
            x_tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimises `f` from `x0` with per-coordinate initial simplex offsets `step`.
///
/// Non-finite objective values are treated as +∞.
pub fn nelder_mead(mut f: impl FnMut(&[f64]) -> f64, x0: &[f64], step: &[f64], opts: SimplexOptions) -> SimplexResult {
    let n = x0.len();
    assert_eq!(step.len(), n);
    let mut eval = |x: &[f64], count: &mut usize| {
        *count += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut evaluations = 0;
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    pts.push(x0.to_vec());
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += step[i];
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| eval(p, &mut evaluations)).collect();

    // standard coefficients
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut converged = false;
    while evaluations < opts.max_evaluations {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let best = vals[0];
        let worst = vals[n];
        let spread_x = pts[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if (worst - best).abs() <= opts.f_tol * (1.0 + best.abs()) && spread_x <= opts.x_tol {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; n];
        for p in &pts[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / n as f64;
            }
        }
        let towards =
            |coef: f64| -> Vec<f64> { centroid.iter().zip(&pts[n]).map(|(c, w)| c + coef * (c - w)).collect() };

        let xr = towards(alpha);
        let fr = eval(&xr, &mut evaluations);
        if fr < vals[0] {
            let xe = towards(gamma);
            let fe = eval(&xe, &mut evaluations);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[n] {
            let xc = towards(rho);
            let fc = eval(&xc, &mut evaluations);
            (xc, fc)
        } else {
            let xc = towards(-rho);
            let fc = eval(&xc, &mut evaluations);
            (xc, fc)
        };
        if fc < vals[n].min(fr) {
            pts[n] = xc;
            vals[n] = fc;
            continue;
        }
        // shrink towards the best vertex
        for i in 1..=n {
            let p: Vec<f64> = pts[0].iter().zip(&pts[i]).map(|(b, x)| b + sigma * (x - b)).collect();
            vals[i] = eval(&p, &mut evaluations);
            pts[i] = p;
        }
    }
    let (ib, _) = vals
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    SimplexResult {
        x: pts[ib].clone(),
        f: vals[ib],
        evaluations,
        converged,
    }
}

/// Central-difference Hessian with per-coordinate steps `h`.
pub fn numerical_hessian(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: &[f64]) -> Vec<Vec<f64>> {
    let n = x.len();
    let f0 = f(x);
    let mut out = vec![vec![0.0; n]; n];
    let mut y = x.to_vec();
    for i in 0..n {
        y[i] = x[i] + h[i];
        let fp = f(&y);
        y[i] = x[i] - h[i];
        let fm = f(&y);
        y[i] = x[i];
        out[i][i] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
    }
    for i in 0..n {
        for j in i + 1..n {
            let mut pp = x.to_vec();
            pp[i] += h[i];
            pp[j] += h[j];
            let mut pm = x.to_vec();
            pm[i] += h[i];
            pm[j] -= h[j];
            let mut mp = x.to_vec();
            mp[i] -= h[i];
            mp[j] += h[j];
            let mut mm = x.to_vec();
            mm[i] -= h[i];
            mm[j] -= h[j];
            let v = (f(&pp) - f(&pm) - f(&mp) + f(&mm)) / (4.0 * h[i] * h[j]);
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}

/// Inverse of a small symmetric positive-definite matrix via Cholesky; `None` if not PD.
pub fn spd_inverse(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        if !(d > 0.0) {
            return None;
        }
        l[j][j] = d.sqrt();
        for i in j + 1..n {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = s / l[j][j];
        }
    }
    let mut inv = vec![vec![0.0; n]; n];
    for c in 0..n {
        // solve L L^T x = e_c
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = if i == c { 1.0 } else { 0.0 };
            for k in 0..i {
                s -= l[i][k] * y[k];
            }
            y[i] = s / l[i][i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l[k][i] * inv[k][c];
            }
            inv[i][c] = s / l[i][i];
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let r = nelder_mead(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
            &[0.1, 0.1],
            SimplexOptions {
                max_evaluations: 10_000,
                ..SimplexOptions::default()
            },
        );
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn infinite_region_is_avoided() {
        let r = nelder_mead(
            |x| if x[0] < 0.5 { f64::NAN } else { (x[0] - 2.0).powi(2) },
            &[1.0],
            &[0.3],
            SimplexOptions::default(),
        );
        assert!((r.x[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn hessian_and_inverse_of_quadratic() {
        let a = [[4.0, 1.0], [1.0, 3.0]];
        let f = |x: &[f64]| 0.5 * (a[0][0] * x[0] * x[0] + 2.0 * a[0][1] * x[0] * x[1] + a[1][1] * x[1] * x[1]);
        let h = numerical_hessian(f, &[0.3, -0.2], &[1e-4, 1e-4]);
        for i in 0..2 {
            for j in 0..2 {
                assert!((h[i][j] - a[i][j]).abs() < 1e-6);
            }
        }
        let inv = spd_inverse(&h).unwrap();
        let det = 11.0;
        assert!((inv[0][0] - 3.0 / det).abs() < 1e-6);
        assert!((inv[0][1] + 1.0 / det).abs() < 1e-6);
        assert!(spd_inverse(&[vec![1.0, 2.0], vec![2.0, 1.0]]).is_none());
    }
}

//! Generalized-least-squares refinement of transition frequencies.
//!
//! Each occupation series is modelled as `c + Σ_j (a_j cos ω_j t + b_j sin ω_j t)`
//! with residual covariance
//! `Σ_ab = σ² κ_min(a,b) exp(−(a−b)²/2l²)`, `κ` rising linearly from 1 to `γ`
//! over the record. For fixed `(ω, l, γ)` the amplitudes are the GLS estimate;
//! the hyperparameters are chosen by matching the predicted periodogram
//! `|F g|² + diag(F Σ F†)` to the observed one.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lindblad::OccupationRecord;
use crate::numerics::{
    dft_real_half, nelder_mead, numerical_hessian, spd_inverse, LeastSquares, RealMatrix, SimplexOptions, C64,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    /// Number of simplex starts; the first is unperturbed, the rest jittered.
    pub restarts: usize,
    pub seed: u64,
    pub max_evaluations: usize,
    /// Upper end of the variance-growth factor `γ`.
    pub gamma_max: f64,
    /// Relative diagonal jitter added to the covariance.
    pub nugget: f64,
    /// Width of the Gaussian frequency prior around each initial peak, in bins.
    pub prior_width_bins: f64,
    /// Width of the weak log-normal priors on `σ`, `l` and on the `γ` logit.
    pub hyper_prior_width: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 3,
            seed: 0,
            max_evaluations: 3000,
            gamma_max: 20.0,
            nugget: 1e-8,
            prior_width_bins: 1.0,
            hyper_prior_width: 3.0,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return invalid("fit restarts must be at least 1");
        }
        if self.max_evaluations < 10 {
            return invalid("fit max_evaluations must be at least 10");
        }
        for (name, v) in [
            ("gamma_max", self.gamma_max),
            ("prior_width_bins", self.prior_width_bins),
            ("hyper_prior_width", self.hyper_prior_width),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return invalid(format!("fit {name} must be positive, got {v}"));
            }
        }
        if !(self.nugget >= 0.0 && self.nugget < 1.0) {
            return invalid(format!("fit nugget must be in [0, 1), got {}", self.nugget));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralResult {
    #[serde(rename = "omega_MeV")]
    pub omega: Vec<f64>,
    pub omega_err: Vec<f64>,
    pub sigma: f64,
    pub l: f64,
    pub gamma: f64,
    pub loglik: f64,
}

impl SpectralResult {
    pub fn max_omega(&self) -> Option<(f64, f64)> {
        self.omega
            .iter()
            .zip(&self.omega_err)
            .max_by(|a, b| a.0.total_cmp(b.0))
            .map(|(w, e)| (*w, *e))
    }
}

const NLL_FLOOR_REL: f64 = 1e-16;

struct Objective {
    n: usize,
    nb: usize,
    dt: f64,
    series: [Vec<f64>; 4],
    observed: [Vec<f64>; 4],
    prior_mean: Vec<f64>,
    prior_width: f64,
    hyper_mean: [f64; 3],
    hyper_width: f64,
    gamma_max: f64,
    nugget: f64,
    floor: f64,
}

struct Evaluation {
    data_nll: f64,
    total: f64,
}

/// Lower-banded Cholesky factor of `C = κ_min ⊙ K` (σ factored out).
struct BandedFactor {
    n: usize,
    w: usize,
    l: Vec<f64>,
}

impl BandedFactor {
    fn new(n: usize, kappa: &[f64], k: &[f64], nugget: f64) -> Option<Self> {
        let w = k.len() - 1;
        let stride = w + 1;
        let mut l = vec![0.0; n * stride];
        let at = |i: usize, j: usize| i * stride + (j + w - i);
        for i in 0..n {
            let j0 = i.saturating_sub(w);
            for j in j0..=i {
                let mut s = kappa[j] * k[i - j];
                if i == j {
                    s *= 1.0 + nugget;
                }
                for q in j0.max(j.saturating_sub(w))..j {
                    s -= l[at(i, q)] * l[at(j, q)];
                }
                if i == j {
                    if !(s > 0.0) {
                        return None;
                    }
                    l[at(i, i)] = s.sqrt();
                } else {
                    l[at(i, j)] = s / l[at(j, j)];
                }
            }
        }
        Some(Self { n, w, l })
    }

    fn whiten(&self, y: &[f64]) -> Vec<f64> {
        let stride = self.w + 1;
        let mut x = y.to_vec();
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.w);
            let mut s = x[i];
            for j in j0..i {
                s -= self.l[i * stride + (j + self.w - i)] * x[j];
            }
            x[i] = s / self.l[i * stride + self.w];
        }
        x
    }
}

fn logistic(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

impl Objective {
    fn unpack(&self, theta: &[f64]) -> (Vec<f64>, f64, f64, f64) {
        let j = theta.len() - 3;
        let sigma = theta[j].exp();
        let l = theta[j + 1].exp();
        let gamma = self.gamma_max * logistic(theta[j + 2]);
        (theta[..j].to_vec(), sigma, l, gamma)
    }

    fn kernel(&self, l: f64) -> Vec<f64> {
        // truncate once the Gaussian is below double precision
        let reach = (l * (2.0 * 40.0f64).sqrt()).ceil() as usize;
        let w = reach.min(self.n - 1);
        (0..=w).map(|t| (-(t as f64).powi(2) / (2.0 * l * l)).exp()).collect()
    }

    fn evaluate(&self, theta: &[f64]) -> Option<Evaluation> {
        let (omega, sigma, l, gamma) = self.unpack(theta);
        if !theta.iter().all(|v| v.is_finite()) || !(l > 1e-3 && l < 1e4) {
            return None;
        }
        let n = self.n;
        let kappa: Vec<f64> = (0..n)
            .map(|a| 1.0 + (gamma - 1.0) * a as f64 / (n - 1) as f64)
            .collect();
        let k = self.kernel(l);
        let factor = BandedFactor::new(n, &kappa, &k, self.nugget)?;

        let p = 1 + 2 * omega.len();
        let times: Vec<f64> = (0..n).map(|a| a as f64 * self.dt).collect();
        let design = RealMatrix::from_fn(n, p, |a, c| {
            if c == 0 {
                1.0
            } else {
                let w = omega[(c - 1) / 2];
                if c % 2 == 1 {
                    (w * times[a]).cos()
                } else {
                    (w * times[a]).sin()
                }
            }
        });
        let mut whitened = RealMatrix::zeros(n, p);
        let mut spectra: Vec<Vec<C64>> = Vec::with_capacity(p);
        for c in 0..p {
            let col: Vec<f64> = (0..n).map(|a| design[(a, c)]).collect();
            for (a, v) in factor.whiten(&col).into_iter().enumerate() {
                whitened[(a, c)] = v;
            }
            spectra.push(dft_real_half(&col));
        }
        let ls = LeastSquares::new(&whitened).ok()?;

        // diag(F Σ F†) from lag sums of κ
        let nf = n as f64;
        let slope = (gamma - 1.0) / (nf - 1.0);
        let lag_sum = |tau: usize| {
            let m = (n - tau) as f64;
            m + slope * (m - 1.0) * m / 2.0
        };
        let s2 = sigma * sigma;
        let background: Vec<f64> = (1..=self.nb)
            .map(|j| {
                let mut acc = lag_sum(0) * (1.0 + self.nugget);
                for (tau, kt) in k.iter().enumerate().skip(1) {
                    acc += 2.0 * lag_sum(tau) * kt * (TAU * (j * tau) as f64 / nf).cos();
                }
                s2 * acc / nf
            })
            .collect();

        let mut data_nll = 0.0;
        for m in 0..4 {
            let d = ls.solve(&factor.whiten(&self.series[m]));
            let mut sq = 0.0;
            for j in 1..=self.nb {
                let g: C64 = (0..p).map(|c| spectra[c][j] * d[c]).sum();
                let model = g.norm_sqr() + background[j - 1];
                sq += (self.observed[m][j - 1] - model).powi(2);
            }
            let s = (sq / self.nb as f64).max(self.floor);
            data_nll += 0.5 * self.nb as f64 * s.ln();
        }
        let mut prior = 0.0;
        for (w, w0) in omega.iter().zip(&self.prior_mean) {
            prior += 0.5 * ((w - w0) / self.prior_width).powi(2);
        }
        let jh = omega.len();
        for q in 0..3 {
            prior += 0.5 * ((theta[jh + q] - self.hyper_mean[q]) / self.hyper_width).powi(2);
        }
        Some(Evaluation {
            data_nll,
            total: data_nll + prior,
        })
    }

    fn nll(&self, theta: &[f64]) -> f64 {
        self.evaluate(theta).map_or(f64::INFINITY, |e| e.total)
    }
}

/// Refines `omega_init` (ascending, MeV) against `record`.
pub fn gls_refine(record: &OccupationRecord, omega_init: &[f64], opts: &FitOptions) -> Result<SpectralResult> {
    opts.validate()?;
    let n = record.len();
    if n < 8 {
        return invalid(format!("record has {n} rows, need at least 8"));
    }
    if omega_init.is_empty() {
        return invalid("no initial frequencies to refine");
    }
    if omega_init.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return invalid("initial frequencies must be positive and finite");
    }
    let p = 1 + 2 * omega_init.len();
    if n < p + 2 {
        return invalid(format!(
            "record of {n} rows too short for {} frequencies",
            omega_init.len()
        ));
    }
    let nb = n / 2;
    let bin = TAU / (n as f64 * record.dt);
    let series: [Vec<f64>; 4] = std::array::from_fn(|m| record.series(m));
    let observed: [Vec<f64>; 4] = std::array::from_fn(|m| {
        let s = &series[m];
        let mean = s.iter().sum::<f64>() / n as f64;
        let c: Vec<f64> = s.iter().map(|v| v - mean).collect();
        dft_real_half(&c)[1..=nb].iter().map(|z| z.norm_sqr()).collect()
    });
    let var: f64 = series
        .iter()
        .map(|s| {
            let mean = s.iter().sum::<f64>() / n as f64;
            s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64
        })
        .sum::<f64>()
        / 4.0;
    let scale = var.sqrt().max(1e-12);
    let obs_sq: f64 = observed.iter().flatten().map(|v| v * v).sum::<f64>() / (4 * nb) as f64;

    let sigma0 = 0.1 * scale;
    let hyper_mean = [sigma0.ln(), 0.0, logistic_inverse(1.0 / opts.gamma_max)];
    let obj = Objective {
        n,
        nb,
        dt: record.dt,
        series,
        observed,
        prior_mean: omega_init.to_vec(),
        prior_width: opts.prior_width_bins * bin,
        hyper_mean,
        hyper_width: opts.hyper_prior_width,
        gamma_max: opts.gamma_max,
        nugget: opts.nugget,
        floor: (NLL_FLOOR_REL * obs_sq).max(f64::MIN_POSITIVE),
    };

    let mut x0 = omega_init.to_vec();
    x0.extend_from_slice(&hyper_mean);
    coordinate_scan(&obj, &mut x0, omega_init.len(), bin);
    let mut step: Vec<f64> = vec![0.3 * bin; omega_init.len()];
    step.extend_from_slice(&[1.0, 0.5, 0.5]);

    let sopts = SimplexOptions {
        max_evaluations: opts.max_evaluations,
        f_tol: 1e-10,
        x_tol: 1e-7,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut any_converged = false;
    for r in 0..opts.restarts {
        let mut start = x0.clone();
        if r > 0 {
            for (i, v) in start.iter_mut().enumerate() {
                let amp = if i < omega_init.len() { 0.25 * bin } else { 0.5 };
                *v += rng.gen_range(-amp..amp);
            }
        }
        let res = nelder_mead(|t| obj.nll(t), &start, &step, sopts);
        any_converged |= res.converged;
        if res.f.is_finite() && best.as_ref().is_none_or(|b| res.f < b.1) {
            best = Some((res.x, res.f));
        }
    }
    let Some((bx, bf)) = best else {
        return Err(Error::FitFailure {
            reason: "objective infeasible at every start".into(),
            best_nll: f64::INFINITY,
        });
    };
    let small: Vec<f64> = step.iter().map(|s| 0.05 * s).collect();
    let polish = nelder_mead(|t| obj.nll(t), &bx, &small, sopts);
    let (theta, _) = if polish.f <= bf { (polish.x, polish.f) } else { (bx, bf) };
    if !(any_converged || polish.converged) {
        return Err(Error::FitFailure {
            reason: format!("no simplex run converged within {} evaluations", opts.max_evaluations),
            best_nll: bf,
        });
    }

    let eval = obj.evaluate(&theta).ok_or_else(|| Error::FitFailure {
        reason: "optimum is infeasible".into(),
        best_nll: bf,
    })?;
    let omega_err = frequency_errors(&obj, &theta, omega_init.len(), bin);
    let (mut omega, sigma, l, gamma) = obj.unpack(&theta);
    let mut pairs: Vec<(f64, f64)> = omega.drain(..).zip(omega_err).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let nb_f = nb as f64;
    Ok(SpectralResult {
        omega: pairs.iter().map(|p| p.0).collect(),
        omega_err: pairs.iter().map(|p| p.1).collect(),
        sigma,
        l,
        gamma,
        loglik: -eval.data_nll - 2.0 * nb_f * (1.0 + TAU.ln()),
    })
}

const SCAN_POINTS: usize = 41;
const SCAN_SWEEPS: usize = 2;

/// Grid search of each frequency over ±1 bin with the others held fixed, so
/// the simplex starts inside the right basin.
fn coordinate_scan(obj: &Objective, theta: &mut [f64], j: usize, bin: f64) {
    let mut current = obj.nll(theta);
    for _ in 0..SCAN_SWEEPS {
        for i in 0..j {
            let centre = obj.prior_mean[i];
            for g in 0..SCAN_POINTS {
                let off = (2.0 * g as f64 / (SCAN_POINTS - 1) as f64 - 1.0) * bin;
                let mut trial = theta.to_vec();
                trial[i] = centre + off;
                let v = obj.nll(&trial);
                if v < current {
                    current = v;
                    theta[i] = trial[i];
                }
            }
        }
    }
}

fn logistic_inverse(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn frequency_errors(obj: &Objective, theta: &[f64], j: usize, bin: f64) -> Vec<f64> {
    let mut h: Vec<f64> = vec![1e-3 * bin; j];
    h.extend_from_slice(&[1e-3, 1e-3, 1e-3]);
    let hess = numerical_hessian(|t| obj.nll(t), theta, &h);
    if let Some(inv) = spd_inverse(&hess) {
        return (0..j).map(|i| inv[i][i].sqrt()).collect();
    }
    let block: Vec<Vec<f64>> = (0..j).map(|i| hess[i][..j].to_vec()).collect();
    if let Some(inv) = spd_inverse(&block) {
        return (0..j).map(|i| inv[i][i].sqrt()).collect();
    }
    (0..j)
        .map(|i| {
            if hess[i][i] > 0.0 {
                1.0 / hess[i][i].sqrt()
            } else {
                f64::NAN
            }
        })
        .collect()
}

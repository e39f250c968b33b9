//! Gradient ascent pulse engineering.
//!
//! Slice propagators are formed in each slice's eigenbasis, which also gives
//! the exact derivative of `exp(-iHΔt)` with respect to the amplitudes.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::{embed_target, DeviceOperators, TransmonSpec};
use crate::error::{invalid, Error, Result};
use crate::numerics::{eig_hermitian, ComplexMatrix, EigenDecomposition, C64, ZERO};
use crate::pulse::{
    ControlPulse, FidelityKind, DEFAULT_DURATION_NS, DEFAULT_MAX_AMPLITUDE_MHZ, DEFAULT_SAMPLE_RATE_GS,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Projected L-BFGS with Armijo backtracking.
    #[default]
    Lbfgs,
    /// Projected steepest ascent with Armijo backtracking.
    GradientAscent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrapeOptions {
    pub infidelity_target: f64,
    pub max_iterations: usize,
    pub sample_rate: f64,
    pub duration_ns: f64,
    pub max_amplitude: f64,
    /// Peak of the Gaussian starting envelope (MHz).
    pub initial_peak: f64,
    /// Half-width of uniform per-sample noise added to the start (MHz).
    pub initial_jitter: f64,
    pub rng_seed: u64,
    pub fidelity: FidelityKind,
    pub method: Method,
    pub lbfgs_memory: usize,
}

impl Default for GrapeOptions {
    fn default() -> Self {
        Self {
            infidelity_target: 1e-4,
            max_iterations: 500,
            sample_rate: DEFAULT_SAMPLE_RATE_GS,
            duration_ns: DEFAULT_DURATION_NS,
            max_amplitude: DEFAULT_MAX_AMPLITUDE_MHZ,
            initial_peak: 1.0,
            initial_jitter: 0.0,
            rng_seed: 0,
            fidelity: FidelityKind::PhaseInvariant,
            method: Method::Lbfgs,
            lbfgs_memory: 10,
        }
    }
}

impl GrapeOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.infidelity_target > 0.0) {
            return invalid("infidelity target must be positive");
        }
        if !(self.initial_peak.abs() <= self.max_amplitude) {
            return invalid("initial peak exceeds the amplitude bound");
        }
        if !(self.initial_jitter >= 0.0) {
            return invalid("initial jitter must be non-negative");
        }
        if self.lbfgs_memory == 0 {
            return invalid("L-BFGS memory must be at least 1");
        }
        ControlPulse::zeros(self.sample_rate, self.duration_ns, self.max_amplitude).map(|_| ())
    }

    /// Gaussian envelope centred on the pulse, width duration/6, same on both quadratures.
    pub fn initial_pulse(&self) -> Result<ControlPulse> {
        let mut p = ControlPulse::zeros(self.sample_rate, self.duration_ns, self.max_amplitude)?;
        let n = p.len();
        let width = n as f64 / 6.0;
        let centre = (n as f64 - 1.0) / 2.0;
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        for k in 0..n {
            let g = self.initial_peak * (-0.5 * ((k as f64 - centre) / width).powi(2)).exp();
            p.eps_i[k] = g;
            p.eps_q[k] = g;
            if self.initial_jitter > 0.0 {
                p.eps_i[k] += rng.gen_range(-self.initial_jitter..=self.initial_jitter);
                p.eps_q[k] += rng.gen_range(-self.initial_jitter..=self.initial_jitter);
            }
        }
        p.clip();
        Ok(p)
    }
}

/// Fixed data of one optimisation: device, embedded target and fidelity functional.
pub struct GrapeProblem<'a> {
    pub ops: &'a DeviceOperators,
    pub target: &'a ComplexMatrix,
    pub projector: &'a ComplexMatrix,
    pub kind: FidelityKind,
}

struct Evaluated {
    eigen: Vec<EigenDecomposition>,
    slices: Vec<ComplexMatrix>,
    total: ComplexMatrix,
    overlap: C64,
    fidelity: f64,
}

#[derive(Clone, Debug)]
pub struct GrapeGradient {
    pub fidelity: f64,
    pub d_eps_i: Vec<f64>,
    pub d_eps_q: Vec<f64>,
}

impl GrapeProblem<'_> {
    fn dim_p(&self) -> f64 {
        self.projector.trace().re
    }

    fn evaluate(&self, pulse: &ControlPulse) -> Result<Evaluated> {
        let dt = pulse.dt_us();
        let eigen: Vec<EigenDecomposition> = (0..pulse.len())
            .into_par_iter()
            .map(|k| eig_hermitian(&self.ops.hamiltonian(pulse.eps_i[k], pulse.eps_q[k])))
            .collect::<Result<_>>()?;
        let slices: Vec<ComplexMatrix> = eigen
            .par_iter()
            .map(|e| e.map_spectrum(|l| C64::from_polar(1.0, -l * dt)))
            .collect();
        let n = self.ops.dim();
        let total = slices.iter().fold(ComplexMatrix::identity(n), |acc, u| u.matmul(&acc));
        let a = self.projector.matmul(&self.target.adjoint());
        let overlap = a.matmul(&total).matmul(self.projector).trace();
        let d = self.dim_p();
        let fidelity = match self.kind {
            FidelityKind::PhaseInvariant => overlap.norm_sqr() / (d * d),
            FidelityKind::PhaseSensitive => overlap.re / d,
        };
        Ok(Evaluated {
            eigen,
            slices,
            total,
            overlap,
            fidelity,
        })
    }

    fn gradient_of(&self, ev: &Evaluated, dt: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.ops.dim();
        let m = ev.slices.len();
        let a = self.projector.matmul(&self.target.adjoint());
        // forward[k] = U_k ⋯ U_1 (forward[0] = 1); backward[k] = A U_m ⋯ U_{k+1}
        let mut forward = Vec::with_capacity(m + 1);
        forward.push(ComplexMatrix::identity(n));
        for u in &ev.slices {
            let next = u.matmul(forward.last().unwrap());
            forward.push(next);
        }
        let mut backward = vec![ComplexMatrix::zeros(n, n); m + 1];
        backward[m] = a;
        for k in (1..=m).rev() {
            backward[k - 1] = backward[k].matmul(&ev.slices[k - 1]);
        }
        let d = self.dim_p();
        let scale = match self.kind {
            FidelityKind::PhaseInvariant => 2.0 * ev.overlap.conj() / (d * d),
            FidelityKind::PhaseSensitive => C64::new(1.0 / d, 0.0),
        };
        let pairs: Vec<(f64, f64)> = (0..m)
            .into_par_iter()
            .map(|k| {
                // d Tr(A U) / dε = Tr(F_{k-1} B_k dU_k)
                let mk = forward[k].matmul(&backward[k + 1]);
                let e = &ev.eigen[k];
                let w = &e.vectors;
                let wd = w.adjoint();
                let mt = wd.matmul(&mk).matmul(w);
                let qi = wd.matmul(&self.ops.quad_i).matmul(w);
                let qq = wd.matmul(&self.ops.quad_q).matmul(w);
                let mut gi = ZERO;
                let mut gq = ZERO;
                for ia in 0..n {
                    for ib in 0..n {
                        let phi = exp_derivative_kernel(e.values[ia], e.values[ib], dt);
                        let f = mt[(ib, ia)] * phi;
                        gi += f * qi[(ia, ib)];
                        gq += f * qq[(ia, ib)];
                    }
                }
                let gi = (scale * gi * (2.0 * PI)).re;
                let gq = (scale * gq * (2.0 * PI)).re;
                (gi, gq)
            })
            .collect();
        pairs.into_iter().unzip()
    }

    pub fn fidelity(&self, pulse: &ControlPulse) -> Result<f64> {
        Ok(self.evaluate(pulse)?.fidelity)
    }

    pub fn propagator(&self, pulse: &ControlPulse) -> Result<ComplexMatrix> {
        Ok(self.evaluate(pulse)?.total)
    }

    pub fn gradient(&self, pulse: &ControlPulse) -> Result<GrapeGradient> {
        let ev = self.evaluate(pulse)?;
        let (d_eps_i, d_eps_q) = self.gradient_of(&ev, pulse.dt_us());
        Ok(GrapeGradient {
            fidelity: ev.fidelity,
            d_eps_i,
            d_eps_q,
        })
    }
}

/// `(e^{-iΔt a} − e^{-iΔt b}) / (a − b)`, with the diagonal limit `-iΔt e^{-iΔt a}`.
fn exp_derivative_kernel(a: f64, b: f64, dt: f64) -> C64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * dt * (a - b);
    let sinc = if half.abs() < 1e-8 {
        1.0 - half * half / 6.0
    } else {
        half.sin() / half
    };
    C64::new(0.0, -dt) * C64::from_polar(sinc, -dt * mid)
}

/// Exact gradient of the subspace fidelity with respect to every sample.
pub fn grape_gradient(
    ops: &DeviceOperators,
    pulse: &ControlPulse,
    target: &ComplexMatrix,
    projector: &ComplexMatrix,
    kind: FidelityKind,
) -> Result<GrapeGradient> {
    pulse.validate()?;
    GrapeProblem {
        ops,
        target,
        projector,
        kind,
    }
    .gradient(pulse)
}

#[derive(Clone, Debug)]
pub struct GrapeOutcome {
    pub pulse: ControlPulse,
    pub infidelity: f64,
    pub iterations: usize,
    /// Fidelity after each accepted iterate, starting with the initial guess.
    pub history: Vec<f64>,
}

/// Optimises a pulse enacting `target4` on levels 0..3 of the device.
pub fn optimize_pulse(target4: &ComplexMatrix, spec: &TransmonSpec, opts: &GrapeOptions) -> Result<GrapeOutcome> {
    opts.validate()?;
    let ops = DeviceOperators::new(spec)?;
    let (target, projector) = embed_target(target4, spec.n_levels)?;
    let problem = GrapeProblem {
        ops: &ops,
        target: &target,
        projector: &projector,
        kind: opts.fidelity,
    };

    let zero = ControlPulse::zeros(opts.sample_rate, opts.duration_ns, opts.max_amplitude)?;
    let f0 = problem.fidelity(&zero)?;
    if 1.0 - f0 < opts.infidelity_target {
        return Ok(GrapeOutcome {
            pulse: zero,
            infidelity: 1.0 - f0,
            iterations: 0,
            history: vec![f0],
        });
    }
    let start = opts.initial_pulse()?;
    Optimizer::new(&problem, opts).run(start)
}

struct Optimizer<'p, 'a> {
    problem: &'p GrapeProblem<'a>,
    opts: &'p GrapeOptions,
    template: ControlPulse,
}

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

impl<'p, 'a> Optimizer<'p, 'a> {
    fn new(problem: &'p GrapeProblem<'a>, opts: &'p GrapeOptions) -> Self {
        let template =
            ControlPulse::zeros(opts.sample_rate, opts.duration_ns, opts.max_amplitude).expect("validated options");
        Self {
            problem,
            opts,
            template,
        }
    }

    fn pulse_of(&self, x: &[f64]) -> ControlPulse {
        let n = self.template.len();
        let mut p = self.template.clone();
        p.eps_i.copy_from_slice(&x[..n]);
        p.eps_q.copy_from_slice(&x[n..]);
        p
    }

    fn project(&self, x: &mut [f64]) {
        let m = self.opts.max_amplitude;
        for v in x {
            *v = v.clamp(-m, m);
        }
    }

    /// Infidelity, its gradient, and the evaluation they came from.
    fn objective(&self, x: &[f64]) -> Result<(f64, Evaluated)> {
        let ev = self.problem.evaluate(&self.pulse_of(x))?;
        Ok((1.0 - ev.fidelity, ev))
    }

    fn gradient(&self, ev: &Evaluated) -> Vec<f64> {
        let (gi, gq) = self.problem.gradient_of(ev, self.template.dt_us());
        gi.into_iter().chain(gq).map(|g| -g).collect()
    }

    fn run(&self, start: ControlPulse) -> Result<GrapeOutcome> {
        let target = self.opts.infidelity_target;
        let mut x: Vec<f64> = start.eps_i.iter().chain(&start.eps_q).copied().collect();
        let (mut f, ev) = self.objective(&x)?;
        let mut g = self.gradient(&ev);
        let mut history = vec![1.0 - f];
        let mut memory: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
        let mut step_hint = 1.0;
        let mut iterations = 0;

        while f >= target {
            if iterations >= self.opts.max_iterations {
                return Err(Error::Convergence {
                    iterations,
                    best_infidelity: f,
                });
            }
            iterations += 1;
            let mut accepted = None;
            for attempt in 0..2 {
                let use_memory = self.opts.method == Method::Lbfgs && attempt == 0 && !memory.is_empty();
                let mut dir = if use_memory {
                    two_loop(&g, &memory)
                } else {
                    g.iter().map(|v| -v).collect()
                };
                self.freeze_active(&x, &g, &mut dir);
                let slope = dot(&g, &dir);
                if !(slope < 0.0) {
                    memory.clear();
                    continue;
                }
                let t0 = if use_memory {
                    1.0
                } else if memory.is_empty() && iterations == 1 {
                    // first move changes the largest sample by about 1 MHz
                    1.0 / max_abs(&dir).max(f64::MIN_POSITIVE)
                } else {
                    step_hint / max_abs(&dir).max(f64::MIN_POSITIVE)
                };
                if let Some(found) = self.backtrack(&x, f, &g, &dir, t0)? {
                    accepted = Some(found);
                    break;
                }
                memory.clear();
            }
            let Some((x_new, f_new, ev_new)) = accepted else {
                return Err(Error::Convergence {
                    iterations,
                    best_infidelity: f,
                });
            };
            let g_new = self.gradient(&ev_new);
            let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            step_hint = (2.0 * max_abs(&s)).clamp(1e-6, 1.0);
            if self.opts.method == Method::Lbfgs && sy > 1e-12 * norm(&s) * norm(&y) {
                if memory.len() == self.opts.lbfgs_memory {
                    memory.remove(0);
                }
                memory.push((s, y, 1.0 / sy));
            }
            x = x_new;
            f = f_new;
            g = g_new;
            history.push(1.0 - f);
        }

        Ok(GrapeOutcome {
            pulse: self.pulse_of(&x),
            infidelity: f,
            iterations,
            history,
        })
    }

    /// Zeroes direction components that would push a sample already on the bound outward.
    fn freeze_active(&self, x: &[f64], g: &[f64], dir: &mut [f64]) {
        let m = self.opts.max_amplitude;
        for ((xi, gi), di) in x.iter().zip(g).zip(dir.iter_mut()) {
            let at_upper = *xi >= m && *gi < 0.0;
            let at_lower = *xi <= -m && *gi > 0.0;
            if at_upper || at_lower {
                *di = 0.0;
            }
        }
    }

    fn backtrack(
        &self,
        x: &[f64],
        f: f64,
        g: &[f64],
        dir: &[f64],
        t0: f64,
    ) -> Result<Option<(Vec<f64>, f64, Evaluated)>> {
        let mut t = t0;
        for _ in 0..MAX_BACKTRACKS {
            let mut trial: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + t * d).collect();
            self.project(&mut trial);
            let moved: Vec<f64> = trial.iter().zip(x).map(|(a, b)| a - b).collect();
            if max_abs(&moved) == 0.0 {
                return Ok(None);
            }
            let (ft, ev) = self.objective(&trial)?;
            if ft <= f + ARMIJO_C1 * dot(g, &moved) && ft < f {
                return Ok(Some((trial, ft, ev)));
            }
            t *= 0.5;
        }
        Ok(None)
    }
}

fn two_loop(g: &[f64], memory: &[(Vec<f64>, Vec<f64>, f64)]) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let mut alphas = vec![0.0; memory.len()];
    for (i, (s, y, rho)) in memory.iter().enumerate().rev() {
        let a = rho * dot(s, &q);
        alphas[i] = a;
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
    }
    let (s, y, _) = memory.last().unwrap();
    let gamma = dot(s, y) / dot(y, y);
    for qi in q.iter_mut() {
        *qi *= gamma;
    }
    for (i, (s, y, rho)) in memory.iter().enumerate() {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (alphas[i] - b) * si;
        }
    }
    q.iter().map(|v| -v).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::control_operators;

    fn toy_qubit(detuning: f64) -> DeviceOperators {
        let (quad_i, quad_q) = control_operators(2);
        DeviceOperators {
            drift: ComplexMatrix::from_real_diag(&[0.0, detuning]),
            quad_i,
            quad_q,
            collapse: Vec::new(),
        }
    }

    #[test]
    fn kernel_limits() {
        let dt = 0.01;
        let k = exp_derivative_kernel(3.0, 3.0, dt);
        let expect = C64::new(0.0, -dt) * C64::from_polar(1.0, -3.0 * dt);
        assert!((k - expect).norm() < 1e-16);
        let (a, b) = (2.0, -5.0);
        let direct = (C64::from_polar(1.0, -dt * a) - C64::from_polar(1.0, -dt * b)) / (a - b);
        assert!((exp_derivative_kernel(a, b, dt) - direct).norm() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences_on_qubit() {
        let ops = toy_qubit(2.0 * PI * 3.0);
        let mut p = ControlPulse::zeros(32.0, 2.0, 20.0).unwrap();
        for k in 0..p.len() {
            p.eps_i[k] = 4.0 * (k as f64 * 0.4).sin();
            p.eps_q[k] = 3.0 * (k as f64 * 0.17).cos();
        }
        let proj = ComplexMatrix::identity(2);
        let i = C64::new(0.0, 1.0);
        let target = ComplexMatrix::from_row_major(2, 2, vec![ZERO, -i, -i, ZERO]).unwrap();
        for kind in [FidelityKind::PhaseInvariant, FidelityKind::PhaseSensitive] {
            let prob = GrapeProblem {
                ops: &ops,
                target: &target,
                projector: &proj,
                kind,
            };
            let g = prob.gradient(&p).unwrap();
            let h = 1e-5;
            for k in [0, 7, 33, 63] {
                for quad in 0..2 {
                    let mut plus = p.clone();
                    let mut minus = p.clone();
                    let (vp, vm) = if quad == 0 {
                        (&mut plus.eps_i[k], &mut minus.eps_i[k])
                    } else {
                        (&mut plus.eps_q[k], &mut minus.eps_q[k])
                    };
                    *vp += h;
                    *vm -= h;
                    let fd = (prob.fidelity(&plus).unwrap() - prob.fidelity(&minus).unwrap()) / (2.0 * h);
                    let an = if quad == 0 { g.d_eps_i[k] } else { g.d_eps_q[k] };
                    assert!(
                        (fd - an).abs() <= 1e-6 * an.abs().max(1e-3),
                        "{kind:?} k={k} q={quad}: {fd} vs {an}"
                    );
                }
            }
        }
    }

    #[test]
    fn gradient_vanishes_at_reached_target() {
        let ops = toy_qubit(0.0);
        let mut p = ControlPulse::zeros(32.0, 4.0, 20.0).unwrap();
        p.eps_i.iter_mut().for_each(|v| *v = 5.0);
        let proj = ComplexMatrix::identity(2);
        let prob = GrapeProblem {
            ops: &ops,
            target: &ComplexMatrix::identity(2),
            projector: &proj,
            kind: FidelityKind::PhaseInvariant,
        };
        let u = prob.propagator(&p).unwrap();
        let prob = GrapeProblem { target: &u, ..prob };
        let g = prob.gradient(&p).unwrap();
        assert!((g.fidelity - 1.0).abs() < 1e-12);
        let norm: f64 = g.d_eps_i.iter().chain(&g.d_eps_q).map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-6, "{norm}");
    }

    #[test]
    fn identity_target_accepts_zero_pulse() {
        let spec = TransmonSpec::default();
        let out = optimize_pulse(&ComplexMatrix::identity(4), &spec, &GrapeOptions::default()).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(out.pulse.eps_i.iter().chain(&out.pulse.eps_q).all(|&v| v == 0.0));
        assert!(out.infidelity < 1e-12);
    }

    #[test]
    fn initial_guess_shape() {
        let opts = GrapeOptions::default();
        let p = opts.initial_pulse().unwrap();
        assert_eq!(p.len(), 3200);
        assert_eq!(p.eps_i, p.eps_q);
        let peak = p.eps_i.iter().cloned().fold(0.0, f64::max);
        assert!(peak <= 1.0 && peak > 0.999);
        let jittered = GrapeOptions {
            initial_jitter: 0.1,
            rng_seed: 3,
            ..opts.clone()
        };
        assert_eq!(jittered.initial_pulse().unwrap(), jittered.initial_pulse().unwrap());
        assert_ne!(jittered.initial_pulse().unwrap(), p);
    }

    #[test]
    fn options_validation() {
        let bad = GrapeOptions {
            infidelity_target: 0.0,
            ..GrapeOptions::default()
        };
        assert!(bad.validate().is_err());
        let bad = GrapeOptions {
            duration_ns: 100.01,
            ..GrapeOptions::default()
        };
        assert!(bad.validate().is_err());
    }
}

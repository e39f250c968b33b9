//! Piecewise-constant two-quadrature drive envelopes.

use serde::{Deserialize, Serialize};

use crate::device::DeviceOperators;
use crate::error::{invalid, Result};
use crate::io::{check_header, fmt_f64, format_error, parse_f64};
use crate::numerics::{dft, expm_hermitian, ComplexMatrix, C64};

pub const DEFAULT_SAMPLE_RATE_GS: f64 = 32.0;
pub const DEFAULT_DURATION_NS: f64 = 100.0;
pub const DEFAULT_MAX_AMPLITUDE_MHZ: f64 = 20.0;

pub const PULSE_CSV_COLUMNS: [&str; 3] = ["sample_index", "eps_I_MHz", "eps_Q_MHz"];

/// Drive amplitudes in MHz (linear frequency), one pair per sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlPulse {
    /// Samples per ns.
    pub sample_rate: f64,
    pub max_amplitude: f64,
    pub eps_i: Vec<f64>,
    pub eps_q: Vec<f64>,
}

impl ControlPulse {
    pub fn zeros(sample_rate: f64, duration_ns: f64, max_amplitude: f64) -> Result<Self> {
        let n = sample_count(sample_rate, duration_ns)?;
        let p = Self {
            sample_rate,
            max_amplitude,
            eps_i: vec![0.0; n],
            eps_q: vec![0.0; n],
        };
        p.validate()?;
        Ok(p)
    }

    pub fn from_samples(sample_rate: f64, max_amplitude: f64, eps_i: Vec<f64>, eps_q: Vec<f64>) -> Result<Self> {
        let p = Self {
            sample_rate,
            max_amplitude,
            eps_i,
            eps_q,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.eps_i.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps_i.is_empty()
    }

    pub fn duration_ns(&self) -> f64 {
        self.len() as f64 / self.sample_rate
    }

    /// Slice length in μs.
    pub fn dt_us(&self) -> f64 {
        1e-3 / self.sample_rate
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return invalid(format!("sample rate must be positive, got {}", self.sample_rate));
        }
        if !(self.max_amplitude > 0.0 && self.max_amplitude.is_finite()) {
            return invalid(format!("amplitude bound must be positive, got {}", self.max_amplitude));
        }
        if self.eps_i.len() != self.eps_q.len() {
            return invalid("quadrature arrays differ in length");
        }
        if self.eps_i.is_empty() {
            return invalid("pulse has no samples");
        }
        for (k, (&i, &q)) in self.eps_i.iter().zip(&self.eps_q).enumerate() {
            if !(i.abs() <= self.max_amplitude && q.abs() <= self.max_amplitude) {
                return invalid(format!(
                    "sample {k} exceeds the {} MHz bound (I = {i}, Q = {q})",
                    self.max_amplitude
                ));
            }
        }
        Ok(())
    }

    pub fn clip(&mut self) {
        let m = self.max_amplitude;
        for v in self.eps_i.iter_mut().chain(self.eps_q.iter_mut()) {
            *v = v.clamp(-m, m);
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.len() * 56);
        out.push_str(&PULSE_CSV_COLUMNS.join(","));
        out.push('\n');
        for (k, (i, q)) in self.eps_i.iter().zip(&self.eps_q).enumerate() {
            out.push_str(&format!("{k},{},{}\n", fmt_f64(*i), fmt_f64(*q)));
        }
        out
    }

    /// Reads samples written by [`ControlPulse::to_csv`]; rate and bound come from metadata.
    pub fn from_csv(text: &str, sample_rate: f64, max_amplitude: f64, path: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        check_header(&mut rdr, &PULSE_CSV_COLUMNS, path)?;
        let mut eps_i = Vec::new();
        let mut eps_q = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 3 {
                return Err(format_error(path, format!("row {row}: expected 3 fields")));
            }
            let idx: usize = rec[0]
                .trim()
                .parse()
                .map_err(|_| format_error(path, format!("row {row}: bad sample index")))?;
            if idx != row {
                return Err(format_error(
                    path,
                    format!("row {row}: sample index {idx} out of order"),
                ));
            }
            eps_i.push(parse_f64(&rec[1], path, row)?);
            eps_q.push(parse_f64(&rec[2], path, row)?);
        }
        Self::from_samples(sample_rate, max_amplitude, eps_i, eps_q)
    }
}

fn sample_count(sample_rate: f64, duration_ns: f64) -> Result<usize> {
    let n = sample_rate * duration_ns;
    if !(n >= 1.0 && n.is_finite()) || (n - n.round()).abs() > 1e-9 * n {
        return invalid(format!(
            "duration {duration_ns} ns at {sample_rate} GS/s is not a whole number of samples"
        ));
    }
    Ok(n.round() as usize)
}

/// Per-slice propagators `exp(-i H_k Δt)`.
pub fn slice_propagators(ops: &DeviceOperators, pulse: &ControlPulse) -> Result<Vec<ComplexMatrix>> {
    use rayon::prelude::*;
    pulse.validate()?;
    let dt = pulse.dt_us();
    (0..pulse.len())
        .into_par_iter()
        .map(|k| expm_hermitian(&ops.hamiltonian(pulse.eps_i[k], pulse.eps_q[k]), dt))
        .collect()
}

/// Time-ordered product, latest slice leftmost.
pub fn propagate_piecewise(ops: &DeviceOperators, pulse: &ControlPulse) -> Result<ComplexMatrix> {
    let n = ops.dim();
    let slices = slice_propagators(ops, pulse)?;
    Ok(slices.iter().fold(ComplexMatrix::identity(n), |acc, u| u.matmul(&acc)))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FidelityKind {
    /// `|Tr(P T† U P)|² / d²`
    #[default]
    PhaseInvariant,
    /// `Re Tr(P T† U P) / d`
    PhaseSensitive,
}

/// `Tr(P T† U P)` and `d = Tr P`.
pub fn subspace_overlap(u: &ComplexMatrix, target: &ComplexMatrix, projector: &ComplexMatrix) -> (C64, f64) {
    let pt = projector.matmul(&target.adjoint());
    let g = pt.matmul(&u.matmul(projector)).trace();
    (g, projector.trace().re)
}

pub fn subspace_fidelity(u: &ComplexMatrix, target: &ComplexMatrix, projector: &ComplexMatrix) -> f64 {
    fidelity_of(u, target, projector, FidelityKind::PhaseInvariant)
}

pub fn fidelity_of(u: &ComplexMatrix, target: &ComplexMatrix, projector: &ComplexMatrix, kind: FidelityKind) -> f64 {
    let (g, d) = subspace_overlap(u, target, projector);
    match kind {
        FidelityKind::PhaseInvariant => g.norm_sqr() / (d * d),
        FidelityKind::PhaseSensitive => g.re / d,
    }
}

/// Spectrum of the complex envelope `ε_I + iε_Q`.
#[derive(Clone, Debug, PartialEq)]
pub struct PulseSpectrum {
    /// Ascending, GHz.
    pub frequencies_ghz: Vec<f64>,
    pub power: Vec<f64>,
}

impl PulseSpectrum {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frequency_GHz,power\n");
        for (f, p) in self.frequencies_ghz.iter().zip(&self.power) {
            out.push_str(&format!("{},{}\n", fmt_f64(*f), fmt_f64(*p)));
        }
        out
    }

    /// Fraction of the total power within `half_width` GHz of `f`.
    pub fn weight_near(&self, f: f64, half_width: f64) -> f64 {
        let total: f64 = self.power.iter().sum();
        if total == 0.0 {
            return 0.0;
        }
        self.frequencies_ghz
            .iter()
            .zip(&self.power)
            .filter(|(x, _)| (*x - f).abs() <= half_width)
            .map(|(_, p)| p)
            .sum::<f64>()
            / total
    }
}

pub fn pulse_spectrum(pulse: &ControlPulse) -> Result<PulseSpectrum> {
    if pulse.is_empty() {
        return invalid("pulse has no samples");
    }
    let n = pulse.len();
    let env: Vec<C64> = pulse
        .eps_i
        .iter()
        .zip(&pulse.eps_q)
        .map(|(&i, &q)| C64::new(i, q))
        .collect();
    let x = dft(&env);
    let df = pulse.sample_rate / n as f64;
    let mut bins: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let signed = if k <= (n - 1) / 2 {
                k as f64
            } else {
                k as f64 - n as f64
            };
            (signed * df, x[k].norm_sqr())
        })
        .collect();
    bins.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(PulseSpectrum {
        frequencies_ghz: bins.iter().map(|b| b.0).collect(),
        power: bins.iter().map(|b| b.1).collect(),
    })
}

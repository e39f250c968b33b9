//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export takes plain numbers or a JSON string and returns JSON.

use nnspin_core::hamiltonian::{build_vsd, exact_eigensystem, hamiltonian_power, Geometry, SpinCoefficients};
use nnspin_core::lindblad::{reference_spin_trajectory, NoiseScaling, OccupationRecord};
use nnspin_core::spectral::{distinct_gaps, find_peaks, gls_refine, noise_floor, power_spectrum, FitOptions};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn hamiltonian(
    a: f64,
    b: f64,
    r: f64,
    x: f64,
    phi_deg: f64,
) -> Result<(SpinCoefficients, nnspin_core::hamiltonian::SpinHamiltonian), String> {
    let g = Geometry::new(r, x, phi_deg.to_radians()).map_err(|e| e.to_string())?;
    let c = SpinCoefficients { a, b };
    Ok((c, build_vsd(&c, &g)))
}

fn json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Spectrum {
    eigenvalues: [f64; 4],
    closed_form: [f64; 4],
    gaps: Vec<f64>,
}

pub fn spin_spectrum_json(a: f64, b: f64, r: f64, x: f64, phi_deg: f64) -> Result<String, String> {
    let (c, h) = hamiltonian(a, b, r, x, phi_deg)?;
    let e = exact_eigensystem(&h, &c).map_err(|e| e.to_string())?;
    json(&Spectrum {
        eigenvalues: e.values,
        closed_form: c.closed_form_spectrum(),
        gaps: distinct_gaps(&e.values),
    })
}

/// Occupation record of `(H + shift)^power` from Fock `level`. `t1_us` or
/// `t_phi_us` ≤ 0 turns that channel off; both off gives unitary dynamics.
#[allow(clippy::too_many_arguments)]
pub fn trajectory_json(
    a: f64,
    b: f64,
    power: u32,
    shift: f64,
    dt: f64,
    n_steps: usize,
    level: usize,
    gate_ns: f64,
    t1_us: f64,
    t_phi_us: f64,
) -> Result<String, String> {
    let (_, h) = hamiltonian(a, b, 3.5, 0.382, 2.71)?;
    let hp = hamiltonian_power(&h.shifted(shift), power).map_err(|e| e.to_string())?;
    let time = |t: f64| if t > 0.0 { t } else { f64::INFINITY };
    let noise = (t1_us > 0.0 || t_phi_us > 0.0).then(|| NoiseScaling {
        tau_pulse: gate_ns * 1e-3,
        t1: time(t1_us),
        t_phi: time(t_phi_us),
    });
    let rec = reference_spin_trajectory(&hp, dt, n_steps, noise, level).map_err(|e| e.to_string())?;
    json(&rec)
}

#[derive(Serialize)]
struct Analysis {
    frequencies: Vec<f64>,
    summed: Vec<f64>,
    floor: f64,
    peaks: Vec<f64>,
    omega: Vec<f64>,
    omega_err: Vec<f64>,
}

/// Power spectrum, peak search and, when `refine`, the correlated-noise fit.
pub fn analyze_json(record: &str, refine: bool) -> Result<String, String> {
    let rec: OccupationRecord = serde_json::from_str(record).map_err(|e| e.to_string())?;
    let s = power_spectrum(&rec).map_err(|e| e.to_string())?;
    let peaks = find_peaks(&s, 4).map_err(|e| e.to_string())?;
    let (omega, omega_err) = if refine {
        let fit = gls_refine(&rec, &peaks, &FitOptions::default()).map_err(|e| e.to_string())?;
        (fit.omega, fit.omega_err)
    } else {
        (Vec::new(), Vec::new())
    };
    json(&Analysis {
        floor: noise_floor(&s),
        frequencies: s.frequencies,
        summed: s.summed,
        peaks,
        omega,
        omega_err,
    })
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn spin_spectrum(a: f64, b: f64, r: f64, x: f64, phi_deg: f64) -> Result<String, JsError> {
    js(spin_spectrum_json(a, b, r, x, phi_deg))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn trajectory(
    a: f64,
    b: f64,
    power: u32,
    shift: f64,
    dt: f64,
    n_steps: usize,
    level: usize,
    gate_ns: f64,
    t1_us: f64,
    t_phi_us: f64,
) -> Result<String, JsError> {
    js(trajectory_json(
        a, b, power, shift, dt, n_steps, level, gate_ns, t1_us, t_phi_us,
    ))
}

#[wasm_bindgen]
pub fn analyze(record: &str, refine: bool) -> Result<String, JsError> {
    js(analyze_json(record, refine))
}

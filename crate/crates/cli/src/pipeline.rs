//! Stage implementations and the artifacts they exchange.

use nnspin_core::device::{DeviceOperators, TransmonSpec};
use nnspin_core::grape::optimize_pulse;
use nnspin_core::hamiltonian::{
    build_vsd, exact_eigensystem, hamiltonian_power, initial_overlaps, target_propagator, SpinCoefficients,
    SpinHamiltonian, SPIN_BASIS,
};
use nnspin_core::lindblad::{
    record_from_channel, reference_spin_trajectory, DensityMatrix, GateChannel, GateIntegrator, NoiseScaling,
    OccupationRecord,
};
use nnspin_core::numerics::{ComplexMatrix, C64};
use nnspin_core::pulse::{pulse_spectrum, ControlPulse, FidelityKind};
use nnspin_core::spectral::{
    distinct_gaps, find_peaks, gls_refine, noise_floor, power_spectrum, reconstruct_eigenvalues, Reconstruction,
    SpectralResult,
};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::{input_hash, sha256_hex, RunManifest, StageStatus, Workspace};

pub const VSD_JSON: &str = "hamiltonian/vsd.json";
pub const EIGENSYSTEM_JSON: &str = "hamiltonian/eigensystem.json";
pub const RECONSTRUCTION_JSON: &str = "reconstruction.json";

/// Files of one Hamiltonian-power branch, relative to the output directory.
#[derive(Clone, Debug)]
pub struct BranchPaths {
    pub power: u32,
    pub pulse_csv: String,
    pub pulse_meta: String,
    pub pulse_spectrum: String,
    pub trajectory_device: String,
    pub trajectory_reference: String,
    pub spectrum: String,
    pub spectral_result: String,
}

impl BranchPaths {
    pub fn new(power: u32) -> Self {
        let d = format!("power{power}");
        Self {
            power,
            pulse_csv: format!("{d}/pulse.csv"),
            pulse_meta: format!("{d}/pulse_meta.json"),
            pulse_spectrum: format!("{d}/pulse_spectrum.csv"),
            trajectory_device: format!("{d}/trajectory_device.csv"),
            trajectory_reference: format!("{d}/trajectory_reference.csv"),
            spectrum: format!("{d}/spectrum.csv"),
            spectral_result: format!("{d}/spectral_result.json"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VsdArtifact {
    pub basis: Vec<String>,
    #[serde(rename = "a_MeV")]
    pub a: f64,
    #[serde(rename = "b_MeV")]
    pub b: f64,
    pub r_fm: f64,
    pub x: f64,
    pub phi_rad: f64,
    pub real: [[f64; 4]; 4],
    pub imag: [[f64; 4]; 4],
}

impl VsdArtifact {
    pub fn hamiltonian(&self) -> nnspin_core::Result<SpinHamiltonian> {
        SpinHamiltonian::from_matrix(ComplexMatrix::from_fn(4, 4, |i, j| {
            C64::new(self.real[i][j], self.imag[i][j])
        }))
    }

    pub fn coefficients(&self) -> SpinCoefficients {
        SpinCoefficients { a: self.a, b: self.b }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Amplitude {
    pub re: f64,
    pub im: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigensystemArtifact {
    #[serde(rename = "eigenvalues_MeV")]
    pub eigenvalues: [f64; 4],
    #[serde(rename = "closed_form_MeV")]
    pub closed_form: [f64; 4],
    #[serde(rename = "gaps_MeV")]
    pub gaps: Vec<f64>,
    pub overlap_labels: Vec<String>,
    /// Closed-form ⟨↓↑|φ⟩ in the order of `overlap_labels`.
    pub overlaps: Vec<Amplitude>,
    /// Columns are eigenvectors, in the order of `eigenvalues_MeV`.
    pub vectors_real: [[f64; 4]; 4],
    pub vectors_imag: [[f64; 4]; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseMeta {
    pub power: u32,
    pub dt_mev_inv: f64,
    #[serde(rename = "trace_shift_MeV")]
    pub trace_shift: f64,
    pub infidelity: f64,
    pub infidelity_target: f64,
    pub iterations: usize,
    pub samples: usize,
    pub sample_rate_gs: f64,
    pub duration_ns: f64,
    pub max_amplitude_mhz: f64,
    pub peak_amplitude_mhz: f64,
    pub fidelity: FidelityKind,
    /// Fidelity after each accepted iterate.
    pub history: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisArtifact {
    pub power: u32,
    pub dt_mev_inv: f64,
    #[serde(rename = "bin_width_MeV")]
    pub bin_width: f64,
    pub noise_floor: f64,
    #[serde(rename = "initial_peaks_MeV")]
    pub initial_peaks: Vec<f64>,
    pub fit: SpectralResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionArtifact {
    #[serde(flatten)]
    pub reconstruction: Reconstruction,
    #[serde(rename = "trace_shift_MeV")]
    pub trace_shift: f64,
    #[serde(rename = "exact_MeV")]
    pub exact: [f64; 4],
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("artifact serializes");
    s.push('\n');
    s.into_bytes()
}

fn parse_json<T: for<'de> Deserialize<'de>>(bytes: &[u8], rel: &str) -> CliResult<T> {
    serde_json::from_slice(bytes).map_err(|e| {
        CliError::Dependency(format!(
            "{rel} is malformed ({e}); rerun the producing stage with --force"
        ))
    })
}

fn text(bytes: Vec<u8>, rel: &str) -> CliResult<String> {
    String::from_utf8(bytes).map_err(|_| CliError::Dependency(format!("{rel} is not UTF-8")))
}

fn fingerprint<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("fingerprint serializes")
}

fn rows(m: &ComplexMatrix, part: fn(C64) -> f64) -> [[f64; 4]; 4] {
    std::array::from_fn(|i| std::array::from_fn(|j| part(m[(i, j)])))
}

/// One line per stage, e.g. `hamiltonian: ran`.
pub type Report = Vec<(String, StageStatus)>;

pub struct Pipeline<'a> {
    pub cfg: &'a RunConfig,
    pub ws: Workspace,
    pub report: Report,
}

impl<'a> Pipeline<'a> {
    pub fn open(cfg: &'a RunConfig, force: bool) -> CliResult<Self> {
        let mut ws = Workspace::open(&cfg.output_dir, force)?;
        ws.manifest.version = env!("CARGO_PKG_VERSION").to_string();
        ws.manifest.config_hash = sha256_hex(fingerprint(cfg).as_bytes());
        ws.manifest.seeds.simulation = cfg.simulation.seed;
        ws.manifest.seeds.pulse = cfg.pulse.rng_seed;
        ws.manifest.seeds.fit = cfg.analysis.fit.seed;
        Ok(Self {
            cfg,
            ws,
            report: Vec::new(),
        })
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.ws.manifest
    }

    fn record(&mut self, name: &str, status: StageStatus) {
        self.report.push((name.to_string(), status));
    }

    pub fn hamiltonian(&mut self) -> CliResult<()> {
        let cfg = self.cfg;
        let n = &cfg.nuclear;
        let coeffs = cfg.coefficients()?;
        let geometry = cfg.geometry().map_err(CliError::stage("hamiltonian"))?;
        let hash = input_hash(
            "hamiltonian",
            &[&fingerprint(&(n.mode, &coeffs, &geometry, cfg.eft_params()))],
        );
        let status = self.ws.run_stage("hamiltonian", &hash, |w| {
            let h = build_vsd(&coeffs, &geometry);
            let e = exact_eigensystem(&h, &coeffs).map_err(CliError::stage("hamiltonian"))?;
            let overlaps = initial_overlaps(&geometry).map_err(CliError::stage("hamiltonian"))?;
            let vsd = VsdArtifact {
                basis: SPIN_BASIS.iter().map(|s| s.to_string()).collect(),
                a: coeffs.a,
                b: coeffs.b,
                r_fm: geometry.r,
                x: geometry.x,
                phi_rad: geometry.phi,
                real: rows(h.matrix(), |z| z.re),
                imag: rows(h.matrix(), |z| z.im),
            };
            let eig = EigensystemArtifact {
                eigenvalues: e.values,
                closed_form: coeffs.closed_form_spectrum(),
                gaps: distinct_gaps(&e.values),
                overlap_labels: ["-3a", "a-4b", "a+2b (1)", "a+2b (2)"].map(String::from).to_vec(),
                overlaps: overlaps.iter().map(|z| Amplitude { re: z.re, im: z.im }).collect(),
                vectors_real: rows(&e.vectors, |z| z.re),
                vectors_imag: rows(&e.vectors, |z| z.im),
            };
            w.write(VSD_JSON, &to_json(&vsd))?;
            w.write(EIGENSYSTEM_JSON, &to_json(&eig))
        })?;
        self.record("hamiltonian", status);
        Ok(())
    }

    fn load_vsd(&self) -> CliResult<(VsdArtifact, String)> {
        let bytes = self.ws.read_artifact(VSD_JSON, "hamiltonian")?;
        let sha = sha256_hex(&bytes);
        Ok((parse_json(&bytes, VSD_JSON)?, sha))
    }

    /// Branch Hamiltonian `H + s` (before raising to the branch power).
    fn branch_hamiltonian(&self, vsd: &VsdArtifact, power: u32, stage: &str) -> CliResult<SpinHamiltonian> {
        let h = vsd.hamiltonian().map_err(CliError::stage(stage))?;
        Ok(h.shifted(self.cfg.branch_shift(power)))
    }

    pub fn pulse(&mut self, power: u32) -> CliResult<()> {
        let cfg = self.cfg;
        let paths = BranchPaths::new(power);
        let stage = format!("pulse/power{power}");
        let (vsd, vsd_sha) = self.load_vsd()?;
        let dt = cfg.branch_dt(power);
        let shift = cfg.branch_shift(power);
        let spec = cfg.transmon();
        let hash = input_hash(
            &stage,
            &[
                &vsd_sha,
                &fingerprint(&(power, dt, shift, spec.n_levels, spec.anharmonicity)),
                &fingerprint(&cfg.pulse),
            ],
        );
        let h = self.branch_hamiltonian(&vsd, power, &stage)?;
        let status = self.ws.run_stage(&stage, &hash, |w| {
            let target = target_propagator(&h, dt, power).map_err(CliError::stage(stage.as_str()))?;
            let out = optimize_pulse(&target, &spec, &cfg.pulse).map_err(CliError::stage(stage.as_str()))?;
            let spectrum = pulse_spectrum(&out.pulse).map_err(CliError::stage(stage.as_str()))?;
            let peak = out
                .pulse
                .eps_i
                .iter()
                .chain(&out.pulse.eps_q)
                .fold(0.0f64, |m, v| m.max(v.abs()));
            let meta = PulseMeta {
                power,
                dt_mev_inv: dt,
                trace_shift: shift,
                infidelity: out.infidelity,
                infidelity_target: cfg.pulse.infidelity_target,
                iterations: out.iterations,
                samples: out.pulse.len(),
                sample_rate_gs: out.pulse.sample_rate,
                duration_ns: out.pulse.duration_ns(),
                max_amplitude_mhz: out.pulse.max_amplitude,
                peak_amplitude_mhz: peak,
                fidelity: cfg.pulse.fidelity,
                history: out.history.clone(),
            };
            w.write(&paths.pulse_csv, out.pulse.to_csv().as_bytes())?;
            w.write(&paths.pulse_meta, &to_json(&meta))?;
            w.write(&paths.pulse_spectrum, spectrum.to_csv().as_bytes())
        })?;
        self.record(&stage, status);
        Ok(())
    }

    fn device_spec(&self) -> TransmonSpec {
        let spec = self.cfg.transmon();
        if self.cfg.simulation.noise {
            spec
        } else {
            spec.noiseless()
        }
    }

    pub fn simulate(&mut self, power: u32) -> CliResult<()> {
        let cfg = self.cfg;
        let paths = BranchPaths::new(power);
        let stage = format!("simulate/power{power}");
        let (vsd, vsd_sha) = self.load_vsd()?;
        let producer = format!("pulse (nuclear.power={power})");
        let pulse_bytes = self.ws.read_artifact(&paths.pulse_csv, &producer)?;
        let pulse_sha = sha256_hex(&pulse_bytes);
        let dt = cfg.branch_dt(power);
        let spec = self.device_spec();
        let hash = input_hash(
            &stage,
            &[
                &vsd_sha,
                &pulse_sha,
                &fingerprint(&(power, dt, cfg.branch_shift(power))),
                &fingerprint(&cfg.device),
                &fingerprint(&cfg.simulation),
                &fingerprint(&(cfg.pulse.sample_rate, cfg.pulse.max_amplitude)),
            ],
        );
        let h = self.branch_hamiltonian(&vsd, power, &stage)?;
        let pulse_text = text(pulse_bytes, &paths.pulse_csv)?;
        let status = self.ws.run_stage(&stage, &hash, |w| {
            let st = stage.as_str();
            let pulse = ControlPulse::from_csv(
                &pulse_text,
                cfg.pulse.sample_rate,
                cfg.pulse.max_amplitude,
                &paths.pulse_csv,
            )
            .map_err(|e| CliError::Dependency(e.to_string()))?;
            let ops = DeviceOperators::new(&spec).map_err(CliError::stage(st))?;
            let channel = GateChannel::build(&pulse, &ops, GateIntegrator::Exact).map_err(CliError::stage(st))?;
            let level = cfg.simulation.initial_level;
            let rho0 = DensityMatrix::basis_state(spec.n_levels, level).map_err(CliError::stage(st))?;
            let device =
                record_from_channel(&channel, &rho0, cfg.simulation.n_steps, dt).map_err(CliError::stage(st))?;

            let noise = cfg.simulation.noise.then(|| NoiseScaling {
                tau_pulse: pulse.duration_ns() * 1e-3,
                t1: spec.t1,
                t_phi: spec.t_phi,
            });
            let hp = hamiltonian_power(&h, power).map_err(CliError::stage(st))?;
            let reference = reference_spin_trajectory(&hp, dt, cfg.simulation.n_steps, noise, level)
                .map_err(CliError::stage(st))?;
            w.write(&paths.trajectory_device, device.to_csv().as_bytes())?;
            w.write(&paths.trajectory_reference, reference.to_csv().as_bytes())
        })?;
        self.record(&stage, status);
        Ok(())
    }

    pub fn analyze(&mut self, power: u32) -> CliResult<()> {
        let cfg = self.cfg;
        let paths = BranchPaths::new(power);
        let stage = format!("analyze/power{power}");
        let producer = format!("simulate (nuclear.power={power})");
        let bytes = self.ws.read_artifact(&paths.trajectory_device, &producer)?;
        let hash = input_hash(&stage, &[&sha256_hex(&bytes), &fingerprint(&cfg.analysis.fit)]);
        let traj = text(bytes, &paths.trajectory_device)?;
        let status = self.ws.run_stage(&stage, &hash, |w| {
            let st = stage.as_str();
            let record = OccupationRecord::from_csv(&traj, &paths.trajectory_device)
                .map_err(|e| CliError::Dependency(e.to_string()))?;
            let spectrum = power_spectrum(&record).map_err(CliError::stage(st))?;
            let peaks = find_peaks(&spectrum, 4).map_err(CliError::stage(st))?;
            let fit = gls_refine(&record, &peaks, &cfg.analysis.fit).map_err(CliError::stage(st))?;
            let art = AnalysisArtifact {
                power,
                dt_mev_inv: record.dt,
                bin_width: spectrum.bin_width(),
                noise_floor: noise_floor(&spectrum),
                initial_peaks: peaks,
                fit,
            };
            w.write(&paths.spectrum, spectrum.to_csv().as_bytes())?;
            w.write(&paths.spectral_result, &to_json(&art))
        })?;
        self.record(&stage, status);
        Ok(())
    }

    pub fn reconstruct(&mut self) -> CliResult<()> {
        let cfg = self.cfg;
        let p1 = BranchPaths::new(1);
        let p3 = BranchPaths::new(3);
        if !self.ws.exists(&p3.spectral_result) {
            return Err(CliError::Dependency(format!(
                "reconstruction needs {}; run the power-3 branch (run-all, or the stages with --set nuclear.power=3)",
                self.ws.root.join(&p3.spectral_result).display()
            )));
        }
        let b1 = self
            .ws
            .read_artifact(&p1.spectral_result, "analyze (nuclear.power=1)")?;
        let b3 = self
            .ws
            .read_artifact(&p3.spectral_result, "analyze (nuclear.power=3)")?;
        let (vsd, vsd_sha) = self.load_vsd()?;
        let shift = cfg.nuclear.trace_shift;
        let hash = input_hash(
            "reconstruct",
            &[&sha256_hex(&b1), &sha256_hex(&b3), &vsd_sha, &fingerprint(&shift)],
        );
        let r1: AnalysisArtifact = parse_json(&b1, &p1.spectral_result)?;
        let r3: AnalysisArtifact = parse_json(&b3, &p3.spectral_result)?;
        let status = self.ws.run_stage("reconstruct", &hash, |w| {
            let h = vsd.hamiltonian().map_err(CliError::stage("reconstruct"))?;
            let exact = exact_eigensystem(&h, &vsd.coefficients()).map_err(CliError::stage("reconstruct"))?;
            let shifted_trace = h.trace() + 4.0 * shift;
            let rec = reconstruct_eigenvalues(&r1.fit, &r3.fit, shift, shifted_trace)
                .map_err(CliError::stage("reconstruct"))?;
            let art = ReconstructionArtifact {
                reconstruction: rec,
                trace_shift: shift,
                exact: exact.values,
            };
            w.write(RECONSTRUCTION_JSON, &to_json(&art))
        })?;
        self.record("reconstruct", status);
        Ok(())
    }

    pub fn branch(&mut self, power: u32) -> CliResult<()> {
        self.pulse(power)?;
        self.simulate(power)?;
        self.analyze(power)
    }

    pub fn run_all(&mut self) -> CliResult<()> {
        self.hamiltonian()?;
        self.branch(1)?;
        if self.cfg.analysis.reconstruct {
            self.branch(3)?;
            self.reconstruct()?;
        }
        Ok(())
    }
}

/// Subcommand `analyze`: the branch analysis plus reconstruction when enabled.
pub fn analyze_command(p: &mut Pipeline) -> CliResult<()> {
    let power = p.cfg.nuclear.power;
    p.analyze(power)?;
    if p.cfg.analysis.reconstruct {
        p.reconstruct()?;
    }
    Ok(())
}

pub fn read_analysis(bytes: &[u8], rel: &str) -> CliResult<AnalysisArtifact> {
    parse_json(bytes, rel)
}

//! Run configuration: built-in defaults, an optional JSON file, then
//! `key=value` overrides, deserialized strictly.

use std::path::{Path, PathBuf};

use nnspin_core::device::TransmonSpec;
use nnspin_core::grape::GrapeOptions;
use nnspin_core::hamiltonian::{spin_coefficients, EftParams, Geometry, SpinCoefficients, CALIBRATED_A, CALIBRATED_B};
use nnspin_core::spectral::FitOptions;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuclearMode {
    Calibrated,
    Eft,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EftSection {
    /// Required in `eft` mode.
    pub c1: Option<f64>,
    pub r0: f64,
    pub m_pi: f64,
    pub g_a: f64,
    pub f_pi: f64,
    pub hbar_c: f64,
}

impl Default for EftSection {
    fn default() -> Self {
        let p = EftParams::with_c1(0.0);
        Self {
            c1: None,
            r0: p.r0,
            m_pi: p.m_pi,
            g_a: p.g_a,
            f_pi: p.f_pi,
            hbar_c: p.hbar_c,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    /// fm
    pub r: f64,
    pub x: f64,
    pub phi_deg: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        let g = Geometry::reference();
        Self {
            r: g.r,
            x: g.x,
            phi_deg: 2.71,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NuclearSection {
    pub mode: NuclearMode,
    /// MeV, calibrated mode.
    pub a: f64,
    /// MeV, calibrated mode.
    pub b: f64,
    pub eft: EftSection,
    pub geometry: GeometrySection,
    /// Nuclear time step of the power-1 branch (MeV⁻¹).
    pub dt: f64,
    /// Nuclear time step of the power-3 branch (MeV⁻¹).
    pub dt_cubed: f64,
    /// Branch used by the single-stage subcommands.
    pub power: u32,
    /// Energy shift applied to the power-3 branch (MeV).
    pub trace_shift: f64,
}

impl Default for NuclearSection {
    fn default() -> Self {
        Self {
            mode: NuclearMode::Calibrated,
            a: CALIBRATED_A,
            b: CALIBRATED_B,
            eft: EftSection::default(),
            geometry: GeometrySection::default(),
            dt: 0.30,
            dt_cubed: 0.025,
            power: 1,
            trace_shift: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceSection {
    pub n_levels: usize,
    /// MHz
    pub anharmonicity: f64,
    /// μs; `null` disables relaxation.
    pub t1: Option<f64>,
    /// μs; `null` disables dephasing.
    pub t_phi: Option<f64>,
}

impl Default for DeviceSection {
    fn default() -> Self {
        let d = TransmonSpec::default();
        Self {
            n_levels: d.n_levels,
            anharmonicity: d.anharmonicity,
            t1: Some(d.t1),
            t_phi: Some(d.t_phi),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub n_steps: usize,
    pub noise: bool,
    /// Fock level the trajectories start from.
    pub initial_level: usize,
    pub seed: u64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            n_steps: 256,
            noise: true,
            initial_level: 1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    /// Run the power-3 branch and combine both into absolute eigenvalues.
    pub reconstruct: bool,
    pub fit: FitOptions,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            reconstruct: true,
            fit: FitOptions::default(),
        }
    }
}

/// Pipeline pulses are driven well past the usual 1e-4 so gate error does not
/// dominate 256 repetitions.
pub const PIPELINE_INFIDELITY_TARGET: f64 = 1e-10;

fn pipeline_grape() -> GrapeOptions {
    GrapeOptions {
        infidelity_target: PIPELINE_INFIDELITY_TARGET,
        ..GrapeOptions::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub nuclear: NuclearSection,
    pub device: DeviceSection,
    #[serde(default = "pipeline_grape")]
    pub pulse: GrapeOptions,
    pub simulation: SimulationSection,
    pub analysis: AnalysisSection,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            nuclear: NuclearSection::default(),
            device: DeviceSection::default(),
            pulse: pipeline_grape(),
            simulation: SimulationSection::default(),
            analysis: AnalysisSection::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl RunConfig {
    /// Defaults, overlaid by `file` and then `overrides` (`dotted.key=value`).
    pub fn load(file: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let mut value = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            let user: Value = serde_json::from_str(&text)
                .map_err(|e| usage(format!("config {} is not valid JSON: {e}", path.display())))?;
            merge(&mut value, user);
        }
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: RunConfig = serde_path_to_error::deserialize(value)
            .map_err(|e| usage(format!("config field `{}`: {}", e.path(), e.inner())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let n = &self.nuclear;
        if n.mode == NuclearMode::Eft && n.eft.c1.is_none() {
            return Err(usage(
                "config field `nuclear.eft.c1`: required when nuclear.mode is \"eft\"",
            ));
        }
        if ![1, 3].contains(&n.power) {
            return Err(usage(format!(
                "config field `nuclear.power`: must be 1 or 3, got {}",
                n.power
            )));
        }
        for (name, v) in [("nuclear.dt", n.dt), ("nuclear.dt_cubed", n.dt_cubed)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(usage(format!("config field `{name}`: must be positive, got {v}")));
            }
        }
        if !n.trace_shift.is_finite() {
            return Err(usage("config field `nuclear.trace_shift`: must be finite"));
        }
        self.geometry()
            .map_err(|e| usage(format!("config field `nuclear.geometry`: {e}")))?;
        self.coefficients()?;
        self.transmon()
            .validate()
            .map_err(|e| usage(format!("config field `device`: {e}")))?;
        self.pulse
            .validate()
            .map_err(|e| usage(format!("config field `pulse`: {e}")))?;
        self.analysis
            .fit
            .validate()
            .map_err(|e| usage(format!("config field `analysis.fit`: {e}")))?;
        if self.simulation.initial_level >= 4 {
            return Err(usage("config field `simulation.initial_level`: must be in 0..4"));
        }
        if self.simulation.n_steps < 8 {
            return Err(usage(
                "config field `simulation.n_steps`: at least 8 steps are needed for analysis",
            ));
        }
        Ok(())
    }

    pub fn geometry(&self) -> nnspin_core::Result<Geometry> {
        let g = &self.nuclear.geometry;
        Geometry::new(g.r, g.x, g.phi_deg.to_radians())
    }

    pub fn eft_params(&self) -> Option<EftParams> {
        let e = &self.nuclear.eft;
        e.c1.map(|c1| EftParams {
            c1,
            r0: e.r0,
            m_pi: e.m_pi,
            g_a: e.g_a,
            f_pi: e.f_pi,
            hbar_c: e.hbar_c,
        })
    }

    pub fn coefficients(&self) -> CliResult<SpinCoefficients> {
        match self.nuclear.mode {
            NuclearMode::Calibrated => {
                let (a, b) = (self.nuclear.a, self.nuclear.b);
                if !(a.is_finite() && b.is_finite()) {
                    return Err(usage("config fields `nuclear.a`, `nuclear.b`: must be finite"));
                }
                Ok(SpinCoefficients { a, b })
            }
            NuclearMode::Eft => {
                let p = self
                    .eft_params()
                    .ok_or_else(|| usage("config field `nuclear.eft.c1`: required when nuclear.mode is \"eft\""))?;
                let g = self
                    .geometry()
                    .map_err(|e| usage(format!("config field `nuclear.geometry`: {e}")))?;
                spin_coefficients(&g, &p).map_err(|e| usage(format!("config field `nuclear.eft`: {e}")))
            }
        }
    }

    pub fn transmon(&self) -> TransmonSpec {
        let d = &self.device;
        TransmonSpec {
            n_levels: d.n_levels,
            anharmonicity: d.anharmonicity,
            t1: d.t1.unwrap_or(f64::INFINITY),
            t_phi: d.t_phi.unwrap_or(f64::INFINITY),
        }
    }

    /// Nuclear step of a branch.
    pub fn branch_dt(&self, power: u32) -> f64 {
        if power == 3 {
            self.nuclear.dt_cubed
        } else {
            self.nuclear.dt
        }
    }

    /// Energy shift of a branch.
    pub fn branch_shift(&self, power: u32) -> f64 {
        if power == 3 {
            self.nuclear.trace_shift
        } else {
            0.0
        }
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn apply_override(root: &mut Value, spec: &str) -> CliResult<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| usage(format!("--set expects key=value, got {spec:?}")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(usage(format!("--set has an empty key in {spec:?}")));
    }
    // bare words that are not JSON become strings
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut node = root;
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| usage(format!("--set {key}: `{}` is not a section", parts[..i].join("."))))?;
        if !obj.contains_key(*part) {
            return Err(usage(format!(
                "--set {key}: unknown config key `{}`",
                parts[..=i].join(".")
            )));
        }
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.get_mut(*part).expect("checked");
    }
    unreachable!("loop returns on the last key")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = RunConfig::load(None, &[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.pulse.infidelity_target, PIPELINE_INFIDELITY_TARGET);
        assert_eq!(cfg.branch_dt(3), 0.025);
        assert_eq!(cfg.branch_shift(1), 0.0);
    }

    #[test]
    fn overrides_apply_and_parse_json() {
        let cfg = RunConfig::load(
            None,
            &[
                "simulation.n_steps=64".into(),
                "nuclear.mode=eft".into(),
                "nuclear.eft.c1=-0.5".into(),
                "device.t1=null".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.simulation.n_steps, 64);
        assert_eq!(cfg.nuclear.mode, NuclearMode::Eft);
        assert_eq!(cfg.nuclear.eft.c1, Some(-0.5));
        assert!(cfg.transmon().t1.is_infinite());
    }

    #[test]
    fn unknown_keys_rejected() {
        let e = RunConfig::load(None, &["simulation.nsteps=3".into()]).unwrap_err();
        assert!(e.to_string().contains("simulation.nsteps"), "{e}");
        assert!(RunConfig::load(None, &["noequals".into()]).is_err());
    }

    #[test]
    fn eft_without_contact_coupling_names_the_field() {
        let e = RunConfig::load(None, &["nuclear.mode=eft".into()]).unwrap_err();
        assert!(e.to_string().contains("nuclear.eft.c1"), "{e}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn type_errors_carry_the_path() {
        let e = RunConfig::load(None, &["pulse.max_iterations=\"many\"".into()]).unwrap_err();
        assert!(e.to_string().contains("pulse.max_iterations"), "{e}");
    }

    #[test]
    fn file_layer_merges_over_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(
            &p,
            r#"{"nuclear": {"geometry": {"r": 2.0, "x": 0.1, "phi_deg": 0.0}}, "simulation": {"noise": false}}"#,
        )
        .unwrap();
        let cfg = RunConfig::load(Some(&p), &["simulation.noise=true".into()]).unwrap();
        assert_eq!(cfg.nuclear.geometry.r, 2.0);
        assert!(cfg.simulation.noise);
        assert_eq!(cfg.nuclear.dt, 0.30);
    }

    #[test]
    fn invalid_power_rejected() {
        assert!(RunConfig::load(None, &["nuclear.power=2".into()]).is_err());
    }
}

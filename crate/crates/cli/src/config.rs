//! Run configuration: TOML (or JSON) with unit-suffixed keys.
//!
//! Frequencies are given in GHz or MHz as the key suffix says, fluxes in units of π,
//! times in ns or µs. Everything is converted to rad/ns and ns on load.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use parabus::circuit::BusCircuitParams;
use parabus::effective::QubitParams;
use parabus::units::{ghz, mhz, us_to_ns, C_LIGHT};
use serde::Deserialize;
use thiserror::Error;

/// Failure to read or validate a configuration.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("field `{field}`: {msg}")]
    Field { field: String, msg: String },
}

fn field(field: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Field { field: field.into(), msg: msg.into() }
}

/// Circuit parameters; missing keys take the fitted device values.
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    pub e_c_ghz: Option<f64>,
    pub e_j_sum_ghz: Option<f64>,
    pub e_l0_ghz: Option<f64>,
    /// Phase velocity as a fraction of c.
    pub v_frac_c: Option<f64>,
    pub length_m: Option<f64>,
    pub asym: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QubitConfig {
    pub index: usize,
    pub freq_ghz: f64,
    pub alpha_mhz: f64,
    pub g0_mhz: f64,
    #[serde(default)]
    pub x_m: f64,
    pub dist_m: Option<f64>,
    pub t1_us: Option<f64>,
    pub t2r_us: Option<f64>,
    pub t2e_us: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumTask {
    pub f_min_pi: f64,
    pub f_max_pi: f64,
    pub points: usize,
    pub modes: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SidebandTask {
    pub f_pi: f64,
    pub mode: usize,
    /// Qubit label whose couplings are reported.
    pub qubit: usize,
    #[serde(default)]
    pub delta_f_pi: Vec<f64>,
    /// Drive amplitudes in volts, used instead of `delta_f_pi`.
    #[serde(default)]
    pub drive_volts: Vec<f64>,
    /// Linear scale from drive volts to δf in units of π.
    pub volts_to_deltaf_pi: Option<f64>,
    pub omega_f_ghz: Vec<f64>,
}

impl SidebandTask {
    pub fn delta_grid(&self) -> Result<Vec<f64>, ConfigError> {
        delta_grid("sidebands", &self.delta_f_pi, &self.drive_volts, self.volts_to_deltaf_pi)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingTask {
    pub f_pi: f64,
    pub mode: usize,
    /// One qubit label, or two for the pair coupling columns.
    pub qubits: Vec<usize>,
    #[serde(default)]
    pub delta_f_pi: Vec<f64>,
    /// Drive amplitudes in volts, used instead of `delta_f_pi`.
    #[serde(default)]
    pub drive_volts: Vec<f64>,
    /// Linear scale from drive volts to δf in units of π.
    pub volts_to_deltaf_pi: Option<f64>,
    pub omega_f_ghz: Vec<f64>,
}

impl CouplingTask {
    pub fn delta_grid(&self) -> Result<Vec<f64>, ConfigError> {
        delta_grid("coupling", &self.delta_f_pi, &self.drive_volts, self.volts_to_deltaf_pi)
    }
}

/// Modulation amplitudes in units of π, given directly or as volts times a scale.
fn delta_grid(task: &str, delta: &[f64], volts: &[f64], scale: Option<f64>) -> Result<Vec<f64>, ConfigError> {
    match (delta.is_empty(), volts.is_empty(), scale) {
        (false, true, None) => Ok(delta.to_vec()),
        (true, false, Some(k)) => Ok(volts.iter().map(|v| v * k).collect()),
        (true, false, None) => Err(field(&format!("{task}.volts_to_deltaf_pi"), "required with drive_volts")),
        (true, true, _) => Err(field(&format!("{task}.delta_f_pi"), "sweep grid is empty")),
        _ => Err(field(&format!("{task}.delta_f_pi"), "give either delta_f_pi or drive_volts with volts_to_deltaf_pi")),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChevronTask {
    pub f_pi: f64,
    pub mode: usize,
    /// One label for qubit-bus exchange, two for qubit-qubit exchange.
    pub qubits: Vec<usize>,
    pub delta_f_pi: f64,
    pub omega_f_mhz_min: f64,
    pub omega_f_mhz_max: f64,
    pub omega_f_points: usize,
    pub t_final_ns: f64,
    pub t_points: usize,
    #[serde(default = "default_levels")]
    pub levels: usize,
}

fn default_levels() -> usize {
    2
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZzScanTask {
    pub mode: usize,
    pub qubits: Vec<usize>,
    pub f_min_pi: f64,
    pub f_max_pi: f64,
    pub points: usize,
    /// Flux at which the qubit-bus detunings are measured and then held fixed.
    pub f_operating_pi: f64,
    /// Flux at which qubits without `dist_m` are placed on a node.
    #[serde(default = "half")]
    pub f_node_pi: f64,
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutConfig {
    /// Rows of C_ij = P(measure i | prepared j).
    pub confusion: Vec<Vec<f64>>,
    pub measured: Vec<f64>,
    #[serde(default = "yes")]
    pub clip: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QptTask {
    /// Channel: "fsim" (exact gate) or "lindblad" (simulated exchange with decoherence).
    pub channel: String,
    #[serde(default)]
    pub theta_pi: f64,
    #[serde(default)]
    pub beta_pi: f64,
    #[serde(default)]
    pub phi_rad: f64,
    /// Qubit labels for the Lindblad channel.
    #[serde(default)]
    pub qubits: Vec<usize>,
    pub g12_mhz: Option<f64>,
    pub tau_ns: Option<f64>,
    /// Target fSim(θ, β, ·) for the fidelity.
    pub target_theta_pi: f64,
    pub target_beta_pi: f64,
    #[serde(default = "yes")]
    pub optimize_phi: bool,
    pub readout: Option<ReadoutConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocateTask {
    pub n_qubits: usize,
    pub omega_r_ghz: f64,
    pub bandwidth_ghz: f64,
    #[serde(default = "default_min_det")]
    pub min_bus_detuning_mhz: f64,
    #[serde(default = "default_guard")]
    pub neighbor_guard_mhz: f64,
    #[serde(default)]
    pub neighbor_modes_ghz: Vec<f64>,
}

fn default_min_det() -> f64 {
    150.0
}

fn default_guard() -> f64 {
    500.0
}

/// Raw file contents.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub device: DeviceConfig,
    #[serde(default)]
    pub qubits: Vec<QubitConfig>,
    /// Sidebands per side N.
    #[serde(default = "default_truncation")]
    pub truncation: usize,
    /// Bus Fock cutoff for time evolution.
    #[serde(default = "default_fock")]
    pub fock_cutoff: usize,
    pub spectrum: Option<SpectrumTask>,
    pub sidebands: Option<SidebandTask>,
    pub coupling: Option<CouplingTask>,
    pub chevron: Option<ChevronTask>,
    #[serde(rename = "zz-scan", alias = "zz_scan")]
    pub zz_scan: Option<ZzScanTask>,
    pub qpt: Option<QptTask>,
    pub allocate: Option<AllocateTask>,
}

fn default_truncation() -> usize {
    3
}

fn default_fock() -> usize {
    3
}

/// The task sections a config can hold.
pub const TASKS: [&str; 7] = ["spectrum", "sidebands", "coupling", "chevron", "zz-scan", "qpt", "allocate"];

impl RunConfig {
    /// Parses TOML, or JSON when the path ends in `.json`.
    pub fn parse(text: &str, json: bool) -> Result<Self, ConfigError> {
        if json {
            serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
        } else {
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
        }
    }

    pub fn load(path: &Path) -> Result<(Self, String), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.display().to_string(), msg: e.to_string() })?;
        let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        Ok((Self::parse(&text, json)?, text))
    }

    /// Names of the task sections present.
    pub fn tasks(&self) -> Vec<&'static str> {
        let present = [
            self.spectrum.is_some(),
            self.sidebands.is_some(),
            self.coupling.is_some(),
            self.chevron.is_some(),
            self.zz_scan.is_some(),
            self.qpt.is_some(),
            self.allocate.is_some(),
        ];
        TASKS.iter().zip(present).filter(|(_, p)| *p).map(|(t, _)| *t).collect()
    }

    /// The single task section, required to match `requested` when given.
    pub fn single_task(&self, requested: Option<&str>) -> Result<&'static str, ConfigError> {
        let tasks = self.tasks();
        if tasks.len() != 1 {
            return Err(field("task", format!("exactly one task section is required, found {}", tasks.len())));
        }
        if let Some(r) = requested {
            if tasks[0] != r {
                return Err(field(r, format!("config holds a `{}` section, not `{r}`", tasks[0])));
            }
        }
        Ok(tasks[0])
    }

    pub fn device(&self) -> Result<BusCircuitParams, ConfigError> {
        let base = BusCircuitParams::fitted_device();
        let d = &self.device;
        let p = BusCircuitParams {
            e_c: d.e_c_ghz.unwrap_or(base.e_c),
            e_j_sum: d.e_j_sum_ghz.unwrap_or(base.e_j_sum),
            e_l0: d.e_l0_ghz.unwrap_or(base.e_l0),
            v: d.v_frac_c.map_or(base.v, |f| f * C_LIGHT),
            length: d.length_m.unwrap_or(base.length),
            asym: d.asym.unwrap_or(base.asym),
        };
        p.validate().map_err(|e| field("device", e.to_string()))?;
        Ok(p)
    }

    /// All qubits converted to internal units, keyed by label.
    pub fn qubits(&self) -> Result<BTreeMap<usize, QubitParams>, ConfigError> {
        let mut out = BTreeMap::new();
        for q in &self.qubits {
            let mut p = QubitParams::new(q.index, ghz(q.freq_ghz), mhz(q.alpha_mhz), q.x_m, mhz(q.g0_mhz));
            p.dist = q.dist_m;
            p.t1 = q.t1_us.map(us_to_ns);
            p.t2r = q.t2r_us.map(us_to_ns);
            p.t2e = q.t2e_us.map(us_to_ns);
            p.validate().map_err(|e| field(&format!("qubits[{}]", q.index), e.to_string()))?;
            if out.insert(q.index, p).is_some() {
                return Err(field("qubits", format!("duplicate qubit index {}", q.index)));
            }
        }
        Ok(out)
    }

    /// Looks up qubit labels referenced by a task.
    pub fn pick(&self, labels: &[usize], what: &str, counts: &[usize]) -> Result<Vec<QubitParams>, ConfigError> {
        if !counts.contains(&labels.len()) {
            return Err(field(what, format!("expected {counts:?} qubit labels, got {}", labels.len())));
        }
        let all = self.qubits()?;
        labels.iter().map(|l| all.get(l).copied().ok_or_else(|| field(what, format!("qubit {l} is not defined")))).collect()
    }

    /// Checks the parts that do not need any computation.
    pub fn validate_static(&self, task: &str) -> Result<(), ConfigError> {
        self.device()?;
        self.qubits()?;
        if self.truncation == 0 {
            return Err(field("truncation", "must be at least 1"));
        }
        let nonempty = |name: &str, n: usize| if n == 0 { Err(field(name, "sweep grid is empty")) } else { Ok(()) };
        match task {
            "spectrum" => {
                let t = self.spectrum.as_ref().unwrap();
                nonempty("spectrum.points", t.points)?;
                if t.modes == 0 {
                    return Err(field("spectrum.modes", "must be at least 1"));
                }
            }
            "sidebands" => {
                let t = self.sidebands.as_ref().unwrap();
                t.delta_grid()?;
                nonempty("sidebands.omega_f_ghz", t.omega_f_ghz.len())?;
                self.pick(&[t.qubit], "sidebands.qubit", &[1])?;
                check_mode("sidebands.mode", t.mode)?;
            }
            "coupling" => {
                let t = self.coupling.as_ref().unwrap();
                t.delta_grid()?;
                nonempty("coupling.omega_f_ghz", t.omega_f_ghz.len())?;
                self.pick(&t.qubits, "coupling.qubits", &[1, 2])?;
                check_mode("coupling.mode", t.mode)?;
            }
            "chevron" => {
                let t = self.chevron.as_ref().unwrap();
                nonempty("chevron.omega_f_points", t.omega_f_points)?;
                nonempty("chevron.t_points", t.t_points)?;
                self.pick(&t.qubits, "chevron.qubits", &[1, 2])?;
                check_mode("chevron.mode", t.mode)?;
                if !(t.t_final_ns > 0.0) {
                    return Err(field("chevron.t_final_ns", "must be positive"));
                }
            }
            "zz-scan" => {
                let t = self.zz_scan.as_ref().unwrap();
                nonempty("zz-scan.points", t.points)?;
                self.pick(&t.qubits, "zz-scan.qubits", &[2])?;
                check_mode("zz-scan.mode", t.mode)?;
            }
            "qpt" => {
                let t = self.qpt.as_ref().unwrap();
                match t.channel.as_str() {
                    "fsim" => {}
                    "lindblad" => {
                        self.pick(&t.qubits, "qpt.qubits", &[2])?;
                        if t.g12_mhz.is_none() {
                            return Err(field("qpt.g12_mhz", "required for the lindblad channel"));
                        }
                    }
                    other => return Err(field("qpt.channel", format!("unknown channel `{other}`"))),
                }
            }
            "allocate" => {
                let t = self.allocate.as_ref().unwrap();
                if t.n_qubits < 2 {
                    return Err(field("allocate.n_qubits", "must be at least 2"));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

fn check_mode(name: &str, mode: usize) -> Result<(), ConfigError> {
    if mode == 0 {
        return Err(field(name, "modes are numbered from 1"));
    }
    Ok(())
}

/// Flux in units of π to radians.
pub fn pi_units(x: f64) -> f64 {
    x * PI
}

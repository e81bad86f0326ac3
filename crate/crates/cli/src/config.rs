use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use spinrelax_core::hopping::SurvivalForm;
use spinrelax_core::noise::{FieldComponent, LayerKind};
use spinrelax_core::sequence::SequenceKind;

use crate::error::{CliError, CliResult};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "SPINRELAX_OUT";
pub const DEFAULT_OUT: &str = "spinrelax-out";

/// Keys a config file may set at top level for every command.
const SHARED_KEYS: [&str; 2] = ["seed", "realizations"];

fn larmor() -> f64 {
    2.0 * PI * 3.11
}

fn ramsey_detuning() -> f64 {
    2.0 * PI * 9.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub seq: SequenceKind,
    pub w: f64,
    pub tau: f64,
    pub omega_l: f64,
    /// Dipolar T2, us; `inf` drops the envelope.
    pub t2: f64,
    pub detuning: f64,
    pub tmax: f64,
    pub points: usize,
    pub numeric: bool,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            seq: SequenceKind::Echo,
            w: 4.40,
            tau: 14.6,
            omega_l: larmor(),
            t2: 1.41,
            detuning: 0.0,
            tmax: 5.0,
            points: 201,
            numeric: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Sz,
    SpinLock,
    Ramsey,
    Echo,
    Xy4,
    Mrev8,
}

impl Observable {
    pub fn name(self) -> &'static str {
        match self {
            Observable::Sz => "sz",
            Observable::SpinLock => "spin_lock",
            Observable::Ramsey => "ramsey",
            Observable::Echo => "echo",
            Observable::Xy4 => "xy4",
            Observable::Mrev8 => "mrev8",
        }
    }

    pub fn sequence(self) -> Option<SequenceKind> {
        match self {
            Observable::Ramsey => Some(SequenceKind::Ramsey),
            Observable::Echo => Some(SequenceKind::Echo),
            Observable::Xy4 => Some(SequenceKind::XY4),
            Observable::Mrev8 => Some(SequenceKind::MREV8InEcho),
            Observable::Sz | Observable::SpinLock => None,
        }
    }
}

impl std::str::FromStr for Observable {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        serde_json::from_value(Value::String(s.replace('-', "_"))).map_err(|_| {
            format!("unknown observable {s:?}; expected sz, spin_lock, ramsey, echo, xy4, mrev8")
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub observable: Observable,
    pub n_spins: usize,
    /// Mean separation, nm; sets the areal density 1/a^2.
    pub separation: f64,
    pub min_radius: f64,
    pub w: f64,
    pub tau: f64,
    pub omega_l: f64,
    /// Spin-lock drive, rad/us.
    pub drive: f64,
    pub detuning: f64,
    pub tmax: f64,
    pub points: usize,
    pub dt: Option<f64>,
    pub ising_only: bool,
    pub realizations: usize,
    pub seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            observable: Observable::Sz,
            n_spins: 6,
            separation: 8.4,
            min_radius: 2.0,
            w: 4.40,
            tau: 14.6,
            omega_l: 0.0,
            drive: 0.0,
            detuning: 0.0,
            tmax: 10.0,
            points: 51,
            dt: None,
            ising_only: false,
            realizations: 100,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoppingConfig {
    pub w: f64,
    pub tau: f64,
    pub j1: f64,
    /// Mean coupling J used in the T_z relation, rad/us.
    pub j: f64,
    pub kappa: f64,
    pub alpha: f64,
    pub beta: f64,
    pub density: f64,
    pub r0: f64,
    pub form: SurvivalForm,
    /// Defaults to 100 tau.
    pub tmax: Option<f64>,
    pub points: usize,
    pub scan_wtau: bool,
    pub scan_w: Vec<f64>,
    pub scan_tau: Vec<f64>,
}

impl Default for HoppingConfig {
    fn default() -> Self {
        Self {
            w: 4.40,
            tau: 14.6,
            j1: 0.71,
            j: 0.57,
            kappa: 0.31,
            alpha: 5.0,
            beta: 1.0,
            density: 0.0142,
            r0: 2.0,
            form: SurvivalForm::Shifted,
            tmax: None,
            points: 200,
            scan_wtau: false,
            scan_w: vec![2.5, 3.5, 4.4, 5.5],
            scan_tau: vec![6.0, 10.0, 14.6, 22.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    Joint,
    Stretched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub mode: FitMode,
    pub fixture: bool,
    pub ramsey: Option<PathBuf>,
    pub echo: Option<PathBuf>,
    pub xy4: Option<PathBuf>,
    pub mrev8: Option<PathBuf>,
    pub input: Option<PathBuf>,
    /// Fixed stretch power; free when absent.
    pub power: Option<f64>,
    pub j1: f64,
    pub w: f64,
    pub tau: f64,
    pub delta: f64,
    pub omega_l: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            mode: FitMode::Joint,
            fixture: false,
            ramsey: None,
            echo: None,
            xy4: None,
            mrev8: None,
            input: None,
            power: None,
            j1: 0.71,
            w: 4.40,
            tau: 14.6,
            delta: ramsey_detuning(),
            omega_l: larmor(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollapseConfig {
    pub inputs: Vec<PathBuf>,
    pub w: Vec<f64>,
    pub tau: Vec<f64>,
    pub j1: Vec<f64>,
    /// Measured T_z per curve; predicted when empty.
    pub tz: Vec<f64>,
    pub j: f64,
    pub kappa: f64,
}

impl Default for CollapseConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            w: Vec::new(),
            tau: Vec::new(),
            j1: Vec::new(),
            tz: Vec::new(),
            j: 0.57,
            kappa: 0.31,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityConfig {
    pub input: Option<PathBuf>,
    pub w: f64,
    pub tau: f64,
    pub omega_l: f64,
    pub sep_min: f64,
    pub sep_max: f64,
    pub sep_step: f64,
    pub neighbors: usize,
    pub dt: Option<f64>,
    pub realizations: usize,
    pub seed: u64,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self {
            input: None,
            w: 4.40,
            tau: 14.6,
            omega_l: 0.0,
            sep_min: 5.0,
            sep_max: 12.0,
            sep_step: 0.5,
            neighbors: 5,
            dt: None,
            realizations: 500,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DepthConfig {
    /// Field rms, G.
    pub brms: Option<f64>,
    /// Noise width, rad/us; converted to a field rms when `brms` is absent.
    pub w: Option<f64>,
    pub layer: LayerKind,
    pub proton_density: f64,
    pub component: FieldComponent,
    pub spin_quantum: f64,
    pub max_depth: f64,
}

impl Default for DepthConfig {
    fn default() -> Self {
        Self {
            brms: None,
            w: None,
            layer: LayerKind::HalfSpace,
            proton_density: 50.0,
            component: FieldComponent::Longitudinal,
            spin_quantum: 0.5,
            max_depth: spinrelax_core::noise::DEFAULT_MAX_DEPTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct T1rhoConfig {
    pub w: f64,
    pub tau: f64,
    pub omega_l: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub points: usize,
    pub log: bool,
    pub prefactor: f64,
}

impl Default for T1rhoConfig {
    fn default() -> Self {
        Self {
            w: 4.40,
            tau: 14.6,
            omega_l: larmor(),
            omega_min: 0.05,
            omega_max: 100.0,
            points: 120,
            log: true,
            prefactor: spinrelax_core::hopping::T1RHO_PREFACTOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub j1: f64,
    pub w: f64,
    pub tau: f64,
    pub delta: f64,
    pub omega_l: f64,
    /// Absolute Gaussian noise on each point.
    pub noise: f64,
    pub points: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            j1: 0.71,
            w: 4.40,
            tau: 14.6,
            delta: ramsey_detuning(),
            omega_l: larmor(),
            noise: 0.02,
            points: 80,
            seed: 0,
        }
    }
}

/// A config file: `[command]` tables plus shared top-level keys.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    root: serde_json::Map<String, Value>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let table: toml::Table = toml::from_str(text).map_err(|e| e.to_string())?;
        match serde_json::to_value(table).map_err(|e| e.to_string())? {
            Value::Object(root) => Ok(Self { root }),
            _ => Err("config root must be a table".into()),
        }
    }

    pub fn out_dir(&self) -> Option<PathBuf> {
        self.root
            .get("out")
            .and_then(Value::as_str)
            .map(PathBuf::from)
    }

    pub fn threads(&self) -> Option<usize> {
        self.root
            .get("threads")
            .and_then(Value::as_u64)
            .map(|v| v as usize)
    }
}

fn overlay(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                if v.is_null() {
                    continue;
                }
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => overlay(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, t) => *b = t,
    }
}

/// Defaults, then the file's shared keys and `[section]`, then CLI flags.
pub fn resolve<T, O>(file: &ConfigFile, section: &str, cli: &O) -> CliResult<T>
where
    T: Default + Serialize + DeserializeOwned,
    O: Serialize,
{
    let mut v = serde_json::to_value(T::default()).map_err(|e| CliError::config(e.to_string()))?;
    let shared: serde_json::Map<String, Value> = SHARED_KEYS
        .iter()
        .filter(|k| v.get(**k).is_some())
        .filter_map(|k| file.root.get(*k).map(|x| (k.to_string(), x.clone())))
        .collect();
    overlay(&mut v, Value::Object(shared));
    if let Some(sec) = file.root.get(section) {
        if !sec.is_object() {
            return Err(CliError::config(format!("[{section}] must be a table")));
        }
        overlay(&mut v, sec.clone());
    }
    overlay(
        &mut v,
        serde_json::to_value(cli).map_err(|e| CliError::config(e.to_string()))?,
    );
    serde_json::from_value(v).map_err(|e| CliError::config(format!("[{section}]: {e}")))
}

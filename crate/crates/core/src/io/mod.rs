//! Case-file and scenario ingestion, validation, study output files, and
//! the command-line interface.
//!
//! Both formats are versioned, human-editable JSON. The case file is the
//! physical system (network plus devices, per-unit on its MVA base, powers
//! in MW/MVAr); the scenario selects which noise sources are active and
//! carries integration and study settings, referencing a case by path.

pub mod cli;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::devices::{
    DeviceSet, ErlLoad, Generator, GeneratorKind, Ltc, RampLoad, RenewableInjection,
    RenewableKind, StaticLoad,
};
use crate::error::ValidationError;
use crate::integrator::{ChannelSpec, ChannelTarget, SimSetup, StepConfig};
use crate::montecarlo::StudyConfig;
use crate::network::{Branch, Bus, BusType, NetworkCase};
use crate::stochastic::{OuParams, OuScheme};

pub const CASE_FORMAT_VERSION: u32 = 1;
pub const SCENARIO_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: line {line}, column {column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

/// LTC entry as written in case files: the branch is referenced by its
/// endpoints, and the controlled bus must be the branch's `to` side (the
/// tap sits on `from`, so lowering it raises the controlled voltage).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtcEntry {
    pub branch_from: u32,
    pub branch_to: u32,
    pub controlled_bus: u32,
    pub v_ref: f64,
    #[serde(default = "default_deadband")]
    pub deadband: f64,
    pub tap_min: f64,
    pub tap_max: f64,
    #[serde(default = "default_initial_delay")]
    pub initial_delay: f64,
    #[serde(default = "default_subsequent_delay")]
    pub subsequent_delay: f64,
    #[serde(default = "default_tap_rate")]
    pub tap_rate: f64,
}

fn default_deadband() -> f64 {
    0.01
}
fn default_initial_delay() -> f64 {
    20.0
}
fn default_subsequent_delay() -> f64 {
    5.0
}
fn default_tap_rate() -> f64 {
    0.01
}

/// On-disk case schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseFile {
    pub format_version: u32,
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    #[serde(default)]
    pub generators: Vec<Generator>,
    #[serde(default)]
    pub erl_loads: Vec<ErlLoad>,
    pub ramp_load: RampLoad,
    #[serde(default)]
    pub static_loads: Vec<StaticLoad>,
    #[serde(default)]
    pub ltcs: Vec<LtcEntry>,
    #[serde(default)]
    pub renewables: Vec<RenewableInjection>,
}

/// A parsed and validated case: the network, the devices, and the raw file
/// for re-serialization.
#[derive(Debug, Clone)]
pub struct LoadedCase {
    pub network: NetworkCase,
    pub devices: DeviceSet,
    pub raw: CaseFile,
}

fn err(file: &str, field: impl Into<String>, constraint: impl Into<String>) -> ValidationError {
    ValidationError::new(file, field, constraint)
}

/// Parses and validates a case file.
pub fn load_case(path: &Path) -> Result<LoadedCase, IoError> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let raw: CaseFile = serde_json::from_str(&text).map_err(|e| IoError::Parse {
        path: path.display().to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let loaded = validate_case(raw, &path.display().to_string())?;
    Ok(loaded)
}

/// Structural validation; every failure names the offending field.
pub fn validate_case(raw: CaseFile, file: &str) -> Result<LoadedCase, ValidationError> {
    if raw.format_version != CASE_FORMAT_VERSION {
        return Err(err(
            file,
            "format_version",
            format!(
                "expected {CASE_FORMAT_VERSION}, got {}",
                raw.format_version
            ),
        ));
    }
    if !(raw.base_mva > 0.0) {
        return Err(err(file, "base_mva", "must be positive"));
    }
    if raw.buses.is_empty() {
        return Err(err(file, "buses", "at least one bus is required"));
    }
    let mut seen = std::collections::HashSet::new();
    for b in &raw.buses {
        if !seen.insert(b.id) {
            return Err(err(file, "buses.id", format!("duplicate bus id {}", b.id)));
        }
        if matches!(b.bus_type, BusType::Slack | BusType::Pv) {
            match b.v_set {
                Some(v) if v > 0.0 => {}
                _ => {
                    return Err(err(
                        file,
                        "buses.v_set",
                        format!("bus {} is {:?} and needs a positive v_set", b.id, b.bus_type),
                    ))
                }
            }
        }
    }
    let n_slack = raw
        .buses
        .iter()
        .filter(|b| b.bus_type == BusType::Slack)
        .count();
    if n_slack != 1 {
        return Err(err(
            file,
            "buses.type",
            format!("exactly one slack bus required, found {n_slack}"),
        ));
    }
    let network = NetworkCase::new(
        raw.name.clone(),
        raw.base_mva,
        raw.buses.clone(),
        raw.branches.clone(),
    );
    for (i, br) in raw.branches.iter().enumerate() {
        if network.bus_index(br.from).is_none() {
            return Err(err(
                file,
                format!("branches[{i}].from"),
                format!("bus {} does not exist", br.from),
            ));
        }
        if network.bus_index(br.to).is_none() {
            return Err(err(
                file,
                format!("branches[{i}].to"),
                format!("bus {} does not exist", br.to),
            ));
        }
        if !(br.tap > 0.0) {
            return Err(err(file, format!("branches[{i}].tap"), "must be positive"));
        }
        if br.r == 0.0 && br.x == 0.0 {
            return Err(err(
                file,
                format!("branches[{i}]"),
                "series impedance must be nonzero",
            ));
        }
    }
    if !network.is_connected() {
        return Err(err(file, "branches", "network graph is not connected"));
    }

    let bus_exists = |id: u32| network.bus_index(id).is_some();
    let bus_type = |id: u32| raw.buses[network.bus_index(id).unwrap()].bus_type;

    let mut gen_buses = std::collections::HashSet::new();
    let mut n_slack_gen = 0;
    for (i, g) in raw.generators.iter().enumerate() {
        if !bus_exists(g.bus) {
            return Err(err(
                file,
                format!("generators[{i}].bus"),
                format!("bus {} does not exist", g.bus),
            ));
        }
        if !gen_buses.insert(g.bus) {
            return Err(err(
                file,
                format!("generators[{i}].bus"),
                format!("more than one generator at bus {}", g.bus),
            ));
        }
        if g.q_min > g.q_max {
            return Err(err(
                file,
                format!("generators[{i}].q_min"),
                "q_min must not exceed q_max",
            ));
        }
        if !(g.v_set > 0.0) {
            return Err(err(
                file,
                format!("generators[{i}].v_set"),
                "must be positive",
            ));
        }
        match g.kind {
            GeneratorKind::Slack => {
                n_slack_gen += 1;
                if bus_type(g.bus) != BusType::Slack {
                    return Err(err(
                        file,
                        format!("generators[{i}].kind"),
                        format!("slack generator must sit on the slack bus, bus {} is not", g.bus),
                    ));
                }
            }
            GeneratorKind::PvWithQlimit => {
                if bus_type(g.bus) != BusType::Pv {
                    return Err(err(
                        file,
                        format!("generators[{i}].kind"),
                        format!("pv generator requires bus {} to be typed pv", g.bus),
                    ));
                }
            }
        }
    }
    if n_slack_gen != 1 {
        return Err(err(
            file,
            "generators",
            format!("exactly one slack generator required, found {n_slack_gen}"),
        ));
    }
    for b in &raw.buses {
        if b.bus_type == BusType::Pv && !gen_buses.contains(&b.id) {
            return Err(err(
                file,
                "buses.type",
                format!("pv bus {} has no generator", b.id),
            ));
        }
    }

    let mut load_buses = std::collections::HashSet::new();
    for (i, l) in raw.erl_loads.iter().enumerate() {
        if !bus_exists(l.bus) {
            return Err(err(
                file,
                format!("erl_loads[{i}].bus"),
                format!("bus {} does not exist", l.bus),
            ));
        }
        if !load_buses.insert(l.bus) {
            return Err(err(
                file,
                format!("erl_loads[{i}].bus"),
                format!("more than one load at bus {}", l.bus),
            ));
        }
        if !(l.t_p > 0.0 && l.t_q > 0.0) {
            return Err(err(
                file,
                format!("erl_loads[{i}].t_p"),
                "time constants must be positive",
            ));
        }
        if !(l.v0 > 0.0) {
            return Err(err(file, format!("erl_loads[{i}].v0"), "must be positive"));
        }
    }
    for (i, l) in raw.static_loads.iter().enumerate() {
        if !bus_exists(l.bus) {
            return Err(err(
                file,
                format!("static_loads[{i}].bus"),
                format!("bus {} does not exist", l.bus),
            ));
        }
        if !load_buses.insert(l.bus) {
            return Err(err(
                file,
                format!("static_loads[{i}].bus"),
                format!("more than one load at bus {}", l.bus),
            ));
        }
    }
    let ramp = &raw.ramp_load;
    if !bus_exists(ramp.bus) {
        return Err(err(
            file,
            "ramp_load.bus",
            format!("bus {} does not exist", ramp.bus),
        ));
    }
    if !load_buses.insert(ramp.bus) {
        return Err(err(
            file,
            "ramp_load.bus",
            format!("more than one load at bus {}", ramp.bus),
        ));
    }
    // A ramp colocated with the slack would be served locally and never
    // stress the network.
    if bus_type(ramp.bus) == BusType::Slack {
        return Err(err(
            file,
            "ramp_load.bus",
            "the ramp load must not sit on the slack bus",
        ));
    }
    if !(ramp.p0 > 0.0) {
        return Err(err(file, "ramp_load.p0", "must be positive"));
    }
    if ramp.rate < 0.0 {
        return Err(err(file, "ramp_load.rate", "must be non-negative"));
    }
    if ramp.z0 < 0.0 {
        return Err(err(file, "ramp_load.z0", "must be non-negative"));
    }

    let mut res_buses = std::collections::HashSet::new();
    for (i, r) in raw.renewables.iter().enumerate() {
        if !bus_exists(r.bus) {
            return Err(err(
                file,
                format!("renewables[{i}].bus"),
                format!("bus {} does not exist", r.bus),
            ));
        }
        if !res_buses.insert(r.bus) {
            return Err(err(
                file,
                format!("renewables[{i}].bus"),
                format!("more than one renewable at bus {}", r.bus),
            ));
        }
        if !(r.power_factor > 0.0 && r.power_factor <= 1.0) {
            return Err(err(
                file,
                format!("renewables[{i}].power_factor"),
                "must lie in (0, 1]",
            ));
        }
        match &r.kind {
            RenewableKind::Wind { curve, weibull } => {
                if !(weibull.lambda > 0.0 && weibull.k > 0.0 && weibull.alpha_w > 0.0) {
                    return Err(err(
                        file,
                        format!("renewables[{i}].weibull"),
                        "lambda, k, alpha_w must be positive",
                    ));
                }
                if !(curve.cut_in < curve.rated && curve.rated <= curve.cut_out) {
                    return Err(err(
                        file,
                        format!("renewables[{i}].curve"),
                        "speeds must satisfy cut_in < rated <= cut_out",
                    ));
                }
                if !(curve.p_rated > 0.0) {
                    return Err(err(
                        file,
                        format!("renewables[{i}].curve.p_rated"),
                        "must be positive",
                    ));
                }
            }
            RenewableKind::Solar {
                pv,
                beta,
                irradiance_max,
            } => {
                if !(beta.p > 0.0 && beta.q > 0.0 && beta.alpha_s > 0.0) {
                    return Err(err(
                        file,
                        format!("renewables[{i}].beta"),
                        "p, q, alpha_s must be positive",
                    ));
                }
                if !(pv.r_c > 0.0 && pv.r_c < pv.r_std) {
                    return Err(err(
                        file,
                        format!("renewables[{i}].pv"),
                        "thresholds must satisfy 0 < r_c < r_std",
                    ));
                }
                if !(pv.p_rated > 0.0) {
                    return Err(err(
                        file,
                        format!("renewables[{i}].pv.p_rated"),
                        "must be positive",
                    ));
                }
                if !(*irradiance_max > 0.0) {
                    return Err(err(
                        file,
                        format!("renewables[{i}].irradiance_max"),
                        "must be positive",
                    ));
                }
            }
        }
    }

    let mut ltcs = Vec::with_capacity(raw.ltcs.len());
    for (i, l) in raw.ltcs.iter().enumerate() {
        let branch = raw
            .branches
            .iter()
            .position(|b| b.from == l.branch_from && b.to == l.branch_to)
            .ok_or_else(|| {
                err(
                    file,
                    format!("ltcs[{i}].branch_from"),
                    format!("no branch {} -> {}", l.branch_from, l.branch_to),
                )
            })?;
        if l.controlled_bus != l.branch_to {
            return Err(err(
                file,
                format!("ltcs[{i}].controlled_bus"),
                "must be the to-side bus of the tapped branch",
            ));
        }
        let tap0 = raw.branches[branch].tap;
        if !(l.tap_min <= tap0 && tap0 <= l.tap_max) {
            return Err(err(
                file,
                format!("ltcs[{i}].tap_min"),
                format!("initial tap {tap0} outside [{}, {}]", l.tap_min, l.tap_max),
            ));
        }
        if !(l.deadband > 0.0) {
            return Err(err(file, format!("ltcs[{i}].deadband"), "must be positive"));
        }
        if !(l.initial_delay > 0.0 && l.subsequent_delay > 0.0) {
            return Err(err(
                file,
                format!("ltcs[{i}].initial_delay"),
                "delays must be positive",
            ));
        }
        if !(l.tap_rate > 0.0) {
            return Err(err(file, format!("ltcs[{i}].tap_rate"), "must be positive"));
        }
        ltcs.push(Ltc {
            controlled_bus: l.controlled_bus,
            branch,
            v_ref: l.v_ref,
            deadband: l.deadband,
            tap_min: l.tap_min,
            tap_max: l.tap_max,
            initial_delay: l.initial_delay,
            subsequent_delay: l.subsequent_delay,
            tap_rate: l.tap_rate,
        });
    }

    let devices = DeviceSet {
        erl_loads: raw.erl_loads.clone(),
        ramp: raw.ramp_load.clone(),
        static_loads: raw.static_loads.clone(),
        generators: raw.generators.clone(),
        ltcs,
        renewables: raw.renewables.clone(),
    };
    Ok(LoadedCase {
        network,
        devices,
        raw,
    })
}

/// Global load-noise block; `beta` defaults to `sqrt(2 alpha) * p0` of each
/// load, making `sigma` the relative noise strength (stationary deviation
/// `sigma * p0` in MW). An explicit `beta` is absolute in MW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadNoise {
    pub sigma: f64,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

/// Per-load override of the global block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerLoadNoise {
    pub bus: u32,
    #[serde(default)]
    pub off: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RenewableNoise {
    #[serde(default)]
    pub wind: bool,
    #[serde(default)]
    pub solar: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationSettings {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub scheme: OuScheme,
    #[serde(default = "default_max_time")]
    pub max_time: f64,
    #[serde(default = "default_eigen_interval")]
    pub eigen_interval: usize,
    #[serde(default = "default_voltage_floor")]
    pub voltage_floor: f64,
}

fn default_dt() -> f64 {
    0.05
}
fn default_max_time() -> f64 {
    2000.0
}
fn default_eigen_interval() -> usize {
    5
}
fn default_voltage_floor() -> f64 {
    0.5
}

impl Default for IntegrationSettings {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            scheme: OuScheme::default(),
            max_time: default_max_time(),
            eigen_interval: default_eigen_interval(),
            voltage_floor: default_voltage_floor(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QLimitSettings {
    #[serde(default = "default_true")]
    pub enabled: bool,
    #[serde(default)]
    pub reversible: bool,
    /// Violations must persist this long (s) before a machine latches.
    #[serde(default)]
    pub delay_s: f64,
}

fn default_true() -> bool {
    true
}

impl Default for QLimitSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            reversible: false,
            delay_s: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudySettings {
    #[serde(default = "default_trials")]
    pub n_trials: u64,
    #[serde(default = "default_seed")]
    pub base_seed: u64,
    #[serde(default = "default_bin_width")]
    pub histogram_bin_mw: f64,
}

fn default_trials() -> u64 {
    100
}
fn default_seed() -> u64 {
    1
}
fn default_bin_width() -> f64 {
    10.0
}

impl Default for StudySettings {
    fn default() -> Self {
        Self {
            n_trials: default_trials(),
            base_seed: default_seed(),
            histogram_bin_mw: default_bin_width(),
        }
    }
}

/// On-disk scenario schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub format_version: u32,
    /// Case path, relative to the scenario file's directory.
    pub case: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load_noise: Option<LoadNoise>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_load_noise: Vec<PerLoadNoise>,
    #[serde(default)]
    pub renewable_noise: RenewableNoise,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ramp_rate: Option<f64>,
    #[serde(default)]
    pub integration: IntegrationSettings,
    #[serde(default)]
    pub q_limits: QLimitSettings,
    #[serde(default)]
    pub study: StudySettings,
}

impl ScenarioFile {
    /// Noise-free scenario wrapping a bare case path.
    pub fn default_for_case(case: impl Into<String>) -> Self {
        Self {
            format_version: SCENARIO_FORMAT_VERSION,
            case: case.into(),
            load_noise: None,
            per_load_noise: Vec::new(),
            renewable_noise: RenewableNoise::default(),
            ramp_rate: None,
            integration: IntegrationSettings::default(),
            q_limits: QLimitSettings::default(),
            study: StudySettings::default(),
        }
    }
}

/// A parsed scenario together with its resolved case.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: ScenarioFile,
    pub case: LoadedCase,
    pub case_path: PathBuf,
}

pub fn load_scenario(path: &Path) -> Result<LoadedScenario, IoError> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let scenario: ScenarioFile = serde_json::from_str(&text).map_err(|e| IoError::Parse {
        path: path.display().to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let file = path.display().to_string();
    if scenario.format_version != SCENARIO_FORMAT_VERSION {
        return Err(err(
            &file,
            "format_version",
            format!(
                "expected {SCENARIO_FORMAT_VERSION}, got {}",
                scenario.format_version
            ),
        )
        .into());
    }
    let case_path = path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&scenario.case);
    let case = load_case(&case_path)?;
    let loaded = LoadedScenario {
        scenario,
        case,
        case_path,
    };
    validate_scenario(&loaded, &file)?;
    Ok(loaded)
}

fn validate_scenario(loaded: &LoadedScenario, file: &str) -> Result<(), ValidationError> {
    let s = &loaded.scenario;
    if let Some(n) = &s.load_noise {
        if !(n.alpha > 0.0) {
            return Err(err(file, "load_noise.alpha", "must be positive"));
        }
        if n.sigma < 0.0 {
            return Err(err(file, "load_noise.sigma", "must be non-negative"));
        }
    }
    for (i, p) in s.per_load_noise.iter().enumerate() {
        if !loaded
            .case
            .devices
            .erl_loads
            .iter()
            .any(|l| l.bus == p.bus)
        {
            return Err(err(
                file,
                format!("per_load_noise[{i}].bus"),
                format!("no recovery load at bus {}", p.bus),
            ));
        }
    }
    if !(s.integration.dt > 0.0) {
        return Err(err(file, "integration.dt", "must be positive"));
    }
    if !(s.integration.max_time > 0.0) {
        return Err(err(file, "integration.max_time", "must be positive"));
    }
    if s.integration.eigen_interval == 0 {
        return Err(err(file, "integration.eigen_interval", "must be at least 1"));
    }
    if let Some(r) = s.ramp_rate {
        if r < 0.0 {
            return Err(err(file, "ramp_rate", "must be non-negative"));
        }
    }
    if s.study.n_trials == 0 {
        return Err(err(file, "study.n_trials", "must be at least 1"));
    }
    if !(s.study.histogram_bin_mw > 0.0) {
        return Err(err(file, "study.histogram_bin_mw", "must be positive"));
    }
    Ok(())
}

/// Builds the immutable simulation setup (with noise channels bound per the
/// scenario) and the study configuration.
pub fn build_setup(loaded: &LoadedScenario) -> (SimSetup, StudyConfig) {
    let scenario = &loaded.scenario;
    let mut devices = loaded.case.devices.clone();
    if let Some(rate) = scenario.ramp_rate {
        devices.ramp.rate = rate;
    }

    let mut channels = Vec::new();
    for (i, load) in devices.erl_loads.iter().enumerate() {
        let overrides = scenario
            .per_load_noise
            .iter()
            .find(|p| p.bus == load.bus);
        if overrides.map(|o| o.off).unwrap_or(false) {
            continue;
        }
        let Some(base) = scenario.load_noise.or_else(|| {
            // A per-load block alone can switch noise on for one bus.
            overrides.and_then(|o| {
                Some(LoadNoise {
                    sigma: o.sigma?,
                    alpha: o.alpha?,
                    beta: o.beta,
                })
            })
        }) else {
            continue;
        };
        let sigma = overrides.and_then(|o| o.sigma).unwrap_or(base.sigma);
        let alpha = overrides.and_then(|o| o.alpha).unwrap_or(base.alpha);
        let beta = overrides
            .and_then(|o| o.beta)
            .or(base.beta)
            .unwrap_or_else(|| (2.0 * alpha).sqrt() * load.p0);
        if sigma == 0.0 {
            continue;
        }
        channels.push(ChannelSpec {
            params: OuParams::new(alpha, beta, sigma),
            target: ChannelTarget::ErlLoad(i),
        });
    }
    for (i, inj) in devices.renewables.iter().enumerate() {
        match &inj.kind {
            RenewableKind::Wind { weibull, .. } if scenario.renewable_noise.wind => {
                channels.push(ChannelSpec {
                    // Unit-variance channel: the memoryless transform expects
                    // a standard Gaussian after the beta/sqrt(2 alpha) scaling.
                    params: OuParams::new(weibull.alpha_w, (2.0 * weibull.alpha_w).sqrt(), 1.0),
                    target: ChannelTarget::Wind(i),
                });
            }
            RenewableKind::Solar { beta, .. } if scenario.renewable_noise.solar => {
                channels.push(ChannelSpec {
                    params: OuParams::new(beta.alpha_s, (2.0 * beta.alpha_s).sqrt(), 1.0),
                    target: ChannelTarget::Solar(i),
                });
            }
            _ => {}
        }
    }

    let config = StepConfig {
        dt: scenario.integration.dt,
        scheme: scenario.integration.scheme,
        max_time: scenario.integration.max_time,
        eigen_interval: scenario.integration.eigen_interval,
        voltage_floor: scenario.integration.voltage_floor,
        newton: Default::default(),
    };
    let setup = SimSetup::with_q_limit_delay(
        loaded.case.network.clone(),
        devices,
        channels,
        config,
        scenario.q_limits.enabled,
        scenario.q_limits.reversible,
        scenario.q_limits.delay_s,
    );
    let study = StudyConfig {
        n_trials: scenario.study.n_trials,
        base_seed: scenario.study.base_seed,
        parallelism: 0,
        dump_trajectories: false,
    };
    (setup, study)
}

/// Writes `margins.csv` (trial_id, seed, margin_mw, cause, t_collapse,
/// floor_events), one row per trial in trial order.
pub fn write_margins_csv(
    path: &Path,
    records: &[crate::montecarlo::TrialRecord],
) -> std::io::Result<()> {
    let mut buf = Vec::new();
    cli::write_margins_csv_to(&mut buf, records)?;
    std::fs::write(path, buf)
}

/// Parses `margins.csv` content; errors carry the offending line.
pub fn parse_margins_csv(text: &str) -> Result<Vec<crate::montecarlo::TrialRecord>, String> {
    cli::parse_margins_csv_text(text)
}

pub fn write_stats_json(path: &Path, stats: &crate::montecarlo::MarginStats) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(stats).expect("stats serialize");
    text.push('\n');
    std::fs::write(path, text)
}

pub fn write_histogram_csv(path: &Path, bins: &[(f64, u64)]) -> std::io::Result<()> {
    let mut buf = String::from("bin_left_mw,count\n");
    for (left, count) in bins {
        buf.push_str(&format!("{left},{count}\n"));
    }
    std::fs::write(path, buf)
}

/// Per-step dump: time, ramp scale, every bus voltage, every channel value.
pub fn write_trajectory_csv(
    path: &Path,
    setup: &SimSetup,
    rows: &[crate::integrator::TrajectoryRow],
) -> std::io::Result<()> {
    let mut buf = String::from("t,z");
    for bus in &setup.case.buses {
        buf.push_str(&format!(",v_{}", bus.id));
    }
    for k in 0..setup.channels.len() {
        buf.push_str(&format!(",eta_{k}"));
    }
    buf.push('\n');
    for row in rows {
        buf.push_str(&format!("{},{}", row.t, row.z));
        for v in &row.v {
            buf.push_str(&format!(",{v}"));
        }
        for e in &row.eta {
            buf.push_str(&format!(",{e}"));
        }
        buf.push('\n');
    }
    std::fs::write(path, buf)
}

//! JSON experiment configuration: defaults, file merging, `--set`
//! overrides, validation and translation into core parameter sets.

use std::fmt;

use phononlab_core::device::{self, udt, Carrier, Coherence, DephasingSource};
use phononlab_core::netsim::{ChannelParams, Engine, NetworkConfig, ProbeConfig, RamseyConfig, RevivalConfig, SawSetup};
use phononlab_core::sawmodel::{IdtParams, MirrorParams};
use phononlab_core::tomo::VisibilityMatrix;
use phononlab_core::{analysis, Complex64, TWO_PI};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scenario {
    Transfer,
    Bell,
    FreqMap,
    Interferometer,
    RamseyProbe,
    LossCharacterization,
    ProcessTomo,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::Transfer,
        Scenario::Bell,
        Scenario::FreqMap,
        Scenario::Interferometer,
        Scenario::RamseyProbe,
        Scenario::LossCharacterization,
        Scenario::ProcessTomo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Transfer => "transfer",
            Scenario::Bell => "bell",
            Scenario::FreqMap => "freq-map",
            Scenario::Interferometer => "interferometer",
            Scenario::RamseyProbe => "ramsey-probe",
            Scenario::LossCharacterization => "loss-characterization",
            Scenario::ProcessTomo => "process-tomo",
        }
    }

    pub fn parse(s: &str) -> Option<Scenario> {
        Scenario::ALL.into_iter().find(|x| x.name() == s)
    }

    pub fn allowed() -> String {
        Scenario::ALL.map(Scenario::name).join(", ")
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CarrierName {
    Uni,
    Bi,
}

impl From<CarrierName> for Carrier {
    fn from(c: CarrierName) -> Carrier {
        match c {
            CarrierName::Uni => Carrier::Uni,
            CarrierName::Bi => Carrier::Bi,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineChoice {
    /// Master equation for the uni carrier, field engine for bi.
    Auto,
    Cascaded,
    Field,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DephasingChoice {
    /// Echo T2, except Ramsey T2 for the interferometer's long storage.
    Auto,
    Echo,
    Ramsey,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoherenceBlock {
    pub t1_us: f64,
    pub t2_ramsey_us: f64,
    pub t2_echo_us: f64,
}

impl CoherenceBlock {
    fn from_device(c: Coherence) -> Self {
        Self { t1_us: tidy(c.t1 * 1e6), t2_ramsey_us: tidy(c.t2_ramsey * 1e6), t2_echo_us: tidy(c.t2_echo * 1e6) }
    }

    pub fn coherence(&self) -> Coherence {
        Coherence { t1: self.t1_us * 1e-6, t2_ramsey: self.t2_ramsey_us * 1e-6, t2_echo: self.t2_echo_us * 1e-6 }
    }
}

/// Coherence at each carrier plus the static detuning from the carrier.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeBlock {
    pub uni: CoherenceBlock,
    pub bi: CoherenceBlock,
    pub detuning_mhz: f64,
}

impl NodeBlock {
    fn device(node: usize) -> Self {
        Self {
            uni: CoherenceBlock::from_device(Carrier::Uni.coherence(node)),
            bi: CoherenceBlock::from_device(Carrier::Bi.coherence(node)),
            detuning_mhz: 0.0,
        }
    }

    pub fn at(&self, carrier: CarrierName) -> &CoherenceBlock {
        match carrier {
            CarrierName::Uni => &self.uni,
            CarrierName::Bi => &self.bi,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarrierFrequencies {
    pub uni_ghz: f64,
    pub bi_ghz: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelBlock {
    pub length_mm: f64,
    pub velocity_m_per_s: f64,
    /// Energy attenuation.
    pub alpha_np_per_m: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplerBlock {
    pub kappa_c_uni_mhz: f64,
    pub kappa_c_bi_mhz: f64,
    pub kappa_max_mhz: f64,
    /// π pulse to emission centre.
    pub lead_uni_ns: f64,
    pub lead_bi_ns: f64,
    /// Constant coupling of the frequency map.
    pub kappa_revival_mhz: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransducerBlock {
    pub idt_cells: usize,
    pub idt_wavelength_um: f64,
    pub idt_aperture_um: f64,
    pub idt_metallization: f64,
    /// Magnitude of the per-electrode reflectivity (phase −i).
    pub idt_reflectivity: f64,
    pub idt_dv_v: f64,
    pub mirror_electrodes: usize,
    pub mirror_wavelength_um: f64,
    pub mirror_reflectivity: f64,
    pub mirror_dv_v: f64,
    /// Effective velocity under the grating; sets its Bragg frequency.
    pub mirror_velocity_m_per_s: f64,
    pub d_eff_nm: f64,
    /// Directivity of the bare IDT at the bi carrier.
    pub bi_directivity: f64,
    pub kappa_udt_mhz: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeBlock {
    /// Purcell rate that fixes g for the interferometer.
    pub kappa_q_interf_mhz: f64,
    pub g_ramsey_mhz: f64,
    pub q2_probe_ghz: f64,
    pub dt_interf_ns: f64,
    pub dt_ramsey_ns: f64,
    pub phase_points: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutBlock {
    /// Rows are prepared states gg, ge, eg, ee.
    pub visibility: [[f64; 4]; 4],
    /// Invert the readout matrix before tomography.
    pub correct: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsBlock {
    pub dt_ns: f64,
    pub t_m_ns: f64,
    pub round_trips: Vec<usize>,
    pub revival_t_end_us: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Dotted config key, or `frequency_ghz` for the frequency map.
    pub variable: String,
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl SweepSpec {
    pub const FREQUENCY: &'static str = "frequency_ghz";

    pub fn freq_map_default() -> Self {
        Self { variable: Self::FREQUENCY.into(), start: 3.8, stop: 4.2, steps: 41 }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.steps < 2 {
            return vec![self.start];
        }
        (0..self.steps).map(|k| self.start + (self.stop - self.start) * k as f64 / (self.steps - 1) as f64).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub scenario: String,
    pub carrier: CarrierName,
    pub engine: EngineChoice,
    pub dephasing_source: DephasingChoice,
    pub carrier_frequency: CarrierFrequencies,
    pub node1: NodeBlock,
    pub node2: NodeBlock,
    pub channel: ChannelBlock,
    pub coupler: CouplerBlock,
    pub transducer: TransducerBlock,
    pub probe: ProbeBlock,
    pub readout: ReadoutBlock,
    pub numerics: NumericsBlock,
    pub sweep: Option<SweepSpec>,
    /// 0 reports exact probabilities.
    pub shots: usize,
    pub seed: u64,
    pub output_dir: String,
}

/// Unit conversions of the SI presets, trimmed of round-off so the
/// defaults print as the numbers a user would type.
fn tidy(x: f64) -> f64 {
    format!("{x:.12e}").parse().unwrap_or(x)
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            scenario: Scenario::Transfer.name().into(),
            carrier: CarrierName::Uni,
            engine: EngineChoice::Auto,
            dephasing_source: DephasingChoice::Auto,
            carrier_frequency: CarrierFrequencies {
                uni_ghz: tidy(Carrier::Uni.frequency() * 1e-9),
                bi_ghz: tidy(Carrier::Bi.frequency() * 1e-9),
            },
            node1: NodeBlock::device(1),
            node2: NodeBlock::device(2),
            channel: ChannelBlock {
                length_mm: tidy(device::CHANNEL_LENGTH * 1e3),
                velocity_m_per_s: device::SAW_VELOCITY,
                alpha_np_per_m: device::LOSS_ALPHA,
            },
            coupler: CouplerBlock {
                kappa_c_uni_mhz: tidy(Carrier::Uni.kappa_c_hz() * 1e-6),
                kappa_c_bi_mhz: tidy(Carrier::Bi.kappa_c_hz() * 1e-6),
                kappa_max_mhz: tidy(device::KAPPA_MAX_HZ * 1e-6),
                lead_uni_ns: tidy(Carrier::Uni.lead() * 1e9),
                lead_bi_ns: tidy(Carrier::Bi.lead() * 1e9),
                kappa_revival_mhz: tidy(device::KAPPA_REVIVAL_HZ * 1e-6),
            },
            transducer: TransducerBlock {
                idt_cells: udt::IDT_CELLS,
                idt_wavelength_um: tidy(udt::IDT_WAVELENGTH * 1e6),
                idt_aperture_um: tidy(udt::IDT_APERTURE * 1e6),
                idt_metallization: udt::IDT_METALLIZATION,
                idt_reflectivity: udt::IDT_REFLECTIVITY,
                idt_dv_v: udt::IDT_DV_V,
                mirror_electrodes: udt::MIRROR_ELECTRODES,
                mirror_wavelength_um: tidy(udt::MIRROR_WAVELENGTH * 1e6),
                mirror_reflectivity: udt::MIRROR_REFLECTIVITY,
                mirror_dv_v: udt::MIRROR_DV_V,
                mirror_velocity_m_per_s: udt::MIRROR_VELOCITY,
                d_eff_nm: tidy(udt::D_EFF * 1e9),
                bi_directivity: 0.5,
                kappa_udt_mhz: tidy(device::KAPPA_UDT_HZ * 1e-6),
            },
            probe: ProbeBlock {
                kappa_q_interf_mhz: tidy(device::KAPPA_Q_INTERF_HZ * 1e-6),
                g_ramsey_mhz: tidy(device::G_RAMSEY_HZ * 1e-6),
                q2_probe_ghz: tidy(device::Q2_PROBE_FREQUENCY * 1e-9),
                dt_interf_ns: tidy(device::DT_INTERF * 1e9),
                dt_ramsey_ns: tidy(device::DT_RAMSEY * 1e9),
                phase_points: 16,
            },
            readout: ReadoutBlock { visibility: device::VISIBILITY_PRINTED, correct: true },
            numerics: NumericsBlock {
                dt_ns: 1.0,
                t_m_ns: tidy(device::BELL_ANALYSIS_TIME * 1e9),
                round_trips: vec![1, 2, 3],
                revival_t_end_us: 4.0,
            },
            sweep: None,
            shots: 0,
            seed: 0,
            output_dir: "phononlab-out".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub key: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}: {}", self.key, self.message)
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
        (b, o) => *b = o,
    }
}

/// Sets a dotted key in a config tree. The key must already exist, except
/// below a `null` (an unset optional block), which becomes an object.
/// Top-level blocks that are absent by default.
const OPTIONAL_BLOCKS: [&str; 1] = ["sweep"];

pub fn set_path(root: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let unknown = || CliError::Schema(format!("unknown config key `{key}`"));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(unknown());
    }
    let mut node = root;
    // keys under an optional block are checked on deserialisation
    let fresh = OPTIONAL_BLOCKS.contains(&parts[0]) && parts.len() > 1;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
        node = match node {
            Value::Object(map) => {
                if !map.contains_key(*part) {
                    if !fresh {
                        return Err(unknown());
                    }
                    map.insert(part.to_string(), Value::Null);
                }
                map.get_mut(*part).ok_or_else(unknown)?
            }
            Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| unknown())?;
                items.get_mut(idx).ok_or_else(unknown)?
            }
            _ => return Err(unknown()),
        };
        if last {
            *node = value;
            return Ok(());
        }
    }
    Err(unknown())
}

/// `--set` value: JSON if it parses, a bare string otherwise.
pub fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.into()))
}

fn numeric_leaf(root: &Value, key: &str) -> bool {
    let mut node = root;
    for part in key.split('.') {
        node = match node {
            Value::Object(m) => match m.get(part) {
                Some(v) => v,
                None => return false,
            },
            Value::Array(a) => match part.parse::<usize>().ok().and_then(|i| a.get(i)) {
                Some(v) => v,
                None => return false,
            },
            _ => return false,
        };
    }
    node.is_number()
}

impl ExperimentConfig {
    /// Default tree merged with a (possibly partial) JSON document.
    pub fn tree_from_json(text: &str) -> Result<Value, CliError> {
        let over: Value = serde_json::from_str(text).map_err(|e| CliError::Schema(format!("invalid JSON: {e}")))?;
        if !over.is_object() {
            return Err(CliError::Schema("config must be a JSON object".into()));
        }
        let mut tree = Self::default().to_tree();
        merge(&mut tree, over);
        Ok(tree)
    }

    pub fn from_tree(tree: Value) -> Result<Self, CliError> {
        serde_json::from_value(tree).map_err(|e| CliError::Schema(format!("schema violation: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        Self::from_tree(Self::tree_from_json(text)?)
    }

    pub fn to_tree(&self) -> Value {
        serde_json::to_value(self).expect("config serialises")
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serialises");
        s.push('\n');
        s
    }

    /// A copy with one numeric key replaced, for sweeps.
    pub fn with_value(&self, key: &str, value: f64) -> Result<Self, CliError> {
        let mut tree = self.to_tree();
        let v = if tree_is_integer(&tree, key) {
            if value.fract() != 0.0 || value < 0.0 {
                return Err(CliError::Schema(format!("`{key}` takes non-negative integers, got {value}")));
            }
            Value::from(value as u64)
        } else {
            Value::from(value)
        };
        set_path(&mut tree, key, v)?;
        Self::from_tree(tree)
    }

    pub fn scenario(&self) -> Result<Scenario, CliError> {
        Scenario::parse(&self.scenario).ok_or_else(|| {
            CliError::Schema(format!("unknown scenario `{}`; expected one of: {}", self.scenario, Scenario::allowed()))
        })
    }

    /// Schema-level errors and parameter-sanity warnings.
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut err = |key: &str, message: String| {
            out.push(Diagnostic { severity: Severity::Error, key: key.into(), message })
        };
        if self.schema_version != SCHEMA_VERSION {
            err("schema_version", format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version));
        }
        let scenario = Scenario::parse(&self.scenario);
        if scenario.is_none() {
            err("scenario", format!("`{}` is not one of: {}", self.scenario, Scenario::allowed()));
        }
        let positive = [
            ("carrier_frequency.uni_ghz", self.carrier_frequency.uni_ghz),
            ("carrier_frequency.bi_ghz", self.carrier_frequency.bi_ghz),
            ("channel.length_mm", self.channel.length_mm),
            ("channel.velocity_m_per_s", self.channel.velocity_m_per_s),
            ("coupler.kappa_c_uni_mhz", self.coupler.kappa_c_uni_mhz),
            ("coupler.kappa_c_bi_mhz", self.coupler.kappa_c_bi_mhz),
            ("coupler.kappa_max_mhz", self.coupler.kappa_max_mhz),
            ("coupler.kappa_revival_mhz", self.coupler.kappa_revival_mhz),
            ("transducer.idt_wavelength_um", self.transducer.idt_wavelength_um),
            ("transducer.idt_aperture_um", self.transducer.idt_aperture_um),
            ("transducer.idt_dv_v", self.transducer.idt_dv_v),
            ("transducer.mirror_wavelength_um", self.transducer.mirror_wavelength_um),
            ("transducer.mirror_velocity_m_per_s", self.transducer.mirror_velocity_m_per_s),
            ("transducer.kappa_udt_mhz", self.transducer.kappa_udt_mhz),
            ("probe.kappa_q_interf_mhz", self.probe.kappa_q_interf_mhz),
            ("probe.g_ramsey_mhz", self.probe.g_ramsey_mhz),
            ("probe.q2_probe_ghz", self.probe.q2_probe_ghz),
            ("probe.dt_interf_ns", self.probe.dt_interf_ns),
            ("probe.dt_ramsey_ns", self.probe.dt_ramsey_ns),
            ("numerics.dt_ns", self.numerics.dt_ns),
            ("numerics.t_m_ns", self.numerics.t_m_ns),
            ("numerics.revival_t_end_us", self.numerics.revival_t_end_us),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                err(key, format!("must be a positive finite number, got {v}"));
            }
        }
        let nonneg = [
            ("channel.alpha_np_per_m", self.channel.alpha_np_per_m),
            ("coupler.lead_uni_ns", self.coupler.lead_uni_ns),
            ("coupler.lead_bi_ns", self.coupler.lead_bi_ns),
            ("transducer.d_eff_nm", self.transducer.d_eff_nm),
            ("transducer.idt_reflectivity", self.transducer.idt_reflectivity),
            ("transducer.mirror_reflectivity", self.transducer.mirror_reflectivity),
            ("transducer.mirror_dv_v", self.transducer.mirror_dv_v),
        ];
        for (key, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                err(key, format!("must be a non-negative finite number, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.transducer.bi_directivity) {
            err("transducer.bi_directivity", "must lie in [0, 1]".into());
        }
        if !(self.transducer.idt_metallization > 0.0 && self.transducer.idt_metallization < 1.0) {
            err("transducer.idt_metallization", "must lie in (0, 1)".into());
        }
        if self.transducer.idt_cells == 0 || self.transducer.mirror_electrodes == 0 {
            err("transducer", "cell and electrode counts must be positive".into());
        }
        if self.probe.phase_points < 5 {
            err("probe.phase_points", "a cosine fit needs at least five phases".into());
        }
        if self.numerics.round_trips.len() < 3 || self.numerics.round_trips.contains(&0) {
            err("numerics.round_trips", "need at least three positive round-trip counts".into());
        }
        let v = &self.readout.visibility;
        if v.iter().flatten().any(|x| !(*x >= 0.0 && x.is_finite())) {
            err("readout.visibility", "entries must be non-negative".into());
        }
        if let Some(s) = &self.sweep {
            if s.steps == 0 {
                err("sweep.steps", "sweep range is empty".into());
            }
            if !(s.start.is_finite() && s.stop.is_finite()) {
                err("sweep", "range bounds must be finite".into());
            } else if s.steps > 1 && s.start == s.stop {
                err("sweep", "range is empty: start equals stop".into());
            }
            if scenario == Some(Scenario::FreqMap) {
                if s.variable != SweepSpec::FREQUENCY {
                    err("sweep.variable", format!("freq-map sweeps `{}`", SweepSpec::FREQUENCY));
                } else if s.start.min(s.stop) <= 0.0 {
                    err("sweep", "frequencies must be positive".into());
                }
            } else if s.variable.starts_with("sweep") || !numeric_leaf(&self.to_tree(), &s.variable) {
                err("sweep.variable", format!("`{}` is not a numeric config key", s.variable));
            }
        }
        for (name, node) in [("node1", &self.node1), ("node2", &self.node2)] {
            for (carrier, c) in [("uni", &node.uni), ("bi", &node.bi)] {
                let key = format!("{name}.{carrier}");
                if !(c.t1_us > 0.0 && c.t2_ramsey_us > 0.0 && c.t2_echo_us > 0.0) {
                    out.push(Diagnostic {
                        severity: Severity::Error,
                        key: key.clone(),
                        message: "T1 and T2 must be positive".into(),
                    });
                    continue;
                }
                for (field, t2) in [("t2_ramsey_us", c.t2_ramsey_us), ("t2_echo_us", c.t2_echo_us)] {
                    if t2 > 2.0 * c.t1_us {
                        out.push(Diagnostic {
                            severity: Severity::Warning,
                            key: format!("{key}.{field}"),
                            message: format!("violates T2 <= 2*T1 ({t2} us > 2 x {} us)", c.t1_us),
                        });
                    }
                }
            }
        }
        if self.numerics.dt_ns > 5.0 {
            out.push(Diagnostic {
                severity: Severity::Warning,
                key: "numerics.dt_ns".into(),
                message: "steps above 5 ns under-resolve the sech wavepackets".into(),
            });
        }
        out
    }

    pub fn has_errors(&self) -> bool {
        self.diagnostics().iter().any(|d| d.severity == Severity::Error)
    }

    fn dephasing_for(&self, scenario: Scenario) -> Option<DephasingSource> {
        match self.dephasing_source {
            DephasingChoice::Auto if scenario == Scenario::Interferometer => Some(DephasingSource::Ramsey),
            DephasingChoice::Auto | DephasingChoice::Echo => Some(DephasingSource::Echo),
            DephasingChoice::Ramsey => Some(DephasingSource::Ramsey),
            DephasingChoice::None => None,
        }
    }

    pub fn carrier_hz(&self, carrier: CarrierName) -> f64 {
        match carrier {
            CarrierName::Uni => self.carrier_frequency.uni_ghz * 1e9,
            CarrierName::Bi => self.carrier_frequency.bi_ghz * 1e9,
        }
    }

    pub fn channel(&self) -> Result<ChannelParams, CliError> {
        let c = &self.channel;
        Ok(ChannelParams::new(c.length_mm * 1e-3, c.velocity_m_per_s, c.alpha_np_per_m)?)
    }

    pub fn saw_setup(&self) -> SawSetup {
        let t = &self.transducer;
        let v = self.channel.velocity_m_per_s;
        SawSetup {
            idt: IdtParams {
                cells: t.idt_cells,
                wavelength: t.idt_wavelength_um * 1e-6,
                aperture: t.idt_aperture_um * 1e-6,
                metallization: t.idt_metallization,
                reflectivity: Complex64::new(0.0, -t.idt_reflectivity),
                dv_v: t.idt_dv_v,
                velocity: v,
            },
            mirror: MirrorParams {
                electrodes: t.mirror_electrodes,
                wavelength: t.mirror_wavelength_um * 1e-6,
                reflectivity: Complex64::new(0.0, -t.mirror_reflectivity),
                dv_v: t.mirror_dv_v,
                velocity: t.mirror_velocity_m_per_s,
            },
            d_eff: t.d_eff_nm * 1e-9,
        }
    }

    pub fn visibility(&self) -> Result<VisibilityMatrix, CliError> {
        Ok(VisibilityMatrix::from_printed(self.readout.visibility)?)
    }

    /// Two-node link at the configured carrier.
    pub fn network(&self, scenario: Scenario) -> Result<NetworkConfig, CliError> {
        let carrier = Carrier::from(self.carrier);
        let (kappa_c, lead) = match self.carrier {
            CarrierName::Uni => (self.coupler.kappa_c_uni_mhz, self.coupler.lead_uni_ns),
            CarrierName::Bi => (self.coupler.kappa_c_bi_mhz, self.coupler.lead_bi_ns),
        };
        let (d, r) = match self.carrier {
            CarrierName::Uni => (self.saw_setup().at(self.carrier_hz(CarrierName::Uni))?.0, Complex64::new(1.0, 0.0)),
            CarrierName::Bi => (self.transducer.bi_directivity, Complex64::new(0.0, 0.0)),
        };
        let engine = match (self.engine, self.carrier) {
            (EngineChoice::Cascaded, _) | (EngineChoice::Auto, CarrierName::Uni) => Engine::Cascaded,
            (EngineChoice::Field, _) | (EngineChoice::Auto, CarrierName::Bi) => Engine::Field,
        };
        Ok(NetworkConfig {
            carrier,
            channel: self.channel()?,
            q1: self.node1.at(self.carrier).coherence(),
            q2: self.node2.at(self.carrier).coherence(),
            dephasing: self.dephasing_for(scenario),
            kappa_c: TWO_PI * kappa_c * 1e6,
            kappa_max: TWO_PI * self.coupler.kappa_max_mhz * 1e6,
            lead: lead * 1e-9,
            directivity1: d,
            directivity2: d,
            reflection1: r,
            reflection2: r,
            detuning1: self.node1.detuning_mhz * 1e6,
            detuning2: self.node2.detuning_mhz * 1e6,
            dt: self.numerics.dt_ns * 1e-9,
            t_m: self.numerics.t_m_ns * 1e-9,
            engine,
        })
    }

    fn probe_delta(&self) -> f64 {
        self.probe.q2_probe_ghz * 1e9 - self.carrier_hz(CarrierName::Uni)
    }

    pub fn interferometer_probe(&self) -> Result<ProbeConfig, CliError> {
        let kappa_udt = self.transducer.kappa_udt_mhz * 1e6;
        Ok(ProbeConfig {
            g: analysis::purcell_coupling(self.probe.kappa_q_interf_mhz * 1e6, kappa_udt)?,
            delta: self.probe_delta(),
            kappa_udt,
            dt_interaction: self.probe.dt_interf_ns * 1e-9,
        })
    }

    pub fn ramsey(&self) -> Result<RamseyConfig, CliError> {
        let probe = ProbeConfig {
            g: self.probe.g_ramsey_mhz * 1e6,
            delta: self.probe_delta(),
            kappa_udt: self.transducer.kappa_udt_mhz * 1e6,
            dt_interaction: self.probe.dt_ramsey_ns * 1e-9,
        };
        let d = self.saw_setup().at(self.carrier_hz(CarrierName::Uni))?.0;
        Ok(RamseyConfig {
            probe,
            p_phonon: self.channel()?.transmission() * d,
            leakage: probe.leakage(),
            coherence: self.node2.uni.coherence(),
            dephasing: self.dephasing_for(Scenario::RamseyProbe),
            dt: self.numerics.dt_ns * 1e-9,
        })
    }

    /// Constant-coupling emission at Q1; the frequency map fills in the
    /// transducer response per frequency.
    pub fn revival(&self) -> Result<RevivalConfig, CliError> {
        Ok(RevivalConfig {
            kappa: TWO_PI * self.coupler.kappa_revival_mhz * 1e6,
            t_end: self.numerics.revival_t_end_us * 1e-6,
            dt: self.numerics.dt_ns * 1e-9,
            channel: self.channel()?,
            coherence: self.node1.uni.coherence(),
            dephasing: self.dephasing_for(Scenario::FreqMap),
            directivity: 1.0,
            reflection1: Complex64::new(1.0, 0.0),
            reflection2: Complex64::new(1.0, 0.0),
        })
    }
}

fn tree_is_integer(tree: &Value, key: &str) -> bool {
    let mut node = tree;
    for part in key.split('.') {
        node = match node {
            Value::Object(m) => match m.get(part) {
                Some(v) => v,
                None => return false,
            },
            Value::Array(a) => match part.parse::<usize>().ok().and_then(|i| a.get(i)) {
                Some(v) => v,
                None => return false,
            },
            _ => return false,
        };
    }
    node.is_u64()
}

//! Scenario files.
//!
//! A config is a TOML document holding a list of `[[scenario]]` tables:
//!
//! ```toml
//! [[scenario]]
//! name = "geo"
//! preset = "geo"              # or satcom_delay_ms / satcom_schedule
//! loss_pct = [0, 0.01, 0.1, 1]
//! measurements = ["quic-bulk", "h3-web"]
//! repetitions = 20
//!
//! [scenario.pep]
//! enabled = [false, true]
//! sat = { cca = "newreno", iw = 100 }
//! ```
//!
//! A scenario with several loss rates expands into one [`Scenario`] per rate,
//! named `<name>-loss<pct>`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::congestion::{Algorithm, CcTuning};
use crate::emunet::{DelaySchedule, Direction, HopSpec, LinkSpec, Topology};
use crate::pep::{ProxyMode, DEFAULT_BUFFER_CAP, DEFAULT_RELAY_WINDOW};
use crate::sim::{PepPlan, SimSetup};
use crate::time::SimTime;
use crate::transport::{AckFrequency, TransportProfile};
use crate::workloads::{ManifestError, Measurement, PageManifest};

pub const GEO_SATCOM_DELAY_MS: f64 = 250.0;
pub const LEO_SATCOM_DELAY_MS: f64 = 16.0;
pub const DEFAULT_LOSS_PCT: [f64; 4] = [0.0, 0.01, 0.1, 1.0];
const PACKET_BYTES: f64 = 1200.0;
const MIN_QUEUE_PKTS: u32 = 64;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("scenario {scenario:?}: invalid {field}: {reason}")]
    Validation {
        scenario: String,
        field: &'static str,
        reason: String,
    },
    #[error("scenario {scenario:?}: {source}")]
    Manifest {
        scenario: String,
        source: ManifestError,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Geo,
    Leo,
}

impl Preset {
    pub fn satcom_delay_ms(self) -> f64 {
        match self {
            Preset::Geo => GEO_SATCOM_DELAY_MS,
            Preset::Leo => LEO_SATCOM_DELAY_MS,
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Geo => "geo",
            Preset::Leo => "leo",
        })
    }
}

impl FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "geo" => Ok(Preset::Geo),
            "leo" => Ok(Preset::Leo),
            _ => Err(format!("unknown preset {s:?}")),
        }
    }
}

/// Which satellite-link directions drop packets.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossDirection {
    #[default]
    Both,
    Forward,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PepModeChoice {
    /// `default` for bulk and h1, `h3_capable` for h3.
    #[default]
    Auto,
    Default,
    H3Capable,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Deserialize)]
struct ConfigFile {
    #[serde(default)]
    scenario: Vec<RawScenario>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    preset: Option<Preset>,
    satcom_delay_ms: Option<f64>,
    /// `[start_s, delay_ms]` pairs.
    satcom_schedule: Option<Vec<(f64, f64)>>,
    #[serde(default = "default_internet_delay")]
    internet_delay_ms: f64,
    loss_pct: Option<OneOrMany<f64>>,
    #[serde(default)]
    loss_direction: LossDirection,
    #[serde(default)]
    attenuation_db: f64,
    #[serde(default = "default_forward_rate")]
    forward_rate_mbps: f64,
    #[serde(default = "default_return_rate")]
    return_rate_mbps: f64,
    queue_capacity_pkts: Option<u32>,
    #[serde(default)]
    endpoint: CcTuning,
    #[serde(default)]
    pep: RawPep,
    #[serde(default)]
    ack_frequency: AckFrequency,
    #[serde(default)]
    tcp_tls_rtts: u8,
    measurements: Option<Vec<Measurement>>,
    #[serde(default = "default_duration")]
    duration_s: f64,
    #[serde(default = "default_repetitions")]
    repetitions: u32,
    #[serde(default = "default_base_seed")]
    base_seed: u64,
    page_manifest: Option<PathBuf>,
    #[serde(default = "default_web_timeout")]
    web_timeout_s: f64,
}

fn default_internet_delay() -> f64 {
    40.0
}
fn default_forward_rate() -> f64 {
    20.0
}
fn default_return_rate() -> f64 {
    8.0
}
fn default_duration() -> f64 {
    15.0
}
fn default_repetitions() -> u32 {
    100
}
fn default_base_seed() -> u64 {
    1
}
fn default_web_timeout() -> f64 {
    300.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawPep {
    enabled: OneOrMany<bool>,
    mode: PepModeChoice,
    sat: CcTuning,
    lan: CcTuning,
    net: CcTuning,
    relay_window_bytes: u64,
    buffer_cap_bytes: u64,
}

impl Default for RawPep {
    fn default() -> Self {
        RawPep {
            enabled: OneOrMany::Many(vec![false, true]),
            mode: PepModeChoice::Auto,
            sat: PepSettings::SAT_TUNING,
            lan: CcTuning::default(),
            net: CcTuning::default(),
            relay_window_bytes: DEFAULT_RELAY_WINDOW,
            buffer_cap_bytes: DEFAULT_BUFFER_CAP,
        }
    }
}

/// Proxy-chain settings of a scenario.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PepSettings {
    /// Arms to run: `false` bypasses the proxies, `true` splits at them.
    pub enabled: Vec<bool>,
    pub mode: PepModeChoice,
    pub sat: CcTuning,
    pub lan: CcTuning,
    pub net: CcTuning,
    pub relay_window_bytes: u64,
    pub buffer_cap_bytes: u64,
}

impl PepSettings {
    pub const SAT_TUNING: CcTuning = CcTuning::new(Algorithm::NewReno, 100);

    fn mode_for(&self, measurement: Measurement) -> ProxyMode {
        match self.mode {
            PepModeChoice::Default => ProxyMode::Default,
            PepModeChoice::H3Capable => ProxyMode::H3Capable,
            PepModeChoice::Auto if measurement == Measurement::H3Web => ProxyMode::H3Capable,
            PepModeChoice::Auto => ProxyMode::Default,
        }
    }
}

/// One fully resolved scenario with a single loss rate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Scenario {
    pub name: String,
    /// `(start, one-way delay)` entries.
    pub satcom_schedule: Vec<(SimTime, SimTime)>,
    pub internet_delay: SimTime,
    pub loss_pct: f64,
    pub loss_direction: LossDirection,
    pub forward_rate_mbps: f64,
    pub return_rate_mbps: f64,
    pub queue_capacity_pkts: Option<u32>,
    pub endpoint: CcTuning,
    pub pep: PepSettings,
    pub ack_frequency: AckFrequency,
    pub tcp_tls_rtts: u8,
    pub measurements: Vec<Measurement>,
    pub duration: SimTime,
    pub repetitions: u32,
    pub base_seed: u64,
    #[serde(skip)]
    pub manifest: PageManifest,
    pub manifest_path: Option<PathBuf>,
    pub web_timeout: SimTime,
}

impl Scenario {
    /// A scenario on a built-in orbit with the default settings.
    pub fn preset(preset: Preset, loss_pct: f64) -> Self {
        let raw = RawScenario {
            name: preset.to_string(),
            preset: Some(preset),
            loss_pct: Some(OneOrMany::One(loss_pct)),
            ..RawScenario::bare()
        };
        let mut out = raw.resolve(None).expect("preset is valid");
        out.pop().expect("one loss rate")
    }

    pub fn satcom_delay_at_start(&self) -> SimTime {
        self.satcom_schedule[0].1
    }

    /// Round-trip propagation delay of the whole path at time zero.
    pub fn base_rtt(&self) -> SimTime {
        (self.satcom_delay_at_start() + self.internet_delay).saturating_mul(2)
    }

    fn queue_for(&self, rate_bps: u64) -> u32 {
        if let Some(q) = self.queue_capacity_pkts {
            return q;
        }
        let bdp = rate_bps as f64 * self.base_rtt().as_secs_f64() / 8.0 / PACKET_BYTES;
        (bdp.ceil() as u32).max(MIN_QUEUE_PKTS)
    }

    /// The client / ST / GW / server chain.
    pub fn topology(&self) -> Topology {
        let lan = HopSpec {
            forward: LinkSpec::ideal(Direction::Forward),
            ret: LinkSpec::ideal(Direction::Return),
        };
        let p = self.loss_pct / 100.0;
        let schedule = DelaySchedule::new(self.satcom_schedule.clone()).expect("validated");
        let fwd_rate = mbps_to_bps(self.forward_rate_mbps);
        let ret_rate = mbps_to_bps(self.return_rate_mbps);
        let sat = HopSpec {
            forward: LinkSpec {
                delay: schedule.clone(),
                loss_prob: p,
                rate_bps: fwd_rate,
                queue_capacity_pkts: self.queue_for(fwd_rate),
                direction: Direction::Forward,
            },
            ret: LinkSpec {
                delay: schedule,
                loss_prob: match self.loss_direction {
                    LossDirection::Both => p,
                    LossDirection::Forward => 0.0,
                },
                rate_bps: ret_rate,
                queue_capacity_pkts: self.queue_for(ret_rate),
                direction: Direction::Return,
            },
        };
        let net_link = |direction| LinkSpec {
            delay: DelaySchedule::constant(self.internet_delay),
            ..LinkSpec::ideal(direction)
        };
        let net = HopSpec {
            forward: net_link(Direction::Forward),
            ret: net_link(Direction::Return),
        };
        Topology::satellite(lan, sat, net).expect("validated")
    }

    pub fn profile(&self, measurement: Measurement) -> TransportProfile {
        let p = match measurement {
            Measurement::QuicBulk | Measurement::H3Web => TransportProfile::quic(),
            Measurement::TcpBulk | Measurement::H1Web => TransportProfile::tcp(self.tcp_tls_rtts),
        };
        p.with_ack_frequency(self.ack_frequency)
    }

    pub fn setup(&self, measurement: Measurement, pep: bool, seed: u64, event_log: bool) -> SimSetup {
        SimSetup {
            topology: self.topology(),
            endpoint_tuning: self.endpoint,
            pep: pep.then(|| PepPlan {
                mode: self.pep.mode_for(measurement),
                sat: self.pep.sat,
                lan: self.pep.lan,
                net: self.pep.net,
                relay_window: self.pep.relay_window_bytes,
                buffer_cap: self.pep.buffer_cap_bytes,
            }),
            ack_frequency: self.ack_frequency,
            origin_preamble: measurement == Measurement::H3Web,
            seed,
            event_log,
            record_deliveries: false,
        }
    }
}

fn mbps_to_bps(mbps: f64) -> u64 {
    (mbps * 1e6).round() as u64
}

impl RawScenario {
    fn bare() -> Self {
        RawScenario {
            name: String::new(),
            preset: None,
            satcom_delay_ms: None,
            satcom_schedule: None,
            internet_delay_ms: default_internet_delay(),
            loss_pct: None,
            loss_direction: LossDirection::default(),
            attenuation_db: 0.0,
            forward_rate_mbps: default_forward_rate(),
            return_rate_mbps: default_return_rate(),
            queue_capacity_pkts: None,
            endpoint: CcTuning::default(),
            pep: RawPep::default(),
            ack_frequency: AckFrequency::default(),
            tcp_tls_rtts: 0,
            measurements: None,
            duration_s: default_duration(),
            repetitions: default_repetitions(),
            base_seed: default_base_seed(),
            page_manifest: None,
            web_timeout_s: default_web_timeout(),
        }
    }

    fn resolve(self, base_dir: Option<&Path>) -> Result<Vec<Scenario>, ConfigError> {
        let name = self.name.clone();
        let invalid = |field: &'static str, reason: String| ConfigError::Validation {
            scenario: name.clone(),
            field,
            reason,
        };
        if self.name.trim().is_empty() {
            return Err(invalid("name", "must not be empty".into()));
        }
        if self.attenuation_db != 0.0 {
            return Err(invalid(
                "attenuation_db",
                format!("only 0 dB is supported, got {}", self.attenuation_db),
            ));
        }
        let schedule_ms = match (self.satcom_schedule, self.satcom_delay_ms, self.preset) {
            (Some(_), Some(_), _) => {
                return Err(invalid(
                    "satcom_schedule",
                    "give either satcom_schedule or satcom_delay_ms, not both".into(),
                ))
            }
            (Some(s), None, _) => s,
            (None, Some(d), _) => vec![(0.0, d)],
            (None, None, Some(p)) => vec![(0.0, p.satcom_delay_ms())],
            (None, None, None) => {
                return Err(invalid(
                    "satcom_delay_ms",
                    "set a preset, satcom_delay_ms or satcom_schedule".into(),
                ))
            }
        };
        for &(start, delay) in &schedule_ms {
            if !(start.is_finite() && start >= 0.0 && delay.is_finite() && delay >= 0.0) {
                return Err(invalid(
                    "satcom_schedule",
                    format!("entry ({start}, {delay}) must be finite and non-negative"),
                ));
            }
        }
        let satcom_schedule: Vec<_> = schedule_ms
            .iter()
            .map(|&(s, d)| (SimTime::from_secs_f64(s), SimTime::from_millis_f64(d)))
            .collect();
        DelaySchedule::new(satcom_schedule.clone())
            .map_err(|e| invalid("satcom_schedule", e.to_string()))?;
        if !(self.internet_delay_ms.is_finite() && self.internet_delay_ms >= 0.0) {
            return Err(invalid(
                "internet_delay_ms",
                format!("{} must be a non-negative number", self.internet_delay_ms),
            ));
        }
        for (field, rate) in [
            ("forward_rate_mbps", self.forward_rate_mbps),
            ("return_rate_mbps", self.return_rate_mbps),
        ] {
            if !(rate.is_finite() && rate >= 0.0) {
                return Err(invalid(field, format!("{rate} must be a non-negative number")));
            }
        }
        if self.queue_capacity_pkts == Some(0) {
            return Err(invalid("queue_capacity_pkts", "must be at least 1".into()));
        }
        let losses = self
            .loss_pct
            .map_or_else(|| DEFAULT_LOSS_PCT.to_vec(), OneOrMany::into_vec);
        if losses.is_empty() {
            return Err(invalid("loss_pct", "list is empty".into()));
        }
        if let Some(l) = losses.iter().find(|l| !(0.0..=100.0).contains(*l)) {
            return Err(invalid("loss_pct", format!("{l} is outside [0, 100]")));
        }
        for (field, t) in [("endpoint", self.endpoint), ("pep.sat", self.pep.sat)]
            .into_iter()
            .chain([("pep.lan", self.pep.lan), ("pep.net", self.pep.net)])
        {
            if t.iw == 0 {
                return Err(invalid(field, "initial window must be at least 1 packet".into()));
            }
        }
        if self.tcp_tls_rtts > 2 {
            return Err(invalid("tcp_tls_rtts", format!("{} is not 0, 1 or 2", self.tcp_tls_rtts)));
        }
        if self.ack_frequency.threshold == 0 {
            return Err(invalid("ack_frequency", "threshold must be at least 1".into()));
        }
        let enabled = self.pep.enabled.into_vec();
        if enabled.is_empty() {
            return Err(invalid("pep.enabled", "list is empty".into()));
        }
        if self.pep.relay_window_bytes == 0 || self.pep.buffer_cap_bytes < self.pep.relay_window_bytes {
            return Err(invalid(
                "pep.buffer_cap_bytes",
                "relay window must be positive and no larger than the buffer cap".into(),
            ));
        }
        let measurements = self.measurements.unwrap_or_else(|| Measurement::ALL.to_vec());
        if measurements.is_empty() {
            return Err(invalid("measurements", "list is empty".into()));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(invalid("duration_s", format!("{} must be positive", self.duration_s)));
        }
        if !(self.web_timeout_s.is_finite() && self.web_timeout_s > 0.0) {
            return Err(invalid(
                "web_timeout_s",
                format!("{} must be positive", self.web_timeout_s),
            ));
        }
        if self.repetitions == 0 {
            return Err(invalid("repetitions", "must be at least 1".into()));
        }
        let manifest_path = self.page_manifest.map(|p| match base_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p,
        });
        let manifest = match &manifest_path {
            Some(p) => PageManifest::from_path(p).map_err(|source| ConfigError::Manifest {
                scenario: name.clone(),
                source,
            })?,
            None => PageManifest::default_manifest(),
        };
        let pep = PepSettings {
            enabled,
            mode: self.pep.mode,
            sat: self.pep.sat,
            lan: self.pep.lan,
            net: self.pep.net,
            relay_window_bytes: self.pep.relay_window_bytes,
            buffer_cap_bytes: self.pep.buffer_cap_bytes,
        };
        let many = losses.len() > 1;
        Ok(losses
            .into_iter()
            .map(|loss_pct| Scenario {
                name: if many {
                    format!("{}-loss{}", self.name, loss_pct)
                } else {
                    self.name.clone()
                },
                satcom_schedule: satcom_schedule.clone(),
                internet_delay: SimTime::from_millis_f64(self.internet_delay_ms),
                loss_pct,
                loss_direction: self.loss_direction,
                forward_rate_mbps: self.forward_rate_mbps,
                return_rate_mbps: self.return_rate_mbps,
                queue_capacity_pkts: self.queue_capacity_pkts,
                endpoint: self.endpoint,
                pep: pep.clone(),
                ack_frequency: self.ack_frequency,
                tcp_tls_rtts: self.tcp_tls_rtts,
                measurements: measurements.clone(),
                duration: SimTime::from_secs_f64(self.duration_s),
                repetitions: self.repetitions,
                base_seed: self.base_seed,
                manifest: manifest.clone(),
                manifest_path: manifest_path.clone(),
                web_timeout: SimTime::from_secs_f64(self.web_timeout_s),
            })
            .collect())
    }
}

/// Parses and validates a config document. Relative manifest paths are
/// resolved against `base_dir`.
pub fn parse_config(text: &str, base_dir: Option<&Path>) -> Result<Vec<Scenario>, ConfigError> {
    let file: ConfigFile = toml::from_str(text)?;
    let mut out = Vec::new();
    for raw in file.scenario {
        out.extend(raw.resolve(base_dir)?);
    }
    let mut names = std::collections::BTreeSet::new();
    for s in &out {
        if !names.insert(s.name.as_str()) {
            return Err(ConfigError::Validation {
                scenario: s.name.clone(),
                field: "name",
                reason: "duplicate scenario name".into(),
            });
        }
    }
    Ok(out)
}

pub fn load_config(path: &Path) -> Result<Vec<Scenario>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, path.parent())
}

/// The built-in grid: GEO and LEO, each at the four default loss rates.
pub const PRESETS_TOML: &str = r#"[[scenario]]
name = "geo"
preset = "geo"
loss_pct = [0, 0.01, 0.1, 1]

[[scenario]]
name = "leo"
preset = "leo"
loss_pct = [0, 0.01, 0.1, 1]
"#;

pub fn presets() -> Vec<Scenario> {
    parse_config(PRESETS_TOML, None).expect("built-in presets are valid")
}

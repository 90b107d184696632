//! Versioned scenario files and the built-in presets.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::crkg::quantize::QuantizerConfig;
use crate::crkg::reconcile::ReconcileConfig;
use crate::crkg::{CrkgConfig, SECURITY_MARGIN};
use crate::error::{Error, Result};
use crate::forwarding::{Segmenter, UserPairRequest, DEFAULT_LG};
use crate::qkd::QkdConfig;
use crate::simplified::EccConfig;
use crate::timing::{Mechanism, TimingConfig};

pub const SCHEMA_VERSION: u32 = 1;

pub const PRESETS: [&str; 3] = ["hall", "corridor", "office"];

const HALL: &str = include_str!("../../../scenarios/hall.toml");
const CORRIDOR: &str = include_str!("../../../scenarios/corridor.toml");
const OFFICE: &str = include_str!("../../../scenarios/office.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// QKD, then reconciled channel keys, then forwarding.
    Basic,
    /// QKD and reconciled channel keys side by side.
    Parallel,
    /// Raw channel keys under an error-correcting code.
    Simplified,
}

impl Mode {
    pub fn mechanism(self) -> Mechanism {
        match self {
            Mode::Basic => Mechanism::Serial,
            Mode::Parallel => Mechanism::Parallel,
            Mode::Simplified => Mechanism::Simplified,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Basic => "basic",
            Mode::Parallel => "parallel",
            Mode::Simplified => "simplified",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "basic" => Ok(Mode::Basic),
            "parallel" => Ok(Mode::Parallel),
            "simplified" => Ok(Mode::Simplified),
            _ => Err(Error::Config(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    /// Users served by QAP1.
    pub qap1: Vec<String>,
    /// Users served by QAP2.
    pub qap2: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestSpec {
    pub a: String,
    pub b: String,
    pub groups: usize,
}

fn default_lg() -> usize {
    DEFAULT_LG
}

fn default_n_probes() -> usize {
    1 << 16
}

fn default_max_attempts() -> usize {
    8
}

fn default_max_sessions() -> usize {
    10_000
}

fn default_margin() -> usize {
    SECURITY_MARGIN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub name: String,
    pub seed: u64,
    pub mode: Mode,
    #[serde(default = "default_lg")]
    pub l_g: usize,
    /// Probes per channel-key session.
    #[serde(default = "default_n_probes")]
    pub n_probes: usize,
    /// Transmissions allowed per codeword in simplified mode.
    #[serde(default = "default_max_attempts")]
    pub max_attempts: usize,
    /// Cap on QKD sessions, and on channel-key sessions per link.
    #[serde(default = "default_max_sessions")]
    pub max_sessions: usize,
    #[serde(default = "default_margin")]
    pub security_margin: usize,
    pub topology: Topology,
    pub requests: Vec<RequestSpec>,
    /// Channel of every user link without an entry in `links`.
    pub channel: ChannelParams,
    #[serde(default)]
    pub links: BTreeMap<String, ChannelParams>,
    #[serde(default)]
    pub qkd: QkdConfig,
    #[serde(default)]
    pub quantizer: QuantizerConfig,
    #[serde(default)]
    pub reconcile: ReconcileConfig,
    #[serde(default)]
    pub ecc: EccConfig,
    #[serde(default = "TimingConfig::ht_mixed")]
    pub timing: TimingConfig,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn preset(name: &str) -> Result<Self> {
        let text = match name {
            "hall" => HALL,
            "corridor" => CORRIDOR,
            "office" => OFFICE,
            _ => return Err(Error::Config(format!("unknown scenario {name:?}"))),
        };
        Self::from_toml(text)
    }

    /// A preset name, or else a path to a scenario file.
    pub fn load(name_or_path: &str) -> Result<Self> {
        if PRESETS.contains(&name_or_path) {
            return Self::preset(name_or_path);
        }
        let text = std::fs::read_to_string(name_or_path)
            .map_err(|e| Error::Config(format!("{name_or_path}: {e}")))?;
        Self::from_toml(&text)
    }

    pub fn crkg(&self) -> CrkgConfig {
        CrkgConfig {
            quantizer: self.quantizer,
            reconcile: self.reconcile,
            security_margin: self.security_margin,
        }
    }

    pub fn link_params(&self, user: &str) -> ChannelParams {
        self.links.get(user).copied().unwrap_or(self.channel)
    }

    pub fn pair_requests(&self) -> Vec<UserPairRequest> {
        self.requests
            .iter()
            .map(|r| UserPairRequest::new(r.a.clone(), r.b.clone(), r.groups))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        Segmenter::new(self.l_g, 0).map_err(cfg_err)?;
        let mut seen = BTreeSet::new();
        for u in self.topology.qap1.iter().chain(&self.topology.qap2) {
            if u.is_empty() || !seen.insert(u.as_str()) {
                return Err(Error::Config(format!("user name {u:?} is empty or repeated")));
            }
        }
        if self.requests.is_empty() {
            return Err(Error::Config("at least one request is needed".into()));
        }
        for r in &self.requests {
            if !self.topology.qap1.contains(&r.a) {
                return Err(Error::Config(format!("request names {:?}, not a QAP1 user", r.a)));
            }
            if !self.topology.qap2.contains(&r.b) {
                return Err(Error::Config(format!("request names {:?}, not a QAP2 user", r.b)));
            }
            if r.groups == 0 {
                return Err(Error::Config(format!("request ({}, {}) asks for no groups", r.a, r.b)));
            }
        }
        if let Some(u) = self.links.keys().find(|u| !seen.contains(u.as_str())) {
            return Err(Error::Config(format!("link {u:?} has no user")));
        }
        self.channel.validate().map_err(cfg_err)?;
        for p in self.links.values() {
            p.validate().map_err(cfg_err)?;
        }
        self.qkd.validate().map_err(cfg_err)?;
        self.quantizer.validate().map_err(cfg_err)?;
        self.ecc.validate().map_err(cfg_err)?;
        self.timing.validate().map_err(cfg_err)?;
        if self.n_probes < self.quantizer.block_len {
            return Err(Error::Config(format!(
                "n_probes = {} is below the quantizer block of {}",
                self.n_probes, self.quantizer.block_len
            )));
        }
        if self.max_attempts == 0 || self.max_sessions == 0 {
            return Err(Error::Config("max_attempts and max_sessions must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Channel of a built-in preset.
pub fn scenario_params(name: &str) -> Result<ChannelParams> {
    Ok(ScenarioConfig::preset(name)?.channel)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_load() {
        for p in PRESETS {
            let cfg = ScenarioConfig::preset(p).unwrap();
            assert_eq!(cfg.name, p);
            assert_eq!(scenario_params(p).unwrap(), cfg.channel);
        }
        assert!(matches!(scenario_params("garage"), Err(Error::Config(_))));
    }

    #[test]
    fn office_is_least_reciprocal() {
        let [h, c, o] = PRESETS.map(|p| scenario_params(p).unwrap());
        let quiet = |p: &ChannelParams| 1.0 - p.disturbance.duty;
        assert!(quiet(&o) < quiet(&c) && quiet(&c) < quiet(&h));
        assert!(o.reciprocity_rho <= h.reciprocity_rho);
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ScenarioConfig::preset("hall").unwrap();
        assert_eq!(ScenarioConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{HALL}\ncolour = \"blue\"\n");
        assert!(matches!(ScenarioConfig::from_toml(&text), Err(Error::Config(_))));
        let text = HALL.replace("reciprocity_rho", "reciprocty_rho");
        assert!(ScenarioConfig::from_toml(&text).is_err());
    }

    #[test]
    fn seed_is_mandatory() {
        let text: String = HALL.lines().filter(|l| !l.starts_with("seed")).collect::<Vec<_>>().join("\n");
        assert!(ScenarioConfig::from_toml(&text).is_err());
    }

    #[test]
    fn structural_checks() {
        let base = ScenarioConfig::preset("hall").unwrap();
        let mut bad = base.clone();
        bad.requests[0].a = "Z9".into();
        assert!(bad.validate().is_err());
        let mut bad = base.clone();
        bad.schema_version = 2;
        assert!(bad.validate().is_err());
        let mut bad = base.clone();
        bad.l_g = 1000 + 1;
        assert!(bad.validate().is_err());
        let mut bad = base.clone();
        bad.topology.qap2.push(bad.topology.qap1[0].clone());
        assert!(bad.validate().is_err());
        let mut bad = base;
        bad.links.insert("nobody".into(), ChannelParams::default());
        assert!(bad.validate().is_err());
    }

    #[test]
    fn mode_names() {
        for m in [Mode::Basic, Mode::Parallel, Mode::Simplified] {
            assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
        }
        assert!("fast".parse::<Mode>().is_err());
    }
}

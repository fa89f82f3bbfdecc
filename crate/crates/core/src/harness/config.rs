//! Experiment and campaign configuration, read from TOML with dotted-key
//! overrides.

use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineConfig, BaselineKind};
use crate::compressors::CompressorSpec;
use crate::error::{Error, Result};
use crate::fedlt::FedLtConfig;
use crate::participation::ParticipationConfig;
use crate::problem::ProblemConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AlgorithmKind {
    #[serde(rename = "fedlt")]
    FedLt,
    #[serde(rename = "fedavg")]
    FedAvg,
    #[serde(rename = "fedprox")]
    FedProx,
    #[serde(rename = "led")]
    Led,
    #[serde(rename = "5gcs", alias = "fivegcs")]
    FiveGcs,
}

impl AlgorithmKind {
    pub fn name(&self) -> &'static str {
        match self.baseline() {
            None => "fedlt",
            Some(b) => b.name(),
        }
    }

    pub fn baseline(&self) -> Option<BaselineKind> {
        match self {
            AlgorithmKind::FedLt => None,
            AlgorithmKind::FedAvg => Some(BaselineKind::FedAvg),
            AlgorithmKind::FedProx => Some(BaselineKind::FedProx),
            AlgorithmKind::Led => Some(BaselineKind::Led),
            AlgorithmKind::FiveGcs => Some(BaselineKind::FiveGcs),
        }
    }
}

/// Algorithm choice and its hyperparameters. Fields that do not apply to
/// the chosen algorithm are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub kind: AlgorithmKind,
    pub epochs: usize,
    pub gamma: f64,
    /// Fed-LT penalty `ρ`.
    pub rho: f64,
    pub prox_mu: f64,
    pub dual_step: Option<f64>,
    pub server_step: f64,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        AlgorithmConfig {
            kind: AlgorithmKind::FedLt,
            epochs: 10,
            gamma: 0.01,
            rho: 1.0,
            prox_mu: 0.0,
            dual_step: None,
            server_step: 0.01,
        }
    }
}

impl AlgorithmConfig {
    /// Sets the second grid axis: `ρ` for Fed-LT, `μ` for FedProx, `β` for
    /// LED and `γ_s` for 5GCS. FedAvg has no second parameter.
    pub fn set_secondary(&mut self, value: f64) {
        match self.kind {
            AlgorithmKind::FedLt => self.rho = value,
            AlgorithmKind::FedProx => self.prox_mu = value,
            AlgorithmKind::Led => self.dual_step = Some(value),
            AlgorithmKind::FiveGcs => self.server_step = value,
            AlgorithmKind::FedAvg => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub problem: ProblemConfig,
    #[serde(default)]
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub uplink: CompressorSpec,
    #[serde(default)]
    pub downlink: CompressorSpec,
    #[serde(default)]
    pub ef_enabled: bool,
    #[serde(default)]
    pub participation: ParticipationConfig,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_mc")]
    pub monte_carlo: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_rounds() -> usize {
    500
}

fn default_mc() -> usize {
    1
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: String::new(),
            problem: ProblemConfig::default(),
            algorithm: AlgorithmConfig::default(),
            uplink: CompressorSpec::Identity,
            downlink: CompressorSpec::Identity,
            ef_enabled: false,
            participation: ParticipationConfig::Full,
            rounds: default_rounds(),
            monte_carlo: default_mc(),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn fedlt(&self) -> FedLtConfig {
        FedLtConfig {
            rho: self.algorithm.rho,
            gamma: self.algorithm.gamma,
            epochs: self.algorithm.epochs,
            ef_enabled: self.ef_enabled,
            uplink: self.uplink,
            downlink: self.downlink,
        }
    }

    pub fn baseline(&self) -> Option<BaselineConfig> {
        let kind = self.algorithm.kind.baseline()?;
        Some(BaselineConfig {
            kind,
            epochs: self.algorithm.epochs,
            step: self.algorithm.gamma,
            prox_mu: self.algorithm.prox_mu,
            dual_step: self.algorithm.dual_step,
            server_step: self.algorithm.server_step,
            ef_enabled: self.ef_enabled,
            uplink: self.uplink,
            downlink: self.downlink,
        })
    }

    /// Every violated constraint, across all sub-configurations.
    pub fn violations(&self) -> Vec<String> {
        let mut v = self.problem.violations();
        let dim = self.problem.dim.max(1);
        match self.baseline() {
            None => v.extend(self.fedlt().violations(dim)),
            Some(b) => v.extend(b.violations(dim)),
        }
        v.extend(self.participation.violations(self.problem.num_agents));
        if self.monte_carlo == 0 {
            v.push("monte_carlo must be >= 1".into());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::ConfigViolations(v))
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        from_table(parse_table(text)?)
    }

    /// Label of the uplink compressor, as used in summary tables.
    pub fn compressor_label(&self) -> String {
        compressor_label(&self.uplink)
    }
}

pub fn compressor_label(spec: &CompressorSpec) -> String {
    match spec {
        CompressorSpec::Identity => "identity".into(),
        CompressorSpec::Quantization { levels, v_min, v_max } => format!("quant(L={levels},[{v_min},{v_max}])"),
        CompressorSpec::RandD { d } => format!("rand-{d}"),
    }
}

/// A named set of experiments sharing a base configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub name: String,
    pub scenarios: Vec<ExperimentConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioEntry {
    name: String,
    #[serde(default)]
    set: toml::Table,
}

impl Campaign {
    /// Parses either a campaign (`[base]` plus `[[scenario]]` entries whose
    /// `set` tables hold dotted-key overrides) or a single experiment.
    /// `overrides` are applied to every scenario after its own.
    pub fn from_toml_str(text: &str, overrides: &[(String, toml::Value)]) -> Result<Self> {
        let mut table = parse_table(text)?;
        let campaign_name = match table.remove("campaign") {
            Some(toml::Value::String(s)) => Some(s),
            Some(_) => return Err(Error::config("campaign must be a string")),
            None => None,
        };
        let scenarios = table.remove("scenario");
        let base = match table.remove("base") {
            Some(toml::Value::Table(t)) => {
                if let Some(key) = table.keys().next() {
                    return Err(Error::config(format!("unknown top-level key {key:?} in campaign")));
                }
                t
            }
            Some(_) => return Err(Error::config("base must be a table")),
            None => table,
        };

        let entries: Vec<ScenarioEntry> = match scenarios {
            None => Vec::new(),
            Some(v) => v
                .try_into()
                .map_err(|e: toml::de::Error| Error::Parse(format!("scenario list: {e}")))?,
        };

        let build = |name: Option<&str>, set: &toml::Table| -> Result<ExperimentConfig> {
            let mut t = base.clone();
            for (k, v) in set {
                apply_override(&mut t, k, v.clone())?;
            }
            for (k, v) in overrides {
                apply_override(&mut t, k, v.clone())?;
            }
            if let Some(n) = name {
                t.insert("name".into(), toml::Value::String(n.into()));
            }
            from_table(t)
        };

        let scenarios = if entries.is_empty() {
            vec![build(None, &toml::Table::new())?]
        } else {
            entries
                .iter()
                .map(|e| build(Some(&e.name), &e.set))
                .collect::<Result<Vec<_>>>()?
        };
        let name = campaign_name
            .or_else(|| scenarios.first().map(|s| s.name.clone()))
            .unwrap_or_default();
        Ok(Campaign { name, scenarios })
    }

    pub fn scenario(&self, name: &str) -> Result<&ExperimentConfig> {
        self.scenarios
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::config(format!("no scenario named {name:?}")))
    }
}

fn parse_table(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>().map_err(|e| Error::Parse(e.to_string()))
}

fn from_table(t: toml::Table) -> Result<ExperimentConfig> {
    toml::Value::Table(t)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))
}

/// Parses `key=value`. The value is read as a TOML literal when possible
/// and as a bare string otherwise.
pub fn parse_override(arg: &str) -> Result<(String, toml::Value)> {
    let (k, v) = arg
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override {arg:?} is not key=value")))?;
    let key = k.trim();
    if key.is_empty() {
        return Err(Error::config(format!("override {arg:?} has an empty key")));
    }
    let raw = v.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

/// Sets a dotted key in `table`, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let (last, path) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for p in path {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(format!("override {key:?}: {p:?} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

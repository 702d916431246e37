//! Run configuration files.
//!
//! One JSON document with the sections `sim`, `schedule`, `faults`,
//! `analysis` and an optional `sweep`:
//!
//! ```json
//! {
//!   "sim": {"n": 7, "f": 3, "epsilon": 0.001, "algorithm": "DAC",
//!           "seed": 1, "inputs": "random"},
//!   "schedule": {"kind": "dyna_degree", "T": 3, "D": 3},
//!   "faults": {"crashes": {"2": 5}},
//!   "analysis": {}
//! }
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anodyne_core::analysis::FaultModel;
use anodyne_core::faults::{ByzantineBehavior, FaultPlan};
use anodyne_core::model::{Algorithm, NodeId, Round, SimConfig, Value};
use anodyne_core::sweep::{ConfigPatch, RandomCrashes, Scenario, ScheduleSpec};
use serde::{Deserialize, Serialize};

use crate::formats::read_schedule;
use crate::{Error, Result};

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "ANODYNE_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub sim: SimSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub faults: FaultsSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub n: u32,
    pub f: u32,
    pub epsilon: f64,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub seed: u64,
    pub inputs: Inputs,
    #[serde(default)]
    pub max_rounds: Option<u32>,
    #[serde(default)]
    pub allow_insufficient: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Inputs {
    Values(Vec<Value>),
    Drawn(InputsKeyword),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputsKeyword {
    /// Uniform in `[0, 1]`, derived from the seed.
    Random,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSection {
    #[default]
    Complete,
    DynaDegree {
        #[serde(rename = "T")]
        t: u32,
        #[serde(rename = "D")]
        d: u32,
        #[serde(default)]
        extra_edge_prob: f64,
        #[serde(default)]
        fault_free_senders: bool,
    },
    Partition {
        group_a: Vec<NodeId>,
        group_b: Vec<NodeId>,
        #[serde(default)]
        until: Option<Round>,
    },
    DropOne,
    /// Schedule file, relative to the config file.
    File {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultsSection {
    #[serde(default)]
    pub crashes: BTreeMap<NodeId, Round>,
    #[serde(default)]
    pub byzantine: BTreeMap<NodeId, ByzantineBehavior>,
    #[serde(default)]
    pub random_crashes: Option<RandomCrashes>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    /// Defaults to the model matching the algorithm.
    #[serde(default)]
    pub fault_model: Option<FaultModel>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub overrides: Vec<ConfigPatch>,
}

/// A config file resolved into a runnable scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedConfig {
    pub scenario: Scenario,
    pub fault_model: FaultModel,
    pub overrides: Vec<ConfigPatch>,
}

impl ConfigFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| Error::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Resolves schedule files against `base_dir`.
    pub fn resolve(self, base_dir: &Path) -> Result<LoadedConfig> {
        let sim = self.sim;
        let (inputs, random_inputs) = match sim.inputs {
            Inputs::Values(v) => (v, false),
            Inputs::Drawn(InputsKeyword::Random) => (Vec::new(), true),
        };
        let config = SimConfig {
            n: sim.n,
            f: sim.f,
            epsilon: sim.epsilon,
            max_rounds: sim.max_rounds,
            seed: sim.seed,
            algorithm: sim.algorithm,
            inputs,
            allow_insufficient: sim.allow_insufficient,
        };
        let schedule = match self.schedule {
            ScheduleSection::Complete => ScheduleSpec::Complete,
            ScheduleSection::DynaDegree {
                t,
                d,
                extra_edge_prob,
                fault_free_senders,
            } => ScheduleSpec::DynaDegree {
                t,
                d,
                extra_edge_prob,
                fault_free_senders,
            },
            ScheduleSection::Partition {
                group_a,
                group_b,
                until,
            } => ScheduleSpec::Partition {
                group_a: group_a.into_iter().collect(),
                group_b: group_b.into_iter().collect(),
                until,
            },
            ScheduleSection::DropOne => ScheduleSpec::DropOne,
            ScheduleSection::File { path } => ScheduleSpec::Static {
                schedule: read_schedule(&base_dir.join(path))?,
            },
        };
        Ok(LoadedConfig {
            fault_model: self
                .analysis
                .fault_model
                .unwrap_or_else(|| FaultModel::for_algorithm(config.algorithm)),
            scenario: Scenario {
                config,
                schedule,
                faults: FaultPlan {
                    crashes: self.faults.crashes,
                    byzantine: self.faults.byzantine,
                },
                random_crashes: self.faults.random_crashes,
                random_inputs,
            },
            overrides: self.sweep.overrides,
        })
    }
}

/// Reads and resolves a config file, applying `seed` if given.
pub fn load_config(path: &Path, seed: Option<u64>) -> Result<LoadedConfig> {
    let text = fs::read_to_string(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut loaded = ConfigFile::parse(&text, path)?.resolve(base)?;
    if let Some(seed) = seed {
        loaded.scenario.config.seed = seed;
    }
    Ok(loaded)
}

/// The seed from [`SEED_ENV`], if set.
pub fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Invalid(format!("{SEED_ENV}={s} is not an unsigned integer"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Error::Invalid(format!("{SEED_ENV}: {e}"))),
    }
}

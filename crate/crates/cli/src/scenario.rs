//! Versioned scenario file formats.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use failcost::simulation::{Model, SimConfig};
use failcost::{Amount, GasSchedule, SolverId, SolverOperation};

pub const SETTLE_SCHEMA: &str = "failcost.settle/1";
pub const SIMULATE_SCHEMA: &str = "failcost.simulate/1";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettleFile {
    pub schema: String,
    pub schedule: GasSchedule,
    #[serde(default)]
    pub solver_ops: Vec<SolverOperation>,
    #[serde(default)]
    pub private_values: BTreeMap<SolverId, Amount>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateFile {
    pub schema: String,
    pub trials: u64,
    pub seed: u64,
    pub model: Model,
}

impl From<SimulateFile> for SimConfig {
    fn from(file: SimulateFile) -> SimConfig {
        SimConfig {
            trials: file.trials,
            seed: file.seed,
            model: file.model,
        }
    }
}

trait Versioned {
    const SCHEMA: &'static str;
    fn schema(&self) -> &str;
}

impl Versioned for SettleFile {
    const SCHEMA: &'static str = SETTLE_SCHEMA;
    fn schema(&self) -> &str {
        &self.schema
    }
}

impl Versioned for SimulateFile {
    const SCHEMA: &'static str = SIMULATE_SCHEMA;
    fn schema(&self) -> &str {
        &self.schema
    }
}

fn load<T: DeserializeOwned + Versioned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: T = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if file.schema() != T::SCHEMA {
        bail!(
            "{}: unsupported schema {:?}, expected {:?}",
            path.display(),
            file.schema(),
            T::SCHEMA
        );
    }
    Ok(file)
}

pub fn load_settle(path: &Path) -> Result<SettleFile> {
    load(path)
}

pub fn load_simulate(path: &Path) -> Result<SimulateFile> {
    load(path)
}

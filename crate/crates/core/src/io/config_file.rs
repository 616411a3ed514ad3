//! TOML run configuration with one section per client.
//!
//! ```toml
//! coupling = [2, 2, 0]
//! rho = 1.0
//! alpha = 0.5
//!
//! [client1]
//! tensor = "sim1.fcnt"
//! rank = 3
//! seed = 1
//!
//! [client2]
//! tensor = "sim2.fcnt"
//! rank = 3
//! seed = 2
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cp::{InitStrategy, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::federation::{ClientConfig, RunConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientEntry {
    /// Tensor file, relative to the configuration file's directory.
    pub tensor: PathBuf,
    pub rank: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default = "defaults::rho")]
    pub rho: f64,
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    #[serde(default = "defaults::epsilon")]
    pub epsilon: f64,
    #[serde(default = "defaults::max_rounds")]
    pub max_rounds: usize,
    #[serde(default = "defaults::burn_in")]
    pub burn_in: usize,
    /// `L_n` per mode, 0 for uncoupled modes.
    pub coupling: Vec<usize>,
    #[serde(default)]
    pub fast: bool,
    #[serde(default = "defaults::init_starts")]
    pub init_starts: usize,
    #[serde(default = "defaults::init_sweeps")]
    pub init_sweeps: usize,
    /// Server address for `fed server`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub listen: Option<String>,
    /// Server address for `fed client`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connect: Option<String>,
    pub client1: ClientEntry,
    pub client2: ClientEntry,
}

mod defaults {
    use super::*;

    pub fn rho() -> f64 {
        1.0
    }
    pub fn alpha() -> f64 {
        0.5
    }
    pub fn epsilon() -> f64 {
        DEFAULT_EPSILON
    }
    pub fn max_rounds() -> usize {
        1000
    }
    pub fn burn_in() -> usize {
        50
    }
    pub fn init_starts() -> usize {
        InitStrategy::default().starts
    }
    pub fn init_sweeps() -> usize {
        InitStrategy::default().sweeps
    }
}

impl ConfigFile {
    pub fn new(coupling: Vec<usize>, clients: [ClientEntry; 2]) -> Self {
        let [client1, client2] = clients;
        ConfigFile {
            rho: defaults::rho(),
            alpha: defaults::alpha(),
            epsilon: defaults::epsilon(),
            max_rounds: defaults::max_rounds(),
            burn_in: defaults::burn_in(),
            coupling,
            fast: false,
            init_starts: defaults::init_starts(),
            init_sweeps: defaults::init_sweeps(),
            listen: None,
            connect: None,
            client1,
            client2,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn clients(&self) -> [&ClientEntry; 2] {
        [&self.client1, &self.client2]
    }

    /// Converts to a validated [`RunConfig`]. Unlike the library, files must
    /// satisfy `0 < αρ ≤ 1`.
    pub fn run_config(&self) -> Result<RunConfig> {
        let step = self.alpha * self.rho;
        if !(step > 0.0 && step <= 1.0) {
            return Err(Error::Config(format!(
                "alpha * rho = {} * {} = {step} must lie in (0, 1]; lower alpha or rho",
                self.alpha, self.rho
            )));
        }
        let config = RunConfig {
            rho: self.rho,
            alpha: self.alpha,
            epsilon: self.epsilon,
            max_rounds: self.max_rounds,
            burn_in: self.burn_in,
            coupling: self.coupling.clone(),
            init: InitStrategy { starts: self.init_starts, sweeps: self.init_sweeps },
            fast: self.fast,
            clients: self.clients().map(|c| ClientConfig { rank: c.rank, seed: c.seed }),
        };
        config.validate()?;
        Ok(config)
    }
}

/// A parsed configuration together with the directory tensor paths resolve against.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub file: ConfigFile,
    pub base: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let file = ConfigFile::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig { file, base })
    }

    /// Path of client `k`'s tensor (0-based `k`).
    pub fn tensor_path(&self, k: usize) -> PathBuf {
        self.base.join(&self.file.clients()[k].tensor)
    }
}

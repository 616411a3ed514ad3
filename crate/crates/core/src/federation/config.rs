use serde::{Deserialize, Serialize};

use crate::cp::{InitStrategy, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::selection::{coupled_modes, validate_counts};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientConfig {
    pub rank: usize,
    pub seed: u64,
}

/// Hyperparameters of one federated run with two clients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Elastic penalty weight ρ.
    pub rho: f64,
    /// Server learning rate α.
    pub alpha: f64,
    /// Stopping tolerance on successive RelErr values.
    pub epsilon: f64,
    /// Maximum number of federated rounds T.
    pub max_rounds: usize,
    /// Uncoupled sweeps each client runs before component selection.
    pub burn_in: usize,
    /// `L_n` per mode; 0 marks an uncoupled mode.
    pub coupling: Vec<usize>,
    pub init: InitStrategy,
    /// MTTKRP through an unconstrained CP basis instead of the raw tensor.
    pub fast: bool,
    pub clients: [ClientConfig; 2],
}

impl RunConfig {
    pub fn new(coupling: Vec<usize>, ranks: [usize; 2], seeds: [u64; 2]) -> Self {
        RunConfig {
            rho: 1.0,
            alpha: 0.5,
            epsilon: DEFAULT_EPSILON,
            max_rounds: 1000,
            burn_in: 50,
            coupling,
            init: InitStrategy::default(),
            fast: false,
            clients: [
                ClientConfig { rank: ranks[0], seed: seeds[0] },
                ClientConfig { rank: ranks[1], seed: seeds[1] },
            ],
        }
    }

    pub fn ranks(&self) -> [usize; 2] {
        [self.clients[0].rank, self.clients[1].rank]
    }

    /// Checks every field. `ρ = 0` is accepted (the server step is then a
    /// no-op); otherwise `0 < αρ ≤ 1` is required.
    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0) || !self.rho.is_finite() {
            return Err(Error::Config(format!("rho must be finite and ≥ 0, got {}", self.rho)));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        let step = self.alpha * self.rho;
        if self.rho > 0.0 && !(step > 0.0 && step <= 1.0) {
            return Err(Error::Config(format!(
                "alpha·rho = {step} must lie in (0, 1] for the server update to contract"
            )));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::Config(format!("epsilon must be ≥ 0, got {}", self.epsilon)));
        }
        if self.clients.iter().any(|c| c.rank == 0) {
            return Err(Error::Config("client ranks must be at least 1".into()));
        }
        if self.init.starts == 0 {
            return Err(Error::Config("init.starts must be at least 1".into()));
        }
        if coupled_modes(&self.coupling).is_empty() {
            return Err(Error::Config("no coupled mode configured".into()));
        }
        validate_counts(&self.coupling, self.ranks())
    }

    pub fn client_settings(&self, client: usize) -> ClientSettings {
        ClientSettings {
            client,
            rank: self.clients[client].rank,
            seed: self.clients[client].seed,
            rho: self.rho,
            burn_in: self.burn_in,
            coupling: self.coupling.clone(),
            init: self.init,
            fast: self.fast,
        }
    }

    pub fn server_settings(&self) -> ServerSettings {
        ServerSettings {
            rho: self.rho,
            alpha: self.alpha,
            epsilon: self.epsilon,
            max_rounds: self.max_rounds,
            coupling: self.coupling.clone(),
        }
    }
}

/// Everything one client needs locally.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientSettings {
    /// 0-based client index.
    pub client: usize,
    pub rank: usize,
    pub seed: u64,
    pub rho: f64,
    pub burn_in: usize,
    pub coupling: Vec<usize>,
    pub init: InitStrategy,
    pub fast: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServerSettings {
    pub rho: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub max_rounds: usize,
    pub coupling: Vec<usize>,
}

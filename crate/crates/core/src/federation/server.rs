use log::{debug, info};

use crate::cp::has_converged;
use crate::error::{Error, Result};
use crate::federation::config::ServerSettings;
use crate::federation::model::{server_update_global, GlobalModel, ModeBlock};
use crate::matrix::Matrix;
use crate::selection::{coupled_modes, greedy_select, max_count, CorrelationReport, CouplingSpec};

/// Server-side state of one run: the coupling chosen at selection time, the
/// global model and the RelErr each client reported per round.
#[derive(Debug)]
pub struct ServerSession {
    settings: ServerSettings,
    dims: Vec<Option<usize>>,
    spec: Option<CouplingSpec>,
    report: Option<CorrelationReport>,
    global: Option<GlobalModel>,
    traces: [Vec<f64>; 2],
    round: u64,
}

impl ServerSession {
    pub fn new(settings: ServerSettings) -> Self {
        let dims = vec![None; settings.coupling.len()];
        ServerSession {
            settings,
            dims,
            spec: None,
            report: None,
            global: None,
            traces: [Vec::new(), Vec::new()],
            round: 0,
        }
    }

    pub fn settings(&self) -> &ServerSettings {
        &self.settings
    }

    pub fn coupling(&self) -> Option<&CouplingSpec> {
        self.spec.as_ref()
    }

    pub fn correlation(&self) -> Option<&CorrelationReport> {
        self.report.as_ref()
    }

    pub fn global(&self) -> Option<&GlobalModel> {
        self.global.as_ref()
    }

    pub fn traces(&self) -> &[Vec<f64>; 2] {
        &self.traces
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn converged(&self) -> [bool; 2] {
        let eps = self.settings.epsilon;
        [has_converged(&self.traces[0], eps), has_converged(&self.traces[1], eps)]
    }

    /// Checks that `blocks` covers exactly the coupled modes, in order, with
    /// `width(n)` columns and row counts consistent across clients.
    fn check_blocks(&mut self, client: usize, blocks: &[ModeBlock], width: impl Fn(usize) -> Option<usize>) -> Result<()> {
        let modes = coupled_modes(&self.settings.coupling);
        let got: Vec<usize> = blocks.iter().map(|b| b.mode).collect();
        if got != modes {
            return Err(Error::Protocol(format!(
                "client {} sent modes {got:?}, expected coupled modes {modes:?}",
                client + 1
            )));
        }
        for b in blocks {
            let (rows, cols) = b.columns.shape();
            if let Some(w) = width(b.mode) {
                if cols != w {
                    return Err(Error::Protocol(format!(
                        "client {} sent {cols} columns for mode {}, expected {w}",
                        client + 1,
                        b.mode
                    )));
                }
            }
            match self.dims[b.mode] {
                Some(d) if d != rows => {
                    return Err(Error::shape(format!(
                        "client {} mode {} has {rows} rows, expected {d}",
                        client + 1,
                        b.mode
                    )))
                }
                _ => self.dims[b.mode] = Some(rows),
            }
            if !b.columns.is_finite() {
                return Err(Error::NonFinite(format!("client {} upload for mode {}", client + 1, b.mode)));
            }
        }
        Ok(())
    }

    /// Builds the correlation maps from the burn-in factors and picks the
    /// coupled component pairs greedily.
    pub fn select(&mut self, uploads: [&[ModeBlock]; 2]) -> Result<&CouplingSpec> {
        let mut ranks = [0usize; 2];
        for (k, blocks) in uploads.iter().enumerate() {
            self.check_blocks(k, blocks, |_| None)?;
            let r = blocks.first().map(|b| b.columns.cols()).unwrap_or(0);
            if blocks.iter().any(|b| b.columns.cols() != r) {
                return Err(Error::Protocol(format!("client {} factor widths disagree", k + 1)));
            }
            ranks[k] = r;
        }
        let pairs: [Vec<(usize, Matrix)>; 2] = uploads.map(|blocks| {
            blocks.iter().map(|b| (b.mode, b.columns.clone())).collect()
        });
        let report = CorrelationReport::compute([&pairs[0], &pairs[1]])?;
        let (rows, cols) = greedy_select(&report.summed, max_count(&self.settings.coupling))?;
        let spec = CouplingSpec::new(self.settings.coupling.clone(), [rows, cols], ranks)?;
        info!("selected locations {:?} / {:?}", spec.locations[0], spec.locations[1]);
        self.report = Some(report);
        Ok(self.spec.insert(spec))
    }

    fn check_public(&mut self, client: usize, blocks: &[ModeBlock]) -> Result<()> {
        let counts = self.settings.coupling.clone();
        self.check_blocks(client, blocks, |n| Some(counts[n]))
    }

    /// Seeds the global model from the round-0 uploads.
    pub fn init_global(&mut self, uploads: [&[ModeBlock]; 2]) -> Result<&GlobalModel> {
        if self.spec.is_none() {
            return Err(Error::Protocol("public upload before selection".into()));
        }
        for (k, blocks) in uploads.iter().enumerate() {
            self.check_public(k, blocks)?;
        }
        let global = GlobalModel::from_uploads(&uploads)?;
        Ok(self.global.insert(global))
    }

    /// Applies one round's uploads. Returns true once every client satisfies
    /// the stopping rule.
    pub fn aggregate(&mut self, round: u64, uploads: [&[ModeBlock]; 2], rel_errs: [f64; 2]) -> Result<bool> {
        if round != self.round + 1 {
            return Err(Error::Protocol(format!("expected round {}, got {round}", self.round + 1)));
        }
        for (k, blocks) in uploads.iter().enumerate() {
            self.check_public(k, blocks)?;
            if !rel_errs[k].is_finite() {
                return Err(Error::NonFinite(format!("client {} reported RelErr {}", k + 1, rel_errs[k])));
            }
        }
        let global = self
            .global
            .as_ref()
            .ok_or_else(|| Error::Protocol("round before global initialization".into()))?;
        let next = server_update_global(global, &uploads, self.settings.rho, self.settings.alpha)?;
        self.global = Some(next);
        for k in 0..2 {
            self.traces[k].push(rel_errs[k]);
        }
        self.round = round;
        debug!("round {round}: RelErr {:.6e} / {:.6e}", rel_errs[0], rel_errs[1]);
        Ok(self.converged().iter().all(|&c| c))
    }
}

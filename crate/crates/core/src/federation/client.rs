use log::debug;

use crate::cp::{cp_als_unconstrained, ElasticTargets, HalsState, MttkrpSource};
use crate::error::{Error, Result};
use crate::factors::FactorSet;
use crate::federation::config::ClientSettings;
use crate::federation::model::{GlobalModel, ModeBlock};
use crate::kernels::rel_err;
use crate::selection::{coupled_modes, max_count};
use crate::tensor::DenseTensor;

/// Sweeps and basis tolerance for fast-mode clients.
const BASIS_SWEEPS: usize = 100;
const BASIS_TOLERANCE: f64 = 1e-2;

/// Client-side state: the private tensor, the local factors and, after
/// selection, which components are public in each mode.
#[derive(Debug)]
pub struct ClientNode {
    settings: ClientSettings,
    tensor: DenseTensor,
    basis: Option<FactorSet>,
    state: HalsState,
    public: Option<Vec<Vec<usize>>>,
    locations: Option<Vec<usize>>,
    trace: Vec<f64>,
    burn_in_rel_err: Option<f64>,
}

impl ClientNode {
    pub fn new(tensor: DenseTensor, settings: ClientSettings) -> Result<Self> {
        if settings.coupling.len() != tensor.order() {
            return Err(Error::Config(format!(
                "coupling lists {} modes but client {} holds an order-{} tensor",
                settings.coupling.len(),
                settings.client + 1,
                tensor.order()
            )));
        }
        if !tensor.is_nonnegative() {
            return Err(Error::InvalidArgument(format!(
                "client {} tensor has negative entries",
                settings.client + 1
            )));
        }
        if tensor.frobenius_norm() == 0.0 {
            return Err(Error::ZeroNorm);
        }
        let basis = if settings.fast {
            let b = cp_als_unconstrained(&tensor, settings.rank, BASIS_SWEEPS, settings.seed)?;
            (b.rel_err <= BASIS_TOLERANCE).then_some(b.factors)
        } else {
            None
        };
        let source = match &basis {
            Some(b) => MttkrpSource::Compressed(b),
            None => MttkrpSource::Direct(&tensor),
        };
        let state = HalsState::initialize(source, &tensor, settings.rank, settings.seed, &settings.init)?;
        Ok(ClientNode {
            settings,
            tensor,
            basis,
            state,
            public: None,
            locations: None,
            trace: Vec::new(),
            burn_in_rel_err: None,
        })
    }

    pub fn client(&self) -> usize {
        self.settings.client
    }

    pub fn dims(&self) -> &[usize] {
        self.tensor.dims()
    }

    pub fn factors(&self) -> &FactorSet {
        &self.state.factors
    }

    pub fn trace(&self) -> &[f64] {
        &self.trace
    }

    pub fn burn_in_rel_err(&self) -> Option<f64> {
        self.burn_in_rel_err
    }

    pub fn locations(&self) -> Option<&[usize]> {
        self.locations.as_deref()
    }

    pub fn into_parts(self) -> (FactorSet, Vec<f64>) {
        (self.state.factors, self.trace)
    }

    fn sweep(&mut self, targets: Option<&ElasticTargets>) -> Result<()> {
        let source = match &self.basis {
            Some(b) => MttkrpSource::Compressed(b),
            None => MttkrpSource::Direct(&self.tensor),
        };
        self.state.sweep(source, targets)
    }

    /// Uncoupled sweeps ahead of selection; returns the resulting RelErr.
    pub fn burn_in(&mut self) -> Result<f64> {
        for _ in 0..self.settings.burn_in {
            self.sweep(None)?;
        }
        let err = rel_err(&self.tensor, &self.state.factors)?;
        debug!("client {} burn-in RelErr {err:.6e}", self.settings.client + 1);
        self.burn_in_rel_err = Some(err);
        Ok(err)
    }

    /// Full factor matrices of the coupled modes, uploaded once for selection.
    pub fn selection_upload(&self) -> Vec<ModeBlock> {
        coupled_modes(&self.settings.coupling)
            .into_iter()
            .map(|n| ModeBlock::new(n, self.state.factors.mode(n).clone()))
            .collect()
    }

    /// Marks the components at `indices` as public; mode `n` uses the first `L_n`.
    pub fn apply_locations(&mut self, indices: &[usize]) -> Result<()> {
        let width = max_count(&self.settings.coupling);
        let rank = self.settings.rank;
        let mut seen = vec![false; rank];
        let distinct = indices
            .iter()
            .all(|&c| c < rank && !std::mem::replace(&mut seen[c], true));
        if indices.len() != width || !distinct {
            return Err(Error::Protocol(format!(
                "locations {indices:?} invalid for {width} coupled slots and rank {rank}"
            )));
        }
        self.public = Some(
            self.settings
                .coupling
                .iter()
                .map(|&l| indices[..l].to_vec())
                .collect(),
        );
        self.locations = Some(indices.to_vec());
        Ok(())
    }

    fn public_components(&self) -> Result<&Vec<Vec<usize>>> {
        self.public
            .as_ref()
            .ok_or_else(|| Error::Protocol("public components requested before selection".into()))
    }

    /// Normalizes the coupled columns and returns them in location order.
    pub fn public_upload(&mut self) -> Result<Vec<ModeBlock>> {
        let public = self.public_components()?.clone();
        self.state.normalize_coupled(&public)?;
        Ok(public
            .iter()
            .enumerate()
            .filter(|(_, comps)| !comps.is_empty())
            .map(|(n, comps)| ModeBlock::new(n, self.state.factors.mode(n).select_columns(comps)))
            .collect())
    }

    fn targets(&self, global: &GlobalModel) -> Result<ElasticTargets> {
        let public = self.public_components()?;
        let mut targets = ElasticTargets::new(self.settings.rho, self.tensor.order(), self.settings.rank);
        for (n, comps) in public.iter().enumerate() {
            if comps.is_empty() {
                continue;
            }
            let block = global
                .block(n)
                .ok_or_else(|| Error::Protocol(format!("global model lacks mode {n}")))?;
            if block.columns.shape() != (self.tensor.dims()[n], comps.len()) {
                return Err(Error::shape(format!(
                    "global block for mode {n} is {:?}, expected {:?}",
                    block.columns.shape(),
                    (self.tensor.dims()[n], comps.len())
                )));
            }
            for (slot, &r) in comps.iter().enumerate() {
                targets.set(n, r, block.columns.column(slot));
            }
        }
        if global.blocks.len() != public.iter().filter(|c| !c.is_empty()).count() {
            return Err(Error::Protocol("global model carries unexpected modes".into()));
        }
        Ok(targets)
    }

    /// One federated round: a sweep with private components on the plain
    /// rule and public ones pulled toward `global`, then normalization and the
    /// upload of the public columns. Returns the upload and the new RelErr.
    pub fn round(&mut self, global: &GlobalModel) -> Result<(Vec<ModeBlock>, f64)> {
        let targets = self.targets(global)?;
        self.sweep(Some(&targets))?;
        let upload = self.public_upload()?;
        let err = rel_err(&self.tensor, &self.state.factors)?;
        self.trace.push(err);
        Ok((upload, err))
    }
}

//! JSON run reports with sorted keys.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::cp::has_converged;
use crate::factors::FactorSet;
use crate::federation::{ClientOutcome, PhaseTimings, RunConfig, RunResult, ServerOutcome, ShutdownReason};
use crate::kernels::rel_err;
use crate::tensor::DenseTensor;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClientReport {
    /// 1-based client number.
    pub client: usize,
    pub rank: usize,
    /// RelErr after every federated round.
    pub rel_err: Vec<f64>,
    pub burn_in_rel_err: Option<f64>,
    pub final_rel_err: f64,
    pub fit: f64,
    pub converged: bool,
    /// 1-based public components, in coupled-slot order.
    pub locations: Option<Vec<usize>>,
}

impl ClientReport {
    fn build(
        client: usize,
        tensor: &DenseTensor,
        factors: &FactorSet,
        trace: &[f64],
        burn_in_rel_err: Option<f64>,
        converged: bool,
        locations: Option<&[usize]>,
    ) -> Result<Self> {
        let final_rel_err = rel_err(tensor, factors)?;
        Ok(ClientReport {
            client: client + 1,
            rank: factors.rank(),
            rel_err: trace.to_vec(),
            burn_in_rel_err,
            final_rel_err,
            fit: 1.0 - final_rel_err,
            converged,
            locations: locations.map(|l| l.iter().map(|&r| r + 1).collect()),
        })
    }

    /// Report of a client that ran against a remote server.
    pub fn from_outcome(outcome: &ClientOutcome, tensor: &DenseTensor, epsilon: f64) -> Result<Self> {
        ClientReport::build(
            outcome.client,
            tensor,
            &outcome.factors,
            &outcome.trace,
            outcome.burn_in_rel_err,
            has_converged(&outcome.trace, epsilon),
            outcome.locations.as_deref(),
        )
    }

    pub fn to_json(&self) -> Result<String> {
        sorted_json(self)
    }
}

fn sorted_json(value: &impl Serialize) -> Result<String> {
    let value = serde_json::to_value(value).map_err(|e| Error::Format(e.to_string()))?;
    serde_json::to_string_pretty(&value).map_err(|e| Error::Format(e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub clients: Vec<ClientReport>,
    pub rounds: usize,
    pub stop_reason: &'static str,
    pub converged: bool,
    pub timings: PhaseTimings,
}

pub fn reason_name(reason: ShutdownReason) -> &'static str {
    match reason {
        ShutdownReason::Converged => "converged",
        ShutdownReason::MaxRounds => "max_rounds",
        ShutdownReason::Aborted => "aborted",
    }
}

impl RunReport {
    pub fn new(config: &RunConfig, result: &RunResult, tensors: [&DenseTensor; 2]) -> Result<Self> {
        let mut clients = Vec::with_capacity(2);
        for k in 0..2 {
            clients.push(ClientReport::build(
                k,
                tensors[k],
                &result.factors[k],
                &result.traces[k],
                result.burn_in_rel_err[k],
                result.converged[k],
                result.coupling.as_ref().map(|c| c.locations[k].as_slice()),
            )?);
        }
        Ok(RunReport {
            config: config.clone(),
            clients,
            rounds: result.rounds,
            stop_reason: reason_name(result.reason),
            converged: result.converged.iter().all(|&c| c),
            timings: result.timings,
        })
    }

    /// Pretty JSON; object keys come out sorted.
    pub fn to_json(&self) -> Result<String> {
        sorted_json(self)
    }
}

/// What the server of a TCP run knows: RelErr traces, selection and timing.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ServerReport {
    pub config: RunConfig,
    pub rel_err: [Vec<f64>; 2],
    pub rounds: usize,
    pub stop_reason: &'static str,
    pub converged: [bool; 2],
    /// 1-based public components per client.
    pub locations: Option<[Vec<usize>; 2]>,
    pub aborted: Option<String>,
    pub timings: PhaseTimings,
}

impl ServerReport {
    pub fn new(config: &RunConfig, outcome: &ServerOutcome) -> Self {
        ServerReport {
            config: config.clone(),
            rel_err: outcome.traces.clone(),
            rounds: outcome.rounds,
            stop_reason: reason_name(outcome.reason),
            converged: outcome.converged,
            locations: outcome
                .coupling
                .as_ref()
                .map(|c| c.locations.clone().map(|l| l.iter().map(|&r| r + 1).collect())),
            aborted: outcome.aborted.clone(),
            timings: outcome.timings,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        sorted_json(self)
    }
}

/// Drops the `timings` object so reports from identical runs compare equal.
pub fn without_timings(json: &str) -> Result<serde_json::Value> {
    let mut value: serde_json::Value = serde_json::from_str(json).map_err(|e| Error::Format(e.to_string()))?;
    if let Some(obj) = value.as_object_mut() {
        obj.remove("timings");
    }
    Ok(value)
}

//! Message-level drivers for the server and the clients, and an in-process
//! runner that wires both over channels.

use std::net::TcpListener;
use std::thread;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factors::FactorSet;
use crate::federation::client::ClientNode;
use crate::federation::config::{RunConfig, ServerSettings};
use crate::federation::model::{GlobalModel, ModeBlock};
use crate::federation::server::ServerSession;
use crate::federation::transport::{CaptureLink, ChannelLink, FrameLog, Link, TcpLink};
use crate::federation::wire::{Message, ShutdownReason};
use crate::selection::{CorrelationReport, CouplingSpec};
use crate::tensor::DenseTensor;

/// Wall-clock seconds per phase, measured by the server.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    /// Handshake, client initialization and burn-in.
    pub setup: f64,
    /// Correlation, greedy selection and the round-0 uploads.
    pub selection: f64,
    pub rounds: f64,
    pub total: f64,
}

#[derive(Debug)]
pub struct ServerOutcome {
    pub coupling: Option<CouplingSpec>,
    pub correlation: Option<CorrelationReport>,
    pub global: Option<GlobalModel>,
    pub traces: [Vec<f64>; 2],
    pub rounds: usize,
    pub converged: [bool; 2],
    pub reason: ShutdownReason,
    pub timings: PhaseTimings,
    /// Why the run was aborted, if it was.
    pub aborted: Option<String>,
}

#[derive(Debug)]
pub struct ClientOutcome {
    /// 0-based client index.
    pub client: usize,
    pub factors: FactorSet,
    pub trace: Vec<f64>,
    pub burn_in_rel_err: Option<f64>,
    pub locations: Option<Vec<usize>>,
    pub reason: ShutdownReason,
}

/// Everything an in-process run produces.
#[derive(Debug)]
pub struct RunResult {
    pub factors: [FactorSet; 2],
    pub traces: [Vec<f64>; 2],
    pub burn_in_rel_err: [Option<f64>; 2],
    pub rounds: usize,
    pub converged: [bool; 2],
    pub reason: ShutdownReason,
    pub coupling: Option<CouplingSpec>,
    pub correlation: Option<CorrelationReport>,
    pub global: Option<GlobalModel>,
    pub timings: PhaseTimings,
}

fn unexpected(what: &str, msg: &Message) -> Error {
    Error::Protocol(format!("expected {what}, received {:?}", msg.kind()))
}

fn recv_blocks(link: &mut dyn Link, round: Option<u64>) -> Result<Vec<ModeBlock>> {
    match (link.recv()?, round) {
        (Message::Factors { blocks }, None) => Ok(blocks),
        (Message::PublicUpload { round: r, blocks }, Some(want)) if r == want => Ok(blocks),
        (msg, None) => Err(unexpected("FACTORS", &msg)),
        (msg, Some(want)) => Err(unexpected(&format!("PUBLIC_UPLOAD for round {want}"), &msg)),
    }
}

fn recv_status(link: &mut dyn Link, round: u64) -> Result<f64> {
    match link.recv()? {
        Message::RoundStatus { round: r, rel_err } if r == round => Ok(rel_err),
        msg => Err(unexpected(&format!("ROUND_STATUS for round {round}"), &msg)),
    }
}

/// Reads HELLO from every link and returns the links ordered by client id.
fn handshake<L: Link>(links: Vec<L>) -> Result<[L; 2]> {
    if links.len() != 2 {
        return Err(Error::Config(format!("expected 2 clients, got {}", links.len())));
    }
    let mut slots: [Option<L>; 2] = [None, None];
    for mut link in links {
        let id = match link.recv()? {
            Message::Hello { client } => client as usize,
            msg => return Err(unexpected("HELLO", &msg)),
        };
        if !(1..=2).contains(&id) || slots[id - 1].is_some() {
            return Err(Error::Protocol(format!("invalid or duplicate client id {id}")));
        }
        slots[id - 1] = Some(link);
    }
    let [a, b] = slots;
    Ok([a.expect("both ids seen"), b.expect("both ids seen")])
}

struct Driver {
    session: ServerSession,
    reason: ShutdownReason,
    timings: PhaseTimings,
}

impl Driver {
    fn drive<L: Link>(&mut self, links: &mut [L; 2]) -> Result<()> {
        let start = Instant::now();
        let max_rounds = self.session.settings().max_rounds as u64;
        if max_rounds == 0 {
            self.reason = ShutdownReason::MaxRounds;
            return Ok(());
        }
        for (k, link) in links.iter_mut().enumerate() {
            link.send(&Message::Hello { client: k as u32 + 1 })?;
        }
        let mut factors = Vec::with_capacity(2);
        for link in links.iter_mut() {
            factors.push(recv_blocks(link, None)?);
        }
        self.timings.setup = start.elapsed().as_secs_f64();

        let mark = Instant::now();
        let spec = self.session.select([&factors[0], &factors[1]])?.clone();
        drop(factors);
        for (k, link) in links.iter_mut().enumerate() {
            let indices = spec.locations[k].iter().map(|&c| c as u32).collect();
            link.send(&Message::Locations { indices })?;
        }
        let mut uploads = Vec::with_capacity(2);
        for link in links.iter_mut() {
            uploads.push(recv_blocks(link, Some(0))?);
        }
        self.session.init_global([&uploads[0], &uploads[1]])?;
        self.timings.selection = mark.elapsed().as_secs_f64();

        let mark = Instant::now();
        self.reason = ShutdownReason::MaxRounds;
        for round in 1..=max_rounds {
            let blocks = self.session.global().expect("initialized").blocks.clone();
            let bcast = Message::GlobalBcast { round, blocks };
            for link in links.iter_mut() {
                link.send(&bcast)?;
            }
            let mut uploads = Vec::with_capacity(2);
            let mut errs = [0.0; 2];
            for (k, link) in links.iter_mut().enumerate() {
                uploads.push(recv_blocks(link, Some(round))?);
                errs[k] = recv_status(link, round)?;
            }
            if self.session.aggregate(round, [&uploads[0], &uploads[1]], errs)? {
                self.reason = ShutdownReason::Converged;
                break;
            }
        }
        self.timings.rounds = mark.elapsed().as_secs_f64();
        Ok(())
    }
}

/// Runs the server side of the protocol over two client links. Protocol or
/// data errors abort the run; the partial state is still returned.
pub fn run_server<L: Link>(links: Vec<L>, settings: ServerSettings) -> ServerOutcome {
    let start = Instant::now();
    let mut driver = Driver {
        session: ServerSession::new(settings),
        reason: ShutdownReason::Aborted,
        timings: PhaseTimings::default(),
    };
    let mut aborted = None;
    match handshake(links) {
        Ok(mut links) => {
            let result = driver.drive(&mut links);
            let reason = match &result {
                Ok(()) => driver.reason,
                Err(_) => ShutdownReason::Aborted,
            };
            for link in links.iter_mut() {
                if let Err(e) = link.send(&Message::Shutdown { reason }) {
                    warn!("could not deliver SHUTDOWN: {e}");
                }
            }
            if let Err(e) = result {
                warn!("run aborted after round {}: {e}", driver.session.round());
                driver.reason = ShutdownReason::Aborted;
                aborted = Some(e.to_string());
            }
        }
        Err(e) => aborted = Some(e.to_string()),
    }
    driver.timings.total = start.elapsed().as_secs_f64();
    let session = driver.session;
    info!("server finished after {} rounds ({:?})", session.round(), driver.reason);
    ServerOutcome {
        converged: session.converged(),
        rounds: session.round() as usize,
        traces: session.traces().clone(),
        coupling: session.coupling().cloned(),
        correlation: session.correlation().cloned(),
        global: session.global().cloned(),
        reason: driver.reason,
        timings: driver.timings,
        aborted,
    }
}

/// Accepts two TCP clients on `listener` and serves one run. Every frame is
/// recorded into `log` when one is given.
pub fn serve_tcp(listener: &TcpListener, settings: ServerSettings, log: Option<FrameLog>) -> Result<ServerOutcome> {
    let mut links: Vec<Box<dyn Link>> = Vec::with_capacity(2);
    while links.len() < 2 {
        let (stream, peer) = listener.accept()?;
        info!("client connected from {peer}");
        let link = TcpLink::new(stream)?;
        links.push(match &log {
            Some(log) => Box::new(CaptureLink::new(link, log.clone())),
            None => Box::new(link),
        });
    }
    Ok(run_server(links, settings))
}

/// Runs the client side of the protocol to completion.
pub fn run_client(link: &mut dyn Link, mut node: ClientNode) -> Result<ClientOutcome> {
    let client = node.client();
    link.send(&Message::Hello { client: client as u32 + 1 })?;
    let reason = match link.recv()? {
        Message::Hello { .. } => client_rounds(link, &mut node)?,
        Message::Shutdown { reason } => reason,
        msg => return Err(unexpected("HELLO", &msg)),
    };
    if reason == ShutdownReason::Aborted {
        return Err(Error::Protocol("server aborted the run".into()));
    }
    let burn_in_rel_err = node.burn_in_rel_err();
    let locations = node.locations().map(<[usize]>::to_vec);
    let (factors, trace) = node.into_parts();
    Ok(ClientOutcome { client, factors, trace, burn_in_rel_err, locations, reason })
}

fn client_rounds(link: &mut dyn Link, node: &mut ClientNode) -> Result<ShutdownReason> {
    node.burn_in()?;
    link.send(&Message::Factors { blocks: node.selection_upload() })?;
    match link.recv()? {
        Message::Locations { indices } => {
            let indices: Vec<usize> = indices.into_iter().map(|c| c as usize).collect();
            node.apply_locations(&indices)?;
        }
        Message::Shutdown { reason } => return Ok(reason),
        msg => return Err(unexpected("LOCATIONS", &msg)),
    }
    link.send(&Message::PublicUpload { round: 0, blocks: node.public_upload()? })?;
    let mut expected = 1;
    loop {
        match link.recv()? {
            Message::GlobalBcast { round, blocks } if round == expected => {
                let (upload, rel_err) = node.round(&GlobalModel { blocks })?;
                link.send(&Message::PublicUpload { round, blocks: upload })?;
                link.send(&Message::RoundStatus { round, rel_err })?;
                expected += 1;
            }
            Message::Shutdown { reason } => return Ok(reason),
            msg => return Err(unexpected(&format!("GLOBAL_BCAST for round {expected}"), &msg)),
        }
    }
}

/// Runs a complete federation in this process: one thread per client, the
/// server on the calling thread, all traffic through the binary codec.
pub fn run_federation(config: &RunConfig, tensors: [DenseTensor; 2]) -> Result<RunResult> {
    run_federation_logged(config, tensors, None)
}

/// As [`run_federation`], recording every frame the server sends or receives.
pub fn run_federation_logged(
    config: &RunConfig,
    tensors: [DenseTensor; 2],
    log: Option<FrameLog>,
) -> Result<RunResult> {
    config.validate()?;
    let (server_ends, client_ends): (Vec<_>, Vec<_>) = (0..2).map(|_| ChannelLink::pair()).unzip();
    let links: Vec<Box<dyn Link>> = server_ends
        .into_iter()
        .map(|l| -> Box<dyn Link> {
            match &log {
                Some(log) => Box::new(CaptureLink::new(l, log.clone())),
                None => Box::new(l),
            }
        })
        .collect();
    let (server, clients) = thread::scope(|scope| {
        let handles: Vec<_> = tensors
            .into_iter()
            .zip(client_ends)
            .enumerate()
            .map(|(k, (tensor, mut link))| {
                let settings = config.client_settings(k);
                scope.spawn(move || {
                    let node = ClientNode::new(tensor, settings)?;
                    run_client(&mut link, node)
                })
            })
            .collect();
        let server = run_server(links, config.server_settings());
        let clients: Vec<Result<ClientOutcome>> = handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Protocol("client thread panicked".into()))))
            .collect();
        (server, clients)
    });
    let mut outcomes = Vec::with_capacity(2);
    for c in clients {
        outcomes.push(c?);
    }
    if let Some(reason) = server.aborted {
        return Err(Error::Protocol(reason));
    }
    let [a, b]: [ClientOutcome; 2] = outcomes.try_into().expect("two clients");
    Ok(RunResult {
        burn_in_rel_err: [a.burn_in_rel_err, b.burn_in_rel_err],
        factors: [a.factors, b.factors],
        traces: [a.trace, b.trace],
        rounds: server.rounds,
        converged: server.converged,
        reason: server.reason,
        coupling: server.coupling,
        correlation: server.correlation,
        global: server.global,
        timings: server.timings,
    })
}

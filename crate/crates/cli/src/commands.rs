use std::fmt;
use std::fs;
use std::io::Write;
use std::net::TcpListener;
use std::path::Path;
use std::thread;
use std::time::{Duration, Instant};

use fcncp::cp::{ncp_fasthals_with, InitStrategy, NcpOptions};
use fcncp::federation::{
    run_client, run_federation, serve_tcp, ClientNode, ShutdownReason, TcpLink,
};
use fcncp::io::{
    export_correlation, export_factors, import_factors, read_tensor, write_matrix_csv, write_tensor,
    ClientEntry, ClientReport, ConfigFile, LoadedConfig, RunReport, ServerReport,
};
use fcncp::kernels::fit;
use fcncp::selection::{greedy_select, pca_rank, CorrelationReport};
use fcncp::synth::{build_simulation_pair_with, SimulationOptions, SIM_DIMS};
use fcncp::{unfold, DenseTensor, Error, Matrix};
use log::info;

use crate::DecomposeArgs;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Error),
    NotConverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::NotConverged(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Data(e) => write!(f, "{e}"),
            CliError::NotConverged(msg) => write!(f, "did not converge: {msg}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::ModeOutOfRange { .. } => CliError::Usage(e.to_string()),
            other => CliError::Data(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.into())
    }
}

type CliResult = Result<(), CliError>;

fn write_text(path: &Path, text: &str) -> CliResult {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn load_run(config: &Path) -> Result<(LoadedConfig, fcncp::federation::RunConfig), CliError> {
    let loaded = LoadedConfig::load(config)?;
    let run = loaded.file.run_config()?;
    Ok((loaded, run))
}

pub fn synth(out: &Path, seed: u64, noise: f64, half_width: usize) -> CliResult {
    if !(noise >= 0.0) {
        return Err(CliError::Usage(format!("--noise must be ≥ 0, got {noise}")));
    }
    let pair = build_simulation_pair_with(seed, SimulationOptions { noise_level: noise, half_width })?;
    fs::create_dir_all(out)?;
    let mut entries = Vec::with_capacity(2);
    for k in 0..2 {
        let name = format!("sim{}.fcnt", k + 1);
        write_tensor(out.join(&name), &pair.tensors[k])?;
        export_factors(&pair.truth.factors[k], out.join(format!("truth/client{}", k + 1)))?;
        export_factors(&pair.truth.clean[k], out.join(format!("truth/client{}/clean", k + 1)))?;
        entries.push(ClientEntry {
            tensor: name.into(),
            rank: pair.truth.factors[k].rank(),
            seed: 2 * seed + 1 + k as u64,
        });
    }
    let [c1, c2]: [ClientEntry; 2] = entries.try_into().expect("two clients");
    let config = ConfigFile::new(vec![2, 2, 0], [c1, c2]);
    write_text(&out.join("sim.toml"), &config.to_toml()?)?;
    println!(
        "wrote {}x{}x{} tensor pair, ground truth and sim.toml to {}",
        SIM_DIMS[0],
        SIM_DIMS[1],
        SIM_DIMS[2],
        out.display()
    );
    Ok(())
}

pub fn decompose(a: &DecomposeArgs) -> CliResult {
    if a.rank == 0 || a.starts == 0 {
        return Err(CliError::Usage("--rank and --starts must be at least 1".into()));
    }
    let t = read_tensor(&a.tensor)?;
    let opts = NcpOptions {
        epsilon: a.epsilon,
        max_iters: a.max_iters,
        init: InitStrategy { starts: a.starts, ..InitStrategy::default() },
        fast: a.fast,
        ..NcpOptions::new(a.rank, a.seed)
    };
    let result = ncp_fasthals_with(&t, &opts)?;
    export_factors(&result.factors, &a.out)?;
    if !result.trace.is_empty() {
        let trace = Matrix::from_vec(result.trace.len(), 1, result.trace.clone())?;
        write_matrix_csv(a.out.join("rel_err.csv"), &trace, "rel_err")?;
    }
    let f = fit(&t, &result.factors)?;
    println!("fit {f:.6} after {} sweeps", result.trace.len());
    if !result.converged {
        return Err(CliError::NotConverged(format!("{} sweeps without meeting epsilon", a.max_iters)));
    }
    Ok(())
}

fn check_mode(t: &DenseTensor, mode: usize) -> Result<usize, CliError> {
    if mode == 0 || mode > t.order() {
        return Err(CliError::Usage(format!(
            "--mode must be between 1 and {}, got {mode}",
            t.order()
        )));
    }
    Ok(mode - 1)
}

pub fn rank(tensor: &Path, mode: usize, threshold: f64) -> CliResult {
    let t = read_tensor(tensor)?;
    let n = check_mode(&t, mode)?;
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(CliError::Usage(format!("--threshold must lie in (0, 1], got {threshold}")));
    }
    // rows are observations, columns the entries of mode n
    let m = unfold(&t, n)?.transpose();
    println!("{}", pca_rank(&m, threshold)?);
    Ok(())
}

pub fn corr(factors1: &Path, factors2: &Path, modes: &[usize], select: Option<usize>, out: &Path) -> CliResult {
    let sets = [import_factors(factors1)?, import_factors(factors2)?];
    if sets[0].order() != sets[1].order() {
        return Err(CliError::Data(Error::Shape(format!(
            "factor sets have orders {} and {}",
            sets[0].order(),
            sets[1].order()
        ))));
    }
    let mut modes = modes.to_vec();
    modes.sort_unstable();
    modes.dedup();
    if modes.iter().any(|&m| m == 0 || m > sets[0].order()) {
        return Err(CliError::Usage(format!(
            "--modes must lie between 1 and {}",
            sets[0].order()
        )));
    }
    let uploads = [0, 1].map(|k| {
        modes
            .iter()
            .map(|&m| (m - 1, sets[k].mode(m - 1).clone()))
            .collect::<Vec<_>>()
    });
    let report = CorrelationReport::compute([&uploads[0], &uploads[1]])?;
    export_correlation(&report, out)?;
    let s = &report.summed;
    for i in 0..s.rows() {
        let row: Vec<String> = s.row(i).iter().map(|v| format!("{v:.4}")).collect();
        println!("{}", row.join(" "));
    }
    if let Some(count) = select {
        let (rows, cols) = greedy_select(s, count)?;
        let one_based = |v: &[usize]| v.iter().map(|r| (r + 1).to_string()).collect::<Vec<_>>().join(",");
        println!("client1 {} client2 {}", one_based(&rows), one_based(&cols));
    }
    Ok(())
}

fn read_client_tensors(loaded: &LoadedConfig) -> Result<[DenseTensor; 2], CliError> {
    Ok([read_tensor(loaded.tensor_path(0))?, read_tensor(loaded.tensor_path(1))?])
}

pub fn fed_run(config: &Path, out: &Path) -> CliResult {
    let (loaded, run) = load_run(config)?;
    let tensors = read_client_tensors(&loaded)?;
    let result = run_federation(&run, tensors.clone())?;
    let report = RunReport::new(&run, &result, [&tensors[0], &tensors[1]])?;
    write_text(&out.join("report.json"), &report.to_json()?)?;
    for k in 0..2 {
        export_factors(&result.factors[k], out.join(format!("client{}", k + 1)))?;
    }
    if let Some(corr) = &result.correlation {
        export_correlation(corr, out.join("correlation"))?;
    }
    if let Some(global) = &result.global {
        fs::create_dir_all(out.join("global"))?;
        for b in &global.blocks {
            write_matrix_csv(out.join(format!("global/mode_{}.csv", b.mode + 1)), &b.columns, "slot")?;
        }
    }
    for c in &report.clients {
        println!("client {}: fit {:.6}, {} rounds", c.client, c.fit, report.rounds);
    }
    if result.reason != ShutdownReason::Converged {
        return Err(CliError::NotConverged(format!("stopped after {} rounds", result.rounds)));
    }
    Ok(())
}

pub fn fed_server(config: &Path, listen: Option<&str>, out: &Path) -> CliResult {
    let (loaded, run) = load_run(config)?;
    let addr = listen
        .map(str::to_owned)
        .or_else(|| loaded.file.listen.clone())
        .ok_or_else(|| CliError::Usage("no listen address: pass --listen or set `listen`".into()))?;
    let listener = TcpListener::bind(&addr)?;
    println!("listening on {}", listener.local_addr()?);
    std::io::stdout().flush()?;
    let outcome = serve_tcp(&listener, run.server_settings(), None)?;
    let report = ServerReport::new(&run, &outcome);
    write_text(&out.join("server_report.json"), &report.to_json()?)?;
    if let Some(corr) = &outcome.correlation {
        export_correlation(corr, out.join("correlation"))?;
    }
    if let Some(reason) = outcome.aborted {
        return Err(CliError::Data(Error::Protocol(reason)));
    }
    println!("{} rounds, stop reason {:?}", outcome.rounds, outcome.reason);
    if outcome.reason != ShutdownReason::Converged {
        return Err(CliError::NotConverged(format!("stopped after {} rounds", outcome.rounds)));
    }
    Ok(())
}

/// How long a client keeps retrying a server that is not accepting yet.
const CONNECT_PATIENCE: Duration = Duration::from_secs(10);

fn connect(addr: &str) -> Result<TcpLink, CliError> {
    let start = Instant::now();
    loop {
        match TcpLink::connect(addr) {
            Ok(link) => return Ok(link),
            Err(Error::Io(e)) if start.elapsed() < CONNECT_PATIENCE => {
                info!("waiting for server at {addr}: {e}");
                thread::sleep(Duration::from_millis(100));
            }
            Err(e) => return Err(e.into()),
        }
    }
}

pub fn fed_client(config: &Path, client: usize, connect_to: Option<&str>, out: &Path) -> CliResult {
    let (loaded, run) = load_run(config)?;
    let addr = connect_to
        .map(str::to_owned)
        .or_else(|| loaded.file.connect.clone())
        .ok_or_else(|| CliError::Usage("no server address: pass --connect or set `connect`".into()))?;
    let tensor = read_tensor(loaded.tensor_path(client))?;
    let node = ClientNode::new(tensor.clone(), run.client_settings(client))?;
    let mut link = connect(&addr)?;
    let outcome = run_client(&mut link, node)?;
    export_factors(&outcome.factors, out)?;
    let report = ClientReport::from_outcome(&outcome, &tensor, run.epsilon)?;
    write_text(&out.join("client_report.json"), &report.to_json()?)?;
    println!("client {}: fit {:.6}, {} rounds", client + 1, report.fit, outcome.trace.len());
    if outcome.reason != ShutdownReason::Converged {
        return Err(CliError::NotConverged(format!("stopped after {} rounds", outcome.trace.len())));
    }
    Ok(())
}

//! Seeded `fed run` reproductions on the simulation pair.

use std::path::PathBuf;
use std::sync::OnceLock;

use fcncp::io::import_factors;
use serde_json::Value;
use tempfile::TempDir;

use crate::support::{arg, ensure, fcncp, match_components, pearson, record, Check, TraceRecord};

pub const RUNS: u64 = 20;
/// Ground-truth shared pairs (client 1 component, client 2 component).
const SHARED: [(usize, usize); 2] = [(0, 0), (1, 1)];
const COUPLED_MODES: [usize; 2] = [0, 1];

pub struct SimRun {
    pub seed: u64,
    pub dir: TempDir,
    pub exit: Option<i32>,
    pub report: Option<Value>,
}

impl SimRun {
    fn data(&self) -> PathBuf {
        self.dir.path().join("data")
    }

    fn out(&self) -> PathBuf {
        self.dir.path().join("run")
    }
}

fn sim_runs() -> &'static [SimRun] {
    static RUNS_CELL: OnceLock<Vec<SimRun>> = OnceLock::new();
    RUNS_CELL.get_or_init(|| {
        (0..RUNS)
            .map(|seed| {
                let dir = tempfile::tempdir().unwrap();
                let data = dir.path().join("data");
                let out = dir.path().join("run");
                let s = seed.to_string();
                let synth = fcncp(&["synth", "--out", arg(&data), "--seed", &s]);
                assert!(synth.status.success(), "synth failed for seed {seed}");
                let config = data.join("sim.toml");
                let run = fcncp(&["fed", "run", "--config", arg(&config), "--out", arg(&out)]);
                let report = std::fs::read_to_string(out.join("report.json"))
                    .ok()
                    .and_then(|t| serde_json::from_str::<Value>(&t).ok());
                if let Some(r) = &report {
                    record(TraceRecord {
                        label: format!("simulation seed {seed}"),
                        traces: r["clients"]
                            .as_array()
                            .unwrap()
                            .iter()
                            .map(|c| c["rel_err"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect())
                            .collect(),
                        rounds: r["rounds"].as_u64().unwrap() as usize,
                        converged: r["stop_reason"] == "converged",
                        max_rounds: r["config"]["max_rounds"].as_u64().unwrap() as usize,
                        epsilon: r["config"]["epsilon"].as_f64().unwrap(),
                    });
                }
                SimRun { seed, dir, exit: run.status.code(), report }
            })
            .collect()
    })
}

/// Mean final fit per client over the seeded runs.
pub fn reproduction() -> Check {
    let runs = sim_runs();
    let mut sums = [0.0; 2];
    for run in runs {
        let report = run.report.as_ref().ok_or_else(|| format!("seed {} wrote no report", run.seed))?;
        ensure(run.exit == Some(0), || format!("seed {} exited with {:?}", run.seed, run.exit))?;
        for (k, c) in report["clients"].as_array().unwrap().iter().enumerate() {
            let fit = c["fit"].as_f64().unwrap();
            let last = c["rel_err"].as_array().unwrap().last().and_then(Value::as_f64).unwrap();
            ensure((fit - (1.0 - last)).abs() < 1e-12, || format!("seed {}: fit ≠ 1 − final RelErr", run.seed))?;
            sums[k] += fit;
        }
    }
    let means = sums.map(|s| s / RUNS as f64);
    let detail = format!("mean fit {:.5} / {:.5} over {RUNS} runs", means[0], means[1]);
    for m in means {
        ensure(m >= 0.99 && (m - 0.996).abs() <= 0.01, || format!("{detail}: outside 0.996 ± 0.01 or below 0.99"))?;
    }
    Ok(detail)
}

fn recovered(run: &SimRun) -> Result<(), String> {
    let report = run.report.as_ref().ok_or("no report")?;
    let mut learned = Vec::new();
    let mut perms = Vec::new();
    let mut clean = Vec::new();
    let mut locs = Vec::new();
    for k in 0..2 {
        let f = import_factors(run.out().join(format!("client{}", k + 1))).map_err(|e| e.to_string())?;
        let truth = import_factors(run.data().join(format!("truth/client{}", k + 1))).map_err(|e| e.to_string())?;
        let c = import_factors(run.data().join(format!("truth/client{}/clean", k + 1))).map_err(|e| e.to_string())?;
        perms.push(match_components(&f, &truth, &[0, 1, 2]));
        learned.push(f);
        clean.push(c);
        let l: Vec<usize> = report["clients"][k]["locations"]
            .as_array()
            .ok_or("no locations")?
            .iter()
            .map(|v| v.as_u64().unwrap() as usize - 1)
            .collect();
        locs.push(l);
    }
    let mut pairs: Vec<(usize, usize)> = (0..locs[0].len())
        .map(|l| (perms[0][locs[0][l]], perms[1][locs[1][l]]))
        .collect();
    pairs.sort_unstable();
    ensure(pairs == SHARED, || format!("selected truth pairs {pairs:?}"))?;
    for l in 0..locs[0].len() {
        for &n in &COUPLED_MODES {
            let a = learned[0].mode(n).column(locs[0][l]);
            let b = learned[1].mode(n).column(locs[1][l]);
            let between = pearson(&a, &b);
            ensure(between >= 0.99, || format!("slot {l} mode {}: clients correlate {between:.4}", n + 1))?;
            for (k, col) in [a, b].iter().enumerate() {
                let atom = clean[k].mode(n).column(perms[k][locs[k][l]]);
                let c = pearson(col, &atom);
                ensure(c >= 0.95, || format!("client {} mode {}: clean-atom correlation {c:.4}", k + 1, n + 1))?;
            }
        }
    }
    Ok(())
}

pub fn coupling_recovery() -> Check {
    let runs = sim_runs();
    let mut good = 0;
    let mut notes = Vec::new();
    for run in runs {
        match recovered(run) {
            Ok(()) => good += 1,
            Err(e) => notes.push(format!("seed {}: {e}", run.seed)),
        }
    }
    let detail = format!("{good}/{RUNS} runs recovered the shared pairs");
    if good * 10 >= 9 * runs.len() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", notes.join("; ")))
    }
}

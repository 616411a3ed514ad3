//! Stopping-rule audit over every run recorded by the other criteria.

use fcncp::federation::{run_federation, RunConfig};
use fcncp::io::ConfigFile;
use fcncp::synth::build_simulation_pair;
use serde_json::Value;

use crate::support::{arg, ensure, fcncp, record, Check, TraceRecord, RECORDS};

fn capped_runs() -> Result<(), String> {
    let pair = build_simulation_pair(1).map_err(|e| e.to_string())?;
    let mut config = RunConfig::new(vec![2, 2, 0], [3, 3], [3, 4]);
    config.epsilon = 0.0;
    config.max_rounds = 3;
    let result = run_federation(&config, pair.tensors).map_err(|e| e.to_string())?;
    record(TraceRecord {
        label: "capped in-process".into(),
        traces: result.traces.to_vec(),
        rounds: result.rounds,
        converged: false,
        max_rounds: 3,
        epsilon: 0.0,
    });

    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ensure(fcncp(&["synth", "--out", arg(&data), "--seed", "2"]).status.success(), || "synth failed".into())?;
    let path = data.join("sim.toml");
    let mut file = ConfigFile::parse(&std::fs::read_to_string(&path).unwrap()).map_err(|e| e.to_string())?;
    file.max_rounds = 4;
    file.epsilon = 0.0;
    std::fs::write(&path, file.to_toml().unwrap()).unwrap();
    let out = dir.path().join("run");
    let status = fcncp(&["fed", "run", "--config", arg(&path), "--out", arg(&out)]).status;
    ensure(status.code() == Some(3), || format!("capped CLI run exited {:?}, expected 3", status.code()))?;
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    ensure(report["stop_reason"] == "max_rounds", || format!("stop reason {}", report["stop_reason"]))?;
    record(TraceRecord {
        label: "capped CLI".into(),
        traces: report["clients"]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| c["rel_err"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect())
            .collect(),
        rounds: report["rounds"].as_u64().unwrap() as usize,
        converged: false,
        max_rounds: 4,
        epsilon: 0.0,
    });
    Ok(())
}

pub fn stopping_rule() -> Check {
    capped_runs()?;
    let records = RECORDS.lock().unwrap().clone();
    let (mut converged, mut capped) = (0, 0);
    for r in &records {
        for t in &r.traces {
            ensure(t.len() == r.rounds, || format!("{}: trace of {} for {} rounds", r.label, t.len(), r.rounds))?;
            ensure(t.iter().all(|v| v.is_finite() && *v >= 0.0), || format!("{}: bad RelErr", r.label))?;
        }
        if r.converged {
            converged += 1;
            for t in &r.traces {
                let [.., a, b] = t.as_slice() else {
                    return Err(format!("{}: converged with fewer than two rounds", r.label));
                };
                ensure((b - a).abs() < r.epsilon, || format!("{}: last step {:.2e}", r.label, (b - a).abs()))?;
            }
        } else {
            capped += 1;
            ensure(r.rounds == r.max_rounds, || format!("{}: stopped at {} of {} rounds", r.label, r.rounds, r.max_rounds))?;
        }
    }
    ensure(capped >= 2, || "no capped runs recorded".into())?;
    Ok(format!("{converged} converged and {capped} capped runs audited"))
}

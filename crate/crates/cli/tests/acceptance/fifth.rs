//! Fifth-order smoke run.

use fcncp::cp::InitStrategy;
use fcncp::federation::{run_federation, RunConfig, ShutdownReason};
use fcncp::kernels::fit;
use fcncp::synth::{build_fifth_order_smoke, FifthOrderSpec};

use crate::support::{ensure, match_components, pearson, record, Check, TraceRecord};

pub fn fifth_order_smoke() -> Check {
    let spec = FifthOrderSpec { dims: [2, 6, 8, 10, 12], ranks: [4, 4], coupled_modes: vec![3, 4], shared: 2, seed: 0 };
    let pair = build_fifth_order_smoke(&spec).map_err(|e| e.to_string())?;
    let mut config = RunConfig::new(vec![0, 0, 0, 2, 2], spec.ranks, [1, 2]);
    config.max_rounds = 500;
    config.init = InitStrategy { starts: 128, sweeps: 10 };
    let result = run_federation(&config, pair.tensors.clone()).map_err(|e| e.to_string())?;
    record(TraceRecord {
        label: "fifth order".into(),
        traces: result.traces.to_vec(),
        rounds: result.rounds,
        converged: result.reason == ShutdownReason::Converged,
        max_rounds: config.max_rounds,
        epsilon: config.epsilon,
    });
    ensure(result.reason == ShutdownReason::Converged, || format!("no convergence in {} rounds", result.rounds))?;
    let mut worst_corr: f64 = 1.0;
    let mut fits = [0.0; 2];
    for k in 0..2 {
        fits[k] = fit(&pair.tensors[k], &result.factors[k]).map_err(|e| e.to_string())?;
        let truth = &pair.truth.factors[k];
        let perm = match_components(&result.factors[k], truth, &[0, 1, 2, 3, 4]);
        for s in 0..spec.shared {
            let r = perm.iter().position(|&p| p == s).unwrap();
            for &n in &spec.coupled_modes {
                let c = pearson(&result.factors[k].mode(n).column(r), &truth.mode(n).column(s));
                worst_corr = worst_corr.min(c);
            }
        }
    }
    let detail = format!(
        "{} rounds, fit {:.4} / {:.4}, worst shared-atom correlation {worst_corr:.4}",
        result.rounds, fits[0], fits[1]
    );
    ensure(fits.iter().all(|&f| f >= 0.95) && worst_corr >= 0.95, || detail.clone())?;
    Ok(detail)
}

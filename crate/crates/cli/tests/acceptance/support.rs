use std::path::Path;
use std::process::{Command, Output};
use std::sync::Mutex;

use fcncp::FactorSet;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fcncp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fcncp"))
        .args(args)
        .env("FCNCP_LOG", "error")
        .output()
        .expect("spawn fcncp")
}

pub fn arg(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Plain Pearson correlation; 0 when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// `perm[r]` is the truth component matched to learned component `r`,
/// chosen to maximize the summed correlation over `modes`.
pub fn match_components(learned: &FactorSet, truth: &FactorSet, modes: &[usize]) -> Vec<usize> {
    let r = learned.rank();
    assert_eq!(r, truth.rank());
    let score = |a: usize, b: usize| -> f64 {
        modes
            .iter()
            .map(|&n| pearson(&learned.mode(n).column(a), &truth.mode(n).column(b)))
            .sum()
    };
    permutations(r)
        .into_iter()
        .max_by(|p, q| {
            let sp: f64 = p.iter().enumerate().map(|(a, &b)| score(a, b)).sum();
            let sq: f64 = q.iter().enumerate().map(|(a, &b)| score(a, b)).sum();
            sp.total_cmp(&sq)
        })
        .expect("rank ≥ 1")
}

/// A finished run, kept for the stopping-rule audit.
#[derive(Clone, Debug)]
pub struct TraceRecord {
    pub label: String,
    pub traces: Vec<Vec<f64>>,
    pub rounds: usize,
    pub converged: bool,
    pub max_rounds: usize,
    pub epsilon: f64,
}

pub static RECORDS: Mutex<Vec<TraceRecord>> = Mutex::new(Vec::new());

pub fn record(r: TraceRecord) {
    RECORDS.lock().unwrap().push(r);
}

//! Oracle checks: ρ = 0 equivalence, server update algebra, kernels, greedy selection.

use fcncp::cp::{ncp_fasthals_with, normalize_coupled, NcpOptions};
use fcncp::federation::{mean_of_uploads, run_federation, server_update_global, sgd_step, GlobalModel, ModeBlock, RunConfig};
use fcncp::kernels::{khatri_rao, khatri_rao_skip, mttkrp, mttkrp_compressed, reconstruct};
use fcncp::selection::greedy_select;
use fcncp::{fold, init_factors, unfold, DenseTensor, FactorSet, Matrix};
use rand::Rng;

use crate::support::{ensure, record, rng, Check, TraceRecord};

fn noisy_low_rank(dims: &[usize], seed: u64) -> DenseTensor {
    let truth = init_factors(dims, 3, seed).unwrap();
    let clean = reconstruct(&truth).unwrap();
    let mut r = rng(seed ^ 0xABCD);
    let data = clean.as_slice().iter().map(|v| v + 0.05 * r.random::<f64>()).collect();
    DenseTensor::new(dims.to_vec(), data).unwrap()
}

/// Federated rounds at ρ = 0 against standalone FastHALS with the same seed.
pub fn rho_zero_equivalence() -> Check {
    const ROUNDS: usize = 100;
    let dims = [5, 6, 7];
    let tensors = [noisy_low_rank(&dims, 41), noisy_low_rank(&dims, 42)];
    let mut config = RunConfig::new(vec![1, 1, 0], [3, 3], [7, 8]);
    config.rho = 0.0;
    config.epsilon = 0.0;
    config.max_rounds = ROUNDS;
    config.burn_in = 10;
    let result = run_federation(&config, tensors.clone()).map_err(|e| e.to_string())?;
    ensure(result.rounds == ROUNDS, || format!("ran {} rounds", result.rounds))?;
    record(TraceRecord {
        label: "rho = 0".into(),
        traces: result.traces.to_vec(),
        rounds: result.rounds,
        converged: false,
        max_rounds: ROUNDS,
        epsilon: 0.0,
    });
    let coupling = result.coupling.as_ref().ok_or("no coupling")?;
    let mut worst: f64 = 0.0;
    for k in 0..2 {
        let opts = NcpOptions {
            epsilon: 0.0,
            max_iters: config.burn_in + ROUNDS,
            init: config.init,
            ..NcpOptions::new(3, config.clients[k].seed)
        };
        let mut standalone = ncp_fasthals_with(&tensors[k], &opts).map_err(|e| e.to_string())?.factors;
        normalize_coupled(&mut standalone, &coupling.public_components(k)).map_err(|e| e.to_string())?;
        for (a, b) in standalone.matrices().iter().zip(result.factors[k].matrices()) {
            worst = worst.max(a.max_abs_diff(b));
        }
    }
    let detail = format!("max element difference {worst:.2e} after {ROUNDS} rounds");
    ensure(worst <= 1e-10, || detail.clone())?;
    Ok(detail)
}

fn random_block(r: &mut impl Rng, mode: usize, rows: usize, cols: usize) -> ModeBlock {
    ModeBlock::new(mode, Matrix::from_fn(rows, cols, |_, _| r.random_range(0.01..1.0)))
}

fn unit_columns(mut b: ModeBlock) -> ModeBlock {
    for c in 0..b.columns.cols() {
        let n = b.columns.column_norm(c);
        b.columns.scale_column(c, 1.0 / n);
    }
    b
}

/// `ũ' = (1 − αρ) ũ + αρ · mean`, checked against the library step.
pub fn global_update_algebra() -> Check {
    let mut r = rng(4);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for case in 0..500 {
        let rows = r.random_range(1..12);
        let cols = r.random_range(1..4);
        let modes = r.random_range(1..3);
        let global = GlobalModel {
            blocks: (0..modes).map(|m| unit_columns(random_block(&mut r, m, rows + m, cols))).collect(),
        };
        let uploads: Vec<Vec<ModeBlock>> = (0..2)
            .map(|_| (0..modes).map(|m| random_block(&mut r, m, rows + m, cols)).collect())
            .collect();
        let (rho, alpha) = match case % 5 {
            0 => (1.0, 1.0),
            1 => (2.0, 0.5),
            _ => {
                let rho = r.random_range(0.1..4.0);
                (rho, r.random_range(0.01..1.0) / rho)
            }
        };
        let refs: Vec<&[ModeBlock]> = uploads.iter().map(Vec::as_slice).collect();
        let mean = mean_of_uploads(&refs).map_err(|e| e.to_string())?;
        let step = sgd_step(&global, &mean, rho, alpha).map_err(|e| e.to_string())?;
        let ar = alpha * rho;
        for ((g, m), s) in global.blocks.iter().zip(&mean).zip(&step.blocks) {
            for ((u, avg), got) in g.columns.as_slice().iter().zip(m.columns.as_slice()).zip(s.columns.as_slice()) {
                worst = worst.max((got - ((1.0 - ar) * u + ar * avg)).abs());
            }
        }
        if ar == 1.0 {
            for (m, s) in mean.iter().zip(&step.blocks) {
                worst = worst.max(m.columns.max_abs_diff(&s.columns));
            }
        }
        let fixed = server_update_global(&global, &[&global.blocks, &global.blocks], rho, alpha)
            .map_err(|e| e.to_string())?;
        for (a, b) in fixed.blocks.iter().zip(&global.blocks) {
            worst = worst.max(a.columns.max_abs_diff(&b.columns));
        }
        cases += 1;
    }
    let detail = format!("{cases} randomized cases, worst deviation {worst:.2e}");
    ensure(worst <= 1e-14, || detail.clone())?;
    Ok(detail)
}

/// Visits every multi-index of `dims` in row-major order.
fn indices(dims: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &d in dims {
        out = out
            .into_iter()
            .flat_map(|p| (0..d).map(move |i| {
                let mut q = p.clone();
                q.push(i);
                q
            }))
            .collect();
    }
    out
}

fn mttkrp_oracle(t: &DenseTensor, f: &FactorSet, n: usize) -> Matrix {
    let mut data = vec![0.0; t.dims()[n] * f.rank()];
    for idx in indices(t.dims()) {
        let x = t.get(&idx);
        for r in 0..f.rank() {
            let w: f64 = (0..t.order()).filter(|&k| k != n).map(|k| f.mode(k)[(idx[k], r)]).product();
            data[idx[n] * f.rank() + r] += x * w;
        }
    }
    Matrix::from_vec(t.dims()[n], f.rank(), data).unwrap()
}

pub fn kernel_oracles() -> Check {
    let mut r = rng(5);
    let mut worst = [0.0f64; 4];
    let instances = 150;
    for case in 0..instances {
        let order = 2 + case % 3;
        let dims: Vec<usize> = (0..order).map(|_| r.random_range(1..6)).collect();
        let rank = r.random_range(1..5);
        let t = DenseTensor::from_fn(dims.clone(), |_| r.random::<f64>()).unwrap();
        for n in 0..order {
            let back = fold(&unfold(&t, n).unwrap(), n, &dims).unwrap();
            if back != t {
                return Err(format!("unfold/fold roundtrip differs for dims {dims:?} mode {n}"));
            }
        }
        let a = Matrix::from_fn(r.random_range(1..7), rank, |_, _| r.random::<f64>() - 0.5);
        let b = Matrix::from_fn(r.random_range(1..7), rank, |_, _| r.random::<f64>() - 0.5);
        let kr = khatri_rao(&a, &b).unwrap();
        let lhs = kr.gram();
        let (ga, gb) = (a.gram(), b.gram());
        let rhs = Matrix::from_fn(rank, rank, |i, j| ga[(i, j)] * gb[(i, j)]);
        worst[0] = worst[0].max(lhs.max_abs_diff(&rhs));

        let f = init_factors(&dims, rank, case as u64).unwrap();
        let basis = init_factors(&dims, r.random_range(1..5), 1000 + case as u64).unwrap();
        let rebuilt = reconstruct(&basis).unwrap();
        for n in 0..order {
            let direct = mttkrp(&t, &f, n).unwrap();
            let via_unfold = unfold(&t, n).unwrap().matmul(&khatri_rao_skip(&f, n).unwrap()).unwrap();
            worst[1] = worst[1].max(direct.max_abs_diff(&via_unfold));
            worst[2] = worst[2].max(direct.max_abs_diff(&mttkrp_oracle(&t, &f, n)));
            let compressed = mttkrp_compressed(&basis, &f, n).unwrap();
            worst[3] = worst[3].max(compressed.max_abs_diff(&mttkrp(&rebuilt, &f, n).unwrap()));
        }
    }
    let detail = format!(
        "{instances} instances up to order 4: Gram {:.1e}, unfold-multiply {:.1e}, elementwise {:.1e}, compressed {:.1e}",
        worst[0], worst[1], worst[2], worst[3]
    );
    ensure(worst[0] <= 1e-12 && worst[1] <= 1e-12 && worst[2] <= 1e-12 && worst[3] <= 1e-10, || detail.clone())?;
    Ok(detail)
}

/// Zeroing procedure: take the first maximal entry in row-major order, then
/// zero its row and column.
fn zeroing(p: &Matrix, count: usize) -> (Vec<usize>, Vec<usize>) {
    let mut m = p.clone();
    let (mut rows, mut cols) = (Vec::new(), Vec::new());
    for _ in 0..count {
        let (mut bi, mut bj, mut best) = (0, 0, f64::NEG_INFINITY);
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                if m[(i, j)] > best {
                    (bi, bj, best) = (i, j, m[(i, j)]);
                }
            }
        }
        rows.push(bi);
        cols.push(bj);
        let mut data = m.into_vec();
        let c = p.cols();
        for j in 0..c {
            data[bi * c + j] = 0.0;
        }
        for i in 0..p.rows() {
            data[i * c + bj] = 0.0;
        }
        m = Matrix::from_vec(p.rows(), c, data).unwrap();
    }
    (rows, cols)
}

pub fn selection_replay() -> Check {
    let mut r = rng(6);
    for case in 0..1000 {
        let (rows, cols) = (r.random_range(1..11), r.random_range(1..11));
        // coarse levels make ties common
        let levels = if case % 2 == 0 { 4 } else { 1000 };
        let p = Matrix::from_fn(rows, cols, |_, _| (1 + r.random_range(0..levels)) as f64 / levels as f64);
        let count = r.random_range(0..=rows.min(cols));
        let got = greedy_select(&p, count).map_err(|e| e.to_string())?;
        let want = zeroing(&p, count);
        ensure(got == want, || format!("case {case}: {got:?} vs zeroing {want:?}"))?;
    }
    let fixtures: [(Matrix, usize, (Vec<usize>, Vec<usize>)); 4] = [
        (Matrix::filled(3, 3, 0.5), 3, (vec![0, 1, 2], vec![0, 1, 2])),
        (Matrix::from_rows(&[vec![0.2, 0.9], vec![0.9, 0.2]]).unwrap(), 2, (vec![0, 1], vec![1, 0])),
        (
            Matrix::from_rows(&[vec![0.1, 0.7, 0.7], vec![0.7, 0.1, 0.1]]).unwrap(),
            2,
            (vec![0, 1], vec![1, 0]),
        ),
        (
            Matrix::from_rows(&[vec![0.3, 0.3], vec![0.8, 0.8], vec![0.8, 0.1]]).unwrap(),
            2,
            (vec![1, 0], vec![0, 1]),
        ),
    ];
    for (k, (p, count, want)) in fixtures.iter().enumerate() {
        let got = greedy_select(p, *count).map_err(|e| e.to_string())?;
        ensure(&got == want, || format!("tie fixture {k}: {got:?}, expected {want:?}"))?;
    }
    Ok("1000 random matrices and 4 tie fixtures match the zeroing replay".into())
}


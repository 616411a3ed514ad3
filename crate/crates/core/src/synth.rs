//! Seeded generators for coupled tensor pairs with known ground truth.
//!
//! The third-order pair is frequency × time × channel (61 × 72 × 64). Client 1
//! holds `f₁∘t₁∘c₁ + f₂∘t₂∘c₂ + f₃∘t₃∘c₃`, client 2 holds
//! `f₁∘t₁∘c₄ + f₂∘t₂∘c₅ + f₄∘t₄∘c₆`, so components 1 and 2 share their
//! frequency and time atoms. Frequency atoms are Hanning bumps centred at
//! 15, 20, 40, 50 and time atoms at 10, 20, 30, 40 (1-based positions).

use std::f64::consts::PI;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factors::FactorSet;
use crate::kernels::reconstruct;
use crate::matrix::Matrix;
use crate::tensor::DenseTensor;

pub const SIM_DIMS: [usize; 3] = [61, 72, 64];
pub const FREQ_CENTERS: [usize; 4] = [15, 20, 40, 50];
pub const TIME_CENTERS: [usize; 4] = [10, 20, 30, 40];
/// Electrodes that each channel atom spans.
pub const CHANNEL_SPAN: usize = 4;

/// Hanning bump of `2·half_width − 1` nonzero samples centred at the 1-based
/// position `center`, plus uniform white noise on `[−noise, noise]`, clamped at zero.
pub fn hanning_atom(
    length: usize,
    center: usize,
    half_width: usize,
    noise_level: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if center < 1 || center > length {
        return Err(Error::InvalidArgument(format!(
            "centre {center} outside [1, {length}]"
        )));
    }
    if half_width == 0 {
        return Err(Error::InvalidArgument("half width must be positive".into()));
    }
    if !(noise_level >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise level {noise_level}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hw = half_width as f64;
    Ok((1..=length)
        .map(|i| {
            let d = i as f64 - center as f64;
            let bump = if d.abs() < hw {
                0.5 * (1.0 + (PI * d / hw).cos())
            } else {
                0.0
            };
            let noise = if noise_level > 0.0 {
                rng.random_range(-noise_level..=noise_level)
            } else {
                0.0
            };
            (bump + noise).max(0.0)
        })
        .collect())
}

/// Four adjacent channels (in index order) loaded with values in `[0.5, 1]`, all others zero.
pub fn channel_atom(n_channels: usize, seed: u64) -> Result<Vec<f64>> {
    if n_channels < CHANNEL_SPAN {
        return Err(Error::InvalidArgument(format!(
            "need at least {CHANNEL_SPAN} channels, got {n_channels}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.random_range(0..=n_channels - CHANNEL_SPAN);
    let mut atom = vec![0.0; n_channels];
    for v in &mut atom[start..start + CHANNEL_SPAN] {
        *v = rng.random_range(0.5..=1.0);
    }
    Ok(atom)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SimulationOptions {
    pub noise_level: f64,
    pub half_width: usize,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        SimulationOptions {
            noise_level: 0.05,
            half_width: 8,
        }
    }
}

/// Known factors behind a generated pair.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    /// Factors actually used to build each client's tensor.
    pub factors: [FactorSet; 2],
    /// The same factors before noise was added.
    pub clean: [FactorSet; 2],
    /// `(client-1 component, client-2 component)` pairs that share atoms (0-based).
    pub shared_pairs: Vec<(usize, usize)>,
    /// Modes in which the shared components are identical.
    pub shared_modes: Vec<usize>,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct TensorPair {
    pub tensors: [DenseTensor; 2],
    pub truth: GroundTruth,
}

fn columns(cols: &[&Vec<f64>]) -> Result<Matrix> {
    Matrix::from_columns(&cols.iter().map(|c| (*c).clone()).collect::<Vec<_>>())
}

/// The coupled frequency × time × channel pair.
pub fn build_simulation_pair(seed: u64) -> Result<TensorPair> {
    build_simulation_pair_with(seed, SimulationOptions::default())
}

pub fn build_simulation_pair_with(seed: u64, opts: SimulationOptions) -> Result<TensorPair> {
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let [nf, nt, nc] = SIM_DIMS;
    let mut freq = Vec::new();
    let mut freq_clean = Vec::new();
    for &c in &FREQ_CENTERS {
        let s = seeds.next_u64();
        freq.push(hanning_atom(nf, c, opts.half_width, opts.noise_level, s)?);
        freq_clean.push(hanning_atom(nf, c, opts.half_width, 0.0, s)?);
    }
    let mut time = Vec::new();
    let mut time_clean = Vec::new();
    for &c in &TIME_CENTERS {
        let s = seeds.next_u64();
        time.push(hanning_atom(nt, c, opts.half_width, opts.noise_level, s)?);
        time_clean.push(hanning_atom(nt, c, opts.half_width, 0.0, s)?);
    }
    let chan = (0..6)
        .map(|_| channel_atom(nc, seeds.next_u64()))
        .collect::<Result<Vec<_>>>()?;

    let client = |fs: &[Vec<f64>], ts: &[Vec<f64>], pick: [usize; 3], chans: [usize; 3]| {
        FactorSet::new(vec![
            columns(&pick.map(|i| &fs[i]))?,
            columns(&pick.map(|i| &ts[i]))?,
            columns(&chans.map(|i| &chan[i]))?,
        ])
    };
    let factors = [
        client(&freq, &time, [0, 1, 2], [0, 1, 2])?,
        client(&freq, &time, [0, 1, 3], [3, 4, 5])?,
    ];
    let clean = [
        client(&freq_clean, &time_clean, [0, 1, 2], [0, 1, 2])?,
        client(&freq_clean, &time_clean, [0, 1, 3], [3, 4, 5])?,
    ];
    let tensors = [reconstruct(&factors[0])?, reconstruct(&factors[1])?];
    Ok(TensorPair {
        tensors,
        truth: GroundTruth {
            factors,
            clean,
            shared_pairs: vec![(0, 0), (1, 1)],
            shared_modes: vec![0, 1],
            seed,
        },
    })
}

/// Layout of a generated fifth-order pair.
#[derive(Clone, Debug)]
pub struct FifthOrderSpec {
    pub dims: [usize; 5],
    pub ranks: [usize; 2],
    pub coupled_modes: Vec<usize>,
    /// Number of leading components whose coupled-mode atoms are shared.
    pub shared: usize,
    pub seed: u64,
}

/// Nonnegative atom with roughly half its entries zero; never all zero.
fn sparse_atom(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..len)
        .map(|_| (2.0 * rng.random::<f64>() - 1.0).max(0.0))
        .collect();
    if v.iter().all(|&x| x == 0.0) {
        let i = rng.random_range(0..len);
        v[i] = 0.5 + 0.5 * rng.random::<f64>();
    }
    v
}

/// Two synthetic fifth-order tensors whose first `shared` components have
/// identical atoms in the coupled modes and independent atoms elsewhere.
pub fn build_fifth_order_smoke(spec: &FifthOrderSpec) -> Result<TensorPair> {
    let [r1, r2] = spec.ranks;
    if spec.shared > r1.min(r2) {
        return Err(Error::InvalidArgument(format!(
            "{} shared components exceed ranks {:?}",
            spec.shared, spec.ranks
        )));
    }
    if let Some(&m) = spec.coupled_modes.iter().find(|&&m| m >= 5) {
        return Err(Error::ModeOutOfRange { mode: m, order: 5 });
    }
    if spec.dims.contains(&0) {
        return Err(Error::shape(format!("zero extent in dims {:?}", spec.dims)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let shared_atoms: Vec<Vec<Vec<f64>>> = (0..spec.shared)
        .map(|_| spec.dims.iter().map(|&d| sparse_atom(d, &mut rng)).collect())
        .collect();
    let mut build = |rank: usize| -> Result<FactorSet> {
        let mats = spec
            .dims
            .iter()
            .enumerate()
            .map(|(n, &d)| {
                let cols: Vec<Vec<f64>> = (0..rank)
                    .map(|r| {
                        let fresh = sparse_atom(d, &mut rng);
                        if r < spec.shared && spec.coupled_modes.contains(&n) {
                            shared_atoms[r][n].clone()
                        } else {
                            fresh
                        }
                    })
                    .collect();
                Matrix::from_columns(&cols)
            })
            .collect::<Result<Vec<_>>>()?;
        FactorSet::new(mats)
    };
    let factors = [build(r1)?, build(r2)?];
    let tensors = [reconstruct(&factors[0])?, reconstruct(&factors[1])?];
    Ok(TensorPair {
        tensors,
        truth: GroundTruth {
            clean: factors.clone(),
            factors,
            shared_pairs: (0..spec.shared).map(|r| (r, r)).collect(),
            shared_modes: spec.coupled_modes.clone(),
            seed: spec.seed,
        },
    })
}

//! Nonnegative FastHALS column updates, with the elastic pull toward a global
//! column for public (coupled) components.

use log::{debug, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cp::als::cp_als_unconstrained;
use crate::error::{Error, Result};
use crate::factors::{init_factors_with, FactorSet};
use crate::kernels::{gram_hadamard_skip, mttkrp, mttkrp_compressed, rel_err};
use crate::matrix::Matrix;
use crate::tensor::DenseTensor;

/// Entries are projected onto `[CLAMP_FLOOR, ∞)` after every column update.
pub const CLAMP_FLOOR: f64 = 1e-16;
/// Default stopping tolerance on successive RelErr values.
pub const DEFAULT_EPSILON: f64 = 1e-8;
/// Denominators at or below this mean some other mode's column has norm ≤ 1e-12.
const DEGENERATE_GAMMA: f64 = 1e-24;

/// Where MTTKRP comes from: the tensor itself or a CP basis that approximates it.
#[derive(Clone, Copy, Debug)]
pub enum MttkrpSource<'a> {
    Direct(&'a DenseTensor),
    Compressed(&'a FactorSet),
}

/// Per-mode quantities shared by every column update in that mode.
#[derive(Clone, Debug)]
pub struct ModeWorkspace {
    pub mode: usize,
    /// `[χ_(n) {U}^{⊙−n}]`, `I_n × R`.
    pub mttkrp: Matrix,
    /// `{UᵀU}^{⊛−n}`, `R × R`.
    pub gram: Matrix,
}

impl ModeWorkspace {
    pub fn new(source: MttkrpSource<'_>, factors: &FactorSet, mode: usize) -> Result<Self> {
        let mttkrp = match source {
            MttkrpSource::Direct(t) => mttkrp(t, factors, mode)?,
            MttkrpSource::Compressed(basis) => mttkrp_compressed(basis, factors, mode)?,
        };
        Ok(ModeWorkspace {
            mode,
            mttkrp,
            gram: gram_hadamard_skip(factors, mode),
        })
    }

    fn gamma(&self, r: usize) -> Result<f64> {
        let gamma = self.gram[(r, r)];
        if !(gamma > DEGENERATE_GAMMA) {
            return Err(Error::DegenerateComponent {
                mode: self.mode,
                component: r,
            });
        }
        Ok(gamma)
    }

    /// Numerator shared by both rules: `[MTTKRP]_r − U^(n)[G]_r`.
    fn residual_direction(&self, factor: &Matrix, r: usize) -> Vec<f64> {
        let g = &self.gram;
        (0..factor.rows())
            .map(|i| {
                let ug: f64 = factor
                    .row(i)
                    .iter()
                    .enumerate()
                    .map(|(j, &u)| u * g[(j, r)])
                    .sum();
                self.mttkrp[(i, r)] - ug
            })
            .collect()
    }

    fn check(&self, factor: &Matrix, r: usize) -> Result<()> {
        if factor.rows() != self.mttkrp.rows() || factor.cols() != self.mttkrp.cols() {
            return Err(Error::shape(format!(
                "factor {:?} does not match workspace {:?}",
                factor.shape(),
                self.mttkrp.shape()
            )));
        }
        if r >= factor.cols() {
            return Err(Error::InvalidArgument(format!(
                "component {r} out of range for rank {}",
                factor.cols()
            )));
        }
        Ok(())
    }
}

/// Private-component rule:
/// `u ← max(u + ([MTTKRP]_r − U[G]_r) / γ, CLAMP_FLOOR)` with `γ = G[r, r]`.
pub fn update_private_column(factor: &mut Matrix, r: usize, ws: &ModeWorkspace) -> Result<()> {
    ws.check(factor, r)?;
    let gamma = ws.gamma(r)?;
    let num = ws.residual_direction(factor, r);
    for (i, d) in num.into_iter().enumerate() {
        let u = factor[(i, r)];
        factor[(i, r)] = (u + d / gamma).max(CLAMP_FLOOR);
    }
    Ok(())
}

/// Public-component rule, the private rule with an elastic pull of weight `ρ/2`
/// toward the global column `ũ`:
/// `u ← max(u·γ/(γ+ρ/2) + ([MTTKRP]_r − U[G]_r + (ρ/2)ũ) / (γ+ρ/2), CLAMP_FLOOR)`.
pub fn update_public_column(
    factor: &mut Matrix,
    r: usize,
    ws: &ModeWorkspace,
    global: &[f64],
    rho: f64,
) -> Result<()> {
    ws.check(factor, r)?;
    if global.len() != factor.rows() {
        return Err(Error::shape(format!(
            "global column has {} entries, factor has {} rows",
            global.len(),
            factor.rows()
        )));
    }
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::InvalidArgument(format!("rho must be finite and ≥ 0, got {rho}")));
    }
    if global.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("global column".into()));
    }
    let gamma = ws.gamma(r)?;
    let half_rho = rho / 2.0;
    let denom = gamma + half_rho;
    let keep = gamma / denom;
    let num = ws.residual_direction(factor, r);
    for (i, d) in num.into_iter().enumerate() {
        let u = factor[(i, r)];
        factor[(i, r)] = (u * keep + (d + half_rho * global[i]) / denom).max(CLAMP_FLOOR);
    }
    Ok(())
}

/// Global columns that public components are pulled toward, indexed `[mode][component]`.
#[derive(Clone, Debug)]
pub struct ElasticTargets {
    pub rho: f64,
    targets: Vec<Vec<Option<Vec<f64>>>>,
}

impl ElasticTargets {
    pub fn new(rho: f64, order: usize, rank: usize) -> Self {
        ElasticTargets {
            rho,
            targets: vec![vec![None; rank]; order],
        }
    }

    pub fn set(&mut self, mode: usize, component: usize, column: Vec<f64>) {
        self.targets[mode][component] = Some(column);
    }

    pub fn get(&self, mode: usize, component: usize) -> Option<&[f64]> {
        self.targets
            .get(mode)
            .and_then(|m| m.get(component))
            .and_then(|c| c.as_deref())
    }
}

/// Scales every coupled column (`coupled[n]` lists the coupled components of
/// mode `n`) to unit norm and multiplies the removed scale into the same
/// component of the last uncoupled mode.
pub fn normalize_coupled(factors: &mut FactorSet, coupled: &[Vec<usize>]) -> Result<()> {
    let carrier = scale_carrier(coupled, factors.order())?;
    for (n, comps) in coupled.iter().enumerate() {
        for &r in comps {
            let norm = factors.mode(n).column_norm(r);
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(Error::DegenerateComponent { mode: n, component: r });
            }
            if norm == 1.0 {
                continue;
            }
            factors.mode_mut(n).scale_column(r, 1.0 / norm);
            factors.mode_mut(carrier).scale_column(r, norm);
        }
    }
    Ok(())
}

fn scale_carrier(coupled: &[Vec<usize>], order: usize) -> Result<usize> {
    if coupled.len() != order {
        return Err(Error::shape(format!(
            "coupling lists {} modes, factors have {}",
            coupled.len(),
            order
        )));
    }
    coupled
        .iter()
        .rposition(Vec::is_empty)
        .ok_or_else(|| Error::Config("every mode is coupled; no mode can carry the scale".into()))
}

/// One client's factors together with the RNG that seeded them (reused for reseeding).
#[derive(Clone, Debug)]
pub struct HalsState {
    pub factors: FactorSet,
    rng: ChaCha8Rng,
}

impl HalsState {
    pub fn new(dims: &[usize], rank: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let factors = init_factors_with(dims, rank, &mut rng)?;
        Ok(HalsState { factors, rng })
    }

    /// Draws `init.starts` candidate factor sets from the init distribution,
    /// runs `init.sweeps` uncoupled sweeps on each, and keeps the one with the
    /// lowest RelErr. Candidate 0 is exactly [`HalsState::new`] with `seed`.
    pub fn initialize(
        source: MttkrpSource<'_>,
        t: &DenseTensor,
        rank: usize,
        seed: u64,
        init: &InitStrategy,
    ) -> Result<Self> {
        if init.starts <= 1 {
            return HalsState::new(t.dims(), rank, seed);
        }
        let mut best: Option<(f64, HalsState)> = None;
        for c in 0..init.starts {
            let mut state = HalsState::new(t.dims(), rank, candidate_seed(seed, c))?;
            for _ in 0..init.sweeps {
                state.sweep(source, None)?;
            }
            let err = rel_err(t, &state.factors)?;
            if best.as_ref().is_none_or(|(e, _)| err < *e) {
                best = Some((err, state));
            }
        }
        Ok(best.expect("at least two candidates").1)
    }

    pub fn from_factors(factors: FactorSet, seed: u64) -> Self {
        HalsState {
            factors,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn reseed(&mut self, r: usize) {
        debug!("reseeding degenerate component {r}");
        self.factors.reseed_component(r, &mut self.rng);
    }

    /// One FastHALS sweep: modes outer, components inner. Components with an
    /// elastic target use the public rule, all others the private rule.
    pub fn sweep(&mut self, source: MttkrpSource<'_>, targets: Option<&ElasticTargets>) -> Result<()> {
        for n in 0..self.factors.order() {
            let mut ws = ModeWorkspace::new(source, &self.factors, n)?;
            for r in 0..self.factors.rank() {
                let mut retried = false;
                loop {
                    let target = targets.and_then(|t| t.get(n, r).map(|c| (c, t.rho)));
                    let factor = self.factors.mode_mut(n);
                    let res = match target {
                        Some((col, rho)) => update_public_column(factor, r, &ws, col, rho),
                        None => update_private_column(factor, r, &ws),
                    };
                    match res {
                        Err(Error::DegenerateComponent { .. }) if !retried => {
                            self.reseed(r);
                            ws = ModeWorkspace::new(source, &self.factors, n)?;
                            retried = true;
                        }
                        other => break other?,
                    }
                }
            }
            if !self.factors.mode(n).is_finite() {
                return Err(Error::NonFinite(format!("factor matrix of mode {n}")));
            }
        }
        Ok(())
    }

    /// [`normalize_coupled`], reseeding any coupled component that collapsed to zero.
    pub fn normalize_coupled(&mut self, coupled: &[Vec<usize>]) -> Result<()> {
        for _ in 0..2 {
            match normalize_coupled(&mut self.factors, coupled) {
                Err(Error::DegenerateComponent { component, .. }) => self.reseed(component),
                other => return other,
            }
        }
        normalize_coupled(&mut self.factors, coupled)
    }
}

/// Multi-start initialization: several uniform draws, each given a few sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct InitStrategy {
    pub starts: usize,
    pub sweeps: usize,
}

impl InitStrategy {
    pub const SINGLE: InitStrategy = InitStrategy { starts: 1, sweeps: 0 };
}

impl Default for InitStrategy {
    fn default() -> Self {
        InitStrategy { starts: 8, sweeps: 10 }
    }
}

fn candidate_seed(seed: u64, candidate: usize) -> u64 {
    if candidate == 0 {
        return seed;
    }
    // splitmix64 step over (seed, candidate)
    let mut z = seed ^ (candidate as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug)]
pub struct NcpOptions {
    pub rank: usize,
    pub epsilon: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub init: InitStrategy,
    /// Run MTTKRP through an unconstrained CP basis of the tensor.
    pub fast: bool,
    /// Largest basis RelErr accepted before falling back to direct MTTKRP.
    pub compression_tolerance: f64,
}

impl NcpOptions {
    pub fn new(rank: usize, seed: u64) -> Self {
        NcpOptions {
            rank,
            epsilon: DEFAULT_EPSILON,
            max_iters: 1000,
            seed,
            init: InitStrategy::default(),
            fast: false,
            compression_tolerance: 1e-2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NcpResult {
    pub factors: FactorSet,
    /// RelErr after each sweep.
    pub trace: Vec<f64>,
    pub converged: bool,
}

impl NcpResult {
    pub fn fit(&self) -> Option<f64> {
        self.trace.last().map(|e| 1.0 - e)
    }
}

/// Sweeps in the basis used by fast mode; matches the basis rank to the model rank.
const COMPRESSION_SWEEPS: usize = 100;

/// Whether the last two RelErr values differ by less than `epsilon`.
pub fn has_converged(trace: &[f64], epsilon: f64) -> bool {
    match trace {
        [.., a, b] => (b - a).abs() < epsilon,
        _ => false,
    }
}

/// Uncoupled nonnegative CP by FastHALS, stopping when successive RelErr
/// values differ by less than `epsilon` or after `max_iters` sweeps.
pub fn ncp_fasthals(
    t: &DenseTensor,
    rank: usize,
    epsilon: f64,
    max_iters: usize,
    seed: u64,
) -> Result<NcpResult> {
    ncp_fasthals_with(
        t,
        &NcpOptions {
            epsilon,
            max_iters,
            ..NcpOptions::new(rank, seed)
        },
    )
}

pub fn ncp_fasthals_with(t: &DenseTensor, opts: &NcpOptions) -> Result<NcpResult> {
    if !t.is_nonnegative() {
        return Err(Error::InvalidArgument("tensor has negative entries".into()));
    }
    let basis = if opts.fast {
        let basis = cp_als_unconstrained(t, opts.rank, COMPRESSION_SWEEPS, opts.seed)?;
        if basis.rel_err <= opts.compression_tolerance {
            Some(basis.factors)
        } else {
            warn!(
                "compression basis RelErr {:.3e} exceeds {:.3e}; using direct MTTKRP",
                basis.rel_err, opts.compression_tolerance
            );
            None
        }
    } else {
        None
    };
    let source = match &basis {
        Some(b) => MttkrpSource::Compressed(b),
        None => MttkrpSource::Direct(t),
    };
    let mut state = HalsState::initialize(source, t, opts.rank, opts.seed, &opts.init)?;
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..opts.max_iters {
        state.sweep(source, None)?;
        trace.push(rel_err(t, &state.factors)?);
        if has_converged(&trace, opts.epsilon) {
            converged = true;
            break;
        }
    }
    debug!("fasthals: {} sweeps, converged={converged}", trace.len());
    Ok(NcpResult {
        factors: state.factors,
        trace,
        converged,
    })
}

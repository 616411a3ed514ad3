//! CP factor updates: the unconstrained ALS compression basis and the
//! nonnegative HALS column rules (private and elastic/public).

mod als;
mod hals;

pub use als::{cp_als_from, cp_als_unconstrained, CompressionBasis, AlsResult};
pub use hals::{
    has_converged, ncp_fasthals, ncp_fasthals_with, normalize_coupled, update_private_column,
    update_public_column, ElasticTargets, HalsState, InitStrategy, ModeWorkspace, MttkrpSource, NcpOptions,
    NcpResult, CLAMP_FLOOR, DEFAULT_EPSILON,
};

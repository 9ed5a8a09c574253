//! Per-time-point estimation across the trial ensemble: SVAR fits and the
//! lag-vector moments every causal measure is built from.

mod moments;
mod svar;

pub use moments::{compute_lagged_moments, compute_reference_stats, LaggedMoments, MomentsAt, ReferenceStats};
pub use svar::{fit_svar_ensemble, EquationFit, SvarModel, TimePointFit};

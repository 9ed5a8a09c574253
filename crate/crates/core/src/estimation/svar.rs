use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::ensemble::{ModelConfig, TimeSeriesEnsemble};
use crate::error::{Error, Result};
use crate::linalg::least_squares;

/// Least-squares fit of one structural equation (the one predicting
/// `channel`) at one time point, plus the own-past-only reduced fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquationFit {
    /// Coefficients on the channel's own lags, newest first.
    pub own: Vec<f64>,
    /// Coefficients on the other channel's lags, newest first.
    pub cross: Vec<f64>,
    pub intercept: f64,
    /// Full-model residual variance.
    pub residual_variance: f64,
    /// Reduced-model (own past only) residual variance.
    pub reduced_residual_variance: f64,
    pub own_se: Vec<f64>,
    pub cross_se: Vec<f64>,
    pub intercept_se: f64,
}

impl EquationFit {
    pub fn cross_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.cross)
    }
}

/// Both equations at analysis time `t`. `equations[0]` predicts channel 0
/// and holds `(a_t, b_t)`; `equations[1]` predicts channel 1 and holds
/// `(d_t, c_t)` as (own, cross).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimePointFit {
    pub t: usize,
    pub equations: [EquationFit; 2],
}

impl TimePointFit {
    pub fn a(&self) -> &[f64] {
        &self.equations[0].own
    }

    pub fn b(&self) -> &[f64] {
        &self.equations[0].cross
    }

    pub fn c(&self) -> &[f64] {
        &self.equations[1].cross
    }

    pub fn d(&self) -> &[f64] {
        &self.equations[1].own
    }
}

/// Per-time-point fits of the bivariate SVAR across trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SvarModel {
    pub order: usize,
    pub n_trials: usize,
    /// One entry per analysis time, ascending from `t = order`.
    pub fits: Vec<TimePointFit>,
}

impl SvarModel {
    pub fn times(&self) -> Vec<usize> {
        self.fits.iter().map(|f| f.t).collect()
    }

    pub fn at(&self, t: usize) -> Option<&TimePointFit> {
        let first = self.fits.first()?.t;
        self.fits.get(t.checked_sub(first)?)
    }
}

pub(crate) fn require_bivariate(epochs: &TimeSeriesEnsemble) -> Result<()> {
    if epochs.n_channels() != 2 {
        return Err(Error::Dimension(format!(
            "causal analysis needs exactly 2 channels, got {}",
            epochs.n_channels()
        )));
    }
    Ok(())
}

/// Fits, at every time `t >= order`, the full and reduced regressions of each
/// channel across trials.
///
/// Full-model residual variance is `RSS / (R - k)` with `k` the number of
/// full-model regressors. The reduced model's RSS is divided by the same
/// `R - k`, so the reduced/full variance ratio is the RSS ratio and never
/// drops below one.
pub fn fit_svar_ensemble(epochs: &TimeSeriesEnsemble, config: &ModelConfig) -> Result<SvarModel> {
    config.validate()?;
    require_bivariate(epochs)?;
    let p = config.order;
    let n_t = epochs.n_times();
    if n_t <= p {
        return Err(Error::InsufficientHistory {
            t: n_t.saturating_sub(1),
            order: p,
            earliest: p,
        });
    }
    let n = epochs.n_trials();
    let k_full = 2 * p + usize::from(config.include_intercept);
    if n <= k_full {
        return Err(Error::DegreesOfFreedom {
            trials: n,
            required: k_full,
        });
    }

    let results: Vec<Result<TimePointFit>> = (p..n_t)
        .into_par_iter()
        .map(|t| fit_time_point(epochs, config, t))
        .collect();
    let fits = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(SvarModel {
        order: p,
        n_trials: n,
        fits,
    })
}

fn design(n: usize, intercept: bool, blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let off = usize::from(intercept);
    let k = off + blocks.iter().map(|b| b.ncols()).sum::<usize>();
    let mut x = DMatrix::zeros(n, k);
    if intercept {
        x.column_mut(0).fill(1.0);
    }
    let mut col = off;
    for b in blocks {
        x.columns_mut(col, b.ncols()).copy_from(*b);
        col += b.ncols();
    }
    x
}

fn fit_time_point(epochs: &TimeSeriesEnsemble, config: &ModelConfig, t: usize) -> Result<TimePointFit> {
    let p = config.order;
    let n = epochs.n_trials();
    let lags = [epochs.lag_matrix(0, t, p), epochs.lag_matrix(1, t, p)];
    let fit_equation = |k: usize| -> Result<EquationFit> {
        let own = &lags[k];
        let other = &lags[1 - k];
        let y = DVector::from_vec(epochs.cross_section(k, t));
        let full_x = design(n, config.include_intercept, &[own, other]);
        let reduced_x = design(n, config.include_intercept, &[own]);
        let ridge = config.ridge_epsilon;
        let full = least_squares(&full_x, &y, ridge).ok_or(Error::SingularFit { t })?;
        let reduced = least_squares(&reduced_x, &y, ridge).ok_or(Error::SingularFit { t })?;

        let dof = (n - full_x.ncols()) as f64;
        let var_full = full.rss / dof;
        let mut var_reduced = reduced.rss / dof;
        // Nested least squares; ridge can break the ordering slightly.
        debug_assert!(
            ridge > 0.0 || var_full <= var_reduced * (1.0 + 1e-10) + 1e-12,
            "nesting violated at t = {t}: full {var_full} > reduced {var_reduced}"
        );
        var_reduced = var_reduced.max(var_full);

        let off = usize::from(config.include_intercept);
        let se = |i: usize| (var_full * full.inverse_gram_diag[i]).sqrt();
        Ok(EquationFit {
            own: full.beta.rows(off, p).iter().copied().collect(),
            cross: full.beta.rows(off + p, p).iter().copied().collect(),
            intercept: if off == 1 { full.beta[0] } else { 0.0 },
            residual_variance: var_full,
            reduced_residual_variance: var_reduced,
            own_se: (off..off + p).map(se).collect(),
            cross_se: (off + p..off + 2 * p).map(se).collect(),
            intercept_se: if off == 1 { se(0) } else { 0.0 },
        })
    };
    Ok(TimePointFit {
        t,
        equations: [fit_equation(0)?, fit_equation(1)?],
    })
}

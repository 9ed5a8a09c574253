use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::svar::require_bivariate;
use crate::causality::Direction;
use crate::ensemble::TimeSeriesEnsemble;
use crate::error::{Error, Result};
use crate::linalg::{sample_moments, schur_complement, CONDITION_WARNING};

/// Cross-trial moments of the stacked lag vector `[x0 lags; x1 lags]` at one
/// analysis time.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentsAt {
    pub t: usize,
    /// Length `2p`.
    pub mean: DVector<f64>,
    /// `2p x 2p`, unbiased normalisation.
    pub cov: DMatrix<f64>,
    /// `conditional[k]` is the covariance of channel `k`'s lags given the
    /// other channel's lags.
    pub conditional: [DMatrix<f64>; 2],
}

impl MomentsAt {
    /// Builds the moments from a joint mean and covariance.
    pub fn from_joint(t: usize, mean: DVector<f64>, cov: DMatrix<f64>) -> (Self, f64) {
        let p = mean.len() / 2;
        let first: Vec<usize> = (0..p).collect();
        let second: Vec<usize> = (p..2 * p).collect();
        let (cond0, k0) = schur_complement(&cov, &second, &first);
        let (cond1, k1) = schur_complement(&cov, &first, &second);
        (
            Self {
                t,
                mean,
                cov,
                conditional: [cond0, cond1],
            },
            k0.max(k1),
        )
    }

    pub fn order(&self) -> usize {
        self.mean.len() / 2
    }

    pub fn marginal_mean(&self, channel: usize) -> DVector<f64> {
        let p = self.order();
        self.mean.rows(channel * p, p).into_owned()
    }

    pub fn marginal_cov(&self, channel: usize) -> DMatrix<f64> {
        let p = self.order();
        self.cov.view((channel * p, channel * p), (p, p)).into_owned()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaggedMoments {
    pub order: usize,
    pub n_trials: usize,
    /// One entry per analysis time, ascending from `t = order`.
    pub times: Vec<MomentsAt>,
    pub warnings: Vec<String>,
}

impl LaggedMoments {
    pub fn at(&self, t: usize) -> Option<&MomentsAt> {
        let first = self.times.first()?.t;
        self.times.get(t.checked_sub(first)?)
    }
}

fn lag_observations(epochs: &TimeSeriesEnsemble, channels: &[usize], t: usize, p: usize) -> DMatrix<f64> {
    let n = epochs.n_trials();
    let mut obs = DMatrix::zeros(n, channels.len() * p);
    for (j, &ch) in channels.iter().enumerate() {
        obs.columns_mut(j * p, p).copy_from(&epochs.lag_matrix(ch, t, p));
    }
    obs
}

/// Per-time cross-trial mean and covariance of the stacked lag vector, with
/// both conditional covariances from the Schur complement (pseudoinverse when
/// the conditioning block is singular).
pub fn compute_lagged_moments(epochs: &TimeSeriesEnsemble, order: usize) -> Result<LaggedMoments> {
    require_bivariate(epochs)?;
    if order == 0 {
        return Err(Error::param("order", "model order must be at least 1"));
    }
    let n = epochs.n_trials();
    if n < 2 {
        return Err(Error::DegreesOfFreedom { trials: n, required: 1 });
    }
    let n_t = epochs.n_times();
    if n_t <= order {
        return Err(Error::InsufficientHistory {
            t: n_t.saturating_sub(1),
            order,
            earliest: order,
        });
    }
    let computed: Vec<(MomentsAt, f64)> = (order..n_t)
        .into_par_iter()
        .map(|t| {
            let (mean, cov) = sample_moments(&lag_observations(epochs, &[0, 1], t, order));
            MomentsAt::from_joint(t, mean, cov)
        })
        .collect();
    let mut warnings = Vec::new();
    let times = computed
        .into_iter()
        .map(|(m, cond)| {
            if cond > CONDITION_WARNING {
                warnings.push(format!(
                    "t = {}: conditioning block has condition number {cond:.3e}",
                    m.t
                ));
            }
            m
        })
        .collect();
    Ok(LaggedMoments {
        order,
        n_trials: n,
        times,
        warnings,
    })
}

/// Baseline moments of the cause's lag vector, pooled over trials and the
/// times of a reference window.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceStats {
    pub window: Range<usize>,
    pub direction: Direction,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub n_samples: usize,
}

/// Pools the cause channel's lag vectors over all trials and all `t` in
/// `window`. The window must lie at or after `order` and end no later than
/// the alignment point of a peri-event ensemble.
pub fn compute_reference_stats(
    epochs: &TimeSeriesEnsemble,
    window: Range<usize>,
    order: usize,
    direction: Direction,
) -> Result<ReferenceStats> {
    require_bivariate(epochs)?;
    if window.is_empty() {
        return Err(Error::param("reference_window", format!("{window:?} is empty")));
    }
    if window.start < order {
        return Err(Error::InsufficientHistory {
            t: window.start,
            order,
            earliest: order,
        });
    }
    let limit = epochs.time_axis_offset().unwrap_or(epochs.n_times());
    if window.end > limit {
        return Err(Error::param(
            "reference_window",
            format!("{window:?} must end at or before the alignment point {limit}"),
        ));
    }
    let rows: Vec<DMatrix<f64>> = window
        .clone()
        .map(|t| epochs.lag_matrix(direction.cause(), t, order))
        .collect();
    let n = rows.len() * epochs.n_trials();
    if n < 2 {
        return Err(Error::DegreesOfFreedom { trials: n, required: 1 });
    }
    let mut pooled = DMatrix::zeros(n, order);
    for (i, block) in rows.iter().enumerate() {
        pooled.rows_mut(i * block.nrows(), block.nrows()).copy_from(block);
    }
    let (mean, cov) = sample_moments(&pooled);
    Ok(ReferenceStats {
        window,
        direction,
        mean,
        cov,
        n_samples: n,
    })
}

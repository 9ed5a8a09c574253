//! Trial ensembles, lag embedding and the shared model configuration.
//!
//! Data is stored trial-major, then channel, then time, so that the
//! cross-trial regressions performed at each time point read one value per
//! trial from otherwise contiguous series.

use nalgebra::DMatrix;
use ndarray::{Array3, ArrayView1, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `[trial][channel][time]` tensor of finite samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesEnsemble {
    data: Array3<f64>,
    sampling_rate: f64,
    time_axis_offset: Option<usize>,
}

/// Checks the ensemble invariants and reports the first violation.
///
/// Non-finite samples are reported by their `(trial, channel, time)` index in
/// storage order.
pub fn validate_ensemble(
    data: ArrayView3<'_, f64>,
    sampling_rate: f64,
    time_axis_offset: Option<usize>,
) -> Result<()> {
    let (r, c, t) = data.dim();
    if r == 0 || c == 0 {
        return Err(Error::Dimension(format!(
            "need at least one trial and one channel, got shape [{r}, {c}, {t}]"
        )));
    }
    if t < 2 {
        return Err(Error::Dimension(format!(
            "need at least 2 time samples, got {t}"
        )));
    }
    if !(sampling_rate.is_finite() && sampling_rate > 0.0) {
        return Err(Error::param(
            "sampling_rate",
            format!("must be positive and finite, got {sampling_rate}"),
        ));
    }
    if let Some(offset) = time_axis_offset {
        if offset >= t {
            return Err(Error::Dimension(format!(
                "time axis offset {offset} outside window of length {t}"
            )));
        }
    }
    for ((trial, channel, time), v) in data.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                trial,
                channel,
                time,
            });
        }
    }
    Ok(())
}

impl TimeSeriesEnsemble {
    pub fn new(data: Array3<f64>, sampling_rate: f64) -> Result<Self> {
        validate_ensemble(data.view(), sampling_rate, None)?;
        Ok(Self {
            data,
            sampling_rate,
            time_axis_offset: None,
        })
    }

    /// Builds a peri-event ensemble whose alignment point sits at
    /// `time_axis_offset` within each trial.
    pub fn peri_event(data: Array3<f64>, sampling_rate: f64, time_axis_offset: usize) -> Result<Self> {
        validate_ensemble(data.view(), sampling_rate, Some(time_axis_offset))?;
        Ok(Self {
            data,
            sampling_rate,
            time_axis_offset: Some(time_axis_offset),
        })
    }

    /// Wraps a single continuous recording given as `[channel][time]` rows.
    pub fn from_channels(channels: &[Vec<f64>], sampling_rate: f64) -> Result<Self> {
        let c = channels.len();
        let t = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|ch| ch.len() != t) {
            return Err(Error::Dimension("channels differ in length".into()));
        }
        let flat: Vec<f64> = channels.iter().flatten().copied().collect();
        let data = Array3::from_shape_vec((1, c, t), flat)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        Self::new(data, sampling_rate)
    }

    pub fn n_trials(&self) -> usize {
        self.data.dim().0
    }

    pub fn n_channels(&self) -> usize {
        self.data.dim().1
    }

    pub fn n_times(&self) -> usize {
        self.data.dim().2
    }

    pub fn sampling_rate(&self) -> f64 {
        self.sampling_rate
    }

    pub fn time_axis_offset(&self) -> Option<usize> {
        self.time_axis_offset
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array3<f64> {
        self.data
    }

    #[inline]
    pub fn sample(&self, trial: usize, channel: usize, time: usize) -> f64 {
        self.data[[trial, channel, time]]
    }

    pub fn series(&self, trial: usize, channel: usize) -> ArrayView1<'_, f64> {
        self.data.index_axis(Axis(0), trial).index_axis_move(Axis(0), channel)
    }

    pub(crate) fn check_channel(&self, channel: usize) -> Result<()> {
        if channel >= self.n_channels() {
            return Err(Error::param(
                "channel",
                format!("index {channel} out of range for {} channels", self.n_channels()),
            ));
        }
        Ok(())
    }

    /// Keeps the listed channels, in the listed order.
    pub fn select_channels(&self, channels: &[usize]) -> Result<Self> {
        for &c in channels {
            self.check_channel(c)?;
        }
        let data = self.data.select(Axis(1), channels);
        validate_ensemble(data.view(), self.sampling_rate, self.time_axis_offset)?;
        Ok(Self {
            data,
            sampling_rate: self.sampling_rate,
            time_axis_offset: self.time_axis_offset,
        })
    }

    /// Keeps the listed trials (repetition allowed), in the listed order.
    pub fn select_trials(&self, trials: &[usize]) -> Result<Self> {
        if let Some(&bad) = trials.iter().find(|&&r| r >= self.n_trials()) {
            return Err(Error::param(
                "trial",
                format!("index {bad} out of range for {} trials", self.n_trials()),
            ));
        }
        let data = self.data.select(Axis(0), trials);
        validate_ensemble(data.view(), self.sampling_rate, self.time_axis_offset)?;
        Ok(Self {
            data,
            sampling_rate: self.sampling_rate,
            time_axis_offset: self.time_axis_offset,
        })
    }

    /// Cross-trial lag matrix at time `t`: row `r` is
    /// `[x_{t-1}, ..., x_{t-p}]` of `channel` in trial `r`.
    pub(crate) fn lag_matrix(&self, channel: usize, t: usize, order: usize) -> DMatrix<f64> {
        debug_assert!(t >= order && t < self.n_times());
        DMatrix::from_fn(self.n_trials(), order, |r, i| self.data[[r, channel, t - 1 - i]])
    }

    /// Cross-trial values of `channel` at time `t`.
    pub(crate) fn cross_section(&self, channel: usize, t: usize) -> Vec<f64> {
        (0..self.n_trials()).map(|r| self.data[[r, channel, t]]).collect()
    }
}

/// Past values of one channel before `origin_time`, newest first.
#[derive(Debug, Clone, PartialEq)]
pub struct LagVector {
    pub values: Vec<f64>,
    pub origin_time: usize,
    pub channel: usize,
}

/// One lag vector per trial: `values[i]` is the sample at `t - 1 - i`.
pub fn build_lag_embedding(
    ensemble: &TimeSeriesEnsemble,
    channel: usize,
    t: usize,
    order: usize,
) -> Result<Vec<LagVector>> {
    if order == 0 {
        return Err(Error::param("order", "model order must be at least 1"));
    }
    ensemble.check_channel(channel)?;
    if t < order {
        return Err(Error::InsufficientHistory {
            t,
            order,
            earliest: order,
        });
    }
    if t >= ensemble.n_times() {
        return Err(Error::param(
            "t",
            format!("time {t} beyond series of length {}", ensemble.n_times()),
        ));
    }
    Ok((0..ensemble.n_trials())
        .map(|r| LagVector {
            values: (0..order).map(|i| ensemble.sample(r, channel, t - 1 - i)).collect(),
            origin_time: t,
            channel,
        })
        .collect())
}

fn default_true() -> bool {
    true
}

/// Model order and regression options for the per-time-point fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub order: usize,
    #[serde(default = "default_true")]
    pub include_intercept: bool,
    /// Added to every diagonal entry of the normal equations.
    #[serde(default)]
    pub ridge_epsilon: f64,
}

impl ModelConfig {
    pub fn new(order: usize) -> Self {
        Self {
            order,
            include_intercept: true,
            ridge_epsilon: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::param("order", "model order must be at least 1"));
        }
        if !(self.ridge_epsilon.is_finite() && self.ridge_epsilon >= 0.0) {
            return Err(Error::param(
                "ridge_epsilon",
                format!("must be finite and nonnegative, got {}", self.ridge_epsilon),
            ));
        }
        Ok(())
    }
}

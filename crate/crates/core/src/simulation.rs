//! Synthetic ensembles from a bivariate time-inhomogeneous SVAR.
//!
//! Channel index 0 is the first process (`x1`), index 1 the second (`x2`):
//!
//! ```text
//! x1_t = a_t' x1_lags + b_t' x2_lags + e1_t,   e1_t ~ N(k1_t, v1_t)
//! x2_t = c_t' x1_lags + d_t' x2_lags + e2_t,   e2_t ~ N(k2_t, v2_t)
//! ```
//!
//! so `b` carries influence of channel 1 (index 1) on channel 0, and `c` the
//! reverse. Lag vectors are newest first.
//!
//! Every (trial, channel) pair draws from its own ChaCha stream keyed by the
//! master seed, with the time index as the position in that stream. Output is
//! therefore independent of how trials are scheduled across threads.

use std::ops::Range;

use nalgebra::DMatrix;
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::TimeSeriesEnsemble;
use crate::error::{Error, Result};

/// Coefficient vectors of both structural equations at one time point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSet {
    /// Own past of channel 0 in the channel-0 equation.
    pub a: Vec<f64>,
    /// Past of channel 1 in the channel-0 equation.
    pub b: Vec<f64>,
    /// Past of channel 0 in the channel-1 equation.
    pub c: Vec<f64>,
    /// Own past of channel 1 in the channel-1 equation.
    pub d: Vec<f64>,
}

impl CoefficientSet {
    pub fn zeros(order: usize) -> Self {
        Self {
            a: vec![0.0; order],
            b: vec![0.0; order],
            c: vec![0.0; order],
            d: vec![0.0; order],
        }
    }

    /// Companion matrix of the VAR with these coefficients frozen, acting on
    /// the state `[x1_{t-1..t-p}, x2_{t-1..t-p}]`.
    pub fn companion_matrix(&self) -> DMatrix<f64> {
        let p = self.a.len();
        let mut m = DMatrix::zeros(2 * p, 2 * p);
        for i in 0..p {
            m[(0, i)] = self.a[i];
            m[(0, p + i)] = self.b[i];
            m[(p, i)] = self.c[i];
            m[(p, p + i)] = self.d[i];
        }
        for i in 1..p {
            m[(i, i - 1)] = 1.0;
            m[(p + i, p + i - 1)] = 1.0;
        }
        m
    }

    pub fn spectral_radius(&self) -> f64 {
        self.companion_matrix()
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

/// Full generative specification: per-time coefficients, innovation means and
/// variances, plus the number of burn-in steps run with the `t = 0` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SvarSpecFile", into = "SvarSpecFile")]
pub struct SvarSpec {
    pub order: usize,
    pub coefficients: Vec<CoefficientSet>,
    pub noise_mean: Vec<[f64; 2]>,
    pub noise_var: Vec<[f64; 2]>,
    pub burn_in: usize,
}

/// A schedule given either as a single value held for all time points or as
/// one value per time point.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Schedule<T> {
    Constant(T),
    PerTime(Vec<T>),
}

impl<T: Clone + PartialEq> Schedule<T> {
    fn expand(self, len: usize, field: &'static str) -> Result<Vec<T>> {
        match self {
            Schedule::Constant(v) => Ok(vec![v; len]),
            Schedule::PerTime(v) if v.len() == len => Ok(v),
            Schedule::PerTime(v) => Err(Error::param(
                field,
                format!("schedule has {} entries, expected {len}", v.len()),
            )),
        }
    }

    fn compress(values: Vec<T>) -> Self {
        match values.first() {
            Some(first) if values.iter().all(|v| v == first) => Schedule::Constant(first.clone()),
            _ => Schedule::PerTime(values),
        }
    }
}

/// On-disk JSON form of [`SvarSpec`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvarSpecFile {
    pub order: usize,
    pub length: usize,
    #[serde(default)]
    pub burn_in: Option<usize>,
    pub coefficients: Schedule<CoefficientSet>,
    pub noise_mean: Schedule<[f64; 2]>,
    pub noise_var: Schedule<[f64; 2]>,
}

impl TryFrom<SvarSpecFile> for SvarSpec {
    type Error = Error;

    fn try_from(f: SvarSpecFile) -> Result<Self> {
        let spec = SvarSpec {
            order: f.order,
            coefficients: f.coefficients.expand(f.length, "coefficients")?,
            noise_mean: f.noise_mean.expand(f.length, "noise_mean")?,
            noise_var: f.noise_var.expand(f.length, "noise_var")?,
            burn_in: f.burn_in.unwrap_or(10 * f.order),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl From<SvarSpec> for SvarSpecFile {
    fn from(s: SvarSpec) -> Self {
        SvarSpecFile {
            order: s.order,
            length: s.len(),
            burn_in: Some(s.burn_in),
            coefficients: Schedule::compress(s.coefficients),
            noise_mean: Schedule::compress(s.noise_mean),
            noise_var: Schedule::compress(s.noise_var),
        }
    }
}

impl SvarSpec {
    /// Time-invariant spec with zero-mean innovations and the default burn-in
    /// of `10 * order`.
    pub fn constant(coefficients: CoefficientSet, noise_var: [f64; 2], len: usize) -> Result<Self> {
        let order = coefficients.a.len();
        let spec = SvarSpec {
            order,
            coefficients: vec![coefficients; len],
            noise_mean: vec![[0.0; 2]; len],
            noise_var: vec![noise_var; len],
            burn_in: 10 * order,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn is_time_invariant(&self) -> bool {
        self.coefficients.windows(2).all(|w| w[0] == w[1])
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    /// Adds `amplitude` to the innovation mean of `channel` on `window`,
    /// producing an event-locked deterministic perturbation.
    pub fn with_mean_pulse(mut self, channel: usize, window: Range<usize>, amplitude: f64) -> Result<Self> {
        if channel > 1 {
            return Err(Error::param("channel", "SVAR specs have channels 0 and 1"));
        }
        if window.start >= window.end || window.end > self.len() {
            return Err(Error::param(
                "window",
                format!("{window:?} not inside [0, {})", self.len()),
            ));
        }
        for k in &mut self.noise_mean[window] {
            k[channel] += amplitude;
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.order;
        if p == 0 {
            return Err(Error::param("order", "model order must be at least 1"));
        }
        let len = self.len();
        if len < 2 {
            return Err(Error::param("length", "need at least 2 time points"));
        }
        if self.noise_mean.len() != len || self.noise_var.len() != len {
            return Err(Error::param(
                "schedule",
                format!(
                    "schedule lengths differ: coefficients {len}, noise_mean {}, noise_var {}",
                    self.noise_mean.len(),
                    self.noise_var.len()
                ),
            ));
        }
        for (t, c) in self.coefficients.iter().enumerate() {
            for v in [&c.a, &c.b, &c.c, &c.d] {
                if v.len() != p {
                    return Err(Error::param(
                        "coefficients",
                        format!("vector of length {} at t = {t}, expected {p}", v.len()),
                    ));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::param("coefficients", format!("non-finite value at t = {t}")));
                }
            }
        }
        for (t, (m, v)) in self.noise_mean.iter().zip(&self.noise_var).enumerate() {
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::param("noise_mean", format!("non-finite value at t = {t}")));
            }
            if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::param(
                    "noise_var",
                    format!("variances must be positive, got {v:?} at t = {t}"),
                ));
            }
        }
        if self.is_time_invariant() {
            let radius = self.coefficients[0].spectral_radius();
            if radius >= 1.0 {
                return Err(Error::Unstable { radius });
            }
        } else if let Some((t, radius)) = self
            .coefficients
            .iter()
            .map(CoefficientSet::spectral_radius)
            .enumerate()
            .find(|(_, r)| *r >= 1.0)
        {
            log::warn!("frozen coefficients at t = {t} are unstable (spectral radius {radius:.4})");
        }
        Ok(())
    }
}

/// Simulates `n_trials` independent trials; output shape `[n_trials, 2, len]`.
pub fn simulate_svar(spec: &SvarSpec, n_trials: usize, seed: u64) -> Result<TimeSeriesEnsemble> {
    if n_trials == 0 {
        return Err(Error::param("n_trials", "need at least one trial"));
    }
    let ids: Vec<u64> = (0..n_trials as u64).collect();
    simulate_trials(spec, &ids, seed)
}

/// Simulates the trials with the given identifiers. Trial `id` always yields
/// the same trajectory for a given seed, wherever it appears in `trial_ids`.
pub fn simulate_trials(spec: &SvarSpec, trial_ids: &[u64], seed: u64) -> Result<TimeSeriesEnsemble> {
    spec.validate()?;
    if trial_ids.is_empty() {
        return Err(Error::param("trial_ids", "need at least one trial"));
    }
    let len = spec.len();
    let rows: Vec<Vec<f64>> = trial_ids
        .par_iter()
        .map(|&id| simulate_one(spec, id, seed))
        .collect();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let data = Array3::from_shape_vec((trial_ids.len(), 2, len), flat)
        .map_err(|e| Error::Dimension(e.to_string()))?;
    TimeSeriesEnsemble::new(data, 1.0)
}

fn noise_stream(seed: u64, trial: u64, channel: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial.wrapping_mul(2).wrapping_add(channel));
    rng
}

/// Returns channel 0 followed by channel 1, each of length `spec.len()`.
fn simulate_one(spec: &SvarSpec, trial: u64, seed: u64) -> Vec<f64> {
    let p = spec.order;
    let len = spec.len();
    let warm = p + spec.burn_in;
    let total = warm + len;
    let mut rngs = [noise_stream(seed, trial, 0), noise_stream(seed, trial, 1)];
    let mut x = [vec![0.0; total], vec![0.0; total]];

    for k in 0..2 {
        let (mean, sd) = (spec.noise_mean[0][k], spec.noise_var[0][k].sqrt());
        for v in &mut x[k][..p] {
            let z: f64 = rngs[k].sample(StandardNormal);
            *v = mean + sd * z;
        }
    }
    for s in p..total {
        let t = s.saturating_sub(warm);
        let coef = &spec.coefficients[t];
        let mut next = [0.0; 2];
        for (k, out) in next.iter_mut().enumerate() {
            let (own, cross) = if k == 0 { (&coef.a, &coef.b) } else { (&coef.d, &coef.c) };
            let other = 1 - k;
            let mut acc = 0.0;
            for i in 0..p {
                acc += own[i] * x[k][s - 1 - i];
            }
            for i in 0..p {
                acc += cross[i] * x[other][s - 1 - i];
            }
            let z: f64 = rngs[k].sample(StandardNormal);
            *out = acc + spec.noise_mean[t][k] + spec.noise_var[t][k].sqrt() * z;
        }
        x[0][s] = next[0];
        x[1][s] = next[1];
    }
    let [x0, x1] = x;
    x0[warm..].iter().chain(&x1[warm..]).copied().collect()
}

fn lag1(order: usize, value: f64) -> Vec<f64> {
    let mut v = vec![0.0; order];
    v[0] = value;
    v
}

/// Constant coupled pair where channel 1 drives channel 0 through the lag-1
/// entry of `b` and nothing flows back (`c = 0`). Own dynamics are given
/// newest lag first and zero-padded to `order`.
pub fn coupled_scenario(
    own_effect: &[f64],
    own_cause: &[f64],
    coupling: f64,
    order: usize,
    len: usize,
) -> Result<SvarSpec> {
    if order == 0 {
        return Err(Error::param("order", "model order must be at least 1"));
    }
    if own_effect.len() > order || own_cause.len() > order {
        return Err(Error::param("order", "own dynamics longer than the model order"));
    }
    let pad = |v: &[f64]| {
        let mut out = v.to_vec();
        out.resize(order, 0.0);
        out
    };
    let coefficients = CoefficientSet {
        a: pad(own_effect),
        b: lag1(order, coupling),
        c: vec![0.0; order],
        d: pad(own_cause),
    };
    let radius = coefficients.spectral_radius();
    if !(radius < 1.0) {
        return Err(Error::Unstable { radius });
    }
    Ok(SvarSpec::constant(coefficients, [1.0, 1.0], len)?.with_burn_in((10 * order).max(50)))
}

/// Channel 1 (`X`) drives channel 0 (`Y`) with the given lag-1 coupling; both
/// have mild AR(1) own dynamics and unit innovation variance.
pub fn unidirectional_scenario(coupling: f64, order: usize, len: usize) -> Result<SvarSpec> {
    coupled_scenario(&[0.5], &[0.6], coupling, order, len)
}

/// Pole radius and angle of the driver oscillator in the synchrony scenario.
const DRIVER_RADIUS: f64 = 0.995;
const DRIVER_ANGLE: f64 = 0.3;
/// Effect innovation variance relative to the driver's baseline variance.
const EFFECT_NOISE_RATIO: f64 = 0.05;

/// Driver (channel 1) is a lightly damped oscillator feeding the effect
/// (channel 0) with a fixed coupling. The driver innovation variance is
/// `base_var` everywhere except `dip_window`, where it is `dip_var`. Setting
/// `dip_var == base_var` gives the constant-variance control.
pub fn synchrony_pitfall_scenario(
    base_var: f64,
    dip_var: f64,
    dip_window: Range<usize>,
    order: usize,
    len: usize,
) -> Result<SvarSpec> {
    if !(dip_var > 0.0 && dip_var <= base_var && base_var.is_finite()) {
        return Err(Error::param(
            "dip_var",
            format!("need 0 < dip_var <= base_var, got dip {dip_var}, base {base_var}"),
        ));
    }
    if dip_window.start >= dip_window.end || dip_window.end > len {
        return Err(Error::param(
            "dip_window",
            format!("{dip_window:?} not inside [0, {len})"),
        ));
    }
    if order == 0 {
        return Err(Error::param("order", "model order must be at least 1"));
    }
    let mut d = vec![0.0; order];
    if order >= 2 {
        d[0] = 2.0 * DRIVER_RADIUS * DRIVER_ANGLE.cos();
        d[1] = -DRIVER_RADIUS * DRIVER_RADIUS;
    } else {
        d[0] = DRIVER_RADIUS;
    }
    let coefficients = CoefficientSet {
        a: lag1(order, 0.5),
        b: lag1(order, 1.0),
        c: vec![0.0; order],
        d,
    };
    let effect_var = EFFECT_NOISE_RATIO * base_var;
    let noise_var = (0..len)
        .map(|t| {
            let driver = if dip_window.contains(&t) { dip_var } else { base_var };
            [effect_var, driver]
        })
        .collect();
    let spec = SvarSpec {
        order,
        coefficients: vec![coefficients; len],
        noise_mean: vec![[0.0; 2]; len],
        noise_var,
        burn_in: 2000,
    };
    spec.validate()?;
    Ok(spec)
}

//! Time-resolved causal measures in nats.
//!
//! All four measures compare the effect's conditional distribution under the
//! fitted linear-Gaussian model against an alternative:
//!
//! * GC: `0.5 ln(reduced / full)` residual variance of the effect.
//! * TE: `0.5 ln((s2 + b' C b) / s2)` with `C` the covariance of the cause's
//!   lags conditional on the effect's lags.
//! * DCS: same with the marginal covariance of the cause's lags, i.e. the
//!   expected KL divergence after replacing the cause's lags by an
//!   independent copy from their current marginal.
//! * rDCS: expected KL divergence after replacing the cause's lags by a draw
//!   from a baseline (reference) marginal `N(mu_ref, C_ref)`:
//!   `0.5 ln(s~2 / s2) + (s2 + b' M b) / (2 s~2) - 0.5`, where
//!   `s~2 = s2 + b' C_ref b` and `M` is the second moment of the current lags
//!   about `mu_ref`.

mod bootstrap;
mod oracle;

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use bootstrap::{bootstrap_causality, BootstrapOutcome};
pub use oracle::{monte_carlo_kl, Intervention, MonteCarloEstimate};

use crate::ensemble::{ModelConfig, TimeSeriesEnsemble};
use crate::error::{Error, Result};
use crate::estimation::{
    compute_lagged_moments, compute_reference_stats, fit_svar_ensemble, LaggedMoments, ReferenceStats, SvarModel,
};
use crate::linalg::psd_quadratic_form;

/// Direction of influence between the two channels of a bivariate ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// Channel index 1 drives channel index 0 (coefficients `b`).
    #[serde(rename = "ch2_to_ch1")]
    SecondToFirst,
    /// Channel index 0 drives channel index 1 (coefficients `c`).
    #[serde(rename = "ch1_to_ch2")]
    FirstToSecond,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::SecondToFirst, Direction::FirstToSecond];

    pub fn cause(self) -> usize {
        match self {
            Direction::SecondToFirst => 1,
            Direction::FirstToSecond => 0,
        }
    }

    pub fn effect(self) -> usize {
        1 - self.cause()
    }

    pub fn label(self) -> &'static str {
        match self {
            Direction::SecondToFirst => "ch2_to_ch1",
            Direction::FirstToSecond => "ch1_to_ch2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Measure {
    #[serde(rename = "GC", alias = "gc")]
    Gc,
    #[serde(rename = "TE", alias = "te")]
    Te,
    #[serde(rename = "DCS", alias = "dcs")]
    Dcs,
    #[serde(rename = "rDCS", alias = "RDCS", alias = "rdcs")]
    Rdcs,
}

impl Measure {
    pub fn label(self) -> &'static str {
        match self {
            Measure::Gc => "gc",
            Measure::Te => "te",
            Measure::Dcs => "dcs",
            Measure::Rdcs => "rdcs",
        }
    }

    fn needs_moments(self) -> bool {
        !matches!(self, Measure::Gc)
    }
}

/// Which closed form to use for rDCS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RdcsForm {
    /// Expected Gaussian KL divergence; zero without coupling and equal to
    /// DCS when the reference matches the current marginal.
    #[default]
    ExpectedKl,
    /// Variant whose constant term omits `s2 / (2 s~2)`: equals `-0.5` when
    /// `b = 0`. Kept for comparison with published numbers.
    Literal,
}

/// A causal measure evaluated at each analysis time.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalityTrace {
    pub measure: Measure,
    pub direction: Direction,
    pub times: Vec<usize>,
    pub values: Vec<f64>,
    /// Times where the value is undefined or infinite (zero innovation
    /// variance, i.e. a deterministic relation).
    pub flagged: Vec<usize>,
    pub boot_mean: Option<Vec<f64>>,
    pub boot_std: Option<Vec<f64>>,
    pub n_boot: usize,
}

impl CausalityTrace {
    fn new(measure: Measure, direction: Direction) -> Self {
        Self {
            measure,
            direction,
            times: Vec::new(),
            values: Vec::new(),
            flagged: Vec::new(),
            boot_mean: None,
            boot_std: None,
            n_boot: 0,
        }
    }

    fn push(&mut self, t: usize, value: f64) {
        if !value.is_finite() {
            self.flagged.push(t);
        }
        self.times.push(t);
        self.values.push(value);
    }

    pub fn value_at(&self, t: usize) -> Option<f64> {
        let first = *self.times.first()?;
        self.values.get(t.checked_sub(first)?).copied()
    }
}

/// `0.5 ln(reduced / full)`; `+inf` for a deterministic full model.
pub fn gc_value(reduced_variance: f64, full_variance: f64) -> f64 {
    if full_variance > 0.0 {
        0.5 * (reduced_variance / full_variance).ln()
    } else if reduced_variance > 0.0 {
        f64::INFINITY
    } else {
        f64::NAN
    }
}

fn log_variance_ratio(innovation_variance: f64, added: f64) -> f64 {
    if innovation_variance > 0.0 {
        0.5 * (added / innovation_variance).ln_1p()
    } else {
        f64::NAN
    }
}

/// `0.5 ln((s2 + b' C b) / s2)` with `C` the conditional covariance of the
/// cause's lags given the effect's lags.
pub fn te_value(innovation_variance: f64, coupling: &DVector<f64>, conditional_cov: &DMatrix<f64>) -> f64 {
    log_variance_ratio(innovation_variance, psd_quadratic_form(coupling, conditional_cov))
}

/// `0.5 ln((b' S b + s2) / s2)` with `S` the marginal covariance of the
/// cause's lags.
pub fn dcs_value(innovation_variance: f64, coupling: &DVector<f64>, marginal_cov: &DMatrix<f64>) -> f64 {
    log_variance_ratio(innovation_variance, psd_quadratic_form(coupling, marginal_cov))
}

/// rDCS from the reference covariance `C_ref` and the second moment `M` of
/// the current cause lags about the reference mean.
pub fn rdcs_value(
    innovation_variance: f64,
    coupling: &DVector<f64>,
    reference_cov: &DMatrix<f64>,
    second_moment: &DMatrix<f64>,
    form: RdcsForm,
) -> f64 {
    let q_ref = psd_quadratic_form(coupling, reference_cov);
    let q_m = psd_quadratic_form(coupling, second_moment);
    let intervened = innovation_variance + q_ref;
    if !(intervened > 0.0) {
        return f64::NAN;
    }
    let log_term = if innovation_variance > 0.0 {
        0.5 * (q_ref / innovation_variance).ln_1p()
    } else {
        f64::INFINITY
    };
    match form {
        RdcsForm::ExpectedKl => log_term + (innovation_variance + q_m) / (2.0 * intervened) - 0.5,
        RdcsForm::Literal => log_term - 0.5 + q_m / (2.0 * intervened),
    }
}

pub fn granger_causality(model: &SvarModel, direction: Direction) -> CausalityTrace {
    let mut trace = CausalityTrace::new(Measure::Gc, direction);
    for fit in &model.fits {
        let eq = &fit.equations[direction.effect()];
        trace.push(fit.t, gc_value(eq.reduced_residual_variance, eq.residual_variance));
    }
    trace
}

fn check_aligned(model: &SvarModel, moments: &LaggedMoments) -> Result<()> {
    let same = model.order == moments.order
        && model.fits.len() == moments.times.len()
        && model.fits.iter().zip(&moments.times).all(|(f, m)| f.t == m.t);
    if !same {
        return Err(Error::Dimension(
            "model and moments cover different orders or analysis times".into(),
        ));
    }
    Ok(())
}

pub fn transfer_entropy(model: &SvarModel, moments: &LaggedMoments, direction: Direction) -> Result<CausalityTrace> {
    check_aligned(model, moments)?;
    let mut trace = CausalityTrace::new(Measure::Te, direction);
    for (fit, m) in model.fits.iter().zip(&moments.times) {
        let eq = &fit.equations[direction.effect()];
        let value = te_value(eq.residual_variance, &eq.cross_vector(), &m.conditional[direction.cause()]);
        trace.push(fit.t, value);
    }
    Ok(trace)
}

pub fn dynamic_causal_strength(
    model: &SvarModel,
    moments: &LaggedMoments,
    direction: Direction,
) -> Result<CausalityTrace> {
    check_aligned(model, moments)?;
    let mut trace = CausalityTrace::new(Measure::Dcs, direction);
    for (fit, m) in model.fits.iter().zip(&moments.times) {
        let eq = &fit.equations[direction.effect()];
        let value = dcs_value(eq.residual_variance, &eq.cross_vector(), &m.marginal_cov(direction.cause()));
        trace.push(fit.t, value);
    }
    Ok(trace)
}

pub fn relative_dcs(
    model: &SvarModel,
    moments: &LaggedMoments,
    reference: &ReferenceStats,
    direction: Direction,
    form: RdcsForm,
) -> Result<CausalityTrace> {
    check_aligned(model, moments)?;
    if reference.direction != direction {
        return Err(Error::param("reference", "reference statistics computed for the other direction"));
    }
    if reference.mean.len() != model.order {
        return Err(Error::Dimension(format!(
            "reference has order {}, model has {}",
            reference.mean.len(),
            model.order
        )));
    }
    let cause = direction.cause();
    let mut trace = CausalityTrace::new(Measure::Rdcs, direction);
    for (fit, m) in model.fits.iter().zip(&moments.times) {
        let eq = &fit.equations[direction.effect()];
        let shift = m.marginal_mean(cause) - &reference.mean;
        let second_moment = m.marginal_cov(cause) + &shift * shift.transpose();
        let value = rdcs_value(
            eq.residual_variance,
            &eq.cross_vector(),
            &reference.cov,
            &second_moment,
            form,
        );
        trace.push(fit.t, value);
    }
    Ok(trace)
}

/// Everything needed to go from an epoch ensemble to causality traces.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisRequest {
    pub model: ModelConfig,
    pub measures: Vec<Measure>,
    /// Epoch time indices of the rDCS baseline; required for rDCS.
    pub reference_window: Option<Range<usize>>,
    pub rdcs_form: RdcsForm,
}

impl AnalysisRequest {
    pub fn new(model: ModelConfig, measures: Vec<Measure>) -> Self {
        Self {
            model,
            measures,
            reference_window: None,
            rdcs_form: RdcsForm::ExpectedKl,
        }
    }

    pub fn with_reference_window(mut self, window: Range<usize>) -> Self {
        self.reference_window = Some(window);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.measures.is_empty() {
            return Err(Error::param("measures", "select at least one measure"));
        }
        if self.measures.contains(&Measure::Rdcs) && self.reference_window.is_none() {
            return Err(Error::param("reference_window", "rDCS needs a reference window"));
        }
        Ok(())
    }
}

/// Traces plus numerical warnings collected along the way.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub traces: Vec<CausalityTrace>,
    pub warnings: Vec<String>,
}

/// Fits the model and evaluates every requested measure in both directions.
/// Traces come out measure by measure in request order, each as
/// `[SecondToFirst, FirstToSecond]`.
pub fn analyze(epochs: &TimeSeriesEnsemble, request: &AnalysisRequest) -> Result<Analysis> {
    request.validate()?;
    let model = fit_svar_ensemble(epochs, &request.model)?;
    let moments = if request.measures.iter().any(|m| m.needs_moments()) {
        Some(compute_lagged_moments(epochs, request.model.order)?)
    } else {
        None
    };
    let references = match &request.reference_window {
        Some(window) if request.measures.contains(&Measure::Rdcs) => Some(
            Direction::BOTH
                .into_iter()
                .map(|d| compute_reference_stats(epochs, window.clone(), request.model.order, d))
                .collect::<Result<Vec<_>>>()?,
        ),
        _ => None,
    };

    let mut traces = Vec::with_capacity(2 * request.measures.len());
    for &measure in &request.measures {
        for (i, direction) in Direction::BOTH.into_iter().enumerate() {
            let trace = match measure {
                Measure::Gc => granger_causality(&model, direction),
                Measure::Te => transfer_entropy(&model, moments.as_ref().expect("moments"), direction)?,
                Measure::Dcs => dynamic_causal_strength(&model, moments.as_ref().expect("moments"), direction)?,
                Measure::Rdcs => relative_dcs(
                    &model,
                    moments.as_ref().expect("moments"),
                    &references.as_ref().expect("reference")[i],
                    direction,
                    request.rdcs_form,
                )?,
            };
            traces.push(trace);
        }
    }
    let mut warnings = moments.map(|m| m.warnings).unwrap_or_default();
    for trace in &traces {
        if !trace.flagged.is_empty() {
            warnings.push(format!(
                "{} {}: undefined or infinite at {} time point(s), first t = {}",
                trace.measure.label(),
                trace.direction.label(),
                trace.flagged.len(),
                trace.flagged[0]
            ));
        }
    }
    Ok(Analysis { traces, warnings })
}

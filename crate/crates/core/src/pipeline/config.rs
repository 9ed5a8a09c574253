//! JSON run configuration.
//!
//! Unknown keys are rejected everywhere. Relative `input.path` and
//! `output_dir` values are resolved against the directory holding the
//! config file.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::causality::{AnalysisRequest, Measure, RdcsForm};
use crate::ensemble::ModelConfig;
use crate::error::{Error, Result};
use crate::events::{AlignmentMode, DetectionParams, EpochParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    Csv,
    Tct,
}

impl InputFormat {
    /// `.csv` files are CSV, anything else is read as tct-binary.
    pub fn from_extension(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => InputFormat::Csv,
            _ => InputFormat::Tct,
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub path: PathBuf,
    /// Inferred from the file extension when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<InputFormat>,
    /// Samples per second; only affects the `time_seconds` output column.
    #[serde(default = "one")]
    pub sampling_rate: f64,
}

impl InputConfig {
    pub fn resolved_format(&self) -> InputFormat {
        self.format.unwrap_or_else(|| InputFormat::from_extension(&self.path))
    }
}

/// A channel given by name (CSV header, or `ch1`, `ch2`, ... for tct input)
/// or by zero-based index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChannelRef {
    Index(usize),
    Name(String),
}

impl ChannelRef {
    pub fn resolve(&self, names: &[String]) -> Option<usize> {
        match self {
            ChannelRef::Index(i) => (*i < names.len()).then_some(*i),
            ChannelRef::Name(n) => names.iter().position(|m| m == n),
        }
    }
}

impl fmt::Display for ChannelRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelRef::Index(i) => write!(f, "#{i}"),
            ChannelRef::Name(n) => write!(f, "{n:?}"),
        }
    }
}

/// Which recorded channel is the putative cause and which the effect.
/// Defaults follow the simulator: the second channel drives the first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelRoles {
    pub cause: ChannelRef,
    pub effect: ChannelRef,
}

impl Default for ChannelRoles {
    fn default() -> Self {
        Self {
            cause: ChannelRef::Index(1),
            effect: ChannelRef::Index(0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignOn {
    #[default]
    Cause,
    Effect,
}

fn default_min_separation() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionConfig {
    pub threshold_ratio: f64,
    #[serde(default = "default_min_separation")]
    pub min_separation: usize,
    #[serde(default)]
    pub alignment_mode: AlignmentMode,
    #[serde(default)]
    pub peak_search_halfwidth: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_events: Option<usize>,
}

impl DetectionConfig {
    pub fn params(&self, detection_channel: usize) -> DetectionParams {
        DetectionParams {
            detection_channel,
            threshold_ratio: self.threshold_ratio,
            min_separation: self.min_separation,
            alignment_mode: self.alignment_mode,
            peak_search_halfwidth: self.peak_search_halfwidth,
            max_events: self.max_events,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochConfig {
    pub window_length: usize,
    #[serde(default)]
    pub alignment_offset: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapConfig {
    pub n_boot: usize,
    /// Falls back to the master seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("output")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: InputConfig,
    #[serde(default)]
    pub channels: ChannelRoles,
    /// Without detection every input trial is taken as one epoch whose
    /// alignment point sits `model.order + epoch.alignment_offset` samples in.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection: Option<DetectionConfig>,
    pub epoch: EpochConfig,
    pub model: ModelConfig,
    pub measures: Vec<Measure>,
    /// `[start, end)` in epoch time indices, the same indices as the
    /// `time_index` output column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rdcs_reference_window: Option<[usize; 2]>,
    #[serde(default)]
    pub rdcs_form: RdcsForm,
    #[serde(default)]
    pub align_on: AlignOn,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapConfig>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn invalid(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

impl PipelineConfig {
    /// Parses JSON text; errors carry the JSON path of the offending value.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            invalid(if path.is_empty() { "." } else { &path }, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Samples from the start of an epoch to its alignment point.
    pub fn alignment_index(&self) -> usize {
        self.model.order + self.epoch.alignment_offset
    }

    pub fn epoch_params(&self) -> EpochParams {
        EpochParams {
            window_length: self.epoch.window_length,
            alignment_offset: self.epoch.alignment_offset,
            model_order: self.model.order,
            artifact_threshold: self.epoch.artifact_threshold,
        }
    }

    pub fn analysis_request(&self) -> AnalysisRequest {
        AnalysisRequest {
            model: self.model.clone(),
            measures: self.measures.clone(),
            reference_window: self.rdcs_reference_window.map(|[a, b]| a..b),
            rdcs_form: self.rdcs_form,
        }
    }

    /// Semantic checks that do not need the input data.
    pub fn validate(&self) -> Result<()> {
        if !(self.input.sampling_rate.is_finite() && self.input.sampling_rate > 0.0) {
            return Err(invalid("input.sampling_rate", "must be positive"));
        }
        if self.channels.cause == self.channels.effect {
            return Err(invalid("channels", "cause and effect must be different channels"));
        }
        if let Some(d) = &self.detection {
            if !(d.threshold_ratio.is_finite() && d.threshold_ratio > 0.0) {
                return Err(invalid("detection.threshold_ratio", "must be positive"));
            }
            if d.min_separation == 0 {
                return Err(invalid("detection.min_separation", "must be at least 1"));
            }
            if d.max_events == Some(0) {
                return Err(invalid("detection.max_events", "must be at least 1"));
            }
        }
        if self.epoch.window_length == 0 {
            return Err(invalid("epoch.window_length", "must be at least 1"));
        }
        if self.epoch.alignment_offset >= self.epoch.window_length {
            return Err(invalid("epoch.alignment_offset", "must be smaller than epoch.window_length"));
        }
        if let Some(th) = self.epoch.artifact_threshold {
            if !(th > 0.0) {
                return Err(invalid("epoch.artifact_threshold", "must be positive"));
            }
        }
        if self.model.order == 0 {
            return Err(invalid("model.order", "must be at least 1"));
        }
        if !(self.model.ridge_epsilon.is_finite() && self.model.ridge_epsilon >= 0.0) {
            return Err(invalid("model.ridge_epsilon", "must be finite and nonnegative"));
        }
        if self.measures.is_empty() {
            return Err(invalid("measures", "select at least one of GC, TE, DCS, rDCS"));
        }
        for (i, m) in self.measures.iter().enumerate() {
            if self.measures[..i].contains(m) {
                return Err(invalid(&format!("measures[{i}]"), format!("{m:?} listed twice")));
            }
        }
        match (self.measures.contains(&Measure::Rdcs), self.rdcs_reference_window) {
            (true, None) => {
                return Err(invalid("rdcs_reference_window", "required when rDCS is selected"));
            }
            (false, Some(_)) => {
                return Err(invalid("rdcs_reference_window", "only meaningful when rDCS is selected"));
            }
            (true, Some([start, end])) => {
                if start >= end {
                    return Err(invalid("rdcs_reference_window", "start must be below end"));
                }
                if start < self.model.order {
                    return Err(invalid(
                        "rdcs_reference_window",
                        format!("start must be at least model.order = {}", self.model.order),
                    ));
                }
                if end > self.alignment_index() {
                    return Err(invalid(
                        "rdcs_reference_window",
                        format!("must end at or before the alignment index {}", self.alignment_index()),
                    ));
                }
            }
            (false, None) => {}
        }
        if let Some(b) = &self.bootstrap {
            if b.n_boot < 2 {
                return Err(invalid("bootstrap.n_boot", "must be at least 2"));
            }
        }
        Ok(())
    }

    /// Makes relative paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if self.input.path.is_relative() {
            self.input.path = base.join(&self.input.path);
        }
        if self.output_dir.is_relative() {
            self.output_dir = base.join(&self.output_dir);
        }
    }
}

/// Reads and validates a config file. Returns the config as written (for the
/// manifest) and a copy with paths resolved against the file's directory.
pub fn load_config(path: &Path) -> Result<(PipelineConfig, PipelineConfig)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let config = PipelineConfig::from_json(&text).map_err(|e| match e {
        Error::Config { path: json_path, message } => Error::Config {
            path: format!("{}: {json_path}", path.display()),
            message,
        },
        other => other,
    })?;
    let mut resolved = config.clone();
    resolved.resolve_paths(path.parent().unwrap_or(Path::new("")));
    Ok((config, resolved))
}

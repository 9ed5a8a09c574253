//! Config-driven runs: load, detect, align, epoch, reject, fit, measure,
//! bootstrap, write.

mod config;
mod io;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::Serialize;

pub use config::{
    load_config, AlignOn, BootstrapConfig, ChannelRef, ChannelRoles, DetectionConfig, EpochConfig, InputConfig,
    InputFormat, PipelineConfig,
};
pub use io::{encode_tct, read_recording, read_timeseries, write_events_csv, write_tct, write_trace_csv, Recording};

use crate::causality::{analyze, bootstrap_causality, CausalityTrace};
use crate::error::{Error, Result, StageContext};
use crate::events::{align_events, detect_events, extract_snapshots, reject_artifacts, EventIndex};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StageCounts {
    pub events_detected: usize,
    pub events_aligned: usize,
    /// Candidates whose peak search ran off the recording.
    pub dropped_in_alignment: usize,
    /// Candidates that aligned onto the same peak as another one.
    pub merged_in_alignment: usize,
    pub subsampled_out: usize,
    /// Aligned events too close to the recording edge for a full epoch.
    pub dropped_at_boundaries: usize,
    pub epochs_extracted: usize,
    pub rejected_as_artifacts: usize,
    pub epochs_surviving: usize,
    pub trials_fitted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub measure: String,
    pub cause: String,
    pub effect: String,
    pub n_trials: usize,
    pub n_boot: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapReport {
    pub n_boot: usize,
    pub seed: u64,
    pub succeeded: usize,
    pub failed: usize,
    pub redrawn: usize,
}

/// Everything needed to audit a run. Serialised without the duration, which
/// would make otherwise identical runs differ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub config: PipelineConfig,
    pub cause_channel: String,
    pub effect_channel: String,
    pub aligned_on: String,
    pub counts: StageCounts,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapReport>,
    pub outputs: Vec<OutputFile>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub duration: Duration,
}

/// File-safe form of a channel name.
fn file_token(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Output file name for a trace: `<measure>_<cause>_to_<effect>.csv`.
pub fn trace_file_name(trace: &CausalityTrace, names: [&str; 2]) -> String {
    let d = trace.direction;
    format!(
        "{}_{}_to_{}.csv",
        trace.measure.label(),
        file_token(names[d.cause()]),
        file_token(names[d.effect()])
    )
}

/// Writes the traces into `dir`; on failure every file written so far is
/// removed again.
pub fn write_traces(
    dir: &Path,
    traces: &[CausalityTrace],
    names: [&str; 2],
    alignment_index: usize,
    sampling_rate: f64,
    n_trials: usize,
) -> Result<Vec<OutputFile>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written: Vec<PathBuf> = Vec::new();
    let mut outputs = Vec::new();
    for trace in traces {
        let file = trace_file_name(trace, names);
        let path = dir.join(&file);
        written.push(path.clone());
        if let Err(e) = write_trace_csv(&path, trace, alignment_index, sampling_rate) {
            remove_all(&written);
            return Err(e);
        }
        outputs.push(OutputFile {
            file,
            measure: trace.measure.label().to_string(),
            cause: names[trace.direction.cause()].to_string(),
            effect: names[trace.direction.effect()].to_string(),
            n_trials,
            n_boot: trace.n_boot,
        });
    }
    Ok(outputs)
}

fn remove_all(paths: &[PathBuf]) {
    for p in paths {
        let _ = std::fs::remove_file(p);
    }
}

fn resolve_channel(reference: &ChannelRef, role: &str, names: &[String]) -> Result<usize> {
    reference.resolve(names).ok_or_else(|| Error::Config {
        path: format!("channels.{role}"),
        message: format!("channel {reference} not found; input has {names:?}"),
    })
}

/// Resolves the cause and effect channels against the input's names.
pub fn resolve_channels(config: &PipelineConfig, names: &[String]) -> Result<[usize; 2]> {
    let cause = resolve_channel(&config.channels.cause, "cause", names)?;
    let effect = resolve_channel(&config.channels.effect, "effect", names)?;
    if cause == effect {
        return Err(Error::Config {
            path: "channels".into(),
            message: format!("cause and effect both refer to {:?}", names[cause]),
        });
    }
    Ok([cause, effect])
}

/// Runs the configured analysis. Paths in `config` are used as given; see
/// [`load_config`] for resolution against the config file.
///
/// The analysed ensemble holds the cause in channel 0 and the effect in
/// channel 1, so each measure produces a `cause_to_effect` and an
/// `effect_to_cause` file. Nothing is written unless every stage succeeds.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunManifest> {
    run_with_echo(config, config)
}

/// Like [`run_pipeline`] but records `echo` (typically the config as
/// written, before path resolution) in the manifest.
pub fn run_with_echo(config: &PipelineConfig, echo: &PipelineConfig) -> Result<RunManifest> {
    let start = Instant::now();
    config.validate()?;
    let rate = config.input.sampling_rate;
    let recording = read_recording(&config.input.path, config.input.resolved_format(), rate).stage("load")?;
    let [cause, effect] = resolve_channels(config, &recording.channel_names)?;
    let names = [
        recording.channel_names[cause].as_str(),
        recording.channel_names[effect].as_str(),
    ];
    let pair = recording.ensemble.select_channels(&[cause, effect]).stage("load")?;
    let align_channel = match config.align_on {
        AlignOn::Cause => 0,
        AlignOn::Effect => 1,
    };

    let mut counts = StageCounts::default();
    let epoch_params = config.epoch_params();
    let events: Vec<EventIndex> = match &config.detection {
        Some(detection) => {
            let params = detection.params(align_channel);
            let candidates = detect_events(&pair, &params).stage("detect")?;
            counts.events_detected = candidates.len();
            if candidates.is_empty() {
                return Err(Error::EmptyResult("no threshold crossings".into())).stage("detect");
            }
            let aligned = align_events(&pair, &candidates, &params, config.seed).stage("align")?;
            counts.dropped_in_alignment = aligned.dropped_at_boundary;
            counts.merged_in_alignment = aligned.merged;
            counts.subsampled_out = aligned.subsampled_out;
            aligned.events
        }
        None => {
            counts.events_detected = pair.n_trials();
            (0..pair.n_trials())
                .map(|r| EventIndex::new(r, config.alignment_index()))
                .collect()
        }
    };
    counts.events_aligned = events.len();

    let snapshots = extract_snapshots(&pair, &events, &epoch_params).stage("extract")?;
    counts.dropped_at_boundaries = snapshots.dropped_at_boundary;
    counts.epochs_extracted = snapshots.events.len();
    let epochs = match config.epoch.artifact_threshold {
        Some(th) => reject_artifacts(&snapshots.epochs, th).stage("reject")?.0,
        None => snapshots.epochs,
    };
    counts.epochs_surviving = epochs.n_trials();
    counts.rejected_as_artifacts = counts.epochs_extracted - counts.epochs_surviving;
    counts.trials_fitted = epochs.n_trials();

    let request = config.analysis_request();
    let (traces, mut warnings, bootstrap) = match &config.bootstrap {
        Some(b) => {
            let seed = b.seed.unwrap_or(config.seed);
            let out = bootstrap_causality(&epochs, &request, b.n_boot, seed).stage("bootstrap")?;
            let report = BootstrapReport {
                n_boot: b.n_boot,
                seed,
                succeeded: out.n_succeeded,
                failed: out.n_failed,
                redrawn: out.n_redrawn,
            };
            (out.traces, out.warnings, Some(report))
        }
        None => {
            let a = analyze(&epochs, &request).stage("analyze")?;
            (a.traces, a.warnings, None)
        }
    };
    if let Some(b) = &bootstrap {
        if b.failed > 0 {
            warnings.push(format!("{} of {} bootstrap replicates failed", b.failed, b.n_boot));
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    let outputs = write_traces(
        &config.output_dir,
        &traces,
        names,
        config.alignment_index(),
        rate,
        counts.trials_fitted,
    )
    .stage("write")?;
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: echo.clone(),
        cause_channel: names[0].to_string(),
        effect_channel: names[1].to_string(),
        aligned_on: names[align_channel].to_string(),
        counts,
        bootstrap,
        outputs,
        warnings,
        duration: start.elapsed(),
    };
    let manifest_path = config.output_dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    if let Err(e) = std::fs::write(&manifest_path, json + "\n") {
        let mut written: Vec<PathBuf> = manifest.outputs.iter().map(|o| config.output_dir.join(&o.file)).collect();
        written.push(manifest_path.clone());
        remove_all(&written);
        return Err(Error::io(manifest_path, e)).stage("write");
    }
    Ok(manifest)
}

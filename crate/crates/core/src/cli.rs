//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for invalid input (bad flags, config, spec or
//! data files), 2 when a computation fails. Diagnostics go to standard error,
//! data only to files.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::causality::{analyze, bootstrap_causality, AnalysisRequest, Measure, RdcsForm};
use crate::ensemble::{ModelConfig, TimeSeriesEnsemble};
use crate::error::{Error, Result};
use crate::events::{align_events, detect_events, AlignmentMode, DetectionParams};
use crate::pipeline::{
    load_config, read_recording, resolve_channels, run_with_echo, write_events_csv, write_tct, write_traces,
    ChannelRef, InputFormat,
};
use crate::simulation::{simulate_svar, SvarSpec};

#[derive(Debug, Parser)]
#[command(name = "pericausal", version, about = "Event-locked causal analysis of bivariate time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Tct,
}

impl From<FormatArg> for InputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => InputFormat::Csv,
            FormatArg::Tct => InputFormat::Tct,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    LocalPeak,
    PooledPeak,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RdcsFormArg {
    ExpectedKl,
    Literal,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a bivariate SVAR ensemble from a JSON spec into a tct file.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Detect and align threshold-crossing events; writes `trial,time` rows.
    Detect {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        /// Channel name or zero-based index.
        #[arg(long)]
        channel: String,
        #[arg(long)]
        threshold_ratio: f64,
        #[arg(long, default_value_t = 1)]
        min_separation: usize,
        #[arg(long, default_value_t = 0)]
        peak_search_halfwidth: usize,
        #[arg(long, value_enum, default_value = "local-peak")]
        alignment_mode: ModeArg,
        #[arg(long)]
        max_events: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute causality traces on an already epoched ensemble.
    Analyze {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        #[arg(long, default_value = "1")]
        cause: String,
        #[arg(long, default_value = "0")]
        effect: String,
        #[arg(long)]
        order: usize,
        /// Comma-separated subset of GC, TE, DCS, rDCS.
        #[arg(long, value_delimiter = ',', value_parser = parse_measure, required = true)]
        measures: Vec<Measure>,
        /// rDCS baseline as `start:end` epoch indices.
        #[arg(long, value_parser = parse_window)]
        reference_window: Option<(usize, usize)>,
        #[arg(long, value_enum, default_value = "expected-kl")]
        rdcs_form: RdcsFormArg,
        /// Epoch index of the alignment point (zero of `time_seconds`).
        #[arg(long, default_value_t = 0)]
        alignment_index: usize,
        #[arg(long, default_value_t = 1.0)]
        sampling_rate: f64,
        #[arg(long, default_value_t = 0.0)]
        ridge: f64,
        #[arg(long)]
        no_intercept: bool,
        #[arg(long)]
        n_boot: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run a full configured analysis.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
    },
    /// Check a config and its input without running anything.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

fn parse_measure(s: &str) -> std::result::Result<Measure, String> {
    serde_json::from_value(serde_json::Value::String(s.trim().to_string()))
        .map_err(|_| format!("unknown measure {s:?}; use GC, TE, DCS or rDCS"))
}

fn parse_window(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(':').ok_or("expected start:end")?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| e.to_string());
    Ok((parse(a)?, parse(b)?))
}

fn channel_ref(s: &str) -> ChannelRef {
    s.parse().map_or_else(|_| ChannelRef::Name(s.to_string()), ChannelRef::Index)
}

fn format_for(path: &Path, format: Option<FormatArg>) -> InputFormat {
    format.map_or_else(|| InputFormat::from_extension(path), Into::into)
}

fn find_channel(reference: &ChannelRef, flag: &str, names: &[String]) -> Result<usize> {
    reference.resolve(names).ok_or_else(|| Error::Config {
        path: format!("--{flag}"),
        message: format!("channel {reference} not found; input has {names:?}"),
    })
}

fn simulate(spec_path: &Path, trials: usize, seed: u64, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(spec_path).map_err(|e| Error::io(spec_path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let spec: SvarSpec = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
        path: format!("{}: {}", spec_path.display(), e.path()),
        message: e.into_inner().to_string(),
    })?;
    let ens = simulate_svar(&spec, trials, seed)?;
    write_tct(out, &ens)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            spec,
            trials,
            seed,
            out,
        } => simulate(&spec, trials, seed, &out),
        Command::Detect {
            input,
            format,
            channel,
            threshold_ratio,
            min_separation,
            peak_search_halfwidth,
            alignment_mode,
            max_events,
            seed,
            out,
        } => {
            let rec = read_recording(&input, format_for(&input, format), 1.0)?;
            let ch = find_channel(&channel_ref(&channel), "channel", &rec.channel_names)?;
            let params = DetectionParams {
                detection_channel: ch,
                threshold_ratio,
                min_separation,
                alignment_mode: match alignment_mode {
                    ModeArg::LocalPeak => AlignmentMode::LocalPeak,
                    ModeArg::PooledPeak => AlignmentMode::PooledPeak,
                },
                peak_search_halfwidth,
                max_events,
            };
            let candidates = detect_events(&rec.ensemble, &params)?;
            if candidates.is_empty() {
                return Err(Error::EmptyResult("no threshold crossings".into()));
            }
            let aligned = align_events(&rec.ensemble, &candidates, &params, seed)?;
            log::info!(
                "{} candidates, {} aligned events",
                candidates.len(),
                aligned.events.len()
            );
            write_events_csv(&out, &aligned.events)
        }
        Command::Analyze {
            input,
            format,
            cause,
            effect,
            order,
            measures,
            reference_window,
            rdcs_form,
            alignment_index,
            sampling_rate,
            ridge,
            no_intercept,
            n_boot,
            seed,
            out_dir,
        } => {
            let rec = read_recording(&input, format_for(&input, format), sampling_rate)?;
            let c = find_channel(&channel_ref(&cause), "cause", &rec.channel_names)?;
            let e = find_channel(&channel_ref(&effect), "effect", &rec.channel_names)?;
            if c == e {
                return Err(Error::Config {
                    path: "--cause/--effect".into(),
                    message: "must name different channels".into(),
                });
            }
            let pair = rec.ensemble.select_channels(&[c, e])?;
            let epochs = TimeSeriesEnsemble::peri_event(pair.into_data(), sampling_rate, alignment_index)?;
            let request = AnalysisRequest {
                model: ModelConfig {
                    order,
                    include_intercept: !no_intercept,
                    ridge_epsilon: ridge,
                },
                measures,
                reference_window: reference_window.map(|(a, b)| a..b),
                rdcs_form: match rdcs_form {
                    RdcsFormArg::ExpectedKl => RdcsForm::ExpectedKl,
                    RdcsFormArg::Literal => RdcsForm::Literal,
                },
            };
            let (traces, warnings) = match n_boot {
                Some(n) => {
                    let out = bootstrap_causality(&epochs, &request, n, seed)?;
                    (out.traces, out.warnings)
                }
                None => {
                    let a = analyze(&epochs, &request)?;
                    (a.traces, a.warnings)
                }
            };
            for w in &warnings {
                log::warn!("{w}");
            }
            let names = [rec.channel_names[c].as_str(), rec.channel_names[e].as_str()];
            write_traces(&out_dir, &traces, names, alignment_index, sampling_rate, epochs.n_trials())?;
            Ok(())
        }
        Command::Pipeline { config } => {
            let (echo, resolved) = load_config(&config)?;
            let manifest = run_with_echo(&resolved, &echo)?;
            eprintln!(
                "wrote {} trace file(s) to {} in {:.2?}",
                manifest.outputs.len(),
                resolved.output_dir.display(),
                manifest.duration
            );
            Ok(())
        }
        Command::ValidateConfig { config } => {
            let (_, resolved) = load_config(&config)?;
            let rec = read_recording(
                &resolved.input.path,
                resolved.input.resolved_format(),
                resolved.input.sampling_rate,
            )?;
            resolve_channels(&resolved, &rec.channel_names)?;
            eprintln!("{}: ok", config.display());
            Ok(())
        }
    }
}

fn report(err: &Error) {
    eprintln!("error: {err}");
    let mut source = std::error::Error::source(err);
    while let Some(s) = source {
        eprintln!("  caused by: {s}");
        source = s.source();
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            report(&e);
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

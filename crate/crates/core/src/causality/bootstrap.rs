use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{analyze, Analysis, AnalysisRequest, CausalityTrace};
use crate::ensemble::TimeSeriesEnsemble;
use crate::error::{Error, Result};

/// Resamples that hit a singular design are redrawn up to this many times.
const MAX_ATTEMPTS: u64 = 10;

/// Fraction of replicates allowed to fail before the bootstrap is abandoned.
const MAX_FAILURE_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapOutcome {
    /// Point estimates on the full ensemble with `boot_mean` / `boot_std`
    /// filled in.
    pub traces: Vec<CausalityTrace>,
    pub warnings: Vec<String>,
    /// Replicates that produced values.
    pub n_succeeded: usize,
    /// Replicates abandoned after `MAX_ATTEMPTS` singular resamples.
    pub n_failed: usize,
    /// Resamples redrawn because of a singular design.
    pub n_redrawn: usize,
}

fn resample(n: usize, seed: u64, replicate: usize, attempt: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((replicate as u64) << 8) | attempt);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Trial-resampling bootstrap of every trace in `request`.
///
/// Replicate `i` draws its trial indices from its own ChaCha stream, so the
/// result depends only on `seed` and not on thread scheduling.
pub fn bootstrap_causality(
    epochs: &TimeSeriesEnsemble,
    request: &AnalysisRequest,
    n_boot: usize,
    seed: u64,
) -> Result<BootstrapOutcome> {
    if n_boot < 2 {
        return Err(Error::param("n_boot", "need at least 2 replicates"));
    }
    let Analysis { mut traces, warnings } = analyze(epochs, request)?;
    let n = epochs.n_trials();

    let replicates: Vec<Result<(Option<Vec<CausalityTrace>>, u64)>> = (0..n_boot)
        .into_par_iter()
        .map(|i| {
            for attempt in 0..MAX_ATTEMPTS {
                let sample = epochs.select_trials(&resample(n, seed, i, attempt))?;
                match analyze(&sample, request) {
                    Ok(a) => return Ok((Some(a.traces), attempt)),
                    Err(Error::SingularFit { .. }) => continue,
                    Err(e) => return Err(e),
                }
            }
            Ok((None, MAX_ATTEMPTS))
        })
        .collect();

    let mut succeeded = Vec::with_capacity(n_boot);
    let mut n_redrawn = 0;
    for r in replicates {
        let (traces, attempts) = r?;
        n_redrawn += attempts as usize;
        if let Some(t) = traces {
            succeeded.push(t);
        }
    }
    let n_failed = n_boot - succeeded.len();
    if n_failed as f64 > MAX_FAILURE_FRACTION * n_boot as f64 || succeeded.len() < 2 {
        return Err(Error::BootstrapFailure {
            failed: n_failed,
            total: n_boot,
        });
    }
    if n_failed > 0 {
        log::warn!("{n_failed} of {n_boot} bootstrap replicates were singular and skipped");
    }

    let m = succeeded.len() as f64;
    for (k, trace) in traces.iter_mut().enumerate() {
        let len = trace.values.len();
        let mut mean = vec![0.0; len];
        let mut std = vec![0.0; len];
        for j in 0..len {
            let mu = succeeded.iter().map(|rep| rep[k].values[j]).sum::<f64>() / m;
            let ss = succeeded.iter().map(|rep| (rep[k].values[j] - mu).powi(2)).sum::<f64>();
            mean[j] = mu;
            std[j] = (ss / (m - 1.0)).sqrt();
        }
        trace.boot_mean = Some(mean);
        trace.boot_std = Some(std);
        trace.n_boot = succeeded.len();
    }
    Ok(BootstrapOutcome {
        traces,
        warnings,
        n_succeeded: succeeded.len(),
        n_failed,
        n_redrawn,
    })
}

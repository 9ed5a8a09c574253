//! Event detection, alignment, peri-event snapshot extraction and amplitude
//! based artifact rejection.
//!
//! Recordings with several trials are treated as independent continuous
//! segments; every event carries the trial it was found in.

use ndarray::{Array3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::TimeSeriesEnsemble;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EventIndex {
    pub trial: usize,
    pub time: usize,
}

impl EventIndex {
    pub fn new(trial: usize, time: usize) -> Self {
        Self { trial, time }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentMode {
    /// Move each candidate to the local maximum of the detection signal.
    #[default]
    LocalPeak,
    /// Merge candidates closer than `min_separation`, then align each group.
    PooledPeak,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionParams {
    pub detection_channel: usize,
    /// Threshold in multiples of the detection signal's standard deviation.
    pub threshold_ratio: f64,
    pub min_separation: usize,
    pub alignment_mode: AlignmentMode,
    pub peak_search_halfwidth: usize,
    pub max_events: Option<usize>,
}

impl DetectionParams {
    pub fn new(detection_channel: usize, threshold_ratio: f64) -> Self {
        Self {
            detection_channel,
            threshold_ratio,
            min_separation: 1,
            alignment_mode: AlignmentMode::LocalPeak,
            peak_search_halfwidth: 0,
            max_events: None,
        }
    }

    fn validate(&self, recording: &TimeSeriesEnsemble) -> Result<()> {
        recording.check_channel(self.detection_channel)?;
        if !(self.threshold_ratio.is_finite() && self.threshold_ratio > 0.0) {
            return Err(Error::param(
                "threshold_ratio",
                format!("must be positive, got {}", self.threshold_ratio),
            ));
        }
        if self.min_separation == 0 {
            return Err(Error::param("min_separation", "must be at least 1"));
        }
        if self.max_events == Some(0) {
            return Err(Error::param("max_events", "must be at least 1 when set"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochParams {
    /// Samples per epoch after the lag prefix.
    pub window_length: usize,
    /// Samples from the start of the window to the alignment point.
    pub alignment_offset: usize,
    /// Lag samples prepended to each epoch.
    pub model_order: usize,
    pub artifact_threshold: Option<f64>,
}

impl EpochParams {
    fn validate(&self) -> Result<()> {
        if self.window_length == 0 {
            return Err(Error::param("window_length", "must be at least 1"));
        }
        if self.alignment_offset >= self.window_length {
            return Err(Error::param(
                "alignment_offset",
                format!(
                    "{} not inside window of length {}",
                    self.alignment_offset, self.window_length
                ),
            ));
        }
        if self.model_order == 0 {
            return Err(Error::param("model_order", "must be at least 1"));
        }
        if let Some(th) = self.artifact_threshold {
            if !(th > 0.0) {
                return Err(Error::param("artifact_threshold", format!("must be positive, got {th}")));
            }
        }
        Ok(())
    }
}

/// Population standard deviation of `channel` pooled over all trials.
fn pooled_std(recording: &TimeSeriesEnsemble, channel: usize) -> f64 {
    let values = recording.data().index_axis(Axis(1), channel);
    let n = values.len() as f64;
    let mean = values.sum() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Upward crossings of `threshold_ratio * std` on the detection channel, in
/// ascending (trial, time) order. A crossing less than `min_separation`
/// samples after the previously retained one in the same trial is dropped.
pub fn detect_events(recording: &TimeSeriesEnsemble, params: &DetectionParams) -> Result<Vec<EventIndex>> {
    params.validate(recording)?;
    let sd = pooled_std(recording, params.detection_channel);
    if sd == 0.0 {
        return Err(Error::DegenerateSignal);
    }
    let threshold = params.threshold_ratio * sd;
    let mut events = Vec::new();
    for trial in 0..recording.n_trials() {
        let s = recording.series(trial, params.detection_channel);
        let mut last: Option<usize> = None;
        for t in 1..s.len() {
            if s[t - 1] < threshold && s[t] >= threshold {
                if last.is_some_and(|l| t - l < params.min_separation) {
                    continue;
                }
                last = Some(t);
                events.push(EventIndex::new(trial, t));
            }
        }
    }
    Ok(events)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AlignedEvents {
    pub events: Vec<EventIndex>,
    /// Candidates whose search window left the recording.
    pub dropped_at_boundary: usize,
    /// Candidates that landed on an already aligned event.
    pub merged: usize,
    /// Events removed by the `max_events` subsample.
    pub subsampled_out: usize,
}

/// Index of the first maximum of `s` on `[lo, hi]`.
fn argmax_earliest(s: &ndarray::ArrayView1<'_, f64>, lo: usize, hi: usize) -> usize {
    let mut best = lo;
    for i in lo + 1..=hi {
        if s[i] > s[best] {
            best = i;
        }
    }
    best
}

/// Repeats the windowed argmax until it stops moving. Each move either
/// raises the signal value or keeps it and moves left, so this terminates,
/// and a returned index is a fixed point. `None` when a window would leave
/// `[0, len)`.
fn climb_to_peak(s: &ndarray::ArrayView1<'_, f64>, start: usize, halfwidth: usize) -> Option<usize> {
    let len = s.len();
    let mut c = start;
    loop {
        if c < halfwidth || c + halfwidth >= len {
            return None;
        }
        let m = argmax_earliest(s, c - halfwidth, c + halfwidth);
        if m == c {
            return Some(c);
        }
        c = m;
    }
}

/// Refines candidate times to local peaks of the detection signal, removes
/// duplicates and optionally draws a seeded uniform subsample of at most
/// `max_events` events. Output is sorted by (trial, time).
pub fn align_events(
    recording: &TimeSeriesEnsemble,
    candidates: &[EventIndex],
    params: &DetectionParams,
    seed: u64,
) -> Result<AlignedEvents> {
    params.validate(recording)?;
    if candidates.is_empty() {
        return Err(Error::EmptyResult("no candidate events to align".into()));
    }
    if let Some(bad) = candidates
        .iter()
        .find(|e| e.trial >= recording.n_trials() || e.time >= recording.n_times())
    {
        return Err(Error::param("candidates", format!("{bad:?} outside the recording")));
    }
    let w = params.peak_search_halfwidth;
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();

    let seeds: Vec<EventIndex> = match params.alignment_mode {
        AlignmentMode::LocalPeak => sorted,
        AlignmentMode::PooledPeak => pool_candidates(recording, &sorted, params),
    };

    let mut out = AlignedEvents::default();
    let mut aligned = Vec::with_capacity(seeds.len());
    for e in seeds {
        let s = recording.series(e.trial, params.detection_channel);
        match climb_to_peak(&s, e.time, w) {
            Some(t) => aligned.push(EventIndex::new(e.trial, t)),
            None => out.dropped_at_boundary += 1,
        }
    }
    if out.dropped_at_boundary > 0 {
        log::warn!(
            "{} candidate event(s) dropped: peak search window leaves the recording",
            out.dropped_at_boundary
        );
    }
    aligned.sort_unstable();
    let before = aligned.len();
    aligned.dedup();
    out.merged = before - aligned.len();

    if let Some(max) = params.max_events {
        if aligned.len() > max {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked = rand::seq::index::sample(&mut rng, aligned.len(), max).into_vec();
            picked.sort_unstable();
            out.subsampled_out = aligned.len() - max;
            aligned = picked.into_iter().map(|i| aligned[i]).collect();
        }
    }
    if aligned.is_empty() {
        return Err(Error::EmptyResult("all candidate events were dropped during alignment".into()));
    }
    out.events = aligned;
    Ok(out)
}

/// Chains sorted candidates whose gap to the previous candidate is below
/// `min_separation` and represents each chain by its highest sample.
fn pool_candidates(
    recording: &TimeSeriesEnsemble,
    sorted: &[EventIndex],
    params: &DetectionParams,
) -> Vec<EventIndex> {
    let mut pooled = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let first = sorted[i];
        let mut j = i;
        while j + 1 < sorted.len()
            && sorted[j + 1].trial == first.trial
            && sorted[j + 1].time - sorted[j].time < params.min_separation
        {
            j += 1;
        }
        let s = recording.series(first.trial, params.detection_channel);
        let peak = argmax_earliest(&s, first.time, sorted[j].time);
        pooled.push(EventIndex::new(first.trial, peak));
        i = j + 1;
    }
    pooled
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshots {
    /// Shape `[n_events, channels, model_order + window_length]`.
    pub epochs: TimeSeriesEnsemble,
    /// Events that produced an epoch, in output order.
    pub events: Vec<EventIndex>,
    pub dropped_at_boundary: usize,
}

/// Cuts `[e - offset - p, e - offset + L)` around every event `e`. The
/// alignment sample lands at `time_axis_offset = p + offset`. Events whose
/// window leaves the recording are dropped and counted.
pub fn extract_snapshots(
    recording: &TimeSeriesEnsemble,
    events: &[EventIndex],
    params: &EpochParams,
) -> Result<Snapshots> {
    params.validate()?;
    let p = params.model_order;
    let span = p + params.window_length;
    let lead = p + params.alignment_offset;
    let n_t = recording.n_times();
    let kept: Vec<EventIndex> = events
        .iter()
        .copied()
        .filter(|e| e.trial < recording.n_trials() && e.time >= lead && e.time - lead + span <= n_t)
        .collect();
    let dropped = events.len() - kept.len();
    if kept.is_empty() {
        return Err(Error::EmptyResult(format!(
            "none of {} events leave room for a {span}-sample epoch",
            events.len()
        )));
    }
    let c = recording.n_channels();
    let data = Array3::from_shape_fn((kept.len(), c, span), |(i, ch, k)| {
        let e = kept[i];
        recording.sample(e.trial, ch, e.time - lead + k)
    });
    Ok(Snapshots {
        epochs: TimeSeriesEnsemble::peri_event(data, recording.sampling_rate(), lead)?,
        events: kept,
        dropped_at_boundary: dropped,
    })
}

/// Removes every epoch whose absolute amplitude reaches `threshold` on any
/// channel. The mask is `true` for kept epochs.
pub fn reject_artifacts(epochs: &TimeSeriesEnsemble, threshold: f64) -> Result<(TimeSeriesEnsemble, Vec<bool>)> {
    if !(threshold > 0.0) {
        return Err(Error::param("artifact_threshold", format!("must be positive, got {threshold}")));
    }
    let mask: Vec<bool> = epochs
        .data()
        .outer_iter()
        .map(|epoch| epoch.iter().all(|v| v.abs() < threshold))
        .collect();
    let keep: Vec<usize> = mask.iter().enumerate().filter(|(_, k)| **k).map(|(i, _)| i).collect();
    if keep.is_empty() {
        return Err(Error::EmptyResult(format!(
            "all {} epochs exceed the artifact threshold {threshold}",
            epochs.n_trials()
        )));
    }
    Ok((epochs.select_trials(&keep)?, mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(values: Vec<f64>) -> TimeSeriesEnsemble {
        TimeSeriesEnsemble::from_channels(&[values], 1.0).unwrap()
    }

    #[test]
    fn constant_signal_is_degenerate() {
        let rec = single(vec![0.0; 100]);
        assert!(matches!(
            detect_events(&rec, &DetectionParams::new(0, 2.0)),
            Err(Error::DegenerateSignal)
        ));
    }

    #[test]
    fn single_spike_is_detected() {
        let mut v = vec![0.0; 100];
        v[50] = 100.0;
        let rec = single(v);
        let ev = detect_events(&rec, &DetectionParams::new(0, 1.0)).unwrap();
        assert_eq!(ev, vec![EventIndex::new(0, 50)]);
    }

    #[test]
    fn refractory_period_suppresses_close_crossings() {
        let mut v = vec![0.0; 60];
        for t in [10, 13, 30] {
            v[t] = 10.0;
        }
        let rec = single(v);
        let mut params = DetectionParams::new(0, 1.0);
        params.min_separation = 5;
        let times: Vec<usize> = detect_events(&rec, &params).unwrap().iter().map(|e| e.time).collect();
        assert_eq!(times, vec![10, 30]);
    }

    #[test]
    fn moves_to_local_peak() {
        let mut v = vec![0.0; 100];
        v[48] = 1.0;
        v[49] = 2.0;
        v[50] = 5.0;
        v[51] = 3.0;
        let rec = single(v);
        let mut params = DetectionParams::new(0, 1.0);
        params.peak_search_halfwidth = 5;
        let out = align_events(&rec, &[EventIndex::new(0, 48)], &params, 0).unwrap();
        assert_eq!(out.events, vec![EventIndex::new(0, 50)]);
    }

    #[test]
    fn plateau_resolves_to_earliest() {
        let mut v = vec![0.0; 100];
        v[40..=45].fill(7.0);
        let rec = single(v);
        let mut params = DetectionParams::new(0, 1.0);
        params.peak_search_halfwidth = 3;
        let out = align_events(&rec, &[EventIndex::new(0, 44)], &params, 0).unwrap();
        assert_eq!(out.events, vec![EventIndex::new(0, 40)]);
    }

    #[test]
    fn boundary_candidates_are_dropped() {
        let rec = single((0..50).map(|t| (t as f64 * 0.7).sin()).collect());
        let mut params = DetectionParams::new(0, 1.0);
        params.peak_search_halfwidth = 5;
        let out = align_events(&rec, &[EventIndex::new(0, 2), EventIndex::new(0, 25)], &params, 0).unwrap();
        assert_eq!(out.dropped_at_boundary, 1);
        assert_eq!(out.events.len(), 1);
        assert!(align_events(&rec, &[EventIndex::new(0, 2)], &params, 0).is_err());
    }

    #[test]
    fn pooling_merges_nearby_candidates() {
        let mut v = vec![0.0; 100];
        v[20] = 1.0;
        v[22] = 4.0;
        v[24] = 2.0;
        v[70] = 3.0;
        let rec = single(v);
        let mut params = DetectionParams::new(0, 1.0);
        params.alignment_mode = AlignmentMode::PooledPeak;
        params.min_separation = 3;
        let cands = [20, 22, 24, 70].map(|t| EventIndex::new(0, t));
        let out = align_events(&rec, &cands, &params, 0).unwrap();
        assert_eq!(out.events, vec![EventIndex::new(0, 22), EventIndex::new(0, 70)]);
    }

    #[test]
    fn ramp_snapshot() {
        let rec = single((0..200).map(|t| t as f64).collect());
        let params = EpochParams {
            window_length: 4,
            alignment_offset: 2,
            model_order: 3,
            artifact_threshold: None,
        };
        let snap = extract_snapshots(&rec, &[EventIndex::new(0, 100), EventIndex::new(0, 1)], &params).unwrap();
        assert_eq!(snap.dropped_at_boundary, 1);
        let epoch: Vec<f64> = snap.epochs.series(0, 0).to_vec();
        assert_eq!(epoch, vec![95.0, 96.0, 97.0, 98.0, 99.0, 100.0, 101.0]);
        assert_eq!(snap.epochs.time_axis_offset(), Some(5));
        assert_eq!(snap.epochs.sample(0, 0, 5), 100.0);
    }

    #[test]
    fn no_surviving_snapshot_is_an_error() {
        let rec = single((0..20).map(|t| t as f64).collect());
        let params = EpochParams {
            window_length: 4,
            alignment_offset: 0,
            model_order: 3,
            artifact_threshold: None,
        };
        assert!(matches!(
            extract_snapshots(&rec, &[EventIndex::new(0, 1)], &params),
            Err(Error::EmptyResult(_))
        ));
    }

    #[test]
    fn artifact_rejection() {
        let mut data = Array3::from_elem((4, 2, 10), 0.5);
        data[[2, 1, 7]] = -10.0;
        let epochs = TimeSeriesEnsemble::peri_event(data, 1.0, 3).unwrap();
        let (kept, mask) = reject_artifacts(&epochs, 1.0).unwrap();
        assert_eq!(mask, vec![true, true, false, true]);
        assert_eq!(kept.n_trials(), 3);
        assert_eq!(kept.time_axis_offset(), Some(3));
        let (all, mask) = reject_artifacts(&epochs, 100.0).unwrap();
        assert_eq!(all, epochs);
        assert!(mask.iter().all(|&k| k));
        assert!(reject_artifacts(&epochs, 0.1).is_err());
    }
}

//! Brute-force reference implementations used as test oracles. They work on
//! plain nested `Vec`s and share no code with the library.

#![allow(dead_code, clippy::needless_range_loop)]

use ndarray::Array3;
use pericausal::events::{AlignmentMode, DetectionParams, EventIndex};
use pericausal::TimeSeriesEnsemble;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `[trial][channel][time]`
pub type Nested = Vec<Vec<Vec<f64>>>;

pub fn to_nested(ens: &TimeSeriesEnsemble) -> Nested {
    let (r, c, t) = ens.data().dim();
    (0..r)
        .map(|i| (0..c).map(|j| (0..t).map(|k| ens.sample(i, j, k)).collect()).collect())
        .collect()
}

pub fn from_nested(x: &Nested) -> TimeSeriesEnsemble {
    let (r, c, t) = (x.len(), x[0].len(), x[0][0].len());
    TimeSeriesEnsemble::new(Array3::from_shape_fn((r, c, t), |(i, j, k)| x[i][j][k]), 1.0).unwrap()
}

pub fn oracle_detect(x: &Nested, ch: usize, ratio: f64, min_sep: usize) -> Vec<(usize, usize)> {
    let all: Vec<f64> = x.iter().flat_map(|trial| trial[ch].iter().copied()).collect();
    let n = all.len() as f64;
    let mut mean = 0.0;
    for v in &all {
        mean += v;
    }
    mean /= n;
    let mut var = 0.0;
    for v in &all {
        var += (v - mean) * (v - mean);
    }
    let thr = ratio * (var / n).sqrt();
    let mut out = Vec::new();
    for (r, trial) in x.iter().enumerate() {
        let s = &trial[ch];
        let mut last: Option<usize> = None;
        for t in 1..s.len() {
            let crossing = s[t - 1] < thr && s[t] >= thr;
            let refractory = matches!(last, Some(l) if t - l < min_sep);
            if crossing && !refractory {
                out.push((r, t));
                last = Some(t);
            }
        }
    }
    out
}

/// Climb to the first maximum of the window around `c` until it stops
/// moving; `None` once a window leaves the series.
fn oracle_climb(s: &[f64], c: usize, w: usize) -> Option<usize> {
    if c < w || c + w >= s.len() {
        return None;
    }
    let window = &s[c - w..=c + w];
    let mut best = 0;
    for (i, v) in window.iter().enumerate() {
        if *v > window[best] {
            best = i;
        }
    }
    let next = c - w + best;
    if next == c {
        Some(c)
    } else {
        oracle_climb(s, next, w)
    }
}

/// Alignment without subsampling; returns (events, dropped, merged).
pub fn oracle_align(
    x: &Nested,
    candidates: &[(usize, usize)],
    ch: usize,
    w: usize,
    pooled: bool,
    min_sep: usize,
) -> (Vec<(usize, usize)>, usize, usize) {
    let mut sorted = candidates.to_vec();
    sorted.sort();
    let mut seeds = Vec::new();
    if pooled {
        let mut groups: Vec<Vec<(usize, usize)>> = Vec::new();
        for e in sorted {
            match groups.last_mut() {
                Some(g) if g.last().unwrap().0 == e.0 && e.1 - g.last().unwrap().1 < min_sep => g.push(e),
                _ => groups.push(vec![e]),
            }
        }
        for g in groups {
            let (r, lo, hi) = (g[0].0, g[0].1, g.last().unwrap().1);
            let s = &x[r][ch];
            let mut best = lo;
            for t in lo..=hi {
                if s[t] > s[best] {
                    best = t;
                }
            }
            seeds.push((r, best));
        }
    } else {
        seeds = sorted;
    }
    let mut dropped = 0;
    let mut aligned = Vec::new();
    for (r, t) in seeds {
        match oracle_climb(&x[r][ch], t, w) {
            Some(a) => aligned.push((r, a)),
            None => dropped += 1,
        }
    }
    aligned.sort();
    let before = aligned.len();
    aligned.dedup();
    let merged = before - aligned.len();
    (aligned, dropped, merged)
}

/// Epochs for events whose `[e - offset - p, e - offset + L)` window fits.
pub fn oracle_extract(
    x: &Nested,
    events: &[(usize, usize)],
    p: usize,
    offset: usize,
    len: usize,
) -> (Nested, Vec<(usize, usize)>) {
    let mut epochs = Vec::new();
    let mut kept = Vec::new();
    for &(r, e) in events {
        let start = e as i64 - offset as i64 - p as i64;
        let end = start + (p + len) as i64;
        if start < 0 || end > x[r][0].len() as i64 {
            continue;
        }
        let epoch: Vec<Vec<f64>> = x[r]
            .iter()
            .map(|ch| ch[start as usize..end as usize].to_vec())
            .collect();
        epochs.push(epoch);
        kept.push((r, e));
    }
    (epochs, kept)
}

pub fn oracle_reject(epochs: &Nested, threshold: f64) -> Vec<bool> {
    epochs
        .iter()
        .map(|epoch| {
            let mut peak: f64 = 0.0;
            for ch in epoch {
                for v in ch {
                    peak = peak.max(v.abs());
                }
            }
            peak < threshold
        })
        .collect()
}

/// Random recording: coarse discrete noise (so ties are common) plus
/// positive plateaus on channel 0.
pub fn random_recording(rng: &mut ChaCha8Rng) -> Nested {
    let r = rng.random_range(1..=3);
    let c = rng.random_range(1..=3);
    let t = rng.random_range(30..=200);
    let mut x: Nested = (0..r)
        .map(|_| {
            (0..c)
                .map(|_| (0..t).map(|_| rng.random_range(-3..=3) as f64 * 0.4).collect())
                .collect()
        })
        .collect();
    for trial in x.iter_mut() {
        for _ in 0..rng.random_range(0..8) {
            let at = rng.random_range(0..t);
            let height = rng.random_range(2.0..6.0);
            let width = rng.random_range(1..5);
            for k in at..(at + width).min(t) {
                trial[0][k] = height;
            }
        }
    }
    x
}

pub fn random_params(rng: &mut ChaCha8Rng, n_channels: usize) -> DetectionParams {
    DetectionParams {
        detection_channel: rng.random_range(0..n_channels),
        threshold_ratio: rng.random_range(0.5..3.0),
        min_separation: rng.random_range(1..15),
        alignment_mode: if rng.random_bool(0.5) {
            AlignmentMode::LocalPeak
        } else {
            AlignmentMode::PooledPeak
        },
        peak_search_halfwidth: rng.random_range(0..6),
        max_events: None,
    }
}

pub fn pairs(events: &[EventIndex]) -> Vec<(usize, usize)> {
    events.iter().map(|e| (e.trial, e.time)).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Ordinary least squares through the normal equations, solved by Gaussian
/// elimination with partial pivoting. Returns (beta, rss).
pub fn oracle_ols(rows: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, f64) {
    let k = rows[0].len();
    let mut a = vec![vec![0.0; k + 1]; k];
    for (row, &yi) in rows.iter().zip(y) {
        for i in 0..k {
            for j in 0..k {
                a[i][j] += row[i] * row[j];
            }
            a[i][k] += row[i] * yi;
        }
    }
    for col in 0..k {
        let piv = (col..k).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        for r in 0..k {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=k {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    let beta: Vec<f64> = (0..k).map(|i| a[i][k] / a[i][i]).collect();
    let rss = rows
        .iter()
        .zip(y)
        .map(|(row, yi)| {
            let fit: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
            (yi - fit).powi(2)
        })
        .sum();
    (beta, rss)
}

/// Plain-loop mean and unbiased covariance of observation rows.
pub fn oracle_moments(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = rows.len() as f64;
    let k = rows[0].len();
    let mut mean = vec![0.0; k];
    for row in rows {
        for i in 0..k {
            mean[i] += row[i] / n;
        }
    }
    let mut cov = vec![vec![0.0; k]; k];
    for row in rows {
        for i in 0..k {
            for j in 0..k {
                cov[i][j] += (row[i] - mean[i]) * (row[j] - mean[j]) / (n - 1.0);
            }
        }
    }
    (mean, cov)
}

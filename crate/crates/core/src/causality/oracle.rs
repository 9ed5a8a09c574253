//! Sampling estimate of the interventional KL divergence, used to check the
//! closed-form DCS and rDCS values.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Direction;
use crate::error::{Error, Result};
use crate::estimation::{MomentsAt, ReferenceStats, TimePointFit};
use crate::linalg::{psd_quadratic_form, psd_sqrt};

/// Distribution the cause's lags are replaced with.
#[derive(Debug, Clone, Copy)]
pub enum Intervention<'a> {
    /// An independent draw from the cause's current marginal (DCS).
    CurrentMarginal,
    /// A draw from the baseline marginal (rDCS).
    ReferenceMarginal(&'a ReferenceStats),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

fn gaussian_kl(mean_p: f64, var_p: f64, mean_q: f64, var_q: f64) -> f64 {
    let diff = mean_p - mean_q;
    0.5 * (var_q / var_p).ln() + (var_p + diff * diff) / (2.0 * var_q) - 0.5
}

/// Averages `KL(p(effect | past) || p(effect | own past, do(cause lags)))`
/// over `n_samples` joint lag vectors drawn from `N(moments.mean,
/// moments.cov)`. The intervened density integrates the cause's lags out
/// analytically, which makes it Gaussian with mean shifted to the
/// intervention mean and variance inflated by `b' C b`.
pub fn monte_carlo_kl(
    fit: &TimePointFit,
    moments: &MomentsAt,
    direction: Direction,
    intervention: Intervention<'_>,
    n_samples: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    if n_samples < 100 {
        return Err(Error::param("n_samples", "use at least 100 samples"));
    }
    let p = moments.order();
    let eq = &fit.equations[direction.effect()];
    if eq.own.len() != p {
        return Err(Error::Dimension(format!("fit has order {}, moments {p}", eq.own.len())));
    }
    let variance = eq.residual_variance;
    if !(variance > 0.0) {
        return Err(Error::param("residual_variance", "must be positive"));
    }
    let (int_mean, int_cov) = match intervention {
        Intervention::CurrentMarginal => (
            moments.marginal_mean(direction.cause()),
            moments.marginal_cov(direction.cause()),
        ),
        Intervention::ReferenceMarginal(r) => {
            if r.direction != direction || r.mean.len() != p {
                return Err(Error::param("reference", "does not match direction or order"));
            }
            (r.mean.clone(), r.cov.clone())
        }
    };
    let b = eq.cross_vector();
    let a = DVector::from_column_slice(&eq.own);
    let int_var = variance + psd_quadratic_form(&b, &int_cov);
    let int_shift = b.dot(&int_mean);

    let root = psd_sqrt(&moments.cov);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ep, cp) = (direction.effect() * p, direction.cause() * p);
    let (mut mean, mut m2) = (0.0, 0.0);
    for i in 0..n_samples {
        let z = DVector::from_fn(2 * p, |_, _| StandardNormal.sample(&mut rng));
        let x = &moments.mean + &root * z;
        let own_part = eq.intercept + a.dot(&x.rows(ep, p));
        let kl = gaussian_kl(own_part + b.dot(&x.rows(cp, p)), variance, own_part + int_shift, int_var);
        let delta = kl - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (kl - mean);
    }
    let sd = (m2 / (n_samples - 1) as f64).sqrt();
    Ok(MonteCarloEstimate {
        mean,
        std_error: sd / (n_samples as f64).sqrt(),
        n_samples,
    })
}

//! Gaussian beliefs over an arm's mean trace and their updates from
//! partially observed traces.
//!
//! The model is `z̄ ~ N(μ, Σ)` with traces `z_m = z̄ + ε_m`, `ε_m ~ N(0, V)`.
//! Observing the first `ℓ` elements of a trace conditions the belief with
//!
//! ```text
//! A  = Σ[:, :ℓ] (Σ[:ℓ, :ℓ] + V[:ℓ, :ℓ])⁻¹
//! μ' = μ + A (z[:ℓ] − μ[:ℓ])
//! Σ' = Σ − A Σ[:ℓ, :]
//! ```
//!
//! Every function here is pure: inputs are never mutated.

mod cohort;
mod prior;
mod trace;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub use cohort::{CohortFilter, GroupStat};
pub use prior::{format_real, PriorModel};
pub use trace::Trace;

use crate::error::{Error, Result};
use crate::linalg::{head, leading_block, solve_spd, symmetrize_in_place};

/// Posterior `N(mean, cov)` over the mean trace z̄.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                found: cov.nrows(),
            });
        }
        Ok(Self { mean, cov })
    }

    /// The prior belief `N(μ, Σ)`.
    pub fn from_prior(prior: &PriorModel) -> Self {
        Self {
            mean: prior.mu().clone(),
            cov: prior.sigma().clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Largest element-wise difference to another belief, over means and
    /// covariances.
    pub fn max_abs_diff(&self, other: &GaussianBelief) -> f64 {
        let dm = (&self.mean - &other.mean).abs().max();
        let dc = (&self.cov - &other.cov).abs().max();
        dm.max(dc)
    }
}

/// Belief `N(mean, var)` over a scalar mean reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBelief {
    pub mean: f64,
    pub var: f64,
}

/// Conditions `belief` on `obs`, an observation of its leading `obs.len()`
/// coordinates corrupted by Gaussian noise with covariance `noise`.
fn condition_prefix(
    belief: &GaussianBelief,
    obs: &DVector<f64>,
    noise: &DMatrix<f64>,
) -> Result<GaussianBelief> {
    let l = obs.len();
    if l == 0 {
        return Ok(belief.clone());
    }
    let k = belief.dim();
    let gram = leading_block(&belief.cov, l) + noise;
    // cross = Σ[:ℓ, :K]; solving gram · X = cross gives X = Aᵀ.
    let cross = belief.cov.rows(0, l).into_owned();
    let gain_t = solve_spd(&gram, &cross)?;
    let innovation = obs - head(&belief.mean, l);
    let mean = &belief.mean + gain_t.transpose() * innovation;
    let mut cov = &belief.cov - gain_t.transpose() * &cross;
    symmetrize_in_place(&mut cov);
    debug_assert_eq!(cov.nrows(), k);
    Ok(GaussianBelief { mean, cov })
}

fn check_dims(belief: &GaussianBelief, prior: &PriorModel, trace_len: usize) -> Result<()> {
    let k = prior.dim();
    if belief.dim() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: belief.dim(),
        });
    }
    if trace_len != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: trace_len,
        });
    }
    Ok(())
}

/// Folds one partially observed trace into the belief.
pub fn condition_on_trace(
    belief: &GaussianBelief,
    prior: &PriorModel,
    trace: &Trace,
) -> Result<GaussianBelief> {
    check_dims(belief, prior, trace.len())?;
    let l = trace.observed_len();
    if l == 0 {
        return Ok(belief.clone());
    }
    let obs = DVector::from_column_slice(trace.observed());
    condition_prefix(belief, &obs, &leading_block(prior.v_noise(), l))
}

/// Folds `count` traces, each observed to exactly `observed_len` elements and
/// with element-wise average `mean_trace`, into the belief in one step.
///
/// The average of `count` traces is a sufficient statistic for z̄, observed
/// with noise `V[:ℓ, :ℓ] / count`. `mean_trace` may have length `ℓ` or `K`;
/// only its first `ℓ` entries are read.
pub fn condition_on_group(
    belief: &GaussianBelief,
    prior: &PriorModel,
    mean_trace: &[f64],
    observed_len: usize,
    count: usize,
) -> Result<GaussianBelief> {
    let k = prior.dim();
    check_dims(belief, prior, k)?;
    if observed_len > k || mean_trace.len() < observed_len {
        return Err(Error::DimensionMismatch {
            expected: observed_len,
            found: mean_trace.len().min(k),
        });
    }
    if count == 0 {
        return Err(Error::InvalidTrace("group must contain at least one trace".into()));
    }
    if observed_len == 0 {
        return Ok(belief.clone());
    }
    let obs = DVector::from_column_slice(&mean_trace[..observed_len]);
    let noise = leading_block(prior.v_noise(), observed_len) / count as f64;
    condition_prefix(belief, &obs, &noise)
}

/// Posterior over z̄ given a dataset of partially observed traces.
///
/// Traces are grouped by observed length and each group is folded in with
/// [`condition_on_group`], in increasing order of length. Traces with nothing
/// observed are skipped.
pub fn posterior_from_dataset(prior: &PriorModel, dataset: &[Trace]) -> Result<GaussianBelief> {
    let k = prior.dim();
    let mut groups: BTreeMap<usize, (usize, Vec<f64>)> = BTreeMap::new();
    for trace in dataset {
        if trace.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: trace.len(),
            });
        }
        let l = trace.observed_len();
        if l == 0 {
            continue;
        }
        let entry = groups.entry(l).or_insert_with(|| (0, vec![0.0; l]));
        entry.0 += 1;
        for (acc, v) in entry.1.iter_mut().zip(trace.observed()) {
            *acc += v;
        }
    }
    let mut belief = GaussianBelief::from_prior(prior);
    for (l, (count, mut sum)) in groups {
        sum.iter_mut().for_each(|s| *s /= count as f64);
        belief = condition_on_group(&belief, prior, &sum, l, count)?;
    }
    Ok(belief)
}

/// Reference posterior computed by conditioning the joint Gaussian over
/// `(z̄, every observed element)` once.
///
/// Cost grows with the cube of the number of observed elements; intended
/// for checking [`posterior_from_dataset`] on small instances.
pub fn joint_conditioning_oracle(prior: &PriorModel, dataset: &[Trace]) -> Result<GaussianBelief> {
    let k = prior.dim();
    // (trace index, coordinate) of every observed element
    let mut index: Vec<(usize, usize)> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for (m, trace) in dataset.iter().enumerate() {
        if trace.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: trace.len(),
            });
        }
        for (i, &v) in trace.observed().iter().enumerate() {
            index.push((m, i));
            values.push(v);
        }
    }
    let n = index.len();
    if n == 0 {
        return Ok(GaussianBelief::from_prior(prior));
    }
    let sigma = prior.sigma();
    let v = prior.v_noise();
    let obs_cov = DMatrix::from_fn(n, n, |a, b| {
        let (ma, ia) = index[a];
        let (mb, ib) = index[b];
        let noise = if ma == mb { v[(ia, ib)] } else { 0.0 };
        sigma[(ia, ib)] + noise
    });
    let cross = DMatrix::from_fn(k, n, |row, b| sigma[(row, index[b].1)]);
    let innovation = DVector::from_fn(n, |a, _| values[a] - prior.mu()[index[a].1]);

    let lu = obs_cov.lu();
    let weighted_innovation = lu
        .solve(&innovation)
        .ok_or(Error::NonInvertible { max_jitter: 0.0 })?;
    let weighted_cross = lu
        .solve(&cross.transpose())
        .ok_or(Error::NonInvertible { max_jitter: 0.0 })?;
    let mean = prior.mu() + &cross * weighted_innovation;
    let mut cov = sigma - &cross * weighted_cross;
    symmetrize_in_place(&mut cov);
    Ok(GaussianBelief { mean, cov })
}

/// Belief over the scalar reward `wᵀ z̄`.
pub fn project_reward(belief: &GaussianBelief, weights: &DVector<f64>) -> Result<RewardBelief> {
    if weights.len() != belief.dim() {
        return Err(Error::DimensionMismatch {
            expected: belief.dim(),
            found: weights.len(),
        });
    }
    let mean = weights.dot(&belief.mean);
    let var = weights.dot(&(&belief.cov * weights));
    Ok(RewardBelief {
        mean,
        var: clamp_variance(var),
    })
}

/// Rounds tiny negative variances from cancellation up to zero.
pub(crate) fn clamp_variance(var: f64) -> f64 {
    if (-1e-12..0.0).contains(&var) {
        0.0
    } else {
        var.max(0.0)
    }
}

/// One draw from `N(rb.mean, rb.var)`.
pub fn sample_reward<R: Rng + ?Sized>(rb: &RewardBelief, rng: &mut R) -> f64 {
    let xi: f64 = rng.sample(StandardNormal);
    rb.mean + rb.var.sqrt() * xi
}

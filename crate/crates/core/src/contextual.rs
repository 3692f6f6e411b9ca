//! Gaussian belief over a `d × K` coefficient matrix `Θ`, where a unit with
//! context `x ∈ ℝᵈ` has mean trace `z̄(x) = Σ_j x_j Θ_j`.
//!
//! `vec(Θ)` stacks the rows `Θ_1, …, Θ_d`, so block `j` (entries
//! `jK..(j+1)K`) holds the coefficients of context coordinate `j`. Under this
//! layout a trace observed to length `ℓ` is a noisy view of
//! `H vec(Θ)` with `H = (xᵀ ⊗ I_K)[:ℓ, :]`, and the update is ordinary
//! linear-Gaussian conditioning:
//!
//! ```text
//! S  = H Σ Hᵀ + V[:ℓ, :ℓ]
//! μ' = μ + Σ Hᵀ S⁻¹ (z[:ℓ] − H μ)
//! Σ' = Σ − Σ Hᵀ S⁻¹ H Σ
//! ```
//!
//! With `d = 1` and `x = (1)` this is exactly the non-contextual filter.

use nalgebra::{DMatrix, DVector};

use crate::belief::{clamp_variance, RewardBelief, Trace};
use crate::error::{Error, Result};
use crate::linalg::{leading_block, solve_spd, symmetrize_in_place};

#[derive(Debug, Clone, PartialEq)]
pub struct ContextualBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    d: usize,
    k: usize,
}

impl ContextualBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, d: usize, k: usize) -> Result<Self> {
        let n = d * k;
        if d == 0 || k == 0 {
            return Err(Error::InconsistentDimensions("context and trace dimensions must be positive".into()));
        }
        if mean.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: mean.len(),
            });
        }
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: cov.nrows(),
            });
        }
        Ok(Self { mean, cov, d, k })
    }

    /// Every context coordinate gets an independent copy of the base prior
    /// `N(mu, sigma)`.
    pub fn independent(mu: &DVector<f64>, sigma: &DMatrix<f64>, d: usize) -> Result<Self> {
        let k = mu.len();
        let mut mean = DVector::zeros(d * k);
        let mut cov = DMatrix::zeros(d * k, d * k);
        for j in 0..d {
            mean.rows_mut(j * k, k).copy_from(mu);
            cov.view_mut((j * k, j * k), (k, k)).copy_from(sigma);
        }
        Self::new(mean, cov, d, k)
    }

    pub fn context_dim(&self) -> usize {
        self.d
    }

    pub fn trace_len(&self) -> usize {
        self.k
    }

    fn check_context(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: x.len(),
            });
        }
        Ok(())
    }
}

/// Observation operator `(xᵀ ⊗ I_K)[:ℓ, :]`.
pub fn observation_operator(x: &[f64], k: usize, observed_len: usize) -> DMatrix<f64> {
    let d = x.len();
    let mut h = DMatrix::zeros(observed_len, d * k);
    for (j, &xj) in x.iter().enumerate() {
        for i in 0..observed_len {
            h[(i, j * k + i)] = xj;
        }
    }
    h
}

/// Conditions the belief on one trace observed in context `x`.
pub fn contextual_update(
    belief: &ContextualBelief,
    x: &[f64],
    trace: &Trace,
    v_noise: &DMatrix<f64>,
) -> Result<ContextualBelief> {
    belief.check_context(x)?;
    let k = belief.k;
    if trace.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: trace.len(),
        });
    }
    if v_noise.nrows() != k || v_noise.ncols() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: v_noise.nrows(),
        });
    }
    let l = trace.observed_len();
    if l == 0 {
        return Ok(belief.clone());
    }
    let h = observation_operator(x, k, l);
    let h_sigma = &h * &belief.cov;
    let s = &h_sigma * h.transpose() + leading_block(v_noise, l);
    // S⁻¹ H Σ, so that A = Σ Hᵀ S⁻¹ is its transpose
    let gain_t = solve_spd(&s, &h_sigma)?;
    let z = DVector::from_column_slice(trace.observed());
    let innovation = z - &h * &belief.mean;
    let mean = &belief.mean + gain_t.transpose() * innovation;
    let mut cov = &belief.cov - h_sigma.transpose() * &gain_t;
    symmetrize_in_place(&mut cov);
    Ok(ContextualBelief {
        mean,
        cov,
        d: belief.d,
        k,
    })
}

/// Belief over the reward `wᵀ z̄(x)` in context `x`.
pub fn contextual_reward(belief: &ContextualBelief, x: &[f64], weights: &DVector<f64>) -> Result<RewardBelief> {
    belief.check_context(x)?;
    if weights.len() != belief.k {
        return Err(Error::DimensionMismatch {
            expected: belief.k,
            found: weights.len(),
        });
    }
    // g = x ⊗ w
    let k = belief.k;
    let mut g = DVector::zeros(belief.d * k);
    for (j, &xj) in x.iter().enumerate() {
        g.rows_mut(j * k, k).copy_from(&(weights * xj));
    }
    Ok(RewardBelief {
        mean: g.dot(&belief.mean),
        var: clamp_variance(g.dot(&(&belief.cov * &g))),
    })
}

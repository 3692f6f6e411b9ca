//! Information-form evaluation of the same posterior as
//! [`posterior_from_dataset`](super::posterior_from_dataset), for callers
//! that refresh many beliefs per round.
//!
//! A group of `M` traces observed to length `ℓ` with element sum `s`
//! contributes precision `M · V[:ℓ,:ℓ]⁻¹` and information `V[:ℓ,:ℓ]⁻¹ s` on
//! the leading `ℓ` coordinates of z̄. With `L` the longest observed prefix,
//! `Λ`, `η` the accumulated `L × L` precision and `L`-vector information,
//!
//! ```text
//! μ' = μ + Σ[:, :L] (Λ Σ[:L, :L] + I)⁻¹ (η − Λ μ[:L])
//! Σ' = Σ − Σ[:, :L] (Λ Σ[:L, :L] + I)⁻¹ Λ Σ[:L, :]
//! ```
//!
//! which needs one `L × L` factorization per refresh regardless of how many
//! groups there are. The per-length noise precisions are computed once.
//! Unlike the covariance form, this requires `V` to be invertible.

use nalgebra::{DMatrix, DVector};

use super::{clamp_variance, GaussianBelief, PriorModel, RewardBelief};
use crate::error::{Error, Result};
use crate::linalg::{inverse_spd, leading_block, symmetrize_in_place};

/// Sufficient statistics of the traces that share one observed length.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStat {
    pub observed_len: usize,
    pub count: usize,
    /// Element-wise sum of the group's revealed prefixes, length `observed_len`.
    pub sum: Vec<f64>,
}

/// Prior-specific precomputation for fast posterior refreshes.
#[derive(Debug, Clone)]
pub struct CohortFilter {
    prior: PriorModel,
    /// `noise_precision[ℓ - 1] = V[:ℓ, :ℓ]⁻¹`
    noise_precision: Vec<DMatrix<f64>>,
}

struct Solved {
    longest: usize,
    precision: DMatrix<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    info_residual: DVector<f64>,
}

impl CohortFilter {
    pub fn new(prior: &PriorModel) -> Result<Self> {
        let noise_precision = (1..=prior.dim())
            .map(|l| inverse_spd(&leading_block(prior.v_noise(), l)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            prior: prior.clone(),
            noise_precision,
        })
    }

    pub fn prior(&self) -> &PriorModel {
        &self.prior
    }

    fn solve<'a, I>(&self, groups: I) -> Result<Option<Solved>>
    where
        I: IntoIterator<Item = &'a GroupStat> + Clone,
    {
        let k = self.prior.dim();
        let longest = groups
            .clone()
            .into_iter()
            .filter(|g| g.count > 0)
            .map(|g| g.observed_len)
            .max()
            .unwrap_or(0);
        if longest == 0 {
            return Ok(None);
        }
        if longest > k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: longest,
            });
        }
        let mut precision = DMatrix::<f64>::zeros(longest, longest);
        let mut info = DVector::<f64>::zeros(longest);
        for g in groups.into_iter().filter(|g| g.count > 0 && g.observed_len > 0) {
            let l = g.observed_len;
            if g.sum.len() != l {
                return Err(Error::DimensionMismatch {
                    expected: l,
                    found: g.sum.len(),
                });
            }
            let p = &self.noise_precision[l - 1];
            let mut block = precision.view_mut((0, 0), (l, l));
            block += p * g.count as f64;
            let s = DVector::from_column_slice(&g.sum);
            let mut head = info.rows_mut(0, l);
            head.gemv(1.0, p, &s, 1.0);
        }
        let sigma_ll = leading_block(self.prior.sigma(), longest);
        let system = &precision * &sigma_ll + DMatrix::identity(longest, longest);
        let mu_l = self.prior.mu().rows(0, longest).into_owned();
        let info_residual = info - &precision * mu_l;
        Ok(Some(Solved {
            longest,
            precision,
            lu: system.lu(),
            info_residual,
        }))
    }

    /// Full posterior over z̄.
    pub fn posterior<'a, I>(&self, groups: I) -> Result<GaussianBelief>
    where
        I: IntoIterator<Item = &'a GroupStat> + Clone,
    {
        let Some(s) = self.solve(groups)? else {
            return Ok(GaussianBelief::from_prior(&self.prior));
        };
        let sigma = self.prior.sigma();
        let sigma_kl = sigma.columns(0, s.longest).into_owned();
        let a = s.lu.solve(&s.info_residual).ok_or(Error::NonInvertible { max_jitter: 0.0 })?;
        let rhs = &s.precision * sigma_kl.transpose();
        let b = s.lu.solve(&rhs).ok_or(Error::NonInvertible { max_jitter: 0.0 })?;
        let mean = self.prior.mu() + &sigma_kl * a;
        let mut cov = sigma - &sigma_kl * b;
        symmetrize_in_place(&mut cov);
        Ok(GaussianBelief { mean, cov })
    }

    /// Posterior belief over `wᵀ z̄`, without forming the full covariance.
    pub fn reward_belief<'a, I>(&self, groups: I, weights: &DVector<f64>) -> Result<RewardBelief>
    where
        I: IntoIterator<Item = &'a GroupStat> + Clone,
    {
        let k = self.prior.dim();
        if weights.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: weights.len(),
            });
        }
        let sigma_w = self.prior.sigma() * weights;
        let prior_mean = weights.dot(self.prior.mu());
        let prior_var = weights.dot(&sigma_w);
        let Some(s) = self.solve(groups)? else {
            return Ok(RewardBelief {
                mean: prior_mean,
                var: clamp_variance(prior_var),
            });
        };
        let head = sigma_w.rows(0, s.longest).into_owned();
        let a = s.lu.solve(&s.info_residual).ok_or(Error::NonInvertible { max_jitter: 0.0 })?;
        let b = s
            .lu
            .solve(&(&s.precision * &head))
            .ok_or(Error::NonInvertible { max_jitter: 0.0 })?;
        Ok(RewardBelief {
            mean: prior_mean + head.dot(&a),
            var: clamp_variance(prior_var - head.dot(&b)),
        })
    }
}

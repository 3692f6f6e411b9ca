//! Meta-learning of the trace model from historical shows: empirical prior
//! and noise covariances, regression weights for surrogate rewards, and
//! polynomial trace augmentation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::{PriorModel, Trace};
use crate::error::{Error, Result};
use crate::linalg::solve_spd;

pub use crate::linalg::psd_repair;

/// Ridge penalty used when the caller has no better choice.
pub const DEFAULT_RIDGE: f64 = 1e-6;

/// Historical traces of one show, optionally with per-trace regression
/// targets.
#[derive(Debug, Clone, PartialEq)]
pub struct ShowHistory {
    pub show_id: String,
    pub traces: Vec<Trace>,
    pub targets: Option<Vec<f64>>,
}

impl ShowHistory {
    pub fn new(show_id: impl Into<String>, traces: Vec<Trace>, targets: Option<Vec<f64>>) -> Result<Self> {
        let show_id = show_id.into();
        if let Some(bad) = traces.iter().find(|t| !t.is_fully_observed()) {
            return Err(Error::InvalidTrace(format!(
                "show `{show_id}`: historical trace observed to {} of {}",
                bad.observed_len(),
                bad.len()
            )));
        }
        if let Some(y) = &targets {
            if y.len() != traces.len() {
                return Err(Error::InconsistentDimensions(format!(
                    "show `{show_id}` has {} traces but {} targets",
                    traces.len(),
                    y.len()
                )));
            }
        }
        Ok(Self {
            show_id,
            traces,
            targets,
        })
    }

    /// Trace length, or `None` for an empty history.
    pub fn dim(&self) -> Option<usize> {
        self.traces.first().map(Trace::len)
    }
}

/// Empirical mean trace and within-show noise covariance of one show.
#[derive(Debug, Clone, PartialEq)]
pub struct ShowStats {
    pub mean_trace: DVector<f64>,
    pub noise_cov: DMatrix<f64>,
    pub count: usize,
}

/// Mean trace `ẑ = M⁻¹ Σ z` and covariance `M⁻¹ Σ (z − ẑ)(z − ẑ)ᵀ`.
pub fn show_stats(history: &ShowHistory) -> Result<ShowStats> {
    let Some(k) = history.dim() else {
        return Err(Error::EmptyHistory {
            show_id: history.show_id.clone(),
        });
    };
    let m = history.traces.len();
    let mut data = DMatrix::<f64>::zeros(m, k);
    for (row, trace) in history.traces.iter().enumerate() {
        if trace.len() != k {
            return Err(Error::InconsistentDimensions(format!(
                "show `{}` mixes trace lengths {k} and {}",
                history.show_id,
                trace.len()
            )));
        }
        data.row_mut(row).copy_from_slice(trace.observed());
    }
    let mean_trace = data.row_mean().transpose();
    for mut row in data.row_iter_mut() {
        row -= mean_trace.transpose();
    }
    let noise_cov = data.tr_mul(&data) / m as f64;
    Ok(ShowStats {
        mean_trace,
        noise_cov: psd_repair(&noise_cov),
        count: m,
    })
}

/// Fits `μ`, `Σ` and `V` as unweighted averages over shows of the per-show
/// statistics, and packages them with the given delays and weights.
///
/// Shows are reduced in `show_id` order so the result does not depend on the
/// input order.
pub fn fit_prior(histories: &[ShowHistory], delays: Vec<u32>, weights: DVector<f64>) -> Result<PriorModel> {
    if histories.len() < 2 {
        return Err(Error::TooFewShows {
            found: histories.len(),
        });
    }
    let mut ordered: Vec<&ShowHistory> = histories.iter().collect();
    ordered.sort_by(|a, b| a.show_id.cmp(&b.show_id));

    let stats = ordered
        .par_iter()
        .map(|h| show_stats(h))
        .collect::<Result<Vec<_>>>()?;
    let k = stats[0].mean_trace.len();
    if let Some((h, s)) = ordered.iter().zip(&stats).find(|(_, s)| s.mean_trace.len() != k) {
        return Err(Error::InconsistentDimensions(format!(
            "show `{}` has trace length {}, expected {k}",
            h.show_id,
            s.mean_trace.len()
        )));
    }

    let n = stats.len() as f64;
    let mut mu = DVector::<f64>::zeros(k);
    let mut v = DMatrix::<f64>::zeros(k, k);
    for s in &stats {
        mu += &s.mean_trace;
        v += &s.noise_cov;
    }
    mu /= n;
    v /= n;
    let mut sigma = DMatrix::<f64>::zeros(k, k);
    for s in &stats {
        let d = &mu - &s.mean_trace;
        sigma.ger(1.0, &d, &d, 1.0);
    }
    sigma /= n;

    PriorModel::new(mu, psd_repair(&sigma), psd_repair(&v), weights, delays)
}

/// Least-squares weights `argmin_w Σ (y − wᵀz)² + ridge ‖w‖²` over every
/// trace of every show, solved through the normal equations.
pub fn fit_weights(histories: &[ShowHistory], ridge: f64) -> Result<DVector<f64>> {
    let k = histories
        .iter()
        .find_map(ShowHistory::dim)
        .ok_or(Error::TooFewShows { found: 0 })?;
    let mut gram = DMatrix::<f64>::zeros(k, k);
    let mut moment = DVector::<f64>::zeros(k);
    let mut total = 0usize;
    for h in histories {
        let targets = h.targets.as_ref().ok_or_else(|| Error::MissingTargets {
            show_id: h.show_id.clone(),
        })?;
        for (trace, &y) in h.traces.iter().zip(targets) {
            if trace.len() != k {
                return Err(Error::InconsistentDimensions(format!(
                    "show `{}` has trace length {}, expected {k}",
                    h.show_id,
                    trace.len()
                )));
            }
            let z = DVector::from_column_slice(trace.observed());
            gram.ger(1.0, &z, &z, 1.0);
            moment.axpy(y, &z, 1.0);
            total += 1;
        }
    }
    if ridge <= 0.0 {
        let rank = numerical_rank(&gram);
        if rank < k || total < k {
            return Err(Error::Underdetermined { rank, dim: k });
        }
    }
    for i in 0..k {
        gram[(i, i)] += ridge.max(0.0);
    }
    let w = solve_spd(&gram, &DMatrix::from_column_slice(k, 1, moment.as_slice()))?;
    Ok(w.column(0).into_owned())
}

fn numerical_rank(gram: &DMatrix<f64>) -> usize {
    let eig = SymmetricEigen::new(gram.clone());
    let top = eig.eigenvalues.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    if top == 0.0 {
        return 0;
    }
    let tol = top * gram.nrows() as f64 * 1e-12;
    eig.eigenvalues.iter().filter(|&&l| l > tol).count()
}

/// A monomial of degree at most two over trace coordinates (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Feature {
    Coord(usize),
    Square(usize),
    Product(usize, usize),
}

impl Feature {
    fn coords(self) -> (usize, usize) {
        match self {
            Feature::Coord(i) | Feature::Square(i) => (i, i),
            Feature::Product(i, j) => (i, j),
        }
    }

    /// Largest coordinate the feature depends on.
    pub fn latest_coord(self) -> usize {
        let (i, j) = self.coords();
        i.max(j)
    }

    fn eval(self, z: &[f64]) -> f64 {
        match self {
            Feature::Coord(i) => z[i],
            Feature::Square(i) => z[i] * z[i],
            Feature::Product(i, j) => z[i] * z[j],
        }
    }
}

/// Ordered list of features making up an augmented trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec(pub Vec<Feature>);

impl FeatureSpec {
    pub fn identity(k: usize) -> Self {
        Self((0..k).map(Feature::Coord).collect())
    }

    /// Coordinates, then squares, then pairwise products `z_i z_j` (`i < j`).
    pub fn quadratic(k: usize) -> Self {
        let mut f: Vec<Feature> = (0..k).map(Feature::Coord).collect();
        f.extend((0..k).map(Feature::Square));
        for i in 0..k {
            f.extend(((i + 1)..k).map(|j| Feature::Product(i, j)));
        }
        Self(f)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Delay of each feature: the delay of its latest constituent.
    pub fn delays(&self, base_delays: &[u32]) -> Result<Vec<u32>> {
        self.validate(base_delays.len())?;
        Ok(self.0.iter().map(|f| base_delays[f.latest_coord()]).collect())
    }

    fn validate(&self, k: usize) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::InvalidSpec("no features".into()));
        }
        if let Some(f) = self.0.iter().find(|f| f.latest_coord() >= k) {
            return Err(Error::InvalidSpec(format!(
                "{f:?} references a coordinate outside a trace of length {k}"
            )));
        }
        Ok(())
    }
}

/// Maps traces onto the feature space of `spec`.
///
/// A feature is observed when all its constituents are; the augmented
/// observed length is the longest prefix of observed features. Returns the
/// augmented traces with the feature delays derived from `base_delays`.
pub fn augment_traces(
    traces: &[Trace],
    spec: &FeatureSpec,
    base_delays: &[u32],
) -> Result<(Vec<Trace>, Vec<u32>)> {
    let k = base_delays.len();
    let delays = spec.delays(base_delays)?;
    let mut out = Vec::with_capacity(traces.len());
    for trace in traces {
        if trace.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: trace.len(),
            });
        }
        let seen = trace.observed();
        let values: Vec<f64> = spec
            .0
            .iter()
            .map(|f| {
                if f.latest_coord() < seen.len() {
                    f.eval(seen)
                } else {
                    0.0
                }
            })
            .collect();
        let observed_len = spec
            .0
            .iter()
            .take_while(|f| f.latest_coord() < seen.len())
            .count();
        out.push(Trace::new(values, observed_len, trace.origin_round())?);
    }
    Ok((out, delays))
}

//! Synthetic stand-in for a corpus of per-show daily activity traces.
//!
//! Each show has a ground-truth engagement curve
//!
//! ```text
//! logit p(k) = α + β ln k + a cos(2πk/7) + τ y(k),   k = 1..K
//! ```
//!
//! with a per-show level `α`, decay `β ≤ 0`, weekly amplitude `a` and a slow
//! Ornstein-Uhlenbeck drift `y` (unit variance, correlation length
//! `drift_persistence` days) that keeps late engagement only partly
//! predictable from early days. The drift and all per-show deviations are
//! scaled by `cross_show_spread`.
//!
//! A user's trace is a binary vector with day `k` active with probability
//! `logistic(logit p(k) + c(k) + γ u + h(k))`, where `u ~ N(0, 1)` is a
//! per-user effect, `h` a stationary AR(1) path and `c(k)` a per-day offset
//! solved numerically so that the population activity rate on day `k` is
//! exactly `p(k)`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::Trace;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, SimRng};
use crate::training::ShowHistory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Trace length K (days after discovery).
    pub trace_len: usize,
    /// Mean per-show logit level on day 1.
    pub base_level: f64,
    /// Mean decay of the logit per unit of `ln k`.
    pub decay_rate: f64,
    /// Mean amplitude of the weekly cosine in logit space.
    pub weekly_amplitude: f64,
    /// Multiplier on every per-show deviation below.
    pub cross_show_spread: f64,
    pub level_spread: f64,
    pub decay_spread: f64,
    /// Correlation between a show's level and decay deviations; positive
    /// values make shows with high early activity fade faster.
    pub level_decay_correlation: f64,
    pub weekly_spread: f64,
    /// Standard deviation of the per-show logit drift.
    pub drift_scale: f64,
    /// Correlation length of the drift, in days.
    pub drift_persistence: f64,
    /// Scale γ of the per-user random effect.
    pub user_effect_scale: f64,
    /// AR(1) coefficient ρ of the day-to-day latent path.
    pub ar_coefficient: f64,
    /// Stationary standard deviation of the AR(1) path.
    pub ar_scale: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            trace_len: 59,
            base_level: -1.45,
            decay_rate: 0.48,
            weekly_amplitude: 0.31,
            cross_show_spread: 1.0,
            level_spread: 0.41,
            decay_spread: 0.12,
            level_decay_correlation: 0.36,
            weekly_spread: 0.18,
            drift_scale: 0.49,
            drift_persistence: 5.4,
            user_effect_scale: 1.0,
            ar_coefficient: 0.8,
            ar_scale: 1.0,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let reals = [
            ("base_level", self.base_level),
            ("decay_rate", self.decay_rate),
            ("weekly_amplitude", self.weekly_amplitude),
            ("cross_show_spread", self.cross_show_spread),
            ("level_spread", self.level_spread),
            ("decay_spread", self.decay_spread),
            ("level_decay_correlation", self.level_decay_correlation),
            ("weekly_spread", self.weekly_spread),
            ("drift_scale", self.drift_scale),
            ("drift_persistence", self.drift_persistence),
            ("user_effect_scale", self.user_effect_scale),
            ("ar_coefficient", self.ar_coefficient),
            ("ar_scale", self.ar_scale),
        ];
        if let Some((name, _)) = reals.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidSpec(format!("generator `{name}` must be finite")));
        }
        if self.trace_len == 0 {
            return Err(Error::InvalidSpec("generator `trace_len` must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.ar_coefficient) {
            return Err(Error::InvalidSpec(
                "generator `ar_coefficient` must lie in [0, 1)".into(),
            ));
        }
        if !(-1.0..=1.0).contains(&self.level_decay_correlation) {
            return Err(Error::InvalidSpec(
                "generator `level_decay_correlation` must lie in [-1, 1]".into(),
            ));
        }
        if self.drift_persistence <= 0.0 {
            return Err(Error::InvalidSpec(
                "generator `drift_persistence` must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Delay schedule `Δ_k = k + 1` (day `k` is known the day after).
    pub fn delays(&self) -> Vec<u32> {
        (1..=self.trace_len as u32).map(|k| k + 1).collect()
    }
}

/// True engagement curve of a show.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShowGroundTruth {
    pub show_id: String,
    /// Daily activity probability z̄, each in (0, 1).
    pub mean_trace: Vec<f64>,
    /// Expected number of active days, the sum of `mean_trace`.
    pub stickiness: f64,
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn normal(rng: &mut SimRng) -> f64 {
    rng.sample(StandardNormal)
}

/// Draws one show's ground truth.
pub fn gen_show(cfg: &GeneratorConfig, show_id: impl Into<String>, rng: &mut SimRng) -> ShowGroundTruth {
    let s = cfg.cross_show_spread;
    let level_dev = normal(rng);
    let c = cfg.level_decay_correlation;
    let decay_dev = c * level_dev + (1.0 - c * c).sqrt() * normal(rng);
    let level = cfg.base_level + s * cfg.level_spread * level_dev;
    // decay is a slope in logit per unit ln k, so a positive deviation of
    // `decay_dev` makes the show fade faster
    let decay = (-cfg.decay_rate - s * cfg.decay_spread * decay_dev).min(0.0);
    let weekly = cfg.weekly_amplitude + s * cfg.weekly_spread * normal(rng);
    let drift_scale = s * cfg.drift_scale;
    let phi = (-1.0 / cfg.drift_persistence).exp();
    let innovation = (1.0 - phi * phi).sqrt();

    let mut drift = normal(rng);
    let mean_trace: Vec<f64> = (1..=cfg.trace_len)
        .map(|k| {
            if k > 1 {
                drift = phi * drift + innovation * normal(rng);
            }
            let day = k as f64;
            let x = level + decay * day.ln() + weekly * (2.0 * PI * day / 7.0).cos() + drift_scale * drift;
            // keep strictly inside (0, 1) even for extreme logits
            logistic(x).clamp(1e-12, 1.0 - 1e-12)
        })
        .collect();
    let stickiness = mean_trace.iter().sum();
    ShowGroundTruth {
        show_id: show_id.into(),
        mean_trace,
        stickiness,
    }
}

const QUAD_POINTS: usize = 161;
const QUAD_HALF_WIDTH: f64 = 8.0;

/// `E[logistic(x + scale·X)]` and its derivative in `x`, `X ~ N(0, 1)`,
/// by the trapezoid rule on a fine grid (spectrally accurate for smooth
/// integrands against a Gaussian).
fn logistic_normal_mean(x: f64, scale: f64, nodes: &[(f64, f64)]) -> (f64, f64) {
    nodes.iter().fold((0.0, 0.0), |(m, d), &(node, w)| {
        let p = logistic(x + scale * node);
        (m + w * p, d + w * p * (1.0 - p))
    })
}

fn quadrature_nodes() -> Vec<(f64, f64)> {
    let step = 2.0 * QUAD_HALF_WIDTH / (QUAD_POINTS - 1) as f64;
    let raw: Vec<(f64, f64)> = (0..QUAD_POINTS)
        .map(|i| {
            let x = -QUAD_HALF_WIDTH + i as f64 * step;
            (x, (-0.5 * x * x).exp())
        })
        .collect();
    let total: f64 = raw.iter().map(|(_, w)| w).sum();
    raw.into_iter().map(|(x, w)| (x, w / total)).collect()
}

/// Per-show trace sampler with the mixing bias correction precomputed.
#[derive(Debug, Clone)]
pub struct TraceSampler {
    /// Corrected per-day logits `logit p(k) + c(k)`.
    logits: Vec<f64>,
    user_effect_scale: f64,
    ar_coefficient: f64,
    ar_scale: f64,
}

impl TraceSampler {
    pub fn new(truth: &ShowGroundTruth, cfg: &GeneratorConfig) -> Self {
        let scale = (cfg.user_effect_scale.powi(2) + cfg.ar_scale.powi(2)).sqrt();
        let nodes = quadrature_nodes();
        let logits = truth
            .mean_trace
            .iter()
            .map(|&p| {
                let target = logit(p);
                let mut x = target;
                if scale > 0.0 {
                    // Newton on E[logistic(x + scale X)] = p; the map is
                    // increasing and smooth so this converges from x = logit p.
                    for _ in 0..100 {
                        let (m, d) = logistic_normal_mean(x, scale, &nodes);
                        let step = (m - p) / d.max(1e-300);
                        x -= step.clamp(-2.0, 2.0);
                        if step.abs() < 1e-12 {
                            break;
                        }
                    }
                }
                x
            })
            .collect();
        Self {
            logits,
            user_effect_scale: cfg.user_effect_scale,
            ar_coefficient: cfg.ar_coefficient,
            ar_scale: cfg.ar_scale,
        }
    }

    pub fn trace_len(&self) -> usize {
        self.logits.len()
    }

    /// Population activity rate per day implied by the corrected logits.
    pub fn population_rates(&self) -> Vec<f64> {
        let scale = (self.user_effect_scale.powi(2) + self.ar_scale.powi(2)).sqrt();
        let nodes = quadrature_nodes();
        self.logits
            .iter()
            .map(|&x| logistic_normal_mean(x, scale, &nodes).0)
            .collect()
    }

    /// One user's binary activity values.
    pub fn sample_values(&self, rng: &mut SimRng) -> Vec<f64> {
        let user = self.user_effect_scale * normal(rng);
        let rho = self.ar_coefficient;
        let innovation = self.ar_scale * (1.0 - rho * rho).sqrt();
        let mut latent = self.ar_scale * normal(rng);
        self.logits
            .iter()
            .enumerate()
            .map(|(k, &base)| {
                if k > 0 {
                    latent = rho * latent + innovation * normal(rng);
                }
                let p = logistic(base + user + latent);
                if rng.random::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// One fully observed user trace.
    pub fn sample(&self, rng: &mut SimRng) -> Trace {
        Trace::full(self.sample_values(rng))
    }
}

/// Draws a single user trace from a show. Builds the sampler on every call;
/// use [`TraceSampler`] directly to draw many.
pub fn sample_trace(truth: &ShowGroundTruth, cfg: &GeneratorConfig, rng: &mut SimRng) -> Trace {
    TraceSampler::new(truth, cfg).sample(rng)
}

/// A show together with its sampler, as used by simulations.
#[derive(Debug, Clone)]
pub struct SyntheticShow {
    pub truth: ShowGroundTruth,
    pub sampler: TraceSampler,
}

impl SyntheticShow {
    pub fn generate(cfg: &GeneratorConfig, show_id: impl Into<String>, rng: &mut SimRng) -> Self {
        let truth = gen_show(cfg, show_id, rng);
        let sampler = TraceSampler::new(&truth, cfg);
        Self { truth, sampler }
    }
}

/// Generates `n_shows` independent shows with `traces_per_show` traces each.
///
/// Show `i` uses its own stream `i` of `cfg.seed`, so the result does not
/// depend on how the work is scheduled. Every trace carries the target
/// `y = Σ_k z_k`.
pub fn gen_dataset(
    cfg: &GeneratorConfig,
    n_shows: usize,
    traces_per_show: usize,
) -> Result<(Vec<ShowHistory>, Vec<ShowGroundTruth>)> {
    cfg.validate()?;
    if n_shows == 0 || traces_per_show == 0 {
        return Err(Error::InvalidSpec(
            "n_shows and traces_per_show must be positive".into(),
        ));
    }
    let shows: Vec<(ShowHistory, ShowGroundTruth)> = (0..n_shows)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(cfg.seed, i as u64);
            let show = SyntheticShow::generate(cfg, format!("show-{i:04}"), &mut rng);
            let traces: Vec<Trace> = (0..traces_per_show)
                .map(|_| show.sampler.sample(&mut rng))
                .collect();
            let targets = traces.iter().map(|t| t.observed().iter().sum()).collect();
            let history = ShowHistory::new(show.truth.show_id.clone(), traces, Some(targets))?;
            Ok((history, show.truth))
        })
        .collect::<Result<_>>()?;
    Ok(shows.into_iter().unzip())
}

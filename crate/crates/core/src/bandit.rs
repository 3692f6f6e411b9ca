//! Batched Thompson-sampling simulation with progressively revealed traces.
//!
//! Every round: reveal whatever the delay schedule makes visible, refresh
//! the reward beliefs of arms whose visible data changed, sample `B` arms by
//! Thompson sampling and draw one fresh user trace per selected slot.
//!
//! The four policies share the filter and differ only in which parts of a
//! trace they get to see and in the reward projection:
//!
//! | policy          | visible elements                   | weights |
//! |-----------------|------------------------------------|---------|
//! | `progressive`   | per the prior's delay schedule     | `1`     |
//! | `delayed`       | all at once, after the horizon     | `1`     |
//! | `day_two_proxy` | the first element only             | `e_1`   |
//! | `oracle`        | everything, from the next round on | `1`     |
//!
//! Arm ground truth is held by the [`Episode`], never by [`ArmState`], so
//! belief computations cannot read it.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::{
    format_real, posterior_from_dataset, project_reward, sample_reward, CohortFilter, GroupStat, PriorModel,
    RewardBelief, Trace,
};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, SimRng};
use crate::stats;
use crate::synthetic::{GeneratorConfig, SyntheticShow};

const STREAM_ARMS: u64 = 0;
const STREAM_TRACES: u64 = 1;
const STREAM_POLICY: u64 = 2;
const STREAM_SET_CHANGES: u64 = 3;

/// Marks a trace element that a policy never gets to see.
const NEVER: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Progressive,
    Delayed,
    DayTwoProxy,
    Oracle,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::Progressive,
        PolicyKind::Delayed,
        PolicyKind::DayTwoProxy,
        PolicyKind::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Progressive => "progressive",
            PolicyKind::Delayed => "delayed",
            PolicyKind::DayTwoProxy => "day_two_proxy",
            PolicyKind::Oracle => "oracle",
        }
    }

    /// Delay after which each trace element becomes visible to the policy.
    pub fn reveal_schedule(self, delays: &[u32]) -> Vec<u32> {
        let horizon = delays.last().copied().unwrap_or(0);
        match self {
            PolicyKind::Progressive => delays.to_vec(),
            PolicyKind::Delayed => vec![horizon; delays.len()],
            PolicyKind::DayTwoProxy => delays
                .iter()
                .enumerate()
                .map(|(k, &d)| if k == 0 { d } else { NEVER })
                .collect(),
            PolicyKind::Oracle => vec![0; delays.len()],
        }
    }

    /// Reward projection weights over a trace of length `k`.
    pub fn weights(self, k: usize) -> DVector<f64> {
        match self {
            PolicyKind::DayTwoProxy => {
                let mut w = DVector::zeros(k);
                w[0] = 1.0;
                w
            }
            _ => DVector::from_element(k, 1.0),
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                Error::InvalidSpec(format!(
                    "unknown policy `{s}` (expected progressive, delayed, day_two_proxy or oracle)"
                ))
            })
    }
}

/// Number of leading elements visible `elapsed` rounds after the action.
pub fn visible_len(schedule: &[u32], elapsed: u32) -> usize {
    schedule.iter().take_while(|&&d| d <= elapsed).count()
}

/// Traces from one round's selections of an arm; they share an origin round
/// and therefore an observed length.
#[derive(Debug, Clone)]
struct Cohort {
    origin_round: u32,
    traces: Vec<Trace>,
    stat: GroupStat,
}

/// What a policy knows about an arm.
#[derive(Debug, Clone)]
pub struct ArmState {
    arm_id: String,
    /// Cohorts still waiting for elements.
    pending: Vec<Cohort>,
    /// Traces with every element the policy will ever see revealed.
    settled: Vec<Trace>,
    /// Sufficient statistics of `settled`, grouped by observed length.
    settled_stats: Vec<GroupStat>,
    dirty: bool,
    belief: Option<RewardBelief>,
}

impl ArmState {
    pub fn new(arm_id: impl Into<String>) -> Self {
        Self {
            arm_id: arm_id.into(),
            pending: Vec::new(),
            settled: Vec::new(),
            settled_stats: Vec::new(),
            dirty: true,
            belief: None,
        }
    }

    pub fn arm_id(&self) -> &str {
        &self.arm_id
    }

    pub fn is_dirty(&self) -> bool {
        self.dirty
    }

    /// Every trace recorded for this arm, with its current observed length.
    pub fn dataset(&self) -> impl Iterator<Item = &Trace> {
        self.settled.iter().chain(self.pending.iter().flat_map(|c| c.traces.iter()))
    }

    pub fn trace_count(&self) -> usize {
        self.settled.len() + self.pending.iter().map(|c| c.traces.len()).sum::<usize>()
    }

    /// Records traces of actions taken in `round`; nothing is visible yet.
    pub fn record(&mut self, round: u32, values: Vec<Vec<f64>>) -> Result<()> {
        if values.is_empty() {
            return Ok(());
        }
        let traces = values
            .into_iter()
            .map(|v| Trace::new(v, 0, round))
            .collect::<Result<Vec<_>>>()?;
        let count = traces.len();
        self.pending.push(Cohort {
            origin_round: round,
            traces,
            stat: GroupStat {
                observed_len: 0,
                count,
                sum: Vec::new(),
            },
        });
        Ok(())
    }

    /// Reveals every element whose delay has passed by `round` under
    /// `schedule`. Marks the arm dirty if anything new became visible.
    pub fn reveal(&mut self, round: u32, schedule: &[u32]) {
        let final_len = visible_len(schedule, NEVER - 1);
        let mut i = 0;
        while i < self.pending.len() {
            let cohort = &mut self.pending[i];
            let elapsed = round.saturating_sub(cohort.origin_round);
            let len = visible_len(schedule, elapsed);
            if len > cohort.stat.observed_len {
                cohort.stat.sum.resize(len, 0.0);
                let start = cohort.stat.observed_len;
                for trace in &mut cohort.traces {
                    let fresh = trace.reveal_to(len);
                    for (acc, v) in cohort.stat.sum[start..].iter_mut().zip(fresh) {
                        *acc += v;
                    }
                }
                cohort.stat.observed_len = len;
                self.dirty = true;
            }
            if cohort.stat.observed_len == final_len {
                let done = self.pending.swap_remove(i);
                self.settle(done);
            } else {
                i += 1;
            }
        }
    }

    fn settle(&mut self, cohort: Cohort) {
        let stat = cohort.stat;
        match self
            .settled_stats
            .iter_mut()
            .find(|s| s.observed_len == stat.observed_len)
        {
            Some(s) => {
                s.count += stat.count;
                for (acc, v) in s.sum.iter_mut().zip(&stat.sum) {
                    *acc += v;
                }
            }
            None => self.settled_stats.push(stat),
        }
        self.settled.extend(cohort.traces);
    }

    fn groups(&self) -> impl Iterator<Item = &GroupStat> + Clone {
        self.settled_stats
            .iter()
            .chain(self.pending.iter().map(|c| &c.stat))
    }

    /// Recomputes the cached reward belief if the visible data changed.
    pub fn refresh(&mut self, filter: &CohortFilter, weights: &DVector<f64>) -> Result<()> {
        if self.dirty || self.belief.is_none() {
            self.belief = Some(filter.reward_belief(self.groups(), weights)?);
            self.dirty = false;
        }
        Ok(())
    }

    pub fn cached_belief(&self) -> Option<RewardBelief> {
        self.belief
    }
}

/// Reward beliefs computed from scratch from each arm's visible dataset.
///
/// This is the slow reference for the cached beliefs an [`Episode`] keeps;
/// the arms must already be revealed for the round.
pub fn policy_beliefs(policy: PolicyKind, arms: &[ArmState], prior: &PriorModel) -> Result<Vec<RewardBelief>> {
    let weights = policy.weights(prior.dim());
    arms.iter()
        .map(|arm| {
            let data: Vec<Trace> = arm.dataset().cloned().collect();
            let belief = posterior_from_dataset(prior, &data)?;
            project_reward(&belief, &weights)
        })
        .collect()
}

/// Index of the largest value, lowest index on ties.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `batch` independent Thompson draws: each samples every arm's reward
/// belief and picks the best arm, lowest index on ties.
pub fn thompson_select<R: Rng + ?Sized>(beliefs: &[RewardBelief], batch: usize, rng: &mut R) -> Vec<usize> {
    let mut draws = vec![0.0; beliefs.len()];
    (0..batch)
        .map(|_| {
            for (d, b) in draws.iter_mut().zip(beliefs) {
                *d = sample_reward(b, rng);
            }
            argmax(&draws)
        })
        .collect()
}

/// Natural-log entropy of the empirical distribution of `selections`.
pub fn selection_entropy(selections: &[usize], n_arms: usize) -> f64 {
    let mut counts = vec![0usize; n_arms];
    for &s in selections {
        counts[s] += 1;
    }
    let total = selections.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum::<f64>()
        .max(0.0)
}

/// Source of arms and of user traces for them.
pub trait Environment: Sync {
    type Arm: Send + Sync;

    fn trace_len(&self) -> usize;

    /// Draws a new arm; `index` counts arms spawned in the episode.
    fn spawn_arm(&self, index: usize, rng: &mut SimRng) -> Self::Arm;

    /// True mean reward, used for regret only.
    fn mean_reward(&self, arm: &Self::Arm) -> f64;

    /// One user's full trace.
    fn draw_trace(&self, arm: &Self::Arm, rng: &mut SimRng) -> Vec<f64>;
}

/// Arms are freshly generated synthetic shows.
#[derive(Debug, Clone)]
pub struct SyntheticEnv {
    pub cfg: GeneratorConfig,
}

impl SyntheticEnv {
    pub fn new(cfg: GeneratorConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }
}

impl Environment for SyntheticEnv {
    type Arm = SyntheticShow;

    fn trace_len(&self) -> usize {
        self.cfg.trace_len
    }

    fn spawn_arm(&self, index: usize, rng: &mut SimRng) -> SyntheticShow {
        SyntheticShow::generate(&self.cfg, format!("arm-{index:04}"), rng)
    }

    fn mean_reward(&self, arm: &SyntheticShow) -> f64 {
        arm.truth.stickiness
    }

    fn draw_trace(&self, arm: &SyntheticShow, rng: &mut SimRng) -> Vec<f64> {
        arm.sampler.sample_values(rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeConfig {
    pub n_arms: usize,
    pub batch_size: usize,
    pub rounds: u32,
    pub policy: PolicyKind,
    #[serde(default)]
    pub changing_set: bool,
    #[serde(default)]
    pub seed: u64,
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_arms < 2 {
            return Err(Error::InvalidSpec("n_arms must be at least 2".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidSpec("batch_size must be positive".into()));
        }
        if self.rounds == 0 {
            return Err(Error::InvalidSpec("rounds must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeMetrics {
    pub per_step_regret: Vec<f64>,
    pub entropy: Vec<f64>,
    /// `action_counts[t][a]`: selections of arm slot `a` in round `t + 1`.
    pub action_counts: Vec<Vec<u32>>,
    pub cumulative_regret: f64,
}

/// A running simulation. Rounds are numbered from 1.
pub struct Episode<'a, E: Environment> {
    cfg: EpisodeConfig,
    env: &'a E,
    filter: &'a CohortFilter,
    schedule: Vec<u32>,
    weights: DVector<f64>,
    arms: Vec<ArmState>,
    truths: Vec<E::Arm>,
    spawned: usize,
    round: u32,
    trace_rng: SimRng,
    policy_rng: SimRng,
    change_rng: SimRng,
    metrics: EpisodeMetrics,
}

impl<'a, E: Environment> Episode<'a, E> {
    /// `filter` carries the prior; build it once and share it across
    /// episodes.
    pub fn new(cfg: EpisodeConfig, env: &'a E, filter: &'a CohortFilter) -> Result<Self> {
        cfg.validate()?;
        let prior = filter.prior();
        if env.trace_len() != prior.dim() {
            return Err(Error::DimensionMismatch {
                expected: prior.dim(),
                found: env.trace_len(),
            });
        }
        let mut arm_rng = stream_rng(cfg.seed, STREAM_ARMS);
        let truths: Vec<E::Arm> = (0..cfg.n_arms).map(|i| env.spawn_arm(i, &mut arm_rng)).collect();
        let arms = (0..cfg.n_arms).map(|i| ArmState::new(format!("arm-{i:04}"))).collect();
        Ok(Self {
            schedule: cfg.policy.reveal_schedule(prior.delays()),
            weights: cfg.policy.weights(prior.dim()),
            spawned: cfg.n_arms,
            trace_rng: stream_rng(cfg.seed, STREAM_TRACES),
            policy_rng: stream_rng(cfg.seed, STREAM_POLICY),
            change_rng: stream_rng(cfg.seed, STREAM_SET_CHANGES),
            metrics: EpisodeMetrics::default(),
            round: 0,
            cfg,
            env,
            filter,
            arms,
            truths,
        })
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.cfg
    }

    /// Last completed round, 0 before the first.
    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn is_done(&self) -> bool {
        self.round >= self.cfg.rounds
    }

    pub fn arms(&self) -> &[ArmState] {
        &self.arms
    }

    /// True mean rewards of the current arms. For evaluation and test
    /// harnesses only; policies never see these.
    pub fn mean_rewards(&self) -> Vec<f64> {
        self.truths.iter().map(|a| self.env.mean_reward(a)).collect()
    }

    pub fn metrics(&self) -> &EpisodeMetrics {
        &self.metrics
    }

    /// Reveals data for the next round and returns the policy's reward
    /// beliefs for every arm.
    pub fn prepare_round(&mut self) -> Result<Vec<RewardBelief>> {
        let round = self.round + 1;
        let (schedule, filter, weights) = (&self.schedule, self.filter, &self.weights);
        self.arms
            .par_iter_mut()
            .map(|arm| {
                arm.reveal(round, schedule);
                arm.refresh(filter, weights)?;
                Ok(arm.cached_belief().expect("refreshed"))
            })
            .collect()
    }

    /// Plays one round with Thompson sampling.
    pub fn step(&mut self) -> Result<()> {
        let beliefs = self.prepare_round()?;
        let selection = thompson_select(&beliefs, self.cfg.batch_size, &mut self.policy_rng);
        self.play(&selection)
    }

    /// Plays one round with an externally chosen batch of arm indices.
    pub fn step_with(&mut self, selection: &[usize]) -> Result<()> {
        self.prepare_round()?;
        self.play(selection)
    }

    fn play(&mut self, selection: &[usize]) -> Result<()> {
        let n = self.arms.len();
        if selection.is_empty() {
            return Err(Error::InvalidSpec("a round needs at least one selection".into()));
        }
        if let Some(&bad) = selection.iter().find(|&&a| a >= n) {
            return Err(Error::InvalidSpec(format!("arm index {bad} out of range for {n} arms")));
        }
        self.round += 1;
        let round = self.round;

        let rewards = self.mean_rewards();
        let best = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // per-slot gaps, so that playing the best arm costs exactly zero
        let regret = selection.iter().map(|&a| best - rewards[a]).sum::<f64>() / selection.len() as f64;
        let mut counts = vec![0u32; n];
        for &a in selection {
            counts[a] += 1;
        }
        self.metrics.per_step_regret.push(regret);
        self.metrics.entropy.push(selection_entropy(selection, n));
        self.metrics.action_counts.push(counts.clone());
        self.metrics.cumulative_regret += regret;

        for (a, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let values = (0..c)
                .map(|_| self.env.draw_trace(&self.truths[a], &mut self.trace_rng))
                .collect();
            self.arms[a].record(round, values)?;
        }

        if self.cfg.changing_set {
            let slot = self.change_rng.random_range(0..n);
            self.truths[slot] = self.env.spawn_arm(self.spawned, &mut self.change_rng);
            self.arms[slot] = ArmState::new(format!("arm-{:04}", self.spawned));
            self.spawned += 1;
        }
        Ok(())
    }

    pub fn into_metrics(self) -> EpisodeMetrics {
        self.metrics
    }
}

/// Runs a full episode.
pub fn run_episode<E: Environment>(cfg: &EpisodeConfig, env: &E, filter: &CohortFilter) -> Result<EpisodeMetrics> {
    let mut episode = Episode::new(cfg.clone(), env, filter)?;
    while !episode.is_done() {
        episode.step()?;
    }
    Ok(episode.into_metrics())
}

/// Runs `cfg` once per seed, in parallel, results in seed order.
pub fn run_seeds<E: Environment>(
    cfg: &EpisodeConfig,
    env: &E,
    filter: &CohortFilter,
    seeds: &[u64],
) -> Result<Vec<EpisodeMetrics>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let cfg = EpisodeConfig { seed, ..cfg.clone() };
            run_episode(&cfg, env, filter)
        })
        .collect()
}

/// Per-round metrics, one row per round.
pub fn write_metrics_csv<W: Write>(out: W, run_id: &str, policy: PolicyKind, seed: u64, m: &EpisodeMetrics) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["run_id", "policy", "seed", "round", "per_step_regret", "entropy"])?;
    for (t, (r, e)) in m.per_step_regret.iter().zip(&m.entropy).enumerate() {
        w.write_record([
            run_id.to_string(),
            policy.to_string(),
            seed.to_string(),
            (t + 1).to_string(),
            format_real(*r),
            format_real(*e),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-round selection counts, one column per arm slot.
pub fn write_action_counts_csv<W: Write>(out: W, run_id: &str, policy: PolicyKind, seed: u64, m: &EpisodeMetrics) -> Result<()> {
    let n = m.action_counts.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["run_id".to_string(), "policy".into(), "seed".into(), "round".into()];
    header.extend((0..n).map(|a| format!("arm_{a}")));
    w.write_record(&header)?;
    for (t, counts) in m.action_counts.iter().enumerate() {
        let mut row = vec![run_id.to_string(), policy.to_string(), seed.to_string(), (t + 1).to_string()];
        row.extend(counts.iter().map(u32::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean and standard error across runs, per round.
pub fn write_aggregate_csv<W: Write>(out: W, policy: PolicyKind, runs: &[EpisodeMetrics]) -> Result<()> {
    let rounds = runs.iter().map(|m| m.per_step_regret.len()).min().unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "policy",
        "round",
        "runs",
        "regret_mean",
        "regret_stderr",
        "entropy_mean",
        "entropy_stderr",
    ])?;
    for t in 0..rounds {
        let r: Vec<f64> = runs.iter().map(|m| m.per_step_regret[t]).collect();
        let e: Vec<f64> = runs.iter().map(|m| m.entropy[t]).collect();
        w.write_record([
            policy.to_string(),
            (t + 1).to_string(),
            runs.len().to_string(),
            format_real(stats::mean(&r)),
            format_real(stats::std_error(&r)),
            format_real(stats::mean(&e)),
            format_real(stats::std_error(&e)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

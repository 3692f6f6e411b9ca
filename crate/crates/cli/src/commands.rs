use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::Context;
use impatient::analysis::{
    export_covariances, mae_grid, uncorrelated_baseline, variance_explained, write_curve_csv, write_mae_csv,
};
use impatient::bandit::{
    run_seeds, write_action_counts_csv, write_aggregate_csv, write_metrics_csv, EpisodeConfig, PolicyKind,
    SyntheticEnv,
};
use impatient::belief::{CohortFilter, PriorModel};
use impatient::corpus::{read_corpus, write_corpus, write_ground_truth};
use impatient::output::atomic_write;
use impatient::synthetic::gen_dataset;
use impatient::training::{fit_prior, ShowHistory};
use nalgebra::DVector;

use crate::config::{config_error, PriorSource, RunConfig};

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.jsonl";
pub const DEFAULT_MAE_SIZES: [usize; 3] = [10, 100, 1000];

fn prepare_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

/// Generates the synthetic corpus and its ground truth.
pub fn gen_data(cfg: &RunConfig, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    prepare_dir(out)?;
    let (histories, truths) = gen_dataset(&cfg.generator, cfg.data.n_shows, cfg.data.traces_per_show)?;
    let corpus = out.join(CORPUS_FILE);
    let truth = out.join(GROUND_TRUTH_FILE);
    atomic_write(&corpus, |w| write_corpus(w, &histories))?;
    atomic_write(&truth, |w| write_ground_truth(w, &truths))?;
    Ok(vec![corpus, truth])
}

pub fn load_corpus(path: &Path) -> anyhow::Result<Vec<ShowHistory>> {
    let file = File::open(path).with_context(|| format!("cannot open corpus {}", path.display()))?;
    Ok(read_corpus(BufReader::new(file), &path.display().to_string())?)
}

/// Fits a prior with unit reward weights, so the reward is total activity
/// over the trace, and delays `Δ_k = k + 1`: day `k` is known the day after.
pub fn fit_daily_prior(histories: &[ShowHistory]) -> anyhow::Result<PriorModel> {
    let k = histories
        .iter()
        .find_map(ShowHistory::dim)
        .context("corpus contains no traces")?;
    let delays = (2..=k as u32 + 1).collect();
    Ok(fit_prior(histories, delays, DVector::from_element(k, 1.0))?)
}

pub fn train_prior(corpus: &Path, out: &Path) -> anyhow::Result<()> {
    let histories = load_corpus(corpus)?;
    let prior = fit_daily_prior(&histories)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        prepare_dir(dir)?;
    }
    atomic_write(out, |w| prior.write_json(w))?;
    Ok(())
}

fn resolve_prior(cfg: &RunConfig) -> anyhow::Result<PriorModel> {
    match &cfg.prior_source {
        PriorSource::File(path) => {
            PriorModel::load(path).with_context(|| format!("cannot load prior {}", path.display()))
        }
        PriorSource::Fit => {
            let (histories, _) = gen_dataset(&cfg.generator, cfg.data.n_shows, cfg.data.traces_per_show)?;
            fit_daily_prior(&histories)
        }
    }
}

/// Runs every requested policy over every seed; returns the files written.
pub fn run_bandit(
    cfg: &RunConfig,
    policies: &[PolicyKind],
    seeds: &[u64],
    out: &Path,
) -> anyhow::Result<Vec<PathBuf>> {
    let prior = resolve_prior(cfg)?;
    if prior.dim() != cfg.generator.trace_len {
        return Err(config_error(format!(
            "prior has trace length {} but `generator.trace_len` is {}",
            prior.dim(),
            cfg.generator.trace_len
        )));
    }
    let env = SyntheticEnv::new(cfg.generator.clone())?;
    let filter = CohortFilter::new(&prior)?;
    prepare_dir(out)?;
    let mut written = Vec::new();
    for &policy in policies {
        let episode = EpisodeConfig {
            n_arms: cfg.episode.n_arms,
            batch_size: cfg.episode.batch_size,
            rounds: cfg.episode.rounds,
            policy,
            changing_set: cfg.episode.changing_set,
            seed: 0,
        };
        let runs = run_seeds(&episode, &env, &filter, seeds)?;
        for (&seed, m) in seeds.iter().zip(&runs) {
            let run_id = format!("{policy}-seed{seed}");
            let path = out.join(format!("{policy}_seed{seed}.csv"));
            atomic_write(&path, |w| write_metrics_csv(w, &run_id, policy, seed, m))?;
            written.push(path);
            let path = out.join(format!("{policy}_seed{seed}_actions.csv"));
            atomic_write(&path, |w| write_action_counts_csv(w, &run_id, policy, seed, m))?;
            written.push(path);
        }
        let path = out.join(format!("{policy}_aggregate.csv"));
        atomic_write(&path, |w| write_aggregate_csv(w, policy, &runs))?;
        written.push(path);
    }
    Ok(written)
}

/// Variance-explained curves, the MAE grid and covariance exports.
pub fn analyze(prior: &Path, corpus: &Path, out: &Path, mae_sizes: &[usize]) -> anyhow::Result<Vec<PathBuf>> {
    let prior = PriorModel::load(prior).with_context(|| format!("cannot load prior {}", prior.display()))?;
    let histories = load_corpus(corpus)?;
    prepare_dir(out)?;
    let w = prior.weights();
    let mut written = Vec::new();
    for (name, cov) in [("sigma", prior.sigma()), ("v_noise", prior.v_noise())] {
        let path = out.join(format!("variance_{name}.csv"));
        let curve = variance_explained(cov, w)?;
        atomic_write(&path, |f| write_curve_csv(f, &curve))?;
        written.push(path);
        let path = out.join(format!("variance_{name}_uncorrelated.csv"));
        let curve = uncorrelated_baseline(cov, w)?;
        atomic_write(&path, |f| write_curve_csv(f, &curve))?;
        written.push(path);
    }
    // t = 0 is discovery; by t = horizon - 1 all but the last day is known
    let days: Vec<u32> = (0..prior.horizon()).collect();
    let grid = mae_grid(&prior, &histories, mae_sizes, &days)?;
    let path = out.join("mae.csv");
    atomic_write(&path, |f| write_mae_csv(f, &grid))?;
    written.push(path);
    export_covariances(&prior, out)?;
    written.push(out.join("sigma.csv"));
    written.push(out.join("v_noise.csv"));
    Ok(written)
}

//! Acceptance report: one PASS/FAIL line per criterion, with the measured
//! quantities behind each verdict.
//!
//! A FAIL line does not abort the run; every criterion is always evaluated
//! and reported. The process only exits nonzero if a criterion cannot be
//! evaluated at all.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use impatient::analysis::{mae_grid, uncorrelated_baseline, variance_explained};
use impatient::bandit::{run_seeds, EpisodeConfig, EpisodeMetrics, PolicyKind, SyntheticEnv};
use impatient::belief::{
    condition_on_group, condition_on_trace, joint_conditioning_oracle, posterior_from_dataset, CohortFilter,
    GaussianBelief, PriorModel, Trace,
};
use impatient::contextual::{contextual_update, observation_operator, ContextualBelief};
use impatient::rng::{stream_rng, SimRng};
use impatient::stats::{mean, rank_sum_less, std_error};
use impatient::synthetic::{gen_dataset, GeneratorConfig};
use impatient::training::{augment_traces, fit_prior, fit_weights, FeatureSpec, ShowHistory};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

const ALPHA: f64 = 0.05;
const SEEDS: [u64; 10] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn ones(k: usize) -> DVector<f64> {
    DVector::from_element(k, 1.0)
}

fn spd(n: usize, floor: f64, rng: &mut SimRng) -> DMatrix<f64> {
    let f = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &f * f.transpose() / n as f64 + DMatrix::identity(n, n) * floor
}

fn random_prior(k: usize, rng: &mut SimRng) -> PriorModel {
    let sigma = spd(k, 0.05, rng);
    let v = spd(k, 0.1, rng);
    let mu = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
    PriorModel::new(mu, sigma, v, ones(k), (1..=k as u32).collect()).unwrap()
}

fn random_trace(k: usize, observed: usize, rng: &mut SimRng) -> Trace {
    Trace::new((0..k).map(|_| rng.random_range(-2.0..2.0)).collect(), observed, 0).unwrap()
}

/// Default generator, its 200 x 2000 corpus and the prior fitted to it.
struct Calibrated {
    generator: GeneratorConfig,
    prior: PriorModel,
}

fn calibrated() -> &'static Calibrated {
    static CELL: OnceLock<Calibrated> = OnceLock::new();
    CELL.get_or_init(|| {
        let generator = GeneratorConfig::default();
        let (histories, _) = gen_dataset(&generator, 200, 2000).unwrap();
        let prior = fit_prior(&histories, generator.delays(), ones(generator.trace_len)).unwrap();
        Calibrated { generator, prior }
    })
}

fn filter_correctness() -> Verdict {
    let start = Instant::now();
    let mut rng = stream_rng(101, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let k = rng.random_range(1..=8);
        let m = rng.random_range(1..=6);
        let prior = random_prior(k, &mut rng);
        let data: Vec<Trace> = (0..m)
            .map(|_| {
                let l = rng.random_range(0..=k);
                random_trace(k, l, &mut rng)
            })
            .collect();
        let fast = posterior_from_dataset(&prior, &data).unwrap();
        let oracle = joint_conditioning_oracle(&prior, &data).unwrap();
        worst = worst.max(fast.max_abs_diff(&oracle));
    }
    let took = start.elapsed();
    verdict(
        worst <= 1e-8 && took < Duration::from_secs(10),
        format!("max error {worst:.2e} (<= 1e-8), {took:.2?} (< 10 s)"),
    )
}

fn batched_equals_sequential() -> Verdict {
    let mut rng = stream_rng(102, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let k = rng.random_range(1..=8);
        let m = rng.random_range(1..=6);
        let l = rng.random_range(1..=k);
        let prior = random_prior(k, &mut rng);
        let data: Vec<Trace> = (0..m).map(|_| random_trace(k, l, &mut rng)).collect();
        let mut seq = GaussianBelief::from_prior(&prior);
        for t in &data {
            seq = condition_on_trace(&seq, &prior, t).unwrap();
        }
        let avg: Vec<f64> = (0..l)
            .map(|i| data.iter().map(|t| t.observed()[i]).sum::<f64>() / m as f64)
            .collect();
        let batch = condition_on_group(&GaussianBelief::from_prior(&prior), &prior, &avg, l, m).unwrap();
        worst = worst.max(batch.max_abs_diff(&seq));
    }
    verdict(worst <= 1e-9, format!("max error {worst:.2e} (<= 1e-9)"))
}

fn augmented_regression() -> Verdict {
    let mut rng = stream_rng(103, 0);
    let mut traces = Vec::new();
    let mut targets = Vec::new();
    for _ in 0..1000 {
        let z1: f64 = rng.random_range(-2.0..2.0);
        let z2: f64 = rng.random_range(-2.0..2.0);
        traces.push(Trace::full(vec![z1, z2]));
        targets.push(z1 * z1 - 3.0 * z2 + 6.0 * z1 * z2);
    }
    let (augmented, _) = augment_traces(&traces, &FeatureSpec::quadratic(2), &[1, 2]).unwrap();
    let history = ShowHistory::new("worked-example", augmented, Some(targets)).unwrap();
    let w = fit_weights(&[history], 0.0).unwrap();
    let expected = [0.0, -3.0, 1.0, 0.0, 6.0];
    let err = w.iter().zip(expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let shown: Vec<String> = w.iter().map(|v| format!("{v:.6}")).collect();
    verdict(err <= 1e-6, format!("w = ({}), max error {err:.2e} (<= 1e-6)", shown.join(", ")))
}

fn variance_explained_suite() -> Verdict {
    let mut rng = stream_rng(104, 0);
    let mut shape_ok = true;
    for _ in 0..200 {
        let k = rng.random_range(1..=20);
        let rank = rng.random_range(1..=k);
        let f = DMatrix::from_fn(k, rank, |_, _| rng.random_range(-1.0..1.0));
        let c = &f * f.transpose();
        let w = DVector::from_fn(k, |_, _| rng.random_range(-1.0..2.0));
        if w.dot(&(&c * &w)) <= 1e-6 {
            continue;
        }
        let e = variance_explained(&c, &w).unwrap().explained;
        shape_ok &= e[0] == 0.0 && (e[k] - 1.0).abs() <= 1e-9 && e.windows(2).all(|p| p[1] >= p[0] - 1e-9);
    }

    let k = 59;
    let diag = DMatrix::identity(k, k) * 0.37;
    let e = variance_explained(&diag, &ones(k)).unwrap().explained;
    let diag_err = (0..=k).map(|t| (e[t] - t as f64 / k as f64).abs()).fold(0.0, f64::max);
    let base = uncorrelated_baseline(&diag, &ones(k)).unwrap().explained;
    let diag_ok = diag_err <= 1e-12 && e == base;

    let prior = &calibrated().prior;
    let curve = variance_explained(prior.sigma(), prior.weights()).unwrap();
    let half = curve.first_reaching(0.5).unwrap_or(usize::MAX);
    let at40 = curve.explained[40];
    let synth_ok = (4..=16).contains(&half) && at40 > 0.9;
    verdict(
        shape_ok && diag_ok && synth_ok,
        format!(
            "random PSD shape {}, diagonal max |e - t/K| {diag_err:.1e}, synthetic 0.5 crossing day {half} (4..=16), day-40 {at40:.3} (> 0.9)",
            if shape_ok { "ok" } else { "violated" }
        ),
    )
}

fn mae_reproduction() -> Verdict {
    let start = Instant::now();
    let cal = calibrated();
    // held-out shows from an independent generator seed
    let held_out = GeneratorConfig {
        seed: 1,
        ..cal.generator.clone()
    };
    let (shows, _) = gen_dataset(&held_out, 200, 2000).unwrap();
    let ms = [10, 100, 1000];
    let days: Vec<u32> = (0..=59).collect();
    let grid = mae_grid(&cal.prior, &shows, &ms, &days).unwrap();
    let took = start.elapsed();
    let cell = |m: usize, t: u32| grid.iter().find(|c| c.m == m && c.days == t).unwrap().estimate;
    let two_se = |a: f64, b: f64| 2.0 * (a * a + b * b).sqrt();

    let mut notes = Vec::new();
    let mut ok = true;
    for m in ms {
        let (early, late) = (cell(m, 5), cell(m, 59));
        let drop = early.value - late.value;
        let margin = two_se(early.stderr, late.stderr);
        let no_rise = (5..59).all(|t| {
            let (a, b) = (cell(m, t), cell(m, t + 1));
            b.value <= a.value + two_se(a.stderr, b.stderr)
        });
        ok &= drop > margin && no_rise;
        notes.push(format!("M={m}: {:.3}->{:.3} (drop {drop:.3} vs 2SE {margin:.3})", early.value, late.value));
    }
    let dominated = days.iter().all(|&t| {
        let (big, small) = (cell(1000, t), cell(10, t));
        big.value <= small.value + two_se(big.stderr, small.stderr)
    });
    ok &= dominated && took < Duration::from_secs(120);
    verdict(
        ok,
        format!(
            "{}; M=1000 <= M=10 at every t: {dominated}; {took:.1?} (< 120 s)",
            notes.join(", ")
        ),
    )
}

fn late_mean(m: &EpisodeMetrics, from: usize, to: usize) -> f64 {
    mean(&m.per_step_regret[from - 1..to])
}

struct PolicyRuns {
    runs: Vec<EpisodeMetrics>,
    took: Duration,
}

fn run_policies(n_arms: usize, changing_set: bool) -> Vec<(PolicyKind, PolicyRuns)> {
    let cal = calibrated();
    let env = SyntheticEnv::new(cal.generator.clone()).unwrap();
    let filter = CohortFilter::new(&cal.prior).unwrap();
    PolicyKind::ALL
        .into_iter()
        .map(|policy| {
            let cfg = EpisodeConfig {
                n_arms,
                batch_size: 30,
                rounds: 180,
                policy,
                changing_set,
                seed: 0,
            };
            let start = Instant::now();
            let runs = run_seeds(&cfg, &env, &filter, &SEEDS).unwrap();
            (
                policy,
                PolicyRuns {
                    runs,
                    took: start.elapsed(),
                },
            )
        })
        .collect()
}

fn per_seed(runs: &[(PolicyKind, PolicyRuns)], policy: PolicyKind, f: impl Fn(&EpisodeMetrics) -> f64) -> Vec<f64> {
    let (_, r) = runs.iter().find(|(p, _)| *p == policy).unwrap();
    r.runs.iter().map(f).collect()
}

type RunsByArms = Vec<(usize, Vec<(PolicyKind, PolicyRuns)>)>;

fn static_runs() -> &'static RunsByArms {
    static CELL: OnceLock<RunsByArms> = OnceLock::new();
    CELL.get_or_init(|| [50, 200].into_iter().map(|n| (n, run_policies(n, false))).collect())
}

fn regret_ordering() -> Verdict {
    use PolicyKind::*;
    let mut ok = true;
    let mut notes = Vec::new();
    for (n, runs) in static_runs() {
        let late = |p| per_seed(runs, p, |m| late_mean(m, 150, 180));
        let (oracle, prog, delayed, proxy) = (late(Oracle), late(Progressive), late(Delayed), late(DayTwoProxy));
        let p_oracle = rank_sum_less(&oracle, &prog);
        let p_delayed = rank_sum_less(&prog, &delayed);
        let p_proxy = rank_sum_less(&prog, &proxy);
        let r60 = mean(&per_seed(runs, DayTwoProxy, |m| m.per_step_regret[59]));
        let r180 = mean(&per_seed(runs, DayTwoProxy, |m| m.per_step_regret[179]));
        let slowest = runs.iter().map(|(_, r)| r.took).max().unwrap();
        ok &= p_oracle < ALPHA
            && p_delayed < ALPHA
            && p_proxy < ALPHA
            && r180 >= 0.5 * r60
            && slowest < Duration::from_secs(600);
        notes.push(format!(
            "N={n}: regret oracle {:.3} prog {:.3} delayed {:.3} proxy {:.3}; p(oracle<prog)={p_oracle:.3} p(prog<delayed)={p_delayed:.3} p(prog<proxy)={p_proxy:.3}; proxy r180/r60={:.2}; slowest policy {slowest:.1?}",
            mean(&oracle),
            mean(&prog),
            mean(&delayed),
            mean(&proxy),
            r180 / r60
        ));
    }
    verdict(ok, notes.join(" | "))
}

fn entropy_reproduction() -> Verdict {
    use PolicyKind::*;
    let mut ok = true;
    let mut notes = Vec::new();
    for (n, runs) in static_runs() {
        let early = |p| mean(&per_seed(runs, p, |m| mean(&m.entropy[..30])));
        let (prog, oracle, proxy) = (early(Progressive), early(Oracle), early(DayTwoProxy));
        let cap = (*n.min(&30) as f64).ln();
        let bounded = runs
            .iter()
            .flat_map(|(_, r)| &r.runs)
            .flat_map(|m| &m.entropy)
            .all(|&h| (0.0..=cap + 1e-12).contains(&h));
        ok &= prog > oracle && prog > proxy && bounded;
        notes.push(format!(
            "N={n}: rounds 1-30 entropy prog {prog:.3} oracle {oracle:.3} proxy {proxy:.3}; within [0, {cap:.3}]: {bounded}"
        ));
    }
    verdict(ok, notes.join(" | "))
}

fn changing_set() -> Verdict {
    use PolicyKind::*;
    let runs = run_policies(60, true);
    let late = |p| per_seed(&runs, p, |m| late_mean(m, 90, 180));
    let (prog, delayed, proxy) = (late(Progressive), late(Delayed), late(DayTwoProxy));
    let p_delayed = rank_sum_less(&prog, &delayed);
    let p_proxy = rank_sum_less(&prog, &proxy);
    verdict(
        p_delayed < ALPHA && p_proxy < ALPHA,
        format!(
            "rounds 90-180 regret prog {:.3}±{:.3} delayed {:.3}±{:.3} proxy {:.3}±{:.3}; p(prog<delayed)={p_delayed:.4} p(prog<proxy)={p_proxy:.4}",
            mean(&prog),
            std_error(&prog),
            mean(&delayed),
            std_error(&delayed),
            mean(&proxy),
            std_error(&proxy)
        ),
    )
}

fn contextual_reduction() -> Verdict {
    let mut rng = stream_rng(109, 0);
    let mut reduction: f64 = 0.0;
    for _ in 0..200 {
        let k = rng.random_range(1..=8);
        let prior = random_prior(k, &mut rng);
        let l = rng.random_range(0..=k);
        let trace = random_trace(k, l, &mut rng);
        let plain = condition_on_trace(&GaussianBelief::from_prior(&prior), &prior, &trace).unwrap();
        let ctx = ContextualBelief::new(prior.mu().clone(), prior.sigma().clone(), 1, k).unwrap();
        let post = contextual_update(&ctx, &[1.0], &trace, prior.v_noise()).unwrap();
        reduction = reduction
            .max((&post.mean - &plain.mean).abs().max())
            .max((&post.cov - &plain.cov).abs().max());
    }

    let mut two_step: f64 = 0.0;
    for _ in 0..200 {
        let k = rng.random_range(1..=6);
        let d = rng.random_range(1..=3);
        let mean0 = DVector::from_fn(d * k, |_, _| rng.random_range(-1.0..1.0));
        let belief = ContextualBelief::new(mean0, spd(d * k, 0.05, &mut rng), d, k).unwrap();
        let v = spd(k, 0.1, &mut rng);
        let xs: Vec<Vec<f64>> = (0..2).map(|_| (0..d).map(|_| rng.random_range(-1.5..1.5)).collect()).collect();
        let traces: Vec<Trace> = (0..2)
            .map(|_| {
                let l = rng.random_range(0..=k);
                random_trace(k, l, &mut rng)
            })
            .collect();
        let mut step = belief.clone();
        for (x, t) in xs.iter().zip(&traces) {
            step = contextual_update(&step, x, t, &v).unwrap();
        }
        // joint oracle: stacked operator, block-diagonal noise
        let n = d * k;
        let rows: usize = traces.iter().map(Trace::observed_len).sum();
        if rows == 0 {
            two_step = two_step.max((&step.cov - &belief.cov).abs().max());
            continue;
        }
        let mut h = DMatrix::zeros(rows, n);
        let mut r = DMatrix::zeros(rows, rows);
        let mut z = DVector::zeros(rows);
        let mut at = 0;
        for (x, t) in xs.iter().zip(&traces) {
            let l = t.observed_len();
            h.view_mut((at, 0), (l, n)).copy_from(&observation_operator(x, k, l));
            r.view_mut((at, at), (l, l)).copy_from(&v.view((0, 0), (l, l)));
            z.rows_mut(at, l).copy_from_slice(t.observed());
            at += l;
        }
        let cross = &belief.cov * h.transpose();
        let lu = (&h * &cross + r).lu();
        let mean1 = &belief.mean + &cross * lu.solve(&(z - &h * &belief.mean)).unwrap();
        let cov1 = &belief.cov - &cross * lu.solve(&cross.transpose()).unwrap();
        two_step = two_step
            .max((&step.mean - mean1).abs().max())
            .max((&step.cov - cov1).abs().max());
    }
    verdict(
        reduction <= 1e-9 && two_step <= 1e-8,
        format!("d=1 reduction max error {reduction:.2e} (<= 1e-9), two-step vs joint {two_step:.2e} (<= 1e-8)"),
    )
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_impatient"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn cli_determinism() -> Verdict {
    let root = tempfile::tempdir().unwrap();
    let config = root.path().join("run.toml");
    fs::write(
        &config,
        "output_dir = \"data\"\nseeds = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9]\nprior_source = \"prior.json\"\n\n\
         [data]\nn_shows = 20\ntraces_per_show = 1001\n\n\
         [episode]\nn_arms = 50\nbatch_size = 30\nrounds = 180\n",
    )
    .unwrap();
    let p = |rel: &str| root.path().join(rel).to_str().unwrap().to_string();
    let cfg = p("run.toml");
    let mut checked = Vec::new();
    let mut ok = true;
    for pass in ["a", "b"] {
        let steps: [Vec<String>; 4] = [
            vec!["gen-data".into(), "--config".into(), cfg.clone(), "--out".into(), p(&format!("{pass}/data"))],
            vec![
                "train-prior".into(),
                "--corpus".into(),
                p("a/data/corpus.jsonl"),
                "--out".into(),
                p(&format!("{pass}/prior/prior.json")),
            ],
            vec![
                "analyze".into(),
                "--prior".into(),
                p("a/prior/prior.json"),
                "--corpus".into(),
                p("a/data/corpus.jsonl"),
                "--out".into(),
                p(&format!("{pass}/analysis")),
            ],
            vec!["run-bandit".into(), "--config".into(), cfg.clone(), "--out".into(), p(&format!("{pass}/bandit"))],
        ];
        if pass == "a" {
            // the config points `prior_source` next to itself
            run_cli(&steps[0].iter().map(String::as_str).collect::<Vec<_>>()).unwrap();
            run_cli(&["train-prior", "--corpus", &p("a/data/corpus.jsonl"), "--out", &p("prior.json")]).unwrap();
        }
        for step in &steps {
            if let Err(e) = run_cli(&step.iter().map(String::as_str).collect::<Vec<_>>()) {
                return verdict(false, e);
            }
        }
    }
    for sub in ["data", "prior", "analysis", "bandit"] {
        let a = snapshot(&root.path().join("a").join(sub));
        let b = snapshot(&root.path().join("b").join(sub));
        let same = !a.is_empty() && a == b;
        ok &= same;
        checked.push(format!("{sub}: {} files {}", a.len(), if same { "identical" } else { "DIFFER" }));
    }
    verdict(ok, checked.join(", "))
}

fn main() {
    type Criterion = (&'static str, fn() -> Verdict);
    let criteria: [Criterion; 10] = [
        ("filter matches joint conditioning", filter_correctness),
        ("batched equals sequential conditioning", batched_equals_sequential),
        ("augmented regression recovers interaction weights", augmented_regression),
        ("variance-explained curves", variance_explained_suite),
        ("MAE falls with observation time and history", mae_reproduction),
        ("static-set regret ordering", regret_ordering),
        ("early selection entropy", entropy_reproduction),
        ("changing-set regret ordering", changing_set),
        ("contextual update reduction", contextual_reduction),
        ("CLI determinism", cli_determinism),
    ];
    let mut passed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = check();
        passed += usize::from(v.pass);
        println!(
            "{} criterion {:>2}: {name} [{:.1?}] -- {}",
            if v.pass { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed(),
            v.detail
        );
    }
    println!("acceptance: {passed}/{} criteria pass", criteria.len());
}
